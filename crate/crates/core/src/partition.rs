//! Principal-direction divisive bisection of a local model's data.
//!
//! A child is split by the hyperplane through its center that is orthogonal
//! to the first principal direction of its inputs. Rows with a strictly
//! positive projection go left, everything else (including points exactly on
//! the hyperplane) goes right.

use faer::Mat;

use crate::error::{contract, Error, Result};
use crate::points::Points;

/// Singular values within this relative distance of the largest are treated
/// as tied when choosing a direction.
const TIE_TOLERANCE: f64 = 1e-10;

/// How a principal direction is computed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DirectionMethod {
    /// Thin SVD of the mean-centered data matrix.
    #[default]
    BatchSvd,
    /// Oja's rule over a stream of centered observations.
    Oja,
}

impl std::str::FromStr for DirectionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "batch-svd" | "svd" => Ok(Self::BatchSvd),
            "oja" => Ok(Self::Oja),
            other => Err(Error::Config(format!("unknown direction method {other:?}"))),
        }
    }
}

impl std::fmt::Display for DirectionMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::BatchSvd => "batch-svd",
            Self::Oja => "oja",
        })
    }
}

/// Streaming estimate of the first principal direction (Oja's rule, with
/// the estimate renormalized after every step).
///
/// The learning rate is `1 / (100 + t)` for the `t`-th update. The estimate
/// is seeded with the first non-zero observation.
#[derive(Clone, Debug, PartialEq)]
pub struct OjaState {
    dim: usize,
    direction: Vec<f64>,
    steps: u64,
}

impl OjaState {
    pub const RATE_OFFSET: f64 = 100.0;

    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            direction: Vec::new(),
            steps: 0,
        }
    }

    /// Feeds one already-centered observation.
    pub fn observe(&mut self, centered: &[f64]) {
        debug_assert_eq!(centered.len(), self.dim);
        if self.direction.is_empty() {
            let norm = l2(centered);
            if norm > 0.0 && norm.is_finite() {
                self.direction = centered.iter().map(|v| v / norm).collect();
            }
            return;
        }
        self.steps += 1;
        let rate = 1.0 / (Self::RATE_OFFSET + self.steps as f64);
        let y: f64 = self.direction.iter().zip(centered).map(|(w, x)| w * x).sum();
        for (w, x) in self.direction.iter_mut().zip(centered) {
            *w += rate * y * (x - y * *w);
        }
        let norm = l2(&self.direction);
        if norm > 0.0 && norm.is_finite() {
            self.direction.iter_mut().for_each(|w| *w /= norm);
        }
    }

    /// Current unit-norm estimate, if any non-zero observation has been seen.
    pub fn direction(&self) -> Option<&[f64]> {
        (!self.direction.is_empty()).then_some(self.direction.as_slice())
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// State with a previously saved estimate.
    pub fn restore(direction: Vec<f64>, steps: u64) -> Self {
        Self {
            dim: direction.len(),
            direction,
            steps,
        }
    }

    /// Fresh state fed with every row of `x`, centered on `center`.
    pub fn from_points(x: &Points, center: &[f64]) -> Self {
        let mut state = Self::new(x.dim());
        let mut buf = vec![0.0; x.dim()];
        for row in x.rows() {
            for ((b, v), c) in buf.iter_mut().zip(row).zip(center) {
                *b = v - c;
            }
            state.observe(&buf);
        }
        state
    }
}

/// Source of principal directions for [`split`].
#[derive(Clone, Debug, PartialEq)]
pub enum PrincipalDirectionEstimator {
    BatchSvd,
    /// Uses the streamed estimate when it exists, otherwise runs Oja's rule
    /// once over the rows being split.
    Oja(OjaState),
}

/// First principal direction of the mean-centered rows of `x`, as a unit
/// vector whose first non-negligible component is positive.
///
/// When the leading singular value is tied, the direction is the projection
/// of the lowest-index coordinate axis onto the tied subspace.
pub fn principal_direction(x: &Points, est: &PrincipalDirectionEstimator) -> Result<Vec<f64>> {
    if x.len() < 2 {
        return Err(contract("principal direction needs at least two rows"));
    }
    let first = x.row(0);
    if x.rows().all(|r| r == first) {
        return Err(Error::DegenerateData("all rows are identical".into()));
    }
    let center = centroid(x)?;
    let mut v = match est {
        PrincipalDirectionEstimator::BatchSvd => svd_direction(x, &center)?,
        PrincipalDirectionEstimator::Oja(state) => match state.direction() {
            Some(d) => d.to_vec(),
            None => OjaState::from_points(x, &center)
                .direction()
                .map(<[f64]>::to_vec)
                .ok_or_else(|| Error::DegenerateData("no spread around the centroid".into()))?,
        },
    };
    canonical_sign(&mut v);
    Ok(v)
}

fn svd_direction(x: &Points, center: &[f64]) -> Result<Vec<f64>> {
    let (n, m) = (x.len(), x.dim());
    let centered = Mat::from_fn(n, m, |i, j| x.row(i)[j] - center[j]);
    let svd = centered
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?;
    let s = svd.S().column_vector();
    let v = svd.V();
    let top = s[0];
    if top.is_nan() || top <= 0.0 {
        return Err(Error::DegenerateData("no spread around the centroid".into()));
    }
    let tied: Vec<usize> = (0..s.nrows())
        .filter(|&j| s[j] >= top * (1.0 - TIE_TOLERANCE))
        .collect();
    if tied.len() == 1 {
        return Ok((0..m).map(|i| v[(i, 0)]).collect());
    }
    for axis in 0..m {
        let mut proj = vec![0.0; m];
        for &j in &tied {
            let coef = v[(axis, j)];
            for (i, p) in proj.iter_mut().enumerate() {
                *p += coef * v[(i, j)];
            }
        }
        let norm = l2(&proj);
        if norm > 1e-8 {
            return Ok(proj.into_iter().map(|p| p / norm).collect());
        }
    }
    Ok((0..m).map(|i| v[(i, 0)]).collect())
}

fn canonical_sign(v: &mut [f64]) {
    if let Some(first) = v.iter().find(|c| c.abs() > 1e-12) {
        if *first < 0.0 {
            v.iter_mut().for_each(|c| *c = -*c);
        }
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Arithmetic mean of the rows.
pub fn centroid(x: &Points) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(contract("centroid of zero rows"));
    }
    let mut c = vec![0.0; x.dim()];
    for row in x.rows() {
        for (a, v) in c.iter_mut().zip(row) {
            *a += v;
        }
    }
    let n = x.len() as f64;
    c.iter_mut().for_each(|a| *a /= n);
    Ok(c)
}

/// One side of a bisection.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitPart {
    pub x: Points,
    pub y: Vec<f64>,
    pub center: Vec<f64>,
    /// Row indices into the parent, in parent order.
    pub rows: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitResult {
    /// Rows with a strictly positive projection.
    pub left: SplitPart,
    pub right: SplitPart,
    pub direction: Vec<f64>,
    /// True when the hyperplane through `center` left one side empty and
    /// the rows were split at the median projection instead.
    pub median_fallback: bool,
}

/// Bisects `(x, y)` with the hyperplane through `center` orthogonal to the
/// principal direction of `x`.
pub fn split(
    x: &Points,
    y: &[f64],
    center: &[f64],
    est: &PrincipalDirectionEstimator,
) -> Result<SplitResult> {
    if x.len() != y.len() {
        return Err(contract(format!("{} rows but {} targets", x.len(), y.len())));
    }
    if center.len() != x.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            got: center.len(),
        });
    }
    let direction = principal_direction(x, est)?;
    let projections: Vec<f64> = x
        .rows()
        .map(|row| {
            row.iter()
                .zip(center)
                .zip(&direction)
                .map(|((a, c), v)| v * (a - c))
                .sum()
        })
        .collect();
    split_by_projection(x, y, direction, &projections)
}

/// Bisection given precomputed projections: `> 0` goes left.
pub(crate) fn split_by_projection(
    x: &Points,
    y: &[f64],
    direction: Vec<f64>,
    projections: &[f64],
) -> Result<SplitResult> {
    let n = x.len();
    let mut is_left: Vec<bool> = projections.iter().map(|&p| p > 0.0).collect();
    let n_left = is_left.iter().filter(|&&l| l).count();
    let median_fallback = n_left == 0 || n_left == n;
    if median_fallback {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| projections[a].total_cmp(&projections[b]).then(a.cmp(&b)));
        is_left.iter_mut().for_each(|l| *l = false);
        for &i in &order[n.div_ceil(2)..] {
            is_left[i] = true;
        }
    }
    let part = |side: bool| -> Result<SplitPart> {
        let rows: Vec<usize> = (0..n).filter(|&i| is_left[i] == side).collect();
        let px = x.select(&rows);
        let py = rows.iter().map(|&i| y[i]).collect();
        Ok(SplitPart {
            center: centroid(&px)?,
            x: px,
            y: py,
            rows,
        })
    };
    Ok(SplitResult {
        left: part(true)?,
        right: part(false)?,
        direction,
        median_fallback,
    })
}

/// Sum of squared distances of each row to the centroid of its side.
pub fn within_cluster_ss(x: &Points, is_left: &[bool]) -> f64 {
    let mut total = 0.0;
    for side in [true, false] {
        let rows: Vec<usize> = (0..x.len()).filter(|&i| is_left[i] == side).collect();
        if rows.is_empty() {
            continue;
        }
        let part = x.select(&rows);
        let c = centroid(&part).expect("non-empty side");
        for row in part.rows() {
            total += row.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
    }
    total
}
