//! Datasets: the synthetic benchmark surface, CSV ingestion, deduplication,
//! response centering and seeded splitting.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::points::Points;

/// Inputs, responses and the offset removed from the responses.
///
/// Models see `y`; predictions on the original scale are `y + y_center`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Points,
    pub y: Vec<f64>,
    pub name: String,
    pub y_center: f64,
}

impl Dataset {
    pub fn new(x: Points, y: Vec<f64>, name: impl Into<String>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Contract(format!("{} rows but {} responses", x.len(), y.len())));
        }
        if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("dataset contains non-finite values".into()));
        }
        Ok(Self {
            x,
            y,
            name: name.into(),
            y_center: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.dim()
    }

    /// Rows in the given order, keeping name and offset.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            x: self.x.select(indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            name: self.name.clone(),
            y_center: self.y_center,
        }
    }

    /// Responses on the original scale.
    pub fn original_y(&self) -> Vec<f64> {
        self.y.iter().map(|v| v + self.y_center).collect()
    }

    pub fn response_mean(&self) -> f64 {
        if self.y.is_empty() {
            0.0
        } else {
            self.y.iter().sum::<f64>() / self.y.len() as f64
        }
    }

    /// Shifts responses so their mean is zero; the shift accumulates into
    /// `y_center`.
    pub fn centered(&self) -> Self {
        self.recentered(self.response_mean() + self.y_center)
    }

    /// Re-expresses responses relative to `center` on the original scale.
    pub fn recentered(&self, center: f64) -> Self {
        let shift = center - self.y_center;
        Self {
            x: self.x.clone(),
            y: self.y.iter().map(|v| v - shift).collect(),
            name: self.name.clone(),
            y_center: center,
        }
    }

    /// Writes `x1..xM,y` with responses on the original scale, in
    /// round-trip float formatting.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(File::create(path)?);
        let header: Vec<String> = (1..=self.dim()).map(|i| format!("x{i}")).chain(["y".to_string()]).collect();
        writeln!(out, "{}", header.join(","))?;
        for (row, y) in self.x.rows().zip(self.original_y()) {
            let cells: Vec<String> = row.iter().chain([&y]).map(f64::to_string).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// What a derived random stream is used for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SeedPurpose {
    Sampling = 1,
    Noise = 2,
    Folds = 3,
    Assignment = 4,
}

/// Master seed from which every random stream of an experiment derives.
///
/// A stream is fixed by (master, purpose, replicate) and never by the model
/// being evaluated, so all models in a replicate see the same data, folds
/// and ingestion order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedPlan {
    pub master: u64,
}

impl SeedPlan {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn rng(&self, purpose: SeedPurpose, replicate: u32) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(((purpose as u64) << 32) | u64::from(replicate));
        rng
    }

    pub fn seed(&self, purpose: SeedPurpose, replicate: u32) -> u64 {
        self.rng(purpose, replicate).next_u64()
    }
}

/// The synthetic benchmark surface `5 sin(x1^2 + x2^2) + 3 x1`.
pub fn synth_latent(x1: f64, x2: f64) -> f64 {
    5.0 * (x1 * x1 + x2 * x2).sin() + 3.0 * x1
}

pub const GRID_SIDE: usize = 100;

/// The `GRID_SIDE x GRID_SIDE` grid on `[-1, 1]^2`, row-major in `x1`.
pub fn synth_grid() -> Points {
    let step = 2.0 / (GRID_SIDE - 1) as f64;
    let axis: Vec<f64> = (0..GRID_SIDE).map(|i| -1.0 + step * i as f64).collect();
    let mut grid = Points::with_capacity(2, GRID_SIDE * GRID_SIDE);
    for &a in &axis {
        for &b in &axis {
            grid.push(&[a, b]).expect("grid rows are 2-d");
        }
    }
    grid
}

/// Noise standard deviation: 5% of the largest latent value on the grid.
pub fn synth_noise_sd() -> f64 {
    0.05 * synth_grid()
        .rows()
        .map(|r| synth_latent(r[0], r[1]))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Samples `n` distinct grid points and adds Gaussian noise.
pub fn synth_dataset(n: usize, seeds: &SeedPlan, replicate: u32) -> Result<Dataset> {
    let grid = synth_grid();
    if n > grid.len() {
        return Err(Error::Config(format!("cannot sample {n} points from a grid of {}", grid.len())));
    }
    let mut sampler = seeds.rng(SeedPurpose::Sampling, replicate);
    let picks = rand::seq::index::sample(&mut sampler, grid.len(), n).into_vec();
    let x = grid.select(&picks);
    let noise = Normal::new(0.0, synth_noise_sd()).expect("positive sd");
    let mut noise_rng = seeds.rng(SeedPurpose::Noise, replicate);
    let y = x
        .rows()
        .map(|r| synth_latent(r[0], r[1]) + noise.sample(&mut noise_rng))
        .collect();
    Dataset::new(x, y, format!("synthetic:{n}"))
}

/// Which column holds the response; every other column is a predictor.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum ResponseColumn {
    #[default]
    Last,
    Index(usize),
    /// Header name; requires a header row.
    Name(String),
}

impl std::str::FromStr for ResponseColumn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "last" => Self::Last,
            _ => match s.parse() {
                Ok(i) => Self::Index(i),
                Err(_) => Self::Name(s.to_string()),
            },
        })
    }
}

/// Reads a numeric table delimited by commas or whitespace. A first row
/// with any non-numeric cell is taken as a header.
pub fn load_csv(path: impl AsRef<Path>, response: &ResponseColumn) -> Result<Dataset> {
    let path = path.as_ref();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let reader = BufReader::new(File::open(path)?);
    let mut header: Option<Vec<String>> = None;
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut width = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let cells: Vec<&str> = if trimmed.contains(',') {
            trimmed.split(',').map(str::trim).collect()
        } else {
            trimmed.split_whitespace().collect()
        };
        match width {
            None => width = Some(cells.len()),
            Some(w) if w != cells.len() => {
                return Err(parse_err(lineno, format!("expected {w} columns, found {}", cells.len())));
            }
            _ => {}
        }
        let parsed: Vec<Option<f64>> = cells.iter().map(|c| c.parse().ok()).collect();
        if header.is_none() && rows.is_empty() && parsed.iter().any(Option::is_none) {
            header = Some(cells.iter().map(|c| c.to_string()).collect());
            continue;
        }
        let mut values = Vec::with_capacity(cells.len());
        for (j, (cell, v)) in cells.iter().zip(parsed).enumerate() {
            match v {
                Some(v) if v.is_finite() => values.push(v),
                Some(_) => return Err(parse_err(lineno, format!("column {}: non-finite value {cell:?}", j + 1))),
                None => return Err(parse_err(lineno, format!("column {}: not a number: {cell:?}", j + 1))),
            }
        }
        rows.push((lineno, values));
    }
    let width = width.ok_or_else(|| parse_err(0, "file has no rows".into()))?;
    if width < 2 {
        return Err(parse_err(1, "need at least one predictor and one response column".into()));
    }
    let target = match response {
        ResponseColumn::Last => width - 1,
        ResponseColumn::Index(i) if *i < width => *i,
        ResponseColumn::Index(i) => return Err(Error::Config(format!("response column {i} out of range"))),
        ResponseColumn::Name(name) => header
            .as_ref()
            .and_then(|h| h.iter().position(|c| c == name))
            .ok_or_else(|| Error::Config(format!("no header column named {name:?}")))?,
    };
    let mut x = Points::with_capacity(width - 1, rows.len());
    let mut y = Vec::with_capacity(rows.len());
    for (_, row) in &rows {
        let predictors: Vec<f64> = row.iter().enumerate().filter(|&(j, _)| j != target).map(|(_, v)| *v).collect();
        x.push(&predictors)?;
        y.push(row[target]);
    }
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Dataset::new(x, y, name)
}

/// Drops rows whose inputs and response are bitwise equal to an earlier
/// row, keeping first occurrences in order.
pub fn dedup_exact(ds: &Dataset) -> Dataset {
    let mut seen = HashSet::with_capacity(ds.len());
    let keep: Vec<usize> = (0..ds.len())
        .filter(|&i| {
            let key: Vec<u64> = ds.x.row(i).iter().chain([&ds.y[i]]).map(|v| v.to_bits()).collect();
            seen.insert(key)
        })
        .collect();
    ds.select(&keep)
}

/// Index sets of one cross-validation fold.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles `0..n` and cuts it into `k` contiguous test blocks whose sizes
/// differ by at most one. Training indices keep the shuffled order.
pub fn kfold_indices(n: usize, k: usize, rng: &mut impl rand::Rng) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::Config(format!("k-fold needs k >= 2, got {k}")));
    }
    if k > n {
        return Err(Error::Config(format!("cannot make {k} folds from {n} rows")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let (base, extra) = (n / k, n % k);
    let mut bounds = Vec::with_capacity(k + 1);
    bounds.push(0);
    for f in 0..k {
        bounds.push(bounds[f] + base + usize::from(f < extra));
    }
    Ok((0..k)
        .map(|f| Fold {
            test: order[bounds[f]..bounds[f + 1]].to_vec(),
            train: order[..bounds[f]].iter().chain(&order[bounds[f + 1]..]).copied().collect(),
        })
        .collect())
}

/// `k` (train, test) pairs shuffled by the fold stream of `replicate`.
pub fn kfold(ds: &Dataset, k: usize, seeds: &SeedPlan, replicate: u32) -> Result<Vec<(Dataset, Dataset)>> {
    let mut rng = seeds.rng(SeedPurpose::Folds, replicate);
    Ok(kfold_indices(ds.len(), k, &mut rng)?
        .into_iter()
        .map(|f| (ds.select(&f.train), ds.select(&f.test)))
        .collect())
}

/// How a hold-out split is sized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SplitSize {
    /// Share of rows used for training; the rest is test.
    Fraction(f64),
    Counts { train: usize, test: usize },
}

pub fn train_test_indices(n: usize, size: SplitSize, rng: &mut impl rand::Rng) -> Result<Fold> {
    let (n_train, n_test) = match size {
        SplitSize::Fraction(f) if (0.0..=1.0).contains(&f) => {
            let t = (f * n as f64).round() as usize;
            (t, n - t)
        }
        SplitSize::Fraction(f) => return Err(Error::Config(format!("train fraction {f} outside [0, 1]"))),
        SplitSize::Counts { train, test } if train + test <= n => (train, test),
        SplitSize::Counts { train, test } => {
            return Err(Error::Config(format!("split {train}/{test} exceeds {n} rows")));
        }
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    Ok(Fold {
        train: order[..n_train].to_vec(),
        test: order[n_train..n_train + n_test].to_vec(),
    })
}

pub fn train_test_split(ds: &Dataset, size: SplitSize, seeds: &SeedPlan, replicate: u32) -> Result<(Dataset, Dataset)> {
    let mut rng = seeds.rng(SeedPurpose::Folds, replicate);
    let f = train_test_indices(ds.len(), size, &mut rng)?;
    Ok((ds.select(&f.train), ds.select(&f.test)))
}

/// Per-column affine map to zero mean and unit sample deviation, fitted on
/// training inputs. Constant columns are only shifted.
#[derive(Clone, Debug, PartialEq)]
pub struct InputScaler {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl InputScaler {
    pub fn fit(x: &Points) -> Self {
        let n = x.len().max(1) as f64;
        let dim = x.dim();
        let mut mean = vec![0.0; dim];
        for row in x.rows() {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; dim];
        for row in x.rows() {
            var.iter_mut().zip(row).zip(&mean).for_each(|((s, v), m)| *s += (v - m).powi(2));
        }
        let denom = (x.len().max(2) - 1) as f64;
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / denom).sqrt();
                if sd > 0.0 { sd } else { 1.0 }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn transform(&self, x: &Points) -> Points {
        let mut out = Points::with_capacity(x.dim(), x.len());
        let mut buf = vec![0.0; x.dim()];
        for row in x.rows() {
            for (j, b) in buf.iter_mut().enumerate() {
                *b = (row[j] - self.mean[j]) / self.scale[j];
            }
            out.push(&buf).expect("same dimension");
        }
        out
    }
}
