//! Independent reference implementations used by the integration tests.
//! Nothing here calls into the library's linear algebra; `assemble` only
//! goes through the text snapshot format.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splitgp::{KernelSpec, SplittingModel};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// RBF-ARD written out directly.
pub fn rbf(a: &[f64], b: &[f64], ls: &[f64], signal: f64) -> f64 {
    let mut s = 0.0;
    for d in 0..a.len() {
        let r = (a[d] - b[d]) / ls[d];
        s += r * r;
    }
    signal * (-0.5 * s).exp()
}

pub fn gram(x: &[Vec<f64>], ls: &[f64], signal: f64, noise: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut k = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            k[i][j] = rbf(&x[i], &x[j], ls, signal);
        }
        k[i][i] += noise;
    }
    k
}

/// Gaussian elimination with partial pivoting; returns the solution and
/// log |det A|.
pub fn solve(a: &[Vec<f64>], b: &[f64]) -> (Vec<f64>, f64) {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(row, &v)| row.iter().copied().chain([v]).collect()).collect();
    let mut log_det = 0.0;
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
        m.swap(col, pivot);
        let p = m[col][col];
        log_det += p.abs().ln();
        for row in col + 1..n {
            let f = m[row][col] / p;
            if f != 0.0 {
                let (upper, lower) = m.split_at_mut(row);
                for (a, b) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                    *a -= f * b;
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = m[row][n];
        for c in row + 1..n {
            s -= m[row][c] * x[c];
        }
        x[row] = s / m[row][row];
    }
    (x, log_det)
}

/// Posterior mean, latent variance at `xs`, and log marginal likelihood.
pub fn gp(x: &[Vec<f64>], y: &[f64], ls: &[f64], signal: f64, noise: f64, xs: &[f64]) -> (f64, f64, f64) {
    let k = gram(x, ls, signal, noise);
    let (alpha, log_det) = solve(&k, y);
    let ks: Vec<f64> = x.iter().map(|xi| rbf(xi, xs, ls, signal)).collect();
    let mean: f64 = ks.iter().zip(&alpha).map(|(a, b)| a * b).sum();
    let (v, _) = solve(&k, &ks);
    let var = signal - ks.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
    let n = y.len() as f64;
    let lml = -0.5 * y.iter().zip(&alpha).map(|(a, b)| a * b).sum::<f64>()
        - 0.5 * log_det
        - 0.5 * n * (2.0 * std::f64::consts::PI).ln();
    (mean, var, lml)
}

pub fn lml(x: &[Vec<f64>], y: &[f64], ls: &[f64], signal: f64, noise: f64) -> f64 {
    gp(x, y, ls, signal, noise, &x[0]).2
}

pub fn uniform_rows(rng: &mut ChaCha8Rng, n: usize, dim: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| rng.random_range(lo..hi)).collect()).collect()
}

/// Pairwise (tree) summation of each column, divided by n.
pub fn pairwise_mean(rows: &[Vec<f64>]) -> Vec<f64> {
    fn sum(v: &[f64]) -> f64 {
        if v.len() <= 2 {
            v.iter().sum()
        } else {
            let (a, b) = v.split_at(v.len() / 2);
            sum(a) + sum(b)
        }
    }
    let dim = rows[0].len();
    (0..dim)
        .map(|d| sum(&rows.iter().map(|r| r[d]).collect::<Vec<_>>()) / rows.len() as f64)
        .collect()
}

/// Center and `(x, y)` rows of one child.
pub type ChildData = (Vec<f64>, Vec<(Vec<f64>, f64)>);

/// A model with hand-placed children, built through the snapshot format.
pub fn assemble(spec: &KernelSpec, m: usize, children: &[ChildData]) -> SplittingModel {
    let p = spec.params();
    let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ");
    let total: usize = children.iter().map(|c| c.1.len()).sum();
    let mut text = format!(
        "splitgp-snapshot 1\ndim {}\nsplitting_limit {m}\nschedule manual\ndirection batch-svd\nmax_iters 50\ngrad_tol 0.00001\nobservations {total}\nsplits 0\nstats 0 0 0\nspec fixed\nlengthscales {}\nsignal_variance {}\nnoise_variance {}\nchildren {}\n",
        spec.dim(),
        join(p.lengthscales()),
        p.signal_variance(),
        p.noise_variance(),
        children.len()
    );
    for (center, rows) in children {
        text += &format!("child {}\ncenter {}\noja none\n", rows.len(), join(center));
        for (x, y) in rows {
            text += &format!("row {} {}\n", join(x), y);
        }
    }
    SplittingModel::from_snapshot(&text).unwrap()
}
