//! RBF kernel with automatic relevance determination.
//!
//! `k(x, x') = s * exp(-0.5 * sum_d (x_d - x'_d)^2 / l_d^2)` with one
//! lengthscale `l_d` per input dimension and signal variance `s`. Observation
//! noise never enters `k`; it is added to the diagonal of kernel matrices only.
//!
//! All positive parameters have a log-domain representation, ordered as
//! `[log l_1, .., log l_M, log s, log noise]`, which is what the optimizer in
//! [`crate::gp`] moves through.

use std::fmt;
use std::str::FromStr;

use faer::Mat;

use crate::error::{Error, Result};
use crate::kv::{parse_f64, parse_f64_list, parse_kv};
use crate::points::Points;

/// Kernel hyperparameters shared by every GP in a model.
#[derive(Clone, Debug, PartialEq)]
pub struct Hyperparameters {
    lengthscales: Vec<f64>,
    signal_variance: f64,
    noise_variance: f64,
}

impl Hyperparameters {
    pub fn new(lengthscales: Vec<f64>, signal_variance: f64, noise_variance: f64) -> Result<Self> {
        if lengthscales.is_empty() {
            return Err(Error::InvalidHyperparameters(
                "at least one lengthscale is required".into(),
            ));
        }
        if let Some(bad) = lengthscales.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::InvalidHyperparameters(format!(
                "lengthscales must be positive and finite, got {bad}"
            )));
        }
        if !(signal_variance.is_finite() && signal_variance > 0.0) {
            return Err(Error::InvalidHyperparameters(format!(
                "signal variance must be positive and finite, got {signal_variance}"
            )));
        }
        if !(noise_variance.is_finite() && noise_variance >= 0.0) {
            return Err(Error::InvalidHyperparameters(format!(
                "noise variance must be non-negative and finite, got {noise_variance}"
            )));
        }
        Ok(Self {
            lengthscales,
            signal_variance,
            noise_variance,
        })
    }

    /// Same lengthscale in every dimension.
    pub fn isotropic(
        dim: usize,
        lengthscale: f64,
        signal_variance: f64,
        noise_variance: f64,
    ) -> Result<Self> {
        Self::new(vec![lengthscale; dim], signal_variance, noise_variance)
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn signal_variance(&self) -> f64 {
        self.signal_variance
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    /// Number of log-domain parameters: one per lengthscale, plus signal and noise.
    pub fn n_params(&self) -> usize {
        self.lengthscales.len() + 2
    }

    pub fn to_log(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.lengthscales.iter().map(|l| l.ln()).collect();
        out.push(self.signal_variance.ln());
        out.push(self.noise_variance.ln());
        out
    }

    /// Inverse of [`Hyperparameters::to_log`]. A log noise of `-inf` maps to
    /// a noiseless model.
    pub fn from_log(log_params: &[f64]) -> Result<Self> {
        if log_params.len() < 3 {
            return Err(Error::InvalidHyperparameters(format!(
                "expected at least 3 log-parameters, got {}",
                log_params.len()
            )));
        }
        let m = log_params.len() - 2;
        Self::new(
            log_params[..m].iter().map(|v| v.exp()).collect(),
            log_params[m].exp(),
            log_params[m + 1].exp(),
        )
    }

    /// Reads the three hyperparameter keys out of a parsed key=value list,
    /// ignoring any other keys.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let mut lengthscales = None;
        let mut signal = None;
        let mut noise = None;
        for (key, value) in pairs {
            match key.as_str() {
                "lengthscales" => lengthscales = Some(parse_f64_list(key, value)?),
                "signal_variance" => signal = Some(parse_f64(key, value)?),
                "noise_variance" => noise = Some(parse_f64(key, value)?),
                _ => {}
            }
        }
        let missing = |k: &str| Error::Config(format!("missing key {k}"));
        Self::new(
            lengthscales.ok_or_else(|| missing("lengthscales"))?,
            signal.ok_or_else(|| missing("signal_variance"))?,
            noise.ok_or_else(|| missing("noise_variance"))?,
        )
    }
}

/// `lengthscales=a,b,..` / `signal_variance=..` / `noise_variance=..`, one per line.
impl fmt::Display for Hyperparameters {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ls: Vec<String> = self.lengthscales.iter().map(|l| l.to_string()).collect();
        writeln!(f, "lengthscales={}", ls.join(","))?;
        writeln!(f, "signal_variance={}", self.signal_variance)?;
        writeln!(f, "noise_variance={}", self.noise_variance)
    }
}

impl FromStr for Hyperparameters {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let pairs = parse_kv(s)?;
        if let Some((key, _)) = pairs.iter().find(|(k, _)| {
            !matches!(k.as_str(), "lengthscales" | "signal_variance" | "noise_variance")
        }) {
            return Err(Error::Config(format!("unknown hyperparameter key {key}")));
        }
        Self::from_pairs(&pairs)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelFamily {
    RbfArd,
}

/// A kernel family together with its hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelSpec {
    family: KernelFamily,
    params: Hyperparameters,
}

impl KernelSpec {
    pub fn rbf_ard(params: Hyperparameters) -> Self {
        Self {
            family: KernelFamily::RbfArd,
            params,
        }
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn params(&self) -> &Hyperparameters {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.params.dim()
    }

    pub fn log_params(&self) -> Vec<f64> {
        self.params.to_log()
    }

    pub fn with_log_params(&self, log_params: &[f64]) -> Result<Self> {
        if log_params.len() != self.params.n_params() {
            return Err(Error::DimensionMismatch {
                expected: self.params.n_params(),
                got: log_params.len(),
            });
        }
        Ok(Self {
            family: self.family,
            params: Hyperparameters::from_log(log_params)?,
        })
    }

    /// Kernel value between two points, with dimension and finiteness checks.
    pub fn eval(&self, x: &[f64], x_prime: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        self.check_point(x_prime)?;
        Ok(self.eval_unchecked(x, x_prime))
    }

    /// Kernel value divided by the signal variance, so it lies in `(0, 1]`.
    pub fn correlation(&self, x: &[f64], x_prime: &[f64]) -> f64 {
        (-0.5 * self.scaled_sq_dist(x, x_prime)).exp()
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64], x_prime: &[f64]) -> f64 {
        self.params.signal_variance * (-0.5 * self.scaled_sq_dist(x, x_prime)).exp()
    }

    pub(crate) fn scaled_sq_dist(&self, x: &[f64], x_prime: &[f64]) -> f64 {
        x.iter()
            .zip(x_prime)
            .zip(&self.params.lengthscales)
            .map(|((a, b), l)| {
                let r = (a - b) / l;
                r * r
            })
            .sum()
    }

    pub(crate) fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("input contains non-finite values".into()));
        }
        Ok(())
    }

    pub(crate) fn check_points(&self, x: &Points) -> Result<()> {
        if x.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.dim(),
            });
        }
        if !x.is_finite() {
            return Err(Error::Contract("inputs contain non-finite values".into()));
        }
        Ok(())
    }

    /// Kernel matrix `K(X, X)`, optionally with the noise variance on the diagonal.
    pub fn gram(&self, x: &Points, add_noise: bool) -> Result<Mat<f64>> {
        self.check_points(x)?;
        Ok(self.gram_with_diagonal(x, if add_noise { self.params.noise_variance } else { 0.0 }))
    }

    pub(crate) fn gram_with_diagonal(&self, x: &Points, diagonal: f64) -> Mat<f64> {
        let n = x.len();
        let mut k = Mat::<f64>::zeros(n, n);
        for i in 0..n {
            let xi = x.row(i);
            k[(i, i)] = self.params.signal_variance + diagonal;
            for j in 0..i {
                let v = self.eval_unchecked(xi, x.row(j));
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }

    /// `k(x_star, X)` as a vector over the rows of `X`.
    pub fn cross(&self, x_star: &[f64], x: &Points) -> Vec<f64> {
        x.rows().map(|row| self.eval_unchecked(x_star, row)).collect()
    }

    /// Derivatives of the noisy kernel matrix with respect to each
    /// log-domain parameter, in [`Hyperparameters::to_log`] order.
    pub fn gram_gradients(&self, x: &Points) -> Result<Vec<Mat<f64>>> {
        self.check_points(x)?;
        let n = x.len();
        let m = self.dim();
        let mut grads: Vec<Mat<f64>> = (0..m + 2).map(|_| Mat::zeros(n, n)).collect();
        for i in 0..n {
            let xi = x.row(i);
            for j in 0..=i {
                let xj = x.row(j);
                let kij = self.eval_unchecked(xi, xj);
                for d in 0..m {
                    let l = self.params.lengthscales[d];
                    let r = xi[d] - xj[d];
                    let v = kij * r * r / (l * l);
                    grads[d][(i, j)] = v;
                    grads[d][(j, i)] = v;
                }
                grads[m][(i, j)] = kij;
                grads[m][(j, i)] = kij;
            }
            grads[m + 1][(i, i)] = self.params.noise_variance;
        }
        Ok(grads)
    }
}
