//! Pieces shared by every sharded GP model: the training schedule, the
//! shared hyperparameter state, and data shards with lazily rebuilt
//! posterior caches.

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, RwLock};

use crate::error::{Error, Result};
use crate::gp::{self, FitReport, GpPosterior, OptimizerSettings};
use crate::kernel::{Hyperparameters, KernelSpec};
use crate::points::Points;

/// When hyperparameters are refit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TrainSchedule {
    /// After every single observation.
    EveryUpdate,
    /// After every split (or new local model) and at the end of every batch.
    #[default]
    SplitsAndBatches,
    /// Only when `fit` is called explicitly.
    Manual,
}

impl FromStr for TrainSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "every-update" => Ok(Self::EveryUpdate),
            "splits-and-batches" => Ok(Self::SplitsAndBatches),
            "manual" => Ok(Self::Manual),
            other => Err(Error::Config(format!("unknown train schedule {other:?}"))),
        }
    }
}

impl fmt::Display for TrainSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::EveryUpdate => "every-update",
            Self::SplitsAndBatches => "splits-and-batches",
            Self::Manual => "manual",
        })
    }
}

/// Starting hyperparameters when none are supplied: unit lengthscales,
/// signal variance equal to the sample variance of the responses, and noise
/// at a tenth of that. With fewer than two responses (or zero spread) the
/// signal variance is 1.
pub fn default_hyperparameters(dim: usize, response_variance: Option<f64>) -> Hyperparameters {
    let signal = response_variance
        .filter(|v| v.is_finite() && *v > 0.0)
        .unwrap_or(1.0);
    Hyperparameters::isotropic(dim, 1.0, signal, 0.1 * signal)
        .expect("default hyperparameters are valid")
}

/// Welford running mean and variance of the responses seen so far.
#[derive(Clone, Debug, Default, PartialEq)]
pub(crate) struct RunningStats {
    pub(crate) count: u64,
    pub(crate) mean: f64,
    pub(crate) m2: f64,
}

impl RunningStats {
    pub(crate) fn push(&mut self, y: f64) {
        self.count += 1;
        let delta = y - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (y - self.mean);
    }

    pub(crate) fn sample_variance(&self) -> Option<f64> {
        (self.count >= 2).then(|| self.m2 / (self.count - 1) as f64)
    }
}

/// Hyperparameters shared by all shards of a model.
///
/// Until the first fit (or an explicit spec), the effective spec is the
/// data-dependent default, recomputed from the responses seen so far.
#[derive(Clone, Debug)]
pub(crate) struct HyperState {
    pub(crate) dim: usize,
    pub(crate) fixed: Option<KernelSpec>,
    pub(crate) stats: RunningStats,
    pub(crate) optimizer: OptimizerSettings,
    pub(crate) last_fit: Option<FitReport>,
}

impl HyperState {
    pub(crate) fn new(dim: usize, initial: Option<KernelSpec>, optimizer: OptimizerSettings) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Contract("input dimension must be at least 1".into()));
        }
        if let Some(spec) = &initial {
            if spec.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: spec.dim(),
                });
            }
        }
        Ok(Self {
            dim,
            fixed: initial,
            stats: RunningStats::default(),
            optimizer,
            last_fit: None,
        })
    }

    pub(crate) fn effective(&self) -> KernelSpec {
        match &self.fixed {
            Some(spec) => spec.clone(),
            None => KernelSpec::rbf_ard(default_hyperparameters(self.dim, self.stats.sample_variance())),
        }
    }

    pub(crate) fn observe(&mut self, y: f64) {
        self.stats.push(y);
    }

    pub(crate) fn fit(&mut self, shards: &[(&Points, &[f64])]) -> Result<FitReport> {
        let start = self.effective();
        let report = gp::fit(shards, &start, &self.optimizer)?;
        if let Some(w) = &report.warning {
            log::warn!("hyperparameter fit stopped early: {w}");
        }
        self.fixed = Some(report.spec.clone());
        self.last_fit = Some(report.clone());
        Ok(report)
    }

    pub(crate) fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("input contains non-finite values".into()));
        }
        Ok(())
    }

    pub(crate) fn check_observation(&self, x: &[f64], y: f64) -> Result<()> {
        self.check_point(x)?;
        if !y.is_finite() {
            return Err(Error::Contract("response is not finite".into()));
        }
        Ok(())
    }

    pub(crate) fn check_batch(&self, x: &Points, y: &[f64]) -> Result<()> {
        if x.len() != y.len() {
            return Err(Error::Contract(format!("{} rows but {} responses", x.len(), y.len())));
        }
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.dim(),
            });
        }
        if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("batch contains non-finite values".into()));
        }
        Ok(())
    }
}

/// Observations of one local GP plus a lazily rebuilt posterior.
///
/// The cache is keyed by hyperparameters: reads with a different spec
/// rebuild it, so predictions through `&self` never see stale factors.
#[derive(Debug)]
pub(crate) struct Shard {
    pub(crate) x: Points,
    pub(crate) y: Vec<f64>,
    cache: RwLock<Option<Arc<GpPosterior>>>,
}

impl Clone for Shard {
    fn clone(&self) -> Self {
        Self {
            x: self.x.clone(),
            y: self.y.clone(),
            cache: RwLock::new(self.cache.read().expect("cache lock").clone()),
        }
    }
}

impl Shard {
    pub(crate) fn new(dim: usize) -> Self {
        Self::from_parts(Points::new(dim), Vec::new())
    }

    pub(crate) fn from_parts(x: Points, y: Vec<f64>) -> Self {
        Self {
            x,
            y,
            cache: RwLock::new(None),
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.y.len()
    }

    pub(crate) fn push(&mut self, x: &[f64], y: f64) -> Result<()> {
        self.x.push(x)?;
        self.y.push(y);
        *self.cache.get_mut().expect("cache lock") = None;
        Ok(())
    }

    pub(crate) fn is_fresh(&self, spec: &KernelSpec) -> bool {
        self.cache
            .read()
            .expect("cache lock")
            .as_ref()
            .is_some_and(|p| p.is_current(spec))
    }

    pub(crate) fn posterior(&self, spec: &KernelSpec) -> Result<Arc<GpPosterior>> {
        if let Some(p) = self.cache.read().expect("cache lock").as_ref() {
            if p.is_current(spec) {
                return Ok(Arc::clone(p));
            }
        }
        let post = Arc::new(GpPosterior::new(self.x.clone(), self.y.clone(), spec)?);
        *self.cache.write().expect("cache lock") = Some(Arc::clone(&post));
        Ok(post)
    }

    pub(crate) fn as_pair(&self) -> (&Points, &[f64]) {
        (&self.x, &self.y)
    }

    /// Bytes for the kernel matrix, stored inputs and responses.
    pub(crate) fn footprint(&self) -> u64 {
        let n = self.len() as u64;
        8 * (n * n + n * self.x.dim() as u64 + n)
    }
}
