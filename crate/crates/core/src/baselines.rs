//! Comparison models sharing one streaming interface.
//!
//! * [`FullGp`]: one GP over every observation.
//! * [`LocalGpWgen`]: local GPs spawned by a similarity threshold.
//! * [`Rbcm`]: a robust Bayesian committee machine with a fixed number of
//!   randomly assigned experts.
//!
//! [`SplittingModel`] implements the same trait so the benchmark harness
//! treats every model identically.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{contract, Error, Result};
use crate::gp::{FitReport, OptimizerSettings};
use crate::kernel::KernelSpec;
use crate::model::{normalize_weights, SplittingModel};
use crate::partition;
use crate::points::Points;
use crate::training::{HyperState, Shard, TrainSchedule};

/// Predictive mean and, where the model provides one, variance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: Option<f64>,
}

/// Streaming regressor driven by the benchmark harness.
///
/// `predict` never changes what a model would predict next; it may fill
/// internal factorization caches.
pub trait OnlineRegressor {
    fn name(&self) -> &'static str;

    fn dim(&self) -> usize;

    fn ingest(&mut self, x: &[f64], y: f64) -> Result<()>;

    /// Ingests rows in order. Schedules that refit per batch do so once at
    /// the end.
    fn ingest_batch(&mut self, x: &Points, y: &[f64]) -> Result<()>;

    /// Refits hyperparameters on everything ingested so far.
    fn fit(&mut self) -> Result<FitReport>;

    fn predict(&self, x_star: &[f64]) -> Result<Prediction>;

    fn predict_mean(&self, x_star: &[f64]) -> Result<f64> {
        self.predict(x_star).map(|p| p.mean)
    }

    /// Analytic bytes for kernel matrices and stored data.
    fn footprint(&self) -> u64;

    /// Observations ingested.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Local models (children, experts) currently held.
    fn n_models(&self) -> usize;

    fn spec(&self) -> KernelSpec;
}

/// Full GP regression over the whole stream. Order-insensitive up to
/// floating-point summation: the posterior depends only on the data set.
#[derive(Clone, Debug)]
pub struct FullGp {
    hyper: HyperState,
    shard: Shard,
    schedule: TrainSchedule,
}

impl FullGp {
    pub fn new(dim: usize, schedule: TrainSchedule, optimizer: OptimizerSettings) -> Result<Self> {
        Self::build(dim, None, schedule, optimizer)
    }

    pub fn with_spec(spec: KernelSpec, schedule: TrainSchedule, optimizer: OptimizerSettings) -> Result<Self> {
        Self::build(spec.dim(), Some(spec), schedule, optimizer)
    }

    fn build(dim: usize, spec: Option<KernelSpec>, schedule: TrainSchedule, optimizer: OptimizerSettings) -> Result<Self> {
        Ok(Self {
            hyper: HyperState::new(dim, spec, optimizer)?,
            shard: Shard::new(dim),
            schedule,
        })
    }

    pub fn inputs(&self) -> &Points {
        &self.shard.x
    }

    pub fn targets(&self) -> &[f64] {
        &self.shard.y
    }
}

impl OnlineRegressor for FullGp {
    fn name(&self) -> &'static str {
        "fullgp"
    }

    fn dim(&self) -> usize {
        self.hyper.dim
    }

    fn ingest(&mut self, x: &[f64], y: f64) -> Result<()> {
        self.hyper.check_observation(x, y)?;
        self.hyper.observe(y);
        self.shard.push(x, y)?;
        if self.schedule == TrainSchedule::EveryUpdate {
            self.fit()?;
        }
        Ok(())
    }

    fn ingest_batch(&mut self, x: &Points, y: &[f64]) -> Result<()> {
        self.hyper.check_batch(x, y)?;
        for (row, &t) in x.rows().zip(y) {
            self.hyper.observe(t);
            self.shard.push(row, t)?;
        }
        if !y.is_empty() && self.schedule != TrainSchedule::Manual {
            self.fit()?;
        }
        Ok(())
    }

    fn fit(&mut self) -> Result<FitReport> {
        self.hyper.fit(&[self.shard.as_pair()])
    }

    fn predict(&self, x_star: &[f64]) -> Result<Prediction> {
        self.hyper.check_point(x_star)?;
        let spec = self.hyper.effective();
        let post = self.shard.posterior(&spec)?;
        Ok(Prediction {
            mean: post.mean_unchecked(x_star, &spec),
            variance: Some(post.variance_unchecked(x_star, &spec)?),
        })
    }

    fn footprint(&self) -> u64 {
        self.shard.footprint()
    }

    fn len(&self) -> usize {
        self.shard.len()
    }

    fn n_models(&self) -> usize {
        usize::from(self.shard.len() > 0)
    }

    fn spec(&self) -> KernelSpec {
        self.hyper.effective()
    }
}

/// Kernel values below this are treated as zero.
pub const SIMILARITY_FLOOR: f64 = 1e-300;

#[derive(Clone, Debug)]
struct LocalModel {
    shard: Shard,
    center: Vec<f64>,
}

/// Threshold-based local GP: an observation joins its most similar local
/// model unless no center has normalized similarity `k(x, c) / signal`
/// above `w_gen`, in which case it starts a new model centered on itself.
///
/// Predictions weight every local model by `k(c_i, x*) / S`, as in the
/// splitting model. The outcome depends on ingestion order.
#[derive(Clone, Debug)]
pub struct LocalGpWgen {
    hyper: HyperState,
    models: Vec<LocalModel>,
    w_gen: f64,
    schedule: TrainSchedule,
    observations: usize,
}

impl LocalGpWgen {
    pub fn new(dim: usize, w_gen: f64, schedule: TrainSchedule, optimizer: OptimizerSettings) -> Result<Self> {
        Self::build(dim, None, w_gen, schedule, optimizer)
    }

    pub fn with_spec(spec: KernelSpec, w_gen: f64, schedule: TrainSchedule, optimizer: OptimizerSettings) -> Result<Self> {
        Self::build(spec.dim(), Some(spec), w_gen, schedule, optimizer)
    }

    fn build(
        dim: usize,
        spec: Option<KernelSpec>,
        w_gen: f64,
        schedule: TrainSchedule,
        optimizer: OptimizerSettings,
    ) -> Result<Self> {
        if !(w_gen > 0.0 && w_gen <= 1.0) {
            return Err(Error::Config(format!("w_gen must lie in (0, 1], got {w_gen}")));
        }
        if w_gen < 1e-8 {
            log::warn!("w_gen {w_gen:e} is below 1e-8; kernel weights may underflow");
        }
        Ok(Self {
            hyper: HyperState::new(dim, spec, optimizer)?,
            models: Vec::new(),
            w_gen,
            schedule,
            observations: 0,
        })
    }

    pub fn w_gen(&self) -> f64 {
        self.w_gen
    }

    pub fn centers(&self) -> impl Iterator<Item = &[f64]> {
        self.models.iter().map(|m| m.center.as_slice())
    }

    pub fn model_sizes(&self) -> Vec<usize> {
        self.models.iter().map(|m| m.shard.len()).collect()
    }

    /// Returns whether a new local model was created.
    fn insert(&mut self, x: &[f64], y: f64) -> Result<bool> {
        self.hyper.observe(y);
        self.observations += 1;
        let spec = self.hyper.effective();
        let best = self
            .models
            .iter()
            .enumerate()
            .map(|(i, m)| (i, spec.correlation(x, &m.center)))
            .fold(None, |acc: Option<(usize, f64)>, (i, s)| match acc {
                Some((_, b)) if b >= s => acc,
                _ => Some((i, s)),
            });
        match best {
            Some((i, s)) if s > self.w_gen => {
                let model = &mut self.models[i];
                model.shard.push(x, y)?;
                model.center = partition::centroid(&model.shard.x)?;
                Ok(false)
            }
            _ => {
                let mut shard = Shard::new(self.hyper.dim);
                shard.push(x, y)?;
                self.models.push(LocalModel {
                    shard,
                    center: x.to_vec(),
                });
                Ok(true)
            }
        }
    }
}

impl OnlineRegressor for LocalGpWgen {
    fn name(&self) -> &'static str {
        "localgp"
    }

    fn dim(&self) -> usize {
        self.hyper.dim
    }

    fn ingest(&mut self, x: &[f64], y: f64) -> Result<()> {
        self.hyper.check_observation(x, y)?;
        let created = self.insert(x, y)?;
        match self.schedule {
            TrainSchedule::EveryUpdate => {
                self.fit()?;
            }
            TrainSchedule::SplitsAndBatches if created => {
                self.fit()?;
            }
            _ => {}
        }
        Ok(())
    }

    fn ingest_batch(&mut self, x: &Points, y: &[f64]) -> Result<()> {
        self.hyper.check_batch(x, y)?;
        for (row, &t) in x.rows().zip(y) {
            self.insert(row, t)?;
        }
        if !y.is_empty() && self.schedule != TrainSchedule::Manual {
            self.fit()?;
        }
        Ok(())
    }

    fn fit(&mut self) -> Result<FitReport> {
        let shards: Vec<_> = self.models.iter().map(|m| m.shard.as_pair()).collect();
        self.hyper.fit(&shards)
    }

    fn predict(&self, x_star: &[f64]) -> Result<Prediction> {
        self.hyper.check_point(x_star)?;
        if self.models.is_empty() {
            return Err(Error::EmptyModel);
        }
        let spec = self.hyper.effective();
        let mut clamped = false;
        let sims: Vec<f64> = self
            .models
            .iter()
            .map(|m| {
                let k = spec.eval_unchecked(&m.center, x_star);
                if k < SIMILARITY_FLOOR {
                    clamped |= k > 0.0;
                    0.0
                } else {
                    k
                }
            })
            .collect();
        if clamped {
            log::warn!("kernel similarities below {SIMILARITY_FLOOR:e} were clamped to zero");
        }
        let (weights, _, uniform) = normalize_weights(&sims);
        if uniform {
            log::warn!("all local-model weights vanished at {x_star:?}; using uniform weights");
        }
        let (mut mean, mut variance) = (0.0, 0.0);
        for (model, w) in self.models.iter().zip(&weights) {
            let post = model.shard.posterior(&spec)?;
            mean += w * post.mean_unchecked(x_star, &spec);
            variance += w * w * post.variance_unchecked(x_star, &spec)?;
        }
        Ok(Prediction {
            mean,
            variance: Some(variance),
        })
    }

    fn footprint(&self) -> u64 {
        let m = self.hyper.dim as u64;
        self.models.iter().map(|l| l.shard.footprint() + 8 * m).sum()
    }

    fn len(&self) -> usize {
        self.observations
    }

    fn n_models(&self) -> usize {
        self.models.len()
    }

    fn spec(&self) -> KernelSpec {
        self.hyper.effective()
    }
}

/// Robust Bayesian committee machine with `E` experts fixed at
/// construction. Each observation goes to a uniformly random expert drawn
/// from a seeded generator.
///
/// With prior variance `s2 = signal_variance` and expert predictions
/// `(mu_k, s2_k)`, the combination is
///
/// ```text
/// beta_k    = 0.5 * (ln s2 - ln s2_k)
/// precision = sum_k beta_k / s2_k + (1 - sum_k beta_k) / s2
/// mean      = (sum_k beta_k * mu_k / s2_k) / precision
/// ```
///
/// Expert variances are clamped into `[1e-12 * s2, s2]`, which keeps every
/// `beta_k` non-negative and the precision at least `1 / s2`. Empty experts
/// are skipped. A committee of one returns its expert's prediction
/// unchanged.
#[derive(Clone, Debug)]
pub struct Rbcm {
    hyper: HyperState,
    experts: Vec<Shard>,
    rng: ChaCha8Rng,
    schedule: TrainSchedule,
}

impl Rbcm {
    pub const VARIANCE_FLOOR: f64 = 1e-12;

    pub fn new(dim: usize, experts: usize, seed: u64, schedule: TrainSchedule, optimizer: OptimizerSettings) -> Result<Self> {
        Self::build(dim, None, experts, seed, schedule, optimizer)
    }

    pub fn with_spec(
        spec: KernelSpec,
        experts: usize,
        seed: u64,
        schedule: TrainSchedule,
        optimizer: OptimizerSettings,
    ) -> Result<Self> {
        Self::build(spec.dim(), Some(spec), experts, seed, schedule, optimizer)
    }

    fn build(
        dim: usize,
        spec: Option<KernelSpec>,
        experts: usize,
        seed: u64,
        schedule: TrainSchedule,
        optimizer: OptimizerSettings,
    ) -> Result<Self> {
        if experts == 0 {
            return Err(Error::Config("expert count must be at least 1".into()));
        }
        Ok(Self {
            hyper: HyperState::new(dim, spec, optimizer)?,
            experts: (0..experts).map(|_| Shard::new(dim)).collect(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            schedule,
        })
    }

    pub fn n_experts(&self) -> usize {
        self.experts.len()
    }

    pub fn expert_sizes(&self) -> Vec<usize> {
        self.experts.iter().map(Shard::len).collect()
    }

    /// Returns the expert index and whether it was empty before.
    fn insert(&mut self, x: &[f64], y: f64) -> Result<(usize, bool)> {
        self.hyper.observe(y);
        let k = self.rng.random_range(0..self.experts.len());
        let was_empty = self.experts[k].len() == 0;
        self.experts[k].push(x, y)?;
        Ok((k, was_empty))
    }
}

/// Combines expert predictions `(mean, variance)` under prior variance
/// `prior`; see [`Rbcm`].
pub fn rbcm_combine(experts: &[(f64, f64)], prior: f64) -> Result<(f64, f64)> {
    if experts.is_empty() {
        return Err(Error::EmptyModel);
    }
    if !(prior > 0.0 && prior.is_finite()) {
        return Err(contract(format!("prior variance must be positive, got {prior}")));
    }
    let floor = Rbcm::VARIANCE_FLOOR * prior;
    let (mut beta_sum, mut precision, mut weighted) = (0.0, 0.0, 0.0);
    for &(mu, var) in experts {
        let var = var.clamp(floor, prior);
        let beta = 0.5 * (prior.ln() - var.ln());
        beta_sum += beta;
        precision += beta / var;
        weighted += beta * mu / var;
    }
    precision += (1.0 - beta_sum) / prior;
    let variance = 1.0 / precision;
    Ok((weighted * variance, variance))
}

impl OnlineRegressor for Rbcm {
    fn name(&self) -> &'static str {
        "rbcm"
    }

    fn dim(&self) -> usize {
        self.hyper.dim
    }

    fn ingest(&mut self, x: &[f64], y: f64) -> Result<()> {
        self.hyper.check_observation(x, y)?;
        let (_, was_empty) = self.insert(x, y)?;
        match self.schedule {
            TrainSchedule::EveryUpdate => {
                self.fit()?;
            }
            TrainSchedule::SplitsAndBatches if was_empty => {
                self.fit()?;
            }
            _ => {}
        }
        Ok(())
    }

    fn ingest_batch(&mut self, x: &Points, y: &[f64]) -> Result<()> {
        self.hyper.check_batch(x, y)?;
        for (row, &t) in x.rows().zip(y) {
            self.insert(row, t)?;
        }
        if !y.is_empty() && self.schedule != TrainSchedule::Manual {
            self.fit()?;
        }
        Ok(())
    }

    fn fit(&mut self) -> Result<FitReport> {
        let shards: Vec<_> = self.experts.iter().map(Shard::as_pair).collect();
        self.hyper.fit(&shards)
    }

    fn predict(&self, x_star: &[f64]) -> Result<Prediction> {
        self.hyper.check_point(x_star)?;
        let spec = self.hyper.effective();
        let mut preds = Vec::with_capacity(self.experts.len());
        for expert in self.experts.iter().filter(|e| e.len() > 0) {
            let post = expert.posterior(&spec)?;
            preds.push((post.mean_unchecked(x_star, &spec), post.variance_unchecked(x_star, &spec)?));
        }
        if preds.is_empty() {
            return Err(Error::EmptyModel);
        }
        let (mean, variance) = if self.experts.len() == 1 {
            preds[0]
        } else {
            rbcm_combine(&preds, spec.params().signal_variance())?
        };
        if !mean.is_finite() || variance.is_nan() || variance <= 0.0 {
            return Err(Error::Numerical(format!("rBCM combination gave mean {mean}, variance {variance}")));
        }
        Ok(Prediction {
            mean,
            variance: Some(variance),
        })
    }

    fn footprint(&self) -> u64 {
        self.experts.iter().map(Shard::footprint).sum()
    }

    fn len(&self) -> usize {
        self.experts.iter().map(Shard::len).sum()
    }

    fn n_models(&self) -> usize {
        self.experts.iter().filter(|e| e.len() > 0).count()
    }

    fn spec(&self) -> KernelSpec {
        self.hyper.effective()
    }
}

impl OnlineRegressor for SplittingModel {
    fn name(&self) -> &'static str {
        "splitting"
    }

    fn dim(&self) -> usize {
        SplittingModel::dim(self)
    }

    fn ingest(&mut self, x: &[f64], y: f64) -> Result<()> {
        self.update(x, y).map(|_| ())
    }

    fn ingest_batch(&mut self, x: &Points, y: &[f64]) -> Result<()> {
        self.update_batch(x, y).map(|_| ())
    }

    fn fit(&mut self) -> Result<FitReport> {
        SplittingModel::fit(self)
    }

    fn predict(&self, x_star: &[f64]) -> Result<Prediction> {
        let p = SplittingModel::predict(self, x_star)?;
        Ok(Prediction {
            mean: p.mean,
            variance: p.variance,
        })
    }

    fn predict_mean(&self, x_star: &[f64]) -> Result<f64> {
        SplittingModel::predict_mean(self, x_star).map(|p| p.mean)
    }

    fn footprint(&self) -> u64 {
        self.memory_footprint()
    }

    fn len(&self) -> usize {
        SplittingModel::len(self)
    }

    fn n_models(&self) -> usize {
        self.n_children()
    }

    fn spec(&self) -> KernelSpec {
        SplittingModel::spec(self)
    }
}
