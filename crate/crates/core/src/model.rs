//! The splitting GP: local GPs that are bisected once they hold more than
//! `m` observations, combined by kernel-weighted averaging over all children.
//!
//! Each child keeps its own observations and the centroid of its inputs.
//! A new observation joins the child whose center is most similar to it and
//! that child's center is recomputed. When the child then exceeds the
//! splitting limit it is bisected by [`partition::split`]. Predictions
//! weight every child's posterior mean by `k(c_i, x*) / S` with
//! `S = sum_i k(c_i, x*)`, which keeps the aggregate mean continuous.

use std::sync::Arc;

use crate::error::{contract, Error, Result};
use crate::gp::{FitReport, GpPosterior, OptimizerSettings};
use crate::kernel::{Hyperparameters, KernelSpec};
use crate::partition::{self, DirectionMethod, OjaState, PrincipalDirectionEstimator, SplitPart};
use crate::points::Points;
use crate::training::{HyperState, RunningStats, Shard, TrainSchedule};

#[derive(Clone, Debug, PartialEq)]
pub struct SplittingConfig {
    /// Largest number of observations a child may hold after an update.
    pub splitting_limit: usize,
    pub schedule: TrainSchedule,
    pub direction: DirectionMethod,
    pub optimizer: OptimizerSettings,
}

impl SplittingConfig {
    pub fn new(splitting_limit: usize) -> Self {
        Self {
            splitting_limit,
            schedule: TrainSchedule::default(),
            direction: DirectionMethod::default(),
            optimizer: OptimizerSettings::default(),
        }
    }

    pub fn schedule(mut self, schedule: TrainSchedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn direction(mut self, direction: DirectionMethod) -> Self {
        self.direction = direction;
        self
    }

    pub fn optimizer(mut self, optimizer: OptimizerSettings) -> Self {
        self.optimizer = optimizer;
        self
    }
}

/// One local GP: its observations, center, and (in Oja mode) a streamed
/// principal-direction estimate.
#[derive(Clone, Debug)]
pub struct ChildModel {
    shard: Shard,
    center: Vec<f64>,
    oja: Option<OjaState>,
}

impl ChildModel {
    fn from_part(part: SplitPart, direction: DirectionMethod) -> Self {
        let oja = (direction == DirectionMethod::Oja).then(|| OjaState::from_points(&part.x, &part.center));
        Self {
            shard: Shard::from_parts(part.x, part.y),
            center: part.center,
            oja,
        }
    }

    pub fn inputs(&self) -> &Points {
        &self.shard.x
    }

    pub fn targets(&self) -> &[f64] {
        &self.shard.y
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn len(&self) -> usize {
        self.shard.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shard.len() == 0
    }

    pub fn oja(&self) -> Option<&OjaState> {
        self.oja.as_ref()
    }

    /// Posterior of this child alone, built on first use for `spec`.
    pub fn posterior(&self, spec: &KernelSpec) -> Result<Arc<GpPosterior>> {
        self.shard.posterior(spec)
    }

    pub fn mean(&self, x_star: &[f64], spec: &KernelSpec) -> Result<f64> {
        Ok(self.posterior(spec)?.mean_unchecked(x_star, spec))
    }

    pub fn variance(&self, x_star: &[f64], spec: &KernelSpec) -> Result<f64> {
        self.posterior(spec)?.variance_unchecked(x_star, spec)
    }
}

/// Aggregate prediction at one test input.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionSummary {
    pub mean: f64,
    /// Present when requested; assumes independent children.
    pub variance: Option<f64>,
    /// `k(c_i, x*) / S` per child, in child order.
    pub weights: Vec<f64>,
    pub normalizer: f64,
    /// The normalizer underflowed and uniform weights were used instead.
    pub uniform_fallback: bool,
}

/// What a single [`SplittingModel::update`] did.
#[derive(Clone, Debug)]
pub struct UpdateOutcome {
    /// Child that received the observation (before any split).
    pub child: usize,
    pub split: bool,
    pub fit: Option<FitReport>,
}

#[derive(Clone, Debug)]
pub struct SplittingModel {
    config: SplittingConfig,
    hyper: HyperState,
    children: Vec<ChildModel>,
    observations: usize,
    splits: usize,
}

impl SplittingModel {
    /// Empty model over `dim`-dimensional inputs with data-dependent default
    /// hyperparameters.
    pub fn new(dim: usize, config: SplittingConfig) -> Result<Self> {
        Self::build(dim, config, None)
    }

    /// Empty model starting from the given hyperparameters.
    pub fn with_spec(spec: KernelSpec, config: SplittingConfig) -> Result<Self> {
        Self::build(spec.dim(), config, Some(spec))
    }

    fn build(dim: usize, config: SplittingConfig, spec: Option<KernelSpec>) -> Result<Self> {
        if config.splitting_limit < 2 {
            return Err(Error::Config(format!(
                "splitting limit must be at least 2, got {}",
                config.splitting_limit
            )));
        }
        let hyper = HyperState::new(dim, spec, config.optimizer.clone())?;
        Ok(Self {
            config,
            hyper,
            children: Vec::new(),
            observations: 0,
            splits: 0,
        })
    }

    pub fn config(&self) -> &SplittingConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.hyper.dim
    }

    pub fn splitting_limit(&self) -> usize {
        self.config.splitting_limit
    }

    /// Hyperparameters currently used for assignment and prediction.
    pub fn spec(&self) -> KernelSpec {
        self.hyper.effective()
    }

    pub fn children(&self) -> &[ChildModel] {
        &self.children
    }

    pub fn n_children(&self) -> usize {
        self.children.len()
    }

    /// Total observations ingested.
    pub fn len(&self) -> usize {
        self.observations
    }

    pub fn is_empty(&self) -> bool {
        self.observations == 0
    }

    pub fn n_splits(&self) -> usize {
        self.splits
    }

    pub fn last_fit(&self) -> Option<&FitReport> {
        self.hyper.last_fit.as_ref()
    }

    /// Adds one observation, splitting the receiving child if it now holds
    /// more than `m` observations, then refits per the training schedule.
    ///
    /// On a fit failure the error is returned with the data already added.
    pub fn update(&mut self, x: &[f64], y: f64) -> Result<UpdateOutcome> {
        self.hyper.check_observation(x, y)?;
        let (child, split) = self.insert(x, y)?;
        let fit = match self.config.schedule {
            TrainSchedule::EveryUpdate => Some(self.fit()?),
            TrainSchedule::SplitsAndBatches if split => Some(self.fit()?),
            _ => None,
        };
        Ok(UpdateOutcome { child, split, fit })
    }

    /// Adds the rows in order, as repeated [`update`](Self::update) calls,
    /// but refits at most once, after the last row.
    pub fn update_batch(&mut self, x: &Points, y: &[f64]) -> Result<Option<FitReport>> {
        self.hyper.check_batch(x, y)?;
        if y.is_empty() {
            return Ok(None);
        }
        for (row, &target) in x.rows().zip(y) {
            self.insert(row, target)?;
        }
        match self.config.schedule {
            TrainSchedule::Manual => Ok(None),
            _ => self.fit().map(Some),
        }
    }

    fn insert(&mut self, x: &[f64], y: f64) -> Result<(usize, bool)> {
        self.hyper.observe(y);
        self.observations += 1;
        if self.children.is_empty() {
            let mut shard = Shard::new(self.dim());
            shard.push(x, y)?;
            let oja = (self.config.direction == DirectionMethod::Oja).then(|| OjaState::new(self.dim()));
            self.children.push(ChildModel {
                shard,
                center: x.to_vec(),
                oja,
            });
            return Ok((0, false));
        }

        let target = self.most_similar_child(x);
        let child = &mut self.children[target];
        child.shard.push(x, y)?;
        child.center = partition::centroid(&child.shard.x)?;
        if let Some(oja) = &mut child.oja {
            let centered: Vec<f64> = x.iter().zip(&child.center).map(|(a, c)| a - c).collect();
            oja.observe(&centered);
        }

        if child.len() <= self.config.splitting_limit {
            return Ok((target, false));
        }
        let estimator = match &child.oja {
            Some(state) => PrincipalDirectionEstimator::Oja(state.clone()),
            None => PrincipalDirectionEstimator::BatchSvd,
        };
        let result = partition::split(&child.shard.x, &child.shard.y, &child.center, &estimator)?;
        if result.median_fallback {
            log::warn!("split of child {target} was one-sided; used median projection");
        }
        self.children[target] = ChildModel::from_part(result.left, self.config.direction);
        self.children.push(ChildModel::from_part(result.right, self.config.direction));
        self.splits += 1;
        Ok((target, true))
    }

    // argmax_i k(x, c_i) is argmin of the lengthscale-scaled distance; the
    // distance form stays exact when kernel values underflow.
    fn most_similar_child(&self, x: &[f64]) -> usize {
        let spec = self.hyper.effective();
        let mut best = (0, f64::INFINITY);
        for (i, c) in self.children.iter().enumerate() {
            let d = spec.scaled_sq_dist(x, &c.center);
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    /// Refits the shared hyperparameters on all children.
    pub fn fit(&mut self) -> Result<FitReport> {
        let shards: Vec<(&Points, &[f64])> = self.children.iter().map(|c| c.shard.as_pair()).collect();
        self.hyper.fit(&shards)
    }

    /// Replaces the hyperparameters without fitting.
    pub fn set_spec(&mut self, spec: KernelSpec) -> Result<()> {
        if spec.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: spec.dim(),
            });
        }
        self.hyper.fixed = Some(spec);
        Ok(())
    }

    /// Rebuilds every stale child posterior now rather than on first
    /// prediction.
    pub fn refresh(&self) -> Result<()> {
        let spec = self.hyper.effective();
        for child in &self.children {
            child.posterior(&spec)?;
        }
        Ok(())
    }

    /// Number of children whose posterior cache is up to date.
    pub fn fresh_children(&self) -> usize {
        let spec = self.hyper.effective();
        self.children.iter().filter(|c| c.shard.is_fresh(&spec)).count()
    }

    /// Normalized weights `k(c_i, x*) / S`, the normalizer `S`, and whether
    /// the uniform fallback was used.
    pub fn weights(&self, x_star: &[f64]) -> Result<(Vec<f64>, f64, bool)> {
        self.hyper.check_point(x_star)?;
        if self.children.is_empty() {
            return Err(Error::EmptyModel);
        }
        let spec = self.hyper.effective();
        let sims: Vec<f64> = self.children.iter().map(|c| spec.eval_unchecked(&c.center, x_star)).collect();
        Ok(normalize_weights(&sims))
    }

    pub fn predict_mean(&self, x_star: &[f64]) -> Result<PredictionSummary> {
        self.predict_inner(x_star, false)
    }

    /// Mean and variance. The variance treats children as independent:
    /// `sum_i w_i^2 var_i`.
    pub fn predict(&self, x_star: &[f64]) -> Result<PredictionSummary> {
        self.predict_inner(x_star, true)
    }

    pub fn predict_variance(&self, x_star: &[f64]) -> Result<f64> {
        Ok(self.predict(x_star)?.variance.expect("variance requested"))
    }

    fn predict_inner(&self, x_star: &[f64], with_variance: bool) -> Result<PredictionSummary> {
        let (weights, normalizer, uniform_fallback) = self.weights(x_star)?;
        if uniform_fallback {
            log::warn!("kernel weights underflowed at {x_star:?}; using uniform weights");
        }
        let spec = self.hyper.effective();
        let mut mean = 0.0;
        let mut variance = 0.0;
        for (child, w) in self.children.iter().zip(&weights) {
            let post = child.posterior(&spec)?;
            mean += w * post.mean_unchecked(x_star, &spec);
            if with_variance {
                variance += w * w * post.variance_unchecked(x_star, &spec)?;
            }
        }
        Ok(PredictionSummary {
            mean,
            variance: with_variance.then_some(variance),
            weights,
            normalizer,
            uniform_fallback,
        })
    }

    /// Bytes held by kernel matrices, inputs, responses and centers:
    /// `8 * sum_i (n_i^2 + n_i*M + n_i + M)`.
    pub fn memory_footprint(&self) -> u64 {
        let m = self.dim() as u64;
        self.children.iter().map(|c| c.shard.footprint() + 8 * m).sum()
    }
}

/// `s_i / sum(s)`; falls back to uniform weights when the sum is zero or
/// not finite.
pub fn normalize_weights(similarities: &[f64]) -> (Vec<f64>, f64, bool) {
    let total: f64 = similarities.iter().sum();
    if total > 0.0 && total.is_finite() {
        (similarities.iter().map(|s| s / total).collect(), total, false)
    } else {
        let c = similarities.len() as f64;
        (vec![1.0 / c; similarities.len()], total, true)
    }
}

const SNAPSHOT_MAGIC: &str = "splitgp-snapshot";
const SNAPSHOT_VERSION: u32 = 1;

impl SplittingModel {
    /// Plain-text checkpoint of the full model state. Numbers are written
    /// in shortest round-trip form, so a restored model predicts
    /// bit-identically.
    pub fn to_snapshot(&self) -> String {
        use std::fmt::Write;
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let mut out = String::new();
        let c = &self.config;
        let _ = writeln!(out, "{SNAPSHOT_MAGIC} {SNAPSHOT_VERSION}");
        let _ = writeln!(out, "dim {}", self.dim());
        let _ = writeln!(out, "splitting_limit {}", c.splitting_limit);
        let _ = writeln!(out, "schedule {}", c.schedule);
        let _ = writeln!(out, "direction {}", c.direction);
        let _ = writeln!(out, "max_iters {}", c.optimizer.max_iters);
        let _ = writeln!(out, "grad_tol {}", c.optimizer.grad_tol);
        let _ = writeln!(out, "observations {}", self.observations);
        let _ = writeln!(out, "splits {}", self.splits);
        let s = &self.hyper.stats;
        let _ = writeln!(out, "stats {} {} {}", s.count, s.mean, s.m2);
        match &self.hyper.fixed {
            None => {
                let _ = writeln!(out, "spec default");
            }
            Some(spec) => {
                let p = spec.params();
                let _ = writeln!(out, "spec fixed");
                let _ = writeln!(out, "lengthscales {}", join(p.lengthscales()));
                let _ = writeln!(out, "signal_variance {}", p.signal_variance());
                let _ = writeln!(out, "noise_variance {}", p.noise_variance());
            }
        }
        let _ = writeln!(out, "children {}", self.children.len());
        for child in &self.children {
            let _ = writeln!(out, "child {}", child.len());
            let _ = writeln!(out, "center {}", join(&child.center));
            match &child.oja {
                Some(state) => match state.direction() {
                    Some(d) => {
                        let _ = writeln!(out, "oja {} {}", state.steps(), join(d));
                    }
                    None => {
                        let _ = writeln!(out, "oja empty");
                    }
                },
                None => {
                    let _ = writeln!(out, "oja none");
                }
            }
            for (row, y) in child.shard.x.rows().zip(&child.shard.y) {
                let _ = writeln!(out, "row {} {}", join(row), y);
            }
        }
        out
    }

    pub fn from_snapshot(text: &str) -> Result<Self> {
        let mut lines = SnapshotLines::new(text);
        let header = lines.fields("header")?;
        if header.first() != Some(&SNAPSHOT_MAGIC) || header.get(1) != Some(&"1") {
            return Err(lines.error("unsupported snapshot header"));
        }
        let dim: usize = lines.value("dim")?;
        let splitting_limit: usize = lines.value("splitting_limit")?;
        let schedule: TrainSchedule = lines.value("schedule")?;
        let direction: DirectionMethod = lines.value("direction")?;
        let max_iters: usize = lines.value("max_iters")?;
        let grad_tol: f64 = lines.value("grad_tol")?;
        let observations: usize = lines.value("observations")?;
        let splits: usize = lines.value("splits")?;
        let stats = {
            let f = lines.keyed("stats")?;
            if f.len() != 3 {
                return Err(lines.error("stats needs count, mean, m2"));
            }
            RunningStats {
                count: lines.parse(f[0])?,
                mean: lines.parse(f[1])?,
                m2: lines.parse(f[2])?,
            }
        };
        let spec = match lines.value::<String>("spec")?.as_str() {
            "default" => None,
            "fixed" => {
                let ls = lines.floats("lengthscales")?;
                let sf: f64 = lines.value("signal_variance")?;
                let sn: f64 = lines.value("noise_variance")?;
                Some(KernelSpec::rbf_ard(Hyperparameters::new(ls, sf, sn)?))
            }
            _ => return Err(lines.error("spec must be default or fixed")),
        };
        let config = SplittingConfig {
            splitting_limit,
            schedule,
            direction,
            optimizer: OptimizerSettings {
                max_iters,
                grad_tol,
                ..OptimizerSettings::default()
            },
        };
        let mut model = Self::build(dim, config, spec)?;
        model.hyper.stats = stats;
        model.observations = observations;
        model.splits = splits;
        let n_children: usize = lines.value("children")?;
        for _ in 0..n_children {
            let n: usize = lines.value("child")?;
            let center = lines.floats("center")?;
            if center.len() != dim {
                return Err(lines.error("center has wrong dimension"));
            }
            let oja_fields = lines.keyed("oja")?;
            let oja = match oja_fields.as_slice() {
                ["none"] => None,
                ["empty"] => Some(OjaState::new(dim)),
                [steps, rest @ ..] if rest.len() == dim => {
                    let steps: u64 = lines.parse(steps)?;
                    let d = rest.iter().map(|v| lines.parse(v)).collect::<Result<Vec<f64>>>()?;
                    Some(OjaState::restore(d, steps))
                }
                _ => return Err(lines.error("malformed oja line")),
            };
            let mut shard = Shard::new(dim);
            for _ in 0..n {
                let row = lines.floats("row")?;
                if row.len() != dim + 1 {
                    return Err(lines.error("row has wrong width"));
                }
                shard.push(&row[..dim], row[dim])?;
            }
            model.children.push(ChildModel { shard, center, oja });
        }
        let stored: usize = model.children.iter().map(ChildModel::len).sum();
        if stored != observations {
            return Err(contract(format!(
                "snapshot stores {stored} rows but records {observations} observations"
            )));
        }
        Ok(model)
    }
}

struct SnapshotLines<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> SnapshotLines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines().enumerate(),
            line: 0,
        }
    }

    fn error(&self, msg: &str) -> Error {
        Error::Parse {
            path: "<snapshot>".into(),
            line: self.line,
            message: msg.to_string(),
        }
    }

    fn fields(&mut self, what: &str) -> Result<Vec<&'a str>> {
        let (i, line) = self
            .lines
            .next()
            .ok_or_else(|| self.error(&format!("unexpected end of snapshot, expected {what}")))?;
        self.line = i + 1;
        Ok(line.split_whitespace().collect())
    }

    fn keyed(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let f = self.fields(key)?;
        if f.first() != Some(&key) {
            return Err(self.error(&format!("expected {key}")));
        }
        Ok(f[1..].to_vec())
    }

    fn parse<T: std::str::FromStr>(&self, v: &str) -> Result<T> {
        v.parse().map_err(|_| self.error(&format!("cannot parse {v:?}")))
    }

    fn value<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let f = self.keyed(key)?;
        if f.len() != 1 {
            return Err(self.error(&format!("{key} takes one value")));
        }
        self.parse(f[0])
    }

    fn floats(&mut self, key: &str) -> Result<Vec<f64>> {
        let f = self.keyed(key)?;
        f.iter().map(|v| self.parse(v)).collect()
    }
}
