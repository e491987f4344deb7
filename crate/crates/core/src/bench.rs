//! Experiment harness: seeded cross-validation or hold-out runs over any
//! [`OnlineRegressor`], metric records as CSV, grid search and replicate
//! summaries with t-intervals.
//!
//! Configs are flat `key=value` text. Every key can also be set from the
//! command line, where it overrides the file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::baselines::{FullGp, LocalGpWgen, OnlineRegressor, Rbcm};
use crate::data::{self, Dataset, InputScaler, ResponseColumn, SeedPlan, SeedPurpose, SplitSize};
use crate::error::{Error, Result};
use crate::gp::OptimizerSettings;
use crate::kv;
use crate::model::{SplittingConfig, SplittingModel};
use crate::partition::DirectionMethod;
use crate::training::TrainSchedule;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Splitting,
    FullGp,
    LocalGp,
    Rbcm,
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "splitting" => Ok(Self::Splitting),
            "fullgp" => Ok(Self::FullGp),
            "localgp" => Ok(Self::LocalGp),
            "rbcm" => Ok(Self::Rbcm),
            other => Err(Error::Config(format!(
                "unknown model {other:?} (expected splitting, fullgp, localgp or rbcm)"
            ))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Splitting => "splitting",
            Self::FullGp => "fullgp",
            Self::LocalGp => "localgp",
            Self::Rbcm => "rbcm",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSpec {
    /// `n` noisy samples of the synthetic surface, redrawn per replicate.
    Synthetic(usize),
    Csv(PathBuf),
}

impl FromStr for DatasetSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "synthetic" {
            return Ok(Self::Synthetic(2500));
        }
        if let Some(n) = s.strip_prefix("synthetic:") {
            return n
                .parse()
                .map(Self::Synthetic)
                .map_err(|_| Error::Config(format!("bad synthetic size {n:?}")));
        }
        if let Some(p) = s.strip_prefix("csv:") {
            return Ok(Self::Csv(PathBuf::from(p)));
        }
        Err(Error::Config(format!("dataset must be synthetic[:n] or csv:<path>, got {s:?}")))
    }
}

impl fmt::Display for DatasetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Synthetic(n) => write!(f, "synthetic:{n}"),
            Self::Csv(p) => write!(f, "csv:{}", p.display()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Protocol {
    KFold(usize),
    Holdout(SplitSize),
}

/// Training-set sizes at which models are evaluated: `start, start+step, ..`
/// up to `stop`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Sweep {
    pub start: usize,
    pub stop: usize,
    pub step: usize,
}

impl FromStr for Sweep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::Config(format!("sweep must be start:stop:step, got {s:?}"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let v: Vec<usize> = parts.iter().map(|p| p.parse().map_err(|_| bad())).collect::<Result<_>>()?;
        if v[0] == 0 || v[2] == 0 || v[0] > v[1] {
            return Err(bad());
        }
        Ok(Self {
            start: v[0],
            stop: v[1],
            step: v[2],
        })
    }
}

impl fmt::Display for Sweep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.stop, self.step)
    }
}

impl Sweep {
    pub fn points(&self) -> impl Iterator<Item = usize> + '_ {
        (self.start..=self.stop).step_by(self.step)
    }
}

/// Everything that determines a run. Together with the code version it
/// fixes every output column except the timings.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub models: Vec<ModelKind>,
    /// Splitting limit of the splitting model.
    pub m: usize,
    pub w_gen: f64,
    pub experts: usize,
    pub dataset: DatasetSpec,
    pub response: ResponseColumn,
    pub protocol: Protocol,
    /// 1 streams single observations; larger values ingest in batches.
    pub batch_size: usize,
    pub replicates: u32,
    pub seed: u64,
    pub schedule: TrainSchedule,
    pub sweep: Option<Sweep>,
    pub fit_iters: usize,
    /// Refit at each checkpoint if data arrived since the last fit.
    pub fit_before_eval: bool,
    pub direction: DirectionMethod,
    pub standardize: bool,
    pub dedup: bool,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            models: vec![ModelKind::Splitting, ModelKind::FullGp],
            m: 500,
            w_gen: 1e-3,
            experts: 10,
            dataset: DatasetSpec::Synthetic(2500),
            response: ResponseColumn::Last,
            protocol: Protocol::KFold(5),
            batch_size: 1,
            replicates: 10,
            seed: 0,
            schedule: TrainSchedule::SplitsAndBatches,
            sweep: None,
            fit_iters: OptimizerSettings::default().max_iters,
            fit_before_eval: true,
            direction: DirectionMethod::BatchSvd,
            standardize: false,
            dedup: false,
            out: None,
        }
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got {v:?}"))),
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

impl ExperimentConfig {
    /// Reads a `key=value` file on top of the defaults.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (k, v) in kv::parse_kv(text)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    /// Sets one key. Dashes and underscores are interchangeable.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let v = value.trim();
        match key.as_str() {
            "model" | "models" => {
                self.models = v.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect::<Result<_>>()?;
                if self.models.is_empty() {
                    return Err(Error::Config("no models selected".into()));
                }
            }
            "m" => self.m = parse_num(&key, v)?,
            "wgen" | "w_gen" => self.w_gen = parse_num(&key, v)?,
            "experts" => self.experts = parse_num(&key, v)?,
            "dataset" => self.dataset = v.parse()?,
            "response" => self.response = v.parse()?,
            "kfold" => self.protocol = Protocol::KFold(parse_num(&key, v)?),
            "split" => {
                self.protocol = Protocol::Holdout(match v.split_once('/') {
                    Some((a, b)) => SplitSize::Counts {
                        train: parse_num(&key, a)?,
                        test: parse_num(&key, b)?,
                    },
                    None => SplitSize::Fraction(parse_num(&key, v)?),
                })
            }
            "batch_size" => self.batch_size = parse_num(&key, v)?,
            "replicates" => self.replicates = parse_num(&key, v)?,
            "seed" => self.seed = parse_num(&key, v)?,
            "schedule" => self.schedule = v.parse()?,
            "sweep" => self.sweep = if v.is_empty() || v == "none" { None } else { Some(v.parse()?) },
            "fit_iters" => self.fit_iters = parse_num(&key, v)?,
            "fit_before_eval" => self.fit_before_eval = parse_bool(&key, v)?,
            "direction" => self.direction = v.parse()?,
            "standardize" => self.standardize = parse_bool(&key, v)?,
            "dedup" => self.dedup = parse_bool(&key, v)?,
            "out" => self.out = if v.is_empty() { None } else { Some(PathBuf::from(v)) },
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.models.is_empty() {
            return bad("no models selected".into());
        }
        if self.m < 2 {
            return bad(format!("m must be at least 2, got {}", self.m));
        }
        if !(self.w_gen > 0.0 && self.w_gen <= 1.0) {
            return bad(format!("wgen must lie in (0, 1], got {}", self.w_gen));
        }
        if self.experts == 0 {
            return bad("experts must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if let Protocol::KFold(k) = self.protocol {
            if k < 2 {
                return bad(format!("kfold must be at least 2, got {k}"));
            }
        }
        Ok(())
    }

    /// The config as `key=value` text accepted by [`apply_text`](Self::apply_text).
    pub fn to_text(&self) -> String {
        let models: Vec<String> = self.models.iter().map(ToString::to_string).collect();
        let response = match &self.response {
            ResponseColumn::Last => "last".to_string(),
            ResponseColumn::Index(i) => i.to_string(),
            ResponseColumn::Name(n) => n.clone(),
        };
        let protocol = match self.protocol {
            Protocol::KFold(k) => format!("kfold={k}"),
            Protocol::Holdout(SplitSize::Fraction(f)) => format!("split={f}"),
            Protocol::Holdout(SplitSize::Counts { train, test }) => format!("split={train}/{test}"),
        };
        let mut lines = vec![
            format!("models={}", models.join(",")),
            format!("m={}", self.m),
            format!("wgen={}", self.w_gen),
            format!("experts={}", self.experts),
            format!("dataset={}", self.dataset),
            format!("response={response}"),
            protocol,
            format!("batch_size={}", self.batch_size),
            format!("replicates={}", self.replicates),
            format!("seed={}", self.seed),
            format!("schedule={}", self.schedule),
            format!("sweep={}", self.sweep.map_or("none".to_string(), |s| s.to_string())),
            format!("fit_iters={}", self.fit_iters),
            format!("fit_before_eval={}", self.fit_before_eval),
            format!("direction={}", self.direction),
            format!("standardize={}", self.standardize),
            format!("dedup={}", self.dedup),
        ];
        if let Some(out) = &self.out {
            lines.push(format!("out={}", out.display()));
        }
        lines.join("\n") + "\n"
    }

    fn optimizer(&self) -> OptimizerSettings {
        OptimizerSettings {
            max_iters: self.fit_iters,
            ..OptimizerSettings::default()
        }
    }

    /// Label of the parameter that distinguishes `kind` runs.
    pub fn param_label(&self, kind: ModelKind) -> String {
        match kind {
            ModelKind::Splitting => format!("m={}", self.m),
            ModelKind::FullGp => "-".to_string(),
            ModelKind::LocalGp => format!("wgen={}", self.w_gen),
            ModelKind::Rbcm => format!("experts={}", self.experts),
        }
    }

    /// Fresh model of the given kind; `replicate` selects the rBCM
    /// assignment stream.
    pub fn build_model(&self, kind: ModelKind, dim: usize, replicate: u32) -> Result<Box<dyn OnlineRegressor>> {
        let opt = self.optimizer();
        Ok(match kind {
            ModelKind::Splitting => {
                let cfg = SplittingConfig::new(self.m)
                    .schedule(self.schedule)
                    .direction(self.direction)
                    .optimizer(opt);
                Box::new(SplittingModel::new(dim, cfg)?)
            }
            ModelKind::FullGp => Box::new(FullGp::new(dim, self.schedule, opt)?),
            ModelKind::LocalGp => Box::new(LocalGpWgen::new(dim, self.w_gen, self.schedule, opt)?),
            ModelKind::Rbcm => {
                let seed = SeedPlan::new(self.seed).seed(SeedPurpose::Assignment, replicate);
                Box::new(Rbcm::new(dim, self.experts, seed, self.schedule, opt)?)
            }
        })
    }
}

/// One evaluation of one model at one checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRecord {
    pub model: String,
    pub param: String,
    pub replicate: u32,
    pub fold: u32,
    /// Observations ingested.
    pub n: usize,
    pub mse: f64,
    pub rmse: f64,
    pub memory_kb: f64,
    pub local_models: usize,
    /// Hash of the training order and test membership of this fold.
    pub stream_hash: String,
    /// `ok`, or `error: <message>` when the model failed numerically.
    pub status: String,
    /// Cumulative wall time spent in ingestion and fitting.
    pub train_time_s: f64,
    pub predict_time_s: f64,
}

impl MetricRecord {
    pub const COLUMNS: [&'static str; 13] = [
        "model",
        "param",
        "replicate",
        "fold",
        "n",
        "mse",
        "rmse",
        "memory_kb",
        "local_models",
        "stream_hash",
        "status",
        "train_time_s",
        "predict_time_s",
    ];
    /// Columns that are reproducible under a fixed config and seed.
    pub const DETERMINISTIC_COLUMNS: usize = 11;

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    fn to_row(&self) -> Vec<String> {
        vec![
            self.model.clone(),
            self.param.clone(),
            self.replicate.to_string(),
            self.fold.to_string(),
            self.n.to_string(),
            self.mse.to_string(),
            self.rmse.to_string(),
            self.memory_kb.to_string(),
            self.local_models.to_string(),
            self.stream_hash.clone(),
            self.status.clone(),
            self.train_time_s.to_string(),
            self.predict_time_s.to_string(),
        ]
    }

    fn from_row(row: &csv::StringRecord, line: usize, path: &Path) -> Result<Self> {
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        if row.len() != Self::COLUMNS.len() {
            return Err(err(format!("expected {} columns, found {}", Self::COLUMNS.len(), row.len())));
        }
        fn num<T: FromStr>(row: &csv::StringRecord, i: usize) -> std::result::Result<T, String> {
            row[i].parse().map_err(|_| format!("{}: cannot parse {:?}", MetricRecord::COLUMNS[i], &row[i]))
        }
        (|| -> std::result::Result<Self, String> {
            Ok(Self {
                model: row[0].to_string(),
                param: row[1].to_string(),
                replicate: num(row, 2)?,
                fold: num(row, 3)?,
                n: num(row, 4)?,
                mse: num(row, 5)?,
                rmse: num(row, 6)?,
                memory_kb: num(row, 7)?,
                local_models: num(row, 8)?,
                stream_hash: row[9].to_string(),
                status: row[10].to_string(),
                train_time_s: num(row, 11)?,
                predict_time_s: num(row, 12)?,
            })
        })()
        .map_err(err)
    }
}

// FNV-1a over the index sequence; stable across platforms and builds.
fn stream_hash(train: &[usize], test: &[usize]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &i in train.iter().chain([&usize::MAX]).chain(test) {
        for b in (i as u64).to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    format!("{h:016x}")
}

/// Data of one replicate and its (train, test) index pairs.
fn replicate_data(cfg: &ExperimentConfig, seeds: &SeedPlan, replicate: u32, loaded: Option<&Dataset>) -> Result<(Dataset, Vec<data::Fold>)> {
    let ds = match (&cfg.dataset, loaded) {
        (DatasetSpec::Synthetic(n), _) => data::synth_dataset(*n, seeds, replicate)?,
        (DatasetSpec::Csv(_), Some(ds)) => ds.clone(),
        (DatasetSpec::Csv(p), None) => return Err(Error::Config(format!("dataset {} not loaded", p.display()))),
    };
    let ds = if cfg.dedup { data::dedup_exact(&ds) } else { ds };
    let mut rng = seeds.rng(SeedPurpose::Folds, replicate);
    let folds = match cfg.protocol {
        Protocol::KFold(k) => data::kfold_indices(ds.len(), k, &mut rng)?,
        Protocol::Holdout(size) => vec![data::train_test_indices(ds.len(), size, &mut rng)?],
    };
    Ok((ds, folds))
}

fn checkpoints(cfg: &ExperimentConfig, n_train: usize) -> Result<Vec<usize>> {
    let points: Vec<usize> = match cfg.sweep {
        None => vec![n_train],
        Some(s) => s.points().filter(|&p| p <= n_train).collect(),
    };
    if points.is_empty() || n_train == 0 {
        return Err(Error::Config(format!("no checkpoint fits a training set of {n_train} rows")));
    }
    Ok(points)
}

/// Runs every replicate, fold, model and checkpoint in a fixed order,
/// passing each record to `sink` as soon as it exists.
///
/// Within a replicate every model sees the same data, folds and ingestion
/// order. A model that fails numerically gets an error record at the
/// failing checkpoint and is skipped for the rest of that fold.
pub fn run_experiment_with(cfg: &ExperimentConfig, mut sink: impl FnMut(&MetricRecord) -> Result<()>) -> Result<()> {
    cfg.validate()?;
    let seeds = SeedPlan::new(cfg.seed);
    let loaded = match &cfg.dataset {
        DatasetSpec::Csv(p) => Some(data::load_csv(p, &cfg.response)?),
        DatasetSpec::Synthetic(_) => None,
    };
    for replicate in 0..cfg.replicates {
        let (ds, folds) = replicate_data(cfg, &seeds, replicate, loaded.as_ref())?;
        for (fold_index, fold) in folds.iter().enumerate() {
            let mut train = ds.select(&fold.train);
            let mut test = ds.select(&fold.test);
            if cfg.standardize {
                let scaler = InputScaler::fit(&train.x);
                train.x = scaler.transform(&train.x);
                test.x = scaler.transform(&test.x);
            }
            let train = train.centered();
            let test_y = test.original_y();
            let hash = stream_hash(&fold.train, &fold.test);
            let marks = checkpoints(cfg, train.len())?;
            for &kind in &cfg.models {
                let base = MetricRecord {
                    model: kind.to_string(),
                    param: cfg.param_label(kind),
                    replicate,
                    fold: fold_index as u32,
                    n: 0,
                    mse: f64::NAN,
                    rmse: f64::NAN,
                    memory_kb: 0.0,
                    local_models: 0,
                    stream_hash: hash.clone(),
                    status: "ok".into(),
                    train_time_s: 0.0,
                    predict_time_s: 0.0,
                };
                let mut model = cfg.build_model(kind, train.dim(), replicate)?;
                evaluate_model(cfg, model.as_mut(), &train, &test, &test_y, &marks, &base, &mut sink)?;
            }
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn evaluate_model(
    cfg: &ExperimentConfig,
    model: &mut dyn OnlineRegressor,
    train: &Dataset,
    test: &Dataset,
    test_y: &[f64],
    marks: &[usize],
    base: &MetricRecord,
    sink: &mut impl FnMut(&MetricRecord) -> Result<()>,
) -> Result<()> {
    let mut ingested = 0;
    let mut train_time = 0.0;
    let mut needs_fit = false;
    for &mark in marks {
        let mut record = MetricRecord { n: mark, ..base.clone() };
        let started = Instant::now();
        let trained = (|| -> Result<()> {
            while ingested < mark {
                let end = (ingested + cfg.batch_size).min(mark);
                if cfg.batch_size == 1 {
                    model.ingest(train.x.row(ingested), train.y[ingested])?;
                    needs_fit = cfg.schedule != TrainSchedule::EveryUpdate;
                } else {
                    let idx: Vec<usize> = (ingested..end).collect();
                    model.ingest_batch(&train.x.select(&idx), &idx.iter().map(|&i| train.y[i]).collect::<Vec<_>>())?;
                    needs_fit = cfg.schedule == TrainSchedule::Manual;
                }
                ingested = end;
            }
            if cfg.fit_before_eval && needs_fit {
                model.fit()?;
                needs_fit = false;
            }
            Ok(())
        })();
        train_time += started.elapsed().as_secs_f64();
        record.train_time_s = train_time;
        record.memory_kb = model.footprint() as f64 / 1024.0;
        record.local_models = model.n_models();
        if let Err(e) = trained {
            record.status = format!("error: {e}");
            sink(&record)?;
            return Ok(());
        }

        let started = Instant::now();
        let mut sq = 0.0;
        let mut failure = None;
        for (row, y) in test.x.rows().zip(test_y) {
            match model.predict_mean(row) {
                Ok(p) => sq += (p + train.y_center - y).powi(2),
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            }
        }
        record.predict_time_s = started.elapsed().as_secs_f64();
        match failure {
            None if !test_y.is_empty() => {
                record.mse = sq / test_y.len() as f64;
                record.rmse = record.mse.sqrt();
            }
            None => {}
            Some(e) => {
                record.status = format!("error: {e}");
                sink(&record)?;
                return Ok(());
            }
        }
        sink(&record)?;
    }
    Ok(())
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<MetricRecord>> {
    let mut out = Vec::new();
    run_experiment_with(cfg, |r| {
        out.push(r.clone());
        Ok(())
    })?;
    Ok(out)
}

/// Writes records with a header row to any writer.
pub fn write_records<W: std::io::Write>(records: &[MetricRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(MetricRecord::COLUMNS)?;
    for r in records {
        w.write_record(r.to_row())?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(records: &[MetricRecord], path: impl AsRef<Path>) -> Result<()> {
    write_records(records, std::fs::File::create(path)?)
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<MetricRecord>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    if header.iter().ne(MetricRecord::COLUMNS) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "unexpected header".into(),
        });
    }
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        out.push(MetricRecord::from_row(&row, line, path)?);
    }
    Ok(out)
}

/// Values tried for one config key.
#[derive(Clone, Debug, PartialEq)]
pub struct GridAxis {
    pub key: String,
    pub values: Vec<String>,
}

impl FromStr for GridAxis {
    type Err = Error;

    /// `key=v1,v2,...`
    fn from_str(s: &str) -> Result<Self> {
        let (key, values) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("grid axis must be key=v1,v2,..., got {s:?}")))?;
        let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
        if values.is_empty() {
            return Err(Error::Config(format!("grid axis {key:?} has no values")));
        }
        Ok(Self {
            key: key.trim().to_string(),
            values,
        })
    }
}

/// Mean MSE of one (model, parameter) at the largest checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct GridPoint {
    pub model: String,
    pub param: String,
    pub mean_mse: f64,
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSummary {
    pub points: Vec<GridPoint>,
    /// Lowest mean MSE per model.
    pub best: Vec<GridPoint>,
    /// `(w_gen, mean MSE)` for the local GP, ascending in `w_gen`.
    pub wgen_trend: Vec<(f64, f64)>,
    /// Mean MSE never decreases as `w_gen` grows.
    pub wgen_monotone: Option<bool>,
}

impl fmt::Display for GridSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "model,param,mean_mse,failures")?;
        for p in &self.points {
            writeln!(f, "{},{},{},{}", p.model, p.param, p.mean_mse, p.failures)?;
        }
        for b in &self.best {
            writeln!(f, "# best {}: {} (mean mse {})", b.model, b.param, b.mean_mse)?;
        }
        if let Some(m) = self.wgen_monotone {
            let trend: Vec<String> = self.wgen_trend.iter().map(|(w, e)| format!("{w}:{e}")).collect();
            writeln!(f, "# wgen trend {} ({})", if m { "monotone" } else { "not monotone" }, trend.join(" "))?;
        }
        Ok(())
    }
}

/// Every config in the Cartesian product of the axes, first axis slowest.
pub fn grid_configs(template: &ExperimentConfig, grid: &[GridAxis]) -> Result<Vec<ExperimentConfig>> {
    if grid.is_empty() {
        return Err(Error::Config("grid search needs at least one axis".into()));
    }
    let mut configs = vec![template.clone()];
    for axis in grid {
        let mut next = Vec::with_capacity(configs.len() * axis.values.len());
        for cfg in &configs {
            for v in &axis.values {
                let mut c = cfg.clone();
                c.set(&axis.key, v)?;
                next.push(c);
            }
        }
        configs = next;
    }
    Ok(configs)
}

/// Runs the template at every grid point and summarizes MSE at the largest
/// checkpoint. Records with the same model and parameter from different
/// grid points (for example the full GP under an `m` grid) are pooled.
pub fn grid_search(template: &ExperimentConfig, grid: &[GridAxis]) -> Result<(Vec<MetricRecord>, GridSummary)> {
    let mut records = Vec::new();
    for cfg in grid_configs(template, grid)? {
        records.extend(run_experiment(&cfg)?);
    }
    let summary = summarize_grid(&records);
    Ok((records, summary))
}

pub fn summarize_grid(records: &[MetricRecord]) -> GridSummary {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in records {
        let k = (r.model.clone(), r.param.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let points: Vec<GridPoint> = keys
        .into_iter()
        .map(|(model, param)| {
            let group: Vec<&MetricRecord> = records.iter().filter(|r| r.model == model && r.param == param).collect();
            let last = group.iter().map(|r| r.n).max().unwrap_or(0);
            let at_last: Vec<&&MetricRecord> = group.iter().filter(|r| r.n == last).collect();
            let ok: Vec<f64> = at_last.iter().filter(|r| r.is_ok()).map(|r| r.mse).collect();
            let failures = group.iter().filter(|r| !r.is_ok()).count();
            let mean_mse = if ok.is_empty() { f64::NAN } else { ok.iter().sum::<f64>() / ok.len() as f64 };
            GridPoint {
                model,
                param,
                mean_mse,
                failures,
            }
        })
        .collect();

    let mut best: Vec<GridPoint> = Vec::new();
    for p in points.iter().filter(|p| p.mean_mse.is_finite()) {
        match best.iter_mut().find(|b| b.model == p.model) {
            Some(b) if p.mean_mse < b.mean_mse => *b = p.clone(),
            Some(_) => {}
            None => best.push(p.clone()),
        }
    }

    let mut wgen_trend: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.model == "localgp")
        .filter_map(|p| p.param.strip_prefix("wgen=")?.parse().ok().map(|w| (w, p.mean_mse)))
        .collect();
    wgen_trend.sort_by(|a, b| a.0.total_cmp(&b.0));
    let wgen_monotone = (wgen_trend.len() >= 2).then(|| wgen_trend.windows(2).all(|w| w[0].1 <= w[1].1));
    GridSummary {
        points,
        best,
        wgen_trend,
        wgen_monotone,
    }
}

/// Mean and 95% t-interval of one metric at one checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub model: String,
    pub param: String,
    pub metric: String,
    pub x: usize,
    pub mean: f64,
    /// Absent with a single replicate.
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub replicates: usize,
}

pub const SUMMARY_METRICS: [&str; 5] = ["mse", "rmse", "memory_kb", "train_time_s", "predict_time_s"];

fn metric(r: &MetricRecord, name: &str) -> f64 {
    match name {
        "mse" => r.mse,
        "rmse" => r.rmse,
        "memory_kb" => r.memory_kb,
        "train_time_s" => r.train_time_s,
        "predict_time_s" => r.predict_time_s,
        _ => unreachable!("unknown metric {name}"),
    }
}

/// Two-sided 97.5% quantile of Student's t with `df` degrees of freedom.
pub fn t_quantile_975(df: usize) -> f64 {
    StudentsT::new(0.0, 1.0, df as f64).expect("df > 0").inverse_cdf(0.975)
}

/// Mean and 95% interval of `values`; the interval needs two or more.
pub fn mean_interval(values: &[f64]) -> (f64, Option<(f64, f64)>) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let half = t_quantile_975(n - 1) * (var / n as f64).sqrt();
    (mean, Some((mean - half, mean + half)))
}

/// Per (model, parameter, checkpoint): folds are averaged within each
/// replicate, then replicates give the mean and a t-interval. Failed
/// records are left out.
pub fn summarize(records: &[MetricRecord]) -> Vec<SummaryRow> {
    use std::collections::BTreeMap;
    type Key = (String, String, usize);
    let mut groups: BTreeMap<Key, BTreeMap<u32, Vec<&MetricRecord>>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_ok()) {
        groups
            .entry((r.model.clone(), r.param.clone(), r.n))
            .or_default()
            .entry(r.replicate)
            .or_default()
            .push(r);
    }
    let mut rows = Vec::new();
    for ((model, param, x), reps) in &groups {
        for name in SUMMARY_METRICS {
            let per_rep: Vec<f64> = reps
                .values()
                .map(|rs| rs.iter().map(|r| metric(r, name)).sum::<f64>() / rs.len() as f64)
                .collect();
            let (mean, ci) = mean_interval(&per_rep);
            rows.push(SummaryRow {
                model: model.clone(),
                param: param.clone(),
                metric: name.to_string(),
                x: *x,
                mean,
                lo: ci.map(|c| c.0),
                hi: ci.map(|c| c.1),
                replicates: per_rep.len(),
            });
        }
    }
    rows
}

pub fn write_summary<W: std::io::Write>(rows: &[SummaryRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["model", "param", "metric", "x", "mean", "lo", "hi", "replicates"])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    for r in rows {
        w.write_record([
            r.model.clone(),
            r.param.clone(),
            r.metric.clone(),
            r.x.to_string(),
            r.mean.to_string(),
            opt(r.lo),
            opt(r.hi),
            r.replicates.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
