//! Streaming Gaussian-process regression by recursive splitting.
//!
//! A [`SplittingModel`] keeps a set of local GPs. Each new observation goes
//! to the most similar local model; a local model that grows past the
//! splitting limit is bisected along its principal direction. Predictions
//! average all local posteriors with kernel weights relative to each local
//! model's center, so the predictive mean stays continuous in the input.
//!
//! Baselines with the same streaming interface live in [`baselines`], data
//! utilities in [`data`], and the experiment driver in [`bench`].

pub mod baselines;
pub mod bench;
pub mod data;
pub mod error;
pub mod gp;
pub mod kernel;
pub mod kv;
pub mod model;
pub mod partition;
pub mod points;
pub mod training;

pub use baselines::{FullGp, LocalGpWgen, OnlineRegressor, Prediction, Rbcm};
pub use error::{Error, Result};
pub use gp::{fit, FitReport, GpPosterior, OptimizerSettings};
pub use kernel::{Hyperparameters, KernelFamily, KernelSpec};
pub use model::{ChildModel, PredictionSummary, SplittingConfig, SplittingModel, UpdateOutcome};
pub use partition::{DirectionMethod, OjaState, PrincipalDirectionEstimator};
pub use points::Points;
pub use training::{default_hyperparameters, TrainSchedule};

pub use faer;
