//! Exact inference for a single zero-mean GP: posterior mean and variance,
//! log marginal likelihood and its gradient, and hyperparameter fitting by
//! gradient ascent on the summed log marginal likelihood of several shards.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use faer::linalg::solvers::{DenseSolveCore, Llt, Solve};
use faer::linalg::triangular_solve::solve_lower_triangular_in_place;
use faer::{Mat, Par, Side};

use crate::error::{contract, Error, Result};
use crate::kernel::{Hyperparameters, KernelSpec};
use crate::points::Points;

/// Diagonal floors tried, in order, when the noisy kernel matrix fails to
/// factor. A floor only applies when it exceeds the noise variance.
pub const JITTER_LADDER: [f64; 3] = [1e-8, 1e-7, 1e-6];

/// Round-off tolerated below zero before a posterior variance is an error.
pub const VARIANCE_TOLERANCE: f64 = 1e-10;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// A GP conditioned on `(X, Y)`, with the Cholesky factor of `K + noise*I`
/// and `alpha = (K + noise*I)^-1 Y` cached.
#[derive(Clone, Debug)]
pub struct GpPosterior {
    inputs: Points,
    targets: Vec<f64>,
    params: Hyperparameters,
    llt: Option<Llt<f64>>,
    alpha: Vec<f64>,
    diagonal: f64,
}

impl GpPosterior {
    pub fn new(inputs: Points, targets: Vec<f64>, spec: &KernelSpec) -> Result<Self> {
        spec.check_points(&inputs)?;
        if inputs.len() != targets.len() {
            return Err(contract(format!(
                "{} input rows but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(contract("targets contain non-finite values"));
        }
        let params = spec.params().clone();
        if inputs.is_empty() {
            return Ok(Self {
                inputs,
                targets,
                diagonal: params.noise_variance(),
                params,
                llt: None,
                alpha: Vec::new(),
            });
        }
        let (llt, diagonal) = factorize(spec, &inputs)?;
        let n = targets.len();
        let rhs = Mat::from_fn(n, 1, |i, _| targets[i]);
        let sol = llt.solve(&rhs);
        let alpha = (0..n).map(|i| sol[(i, 0)]).collect();
        Ok(Self {
            inputs,
            targets,
            params,
            llt: Some(llt),
            alpha,
            diagonal,
        })
    }

    pub fn empty(spec: &KernelSpec) -> Self {
        Self {
            inputs: Points::new(spec.dim()),
            targets: Vec::new(),
            params: spec.params().clone(),
            llt: None,
            alpha: Vec::new(),
            diagonal: spec.params().noise_variance(),
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn inputs(&self) -> &Points {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Lower Cholesky factor of `K + diagonal*I`; `None` for an empty posterior.
    pub fn factor(&self) -> Option<faer::MatRef<'_, f64>> {
        self.llt.as_ref().map(|l| l.L())
    }

    /// Value actually added to the kernel diagonal: the noise variance, or a
    /// jitter floor if the noisy matrix was numerically singular.
    pub fn diagonal(&self) -> f64 {
        self.diagonal
    }

    /// Whether the caches were built with these hyperparameters.
    pub fn is_current(&self, spec: &KernelSpec) -> bool {
        spec.params() == &self.params
    }

    fn check_current(&self, spec: &KernelSpec) -> Result<()> {
        if self.is_current(spec) {
            Ok(())
        } else {
            Err(Error::StaleCache)
        }
    }

    pub fn mean(&self, x_star: &[f64], spec: &KernelSpec) -> Result<f64> {
        spec.check_point(x_star)?;
        self.check_current(spec)?;
        Ok(self.mean_unchecked(x_star, spec))
    }

    pub(crate) fn mean_unchecked(&self, x_star: &[f64], spec: &KernelSpec) -> f64 {
        self.inputs
            .rows()
            .zip(&self.alpha)
            .map(|(row, a)| spec.eval_unchecked(x_star, row) * a)
            .sum()
    }

    pub fn variance(&self, x_star: &[f64], spec: &KernelSpec) -> Result<f64> {
        spec.check_point(x_star)?;
        self.check_current(spec)?;
        self.variance_unchecked(x_star, spec)
    }

    pub(crate) fn variance_unchecked(&self, x_star: &[f64], spec: &KernelSpec) -> Result<f64> {
        let prior = spec.params().signal_variance();
        let Some(llt) = &self.llt else {
            return Ok(prior);
        };
        let k = spec.cross(x_star, &self.inputs);
        let mut v = Mat::from_fn(k.len(), 1, |i, _| k[i]);
        solve_lower_triangular_in_place(llt.L(), v.as_mut(), Par::Seq);
        let explained: f64 = (0..k.len()).map(|i| v[(i, 0)] * v[(i, 0)]).sum();
        let var = prior - explained;
        if var < -VARIANCE_TOLERANCE {
            return Err(Error::Numerical(format!(
                "posterior variance {var:e} is negative beyond round-off"
            )));
        }
        Ok(var.max(0.0))
    }

    /// `log p(Y | X)` under the cached hyperparameters.
    pub fn log_marginal_likelihood(&self, spec: &KernelSpec) -> Result<f64> {
        self.check_current(spec)?;
        let llt = self
            .llt
            .as_ref()
            .ok_or_else(|| contract("log marginal likelihood needs at least one observation"))?;
        Ok(lml_from_parts(llt, &self.targets, &self.alpha))
    }

    /// Gradient of the log marginal likelihood with respect to the log-domain
    /// parameters, in [`Hyperparameters::to_log`] order.
    pub fn lml_gradient(&self, spec: &KernelSpec) -> Result<Vec<f64>> {
        self.check_current(spec)?;
        let llt = self
            .llt
            .as_ref()
            .ok_or_else(|| contract("log marginal likelihood needs at least one observation"))?;
        Ok(lml_gradient_from_parts(spec, &self.inputs, llt, &self.alpha))
    }
}

fn factorize(spec: &KernelSpec, x: &Points) -> Result<(Llt<f64>, f64)> {
    let noise = spec.params().noise_variance();
    let mut k = spec.gram_with_diagonal(x, noise);
    if let Ok(llt) = Llt::new(k.as_ref(), Side::Lower) {
        return Ok((llt, noise));
    }
    let mut current = noise;
    for floor in JITTER_LADDER {
        if floor <= current {
            continue;
        }
        for i in 0..x.len() {
            k[(i, i)] += floor - current;
        }
        current = floor;
        if let Ok(llt) = Llt::new(k.as_ref(), Side::Lower) {
            log::debug!("kernel matrix needed diagonal jitter {floor:e}");
            return Ok((llt, floor));
        }
    }
    Err(Error::Numerical(format!(
        "kernel matrix of size {} is not positive definite after jitter",
        x.len()
    )))
}

fn lml_from_parts(llt: &Llt<f64>, y: &[f64], alpha: &[f64]) -> f64 {
    let l = llt.L();
    let n = y.len();
    let fit: f64 = y.iter().zip(alpha).map(|(a, b)| a * b).sum();
    let log_det_half: f64 = (0..n).map(|i| l[(i, i)].ln()).sum();
    -0.5 * fit - log_det_half - 0.5 * n as f64 * LN_2PI
}

// 0.5 * tr((alpha alpha^T - K^-1) dK/dtheta), accumulated over the lower
// triangle in one pass instead of materializing every dK.
fn lml_gradient_from_parts(spec: &KernelSpec, x: &Points, llt: &Llt<f64>, alpha: &[f64]) -> Vec<f64> {
    let k_inv = llt.inverse();
    let params = spec.params();
    let m = spec.dim();
    let inv_l2: Vec<f64> = params.lengthscales().iter().map(|l| 1.0 / (l * l)).collect();
    let mut grad = vec![0.0; m + 2];
    let n = x.len();
    for i in 0..n {
        let xi = x.row(i);
        let wii = alpha[i] * alpha[i] - k_inv[(i, i)];
        grad[m] += 0.5 * wii * params.signal_variance();
        grad[m + 1] += 0.5 * wii * params.noise_variance();
        for j in 0..i {
            let xj = x.row(j);
            // off-diagonal pairs appear twice in the trace; (j, i) keeps the
            // column-major walk contiguous
            let w = alpha[i] * alpha[j] - k_inv[(j, i)];
            let kij = spec.eval_unchecked(xi, xj);
            let wk = w * kij;
            for d in 0..m {
                let r = xi[d] - xj[d];
                grad[d] += wk * r * r * inv_l2[d];
            }
            grad[m] += wk;
        }
    }
    grad
}

/// Log marginal likelihood and its gradient for one shard.
pub fn lml_and_gradient(x: &Points, y: &[f64], spec: &KernelSpec) -> Result<(f64, Vec<f64>)> {
    let post = GpPosterior::new(x.clone(), y.to_vec(), spec)?;
    let llt = post
        .llt
        .as_ref()
        .ok_or_else(|| contract("log marginal likelihood needs at least one observation"))?;
    Ok((
        lml_from_parts(llt, &post.targets, &post.alpha),
        lml_gradient_from_parts(spec, &post.inputs, llt, &post.alpha),
    ))
}

/// Settings for [`fit`].
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerSettings {
    /// Accepted-step budget. Zero returns the input unchanged.
    pub max_iters: usize,
    /// Stop once every gradient component is below this in magnitude.
    pub grad_tol: f64,
    /// Largest change of any log-parameter in a single step.
    pub max_log_step: f64,
    /// Sufficient-increase constant for the backtracking line search.
    pub armijo: f64,
    pub max_backtracks: usize,
    /// Log-parameters are kept inside `[-bound, bound]`.
    pub log_bound: f64,
    pub time_limit: Option<Duration>,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            max_iters: 50,
            grad_tol: 1e-5,
            max_log_step: 1.0,
            armijo: 1e-4,
            max_backtracks: 30,
            log_bound: 25.0,
            time_limit: None,
        }
    }
}

/// Outcome of [`fit`].
#[derive(Clone, Debug)]
pub struct FitReport {
    pub spec: KernelSpec,
    pub objective: f64,
    pub initial_objective: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Set when an inner factorization failed and the last feasible
    /// parameters were returned early.
    pub warning: Option<String>,
}

/// Summed log marginal likelihood (and gradient) of independent shards that
/// share one set of hyperparameters. Empty shards contribute nothing.
pub fn summed_lml_and_gradient(
    shards: &[(&Points, &[f64])],
    spec: &KernelSpec,
) -> Result<(f64, Vec<f64>)> {
    let posts = shard_posteriors(shards, spec)?;
    Ok((summed_lml(&posts), summed_gradient(&posts, spec)))
}

fn shard_posteriors(shards: &[(&Points, &[f64])], spec: &KernelSpec) -> Result<Vec<GpPosterior>> {
    shards
        .iter()
        .filter(|(x, _)| !x.is_empty())
        .map(|(x, y)| GpPosterior::new((*x).clone(), y.to_vec(), spec))
        .collect()
}

fn summed_lml(posts: &[GpPosterior]) -> f64 {
    posts
        .iter()
        .filter_map(|p| p.llt.as_ref().map(|llt| lml_from_parts(llt, &p.targets, &p.alpha)))
        .sum()
}

fn summed_gradient(posts: &[GpPosterior], spec: &KernelSpec) -> Vec<f64> {
    let mut grad = vec![0.0; spec.params().n_params()];
    for p in posts {
        if let Some(llt) = &p.llt {
            let g = lml_gradient_from_parts(spec, &p.inputs, llt, &p.alpha);
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
    }
    grad
}

/// Maximizes the summed log marginal likelihood over shards in the log
/// domain.
///
/// Directions come from a limited-memory BFGS model, steps are capped by
/// `max_log_step` and halved until the sufficient-increase condition
/// holds, so the objective never decreases. Parameters whose log value is
/// `-inf` (zero noise) stay fixed.
pub fn fit(
    shards: &[(&Points, &[f64])],
    spec: &KernelSpec,
    settings: &OptimizerSettings,
) -> Result<FitReport> {
    if !shards.iter().any(|(x, _)| !x.is_empty()) {
        return Err(contract("fit needs at least one non-empty shard"));
    }
    let started = Instant::now();
    let (f0, g0) = summed_lml_and_gradient(shards, spec)?;
    let mut report = FitReport {
        spec: spec.clone(),
        objective: f0,
        initial_objective: f0,
        gradient: g0,
        iterations: 0,
        converged: false,
        warning: None,
    };
    let mut theta = spec.log_params();
    let active: Vec<bool> = theta.iter().map(|t| t.is_finite()).collect();
    mask(&mut report.gradient, &active);
    let mut memory: VecDeque<CurvaturePair> = VecDeque::with_capacity(LBFGS_MEMORY);

    while report.iterations < settings.max_iters {
        let g = &report.gradient;
        let g_inf = inf_norm(g);
        if g_inf < settings.grad_tol {
            report.converged = true;
            break;
        }
        if settings.time_limit.is_some_and(|limit| started.elapsed() >= limit) {
            break;
        }
        let mut direction = lbfgs_direction(g, &memory);
        if dot(&direction, g) <= 0.0 {
            memory.clear();
            direction = g.clone();
        }
        let mut step = (settings.max_log_step / inf_norm(&direction)).min(if memory.is_empty() { f64::INFINITY } else { 1.0 });

        let mut accepted = None;
        for _ in 0..=settings.max_backtracks {
            let trial: Vec<f64> = theta
                .iter()
                .zip(&direction)
                .zip(&active)
                .map(|((t, di), &a)| {
                    if a {
                        (t + step * di).clamp(-settings.log_bound, settings.log_bound)
                    } else {
                        *t
                    }
                })
                .collect();
            let predicted: f64 = trial
                .iter()
                .zip(&theta)
                .zip(g)
                .zip(&active)
                .filter(|(_, &a)| a)
                .map(|(((t, t0), gi), _)| (t - t0) * gi)
                .sum();
            if predicted <= 0.0 {
                // pinned against the bounds
                break;
            }
            let trial_spec = spec.with_log_params(&trial)?;
            match shard_posteriors(shards, &trial_spec) {
                Ok(posts) => {
                    let f = summed_lml(&posts);
                    if f.is_finite() && f >= report.objective + settings.armijo * predicted {
                        let mut gt = summed_gradient(&posts, &trial_spec);
                        mask(&mut gt, &active);
                        accepted = Some((trial, trial_spec, f, gt));
                        break;
                    }
                    step *= 0.5;
                }
                Err(Error::Numerical(msg)) => {
                    report.warning = Some(msg);
                    return Ok(report);
                }
                Err(e) => return Err(e),
            }
        }

        let Some((trial, trial_spec, f, gt)) = accepted else {
            break;
        };
        let s_k: Vec<f64> = trial.iter().zip(&theta).map(|(a, b)| a - b).collect();
        // curvature of the negated objective
        let y_k: Vec<f64> = report.gradient.iter().zip(&gt).map(|(a, b)| a - b).collect();
        let sy = dot(&s_k, &y_k);
        if sy > 1e-12 * dot(&y_k, &y_k).sqrt() * dot(&s_k, &s_k).sqrt() {
            if memory.len() == LBFGS_MEMORY {
                memory.pop_front();
            }
            memory.push_back(CurvaturePair { s: s_k, y: y_k, rho: 1.0 / sy });
        }
        theta = trial;
        report.gradient = gt;
        report.spec = trial_spec;
        report.objective = f;
        report.iterations += 1;
    }
    if !report.converged {
        let g_inf = inf_norm(&report.gradient);
        report.converged = g_inf < settings.grad_tol;
    }
    Ok(report)
}

const LBFGS_MEMORY: usize = 7;

struct CurvaturePair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

// Two-loop recursion: approximate inverse Hessian of the negated objective
// applied to the gradient, giving an ascent direction.
fn lbfgs_direction(g: &[f64], memory: &VecDeque<CurvaturePair>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for p in memory.iter().rev() {
        let a = p.rho * dot(&p.s, &q);
        q.iter_mut().zip(&p.y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some(last) = memory.back() {
        let gamma = 1.0 / (last.rho * dot(&last.y, &last.y));
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for (p, a) in memory.iter().zip(alphas.iter().rev()) {
        let b = p.rho * dot(&p.y, &q);
        q.iter_mut().zip(&p.s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q
}

fn mask(g: &mut [f64], active: &[bool]) {
    for (v, &a) in g.iter_mut().zip(active) {
        if !a {
            *v = 0.0;
        }
    }
}
