//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! `cargo test --test acceptance -- C4 C9` runs a subset. The process exits
//! successfully even when a criterion fails; the lines are the result.

mod common;

use std::collections::HashMap;
use std::panic::{self, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use splitgp::bench::{self, ExperimentConfig, GridAxis, MetricRecord, ModelKind};
use splitgp::data::{self, SeedPlan};
use splitgp::partition::{self, within_cluster_ss};
use splitgp::{
    FullGp, GpPosterior, Hyperparameters, KernelSpec, LocalGpWgen, OnlineRegressor, OptimizerSettings, Points,
    PrincipalDirectionEstimator, Rbcm, SplittingConfig, SplittingModel, TrainSchedule,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_spec(rng: &mut impl Rng, dim: usize) -> KernelSpec {
    let ls = (0..dim).map(|_| rng.random_range(0.3..2.0)).collect();
    let params = Hyperparameters::new(ls, rng.random_range(0.5..2.0), rng.random_range(0.01..0.5)).unwrap();
    KernelSpec::rbf_ard(params)
}

fn oracle_equivalence() -> Outcome {
    let started = Instant::now();
    let mut rng = common::rng(101);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(1..=64);
        let dim = rng.random_range(1..=4);
        let spec = random_spec(&mut rng, dim);
        let rows = common::uniform_rows(&mut rng, n, dim, -2.0, 2.0);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let post = GpPosterior::new(Points::from_rows(&rows).unwrap(), y.clone(), &spec).unwrap();
        let p = spec.params();
        for _ in 0..5 {
            let xs: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.5..2.5)).collect();
            let (m, v, l) =
                common::gp(&rows, &y, p.lengthscales(), p.signal_variance(), p.noise_variance(), &xs);
            let errs = [
                (post.mean(&xs, &spec).unwrap() - m).abs() / m.abs().max(1.0),
                (post.variance(&xs, &spec).unwrap() - v).abs() / v.abs().max(1.0),
                (post.log_marginal_likelihood(&spec).unwrap() - l).abs() / l.abs().max(1.0),
            ];
            worst = errs.into_iter().fold(worst, f64::max);
        }
    }
    let elapsed = started.elapsed();
    outcome(
        worst <= 1e-8 && elapsed < Duration::from_secs(10),
        format!("50 instances, worst error {worst:.1e}, {:.2} s", elapsed.as_secs_f64()),
    )
}

fn gradient_check() -> Outcome {
    let mut rng = common::rng(202);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.random_range(3..=30);
        let dim = rng.random_range(1..=4);
        let spec = random_spec(&mut rng, dim);
        let x = Points::from_rows(&common::uniform_rows(&mut rng, n, dim, -2.0, 2.0)).unwrap();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let grad = GpPosterior::new(x.clone(), y.clone(), &spec).unwrap().lml_gradient(&spec).unwrap();
        let theta = spec.log_params();
        let h = 1e-5;
        let fd: Vec<f64> = (0..theta.len())
            .map(|j| {
                let lml_at = |delta: f64| {
                    let mut t = theta.clone();
                    t[j] += delta;
                    let s = spec.with_log_params(&t).unwrap();
                    GpPosterior::new(x.clone(), y.clone(), &s).unwrap().log_marginal_likelihood(&s).unwrap()
                };
                (lml_at(h) - lml_at(-h)) / (2.0 * h)
            })
            .collect();
        let scale = fd.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-12);
        let err = grad.iter().zip(&fd).map(|(g, f)| (g - f).abs()).fold(0.0, f64::max) / scale;
        worst = worst.max(err);
    }
    outcome(worst < 1e-4, format!("20 instances, worst relative error {worst:.1e}"))
}

fn aggregation_identity() -> Outcome {
    let mut rng = common::rng(303);
    let (mut worst_mean, mut worst_sum, mut worst_oracle): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..1000 {
        let dim = rng.random_range(1..=3);
        let spec = random_spec(&mut rng, dim);
        let n = rng.random_range(1..=8);
        let shared: Vec<(Vec<f64>, f64)> = (0..n)
            .map(|_| ((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(), rng.random_range(-3.0..3.0)))
            .collect();
        let c = rng.random_range(1..=6);
        let children: Vec<_> = (0..c)
            .map(|_| ((0..dim).map(|_| rng.random_range(-2.0..2.0)).collect(), shared.clone()))
            .collect();
        let model = common::assemble(&spec, 10, &children);
        let xs: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let xr: Vec<Vec<f64>> = shared.iter().map(|s| s.0.clone()).collect();
        let yr: Vec<f64> = shared.iter().map(|s| s.1).collect();
        let p = spec.params();
        let (common_mean, _, _) =
            common::gp(&xr, &yr, p.lengthscales(), p.signal_variance(), p.noise_variance(), &xs);
        let summary = model.predict_mean(&xs).unwrap();
        let own = model.children()[0].mean(&xs, &spec).unwrap();
        worst_mean = worst_mean.max((summary.mean - own).abs() / own.abs().max(1.0));
        worst_oracle = worst_oracle.max((own - common_mean).abs() / common_mean.abs().max(1.0));
        worst_sum = worst_sum.max((summary.weights.iter().sum::<f64>() - 1.0).abs());
    }
    outcome(
        worst_mean <= 1e-12 && worst_sum <= 1e-12 && worst_oracle <= 1e-8,
        format!(
            "1000 pairs, mean deviation {worst_mean:.1e}, weight-sum deviation {worst_sum:.1e}, child mean vs dense oracle {worst_oracle:.1e}"
        ),
    )
}

/// Largest change of `f` between successive points `mid + k h`, `|k| <= 5`.
fn max_step(f: &dyn Fn(f64) -> f64, mid: f64, h: f64) -> f64 {
    (-5..5).map(|k| (f(mid + (k + 1) as f64 * h) - f(mid + k as f64 * h)).abs()).fold(0.0, f64::max)
}

fn continuity() -> Outcome {
    let mut rng = common::rng(404);
    let mut model = SplittingModel::new(1, SplittingConfig::new(30).schedule(TrainSchedule::Manual)).unwrap();
    for _ in 0..40 {
        let x: f64 = rng.random_range(-3.0..3.0);
        let noise: f64 = StandardNormal.sample(&mut rng);
        model.update(&[x], x.sin() + 0.5 * x + 0.1 * noise).unwrap();
    }
    model.fit().unwrap();
    if model.n_children() != 2 {
        return outcome(false, format!("expected 2 children, got {}", model.n_children()));
    }
    let spec = model.spec();
    let (c0, c1) = (model.children()[0].center()[0], model.children()[1].center()[0]);
    let mid = 0.5 * (c0 + c1);
    let smooth = |x: f64| model.predict_mean(&[x]).unwrap().mean;
    let nearest = |x: f64| {
        let (w, _, _) = model.weights(&[x]).unwrap();
        let i = if w[0] >= w[1] { 0 } else { 1 };
        model.children()[i].mean(&[x], &spec).unwrap()
    };
    let steps: Vec<f64> = (1..=6).map(|e| 10f64.powi(-e)).collect();
    let smooth_max: Vec<f64> = steps.iter().map(|&h| max_step(&smooth, mid, h)).collect();
    let nearest_max: Vec<f64> = steps.iter().map(|&h| max_step(&nearest, mid, h)).collect();
    let ratios: Vec<f64> = smooth_max.windows(2).map(|w| w[1] / w[0] / 0.1).collect();
    let linear = ratios.iter().all(|r| (r - 1.0).abs() <= 0.25);
    let jump = nearest_max[5] / smooth_max[5];
    let constant_jump = (nearest_max[5] / nearest_max[2] - 1.0).abs() < 0.25;
    outcome(
        linear && jump > 10.0 && constant_jump,
        format!(
            "successive ratios / proportional {:?}; nearest-child jump {:.3e} at 1e-6, {jump:.1e} x smooth",
            ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>(),
            nearest_max[5]
        ),
    )
}

fn splitting_invariants() -> Outcome {
    let started = Instant::now();
    let ds = data::synth_dataset(2500, &SeedPlan::new(0), 0).unwrap().centered();
    let mut model = SplittingModel::new(2, SplittingConfig::new(500)).unwrap();
    for (row, y) in ds.x.rows().zip(&ds.y) {
        model.update(row, *y).unwrap();
    }
    let max_child = model.children().iter().map(|c| c.len()).max().unwrap();
    let c = model.n_children();
    let key = |x: &[f64], y: f64| (x.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), y.to_bits());
    let mut stored: Vec<_> = model
        .children()
        .iter()
        .flat_map(|ch| ch.inputs().rows().zip(ch.targets()).map(move |(x, y)| key(x, *y)).collect::<Vec<_>>())
        .collect();
    let mut given: Vec<_> = ds.x.rows().zip(&ds.y).map(|(x, y)| key(x, *y)).collect();
    stored.sort();
    given.sort();
    let elapsed = started.elapsed();
    outcome(
        max_child <= 500 && (5..=11).contains(&c) && stored == given && elapsed < Duration::from_secs(300),
        format!(
            "C = {c}, largest child {max_child}, conservation {}, {:.1} s",
            stored == given,
            elapsed.as_secs_f64()
        ),
    )
}

fn memory_linearity() -> Outcome {
    let ds = data::synth_dataset(2500, &SeedPlan::new(0), 0).unwrap().centered();
    let m = 500u64;
    let mut model = SplittingModel::new(2, SplittingConfig::new(m as usize).schedule(TrainSchedule::Manual)).unwrap();
    let mut full = FullGp::new(2, TrainSchedule::Manual, OptimizerSettings::default()).unwrap();
    let mut ok = true;
    let mut notes = Vec::new();
    for (i, (row, y)) in ds.x.rows().zip(&ds.y).enumerate() {
        model.update(row, *y).unwrap();
        full.ingest(row, *y).unwrap();
        let n = i as u64 + 1;
        if n.is_multiple_of(500) {
            let gram: u64 = model.children().iter().map(|c| 8 * (c.len() as u64).pow(2)).sum();
            let bound = 8 * m * n * 3 / 2;
            ok &= gram <= bound;
            notes.push(format!("n={n}: {:.0}/{:.0} kB", gram as f64 / 1024.0, bound as f64 / 1024.0));
        }
    }
    let (split_total, full_total) = (model.memory_footprint(), full.footprint());
    ok &= full_total > split_total;
    notes.push(format!("total at 2500: splitting {} kB, full {} kB", split_total / 1024, full_total / 1024));
    outcome(ok, notes.join("; "))
}

/// The first run of the desk-scale configuration, shared with the
/// determinism check.
fn desk_scale_records() -> &'static (Vec<MetricRecord>, f64) {
    static RUN: OnceLock<(Vec<MetricRecord>, f64)> = OnceLock::new();
    RUN.get_or_init(|| {
        let cfg = ExperimentConfig::default();
        let started = Instant::now();
        let records = bench::run_experiment(&cfg).unwrap();
        (records, started.elapsed().as_secs_f64())
    })
}

fn desk_scale_reproduction() -> Outcome {
    let cfg = ExperimentConfig::default();
    let (records, seconds) = desk_scale_records();
    let mut sums: HashMap<&str, (f64, usize, usize)> = HashMap::new();
    for r in records {
        let e = sums.entry(r.model.as_str()).or_default();
        if r.is_ok() {
            e.0 += r.mse;
            e.1 += 1;
        } else {
            e.2 += 1;
        }
    }
    let mean = |m: &str| sums.get(m).map_or(f64::NAN, |s| s.0 / s.1 as f64);
    let failures: usize = sums.values().map(|s| s.2).sum();
    let seeds = SeedPlan::new(cfg.seed);
    let var_y = (0..cfg.replicates)
        .map(|r| {
            let y = data::synth_dataset(2500, &seeds, r).unwrap().y;
            let mu = y.iter().sum::<f64>() / y.len() as f64;
            y.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (y.len() - 1) as f64
        })
        .sum::<f64>()
        / f64::from(cfg.replicates);
    let (split, full) = (mean("splitting"), mean("fullgp"));
    let ratio = split / full;
    let r2 = 1.0 - split / var_y;
    outcome(
        failures == 0 && ratio <= 2.0 && split < var_y && r2 > 0.9 && *seconds < 1800.0,
        format!(
            "mse splitting {split:.4}, full {full:.4}, ratio {ratio:.2}; Var(y) {var_y:.3}, R^2 {r2:.3}; {failures} failed records; {seconds:.0} s"
        ),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn update_time() -> Outcome {
    let ds = data::synth_dataset(2600, &SeedPlan::new(3), 0).unwrap().centered();
    let mut model = SplittingModel::new(2, SplittingConfig::new(200)).unwrap();
    let mut times = vec![0.0; ds.len()];
    for (i, (row, y)) in ds.x.rows().zip(&ds.y).enumerate() {
        let started = Instant::now();
        model.update(row, *y).unwrap();
        times[i] = started.elapsed().as_secs_f64();
    }
    let window = 400;
    let early = median(times[200..200 + window].to_vec());
    let late = median(times[2000..2000 + window].to_vec());
    outcome(
        late <= 3.0 * early,
        format!("median update {:.2} us at n=200, {:.2} us at n=2000, ratio {:.2}", early * 1e6, late * 1e6, late / early),
    )
}

fn baseline_degeneracies() -> Outcome {
    let mut rng = common::rng(909);
    let opt = OptimizerSettings::default();
    let mut full = FullGp::new(2, TrainSchedule::Manual, opt.clone()).unwrap();
    let mut local = LocalGpWgen::new(2, 1e-15, TrainSchedule::Manual, opt.clone()).unwrap();
    let mut single = Rbcm::new(2, 1, 7, TrainSchedule::Manual, opt).unwrap();
    for r in common::uniform_rows(&mut rng, 200, 2, -1.0, 1.0) {
        let noise: f64 = StandardNormal.sample(&mut rng);
        let y = data::synth_latent(r[0], r[1]) + 0.4 * noise;
        full.ingest(&r, y).unwrap();
        local.ingest(&r, y).unwrap();
        single.ingest(&r, y).unwrap();
    }
    full.fit().unwrap();
    local.fit().unwrap();
    single.fit().unwrap();
    let (mut local_err, mut rbcm_err): (f64, f64) = (0.0, 0.0);
    for xs in common::uniform_rows(&mut rng, 100, 2, -1.2, 1.2) {
        let f = full.predict(&xs).unwrap();
        let l = local.predict(&xs).unwrap();
        let r = single.predict(&xs).unwrap();
        local_err = local_err.max((f.mean - l.mean).abs()).max((f.variance.unwrap() - l.variance.unwrap()).abs());
        rbcm_err = rbcm_err.max((f.mean - r.mean).abs()).max((f.variance.unwrap() - r.variance.unwrap()).abs());
    }
    outcome(
        local.n_models() == 1 && local_err <= 1e-10 && rbcm_err <= 1e-10,
        format!("local GP ({} model) max diff {local_err:.1e}; rBCM E=1 max diff {rbcm_err:.1e}", local.n_models()),
    )
}

fn wgen_trend() -> Outcome {
    let template = ExperimentConfig {
        models: vec![ModelKind::LocalGp],
        dataset: bench::DatasetSpec::Synthetic(1000),
        replicates: 3,
        ..ExperimentConfig::default()
    };
    let axis: GridAxis = "wgen=0.001,0.1,0.5".parse().unwrap();
    let (_, summary) = bench::grid_search(&template, &[axis]).unwrap();
    let t = &summary.wgen_trend;
    let failures: usize = summary.points.iter().map(|p| p.failures).sum();
    let pass = t.len() == 3 && failures == 0 && t[0].1 <= t[1].1 && t[1].1 <= t[2].1;
    let shown: Vec<String> = t.iter().map(|(w, e)| format!("w_gen {w}: {e:.4}")).collect();
    outcome(pass, format!("mean mse {}", shown.join(", ")))
}

fn pddp_dominance() -> Outcome {
    let mut rng = common::rng(1111);
    let (mut dominated, mut worst): (usize, f64) = (0, 0.0);
    for _ in 0..20 {
        let rows: Vec<Vec<f64>> = (0..100)
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                vec![3.0 * a, 1.5 * b]
            })
            .collect();
        let x = Points::from_rows(&rows).unwrap();
        let c = partition::centroid(&x).unwrap();
        let r = partition::split(&x, &vec![0.0; 100], &c, &PrincipalDirectionEstimator::BatchSvd).unwrap();
        let mut is_left = vec![false; 100];
        r.left.rows.iter().for_each(|&i| is_left[i] = true);
        let pddp = within_cluster_ss(&x, &is_left);
        let best_random = (0..50)
            .map(|_| {
                let w: Vec<f64> = (0..2).map(|_| StandardNormal.sample(&mut rng)).collect();
                let side: Vec<bool> = rows.iter().map(|p| (p[0] - c[0]) * w[0] + (p[1] - c[1]) * w[1] > 0.0).collect();
                within_cluster_ss(&x, &side)
            })
            .fold(f64::INFINITY, f64::min);
        if pddp <= best_random {
            dominated += 1;
        } else {
            worst = worst.max(pddp / best_random - 1.0);
        }
    }
    outcome(
        dominated == 20,
        format!("PDDP no worse than all 50 random cuts on {dominated}/20 datasets; worst excess {:.2}%", 100.0 * worst),
    )
}

fn non_timing_csv(records: &[MetricRecord]) -> Vec<String> {
    let mut buf = Vec::new();
    bench::write_records(records, &mut buf).unwrap();
    String::from_utf8(buf)
        .unwrap()
        .lines()
        .map(|l| l.split(',').take(MetricRecord::DETERMINISTIC_COLUMNS).collect::<Vec<_>>().join(","))
        .collect()
}

fn determinism() -> Outcome {
    let (first, _) = desk_scale_records();
    let second = bench::run_experiment(&ExperimentConfig::default()).unwrap();
    let (a, b) = (non_timing_csv(first), non_timing_csv(&second));
    let differing = a.iter().zip(&b).filter(|(x, y)| x != y).count() + a.len().abs_diff(b.len());
    outcome(differing == 0, format!("{} lines compared, {differing} differ", a.len()))
}

fn main() {
    type Check = (&'static str, &'static str, fn() -> Outcome);
    let criteria: [Check; 12] = [
        ("C1", "oracle equivalence", oracle_equivalence),
        ("C2", "gradient check", gradient_check),
        ("C3", "aggregation identity", aggregation_identity),
        ("C4", "continuity", continuity),
        ("C5", "splitting invariants", splitting_invariants),
        ("C6", "memory linearity", memory_linearity),
        ("C7", "desk-scale synthetic reproduction", desk_scale_reproduction),
        ("C8", "update-time boundedness", update_time),
        ("C9", "baseline degeneracies", baseline_degeneracies),
        ("C10", "w_gen trend", wgen_trend),
        ("C11", "PDDP dominance", pddp_dominance),
        ("C12", "determinism", determinism),
    ];
    let wanted: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut passed = 0;
    let mut ran = 0;
    for (id, name, check) in criteria {
        if !wanted.is_empty() && !wanted.iter().any(|w| w.eq_ignore_ascii_case(id)) {
            continue;
        }
        ran += 1;
        let started = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        passed += usize::from(result.pass);
        println!(
            "{} {id}: {name}: {} [{:.1} s]",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail,
            started.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {passed}/{ran} passed");
}
