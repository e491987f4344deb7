//! The benchmark runner from code: a small cross-validated comparison with a
//! training-size sweep, summarized with 95% intervals.

use splitgp::bench::{self, DatasetSpec, ExperimentConfig, ModelKind, Protocol, Sweep};

fn main() -> splitgp::Result<()> {
    let cfg = ExperimentConfig {
        models: vec![ModelKind::Splitting, ModelKind::LocalGp, ModelKind::Rbcm],
        m: 200,
        w_gen: 0.1,
        experts: 4,
        dataset: DatasetSpec::Synthetic(800),
        protocol: Protocol::KFold(4),
        replicates: 3,
        sweep: Some(Sweep { start: 200, stop: 600, step: 200 }),
        fit_iters: 25,
        ..ExperimentConfig::default()
    };
    print!("{}", cfg.to_text());

    let mut records = Vec::new();
    bench::run_experiment_with(&cfg, |r| {
        eprintln!("{} rep {} fold {} n {}: mse {:.4}", r.model, r.replicate, r.fold, r.n, r.mse);
        records.push(r.clone());
        Ok(())
    })?;

    let rows: Vec<_> = bench::summarize(&records).into_iter().filter(|r| r.metric == "mse").collect();
    println!("\n{:<10} {:>5} {:>9} {:>20}", "model", "n", "mse", "95% interval");
    for r in rows {
        let ci = match (r.lo, r.hi) {
            (Some(lo), Some(hi)) => format!("[{lo:.4}, {hi:.4}]"),
            _ => String::new(),
        };
        println!("{:<10} {:>5} {:>9.4} {ci:>20}", r.model, r.x, r.mean);
    }
    Ok(())
}
