//! Stored bytes as observations arrive: quadratic for one exact GP, linear
//! once the splitting limit caps every child.

use splitgp::data::{self, SeedPlan};
use splitgp::{FullGp, OnlineRegressor, OptimizerSettings, SplittingConfig, SplittingModel, TrainSchedule};

fn main() -> splitgp::Result<()> {
    let ds = data::synth_dataset(5000, &SeedPlan::new(2), 0)?.centered();
    let mut split = SplittingModel::new(2, SplittingConfig::new(500).schedule(TrainSchedule::Manual))?;
    let mut full = FullGp::new(2, TrainSchedule::Manual, OptimizerSettings::default())?;

    println!("{:>6} {:>14} {:>14} {:>9}", "n", "splitting kB", "full GP kB", "children");
    for (i, (x, y)) in ds.x.rows().zip(&ds.y).enumerate() {
        split.update(x, *y)?;
        full.ingest(x, *y)?;
        if (i + 1) % 500 == 0 {
            println!(
                "{:>6} {:>14.0} {:>14.0} {:>9}",
                i + 1,
                split.memory_footprint() as f64 / 1024.0,
                full.footprint() as f64 / 1024.0,
                split.n_children()
            );
        }
    }
    Ok(())
}
