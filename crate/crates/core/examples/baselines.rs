//! The splitting GP next to the exact GP, the threshold local GP and the
//! robust committee machine, all behind `OnlineRegressor`.

use std::time::Instant;

use splitgp::data::{self, SeedPlan};
use splitgp::{
    FullGp, LocalGpWgen, OnlineRegressor, OptimizerSettings, Rbcm, SplittingConfig, SplittingModel, TrainSchedule,
};

fn main() -> splitgp::Result<()> {
    let seeds = SeedPlan::new(11);
    let ds = data::synth_dataset(2000, &seeds, 0)?;
    let (train, test) = data::train_test_split(&ds, data::SplitSize::Fraction(0.8), &seeds, 0)?;
    let train = train.centered();
    let test_y = test.original_y();

    let schedule = TrainSchedule::Manual;
    let opt = OptimizerSettings::default();
    let mut models: Vec<Box<dyn OnlineRegressor>> = vec![
        Box::new(SplittingModel::new(2, SplittingConfig::new(400).schedule(schedule))?),
        Box::new(FullGp::new(2, schedule, opt.clone())?),
        Box::new(LocalGpWgen::new(2, 0.3, schedule, opt.clone())?),
        Box::new(Rbcm::new(2, 8, seeds.seed(data::SeedPurpose::Assignment, 0), schedule, opt)?),
    ];
    println!("{:<10} {:>8} {:>10} {:>7} {:>8}", "model", "mse", "memory kB", "models", "train s");
    for model in &mut models {
        let started = Instant::now();
        for (x, y) in train.x.rows().zip(&train.y) {
            model.ingest(x, *y)?;
        }
        model.fit()?;
        let secs = started.elapsed().as_secs_f64();
        let mut sq = 0.0;
        for (x, y) in test.x.rows().zip(&test_y) {
            sq += (model.predict_mean(x)? + train.y_center - y).powi(2);
        }
        println!(
            "{:<10} {:>8.4} {:>10.0} {:>7} {:>8.2}",
            model.name(),
            sq / test_y.len() as f64,
            model.footprint() as f64 / 1024.0,
            model.n_models(),
            secs
        );
    }
    Ok(())
}
