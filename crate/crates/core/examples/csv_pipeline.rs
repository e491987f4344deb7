//! Load a whitespace or comma table, drop duplicate rows, standardize the
//! inputs and train on batches.
//!
//! cargo run --release --example csv_pipeline -- path/to/table.csv [response-column]
//! Without arguments the bundled powergen-shaped fixture is used.

use std::path::PathBuf;

use splitgp::data::{self, InputScaler, ResponseColumn, SeedPlan, SplitSize};
use splitgp::{SplittingConfig, SplittingModel};

fn main() -> splitgp::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/powergen_dups.csv"));
    let response: ResponseColumn = args.next().as_deref().unwrap_or("last").parse()?;

    let raw = data::load_csv(&path, &response)?;
    let ds = data::dedup_exact(&raw);
    println!("{}: {} rows, {} after removing duplicates, {} predictors", ds.name, raw.len(), ds.len(), ds.dim());

    let seeds = SeedPlan::new(0);
    let (mut train, mut test) = data::train_test_split(&ds, SplitSize::Fraction(0.8), &seeds, 0)?;
    let scaler = InputScaler::fit(&train.x);
    train.x = scaler.transform(&train.x);
    test.x = scaler.transform(&test.x);
    let train = train.centered();

    let m = (train.len() / 2).max(2);
    let mut model = SplittingModel::new(ds.dim(), SplittingConfig::new(m))?;
    for start in (0..train.len()).step_by(m) {
        let idx: Vec<usize> = (start..(start + m).min(train.len())).collect();
        let batch = train.select(&idx);
        model.update_batch(&batch.x, &batch.y)?;
    }
    println!("{} children after {} rows", model.n_children(), model.len());

    for (x, y) in test.x.rows().zip(test.original_y()) {
        let p = model.predict(x)?;
        println!("predicted {:>9.3} +- {:.3}, observed {y:>9.3}", p.mean + train.y_center, p.variance.unwrap_or(0.0).sqrt());
    }
    Ok(())
}
