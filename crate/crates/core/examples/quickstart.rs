//! Stream noisy observations of a 2-d surface into a splitting GP and
//! predict at a few points.
//!
//! cargo run --release --example quickstart

use splitgp::data::{self, SeedPlan};
use splitgp::{SplittingConfig, SplittingModel};

fn main() -> splitgp::Result<()> {
    let ds = data::synth_dataset(1500, &SeedPlan::new(7), 0)?.centered();

    let mut model = SplittingModel::new(2, SplittingConfig::new(300))?;
    for (x, y) in ds.x.rows().zip(&ds.y) {
        let out = model.update(x, *y)?;
        if out.split {
            println!("n = {:>4}: split, now {} children", model.len(), model.n_children());
        }
    }
    let report = model.fit()?;
    println!("fit: {} iterations, lml {:.2}", report.iterations, report.objective);
    println!("hyperparameters: {:?}", model.spec().params());

    for x in [[0.0, 0.0], [0.9, 0.3], [-0.5, -0.8]] {
        let p = model.predict(&x)?;
        println!(
            "f({:>5.2}, {:>5.2}) = {:>7.3} +- {:.3}   truth {:>7.3}",
            x[0],
            x[1],
            p.mean + ds.y_center,
            p.variance.unwrap_or(0.0).sqrt(),
            data::synth_latent(x[0], x[1])
        );
    }
    Ok(())
}
