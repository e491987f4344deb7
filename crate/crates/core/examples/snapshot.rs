//! Save a trained model as text, restore it and keep streaming.

use splitgp::data::{self, SeedPlan};
use splitgp::{DirectionMethod, SplittingConfig, SplittingModel};

fn main() -> splitgp::Result<()> {
    let ds = data::synth_dataset(600, &SeedPlan::new(4), 0)?.centered();
    let cfg = SplittingConfig::new(150).direction(DirectionMethod::Oja);
    let mut model = SplittingModel::new(2, cfg)?;
    let (first, rest) = (ds.select(&(0..400).collect::<Vec<_>>()), ds.select(&(400..600).collect::<Vec<_>>()));
    model.update_batch(&first.x, &first.y)?;

    let text = model.to_snapshot();
    let path = std::env::temp_dir().join("splitgp-example.snapshot");
    std::fs::write(&path, &text)?;
    println!("wrote {} ({} bytes, {} children)", path.display(), text.len(), model.n_children());
    for line in text.lines().take(16) {
        println!("  {line}");
    }

    let mut restored = SplittingModel::from_snapshot(&std::fs::read_to_string(&path)?)?;
    let x = [0.25, -0.4];
    assert_eq!(model.predict(&x)?.mean, restored.predict(&x)?.mean);
    restored.update_batch(&rest.x, &rest.y)?;
    println!("after 200 more rows: {} children, f(x) = {:.3}", restored.n_children(), restored.predict(&x)?.mean + ds.y_center);
    Ok(())
}
