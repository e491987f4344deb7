//! The weighted average over all children is continuous across cell
//! boundaries; predicting from the nearest child alone jumps.

use splitgp::{SplittingConfig, SplittingModel, TrainSchedule};

fn main() -> splitgp::Result<()> {
    let mut model = SplittingModel::new(1, SplittingConfig::new(20).schedule(TrainSchedule::Manual))?;
    for i in 0..30 {
        let x = -3.0 + 6.0 * (i as f64 * 0.618).fract();
        let noise = 0.3 * (37.0 * i as f64).sin();
        model.update(&[x], x.sin() + 0.3 * x + noise)?;
    }
    model.fit()?;
    let spec = model.spec();
    let centers: Vec<f64> = model.children().iter().map(|c| c.center()[0]).collect();
    let mid = 0.5 * (centers[0] + centers[1]);
    println!("children centered at {centers:.3?}; boundary at {mid:.4}");

    let nearest = |x: f64| -> splitgp::Result<f64> {
        let (w, _, _) = model.weights(&[x])?;
        let i = if w[0] >= w[1] { 0 } else { 1 };
        model.children()[i].mean(&[x], &spec)
    };
    println!("{:>8} {:>14} {:>14}", "step", "weighted", "nearest");
    for e in 1..=6 {
        let h = 10f64.powi(-e);
        let (a, b) = (mid - h / 2.0, mid + h / 2.0);
        let smooth = (model.predict_mean(&[b])?.mean - model.predict_mean(&[a])?.mean).abs();
        let jump = (nearest(b)? - nearest(a)?).abs();
        println!("{h:>8.0e} {smooth:>14.3e} {jump:>14.3e}");
    }
    Ok(())
}
