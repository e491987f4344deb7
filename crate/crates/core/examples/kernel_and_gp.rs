//! A single exact GP: kernel evaluation, posterior, log marginal likelihood
//! and a hyperparameter fit.

use splitgp::gp::{self, GpPosterior};
use splitgp::{Hyperparameters, KernelSpec, OptimizerSettings, Points};

fn main() -> splitgp::Result<()> {
    let spec = KernelSpec::rbf_ard(Hyperparameters::new(vec![1.0, 10.0], 1.0, 0.01)?);
    println!("k((0,0), (1,0)) = {:.5}", spec.eval(&[0.0, 0.0], &[1.0, 0.0])?);
    // the second lengthscale is long, so that dimension barely matters
    println!("k((0,0), (1,3)) = {:.5}", spec.eval(&[0.0, 0.0], &[1.0, 3.0])?);

    let xs: Vec<[f64; 2]> = (0..25).map(|i| [i as f64 / 4.0 - 3.0, (i % 5) as f64]).collect();
    let ys: Vec<f64> = xs.iter().map(|x| x[0].sin()).collect();
    let x = Points::from_rows(&xs)?;

    let post = GpPosterior::new(x.clone(), ys.clone(), &spec)?;
    println!("lml at start: {:.3}", post.log_marginal_likelihood(&spec)?);
    println!("gradient (log ls.., log sf2, log sn2): {:.3?}", post.lml_gradient(&spec)?);

    let report = gp::fit(&[(&x, &ys)], &spec, &OptimizerSettings::default())?;
    let fitted = report.spec.clone();
    println!("after {} iterations: {:?}", report.iterations, fitted.params());
    let post = GpPosterior::new(x, ys, &fitted)?;
    for t in [-2.0, 0.1, 2.5] {
        println!(
            "x = {t:>4}: mean {:>7.4} var {:.2e} (sin = {:.4})",
            post.mean(&[t, 1.0], &fitted)?,
            post.variance(&[t, 1.0], &fitted)?,
            f64::sin(t)
        );
    }
    Ok(())
}
