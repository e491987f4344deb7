//! Principal-direction bisection of one cell, with the batch and the
//! streaming (Oja) direction estimates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splitgp::partition::{self, OjaState};
use splitgp::{Points, PrincipalDirectionEstimator};

fn main() -> splitgp::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // an elongated cloud along (2, 1)
    let rows: Vec<[f64; 2]> = (0..400)
        .map(|_| {
            let t: f64 = rng.random_range(-3.0..3.0);
            let s: f64 = rng.random_range(-0.4..0.4);
            [2.0 * t - s, t + 2.0 * s]
        })
        .collect();
    let x = Points::from_rows(&rows)?;
    let y: Vec<f64> = rows.iter().map(|r| r[0] * r[1]).collect();
    let center = partition::centroid(&x)?;

    let batch = partition::principal_direction(&x, &PrincipalDirectionEstimator::BatchSvd)?;
    let oja = OjaState::from_points(&x, &center);
    println!("batch direction  {batch:.4?}");
    println!("streamed (Oja)   {:.4?} after {} steps", oja.direction().unwrap(), oja.steps());

    let split = partition::split(&x, &y, &center, &PrincipalDirectionEstimator::BatchSvd)?;
    println!(
        "sides: {} and {} rows, centers {:.3?} / {:.3?}",
        split.left.rows.len(),
        split.right.rows.len(),
        split.left.center,
        split.right.center
    );
    let mut is_left = vec![false; x.len()];
    split.left.rows.iter().for_each(|&i| is_left[i] = true);
    println!("within-cell sum of squares after split: {:.2}", partition::within_cluster_ss(&x, &is_left));
    Ok(())
}
