use std::collections::HashSet;
use std::path::PathBuf;

use proptest::prelude::*;
use splitgp::data::{self, Dataset, ResponseColumn, SeedPlan, SplitSize};
use splitgp::{Error, Points};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

#[test]
fn latent_surface_values() {
    assert_eq!(data::synth_latent(0.0, 0.0), 0.0);
    assert!((data::synth_latent(1.0, 0.0) - 7.20735).abs() < 1e-5);
    assert!((data::synth_latent(-1.0, 0.0) - 1.20735).abs() < 1e-5);
}

#[test]
fn noise_level_from_exhaustive_grid_max() {
    let mut best = f64::NEG_INFINITY;
    let mut arg = (0.0, 0.0);
    for i in 0..100 {
        for j in 0..100 {
            let (a, b) = (-1.0 + 2.0 * i as f64 / 99.0, -1.0 + 2.0 * j as f64 / 99.0);
            let f = 5.0 * (a * a + b * b).sin() + 3.0 * a;
            if f > best {
                best = f;
                arg = (a, b);
            }
        }
    }
    assert_eq!(arg.0, 1.0);
    assert!(((arg.0 * arg.0 + arg.1 * arg.1) - std::f64::consts::FRAC_PI_2).abs() < 0.05);
    assert!((data::synth_noise_sd() - 0.05 * best).abs() < 1e-12);
    assert!((data::synth_noise_sd() - 0.4).abs() < 0.01);
}

#[test]
fn synthetic_samples_are_distinct_grid_points() {
    let ds = data::synth_dataset(2500, &SeedPlan::new(1), 0).unwrap();
    assert_eq!(ds.len(), 2500);
    let rows: HashSet<Vec<u64>> = ds.x.rows().map(|r| r.iter().map(|v| v.to_bits()).collect()).collect();
    assert_eq!(rows.len(), 2500);
    let grid: HashSet<Vec<u64>> =
        data::synth_grid().rows().map(|r| r.iter().map(|v| v.to_bits()).collect()).collect();
    assert!(rows.is_subset(&grid));
}

#[test]
fn synthetic_noise_has_expected_scale() {
    let ds = data::synth_dataset(5000, &SeedPlan::new(2), 0).unwrap();
    let resid: Vec<f64> = ds.x.rows().zip(&ds.y).map(|(r, y)| y - data::synth_latent(r[0], r[1])).collect();
    let n = resid.len() as f64;
    let sd = (resid.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    assert!((sd / data::synth_noise_sd() - 1.0).abs() < 0.05);
}

#[test]
fn synthetic_is_seed_deterministic() {
    let a = data::synth_dataset(300, &SeedPlan::new(7), 3).unwrap();
    let b = data::synth_dataset(300, &SeedPlan::new(7), 3).unwrap();
    assert_eq!(a, b);
    let c = data::synth_dataset(300, &SeedPlan::new(7), 4).unwrap();
    assert_ne!(a.x, c.x);
}

#[test]
fn oversized_sample_is_rejected() {
    assert!(matches!(data::synth_dataset(10_001, &SeedPlan::new(0), 0), Err(Error::Config(_))));
}

#[test]
fn three_row_fixture_round_trips() {
    let ds = data::load_csv(fixture("three_rows.csv"), &ResponseColumn::Last).unwrap();
    assert_eq!(ds.x.row(0), &[0.5, -1.25]);
    assert_eq!(ds.x.row(1), &[1e-3, 2.5]);
    assert_eq!(ds.x.row(2), &[-7.75, 0.0]);
    assert_eq!(ds.y, vec![3.0, -0.125, 12.5]);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("copy.csv");
    ds.write_csv(&out).unwrap();
    let back = data::load_csv(&out, &ResponseColumn::Last).unwrap();
    assert_eq!(back.x, ds.x);
    assert_eq!(back.y, ds.y);
}

#[test]
fn response_chosen_by_header_name_or_index() {
    let by_name = data::load_csv(fixture("three_rows.csv"), &"x1".parse().unwrap()).unwrap();
    assert_eq!(by_name.y, vec![0.5, 1e-3, -7.75]);
    assert_eq!(by_name.x.row(0), &[-1.25, 3.0]);
    let by_index = data::load_csv(fixture("three_rows.csv"), &ResponseColumn::Index(0)).unwrap();
    assert_eq!(by_index, by_name);
    assert!(data::load_csv(fixture("three_rows.csv"), &"nope".parse().unwrap()).is_err());
}

#[test]
fn bad_cell_reports_line() {
    match data::load_csv(fixture("bad_cell.csv"), &ResponseColumn::Last) {
        Err(Error::Parse { line, message, .. }) => {
            assert_eq!(line, 3);
            assert!(message.contains("five"), "{message}");
        }
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn wrong_width_and_non_finite_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let ragged = dir.path().join("ragged.csv");
    std::fs::write(&ragged, "1,2,3\n4,5\n").unwrap();
    assert!(matches!(data::load_csv(&ragged, &ResponseColumn::Last), Err(Error::Parse { line: 2, .. })));
    let inf = dir.path().join("inf.csv");
    std::fs::write(&inf, "1,2\n3,inf\n").unwrap();
    assert!(matches!(data::load_csv(&inf, &ResponseColumn::Last), Err(Error::Parse { line: 2, .. })));
}

#[test]
fn whitespace_table_without_header() {
    let ds = data::load_csv(fixture("kin8_small.txt"), &ResponseColumn::Last).unwrap();
    assert_eq!(ds.len(), 40);
    assert_eq!(ds.dim(), 8);
    assert_eq!(ds.x.row(0)[0], -0.786106);
    assert_eq!(ds.y[0], 0.219096);
}

#[test]
fn duplicate_rows_are_removed() {
    let ds = data::load_csv(fixture("powergen_dups.csv"), &"PE".parse().unwrap()).unwrap();
    assert_eq!(ds.len(), 10);
    assert_eq!(ds.dim(), 4);
    let d = data::dedup_exact(&ds);
    assert_eq!(d.len(), 7);
    assert_eq!(d.y, vec![463.26, 444.37, 488.56, 446.48, 473.9, 443.67, 467.35]);
    assert_eq!(data::dedup_exact(&d), d);
    let empty = Dataset::new(Points::new(4), vec![], "empty").unwrap();
    assert_eq!(data::dedup_exact(&empty).len(), 0);
}

#[test]
fn centering_is_restored() {
    let ds = data::load_csv(fixture("three_rows.csv"), &ResponseColumn::Last).unwrap();
    let c = ds.centered();
    assert!((c.y_center - 15.375 / 3.0).abs() < 1e-15);
    assert!(c.y.iter().sum::<f64>().abs() < 1e-12);
    for (a, b) in c.original_y().iter().zip(&ds.y) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn leave_one_out_folds() {
    let ds = data::synth_dataset(12, &SeedPlan::new(1), 0).unwrap();
    let folds = data::kfold(&ds, 12, &SeedPlan::new(1), 0).unwrap();
    assert_eq!(folds.len(), 12);
    assert!(folds.iter().all(|(tr, te)| tr.len() == 11 && te.len() == 1));
    assert!(data::kfold(&ds, 13, &SeedPlan::new(1), 0).is_err());
}

#[test]
fn five_folds_of_2500() {
    let mut rng = SeedPlan::new(4).rng(data::SeedPurpose::Folds, 0);
    let folds = data::kfold_indices(2500, 5, &mut rng).unwrap();
    assert!(folds.iter().all(|f| f.test.len() == 500 && f.train.len() == 2000));
    let mut all: Vec<usize> = folds.iter().flat_map(|f| f.test.clone()).collect();
    all.sort_unstable();
    assert_eq!(all, (0..2500).collect::<Vec<_>>());
}

#[test]
fn holdout_splits() {
    let rows: Vec<Vec<f64>> = (0..40_000).map(|i| vec![i as f64]).collect();
    let ds = Dataset::new(Points::from_rows(&rows).unwrap(), vec![0.0; 40_000], "big").unwrap();
    let seeds = SeedPlan::new(8);
    let (tr, te) = data::train_test_split(&ds, SplitSize::Counts { train: 10_000, test: 30_000 }, &seeds, 0).unwrap();
    assert_eq!((tr.len(), te.len()), (10_000, 30_000));
    let (tr2, _) = data::train_test_split(&ds, SplitSize::Counts { train: 10_000, test: 30_000 }, &seeds, 0).unwrap();
    assert_eq!(tr, tr2);
    let (full, none) = data::train_test_split(&ds, SplitSize::Fraction(1.0), &seeds, 0).unwrap();
    assert_eq!((full.len(), none.len()), (40_000, 0));
    assert!(data::train_test_split(&ds, SplitSize::Counts { train: 30_000, test: 10_001 }, &seeds, 0).is_err());
}

#[test]
fn scaler_standardizes_training_columns() {
    let x = Points::from_rows(&[[1.0, 5.0], [3.0, 5.0], [5.0, 5.0]]).unwrap();
    let s = data::InputScaler::fit(&x);
    let t = s.transform(&x);
    assert_eq!(t.row(0), &[-1.0, 0.0]);
    assert_eq!(t.row(2), &[1.0, 0.0]);
}

proptest! {
    #[test]
    fn kfold_preserves_rows(n in 2usize..200, k_frac in 0.0f64..1.0, seed in any::<u64>()) {
        let k = 2 + ((n - 2) as f64 * k_frac) as usize;
        let mut rng = SeedPlan::new(seed).rng(data::SeedPurpose::Folds, 0);
        let folds = data::kfold_indices(n, k, &mut rng).unwrap();
        let sizes: Vec<usize> = folds.iter().map(|f| f.test.len()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for f in &folds {
            let mut both: Vec<usize> = f.train.iter().chain(&f.test).copied().collect();
            both.sort_unstable();
            prop_assert_eq!(both, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn holdout_preserves_rows(n in 1usize..300, frac in 0.0f64..=1.0, seed in any::<u64>()) {
        let mut rng = SeedPlan::new(seed).rng(data::SeedPurpose::Folds, 0);
        let f = data::train_test_indices(n, SplitSize::Fraction(frac), &mut rng).unwrap();
        let mut both: Vec<usize> = f.train.iter().chain(&f.test).copied().collect();
        both.sort_unstable();
        prop_assert_eq!(both, (0..n).collect::<Vec<_>>());
    }
}
