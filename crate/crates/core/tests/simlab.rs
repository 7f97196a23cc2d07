use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sparseperm::simlab::{concentration_diagnostic, AlphaSpec, BenchmarkRow, FitOverrides};
use sparseperm::*;

fn small_fit() -> FitOverrides {
    FitOverrides {
        gibbs_iters: Some(60),
        ..FitOverrides::default()
    }
}

#[test]
fn noiseless_swap_is_solved_under_truth() {
    let cfg = SimConfig {
        n: 4,
        d: 2,
        s0: 2,
        sigma: 1e-12,
        duplicate_first: false,
        beta0: Some(vec![1.5, -0.5]),
        ..SimConfig::default()
    };
    let out = generate_linear(&cfg, &mut ChaCha8Rng::seed_from_u64(600)).unwrap();
    assert_eq!(out.pi0.as_slice(), &[1, 0, 2, 3]);
    let aligned = out.data.aligned(&out.pi0);
    let y = DVector::from_column_slice(out.data.y());
    let beta = aligned.x().clone().svd(true, true).solve(&y, 1e-14).unwrap();
    for k in 0..2 {
        assert!((beta[k] - out.beta0[k]).abs() < 1e-9);
    }
}

#[test]
fn default_truth_displaces_s0() {
    let out = generate_linear(&SimConfig::default(), &mut ChaCha8Rng::seed_from_u64(601)).unwrap();
    assert_eq!(out.pi0.displaced(), 6);
    let t = &out.pi0_target;
    for i in 0..100 {
        assert!((t.row(i).sum() - 1.0).abs() < 1e-12);
        assert!((t.column(i).sum() - 1.0).abs() < 1e-12);
    }
    assert_eq!(t.iter().filter(|&&v| v == 0.5).count(), 4);
    assert_eq!(t.iter().filter(|&&v| v == 1.0).count(), 98);
    let hard = out.pi0.to_matrix();
    for i in 0..100 {
        for j in 0..100 {
            let block = (i == 0 || i == 6) && (j == 5 || j == 6);
            assert_eq!(block, t[(i, j)] != hard[(i, j)], "({i},{j})");
        }
    }
}

#[test]
fn duplicate_row_copies_first_pair() {
    let out = generate_linear(&SimConfig::default(), &mut ChaCha8Rng::seed_from_u64(602)).unwrap();
    assert_eq!(out.data.y()[6], out.data.y()[0]);
    // Response 0 belongs to covariate row s0 - 1 under the reversal.
    assert_eq!(out.data.x().row(6), out.data.x().row(5));
}

#[test]
fn ols_on_unpermuted_rows_recovers_beta() {
    let cfg = SimConfig {
        sigma: 0.01,
        duplicate_first: false,
        ..SimConfig::default()
    };
    let out = generate_linear(&cfg, &mut ChaCha8Rng::seed_from_u64(603)).unwrap();
    let aligned = out.data.aligned(&out.pi0);
    let x = aligned.x();
    let y = DVector::from_column_slice(out.data.y());
    let beta = (x.tr_mul(x)).cholesky().unwrap().solve(&x.tr_mul(&y));
    for k in 0..20 {
        assert!((beta[k] - 1.0).abs() < 0.05, "beta[{k}] = {}", beta[k]);
    }
}

#[test]
fn ald_noise_has_requested_quantile() {
    let mut rng = ChaCha8Rng::seed_from_u64(604);
    for tau in [0.2, 0.5, 0.8] {
        let draws = 200_000;
        let below = (0..draws)
            .filter(|_| sparseperm::simlab::sample_ald(&mut rng, 0.7, tau) < 0.0)
            .count();
        assert!((below as f64 / draws as f64 - tau).abs() < 0.005, "tau {tau}");
    }
}

#[test]
fn trivial_grid_gives_one_finite_row() {
    let grid = BenchmarkGrid {
        n_values: vec![50],
        alpha_values: vec![AlphaSpec::Fixed(1.0)],
        replicates: 1,
        fit: small_fit(),
        ..BenchmarkGrid::default()
    };
    let report = run_benchmark(&grid).unwrap();
    assert_eq!(report.rows.len(), 1);
    let row = &report.rows[0];
    assert_eq!((row.n, row.replicates), (50, 1));
    assert!(row.error.is_none());
    for v in [row.beta_l1, row.pi_l1_raw, row.pi_l1_norm, row.sec_per_iter] {
        assert!(v.is_finite());
    }
    assert_eq!(report.timings.len(), 1);
}

#[test]
fn benchmark_is_pure_in_grid_and_seed() {
    let grid = BenchmarkGrid {
        n_values: vec![20, 30],
        alpha_values: vec![AlphaSpec::InverseN, AlphaSpec::Fixed(0.5)],
        replicates: 2,
        sim: SimConfig {
            d: 3,
            ..SimConfig::default()
        },
        fit: small_fit(),
        seed: 9,
        parallel: true,
    };
    let a = run_benchmark(&grid).unwrap();
    let b = run_benchmark(&BenchmarkGrid {
        parallel: false,
        ..grid.clone()
    })
    .unwrap();
    let key = |r: &BenchmarkRow| (r.n, r.alpha.to_bits(), r.beta_l1.to_bits(), r.pi_l1_raw.to_bits());
    assert_eq!(
        a.rows.iter().map(key).collect::<Vec<_>>(),
        b.rows.iter().map(key).collect::<Vec<_>>()
    );
    let order: Vec<(usize, f64)> = a.rows.iter().map(|r| (r.n, r.alpha)).collect();
    assert_eq!(order, vec![(20, 0.05), (20, 0.5), (30, 1.0 / 30.0), (30, 0.5)]);
}

#[test]
fn zero_replicates_are_rejected() {
    let grid = BenchmarkGrid {
        n_values: vec![20],
        alpha_values: vec![AlphaSpec::Fixed(0.5)],
        replicates: 2,
        sim: SimConfig {
            d: 3,
            ..SimConfig::default()
        },
        fit: small_fit(),
        ..BenchmarkGrid::default()
    };
    let bad = BenchmarkGrid {
        replicates: 0,
        ..grid
    };
    assert!(run_benchmark(&bad).is_err());
}

#[test]
fn single_n_concentration_gives_one_row() {
    let sim = SimConfig {
        d: 3,
        ..SimConfig::default()
    };
    let rows = concentration_diagnostic(&[30], 2, &sim, &small_fit(), 4).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!((rows[0].n, rows[0].replicates), (30, 2));
    assert!(rows[0].mean_l2.is_finite() && rows[0].mean_l2 >= 0.0);
}
