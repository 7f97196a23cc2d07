use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sparseperm::model::check_loss;
use sparseperm::*;

fn random_instance(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (Dataset, Permutation, RegressionState) {
    let x = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y: Vec<f64> = (0..n).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
    let mut sigma: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        sigma.swap(i, rng.random_range(0..=i));
    }
    let beta: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let sigma2 = rng.random_range(0.2..3.0);
    (
        Dataset::new(y, x).unwrap(),
        Permutation::new(sigma).unwrap(),
        RegressionState::new(beta, sigma2).unwrap(),
    )
}

/// Product of per-observation densities, then one log.
fn density_product_oracle(
    data: &Dataset,
    perm: &Permutation,
    state: &RegressionState,
    family: LikelihoodFamily,
) -> f64 {
    let mut prod = 1.0;
    for i in 0..data.n() {
        let row = perm.get(i);
        let mean: f64 = (0..data.d()).map(|j| data.x()[(row, j)] * state.beta[j]).sum();
        let u = data.y()[i] - mean;
        prod *= match family {
            LikelihoodFamily::Gaussian => {
                (-u * u / (2.0 * state.sigma2)).exp()
                    / (2.0 * std::f64::consts::PI * state.sigma2).sqrt()
            }
            LikelihoodFamily::Ald { tau } => {
                let s = state.sigma2.sqrt();
                tau * (1.0 - tau) / s * (-check_loss(u, tau) / s).exp()
            }
        };
    }
    prod.ln()
}

#[test]
fn loglik_matches_density_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for family in [LikelihoodFamily::Gaussian, LikelihoodFamily::Ald { tau: 0.3 }] {
        for _ in 0..20 {
            let (data, perm, state) = random_instance(&mut rng, 3, 2);
            let got = log_likelihood(&data, &perm, &state, family).unwrap();
            let want = density_product_oracle(&data, &perm, &state, family);
            assert!((got - want).abs() < 1e-12, "{family:?}: {got} vs {want}");
        }
    }
}

#[test]
fn fractional_target_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let (data, perm, state) = random_instance(&mut rng, 5, 3);
        let mut cfg = FitConfig::default_for(5);
        cfg.alpha = rng.random_range(0.05..1.0);
        let got = log_fractional_target(&data, &perm, &state, &cfg).unwrap();

        let v = cfg.priors.beta_prior_var;
        let beta_prior: f64 = state
            .beta
            .iter()
            .map(|b| ((-b * b / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()).ln())
            .sum();
        let vs = cfg.priors.sigma2_prior_var;
        let half_normal = 2.0 * (-state.sigma2.powi(2) / (2.0 * vs)).exp()
            / (2.0 * std::f64::consts::PI * vs).sqrt();
        let want = cfg.alpha * density_product_oracle(&data, &perm, &state, cfg.family)
            + beta_prior
            + half_normal.ln();
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }
}

#[test]
fn untempered_target_is_loglik_plus_priors() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (data, perm, state) = random_instance(&mut rng, 6, 2);
    let mut cfg = FitConfig::default_for(6);
    cfg.alpha = 1.0;
    let ll = log_likelihood(&data, &perm, &state, cfg.family).unwrap();
    let lp = log_fractional_target(&data, &perm, &state, &cfg).unwrap();
    let priors = cfg.priors.log_beta_prior(&state.beta) + cfg.priors.log_sigma2_prior(state.sigma2);
    assert!((lp - (ll + priors)).abs() < 1e-12 * lp.abs());
}

#[test]
fn target_is_linear_in_alpha() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let (data, perm, state) = random_instance(&mut rng, 8, 3);
        let ll = log_likelihood(&data, &perm, &state, LikelihoodFamily::Gaussian).unwrap();
        let at = |alpha: f64| {
            let mut cfg = FitConfig::default_for(8);
            cfg.alpha = alpha;
            log_fractional_target(&data, &perm, &state, &cfg).unwrap()
        };
        let (a, b, c) = (at(0.5), at(0.25), at(0.9));
        assert!((a - b - 0.25 * ll).abs() < 1e-12 * ll.abs().max(1.0));
        assert!((c - b - 0.65 * ll).abs() < 1e-12 * ll.abs().max(1.0));
    }
}

/// Unconstrained log-density `f(beta, l) = target(beta, e^l) + l`, for finite differences.
fn unconstrained(data: &Dataset, perm: &Permutation, cfg: &FitConfig, q: &[f64]) -> f64 {
    let state = RegressionState::from_unconstrained(q);
    log_fractional_target(data, perm, &state, cfg).unwrap() + q[q.len() - 1]
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (data, perm, state) = random_instance(&mut rng, 20, 3);
        let mut cfg = FitConfig::default_for(20);
        cfg.alpha = rng.random_range(0.05..1.0);
        let g = grad_log_fractional_target(&data, &perm, &state, &cfg).unwrap();
        let q = state.to_unconstrained();
        for k in 0..q.len() {
            let (mut qp, mut qm) = (q.clone(), q.clone());
            qp[k] += h;
            qm[k] -= h;
            let fd = (unconstrained(&data, &perm, &cfg, &qp) - unconstrained(&data, &perm, &cfg, &qm)) / (2.0 * h);
            let rel = (g[k] - fd).abs() / fd.abs().max(1.0);
            worst = worst.max(rel);
        }
    }
    assert!(worst < 1e-5, "worst relative error {worst}");
}

#[test]
fn ald_gradient_matches_differences_off_kinks() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let h = 1e-7;
    for _ in 0..20 {
        let (data, perm, state) = random_instance(&mut rng, 15, 2);
        let mut cfg = FitConfig::default_for(15);
        cfg.family = LikelihoodFamily::Ald { tau: 0.35 };
        cfg.alpha = 0.6;
        let g = grad_log_fractional_target(&data, &perm, &state, &cfg).unwrap();
        let q = state.to_unconstrained();
        for k in 0..q.len() {
            let (mut qp, mut qm) = (q.clone(), q.clone());
            qp[k] += h;
            qm[k] -= h;
            let fd = (unconstrained(&data, &perm, &cfg, &qp) - unconstrained(&data, &perm, &cfg, &qm)) / (2.0 * h);
            assert!((g[k] - fd).abs() / fd.abs().max(1.0) < 1e-5);
        }
    }
}

#[test]
fn doubling_alpha_doubles_likelihood_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (data, perm, state) = random_instance(&mut rng, 12, 3);
    let grad_at = |alpha: f64| {
        let mut cfg = FitConfig::default_for(12);
        cfg.alpha = alpha;
        grad_log_fractional_target(&data, &perm, &state, &cfg).unwrap()
    };
    let (g1, g2) = (grad_at(0.2), grad_at(0.4));
    let v = FitConfig::default_for(12).priors.beta_prior_var;
    for k in 0..3 {
        let prior = -state.beta[k] / v;
        assert!(((g2[k] - prior) - 2.0 * (g1[k] - prior)).abs() < 1e-10);
    }
}

#[test]
fn ald_at_median_is_laplace() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let (data, perm, state) = random_instance(&mut rng, 7, 2);
        let ald = log_likelihood(&data, &perm, &state, LikelihoodFamily::Ald { tau: 0.5 }).unwrap();
        // At tau = 1/2 the ALD is a Laplace law with scale b = 2 sigma.
        let b = 2.0 * state.sigma2.sqrt();
        let laplace: f64 = data
            .residuals(&perm, &state.beta)
            .iter()
            .map(|u| -(2.0 * b).ln() - u.abs() / b)
            .sum();
        assert!((ald - laplace).abs() < 1e-10, "{ald} vs {laplace}");
    }
}

fn perm_strategy(n: usize) -> impl Strategy<Value = Permutation> {
    Just((0..n).collect::<Vec<usize>>())
        .prop_shuffle()
        .prop_map(|v| Permutation::new(v).unwrap())
}

proptest! {
    #[test]
    fn metrics_are_a_metric(a in perm_strategy(9), b in perm_strategy(9)) {
        let ab = mismatch_metrics(&a, &b).unwrap();
        let ba = mismatch_metrics(&b, &a).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!(ab.entrywise_l1 >= 0.0);
        prop_assert_eq!(ab.entrywise_l1 == 0.0, a == b);
        prop_assert_eq!(ab.entrywise_l1, 2.0 * ab.displaced.unwrap() as f64);
        let dense = mismatch_metrics(&a.to_matrix(), &b.to_matrix()).unwrap();
        prop_assert_eq!(dense, ab);
    }
}

#[test]
fn posterior_mean_l1_matches_hand_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 4;
    let mut m = DMatrix::<f64>::zeros(n, n);
    let perms: Vec<Permutation> = (0..5)
        .map(|_| {
            let mut v: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                v.swap(i, rng.random_range(0..=i));
            }
            Permutation::new(v).unwrap()
        })
        .collect();
    for p in &perms {
        for i in 0..n {
            m[(i, p.get(i))] += 0.2;
        }
    }
    let truth = Permutation::identity(n);
    let mut want = 0.0;
    for i in 0..n {
        for j in 0..n {
            let t = if i == j { 1.0 } else { 0.0 };
            want += (m[(i, j)] - t).abs();
        }
    }
    let got = mismatch_metrics(&m, &truth).unwrap();
    assert!((got.entrywise_l1 - want).abs() < 1e-12);
}
