use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sparseperm::assign::SquareMatrix;
use sparseperm::permchain::{barker_accept_prob, propose, step};
use sparseperm::*;

fn random_weights(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> LogWeightMatrix {
    LogWeightMatrix::new(SquareMatrix::from_fn(n, |_, _| scale * rng.sample::<f64, _>(StandardNormal)))
        .unwrap()
}

/// Base-n code of a permutation of length n.
fn code(p: &Permutation) -> usize {
    let n = p.len();
    p.as_slice().iter().fold(0, |acc, &s| acc * n + s)
}

fn empirical_tv(
    w: &LogWeightMatrix,
    k_bound: Option<usize>,
    steps: usize,
    seed: u64,
) -> f64 {
    let n = w.n();
    let exact = enumerate_exact(w, k_bound).unwrap();
    let mut counts = vec![0u64; n.pow(n as u32)];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = ChainState::new(Permutation::identity(n), w).unwrap();
    for _ in 0..10_000 {
        step(&mut state, w, k_bound, &mut rng);
    }
    for _ in 0..steps {
        step(&mut state, w, k_bound, &mut rng);
        counts[code(state.perm())] += 1;
    }
    let total: u64 = counts.iter().sum();
    let in_support: u64 = exact.iter().map(|(p, _)| counts[code(p)]).sum();
    assert_eq!(in_support, total, "chain left the support");
    0.5 * exact
        .iter()
        .map(|(p, prob)| (counts[code(p)] as f64 / total as f64 - prob).abs())
        .sum::<f64>()
}

/// Exact probability that a proposal from `state` exchanges rows `{a, b}`, by walking
/// the draw tree: `(r1, c1)` uniform, then the second corner.
fn proposal_tree(state: &ChainState) -> BTreeMap<Option<(usize, usize)>, f64> {
    let n = state.n();
    let sigma = state.perm().as_slice();
    let inv = state.perm().inverse();
    let mut out = BTreeMap::new();
    let first = 1.0 / (n * n) as f64;
    let second = 1.0 / (n - 1) as f64;
    for r1 in 0..n {
        for c1 in 0..n {
            for c2 in (0..n).filter(|&c| c != c1) {
                let key = if sigma[r1] == c1 {
                    let r2 = inv.get(c2);
                    Some((r1.min(r2), r1.max(r2)))
                } else {
                    let r2 = inv.get(c1);
                    // c2 ranges over the zeros of row r2, i.e. every column but c1.
                    if sigma[r1] == c2 {
                        Some((r1.min(r2), r1.max(r2)))
                    } else {
                        None
                    }
                };
                *out.entry(key).or_insert(0.0) += first * second;
            }
        }
    }
    out
}

#[test]
fn proposal_frequencies_match_draw_tree() {
    let w = LogWeightMatrix::zeros(4);
    let state = ChainState::new(Permutation::new(vec![2, 0, 1, 3]).unwrap(), &w).unwrap();
    let exact = proposal_tree(&state);
    assert!((exact.values().sum::<f64>() - 1.0).abs() < 1e-12);

    let draws = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let mut seen: BTreeMap<Option<(usize, usize)>, u64> = BTreeMap::new();
    for _ in 0..draws {
        let p = propose(&state, &mut rng);
        let key = p.is_checkerboard.then(|| (p.r1.min(p.r2), p.r1.max(p.r2)));
        *seen.entry(key).or_insert(0) += 1;
    }
    for (key, &prob) in &exact {
        let freq = *seen.get(key).unwrap_or(&0) as f64 / draws as f64;
        let se = (prob * (1.0 - prob) / draws as f64).sqrt();
        assert!((freq - prob).abs() < 5.0 * se, "{key:?}: {freq} vs {prob}");
    }
    assert!(seen.keys().all(|k| exact.contains_key(k)));
}

#[test]
fn two_state_chain_is_balanced() {
    let w = LogWeightMatrix::zeros(2);
    let mut rng = ChaCha8Rng::seed_from_u64(201);
    let mut state = ChainState::new(Permutation::identity(2), &w).unwrap();
    let steps = 100_000;
    let mut at_identity = 0;
    for _ in 0..steps {
        step(&mut state, &w, None, &mut rng);
        at_identity += usize::from(state.displaced() == 0);
    }
    let frac = at_identity as f64 / steps as f64;
    assert!((frac - 0.5).abs() < 0.01, "{frac}");
}

#[test]
fn occupancy_matches_exact_law_n4() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let w = random_weights(&mut rng, 4, 1.0);
    let tv = empirical_tv(&w, None, 1_000_000, 7);
    assert!(tv < 0.02, "tv {tv}");
}

#[test]
fn occupancy_matches_exact_law_bounded_n5() {
    let mut rng = ChaCha8Rng::seed_from_u64(203);
    let w = random_weights(&mut rng, 5, 1.0);
    let tv = empirical_tv(&w, Some(2), 1_000_000, 8);
    assert!(tv < 0.02, "tv {tv}");
}

#[test]
fn strongly_favoured_permutation_wins() {
    let favoured = Permutation::new(vec![3, 0, 4, 1, 2]).unwrap();
    let w = LogWeightMatrix::new(SquareMatrix::from_fn(5, |i, j| {
        if favoured.get(i) == j { 20.0 } else { 0.0 }
    }))
    .unwrap();
    let exact = enumerate_exact(&w, None).unwrap();
    let mass = exact.iter().find(|(p, _)| p == &favoured).unwrap().1;
    assert!(mass > 0.999);

    let mut hits = 0;
    for seed in 0..200 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (s, diag) = run_chain(Permutation::identity(5), &w, 2_000, None, &mut rng).unwrap();
        hits += usize::from(s.perm() == &favoured);
        assert!(diag.accept_rate() > 0.0 && diag.accept_rate() <= 1.0);
    }
    assert_eq!(hits, 200);
}

#[test]
fn long_run_keeps_cache_and_validity() {
    let mut rng = ChaCha8Rng::seed_from_u64(204);
    let n = 30;
    let w = random_weights(&mut rng, n, 0.5);
    let mut state = ChainState::new(Permutation::identity(n), &w).unwrap();
    for _ in 0..1_000_000 {
        step(&mut state, &w, None, &mut rng);
    }
    // Permutation::new re-validates bijectivity.
    let perm = Permutation::new(state.perm().as_slice().to_vec()).unwrap();
    assert!((w.log_weight(&perm) - state.log_weight()).abs() < 1e-6);
    assert_eq!(perm.displaced(), state.displaced());
}

#[test]
fn bounded_chain_respects_support() {
    let mut rng = ChaCha8Rng::seed_from_u64(205);
    let w = random_weights(&mut rng, 12, 0.3);
    let mut state = ChainState::new(Permutation::identity(12), &w).unwrap();
    for _ in 0..100_000 {
        step(&mut state, &w, Some(3), &mut rng);
        assert!(state.displaced() <= 3);
        assert_eq!(state.displaced(), state.perm().displaced());
    }
}

#[test]
fn enumerate_sums_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(206);
    for n in 1..=8 {
        let w = random_weights(&mut rng, n, 2.0);
        let probs = enumerate_exact(&w, None).unwrap();
        assert_eq!(probs.len(), (1..=n).product::<usize>());
        assert!((probs.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn barker_is_complementary(delta in -700.0f64..700.0) {
        let p = barker_accept_prob(delta);
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!((p + barker_accept_prob(-delta) - 1.0).abs() < 1e-15);
    }
}

#[test]
fn chain_rng_streams_are_reproducible() {
    let mut rng = ChaCha8Rng::seed_from_u64(207);
    let w = random_weights(&mut rng, 10, 1.0);
    let run = || {
        let mut r = ChaCha8Rng::seed_from_u64(99);
        run_chain(Permutation::identity(10), &w, 5_000, None, &mut r).unwrap().0
    };
    assert_eq!(run(), run());
}
