//! Markov chain over permutation matrices with checkerboard-swap proposals.
//!
//! A permutation matrix has unit row and column margins. Exchanging a 2x2
//! checkerboard submatrix `[[1,0],[0,1]] <-> [[0,1],[1,0]]` keeps the margins,
//! which in the index representation is a transposition of `sigma` at two rows.
//! Proposals are accepted with the Barker probability `P(B) / (P(B) + P(A))`
//! where `P(H)` is proportional to `exp(sum_i W[i, sigma_H(i)])`.

use rand::Rng;

use crate::assign::LogWeightMatrix;
use crate::error::{Error, Result};
use crate::model::Permutation;

/// Largest side handled by [`enumerate_exact`].
pub const MAX_ENUMERATE: usize = 8;

/// Current permutation with cached log-weight and displacement.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    perm: Permutation,
    inverse: Vec<usize>,
    log_weight: f64,
    displaced: usize,
}

impl ChainState {
    pub fn new(perm: Permutation, weights: &LogWeightMatrix) -> Result<Self> {
        if perm.len() != weights.n() {
            return Err(Error::DimensionMismatch {
                what: "permutation length vs weight matrix",
                expected: weights.n(),
                got: perm.len(),
            });
        }
        let inverse = perm.inverse().into_vec();
        let log_weight = weights.log_weight(&perm);
        let displaced = perm.displaced();
        Ok(Self {
            perm,
            inverse,
            log_weight,
            displaced,
        })
    }

    pub fn perm(&self) -> &Permutation {
        &self.perm
    }

    pub fn into_perm(self) -> Permutation {
        self.perm
    }

    pub fn log_weight(&self) -> f64 {
        self.log_weight
    }

    pub fn displaced(&self) -> usize {
        self.displaced
    }

    pub fn n(&self) -> usize {
        self.perm.len()
    }

    /// `A(r, c)` of the underlying 0/1 matrix.
    #[inline]
    pub fn entry(&self, r: usize, c: usize) -> bool {
        self.perm.get(r) == c
    }

    /// Recomputes the cached log-weight against `weights`.
    pub fn refresh(&mut self, weights: &LogWeightMatrix) {
        self.log_weight = weights.log_weight(&self.perm);
    }

    fn apply_swap(&mut self, r1: usize, r2: usize, delta: f64) {
        let before = usize::from(self.perm.get(r1) != r1) + usize::from(self.perm.get(r2) != r2);
        self.perm.swap_rows(r1, r2);
        self.inverse[self.perm.get(r1)] = r1;
        self.inverse[self.perm.get(r2)] = r2;
        let after = usize::from(self.perm.get(r1) != r1) + usize::from(self.perm.get(r2) != r2);
        self.displaced = self.displaced + after - before;
        self.log_weight += delta;
    }

    /// Displacement the state would have after exchanging rows `r1` and `r2`.
    fn displaced_after_swap(&self, r1: usize, r2: usize) -> usize {
        let (c1, c2) = (self.perm.get(r1), self.perm.get(r2));
        let before = usize::from(c1 != r1) + usize::from(c2 != r2);
        let after = usize::from(c2 != r1) + usize::from(c1 != r2);
        self.displaced + after - before
    }
}

/// The four corners of a proposed 2x2 exchange.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SwapProposal {
    pub r1: usize,
    pub c1: usize,
    pub r2: usize,
    pub c2: usize,
    pub is_checkerboard: bool,
}

impl SwapProposal {
    fn inspect(state: &ChainState, r1: usize, c1: usize, r2: usize, c2: usize) -> Self {
        let is_checkerboard = r1 != r2 && c1 != c2 && {
            let (a, b) = (state.entry(r1, c1), state.entry(r1, c2));
            let (c, d) = (state.entry(r2, c1), state.entry(r2, c2));
            (a && d && !b && !c) || (!a && !d && b && c)
        };
        Self {
            r1,
            c1,
            r2,
            c2,
            is_checkerboard,
        }
    }
}

/// Draws `(r1, c1)` uniformly and completes the proposal.
pub fn propose<R: Rng + ?Sized>(state: &ChainState, rng: &mut R) -> SwapProposal {
    let n = state.n();
    let r1 = rng.random_range(0..n);
    let c1 = rng.random_range(0..n);
    propose_from(state, r1, c1, rng)
}

/// Completes a proposal from a given first corner `(r1, c1)`.
///
/// If `A(r1, c1) = 1`: `c2` uniform among the zero entries of row `r1`, then `r2`
/// the row holding the 1 of column `c2`. Otherwise: `r2` the row holding the 1 of
/// column `c1`, then `c2` uniform among the zero entries of row `r2`.
pub fn propose_from<R: Rng + ?Sized>(
    state: &ChainState,
    r1: usize,
    c1: usize,
    rng: &mut R,
) -> SwapProposal {
    let n = state.n();
    if n < 2 {
        return SwapProposal::inspect(state, r1, c1, r1, c1);
    }
    let (r2, c2) = if state.entry(r1, c1) {
        let c2 = uniform_skipping(rng, n, c1);
        (state.inverse[c2], c2)
    } else {
        let r2 = state.inverse[c1];
        let c2 = uniform_skipping(rng, n, state.perm.get(r2));
        (r2, c2)
    };
    SwapProposal::inspect(state, r1, c1, r2, c2)
}

/// Uniform over `0..n` without `skip`.
fn uniform_skipping<R: Rng + ?Sized>(rng: &mut R, n: usize, skip: usize) -> usize {
    let k = rng.random_range(0..n - 1);
    if k >= skip {
        k + 1
    } else {
        k
    }
}

/// Barker acceptance `1 / (1 + exp(-delta))`.
pub fn barker_accept_prob(delta_logw: f64) -> f64 {
    if delta_logw >= 0.0 {
        1.0 / (1.0 + (-delta_logw).exp())
    } else {
        let e = delta_logw.exp();
        e / (1.0 + e)
    }
}

/// Result of a single chain step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    NotCheckerboard,
    OutOfSupport,
    Rejected,
    Accepted,
}

/// Change in log-weight from exchanging the columns of rows `r1` and `r2`.
#[inline]
fn swap_delta(state: &ChainState, weights: &LogWeightMatrix, r1: usize, r2: usize) -> f64 {
    let (c1, c2) = (state.perm.get(r1), state.perm.get(r2));
    weights.get(r1, c2) + weights.get(r2, c1) - weights.get(r1, c1) - weights.get(r2, c2)
}

/// Accept or reject `proposal` with uniform draw `u`.
pub fn resolve(
    state: &mut ChainState,
    weights: &LogWeightMatrix,
    proposal: &SwapProposal,
    k_bound: Option<usize>,
    u: f64,
) -> StepOutcome {
    if !proposal.is_checkerboard {
        return StepOutcome::NotCheckerboard;
    }
    let (r1, r2) = (proposal.r1, proposal.r2);
    if let Some(k) = k_bound {
        if state.displaced_after_swap(r1, r2) > k {
            return StepOutcome::OutOfSupport;
        }
    }
    let delta = swap_delta(state, weights, r1, r2);
    if u < barker_accept_prob(delta) {
        state.apply_swap(r1, r2, delta);
        StepOutcome::Accepted
    } else {
        StepOutcome::Rejected
    }
}

/// One proposal plus accept/reject cycle.
pub fn step<R: Rng + ?Sized>(
    state: &mut ChainState,
    weights: &LogWeightMatrix,
    k_bound: Option<usize>,
    rng: &mut R,
) -> StepOutcome {
    let proposal = propose(state, rng);
    if !proposal.is_checkerboard {
        return StepOutcome::NotCheckerboard;
    }
    let u: f64 = rng.random();
    resolve(state, weights, &proposal, k_bound, u)
}

/// Counters collected by [`run_chain`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ChainDiagnostics {
    pub steps: usize,
    pub checkerboard: usize,
    pub out_of_support: usize,
    pub accepted: usize,
}

impl ChainDiagnostics {
    /// Accepted swaps over checkerboard proposals; 1 when none were made.
    pub fn accept_rate(&self) -> f64 {
        if self.checkerboard == 0 {
            1.0
        } else {
            self.accepted as f64 / self.checkerboard as f64
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.steps += other.steps;
        self.checkerboard += other.checkerboard;
        self.out_of_support += other.out_of_support;
        self.accepted += other.accepted;
    }

    fn record(&mut self, outcome: StepOutcome) {
        self.steps += 1;
        match outcome {
            StepOutcome::NotCheckerboard => {}
            StepOutcome::OutOfSupport => {
                self.checkerboard += 1;
                self.out_of_support += 1;
            }
            StepOutcome::Rejected => self.checkerboard += 1,
            StepOutcome::Accepted => {
                self.checkerboard += 1;
                self.accepted += 1;
            }
        }
    }
}

/// Runs `steps` chain steps from `init`.
pub fn run_chain<R: Rng + ?Sized>(
    init: Permutation,
    weights: &LogWeightMatrix,
    steps: usize,
    k_bound: Option<usize>,
    rng: &mut R,
) -> Result<(ChainState, ChainDiagnostics)> {
    if let Some(k) = k_bound {
        let displaced = init.displaced();
        if displaced > k {
            return Err(Error::OutOfSupport { displaced, bound: k });
        }
    }
    let mut state = ChainState::new(init, weights)?;
    let mut diag = ChainDiagnostics::default();
    for _ in 0..steps {
        diag.record(step(&mut state, weights, k_bound, rng));
    }
    Ok((state, diag))
}

/// Exact distribution over all admissible permutations, `P(H) ~ exp(sum_i W[i, sigma_H(i)])`.
pub fn enumerate_exact(
    weights: &LogWeightMatrix,
    k_bound: Option<usize>,
) -> Result<Vec<(Permutation, f64)>> {
    let n = weights.n();
    if n > MAX_ENUMERATE {
        return Err(Error::TooLarge {
            n,
            max: MAX_ENUMERATE,
        });
    }
    let mut out = Vec::new();
    let mut sigma: Vec<usize> = (0..n).collect();
    loop {
        let perm = Permutation::new(sigma.clone()).expect("lexicographic walk stays bijective");
        if k_bound.is_none_or(|k| perm.displaced() <= k) {
            let lw = weights.log_weight(&perm);
            out.push((perm, lw));
        }
        if !next_permutation(&mut sigma) {
            break;
        }
    }
    let max = out.iter().map(|(_, lw)| *lw).fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = out.iter().map(|(_, lw)| (lw - max).exp()).sum();
    for (_, lw) in &mut out {
        *lw = (*lw - max).exp() / total;
    }
    Ok(out)
}

fn next_permutation(v: &mut [usize]) -> bool {
    let n = v.len();
    if n < 2 {
        return false;
    }
    let Some(i) = (0..n - 1).rev().find(|&i| v[i] < v[i + 1]) else {
        return false;
    };
    let j = (i + 1..n).rev().find(|&j| v[j] > v[i]).unwrap();
    v.swap(i, j);
    v[i + 1..].reverse();
    true
}
