//! Gibbs sampler and MC-EM fits for the fractional posterior.
//!
//! Each sweep refreshes `(beta, log sigma2)` with HMC at the current permutation,
//! rebuilds the cost matrix at the new regression state and then either runs the
//! checkerboard chain (Gibbs) or jumps to the assignment optimum (MC-EM).

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assign::{build_cost_matrix, log_weights, solve_assignment};
use crate::error::{Error, Result};
use crate::hmc::{hmc_transition_with, HmcDiagnostics, StepSizeAdapter};
use crate::model::{
    mismatch_metrics, Dataset, FitConfig, FractionalTarget, Permutation, RegressionState,
};
use crate::permchain::{run_chain, ChainDiagnostics};

/// Retained posterior draws.
#[derive(Debug, Clone, PartialEq)]
pub struct Draws {
    pub beta_trace: Vec<Vec<f64>>,
    pub sigma2_trace: Vec<f64>,
    pub perm_trace: Vec<Permutation>,
    /// Post-warmup HMC statistics.
    pub hmc: HmcDiagnostics,
    /// Post-warmup permutation-chain statistics.
    pub perm_chain: ChainDiagnostics,
    pub step_size: f64,
    /// Wall-clock seconds per sweep, warmup included.
    pub wall_time_per_iter: f64,
}

impl Draws {
    pub fn len(&self) -> usize {
        self.beta_trace.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta_trace.is_empty()
    }

    /// Equality of the sampled values, ignoring timing.
    pub fn same_samples(&self, other: &Self) -> bool {
        self.beta_trace == other.beta_trace
            && self.sigma2_trace == other.sigma2_trace
            && self.perm_trace == other.perm_trace
    }
}

/// Ridge estimate at the identity pairing and its mean squared residual.
pub fn initial_state(data: &Dataset, cfg: &FitConfig) -> Result<RegressionState> {
    let x = data.x();
    let y = DVector::from_column_slice(data.y());
    let lambda = 1.0 / cfg.priors.beta_prior_var;
    let gram = x.tr_mul(x) + DMatrix::identity(data.d(), data.d()) * lambda;
    let rhs = x.tr_mul(&y);
    let beta = gram
        .cholesky()
        .ok_or(Error::NonFinite("ridge normal equations"))?
        .solve(&rhs);
    let resid = &y - x * &beta;
    let sigma2 = match cfg.fixed_sigma2 {
        Some(s) => s,
        None => (resid.norm_squared() / data.n() as f64).max(1e-12),
    };
    RegressionState::new(beta.data.into(), sigma2)
}

/// Mode of the permutation given `state`, or the identity when that mode lies
/// outside the `k_bound` support.
pub fn initial_permutation(
    data: &Dataset,
    state: &RegressionState,
    cfg: &FitConfig,
) -> Result<Permutation> {
    let cost = build_cost_matrix(data, state, cfg.alpha, cfg.family)?;
    let opt = solve_assignment(&cost);
    Ok(if cfg.priors.admits(&opt) {
        opt
    } else {
        Permutation::identity(data.n())
    })
}

fn to_coords(state: &RegressionState, cfg: &FitConfig) -> Vec<f64> {
    match cfg.fixed_sigma2 {
        Some(_) => state.beta.clone(),
        None => state.to_unconstrained(),
    }
}

fn from_coords(q: &[f64], cfg: &FitConfig) -> RegressionState {
    match cfg.fixed_sigma2 {
        Some(s) => RegressionState {
            beta: q.to_vec(),
            sigma2: s,
        },
        None => RegressionState::from_unconstrained(q),
    }
}

fn check_data(data: &Dataset, cfg: &FitConfig) -> Result<()> {
    cfg.validate()?;
    if data.n() < 2 {
        return Err(Error::InvalidInput("need at least two observations".into()));
    }
    Ok(())
}

/// Runs the Gibbs sampler with a generator seeded from `cfg.seed`.
pub fn gibbs_fit_seeded(data: &Dataset, cfg: &FitConfig) -> Result<Draws> {
    gibbs_fit(data, cfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed))
}

/// Gibbs sampler over `(beta, sigma2)` and the permutation.
pub fn gibbs_fit<R: Rng + ?Sized>(data: &Dataset, cfg: &FitConfig, rng: &mut R) -> Result<Draws> {
    check_data(data, cfg)?;
    let start = Instant::now();
    let mut state = initial_state(data, cfg)?;
    let mut perm = initial_permutation(data, &state, cfg)?;
    let mut q = to_coords(&state, cfg);

    let warmup = cfg.warmup_iters;
    let mut adapter = StepSizeAdapter::new(
        cfg.hmc.step_size,
        cfg.hmc.target_accept,
        warmup * cfg.hmc_per_sweep,
    );
    let mut step_size = cfg.hmc.step_size;
    let kept = (cfg.gibbs_iters - warmup).div_ceil(cfg.thin);
    let mut draws = Draws {
        beta_trace: Vec::with_capacity(kept),
        sigma2_trace: Vec::with_capacity(kept),
        perm_trace: Vec::with_capacity(kept),
        hmc: HmcDiagnostics::default(),
        perm_chain: ChainDiagnostics::default(),
        step_size,
        wall_time_per_iter: 0.0,
    };

    for sweep in 0..cfg.gibbs_iters {
        let adapting = sweep < warmup;
        if sweep == warmup && warmup > 0 {
            step_size = adapter.tuned();
        }
        let target = FractionalTarget::new(data, &perm, cfg);
        for _ in 0..cfg.hmc_per_sweep {
            let eps = if adapting { adapter.current() } else { step_size };
            let t = hmc_transition_with(&mut q, &target, eps, cfg.hmc.n_leapfrog, rng);
            if adapting {
                adapter.update(t.accept_prob);
            } else {
                draws.hmc.record(&t);
            }
        }
        state = from_coords(&q, cfg);

        let cost = build_cost_matrix(data, &state, cfg.alpha, cfg.family)?;
        let weights = log_weights(&cost);
        let (chain, diag) = run_chain(
            perm,
            &weights,
            cfg.perm_chain_steps_per_gibbs,
            cfg.priors.k_bound,
            rng,
        )?;
        perm = chain.into_perm();

        if !adapting {
            draws.perm_chain.merge(&diag);
            if (sweep - warmup).is_multiple_of(cfg.thin) {
                draws.beta_trace.push(state.beta.clone());
                draws.sigma2_trace.push(state.sigma2);
                draws.perm_trace.push(perm.clone());
            }
        }
    }
    draws.step_size = step_size;
    draws.wall_time_per_iter = start.elapsed().as_secs_f64() / cfg.gibbs_iters as f64;
    Ok(draws)
}

/// One MC-EM iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct McemStep {
    /// Monte Carlo estimate of `(beta, sigma2)` at which the assignment was solved.
    pub state: RegressionState,
    pub perm: Permutation,
    /// `<B, L>` of the incoming and the solved permutation under the same cost matrix.
    pub objective_before: f64,
    pub objective_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McemTrajectory {
    pub steps: Vec<McemStep>,
    pub converged: bool,
    pub hmc: HmcDiagnostics,
}

impl McemTrajectory {
    pub fn final_perm(&self) -> Option<&Permutation> {
        self.steps.last().map(|s| &s.perm)
    }

    pub fn final_state(&self) -> Option<&RegressionState> {
        self.steps.last().map(|s| &s.state)
    }

    /// Whether every permutation update kept or lowered the assignment objective.
    pub fn objective_monotone(&self) -> bool {
        self.steps.iter().all(|s| {
            let tol = 1e-9 * s.objective_before.abs().max(1.0);
            s.objective_after <= s.objective_before + tol
        })
    }
}

pub fn mcem_fit_seeded(data: &Dataset, cfg: &FitConfig) -> Result<McemTrajectory> {
    mcem_fit(data, cfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed))
}

/// Mode-seeking alternation: HMC refreshes of `(beta, sigma2)` averaged into a
/// running Monte Carlo estimate, then the permutation jumps to the optimal
/// assignment at that estimate. The running average restarts whenever the
/// permutation changes. Stops once the permutation is unchanged and the relative
/// change of the `beta` estimate falls below `cfg.mcem_tol`.
pub fn mcem_fit<R: Rng + ?Sized>(
    data: &Dataset,
    cfg: &FitConfig,
    rng: &mut R,
) -> Result<McemTrajectory> {
    check_data(data, cfg)?;
    let init = initial_state(data, cfg)?;
    let mut perm = initial_permutation(data, &init, cfg)?;
    let mut q = to_coords(&init, cfg);
    let mut adapter = StepSizeAdapter::new(
        cfg.hmc.step_size,
        cfg.hmc.target_accept,
        cfg.warmup_iters * cfg.hmc_per_sweep,
    );
    let mut step_size = cfg.hmc.step_size;
    let mut hmc = HmcDiagnostics::default();

    let d = data.d();
    let mut sum_beta = vec![0.0; d];
    let mut sum_sigma2 = 0.0;
    let mut count = 0usize;
    let mut prev_beta: Option<Vec<f64>> = None;
    let mut steps = Vec::new();
    let mut converged = false;

    for iter in 0..cfg.mcem_max_iters {
        let adapting = iter < cfg.warmup_iters;
        if iter == cfg.warmup_iters && iter > 0 {
            step_size = adapter.tuned();
        }
        let target = FractionalTarget::new(data, &perm, cfg);
        for _ in 0..cfg.hmc_per_sweep {
            let eps = if adapting { adapter.current() } else { step_size };
            let t = hmc_transition_with(&mut q, &target, eps, cfg.hmc.n_leapfrog, rng);
            if adapting {
                adapter.update(t.accept_prob);
            }
            hmc.record(&t);
            let s = from_coords(&q, cfg);
            for (acc, b) in sum_beta.iter_mut().zip(&s.beta) {
                *acc += b;
            }
            sum_sigma2 += s.sigma2;
            count += 1;
        }
        let estimate = RegressionState {
            beta: sum_beta.iter().map(|b| b / count as f64).collect(),
            sigma2: sum_sigma2 / count as f64,
        };

        let cost = build_cost_matrix(data, &estimate, cfg.alpha, cfg.family)?;
        let solved = solve_assignment(&cost);
        let next = if cfg.priors.admits(&solved) {
            solved
        } else {
            perm.clone()
        };
        let objective_before = cost.objective(&perm);
        let objective_after = cost.objective(&next);
        debug_assert!(objective_after <= objective_before + 1e-9 * objective_before.abs().max(1.0));

        let unchanged = next == perm;
        let small_move = prev_beta.as_ref().is_some_and(|prev| {
            let num: f64 = prev
                .iter()
                .zip(&estimate.beta)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let den = prev.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
            num / den < cfg.mcem_tol
        });
        if unchanged {
            prev_beta = Some(estimate.beta.clone());
        } else {
            sum_beta.fill(0.0);
            sum_sigma2 = 0.0;
            count = 0;
            prev_beta = None;
        }
        steps.push(McemStep {
            state: estimate,
            perm: next.clone(),
            objective_before,
            objective_after,
        });
        perm = next;
        if unchanged && small_move {
            converged = true;
            break;
        }
    }
    Ok(McemTrajectory {
        steps,
        converged,
        hmc,
    })
}

/// Known truth to score a fit against.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub beta0: Vec<f64>,
    pub pi0: Permutation,
    /// Soft reference with split mass on ambiguous rows.
    pub pi0_target: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceMetrics {
    /// `(1/d) sum_i |beta_hat_i - beta0_i|`.
    pub mean_abs_beta_error: f64,
    pub pi_l1_raw: f64,
    /// `pi_l1_raw / n^2`.
    pub pi_l1_norm: f64,
    pub pi_target_l1_raw: Option<f64>,
    pub pi_target_l1_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub draws: usize,
    pub beta_mean: Vec<f64>,
    /// Per-coordinate 2.5% and 97.5% quantiles.
    pub beta_ci: Vec<(f64, f64)>,
    pub sigma2_mean: f64,
    pub pi_mean: DMatrix<f64>,
    pub metrics: Option<ReferenceMetrics>,
}

/// Linear-interpolation quantile of sorted data (type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Average of one-hot permutation matrices.
pub fn permutation_mean(perms: &[Permutation]) -> Result<DMatrix<f64>> {
    let n = perms
        .first()
        .ok_or_else(|| Error::InvalidInput("empty permutation trace".into()))?
        .len();
    let w = 1.0 / perms.len() as f64;
    let mut m = DMatrix::zeros(n, n);
    for p in perms {
        if p.len() != n {
            return Err(Error::DimensionMismatch {
                what: "permutation length in trace",
                expected: n,
                got: p.len(),
            });
        }
        for (i, &j) in p.as_slice().iter().enumerate() {
            m[(i, j)] += w;
        }
    }
    Ok(m)
}

pub fn summarize(draws: &Draws, reference: Option<&Reference>) -> Result<PosteriorSummary> {
    let count = draws.beta_trace.len();
    if count == 0 || draws.sigma2_trace.len() != count || draws.perm_trace.len() != count {
        return Err(Error::InvalidInput("empty or misaligned draw traces".into()));
    }
    let d = draws.beta_trace[0].len();
    let mut beta_mean = vec![0.0; d];
    let mut beta_ci = Vec::with_capacity(d);
    for k in 0..d {
        let mut col: Vec<f64> = draws.beta_trace.iter().map(|b| b[k]).collect();
        beta_mean[k] = col.iter().sum::<f64>() / count as f64;
        col.sort_by(f64::total_cmp);
        beta_ci.push((quantile_sorted(&col, 0.025), quantile_sorted(&col, 0.975)));
    }
    let sigma2_mean = draws.sigma2_trace.iter().sum::<f64>() / count as f64;
    let pi_mean = permutation_mean(&draws.perm_trace)?;

    let metrics = reference
        .map(|r| reference_metrics(&beta_mean, &pi_mean, r))
        .transpose()?;
    Ok(PosteriorSummary {
        draws: count,
        beta_mean,
        beta_ci,
        sigma2_mean,
        pi_mean,
        metrics,
    })
}

pub fn reference_metrics(
    beta_hat: &[f64],
    pi_hat: &DMatrix<f64>,
    reference: &Reference,
) -> Result<ReferenceMetrics> {
    if reference.beta0.len() != beta_hat.len() {
        return Err(Error::DimensionMismatch {
            what: "reference beta length",
            expected: beta_hat.len(),
            got: reference.beta0.len(),
        });
    }
    let n2 = (pi_hat.nrows() * pi_hat.nrows()) as f64;
    let mean_abs_beta_error = beta_hat
        .iter()
        .zip(&reference.beta0)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / beta_hat.len() as f64;
    let pi_l1_raw = mismatch_metrics(pi_hat, &reference.pi0)?.entrywise_l1;
    let pi_target_l1_raw = reference
        .pi0_target
        .as_ref()
        .map(|t| mismatch_metrics(pi_hat, t).map(|m| m.entrywise_l1))
        .transpose()?;
    Ok(ReferenceMetrics {
        mean_abs_beta_error,
        pi_l1_raw,
        pi_l1_norm: pi_l1_raw / n2,
        pi_target_l1_raw,
        pi_target_l1_norm: pi_target_l1_raw.map(|v| v / n2),
    })
}
