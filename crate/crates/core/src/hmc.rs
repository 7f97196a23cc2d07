//! Hamiltonian Monte Carlo with a leapfrog integrator and identity mass matrix.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Energy error beyond which a trajectory is treated as divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1000.0;

/// An unnormalized log-density with gradient.
pub trait LogDensity {
    fn dim(&self) -> usize;

    /// Returns `log pi(q)` and writes its gradient into `grad`.
    fn log_density_and_grad(&self, q: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmcConfig {
    pub step_size: f64,
    pub n_leapfrog: usize,
    pub target_accept: f64,
    pub adapt_iters: usize,
}

impl Default for HmcConfig {
    fn default() -> Self {
        Self {
            step_size: 0.05,
            n_leapfrog: 20,
            target_accept: 0.75,
            adapt_iters: 200,
        }
    }
}

impl HmcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config("HMC step_size must be positive".into()));
        }
        if self.n_leapfrog == 0 {
            return Err(Error::Config("HMC n_leapfrog must be at least 1".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config("HMC target_accept must be in (0,1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HmcDiagnostics {
    pub transitions: usize,
    pub accepted: usize,
    pub divergences: usize,
    sum_abs_energy_error: f64,
}

impl HmcDiagnostics {
    pub fn accept_rate(&self) -> f64 {
        if self.transitions == 0 {
            0.0
        } else {
            self.accepted as f64 / self.transitions as f64
        }
    }

    /// Mean `|dH|` over non-divergent transitions.
    pub fn mean_energy_error(&self) -> f64 {
        let ok = self.transitions - self.divergences;
        if ok == 0 {
            0.0
        } else {
            self.sum_abs_energy_error / ok as f64
        }
    }

    pub fn record(&mut self, t: &Transition) {
        self.transitions += 1;
        self.accepted += usize::from(t.accepted);
        if t.divergent {
            self.divergences += 1;
        } else {
            self.sum_abs_energy_error += t.energy_error.abs();
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.transitions += other.transitions;
        self.accepted += other.accepted;
        self.divergences += other.divergences;
        self.sum_abs_energy_error += other.sum_abs_energy_error;
    }
}

/// Phase-space point after integration.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub log_density: f64,
    pub divergent: bool,
}

/// `n_steps` leapfrog steps from `(q, p)`:
///
/// ```text
/// p <- p + eps/2 * grad log pi(q)
/// q <- q + eps * p
/// p <- p + eps/2 * grad log pi(q)
/// ```
pub fn leapfrog<T: LogDensity + ?Sized>(
    target: &T,
    q: &[f64],
    p: &[f64],
    eps: f64,
    n_steps: usize,
) -> Trajectory {
    let dim = q.len();
    assert_eq!(p.len(), dim, "momentum dimension");
    assert_eq!(target.dim(), dim, "target dimension");
    let mut q = q.to_vec();
    let mut p = p.to_vec();
    let mut grad = vec![0.0; dim];
    let mut lp = target.log_density_and_grad(&q, &mut grad);
    for _ in 0..n_steps {
        if !lp.is_finite() {
            break;
        }
        for (pi, gi) in p.iter_mut().zip(&grad) {
            *pi += 0.5 * eps * gi;
        }
        for (qi, pi) in q.iter_mut().zip(&p) {
            *qi += eps * pi;
        }
        lp = target.log_density_and_grad(&q, &mut grad);
        for (pi, gi) in p.iter_mut().zip(&grad) {
            *pi += 0.5 * eps * gi;
        }
    }
    let divergent = !lp.is_finite()
        || !q.iter().chain(&p).chain(&grad).all(|v| v.is_finite());
    Trajectory {
        q,
        p,
        log_density: lp,
        divergent,
    }
}

/// Outcome of one HMC transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub accepted: bool,
    /// `H(q', p') - H(q, p)`.
    pub energy_error: f64,
    /// `min(1, exp(-dH))`, 0 for divergent trajectories.
    pub accept_prob: f64,
    pub divergent: bool,
}

fn kinetic(p: &[f64]) -> f64 {
    0.5 * p.iter().map(|v| v * v).sum::<f64>()
}

/// One HMC transition with step size `eps`; `q` is replaced by the next state.
pub fn hmc_transition_with<T, R>(
    q: &mut Vec<f64>,
    target: &T,
    eps: f64,
    n_leapfrog: usize,
    rng: &mut R,
) -> Transition
where
    T: LogDensity + ?Sized,
    R: Rng + ?Sized,
{
    let p0: Vec<f64> = (0..q.len()).map(|_| rng.sample(StandardNormal)).collect();
    let mut scratch = vec![0.0; q.len()];
    let lp0 = target.log_density_and_grad(q, &mut scratch);
    let h0 = -lp0 + kinetic(&p0);
    let traj = leapfrog(target, q, &p0, eps, n_leapfrog);
    let h1 = -traj.log_density + kinetic(&traj.p);
    let energy_error = h1 - h0;
    let divergent = traj.divergent || !energy_error.is_finite() || energy_error.abs() > DIVERGENCE_THRESHOLD;
    let accept_prob = if divergent {
        0.0
    } else {
        (-energy_error).exp().min(1.0)
    };
    let u: f64 = rng.random();
    let accepted = !divergent && u < accept_prob;
    if accepted {
        *q = traj.q;
    }
    Transition {
        accepted,
        energy_error,
        accept_prob,
        divergent,
    }
}

/// One HMC transition using the configured step size.
pub fn hmc_transition<T, R>(q: &mut Vec<f64>, target: &T, cfg: &HmcConfig, rng: &mut R) -> Transition
where
    T: LogDensity + ?Sized,
    R: Rng + ?Sized,
{
    hmc_transition_with(q, target, cfg.step_size, cfg.n_leapfrog, rng)
}

/// Robbins-Monro step-size tuning on the log scale:
/// `log eps <- log eps + t^(-0.6) * (a_t - target)`. The tuned value is the
/// average of `log eps` over the second half of the updates.
#[derive(Debug, Clone)]
pub struct StepSizeAdapter {
    log_eps: f64,
    target: f64,
    t: usize,
    total: usize,
    avg_sum: f64,
    avg_count: usize,
}

impl StepSizeAdapter {
    pub fn new(initial: f64, target: f64, total: usize) -> Self {
        Self {
            log_eps: initial.ln(),
            target,
            t: 0,
            total,
            avg_sum: 0.0,
            avg_count: 0,
        }
    }

    pub fn current(&self) -> f64 {
        self.log_eps.exp()
    }

    pub fn update(&mut self, accept_prob: f64) {
        self.t += 1;
        let gain = (self.t as f64).powf(-0.6);
        self.log_eps += gain * (accept_prob - self.target);
        self.log_eps = self.log_eps.clamp(-20.0, 5.0);
        if 2 * self.t > self.total {
            self.avg_sum += self.log_eps;
            self.avg_count += 1;
        }
    }

    /// Final step size; the current value if no averaging window was reached.
    pub fn tuned(&self) -> f64 {
        if self.avg_count == 0 {
            self.current()
        } else {
            (self.avg_sum / self.avg_count as f64).exp()
        }
    }
}

/// Runs `cfg.adapt_iters` adapting transitions from `q` and returns the tuned step size.
/// `q` is left at the last warmup state.
pub fn warmup_adapt<T, R>(q: &mut Vec<f64>, target: &T, cfg: &HmcConfig, rng: &mut R) -> f64
where
    T: LogDensity + ?Sized,
    R: Rng + ?Sized,
{
    if cfg.adapt_iters == 0 {
        return cfg.step_size;
    }
    let mut adapter = StepSizeAdapter::new(cfg.step_size, cfg.target_accept, cfg.adapt_iters);
    for _ in 0..cfg.adapt_iters {
        let t = hmc_transition_with(q, target, adapter.current(), cfg.n_leapfrog, rng);
        adapter.update(t.accept_prob);
    }
    adapter.tuned()
}

/// Independent standard normal target, `log pi(q) = -|q|^2 / 2`.
#[derive(Debug, Clone, Copy)]
pub struct StandardNormalTarget(pub usize);

impl LogDensity for StandardNormalTarget {
    fn dim(&self) -> usize {
        self.0
    }

    fn log_density_and_grad(&self, q: &[f64], grad: &mut [f64]) -> f64 {
        for (g, x) in grad.iter_mut().zip(q) {
            *g = -x;
        }
        -0.5 * q.iter().map(|x| x * x).sum::<f64>()
    }
}
