//! Synthetic sparsely permuted regression data and the replicate benchmark harness.
//!
//! Data follow `y = X beta0 + eps` with i.i.d. standard normal covariates. The first
//! `s0` covariate rows are reversed, so response `i < s0` belongs to observed row
//! `s0 - 1 - i`. Optionally observation `s0` is overwritten with a copy of the
//! original first pair, which leaves two equally good matchings for responses `0`
//! and `s0`; the soft reference splits their mass 0.5/0.5.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;

use crate::engine::{gibbs_fit_seeded, summarize, Reference};
use crate::error::{Error, Result};
use crate::hmc::HmcConfig;
use crate::model::{Dataset, FitConfig, LikelihoodFamily, Permutation, PriorConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub d: usize,
    pub s0: usize,
    /// Noise standard deviation (Gaussian) or scale (ALD).
    pub sigma: f64,
    /// Defaults to all ones when `None`.
    pub beta0: Option<Vec<f64>>,
    pub family: LikelihoodFamily,
    pub duplicate_first: bool,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 100,
            d: 20,
            s0: 6,
            sigma: 0.1,
            beta0: None,
            family: LikelihoodFamily::Gaussian,
            duplicate_first: true,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.s0 < 2 || self.s0 >= self.n {
            return Err(Error::Config(format!(
                "s0 must satisfy 2 <= s0 < n, got s0 = {}, n = {}",
                self.s0, self.n
            )));
        }
        if self.d == 0 {
            return Err(Error::Config("d must be at least 1".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config("sigma must be positive".into()));
        }
        if let Some(b) = &self.beta0 {
            if b.len() != self.d {
                return Err(Error::DimensionMismatch {
                    what: "beta0 length",
                    expected: self.d,
                    got: b.len(),
                });
            }
        }
        self.family.validate()
    }

    pub fn beta0(&self) -> Vec<f64> {
        self.beta0.clone().unwrap_or_else(|| vec![1.0; self.d])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub data: Dataset,
    pub beta0: Vec<f64>,
    pub sigma: f64,
    pub pi0: Permutation,
    pub pi0_target: DMatrix<f64>,
}

impl SimOutput {
    pub fn reference(&self) -> Reference {
        Reference {
            beta0: self.beta0.clone(),
            pi0: self.pi0.clone(),
            pi0_target: Some(self.pi0_target.clone()),
        }
    }
}

/// Asymmetric Laplace draw with location 0, scale `sigma` and level `tau`,
/// as a difference of scaled exponentials.
pub fn sample_ald<R: Rng + ?Sized>(rng: &mut R, sigma: f64, tau: f64) -> f64 {
    let e1: f64 = rng.sample(Exp1);
    let e2: f64 = rng.sample(Exp1);
    sigma * (e1 / tau - e2 / (1.0 - tau))
}

pub fn generate_linear<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<SimOutput> {
    cfg.validate()?;
    let (n, d, s0) = (cfg.n, cfg.d, cfg.s0);
    let beta0 = cfg.beta0();

    let x_clean = DMatrix::<f64>::from_fn(n, d, |_, _| rng.sample(StandardNormal));
    let mut y: Vec<f64> = (0..n)
        .map(|i| {
            let mean: f64 = (0..d).map(|j| x_clean[(i, j)] * beta0[j]).sum();
            let eps = match cfg.family {
                LikelihoodFamily::Gaussian => cfg.sigma * rng.sample::<f64, _>(StandardNormal),
                LikelihoodFamily::Ald { tau } => sample_ald(rng, cfg.sigma, tau),
            };
            mean + eps
        })
        .collect();

    let source_row = |i: usize| if i < s0 { s0 - 1 - i } else { i };
    let mut x = DMatrix::from_fn(n, d, |i, j| x_clean[(source_row(i), j)]);
    if cfg.duplicate_first {
        y[s0] = y[0];
        for j in 0..d {
            x[(s0, j)] = x_clean[(0, j)];
        }
    }

    let pi0 = Permutation::new((0..n).map(source_row).collect())?;
    let mut pi0_target = pi0.to_matrix();
    if cfg.duplicate_first {
        // Responses 0 and s0 share one value; rows s0 - 1 and s0 share one covariate vector.
        for r in [0, s0] {
            for c in [s0 - 1, s0] {
                pi0_target[(r, c)] = 0.5;
            }
        }
    }

    Ok(SimOutput {
        data: Dataset::new(y, x)?,
        beta0,
        sigma: cfg.sigma,
        pi0,
        pi0_target,
    })
}

/// A temperature either fixed or tied to the sample size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaSpec {
    InverseN,
    Fixed(f64),
}

impl AlphaSpec {
    pub fn resolve(&self, n: usize) -> f64 {
        match *self {
            Self::InverseN => 1.0 / n as f64,
            Self::Fixed(a) => a,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Self::InverseN => "1/n".into(),
            Self::Fixed(a) => format!("{a}"),
        }
    }
}

/// Fit settings shared by every benchmark cell; `None` keeps the size-dependent default.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitOverrides {
    pub gibbs_iters: Option<usize>,
    pub warmup_iters: Option<usize>,
    pub perm_chain_steps_per_gibbs: Option<usize>,
    pub hmc_per_sweep: Option<usize>,
    pub hmc: Option<HmcConfig>,
    pub priors: Option<PriorConfig>,
    pub thin: Option<usize>,
}

impl FitOverrides {
    /// Full configuration for one cell.
    pub fn config(&self, n: usize, alpha: f64, family: LikelihoodFamily, seed: u64) -> FitConfig {
        let mut cfg = FitConfig::default_for(n);
        cfg.alpha = alpha;
        cfg.family = family;
        cfg.seed = seed;
        if let Some(v) = self.gibbs_iters {
            cfg.gibbs_iters = v;
            cfg.warmup_iters = v / 2;
        }
        if let Some(v) = self.warmup_iters {
            cfg.warmup_iters = v;
        }
        if let Some(v) = self.perm_chain_steps_per_gibbs {
            cfg.perm_chain_steps_per_gibbs = v;
        }
        if let Some(v) = self.hmc_per_sweep {
            cfg.hmc_per_sweep = v;
        }
        if let Some(h) = &self.hmc {
            cfg.hmc = h.clone();
        }
        if let Some(p) = &self.priors {
            cfg.priors = p.clone();
        }
        if let Some(t) = self.thin {
            cfg.thin = t;
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkGrid {
    pub n_values: Vec<usize>,
    pub alpha_values: Vec<AlphaSpec>,
    pub replicates: usize,
    /// Template for data generation; `n` and `seed` are set per replicate.
    pub sim: SimConfig,
    pub fit: FitOverrides,
    pub seed: u64,
    /// Run replicates on the rayon pool.
    pub parallel: bool,
}

impl Default for BenchmarkGrid {
    fn default() -> Self {
        Self {
            n_values: vec![100, 150, 200, 250],
            alpha_values: vec![
                AlphaSpec::InverseN,
                AlphaSpec::Fixed(0.1),
                AlphaSpec::Fixed(0.5),
                AlphaSpec::Fixed(0.75),
                AlphaSpec::Fixed(0.99),
            ],
            replicates: 20,
            sim: SimConfig::default(),
            fit: FitOverrides::default(),
            seed: 0,
            parallel: true,
        }
    }
}

impl BenchmarkGrid {
    pub fn validate(&self) -> Result<()> {
        if self.n_values.is_empty() || self.alpha_values.is_empty() {
            return Err(Error::Config("benchmark grid lists must be non-empty".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        for &n in &self.n_values {
            SimConfig { n, ..self.sim.clone() }.validate()?;
            for a in &self.alpha_values {
                self.fit
                    .config(n, a.resolve(n), self.sim.family, 0)
                    .validate()?;
            }
        }
        Ok(())
    }
}

/// SplitMix64 finalizer over a sequence of words; used to derive independent seeds.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut z = base;
    for &p in parts {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(p);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

const DATA_STREAM: u64 = 1;
const FIT_STREAM: u64 = 2;

/// Metrics of one simulate, fit and summarize pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateResult {
    pub n: usize,
    pub alpha: f64,
    pub replicate: usize,
    pub beta_l1: f64,
    pub pi_l1_raw: f64,
    pub pi_target_l1_raw: f64,
    /// Mean over draws of `|beta - beta0|_2`.
    pub beta_l2_mean: f64,
    pub sec_per_iter: f64,
}

/// Simulates replicate `replicate` at size `n` and fits it at temperature `alpha`.
/// The data depend only on `(seed, n, replicate)`, so all temperatures see the same data.
pub fn run_replicate(
    sim: &SimConfig,
    fit: &FitOverrides,
    n: usize,
    alpha: f64,
    alpha_index: usize,
    replicate: usize,
    seed: u64,
) -> Result<ReplicateResult> {
    let data_seed = derive_seed(seed, &[DATA_STREAM, n as u64, replicate as u64]);
    let sim_cfg = SimConfig {
        n,
        seed: data_seed,
        ..sim.clone()
    };
    let out = generate_linear(&sim_cfg, &mut ChaCha8Rng::seed_from_u64(data_seed))?;
    let fit_seed = derive_seed(
        seed,
        &[FIT_STREAM, n as u64, alpha_index as u64, replicate as u64],
    );
    let cfg = fit.config(n, alpha, sim.family, fit_seed);
    let draws = gibbs_fit_seeded(&out.data, &cfg)?;
    let summary = summarize(&draws, Some(&out.reference()))?;
    let m = summary.metrics.expect("reference supplied");
    let beta_l2_mean = draws
        .beta_trace
        .iter()
        .map(|b| {
            b.iter()
                .zip(&out.beta0)
                .map(|(a, t)| (a - t).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .sum::<f64>()
        / draws.len() as f64;
    Ok(ReplicateResult {
        n,
        alpha,
        replicate,
        beta_l1: m.mean_abs_beta_error,
        pi_l1_raw: m.pi_l1_raw,
        pi_target_l1_raw: m.pi_target_l1_raw.unwrap_or(f64::NAN),
        beta_l2_mean,
        sec_per_iter: draws.wall_time_per_iter,
    })
}

/// One aggregated `(n, alpha)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub n: usize,
    pub alpha: f64,
    pub alpha_label: String,
    pub beta_l1: f64,
    pub pi_l1_raw: f64,
    pub pi_l1_norm: f64,
    pub pi_target_l1_raw: f64,
    pub sec_per_iter: f64,
    /// Successful replicates.
    pub replicates: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRecord {
    pub n: usize,
    pub alpha: f64,
    pub replicate: usize,
    pub sec_per_iter: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchmarkRow>,
    pub timings: Vec<TimingRecord>,
    pub replicates: Vec<Result<ReplicateResult>>,
}

pub fn run_benchmark(grid: &BenchmarkGrid) -> Result<BenchmarkReport> {
    grid.validate()?;
    let mut jobs = Vec::new();
    for &n in &grid.n_values {
        for (ai, a) in grid.alpha_values.iter().enumerate() {
            for rep in 0..grid.replicates {
                jobs.push((n, ai, a.resolve(n), rep));
            }
        }
    }
    let run = |&(n, ai, alpha, rep): &(usize, usize, f64, usize)| {
        run_replicate(&grid.sim, &grid.fit, n, alpha, ai, rep, grid.seed)
    };
    let results: Vec<Result<ReplicateResult>> = if grid.parallel {
        jobs.par_iter().map(run).collect()
    } else {
        jobs.iter().map(run).collect()
    };

    let mut rows = Vec::new();
    let mut timings = Vec::new();
    for (cell, chunk) in results.chunks(grid.replicates).enumerate() {
        let (n, ai, alpha, _) = jobs[cell * grid.replicates];
        let ok: Vec<&ReplicateResult> = chunk.iter().filter_map(|r| r.as_ref().ok()).collect();
        let error = chunk
            .iter()
            .find_map(|r| r.as_ref().err())
            .map(|e| e.to_string());
        let mean = |f: fn(&ReplicateResult) -> f64| {
            if ok.is_empty() {
                f64::NAN
            } else {
                ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64
            }
        };
        let pi_l1_raw = mean(|r| r.pi_l1_raw);
        rows.push(BenchmarkRow {
            n,
            alpha,
            alpha_label: grid.alpha_values[ai].label(),
            beta_l1: mean(|r| r.beta_l1),
            pi_l1_raw,
            pi_l1_norm: pi_l1_raw / (n * n) as f64,
            pi_target_l1_raw: mean(|r| r.pi_target_l1_raw),
            sec_per_iter: mean(|r| r.sec_per_iter),
            replicates: ok.len(),
            error,
        });
        timings.extend(ok.iter().map(|r| TimingRecord {
            n: r.n,
            alpha: r.alpha,
            replicate: r.replicate,
            sec_per_iter: r.sec_per_iter,
        }));
    }
    Ok(BenchmarkReport {
        rows,
        timings,
        replicates: results,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationRow {
    pub n: usize,
    /// Replicate average of the posterior mean of `|beta - beta0|_2`.
    pub mean_l2: f64,
    pub replicates: usize,
}

/// Posterior distance of `beta` to the truth at `alpha = 1/n` across sample sizes.
pub fn concentration_diagnostic(
    n_values: &[usize],
    replicates: usize,
    sim: &SimConfig,
    fit: &FitOverrides,
    seed: u64,
) -> Result<Vec<ConcentrationRow>> {
    if replicates == 0 {
        return Err(Error::Config("replicates must be at least 1".into()));
    }
    n_values
        .iter()
        .map(|&n| {
            let results: Vec<ReplicateResult> = (0..replicates)
                .into_par_iter()
                .map(|rep| run_replicate(sim, fit, n, 1.0 / n as f64, 0, rep, seed))
                .collect::<Result<_>>()?;
            Ok(ConcentrationRow {
                n,
                mean_l2: results.iter().map(|r| r.beta_l2_mean).sum::<f64>() / replicates as f64,
                replicates,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_truth_displaces_s0() {
        let out = generate_linear(&SimConfig::default(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(out.pi0.displaced(), 6);
        assert_eq!(out.data.n(), 100);
        assert_eq!(out.data.d(), 20);
    }

    #[test]
    fn target_is_doubly_stochastic_with_four_halves() {
        let out = generate_linear(&SimConfig::default(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let t = &out.pi0_target;
        for i in 0..100 {
            assert!((t.row(i).sum() - 1.0).abs() < 1e-12);
            assert!((t.column(i).sum() - 1.0).abs() < 1e-12);
        }
        assert_eq!(t.iter().filter(|&&v| v == 0.5).count(), 4);
        assert_eq!(t.iter().filter(|&&v| v == 1.0).count(), 98);
        let hard = out.pi0.to_matrix();
        let differing: Vec<(usize, usize)> = (0..100)
            .flat_map(|i| (0..100).map(move |j| (i, j)))
            .filter(|&(i, j)| t[(i, j)] != hard[(i, j)])
            .collect();
        assert!(differing.iter().all(|&(i, j)| [0, 6].contains(&i) && [5, 6].contains(&j)));
    }

    #[test]
    fn duplicated_pair_is_exact_copy() {
        let out = generate_linear(&SimConfig::default(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let (x, y) = (out.data.x(), out.data.y());
        assert_eq!(y[0], y[6]);
        assert_eq!(x.row(5), x.row(6));
    }

    #[test]
    fn invalid_sim_config() {
        let cfg = SimConfig { s0: 1, ..SimConfig::default() };
        assert!(generate_linear(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
        let cfg = SimConfig { s0: 100, ..SimConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(7, &[1, 100, 0]);
        let b = derive_seed(7, &[1, 100, 1]);
        let c = derive_seed(7, &[2, 100, 0]);
        assert!(a != b && a != c && b != c);
        assert_eq!(a, derive_seed(7, &[1, 100, 0]));
    }

    #[test]
    fn ald_sampler_median_zero_at_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let xs: Vec<f64> = (0..20_000).map(|_| sample_ald(&mut rng, 1.0, 0.5)).collect();
        let below = xs.iter().filter(|&&v| v < 0.0).count() as f64 / xs.len() as f64;
        assert!((below - 0.5).abs() < 0.02);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let xs: Vec<f64> = (0..20_000).map(|_| sample_ald(&mut rng, 1.0, 0.25)).collect();
        let below = xs.iter().filter(|&&v| v < 0.0).count() as f64 / xs.len() as f64;
        assert!((below - 0.25).abs() < 0.02);
    }
}
