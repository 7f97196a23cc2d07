//! TOML run configuration.
//!
//! One file carries up to three sections: `[sim]` for `simulate` and `benchmark`,
//! `[fit]` for `fit` and `benchmark`, and `[benchmark]` for the grid. Every
//! table rejects unknown keys.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sparseperm::hmc::HmcConfig;
use sparseperm::simlab::{AlphaSpec, FitOverrides};
use sparseperm::{BenchmarkGrid, FitConfig, FitMode, LikelihoodFamily, PriorConfig, SimConfig};

use crate::error::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub sim: Option<SimSection>,
    pub fit: Option<FitSection>,
    pub benchmark: Option<BenchmarkSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyName {
    Gaussian,
    Ald,
}

fn family(name: FamilyName, tau: Option<f64>) -> LikelihoodFamily {
    match name {
        FamilyName::Gaussian => LikelihoodFamily::Gaussian,
        FamilyName::Ald => LikelihoodFamily::Ald {
            tau: tau.unwrap_or(0.5),
        },
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub n: Option<usize>,
    pub d: Option<usize>,
    pub s0: Option<usize>,
    pub sigma: Option<f64>,
    pub beta0: Option<Vec<f64>>,
    pub family: Option<FamilyName>,
    pub tau: Option<f64>,
    pub duplicate_first: Option<bool>,
}

impl SimSection {
    pub fn to_sim(&self, seed: u64) -> SimConfig {
        let base = SimConfig::default();
        SimConfig {
            n: self.n.unwrap_or(base.n),
            d: self.d.unwrap_or(base.d),
            s0: self.s0.unwrap_or(base.s0),
            sigma: self.sigma.unwrap_or(base.sigma),
            beta0: self.beta0.clone(),
            family: family(self.family.unwrap_or(FamilyName::Gaussian), self.tau),
            duplicate_first: self.duplicate_first.unwrap_or(base.duplicate_first),
            seed,
        }
    }
}

/// A temperature: a number, or the string `"1/n"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaValue {
    Fixed(f64),
    Named(String),
}

impl AlphaValue {
    pub fn to_spec(&self) -> Result<AlphaSpec, CliError> {
        match self {
            Self::Fixed(a) => Ok(AlphaSpec::Fixed(*a)),
            Self::Named(s) if s.trim() == "1/n" => Ok(AlphaSpec::InverseN),
            Self::Named(s) => Err(CliError::Config(format!(
                "alpha must be a number or \"1/n\", got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    Gibbs,
    Mcem,
}

impl From<ModeName> for FitMode {
    fn from(m: ModeName) -> Self {
        match m {
            ModeName::Gibbs => FitMode::Gibbs,
            ModeName::Mcem => FitMode::Mcem,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HmcSection {
    pub step_size: Option<f64>,
    pub n_leapfrog: Option<usize>,
    pub target_accept: Option<f64>,
    pub adapt_iters: Option<usize>,
}

impl HmcSection {
    fn to_hmc(&self) -> HmcConfig {
        let base = HmcConfig::default();
        HmcConfig {
            step_size: self.step_size.unwrap_or(base.step_size),
            n_leapfrog: self.n_leapfrog.unwrap_or(base.n_leapfrog),
            target_accept: self.target_accept.unwrap_or(base.target_accept),
            adapt_iters: self.adapt_iters.unwrap_or(base.adapt_iters),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    pub beta_prior_var: Option<f64>,
    pub sigma2_prior_var: Option<f64>,
    pub k_bound: Option<usize>,
}

impl PriorSection {
    fn to_priors(&self) -> PriorConfig {
        let base = PriorConfig::default();
        PriorConfig {
            beta_prior_var: self.beta_prior_var.unwrap_or(base.beta_prior_var),
            sigma2_prior_var: self.sigma2_prior_var.unwrap_or(base.sigma2_prior_var),
            k_bound: self.k_bound,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub alpha: Option<AlphaValue>,
    pub family: Option<FamilyName>,
    pub tau: Option<f64>,
    pub mode: Option<ModeName>,
    /// Expected covariate dimension, checked against the data when set.
    pub d: Option<usize>,
    pub gibbs_iters: Option<usize>,
    pub warmup_iters: Option<usize>,
    pub perm_chain_steps_per_gibbs: Option<usize>,
    pub hmc_per_sweep: Option<usize>,
    pub thin: Option<usize>,
    pub fixed_sigma2: Option<f64>,
    pub mcem_max_iters: Option<usize>,
    pub mcem_tol: Option<f64>,
    pub hmc: Option<HmcSection>,
    pub priors: Option<PriorSection>,
}

impl FitSection {
    /// Full fit configuration for a data set of size `n`.
    pub fn to_fit(&self, n: usize, seed: u64) -> Result<FitConfig, CliError> {
        let mut cfg = FitConfig::default_for(n);
        cfg.seed = seed;
        if let Some(a) = &self.alpha {
            cfg.alpha = a.to_spec()?.resolve(n);
        }
        if let Some(f) = self.family {
            cfg.family = family(f, self.tau);
        }
        if let Some(m) = self.mode {
            cfg.mode = m.into();
        }
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
        if let Some(v) = self.thin {
            cfg.thin = v;
        }
        cfg.fixed_sigma2 = self.fixed_sigma2;
        if let Some(v) = self.mcem_max_iters {
            cfg.mcem_max_iters = v;
        }
        if let Some(v) = self.mcem_tol {
            cfg.mcem_tol = v;
        }
        if let Some(h) = &self.hmc {
            cfg.hmc = h.to_hmc();
        }
        if let Some(p) = &self.priors {
            cfg.priors = p.to_priors();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn overrides(&self) -> FitOverrides {
        FitOverrides {
            gibbs_iters: self.gibbs_iters,
            warmup_iters: self.warmup_iters,
            perm_chain_steps_per_gibbs: self.perm_chain_steps_per_gibbs,
            hmc_per_sweep: self.hmc_per_sweep,
            hmc: self.hmc.as_ref().map(HmcSection::to_hmc),
            priors: self.priors.as_ref().map(PriorSection::to_priors),
            thin: self.thin,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSection {
    pub n_values: Option<Vec<usize>>,
    pub alpha_values: Option<Vec<AlphaValue>>,
    pub replicates: Option<usize>,
    pub parallel: Option<bool>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("reading config {}", path.display()), e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn sim(&self) -> SimConfig {
        self.sim
            .as_ref()
            .map(|s| s.to_sim(self.seed))
            .unwrap_or_else(|| SimConfig {
                seed: self.seed,
                ..SimConfig::default()
            })
    }

    pub fn fit_section(&self) -> FitSection {
        self.fit.clone().unwrap_or_default()
    }

    pub fn grid(&self) -> Result<BenchmarkGrid, CliError> {
        let base = BenchmarkGrid::default();
        let section = self.benchmark.as_ref();
        let fit = self.fit_section();
        if fit.alpha.is_some() || fit.mode.is_some() {
            return Err(CliError::Config(
                "benchmark takes temperatures from [benchmark].alpha_values and always runs \
                 the Gibbs sampler; remove alpha and mode from [fit]"
                    .into(),
            ));
        }
        let sim = self.sim();
        if let Some(f) = fit.family {
            if family(f, fit.tau) != sim.family {
                return Err(CliError::Config(
                    "benchmark fits use the [sim] family; [fit].family disagrees".into(),
                ));
            }
        }
        let alpha_values = match section.and_then(|b| b.alpha_values.as_ref()) {
            Some(list) => list.iter().map(AlphaValue::to_spec).collect::<Result<_, _>>()?,
            None => base.alpha_values,
        };
        let grid = BenchmarkGrid {
            n_values: section
                .and_then(|b| b.n_values.clone())
                .unwrap_or(base.n_values),
            alpha_values,
            replicates: section.and_then(|b| b.replicates).unwrap_or(base.replicates),
            sim,
            fit: fit.overrides(),
            seed: self.seed,
            parallel: section.and_then(|b| b.parallel).unwrap_or(base.parallel),
        };
        grid.validate()?;
        Ok(grid)
    }
}
