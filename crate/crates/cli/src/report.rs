//! Summary documents, text reports and histograms.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sparseperm::engine::quantile_sorted;
use sparseperm::{Draws, PosteriorSummary};

use crate::io::sparse_triplets;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix {
    pub n: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    pub fn row_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.n];
        for &(i, _, v) in &self.entries {
            s[i] += v;
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsDoc {
    pub mean_abs_beta_error: f64,
    pub pi_l1_raw: f64,
    pub pi_l1_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pi_target_l1_raw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pi_target_l1_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsDoc {
    pub hmc_accept_rate: f64,
    pub hmc_divergences: usize,
    pub hmc_mean_energy_error: f64,
    pub perm_accept_rate: f64,
    pub step_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McemDoc {
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryDoc {
    pub mode: String,
    pub draws: usize,
    pub beta_mean: Vec<f64>,
    pub beta_ci: Vec<(f64, f64)>,
    pub sigma2_mean: f64,
    pub pi_mean: SparseMatrix,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DiagnosticsDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mcem: Option<McemDoc>,
}

impl SummaryDoc {
    pub fn new(mode: &str, s: &PosteriorSummary) -> Self {
        Self {
            mode: mode.to_owned(),
            draws: s.draws,
            beta_mean: s.beta_mean.clone(),
            beta_ci: s.beta_ci.clone(),
            sigma2_mean: s.sigma2_mean,
            pi_mean: SparseMatrix {
                n: s.pi_mean.nrows(),
                entries: sparse_triplets(&s.pi_mean),
            },
            metrics: s.metrics.as_ref().map(|m| MetricsDoc {
                mean_abs_beta_error: m.mean_abs_beta_error,
                pi_l1_raw: m.pi_l1_raw,
                pi_l1_norm: m.pi_l1_norm,
                pi_target_l1_raw: m.pi_target_l1_raw,
                pi_target_l1_norm: m.pi_target_l1_norm,
            }),
            diagnostics: None,
            mcem: None,
        }
    }

    pub fn with_diagnostics(mut self, draws: &Draws) -> Self {
        self.diagnostics = Some(DiagnosticsDoc {
            hmc_accept_rate: draws.hmc.accept_rate(),
            hmc_divergences: draws.hmc.divergences,
            hmc_mean_energy_error: draws.hmc.mean_energy_error(),
            perm_accept_rate: draws.perm_chain.accept_rate(),
            step_size: draws.step_size,
        });
        self
    }
}

/// Plain-text rendering of a posterior summary.
pub fn render(s: &PosteriorSummary) -> String {
    let mut out = String::new();
    let n = s.pi_mean.nrows();
    let _ = writeln!(out, "{:<22}{}", "draws", s.draws);
    let _ = writeln!(out, "{:<22}{:.6e}", "sigma2_mean", s.sigma2_mean);
    let _ = writeln!(out, "{:<22}{:.6}", "pi_mean diag mass", s.pi_mean.trace() / n as f64);
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<8}{:>16}{:>16}{:>16}", "coef", "mean", "2.5%", "97.5%");
    for (k, (m, (lo, hi))) in s.beta_mean.iter().zip(&s.beta_ci).enumerate() {
        let _ = writeln!(
            out,
            "{:<8}{:>16.6e}{:>16.6e}{:>16.6e}",
            format!("beta{}", k + 1),
            m,
            lo,
            hi
        );
    }
    if let Some(m) = &s.metrics {
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<22}{:.6e}", "mean_abs_beta_error", m.mean_abs_beta_error);
        let _ = writeln!(out, "{:<22}{:.6e}", "pi_l1_raw", m.pi_l1_raw);
        let _ = writeln!(out, "{:<22}{:.6e}", "pi_l1_norm", m.pi_l1_norm);
        if let Some(t) = m.pi_target_l1_raw {
            let _ = writeln!(out, "{:<22}{:.6e}", "pi_target_l1_raw", t);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `counts.len() + 1` bin edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Histogram with Freedman-Diaconis width `2 IQR / m^(1/3)`. Bins are half-open
/// except the last, which also holds the maximum. A zero width gives one bin
/// spanning `[min, max]`.
pub fn freedman_diaconis(values: &[f64]) -> Histogram {
    assert!(!values.is_empty(), "histogram of an empty sample");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let width = 2.0 * iqr / (sorted.len() as f64).cbrt();
    if !(width > 0.0 && width.is_finite()) || hi == lo {
        return Histogram {
            edges: vec![lo, hi],
            counts: vec![values.len()],
        };
    }
    let bins = (((hi - lo) / width).ceil() as usize).max(1);
    let edges: Vec<f64> = (0..=bins).map(|k| lo + k as f64 * width).collect();
    let mut counts = vec![0; bins];
    for &v in values {
        let k = (((v - lo) / width).floor() as usize).min(bins - 1);
        counts[k] += 1;
    }
    Histogram { edges, counts }
}
