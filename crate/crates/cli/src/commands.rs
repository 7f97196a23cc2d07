use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sparseperm::simlab::BenchmarkReport;
use sparseperm::{
    generate_linear, gibbs_fit_seeded, mcem_fit_seeded, run_benchmark, summarize, Draws, FitMode,
    PosteriorSummary, Reference,
};

use crate::config::{ModeName, RunConfig};
use crate::error::CliError;
use crate::io::{self, Truth};
use crate::manifest::Recorder;
use crate::report::{freedman_diaconis, render, McemDoc, SummaryDoc};

pub const DATA_FILE: &str = "data.csv";
pub const TRUTH_FILE: &str = "truth.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TABLE_FILE: &str = "table.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const TABLE_HEADER: &str = "n,alpha,beta_l1,pi_l1_raw,pi_l1_norm,sec_per_iter,replicates,error";

/// Command-line overrides shared by every command.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mode: Option<ModeName>,
}

fn load_config(path: &Path, ov: &Overrides) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = ov.seed {
        cfg.seed = s;
    }
    if let Some(m) = ov.mode {
        cfg.fit.get_or_insert_with(Default::default).mode = Some(m);
    }
    Ok(cfg)
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))
}

pub struct SimulateOutcome {
    pub truth: Truth,
    pub files: Vec<PathBuf>,
}

pub fn cmd_simulate(config: &Path, out: &Path, ov: &Overrides) -> Result<SimulateOutcome, CliError> {
    let cfg = load_config(config, ov)?;
    let sim = cfg.sim();
    sim.validate()?;
    ensure_dir(out)?;
    let mut rec = Recorder::start("simulate", cfg.seed, &cfg);
    rec.input(config);
    let generated = rec.stage("generate", || {
        generate_linear(&sim, &mut ChaCha8Rng::seed_from_u64(cfg.seed))
    })?;
    let truth = Truth::from_sim(&generated);
    let (data_path, truth_path) = (out.join(DATA_FILE), out.join(TRUTH_FILE));
    rec.stage("write", || -> Result<(), CliError> {
        io::write_dataset(&data_path, &generated.data)?;
        io::write_json(&truth_path, &truth)
    })?;
    rec.output(data_path.clone());
    rec.output(truth_path.clone());
    let manifest = rec.finish(out)?;
    Ok(SimulateOutcome {
        truth,
        files: vec![data_path, truth_path, manifest],
    })
}

pub struct FitOutcome {
    pub summary: PosteriorSummary,
    pub doc: SummaryDoc,
    pub files: Vec<PathBuf>,
}

pub fn cmd_fit(
    data_path: &Path,
    config: &Path,
    out: &Path,
    truth_path: Option<&Path>,
    ov: &Overrides,
) -> Result<FitOutcome, CliError> {
    let cfg = load_config(config, ov)?;
    let data = io::read_dataset(data_path)?;
    let section = cfg.fit_section();
    if let Some(d) = section.d {
        if d != data.d() {
            return Err(CliError::Config(format!(
                "config expects d = {d} covariates but {} has {}",
                data_path.display(),
                data.d()
            )));
        }
    }
    let fit = section.to_fit(data.n(), cfg.seed)?;
    let reference = truth_path
        .map(|p| io::read_json::<Truth>(p)?.reference())
        .transpose()?;
    if let Some(r) = &reference {
        if r.pi0.len() != data.n() || r.beta0.len() != data.d() {
            return Err(CliError::Config(format!(
                "truth has n = {}, d = {} but the data have n = {}, d = {}",
                r.pi0.len(),
                r.beta0.len(),
                data.n(),
                data.d()
            )));
        }
    }
    ensure_dir(out)?;
    let mut rec = Recorder::start("fit", cfg.seed, &cfg);
    rec.input(data_path);
    rec.input(config);
    if let Some(p) = truth_path {
        rec.input(p);
    }

    let (summary, doc, traces) = match fit.mode {
        FitMode::Gibbs => {
            let draws = rec.stage("sample", || gibbs_fit_seeded(&data, &fit))?;
            let summary = summarize(&draws, reference.as_ref())?;
            let doc = SummaryDoc::new("gibbs", &summary).with_diagnostics(&draws);
            (summary, doc, draws)
        }
        FitMode::Mcem => {
            let traj = rec.stage("sample", || mcem_fit_seeded(&data, &fit))?;
            let last = traj
                .steps
                .last()
                .ok_or_else(|| CliError::Numeric("MC-EM produced no iterations".into()))?;
            let point = Draws {
                beta_trace: vec![last.state.beta.clone()],
                sigma2_trace: vec![last.state.sigma2],
                perm_trace: vec![last.perm.clone()],
                hmc: traj.hmc,
                perm_chain: Default::default(),
                step_size: f64::NAN,
                wall_time_per_iter: f64::NAN,
            };
            let summary = summarize(&point, reference.as_ref())?;
            let mut doc = SummaryDoc::new("mcem", &summary);
            doc.mcem = Some(McemDoc {
                converged: traj.converged,
                iterations: traj.steps.len(),
            });
            let trace = Draws {
                beta_trace: traj.steps.iter().map(|s| s.state.beta.clone()).collect(),
                sigma2_trace: traj.steps.iter().map(|s| s.state.sigma2).collect(),
                perm_trace: traj.steps.iter().map(|s| s.perm.clone()).collect(),
                ..point
            };
            (summary, doc, trace)
        }
    };

    let summary_path = out.join(SUMMARY_FILE);
    rec.stage("write", || -> Result<(), CliError> {
        io::write_traces(out, &traces.beta_trace, &traces.sigma2_trace, &traces.perm_trace)?;
        io::write_json(&summary_path, &doc)
    })?;
    let mut files: Vec<PathBuf> = [io::BETA_FILE, io::SIGMA2_FILE, io::PERM_FILE]
        .iter()
        .map(|f| out.join(f))
        .collect();
    files.push(summary_path);
    for f in &files {
        rec.output(f.clone());
    }
    files.push(rec.finish(out)?);
    Ok(FitOutcome { summary, doc, files })
}

pub struct BenchmarkOutcome {
    pub report: BenchmarkReport,
    pub files: Vec<PathBuf>,
}

fn table_rows(report: &BenchmarkReport) -> Vec<Vec<String>> {
    report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                r.alpha.to_string(),
                r.beta_l1.to_string(),
                r.pi_l1_raw.to_string(),
                r.pi_l1_norm.to_string(),
                r.sec_per_iter.to_string(),
                r.replicates.to_string(),
                r.error.clone().unwrap_or_default(),
            ]
        })
        .collect()
}

pub fn cmd_benchmark(config: &Path, out: &Path, ov: &Overrides) -> Result<BenchmarkOutcome, CliError> {
    let cfg = load_config(config, ov)?;
    let grid = cfg.grid()?;
    ensure_dir(out)?;
    let mut rec = Recorder::start("benchmark", cfg.seed, &cfg);
    rec.input(config);
    let report = rec.stage("run", || run_benchmark(&grid))?;

    let table = out.join(TABLE_FILE);
    let timing = out.join(TIMING_FILE);
    let header: Vec<String> = TABLE_HEADER.split(',').map(str::to_owned).collect();
    io::write_csv(&table, &header, table_rows(&report))?;
    io::write_csv(
        &timing,
        &["n", "alpha", "replicate", "sec_per_iter"].map(str::to_owned),
        report.timings.iter().map(|t| {
            vec![
                t.n.to_string(),
                t.alpha.to_string(),
                t.replicate.to_string(),
                t.sec_per_iter.to_string(),
            ]
        }),
    )?;
    rec.output(table.clone());
    rec.output(timing.clone());
    let manifest = rec.finish(out)?;
    if report.rows.iter().all(|r| r.replicates == 0) {
        return Err(CliError::Numeric(format!(
            "every benchmark cell failed; see {}",
            table.display()
        )));
    }
    Ok(BenchmarkOutcome {
        report,
        files: vec![table, timing, manifest],
    })
}

pub struct SummarizeOutcome {
    pub summary: PosteriorSummary,
    pub text: String,
    pub files: Vec<PathBuf>,
}

/// Summarizes the traces in `draws_dir` and writes `hist_beta_<i>.csv` files
/// (1-based `i`) into `out`, defaulting to `draws_dir`.
pub fn cmd_summarize(
    draws_dir: &Path,
    truth_path: Option<&Path>,
    out: Option<&Path>,
) -> Result<SummarizeOutcome, CliError> {
    let draws = io::read_traces(draws_dir)?;
    let reference: Option<Reference> = truth_path
        .map(|p| io::read_json::<Truth>(p)?.reference())
        .transpose()?;
    let summary = summarize(&draws, reference.as_ref())?;
    let out = out.unwrap_or(draws_dir);
    ensure_dir(out)?;
    let header = ["bin_left", "bin_right", "count"].map(str::to_owned);
    let mut files = Vec::new();
    for k in 0..summary.beta_mean.len() {
        let col: Vec<f64> = draws.beta_trace.iter().map(|b| b[k]).collect();
        let h = freedman_diaconis(&col);
        let path = out.join(format!("hist_beta_{}.csv", k + 1));
        io::write_csv(
            &path,
            &header,
            h.counts.iter().enumerate().map(|(i, c)| {
                vec![io::num(h.edges[i]), io::num(h.edges[i + 1]), c.to_string()]
            }),
        )?;
        files.push(path);
    }
    let text = render(&summary);
    Ok(SummarizeOutcome {
        summary,
        text,
        files,
    })
}
