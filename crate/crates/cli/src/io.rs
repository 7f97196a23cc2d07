//! On-disk formats: CSV tables, JSON documents and JSON-lines permutation traces.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sparseperm::hmc::HmcDiagnostics;
use sparseperm::permchain::ChainDiagnostics;
use sparseperm::simlab::SimOutput;
use sparseperm::{Dataset, Draws, Permutation, Reference};

use crate::error::CliError;

/// Full-precision decimal: 17 significant digits, round-trips every finite f64.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    let file = File::create(path).map_err(|e| CliError::io(format!("creating {}", path.display()), e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(format!("opening {}", path.display()), e))?;
    Ok(csv::ReaderBuilder::new().from_reader(file))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(format!("accessing {}", path.display()), io),
        other => CliError::Format(format!("{}: {other:?}", path.display())),
    }
}

/// Writes rows of already-formatted fields under `header`.
pub fn write_csv<I, R>(path: &Path, header: &[String], rows: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush()
        .map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

/// Reads a numeric CSV; returns the header and the parsed rows.
pub fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let mut r = csv_reader(path)?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let row = rec
            .iter()
            .map(|f| {
                f.trim().parse::<f64>().map_err(|_| {
                    CliError::Format(format!("{}: row {}: bad number {f:?}", path.display(), line + 1))
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<(), CliError> {
    let header: Vec<String> = std::iter::once("y".to_owned())
        .chain((1..=data.d()).map(|j| format!("x{j}")))
        .collect();
    let x = data.x();
    let rows = (0..data.n()).map(|i| {
        std::iter::once(num(data.y()[i]))
            .chain((0..data.d()).map(move |j| num(x[(i, j)])))
            .collect::<Vec<_>>()
    });
    write_csv(path, &header, rows)
}

pub fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    let (header, rows) = read_numeric_csv(path)?;
    if header.first().map(String::as_str) != Some("y") || header.len() < 2 {
        return Err(CliError::Format(format!(
            "{}: header must be y,x1,...,xd",
            path.display()
        )));
    }
    let y = rows.iter().map(|r| r[0]).collect();
    let x = rows.iter().map(|r| r[1..].to_vec()).collect::<Vec<_>>();
    Ok(Dataset::from_rows(y, &x)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Format(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
}

/// Non-negligible entries `(row, col, value)` of a square matrix in row-major order.
pub fn sparse_triplets(m: &nalgebra::DMatrix<f64>) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let v = m[(i, j)];
            if v.abs() >= 1e-12 {
                out.push((i, j, v));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub beta0: Vec<f64>,
    pub sigma: f64,
    pub pi0: Vec<usize>,
    pub pi0_target: Vec<(usize, usize, f64)>,
    pub displaced: usize,
}

impl Truth {
    pub fn from_sim(out: &SimOutput) -> Self {
        Self {
            beta0: out.beta0.clone(),
            sigma: out.sigma,
            pi0: out.pi0.as_slice().to_vec(),
            pi0_target: sparse_triplets(&out.pi0_target),
            displaced: out.pi0.displaced(),
        }
    }

    pub fn reference(&self) -> Result<Reference, CliError> {
        let n = self.pi0.len();
        let pi0 = Permutation::new(self.pi0.clone())?;
        let mut target = nalgebra::DMatrix::zeros(n, n);
        for &(i, j, v) in &self.pi0_target {
            if i >= n || j >= n {
                return Err(CliError::Format(format!("pi0_target entry ({i},{j}) outside {n}x{n}")));
            }
            target[(i, j)] = v;
        }
        Ok(Reference {
            beta0: self.beta0.clone(),
            pi0,
            pi0_target: Some(target),
        })
    }
}

pub const BETA_FILE: &str = "draws_beta.csv";
pub const SIGMA2_FILE: &str = "draws_sigma2.csv";
pub const PERM_FILE: &str = "draws_perm.jsonl";

/// Writes the three trace files into `dir`.
pub fn write_traces(
    dir: &Path,
    beta: &[Vec<f64>],
    sigma2: &[f64],
    perms: &[Permutation],
) -> Result<(), CliError> {
    let d = beta.first().map_or(0, Vec::len);
    let header: Vec<String> = (1..=d).map(|j| format!("beta{j}")).collect();
    write_csv(
        &dir.join(BETA_FILE),
        &header,
        beta.iter().map(|b| b.iter().map(|&v| num(v)).collect::<Vec<_>>()),
    )?;
    write_csv(
        &dir.join(SIGMA2_FILE),
        &["sigma2".to_owned()],
        sigma2.iter().map(|&v| vec![num(v)]),
    )?;
    let path = dir.join(PERM_FILE);
    let file = File::create(&path).map_err(|e| CliError::io(format!("creating {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    for p in perms {
        let line = serde_json::to_string(p.as_slice())
            .map_err(|e| CliError::Format(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
    }
    w.flush()
        .map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

/// Loads traces written by [`write_traces`]. Sampler diagnostics are not stored
/// there; they come back zeroed and the timing fields as NaN.
pub fn read_traces(dir: &Path) -> Result<Draws, CliError> {
    let (_, beta_trace) = read_numeric_csv(&dir.join(BETA_FILE))?;
    let (_, sigma2_rows) = read_numeric_csv(&dir.join(SIGMA2_FILE))?;
    let sigma2_trace = sigma2_rows
        .iter()
        .map(|r| {
            r.first()
                .copied()
                .ok_or_else(|| CliError::Format(format!("{SIGMA2_FILE}: empty row")))
        })
        .collect::<Result<Vec<f64>, _>>()?;
    let path = dir.join(PERM_FILE);
    let file = File::open(&path).map_err(|e| CliError::io(format!("opening {}", path.display()), e))?;
    let mut perm_trace = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Vec<usize> = serde_json::from_str(&line)
            .map_err(|e| CliError::Format(format!("{}: line {}: {e}", path.display(), k + 1)))?;
        perm_trace.push(Permutation::new(v)?);
    }
    Ok(Draws {
        beta_trace,
        sigma2_trace,
        perm_trace,
        hmc: HmcDiagnostics::default(),
        perm_chain: ChainDiagnostics::default(),
        step_size: f64::NAN,
        wall_time_per_iter: f64::NAN,
    })
}
