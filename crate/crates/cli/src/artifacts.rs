//! Artifact plumbing: atomic file writes, trace/series summaries, and the
//! across-chain scale-reduction diagnostic.
//!
//! Every artifact is written to a temporary file in the destination
//! directory and renamed into place, so a crash mid-run never leaves a
//! truncated file behind. Floats are formatted with Rust's shortest
//! round-trip notation, matching the library's CSV convention.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use mwg_core::driver::{ess_initial_positive, geweke_z, quantile};

use crate::CliError;

/// Writes `bytes` to `dir/name` atomically (temp file + rename).
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| {
        CliError::Runtime(format!("cannot create {}: {e}", dir.display()))
    })?;
    let runtime = |e: std::io::Error| {
        CliError::Runtime(format!("cannot write {name} in {}: {e}", dir.display()))
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(runtime)?;
    tmp.write_all(bytes).map_err(runtime)?;
    tmp.flush().map_err(runtime)?;
    let path = dir.join(name);
    tmp.persist(&path)
        .map_err(|e| CliError::Runtime(format!("cannot persist {name}: {e}")))?;
    Ok(path)
}

/// Serializes `value` as pretty JSON and writes it atomically.
pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| CliError::Runtime(format!("cannot serialize {name}: {e}")))?;
    bytes.push(b'\n');
    write_atomic(dir, name, &bytes)
}

/// Scalar summary of one retained series.
#[derive(Clone, Debug, Serialize)]
pub struct SeriesSummary {
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    /// Central 95% credible interval (2.5% and 97.5% quantiles).
    pub ci95: [f64; 2],
    pub ess: f64,
    pub geweke_z: f64,
}

/// Summarizes a series that has already had burn-in removed.
pub fn summarize_series(values: &[f64]) -> SeriesSummary {
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    SeriesSummary {
        mean,
        sd: var.sqrt(),
        median: quantile(&sorted, 0.5),
        ci95: [quantile(&sorted, 0.025), quantile(&sorted, 0.975)],
        ess: ess_initial_positive(values),
        geweke_z: geweke_z(values),
    }
}

/// Classic across-chain potential-scale-reduction factor.
///
/// With `k` chains of equal retained length `n`, compares the between-chain
/// variance of the means to the average within-chain variance; values near
/// 1 indicate the chains agree. Degenerate cases: identical constant chains
/// give 1, constant chains with different values give infinity.
pub fn r_hat(chains: &[Vec<f64>]) -> f64 {
    let k = chains.len();
    let n = chains.first().map_or(0, |c| c.len());
    if k < 2 || n < 2 {
        return f64::NAN;
    }
    let nf = n as f64;
    let means: Vec<f64> = chains
        .iter()
        .map(|c| c.iter().sum::<f64>() / nf)
        .collect();
    let grand = means.iter().sum::<f64>() / k as f64;
    let b = nf / (k as f64 - 1.0)
        * means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let w = chains
        .iter()
        .zip(&means)
        .map(|(c, m)| c.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (nf - 1.0))
        .sum::<f64>()
        / k as f64;
    if w <= 0.0 {
        return if b <= 0.0 { 1.0 } else { f64::INFINITY };
    }
    let v_hat = (nf - 1.0) / nf * w + b / nf;
    (v_hat / w).sqrt()
}

/// A CSV table under construction; all floats use shortest round-trip form.
pub struct CsvTable {
    bytes: Vec<u8>,
}

impl CsvTable {
    pub fn new(header: &str) -> CsvTable {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(header.as_bytes());
        bytes.push(b'\n');
        CsvTable { bytes }
    }

    pub fn row(&mut self, fields: std::fmt::Arguments<'_>) {
        use std::io::Write as _;
        writeln!(self.bytes, "{fields}").expect("writing to memory cannot fail");
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }
}
