//! JSON documents and the tabular result files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use halvinglab_core::experiment::{AggregateRow, TrialResult};
use halvinglab_core::sh::{rank_rows, ShTrace};
use halvinglab_core::synth::{Family, ParamRanges, SyntheticFamilySpec};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

/// Input of `halvinglab generate`.
///
/// ```json
/// {"n": 128, "t": 20, "seed": 7, "family": "crossing_pair_mix",
///  "param_ranges": {"a": [0.5, 1.0], "b": [2.0, 5.0], "c": [0.2, 0.4]},
///  "noise_std": 0.005, "slow_starter_fraction": 0.25}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSpec {
    pub n: usize,
    pub t: usize,
    /// Overridden by `--seed` or `HALVINGLAB_SEED`.
    #[serde(default)]
    pub seed: Option<u64>,
    pub family: Family,
    pub param_ranges: ParamRanges,
    pub noise_std: f64,
    #[serde(default)]
    pub slow_starter_fraction: f64,
}

impl GenerateSpec {
    pub fn family_spec(&self) -> SyntheticFamilySpec {
        SyntheticFamilySpec {
            family: self.family,
            param_ranges: self.param_ranges,
            noise_std: self.noise_std,
            slow_starter_fraction: self.slow_starter_fraction,
        }
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    parse_json(&text, path)
}

pub fn parse_json<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    serde_json::from_str(text).map_err(|e| AppError::parse(path, e.line() as u64, e.to_string()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("plain data serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| AppError::io(path, e))
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let file = File::create(path).map_err(|e| AppError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for row in rows {
        w.serialize(row).map_err(|e| csv_write_error(path, e))?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| AppError::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    r.deserialize()
        .map(|row| {
            row.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                match e.into_kind() {
                    csv::ErrorKind::Io(io) => AppError::io(path, io),
                    kind => AppError::parse(path, line, format!("{kind:?}")),
                }
            })
        })
        .collect()
}

fn csv_write_error(path: &Path, e: csv::Error) -> AppError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => AppError::io(path, io),
        kind => AppError::Config(format!("{}: {kind:?}", path.display())),
    }
}

pub fn write_results(path: &Path, results: &[TrialResult]) -> Result<()> {
    write_rows(path, results)
}

pub fn read_results(path: &Path) -> Result<Vec<TrialResult>> {
    read_rows(path)
}

pub fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    write_rows(path, rows)
}

pub fn read_aggregate(path: &Path) -> Result<Vec<AggregateRow>> {
    read_rows(path)
}

/// Full audit of one run, including every fitted GP's record.
pub fn write_trace_json(path: &Path, trace: &ShTrace) -> Result<()> {
    write_json(path, trace)
}

/// One row per rung and ranked candidate.
pub fn write_trace_csv(path: &Path, trace: &ShTrace) -> Result<()> {
    write_rows(path, rank_rows(trace))
}

/// First line of a CSV file, for telling result files apart.
pub fn header_of(path: &Path) -> Result<String> {
    use std::io::BufRead;
    let file = File::open(path).map_err(|e| AppError::io(path, e))?;
    let mut line = String::new();
    std::io::BufReader::new(file).read_line(&mut line).map_err(|e| AppError::io(path, e))?;
    Ok(line.trim_end().to_string())
}

pub(crate) fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| AppError::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| AppError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| AppError::io(path, e))
}
