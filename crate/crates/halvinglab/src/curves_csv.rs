//! Long-format curve files: `candidate_id,t,value,h1,...,hD`, one row per
//! observed value. The reference curve, if any, uses `candidate_id = -1` and
//! leaves the hyperparameter columns empty.
//!
//! Candidates are reindexed to `0..N` in ascending order of their file ids.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use halvinglab_core::{CurveSet, LearningCurve};

use crate::error::{AppError, Result};

pub const REFERENCE_ID: i64 = -1;

struct Pending {
    first_line: u64,
    hyperparams: Vec<f64>,
    values: BTreeMap<usize, f64>,
}

pub fn load_csv(path: &Path) -> Result<CurveSet> {
    let file = File::open(path).map_err(|e| AppError::io(path, e))?;
    read_curves(file, path)
}

/// Parses a curve file; `path` only labels error messages.
pub fn read_curves<R: Read>(reader: R, path: &Path) -> Result<CurveSet> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let dims = check_header(&header).map_err(|m| AppError::parse(path, 1, m))?;

    let mut curves: BTreeMap<i64, Pending> = BTreeMap::new();
    let mut reference: Option<Pending> = None;
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let err = |m: String| AppError::parse(path, line, m);
        if record.len() != 3 + dims {
            return Err(err(format!("expected {} fields, found {}", 3 + dims, record.len())));
        }
        let id: i64 = record[0].parse().map_err(|_| err(format!("candidate_id {:?} is not an integer", &record[0])))?;
        let t: usize = record[1].parse().map_err(|_| err(format!("t {:?} is not a positive integer", &record[1])))?;
        if t < 1 {
            return Err(err("t must start at 1".into()));
        }
        let value = finite(&record[2], "value").map_err(err)?;
        let entry = if id == REFERENCE_ID {
            reference.get_or_insert_with(|| Pending {
                first_line: line,
                hyperparams: Vec::new(),
                values: BTreeMap::new(),
            })
        } else if id < 0 {
            return Err(err(format!("candidate_id {id} is negative; only -1 marks the reference")));
        } else {
            let h = (0..dims)
                .map(|d| finite(&record[3 + d], &format!("h{}", d + 1)))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(err)?;
            let entry = curves.entry(id).or_insert_with(|| Pending {
                first_line: line,
                hyperparams: h.clone(),
                values: BTreeMap::new(),
            });
            if entry.hyperparams != h {
                return Err(err(format!("hyperparameters of candidate {id} differ from line {}", entry.first_line)));
            }
            entry
        };
        if entry.values.insert(t, value).is_some() {
            return Err(err(format!("candidate {id} has a second value at t={t}")));
        }
    }

    let steps = curves.values().map(|p| p.values.len()).max().ok_or_else(|| AppError::parse(path, 1, "no curves"))?;
    let complete = |id: i64, p: &Pending| -> Result<Vec<f64>> {
        let contiguous = p.values.len() == steps && p.values.keys().copied().eq(1..=steps);
        if !contiguous {
            return Err(AppError::parse(
                path,
                p.first_line,
                format!(
                    "candidate {id} has steps {:?}, expected exactly 1..={steps}",
                    compress(p.values.keys().copied())
                ),
            ));
        }
        Ok(p.values.values().copied().collect())
    };
    let mut out = Vec::with_capacity(curves.len());
    for (id, p) in &curves {
        out.push(LearningCurve::new(*id as usize, p.hyperparams.clone(), complete(*id, p)?));
    }
    let reference = reference.as_ref().map(|p| complete(REFERENCE_ID, p)).transpose()?;
    Ok(CurveSet::new(out, reference)?)
}

pub fn save_csv(set: &CurveSet, path: &Path) -> Result<()> {
    let mut file = File::create(path).map_err(|e| AppError::io(path, e))?;
    write_curves(set, &mut file).map_err(|e| AppError::io(path, e))?;
    file.flush().map_err(|e| AppError::io(path, e))
}

/// Writes values with the shortest decimal form that reads back to the same
/// `f64`.
pub fn write_curves<W: Write>(set: &CurveSet, w: &mut W) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(w);
    write!(out, "candidate_id,t,value")?;
    for d in 1..=set.dims() {
        write!(out, ",h{d}")?;
    }
    writeln!(out)?;
    if let Some(r) = set.reference() {
        for (t, v) in r.iter().enumerate() {
            write!(out, "{REFERENCE_ID},{},{v}", t + 1)?;
            for _ in 0..set.dims() {
                write!(out, ",")?;
            }
            writeln!(out)?;
        }
    }
    for c in set.curves() {
        for (t, v) in c.values.iter().enumerate() {
            write!(out, "{},{},{v}", c.candidate_id, t + 1)?;
            for h in &c.hyperparams {
                write!(out, ",{h}")?;
            }
            writeln!(out)?;
        }
    }
    out.flush()
}

fn check_header(h: &csv::StringRecord) -> std::result::Result<usize, String> {
    let fields: Vec<&str> = h.iter().collect();
    if fields.len() < 4 || fields[..3] != ["candidate_id", "t", "value"] {
        return Err(format!("header must be candidate_id,t,value,h1,...,hD; found {}", fields.join(",")));
    }
    for (d, name) in fields[3..].iter().enumerate() {
        if *name != format!("h{}", d + 1) {
            return Err(format!("hyperparameter column {} must be named h{}, found {name:?}", d + 4, d + 1));
        }
    }
    Ok(fields.len() - 3)
}

fn finite(s: &str, what: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(format!("{what} {s:?} is not finite")),
        Err(_) if s.is_empty() => Err(format!("missing {what}")),
        Err(_) => Err(format!("{what} {s:?} is not a number")),
    }
}

fn csv_error(path: &Path, e: csv::Error) -> AppError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => AppError::io(path, io),
        kind => AppError::parse(path, line, format!("{kind:?}")),
    }
}

/// `[1, 2, 3, 5]` → `"1-3,5"`.
fn compress(steps: impl Iterator<Item = usize>) -> String {
    let mut parts: Vec<String> = Vec::new();
    let mut run: Option<(usize, usize)> = None;
    for t in steps {
        run = match run {
            Some((a, b)) if t == b + 1 => Some((a, t)),
            Some((a, b)) => {
                parts.push(if a == b { a.to_string() } else { format!("{a}-{b}") });
                Some((t, t))
            }
            None => Some((t, t)),
        };
    }
    if let Some((a, b)) = run {
        parts.push(if a == b { a.to_string() } else { format!("{a}-{b}") });
    }
    parts.join(",")
}
