//! Regret-versus-compute plot data and a plain-text summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use halvinglab_core::experiment::{aggregate, AggregateRow};
use halvinglab_core::sh::RankerKind;

use crate::error::{AppError, Result};
use crate::formats;

pub const SUMMARY_FILE: &str = "summary.txt";

/// Aggregate rows from either `aggregate.csv` or `results.csv`.
pub fn load_rows(path: &Path) -> Result<Vec<AggregateRow>> {
    let header = formats::header_of(path)?;
    let rows = if header.contains("mean_relative_regret") {
        formats::read_aggregate(path)?
    } else if header.contains("relative_regret") {
        aggregate(&formats::read_results(path)?).rows
    } else if header.is_empty() {
        Vec::new()
    } else {
        return Err(AppError::parse(path, 1, format!("not a results or aggregate file (header {header:?})")));
    };
    if rows.is_empty() {
        return Err(AppError::Config(format!("{} holds no result rows; nothing to report", path.display())));
    }
    Ok(rows)
}

/// Rows grouped per `(ranker, C)` series, each ordered by `F`.
pub fn series(rows: &[AggregateRow]) -> BTreeMap<(RankerKind, usize), Vec<AggregateRow>> {
    let mut out: BTreeMap<(RankerKind, usize), Vec<AggregateRow>> = BTreeMap::new();
    for r in rows {
        out.entry((r.ranker, r.training_curves)).or_default().push(r.clone());
    }
    for v in out.values_mut() {
        v.sort_by_key(|r| r.final_candidates);
    }
    out
}

pub fn series_file_name(ranker: RankerKind, training_curves: usize) -> String {
    format!("series_{}_C{training_curves}.csv", ranker.name())
}

/// Writes one plot-data file per series plus `summary.txt`; returns the
/// series paths and the summary table.
pub fn write_report(rows: &[AggregateRow], dir: &Path) -> Result<(Vec<PathBuf>, String)> {
    formats::create_dir(dir)?;
    let mut paths = Vec::new();
    for ((ranker, c), points) in series(rows) {
        let path = dir.join(series_file_name(ranker, c));
        let mut text = String::from("final_candidates,relative_compute,relative_regret,stderr,trials\n");
        for p in &points {
            let _ = writeln!(
                text,
                "{},{},{},{},{}",
                p.final_candidates, p.mean_relative_compute, p.mean_relative_regret, p.stderr_relative_regret, p.trials
            );
        }
        formats::write_text(&path, &text)?;
        paths.push(path);
    }
    let table = summary_table(rows);
    formats::write_text(&dir.join(SUMMARY_FILE), &table)?;
    Ok((paths, table))
}

pub fn summary_table(rows: &[AggregateRow]) -> String {
    let header = ["ranker", "C", "F", "rel. compute", "rel. regret", "stderr", "trials"];
    let mut cells: Vec<[String; 7]> = Vec::new();
    for points in series(rows).values() {
        for r in points {
            cells.push([
                r.ranker.name().to_string(),
                if r.ranker == RankerKind::Gp { r.training_curves.to_string() } else { "-".into() },
                r.final_candidates.to_string(),
                format!("{:.4}", r.mean_relative_compute),
                format!("{:.6}", r.mean_relative_regret),
                if r.stderr_relative_regret.is_nan() {
                    "n/a".into()
                } else {
                    format!("{:.6}", r.stderr_relative_regret)
                },
                r.trials.to_string(),
            ]);
        }
    }
    let mut widths = header.map(str::len);
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let rule: String = widths.iter().map(|w| "-".repeat(w + 2)).collect::<Vec<_>>().join("+");
    let line = |fields: &[String]| {
        fields
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (f, w))| if i < 2 { format!(" {f:<w$} ") } else { format!(" {f:>w$} ") })
            .collect::<Vec<_>>()
            .join("|")
    };
    let mut out = String::new();
    let _ = writeln!(out, "{}", line(&header.map(String::from)));
    let _ = writeln!(out, "{rule}");
    for row in &cells {
        let _ = writeln!(out, "{}", line(row));
    }
    out
}
