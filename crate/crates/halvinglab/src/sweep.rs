//! Parallel sweeps with output independent of the number of workers.

use std::path::Path;

use halvinglab_core::experiment::{self, aggregate, Aggregation, SweepSpec, TrialOutcome, TrialResult};
use halvinglab_core::CurveSet;
use rayon::prelude::*;

use crate::error::{AppError, Result};
use crate::formats;

pub const RESULTS_FILE: &str = "results.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.json";

/// Validates `spec` against the universe and pins the regret reference, so
/// the returned spec reproduces the sweep on its own.
pub fn resolve(universe: &CurveSet, spec: &SweepSpec) -> Result<SweepSpec> {
    spec.validate(universe.len())?;
    let mut resolved = spec.clone();
    resolved.reference_perf = Some(spec.resolve_reference(universe)?);
    Ok(resolved)
}

/// Runs every trial of `spec` on at most `jobs` threads. Outcomes come back
/// in plan order whatever the scheduling.
pub fn run(universe: &CurveSet, spec: &SweepSpec, jobs: usize) -> Result<Vec<TrialOutcome>> {
    if jobs == 0 {
        return Err(AppError::Config("--jobs must be at least 1".into()));
    }
    let spec = resolve(universe, spec)?;
    let reference = spec.reference_perf.expect("resolved");
    let plan = spec.plan();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| AppError::Config(format!("cannot start {jobs} workers: {e}")))?;
    let outcomes: Vec<_> =
        pool.install(|| plan.par_iter().map(|key| experiment::run_trial(universe, &spec, key, reference)).collect());
    // report the first failure in plan order, not the first to happen
    outcomes.into_iter().map(|o| o.map_err(AppError::from)).collect()
}

/// Writes `results.csv`, `aggregate.csv` and `resolved_config.json` into `dir`.
pub fn write_outputs(dir: &Path, resolved: &SweepSpec, results: &[TrialResult]) -> Result<Aggregation> {
    formats::create_dir(dir)?;
    let mut results = results.to_vec();
    experiment::canonicalize(&mut results);
    let agg = aggregate(&results);
    formats::write_results(&dir.join(RESULTS_FILE), &results)?;
    formats::write_aggregate(&dir.join(AGGREGATE_FILE), &agg.rows)?;
    formats::write_json(&dir.join(RESOLVED_CONFIG_FILE), resolved)?;
    Ok(agg)
}
