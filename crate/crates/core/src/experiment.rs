//! Seeded multi-trial sweeps over final-candidate counts, training-curve
//! counts and rankers, with regret and compute aggregation.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::curve::{best_among, CurveSet, PerfSpec};
use crate::error::{invalid_spec, Error, Result};
use crate::seed;
use crate::sh::{self, compute_units, GpSettings, RankerKind, ShConfig, ShTrace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    /// Curves drawn from the universe for each trial.
    pub pool_size: usize,
    pub final_candidates: Vec<usize>,
    /// Training-curve counts `C`; only used by the gp ranker.
    pub training_curves: Vec<usize>,
    pub rankers: Vec<RankerKind>,
    pub trials: usize,
    pub root_seed: u64,
    pub perf: PerfSpec,
    /// Regret denominator; the universe's mean `perf` when absent.
    pub reference_perf: Option<f64>,
    pub eta: u64,
    pub grace_fraction: f64,
    pub gp: GpSettings,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            pool_size: 256,
            final_candidates: alloc::vec![1, 2, 4, 8, 16, 32, 64],
            training_curves: alloc::vec![8, 16, 32, 64],
            rankers: alloc::vec![RankerKind::Current, RankerKind::Gp],
            trials: 100,
            root_seed: 0,
            perf: PerfSpec::default(),
            reference_perf: None,
            eta: 2,
            grace_fraction: 0.1,
            gp: GpSettings::default(),
        }
    }
}

/// Identifies one trial of a sweep. `training_curves` is 0 for rankers that
/// do not use training curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TrialKey {
    pub ranker: RankerKind,
    pub final_candidates: usize,
    pub training_curves: usize,
    pub trial: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub ranker: RankerKind,
    pub final_candidates: usize,
    pub training_curves: usize,
    pub trial: usize,
    pub seed: u64,
    pub picked: usize,
    pub picked_perf: f64,
    pub best: usize,
    pub best_perf: f64,
    pub absolute_regret: f64,
    pub relative_regret: f64,
    pub absolute_compute: u64,
    pub relative_compute: f64,
}

impl TrialResult {
    pub fn key(&self) -> TrialKey {
        TrialKey {
            ranker: self.ranker,
            final_candidates: self.final_candidates,
            training_curves: self.training_curves,
            trial: self.trial,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub result: TrialResult,
    pub trace: ShTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub ranker: RankerKind,
    pub final_candidates: usize,
    pub training_curves: usize,
    pub mean_relative_regret: f64,
    /// Sample standard deviation over `√trials`; NaN for a single trial.
    pub stderr_relative_regret: f64,
    pub mean_relative_compute: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateWarning {
    pub ranker: RankerKind,
    pub final_candidates: usize,
    pub training_curves: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Aggregation {
    pub rows: Vec<AggregateRow>,
    pub warnings: Vec<AggregateWarning>,
}

impl SweepSpec {
    pub fn validate(&self, universe_size: usize) -> Result<()> {
        self.perf.validate()?;
        if self.pool_size > universe_size {
            return Err(invalid_spec!("pool_size {} exceeds the universe of {universe_size} curves", self.pool_size));
        }
        if self.trials == 0 {
            return Err(invalid_spec!("trials must be at least 1"));
        }
        if self.rankers.is_empty() || self.final_candidates.is_empty() {
            return Err(invalid_spec!("rankers and final_candidates must be non-empty"));
        }
        if let Some(r) = self.reference_perf {
            if !(r.is_finite() && r != 0.0) {
                return Err(invalid_spec!("reference_perf must be finite and non-zero"));
            }
        }
        let uses_gp = self.rankers.contains(&RankerKind::Gp);
        if uses_gp && self.training_curves.is_empty() {
            return Err(invalid_spec!("the gp ranker needs a non-empty training_curves grid"));
        }
        for &f in &self.final_candidates {
            if f == 0 || f >= self.pool_size {
                return Err(invalid_spec!("F = {f} must lie in 1..pool_size"));
            }
            if uses_gp {
                for &c in &self.training_curves {
                    if c == 0 || f + c >= self.pool_size {
                        return Err(invalid_spec!(
                            "C = {c} with F = {f} leaves too few competing curves in a pool of {}",
                            self.pool_size
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Every trial of the sweep in canonical order.
    pub fn plan(&self) -> Vec<TrialKey> {
        let mut rankers = self.rankers.clone();
        rankers.sort_unstable();
        rankers.dedup();
        let mut fs = self.final_candidates.clone();
        fs.sort_unstable();
        fs.dedup();
        let mut cs = self.training_curves.clone();
        cs.sort_unstable();
        cs.dedup();
        let mut keys = Vec::new();
        for &ranker in &rankers {
            for &f in &fs {
                let c_grid: &[usize] = if ranker == RankerKind::Gp { &cs } else { &[0] };
                for &c in c_grid {
                    for trial in 0..self.trials {
                        keys.push(TrialKey { ranker, final_candidates: f, training_curves: c, trial });
                    }
                }
            }
        }
        keys
    }

    /// The configured reference, or the universe's mean `perf`.
    pub fn resolve_reference(&self, universe: &CurveSet) -> Result<f64> {
        let r = match self.reference_perf {
            Some(r) => r,
            None => universe.mean_perf(&self.perf)?,
        };
        if !(r.is_finite() && r != 0.0) {
            return Err(invalid_spec!("reference performance must be finite and non-zero, got {r}"));
        }
        Ok(r)
    }
}

/// `(picked - best) / |reference|`.
pub fn relative_regret(picked_perf: f64, best_perf: f64, reference_perf: f64) -> Result<f64> {
    if reference_perf == 0.0 || !reference_perf.is_finite() {
        return Err(invalid_spec!("reference performance must be finite and non-zero"));
    }
    Ok((picked_perf - best_perf) / libm::fabs(reference_perf))
}

fn ranker_tag(r: RankerKind) -> u64 {
    match r {
        RankerKind::Current => 1,
        RankerKind::Gp => 2,
        RankerKind::Oracle => 3,
    }
}

/// The trial's pool (sorted) and, for the gp ranker, its training curves.
///
/// The pool depends only on the trial index, so all rankers and `F` values of
/// one trial compete on the same curves.
pub fn draw_trial_ids(universe: &CurveSet, spec: &SweepSpec, key: &TrialKey) -> (Vec<usize>, Vec<usize>) {
    let mut rng = seed::rng_at(spec.root_seed, &[seed::TAG_POOL, key.trial as u64]);
    let mut pool = rand::seq::index::sample(&mut rng, universe.len(), spec.pool_size).into_vec();
    pool.sort_unstable();
    if key.ranker != RankerKind::Gp {
        return (pool, Vec::new());
    }
    let path = [seed::TAG_TRAIN, key.training_curves as u64, key.trial as u64];
    let mut rng = seed::rng_at(spec.root_seed, &path);
    let picks = rand::seq::index::sample(&mut rng, pool.len(), key.training_curves);
    let mut is_training = alloc::vec![false; pool.len()];
    for i in picks {
        is_training[i] = true;
    }
    let training: Vec<usize> = pool.iter().zip(&is_training).filter(|(_, t)| **t).map(|(id, _)| *id).collect();
    let competing = pool.iter().zip(&is_training).filter(|(_, t)| !**t).map(|(id, _)| *id).collect();
    (competing, training)
}

pub fn run_trial(universe: &CurveSet, spec: &SweepSpec, key: &TrialKey, reference_perf: f64) -> Result<TrialOutcome> {
    let wrap = |e: Error| Error::Trial {
        ranker: key.ranker.name(),
        final_candidates: key.final_candidates,
        training_curves: key.training_curves,
        trial: key.trial,
        source: alloc::boxed::Box::new(e),
    };
    let (competing, training) = draw_trial_ids(universe, spec, key);
    let config = ShConfig {
        candidates: competing.len(),
        final_candidates: key.final_candidates,
        eta: spec.eta,
        grace_fraction: spec.grace_fraction,
        ranker: key.ranker,
        training_ids: training,
        gp: spec.gp.clone(),
    };
    let path = [
        seed::TAG_SH,
        ranker_tag(key.ranker),
        key.final_candidates as u64,
        key.training_curves as u64,
        key.trial as u64,
    ];
    let trial_seed = seed::derive(spec.root_seed, &path);
    let trace = sh::run(universe, &competing, &config, &spec.perf, trial_seed).map_err(wrap)?;
    let (best, best_perf) = best_among(universe, competing.iter().copied(), &spec.perf).map_err(wrap)?;
    let regret = relative_regret(trace.picked_perf, best_perf, reference_perf).map_err(wrap)?;
    let compute = compute_units(&trace);
    let result = TrialResult {
        ranker: key.ranker,
        final_candidates: key.final_candidates,
        training_curves: key.training_curves,
        trial: key.trial,
        seed: trial_seed,
        picked: trace.picked,
        picked_perf: trace.picked_perf,
        best,
        best_perf,
        absolute_regret: trace.picked_perf - best_perf,
        relative_regret: regret,
        absolute_compute: compute.absolute,
        relative_compute: compute.relative,
    };
    Ok(TrialOutcome { result, trace })
}

/// Runs every trial of the plan in order.
pub fn run_sweep(universe: &CurveSet, spec: &SweepSpec) -> Result<Vec<TrialResult>> {
    spec.validate(universe.len())?;
    let reference = spec.resolve_reference(universe)?;
    spec.plan().iter().map(|key| run_trial(universe, spec, key, reference).map(|o| o.result)).collect()
}

/// Sorts results into canonical key order.
pub fn canonicalize(results: &mut [TrialResult]) {
    results.sort_by_key(TrialResult::key);
}

/// Mean and standard error of relative regret and mean relative compute per
/// `(ranker, F, C)`.
pub fn aggregate(results: &[TrialResult]) -> Aggregation {
    let mut groups: BTreeMap<(RankerKind, usize, usize), Vec<&TrialResult>> = BTreeMap::new();
    for r in results {
        groups.entry((r.ranker, r.final_candidates, r.training_curves)).or_default().push(r);
    }
    let mut out = Aggregation::default();
    for ((ranker, f, c), mut rows) in groups {
        rows.sort_by_key(|r| r.trial);
        let regrets: Vec<f64> = rows.iter().map(|r| r.relative_regret).collect();
        let computes: Vec<f64> = rows.iter().map(|r| r.relative_compute).collect();
        let n = rows.len();
        let stderr = if n >= 2 {
            crate::stats::sample_std(&regrets) / libm::sqrt(n as f64)
        } else {
            out.warnings.push(AggregateWarning {
                ranker,
                final_candidates: f,
                training_curves: c,
                message: alloc::format!("{n} trial(s); standard error undefined"),
            });
            f64::NAN
        };
        out.rows.push(AggregateRow {
            ranker,
            final_candidates: f,
            training_curves: c,
            mean_relative_regret: crate::stats::mean(&regrets),
            stderr_relative_regret: stderr,
            mean_relative_compute: crate::stats::mean(&computes),
            trials: n,
        });
    }
    out
}
