//! Successive Halving with exact compute accounting.
//!
//! Compute is counted in observed performance values: every revealed
//! `(candidate, step)` cell costs one unit, and the fully observed GP training
//! curves cost `C · T` on top.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use serde::{Deserialize, Serialize};

use crate::curve::{best_among, CurveSet, PerfSpec};
use crate::error::{invalid_spec, Result};
use crate::gp::{self, FitConfig, GpRecord, ObservationSet};
use crate::ranking::{rank_by_current, rank_by_gp, rank_by_oracle, Ranking};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankerKind {
    Current,
    Gp,
    Oracle,
}

impl RankerKind {
    pub const ALL: [RankerKind; 3] = [RankerKind::Current, RankerKind::Gp, RankerKind::Oracle];

    pub fn name(self) -> &'static str {
        match self {
            RankerKind::Current => "current",
            RankerKind::Gp => "gp",
            RankerKind::Oracle => "oracle",
        }
    }
}

impl fmt::Display for RankerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RankerKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        RankerKind::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| invalid_spec!("unknown ranker {s:?} (expected current, gp or oracle)"))
    }
}

/// Settings of the GP ranker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpSettings {
    pub fit: FitConfig,
    pub n_samples: usize,
}

impl Default for GpSettings {
    fn default() -> Self {
        Self { fit: FitConfig::default(), n_samples: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShConfig {
    /// Number of competing candidates `N`.
    pub candidates: usize,
    /// Number of candidates left after the last rung `F`.
    pub final_candidates: usize,
    pub eta: u64,
    pub grace_fraction: f64,
    pub ranker: RankerKind,
    /// Fully observed curves the GP ranker trains on; disjoint from the pool.
    pub training_ids: Vec<usize>,
    pub gp: GpSettings,
}

impl ShConfig {
    pub fn new(candidates: usize, final_candidates: usize, ranker: RankerKind) -> Self {
        Self {
            candidates,
            final_candidates,
            eta: 2,
            grace_fraction: 0.1,
            ranker,
            training_ids: Vec::new(),
            gp: GpSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (n, f) = (self.candidates, self.final_candidates);
        if f < 1 || f >= n {
            return Err(invalid_spec!("need 1 <= F < N, got F={f}, N={n}"));
        }
        if self.eta < 2 {
            return Err(invalid_spec!("eta must be an integer >= 2, got {}", self.eta));
        }
        if !(0.0..1.0).contains(&self.grace_fraction) {
            return Err(invalid_spec!("grace_fraction must lie in [0, 1), got {}", self.grace_fraction));
        }
        match self.ranker {
            RankerKind::Gp if self.training_ids.is_empty() => {
                Err(invalid_spec!("the gp ranker needs at least one training curve"))
            }
            RankerKind::Gp if self.gp.n_samples < 2 => {
                Err(invalid_spec!("the gp ranker needs at least two posterior samples"))
            }
            RankerKind::Current | RankerKind::Oracle if !self.training_ids.is_empty() => {
                Err(invalid_spec!("training curves are only used by the gp ranker"))
            }
            _ => Ok(()),
        }
    }
}

/// Smallest `S` with `F · η^S ≥ N`, i.e. `⌈log_η(N / F)⌉`.
pub fn rung_count(n: usize, f: usize, eta: u64) -> u32 {
    let (n, mut reach) = (n as u128, f.max(1) as u128);
    let mut s = 0;
    while reach < n {
        reach *= eta as u128;
        s += 1;
    }
    s
}

/// `⌈grace_fraction · T⌉`, at most `T`.
pub fn grace_steps(steps: usize, grace_fraction: f64) -> usize {
    let g = libm::ceil(grace_fraction * steps as f64 - 1e-9).max(0.0) as usize;
    g.min(steps)
}

/// Step budget of rung `s`: `round(T · (η^s - 1)/(η^S - 1))`, floored at the
/// grace period and at one step. The last rung always gets `T`.
pub fn rung_budget(s: u32, rungs: u32, eta: u64, steps: usize, grace_fraction: f64) -> usize {
    if s >= rungs {
        return steps;
    }
    let eta = eta as u128;
    let num = eta.pow(s) - 1;
    let den = eta.pow(rungs) - 1;
    let scaled = (2 * num * steps as u128 + den) / (2 * den);
    (scaled as usize).max(grace_steps(steps, grace_fraction)).clamp(1, steps)
}

/// Values `from_step..=to_step` (1-based) of one candidate became visible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reveal {
    /// 0 for the grace period.
    pub rung: u32,
    pub candidate_id: usize,
    pub from_step: usize,
    pub to_step: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RungRecord {
    pub rung: u32,
    pub budget_steps: usize,
    pub active: Vec<usize>,
    pub ranking: Ranking,
    pub promoted: Vec<usize>,
    pub gp: Option<GpRecord>,
}

/// Full audit log of one Successive Halving run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShTrace {
    pub ranker: RankerKind,
    pub steps: usize,
    pub pool: Vec<usize>,
    pub training_ids: Vec<usize>,
    pub eta: u64,
    pub grace_steps: usize,
    pub rung_count: u32,
    pub rungs: Vec<RungRecord>,
    pub reveals: Vec<Reveal>,
    pub final_ids: Vec<usize>,
    pub picked: usize,
    pub picked_perf: f64,
}

impl ShTrace {
    /// Every `(candidate, step)` cell revealed during the run, 1-based steps.
    pub fn observed_cells(&self) -> BTreeSet<(usize, usize)> {
        self.reveals.iter().flat_map(|r| (r.from_step..=r.to_step).map(move |t| (r.candidate_id, t))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComputeUnits {
    pub absolute: u64,
    pub relative: f64,
}

/// Observed values, including the GP training curves, over all values of the
/// competing pool plus training curves.
pub fn compute_units(trace: &ShTrace) -> ComputeUnits {
    let training = trace.training_ids.len() as u64 * trace.steps as u64;
    let absolute = trace.observed_cells().len() as u64 + training;
    let total = (trace.pool.len() + trace.training_ids.len()) as u64 * trace.steps as u64;
    ComputeUnits { absolute, relative: absolute as f64 / total as f64 }
}

fn check_ids(set: &CurveSet, pool: &[usize], config: &ShConfig) -> Result<()> {
    if pool.len() != config.candidates {
        return Err(invalid_spec!("pool has {} candidates but N = {}", pool.len(), config.candidates));
    }
    let mut seen = BTreeSet::new();
    for &id in pool.iter().chain(&config.training_ids) {
        set.get(id)?;
        if !seen.insert(id) {
            return Err(invalid_spec!("candidate {id} appears twice across the pool and training curves"));
        }
    }
    Ok(())
}

/// Runs Successive Halving on the competing `pool` of `set`.
///
/// `seed` drives the GP ranker's posterior sampling; the other rankers are
/// deterministic.
pub fn run(set: &CurveSet, pool: &[usize], config: &ShConfig, perf_spec: &PerfSpec, seed: u64) -> Result<ShTrace> {
    config.validate()?;
    perf_spec.validate()?;
    check_ids(set, pool, config)?;
    let steps = set.steps();
    let (n, f, eta) = (config.candidates, config.final_candidates, config.eta);
    let rungs = rung_count(n, f, eta);
    let grace = grace_steps(steps, config.grace_fraction);

    let mut active: Vec<usize> = pool.to_vec();
    active.sort_unstable();
    let mut horizon: alloc::collections::BTreeMap<usize, usize> = active.iter().map(|&id| (id, 0)).collect();
    let mut reveals = Vec::new();
    let mut reveal = |rung: u32, ids: &[usize], to: usize, reveals: &mut Vec<Reveal>| {
        for id in ids {
            let h = horizon.get_mut(id).expect("pool member");
            if *h < to {
                reveals.push(Reveal { rung, candidate_id: *id, from_step: *h + 1, to_step: to });
                *h = to;
            }
        }
    };
    reveal(0, &active, grace, &mut reveals);

    let mut training = config.training_ids.clone();
    training.sort_unstable();
    let mut gp_rows: Vec<usize> = pool.iter().chain(&training).copied().collect();
    gp_rows.sort_unstable();

    let mut records = Vec::with_capacity(rungs as usize);
    for s in 1..=rungs {
        let budget = rung_budget(s, rungs, eta, steps, config.grace_fraction);
        reveal(s, &active, budget, &mut reveals);
        let mut gp_record = None;
        let ranking = match config.ranker {
            RankerKind::Current => rank_by_current(set, &active, budget, perf_spec.window_fraction)?,
            RankerKind::Oracle => rank_by_oracle(set, &active, perf_spec)?,
            RankerKind::Gp => {
                let horizons: Vec<(usize, usize)> =
                    training.iter().map(|&id| (id, steps)).chain(active.iter().map(|&id| (id, budget))).collect();
                let (obs, st) = ObservationSet::from_curves(set, &gp_rows, &horizons)?;
                let model = gp::fit(obs, st, &config.gp.fit)?;
                let stream = seed::derive(seed, &[seed::TAG_GP, u64::from(s)]);
                let ranking = rank_by_gp(&model, &active, perf_spec, config.gp.n_samples, stream)?;
                gp_record = Some(model.record());
                ranking
            }
        };
        let keep = n.div_ceil(eta.pow(s) as usize).max(f).min(active.len());
        let mut promoted = ranking.top(keep);
        promoted.sort_unstable();
        records.push(RungRecord {
            rung: s,
            budget_steps: budget,
            active: active.clone(),
            ranking,
            promoted: promoted.clone(),
            gp: gp_record,
        });
        active = promoted;
    }
    // survivors are trained to completion before the pick
    reveal(rungs + 1, &active, steps, &mut reveals);
    let (picked, picked_perf) = best_among(set, active.iter().copied(), perf_spec)?;
    let mut pool_sorted = pool.to_vec();
    pool_sorted.sort_unstable();
    Ok(ShTrace {
        ranker: config.ranker,
        steps,
        pool: pool_sorted,
        training_ids: training,
        eta,
        grace_steps: grace,
        rung_count: rungs,
        rungs: records,
        reveals,
        final_ids: active,
        picked,
        picked_perf,
    })
}

/// Trace rows for flat export: one per rung and ranked candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub rung: u32,
    pub budget_steps: usize,
    pub candidate_id: usize,
    pub score: f64,
    pub rank: usize,
    pub promoted: bool,
}

pub fn rank_rows(trace: &ShTrace) -> Vec<RankRow> {
    let mut rows = Vec::new();
    for r in &trace.rungs {
        for (rank, e) in r.ranking.entries.iter().enumerate() {
            rows.push(RankRow {
                rung: r.rung,
                budget_steps: r.budget_steps,
                candidate_id: e.candidate_id,
                score: e.score,
                rank: rank + 1,
                promoted: r.promoted.binary_search(&e.candidate_id).is_ok(),
            });
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::LearningCurve;
    use alloc::vec;

    #[test]
    fn rung_count_examples() {
        assert_eq!(rung_count(256, 1, 2), 8);
        assert_eq!(rung_count(256, 64, 2), 2);
        assert_eq!(rung_count(100, 30, 2), 2);
        assert_eq!(rung_count(9, 1, 3), 2);
        assert_eq!(rung_count(10, 1, 3), 3);
    }

    #[test]
    fn budget_examples() {
        assert_eq!(rung_budget(1, 3, 2, 700, 0.0), 100);
        assert_eq!(rung_budget(3, 3, 2, 37, 0.1), 37);
        assert_eq!(rung_budget(1, 8, 2, 100, 0.1), 10);
        assert_eq!(grace_steps(20, 0.1), 2);
        assert_eq!(grace_steps(15, 0.1), 2);
        assert_eq!(rung_budget(1, 8, 2, 100, 0.0), 1);
    }

    fn constant_set(levels: &[f64]) -> CurveSet {
        let curves =
            levels.iter().enumerate().map(|(i, &v)| LearningCurve::new(i, vec![i as f64], vec![v; 10])).collect();
        CurveSet::new(curves, None).unwrap()
    }

    #[test]
    fn constant_curves_pick_the_best() {
        let set = constant_set(&[0.5, 0.2, 0.9, 0.1, 0.7, 0.3, 0.8, 0.6]);
        let pool: Vec<usize> = (0..8).collect();
        for ranker in [RankerKind::Current, RankerKind::Oracle] {
            let cfg = ShConfig::new(8, 1, ranker);
            let trace = run(&set, &pool, &cfg, &PerfSpec::default(), 0).unwrap();
            assert_eq!(trace.picked, 3);
            assert_eq!(trace.rung_count, 3);
            let sizes: Vec<usize> = trace.rungs.iter().map(|r| r.active.len()).collect();
            assert_eq!(sizes, vec![8, 4, 2]);
            assert_eq!(trace.final_ids, vec![3]);
        }
    }

    #[test]
    fn compute_matches_cell_count() {
        let set = constant_set(&[0.5, 0.2, 0.9, 0.1]);
        let cfg = ShConfig::new(4, 1, RankerKind::Current);
        let trace = run(&set, &[0, 1, 2, 3], &cfg, &PerfSpec::default(), 0).unwrap();
        // S = 2, T = 10: grace 1, t1 = round(10/3) = 3, t2 = 10
        // 4 candidates to 3 steps, 2 candidates to 10 steps
        assert_eq!(compute_units(&trace).absolute, 4 * 3 + 2 * 7);
        assert!((compute_units(&trace).relative - 26.0 / 40.0).abs() < 1e-15);
    }

    #[test]
    fn config_errors() {
        let set = constant_set(&[0.5, 0.2, 0.9, 0.1]);
        let spec = PerfSpec::default();
        let mut cfg = ShConfig::new(4, 1, RankerKind::Current);
        assert!(run(&set, &[0, 1, 2], &cfg, &spec, 0).is_err());
        assert!(run(&set, &[0, 1, 2, 2], &cfg, &spec, 0).is_err());
        cfg.final_candidates = 4;
        assert!(run(&set, &[0, 1, 2, 3], &cfg, &spec, 0).is_err());
        let mut gp = ShConfig::new(3, 1, RankerKind::Gp);
        assert!(run(&set, &[0, 1, 2], &gp, &spec, 0).is_err());
        gp.training_ids = vec![2];
        assert!(run(&set, &[0, 1, 2], &gp, &spec, 0).is_err());
        assert!("gp".parse::<RankerKind>().is_ok());
        assert!("best".parse::<RankerKind>().is_err());
    }
}
