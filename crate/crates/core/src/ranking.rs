//! Candidate rankers used for promotion decisions.
//!
//! Every ranker returns candidates best first: lower scores rank higher and
//! equal scores fall back to ascending candidate id.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::curve::{perf, CurveSet, PerfSpec};
use crate::error::{invalid, Error, Result};
use crate::gp::{predict_perf, GpModel};
use crate::stats::normal_cdf;

/// Predictive mean and variance of a candidate's `perf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub candidate_id: usize,
    pub mu: f64,
    pub sigma2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub candidate_id: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub entries: Vec<RankEntry>,
}

impl Ranking {
    /// Sorts ascending by score, then by candidate id.
    pub fn from_scores(scores: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut entries: Vec<RankEntry> =
            scores.into_iter().map(|(candidate_id, score)| RankEntry { candidate_id, score }).collect();
        entries.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.candidate_id.cmp(&b.candidate_id)));
        Self { entries }
    }

    pub fn ids(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.candidate_id).collect()
    }

    /// The first `k` candidate ids.
    pub fn top(&self, k: usize) -> Vec<usize> {
        self.entries.iter().take(k).map(|e| e.candidate_id).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// `E wins(i) = 1/(n-1) Σ_{j≠i} Φ((μ_i - μ_j) / √(σ²_i + σ²_j))`.
///
/// With lower `perf` being better, a small value means candidate `i` is
/// likely to beat the others.
pub fn expected_wins(summaries: &[CandidateSummary]) -> Result<Vec<f64>> {
    let n = summaries.len();
    if n < 2 {
        return Err(invalid!("expected wins needs at least two candidates, got {n}"));
    }
    let mut wins = alloc::vec![0.0; n];
    for i in 0..n {
        for j in 0..i {
            let (a, b) = (&summaries[i], &summaries[j]);
            let z = (a.mu - b.mu) / libm::sqrt(a.sigma2 + b.sigma2);
            wins[i] += normal_cdf(z);
            wins[j] += normal_cdf(-z);
        }
    }
    let scale = 1.0 / (n - 1) as f64;
    Ok(wins.into_iter().map(|w| w * scale).collect())
}

fn sorted_unique(active: &[usize]) -> Result<Vec<usize>> {
    if active.is_empty() {
        return Err(Error::Empty("active candidates"));
    }
    let mut ids = active.to_vec();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(invalid!("active candidates contain duplicates"));
    }
    Ok(ids)
}

/// Ranks by expected wins under the GP's predicted `perf` distributions.
pub fn rank_by_gp(
    model: &GpModel,
    active: &[usize],
    perf_spec: &PerfSpec,
    n_samples: usize,
    seed: u64,
) -> Result<Ranking> {
    let ids = sorted_unique(active)?;
    let summaries = predict_perf(model, &ids, perf_spec, n_samples, seed)?;
    let wins = expected_wins(&summaries)?;
    Ok(Ranking::from_scores(ids.into_iter().zip(wins)))
}

/// Ranks by the mean of the most recent observed values.
///
/// The window is the `perf` window for `window_fraction`, cut to the
/// `observed_until` values available.
pub fn rank_by_current(
    set: &CurveSet,
    active: &[usize],
    observed_until: usize,
    window_fraction: f64,
) -> Result<Ranking> {
    let ids = sorted_unique(active)?;
    if observed_until < 1 || observed_until > set.steps() {
        return Err(invalid!("observed_until must lie in 1..={}, got {observed_until}", set.steps()));
    }
    let window = PerfSpec::new(window_fraction)?.window(set.steps())?.min(observed_until);
    let scores = ids
        .into_iter()
        .map(|id| {
            let v = &set.get(id)?.values[observed_until - window..observed_until];
            Ok((id, crate::stats::mean(v)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Ranking::from_scores(scores))
}

/// Ranks by true final `perf`; an evaluation baseline only.
pub fn rank_by_oracle(set: &CurveSet, active: &[usize], perf_spec: &PerfSpec) -> Result<Ranking> {
    let ids = sorted_unique(active)?;
    let scores = ids.into_iter().map(|id| Ok((id, perf(set.get(id)?, perf_spec)?))).collect::<Result<Vec<_>>>()?;
    Ok(Ranking::from_scores(scores))
}
