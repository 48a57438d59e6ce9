//! Synthetic learning-curve families.
//!
//! Each curve's hyperparameter vector is the `(a, b, c)` triple it was drawn
//! with, so hyperparameter similarity carries information about the curve.

use alloc::vec::Vec;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::curve::{CurveSet, LearningCurve, PerfSpec};
use crate::error::{invalid_spec, Error, Result};
use crate::seed::{self, Rng};

/// Steps that make up the grace horizon used when counting crossings.
pub const EARLY_FRACTION: f64 = 0.1;
const MAX_ATTEMPTS: u64 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `y(t) = a · t^(-b) + c`
    PowerLaw,
    /// `y(t) = a · exp(-b · t / T) + c`
    ExponentialDecay,
    /// Exponential decays mixed with slow starters that begin worst and end best.
    CrossingPairMix,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamRanges {
    pub a: (f64, f64),
    pub b: (f64, f64),
    pub c: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticFamilySpec {
    pub family: Family,
    pub param_ranges: ParamRanges,
    pub noise_std: f64,
    #[serde(default)]
    pub slow_starter_fraction: f64,
}

impl SyntheticFamilySpec {
    /// The crossing-heavy family used by the shipped fixtures.
    pub fn crossing_heavy() -> Self {
        Self {
            family: Family::CrossingPairMix,
            param_ranges: ParamRanges { a: (0.5, 1.0), b: (2.0, 5.0), c: (0.2, 0.4) },
            noise_std: 0.005,
            slow_starter_fraction: 0.25,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.param_ranges;
        for (name, (lo, hi)) in [("a", r.a), ("b", r.b), ("c", r.c)] {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(invalid_spec!("param_ranges.{name} must be finite"));
            }
            if lo > hi {
                return Err(invalid_spec!("param_ranges.{name}: low {lo} > high {hi}"));
            }
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(invalid_spec!("noise_std must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.slow_starter_fraction) {
            return Err(invalid_spec!("slow_starter_fraction must lie in [0, 1]"));
        }
        if self.family == Family::CrossingPairMix && (r.a.0 < 0.0 || r.b.0 < 0.0) {
            return Err(invalid_spec!("crossing_pair_mix needs non-negative a and b ranges"));
        }
        Ok(())
    }

    fn required_crossings(&self, n: usize) -> usize {
        if self.family != Family::CrossingPairMix {
            return 0;
        }
        libm::ceil(self.slow_starter_fraction * n as f64 - 1e-9).max(0.0) as usize
    }
}

pub fn power_law(a: f64, b: f64, c: f64, t: usize) -> f64 {
    a * libm::pow(t as f64, -b) + c
}

pub fn exponential_decay(a: f64, b: f64, c: f64, t: usize, steps: usize) -> f64 {
    a * libm::exp(-b * t as f64 / steps as f64) + c
}

fn uniform(rng: &mut Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Parameters for a slow starter: above every regular curve until the early
/// horizon has passed, below every regular asymptote by the end.
fn slow_starter_params(rng: &mut Rng, r: &ParamRanges) -> (f64, f64, f64) {
    let width = (r.c.1 - r.c.0).max(0.1 * r.a.1).max(1e-3);
    let c = uniform(rng, (r.c.0 - 0.5 * width, r.c.0 - 0.1 * width));
    let b_min = r.b.1.max(8.0);
    let b = uniform(rng, (b_min, 2.0 * b_min));
    // At t = EARLY_FRACTION·T the slow curve sits `0.1·width` above the
    // largest value any regular curve can take.
    let a = (r.a.1 + r.c.1 - c + 0.1 * width) * libm::exp(b * EARLY_FRACTION);
    (a, b, c)
}

/// Number of curves whose rank by early mean differs from their rank by final
/// performance. Ranks break ties by candidate id.
pub fn count_rank_changes(set: &CurveSet) -> usize {
    let steps = set.steps();
    let early = (libm::ceil(EARLY_FRACTION * steps as f64 - 1e-9) as usize).clamp(1, steps);
    let early_scores: Vec<f64> = set.curves().iter().map(|c| crate::stats::mean(&c.values[..early])).collect();
    let final_scores = set.perfs(&PerfSpec::default()).expect("default window is valid");
    let ranks = |scores: &[f64]| {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]).then(i.cmp(&j)));
        let mut rank = alloc::vec![0; scores.len()];
        for (r, i) in order.into_iter().enumerate() {
            rank[i] = r;
        }
        rank
    };
    let (re, rf) = (ranks(&early_scores), ranks(&final_scores));
    re.iter().zip(&rf).filter(|(a, b)| a != b).count()
}

fn generate_once(spec: &SyntheticFamilySpec, n: usize, steps: usize, rng: &mut Rng) -> Result<CurveSet> {
    let r = &spec.param_ranges;
    let noise = Normal::new(0.0, spec.noise_std).map_err(|_| invalid_spec!("bad noise_std"))?;
    let slow: Vec<bool> = match spec.family {
        Family::CrossingPairMix => {
            let k = spec.required_crossings(n).min(n);
            let mut mask = alloc::vec![false; n];
            for i in rand::seq::index::sample(rng, n, k) {
                mask[i] = true;
            }
            mask
        }
        _ => alloc::vec![false; n],
    };
    let mut curves = Vec::with_capacity(n);
    for (id, &is_slow) in slow.iter().enumerate() {
        let (a, b, c) = if is_slow {
            slow_starter_params(rng, r)
        } else {
            (uniform(rng, r.a), uniform(rng, r.b), uniform(rng, r.c))
        };
        let values = (1..=steps)
            .map(|t| {
                let clean = match spec.family {
                    Family::PowerLaw => power_law(a, b, c, t),
                    Family::ExponentialDecay | Family::CrossingPairMix => exponential_decay(a, b, c, t, steps),
                };
                if spec.noise_std > 0.0 {
                    clean + noise.sample(rng)
                } else {
                    clean
                }
            })
            .collect();
        curves.push(LearningCurve::new(id, alloc::vec![a, b, c], values));
    }
    CurveSet::new(curves, None)
}

/// Draws `n` curves of `steps` values each. Deterministic in `seed`.
pub fn generate_synthetic(spec: &SyntheticFamilySpec, n: usize, steps: usize, seed: u64) -> Result<CurveSet> {
    spec.validate()?;
    if n < 2 || steps < 2 {
        return Err(invalid_spec!("need N >= 2 and T >= 2, got N={n}, T={steps}"));
    }
    let required = spec.required_crossings(n);
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = seed::rng_at(seed, &[seed::TAG_SYNTH, attempt]);
        let set = generate_once(spec, n, steps, &mut rng)?;
        if required == 0 || count_rank_changes(&set) >= required {
            return Ok(set);
        }
    }
    Err(Error::InvalidSpec(alloc::format!("could not produce {required} rank crossings in {MAX_ATTEMPTS} attempts")))
}
