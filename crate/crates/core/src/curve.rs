//! Learning curves, the final-window performance metric and curve transforms.
//!
//! Time steps are the integers `1..=T`, uniformly spaced and of unit cost.
//! Lower performance values are better.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, invalid_spec, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub candidate_id: usize,
    pub hyperparams: Vec<f64>,
    pub values: Vec<f64>,
}

impl LearningCurve {
    pub fn new(candidate_id: usize, hyperparams: Vec<f64>, values: Vec<f64>) -> Self {
        Self { candidate_id, hyperparams, values }
    }
}

/// A universe of `N` learning curves sharing `T` steps and `D` hyperparameters.
///
/// Candidate ids equal their index in the set (`0..N`), which every
/// constructor enforces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSet {
    curves: Vec<LearningCurve>,
    steps: usize,
    dims: usize,
    reference: Option<Vec<f64>>,
}

impl CurveSet {
    /// Builds a set, checking shapes and finiteness. Ids are reassigned to the
    /// curve's position.
    pub fn new(mut curves: Vec<LearningCurve>, reference: Option<Vec<f64>>) -> Result<Self> {
        let first = curves.first().ok_or(Error::Empty("curve set"))?;
        let steps = first.values.len();
        let dims = first.hyperparams.len();
        if steps == 0 {
            return Err(invalid!("curves need at least one time step"));
        }
        if dims == 0 {
            return Err(invalid!("curves need at least one hyperparameter"));
        }
        for (i, c) in curves.iter_mut().enumerate() {
            if c.values.len() != steps {
                return Err(invalid!("candidate {} has {} steps, expected {}", c.candidate_id, c.values.len(), steps));
            }
            if c.hyperparams.len() != dims {
                return Err(invalid!(
                    "candidate {} has {} hyperparameters, expected {}",
                    c.candidate_id,
                    c.hyperparams.len(),
                    dims
                ));
            }
            if let Some(t) = c.values.iter().position(|v| !v.is_finite()) {
                return Err(invalid!("candidate {} has a non-finite value at t={}", c.candidate_id, t + 1));
            }
            if c.hyperparams.iter().any(|v| !v.is_finite()) {
                return Err(invalid!("candidate {} has a non-finite hyperparameter", c.candidate_id));
            }
            c.candidate_id = i;
        }
        if let Some(r) = &reference {
            if r.len() != steps {
                return Err(Error::Dimension { context: "reference curve", expected: steps, actual: r.len() });
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(invalid!("reference curve has a non-finite value"));
            }
        }
        Ok(Self { curves, steps, dims, reference })
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn curves(&self) -> &[LearningCurve] {
        &self.curves
    }

    pub fn curve(&self, id: usize) -> Option<&LearningCurve> {
        self.curves.get(id)
    }

    pub fn reference(&self) -> Option<&[f64]> {
        self.reference.as_deref()
    }

    /// Looks up a curve, turning unknown ids into an error.
    pub fn get(&self, id: usize) -> Result<&LearningCurve> {
        self.curves.get(id).ok_or_else(|| invalid!("unknown candidate id {id} (set has {} curves)", self.len()))
    }

    pub fn perfs(&self, spec: &PerfSpec) -> Result<Vec<f64>> {
        self.curves.iter().map(|c| perf(c, spec)).collect()
    }

    pub fn mean_perf(&self, spec: &PerfSpec) -> Result<f64> {
        let p = self.perfs(spec)?;
        Ok(crate::stats::mean(&p))
    }
}

/// Defines `perf(i)` as the mean of the final `Δ` values of a curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerfSpec {
    pub window_fraction: f64,
}

impl Default for PerfSpec {
    fn default() -> Self {
        Self { window_fraction: 0.2 }
    }
}

impl PerfSpec {
    pub fn new(window_fraction: f64) -> Result<Self> {
        let spec = Self { window_fraction };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.window_fraction;
        if !(f > 0.0 && f <= 1.0) {
            return Err(invalid_spec!("window_fraction must lie in (0, 1], got {f}"));
        }
        Ok(())
    }

    /// `Δ = max(1, round(window_fraction · T))`.
    pub fn window(&self, steps: usize) -> Result<usize> {
        self.validate()?;
        let w = libm::round(self.window_fraction * steps as f64) as usize;
        let w = w.max(1);
        if w > steps {
            return Err(invalid_spec!("window of {w} steps exceeds T = {steps}"));
        }
        Ok(w)
    }
}

/// Mean of the last `Δ` values of the curve.
pub fn perf(curve: &LearningCurve, spec: &PerfSpec) -> Result<f64> {
    let steps = curve.values.len();
    let w = spec.window(steps)?;
    Ok(crate::stats::mean(&curve.values[steps - w..]))
}

/// `(i*, y*)`: the candidate minimizing `perf`, lowest id on ties.
pub fn best_candidate(set: &CurveSet, spec: &PerfSpec) -> Result<(usize, f64)> {
    best_among(set, set.curves.iter().map(|c| c.candidate_id), spec)
}

/// Like [`best_candidate`] but restricted to `ids`.
pub fn best_among(set: &CurveSet, ids: impl IntoIterator<Item = usize>, spec: &PerfSpec) -> Result<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for id in ids {
        let p = perf(set.get(id)?, spec)?;
        best = match best {
            Some((bi, bp)) if bp < p || (bp == p && bi < id) => Some((bi, bp)),
            _ => Some((id, p)),
        };
    }
    best.ok_or(Error::Empty("candidate set"))
}

/// Replaces every value by its difference to the reference curve.
pub fn apply_reference_diff(set: &CurveSet) -> Result<CurveSet> {
    let reference = set.reference.as_ref().ok_or_else(|| invalid!("curve set has no reference curve"))?;
    let curves = set
        .curves
        .iter()
        .map(|c| LearningCurve {
            candidate_id: c.candidate_id,
            hyperparams: c.hyperparams.clone(),
            values: c.values.iter().zip(reference).map(|(y, r)| y - r).collect(),
        })
        .collect();
    CurveSet::new(curves, Some(alloc::vec![0.0; set.steps]))
}
