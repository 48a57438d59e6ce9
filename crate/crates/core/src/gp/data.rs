use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::curve::CurveSet;
use crate::error::{invalid, Error, Result};

/// One observed grid cell: a row of the hyperparameter matrix and an index
/// into the time grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub step: usize,
}

/// Training data for the GP: observed cells on the (candidate × time) grid
/// with standardized targets and normalized inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    /// Candidate id of each row of `x_matrix`.
    pub candidate_ids: Vec<usize>,
    /// Normalized hyperparameters, one row per candidate.
    pub x_matrix: Vec<Vec<f64>>,
    /// Normalized time coordinates of steps `1..=T`.
    pub t_grid: Vec<f64>,
    pub cells: Vec<Cell>,
    pub targets: Vec<f64>,
}

impl ObservationSet {
    pub fn new(
        candidate_ids: Vec<usize>,
        x_matrix: Vec<Vec<f64>>,
        t_grid: Vec<f64>,
        cells: Vec<Cell>,
        targets: Vec<f64>,
    ) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::Empty("observation set"));
        }
        if cells.len() != targets.len() {
            return Err(Error::Dimension {
                context: "observation targets",
                expected: cells.len(),
                actual: targets.len(),
            });
        }
        if candidate_ids.len() != x_matrix.len() {
            return Err(Error::Dimension {
                context: "candidate ids",
                expected: x_matrix.len(),
                actual: candidate_ids.len(),
            });
        }
        let dims = x_matrix.first().map_or(0, Vec::len);
        if dims == 0 {
            return Err(invalid!("observation set needs at least one hyperparameter dimension"));
        }
        let in_unit = |v: &f64| (0.0..=1.0).contains(v);
        for row in &x_matrix {
            if row.len() != dims {
                return Err(Error::Dimension { context: "x_matrix row", expected: dims, actual: row.len() });
            }
            if !row.iter().all(in_unit) {
                return Err(invalid!("normalized hyperparameters must lie in [0, 1]"));
            }
        }
        if t_grid.is_empty() || !t_grid.iter().all(in_unit) {
            return Err(invalid!("time grid must be non-empty and lie in [0, 1]"));
        }
        if !targets.iter().all(|v| v.is_finite()) {
            return Err(invalid!("observation targets must be finite"));
        }
        let mut sorted = cells.clone();
        sorted.sort_unstable();
        for w in sorted.windows(2) {
            if w[0] == w[1] {
                return Err(invalid!("duplicate observation at row {}, step {}", w[0].row, w[0].step));
            }
        }
        for c in &cells {
            if c.row >= x_matrix.len() || c.step >= t_grid.len() {
                return Err(invalid!("cell ({}, {}) is outside the grid", c.row, c.step));
            }
        }
        Ok(Self { candidate_ids, x_matrix, t_grid, cells, targets })
    }

    /// Builds observations from curves.
    ///
    /// `pool` lists every candidate whose hyperparameters are known (used for
    /// input normalization and as the GP's rows); `horizons` gives, for each
    /// observed candidate, how many leading steps have been revealed.
    pub fn from_curves(
        set: &CurveSet,
        pool: &[usize],
        horizons: &[(usize, usize)],
    ) -> Result<(Self, StandardizationParams)> {
        let standardization = StandardizationParams::fit(set, pool, horizons)?;
        let mut ids = pool.to_vec();
        ids.sort_unstable();
        ids.dedup();
        let x_matrix = ids
            .iter()
            .map(|&id| Ok(standardization.normalize_x(&set.get(id)?.hyperparams)))
            .collect::<Result<Vec<_>>>()?;
        let t_grid = (1..=set.steps()).map(|t| standardization.normalize_t(t)).collect();
        let mut cells = Vec::new();
        let mut targets = Vec::new();
        for &(id, horizon) in horizons {
            let row = ids.binary_search(&id).map_err(|_| invalid!("observed candidate {id} is not in the pool"))?;
            let curve = set.get(id)?;
            for (step, &y) in curve.values.iter().enumerate().take(horizon) {
                cells.push(Cell { row, step });
                targets.push(standardization.standardize(y));
            }
        }
        Ok((Self::new(ids, x_matrix, t_grid, cells, targets)?, standardization))
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.x_matrix[0].len()
    }

    pub fn steps(&self) -> usize {
        self.t_grid.len()
    }

    pub fn row_of(&self, candidate_id: usize) -> Option<usize> {
        self.candidate_ids.iter().position(|&c| c == candidate_id)
    }

    /// SHA-256 over inputs, cells and targets, for reproducibility audits.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for row in &self.x_matrix {
            for v in row {
                h.update(v.to_le_bytes());
            }
        }
        for v in &self.t_grid {
            h.update(v.to_le_bytes());
        }
        for (c, y) in self.cells.iter().zip(&self.targets) {
            h.update((self.candidate_ids[c.row] as u64).to_le_bytes());
            h.update((c.step as u64).to_le_bytes());
            h.update(y.to_le_bytes());
        }
        h.finalize().into()
    }
}

/// Input scaling to `[0, 1]` and output standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub input_mins: Vec<f64>,
    pub input_maxes: Vec<f64>,
    pub steps: usize,
    /// Mean over the final time step of the curves observed there.
    pub output_shift: f64,
    /// Standard deviation over all observed values.
    pub output_scale: f64,
}

impl StandardizationParams {
    /// Identity output transform and `[0, 1]` input bounds.
    pub fn identity(dims: usize, steps: usize) -> Self {
        Self {
            input_mins: alloc::vec![0.0; dims],
            input_maxes: alloc::vec![1.0; dims],
            steps,
            output_shift: 0.0,
            output_scale: 1.0,
        }
    }

    pub fn fit(set: &CurveSet, pool: &[usize], horizons: &[(usize, usize)]) -> Result<Self> {
        if pool.is_empty() {
            return Err(Error::Empty("candidate pool"));
        }
        let dims = set.dims();
        let steps = set.steps();
        let mut mins = alloc::vec![f64::INFINITY; dims];
        let mut maxes = alloc::vec![f64::NEG_INFINITY; dims];
        for &id in pool {
            for (d, &v) in set.get(id)?.hyperparams.iter().enumerate() {
                mins[d] = mins[d].min(v);
                maxes[d] = maxes[d].max(v);
            }
        }
        let mut all = Vec::new();
        let mut last = Vec::new();
        for &(id, horizon) in horizons {
            if horizon > steps {
                return Err(invalid!("horizon {horizon} of candidate {id} exceeds T = {steps}"));
            }
            let values = &set.get(id)?.values;
            all.extend_from_slice(&values[..horizon]);
            if horizon == steps {
                last.push(values[steps - 1]);
            }
        }
        if all.is_empty() {
            return Err(Error::Empty("observations"));
        }
        if last.is_empty() {
            return Err(invalid!("output standardization needs at least one curve observed through the final step"));
        }
        let shift = crate::stats::mean(&last);
        let sd = crate::stats::sample_std(&all);
        let scale = if sd.is_finite() && sd > 0.0 { sd } else { 1.0 };
        Ok(Self { input_mins: mins, input_maxes: maxes, steps, output_shift: shift, output_scale: scale })
    }

    /// Per-dimension min/max scaling; constant dimensions map to 0.5.
    pub fn normalize_x(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.input_mins.iter().zip(&self.input_maxes))
            .map(|(&v, (&lo, &hi))| if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.5 })
            .collect()
    }

    /// Maps step `t ∈ 1..=T` to `(t - 1) / (T - 1)`.
    pub fn normalize_t(&self, t: usize) -> f64 {
        if self.steps <= 1 {
            0.0
        } else {
            (t as f64 - 1.0) / (self.steps as f64 - 1.0)
        }
    }

    pub fn standardize(&self, y: f64) -> f64 {
        (y - self.output_shift) / self.output_scale
    }

    pub fn destandardize(&self, z: f64) -> f64 {
        z * self.output_scale + self.output_shift
    }

    pub fn destandardize_var(&self, v: f64) -> f64 {
        v * self.output_scale * self.output_scale
    }
}
