use alloc::vec::Vec;
use nalgebra::DMatrix;

use super::{GpHyperparams, ObservationSet};

/// A point in (hyperparameters × time) space.
#[derive(Debug, Clone, Copy)]
pub struct Point<'a> {
    pub x: &'a [f64],
    pub t: f64,
}

/// `amp² · exp(-½ Σ_d ((x_d - x'_d)/ℓ_d)²) · exp(-½ ((t - t')/ℓ_T)²)`
pub fn kernel_eval(hp: &GpHyperparams, a: Point<'_>, b: Point<'_>) -> f64 {
    debug_assert_eq!(a.x.len(), hp.dims());
    let mut r2 = 0.0;
    for (d, (xa, xb)) in a.x.iter().zip(b.x).enumerate() {
        let z = (xa - xb) / hp.lengthscale(d);
        r2 += z * z;
    }
    let zt = (a.t - b.t) / hp.time_lengthscale();
    hp.amplitude2() * libm::exp(-0.5 * r2) * libm::exp(-0.5 * zt * zt)
}

/// Kernel factors and scaled squared distances on the candidate rows and the
/// time grid of an observation set. `kx` and `kt` exclude the amplitude.
pub(crate) struct KernelCache {
    pub kx: DMatrix<f64>,
    pub kt: DMatrix<f64>,
    /// `((x_d - x'_d) / ℓ_d)²` per hyperparameter dimension.
    pub dx2: Vec<DMatrix<f64>>,
    /// `((t - t') / ℓ_T)²`
    pub dt2: DMatrix<f64>,
    pub amp2: f64,
    pub noise_var: f64,
}

impl KernelCache {
    pub fn new(hp: &GpHyperparams, obs: &ObservationSet) -> Self {
        Self::from_inputs(hp, &obs.x_matrix, &obs.t_grid)
    }

    pub fn from_inputs(hp: &GpHyperparams, x_rows: &[Vec<f64>], t_grid: &[f64]) -> Self {
        let rows = x_rows.len();
        let dims = hp.dims();
        let mut dx2 = Vec::with_capacity(dims);
        let mut total = DMatrix::zeros(rows, rows);
        #[allow(clippy::needless_range_loop)]
        for d in 0..dims {
            let l = hp.lengthscale(d);
            let m = DMatrix::from_fn(rows, rows, |i, j| {
                let z = (x_rows[i][d] - x_rows[j][d]) / l;
                z * z
            });
            total += &m;
            dx2.push(m);
        }
        let kx = total.map(|r2| libm::exp(-0.5 * r2));
        let lt = hp.time_lengthscale();
        let steps = t_grid.len();
        let dt2 = DMatrix::from_fn(steps, steps, |i, j| {
            let z = (t_grid[i] - t_grid[j]) / lt;
            z * z
        });
        let kt = dt2.map(|r2| libm::exp(-0.5 * r2));
        Self { kx, kt, dx2, dt2, amp2: hp.amplitude2(), noise_var: hp.noise_variance() }
    }

    pub fn dims(&self) -> usize {
        self.dx2.len()
    }

    /// Noise-free kernel between two grid cells.
    #[inline]
    pub fn k(&self, (ra, ta): (usize, usize), (rb, tb): (usize, usize)) -> f64 {
        self.amp2 * self.kx[(ra, rb)] * self.kt[(ta, tb)]
    }
}
