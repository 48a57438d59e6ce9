use alloc::vec::Vec;
use core::f64::consts::PI;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::kernel::KernelCache;
use super::{ObservationSet, JITTER_LADDER};
use crate::error::{Error, Result};

pub(crate) struct DenseFactor {
    pub chol: Cholesky<f64, Dyn>,
    pub jitter: f64,
}

impl DenseFactor {
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(v)
    }

    pub fn solve_matrix(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(v)
    }

    pub fn logdet(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..l.nrows()).map(|i| libm::log(l[(i, i)])).sum::<f64>()
    }
}

/// Noise-free covariance of the observed cells.
pub(crate) fn kernel_matrix(cache: &KernelCache, obs: &ObservationSet) -> DMatrix<f64> {
    let cells = &obs.cells;
    let n = cells.len();
    DMatrix::from_fn(n, n, |i, j| cache.k((cells[i].row, cells[i].step), (cells[j].row, cells[j].step)))
}

pub(crate) fn factor(cache: &KernelCache, obs: &ObservationSet) -> Result<DenseFactor> {
    let k = kernel_matrix(cache, obs);
    let mut tried = Vec::new();
    for &level in &JITTER_LADDER {
        let jitter = level * cache.amp2;
        tried.push(jitter);
        let mut ky = k.clone();
        for i in 0..ky.nrows() {
            ky[(i, i)] += cache.noise_var + jitter;
        }
        if let Some(chol) = ky.cholesky() {
            return Ok(DenseFactor { chol, jitter });
        }
    }
    Err(Error::Factorization { ladder: tried })
}

pub(crate) struct DenseEval {
    pub lml: f64,
    pub grad: Option<Vec<f64>>,
    pub factor: DenseFactor,
    pub alpha: DVector<f64>,
}

pub(crate) fn evaluate(cache: &KernelCache, obs: &ObservationSet, want_grad: bool) -> Result<DenseEval> {
    let factor = factor(cache, obs)?;
    let y = DVector::from_column_slice(&obs.targets);
    let alpha = factor.solve(&y);
    let n = y.len() as f64;
    let lml = -0.5 * y.dot(&alpha) - 0.5 * factor.logdet() - 0.5 * n * libm::log(2.0 * PI);
    let grad = want_grad.then(|| gradient(cache, obs, &factor, &alpha));
    Ok(DenseEval { lml, grad, factor, alpha })
}

/// `½ tr((ααᵀ - K⁻¹) ∂K/∂θ)` for every log parameter.
fn gradient(cache: &KernelCache, obs: &ObservationSet, factor: &DenseFactor, alpha: &DVector<f64>) -> Vec<f64> {
    let dims = cache.dims();
    let w = factor.chol.inverse();
    let cells = &obs.cells;
    let mut g = alloc::vec![0.0; dims + 3];
    for i in 0..cells.len() {
        let (ri, ti) = (cells[i].row, cells[i].step);
        for j in 0..=i {
            let (rj, tj) = (cells[j].row, cells[j].step);
            let mult = if i == j { 1.0 } else { 2.0 };
            let a = mult * (alpha[i] * alpha[j] - w[(i, j)]);
            let k = cache.k((ri, ti), (rj, tj));
            let ak = a * k;
            for (d, dx2) in cache.dx2.iter().enumerate() {
                g[d] += ak * dx2[(ri, rj)];
            }
            g[dims] += ak * cache.dt2[(ti, tj)];
            g[dims + 1] += 2.0 * ak;
            if i == j {
                g[dims + 2] += a * 2.0 * cache.noise_var;
            }
        }
    }
    g.iter_mut().for_each(|v| *v *= 0.5);
    g
}
