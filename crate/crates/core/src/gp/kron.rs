//! Masked Kronecker matrix-vector products and conjugate gradients.

use alloc::vec::Vec;
use nalgebra::DMatrix;

use super::kernel::KernelCache;
use super::{Cell, GpHyperparams};
use crate::error::{invalid, Error, Result};

/// `amp² · (K_X ⊗ K_T)` restricted to a set of observed grid cells.
pub struct KroneckerOperator {
    kx: DMatrix<f64>,
    kt: DMatrix<f64>,
    amp2: f64,
    mask: Vec<Cell>,
}

impl KroneckerOperator {
    pub fn new(hp: &GpHyperparams, x_matrix: &[Vec<f64>], t_grid: &[f64], mask: &[Cell]) -> Result<Self> {
        if x_matrix.iter().any(|r| r.len() != hp.dims()) {
            return Err(Error::Dimension {
                context: "x_matrix row",
                expected: hp.dims(),
                actual: x_matrix.iter().map(Vec::len).find(|&l| l != hp.dims()).unwrap_or(0),
            });
        }
        let (rows, steps) = (x_matrix.len(), t_grid.len());
        let mut seen = alloc::vec![false; rows * steps];
        for c in mask {
            if c.row >= rows || c.step >= steps {
                return Err(invalid!("cell ({}, {}) is outside the {rows}x{steps} grid", c.row, c.step));
            }
            let i = c.row * steps + c.step;
            if seen[i] {
                return Err(invalid!("duplicate cell ({}, {}) in mask", c.row, c.step));
            }
            seen[i] = true;
        }
        let cache = KernelCache::from_inputs(hp, x_matrix, t_grid);
        Ok(Self { kx: cache.kx, kt: cache.kt, amp2: cache.amp2, mask: mask.to_vec() })
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    /// Scatter onto the grid, multiply by `K_X` on the left and `K_T` on the
    /// right, gather back.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.mask.len() {
            return Err(Error::Dimension {
                context: "kronecker matvec input",
                expected: self.mask.len(),
                actual: v.len(),
            });
        }
        let mut grid = DMatrix::zeros(self.kx.nrows(), self.kt.nrows());
        for (c, &x) in self.mask.iter().zip(v) {
            grid[(c.row, c.step)] = x;
        }
        let out = &self.kx * grid * &self.kt;
        Ok(self.mask.iter().map(|c| self.amp2 * out[(c.row, c.step)]).collect())
    }
}

/// One product `amp² (K_X ⊗ K_T)[mask, mask] · v`, without observation noise.
pub fn kronecker_matvec(
    hp: &GpHyperparams,
    x_matrix: &[Vec<f64>],
    t_grid: &[f64],
    mask: &[Cell],
    v: &[f64],
) -> Result<Vec<f64>> {
    KroneckerOperator::new(hp, x_matrix, t_grid, mask)?.apply(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub rel_residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` for symmetric positive definite `A` given as a matvec.
/// Stops once `‖b - A x‖ ≤ tol · ‖b‖`.
pub fn conjugate_gradient<F>(mut op: F, b: &[f64], tol: f64, max_iter: usize) -> Result<CgOutcome>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let n = b.len();
    let b_norm = libm::sqrt(dot(b, b));
    let mut x = alloc::vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(CgOutcome { x, iterations: 0, rel_residual: 0.0, converged: true });
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut iterations = 0;
    while iterations < max_iter && libm::sqrt(rr) > tol * b_norm {
        let ap = op(&p)?;
        let pap = dot(&p, &ap);
        if pap.is_nan() || pap <= 0.0 {
            return Err(invalid!("operator is not positive definite (pᵀAp = {pap})"));
        }
        let step = rr / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        let rr_next = dot(&r, &r);
        let beta = rr_next / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_next;
        iterations += 1;
    }
    let rel_residual = libm::sqrt(rr) / b_norm;
    Ok(CgOutcome { x, iterations, rel_residual, converged: rel_residual <= tol })
}
