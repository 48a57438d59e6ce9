//! Product-kernel Gaussian Process over (hyperparameters × time).
//!
//! `k((x, t), (x', t')) = amp² · k_X(x, x') · k_T(t, t')` with squared
//! exponential factors, one length scale per input dimension, and
//! homoscedastic observation noise. Hyperparameters live in log space.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod data;
mod dense;
mod fit;
mod kernel;
mod kron;
mod model;
mod structured;

pub use data::{Cell, ObservationSet, StandardizationParams};
pub use fit::{fit, FitConfig, FitSummary};
pub use kernel::{kernel_eval, Point};
pub use kron::{conjugate_gradient, kronecker_matvec, CgOutcome, KroneckerOperator};
pub use model::{predict_perf, GpModel, GpRecord, WindowPosterior};

/// Fixed diagonal jitter levels (multiples of amp²) tried when a
/// factorization fails.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-8, 1e-6, 1e-4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparams {
    /// `D` hyperparameter dimensions followed by the time dimension.
    pub log_lengthscales: Vec<f64>,
    pub log_amplitude: f64,
    /// Log of the noise standard deviation.
    pub log_noise: f64,
}

impl GpHyperparams {
    /// Unit length scales and amplitude, noise std 0.1.
    pub fn initial(dims: usize) -> Self {
        Self { log_lengthscales: alloc::vec![0.0; dims + 1], log_amplitude: 0.0, log_noise: libm::log(0.1) }
    }

    /// Number of hyperparameter (non-time) input dimensions.
    pub fn dims(&self) -> usize {
        self.log_lengthscales.len() - 1
    }

    pub fn n_params(&self) -> usize {
        self.log_lengthscales.len() + 2
    }

    pub fn lengthscale(&self, d: usize) -> f64 {
        libm::exp(self.log_lengthscales[d])
    }

    pub fn time_lengthscale(&self) -> f64 {
        libm::exp(self.log_lengthscales[self.dims()])
    }

    pub fn amplitude2(&self) -> f64 {
        libm::exp(2.0 * self.log_amplitude)
    }

    pub fn noise_variance(&self) -> f64 {
        libm::exp(2.0 * self.log_noise)
    }

    /// Flat parameter vector: length scales, amplitude, noise.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.log_lengthscales.clone();
        v.push(self.log_amplitude);
        v.push(self.log_noise);
        v
    }

    pub fn from_vec(params: &[f64]) -> Result<Self> {
        if params.len() < 4 {
            return Err(Error::Dimension { context: "hyperparameter vector", expected: 4, actual: params.len() });
        }
        let n = params.len();
        Ok(Self { log_lengthscales: params[..n - 2].to_vec(), log_amplitude: params[n - 2], log_noise: params[n - 1] })
    }

    pub fn is_finite(&self) -> bool {
        self.to_vec().iter().all(|v| v.is_finite())
    }
}

/// Linear-algebra route for the marginal likelihood and posterior solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    /// Structured when the observations allow it, dense otherwise.
    #[default]
    Auto,
    /// Cholesky of the full `n × n` covariance.
    Dense,
    /// Kronecker eigendecomposition of the fully observed block plus a dense
    /// Schur complement for the partially observed block. Requires every
    /// candidate's observations to be a prefix of the time grid, with at
    /// most two distinct prefix lengths.
    Structured,
}

/// Log marginal likelihood `log p(y | θ)` of the observations.
pub fn log_marginal_likelihood(hp: &GpHyperparams, obs: &ObservationSet) -> Result<f64> {
    Ok(model::evaluate(hp, obs, Solver::Auto, false)?.lml)
}

/// Gradient of the log marginal likelihood with respect to the log
/// parameters, ordered as [`GpHyperparams::to_vec`].
pub fn lml_gradient(hp: &GpHyperparams, obs: &ObservationSet) -> Result<Vec<f64>> {
    lml_gradient_with(hp, obs, Solver::Auto)
}

pub fn lml_gradient_with(hp: &GpHyperparams, obs: &ObservationSet, solver: Solver) -> Result<Vec<f64>> {
    let eval = model::evaluate(hp, obs, solver, true)?;
    Ok(eval.grad.expect("gradient requested"))
}

pub fn log_marginal_likelihood_with(hp: &GpHyperparams, obs: &ObservationSet, solver: Solver) -> Result<f64> {
    Ok(model::evaluate(hp, obs, solver, false)?.lml)
}
