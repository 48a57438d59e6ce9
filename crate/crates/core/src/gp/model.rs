use alloc::string::String;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dense::{self, DenseFactor};
use super::kernel::KernelCache;
use super::kron::{conjugate_gradient, CgOutcome, KroneckerOperator};
use super::structured::{self, Layout, StructuredFactor};
use super::{FitSummary, GpHyperparams, ObservationSet, Solver, StandardizationParams};
use crate::curve::PerfSpec;
use crate::error::{invalid, Error, Result};
use crate::ranking::CandidateSummary;
use crate::seed;

pub(crate) enum Factor {
    Dense(DenseFactor),
    Structured(alloc::boxed::Box<StructuredFactor>),
}

impl Factor {
    fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Factor::Dense(f) => f.solve(v),
            Factor::Structured(f) => f.solve(v),
        }
    }

    fn solve_matrix(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Factor::Dense(f) => f.solve_matrix(v),
            Factor::Structured(f) => f.solve_matrix(v),
        }
    }

    fn jitter(&self) -> f64 {
        match self {
            Factor::Dense(f) => f.jitter,
            Factor::Structured(f) => f.jitter,
        }
    }
}

pub(crate) struct Eval {
    pub lml: f64,
    pub grad: Option<Vec<f64>>,
    pub factor: Factor,
    pub alpha: DVector<f64>,
    pub cache: KernelCache,
}

fn check(hp: &GpHyperparams, obs: &ObservationSet) -> Result<()> {
    if hp.log_lengthscales.len() != obs.dims() + 1 {
        return Err(Error::Dimension {
            context: "log_lengthscales",
            expected: obs.dims() + 1,
            actual: hp.log_lengthscales.len(),
        });
    }
    if !hp.is_finite() {
        return Err(invalid!("GP hyperparameters must be finite"));
    }
    Ok(())
}

pub(crate) fn evaluate(hp: &GpHyperparams, obs: &ObservationSet, solver: Solver, want_grad: bool) -> Result<Eval> {
    check(hp, obs)?;
    let cache = KernelCache::new(hp, obs);
    let layout = match solver {
        Solver::Dense => None,
        Solver::Auto => Layout::detect(obs),
        Solver::Structured => Some(
            Layout::detect(obs)
                .ok_or_else(|| invalid!("observations are not per-candidate prefixes with at most two lengths"))?,
        ),
    };
    match layout {
        Some(layout) => {
            let e = structured::evaluate(&cache, obs, layout, want_grad)?;
            Ok(Eval {
                lml: e.lml,
                grad: e.grad,
                factor: Factor::Structured(alloc::boxed::Box::new(e.factor)),
                alpha: e.alpha,
                cache,
            })
        }
        None => {
            let e = dense::evaluate(&cache, obs, want_grad)?;
            Ok(Eval { lml: e.lml, grad: e.grad, factor: Factor::Dense(e.factor), alpha: e.alpha, cache })
        }
    }
}

/// A GP with fixed hyperparameters, conditioned on its observations.
pub struct GpModel {
    pub hyperparams: GpHyperparams,
    pub observations: ObservationSet,
    pub standardization: StandardizationParams,
    pub fit_summary: Option<FitSummary>,
    lml: f64,
    cache: KernelCache,
    factor: Factor,
    alpha: DVector<f64>,
}

/// Reproducibility record of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpRecord {
    pub hyperparams: GpHyperparams,
    pub standardization: StandardizationParams,
    pub n_observations: usize,
    /// Hex SHA-256 of the observation set.
    pub observation_digest: String,
    pub log_marginal_likelihood: f64,
    pub jitter: f64,
    pub fit: Option<FitSummary>,
}

/// Joint posterior of the latent curve over a candidate's final window, in
/// standardized units.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPosterior {
    pub candidate_id: usize,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl WindowPosterior {
    /// Closed-form mean and variance of the window average, de-standardized.
    pub fn perf_moments(&self, standardization: &StandardizationParams) -> (f64, f64) {
        let w = 1.0 / self.mean.len() as f64;
        let mean = self.mean.sum() * w;
        let var = self.cov.sum() * w * w;
        (standardization.destandardize(mean), standardization.destandardize_var(var))
    }
}

impl GpModel {
    pub fn new(
        hyperparams: GpHyperparams,
        observations: ObservationSet,
        standardization: StandardizationParams,
        solver: Solver,
    ) -> Result<Self> {
        let eval = evaluate(&hyperparams, &observations, solver, false)?;
        Ok(Self::from_eval(hyperparams, observations, standardization, eval))
    }

    pub(crate) fn from_eval(
        hyperparams: GpHyperparams,
        observations: ObservationSet,
        standardization: StandardizationParams,
        eval: Eval,
    ) -> Self {
        Self {
            hyperparams,
            observations,
            standardization,
            fit_summary: None,
            lml: eval.lml,
            cache: eval.cache,
            factor: eval.factor,
            alpha: eval.alpha,
        }
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.lml
    }

    pub fn lml_gradient(&self) -> Result<Vec<f64>> {
        super::lml_gradient(&self.hyperparams, &self.observations)
    }

    /// Diagonal jitter (absolute) that made the covariance factorizable.
    pub fn jitter(&self) -> f64 {
        self.factor.jitter()
    }

    pub fn uses_structured_solver(&self) -> bool {
        matches!(self.factor, Factor::Structured(_))
    }

    /// `(K + σ²I)⁻¹ v` through the cached factorization.
    pub fn solve(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v.len())?;
        Ok(self.factor.solve(&DVector::from_column_slice(v)).as_slice().to_vec())
    }

    /// `(K + σ²I)⁻¹ v` by conjugate gradients on masked Kronecker products.
    pub fn solve_cg(&self, v: &[f64], tol: f64, max_iter: usize) -> Result<CgOutcome> {
        self.check_len(v.len())?;
        let obs = &self.observations;
        let op = KroneckerOperator::new(&self.hyperparams, &obs.x_matrix, &obs.t_grid, &obs.cells)?;
        let noise = self.cache.noise_var + self.jitter();
        let out = conjugate_gradient(
            |p| {
                let mut kp = op.apply(p)?;
                kp.iter_mut().zip(p).for_each(|(a, b)| *a += noise * b);
                Ok(kp)
            },
            v,
            tol,
            max_iter,
        )?;
        if !out.converged {
            return Err(Error::NotConverged { iterations: out.iterations, residual: out.rel_residual });
        }
        Ok(out)
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.observations.len() {
            return Err(Error::Dimension {
                context: "solve right-hand side",
                expected: self.observations.len(),
                actual: n,
            });
        }
        Ok(())
    }

    pub fn record(&self) -> GpRecord {
        let digest = self.observations.digest();
        let mut hex = String::with_capacity(64);
        for b in digest {
            use core::fmt::Write;
            let _ = write!(hex, "{b:02x}");
        }
        GpRecord {
            hyperparams: self.hyperparams.clone(),
            standardization: self.standardization.clone(),
            n_observations: self.observations.len(),
            observation_digest: hex,
            log_marginal_likelihood: self.lml,
            jitter: self.jitter(),
            fit: self.fit_summary.clone(),
        }
    }

    /// Latent posterior over the final `Δ` steps of one candidate, conditioned
    /// on every observation.
    pub fn window_posterior(&self, candidate_id: usize, perf_spec: &PerfSpec) -> Result<WindowPosterior> {
        let obs = &self.observations;
        let row = obs
            .row_of(candidate_id)
            .ok_or_else(|| invalid!("candidate {candidate_id} is not covered by the GP model"))?;
        let steps = obs.steps();
        let window = perf_spec.window(steps)?;
        let query: Vec<usize> = (steps - window..steps).collect();
        let cache = &self.cache;
        let cross = DMatrix::from_fn(obs.len(), window, |i, j| {
            let c = obs.cells[i];
            cache.k((c.row, c.step), (row, query[j]))
        });
        let mean = cross.tr_mul(&self.alpha);
        let solved = self.factor.solve_matrix(&cross);
        let prior = DMatrix::from_fn(window, window, |i, j| cache.k((row, query[i]), (row, query[j])));
        let mut cov = prior - cross.tr_mul(&solved);
        cov = (&cov + cov.transpose()) * 0.5;
        Ok(WindowPosterior { candidate_id, mean, cov })
    }
}

/// Monte-Carlo estimate of each candidate's `perf` distribution from
/// `n_samples` joint posterior draws over its final window.
///
/// Every candidate draws from its own stream derived from `seed` and its id,
/// so results do not depend on the order or the set of queried candidates.
pub fn predict_perf(
    model: &GpModel,
    candidates: &[usize],
    perf_spec: &PerfSpec,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<CandidateSummary>> {
    if n_samples < 2 {
        return Err(invalid!("need at least two posterior samples, got {n_samples}"));
    }
    let st = &model.standardization;
    candidates
        .iter()
        .map(|&id| {
            let post = model.window_posterior(id, perf_spec)?;
            let w = post.mean.len();
            let eig = SymmetricEigen::new(post.cov.clone());
            let mut sqrt = eig.eigenvectors;
            for (j, l) in eig.eigenvalues.iter().enumerate() {
                let s = libm::sqrt(l.max(0.0));
                sqrt.column_mut(j).scale_mut(s);
            }
            let mut rng = seed::rng_at(seed, &[id as u64]);
            let mut z = DVector::zeros(w);
            let draws: Vec<f64> = (0..n_samples)
                .map(|_| {
                    for v in z.iter_mut() {
                        *v = StandardNormal.sample(&mut rng);
                    }
                    let f = &post.mean + &sqrt * &z;
                    f.sum() / w as f64
                })
                .collect();
            let mu = crate::stats::mean(&draws);
            let var = crate::stats::sample_variance(&draws);
            Ok(CandidateSummary {
                candidate_id: id,
                mu: st.destandardize(mu),
                sigma2: st.destandardize_var(var).max(1e-12),
            })
        })
        .collect()
}
