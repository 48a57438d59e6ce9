use serde::{Deserialize, Serialize};

use super::model::{evaluate, GpModel};
use super::{GpHyperparams, ObservationSet, Solver, StandardizationParams};
use crate::error::{Error, Result};

/// Adam on the log marginal likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub solver: Solver,
    /// Starting point; [`GpHyperparams::initial`] when absent.
    pub initial: Option<GpHyperparams>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            iterations: 100,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            solver: Solver::Auto,
            initial: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub initial_lml: f64,
    pub best_lml: f64,
    /// Number of Adam steps taken before the best iterate (0 = initial point).
    pub best_iteration: usize,
    pub iterations: usize,
}

/// Maximizes the marginal likelihood and returns the model at the best
/// iterate seen along the trajectory.
pub fn fit(
    observations: ObservationSet,
    standardization: StandardizationParams,
    config: &FitConfig,
) -> Result<GpModel> {
    if observations.len() < 2 {
        return Err(Error::InvalidInput(alloc::format!(
            "fitting needs at least two observations, got {}",
            observations.len()
        )));
    }
    let mut theta = match &config.initial {
        Some(hp) => hp.to_vec(),
        None => GpHyperparams::initial(observations.dims()).to_vec(),
    };
    let k = theta.len();
    let mut m = alloc::vec![0.0; k];
    let mut v = alloc::vec![0.0; k];
    let (mut b1t, mut b2t) = (1.0, 1.0);
    let mut best = None;
    let mut initial_lml = f64::NAN;
    for it in 0..=config.iterations {
        let hp = GpHyperparams::from_vec(&theta)?;
        let last = it == config.iterations;
        let eval = evaluate(&hp, &observations, config.solver, !last)?;
        let grad_ok = eval.grad.as_ref().is_none_or(|g| g.iter().all(|x| x.is_finite()));
        if !eval.lml.is_finite() || !grad_ok {
            return Err(Error::NonFinite { iteration: it, parameters: theta });
        }
        if it == 0 {
            initial_lml = eval.lml;
        }
        let improves = best.as_ref().is_none_or(|(lml, _, _, _)| eval.lml > *lml);
        let grad = eval.grad.clone();
        if improves {
            best = Some((eval.lml, it, hp, eval));
        }
        let Some(g) = grad else { break };
        b1t *= config.beta1;
        b2t *= config.beta2;
        for i in 0..k {
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
            let m_hat = m[i] / (1.0 - b1t);
            let v_hat = v[i] / (1.0 - b2t);
            theta[i] += config.learning_rate * m_hat / (libm::sqrt(v_hat) + config.epsilon);
        }
    }
    let (best_lml, best_iteration, hp, eval) = best.expect("at least one iterate");
    let mut model = GpModel::from_eval(hp, observations, standardization, eval);
    model.fit_summary = Some(FitSummary { initial_lml, best_lml, best_iteration, iterations: config.iterations });
    Ok(model)
}
