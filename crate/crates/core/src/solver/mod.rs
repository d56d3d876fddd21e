//! The alternating HiGLASSO fit: a sweep of GLQA `beta_j` updates followed by
//! a joint `eta` update, repeated until the objective stops moving.

mod diagnostics;
mod init;
mod line_search;
mod objective;
mod problem;
mod state;
mod updates;

use nalgebra::DVector;
use serde::Serialize;

pub use diagnostics::{
    kkt_residuals, kkt_summary, smooth_gradient, KktResiduals, KktSummary, SmoothGradient,
};
pub use init::{initialize, Init};
pub use line_search::{line_search, LineSearchOutcome};
pub use objective::{fitted_mean, objective, partial_residual_beta, partial_residual_eta};
pub use problem::Problem;
pub use state::{compute_gamma, kron, ModelState};
pub use updates::{update_beta_block, update_eta, BlockUpdate, EtaUpdate};

pub(crate) use state::is_zero;

use crate::design::GroupedDesign;
use crate::error::{input, Error, Result};
use crate::penalty::PenaltyConfig;

#[derive(Debug, Clone, Serialize)]
pub struct FitOptions {
    pub max_outer_iterations: usize,
    /// Stop once successive objectives differ by less than this.
    pub delta: f64,
    pub armijo_c: f64,
    pub step_shrink: f64,
    pub max_backtracks: usize,
    pub init: Init,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_outer_iterations: 100,
            delta: 1e-5,
            armijo_c: 1e-4,
            step_shrink: 0.5,
            max_backtracks: 50,
            init: Init::ElasticNet,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_outer_iterations == 0 || self.max_backtracks == 0 {
            return Err(input("iteration limits must be positive"));
        }
        if !(self.delta > 0.0) {
            return Err(input("delta must be positive"));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0)
            || !(self.step_shrink > 0.0 && self.step_shrink < 1.0)
        {
            return Err(input("armijo_c and step_shrink must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Fits the model on a preprocessed design.
pub fn fit(
    design: &GroupedDesign,
    y: &DVector<f64>,
    config: &PenaltyConfig,
    options: &FitOptions,
) -> Result<ModelState> {
    let problem = Problem::new(design, y)?;
    fit_problem(&problem, config, options)
}

/// Fits the model from precomputed sufficient statistics.
pub fn fit_problem(
    problem: &Problem,
    config: &PenaltyConfig,
    options: &FitOptions,
) -> Result<ModelState> {
    fit_with_observer(problem, config, options, |_| {})
}

/// Like [`fit_problem`], calling `observer` with the starting state and with
/// the state after every outer iteration.
pub fn fit_with_observer<F>(
    problem: &Problem,
    config: &PenaltyConfig,
    options: &FitOptions,
    mut observer: F,
) -> Result<ModelState>
where
    F: FnMut(&ModelState),
{
    config.validate()?;
    options.validate()?;
    let mut state = initialize(problem, config, &options.init)?;
    state.objective = problem.objective(&state, config);
    if !state.objective.is_finite() {
        return Err(Error::NonFinite { iterations: 0 });
    }
    state.trace.push(state.objective);
    observer(&state);

    for m in 1..=options.max_outer_iterations {
        let previous = state.objective;
        for j in 0..state.num_groups() {
            let update = update_beta_block(j, &state, problem, config, options);
            if update.step.is_some() {
                state.set_beta(j, update.beta);
                state.objective = update.objective;
            }
        }
        // eta of a pair with a zero parent no longer affects the loss
        for idx in 0..state.pairs().len() {
            if state.has_zero_parent(idx) && !is_zero(&state.eta()[idx]) {
                let len = state.eta()[idx].len();
                state.set_eta(idx, DVector::zeros(len));
            }
        }
        let update = update_eta(&state, problem, config, options);
        if update.step.is_some() {
            for &p in &update.active_pairs {
                state.set_eta(p, update.eta[p].clone());
            }
            state.objective = update.objective;
        }

        let current = problem.current_objective(&state, config);
        if !current.is_finite() {
            return Err(Error::NonFinite { iterations: m });
        }
        state.objective = current;
        state.iterations = m;
        state.trace.push(current);
        observer(&state);
        if (previous - current).abs() < options.delta {
            state.converged = true;
            break;
        }
    }
    Ok(state)
}

#[cfg(test)]
pub(crate) mod testutil {
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::ModelState;
    use crate::design::{preprocess, GroupedDesign, RawDataset};

    /// Preprocessed random design with a random dense state.
    pub(crate) fn random_instance(
        seed: u64,
        n: usize,
        s: usize,
        degree: usize,
    ) -> (GroupedDesign, ModelState) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, s, |_, _| rng.random_range(-2.0..2.0));
        let y = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
        let design = preprocess(&RawDataset::with_default_names(y, x).unwrap(), degree).unwrap();
        let beta = design
            .group_sizes()
            .iter()
            .map(|&p| DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let eta = design
            .pairs()
            .iter()
            .map(|&(a, b)| {
                let len = design.group_sizes()[a] * design.group_sizes()[b];
                DVector::from_fn(len, |_, _| rng.random_range(-1.0..1.0))
            })
            .collect();
        let state = ModelState::new(beta, eta, design.pairs().to_vec()).unwrap();
        (design, state)
    }
}
