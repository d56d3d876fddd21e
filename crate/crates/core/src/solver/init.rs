//! Starting points for the alternating fit.

use nalgebra::DVector;
use serde::Serialize;

use super::problem::Problem;
use super::state::{is_zero, kron, ModelState};
use crate::baselines::{group_elastic_net_gram, group_lasso_gram, split_blocks};
use crate::error::{input, Result};
use crate::penalty::{group_weight, PenaltyConfig};

/// How `fit` chooses its starting point.
#[derive(Debug, Clone, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    /// Two-stage adaptive group elastic net on the full expanded design
    /// (`lambda1` on mains, `lambda2` on interactions, small ridge term). The
    /// second stage reweights each surviving block by its penalty weight at the
    /// first-stage estimate; `eta` is set to the implied ratios.
    #[default]
    ElasticNet,
    /// `eta = 0` and `beta` from a group LASSO on the main effects.
    ZeroInteractions,
    /// A caller-supplied state (shapes must match the design).
    User(ModelState),
}

/// Relative tolerance of the starting-point solve; the fit refines it anyway.
const START_TOLERANCE: f64 = 1e-8;

/// Sizes of every block of the stacked coefficients: mains, then pairs.
fn stacked_sizes(problem: &Problem) -> Vec<usize> {
    let mut sizes = problem.group_sizes().to_vec();
    sizes.extend((0..problem.pairs().len()).map(|idx| problem.pair_len(idx)));
    sizes
}

fn elastic_net_start(problem: &Problem, config: &PenaltyConfig) -> ModelState {
    let groups = problem.num_groups();
    let sizes = stacked_sizes(problem);
    let ridge = 1e-2 * problem.gram().trace() / problem.zty().len() as f64;
    let base: Vec<f64> = (0..sizes.len())
        .map(|g| {
            if g < groups {
                config.lambda1
            } else {
                config.lambda2
            }
        })
        .collect();
    let solve = |lambdas: &[f64], warm: Option<&DVector<f64>>| {
        group_elastic_net_gram(
            problem.gram(),
            problem.zty(),
            &sizes,
            lambdas,
            ridge,
            warm,
            START_TOLERANCE,
        )
    };

    let first = solve(&base, None);
    let adaptive: Vec<f64> = split_blocks(&first, &sizes)
        .iter()
        .zip(&base)
        .map(|(block, &lambda)| {
            if is_zero(block) {
                f64::INFINITY
            } else {
                lambda * group_weight(block, config.sigma)
            }
        })
        .collect();
    let theta = solve(&adaptive, Some(&first));

    let blocks = split_blocks(&theta, &sizes);
    let beta = blocks[..groups].to_vec();
    let eta = blocks[groups..]
        .iter()
        .zip(problem.pairs())
        .map(|(gamma, &(a, b))| {
            if is_zero(&beta[a]) || is_zero(&beta[b]) {
                return DVector::zeros(gamma.len());
            }
            let parents = kron(&beta[a], &beta[b]);
            DVector::from_fn(gamma.len(), |i, _| {
                if parents[i].abs() > config.zero_floor {
                    gamma[i] / parents[i]
                } else {
                    0.0
                }
            })
        })
        .collect();
    ModelState::new(beta, eta, problem.pairs().to_vec()).expect("shapes come from the problem")
}

fn zero_interaction_start(problem: &Problem, config: &PenaltyConfig) -> ModelState {
    let mains: usize = problem.group_sizes().iter().sum();
    let gram = problem.gram().view((0, 0), (mains, mains)).into_owned();
    let zty = problem.zty().rows(0, mains).into_owned();
    let stacked = group_lasso_gram(&gram, &zty, problem.group_sizes(), config.lambda1, None);
    let beta = split_blocks(&stacked, problem.group_sizes());
    let eta = (0..problem.pairs().len())
        .map(|idx| DVector::zeros(problem.pair_len(idx)))
        .collect();
    ModelState::new(beta, eta, problem.pairs().to_vec()).expect("shapes come from the problem")
}

/// Builds the starting state. `eta` of pairs with a zero parent is always zero.
pub fn initialize(problem: &Problem, config: &PenaltyConfig, init: &Init) -> Result<ModelState> {
    let mut state = match init {
        Init::ElasticNet => elastic_net_start(problem, config),
        Init::ZeroInteractions => zero_interaction_start(problem, config),
        Init::User(user) => {
            let shapes_match = user.beta().len() == problem.num_groups()
                && user.pairs() == problem.pairs()
                && user
                    .beta()
                    .iter()
                    .zip(problem.group_sizes())
                    .all(|(b, &p)| b.len() == p);
            if !shapes_match {
                return Err(input("initial state does not match the design"));
            }
            let finite = user
                .beta()
                .iter()
                .chain(user.eta())
                .all(|v| v.iter().all(|x| x.is_finite()));
            if !finite {
                return Err(input("initial state has non-finite entries"));
            }
            ModelState::new(
                user.beta().to_vec(),
                user.eta().to_vec(),
                user.pairs().to_vec(),
            )?
        }
    };
    for j in 0..state.num_groups() {
        if state.beta()[j].norm() <= config.zero_floor && !is_zero(&state.beta()[j]) {
            let p = state.beta()[j].len();
            state.set_beta(j, DVector::zeros(p));
        }
    }
    for idx in 0..state.pairs().len() {
        let small = state.eta()[idx].norm() <= config.zero_floor;
        if (state.has_zero_parent(idx) || small) && !is_zero(&state.eta()[idx]) {
            let len = state.eta()[idx].len();
            state.set_eta(idx, DVector::zeros(len));
        }
    }
    Ok(state)
}
