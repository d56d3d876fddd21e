//! Data-space evaluation of the model: fitted mean, penalized objective, and
//! the partial-residual forms used by the block updates.

use nalgebra::{DMatrix, DVector};

use super::problem::penalty_total;
use super::state::{is_zero, kron, ModelState};
use crate::design::GroupedDesign;
use crate::penalty::PenaltyConfig;

/// `sum_j X_j beta_j + sum_{j<k} X_jk gamma_jk`.
pub fn fitted_mean(design: &GroupedDesign, state: &ModelState) -> DVector<f64> {
    let mut mean = DVector::zeros(design.n());
    for (j, b) in state.beta().iter().enumerate() {
        if !is_zero(b) {
            mean.gemv(1.0, design.main_block(j), b, 1.0);
        }
    }
    for (idx, g) in state.gamma().iter().enumerate() {
        if !is_zero(g) {
            mean.gemv(1.0, design.interaction_at(idx), g, 1.0);
        }
    }
    mean
}

/// `1/2 ||y - mean||^2 + lambda1 sum_j w_j ||beta_j|| + lambda2 sum_jk w_jk ||eta_jk||`.
pub fn objective(
    state: &ModelState,
    design: &GroupedDesign,
    y: &DVector<f64>,
    config: &PenaltyConfig,
) -> f64 {
    let residual = y - fitted_mean(design, state);
    0.5 * residual.norm_squared() + penalty_total(state, config)
}

/// Adds `X_pair diag(eta) (beta_other ⊗ I)` or `(I ⊗ beta_other)` into `target`,
/// depending on which side of the pair group `j` sits.
fn add_interaction_columns(
    target: &mut DMatrix<f64>,
    block: &DMatrix<f64>,
    eta: &DVector<f64>,
    other: &DVector<f64>,
    j_is_left: bool,
) {
    let pj = target.ncols();
    let po = other.len();
    if j_is_left {
        // column a * po + b, coefficient beta_j[a] * beta_other[b]
        for a in 0..pj {
            for b in 0..po {
                let w = eta[a * po + b] * other[b];
                if w != 0.0 {
                    target.column_mut(a).axpy(w, &block.column(a * po + b), 1.0);
                }
            }
        }
    } else {
        // column a * pj + b, coefficient beta_other[a] * beta_j[b]
        for a in 0..po {
            for b in 0..pj {
                let w = eta[a * pj + b] * other[a];
                if w != 0.0 {
                    target.column_mut(b).axpy(w, &block.column(a * pj + b), 1.0);
                }
            }
        }
    }
}

/// Working response and design for group `j` with everything else held fixed:
/// the fitted mean equals `(y - y_tilde) + X_tilde_j beta_j`.
pub fn partial_residual_beta(
    j: usize,
    state: &ModelState,
    design: &GroupedDesign,
    y: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let mut x_tilde = design.main_block(j).clone();
    let mut y_tilde = y.clone();
    for (k, b) in state.beta().iter().enumerate() {
        if k != j && !is_zero(b) {
            y_tilde.gemv(-1.0, design.main_block(k), b, 1.0);
        }
    }
    for (idx, &(a, b)) in state.pairs().iter().enumerate() {
        if a == j || b == j {
            let other = if a == j {
                &state.beta()[b]
            } else {
                &state.beta()[a]
            };
            add_interaction_columns(
                &mut x_tilde,
                design.interaction_at(idx),
                &state.eta()[idx],
                other,
                a == j,
            );
        } else if !is_zero(&state.gamma()[idx]) {
            y_tilde.gemv(-1.0, design.interaction_at(idx), &state.gamma()[idx], 1.0);
        }
    }
    (y_tilde, x_tilde)
}

/// Working response `y - sum_k X_k beta_k` and per-pair designs
/// `X_jk diag(beta_j ⊗ beta_k)`.
pub fn partial_residual_eta(
    state: &ModelState,
    design: &GroupedDesign,
    y: &DVector<f64>,
) -> (DVector<f64>, Vec<DMatrix<f64>>) {
    let mut y_tilde = y.clone();
    for (k, b) in state.beta().iter().enumerate() {
        if !is_zero(b) {
            y_tilde.gemv(-1.0, design.main_block(k), b, 1.0);
        }
    }
    let blocks = state
        .pairs()
        .iter()
        .enumerate()
        .map(|(idx, &(a, b))| {
            let scale = kron(&state.beta()[a], &state.beta()[b]);
            let mut block = design.interaction_at(idx).clone();
            for (c, s) in scale.iter().enumerate() {
                block.column_mut(c).scale_mut(*s);
            }
            block
        })
        .collect();
    (y_tilde, blocks)
}
