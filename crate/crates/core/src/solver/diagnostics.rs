//! Analytic gradients of the smooth loss and KKT-style stationarity residuals.

use nalgebra::DVector;
use serde::Serialize;

use super::objective::{fitted_mean, partial_residual_beta, partial_residual_eta};
use super::state::{is_zero, ModelState};
use crate::design::GroupedDesign;
use crate::penalty::PenaltyConfig;

/// Gradients of `1/2 ||y - X theta||^2` with respect to each `beta_k` and each `eta_jk`.
#[derive(Debug, Clone)]
pub struct SmoothGradient {
    pub beta: Vec<DVector<f64>>,
    pub eta: Vec<DVector<f64>>,
}

pub fn smooth_gradient(
    state: &ModelState,
    design: &GroupedDesign,
    y: &DVector<f64>,
) -> SmoothGradient {
    let residual = y - fitted_mean(design, state);
    let beta = (0..state.num_groups())
        .map(|k| {
            let (_, x_tilde) = partial_residual_beta(k, state, design, y);
            -x_tilde.tr_mul(&residual)
        })
        .collect();
    let (_, blocks) = partial_residual_eta(state, design, y);
    let eta = blocks.iter().map(|b| -b.tr_mul(&residual)).collect();
    SmoothGradient { beta, eta }
}

/// Per-group and per-pair stationarity residuals, each scaled by `1/n`.
#[derive(Debug, Clone, Serialize)]
pub struct KktResiduals {
    pub groups: Vec<f64>,
    pub pairs: Vec<f64>,
}

pub fn kkt_residuals(state: &ModelState, design: &GroupedDesign, y: &DVector<f64>) -> KktResiduals {
    let n = design.n() as f64;
    let grad = smooth_gradient(state, design, y);
    KktResiduals {
        groups: grad.beta.iter().map(|g| g.norm() / n).collect(),
        pairs: grad.eta.iter().map(|g| g.norm() / n).collect(),
    }
}

/// Outcome of the zero-group stationarity check `residual <= lambda1 / n + slack`.
#[derive(Debug, Clone, Serialize)]
pub struct KktSummary {
    pub max_group_residual: f64,
    pub max_pair_residual: f64,
    pub zero_groups: usize,
    /// Zero groups whose residual exceeds the bound; a warning, not a failure.
    pub zero_group_warnings: Vec<usize>,
    pub bound: f64,
}

pub fn kkt_summary(
    state: &ModelState,
    residuals: &KktResiduals,
    config: &PenaltyConfig,
    n: usize,
    slack: f64,
) -> KktSummary {
    let bound = config.lambda1 / n as f64 + slack;
    let mut zero_groups = 0;
    let mut warnings = Vec::new();
    for (k, b) in state.beta().iter().enumerate() {
        if is_zero(b) {
            zero_groups += 1;
            if residuals.groups[k] > bound {
                warnings.push(k);
            }
        }
    }
    let max = |v: &[f64]| v.iter().fold(0.0_f64, |m, x| m.max(*x));
    KktSummary {
        max_group_residual: max(&residuals.groups),
        max_pair_residual: max(&residuals.pairs),
        zero_groups,
        zero_group_warnings: warnings,
        bound,
    }
}
