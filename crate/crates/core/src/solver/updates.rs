//! Closed-form GLQA block updates for `beta_j` and the joint `eta` update,
//! each followed by a backtracking line search on the exact objective.
//!
//! Both updates work in the stacked Gram coordinates of [`Problem`]: the loss
//! restricted to one block is an exact quadratic, so its Hessian and gradient
//! come straight from `Z'Z` and `Z'r`.

use nalgebra::{DMatrix, DVector};

use super::line_search::line_search;
use super::problem::Problem;
use super::state::{is_zero, kron, ModelState};
use super::FitOptions;
use crate::penalty::{GlqaSurrogate, PenaltyConfig};

/// Outcome of one `beta_j` update.
#[derive(Debug, Clone)]
pub struct BlockUpdate {
    pub beta: DVector<f64>,
    pub objective: f64,
    pub step: Option<f64>,
    /// True when the GLQA system could not be factorized and a gradient step was used.
    pub gradient_fallback: bool,
}

/// Outcome of the joint `eta` update.
#[derive(Debug, Clone)]
pub struct EtaUpdate {
    pub eta: Vec<DVector<f64>>,
    pub objective: f64,
    pub step: Option<f64>,
    pub gradient_fallback: bool,
    /// Pairs that took part in the joint solve.
    pub active_pairs: Vec<usize>,
}

/// Sparse map `M_j` with `theta = theta_0 + M_j beta_j`: `(row in theta, column in beta_j, value)`.
fn beta_map(j: usize, state: &ModelState, problem: &Problem) -> Vec<(usize, usize, f64)> {
    let pj = problem.group_sizes()[j];
    let mut entries: Vec<(usize, usize, f64)> = (0..pj)
        .map(|a| (problem.main_offset(j) + a, a, 1.0))
        .collect();
    for (idx, &(a, b)) in state.pairs().iter().enumerate() {
        if a != j && b != j {
            continue;
        }
        let eta = &state.eta()[idx];
        let offset = problem.pair_offset(idx);
        if a == j {
            let other = &state.beta()[b];
            let po = other.len();
            for r in 0..pj {
                for s in 0..po {
                    let v = eta[r * po + s] * other[s];
                    if v != 0.0 {
                        entries.push((offset + r * po + s, r, v));
                    }
                }
            }
        } else {
            let other = &state.beta()[a];
            for r in 0..other.len() {
                for s in 0..pj {
                    let v = eta[r * pj + s] * other[r];
                    if v != 0.0 {
                        entries.push((offset + r * pj + s, s, v));
                    }
                }
            }
        }
    }
    entries
}

fn quadratic_value(a: &DMatrix<f64>, rhs: &DVector<f64>, x: &DVector<f64>) -> f64 {
    0.5 * x.dot(&(a * x)) - rhs.dot(x)
}

/// Solves `A x = rhs`, or returns a gradient step when `A` is not positive definite.
/// The second element is the model decrease predicted at the full step.
fn glqa_step(
    a: DMatrix<f64>,
    rhs: &DVector<f64>,
    current: &DVector<f64>,
    exact_gradient: &DVector<f64>,
) -> (DVector<f64>, f64, bool) {
    let frobenius = a.norm();
    if let Some(chol) = a.clone().cholesky() {
        let candidate = chol.solve(rhs);
        if candidate.iter().all(|v| v.is_finite()) {
            let decrease = quadratic_value(&a, rhs, current) - quadratic_value(&a, rhs, &candidate);
            return (candidate, decrease, false);
        }
    }
    let lipschitz = if frobenius > 0.0 { frobenius } else { 1.0 };
    let candidate = current - exact_gradient / lipschitz;
    (candidate, exact_gradient.norm_squared() / lipschitz, true)
}

/// One GLQA update of `beta_j` followed by a line search.
///
/// A group that is exactly zero stays at zero. If the accepted point falls
/// below `zero_floor` it is snapped to zero, provided that does not raise
/// the objective above its pre-update value.
pub fn update_beta_block(
    j: usize,
    state: &ModelState,
    problem: &Problem,
    config: &PenaltyConfig,
    options: &FitOptions,
) -> BlockUpdate {
    let current = state.beta()[j].clone();
    let f_current = problem.current_objective(state, config);
    let unchanged = |fallback| BlockUpdate {
        beta: current.clone(),
        objective: f_current,
        step: None,
        gradient_fallback: fallback,
    };
    if is_zero(&current) {
        return unchanged(false);
    }
    let surrogate = match GlqaSurrogate::new(&current, config.sigma, config.zero_floor) {
        Ok(s) => s,
        Err(_) => return unchanged(false),
    };

    let pj = current.len();
    let map = beta_map(j, state, problem);
    let residual_gradient = problem.loss_gradient_full(state);
    let gram = problem.gram();

    let mut loss_grad = DVector::zeros(pj);
    for &(row, col, v) in &map {
        loss_grad[col] -= v * residual_gradient[row];
    }
    let mut hessian = DMatrix::zeros(pj, pj);
    for &(r1, c1, v1) in &map {
        for &(r2, c2, v2) in &map {
            hessian[(c1, c2)] += v1 * v2 * gram[(r1, r2)];
        }
    }

    let lambda = config.lambda1;
    let mut a = hessian.clone();
    for k in 0..pj {
        a[(k, k)] += lambda * surrogate.d_abs[k];
    }
    let rhs = &hessian * &current - &loss_grad + &surrogate.c * lambda;
    let exact_gradient = &loss_grad + surrogate.d.component_mul(&current) * lambda;
    let (candidate, decrease, fallback) = glqa_step(a, &rhs, &current, &exact_gradient);

    let mut scratch = state.clone();
    let outcome = line_search(
        &current,
        f_current,
        &candidate,
        decrease,
        |x| {
            scratch.set_beta(j, x.clone());
            problem.objective(&scratch, config)
        },
        options,
    );

    if outcome.step.is_some() && outcome.point.norm() <= config.zero_floor {
        scratch.set_beta(j, DVector::zeros(pj));
        let at_zero = problem.objective(&scratch, config);
        if at_zero <= f_current {
            return BlockUpdate {
                beta: DVector::zeros(pj),
                objective: at_zero,
                step: outcome.step,
                gradient_fallback: fallback,
            };
        }
        return unchanged(fallback);
    }

    BlockUpdate {
        beta: outcome.point,
        objective: outcome.objective,
        step: outcome.step,
        gradient_fallback: fallback,
    }
}

/// Joint GLQA update of every `eta_jk` whose parents are both non-zero.
///
/// Pairs with a zero parent, and pairs whose `eta` is already zero, are left
/// untouched.
pub fn update_eta(
    state: &ModelState,
    problem: &Problem,
    config: &PenaltyConfig,
    options: &FitOptions,
) -> EtaUpdate {
    let f_current = problem.current_objective(state, config);
    let active: Vec<usize> = (0..state.pairs().len())
        .filter(|&p| !state.has_zero_parent(p) && !is_zero(&state.eta()[p]))
        .collect();
    let unchanged = |active_pairs: Vec<usize>, fallback| EtaUpdate {
        eta: state.eta().to_vec(),
        objective: f_current,
        step: None,
        gradient_fallback: fallback,
        active_pairs,
    };
    if active.is_empty() {
        return unchanged(active, false);
    }

    let mut surrogates = Vec::with_capacity(active.len());
    for &p in &active {
        match GlqaSurrogate::new(&state.eta()[p], config.sigma, config.zero_floor) {
            Ok(s) => surrogates.push(s),
            Err(_) => return unchanged(active, false),
        }
    }

    // stacked row indices into theta and the matching scale (beta_j ⊗ beta_k)
    let mut rows = Vec::new();
    let mut scale = Vec::new();
    let mut local_offsets = Vec::with_capacity(active.len());
    for &p in &active {
        let (a, b) = state.pairs()[p];
        local_offsets.push(rows.len());
        let u = kron(&state.beta()[a], &state.beta()[b]);
        let offset = problem.pair_offset(p);
        for (i, ui) in u.iter().enumerate() {
            rows.push(offset + i);
            scale.push(*ui);
        }
    }
    let m = rows.len();
    let gram = problem.gram();
    let zty = problem.zty();

    // X_tilde' y_tilde with y_tilde = y - sum_k X_k beta_k
    let mut cross = DVector::from_fn(m, |i, _| zty[rows[i]]);
    for (k, beta) in state.beta().iter().enumerate() {
        if is_zero(beta) {
            continue;
        }
        let offset = problem.main_offset(k);
        for (i, &r) in rows.iter().enumerate() {
            let mut acc = 0.0;
            for (c, bc) in beta.iter().enumerate() {
                acc += gram[(r, offset + c)] * bc;
            }
            cross[i] -= acc;
        }
    }
    for i in 0..m {
        cross[i] *= scale[i];
    }
    let hessian = DMatrix::from_fn(m, m, |i, k| scale[i] * gram[(rows[i], rows[k])] * scale[k]);

    let mut current = DVector::zeros(m);
    let mut d = DVector::zeros(m);
    let mut d_abs = DVector::zeros(m);
    let mut shift = DVector::zeros(m);
    for (slot, (&p, s)) in active.iter().zip(&surrogates).enumerate() {
        let o = local_offsets[slot];
        let len = state.eta()[p].len();
        current.rows_mut(o, len).copy_from(&state.eta()[p]);
        d.rows_mut(o, len).copy_from(&s.d);
        d_abs.rows_mut(o, len).copy_from(&s.d_abs);
        shift.rows_mut(o, len).copy_from(&s.c);
    }

    let lambda = config.lambda2;
    let mut a = hessian.clone();
    for i in 0..m {
        a[(i, i)] += lambda * d_abs[i];
    }
    let rhs = &cross + &shift * lambda;
    let exact_gradient = &hessian * &current - &cross + d.component_mul(&current) * lambda;
    let (candidate, decrease, fallback) = glqa_step(a, &rhs, &current, &exact_gradient);

    let write = |target: &mut ModelState, x: &DVector<f64>| {
        for (slot, &p) in active.iter().enumerate() {
            let len = target.eta()[p].len();
            target.set_eta(p, x.rows(local_offsets[slot], len).into_owned());
        }
    };

    let mut scratch = state.clone();
    let outcome = line_search(
        &current,
        f_current,
        &candidate,
        decrease,
        |x| {
            write(&mut scratch, x);
            problem.objective(&scratch, config)
        },
        options,
    );
    write(&mut scratch, &outcome.point);
    let mut objective = outcome.objective;

    if outcome.step.is_some() {
        let mut snapped = scratch.clone();
        let mut any = false;
        for &p in &active {
            if snapped.eta()[p].norm() <= config.zero_floor {
                let len = snapped.eta()[p].len();
                snapped.set_eta(p, DVector::zeros(len));
                any = true;
            }
        }
        if any {
            let value = problem.objective(&snapped, config);
            if value <= f_current {
                scratch = snapped;
                objective = value;
            }
        }
    }

    EtaUpdate {
        eta: scratch.eta().to_vec(),
        objective,
        step: outcome.step,
        gradient_fallback: fallback,
        active_pairs: active,
    }
}
