//! LASSO (cyclic coordinate descent) and group LASSO (block proximal descent).
//!
//! Both solvers work from sufficient statistics `X'X` and `X'y` so a
//! cross-validation fold can reuse one Gram matrix along a whole path.

use nalgebra::{DMatrix, DVector};

const TOLERANCE: f64 = 1e-13;
const MAX_SWEEPS: usize = 200_000;

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Minimizes `1/2 b'Gb - b'c + lambda ||b||_1` by cyclic coordinate descent,
/// starting from `warm` when given.
pub fn lasso_gram(
    gram: &DMatrix<f64>,
    xty: &DVector<f64>,
    lambda: f64,
    warm: Option<&DVector<f64>>,
) -> DVector<f64> {
    let p = xty.len();
    let mut b = warm.cloned().unwrap_or_else(|| DVector::zeros(p));
    // running G b
    let mut gb = gram * &b;
    for _ in 0..MAX_SWEEPS {
        let mut max_delta = 0.0_f64;
        let mut scale = 1.0_f64;
        for j in 0..p {
            let gjj = gram[(j, j)];
            if gjj <= 0.0 {
                continue;
            }
            let old = b[j];
            let z = xty[j] - gb[j] + gjj * old;
            let new = soft_threshold(z, lambda) / gjj;
            if new != old {
                let delta = new - old;
                gb.axpy(delta, &gram.column(j), 1.0);
                b[j] = new;
                max_delta = max_delta.max(delta.abs() * gjj.sqrt());
            }
            scale = scale.max(new.abs() * gjj.sqrt());
        }
        if max_delta <= TOLERANCE * scale {
            break;
        }
    }
    b
}

/// LASSO on a design matrix: minimizes `1/2 ||y - Xb||^2 + lambda ||b||_1`.
pub fn fit_lasso(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> DVector<f64> {
    lasso_gram(&x.tr_mul(x), &x.tr_mul(y), lambda, None)
}

/// `max_j |x_j'y|`, the smallest LASSO penalty with an all-zero solution.
pub fn lasso_lambda_max(xty: &DVector<f64>) -> f64 {
    xty.amax()
}

fn offsets(sizes: &[usize]) -> Vec<usize> {
    let mut acc = 0;
    sizes
        .iter()
        .map(|s| {
            let o = acc;
            acc += s;
            o
        })
        .collect()
}

/// Group LASSO from sufficient statistics: minimizes
/// `1/2 b'Gb - b'c + lambda sum_j ||b_j||_2` with blocks of the given sizes.
///
/// Each block step is a proximal gradient step with the block's largest
/// Gram eigenvalue as step size, which is an exact block minimization when
/// the block is orthogonal with equal column norms.
pub fn group_lasso_gram(
    gram: &DMatrix<f64>,
    xty: &DVector<f64>,
    sizes: &[usize],
    lambda: f64,
    warm: Option<&DVector<f64>>,
) -> DVector<f64> {
    let lambdas = vec![lambda; sizes.len()];
    group_elastic_net_gram(gram, xty, sizes, &lambdas, 0.0, warm, TOLERANCE)
}

/// Same block descent with a penalty per group and an added ridge term:
/// `1/2 b'Gb - b'c + ridge/2 ||b||^2 + sum_j lambdas[j] ||b_j||_2`.
pub(crate) fn group_elastic_net_gram(
    gram: &DMatrix<f64>,
    xty: &DVector<f64>,
    sizes: &[usize],
    lambdas: &[f64],
    ridge: f64,
    warm: Option<&DVector<f64>>,
    tolerance: f64,
) -> DVector<f64> {
    let dim: usize = sizes.iter().sum();
    assert_eq!(dim, xty.len(), "group sizes must cover the coefficients");
    assert_eq!(lambdas.len(), sizes.len(), "one penalty per group");
    let starts = offsets(sizes);
    let lipschitz: Vec<f64> = starts
        .iter()
        .zip(sizes)
        .map(|(&o, &s)| {
            let block = gram.view((o, o), (s, s)).into_owned();
            block.symmetric_eigenvalues().max() + ridge
        })
        .collect();
    let mut b = warm.cloned().unwrap_or_else(|| DVector::zeros(dim));
    let mut gb = gram * &b;
    for _ in 0..MAX_SWEEPS {
        let mut max_delta = 0.0_f64;
        let mut scale = 1.0_f64;
        for (j, (&o, &s)) in starts.iter().zip(sizes).enumerate() {
            let (l, lambda) = (lipschitz[j], lambdas[j]);
            if !(l > 0.0) {
                continue;
            }
            let old = b.rows(o, s).into_owned();
            let grad = gb.rows(o, s) - xty.rows(o, s) + &old * ridge;
            let z = &old - grad / l;
            let norm = z.norm();
            let new = if norm > lambda / l {
                z * (1.0 - lambda / (l * norm))
            } else {
                DVector::zeros(s)
            };
            let delta = &new - &old;
            let change = delta.norm();
            if change > 0.0 {
                gb.gemv(1.0, &gram.columns(o, s), &delta, 1.0);
                b.rows_mut(o, s).copy_from(&new);
                max_delta = max_delta.max(change * l.sqrt());
            }
            scale = scale.max(new.norm() * l.sqrt());
        }
        if max_delta <= tolerance * scale {
            break;
        }
    }
    b
}

/// Splits a stacked coefficient vector into blocks.
pub fn split_blocks(b: &DVector<f64>, sizes: &[usize]) -> Vec<DVector<f64>> {
    offsets(sizes)
        .iter()
        .zip(sizes)
        .map(|(&o, &s)| b.rows(o, s).into_owned())
        .collect()
}

/// Group LASSO on a list of design blocks.
pub fn fit_group_lasso(
    blocks: &[DMatrix<f64>],
    y: &DVector<f64>,
    lambda: f64,
) -> Vec<DVector<f64>> {
    let sizes: Vec<usize> = blocks.iter().map(|b| b.ncols()).collect();
    let x = stack(blocks);
    let b = group_lasso_gram(&x.tr_mul(&x), &x.tr_mul(y), &sizes, lambda, None);
    split_blocks(&b, &sizes)
}

/// `max_j ||X_j'y||_2`, the smallest group penalty with an all-zero solution.
pub fn group_lambda_max(xty: &DVector<f64>, sizes: &[usize]) -> f64 {
    split_blocks(xty, sizes)
        .iter()
        .fold(0.0, |m, g| m.max(g.norm()))
}

pub(crate) fn stack(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n = blocks.first().map_or(0, |b| b.nrows());
    let total: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut x = DMatrix::zeros(n, total);
    let mut o = 0;
    for b in blocks {
        x.columns_mut(o, b.ncols()).copy_from(b);
        o += b.ncols();
    }
    x
}
