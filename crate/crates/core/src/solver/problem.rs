use nalgebra::{DMatrix, DVector};

use super::state::ModelState;
use crate::design::GroupedDesign;
use crate::error::{input, Result};
use crate::penalty::{penalty_value, PenaltyConfig};

/// Sufficient statistics of a design/response pair in the stacked
/// coordinate system `theta = (beta_1, ..., beta_S, gamma_12, ..., gamma_{S-1,S})`.
///
/// Every quantity the fit needs (loss, block Hessians, gradients) is a
/// function of `Z'Z`, `Z'y` and `y'y`, so a problem built once per training
/// set can be reused across a whole tuning grid.
#[derive(Debug)]
pub struct Problem {
    n: usize,
    group_sizes: Vec<usize>,
    pairs: Vec<(usize, usize)>,
    main_offsets: Vec<usize>,
    pair_offsets: Vec<usize>,
    dim: usize,
    gram: DMatrix<f64>,
    zty: DVector<f64>,
    yy: f64,
}

impl Problem {
    pub fn new(design: &GroupedDesign, y: &DVector<f64>) -> Result<Self> {
        let n = design.n();
        if y.len() != n {
            return Err(input(format!(
                "response has {} rows, design has {n}",
                y.len()
            )));
        }
        let group_sizes = design.group_sizes().to_vec();
        let pairs = design.pairs().to_vec();
        let mut offset = 0;
        let main_offsets: Vec<usize> = group_sizes
            .iter()
            .map(|p| {
                let o = offset;
                offset += p;
                o
            })
            .collect();
        let pair_offsets: Vec<usize> = pairs
            .iter()
            .map(|&(j, k)| {
                let o = offset;
                offset += group_sizes[j] * group_sizes[k];
                o
            })
            .collect();
        let dim = offset;

        let stacked = design.stacked();
        let gram = stacked.tr_mul(&stacked);
        let zty = stacked.tr_mul(y);
        Ok(Self {
            n,
            group_sizes,
            pairs,
            main_offsets,
            pair_offsets,
            dim,
            gram,
            zty,
            yy: y.dot(y),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_groups(&self) -> usize {
        self.group_sizes.len()
    }

    pub fn group_sizes(&self) -> &[usize] {
        &self.group_sizes
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn zty(&self) -> &DVector<f64> {
        &self.zty
    }

    pub fn yy(&self) -> f64 {
        self.yy
    }

    pub fn main_offset(&self, j: usize) -> usize {
        self.main_offsets[j]
    }

    pub fn pair_offset(&self, pair: usize) -> usize {
        self.pair_offsets[pair]
    }

    pub fn pair_len(&self, pair: usize) -> usize {
        let (j, k) = self.pairs[pair];
        self.group_sizes[j] * self.group_sizes[k]
    }

    /// `(offset, values)` for every block of `theta` that is not exactly zero.
    pub(crate) fn nonzero_blocks<'s>(
        &self,
        state: &'s ModelState,
    ) -> Vec<(usize, &'s DVector<f64>)> {
        let mut blocks = Vec::new();
        for (j, b) in state.beta().iter().enumerate() {
            if b.iter().any(|x| *x != 0.0) {
                blocks.push((self.main_offsets[j], b));
            }
        }
        for (idx, g) in state.gamma().iter().enumerate() {
            if g.iter().any(|x| *x != 0.0) {
                blocks.push((self.pair_offsets[idx], g));
            }
        }
        blocks
    }

    /// Dense stacked `theta`.
    pub fn theta(&self, state: &ModelState) -> DVector<f64> {
        let mut theta = DVector::zeros(self.dim);
        for (offset, values) in self.nonzero_blocks(state) {
            theta.rows_mut(offset, values.len()).copy_from(values);
        }
        theta
    }

    /// `1/2 ||y - Z theta||^2` evaluated through the Gram matrix.
    pub fn loss(&self, state: &ModelState) -> f64 {
        let theta = self.theta(state);
        let g_theta = &self.gram * &theta;
        (0.5 * self.yy - theta.dot(&self.zty) + 0.5 * theta.dot(&g_theta)).max(0.0)
    }

    /// Full penalized objective.
    pub fn objective(&self, state: &ModelState, config: &PenaltyConfig) -> f64 {
        self.loss(state) + penalty_total(state, config)
    }

    /// `state.objective` when it is set, otherwise a fresh evaluation.
    pub(crate) fn current_objective(&self, state: &ModelState, config: &PenaltyConfig) -> f64 {
        if state.objective.is_nan() {
            self.objective(state, config)
        } else {
            state.objective
        }
    }

    /// `Z'(y - Z theta)`.
    pub fn loss_gradient_full(&self, state: &ModelState) -> DVector<f64> {
        let mut g = self.zty.clone();
        for (offset, values) in self.nonzero_blocks(state) {
            g.gemv(-1.0, &self.gram.columns(offset, values.len()), values, 1.0);
        }
        g
    }
}

pub(crate) fn penalty_total(state: &ModelState, config: &PenaltyConfig) -> f64 {
    let mains: f64 = state
        .beta()
        .iter()
        .map(|b| penalty_value(b, config.lambda1, config.sigma))
        .sum();
    let pairs: f64 = state
        .eta()
        .iter()
        .map(|e| penalty_value(e, config.lambda2, config.sigma))
        .sum();
    mains + pairs
}
