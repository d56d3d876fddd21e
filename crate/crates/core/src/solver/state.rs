use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::design::GroupedDesign;
use crate::error::{input, Result};

/// `eta ⊙ (beta_j ⊗ beta_k)` with `beta_k` varying fastest.
pub fn compute_gamma(
    eta: &DVector<f64>,
    beta_j: &DVector<f64>,
    beta_k: &DVector<f64>,
) -> Result<DVector<f64>> {
    let (pj, pk) = (beta_j.len(), beta_k.len());
    if eta.len() != pj * pk {
        return Err(input(format!(
            "eta has length {} but parents need {}",
            eta.len(),
            pj * pk
        )));
    }
    Ok(gamma_unchecked(eta, beta_j, beta_k))
}

pub(crate) fn gamma_unchecked(
    eta: &DVector<f64>,
    beta_j: &DVector<f64>,
    beta_k: &DVector<f64>,
) -> DVector<f64> {
    let pk = beta_k.len();
    DVector::from_fn(eta.len(), |idx, _| {
        eta[idx] * beta_j[idx / pk] * beta_k[idx % pk]
    })
}

/// `beta_j ⊗ beta_k`.
pub fn kron(beta_j: &DVector<f64>, beta_k: &DVector<f64>) -> DVector<f64> {
    let pk = beta_k.len();
    DVector::from_fn(beta_j.len() * pk, |idx, _| {
        beta_j[idx / pk] * beta_k[idx % pk]
    })
}

/// Coefficients of a fitted (or in-progress) model.
///
/// `gamma` is never set directly: it is recomputed from `beta` and `eta`
/// whenever either changes, so a zero parent always gives an exactly zero
/// interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    beta: Vec<DVector<f64>>,
    eta: Vec<DVector<f64>>,
    gamma: Vec<DVector<f64>>,
    pairs: Vec<(usize, usize)>,
    /// Objective at the current coefficients; reset to NaN by the setters.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after initialization and after each outer iteration.
    pub trace: Vec<f64>,
}

impl ModelState {
    pub fn new(
        beta: Vec<DVector<f64>>,
        eta: Vec<DVector<f64>>,
        pairs: Vec<(usize, usize)>,
    ) -> Result<Self> {
        if eta.len() != pairs.len() {
            return Err(input(format!(
                "{} eta blocks for {} pairs",
                eta.len(),
                pairs.len()
            )));
        }
        let mut gamma = Vec::with_capacity(pairs.len());
        for (idx, &(j, k)) in pairs.iter().enumerate() {
            if j >= beta.len() || k >= beta.len() {
                return Err(input(format!("pair ({j},{k}) out of range")));
            }
            gamma.push(compute_gamma(&eta[idx], &beta[j], &beta[k])?);
        }
        Ok(Self {
            beta,
            eta,
            gamma,
            pairs,
            objective: f64::NAN,
            iterations: 0,
            converged: false,
            trace: Vec::new(),
        })
    }

    pub fn zeros(design: &GroupedDesign) -> Self {
        let beta = design
            .group_sizes()
            .iter()
            .map(|&p| DVector::zeros(p))
            .collect();
        let eta = design
            .pairs()
            .iter()
            .map(|&(j, k)| DVector::zeros(design.group_sizes()[j] * design.group_sizes()[k]))
            .collect();
        Self::new(beta, eta, design.pairs().to_vec()).expect("shapes come from the design")
    }

    pub fn beta(&self) -> &[DVector<f64>] {
        &self.beta
    }

    pub fn eta(&self) -> &[DVector<f64>] {
        &self.eta
    }

    pub fn gamma(&self) -> &[DVector<f64>] {
        &self.gamma
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn num_groups(&self) -> usize {
        self.beta.len()
    }

    pub fn set_beta(&mut self, j: usize, value: DVector<f64>) {
        assert_eq!(value.len(), self.beta[j].len(), "beta block length");
        self.beta[j] = value;
        self.objective = f64::NAN;
        for (idx, &(a, b)) in self.pairs.iter().enumerate() {
            if a == j || b == j {
                self.gamma[idx] = gamma_unchecked(&self.eta[idx], &self.beta[a], &self.beta[b]);
            }
        }
    }

    pub fn set_eta(&mut self, pair: usize, value: DVector<f64>) {
        assert_eq!(value.len(), self.eta[pair].len(), "eta block length");
        let (a, b) = self.pairs[pair];
        self.gamma[pair] = gamma_unchecked(&value, &self.beta[a], &self.beta[b]);
        self.eta[pair] = value;
        self.objective = f64::NAN;
    }

    /// True when a parent of `pair` is exactly zero.
    pub fn has_zero_parent(&self, pair: usize) -> bool {
        let (a, b) = self.pairs[pair];
        is_zero(&self.beta[a]) || is_zero(&self.beta[b])
    }
}

pub(crate) fn is_zero(v: &DVector<f64>) -> bool {
    v.iter().all(|x| *x == 0.0)
}
