//! Integrative group weights, the weighted group penalty, its local quadratic
//! approximation (LQA) coefficients, and the convexified (GLQA) surrogate.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};

/// Tuning and numerical constants shared by the solver and selection code.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub sigma: f64,
    /// Groups with an L2 norm at or below this value are treated as exactly zero.
    pub zero_floor: f64,
    /// Selection threshold on group norms.
    pub tau: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.0,
            lambda2: 0.0,
            sigma: 1.0,
            zero_floor: 1e-10,
            tau: 1e-6,
        }
    }
}

impl PenaltyConfig {
    pub fn new(lambda1: f64, lambda2: f64, sigma: f64) -> Result<Self> {
        let config = Self {
            lambda1,
            lambda2,
            sigma,
            ..Self::default()
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(input(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.lambda1 >= 0.0) || !(self.lambda2 >= 0.0) {
            return Err(input("penalty parameters must be non-negative"));
        }
        if !(self.zero_floor > 0.0) || !(self.zero_floor < self.tau) {
            return Err(input("need 0 < zero_floor < tau"));
        }
        Ok(())
    }
}

fn linf(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// `exp(-||v||_inf / sigma)`.
pub fn group_weight(v: &DVector<f64>, sigma: f64) -> f64 {
    (-linf(v) / sigma).exp()
}

/// `lambda * w(v) * ||v||_2`.
pub fn penalty_value(v: &DVector<f64>, lambda: f64, sigma: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    lambda * group_weight(v, sigma) * v.norm()
}

/// Marker returned when a group is too close to zero for LQA coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AtZero;

/// Per-coordinate `d_k` with `d/dv_k [w(v) ||v||_2] = d_k v_k`.
///
/// Every coordinate attaining the L-infinity norm takes the maximum branch.
pub fn lqa_coefficients(
    v: &DVector<f64>,
    sigma: f64,
    zero_floor: f64,
) -> std::result::Result<DVector<f64>, AtZero> {
    let l2 = v.norm();
    if !(l2 >= zero_floor) {
        return Err(AtZero);
    }
    let top = linf(v);
    let weight = (-top / sigma).exp();
    Ok(v.map(|x| {
        if x.abs() == top {
            weight * (1.0 / l2 - l2 / (x.abs() * sigma))
        } else {
            weight / l2
        }
    }))
}

/// Gradient of the unscaled penalty `w(v) ||v||_2` away from ties; zero at the origin.
pub fn penalty_gradient(v: &DVector<f64>, sigma: f64, zero_floor: f64) -> DVector<f64> {
    match lqa_coefficients(v, sigma, zero_floor) {
        Ok(d) => d.component_mul(v),
        Err(AtZero) => DVector::zeros(v.len()),
    }
}

/// Convex quadratic surrogate of `w(v) ||v||_2` tangent at `anchor`:
///
/// `P(anchor) + 1/2 sum_k |d_k| [(v_k - a_k anchor_k)^2 - anchor_k^2]`,
/// with `a_k = 1 - sign(d_k)`. In matrix form this is
/// `1/2 v' diag(|d|) v - c' v + const`, `c_k = (|d_k| - d_k) anchor_k`.
#[derive(Debug, Clone)]
pub struct GlqaSurrogate {
    pub d: DVector<f64>,
    pub d_abs: DVector<f64>,
    pub c: DVector<f64>,
    pub anchor: DVector<f64>,
    anchor_penalty: f64,
}

impl GlqaSurrogate {
    pub fn new(
        anchor: &DVector<f64>,
        sigma: f64,
        zero_floor: f64,
    ) -> std::result::Result<Self, AtZero> {
        let d = lqa_coefficients(anchor, sigma, zero_floor)?;
        let d_abs = d.abs();
        let c = DVector::from_iterator(
            d.len(),
            d.iter()
                .zip(anchor.iter())
                .map(|(dk, vk)| (dk.abs() - dk) * vk),
        );
        Ok(Self {
            d,
            d_abs,
            c,
            anchor: anchor.clone(),
            anchor_penalty: penalty_value(anchor, 1.0, sigma),
        })
    }

    fn shift(&self, k: usize) -> f64 {
        if self.d[k] < 0.0 {
            2.0
        } else {
            0.0
        }
    }

    pub fn value(&self, v: &DVector<f64>) -> f64 {
        let mut quad = 0.0;
        for k in 0..v.len() {
            let centered = v[k] - self.shift(k) * self.anchor[k];
            quad += self.d_abs[k] * (centered * centered - self.anchor[k] * self.anchor[k]);
        }
        self.anchor_penalty + 0.5 * quad
    }

    pub fn gradient(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(v.len(), |k, _| {
            self.d_abs[k] * (v[k] - self.shift(k) * self.anchor[k])
        })
    }
}

/// Convenience wrapper matching the surrogate construction with the default floor.
pub fn glqa_surrogate(
    anchor: &DVector<f64>,
    sigma: f64,
) -> std::result::Result<GlqaSurrogate, AtZero> {
    GlqaSurrogate::new(anchor, sigma, PenaltyConfig::default().zero_floor)
}
