//! Per-node service cost, node prices and the capacity-response map.
//!
//! A node with coefficients `(a, b, c, d)` costs `phi(g) = a*g^b + c*g + d`
//! to run at service rate `g`. Its *price* is the smallest achievable value of
//! response time plus weighted cost, `min_g 1/g + K*phi(g)` over
//! `(0, gamma_max]`. The capacity-response map `g(theta)` inverts the marginal
//! condition `K*phi(g) + K*g*phi'(g) = theta`, whose left-hand side has the
//! closed form `K*(a*(1+b)*g^b + 2*c*g + d)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roots::{bisect, DEFAULT_MAX_ITER, DEFAULT_TOL};

/// Cost coefficients and capacity bound of one computing node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeCostParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub gamma_max: f64,
}

impl NodeCostParams {
    pub fn new(a: f64, b: f64, c: f64, d: f64, gamma_max: f64) -> Result<Self> {
        let p = Self { a, b, c, d, gamma_max };
        p.validate()?;
        Ok(p)
    }

    /// Checks `a, c, d, gamma_max > 0` and `b > 1`.
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.a > 0.0, "a", self.a, "a_i>0"),
            (self.b > 1.0, "b", self.b, "b_i>1"),
            (self.c > 0.0, "c", self.c, "c_i>0"),
            (self.d > 0.0, "d", self.d, "d_i>0"),
            (self.gamma_max > 0.0, "gamma_max", self.gamma_max, "gamma_max>0"),
        ];
        for (ok, field, value, rule) in checks {
            if !ok || !value.is_finite() {
                return Err(Error::InvalidParams(format!("{field}={value} violates {rule}")));
            }
        }
        Ok(())
    }

    pub fn phi(&self, gamma: f64) -> f64 {
        phi(self, gamma)
    }

    pub fn phi_prime(&self, gamma: f64) -> f64 {
        phi_prime(self, gamma)
    }
}

/// Price of a node and the service rate that attains it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodePrice {
    pub theta: f64,
    pub gamma_bar: f64,
}

/// Service cost `a*gamma^b + c*gamma + d`.
pub fn phi(p: &NodeCostParams, gamma: f64) -> f64 {
    p.a * gamma.powf(p.b) + p.c * gamma + p.d
}

/// Marginal service cost `a*b*gamma^(b-1) + c`.
pub fn phi_prime(p: &NodeCostParams, gamma: f64) -> f64 {
    p.a * p.b * gamma.powf(p.b - 1.0) + p.c
}

/// Minimizes `1/gamma + K*phi(gamma)` over `(0, gamma_max]`.
///
/// The interior minimizer solves `K*gamma^2*phi'(gamma) = 1`, whose left side
/// is strictly increasing. If it is still below one at `gamma_max` the
/// minimizer sits on the capacity bound.
pub fn node_price(p: &NodeCostParams, k: f64) -> Result<NodePrice> {
    if !(k > 0.0) {
        return Err(Error::InvalidWeight(k));
    }
    let stationarity = |g: f64| k * g * g * phi_prime(p, g) - 1.0;

    let gamma_bar = if stationarity(p.gamma_max) <= 0.0 {
        p.gamma_max
    } else {
        let mut lo = 0.5 * p.gamma_max;
        let mut halvings = 0;
        while stationarity(lo) >= 0.0 && halvings < 60 {
            lo *= 0.5;
            halvings += 1;
        }
        bisect(stationarity, lo, p.gamma_max, DEFAULT_TOL * 1e-3, DEFAULT_MAX_ITER)?
    };
    Ok(NodePrice { theta: 1.0 / gamma_bar + k * phi(p, gamma_bar), gamma_bar })
}

/// Closed-form left-hand side of the marginal condition at `gamma`.
///
/// Defined on `(0, gamma_max]`.
pub fn g_inverse(p: &NodeCostParams, k: f64, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) || gamma > p.gamma_max {
        return Err(Error::OutOfRange { gamma, gamma_max: p.gamma_max });
    }
    Ok(marginal_price(p, k, gamma))
}

/// `K*(a*(1+b)*g^b + 2*c*g + d)` without the range check.
pub(crate) fn marginal_price(p: &NodeCostParams, k: f64, gamma: f64) -> f64 {
    k * (p.a * (1.0 + p.b) * gamma.powf(p.b) + 2.0 * p.c * gamma + p.d)
}

/// Largest price the marginal condition can reach inside the capacity bound.
pub fn theta_max(p: &NodeCostParams, k: f64) -> f64 {
    marginal_price(p, k, p.gamma_max)
}

/// Service rate answering price `theta`.
///
/// With `clamp` set, prices beyond [`theta_max`] saturate at `gamma_max`.
/// Without it the marginal condition is solved on `(0, inf)`, which may
/// return a rate above the capacity bound.
pub fn g(p: &NodeCostParams, k: f64, theta: f64, clamp: bool) -> Result<f64> {
    if !(k > 0.0) {
        return Err(Error::InvalidWeight(k));
    }
    let floor = k * p.d;
    if !(theta > floor) {
        return Err(Error::PriceTooLow { theta, floor });
    }
    let f = |x: f64| marginal_price(p, k, x) - theta;
    let mut hi = p.gamma_max;
    if f(hi) >= 0.0 {
        return bisect(f, 0.0, hi, DEFAULT_TOL * 1e-3, DEFAULT_MAX_ITER);
    }
    if clamp {
        return Ok(p.gamma_max);
    }
    let mut lo = hi;
    while f(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::NoBracket { lo, hi });
        }
    }
    bisect(f, lo, hi, DEFAULT_TOL * 1e-3, DEFAULT_MAX_ITER)
}
