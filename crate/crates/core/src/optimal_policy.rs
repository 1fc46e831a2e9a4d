//! Cost-optimal scheduling rates and service capacities for a fleet.
//!
//! The objective is the load-weighted mean response time plus `K` times the
//! load-weighted service cost,
//!
//! ```text
//! J = sum_i (u_i/lambda) * (1/(gamma_i - u_i) + K*phi_i(gamma_i))
//! ```
//!
//! subject to `sum u_i = lambda`, `gamma_i <= gamma_max_i` and
//! `gamma_i > u_i >= 0`. Nodes are activated in non-decreasing order of price;
//! a common threshold `theta` then fixes every active node through the
//! capacity-response map and the rate rule `u = gamma - (K*phi'(gamma))^-1/2`.

use serde::{Deserialize, Serialize};

use crate::cost_model::{self, node_price, NodeCostParams, NodePrice};
use crate::error::{Error, Result};
use crate::roots::{DEFAULT_MAX_ITER, DEFAULT_TOL};

/// Fleet, demand and solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetConfig {
    pub nodes: Vec<NodeCostParams>,
    pub lambda: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub tol: f64,
    pub clamp_enabled: bool,
}

impl FleetConfig {
    pub fn new(nodes: Vec<NodeCostParams>, lambda: f64, k: f64) -> Self {
        Self { nodes, lambda, k, tol: DEFAULT_TOL, clamp_enabled: true }
    }

    pub fn with_clamp(mut self, clamp_enabled: bool) -> Self {
        self.clamp_enabled = clamp_enabled;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::ConfigInvalid("fleet needs at least one node".into()));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            node.validate()
                .map_err(|e| Error::InvalidParams(format!("nodes[{i}]: {e}")))?;
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::ConfigInvalid(format!("lambda={} must be > 0", self.lambda)));
        }
        if !(self.k > 0.0) || !self.k.is_finite() {
            return Err(Error::InvalidWeight(self.k));
        }
        if !(self.tol > 0.0) {
            return Err(Error::ConfigInvalid(format!("tol={} must be > 0", self.tol)));
        }
        Ok(())
    }

    pub fn capacity(&self) -> f64 {
        self.nodes.iter().map(|n| n.gamma_max).sum()
    }
}

/// Solution of the allocation problem, indexed like the input fleet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalAllocation {
    pub u_star: Vec<f64>,
    pub gamma_star: Vec<f64>,
    pub theta: f64,
    pub n_star: usize,
    /// Node indices sorted by non-decreasing price.
    pub order: Vec<usize>,
    pub prices: Vec<NodePrice>,
    /// Upper end of the threshold range, `max_i g_i^-1(gamma_max_i)`.
    pub theta_upper: f64,
    pub objective: f64,
    pub mean_response_time: f64,
}

impl OptimalAllocation {
    pub fn is_active(&self, node: usize) -> bool {
        self.u_star[node] > 0.0
    }
}

/// Load-weighted mean response time `sum (u_i/lambda) / (gamma_i - u_i)`.
///
/// Nodes with `u_i = 0` contribute nothing.
pub fn mean_response_time(u: &[f64], gamma: &[f64], lambda: f64) -> Result<f64> {
    let mut total = 0.0;
    for (i, (&ui, &gi)) in u.iter().zip(gamma).enumerate() {
        if ui == 0.0 {
            continue;
        }
        if !(gi > ui) {
            return Err(Error::InfeasibleRates { node: i, u: ui, gamma: gi });
        }
        total += ui / lambda / (gi - ui);
    }
    Ok(total)
}

/// Objective value: mean response time plus `K` times the weighted service cost.
pub fn total_cost(
    nodes: &[NodeCostParams],
    u: &[f64],
    gamma: &[f64],
    lambda: f64,
    k: f64,
) -> Result<f64> {
    let response = mean_response_time(u, gamma, lambda)?;
    let service: f64 = nodes
        .iter()
        .zip(u.iter().zip(gamma))
        .filter(|(_, (&ui, _))| ui != 0.0)
        .map(|(p, (&ui, &gi))| ui / lambda * p.phi(gi))
        .sum();
    Ok(response + k * service)
}

/// Optimal `(u, gamma)` of one node at threshold `theta`.
///
/// Below the capacity bound this is the closed-form rule
/// `u = gamma - (K*phi'(gamma))^-1/2`. When the clamp pins `gamma` at
/// `gamma_max`, the capacity multiplier is active and the rate follows the
/// `u`-stationarity condition `gamma/(gamma-u)^2 = theta - K*phi(gamma)`
/// instead. Negative values are cut to zero.
pub fn node_rates(p: &NodeCostParams, k: f64, theta: f64, clamp: bool) -> Result<(f64, f64)> {
    let gamma = cost_model::g(p, k, theta, clamp)?;
    let saturated = clamp && theta > cost_model::theta_max(p, k);
    let u = if saturated {
        let slack = theta - k * p.phi(gamma);
        gamma - (gamma / slack).sqrt()
    } else {
        gamma - 1.0 / (k * p.phi_prime(gamma)).sqrt()
    };
    Ok((u.max(0.0), gamma))
}

/// Sum of optimal rates over the first `count` nodes of `order` at `theta`.
fn cleared(
    config: &FleetConfig,
    order: &[usize],
    count: usize,
    theta: f64,
) -> Result<f64> {
    order[..count].iter().try_fold(0.0, |acc, &i| {
        node_rates(&config.nodes[i], config.k, theta, config.clamp_enabled).map(|(u, _)| acc + u)
    })
}

/// Computes the optimal allocation.
///
/// 1. Price every node and sort by non-decreasing price (stable).
/// 2. `n*` is the largest `k` for which the first `k` nodes, evaluated at the
///    `k`-th price, still schedule less than `lambda` in total.
/// 3. Bisect `theta` on `(theta_{n*}, theta_{n*+1}]` until the active rates
///    clear `lambda`.
pub fn solve(config: &FleetConfig) -> Result<OptimalAllocation> {
    config.validate()?;
    let capacity = config.capacity();
    if config.lambda >= capacity {
        return Err(Error::InfeasibleFleet { lambda: config.lambda, capacity });
    }
    let k = config.k;
    let n = config.nodes.len();

    let prices: Vec<NodePrice> =
        config.nodes.iter().map(|p| node_price(p, k)).collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| prices[i].theta.total_cmp(&prices[j].theta));
    let sorted_theta: Vec<f64> = order.iter().map(|&i| prices[i].theta).collect();
    let theta_upper = config
        .nodes
        .iter()
        .map(|p| cost_model::theta_max(p, k))
        .fold(f64::NEG_INFINITY, f64::max);

    let mut n_star = 1;
    for count in 1..=n {
        if cleared(config, &order, count, sorted_theta[count - 1])? < config.lambda {
            n_star = count;
        }
    }

    let lo = sorted_theta[n_star - 1] + 1e-12;
    let hi = if n_star < n { sorted_theta[n_star] } else { theta_upper };
    let reachable = if hi > lo { cleared(config, &order, n_star, hi)? } else { 0.0 };
    if !(hi > lo) || reachable < config.lambda - config.tol {
        return Err(Error::NoFeasibleThreshold { lambda: config.lambda, reachable });
    }

    let theta = clear_threshold(config, &order, n_star, lo, hi)?;

    let mut u_star = vec![0.0; n];
    let mut gamma_star = vec![0.0; n];
    for &i in &order[..n_star] {
        let (u, gamma) = node_rates(&config.nodes[i], k, theta, config.clamp_enabled)?;
        u_star[i] = u;
        gamma_star[i] = gamma;
    }
    let objective = total_cost(&config.nodes, &u_star, &gamma_star, config.lambda, k)?;
    let mean_response_time = mean_response_time(&u_star, &gamma_star, config.lambda)?;

    Ok(OptimalAllocation {
        u_star,
        gamma_star,
        theta,
        n_star,
        order,
        prices,
        theta_upper,
        objective,
        mean_response_time,
    })
}

fn clear_threshold(
    config: &FleetConfig,
    order: &[usize],
    n_star: usize,
    mut lo: f64,
    mut hi: f64,
) -> Result<f64> {
    let excess = |theta: f64| cleared(config, order, n_star, theta).map(|s| s - config.lambda);
    let mut theta = hi;
    let mut gap = excess(hi)?;
    for _ in 0..DEFAULT_MAX_ITER {
        if gap.abs() < config.tol * 1e-3 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = excess(mid)?;
        if fm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if fm.abs() < gap.abs() {
            theta = mid;
            gap = fm;
        }
    }
    Ok(theta)
}

/// Per-node stationarity residuals of a candidate allocation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeResiduals {
    pub node: usize,
    /// Residual of the `u`-stationarity condition.
    pub du: f64,
    /// Residual of the `gamma`-stationarity condition. On the capacity bound
    /// only the positive part counts, since a non-negative multiplier
    /// absorbs the rest.
    pub dgamma: f64,
    pub at_capacity: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktReport {
    pub nodes: Vec<NodeResiduals>,
    /// `|sum u - lambda|`
    pub primal: f64,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        self.nodes
            .iter()
            .flat_map(|r| [r.du, r.dgamma])
            .fold(self.primal, f64::max)
    }
}

/// First-order optimality residuals of `(u, gamma)` at multiplier `theta`.
///
/// Evaluated on nodes with `u_i > 0`, with the inactive-constraint
/// multipliers set to zero.
pub fn kkt_residuals(config: &FleetConfig, u: &[f64], gamma: &[f64], theta: f64) -> KktReport {
    let lambda = config.lambda;
    let k = config.k;
    let nodes = config
        .nodes
        .iter()
        .enumerate()
        .filter(|&(i, _)| u[i] > 0.0)
        .map(|(i, p)| {
            let (ui, gi) = (u[i], gamma[i]);
            let sq = (gi - ui) * (gi - ui);
            let du = (gi / (lambda * sq) + k * p.phi(gi) / lambda - theta / lambda).abs();
            let raw = -ui / (lambda * sq) + k * ui * p.phi_prime(gi) / lambda;
            let at_capacity = (gi - p.gamma_max).abs() <= 1e-9 * p.gamma_max.max(1.0);
            let dgamma = if at_capacity { raw.max(0.0) } else { raw.abs() };
            NodeResiduals { node: i, du, dgamma, at_capacity }
        })
        .collect();
    let primal = (u.iter().sum::<f64>() - lambda).abs();
    KktReport { nodes, primal }
}
