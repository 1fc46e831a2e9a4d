//! Event-triggered AIMD scheduling rates.
//!
//! Between events every node's rate grows linearly at `alpha_i`; at an event
//! it is cut to `beta_i` times its value. With a fixed arrival rate the event
//! fires when the rates sum to `lambda`. In steady state each rate settles at
//! `min(alpha_i*T/(1-beta_i), gamma_i - epsilon)` with the period `T` chosen
//! so the rates sum to `lambda`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimal_policy::OptimalAllocation;

pub const DEFAULT_ITER_THRESHOLD: f64 = 1e-6;
pub const MAX_FIXED_POINT_ITERS: usize = 10_000;

/// Per-node additive rates and multiplicative factors.
///
/// Inactive nodes carry `alpha = beta = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AimdParams {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub epsilon: f64,
}

impl AimdParams {
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>, epsilon: f64) -> Result<Self> {
        let params = Self { alpha, beta, epsilon };
        params.validate()?;
        Ok(params)
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn is_active(&self, node: usize) -> bool {
        self.alpha[node] > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha.len() != self.beta.len() {
            return Err(Error::DegenerateParams(format!(
                "alpha has {} entries but beta has {}",
                self.alpha.len(),
                self.beta.len()
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::DegenerateParams(format!("epsilon={} must be > 0", self.epsilon)));
        }
        for (i, (&a, &b)) in self.alpha.iter().zip(&self.beta).enumerate() {
            if a == 0.0 && b == 0.0 {
                continue;
            }
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::DegenerateParams(format!("alpha[{i}]={a} must be > 0")));
            }
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::DegenerateParams(format!("beta[{i}]={b} outside (0,1)")));
            }
        }
        Ok(())
    }

    /// `sum alpha_i / (1 - beta_i)` over active nodes.
    pub fn delta(&self) -> f64 {
        self.alpha
            .iter()
            .zip(&self.beta)
            .filter(|(&a, _)| a > 0.0)
            .map(|(&a, &b)| a / (1.0 - b))
            .sum()
    }

    /// Smallest `beta` among active nodes.
    pub fn min_active_beta(&self) -> Option<f64> {
        self.beta
            .iter()
            .zip(&self.alpha)
            .filter(|(_, &a)| a > 0.0)
            .map(|(&b, _)| b)
            .reduce(f64::min)
    }
}

/// Steady-state rates and period of the AIMD sawtooth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AimdFixedPoint {
    pub u_ss: Vec<f64>,
    pub t_star: f64,
    pub saturated: Vec<bool>,
    pub iterations: usize,
    /// `lambda - sum u_ss` at exit.
    pub gap: f64,
}

/// Rates a time `dt` after an event at which the rates were `u_at_event`.
pub fn aimd_step(u_at_event: &[f64], params: &AimdParams, dt: f64) -> Vec<f64> {
    u_at_event
        .iter()
        .zip(params.alpha.iter().zip(&params.beta))
        .map(|(&u, (&a, &b))| b * u + a * dt)
        .collect()
}

/// Time from an event until the cut-and-grown rates sum to `lambda` again.
pub fn next_event_time(u_at_event: &[f64], params: &AimdParams, lambda: f64) -> Result<f64> {
    let slope: f64 = params.alpha.iter().sum();
    if !(slope > 0.0) {
        return Err(Error::DegenerateParams("sum of alpha is zero".into()));
    }
    let after_cut: f64 = u_at_event.iter().zip(&params.beta).map(|(u, b)| b * u).sum();
    Ok((lambda - after_cut) / slope)
}

fn rates_at(params: &AimdParams, gamma: &[f64], t: f64, u: &mut [f64], saturated: &mut [bool]) {
    for i in 0..params.len() {
        if !params.is_active(i) {
            u[i] = 0.0;
            saturated[i] = false;
            continue;
        }
        let free = params.alpha[i] * t / (1.0 - params.beta[i]);
        let cap = gamma[i] - params.epsilon;
        saturated[i] = cap < free;
        u[i] = free.min(cap);
    }
}

/// Computes the steady-state rates and period.
///
/// Starts from `T = lambda / delta`. With `threshold = None` that single
/// evaluation is returned. Otherwise, while `lambda - sum u > threshold`,
/// the period is advanced by `(lambda - sum u) / delta` and the rates are
/// recomputed.
pub fn fixed_point(
    params: &AimdParams,
    gamma: &[f64],
    lambda: f64,
    threshold: Option<f64>,
) -> Result<AimdFixedPoint> {
    params.validate()?;
    if gamma.len() != params.len() {
        return Err(Error::DegenerateParams(format!(
            "gamma has {} entries but there are {} nodes",
            gamma.len(),
            params.len()
        )));
    }
    if !(lambda > 0.0) {
        return Err(Error::DegenerateParams(format!("lambda={lambda} must be > 0")));
    }
    let delta = params.delta();
    if !(delta > 0.0) {
        return Err(Error::DegenerateParams("no active node".into()));
    }

    let n = params.len();
    let mut u = vec![0.0; n];
    let mut saturated = vec![false; n];
    let mut t_star = lambda / delta;
    rates_at(params, gamma, t_star, &mut u, &mut saturated);
    let mut gap = lambda - u.iter().sum::<f64>();
    let mut iterations = 1;

    if let Some(threshold) = threshold {
        let reachable: f64 = (0..n)
            .filter(|&i| params.is_active(i))
            .map(|i| gamma[i] - params.epsilon)
            .sum();
        if lambda - reachable > threshold {
            return Err(Error::NonConvergent { iterations: 0, gap: lambda - reachable });
        }
        while gap > threshold {
            if iterations >= MAX_FIXED_POINT_ITERS {
                return Err(Error::NonConvergent { iterations, gap });
            }
            t_star += gap / delta;
            rates_at(params, gamma, t_star, &mut u, &mut saturated);
            gap = lambda - u.iter().sum::<f64>();
            iterations += 1;
        }
    }

    Ok(AimdFixedPoint { u_ss: u, t_star, saturated, iterations, gap })
}

/// AIMD parameters whose steady state reproduces an optimal allocation.
///
/// For each active node `alpha_i = (1 - beta_i) * u_i / t_star`; inactive
/// nodes get `alpha = beta = 0` whatever `beta` says for them.
pub fn design_params(
    target: &OptimalAllocation,
    beta: &[f64],
    t_star: f64,
    epsilon: f64,
) -> Result<AimdParams> {
    let n = target.u_star.len();
    if beta.len() != n {
        return Err(Error::DegenerateParams(format!("beta has {} entries, fleet has {n}", beta.len())));
    }
    if !(t_star > 0.0) || !t_star.is_finite() {
        return Err(Error::DegenerateParams(format!("T*={t_star} must be > 0")));
    }
    let mut alpha = vec![0.0; n];
    let mut out_beta = vec![0.0; n];
    for i in 0..n {
        let u = target.u_star[i];
        if u <= 0.0 {
            continue;
        }
        let limit = target.gamma_star[i] - epsilon;
        if u > limit {
            return Err(Error::TargetTooClose { node: i, u, limit });
        }
        let b = beta[i];
        if !(b > 0.0 && b < 1.0) {
            return Err(Error::DegenerateParams(format!("beta[{i}]={b} outside (0,1)")));
        }
        alpha[i] = (1.0 - b) * u / t_star;
        out_beta[i] = b;
    }
    AimdParams::new(alpha, out_beta, epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_params() -> AimdParams {
        AimdParams::new(vec![0.4, 0.6, 0.8], vec![0.4, 0.3, 0.2], 0.001).unwrap()
    }

    const GAMMA: [f64; 3] = [5.3281, 3.2623, 1.6897];

    #[test]
    fn step_is_cut_then_growth() {
        let p = AimdParams::new(vec![1.0; 3], vec![0.5; 3], 0.001).unwrap();
        assert_eq!(aimd_step(&[1.0, 1.0, 1.0], &p, 0.0), vec![0.5, 0.5, 0.5]);
        assert_eq!(aimd_step(&[0.0; 3], &example_params(), 1.0), vec![0.4, 0.6, 0.8]);
    }

    #[test]
    fn steady_vector_repeats_after_one_cycle() {
        let p = example_params();
        let t = 8.0 / p.delta();
        let u: Vec<f64> = (0..3).map(|i| p.alpha[i] * t / (1.0 - p.beta[i])).collect();
        let next = aimd_step(&u, &p, t);
        for i in 0..2 {
            assert!((next[i] - u[i]).abs() < 1e-12);
        }
        assert!((u[0] - 2.1132).abs() < 1e-4 && (u[1] - 2.7170).abs() < 1e-4);
        // the same vector also sums to lambda, so the next period equals t
        assert!((next_event_time(&u, &p, 8.0).unwrap() - t).abs() < 1e-12);
    }

    #[test]
    fn next_event_time_examples() {
        let p = example_params();
        assert!((next_event_time(&[0.0; 3], &p, 8.0).unwrap() - 8.0 / 1.8).abs() < 1e-12);
        let u = [2.0, 2.0, 2.0];
        let after: f64 = 0.4 * 2.0 + 0.3 * 2.0 + 0.2 * 2.0;
        assert_eq!(next_event_time(&u, &p, after).unwrap(), 0.0);
        let dead = AimdParams { alpha: vec![0.0; 2], beta: vec![0.0; 2], epsilon: 0.1 };
        assert!(matches!(next_event_time(&[0.0; 2], &dead, 1.0), Err(Error::DegenerateParams(_))));
    }

    #[test]
    fn single_pass_reproduces_published_values() {
        let fp = fixed_point(&example_params(), &GAMMA, 8.0, None).unwrap();
        assert!((fp.t_star - 3.1698).abs() < 1e-4);
        let expected = [2.1132, 2.7170, 1.6887];
        for i in 0..3 {
            assert!((fp.u_ss[i] - expected[i]).abs() < 1e-4);
        }
        assert_eq!(fp.saturated, vec![false, false, true]);
        assert_eq!(fp.iterations, 1);
        assert!((fp.gap - (8.0 - 6.5189)).abs() < 1e-3);
    }

    #[test]
    fn iteration_reaches_balance() {
        let fp = fixed_point(&example_params(), &GAMMA, 8.0, Some(1e-6)).unwrap();
        assert!(fp.gap <= 1e-6);
        assert!((fp.t_star - 4.575).abs() < 1e-5);
        assert!((fp.u_ss[0] - 3.05).abs() < 1e-5);
        assert!((fp.u_ss[1] - 3.2613).abs() < 1e-12);
        assert!((fp.u_ss[2] - 1.6887).abs() < 1e-12);
        assert_eq!(fp.saturated, vec![false, true, true]);
    }

    #[test]
    fn closed_form_period_without_caps() {
        let fp = fixed_point(&example_params(), &[1e6; 3], 8.0, Some(1e-6)).unwrap();
        let delta = 0.4 / 0.6 + 0.6 / 0.7 + 0.8 / 0.8;
        assert_eq!(fp.t_star, 8.0 / delta);
        assert_eq!(fp.iterations, 1);
        assert!((fp.t_star - 3.1698).abs() < 1e-4);
    }

    #[test]
    fn unreachable_demand_is_nonconvergent() {
        let err = fixed_point(&example_params(), &[1.0, 1.0, 1.0], 8.0, Some(1e-6)).unwrap_err();
        assert!(matches!(err, Error::NonConvergent { .. }));
    }

    #[test]
    fn inactive_nodes_stay_at_zero() {
        let p = AimdParams::new(vec![0.5, 0.0], vec![0.5, 0.0], 0.01).unwrap();
        let fp = fixed_point(&p, &[10.0, 0.0], 2.0, Some(1e-9)).unwrap();
        assert_eq!(fp.u_ss[1], 0.0);
        assert!((fp.u_ss[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn validation_rejects_bad_beta() {
        let err = AimdParams::new(vec![0.4, 0.6, 0.8], vec![0.4, 1.0, 0.2], 0.001).unwrap_err();
        assert!(err.to_string().contains("beta[1]=1 outside (0,1)"), "{err}");
        assert!(AimdParams::new(vec![0.4], vec![0.4], 0.0).is_err());
    }

    fn allocation(u: Vec<f64>, gamma: Vec<f64>) -> OptimalAllocation {
        let n = u.len();
        OptimalAllocation {
            u_star: u,
            gamma_star: gamma,
            theta: 0.0,
            n_star: n,
            order: (0..n).collect(),
            prices: vec![],
            theta_upper: 0.0,
            objective: 0.0,
            mean_response_time: 0.0,
        }
    }

    #[test]
    fn design_matches_published_rates() {
        let target = allocation(vec![4.4393, 2.5180, 1.0428], GAMMA.to_vec());
        let p = design_params(&target, &[0.4, 0.3, 0.2], 1.0, 0.001).unwrap();
        let expected = [0.6 * 4.4393, 0.7 * 2.5180, 0.8 * 1.0428];
        for i in 0..3 {
            assert!((p.alpha[i] - expected[i]).abs() < 1e-12);
        }
        assert!((p.alpha[0] - 2.6636).abs() < 1e-4);
        assert!((p.alpha[1] - 1.7626).abs() < 1e-4);
        assert!((p.alpha[2] - 0.8342).abs() < 1e-4);
    }

    #[test]
    fn design_zeroes_inactive_nodes() {
        let target = allocation(vec![2.0, 0.0], vec![3.0, 0.0]);
        let p = design_params(&target, &[0.5, 0.7], 2.0, 0.001).unwrap();
        assert_eq!((p.alpha[1], p.beta[1]), (0.0, 0.0));
        assert_eq!(p.alpha[0], 0.5);
    }

    #[test]
    fn design_rejects_targets_near_capacity() {
        let target = allocation(vec![2.9995], vec![3.0]);
        let err = design_params(&target, &[0.5], 1.0, 0.001).unwrap_err();
        assert!(matches!(err, Error::TargetTooClose { node: 0, .. }));
    }

    #[test]
    fn design_line_in_beta() {
        // alpha*T = (1 - beta) * u for every beta on a grid
        let target = allocation(vec![1.5], vec![2.0]);
        for k in 1..100 {
            let b = k as f64 / 100.0;
            let p = design_params(&target, &[b], 2.5, 1e-3).unwrap();
            assert!((p.alpha[0] * 2.5 - (1.0 - b) * 1.5).abs() < 1e-12);
        }
    }
}
