//! Command implementations. Each command returns a report; rendering to
//! text, JSON or CSV is separate so the binary only handles file plumbing.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ConfigFile, DEFAULT_EPSILON, DEFAULT_T_STAR};
use super::format::{num, row};
use super::{CliError, RunManifest};
use crate::aimd_control::{design_params, AimdParams};
use crate::fluid_sim::{self, InitialState, SimConfig, SimTrace};
use crate::optimal_policy::{self, OptimalAllocation};

/// Step of the β grid in the design curve.
pub const DESIGN_BETA_STEP: f64 = 0.01;

/// A report together with the manifest that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document<T> {
    pub manifest: RunManifest,
    #[serde(flatten)]
    pub body: T,
}

pub fn to_json<T: Serialize>(manifest: &RunManifest, body: &T) -> String {
    #[derive(Serialize)]
    struct Borrowed<'a, T> {
        manifest: &'a RunManifest,
        #[serde(flatten)]
        body: &'a T,
    }
    let mut s = serde_json::to_string_pretty(&Borrowed { manifest, body }).expect("reports serialize");
    s.push('\n');
    s
}

fn solver_err(e: crate::Error) -> CliError {
    match e {
        crate::Error::InvalidParams(m) | crate::Error::ConfigInvalid(m) => CliError::Validation(m),
        other => CliError::Solver(other),
    }
}

fn sim_err(e: crate::Error) -> CliError {
    match e {
        crate::Error::InvalidParams(m) | crate::Error::ConfigInvalid(m) => CliError::Validation(m),
        other => CliError::Simulation(other),
    }
}

// ---------------------------------------------------------------- solve

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub lambda: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub allocation: OptimalAllocation,
}

pub fn cmd_solve(config: &ConfigFile) -> Result<SolveReport, CliError> {
    let allocation = optimal_policy::solve(&config.fleet()).map_err(solver_err)?;
    Ok(SolveReport { lambda: config.lambda, k: config.k, allocation })
}

pub fn render_solve_text(report: &SolveReport) -> String {
    let a = &report.allocation;
    let mut out = String::new();
    writeln!(out, "lambda = {}, K = {}", num(report.lambda), num(report.k)).unwrap();
    writeln!(out, "{:>4}  {:>12}  {:>12}  {:>12}  {:>12}", "node", "theta_i", "u*", "gamma*", "active").unwrap();
    for i in 0..a.u_star.len() {
        writeln!(
            out,
            "{:>4}  {:>12}  {:>12}  {:>12}  {:>12}",
            i + 1,
            num(a.prices[i].theta),
            num(a.u_star[i]),
            num(a.gamma_star[i]),
            if a.is_active(i) { "yes" } else { "no" }
        )
        .unwrap();
    }
    writeln!(out, "n* = {}", a.n_star).unwrap();
    writeln!(out, "theta = {}", num(a.theta)).unwrap();
    writeln!(out, "theta_upper = {}", num(a.theta_upper)).unwrap();
    writeln!(out, "objective = {}", num(a.objective)).unwrap();
    writeln!(out, "mean_response_time = {}", num(a.mean_response_time)).unwrap();
    out
}

pub fn render_solve_csv(report: &SolveReport) -> String {
    let a = &report.allocation;
    let mut out = row(["node", "theta_i", "gamma_bar", "u", "gamma", "active"]);
    for i in 0..a.u_star.len() {
        out += &row([
            (i + 1).to_string(),
            num(a.prices[i].theta),
            num(a.prices[i].gamma_bar),
            num(a.u_star[i]),
            num(a.gamma_star[i]),
            u8::from(a.is_active(i)).to_string(),
        ]);
    }
    out
}

/// Reads an allocation written by `solve --format json`, or a bare allocation.
pub fn load_allocation(path: &Path) -> Result<OptimalAllocation, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    if let Ok(report) = serde_json::from_str::<SolveReport>(&text) {
        return Ok(report.allocation);
    }
    serde_json::from_str::<OptimalAllocation>(&text)
        .map_err(|e| CliError::Parse(format!("{}: not a solve report: {e}", path.display())))
}

// ---------------------------------------------------------------- sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub n_star: Option<usize>,
    pub mean_response_time: Option<f64>,
    pub theta: Option<f64>,
    pub objective: Option<f64>,
    pub error: Option<String>,
}

/// `lambda_min + k*step` for every k that stays within `lambda_max`.
pub fn sweep_grid(lambda_min: f64, lambda_max: f64, step: f64) -> Result<Vec<f64>, CliError> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(CliError::Validation(format!("lambda step={step} must be > 0")));
    }
    if !lambda_min.is_finite() || !lambda_max.is_finite() {
        return Err(CliError::Validation("lambda range must be finite".into()));
    }
    if lambda_max < lambda_min {
        return Ok(Vec::new());
    }
    let count = ((lambda_max - lambda_min) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| lambda_min + k as f64 * step).collect())
}

/// Solves the fleet at every λ of the grid. Failed points keep their row.
pub fn cmd_sweep(config: &ConfigFile, lambda_min: f64, lambda_max: f64, step: f64) -> Result<Vec<SweepRow>, CliError> {
    let grid = sweep_grid(lambda_min, lambda_max, step)?;
    let base = config.fleet();
    Ok(grid
        .par_iter()
        .map(|&lambda| {
            let mut fleet = base.clone();
            fleet.lambda = lambda;
            match optimal_policy::solve(&fleet) {
                Ok(a) => SweepRow {
                    lambda,
                    n_star: Some(a.n_star),
                    mean_response_time: Some(a.mean_response_time),
                    theta: Some(a.theta),
                    objective: Some(a.objective),
                    error: None,
                },
                Err(e) => SweepRow {
                    lambda,
                    n_star: None,
                    mean_response_time: None,
                    theta: None,
                    objective: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect())
}

pub fn render_sweep_csv(rows: &[SweepRow]) -> String {
    let opt = |x: Option<f64>| x.map(num).unwrap_or_default();
    let mut out = row(["lambda", "n_star", "mean_response_time", "theta", "objective", "error"]);
    for r in rows {
        out += &row([
            num(r.lambda),
            r.n_star.map(|n| n.to_string()).unwrap_or_default(),
            opt(r.mean_response_time),
            opt(r.theta),
            opt(r.objective),
            r.error.clone().unwrap_or_default(),
        ]);
    }
    out
}

// ---------------------------------------------------------------- design

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub t_star: f64,
    pub aimd: AimdParams,
    pub u_star: Vec<f64>,
    pub gamma_star: Vec<f64>,
}

/// Designs AIMD parameters whose steady state is the optimal allocation.
///
/// `beta` and `t_star` override the config's `aimd` section.
pub fn cmd_design(config: &ConfigFile, beta: Option<Vec<f64>>, t_star: Option<f64>) -> Result<DesignReport, CliError> {
    let section = config.aimd.as_ref();
    let beta = beta
        .or_else(|| section.map(|s| s.beta.clone()))
        .ok_or_else(|| CliError::Validation("design needs beta from --beta or aimd.beta".into()))?;
    if beta.len() != config.nodes.len() {
        return Err(CliError::Validation(format!(
            "beta has {} entries, expected {}",
            beta.len(),
            config.nodes.len()
        )));
    }
    let t_star = t_star.or_else(|| section.and_then(|s| s.t_star)).unwrap_or(DEFAULT_T_STAR);
    if !(t_star > 0.0) {
        return Err(CliError::Validation(format!("t_star={t_star} must be > 0")));
    }
    let epsilon = section.map_or(DEFAULT_EPSILON, |s| s.epsilon);
    let target = optimal_policy::solve(&config.fleet()).map_err(solver_err)?;
    let aimd = design_params(&target, &beta, t_star, epsilon).map_err(solver_err)?;
    Ok(DesignReport { t_star, aimd, u_star: target.u_star, gamma_star: target.gamma_star })
}

/// `alpha_i * T* = (1 - beta) * u_i*` over the β grid `0, 0.01, ..., 0.99`.
pub fn render_design_curve(u_star: &[f64]) -> String {
    let mut header = vec!["beta".to_string()];
    header.extend((1..=u_star.len()).map(|i| format!("alpha_t_{i}")));
    let mut out = row(header);
    for k in 0..100 {
        let beta = k as f64 * DESIGN_BETA_STEP;
        let mut fields = vec![num(beta)];
        fields.extend(u_star.iter().map(|&u| num((1.0 - beta) * u)));
        out += &row(fields);
    }
    out
}

pub fn render_design_csv(report: &DesignReport) -> String {
    let mut out = row(["node", "alpha", "beta", "u_star", "gamma_star"]);
    for i in 0..report.u_star.len() {
        out += &row([
            (i + 1).to_string(),
            num(report.aimd.alpha[i]),
            num(report.aimd.beta[i]),
            num(report.u_star[i]),
            num(report.gamma_star[i]),
        ]);
    }
    out
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, Default)]
pub struct SimulateOptions {
    /// Target allocation; solved from the config when absent.
    pub allocation: Option<OptimalAllocation>,
    pub horizon: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateReport {
    pub aimd: AimdParams,
    pub gamma: Vec<f64>,
    pub trace: SimTrace,
}

/// Builds the simulator input from a config file.
///
/// Capacities come from `sim.gamma`, else from the target allocation. AIMD
/// gains come from `aimd.alpha`, else they are designed from the target.
pub fn sim_config(config: &ConfigFile, options: &SimulateOptions) -> Result<SimConfig, CliError> {
    let section = config
        .aimd
        .as_ref()
        .ok_or_else(|| CliError::Validation("simulate needs an aimd section".into()))?;
    let mut target = options.allocation.clone();
    let mut target = || -> Result<OptimalAllocation, CliError> {
        if target.is_none() {
            target = Some(optimal_policy::solve(&config.fleet()).map_err(solver_err)?);
        }
        Ok(target.clone().expect("target set"))
    };
    let n = config.nodes.len();

    let aimd = match &section.alpha {
        Some(alpha) => AimdParams::new(alpha.clone(), section.beta.clone(), section.epsilon).map_err(sim_err)?,
        None => design_params(&target()?, &section.beta, section.t_star.unwrap_or(DEFAULT_T_STAR), section.epsilon)
            .map_err(solver_err)?,
    };
    let gamma = match &config.sim.gamma {
        Some(g) => g.clone(),
        None => target()?.gamma_star,
    };
    if gamma.len() != n {
        return Err(CliError::Validation(format!("allocation has {} nodes, config has {n}", gamma.len())));
    }

    let sim = &config.sim;
    let mut cfg = SimConfig::new(config.fleet(), aimd, gamma, options.horizon.unwrap_or(sim.horizon), sim.sample_dt);
    cfg.switching = config.switching;
    cfg.initial = InitialState {
        u: sim.initial_u.clone().unwrap_or_else(|| vec![0.0; n]),
        delta: sim.initial_delta,
        w: sim.initial_w.clone().unwrap_or_else(|| vec![0.0; n]),
    };
    let mut section = sim.clone();
    if let Some(seed) = options.seed {
        section.seed = seed;
    }
    cfg.arrival = section.arrival();
    Ok(cfg)
}

pub fn cmd_simulate(config: &ConfigFile, options: &SimulateOptions) -> Result<SimulateReport, CliError> {
    let cfg = sim_config(config, options)?;
    let trace = fluid_sim::run(&cfg).map_err(sim_err)?;
    Ok(SimulateReport { aimd: cfg.aimd, gamma: cfg.gamma, trace })
}

pub fn render_trace_csv(trace: &SimTrace, n: usize) -> String {
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("u_{i}")));
    header.push("delta".into());
    header.extend((1..=n).map(|i| format!("w_{i}")));
    header.push("lambda_active".into());
    let mut out = row(header);
    for s in &trace.samples {
        let mut fields = vec![num(s.t)];
        fields.extend(s.u.iter().copied().map(num));
        fields.push(num(s.delta));
        fields.extend(s.w.iter().copied().map(num));
        fields.push(num(s.lambda_active));
        out += &row(fields);
    }
    out
}

pub fn render_events_csv(trace: &SimTrace) -> String {
    let mut out = row(["t_k", "kind", "period"]);
    for e in &trace.events {
        out += &row([num(e.t), e.kind_label(), e.period.map(num).unwrap_or_default()]);
    }
    out
}

// ---------------------------------------------------------------- mm1-check

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mm1Row {
    /// One-based node index, absent for an explicit (u, gamma) pair.
    pub node: Option<usize>,
    pub u: f64,
    pub gamma: f64,
    pub analytic: f64,
    pub empirical: f64,
    pub rel_error: f64,
}

fn mm1_row(node: Option<usize>, u: f64, gamma: f64, customers: usize, seed: u64) -> Result<Mm1Row, CliError> {
    let empirical = fluid_sim::mm1_empirical_sojourn(u, gamma, customers, seed).map_err(sim_err)?;
    let analytic = 1.0 / (gamma - u);
    Ok(Mm1Row { node, u, gamma, analytic, empirical, rel_error: (empirical - analytic).abs() / analytic })
}

/// Compares simulated M/M/1 sojourn times against `1/(gamma-u)`.
///
/// With an explicit pair only that queue is checked; otherwise every active
/// node of the optimal allocation, node `i` using seed `seed + i`.
pub fn cmd_mm1(
    config: Option<&ConfigFile>,
    pair: Option<(f64, f64)>,
    customers: usize,
    seed: u64,
) -> Result<Vec<Mm1Row>, CliError> {
    if customers == 0 {
        return Err(CliError::Validation("customers must be > 0".into()));
    }
    if let Some((u, gamma)) = pair {
        return Ok(vec![mm1_row(None, u, gamma, customers, seed)?]);
    }
    let config = config.ok_or_else(|| CliError::Validation("mm1-check needs --config or both --u and --gamma".into()))?;
    let a = optimal_policy::solve(&config.fleet()).map_err(solver_err)?;
    (0..a.u_star.len())
        .filter(|&i| a.is_active(i))
        .map(|i| mm1_row(Some(i + 1), a.u_star[i], a.gamma_star[i], customers, seed.wrapping_add(i as u64)))
        .collect()
}

pub fn render_mm1_csv(rows: &[Mm1Row]) -> String {
    let mut out = row(["node", "u", "gamma", "analytic", "empirical", "rel_error"]);
    for r in rows {
        out += &row([
            r.node.map(|n| n.to_string()).unwrap_or_default(),
            num(r.u),
            num(r.gamma),
            num(r.analytic),
            num(r.empirical),
            num(r.rel_error),
        ]);
    }
    out
}
