//! JSON configuration files.
//!
//! ```json
//! {
//!   "nodes": [{"a": 0.1, "b": 2, "c": 0.2, "d": 1, "gamma_max": 5}],
//!   "lambda": 3,
//!   "K": 1,
//!   "solver": {"tol": 1e-9, "clamp_enabled": true},
//!   "aimd": {"alpha": [0.4], "beta": [0.4], "epsilon": 0.001},
//!   "switching": {"delta_min": 0, "delta_max": 10, "rho": 0.1},
//!   "sim": {"horizon": 60, "sample_dt": 0.05, "arrival_mode": "fluid"}
//! }
//! ```
//!
//! Only `nodes`, `lambda` and `K` are required. When `aimd.alpha` is absent
//! the rates are designed from the optimal allocation using `aimd.beta` and
//! `aimd.t_star`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::cost_model::NodeCostParams;
use crate::fluid_sim::{ArrivalMode, Switching};
use crate::optimal_policy::FleetConfig;
use crate::roots::DEFAULT_TOL;

pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const DEFAULT_T_STAR: f64 = 1.0;
pub const DEFAULT_HORIZON: f64 = 60.0;
pub const DEFAULT_SAMPLE_DT: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub nodes: Vec<NodeCostParams>,
    pub lambda: f64,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aimd: Option<AimdSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switching: Option<Switching>,
    #[serde(default)]
    pub sim: SimSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub tol: f64,
    pub clamp_enabled: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, clamp_enabled: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AimdSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    pub beta: Vec<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_star: Option<f64>,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrivalKind {
    Fluid,
    Poisson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub horizon: f64,
    pub sample_dt: f64,
    pub arrival_mode: ArrivalKind,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_u: Option<Vec<f64>>,
    pub initial_delta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_w: Option<Vec<f64>>,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            horizon: DEFAULT_HORIZON,
            sample_dt: DEFAULT_SAMPLE_DT,
            arrival_mode: ArrivalKind::Fluid,
            seed: 0,
            gamma: None,
            initial_u: None,
            initial_delta: 0.0,
            initial_w: None,
        }
    }
}

impl SimSection {
    pub fn arrival(&self) -> ArrivalMode {
        match self.arrival_mode {
            ArrivalKind::Fluid => ArrivalMode::Fluid,
            ArrivalKind::Poisson => ArrivalMode::Poisson { seed: self.seed },
        }
    }
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ConfigFile = serde_json::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn fleet(&self) -> FleetConfig {
        FleetConfig {
            nodes: self.nodes.clone(),
            lambda: self.lambda,
            k: self.k,
            tol: self.solver.tol,
            clamp_enabled: self.solver.clamp_enabled,
        }
    }

    /// Enforces every invariant, naming the offending field.
    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: String| Err(CliError::Validation(msg));
        if self.nodes.is_empty() {
            return fail("nodes: at least one node is required".into());
        }
        for (i, p) in self.nodes.iter().enumerate() {
            for (field, value, ok, rule) in [
                ("a", p.a, p.a > 0.0, "a_i>0"),
                ("b", p.b, p.b > 1.0, "b_i>1"),
                ("c", p.c, p.c > 0.0, "c_i>0"),
                ("d", p.d, p.d > 0.0, "d_i>0"),
                ("gamma_max", p.gamma_max, p.gamma_max > 0.0, "gamma_max_i>0"),
            ] {
                if !ok || !value.is_finite() {
                    return fail(format!("nodes[{i}].{field}={value:?} violates {rule}"));
                }
            }
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return fail(format!("lambda={} must be > 0", self.lambda));
        }
        if !(self.k > 0.0) || !self.k.is_finite() {
            return fail(format!("K={} must be > 0", self.k));
        }
        if !(self.solver.tol > 0.0) {
            return fail(format!("solver.tol={} must be > 0", self.solver.tol));
        }
        let n = self.nodes.len();
        let check_len = |name: &str, len: usize| -> Result<(), CliError> {
            if len != n {
                return Err(CliError::Validation(format!("{name} has {len} entries, expected {n}")));
            }
            Ok(())
        };

        if let Some(aimd) = &self.aimd {
            check_len("aimd.beta", aimd.beta.len())?;
            if !(aimd.epsilon > 0.0) {
                return fail(format!("aimd.epsilon={} must be > 0", aimd.epsilon));
            }
            if let Some(t) = aimd.t_star {
                if !(t > 0.0) {
                    return fail(format!("aimd.t_star={t} must be > 0"));
                }
            }
            match &aimd.alpha {
                Some(alpha) => {
                    check_len("aimd.alpha", alpha.len())?;
                    for (i, (&a, &b)) in alpha.iter().zip(&aimd.beta).enumerate() {
                        if a == 0.0 && b == 0.0 {
                            continue;
                        }
                        if !(a > 0.0) {
                            return fail(format!("aimd.alpha[{i}]={a} must be > 0 (or alpha=beta=0 for an idle node)"));
                        }
                        if !(b > 0.0 && b < 1.0) {
                            return fail(format!("aimd.beta[{i}]={b:?} outside (0,1)"));
                        }
                    }
                }
                None => {
                    for (i, &b) in aimd.beta.iter().enumerate() {
                        if !(b > 0.0 && b < 1.0) {
                            return fail(format!("aimd.beta[{i}]={b:?} outside (0,1)"));
                        }
                    }
                }
            }
        }

        if let Some(sw) = &self.switching {
            if !(sw.delta_min >= 0.0) {
                return fail(format!("switching.delta_min={} must be >= 0", sw.delta_min));
            }
            if !(sw.delta_max > sw.delta_min) {
                return fail(format!(
                    "switching.delta_max={} must exceed delta_min={}",
                    sw.delta_max, sw.delta_min
                ));
            }
            let Some(aimd) = &self.aimd else {
                return fail("switching requires an aimd section to bound rho".into());
            };
            let min_beta = aimd
                .beta
                .iter()
                .enumerate()
                .filter(|&(i, &b)| b > 0.0 && aimd.alpha.as_ref().is_none_or(|a| a[i] > 0.0))
                .map(|(_, &b)| b)
                .fold(f64::INFINITY, f64::min);
            if !(sw.rho > 0.0 && sw.rho < min_beta) {
                return fail(format!(
                    "switching.rho={} outside (0, min beta={min_beta}): rho must lie in (0, min_i beta_i)",
                    sw.rho
                ));
            }
        }

        let sim = &self.sim;
        if !(sim.horizon >= 0.0) || !sim.horizon.is_finite() {
            return fail(format!("sim.horizon={} must be >= 0", sim.horizon));
        }
        if !(sim.sample_dt > 0.0) {
            return fail(format!("sim.sample_dt={} must be > 0", sim.sample_dt));
        }
        if !(sim.initial_delta >= 0.0) {
            return fail(format!("sim.initial_delta={} must be >= 0", sim.initial_delta));
        }
        for (name, v) in [("sim.gamma", &sim.gamma), ("sim.initial_u", &sim.initial_u), ("sim.initial_w", &sim.initial_w)] {
            if let Some(v) = v {
                check_len(name, v.len())?;
                if let Some(i) = v.iter().position(|x| !(*x >= 0.0)) {
                    return fail(format!("{name}[{i}]={} must be >= 0", v[i]));
                }
            }
        }
        Ok(())
    }
}

/// Reads and validates a configuration file.
pub fn load_config(path: &Path) -> Result<ConfigFile, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    ConfigFile::parse(&text)
}
