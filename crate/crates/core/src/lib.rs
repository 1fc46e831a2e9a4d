//! Cost-optimal request scheduling and service-capacity allocation for a
//! fleet of heterogeneous computing nodes.
//!
//! * [`cost_model`]: per-node service cost, node prices and the
//!   capacity-response map.
//! * [`optimal_policy`]: the threshold solver for the optimal scheduling
//!   rates and capacities, plus a KKT residual checker.
//! * [`aimd_control`]: AIMD rate dynamics, their steady state and the
//!   parameter design that makes the steady state optimal.
//! * [`fluid_sim`]: exact event-driven simulation of the dispatcher and node
//!   backlogs, and an M/M/1 Monte Carlo check of the response-time model.
//! * [`cli_io`]: configuration files, the command implementations behind the
//!   `fleet-sched` binary, and CSV/JSON export.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aimd_control;
pub mod cli_io;
pub mod cost_model;
pub mod error;
pub mod fluid_sim;
pub mod optimal_policy;
pub mod roots;

pub use aimd_control::{design_params, fixed_point, AimdFixedPoint, AimdParams};
pub use cost_model::{node_price, NodeCostParams, NodePrice};
pub use error::{Error, Result};
pub use fluid_sim::{mm1_empirical_sojourn, run, SimConfig, SimTrace, Switching};
pub use optimal_policy::{kkt_residuals, solve, FleetConfig, OptimalAllocation};
