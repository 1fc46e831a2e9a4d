use thiserror::Error;

/// Errors raised by the solver, the AIMD machinery and the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid node parameters: {0}")]
    InvalidParams(String),

    #[error("cost weight K must be positive, got {0}")]
    InvalidWeight(f64),

    #[error("price {theta} is not above the routing floor K*d = {floor}")]
    PriceTooLow { theta: f64, floor: f64 },

    #[error("service rate {gamma} outside (0, {gamma_max}]")]
    OutOfRange { gamma: f64, gamma_max: f64 },

    #[error("node {node}: service rate {gamma} does not exceed scheduling rate {u}")]
    InfeasibleRates { node: usize, u: f64, gamma: f64 },

    #[error("arrival rate {lambda} is not below total capacity {capacity}")]
    InfeasibleFleet { lambda: f64, capacity: f64 },

    #[error("no threshold clears arrival rate {lambda}: best reachable sum is {reachable}")]
    NoFeasibleThreshold { lambda: f64, reachable: f64 },

    #[error("degenerate AIMD parameters: {0}")]
    DegenerateParams(String),

    #[error("fixed-point iteration did not converge after {iterations} iterations (gap {gap})")]
    NonConvergent { iterations: usize, gap: f64 },

    #[error("node {node}: target rate {u} exceeds service rate minus margin {limit}")]
    TargetTooClose { node: usize, u: f64, limit: f64 },

    #[error("no trigger within the remaining horizon {remaining}")]
    HorizonExceeded { remaining: f64 },

    #[error("simulation stalled at t = {t}: too many zero-length events")]
    Stalled { t: f64 },

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("unstable queue: arrival rate {u} >= service rate {gamma}")]
    Unstable { u: f64, gamma: f64 },

    #[error("root bracket [{lo}, {hi}] does not change sign")]
    NoBracket { lo: f64, hi: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
