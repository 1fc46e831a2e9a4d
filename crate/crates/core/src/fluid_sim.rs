//! Exact event-driven simulation of the dispatcher and node backlogs.
//!
//! The dispatcher backlog `delta` grows at `lambda_active - sum u_i` and node
//! backlog `w_i` at `u_i - gamma_i`, both reflected at zero. Rates follow the
//! AIMD sawtooth: between events `u_i = min(base_i + alpha_i*s, gamma_i - eps)`
//! where `s` is the time since the last event, so every interval splits into
//! finitely many affine pieces at the clip times. On each piece the backlogs
//! are quadratics in time and all event times are closed-form roots.
//!
//! Events:
//! * `Sum`: the rates reach the desired arrival rate `lambda`.
//! * `BacklogZero`: the dispatcher backlog drains to zero.
//! * `SwitchDown` / `SwitchUp`: with hysteresis switching enabled, the backlog
//!   reaches `delta_max` (arrivals drop to `rho*lambda`) or `delta_min`
//!   (arrivals return to `lambda`).
//!
//! `Sum` and `BacklogZero` cut every rate by `beta_i`. Switching only changes
//! the arrival rate that feeds the backlog; the sum trigger keeps comparing
//! against the desired `lambda`.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};

use crate::aimd_control::AimdParams;
use crate::error::{Error, Result};
use crate::optimal_policy::FleetConfig;

/// Events closer than this are merged into one.
pub const COINCIDENCE_TOL: f64 = 1e-12;
const MAX_ZERO_LENGTH_EVENTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Switching {
    pub delta_min: f64,
    pub delta_max: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrivalLevel {
    High,
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum ArrivalMode {
    Fluid,
    Poisson { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub u: Vec<f64>,
    pub delta: f64,
    pub w: Vec<f64>,
}

impl InitialState {
    pub fn zero(n: usize) -> Self {
        Self { u: vec![0.0; n], delta: 0.0, w: vec![0.0; n] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub fleet: FleetConfig,
    pub aimd: AimdParams,
    pub gamma: Vec<f64>,
    pub horizon: f64,
    pub sample_dt: f64,
    pub switching: Option<Switching>,
    pub initial: InitialState,
    pub arrival: ArrivalMode,
}

impl SimConfig {
    /// Fluid arrivals, no switching, everything starting at zero.
    pub fn new(fleet: FleetConfig, aimd: AimdParams, gamma: Vec<f64>, horizon: f64, sample_dt: f64) -> Self {
        let n = gamma.len();
        Self {
            fleet,
            aimd,
            gamma,
            horizon,
            sample_dt,
            switching: None,
            initial: InitialState::zero(n),
            arrival: ArrivalMode::Fluid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::ConfigInvalid(msg));
        self.fleet.validate()?;
        self.aimd.validate()?;
        let n = self.fleet.nodes.len();
        for (name, len) in [
            ("aimd.alpha", self.aimd.len()),
            ("gamma", self.gamma.len()),
            ("initial.u", self.initial.u.len()),
            ("initial.w", self.initial.w.len()),
        ] {
            if len != n {
                return invalid(format!("{name} has {len} entries but the fleet has {n} nodes"));
            }
        }
        if let Some(i) = self.gamma.iter().position(|g| !(*g >= 0.0) || !g.is_finite()) {
            return invalid(format!("gamma[{i}]={} must be >= 0", self.gamma[i]));
        }
        if !(self.horizon >= 0.0) || !self.horizon.is_finite() {
            return invalid(format!("horizon={} must be >= 0", self.horizon));
        }
        if !(self.sample_dt > 0.0) {
            return invalid(format!("sample_dt={} must be > 0", self.sample_dt));
        }
        if !(self.initial.delta >= 0.0) {
            return invalid(format!("initial delta={} must be >= 0", self.initial.delta));
        }
        for (name, v) in [("initial.u", &self.initial.u), ("initial.w", &self.initial.w)] {
            if let Some(i) = v.iter().position(|x| !(*x >= 0.0)) {
                return invalid(format!("{name}[{i}]={} must be >= 0", v[i]));
            }
        }
        if let Some(sw) = &self.switching {
            validate_switching(sw, &self.aimd)?;
        }
        Ok(())
    }
}

/// Checks `0 <= delta_min < delta_max` and `0 < rho < min beta` over active nodes.
pub fn validate_switching(sw: &Switching, aimd: &AimdParams) -> Result<()> {
    if !(sw.delta_min >= 0.0) {
        return Err(Error::ConfigInvalid(format!("switching.delta_min={} must be >= 0", sw.delta_min)));
    }
    if !(sw.delta_max > sw.delta_min) || !sw.delta_max.is_finite() {
        return Err(Error::ConfigInvalid(format!(
            "switching.delta_max={} must exceed delta_min={}",
            sw.delta_max, sw.delta_min
        )));
    }
    let min_beta = aimd.min_active_beta().unwrap_or(0.0);
    if !(sw.rho > 0.0 && sw.rho < min_beta) {
        return Err(Error::ConfigInvalid(format!(
            "switching.rho={} outside (0, min beta={min_beta}): rho must lie in (0, min_i beta_i)",
            sw.rho
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerKind {
    BacklogZero,
    Sum,
    SwitchUp,
    SwitchDown,
}

impl TriggerKind {
    pub fn name(self) -> &'static str {
        match self {
            TriggerKind::BacklogZero => "backlog_zero",
            TriggerKind::Sum => "sum",
            TriggerKind::SwitchUp => "switch_up",
            TriggerKind::SwitchDown => "switch_down",
        }
    }

    pub fn cuts_rates(self) -> bool {
        matches!(self, TriggerKind::BacklogZero | TriggerKind::Sum)
    }
}

impl fmt::Display for TriggerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Rate evolution shared by all intervals: slopes, cuts and caps.
#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub cap: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl Plant {
    pub fn new(aimd: &AimdParams, gamma: &[f64]) -> Self {
        Self {
            alpha: aimd.alpha.clone(),
            beta: aimd.beta.clone(),
            cap: gamma.iter().map(|g| (g - aimd.epsilon).max(0.0)).collect(),
            gamma: gamma.to_vec(),
        }
    }

    fn rate(&self, i: usize, base: f64, s: f64) -> f64 {
        (base + self.alpha[i] * s).min(self.cap[i])
    }

    /// Rates at time `s` after the last event.
    pub fn rates(&self, base: &[f64], s: f64) -> Vec<f64> {
        (0..base.len()).map(|i| self.rate(i, base[i], s)).collect()
    }

    fn clip_time(&self, i: usize, base: f64) -> f64 {
        if base >= self.cap[i] {
            0.0
        } else if self.alpha[i] > 0.0 {
            (self.cap[i] - base) / self.alpha[i]
        } else {
            f64::INFINITY
        }
    }

    /// Affine pieces covering `[s_from, s_from + len]`.
    fn pieces(&self, base: &[f64], s_from: f64, len: f64) -> Vec<Piece> {
        let s_to = s_from + len;
        let clips: Vec<f64> = (0..base.len()).map(|i| self.clip_time(i, base[i])).collect();
        let mut cuts: Vec<f64> = clips.iter().copied().filter(|&c| c > s_from && c < s_to).collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();

        let mut pieces = Vec::with_capacity(cuts.len() + 1);
        let mut start = s_from;
        for end in cuts.into_iter().chain(std::iter::once(s_to)) {
            let rates: Vec<f64> = (0..base.len()).map(|i| self.rate(i, base[i], start)).collect();
            let slopes: Vec<f64> = (0..base.len())
                .map(|i| if start < clips[i] { self.alpha[i] } else { 0.0 })
                .collect();
            pieces.push(Piece { offset: start - s_from, len: end - start, rates, slopes });
            start = end;
        }
        pieces
    }
}

/// Interval on which every rate is affine.
#[derive(Debug)]
struct Piece {
    offset: f64,
    len: f64,
    rates: Vec<f64>,
    slopes: Vec<f64>,
}

impl Piece {
    fn sum(&self) -> f64 {
        self.rates.iter().sum()
    }

    fn sum_slope(&self) -> f64 {
        self.slopes.iter().sum()
    }
}

/// Dispatcher backlog after `h` on a piece, reflected at zero.
fn advance_delta(delta: f64, inflow: f64, sum: f64, sum_slope: f64, h: f64) -> f64 {
    // concave in h, so the running minimum sits at an endpoint
    (delta + (inflow - sum) * h - 0.5 * sum_slope * h * h).max(0.0)
}

/// Node backlog after `h` on a piece, reflected at zero.
fn advance_w(w: f64, u: f64, slope: f64, gamma: f64, h: f64) -> f64 {
    let x = |r: f64| w + (u - gamma) * r + 0.5 * slope * r * r;
    // convex in h: the running minimum is at the vertex or an endpoint
    let vertex = if slope > 0.0 {
        (-(u - gamma) / slope).clamp(0.0, h)
    } else if u < gamma {
        h
    } else {
        0.0
    };
    let low = x(0.0).min(x(vertex)).min(x(h));
    x(h) - low.min(0.0)
}

/// Simulator state right after an event or at any instant between events.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluidState {
    pub t: f64,
    /// Time since the last event.
    pub since_event: f64,
    /// Rates right after the last event.
    pub base: Vec<f64>,
    pub delta: f64,
    pub w: Vec<f64>,
}

impl FluidState {
    pub fn rates(&self, plant: &Plant) -> Vec<f64> {
        plant.rates(&self.base, self.since_event)
    }
}

fn advance(plant: &Plant, state: &FluidState, dt: f64, lambda_active: f64) -> (FluidState, f64) {
    let mut delta = state.delta;
    let mut w = state.w.clone();
    let mut outflow = 0.0;
    if dt > 0.0 {
        for piece in plant.pieces(&state.base, state.since_event, dt) {
            let (sum, slope) = (piece.sum(), piece.sum_slope());
            delta = advance_delta(delta, lambda_active, sum, slope, piece.len);
            outflow += sum * piece.len + 0.5 * slope * piece.len * piece.len;
            for (i, wi) in w.iter_mut().enumerate() {
                *wi = advance_w(*wi, piece.rates[i], piece.slopes[i], plant.gamma[i], piece.len);
            }
        }
    }
    let next = FluidState {
        t: state.t + dt,
        since_event: state.since_event + dt,
        base: state.base.clone(),
        delta,
        w,
    };
    (next, outflow)
}

/// Advances the backlogs by `dt` under the current rate evolution.
///
/// Uses the exact integral of the clipped-affine rates and reflects both
/// backlogs at zero.
pub fn integrate_backlogs(plant: &Plant, state: &FluidState, dt: f64, lambda_active: f64) -> FluidState {
    advance(plant, state, dt, lambda_active).0
}

/// Time to the next event and the kinds firing at it, in precedence order.
#[derive(Debug, Clone, PartialEq)]
pub struct Trigger {
    pub dt: f64,
    pub kinds: Vec<TriggerKind>,
}

/// Finds the next event after `state` within `remaining`.
///
/// `lambda` drives the sum trigger, `lambda_active` the backlog. With
/// `switching`, the level says which threshold is being watched.
pub fn next_trigger(
    plant: &Plant,
    state: &FluidState,
    lambda: f64,
    lambda_active: f64,
    switching: Option<(&Switching, ArrivalLevel)>,
    remaining: f64,
) -> Result<Trigger> {
    find_trigger(plant, state, lambda, lambda_active, true, switching, remaining)
}

fn find_trigger(
    plant: &Plant,
    state: &FluidState,
    lambda: f64,
    lambda_active: f64,
    watch_backlog: bool,
    switching: Option<(&Switching, ArrivalLevel)>,
    remaining: f64,
) -> Result<Trigger> {
    use crate::roots::smallest_positive_quadratic_root as root;

    let mut delta = state.delta;
    for piece in plant.pieces(&state.base, state.since_event, remaining) {
        let (sum, slope) = (piece.sum(), piece.sum_slope());
        let inflow = lambda_active - sum;
        let at_start = piece.offset == 0.0;
        let mut found: Vec<(f64, TriggerKind)> = Vec::new();

        if at_start && sum >= lambda {
            found.push((0.0, TriggerKind::Sum));
        } else if slope > 0.0 {
            let x = (lambda - sum) / slope;
            if x <= piece.len {
                found.push((x, TriggerKind::Sum));
            }
        }

        if watch_backlog && (delta > 0.0 || inflow > 0.0) {
            if let Some(x) = root(delta, inflow, slope, piece.len) {
                found.push((x, TriggerKind::BacklogZero));
            }
        }

        if let Some((sw, level)) = switching {
            let (target, kind, crossed) = match level {
                ArrivalLevel::High => (sw.delta_max, TriggerKind::SwitchDown, delta >= sw.delta_max),
                ArrivalLevel::Low => (sw.delta_min, TriggerKind::SwitchUp, delta <= sw.delta_min),
            };
            if at_start && crossed {
                found.push((0.0, kind));
            } else if !crossed {
                if let Some(x) = root(delta - target, inflow, slope, piece.len) {
                    found.push((x, kind));
                }
            }
        }

        if let Some(first) = found.iter().map(|f| f.0).reduce(f64::min) {
            let mut kinds: Vec<TriggerKind> = found
                .iter()
                .filter(|f| f.0 <= first + COINCIDENCE_TOL)
                .map(|f| f.1)
                .collect();
            kinds.sort();
            kinds.dedup();
            return Ok(Trigger { dt: piece.offset + first, kinds });
        }
        delta = advance_delta(delta, lambda_active, sum, slope, piece.len);
    }
    Err(Error::HorizonExceeded { remaining })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimEvent {
    pub t: f64,
    pub kinds: Vec<TriggerKind>,
    pub u_before: Vec<f64>,
    pub u_after: Vec<f64>,
    pub delta: f64,
    /// Time since the previous rate cut, for events that cut rates.
    pub period: Option<f64>,
}

impl SimEvent {
    pub fn kind_label(&self) -> String {
        self.kinds.iter().map(|k| k.name()).collect::<Vec<_>>().join("+")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub u: Vec<f64>,
    pub delta: f64,
    pub w: Vec<f64>,
    pub lambda_active: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimTrace {
    pub events: Vec<SimEvent>,
    pub samples: Vec<Sample>,
    /// Periods between consecutive rate cuts, the first measured from t = 0.
    pub periods: Vec<f64>,
    pub final_rates: Vec<f64>,
}

struct Recorder<'a> {
    plant: &'a Plant,
    sample_dt: f64,
    horizon: f64,
    next_grid: u64,
    trace: SimTrace,
}

impl<'a> Recorder<'a> {
    fn grid_time(&self) -> f64 {
        self.next_grid as f64 * self.sample_dt
    }

    fn push(&mut self, state: &FluidState, lambda_active: f64) {
        self.trace.samples.push(Sample {
            t: state.t,
            u: state.rates(self.plant),
            delta: state.delta,
            w: state.w.clone(),
            lambda_active,
        });
    }

    /// Grid samples strictly before `until`, integrated from `from`.
    fn fill(&mut self, from: &FluidState, until: f64, lambda_active: f64) {
        while self.grid_time() < until && self.grid_time() <= self.horizon {
            let s = integrate_backlogs(self.plant, from, self.grid_time() - from.t, lambda_active);
            self.push(&s, lambda_active);
            self.next_grid += 1;
        }
    }
}

/// Runs the simulation to the configured horizon.
pub fn run(config: &SimConfig) -> Result<SimTrace> {
    config.validate()?;
    let plant = Plant::new(&config.aimd, &config.gamma);
    let base: Vec<f64> = config.initial.u.iter().zip(&plant.beta).map(|(u, b)| b * u).collect();
    let state = FluidState {
        t: 0.0,
        since_event: 0.0,
        base,
        delta: config.initial.delta,
        w: config.initial.w.clone(),
    };
    let mut rec = Recorder {
        plant: &plant,
        sample_dt: config.sample_dt,
        horizon: config.horizon,
        next_grid: 1,
        trace: SimTrace { events: vec![], samples: vec![], periods: vec![], final_rates: vec![] },
    };
    rec.push(&state, config.fleet.lambda);

    let final_state = match config.arrival {
        ArrivalMode::Fluid => run_fluid(config, &plant, state, &mut rec)?,
        ArrivalMode::Poisson { seed } => run_poisson(config, &plant, state, &mut rec, seed)?,
    };
    rec.trace.final_rates = final_state.rates(&plant);
    Ok(rec.trace)
}

struct Modes {
    level: ArrivalLevel,
    lambda: f64,
    switching: Option<Switching>,
    last_cut: f64,
}

impl Modes {
    fn lambda_active(&self) -> f64 {
        match (self.level, &self.switching) {
            (ArrivalLevel::Low, Some(sw)) => sw.rho * self.lambda,
            _ => self.lambda,
        }
    }

    fn watch(&self) -> Option<(&Switching, ArrivalLevel)> {
        self.switching.as_ref().map(|sw| (sw, self.level))
    }

    /// Applies `kinds` at `pre`, returning the post-event state and the event record.
    fn apply(&mut self, plant: &Plant, pre: FluidState, kinds: Vec<TriggerKind>, snap: bool) -> (FluidState, SimEvent) {
        let u_before = pre.rates(plant);
        let cut = kinds.iter().any(|k| k.cuts_rates());
        let u_after: Vec<f64> = if cut {
            u_before.iter().zip(&plant.beta).map(|(u, b)| b * u).collect()
        } else {
            u_before.clone()
        };
        let mut delta = pre.delta;
        for kind in &kinds {
            match (kind, &self.switching) {
                (TriggerKind::BacklogZero, _) if snap => delta = 0.0,
                (TriggerKind::SwitchDown, Some(sw)) => {
                    self.level = ArrivalLevel::Low;
                    if snap {
                        delta = sw.delta_max;
                    }
                }
                (TriggerKind::SwitchUp, Some(sw)) => {
                    self.level = ArrivalLevel::High;
                    if snap {
                        delta = sw.delta_min;
                    }
                }
                _ => {}
            }
        }
        let period = cut.then_some(pre.t - self.last_cut);
        if cut {
            self.last_cut = pre.t;
        }
        let event = SimEvent { t: pre.t, kinds, u_before, u_after: u_after.clone(), delta, period };
        let post = FluidState { t: pre.t, since_event: 0.0, base: u_after, delta, w: pre.w };
        (post, event)
    }
}

fn record_event(rec: &mut Recorder<'_>, event: SimEvent) {
    if let Some(p) = event.period {
        rec.trace.periods.push(p);
    }
    rec.trace.events.push(event);
}

fn run_fluid(config: &SimConfig, plant: &Plant, mut state: FluidState, rec: &mut Recorder<'_>) -> Result<FluidState> {
    let lambda = config.fleet.lambda;
    let mut modes = Modes { level: ArrivalLevel::High, lambda, switching: config.switching, last_cut: 0.0 };
    let mut zero_length = 0;

    loop {
        let remaining = config.horizon - state.t;
        if remaining <= 0.0 {
            return Ok(state);
        }
        let lambda_active = modes.lambda_active();
        match next_trigger(plant, &state, lambda, lambda_active, modes.watch(), remaining) {
            Ok(trigger) => {
                rec.fill(&state, state.t + trigger.dt, lambda_active);
                let pre = integrate_backlogs(plant, &state, trigger.dt, lambda_active);
                let (post, event) = modes.apply(plant, pre, trigger.kinds, true);
                record_event(rec, event);
                rec.push(&post, modes.lambda_active());
                if trigger.dt == 0.0 {
                    zero_length += 1;
                    if zero_length > MAX_ZERO_LENGTH_EVENTS {
                        return Err(Error::Stalled { t: post.t });
                    }
                } else {
                    zero_length = 0;
                }
                state = post;
            }
            Err(Error::HorizonExceeded { .. }) => {
                rec.fill(&state, config.horizon + COINCIDENCE_TOL, lambda_active);
                let end = integrate_backlogs(plant, &state, remaining, lambda_active);
                if rec.trace.samples.last().is_some_and(|s| s.t < end.t - COINCIDENCE_TOL) {
                    rec.push(&end, lambda_active);
                }
                return Ok(end);
            }
            Err(e) => return Err(e),
        }
    }
}

/// Poisson arrivals with fluid rates.
///
/// Arrivals over each sampling interval are drawn in one batch and spread
/// evenly across it. Sum events stay exact; backlog and switching events are
/// checked at the sampling grid against the empirical backlog.
fn run_poisson(
    config: &SimConfig,
    plant: &Plant,
    mut state: FluidState,
    rec: &mut Recorder<'_>,
    seed: u64,
) -> Result<FluidState> {
    let lambda = config.fleet.lambda;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut modes = Modes { level: ArrivalLevel::High, lambda, switching: config.switching, last_cut: 0.0 };
    let mut step = 1u64;

    while state.t < config.horizon {
        let t_end = (step as f64 * config.sample_dt).min(config.horizon);
        let h = t_end - state.t;
        let lambda_active = modes.lambda_active();
        let arrivals = if h > 0.0 {
            Poisson::new(lambda_active * h)
                .map_err(|e| Error::ConfigInvalid(format!("poisson arrivals: {e}")))?
                .sample(&mut rng)
        } else {
            0.0
        };
        let start_delta = state.delta;
        let start_t = state.t;
        let mut served = 0.0;
        let mut zero_length = 0;

        loop {
            let remaining = t_end - state.t;
            let trigger = match find_trigger(plant, &state, lambda, lambda_active, false, None, remaining) {
                Ok(t) if state.t + t.dt < t_end => t,
                Ok(_) | Err(Error::HorizonExceeded { .. }) => break,
                Err(e) => return Err(e),
            };
            let (mut pre, out) = advance(plant, &state, trigger.dt, lambda_active);
            served += out;
            let spread = arrivals * (pre.t - start_t) / h;
            pre.delta = (start_delta + spread - served).max(0.0);
            let (post, event) = modes.apply(plant, pre, trigger.kinds, false);
            record_event(rec, event);
            rec.push(&post, lambda_active);
            zero_length = if trigger.dt == 0.0 { zero_length + 1 } else { 0 };
            if zero_length > MAX_ZERO_LENGTH_EVENTS {
                return Err(Error::Stalled { t: post.t });
            }
            state = post;
        }

        let (mut end, out) = advance(plant, &state, t_end - state.t, lambda_active);
        served += out;
        end.delta = (start_delta + arrivals - served).max(0.0);

        let mut kinds = Vec::new();
        if start_delta > 0.0 && end.delta == 0.0 {
            kinds.push(TriggerKind::BacklogZero);
        }
        if let Some(sw) = &config.switching {
            match modes.level {
                ArrivalLevel::High if end.delta >= sw.delta_max => kinds.push(TriggerKind::SwitchDown),
                ArrivalLevel::Low if end.delta <= sw.delta_min => kinds.push(TriggerKind::SwitchUp),
                _ => {}
            }
        }
        state = if kinds.is_empty() {
            end
        } else {
            let (post, event) = modes.apply(plant, end, kinds, false);
            record_event(rec, event);
            post
        };
        rec.push(&state, modes.lambda_active());
        rec.next_grid = step + 1;
        step += 1;
    }
    Ok(state)
}

/// Mean sojourn time of a single-server queue with exponential interarrival
/// (rate `u`) and service (rate `gamma`) times, by the Lindley recursion.
pub fn mm1_empirical_sojourn(u: f64, gamma: f64, customers: usize, seed: u64) -> Result<f64> {
    if !(u > 0.0) || !(gamma > 0.0) {
        return Err(Error::ConfigInvalid(format!("rates must be positive (u={u}, gamma={gamma})")));
    }
    if u >= gamma {
        return Err(Error::Unstable { u, gamma });
    }
    if customers == 0 {
        return Err(Error::ConfigInvalid("need at least one customer".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let interarrival = Exp::new(u).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
    let service = Exp::new(gamma).map_err(|e| Error::ConfigInvalid(e.to_string()))?;

    let mut wait = 0.0f64;
    let mut total = 0.0;
    for _ in 0..customers {
        let s = service.sample(&mut rng);
        total += wait + s;
        let a = interarrival.sample(&mut rng);
        wait = (wait + s - a).max(0.0);
    }
    Ok(total / customers as f64)
}
