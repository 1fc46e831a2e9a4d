//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fleet_sched::aimd_control::{design_params, fixed_point, AimdParams};
use fleet_sched::cli_io::{cmd_sweep, load_config};
use fleet_sched::cost_model::{g_inverse, node_price, NodeCostParams};
use fleet_sched::fluid_sim::{mm1_empirical_sojourn, run, SimConfig, Switching, TriggerKind};
use fleet_sched::optimal_policy::{kkt_residuals, solve, FleetConfig};

const ALPHA: [f64; 3] = [0.4, 0.6, 0.8];
const BETA: [f64; 3] = [0.4, 0.3, 0.2];
const EPSILON: f64 = 1e-3;

fn nodes() -> Vec<NodeCostParams> {
    vec![
        NodeCostParams { a: 0.1, b: 2.0, c: 0.2, d: 1.0, gamma_max: 5.0 },
        NodeCostParams { a: 0.2, b: 2.0, c: 0.5, d: 2.0, gamma_max: 6.0 },
        NodeCostParams { a: 0.5, b: 2.0, c: 0.7, d: 5.0, gamma_max: 8.0 },
    ]
}

fn fleet() -> FleetConfig {
    FleetConfig::new(nodes(), 8.0, 1.0).with_clamp(false)
}

fn aimd() -> AimdParams {
    AimdParams::new(ALPHA.to_vec(), BETA.to_vec(), EPSILON).unwrap()
}

fn gamma_star() -> Vec<f64> {
    solve(&fleet()).unwrap().gamma_star
}

fn within(x: &[f64], want: &[f64], tol: f64) -> bool {
    x.len() == want.len() && x.iter().zip(want).all(|(a, b)| (a - b).abs() <= tol)
}

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_1() -> Outcome {
    let k = 1.0;
    let theta: Vec<f64> = nodes().iter().map(|p| node_price(p, k).unwrap().theta).collect();
    let theta4 = nodes()
        .iter()
        .map(|p| g_inverse(p, k, p.gamma_max).unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    check(
        within(&theta, &[2.1898, 3.6978, 7.1296], 1e-3) && (theta4 - 112.2).abs() <= 1e-2,
        format!("theta={theta:.5?}, theta_4={theta4:.5}"),
    )
}

fn criterion_2() -> Outcome {
    let a = solve(&fleet()).map_err(|e| e.to_string())?;
    let sum: f64 = a.u_star.iter().sum();
    check(
        (a.theta - 11.648).abs() <= 1e-2
            && within(&a.u_star, &[4.4393, 2.5180, 1.0428], 1e-3)
            && within(&a.gamma_star, &[5.3281, 3.2623, 1.6897], 1e-3)
            && a.n_star == 3
            && (sum - 8.0).abs() < 1e-6,
        format!(
            "theta={:.5}, u*={:.5?}, gamma*={:.5?}, n*={}, |sum u - 8|={:.2e}",
            a.theta,
            a.u_star,
            a.gamma_star,
            a.n_star,
            (sum - 8.0).abs()
        ),
    )
}

fn criterion_3() -> Outcome {
    let cfg = fleet();
    let a = solve(&cfg).map_err(|e| e.to_string())?;
    let report = kkt_residuals(&cfg, &a.u_star, &a.gamma_star, a.theta);
    let worst = report.max_residual();
    check(worst < 1e-6, format!("max residual {worst:.2e}"))
}

/// Best objective over `u_1 = i*h`, `u_2 = lambda - u_1` and each capacity on
/// the grid `j*h`, `u < gamma <= gamma_max`.
fn grid_optimum(nodes: &[NodeCostParams], lambda: f64, k: f64, h: f64) -> f64 {
    let tables: Vec<(Vec<f64>, Vec<f64>)> = nodes
        .iter()
        .map(|p| {
            let m = (p.gamma_max / h + 1e-9).floor() as usize;
            let gs: Vec<f64> = (1..=m).map(|j| j as f64 * h).collect();
            let ks = gs.iter().map(|&g| k * p.phi(g)).collect();
            (gs, ks)
        })
        .collect();
    let node_cost = |i: usize, u: f64| -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        let (gs, ks) = &tables[i];
        let start = gs.partition_point(|&g| g <= u);
        let best = (start..gs.len())
            .map(|j| 1.0 / (gs[j] - u) + ks[j])
            .fold(f64::INFINITY, f64::min);
        u / lambda * best
    };
    let steps = (lambda / h + 1e-9).floor() as usize;
    (0..=steps)
        .map(|i| {
            let u1 = i as f64 * h;
            let u2 = (lambda - u1).max(0.0);
            node_cost(0, u1) + node_cost(1, u2)
        })
        .fold(f64::INFINITY, f64::min)
}

fn random_node(rng: &mut ChaCha8Rng) -> NodeCostParams {
    NodeCostParams {
        a: rng.random_range(0.05..0.5),
        b: rng.random_range(1.5..3.0),
        c: rng.random_range(0.1..1.0),
        d: rng.random_range(0.5..5.0),
        gamma_max: rng.random_range(1.0..3.0),
    }
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = f64::NEG_INFINITY;
    let mut fleets = 0;
    while fleets < 24 {
        let nodes = vec![random_node(&mut rng), random_node(&mut rng)];
        let capacity: f64 = nodes.iter().map(|p| p.gamma_max).sum();
        let lambda = rng.random_range(0.1..0.9) * capacity;
        let k = rng.random_range(0.2..2.0);
        let Ok(a) = solve(&FleetConfig::new(nodes.clone(), lambda, k)) else {
            continue;
        };
        let grid = grid_optimum(&nodes, lambda, k, 1e-3);
        worst = worst.max(a.objective - grid);
        fleets += 1;
    }
    check(worst <= 1e-3, format!("{fleets} fleets, max(solve - grid) = {worst:.2e}"))
}

fn criterion_5() -> Outcome {
    let fp = fixed_point(&aimd(), &gamma_star(), 8.0, None).map_err(|e| e.to_string())?;
    let wide = vec![100.0; 3];
    let closed = 8.0 / ALPHA.iter().zip(BETA).map(|(a, b)| a / (1.0 - b)).sum::<f64>();
    let uncapped = fixed_point(&aimd(), &wide, 8.0, None).map_err(|e| e.to_string())?;
    let uncapped_sum: f64 = uncapped.u_ss.iter().sum();
    check(
        (fp.t_star - 3.1698).abs() <= 1e-3
            && within(&fp.u_ss, &[2.1132, 2.7170, 1.6887], 1e-3)
            && (uncapped.t_star - closed).abs() < 1e-12
            && (uncapped_sum - 8.0).abs() < 1e-9,
        format!(
            "T*={:.5}, u**={:.5?}, closed form {closed:.6} vs {:.6} without caps",
            fp.t_star, fp.u_ss, uncapped.t_star
        ),
    )
}

/// Solves `sum min(alpha*T/(1-beta), gamma-eps) = lambda` by bisection on T.
fn saturated_balance(params: &AimdParams, gamma: &[f64], lambda: f64) -> (f64, Vec<f64>) {
    let rates = |t: f64| -> Vec<f64> {
        (0..gamma.len())
            .map(|i| (params.alpha[i] * t / (1.0 - params.beta[i])).min(gamma[i] - params.epsilon))
            .collect()
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while rates(hi).iter().sum::<f64>() < lambda {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rates(mid).iter().sum::<f64>() < lambda {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (hi, rates(hi))
}

fn criterion_6() -> Outcome {
    let gamma = gamma_star();
    let fp = fixed_point(&aimd(), &gamma, 8.0, Some(1e-10)).map_err(|e| e.to_string())?;
    let (t, u) = saturated_balance(&aimd(), &gamma, 8.0);
    let gap = 8.0 - fp.u_ss.iter().sum::<f64>();
    check(
        gap < 1e-6 && (fp.t_star - t).abs() < 1e-6 && within(&fp.u_ss, &u, 1e-6),
        format!(
            "gap={gap:.2e}, T={:.7} vs oracle {t:.7}, u_ss={:.6?} after {} iterations",
            fp.t_star, fp.u_ss, fp.iterations
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut draws = 0;
    while draws < 100 {
        let n = rng.random_range(1..=4);
        let nodes: Vec<_> = (0..n).map(|_| random_node(&mut rng)).collect();
        let capacity: f64 = nodes.iter().map(|p| p.gamma_max).sum();
        let lambda = rng.random_range(0.05..0.9) * capacity;
        let Ok(target) = solve(&FleetConfig::new(nodes, lambda, rng.random_range(0.2..2.0))) else {
            continue;
        };
        let beta: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.95)).collect();
        let t_star = rng.random_range(0.1..10.0);
        let params = design_params(&target, &beta, t_star, EPSILON).map_err(|e| e.to_string())?;
        let fp = fixed_point(&params, &target.gamma_star, lambda, Some(1e-9)).map_err(|e| e.to_string())?;
        for (u, want) in fp.u_ss.iter().zip(&target.u_star) {
            worst = worst.max((u - want).abs());
        }
        draws += 1;
    }
    check(worst < 1e-6, format!("{draws} draws, max |u_ss - u*| = {worst:.2e}"))
}

fn criterion_8() -> Outcome {
    let gamma = gamma_star();
    let params = aimd();
    let (t_steady, u_steady) = saturated_balance(&params, &gamma, 8.0);
    let capped: Vec<usize> = (0..3).filter(|&i| u_steady[i] >= gamma[i] - EPSILON - 1e-12).collect();
    let horizon = 210.0 * t_steady;
    let trace = run(&SimConfig::new(fleet(), params, gamma.clone(), horizon, 1.0)).map_err(|e| e.to_string())?;
    if trace.periods.len() < 200 {
        return Err(format!("only {} periods", trace.periods.len()));
    }
    let period_err = (199..trace.periods.len())
        .map(|k| (trace.periods[k] - t_steady).abs())
        .fold(0.0, f64::max);
    let mut sum_err: f64 = 0.0;
    let mut cap_err: f64 = 0.0;
    for e in &trace.events {
        if e.kinds.contains(&TriggerKind::Sum) {
            sum_err = sum_err.max((e.u_before.iter().sum::<f64>() - 8.0).abs());
        }
    }
    for e in &trace.events[trace.events.len() - 10..] {
        for &i in &capped {
            cap_err = cap_err.max((e.u_before[i] - (gamma[i] - EPSILON)).abs());
        }
    }
    check(
        period_err < 1e-4 && sum_err < 1e-9 && cap_err < 1e-9 && !capped.is_empty(),
        format!(
            "{} events, max |T_k - {t_steady:.6}| from event 200 = {period_err:.2e}, capped nodes {:?} off by {cap_err:.2e}, pre-event sum error {sum_err:.2e}",
            trace.events.len(),
            capped.iter().map(|i| i + 1).collect::<Vec<_>>()
        ),
    )
}

fn golden_config() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/paper_section5.json")
}

fn criterion_9() -> Outcome {
    let cfg = load_config(&golden_config()).map_err(|e| e.to_string())?;
    let rows = cmd_sweep(&cfg, 0.5, 12.0, 0.25).map_err(|e| e.to_string())?;
    if let Some(bad) = rows.iter().find(|r| r.error.is_some()) {
        return Err(format!("solve failed at lambda={}: {:?}", bad.lambda, bad.error));
    }
    let n: Vec<usize> = rows.iter().map(|r| r.n_star.unwrap()).collect();
    let t: Vec<f64> = rows.iter().map(|r| r.mean_response_time.unwrap()).collect();
    let n_monotone = n.windows(2).all(|w| w[0] <= w[1]);
    let n_covers = (1..=3).all(|k| n.contains(&k));
    let t_rises = t.windows(2).filter(|w| w[1] > w[0]).count();
    let t_decreasing = t_rises == 0;
    let first = |k| rows.iter().find(|r| r.n_star == Some(k)).map(|r| r.lambda);
    check(
        n_monotone && n_covers && t_decreasing,
        format!(
            "{} rows, n* non-decreasing={n_monotone}, n* takes 1,2,3={n_covers} (first at lambda {:?}, {:?}, {:?}); \
             mean response time decreasing={t_decreasing} ({t_rises} increases, {:.4} at lambda=0.5 to {:.4} at lambda=12)",
            rows.len(),
            first(1),
            first(2),
            first(3),
            t[0],
            t[t.len() - 1]
        ),
    )
}

fn criterion_10() -> Outcome {
    let mut cfg = SimConfig::new(fleet(), aimd(), gamma_star(), 500.0, 0.05);
    let sw = Switching { delta_min: 0.0, delta_max: 10.0, rho: 0.1 };
    cfg.switching = Some(sw);
    let trace = run(&cfg).map_err(|e| e.to_string())?;
    let Some(first) = trace
        .events
        .iter()
        .find(|e| e.kinds.iter().any(|k| matches!(k, TriggerKind::SwitchDown | TriggerKind::SwitchUp)))
    else {
        return Err("no threshold crossing".into());
    };
    let t0 = first.t;
    let deltas = trace
        .samples
        .iter()
        .filter(|s| s.t >= t0)
        .map(|s| s.delta)
        .chain(trace.events.iter().filter(|e| e.t >= t0).map(|e| e.delta));
    let (lo, hi) = deltas.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
    let switches = trace
        .events
        .iter()
        .filter(|e| e.kinds.iter().any(|k| matches!(k, TriggerKind::SwitchDown | TriggerKind::SwitchUp)))
        .count();
    check(
        lo >= sw.delta_min - 1e-6 && hi <= sw.delta_max + 1e-6,
        format!("first crossing at t={t0:.4}, {switches} switches, delta in [{lo:.3e}, {hi:.9}] afterwards"),
    )
}

fn criterion_11() -> Outcome {
    let (u, gamma) = (4.4393, 5.3281);
    let empirical = mm1_empirical_sojourn(u, gamma, 1_000_000, 11).map_err(|e| e.to_string())?;
    let analytic = 1.0 / (gamma - u);
    let rel = (empirical - analytic).abs() / analytic;
    check(
        rel < 0.02 && (analytic - 1.1251).abs() < 1e-4,
        format!("empirical {empirical:.4} vs 1/(gamma-u) = {analytic:.4}, relative error {rel:.4}"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("node prices", criterion_1),
        ("optimal solve", criterion_2),
        ("KKT verification", criterion_3),
        ("brute-force optimality", criterion_4),
        ("AIMD single pass", criterion_5),
        ("fixed-point iteration", criterion_6),
        ("design round trip", criterion_7),
        ("simulation convergence", criterion_8),
        ("sweep monotonicity", criterion_9),
        ("backlog boundedness", criterion_10),
        ("response-time model", criterion_11),
    ];
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {} ({name}): {detail} [{secs:.2}s]", i + 1),
            Err(detail) => {
                failures += 1;
                println!("FAIL criterion {} ({name}): {detail} [{secs:.2}s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
