use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fleet_sched::cli_io::commands::{
    load_allocation, render_design_csv, render_design_curve, render_events_csv, render_mm1_csv, render_solve_csv,
    render_solve_text, render_sweep_csv, render_trace_csv, to_json, SimulateOptions,
};
use fleet_sched::cli_io::{
    cmd_design, cmd_mm1, cmd_simulate, cmd_solve, cmd_sweep, load_config, CliError, ConfigFile, RunManifest,
};

#[derive(Parser)]
#[command(name = "fleet-sched", version, about = "Cost-optimal scheduling and AIMD control for a fleet of nodes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the optimal scheduling rates and capacities.
    Solve {
        #[command(flatten)]
        common: Common,
    },
    /// Solve over a grid of arrival rates.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.5)]
        lambda_min: f64,
        #[arg(long, default_value_t = 12.0)]
        lambda_max: f64,
        #[arg(long, default_value_t = 0.25)]
        lambda_step: f64,
    },
    /// Design AIMD gains whose steady state is the optimal allocation.
    Design {
        #[command(flatten)]
        common: Common,
        /// Comma-separated decrease factors, one per node.
        #[arg(long, value_delimiter = ',')]
        beta: Option<Vec<f64>>,
        #[arg(long)]
        t_star: Option<f64>,
        /// Where to write the alpha*T* against beta table.
        #[arg(long)]
        curve_out: Option<PathBuf>,
    },
    /// Run the event-driven fluid simulation.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// JSON written by `solve --format json`, used as the target allocation.
        #[arg(long)]
        allocation: Option<PathBuf>,
        #[arg(long)]
        events_out: Option<PathBuf>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check the M/M/1 response-time model by Monte Carlo.
    #[command(name = "mm1-check")]
    Mm1Check {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
        #[arg(long, default_value_t = 1_000_000)]
        customers: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, requires = "gamma")]
        u: Option<f64>,
        #[arg(long, requires = "u")]
        gamma: Option<f64>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Let every capacity grow past its upper bound.
    #[arg(long)]
    no_clamp: bool,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

impl Common {
    fn load(&self) -> Result<ConfigFile, CliError> {
        let mut cfg = load_config(&self.config)?;
        if self.no_clamp {
            cfg.solver.clamp_enabled = false;
        }
        if let Some(tol) = self.tol {
            cfg.solver.tol = tol;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Writes CSV outputs and one manifest beside each.
fn write_csvs(mut manifest: RunManifest, files: &[(&Path, String)]) -> Result<(), CliError> {
    manifest.outputs = files.iter().map(|(p, _)| p.display().to_string()).collect();
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    for (path, contents) in files {
        write(path, contents)?;
        write(&manifest_path(path), &json)?;
    }
    Ok(())
}

/// Sends output to `out` when given, else stdout.
fn emit(out: Option<&Path>, contents: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write(path, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn with_outputs(mut manifest: RunManifest, paths: &[Option<&Path>]) -> RunManifest {
    manifest.outputs = paths.iter().flatten().map(|p| p.display().to_string()).collect();
    manifest
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve { common } => {
            let cfg = common.load()?;
            let report = cmd_solve(&cfg)?;
            let manifest = RunManifest::new("solve", &cfg);
            let out = common.out.as_deref();
            match common.format {
                Some(Format::Json) => emit(out, &to_json(&with_outputs(manifest, &[out]), &report)),
                Some(Format::Csv) => match out {
                    Some(path) => write_csvs(manifest, &[(path, render_solve_csv(&report))]),
                    None => emit(None, &render_solve_csv(&report)),
                },
                None => emit(out, &render_solve_text(&report)),
            }
        }
        Command::Sweep { common, lambda_min, lambda_max, lambda_step } => {
            let cfg = common.load()?;
            let rows = cmd_sweep(&cfg, lambda_min, lambda_max, lambda_step)?;
            let manifest = RunManifest::new("sweep", &cfg);
            let out = common.out.as_deref();
            match (common.format, out) {
                (Some(Format::Json), _) => {
                    emit(out, &to_json(&with_outputs(manifest, &[out]), &serde_json::json!({ "rows": rows })))
                }
                (_, Some(path)) => write_csvs(manifest, &[(path, render_sweep_csv(&rows))]),
                (_, None) => emit(None, &render_sweep_csv(&rows)),
            }
        }
        Command::Design { common, beta, t_star, curve_out } => {
            let cfg = common.load()?;
            let report = cmd_design(&cfg, beta, t_star)?;
            let manifest = RunManifest::new("design", &cfg);
            let out = common.out.as_deref();
            let curve = render_design_curve(&report.u_star);
            match common.format {
                Some(Format::Csv) => {
                    let mut files = Vec::new();
                    match out {
                        Some(path) => files.push((path, render_design_csv(&report))),
                        None => emit(None, &render_design_csv(&report))?,
                    }
                    if let Some(path) = curve_out.as_deref() {
                        files.push((path, curve));
                    }
                    write_csvs(manifest, &files)
                }
                _ => {
                    let manifest = with_outputs(manifest, &[out, curve_out.as_deref()]);
                    if let Some(path) = curve_out.as_deref() {
                        write_csvs(manifest.clone(), &[(path, curve)])?;
                    }
                    emit(out, &to_json(&manifest, &report))
                }
            }
        }
        Command::Simulate { common, allocation, events_out, horizon, seed } => {
            let cfg = common.load()?;
            let allocation = allocation.as_deref().map(load_allocation).transpose()?;
            let options = SimulateOptions { allocation, horizon, seed };
            let report = cmd_simulate(&cfg, &options)?;
            let mut manifest = RunManifest::new("simulate", &cfg);
            if let Some(h) = horizon {
                manifest.config.sim.horizon = h;
            }
            if let Some(s) = seed {
                manifest.config.sim.seed = s;
            }
            if cfg.sim.arrival_mode == fleet_sched::cli_io::config::ArrivalKind::Poisson {
                manifest.seed = Some(manifest.config.sim.seed);
            }
            let out = common.out.as_deref();
            let n = cfg.nodes.len();
            if common.format == Some(Format::Json) {
                return emit(out, &to_json(&with_outputs(manifest, &[out]), &report));
            }
            let trace = render_trace_csv(&report.trace, n);
            let events = render_events_csv(&report.trace);
            let mut files = Vec::new();
            match out {
                Some(path) => files.push((path, trace)),
                None => emit(None, &trace)?,
            }
            if let Some(path) = events_out.as_deref() {
                files.push((path, events));
            }
            write_csvs(manifest, &files)
        }
        Command::Mm1Check { config, out, format, customers, seed, u, gamma } => {
            let cfg = config.as_deref().map(load_config).transpose()?;
            let pair = u.zip(gamma);
            let rows = cmd_mm1(cfg.as_ref(), pair, customers, seed)?;
            let out = out.as_deref();
            match (format, &cfg) {
                (Some(Format::Json), Some(cfg)) => {
                    let mut manifest = with_outputs(RunManifest::new("mm1-check", cfg), &[out]);
                    manifest.seed = Some(seed);
                    emit(out, &to_json(&manifest, &serde_json::json!({ "customers": customers, "rows": rows })))
                }
                (Some(Format::Json), None) => {
                    let json = serde_json::to_string_pretty(
                        &serde_json::json!({ "customers": customers, "seed": seed, "rows": rows }),
                    )
                    .expect("rows serialize");
                    emit(out, &(json + "\n"))
                }
                (_, Some(cfg)) if out.is_some() => {
                    let mut manifest = RunManifest::new("mm1-check", cfg);
                    manifest.seed = Some(seed);
                    write_csvs(manifest, &[(out.unwrap(), render_mm1_csv(&rows))])
                }
                _ => emit(out, &render_mm1_csv(&rows)),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fleet-sched: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
