//! `spinpair` — radical-pair spin dynamics driver.
//!
//! Reads a sectioned TOML run configuration, simulates the radical pair it
//! describes, and writes CSV tables, an SVG figure, and a sensitivity-audit
//! summary. Commands:
//!
//! * `simulate --field <mT>`: one field point, full time trajectory.
//! * `sweep`: entanglement lifetime over the coarse field grid.
//! * `scan [--curve-csv <path>]`: sensitivity audit (ratio r per field),
//!   either of the simulated curve or of an injected one.
//! * `figure1b`: lifetime-vs-field figure with the two-pass zoom.
//!
//! Exit codes: 0 success, 2 configuration/validation error, 3 I/O error,
//! 4 numerical failure (diagnostics on stderr). Identical configurations
//! produce byte-identical artifacts regardless of `--jobs`.

mod config;
mod emit;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use spinpair::dynamics::{evolve_haberkorn, evolve_unitary, Trajectory};
use spinpair::entanglement::electron_concurrence_trajectory;
use spinpair::magnetometry::{
    bound_violation_scan, field_grid, sweep_lifetime_vs_field, two_pass_sweep, LifetimeCurve,
    MagnetometryError, SensitivityReport, TwoPassSweep,
};

#[derive(Parser)]
#[command(
    name = "spinpair",
    version,
    about = "Radical-pair spin dynamics, entanglement lifetimes, and magnetometric sensitivity audits"
)]
struct Cli {
    /// Run configuration file (TOML). Required.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory (overrides the config's `output.directory`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads for field sweeps (default: available parallelism).
    /// Output bytes do not depend on this.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    /// Print the effective configuration (all defaults applied) as TOML to
    /// stdout and exit without computing anything.
    #[arg(long, global = true)]
    print_config: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one field point and write `trajectory_B<value>.csv`.
    Simulate {
        /// Static magnetic field, mT.
        #[arg(long, value_name = "MT")]
        field: f64,
    },
    /// Sweep the entanglement lifetime over the coarse field grid
    /// (`sweep.csv`).
    Sweep,
    /// Audit the lifetime readout against the fundamental sensitivity limit
    /// (`scan.csv`, `scan_summary.txt`, optional `scan.svg`).
    Scan {
        /// Audit an externally supplied curve (in `sweep.csv` format)
        /// instead of simulating one.
        #[arg(long, value_name = "PATH")]
        curve_csv: Option<PathBuf>,
    },
    /// Lifetime-vs-field figure with the two-pass zoom (`figure1b.csv`,
    /// `figure1b.svg`).
    Figure1b,
}

/// CLI failure carrying its documented exit code.
enum CliError {
    /// Exit 2: configuration or input validation.
    Config(String),
    /// Exit 3: filesystem trouble.
    Io(String),
    /// Exit 4: numerical failure during computation.
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Io(m) | CliError::Numeric(m) => m,
        }
    }
}

fn magnetometry_err(e: MagnetometryError) -> CliError {
    match e {
        MagnetometryError::InvalidParams(_) | MagnetometryError::InvalidGrid(_) => {
            CliError::Config(e.to_string())
        }
        MagnetometryError::TooFewPoints { .. } | MagnetometryError::Entanglement(_) => {
            CliError::Numeric(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot configure {jobs} worker threads: {e}")))?;
    }

    let config_path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config <PATH> is required".into()))?;
    let text = std::fs::read_to_string(config_path).map_err(|e| {
        CliError::Io(format!("cannot read config {}: {e}", config_path.display()))
    })?;
    let config = RunConfig::from_toml(&text).map_err(CliError::Config)?;

    if cli.print_config {
        print!("{}", config.to_toml());
        return Ok(());
    }

    let out_dir = cli
        .out
        .unwrap_or_else(|| PathBuf::from(&config.output.directory));
    std::fs::create_dir_all(&out_dir).map_err(|e| {
        CliError::Io(format!(
            "cannot create output directory {}: {e}",
            out_dir.display()
        ))
    })?;

    match cli.command {
        Command::Simulate { field } => cmd_simulate(&config, &out_dir, field),
        Command::Sweep => cmd_sweep(&config, &out_dir),
        Command::Scan { curve_csv } => cmd_scan(&config, &out_dir, curve_csv.as_deref()),
        Command::Figure1b => cmd_figure1b(&config, &out_dir),
    }
}

fn write_artifact(dir: &Path, name: &str, content: &str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    std::fs::write(&path, content)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn cmd_simulate(config: &RunConfig, out_dir: &Path, field: f64) -> Result<(), CliError> {
    if !(field >= 0.0 && field.is_finite()) {
        return Err(CliError::Config(format!(
            "--field must be non-negative and finite, got {field}"
        )));
    }
    let model = config.build_model().map_err(CliError::Config)?.with_field(field);
    let settings = config.lifetime_settings();
    let times: Vec<f64> = settings.scan_times().collect();

    let rho0 = model.initial_state().map_err(|e| CliError::Numeric(e.to_string()))?;
    let closed = model.k_singlet == 0.0 && model.k_triplet == 0.0;
    let traj = if closed {
        let h = model.hamiltonian().map_err(|e| CliError::Numeric(e.to_string()))?;
        evolve_unitary(&h, &rho0, &times)
    } else {
        evolve_haberkorn(&model, &rho0, &times)
    }
    .map_err(|e| CliError::Numeric(e.to_string()))?;

    // Concurrence of the conditional (trace-normalized) electron state; the
    // series ends early if every pair has reacted.
    let series = electron_concurrence_trajectory(&traj, &model.layout, true)
        .map_err(|e| CliError::Numeric(e.to_string()))?;
    let live = series.values.len();
    let live_traj = if live == traj.len() {
        traj.clone()
    } else {
        Trajectory::new(
            traj.times()[..live].to_vec(),
            traj.states()[..live].to_vec(),
        )
        .map_err(|e| CliError::Numeric(e.to_string()))?
    };
    let probs = spinpair::dynamics::singlet_probability(&live_traj, &model.layout)
        .map_err(|e| CliError::Numeric(e.to_string()))?;

    let rows: Vec<(f64, f64, Option<f64>, Option<f64>)> = traj
        .times()
        .iter()
        .zip(traj.states())
        .enumerate()
        .map(|(i, (&t, state))| {
            if i < live {
                (t, state.trace(), Some(probs[i]), Some(series.values[i]))
            } else {
                (t, state.trace(), None, None)
            }
        })
        .collect();
    let csv = emit::trajectory_csv(&rows);

    let name = format!("trajectory_B{field}.csv");
    let path = write_artifact(out_dir, &name, &csv)?;
    println!("wrote {} ({} rows)", path.display(), rows.len());
    if let Some(t) = series.truncated_at {
        println!("trace vanished at t = {t} ns; later rows have no conditional state");
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

/// Print per-point failures to stderr; returns how many there were.
fn report_point_failures(curve: &LifetimeCurve) -> usize {
    let mut failures = 0;
    for point in curve.points() {
        if let Err(e) = &point.result {
            eprintln!("B = {} mT: {e}", point.field);
            failures += 1;
        }
    }
    failures
}

fn fail_on_point_errors(failures: usize) -> Result<(), CliError> {
    if failures > 0 {
        Err(CliError::Numeric(format!(
            "{failures} sweep point(s) failed to propagate (diagnostics above)"
        )))
    } else {
        Ok(())
    }
}

fn cmd_sweep(config: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let model = config.build_model().map_err(CliError::Config)?;
    let grid = field_grid(config.sweep.b_min, config.sweep.b_max, config.sweep.b_step)
        .map_err(magnetometry_err)?;
    let settings = config.lifetime_settings();
    let curve = sweep_lifetime_vs_field(&model, &grid, &settings).map_err(magnetometry_err)?;
    let failures = report_point_failures(&curve);

    if config.output.formats.csv() {
        let path = write_artifact(out_dir, "sweep.csv", &emit::curve_csv(&curve))?;
        let censored = curve.points().iter().filter(|p| p.lifetime().is_none()).count();
        println!(
            "wrote {} ({} points, {} censored)",
            path.display(),
            curve.len(),
            censored
        );
    }
    fail_on_point_errors(failures)
}

// ---------------------------------------------------------------------------
// scan
// ---------------------------------------------------------------------------

/// One audited pass: a name for reporting, the curve, and its audit.
struct AuditedPass {
    name: String,
    curve: LifetimeCurve,
    report: SensitivityReport,
}

fn audit_passes(
    config: &RunConfig,
    passes: Vec<(String, LifetimeCurve)>,
) -> Result<Vec<AuditedPass>, CliError> {
    let params = config.metrology_params().map_err(CliError::Config)?;
    passes
        .into_iter()
        .map(|(name, curve)| {
            let report = bound_violation_scan(&curve, &params).map_err(magnetometry_err)?;
            Ok(AuditedPass { name, curve, report })
        })
        .collect()
}

fn cmd_scan(config: &RunConfig, out_dir: &Path, curve_csv: Option<&Path>) -> Result<(), CliError> {
    let (passes, failures) = match curve_csv {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
            let curve = emit::parse_curve_csv(&text).map_err(CliError::Config)?;
            (vec![("injected".to_string(), curve)], 0)
        }
        None => {
            let sweep = run_two_pass(config)?;
            let mut failures = report_point_failures(&sweep.coarse);
            let mut passes = vec![("coarse".to_string(), sweep.coarse)];
            if let Some(zoom) = sweep.zoom {
                failures += report_point_failures(&zoom.curve);
                passes.push(("zoom".to_string(), zoom.curve));
            }
            (passes, failures)
        }
    };

    let audited = audit_passes(config, passes)?;
    let named: Vec<(&str, &SensitivityReport)> = audited
        .iter()
        .map(|p| (p.name.as_str(), &p.report))
        .collect();

    if config.output.formats.csv() {
        let path = write_artifact(out_dir, "scan.csv", &emit::scan_csv(&named))?;
        println!("wrote {}", path.display());
    }
    let summary = emit::scan_summary(&named);
    let path = write_artifact(out_dir, "scan_summary.txt", &summary)?;
    println!("wrote {}", path.display());
    print!("{summary}");

    if config.output.formats.svg() {
        let triples: Vec<(&str, &LifetimeCurve, &SensitivityReport)> = audited
            .iter()
            .map(|p| (p.name.as_str(), &p.curve, &p.report))
            .collect();
        let path = write_artifact(out_dir, "scan.svg", &emit::scan_svg(&triples))?;
        println!("wrote {}", path.display());
    }
    fail_on_point_errors(failures)
}

// ---------------------------------------------------------------------------
// figure1b
// ---------------------------------------------------------------------------

fn run_two_pass(config: &RunConfig) -> Result<TwoPassSweep, CliError> {
    let model = config.build_model().map_err(CliError::Config)?;
    let settings = config.lifetime_settings();
    two_pass_sweep(
        &model,
        config.sweep.b_min,
        config.sweep.b_max,
        config.sweep.b_step,
        config.sweep.zoom,
        &settings,
    )
    .map_err(magnetometry_err)
}

fn cmd_figure1b(config: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    if config.model.nuclei != 1 {
        return Err(CliError::Config(format!(
            "figure1b requires exactly one nucleus, config has {}",
            config.model.nuclei
        )));
    }
    let sweep = run_two_pass(config)?;
    let mut failures = report_point_failures(&sweep.coarse);
    if let Some(zoom) = &sweep.zoom {
        failures += report_point_failures(&zoom.curve);
    }

    if config.output.formats.csv() {
        let path = write_artifact(out_dir, "figure1b.csv", &emit::curve_csv(&sweep.coarse))?;
        println!("wrote {} ({} coarse points)", path.display(), sweep.coarse.len());
    }
    if config.output.formats.svg() {
        let zoom_view = sweep
            .zoom
            .as_ref()
            .map(|z| (&z.curve, z.window));
        let path = write_artifact(out_dir, "figure1b.svg", &emit::figure_svg(&sweep.coarse, zoom_view))?;
        println!("wrote {}", path.display());
    }
    match &sweep.zoom {
        Some(z) => println!(
            "zoom pass: center {} mT, window [{}, {}] mT, step {} mT ({} points)",
            z.center,
            z.window.0,
            z.window.1,
            z.step,
            z.curve.len()
        ),
        None => println!("zoom pass skipped (no usable slope on the coarse curve)"),
    }
    fail_on_point_errors(failures)
}
