use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use bolza::central_config::{
    certify_nondegenerate, enumerate_ccs, lambda_of, solve_cc, write_ccs_csv, CentralConfiguration,
};
use bolza::collision::{
    analyze_collisions, analyze_minimizer, write_min_gap_csv, FitOptions, ZoomOptions,
};
use bolza::dynamics::{integrate, IntegrateOptions, Termination, TrajectoryState};
use bolza::harness::{
    emit_report, emit_sweep, load_spec, load_sweep, render_text, run_experiment, sweep,
    sweep_exit_code, ExperimentSpec,
};
use bolza::io::{read_path, to_string_exact, write_path};
use bolza::minimize::minimize;
use bolza::model::{order_of, GapPath, OrderLabel, SystemParams};
use bolza::surgery::{default_delta, normalize_order, plateau_deform};

#[derive(Parser)]
#[command(
    name = "bolza",
    version,
    about = "Action minimizers of the one-dimensional N-body fixed-ends problem"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize the action for the problem of an experiment spec.
    Minimize(RunArgs),
    /// Central configurations.
    #[command(subcommand)]
    Cc(CcCommand),
    /// Detect and fit the collisions of a path.
    Analyze {
        #[arg(long)]
        path: PathBuf,
        /// Re-solve each collision on a finer local grid before fitting (the
        /// path must be a minimizer).
        #[arg(long)]
        zoom: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Path constructions.
    #[command(subcommand)]
    Surgery(SurgeryCommand),
    /// Integrate the equations of motion from a state.
    Integrate {
        #[arg(long, value_delimiter = ',', required = true)]
        masses: Vec<f64>,
        #[arg(
            long,
            value_delimiter = ',',
            required = true,
            allow_hyphen_values = true
        )]
        positions: Vec<f64>,
        #[arg(
            long,
            value_delimiter = ',',
            required = true,
            allow_hyphen_values = true
        )]
        velocities: Vec<f64>,
        #[arg(long)]
        t_end: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long)]
        tol_rel: Option<f64>,
        /// Trajectory CSV; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Experiments with pass/fail checks.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

#[derive(Subcommand)]
enum CcCommand {
    /// Solve for the central configuration with a given order.
    Solve {
        #[arg(long, value_delimiter = ',', required = true)]
        masses: Vec<f64>,
        /// One-based body labels from left to right.
        #[arg(long, value_delimiter = ',', required = true)]
        order: Vec<usize>,
        #[command(flatten)]
        common: CcArgs,
    },
    /// All central configurations, one per order.
    Enum {
        #[arg(long, value_delimiter = ',', required = true)]
        masses: Vec<f64>,
        #[command(flatten)]
        common: CcArgs,
        /// CSV output; JSON on standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check that a configuration is a non-degenerate central configuration.
    Certify {
        #[arg(long, value_delimiter = ',', required = true)]
        masses: Vec<f64>,
        #[arg(
            long,
            value_delimiter = ',',
            required = true,
            allow_hyphen_values = true
        )]
        positions: Vec<f64>,
        #[command(flatten)]
        common: CcArgs,
    },
}

#[derive(Args)]
struct CcArgs {
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Multiplier; defaults to 2 alpha / (2 + alpha)^2 (to U / I for certify).
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Subcommand)]
enum SurgeryCommand {
    /// Hold one gap at a constant level around a collision and compare actions.
    Plateau {
        #[arg(long)]
        path: PathBuf,
        /// One-based gap index: gap k joins bodies k and k + 1.
        #[arg(long)]
        gap: usize,
        #[arg(long)]
        t0: f64,
        /// Plateau level; defaults to 5 collision_tol.
        #[arg(long)]
        delta: Option<f64>,
        /// Deformed path (JSON); the report goes to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Relabel an equal-mass path so the order never changes.
    Normalize {
        #[arg(long)]
        path: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum ExperimentCommand {
    Run(RunArgs),
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        parallelism: Option<usize>,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

/// Overrides applied on top of a spec file.
#[derive(Args, Clone)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    tol_collision: Option<f64>,
    #[arg(long)]
    tol_grad: Option<f64>,
    #[arg(long)]
    tol_eom: Option<f64>,
    #[arg(long)]
    tol_exponent: Option<f64>,
    #[arg(long)]
    tol_cc: Option<f64>,
}

impl Overrides {
    fn apply(&self, spec: &mut ExperimentSpec) -> Result<()> {
        if let Some(s) = self.seed {
            spec.seed = Some(s);
        }
        if let Some(m) = self.grid {
            spec.minimize.grid_size = m;
        }
        if let Some(a) = self.alpha {
            spec.problem.alpha = a;
        }
        if let Some(t) = self.tol_collision {
            spec.problem.collision_tol = Some(t);
        }
        if let Some(t) = self.tol_grad {
            spec.minimize.grad_tol = Some(t);
        }
        if let Some(t) = self.tol_eom {
            spec.checks.eom_residual_max = t;
        }
        if let Some(t) = self.tol_exponent {
            spec.checks.exponent_tol = t;
        }
        if let Some(t) = self.tol_cc {
            spec.checks.cc_residual_max = t;
        }
        spec.validate()?;
        Ok(())
    }
}

fn params(masses: &[f64], alpha: f64) -> Result<SystemParams> {
    Ok(SystemParams::new(masses.to_vec())?.with_alpha(alpha)?)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    say(&format!("{}\n", to_string_exact(value)?))
}

fn say(text: &str) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    stdout.write_all(text.as_bytes())?;
    stdout.flush()?;
    Ok(())
}

fn run_minimize(args: &RunArgs) -> Result<i32> {
    let mut spec = load_spec(&args.spec)?;
    args.overrides.apply(&mut spec)?;
    let p = spec.problem.params()?;
    let (q_i, q_f) = spec.problem.endpoints(&p)?;
    let result = minimize(
        &p,
        &q_i,
        &q_f,
        spec.problem.t1,
        spec.problem.t2,
        &spec.minimize_config(),
    )?;
    say(&format!(
        "action {:.16e} converged {} iterations {} gradient {:.3e} (tol {:.3e})\n",
        result.action_value,
        result.converged,
        result.iterations,
        result.gradient_norm,
        result.grad_tol
    ))?;
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
        write_path(&dir.join("path.json"), &p, &result.path)?;
        result.write_trace_csv(fs::File::create(dir.join("trace.csv"))?)?;
    }
    Ok(if result.converged { 0 } else { 3 })
}

fn run_cc(cmd: &CcCommand) -> Result<i32> {
    match cmd {
        CcCommand::Solve {
            masses,
            order,
            common,
        } => {
            let p = params(masses, common.alpha)?;
            let lambda = common.lambda.unwrap_or(p.collision_lambda());
            let cc = solve_cc(&p, &OrderLabel::from_one_based(order)?, lambda)?;
            print_json(&certify_nondegenerate(&p, &cc)?)?;
        }
        CcCommand::Enum {
            masses,
            common,
            out,
        } => {
            let p = params(masses, common.alpha)?;
            let lambda = common.lambda.unwrap_or(p.collision_lambda());
            let ccs = enumerate_ccs(&p, lambda)?
                .iter()
                .map(|cc| certify_nondegenerate(&p, cc))
                .collect::<bolza::Result<Vec<_>>>()?;
            match out {
                Some(file) => write_ccs_csv(&ccs, fs::File::create(file)?)?,
                None => print_json(&ccs)?,
            }
        }
        CcCommand::Certify {
            masses,
            positions,
            common,
        } => {
            let p = params(masses, common.alpha)?;
            let lambda = match common.lambda {
                Some(l) => l,
                None => lambda_of(&p, positions)?,
            };
            let cc = CentralConfiguration {
                positions: positions.clone(),
                lambda,
                order: order_of(&p, positions).label,
                min_eigen_abs: None,
                nondegenerate: None,
            };
            let cert = certify_nondegenerate(&p, &cc)?;
            print_json(&cert)?;
            return Ok(if cert.nondegenerate == Some(true) {
                0
            } else {
                1
            });
        }
    }
    Ok(0)
}

fn run_analyze(path: &Path, zoom: bool, out: Option<&Path>) -> Result<i32> {
    let (p, dp) = read_path(path)?;
    let report = if zoom {
        analyze_minimizer(&dp, &p, &FitOptions::default(), &ZoomOptions::default())
    } else {
        analyze_collisions(&dp, &p, &FitOptions::default())
    };
    print_json(&report)?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("collisions.json"), to_string_exact(&report)?)?;
        write_min_gap_csv(&dp, fs::File::create(dir.join("min_gap.csv"))?)?;
    }
    Ok(0)
}

fn run_surgery(cmd: &SurgeryCommand) -> Result<i32> {
    match cmd {
        SurgeryCommand::Plateau {
            path,
            gap,
            t0,
            delta,
            out,
        } => {
            let (p, dp) = read_path(path)?;
            if *gap == 0 {
                bail!("gap indices are one-based");
            }
            let delta = delta.unwrap_or(default_delta(&p));
            let outcome = plateau_deform(&p, &GapPath::from_path(&dp), gap - 1, *t0, delta)?;
            print_json(&outcome.report())?;
            if let Some(file) = out {
                write_path(file, &p, &outcome.path)?;
            }
        }
        SurgeryCommand::Normalize { path, out } => {
            let (p, dp) = read_path(path)?;
            let norm = normalize_order(&p, &dp)?;
            write_path(out, &p, &norm.path)?;
            say(&format!(
                "reference order {}; {} section(s); {} crossing node(s) inserted; max jump {:.3e}\n",
                norm.reference,
                norm.sections.len(),
                norm.inserted.len(),
                norm.max_jump
            ))?;
        }
    }
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn run_integrate(
    masses: &[f64],
    positions: &[f64],
    velocities: &[f64],
    t_end: f64,
    alpha: f64,
    tol_rel: Option<f64>,
    out: Option<&Path>,
) -> Result<i32> {
    let p = params(masses, alpha)?;
    let state = TrajectoryState {
        time: 0.0,
        positions: positions.to_vec(),
        velocities: velocities.to_vec(),
    };
    let mut opts = IntegrateOptions::default();
    if let Some(r) = tol_rel {
        opts.rtol = r;
    }
    let tr = integrate(&p, &state, t_end, &opts)?;
    match out {
        Some(file) => tr.write_csv(&p, fs::File::create(file)?)?,
        None => tr.write_csv(&p, std::io::stdout().lock())?,
    }
    log::info!("energy drift {:.3e}", tr.energy_drift(&p)?);
    Ok(match tr.termination {
        Termination::Completed => 0,
        Termination::CollisionApproach { time, gap } => {
            eprintln!("halted at t = {time}: gap {gap:.3e} below collision_tol");
            0
        }
        Termination::StepLimit { time } => {
            eprintln!("step limit reached at t = {time}");
            3
        }
    })
}

fn run_experiment_cmd(cmd: &ExperimentCommand) -> Result<i32> {
    match cmd {
        ExperimentCommand::Run(args) => {
            let mut spec = load_spec(&args.spec)?;
            args.overrides.apply(&mut spec)?;
            let report = run_experiment(&spec);
            say(&render_text(&report))?;
            if let Some(dir) = args.out.as_ref().or(spec.output.as_ref()) {
                emit_report(&report, dir).with_context(|| format!("writing {}", dir.display()))?;
            }
            Ok(report.status.exit_code())
        }
        ExperimentCommand::Sweep {
            spec,
            out,
            parallelism,
            overrides,
        } => {
            let mut sw = load_sweep(spec)?;
            for s in &mut sw.experiments {
                overrides.apply(s)?;
            }
            let threads = parallelism.or(sw.parallelism).unwrap_or(1);
            let reports = sweep(&sw.experiments, threads)?;
            for r in &reports {
                say(&render_text(r))?;
            }
            emit_sweep(&reports, out)?;
            Ok(sweep_exit_code(&reports))
        }
    }
}

fn run(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Minimize(args) => run_minimize(args),
        Command::Cc(cmd) => run_cc(cmd),
        Command::Analyze { path, zoom, out } => run_analyze(path, *zoom, out.as_deref()),
        Command::Surgery(cmd) => run_surgery(cmd),
        Command::Integrate {
            masses,
            positions,
            velocities,
            t_end,
            alpha,
            tol_rel,
            out,
        } => run_integrate(
            masses,
            positions,
            velocities,
            *t_end,
            *alpha,
            *tol_rel,
            out.as_deref(),
        ),
        Command::Experiment(cmd) => run_experiment_cmd(cmd),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BOLZA_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e)
            if e.downcast_ref::<std::io::Error>().map(|e| e.kind())
                == Some(ErrorKind::BrokenPipe) =>
        {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
