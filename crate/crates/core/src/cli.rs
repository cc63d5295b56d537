//! Command-line front end: `simulate`, `sweep` and `verify`.
//!
//! Exit codes: 0 ran to completion, 1 usage or configuration error,
//! 2 a verification threshold was not met.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::engine::{self, run_baseline, run_disg, DisgConfig, RunMode, DEFAULT_MAX_ITERATIONS};
use crate::error::{Error, Result};
use crate::learning::DEFAULT_LOCK_THRESHOLD;
use crate::output::{self, write_atomic, CsvTrace};
use crate::radio::{Action, StrategyProfile};
use crate::scenario::load_scenario;
use crate::verify::{self, EmpiricalDistribution, EquilibriumReport, PowerGrid};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_VERIFY_FAILED: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "bsn-disg",
    version,
    about = "Channel and power game for co-located body sensor networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one seed and write a trace CSV and a summary JSON.
    Simulate(SimulateArgs),
    /// Run the learning game and the baseline for seeds 0..K.
    Sweep(SweepArgs),
    /// Check equilibria by enumeration or on a trace's final profile.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long = "max-iters", default_value_t = DEFAULT_MAX_ITERATIONS)]
    pub max_iters: usize,
    #[arg(long = "lock-threshold", default_value_t = DEFAULT_LOCK_THRESHOLD)]
    pub lock_threshold: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fixed random channels at full power instead of learning.
    #[arg(long)]
    pub baseline: bool,
    #[arg(long, default_value = "trace.csv")]
    pub out: PathBuf,
    /// Defaults to the trace path with a `.json` extension.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value_t = 100)]
    pub seeds: usize,
    #[arg(long, default_value = "sweep.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Check the final profile of this trace instead of enumerating.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Largest allowed unilateral improvement, relative to the deviator's cost.
    #[arg(long, default_value_t = 1e-6)]
    pub eps: f64,
    /// levels, uniform:K or levels+uniform:K. Defaults to levels when
    /// enumerating and levels+uniform:512 for a trace.
    #[arg(long = "power-grid")]
    pub power_grid: Option<PowerGrid>,
    /// Report JSON path.
    #[arg(long, default_value = "report.json")]
    pub out: PathBuf,
}

/// Parses `args` (program name first) and runs the command; returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}

fn check_run_args(run: &RunArgs) -> Result<()> {
    if run.max_iters == 0 {
        return Err(Error::Config("--max-iters must be at least 1".into()));
    }
    Ok(())
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<i32> {
    check_run_args(&args.run)?;
    let scenario = load_scenario(&args.run.scenario)?;
    let trace = if args.baseline {
        run_baseline(&scenario, args.seed, args.run.max_iters)?
    } else {
        run_disg(
            &scenario,
            &DisgConfig {
                seed: args.seed,
                max_iterations: args.run.max_iters,
                lock_threshold: args.run.lock_threshold,
            },
        )?
    };
    let csv = output::trace_csv(&trace)?;
    let json = output::summary_json(&trace)?;
    let summary_path = args
        .summary
        .clone()
        .unwrap_or_else(|| args.out.with_extension("json"));
    write_atomic(&args.out, &csv)?;
    write_atomic(&summary_path, json.as_bytes())?;

    let s = &trace.summary;
    let mode = match trace.mode {
        RunMode::Disg => "disg",
        RunMode::Baseline => "baseline",
    };
    let status = match s.convergence_iter {
        Some(it) => format!("converged at iteration {it}"),
        None if trace.mode == RunMode::Baseline => "no learning".to_string(),
        None => format!("not converged after {} iterations", trace.max_iterations),
    };
    println!(
        "{mode} seed {}: {status}, channels {:?}, avg SINR {:.2} dB (last quartile {:.2} dB)",
        trace.seed, s.final_assignment, s.avg_sinr_db, s.avg_sinr_db_last_quartile
    );
    Ok(EXIT_OK)
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<i32> {
    check_run_args(&args.run)?;
    let scenario = load_scenario(&args.run.scenario)?;
    let report = engine::sweep(
        &scenario,
        args.seeds,
        args.run.max_iters,
        args.run.lock_threshold,
    )?;
    write_atomic(&args.out, output::to_json(&report)?.as_bytes())?;
    println!(
        "{} seeds: convergence rate {:.3}, distinct-channel rate {:.3}, mean SINR gap {:.2} dB (min {:.2} dB)",
        report.seeds, report.convergence_rate, report.distinct_rate, report.mean_gap_db, report.min_gap_db
    );
    Ok(EXIT_OK)
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<i32> {
    if !(args.eps >= 0.0) {
        return Err(Error::Config(format!(
            "--eps must be non-negative, got {}",
            args.eps
        )));
    }
    let scenario = load_scenario(&args.scenario)?;
    let report = match &args.trace {
        Some(path) => {
            let grid = args.power_grid.unwrap_or_default();
            let trace = CsvTrace::read(path)?;
            let profile = trace.final_profile(&scenario)?;
            let candidate = verify::check_profile(&scenario, &profile, &grid)?;
            let learning = trace.learning_len();
            let ce = if learning > 0 {
                let profiles = (0..learning)
                    .map(|k| trace.profile(&scenario, k))
                    .collect::<Result<Vec<_>>>()?;
                let w = 1.0 / learning as f64;
                let empirical =
                    EmpiricalDistribution::new(profiles.into_iter().map(|p| (p, w)).collect());
                Some(verify::check_ce(&empirical, &scenario, &grid)?)
            } else {
                None
            };
            let passed = candidate.is_epsilon_ne(args.eps);
            println!(
                "final profile: max improvement {:e} ({:e} relative), bound {:e}: {}",
                candidate.max_improvement,
                candidate.max_relative_improvement,
                args.eps,
                if passed { "PASS" } else { "FAIL" }
            );
            EquilibriumReport {
                power_grid: grid.to_string(),
                grid_points: grid.powers(&scenario)?.len(),
                pure_ne: None,
                conditions: verify::profile_conditions(&scenario, &profile),
                candidate: Some(candidate),
                ce,
                eps: args.eps,
                passed,
            }
        }
        None => {
            let grid = args.power_grid.unwrap_or(PowerGrid::Levels);
            let ne = verify::brute_force_ne(&scenario, &grid)?;
            let conditions = match ne.first() {
                Some(first) => {
                    let actions = first
                        .channels
                        .iter()
                        .zip(&first.powers)
                        .map(|(&id, &p)| Action::new(scenario.channel_index(id).unwrap_or(0), p))
                        .collect();
                    verify::profile_conditions(&scenario, &StrategyProfile::new(actions))
                }
                None => Vec::new(),
            };
            println!("{} pure NE on grid {grid}:", ne.len());
            for p in &ne {
                println!("  channels {:?} powers {:?}", p.channels, p.powers);
            }
            let passed = !ne.is_empty();
            EquilibriumReport {
                power_grid: grid.to_string(),
                grid_points: grid.powers(&scenario)?.len(),
                pure_ne: Some(ne),
                candidate: None,
                ce: None,
                conditions,
                eps: args.eps,
                passed,
            }
        }
    };
    write_atomic(&args.out, output::to_json(&report)?.as_bytes())?;
    Ok(if report.passed {
        EXIT_OK
    } else {
        EXIT_VERIFY_FAILED
    })
}
