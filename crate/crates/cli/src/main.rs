//! `sdyn` — scenario runner for the saddle-dynamics toolkit.
//!
//! Exit codes: 0 converged/certified, 2 hypothesis violation (including a
//! failed certificate), 3 parse/config error, 4 numerical failure.

mod runner;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use saddle_dynamics::error::Error;
use saddle_dynamics::selftrig::TriggerRule;

use scenario::{load_scenario, ArmKind, Mode, Scenario};

#[derive(Parser)]
#[command(
    name = "sdyn",
    version,
    about = "Saddle-point dynamics: simulate, certify, disturb, self-trigger"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario (a builtin id: example44 | iss_example |
    /// selftrig_example, or a scenario file path).
    Run(RunArgs),
    /// Certify a program: curvature conditions, constants, property suites.
    Certify(CertifyArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Builtin scenario id or scenario file path.
    scenario: PathBuf,
    /// Override the scenario mode (simulate | iss | selftrig | certify | compare).
    #[arg(long)]
    mode: Option<String>,
    /// Override the integration step.
    #[arg(long)]
    dt: Option<f64>,
    /// Override the horizon.
    #[arg(long)]
    horizon: Option<f64>,
    /// Override β₁.
    #[arg(long)]
    beta1: Option<f64>,
    /// Disturbance arm: zero | exp_decay | const_plus_sin | structured.
    /// Filters the iss mode to one arm; injects the canonical arm into
    /// simulate mode.
    #[arg(long)]
    disturbance: Option<String>,
    /// Output directory (default out/<scenario name>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for sampled diagnostics.
    #[arg(long)]
    seed: Option<u64>,
    /// Triggering rule: exact | constant-free.
    #[arg(long)]
    rule: Option<String>,
}

#[derive(Args)]
struct CertifyArgs {
    /// Builtin program id or program file path.
    program: String,
    #[arg(long, default_value_t = 0.1)]
    beta1: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sampling radius around the saddle for the curvature conditions.
    #[arg(long, default_value_t = 0.45)]
    radius: f64,
    /// Number of ball samples for the curvature conditions.
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn apply_overrides(sc: &mut Scenario, args: &RunArgs) -> Result<(), Error> {
    if let Some(mode) = &args.mode {
        sc.mode = mode.parse()?;
    }
    if let Some(dt) = args.dt {
        sc.dt = dt;
    }
    if let Some(h) = args.horizon {
        sc.horizon = h;
    }
    if let Some(b) = args.beta1 {
        sc.beta1 = b;
    }
    if let Some(d) = &args.disturbance {
        sc.arm_filter = Some(d.parse::<ArmKind>()?);
    }
    if let Some(out) = &args.out {
        sc.out = Some(out.clone());
    }
    if let Some(seed) = args.seed {
        sc.seed = seed;
    }
    if let Some(rule) = &args.rule {
        sc.rule = match rule.as_str() {
            "exact" => TriggerRule::Exact,
            "constant-free" => TriggerRule::ConstantFree,
            other => {
                return Err(Error::Config(format!(
                    "rule must be exact|constant-free, got `{other}`"
                )))
            }
        };
    }
    Ok(())
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Hypothesis(_) => 2,
        Error::Parse { .. }
        | Error::Config(_)
        | Error::DimensionMismatch { .. }
        | Error::Misuse(_)
        | Error::Domain(_)
        | Error::MissingSaddleSet => 3,
        Error::NewtonNoConvergence { .. } | Error::Blowup { .. } | Error::NonSmooth(_) => 4,
        Error::PartitionBoundary => 4,
        Error::Io(_) => 1,
    }
}

fn run(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::Run(args) => {
            let mut sc = load_scenario(&args.scenario)?;
            apply_overrides(&mut sc, &args)?;
            if sc.mode == Mode::Certify {
                // route through the certifier with the scenario's program
                let prog = sc.load_program()?;
                let report = runner::certify_report(&prog, sc.beta1, sc.seed, 0.45, 200)?;
                let out = sc
                    .out
                    .clone()
                    .unwrap_or_else(|| PathBuf::from("out").join(&sc.name));
                std::fs::create_dir_all(&out)?;
                let path = out.join("certify.json");
                std::fs::write(&path, format!("{:#}\n", report))?;
                println!("wrote {}", path.display());
                return Ok(report["certified"].as_bool().unwrap_or(false));
            }
            let outcome = runner::execute(&sc)?;
            println!("wrote {}", outcome.summary_path.display());
            println!(
                "{}: {}",
                sc.name,
                if outcome.ok {
                    "converged/certified"
                } else {
                    "NOT certified"
                }
            );
            Ok(outcome.ok)
        }
        Command::Certify(args) => {
            let prog = scenario::load_program_ref(&args.program)?;
            let report =
                runner::certify_report(&prog, args.beta1, args.seed, args.radius, args.samples)?;
            let out = args
                .out
                .unwrap_or_else(|| PathBuf::from("out").join("certify"));
            std::fs::create_dir_all(&out)?;
            let path = out.join("certify.json");
            std::fs::write(&path, format!("{:#}\n", report))?;
            println!("wrote {}", path.display());
            let ok = report["certified"].as_bool().unwrap_or(false);
            println!("certified: {ok}");
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
