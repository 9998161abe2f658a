use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod error;

use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "dromor", version, about = "Distributionally robust model order reduction")]
struct Cli {
    /// Solver feasibility and optimality tolerance.
    #[arg(long, global = true, default_value_t = dromor::sdp::DEFAULT_TOL)]
    tol: f64,
    /// Margin for strict LMIs; overrides the problem file.
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Reduce a system and write the model with its certificate.
    Reduce(ReduceArgs),
    /// Print the worst-case trace increment of the problem's ball.
    WorstCase {
        input: PathBuf,
    },
    /// Check a model file against the exact error and, optionally, simulation.
    Validate(ValidateArgs),
    /// Compare the robust reduction with a baseline under the true covariance.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
struct ReduceArgs {
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// Use the ball's center as the known covariance.
    #[arg(long, conflicts_with = "robust")]
    certain: bool,
    /// Reduce against the whole ball (default).
    #[arg(long)]
    robust: bool,
    /// Solve in the given coordinates instead of the observable canonical form.
    #[arg(long)]
    no_canonical: bool,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    problem: PathBuf,
    model: PathBuf,
    /// `true`, `eff`, or a JSON file holding a covariance matrix.
    #[arg(long)]
    q: Option<String>,
    /// Monte Carlo run as `steps,trajectories[,seed]`.
    #[arg(long)]
    mc: Option<String>,
    /// Write the first simulated trajectory as CSV.
    #[arg(long, requires = "mc")]
    trajectory: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Baseline {
    Bt,
}

#[derive(Debug, Args)]
struct CompareArgs {
    problem: PathBuf,
    #[arg(long, value_enum, default_value = "bt")]
    baseline: Baseline,
    /// Summary table destination; stdout when omitted.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Per-step mean squared error of both models.
    #[arg(long)]
    series: Option<PathBuf>,
    /// Simulation behind `--series` as `steps,trajectories[,seed]`.
    #[arg(long, default_value = "500,1000")]
    mc: String,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let global = commands::Global {
        tol: cli.tol,
        epsilon: cli.epsilon,
        seed: cli.seed,
    };
    global.check()?;
    match cli.command {
        Command::Reduce(a) => commands::reduce(
            &global,
            &a.input,
            &a.output,
            !a.certain,
            !a.no_canonical,
        ),
        Command::WorstCase { input } => commands::worst_case(&global, &input),
        Command::Validate(a) => commands::validate(
            &global,
            &a.problem,
            &a.model,
            a.q.as_deref(),
            a.mc.as_deref(),
            a.trajectory.as_deref(),
        ),
        Command::Compare(a) => {
            let Baseline::Bt = a.baseline;
            commands::compare(&global, &a.problem, a.csv.as_deref(), a.series.as_deref(), &a.mc)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if !matches!(e, CliError::BoundViolated) {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
