use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use marsma::config_file::{load_spec, parse_override};
use marsma::fixtures::{read_json, write_json, SolutionFixture};
use marsma::harness::{emit_csv, emit_raw_csv, emit_trace_csv, run_experiment, ExperimentSpec};
use marsma::pool::RayonExecutor;
use marsma::{ClarabelSolver, Error};
use marsma_core::channel::Scenario;
use marsma_core::schemes::{run_scheme, SchemeId, SchemeOutcome};
use marsma_core::seed::rng;

/// Movable-antenna two-layer RSMA max-min fairness toolkit.
#[derive(Parser)]
#[command(name = "marsma", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scheme on one scenario and print the achieved min-rate.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "proposed_dnppso")]
        scheme: String,
        /// Use this scenario instead of sampling one from the seed.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Write the solution fixture (scenario, positions, beamformers,
        /// allocation) here.
        #[arg(long)]
        save: Option<PathBuf>,
        /// Print a JSON summary with the per-user rate report.
        #[arg(long)]
        json: bool,
    },
    /// Monte-Carlo sweep; writes the aggregate CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// CSV output path; stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-realization values.
        #[arg(long)]
        raw: Option<PathBuf>,
        /// Worker threads (defaults to MARSMA_WORKERS, then the core count).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Check a solution fixture against every constraint.
    Validate {
        fixture: PathBuf,
    },
    /// Single outer-loop run; writes the gbest convergence CSV.
    Trace {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "proposed_dnppso")]
        scheme: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Master seed.
    #[arg(long)]
    seed: u64,
    /// Flat TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set n_users=4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

/// Failure classes mapped to exit codes.
enum Failure {
    /// Exit 1: a check failed or a run could not complete.
    Run(String),
    /// Exit 2: bad arguments or configuration.
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Usage(e.to_string()),
            _ => Failure::Run(e.to_string()),
        }
    }
}

impl From<marsma_core::Error> for Failure {
    fn from(e: marsma_core::Error) -> Self {
        match e {
            marsma_core::Error::InvalidConfig(_) | marsma_core::Error::UnknownScheme(_) => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Run(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

fn spec_from(common: &Common) -> Result<ExperimentSpec, Failure> {
    let document = match &common.config {
        Some(p) => Some(
            std::fs::read_to_string(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?,
        ),
        None => None,
    };
    let overrides = common
        .overrides
        .iter()
        .map(|s| parse_override(s))
        .collect::<Result<Vec<_>, _>>()?;
    let mut spec = load_spec(document.as_deref(), &overrides)?;
    spec.seed = common.seed;
    spec.config.validate()?;
    spec.pso.validate()?;
    spec.sca.validate()?;
    Ok(spec)
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::Run(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

/// Scenario and outcome of a single-scheme run.
fn single_run(
    common: &Common,
    scheme: &str,
    scenario: Option<&PathBuf>,
) -> Result<(Scenario, SchemeOutcome), Failure> {
    let spec = spec_from(common)?;
    let id: SchemeId = scheme.parse()?;
    let scenario = match scenario {
        Some(p) => read_json::<Scenario>(p)?,
        None => Scenario::sample(&spec.config, &mut rng(spec.seed))?,
    };
    let pso = marsma_core::swarm::PsoConfig {
        seed: spec.seed,
        ..spec.pso.clone()
    };
    let exec = RayonExecutor::from_env().map_err(Error::from)?;
    let outcome = run_scheme(id, &scenario, &spec.sca, &pso, &ClarabelSolver::default(), &exec)?;
    Ok((scenario, outcome))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            common,
            scheme,
            scenario,
            save,
            json,
        } => {
            let (scenario, out) = single_run(&common, &scheme, scenario.as_ref())?;
            let fixture = SolutionFixture {
                scenario,
                positions: out.positions.clone(),
                clustering: out.inner.clustering.clone(),
                beamformers: out.inner.beamformers.clone(),
                allocation: out.inner.allocation.clone(),
            };
            let violations = fixture.violations()?;
            if json {
                let summary = serde_json::json!({
                    "scheme": out.scheme,
                    "min_rate": out.inner.min_rate,
                    "relaxation_slack": out.inner.relaxation_slack,
                    "fitness": out.fitness,
                    "evaluations": out.evaluations,
                    "sca_iterations": out.inner.sca_iterations(),
                    "sca_status": out.inner.status,
                    "positions": out.positions,
                    "clustering": out.inner.clustering,
                    "eigen_ratios": out.inner.eigen_ratios,
                    "violations": violations,
                    "report": fixture.report()?,
                });
                println!("{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
            } else {
                println!("scheme          {}", out.scheme);
                println!("min_rate        {:.6}", out.inner.min_rate);
                println!("relaxation      {:.6}", out.inner.relaxation_slack);
                println!("evaluations     {}", out.evaluations);
                println!("sca_iterations  {}", out.inner.sca_iterations());
                println!("sca_status      {:?}", out.inner.status);
                println!("positions       {:?}", out.positions.as_slice());
                println!("clusters        {:?}", out.inner.clustering.clusters());
                println!("violations      {}", violations.len());
            }
            if let Some(p) = save {
                write_json(&p, &fixture)?;
            }
            Ok(())
        }
        Command::Sweep {
            common,
            out,
            raw,
            workers,
        } => {
            let spec = spec_from(&common)?;
            let exec = match workers {
                Some(n) => RayonExecutor::new(n),
                None => RayonExecutor::from_env(),
            }
            .map_err(Error::from)?;
            let result = run_experiment(&spec, &ClarabelSolver::default(), &exec)?;
            let failures: usize = result.rows.iter().map(|r| r.failures).sum();
            if failures > 0 {
                eprintln!("{failures} run(s) failed; see the raw dump for details");
            }
            let mut w = output(&out)?;
            emit_csv(&result.rows, &mut w, spec.record_wall_time)?;
            w.flush()?;
            if let Some(p) = raw {
                let f = File::create(&p).map_err(|e| Failure::Run(format!("{}: {e}", p.display())))?;
                emit_raw_csv(&result.raw, BufWriter::new(f))?;
            }
            Ok(())
        }
        Command::Validate { fixture } => {
            let fx: SolutionFixture = read_json(&fixture)?;
            let violations = fx.violations()?;
            if violations.is_empty() {
                println!("feasible; min_rate {:.6}", fx.report()?.min_rate);
                Ok(())
            } else {
                for v in &violations {
                    println!("{:?} by {:e}", v.constraint, v.magnitude);
                }
                Err(Failure::Run(format!("{} violation(s)", violations.len())))
            }
        }
        Command::Trace {
            common,
            scheme,
            out,
        } => {
            let (_, outcome) = single_run(&common, &scheme, None)?;
            if outcome.trace.is_empty() {
                return Err(Failure::Usage(format!("{scheme} has no outer loop to trace")));
            }
            let mut w = output(&out)?;
            emit_trace_csv(&outcome.trace, &mut w)?;
            w.flush()?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
