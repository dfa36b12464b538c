use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aerial_pickup::sim::{self, scenarios, Report, Scenario, SimError};
use clap::{Args, Parser, Subcommand};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

/// Multi-agent aerial search, pickup and delivery simulator.
#[derive(Parser)]
#[command(name = "pickup-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a built-in scenario or a scenario file.
    Run(RunOptions),
    /// List the built-in scenarios.
    List,
    /// Check a scenario without running it.
    Validate {
        #[arg(long)]
        scenario: String,
    },
    /// Print a scenario as JSON, e.g. as a starting point for a file.
    Show {
        #[arg(long)]
        scenario: String,
    },
    /// Detection error over image position and altitude.
    DetectionMap(OutputOptions),
}

#[derive(Args)]
struct RunOptions {
    /// Built-in scenario name or path to a JSON scenario file.
    #[arg(long)]
    scenario: String,
    #[command(flatten)]
    output: OutputOptions,
}

#[derive(Args)]
struct OutputOptions {
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, env = "PICKUP_SIM_OUT", default_value = "out")]
    out: PathBuf,
    /// Suppress the metrics summary.
    #[arg(long)]
    quiet: bool,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => Failure::Config(c.to_string()),
            SimError::Io(io) => Failure::Runtime(io.to_string()),
        }
    }
}

fn resolve(name: &str) -> Result<Scenario, Failure> {
    if let Some(s) = scenarios::builtin(name) {
        return Ok(s);
    }
    let path = Path::new(name);
    if !path.exists() {
        return Err(Failure::Config(format!(
            "`{name}` is neither a built-in scenario ({}) nor an existing file",
            scenarios::NAMES.join(", ")
        )));
    }
    Scenario::from_path(path).map_err(|e| Failure::Config(e.to_string()))
}

fn summary(report: &Report) -> String {
    match report {
        Report::Mission(m) => {
            let min_d = m.min_pairwise_distance.map_or("n/a".to_string(), |d| format!("{d:.3} m"));
            format!(
                "{}: delivered {}/{} in {:.2} s, min distance {}, coverage {:.1}%, grasps {} ({} failed)",
                m.scenario,
                m.objects_delivered,
                m.objects,
                m.sim_time,
                min_d,
                100.0 * m.coverage_fraction,
                m.grasp_attempts,
                m.grasp_failures
            )
        }
        Report::FusionEval(r) => format!(
            "{}: median RMSE fused {:.3} m, odometry {:.3} m, fixes {:.3} m over {} seeds",
            r.scenario,
            r.median_fused_rmse,
            r.median_odometry_rmse,
            r.median_gps_rmse,
            r.seeds.len()
        ),
        Report::DetectionMap(r) => format!(
            "{}: median error center {:.4} m, border {:.4} m, blank cells {} ({} on the border)",
            r.scenario, r.median_center_error, r.median_border_error, r.blank_cells, r.blank_border_cells
        ),
    }
}

fn execute(mut scenario: Scenario, opts: &OutputOptions) -> Result<(), Failure> {
    if let Some(seed) = opts.seed {
        scenario.set_seed(seed);
    }
    let report = sim::run_scenario(scenario, &opts.out)?;
    if !opts.quiet {
        println!("{}", summary(&report));
        println!("outputs written to {}", opts.out.display());
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run(opts) => execute(resolve(&opts.scenario)?, &opts.output),
        Command::List => {
            for name in scenarios::NAMES {
                println!("{name}");
            }
            Ok(())
        }
        Command::Validate { scenario } => {
            let s = resolve(&scenario)?;
            println!("{}: ok", s.name());
            Ok(())
        }
        Command::Show { scenario } => {
            println!("{}", resolve(&scenario)?.to_json());
            Ok(())
        }
        Command::DetectionMap(opts) => execute(resolve("detection-map")?, &opts),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("run failed: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
