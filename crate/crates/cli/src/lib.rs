//! Command-line front end for kinoplan.
//!
//! Exit codes: 0 success, 1 I/O, parse or usage error, 2 planning failure or
//! simulation timeout, 3 collision.

pub mod bench;
pub mod output;
pub mod render;
pub mod scenario_file;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use kinoplan_core::costmap::{
    build_costmap, Bounds, InflationParams, DEFAULT_PADDING, DEFAULT_RESOLUTION,
};
use kinoplan_core::planner::{
    PlanFailure, Planner, PlannerConfig, PlannerError, Scenario, ScenarioError, SimStatus,
};
use thiserror::Error;

pub use bench::{bench, BenchReport};
pub use output::{read_trace, write_trace, PlanDocument, TraceLine};
pub use render::{load_render_input, render_svg, RenderInput};
pub use scenario_file::{parse_scenario, parse_scenario_str, write_scenario, ScenarioFile};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{}: {source}", path.display())]
    Invalid {
        path: PathBuf,
        source: ScenarioError,
    },
    #[error("{}: {message}", path.display())]
    Input { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error("planning failed: {0}")]
    Plan(#[from] PlanFailure),
    #[error("simulation timed out before reaching the goal")]
    Timeout,
    #[error("vehicle collided with an obstacle")]
    Collision,
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Plan(_) | CliError::Timeout => 2,
            CliError::Collision => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "kinoplan",
    version,
    about = "Timed trajectory planning among moving obstacles"
)]
pub struct Cli {
    /// Seed for simulated detection noise.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for candidate optimization. `bench` defaults to 1.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plan once from the scenario start and write the result as JSON.
    Plan {
        file: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Leave out wall-clock timing so repeated runs are byte-identical.
        #[arg(long)]
        no_timing: bool,
        /// Also write the inflated costmap at t = 0 as a PGM image.
        #[arg(long)]
        costmap: Option<PathBuf>,
    },
    /// Run the closed-loop replanning simulation and write an NDJSON trace.
    Simulate {
        file: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Draw a plan or trace file as SVG.
    Render {
        file: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Time repeated single-shot plans.
    Bench {
        file: PathBuf,
        #[arg(short = 'n', long, default_value_t = 100)]
        repetitions: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `data` to `path`, or to stdout when no path is given.
fn emit(path: Option<&Path>, data: &[u8]) -> Result<(), CliError> {
    let result = match path {
        Some(p) => fs::write(p, data),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(data).and_then(|_| out.flush())
        }
    };
    result.map_err(|source| CliError::Io {
        path: path.map_or_else(|| PathBuf::from("<stdout>"), Path::to_path_buf),
        source,
    })
}

fn write_costmap(sc: &Scenario, path: &Path) -> Result<(), CliError> {
    let points = sc
        .obstacles
        .iter()
        .map(|o| o.position)
        .chain([sc.start, sc.goal]);
    let bounds = Bounds::around(points, DEFAULT_PADDING).expect("start and goal are finite");
    let grid = build_costmap(
        &sc.obstacles,
        0.0,
        bounds,
        DEFAULT_RESOLUTION,
        &InflationParams::default(),
    )
    .map_err(|e| CliError::Usage(format!("costmap: {e}")))?;
    let io_err = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    grid.write_pgm(&mut out).map_err(io_err)?;
    out.flush().map_err(io_err)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let config = PlannerConfig {
        threads: cli.threads,
        ..PlannerConfig::default()
    };
    match cli.command {
        Command::Plan {
            file,
            output,
            no_timing,
            costmap,
        } => {
            let sc = parse_scenario(&file)?;
            if let Some(path) = costmap {
                write_costmap(&sc, &path)?;
            }
            let planner = Planner::new(sc.clone(), config)?;
            let plan = planner.plan_once(sc.start, &sc.obstacles)?;
            log::info!(
                "{} candidates, chose {} ({} states, eta {:.2} s) in {:.2} ms",
                plan.candidates.len(),
                plan.chosen_index,
                plan.state_count,
                plan.eta,
                plan.plan_time
            );
            emit(
                output.as_deref(),
                PlanDocument::new(&sc, &plan, !no_timing)
                    .to_json()
                    .as_bytes(),
            )
        }
        Command::Simulate { file, output } => {
            let sc = parse_scenario(&file)?;
            let planner = Planner::new(sc, config)?;
            let trace = planner.simulate(cli.seed);
            let mut buf = Vec::new();
            write_trace(&trace, &mut buf).expect("writing to memory");
            emit(output.as_deref(), &buf)?;
            log::info!(
                "simulation ended: {:?} after {} replans",
                trace.summary.status,
                trace.summary.replans
            );
            match trace.summary.status {
                SimStatus::Reached => Ok(()),
                SimStatus::Timeout => Err(CliError::Timeout),
                SimStatus::Collision => Err(CliError::Collision),
            }
        }
        Command::Render { file, output } => {
            let text = read(&file)?;
            let input = load_render_input(&text).map_err(|message| CliError::Input {
                path: file,
                message,
            })?;
            emit(Some(&output), render_svg(&input).as_bytes())
        }
        Command::Bench {
            file,
            repetitions,
            output,
        } => {
            let sc = parse_scenario(&file)?;
            let config = PlannerConfig {
                threads: Some(cli.threads.unwrap_or(1)),
                ..config
            };
            let report = bench(&sc, &config, repetitions)?;
            let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
            json.push('\n');
            emit(output.as_deref(), json.as_bytes())
        }
    }
}
