//! `aemod`: plan routing, rebalancing and charging for an electric robotaxi fleet.

mod bundle;
mod render;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aemod_core::planner::PlanReport;
use aemod_core::scenario::FIG2_TABLE1;
use aemod_core::{plan_with_log, Error, PlanOptions, Scenario, ScenarioFile};
use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use bundle::write_atomic;

#[derive(Parser)]
#[command(name = "aemod", version, about = "Congestion-aware routing and charging for electric robotaxi fleets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a scenario and write the result bundle.
    Plan {
        scenario: PathBuf,
        /// Output directory, created if missing.
        #[arg(long, short)]
        out: PathBuf,
        /// Only the congestion-unaware baseline.
        #[arg(long, conflicts_with = "no_charging")]
        baseline_only: bool,
        /// Stop after the congestion-aware routing phase.
        #[arg(long)]
        no_charging: bool,
        /// Cap on schedule/re-route rounds.
        #[arg(long)]
        rounds: Option<usize>,
        /// Seed for randomly drawn private flows, replacing the scenario's.
        #[arg(long)]
        seed: Option<u64>,
        /// Write solver iterations to solver_log.jsonl.
        #[arg(long)]
        solver_log: bool,
    },
    /// Check a scenario without solving it.
    Validate {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Draw one phase of an existing report.
    Render {
        report: PathBuf,
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = PhaseName::P2)]
        phase: PhaseName,
    },
    /// Print the bundled example scenario.
    Fixture {
        /// Write to this file instead of stdout.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PhaseName {
    Baseline,
    P1,
    P2,
}

impl PhaseName {
    fn key(self) -> &'static str {
        match self {
            PhaseName::Baseline => "baseline",
            PhaseName::P1 => "p1",
            PhaseName::P2 => "p2",
        }
    }
}

/// Error with the process exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn input(error: impl Into<anyhow::Error>) -> Self {
        Failure { code: 1, error: error.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Solver { .. } | Error::SolutionQuality(_) | Error::Inconsistent { .. } | Error::Algorithm(_) => 2,
            Error::InfeasibleTrip { .. } => 3,
            Error::Domain(_) | Error::Config(_) | Error::Validation(_) | Error::Structural(_) | Error::Scenario(_) => 1,
        };
        Failure { code, error: e.into() }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn load_scenario(path: &Path, seed: Option<u64>) -> Result<Scenario, Failure> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(Failure::input)?;
    let file = ScenarioFile::from_json(&text)?;
    Ok(file.to_scenario(seed)?)
}

fn run(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Plan { scenario, out, baseline_only, no_charging, rounds, seed, solver_log } => {
            let mut sc = load_scenario(&scenario, seed)?;
            if let Some(r) = rounds {
                if r == 0 {
                    return Err(Failure::input(anyhow::anyhow!("--rounds must be at least 1")));
                }
                sc.pipeline.max_rounds = r;
            }
            let options = if baseline_only {
                PlanOptions { baseline: true, routing: false, charging: false }
            } else {
                PlanOptions { baseline: true, routing: true, charging: !no_charging }
            };
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display())).map_err(Failure::input)?;
            let mut log_lines = String::new();
            let report = plan_with_log(&sc, options, &mut |phase, rec| {
                if solver_log {
                    let line = serde_json::json!({ "phase": phase, "record": rec });
                    log_lines.push_str(&line.to_string());
                    log_lines.push('\n');
                }
            });
            if solver_log {
                write_atomic(&out.join("solver_log.jsonl"), log_lines.as_bytes()).map_err(Failure::input)?;
            }
            let report = report?;
            bundle::write_bundle(&out, &report).map_err(Failure::input)?;
            summarize(&report);
            if let Some(t) = &report.infeasible_trip {
                eprintln!("energy-infeasible: {t}");
                return Ok(3);
            }
            match &report.verdict {
                Some(v) if !v.feasible => {
                    let bad: Vec<String> = v
                        .loops
                        .iter()
                        .enumerate()
                        .filter(|(_, l)| !l.feasible)
                        .map(|(i, l)| match &l.failing_trip {
                            Some(t) => format!("loop {} at {t}", i + 1),
                            None => format!("loop {}", i + 1),
                        })
                        .collect();
                    eprintln!("energy-infeasible after {} rounds: {}", report.rounds.len(), bad.join("; "));
                    Ok(3)
                }
                _ => Ok(0),
            }
        }
        Command::Validate { scenario, seed } => {
            let sc = load_scenario(&scenario, seed)?;
            println!(
                "ok: {} nodes, {} roads, {} demands, {} charging stations",
                sc.network.nodes().len(),
                sc.network.num_roads(),
                sc.demands.len(),
                sc.network.charging_stations().len()
            );
            Ok(0)
        }
        Command::Render { report, output, phase } => {
            let text = fs::read_to_string(&report)
                .with_context(|| format!("reading {}", report.display()))
                .map_err(Failure::input)?;
            let rep: PlanReport = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", report.display()))
                .map_err(Failure::input)?;
            let Some(result) = rep.phase(phase.key()) else {
                return Err(Failure::input(anyhow::anyhow!("report has no {} phase", phase.key())));
            };
            let svg = render::svg(&rep.network, result, bundle::phase_title(phase.key()));
            write_atomic(&output, svg.as_bytes()).map_err(Failure::input)?;
            Ok(0)
        }
        Command::Fixture { out } => {
            match out {
                Some(path) => write_atomic(&path, FIG2_TABLE1.as_bytes()).map_err(Failure::input)?,
                None => print!("{FIG2_TABLE1}"),
            }
            Ok(0)
        }
    }
}

fn summarize(report: &PlanReport) {
    for key in ["baseline", "p1", "p2"] {
        if let Some(p) = report.phase(key) {
            println!(
                "{:<9} cost {:>10.3} h  max ratio {:.3}  mean ratio {:.3}  ({:?}, {} iterations)",
                key, p.exact_objective, p.congestion.max, p.congestion.mean, p.solver.status, p.solver.iterations
            );
        }
    }
    if let Some(s) = &report.schedules {
        println!("{} charging schedules over {} rounds", s.len(), report.rounds.len());
    }
    if let Some(v) = &report.verdict {
        println!("energy feasible: {}", v.feasible);
    }
}
