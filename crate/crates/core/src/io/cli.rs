//! Command-line front end. Exit codes: 0 success, 1 input error, 2 solver
//! failure. Every message goes to standard error.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use crate::coordination::{run, RunMode};
use crate::error::{Error, Result};
use crate::verify::oracle_suite;

use super::{demand_study, load_scenario_document, run_sweep, write_results, SweepSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "flexcoord", version, about = "Hierarchical flexibility coordination of storage fleets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Monolithic,
    Hierarchical,
    Both,
}

impl From<ModeArg> for RunMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Monolithic => RunMode::Monolithic,
            ModeArg::Hierarchical => RunMode::Hierarchical,
            ModeArg::Both => RunMode::Both,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write its result files.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        mode: ModeArg,
        /// Output directory; defaults to the scenario's [output] directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep the capacity split inside each group.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a scenario against several demand series.
    DemandStudy {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        demand: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare the optimiser with the brute-force oracle on random instances.
    Verify {
        #[arg(long, default_value_t = 200)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn exit_code(err: &Error) -> i32 {
    if err.is_solver_failure() {
        EXIT_SOLVER
    } else {
        EXIT_INPUT
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            eprint!("{e}");
            return code;
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(command: Command) -> Result<i32> {
    match command {
        Command::Run {
            scenario,
            mode,
            out,
        } => {
            let doc = load_scenario_document(&scenario)?;
            let out = out
                .or(doc.output_dir)
                .ok_or_else(|| Error::Invalid("no output directory: pass --out or set [output] directory".into()))?;
            let result = run(&doc.scenario, mode.into())?;
            let written = write_results(&doc.scenario, &result, &out)?;
            let m = &result.metrics;
            eprintln!(
                "epsilon_agg = {}, eta_agg = {}, objective monolithic = {}, hierarchical = {}",
                show(m.epsilon_agg),
                show(m.eta_agg),
                show(m.objective_monolithic),
                show(m.objective_hierarchical)
            );
            info!("wrote {} files to {}", written.len(), out.display());
            Ok(EXIT_OK)
        }
        Command::Sweep {
            scenario,
            spec,
            out,
        } => {
            let doc = load_scenario_document(&scenario)?;
            let spec = SweepSpec::load(&spec)?;
            for path in run_sweep(&doc.scenario, &spec, &out)? {
                eprintln!("wrote {}", path.display());
            }
            Ok(EXIT_OK)
        }
        Command::DemandStudy {
            scenario,
            demand,
            out,
        } => {
            let doc = load_scenario_document(&scenario)?;
            for row in demand_study(&doc.scenario, &demand, &out)? {
                eprintln!(
                    "{}: epsilon_agg = {}, eta_agg = {}",
                    row.demand,
                    show(row.epsilon),
                    show(row.eta)
                );
            }
            Ok(EXIT_OK)
        }
        Command::Verify { instances, seed } => {
            let report = oracle_suite(instances, seed)?;
            for (s, c) in &report.failures {
                eprintln!(
                    "seed {s}: solver {} vs oracle {} (slack -{} / +{})",
                    c.solver, c.oracle, c.lower_slack, c.upper_slack
                );
            }
            eprintln!("oracle equivalence: {}/{} instances passed", report.passed, report.instances);
            Ok(if report.failures.is_empty() { EXIT_OK } else { EXIT_SOLVER })
        }
    }
}

fn show(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |x| format!("{x:.6}"))
}
