//! `roadmtt` command line: road compilation, single experiments and parameter sweeps.
//!
//! Parameter precedence: command-line flags, then the scenario file, then built-in defaults.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::constraints::ConstraintCase;
use crate::roadmap::RoadFile;
use crate::sim::{run_monte_carlo, write_outputs, MeanStd, Scenario};
use crate::Error;

#[derive(Debug, Parser)]
#[command(name = "roadmtt", version, about = "Road-constrained multi-target tracking experiments")]
pub struct Cli {
    /// Worker threads for Monte-Carlo runs (default: logical cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct RunArgs {
    /// Scenario JSON; omitted keys take built-in defaults. Without it, the built-in scenario is used.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub mc_runs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compile road center-lines into a segment map.
    CompileRoad {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 6)]
        np: usize,
        /// Maximum heading change per segment (degrees).
        #[arg(long, default_value_t = 3.0)]
        delta_m: f64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Run one Monte-Carlo experiment.
    Run {
        #[command(flatten)]
        common: RunArgs,
        #[arg(long)]
        constraint_case: Option<u8>,
        #[arg(long)]
        pu: Option<f64>,
        #[arg(long)]
        td: Option<f64>,
        #[arg(long)]
        delta_m: Option<f64>,
    },
    /// Run one experiment per parameter value and tabulate the results.
    Sweep {
        #[command(flatten)]
        common: RunArgs,
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    #[value(name = "delta_m")]
    DeltaM,
    #[value(name = "p_u")]
    PU,
    #[value(name = "t_d")]
    TD,
    Case,
}

impl SweepParam {
    fn name(self) -> &'static str {
        match self {
            SweepParam::DeltaM => "delta_m",
            SweepParam::PU => "p_u",
            SweepParam::TD => "t_d",
            SweepParam::Case => "case",
        }
    }
}

/// Error carrying the process exit status.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        Self { code: 2, message: msg.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidConfig(_) | Error::Json(_) => 2,
            Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => 2,
            _ => 1,
        };
        Self { code, message: e.to_string() }
    }
}

fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::usage(format!("no such file: {}", path.display())))
    }
}

fn load_scenario(args: &RunArgs) -> Result<Scenario, CliError> {
    let mut sc = match &args.scenario {
        Some(p) => {
            require_file(p)?;
            Scenario::load(p).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?
        }
        None => Scenario::reference(),
    };
    if let Some(n) = args.mc_runs {
        sc.mc_runs = n;
    }
    if let Some(s) = args.seed {
        sc.master_seed = s;
    }
    Ok(sc)
}

fn apply(sc: &mut Scenario, param: SweepParam, v: f64) -> Result<(), CliError> {
    match param {
        SweepParam::DeltaM => sc.delta_m_deg = v,
        SweepParam::PU => sc.p_u = v,
        SweepParam::TD => sc.t_d = v,
        SweepParam::Case => {
            if v.fract() != 0.0 || !(0.0..=7.0).contains(&v) {
                return Err(CliError::usage(format!("constraint case must be an integer in 0..=7, got {v}")));
            }
            sc.constraint_case = ConstraintCase::new(v as u8).map_err(CliError::from)?;
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct SweepRow {
    value: f64,
    runs: usize,
    failed: usize,
    #[serde(rename = "OSPA distance")]
    ospa: MeanStd,
    #[serde(rename = "Localization error")]
    loc: MeanStd,
    #[serde(rename = "Cardinality error")]
    card: MeanStd,
}

#[derive(Debug, Serialize)]
struct SweepSummary {
    param: SweepParam,
    mc_runs: usize,
    master_seed: u64,
    rows: Vec<SweepRow>,
}

/// Runs one experiment, writes its outputs and returns (statistics row, number of failed runs).
fn execute(sc: &Scenario, out: &Path, jobs: Option<usize>) -> Result<SweepRow, CliError> {
    sc.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let mc = run_monte_carlo(sc, jobs)?;
    write_outputs(out, &mc)?;
    let s = &mc.stats;
    Ok(SweepRow { value: f64::NAN, runs: s.runs, failed: s.failed_runs.len(), ospa: s.ospa, loc: s.loc, card: s.card })
}

fn print_header(label: &str) {
    println!("{label:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}", "OSPA", "std", "loc", "std", "card", "std");
}

fn print_row(label: &str, r: &SweepRow) {
    println!(
        "{label:>10} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
        r.ospa.mean, r.ospa.std, r.loc.mean, r.loc.std, r.card.mean, r.card.std
    );
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::CompileRoad { input, np, delta_m, output } => {
            require_file(&input)?;
            if np == 0 || !(delta_m > 0.0) {
                return Err(CliError::usage("--np and --delta-m must be positive"));
            }
            let text = std::fs::read_to_string(&input).map_err(Error::from)?;
            let rf = RoadFile::parse(&text).map_err(|e| match e {
                Error::Json(j) => CliError::usage(format!("{}:{}:{}: {j}", input.display(), j.line(), j.column())),
                other => CliError::from(other),
            })?;
            let map = rf.compile(np, delta_m.to_radians()).map_err(|e| CliError::usage(format!("{}: {e}", input.display())))?;
            map.save(&output)?;
            for (road, segs) in map.roads.iter().map(|r| (&r.id, r.segments.len())) {
                println!("road {road}: {segs} segments");
            }
            Ok(())
        }
        Command::Run { common, constraint_case, pu, td, delta_m } => {
            let mut sc = load_scenario(&common)?;
            if let Some(c) = constraint_case {
                apply(&mut sc, SweepParam::Case, c as f64)?;
            }
            if let Some(v) = pu {
                sc.p_u = v;
            }
            if let Some(v) = td {
                sc.t_d = v;
            }
            if let Some(v) = delta_m {
                sc.delta_m_deg = v;
            }
            let row = execute(&sc, &common.out, cli.jobs)?;
            print_header("");
            print_row("", &row);
            if row.failed > 0 {
                return Err(CliError { code: 1, message: format!("{} of {} runs failed", row.failed, sc.mc_runs) });
            }
            Ok(())
        }
        Command::Sweep { common, param, values } => {
            if values.is_empty() {
                return Err(CliError::usage("--values needs at least one value"));
            }
            let base = load_scenario(&common)?;
            let mut rows = Vec::new();
            for &v in &values {
                let mut sc = base.clone();
                apply(&mut sc, param, v)?;
                sc.validate().map_err(|e| CliError::usage(format!("{}={v}: {e}", param.name())))?;
                rows.push((v, sc));
            }
            std::fs::create_dir_all(&common.out).map_err(Error::from)?;
            let mut summary = SweepSummary { param, mc_runs: base.mc_runs, master_seed: base.master_seed, rows: Vec::new() };
            print_header(param.name());
            for (v, sc) in rows {
                let dir = common.out.join(format!("{}_{v}", param.name()));
                let mut row = execute(&sc, &dir, cli.jobs)?;
                row.value = v;
                print_row(&v.to_string(), &row);
                summary.rows.push(row);
            }
            std::fs::write(common.out.join("sweep.json"), serde_json::to_string_pretty(&summary).map_err(Error::from)?)
                .map_err(Error::from)?;
            let failed: usize = summary.rows.iter().map(|r| r.failed).sum();
            if failed > 0 {
                return Err(CliError { code: 1, message: format!("{failed} runs failed across the sweep") });
            }
            Ok(())
        }
    }
}
