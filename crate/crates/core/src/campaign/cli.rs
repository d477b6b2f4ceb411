//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::{
    analyze, cycles, grid_csv, load_config, load_toml, mask_csv, report_toml, run_table1,
    table1_csv, trajectory_csv_string, write_file, CampaignError, CampaignSpec,
};
use crate::dynamics::{simulate, LoopConfig, Trajectory};
use crate::numerics::ArithmeticMode;
use crate::reachability::{attraction_region, sweep, GridSpec};

#[derive(Debug, Parser)]
#[command(
    name = "qswitch",
    version,
    about = "Switched PI control of a quantized integrator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Directory for output files (created if missing).
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Override the arithmetic mode of the config.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<ArithmeticMode>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a scenario and write trajectory.csv.
    Simulate {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate and write trajectory.csv plus report.toml (invariant-set verdict, cycle report, band check).
    Analyze {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Detect the limit cycle of a constant-disturbance scenario and write cycles.toml.
    Cycles {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Sweep a grid of (alpha, delta_d) cells; writes grid.csv and mask.csv.
    Sweep {
        /// Grid config; the desk-scale default grid when omitted.
        config: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
        /// Worker threads (0 = one per CPU).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Run the constant-disturbance RMS campaign and write table1.csv.
    Table1 {
        /// Campaign config; the default magnitudes when omitted.
        config: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

fn parse_mode(s: &str) -> Result<ArithmeticMode, String> {
    s.parse()
        .map_err(|e: crate::numerics::NumericsError| e.to_string())
}

/// Runs the CLI and returns the process exit status: 0 on success, 1 on a
/// runtime error, 2 on a usage error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn prepare(common: &Common) -> Result<(), CampaignError> {
    fs::create_dir_all(&common.out).map_err(|source| CampaignError::Io {
        path: common.out.clone(),
        source,
    })
}

fn scenario(path: &Path, common: &Common) -> Result<Trajectory, CampaignError> {
    let mut cfg: LoopConfig = load_config(path)?;
    if let Some(mode) = common.mode {
        cfg.mode = mode;
    }
    let traj = simulate(&cfg)?;
    for w in &traj.warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(traj)
}

fn execute(command: Command) -> Result<(), CampaignError> {
    match command {
        Command::Simulate { config, common } => {
            prepare(&common)?;
            let traj = scenario(&config, &common)?;
            let path = common.out.join("trajectory.csv");
            write_file(&path, &trajectory_csv_string(&traj.records)?)?;
            println!("wrote {} ({} records)", path.display(), traj.len());
        }
        Command::Analyze { config, common } => {
            prepare(&common)?;
            let traj = scenario(&config, &common)?;
            write_file(
                &common.out.join("trajectory.csv"),
                &trajectory_csv_string(&traj.records)?,
            )?;
            let report = analyze(&traj)?;
            if let Some(v) = &report.theorem1 {
                println!("theorem1: {}", v.status);
            }
            if let Some(c) = &report.cycle {
                println!("cycle: periodic={} n={} m={}", c.periodic, c.n, c.m);
            }
            if let Some(b) = &report.band {
                println!("band {}: inside={}", b.band, b.inside);
            }
            write_file(&common.out.join("report.toml"), &report_toml(&report)?)?;
        }
        Command::Cycles { config, common } => {
            prepare(&common)?;
            let traj = scenario(&config, &common)?;
            let report = cycles(&traj)?;
            println!(
                "periodic={} n={} m={} entry_step={}",
                report.periodic, report.n, report.m, report.entry_step
            );
            write_file(&common.out.join("cycles.toml"), &report_toml(&report)?)?;
        }
        Command::Sweep {
            config,
            common,
            jobs,
        } => {
            prepare(&common)?;
            let mut spec = match &config {
                Some(path) => load_toml::<GridSpec>(path)?,
                None => GridSpec::desk_scale(),
            };
            if let Some(mode) = common.mode {
                spec.mode = mode;
            }
            let result = sweep(&spec, jobs)?;
            let mask = attraction_region(&result);
            write_file(&common.out.join("grid.csv"), &grid_csv(&result))?;
            write_file(&common.out.join("mask.csv"), &mask_csv(&mask))?;
            let inside = mask.iter().filter(|m| m.in_region).count();
            println!("{} cells, {} fully attracted", mask.len(), inside);
        }
        Command::Table1 { config, common } => {
            prepare(&common)?;
            let spec = match &config {
                Some(path) => load_toml::<CampaignSpec>(path)?,
                None => CampaignSpec::default(),
            };
            let rows = run_table1(&spec)?;
            let csv = table1_csv(&rows);
            write_file(&common.out.join("table1.csv"), &csv)?;
            print!("{csv}");
        }
    }
    Ok(())
}
