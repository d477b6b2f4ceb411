//! RMS metric, the constant-disturbance campaign, scenario runs and file I/O.

pub mod cli;

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    check_band, detect_cycle, detect_cycle_approx, verify_invariant_set, AnalysisError, BandCheck,
    CycleReport, EntryRegion, InvariantVerdict,
};
use crate::dynamics::{
    simulate, Branch, Controller, DynamicsError, LoopConfig, Trajectory, TrajectoryRecord,
};
use crate::numerics::{round_half_away, NumericsError, Scalar};
use crate::reachability::{GridResult, MaskEntry, ReachabilityError};

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("horizon {horizon} exceeds trajectory length {len}")]
    HorizonTooShort { horizon: u64, len: usize },
    #[error("horizon must be at least 1")]
    EmptyHorizon,
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("CSV line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Reachability(#[from] ReachabilityError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("could not serialize report: {0}")]
    Report(String),
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CampaignError + '_ {
    move |source| CampaignError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// `sqrt((1/H) Σ_{i<H} ρ(e(i))²)`.
pub fn rms_quantized_error(traj: &Trajectory, horizon: u64) -> Result<f64, CampaignError> {
    if horizon == 0 {
        return Err(CampaignError::EmptyHorizon);
    }
    if (traj.len() as u64) < horizon {
        return Err(CampaignError::HorizonTooShort {
            horizon,
            len: traj.len(),
        });
    }
    let sum: u128 = traj.records[..horizon as usize]
        .iter()
        .map(|r| r.rho_e.0.unsigned_abs().pow(2))
        .sum();
    Ok((sum as f64 / horizon as f64).sqrt())
}

/// Constant-disturbance campaign comparing the quantized standard and switched PI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSpec {
    pub d_bars: Vec<Scalar>,
    pub alpha: Scalar,
    pub horizon: u64,
    pub e0: Scalar,
    pub u0: Scalar,
}

impl Default for CampaignSpec {
    fn default() -> Self {
        let mut d_bars = Vec::new();
        for (n, d) in [
            (1, 100),
            (2, 100),
            (4, 100),
            (5, 100),
            (1, 10),
            (2, 10),
            (4, 10),
        ] {
            let x = Scalar::ratio(n, d).expect("constant");
            d_bars.push(x);
            d_bars.push(-x);
        }
        let r = Scalar::sqrt2_minus_1();
        d_bars.push(r);
        d_bars.push(-r);
        CampaignSpec {
            d_bars,
            alpha: Scalar::ratio(11, 8).expect("constant"),
            horizon: 1000,
            e0: Scalar::ZERO,
            u0: Scalar::ZERO,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RmsRow {
    pub d_bar: Scalar,
    pub rms_standard: f64,
    pub rms_switched: f64,
    /// `(rms_standard − rms_switched) / rms_standard`, zero when both vanish.
    pub improvement: f64,
}

/// One row per `d̄`, in the order given. Rows are computed concurrently.
pub fn run_table1(spec: &CampaignSpec) -> Result<Vec<RmsRow>, CampaignError> {
    if spec.horizon == 0 {
        return Err(CampaignError::EmptyHorizon);
    }
    spec.d_bars
        .par_iter()
        .map(|d| {
            let base = LoopConfig::constant(
                Controller::StandardPi,
                spec.alpha,
                *d,
                spec.e0,
                spec.u0,
                spec.horizon,
            );
            let standard = simulate(&base)?;
            let switched = simulate(&base.with_controller(Controller::SwitchedPi))?;
            let rms_standard = rms_quantized_error(&standard, spec.horizon)?;
            let rms_switched = rms_quantized_error(&switched, spec.horizon)?;
            let improvement = if rms_standard > 0.0 {
                (rms_standard - rms_switched) / rms_standard
            } else {
                0.0
            };
            Ok(RmsRow {
                d_bar: *d,
                rms_standard,
                rms_switched,
                improvement,
            })
        })
        .collect()
}

/// Table CSV with the RMS columns rounded to three decimals.
pub fn table1_csv(rows: &[RmsRow]) -> String {
    let mut out = String::from("d_bar,rms_standard,rms_switched,improvement\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.3},{:.3},{:.3}\n",
            r.d_bar.to_f64(),
            r.rms_standard,
            r.rms_switched,
            r.improvement
        ));
    }
    out
}

const TRAJECTORY_HEADER: [&str; 7] = ["k", "e", "u", "rho_e", "rho_u", "d", "mode"];

/// Writes `k,e,u,rho_e,rho_u,d,mode` rows. Exact values print as `n/m`,
/// floats as their shortest round-trip decimal.
pub fn write_trajectory_csv<W: Write>(
    records: &[TrajectoryRecord],
    out: W,
) -> Result<(), CampaignError> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| CampaignError::Csv {
        line: 0,
        message: e.to_string(),
    };
    w.write_record(TRAJECTORY_HEADER).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.k.to_string(),
            r.e.to_string(),
            r.u.to_string(),
            r.rho_e.0.to_string(),
            r.rho_u.0.to_string(),
            r.d.to_string(),
            r.mode.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| CampaignError::Csv {
        line: 0,
        message: e.to_string(),
    })
}

pub fn trajectory_csv_string(records: &[TrajectoryRecord]) -> Result<String, CampaignError> {
    let mut buf = Vec::new();
    write_trajectory_csv(records, &mut buf)?;
    Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
}

/// A CSV cell holding a scalar: `n/m` is exact, anything else a float.
fn parse_cell_scalar(cell: &str) -> Result<Scalar, String> {
    if cell.contains('/') {
        cell.parse::<Scalar>().map_err(|e| e.to_string())
    } else {
        let x: f64 = cell
            .parse()
            .map_err(|e: std::num::ParseFloatError| format!("{cell:?}: {e}"))?;
        Ok(Scalar::float(x))
    }
}

/// Parses CSV produced by [`write_trajectory_csv`].
pub fn read_trajectory_csv<R: Read>(input: R) -> Result<Vec<TrajectoryRecord>, CampaignError> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers().map_err(|e| CampaignError::Csv {
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().ne(TRAJECTORY_HEADER) {
        return Err(CampaignError::Csv {
            line: 1,
            message: format!("expected header {}", TRAJECTORY_HEADER.join(",")),
        });
    }
    let mut records = Vec::new();
    for row in rd.records() {
        let row = row.map_err(|e| CampaignError::Csv {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |col: &str, msg: String| CampaignError::Csv {
            line,
            message: format!("column {col}: {msg}"),
        };
        let int = |i: usize| -> Result<i128, CampaignError> {
            row[i]
                .parse()
                .map_err(|e: std::num::ParseIntError| bad(TRAJECTORY_HEADER[i], e.to_string()))
        };
        let scalar =
            |i: usize| parse_cell_scalar(&row[i]).map_err(|m| bad(TRAJECTORY_HEADER[i], m));
        let k = row[0].parse::<u64>().map_err(|e| bad("k", e.to_string()))?;
        let e = scalar(1)?;
        let u = scalar(2)?;
        let rho_e = int(3)?;
        let rho_u = int(4)?;
        let d = scalar(5)?;
        let mode: Branch = row[6].parse().map_err(|m| bad("mode", m))?;
        if rho_e != round_half_away(&e).0 || rho_u != round_half_away(&u).0 {
            return Err(bad("rho_e/rho_u", "inconsistent with e/u".into()));
        }
        records.push(TrajectoryRecord {
            k,
            e,
            u,
            rho_e: crate::numerics::QuantizedValue(rho_e),
            rho_u: crate::numerics::QuantizedValue(rho_u),
            d,
            mode,
        });
    }
    Ok(records)
}

/// Reads a TOML file into `T`, reporting parse errors with line, column and key.
pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T, CampaignError> {
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    parse_toml(&text).map_err(|message| CampaignError::Config {
        path: path.to_path_buf(),
        message,
    })
}

/// Parses TOML text; errors carry a `line L, column C` prefix when known.
pub fn parse_toml<T: DeserializeOwned>(text: &str) -> Result<T, String> {
    toml::from_str(text).map_err(|e: toml::de::Error| {
        let location = e.span().map(|span| {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            format!("line {line}, column {column}: ")
        });
        format!("{}{}", location.unwrap_or_default(), e.message())
    })
}

pub fn load_config(path: &Path) -> Result<LoopConfig, CampaignError> {
    load_toml(path)
}

/// Analyses attached to a scenario run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theorem1: Option<InvariantVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cycle: Option<CycleReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub band: Option<BandCheck>,
    pub warnings: Vec<String>,
}

/// Tolerance for float-mode recurrence detection.
pub const FLOAT_CYCLE_TOL: f64 = 1e-12;

/// Invariant-set verdict, cycle report and band check for a constant-disturbance run.
/// Time-varying runs get only the warnings.
pub fn analyze(traj: &Trajectory) -> Result<ScenarioReport, CampaignError> {
    let warnings = traj.warnings.iter().map(ToString::to_string).collect();
    let Some(dd) = traj.delta_d() else {
        return Ok(ScenarioReport {
            theorem1: None,
            cycle: None,
            band: None,
            warnings,
        });
    };
    let region = EntryRegion::new(traj.config.alpha, dd);
    let theorem1 = if region.valid && traj.config.controller == Controller::SwitchedPi {
        Some(verify_invariant_set(traj, &region)?)
    } else {
        None
    };
    let cycle = cycles(traj)?;
    let band = check_band(&cycle);
    Ok(ScenarioReport {
        theorem1,
        cycle: Some(cycle),
        band,
        warnings,
    })
}

/// Cycle report of a constant-disturbance run. Exact runs are detected
/// exactly, float runs within [`FLOAT_CYCLE_TOL`].
pub fn cycles(traj: &Trajectory) -> Result<CycleReport, CampaignError> {
    let shifted = traj.to_shifted()?;
    Ok(if shifted.mode() == crate::ArithmeticMode::Exact {
        detect_cycle(&shifted)?
    } else {
        detect_cycle_approx(&shifted, FLOAT_CYCLE_TOL)?
    })
}

pub fn report_toml<T: Serialize>(report: &T) -> Result<String, CampaignError> {
    toml::to_string_pretty(report).map_err(|e| CampaignError::Report(e.to_string()))
}

/// Outcome of [`run_scenario`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutput {
    pub trajectory: Trajectory,
    pub report: Option<ScenarioReport>,
}

/// Loads a scenario config, simulates it and optionally analyses the result.
pub fn run_scenario(
    config_path: &Path,
    with_analysis: bool,
) -> Result<ScenarioOutput, CampaignError> {
    let cfg = load_config(config_path)?;
    let trajectory = simulate(&cfg)?;
    let report = if with_analysis {
        Some(analyze(&trajectory)?)
    } else {
        None
    };
    Ok(ScenarioOutput { trajectory, report })
}

pub fn grid_csv(result: &GridResult) -> String {
    let mut out = String::from("alpha,delta_d,n_inits,n_theorem1,n_alt,n_amp2,n_unresolved\n");
    for c in &result.cells {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.alpha, c.delta_d, c.n_inits, c.n_theorem1, c.n_alt, c.n_amp2, c.n_unresolved
        ));
    }
    out
}

pub fn mask_csv(mask: &[MaskEntry]) -> String {
    let mut out = String::from("alpha,delta_d,in_region\n");
    for m in mask {
        out.push_str(&format!(
            "{},{},{}\n",
            m.alpha,
            m.delta_d,
            u8::from(m.in_region)
        ));
    }
    out
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CampaignError> {
    fs::write(path, contents).map_err(io_error(path))
}
