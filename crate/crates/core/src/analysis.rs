//! Invariant-set predicates and limit-cycle prediction/detection for the
//! switched loop in shifted coordinates `(e, ū)`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{DynamicsError, QuantizedPair, Trajectory};
use crate::numerics::{round_half_away, sign, ArithmeticMode, NumericsError, Rational, Scalar};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("alpha = {0} is outside (1, 3/2); the entry region is undefined")]
    InvalidRegion(Scalar),
    #[error("the disturbance rounding error is zero")]
    ZeroDisturbance,
    #[error("{what} = {value} is out of range: {expected}")]
    OutOfRange {
        what: &'static str,
        value: Scalar,
        expected: &'static str,
    },
    #[error("exact arithmetic required, got a float {0}")]
    FloatInput(&'static str),
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("trajectory needs a constant disturbance")]
    NonConstantDisturbance,
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

fn three_halves() -> Scalar {
    Scalar::ratio(3, 2).expect("constant")
}

/// Parameters of the entry region `−1/2 < e < 1/2`, `1 ≤ α − ū·sign(Δd) < 3/2`,
/// `−1/2 < ū < 1/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntryRegion {
    pub alpha: Scalar,
    pub delta_d: Scalar,
    /// Whether `1 < α < 3/2`.
    pub valid: bool,
}

impl EntryRegion {
    pub fn new(alpha: Scalar, delta_d: Scalar) -> Self {
        let valid = alpha > Scalar::ONE && alpha < three_halves();
        EntryRegion {
            alpha,
            delta_d,
            valid,
        }
    }

    pub fn contains(&self, e: &Scalar, u_bar: &Scalar) -> Result<bool, AnalysisError> {
        in_entry_region(e, u_bar, self)
    }
}

pub fn in_entry_region(
    e: &Scalar,
    u_bar: &Scalar,
    region: &EntryRegion,
) -> Result<bool, AnalysisError> {
    if !region.valid {
        return Err(AnalysisError::InvalidRegion(region.alpha));
    }
    let half = Scalar::HALF;
    let neg_half = Scalar::ratio(-1, 2).expect("constant");
    let e_ok = *e > neg_half && *e < half;
    let u_ok = *u_bar > neg_half && *u_bar < half;
    if !(e_ok && u_ok) {
        return Ok(false);
    }
    let s = sign(&region.delta_d) as i128;
    let gain = region.alpha.checked_sub(&u_bar.checked_mul_int(s)?)?;
    Ok(gain >= Scalar::ONE && gain < three_halves())
}

/// `{(0,0), (s,−s)}` with `s = sign(Δd)`; just `{(0,0)}` when `Δd = 0`.
pub fn minimal_invariant_pairs(delta_d: &Scalar) -> BTreeSet<QuantizedPair> {
    let s = sign(delta_d) as i128;
    [QuantizedPair::new(0, 0), QuantizedPair::new(s, -s)]
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictStatus {
    Pass,
    Fail,
    NotEntered,
}

impl fmt::Display for VerdictStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VerdictStatus::Pass => "pass",
            VerdictStatus::Fail => "fail",
            VerdictStatus::NotEntered => "not-entered",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantVerdict {
    pub status: VerdictStatus,
    /// First step at which the state lies in the entry region.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entry_step: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub violation_step: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub violating_pair: Option<QuantizedPair>,
    pub invariant_pairs: Vec<QuantizedPair>,
}

fn shifted(traj: &Trajectory) -> Result<Trajectory, AnalysisError> {
    if traj.config.disturbance.as_constant().is_none() {
        return Err(AnalysisError::NonConstantDisturbance);
    }
    Ok(traj.to_shifted()?)
}

/// First step at which the shifted state is inside the entry region.
pub fn find_entry_step(
    traj: &Trajectory,
    region: &EntryRegion,
) -> Result<Option<u64>, AnalysisError> {
    let traj = shifted(traj)?;
    for r in &traj.records {
        if in_entry_region(&r.e, &r.u, region)? {
            return Ok(Some(r.k));
        }
    }
    Ok(None)
}

/// Checks that every quantized pair strictly after the first entry into the
/// region lies in the minimal invariant set.
pub fn verify_invariant_set(
    traj: &Trajectory,
    region: &EntryRegion,
) -> Result<InvariantVerdict, AnalysisError> {
    let traj = shifted(traj)?;
    let allowed = minimal_invariant_pairs(&region.delta_d);
    let invariant_pairs = allowed.iter().copied().collect();
    let Some(entry) = find_entry_step(&traj, region)? else {
        return Ok(InvariantVerdict {
            status: VerdictStatus::NotEntered,
            entry_step: None,
            violation_step: None,
            violating_pair: None,
            invariant_pairs,
        });
    };
    let violation = traj
        .records
        .iter()
        .skip(entry as usize + 1)
        .find(|r| !allowed.contains(&r.pair()));
    Ok(InvariantVerdict {
        status: if violation.is_some() {
            VerdictStatus::Fail
        } else {
            VerdictStatus::Pass
        },
        entry_step: Some(entry),
        violation_step: violation.map(|r| r.k),
        violating_pair: violation.map(|r| r.pair()),
        invariant_pairs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualVerdict {
    pub status: VerdictStatus,
    pub entry_step: u64,
    /// Number of steps `k* + h`, `h > 1`, that were checked.
    pub checked_steps: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub violation_step: Option<u64>,
}

/// Float comparisons use this absolute tolerance.
pub const RESIDUAL_FLOAT_TOL: f64 = 1e-12;

/// Checks `ū(k*+h) = −α·ρ(e(k*+h))` for every `h > 1` within the horizon.
pub fn verify_residual_control(
    traj: &Trajectory,
    alpha: &Scalar,
    entry_step: u64,
) -> Result<ResidualVerdict, AnalysisError> {
    let traj = shifted(traj)?;
    let mut checked = 0;
    for r in traj.records.iter().skip(entry_step as usize + 2) {
        checked += 1;
        let expected = alpha.checked_mul_int(-r.rho_e.0)?;
        let holds = match (r.u, expected) {
            (Scalar::Exact(a), Scalar::Exact(b)) => a == b,
            (a, b) => (a.to_f64() - b.to_f64()).abs() <= RESIDUAL_FLOAT_TOL,
        };
        if !holds {
            return Ok(ResidualVerdict {
                status: VerdictStatus::Fail,
                entry_step,
                checked_steps: checked,
                violation_step: Some(r.k),
            });
        }
    }
    Ok(ResidualVerdict {
        status: VerdictStatus::Pass,
        entry_step,
        checked_steps: checked,
        violation_step: None,
    })
}

/// Steps of pure `Δd` integration from `x⁺` before `ρ(e)` leaves zero:
/// `⌈(sign(Δd)/2 − x⁺)/Δd⌉`.
pub fn lambda_steps(delta_d: &Scalar, x_plus: &Scalar) -> Result<u64, AnalysisError> {
    if delta_d.is_zero() {
        return Err(AnalysisError::ZeroDisturbance);
    }
    if x_plus.abs() >= Scalar::HALF {
        return Err(AnalysisError::OutOfRange {
            what: "x_plus",
            value: *x_plus,
            expected: "|x_plus| < 1/2",
        });
    }
    let target = Scalar::HALF.checked_mul_int(sign(delta_d) as i128)?;
    let quotient = target.checked_sub(x_plus)?.checked_div(delta_d)?;
    Ok(u64::try_from(quotient.ceil()).expect("quotient is positive"))
}

/// An interval with explicit endpoint senses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Band {
    pub lo: Scalar,
    pub hi: Scalar,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl Band {
    pub fn contains(&self, x: &Scalar) -> bool {
        let above = if self.lo_closed {
            *x >= self.lo
        } else {
            *x > self.lo
        };
        let below = if self.hi_closed {
            *x <= self.hi
        } else {
            *x < self.hi
        };
        above && below
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}, {}{}",
            if self.lo_closed { '[' } else { '(' },
            self.lo,
            self.hi,
            if self.hi_closed { ']' } else { ')' }
        )
    }
}

/// Error band of the limit cycle: `[−1/2+Δd, 1/2+Δd)` for `Δd ≥ 0` and
/// `(−1/2+Δd, 1/2+Δd]` for `Δd < 0`.
pub fn corollary_band(delta_d: &Scalar) -> Result<Band, AnalysisError> {
    if delta_d.abs() >= Scalar::HALF {
        return Err(AnalysisError::OutOfRange {
            what: "delta_d",
            value: *delta_d,
            expected: "|delta_d| < 1/2",
        });
    }
    let lo = delta_d.checked_sub(&Scalar::HALF)?;
    let hi = delta_d.checked_add(&Scalar::HALF)?;
    let negative = sign(delta_d) < 0;
    Ok(Band {
        lo,
        hi,
        lo_closed: !negative,
        hi_closed: negative,
    })
}

/// One state of a periodic orbit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CycleState {
    pub k: u64,
    pub e: Scalar,
    /// Residual control; absent for predicted orbits, whose `ū` depends on α.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_bar: Option<Scalar>,
    pub pair: QuantizedPair,
}

/// Detected or predicted periodicity.
///
/// `n` counts the steps per period at which `ρ(e) ≠ 0`, i.e. the visits to
/// the non-zero branch of the switched law. Non-periodic reports carry
/// `n = m = 0` and an empty witness.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleReport {
    pub periodic: bool,
    pub n: u64,
    pub m: u64,
    pub entry_step: u64,
    /// First step with `ρ(e) ≠ 0`, reported next to `entry_step`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_switch_step: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_d: Option<Scalar>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_band: Option<Band>,
    /// False when `|Δd| = 1/2`, where the band and period statement do not apply.
    pub corollary_applies: bool,
    pub witness: Vec<CycleState>,
}

impl CycleReport {
    fn aperiodic(delta_d: Option<Scalar>, first_switch_step: Option<u64>) -> Self {
        let error_band = delta_d.and_then(|d| corollary_band(&d).ok());
        CycleReport {
            periodic: false,
            n: 0,
            m: 0,
            entry_step: 0,
            first_switch_step,
            delta_d,
            corollary_applies: error_band.is_some(),
            error_band,
            witness: Vec::new(),
        }
    }

    /// Distinct quantized pairs visited on the orbit.
    pub fn pairs(&self) -> BTreeSet<QuantizedPair> {
        self.witness.iter().map(|w| w.pair).collect()
    }

    /// Excursion `max ρ(e) − min ρ(e)` on the orbit.
    pub fn error_excursion(&self) -> i128 {
        let values = self.witness.iter().map(|w| w.pair.e);
        let max = values.clone().max().unwrap_or(0);
        let min = values.min().unwrap_or(0);
        max - min
    }
}

/// Predicted `(n, m)` from `|Δd| = n/m` in lowest terms.
pub fn predict_cycle(delta_d: &Scalar) -> Result<CycleReport, AnalysisError> {
    let Some(dd) = delta_d.as_rational() else {
        return Err(AnalysisError::FloatInput("delta_d"));
    };
    if delta_d.abs() > Scalar::HALF {
        return Err(AnalysisError::OutOfRange {
            what: "delta_d",
            value: *delta_d,
            expected: "|delta_d| ≤ 1/2",
        });
    }
    let error_band = corollary_band(delta_d).ok();
    let s = sign(delta_d) as i128;
    if s == 0 {
        return Ok(CycleReport {
            periodic: true,
            n: 0,
            m: 1,
            entry_step: 0,
            first_switch_step: None,
            delta_d: Some(*delta_d),
            error_band,
            corollary_applies: true,
            witness: vec![CycleState {
                k: 0,
                e: Scalar::ZERO,
                u_bar: Some(Scalar::ZERO),
                pair: QuantizedPair::new(0, 0),
            }],
        });
    }
    let n = dd.numer().unsigned_abs() as u64;
    let m = *dd.denom() as u64;
    // Representative orbit starting at the band endpoint reached right after a switch.
    let mut e = delta_d.checked_sub(&Scalar::HALF.checked_mul_int(s)?)?;
    let mut witness = Vec::with_capacity(m as usize);
    for k in 0..m {
        let q = round_half_away(&e).0;
        let pair = QuantizedPair::new(q, -q);
        witness.push(CycleState {
            k,
            e,
            u_bar: None,
            pair,
        });
        e = e.checked_add_int(pair.u)?.checked_add(delta_d)?;
    }
    Ok(CycleReport {
        periodic: true,
        n,
        m,
        entry_step: 0,
        first_switch_step: witness.iter().find(|w| w.pair.e != 0).map(|w| w.k),
        delta_d: Some(*delta_d),
        corollary_applies: error_band.is_some(),
        error_band,
        witness,
    })
}

fn first_switch(traj: &Trajectory) -> Option<u64> {
    traj.records.iter().find(|r| r.rho_e.0 != 0).map(|r| r.k)
}

fn periodic_report(traj: &Trajectory, entry: usize, period: usize) -> CycleReport {
    let delta_d = traj.delta_d();
    let witness: Vec<CycleState> = traj.records[entry..entry + period]
        .iter()
        .map(|r| CycleState {
            k: r.k,
            e: r.e,
            u_bar: Some(r.u),
            pair: r.pair(),
        })
        .collect();
    let n = witness.iter().filter(|w| w.pair.e != 0).count() as u64;
    let error_band = delta_d.and_then(|d| corollary_band(&d).ok());
    CycleReport {
        periodic: true,
        n,
        m: period as u64,
        entry_step: entry as u64,
        first_switch_step: first_switch(traj),
        delta_d,
        corollary_applies: error_band.is_some(),
        error_band,
        witness,
    }
}

/// Exact first-recurrence search on `(e, ū)`, then confirmation that the
/// recurrence holds up to the horizon.
pub fn detect_cycle(traj: &Trajectory) -> Result<CycleReport, AnalysisError> {
    if traj.mode() != ArithmeticMode::Exact {
        return Err(AnalysisError::FloatInput("trajectory"));
    }
    let traj = shifted(traj)?;
    let key = |i: usize| -> Result<(Rational, Rational), AnalysisError> {
        let r = &traj.records[i];
        match (r.e.as_rational(), r.u.as_rational()) {
            (Some(e), Some(u)) => Ok((e, u)),
            _ => Err(AnalysisError::FloatInput("trajectory record")),
        }
    };
    let mut seen: HashMap<(Rational, Rational), usize> = HashMap::with_capacity(traj.len());
    for i in 0..traj.len() {
        let state = key(i)?;
        if let Some(&j) = seen.get(&state) {
            let period = i - j;
            let sustained = (i..traj.len()).all(|k| {
                traj.records[k].e == traj.records[k - period].e
                    && traj.records[k].u == traj.records[k - period].u
            });
            if sustained {
                return Ok(periodic_report(&traj, j, period));
            }
            return Ok(CycleReport::aperiodic(traj.delta_d(), first_switch(&traj)));
        }
        seen.insert(state, i);
    }
    Ok(CycleReport::aperiodic(traj.delta_d(), first_switch(&traj)))
}

/// Float companion of [`detect_cycle`]: smallest `p ≤ N/2` such that
/// `max(|Δe|, |Δū|) ≤ tol` between steps `k` and `k+p` for every `k` from
/// some `k̄` to the horizon, with at least one full period confirmed.
pub fn detect_cycle_approx(traj: &Trajectory, tol: f64) -> Result<CycleReport, AnalysisError> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(AnalysisError::BadTolerance(tol));
    }
    let traj = shifted(traj)?;
    let xs: Vec<(f64, f64)> = traj
        .records
        .iter()
        .map(|r| (r.e.to_f64(), r.u.to_f64()))
        .collect();
    let close = |a: usize, b: usize| {
        let (ea, ua) = xs[a];
        let (eb, ub) = xs[b];
        (ea - eb).abs().max((ua - ub).abs()) <= tol
    };
    let Some(last) = xs.len().checked_sub(1) else {
        return Ok(CycleReport::aperiodic(traj.delta_d(), None));
    };
    for p in 1..=last / 2 {
        if !close(last, last - p) {
            continue;
        }
        let mut start = last - p;
        while start > 0 && close(start - 1 + p, start - 1) {
            start -= 1;
        }
        // Recurrence verified for k in [start, last − p].
        if last - p + 1 - start >= p {
            return Ok(periodic_report(&traj, start, p));
        }
    }
    Ok(CycleReport::aperiodic(traj.delta_d(), first_switch(&traj)))
}

/// Result of checking a cycle's error samples against its band.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandCheck {
    pub band: Band,
    pub inside: bool,
    pub outside_steps: Vec<u64>,
}

/// Checks every witness `e` against the band; `None` when no band applies.
pub fn check_band(report: &CycleReport) -> Option<BandCheck> {
    let band = report.error_band?;
    let outside_steps: Vec<u64> = report
        .witness
        .iter()
        .filter(|w| !band.contains(&w.e))
        .map(|w| w.k)
        .collect();
    Some(BandCheck {
        band,
        inside: outside_steps.is_empty(),
        outside_steps,
    })
}
