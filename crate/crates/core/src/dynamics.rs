//! Plant and controller recurrences, disturbance signals and the stepper.
//!
//! The plant is the delayed integrator `e(k+1) = e(k) + ρ(u(k)) + d(k)`.
//! Three control laws act on it:
//!
//! * standard PI on the quantized error: `u(k+1) = u(k) + ρ(e(k)) − α·ρ(e(k+1))`;
//! * switched PI, which replaces `u(k)` by `ρ(u(k))` whenever `ρ(e(k+1)) = 0`;
//! * the same PI with every quantizer replaced by the identity.
//!
//! In shifted coordinates the control input is written `u = −ρ(d̄) + ū` and the
//! plant sees only the disturbance rounding error `Δd = d̄ − ρ(d̄)`. The
//! recurrences keep the same form, so every law can run in either frame.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{
    round_half_away, rounding_error, ArithmeticMode, NumericsError, QuantizedValue, Scalar,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("alpha = {0} is outside the stable range (1, 3)")]
    AlphaOutOfRange(Scalar),
    #[error("shifted coordinates need a constant disturbance")]
    NonConstantDisturbance,
    #[error("a disturbance rounding error must satisfy |Δd| ≤ 1/2, got {0}")]
    NotARoundingError(Scalar),
    #[error("invalid disturbance: {0}")]
    InvalidDisturbance(String),
    #[error("float scalar {0} in an exact-mode run")]
    FloatInExactRun(String),
    #[error("arithmetic failure at step {step}: {source}")]
    Arithmetic {
        step: u64,
        #[source]
        source: NumericsError,
    },
}

fn at_step(step: u64) -> impl Fn(NumericsError) -> DynamicsError {
    move |source| DynamicsError::Arithmetic { step, source }
}

/// Plant output and control input at step `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopState {
    pub k: u64,
    pub e: Scalar,
    pub u: Scalar,
}

impl LoopState {
    pub fn new(e: Scalar, u: Scalar) -> Self {
        LoopState { k: 0, e, u }
    }

    pub fn rho_e(&self) -> QuantizedValue {
        round_half_away(&self.e)
    }

    pub fn rho_u(&self) -> QuantizedValue {
        round_half_away(&self.u)
    }

    /// Maps `u` to the residual `ū = u + ρ(d̄)`.
    pub fn to_shifted(&self, d_bar: &Scalar) -> Result<ShiftedState, NumericsError> {
        Ok(ShiftedState {
            k: self.k,
            e: self.e,
            u_bar: self.u.checked_add_int(round_half_away(d_bar).0)?,
        })
    }
}

/// Plant output and residual control `ū` at step `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftedState {
    pub k: u64,
    pub e: Scalar,
    pub u_bar: Scalar,
}

impl ShiftedState {
    pub fn new(e: Scalar, u_bar: Scalar) -> Self {
        ShiftedState { k: 0, e, u_bar }
    }

    /// Maps back through `u = −ρ(d̄) + ū`.
    pub fn to_loop(&self, d_bar: &Scalar) -> Result<LoopState, NumericsError> {
        Ok(LoopState {
            k: self.k,
            e: self.e,
            u: self.u_bar.checked_add_int(-round_half_away(d_bar).0)?,
        })
    }
}

/// Rounding error `Δd = d̄ − ρ(d̄)` of a constant disturbance.
pub fn delta_d(d_bar: &Scalar) -> Scalar {
    rounding_error(d_bar)
}

/// Additive disturbance on the quantized control input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Disturbance {
    Constant {
        value: Scalar,
    },
    /// Linear interpolation between `(step, value)` breakpoints, holding the
    /// first value before the first breakpoint and the last after the final one.
    PiecewiseLinear {
        breakpoints: Vec<(u64, Scalar)>,
    },
    /// Explicit per-step values, holding the last one.
    Samples {
        values: Vec<Scalar>,
    },
}

impl Disturbance {
    pub fn constant(value: Scalar) -> Self {
        Disturbance::Constant { value }
    }

    pub fn ramp(breakpoints: Vec<(u64, Scalar)>) -> Result<Self, DynamicsError> {
        let d = Disturbance::PiecewiseLinear { breakpoints };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        match self {
            Disturbance::Constant { .. } => Ok(()),
            Disturbance::PiecewiseLinear { breakpoints } => {
                if breakpoints.is_empty() {
                    return Err(DynamicsError::InvalidDisturbance("no breakpoints".into()));
                }
                if breakpoints.windows(2).any(|w| w[0].0 >= w[1].0) {
                    return Err(DynamicsError::InvalidDisturbance(
                        "breakpoint steps must be strictly increasing".into(),
                    ));
                }
                Ok(())
            }
            Disturbance::Samples { values } => {
                if values.is_empty() {
                    return Err(DynamicsError::InvalidDisturbance("no samples".into()));
                }
                Ok(())
            }
        }
    }

    pub fn as_constant(&self) -> Option<Scalar> {
        match self {
            Disturbance::Constant { value } => Some(*value),
            _ => None,
        }
    }

    fn scalars(&self) -> Vec<Scalar> {
        match self {
            Disturbance::Constant { value } => vec![*value],
            Disturbance::PiecewiseLinear { breakpoints } => {
                breakpoints.iter().map(|(_, v)| *v).collect()
            }
            Disturbance::Samples { values } => values.clone(),
        }
    }

    fn map_scalars(
        &self,
        f: impl Fn(&Scalar) -> Result<Scalar, NumericsError>,
    ) -> Result<Self, NumericsError> {
        Ok(match self {
            Disturbance::Constant { value } => Disturbance::Constant { value: f(value)? },
            Disturbance::PiecewiseLinear { breakpoints } => Disturbance::PiecewiseLinear {
                breakpoints: breakpoints
                    .iter()
                    .map(|(k, v)| Ok((*k, f(v)?)))
                    .collect::<Result<_, NumericsError>>()?,
            },
            Disturbance::Samples { values } => Disturbance::Samples {
                values: values.iter().map(&f).collect::<Result<_, _>>()?,
            },
        })
    }
}

/// Value of the disturbance at step `k`.
pub fn eval_disturbance(d: &Disturbance, k: u64) -> Result<Scalar, NumericsError> {
    match d {
        Disturbance::Constant { value } => Ok(*value),
        Disturbance::Samples { values } => {
            let idx = usize::try_from(k)
                .unwrap_or(usize::MAX)
                .min(values.len() - 1);
            Ok(values[idx])
        }
        Disturbance::PiecewiseLinear { breakpoints } => {
            let (first_k, first_v) = breakpoints[0];
            if k <= first_k {
                return Ok(first_v);
            }
            let (last_k, last_v) = breakpoints[breakpoints.len() - 1];
            if k >= last_k {
                return Ok(last_v);
            }
            let seg = breakpoints
                .windows(2)
                .find(|w| k < w[1].0)
                .expect("k inside breakpoint span");
            let (k0, v0) = seg[0];
            let (k1, v1) = seg[1];
            let span = Scalar::integer(i128::from(k1 - k0));
            let offset = Scalar::integer(i128::from(k - k0));
            let slope = v1.checked_sub(&v0)?.checked_div(&span)?;
            v0.checked_add(&slope.checked_mul(&offset)?)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Controller {
    StandardPi,
    SwitchedPi,
    UnquantizedPi,
}

impl fmt::Display for Controller {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Controller::StandardPi => "standard-pi",
            Controller::SwitchedPi => "switched-pi",
            Controller::UnquantizedPi => "unquantized-pi",
        })
    }
}

/// Frame in which `u` is expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Coordinates {
    /// `(e, u)` with the raw disturbance `d(k)`.
    #[default]
    Original,
    /// `(e, ū)`; the constant disturbance value is read as `Δd` directly.
    Shifted,
}

/// Signal quantizer applied to `e` and `u` inside the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantizer {
    Rounding,
    Identity,
}

impl Quantizer {
    fn apply(self, z: &Scalar) -> Scalar {
        match self {
            Quantizer::Rounding => round_half_away(z)
                .as_scalar()
                .to_mode(z.mode())
                .unwrap_or(*z),
            Quantizer::Identity => *z,
        }
    }

    fn is_zero(self, z: &Scalar) -> bool {
        match self {
            Quantizer::Rounding => round_half_away(z).is_zero(),
            Quantizer::Identity => z.is_zero(),
        }
    }
}

/// Control-law recurrence, independent of the quantizer choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Law {
    Pi,
    SwitchedPi,
}

/// Which branch the switched law took on a transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    RhoZero,
    RhoNonzero,
    #[serde(rename = "n/a")]
    NotApplicable,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::RhoZero => "rho-zero",
            Branch::RhoNonzero => "rho-nonzero",
            Branch::NotApplicable => "n/a",
        })
    }
}

impl std::str::FromStr for Branch {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rho-zero" => Ok(Branch::RhoZero),
            "rho-nonzero" => Ok(Branch::RhoNonzero),
            "n/a" => Ok(Branch::NotApplicable),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

/// `e + (ρ(u) + d)`. The residual disturbance is formed first, which fixes
/// the float rounding order.
pub fn plant_step(e: &Scalar, u: &Scalar, d: &Scalar) -> Result<Scalar, NumericsError> {
    e.checked_add(&d.checked_add_int(round_half_away(u).0)?)
}

/// One transition of `law` under `quantizer`. The new error is computed
/// first, then the branch is chosen on its quantized value.
pub fn step_with(
    law: Law,
    quantizer: Quantizer,
    e: &Scalar,
    u: &Scalar,
    d: &Scalar,
    alpha: &Scalar,
) -> Result<(Scalar, Scalar, Branch), NumericsError> {
    let q_e = quantizer.apply(e);
    let q_u = quantizer.apply(u);
    let e_next = e.checked_add(&q_u.checked_add(d)?)?;
    let q_e_next = quantizer.apply(&e_next);
    let pi_update = || {
        u.checked_add(&q_e)?
            .checked_sub(&alpha.checked_mul(&q_e_next)?)
    };
    match law {
        Law::Pi => Ok((e_next, pi_update()?, Branch::NotApplicable)),
        Law::SwitchedPi => {
            if quantizer.is_zero(&e_next) {
                Ok((e_next, q_u.checked_add(&q_e)?, Branch::RhoZero))
            } else {
                Ok((e_next, pi_update()?, Branch::RhoNonzero))
            }
        }
    }
}

pub fn standard_pi_step(
    state: &LoopState,
    d_k: &Scalar,
    alpha: &Scalar,
) -> Result<LoopState, NumericsError> {
    let (e, u, _) = step_with(Law::Pi, Quantizer::Rounding, &state.e, &state.u, d_k, alpha)?;
    Ok(LoopState {
        k: state.k + 1,
        e,
        u,
    })
}

pub fn switched_pi_step(
    state: &LoopState,
    d_k: &Scalar,
    alpha: &Scalar,
) -> Result<(LoopState, Branch), NumericsError> {
    let (e, u, branch) = step_with(
        Law::SwitchedPi,
        Quantizer::Rounding,
        &state.e,
        &state.u,
        d_k,
        alpha,
    )?;
    Ok((
        LoopState {
            k: state.k + 1,
            e,
            u,
        },
        branch,
    ))
}

/// Switched law in `(e, ū)` with the constant rounding error `Δd` as input.
pub fn shifted_switched_step(
    state: &ShiftedState,
    delta_d: &Scalar,
    alpha: &Scalar,
) -> Result<(ShiftedState, Branch), DynamicsError> {
    if delta_d.abs() > Scalar::HALF {
        return Err(DynamicsError::NotARoundingError(*delta_d));
    }
    let (e, u_bar, branch) = step_with(
        Law::SwitchedPi,
        Quantizer::Rounding,
        &state.e,
        &state.u_bar,
        delta_d,
        alpha,
    )
    .map_err(at_step(state.k))?;
    Ok((
        ShiftedState {
            k: state.k + 1,
            e,
            u_bar,
        },
        branch,
    ))
}

pub fn unquantized_pi_step(
    state: &LoopState,
    d_k: &Scalar,
    alpha: &Scalar,
) -> Result<LoopState, NumericsError> {
    let (e, u, _) = step_with(Law::Pi, Quantizer::Identity, &state.e, &state.u, d_k, alpha)?;
    Ok(LoopState {
        k: state.k + 1,
        e,
        u,
    })
}

/// Non-fatal remarks about a configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConfigWarning {
    /// α ∉ (1, 3/2): the invariant-set guarantees do not apply.
    OutsideInvariantRange,
    /// α ∉ (5/4, 3/2): global attractiveness is not expected.
    OutsideAttractiveRange,
    /// Float scalars appeared in an exact run; the run was promoted to float.
    PromotedToFloat,
}

impl fmt::Display for ConfigWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConfigWarning::OutsideInvariantRange => {
                "alpha outside (1, 3/2): invariant-set analysis does not apply"
            }
            ConfigWarning::OutsideAttractiveRange => {
                "alpha outside (5/4, 3/2): invariant set may not be globally attractive"
            }
            ConfigWarning::PromotedToFloat => {
                "float scalar in exact run: promoted to float arithmetic"
            }
        })
    }
}

fn default_alpha() -> Scalar {
    Scalar::ratio(11, 8).expect("constant")
}

/// A closed-loop scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopConfig {
    #[serde(default = "default_alpha")]
    pub alpha: Scalar,
    pub controller: Controller,
    pub disturbance: Disturbance,
    #[serde(default = "zero")]
    pub e0: Scalar,
    /// Initial control input (`ū(0)` in shifted coordinates).
    #[serde(default = "zero")]
    pub u0: Scalar,
    pub horizon: u64,
    #[serde(default)]
    pub mode: ArithmeticMode,
    #[serde(default)]
    pub coordinates: Coordinates,
}

fn zero() -> Scalar {
    Scalar::ZERO
}

impl LoopConfig {
    /// Switched PI in shifted coordinates with constant `Δd`.
    pub fn shifted(
        alpha: Scalar,
        delta_d: Scalar,
        e0: Scalar,
        u_bar0: Scalar,
        horizon: u64,
    ) -> Self {
        LoopConfig {
            alpha,
            controller: Controller::SwitchedPi,
            disturbance: Disturbance::constant(delta_d),
            e0,
            u0: u_bar0,
            horizon,
            mode: if [alpha, delta_d, e0, u_bar0].iter().all(Scalar::is_exact) {
                ArithmeticMode::Exact
            } else {
                ArithmeticMode::Float
            },
            coordinates: Coordinates::Shifted,
        }
    }

    /// A loop in original coordinates with a constant disturbance `d̄`.
    pub fn constant(
        controller: Controller,
        alpha: Scalar,
        d_bar: Scalar,
        e0: Scalar,
        u0: Scalar,
        horizon: u64,
    ) -> Self {
        let mode = if [alpha, d_bar, e0, u0].iter().all(Scalar::is_exact) {
            ArithmeticMode::Exact
        } else {
            ArithmeticMode::Float
        };
        LoopConfig {
            alpha,
            controller,
            disturbance: Disturbance::constant(d_bar),
            e0,
            u0,
            horizon,
            mode,
            coordinates: Coordinates::Original,
        }
    }

    pub fn with_controller(&self, controller: Controller) -> Self {
        LoopConfig {
            controller,
            ..self.clone()
        }
    }

    /// Checks the configuration and returns its warnings.
    pub fn validate(&self) -> Result<Vec<ConfigWarning>, DynamicsError> {
        let one = Scalar::ONE;
        let three = Scalar::integer(3);
        if !(self.alpha > one && self.alpha < three) {
            return Err(DynamicsError::AlphaOutOfRange(self.alpha));
        }
        self.disturbance.validate()?;
        if self.coordinates == Coordinates::Shifted {
            let dd = self
                .disturbance
                .as_constant()
                .ok_or(DynamicsError::NonConstantDisturbance)?;
            if dd.abs() > Scalar::HALF {
                return Err(DynamicsError::NotARoundingError(dd));
            }
        }
        let mut warnings = Vec::new();
        let three_halves = Scalar::ratio(3, 2).expect("constant");
        let five_quarters = Scalar::ratio(5, 4).expect("constant");
        if self.alpha >= three_halves {
            warnings.push(ConfigWarning::OutsideInvariantRange);
        }
        if !(self.alpha > five_quarters && self.alpha < three_halves) {
            warnings.push(ConfigWarning::OutsideAttractiveRange);
        }
        if self.mode == ArithmeticMode::Exact && self.scalars().iter().any(|s| !s.is_exact()) {
            warnings.push(ConfigWarning::PromotedToFloat);
        }
        Ok(warnings)
    }

    fn scalars(&self) -> Vec<Scalar> {
        let mut all = vec![self.alpha, self.e0, self.u0];
        all.extend(self.disturbance.scalars());
        all
    }

    /// Mode actually used: exact unless the config asks for float or
    /// contains a float scalar.
    pub fn effective_mode(&self) -> ArithmeticMode {
        if self.mode == ArithmeticMode::Float || self.scalars().iter().any(|s| !s.is_exact()) {
            ArithmeticMode::Float
        } else {
            ArithmeticMode::Exact
        }
    }

    /// Copy with every scalar converted to the effective mode.
    pub fn resolved(&self) -> Result<LoopConfig, DynamicsError> {
        let mode = self.effective_mode();
        let conv = |s: &Scalar| s.to_mode(mode);
        let wrap = |e: NumericsError| DynamicsError::FloatInExactRun(e.to_string());
        Ok(LoopConfig {
            alpha: conv(&self.alpha).map_err(wrap)?,
            disturbance: self.disturbance.map_scalars(conv).map_err(wrap)?,
            e0: conv(&self.e0).map_err(wrap)?,
            u0: conv(&self.u0).map_err(wrap)?,
            mode,
            ..self.clone()
        })
    }
}

/// One time step of a simulated loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRecord {
    pub k: u64,
    pub e: Scalar,
    /// `u`, or `ū` for shifted trajectories.
    pub u: Scalar,
    pub rho_e: QuantizedValue,
    pub rho_u: QuantizedValue,
    /// Disturbance applied on the transition out of this step.
    pub d: Scalar,
    /// Branch taken on the transition into this step.
    pub mode: Branch,
}

impl TrajectoryRecord {
    pub fn pair(&self) -> QuantizedPair {
        QuantizedPair {
            e: self.rho_e.0,
            u: self.rho_u.0,
        }
    }
}

/// `(ρ(e), ρ(u))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QuantizedPair {
    pub e: i128,
    pub u: i128,
}

impl QuantizedPair {
    pub const fn new(e: i128, u: i128) -> Self {
        QuantizedPair { e, u }
    }
}

impl Serialize for QuantizedPair {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl fmt::Display for QuantizedPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.e, self.u)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// The resolved config that produced the records.
    pub config: LoopConfig,
    pub records: Vec<TrajectoryRecord>,
    pub warnings: Vec<ConfigWarning>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn is_shifted(&self) -> bool {
        self.config.coordinates == Coordinates::Shifted
    }

    pub fn mode(&self) -> ArithmeticMode {
        self.config.mode
    }

    pub fn pairs(&self) -> impl Iterator<Item = QuantizedPair> + '_ {
        self.records.iter().map(TrajectoryRecord::pair)
    }

    /// Constant `Δd` seen by the loop in shifted coordinates, if defined.
    pub fn delta_d(&self) -> Option<Scalar> {
        let d = self.config.disturbance.as_constant()?;
        Some(if self.is_shifted() { d } else { delta_d(&d) })
    }

    /// Re-expresses an original-coordinate, constant-disturbance trajectory
    /// in `(e, ū)`.
    pub fn to_shifted(&self) -> Result<Trajectory, DynamicsError> {
        if self.is_shifted() {
            return Ok(self.clone());
        }
        let d_bar = self
            .config
            .disturbance
            .as_constant()
            .ok_or(DynamicsError::NonConstantDisturbance)?;
        let dd = delta_d(&d_bar);
        let shift = round_half_away(&d_bar).0;
        let records = self
            .records
            .iter()
            .map(|r| {
                let u_bar = r.u.checked_add_int(shift).map_err(at_step(r.k))?;
                Ok(TrajectoryRecord {
                    u: u_bar,
                    rho_u: round_half_away(&u_bar),
                    d: dd,
                    ..*r
                })
            })
            .collect::<Result<Vec<_>, DynamicsError>>()?;
        let u0 = self.config.u0.checked_add_int(shift).map_err(at_step(0))?;
        Ok(Trajectory {
            config: LoopConfig {
                disturbance: Disturbance::constant(dd),
                u0,
                coordinates: Coordinates::Shifted,
                ..self.config.clone()
            },
            records,
            warnings: self.warnings.clone(),
        })
    }
}

/// Runs the loop for `horizon` transitions. Deterministic in the config.
pub fn simulate(config: &LoopConfig) -> Result<Trajectory, DynamicsError> {
    let warnings = config.validate()?;
    for w in &warnings {
        log::debug!("{w}");
    }
    let cfg = config.resolved()?;
    let (law, quantizer) = match cfg.controller {
        Controller::StandardPi => (Law::Pi, Quantizer::Rounding),
        Controller::SwitchedPi => (Law::SwitchedPi, Quantizer::Rounding),
        Controller::UnquantizedPi => (Law::Pi, Quantizer::Identity),
    };
    simulate_with(cfg, warnings, law, quantizer)
}

/// Like [`simulate`] but with an explicit law and quantizer, so the switched
/// law can also be run without quantization.
pub fn simulate_law(
    config: &LoopConfig,
    law: Law,
    quantizer: Quantizer,
) -> Result<Trajectory, DynamicsError> {
    let warnings = config.validate()?;
    simulate_with(config.resolved()?, warnings, law, quantizer)
}

fn simulate_with(
    cfg: LoopConfig,
    warnings: Vec<ConfigWarning>,
    law: Law,
    quantizer: Quantizer,
) -> Result<Trajectory, DynamicsError> {
    let capacity = usize::try_from(cfg.horizon)
        .unwrap_or(usize::MAX)
        .saturating_add(1);
    let mut records = Vec::with_capacity(capacity.min(1 << 24));
    let mut e = cfg.e0;
    let mut u = cfg.u0;
    let mut mode = Branch::NotApplicable;
    for k in 0..=cfg.horizon {
        let d = eval_disturbance(&cfg.disturbance, k).map_err(at_step(k))?;
        records.push(TrajectoryRecord {
            k,
            e,
            u,
            rho_e: round_half_away(&e),
            rho_u: round_half_away(&u),
            d,
            mode,
        });
        if k == cfg.horizon {
            break;
        }
        let (e_next, u_next, branch) =
            step_with(law, quantizer, &e, &u, &d, &cfg.alpha).map_err(at_step(k))?;
        e = e_next;
        u = u_next;
        mode = branch;
    }
    Ok(Trajectory {
        config: cfg,
        records,
        warnings,
    })
}
