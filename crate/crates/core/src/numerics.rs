//! Scalar arithmetic and the rounding quantizer.
//!
//! A [`Scalar`] is either an exact rational over `i128` or a binary double.
//! Exact arithmetic is checked: any overflow of the 128-bit numerator or
//! denominator surfaces as [`NumericsError::Overflow`] instead of wrapping.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{CheckedAdd, CheckedMul, CheckedSub, Signed, ToPrimitive, Zero};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Exact rational payload, always kept in lowest terms with a positive denominator.
pub type Rational = Ratio<i128>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NumericsError {
    #[error("exact arithmetic overflowed 128-bit range")]
    Overflow,
    #[error("division by zero")]
    DivisionByZero,
    #[error("invalid scalar literal {literal:?}: {reason}")]
    Parse { literal: String, reason: String },
}

/// Which arithmetic a scalar (or a whole run) uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ArithmeticMode {
    #[default]
    Exact,
    Float,
}

impl fmt::Display for ArithmeticMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArithmeticMode::Exact => f.write_str("exact"),
            ArithmeticMode::Float => f.write_str("float"),
        }
    }
}

impl FromStr for ArithmeticMode {
    type Err = NumericsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(ArithmeticMode::Exact),
            "float" => Ok(ArithmeticMode::Float),
            other => Err(NumericsError::Parse {
                literal: other.to_string(),
                reason: "expected `exact` or `float`".into(),
            }),
        }
    }
}

/// A signal value.
///
/// Equality is structural: `Exact(1)` and `Float(1.0)` compare unequal, which
/// is what bit-exact trajectory comparisons need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scalar {
    Exact(Rational),
    Float(f64),
}

impl Scalar {
    pub const ZERO: Scalar = Scalar::Exact(Ratio::new_raw(0, 1));
    pub const ONE: Scalar = Scalar::Exact(Ratio::new_raw(1, 1));
    pub const HALF: Scalar = Scalar::Exact(Ratio::new_raw(1, 2));

    pub fn integer(n: i128) -> Scalar {
        Scalar::Exact(Rational::from_integer(n))
    }

    /// Exact `num/den`, reduced. Fails on a zero denominator.
    pub fn ratio(num: i128, den: i128) -> Result<Scalar, NumericsError> {
        if den == 0 {
            return Err(NumericsError::DivisionByZero);
        }
        // Ratio::new reduces and may negate i128::MIN; guard that case.
        if num == i128::MIN || den == i128::MIN {
            return Err(NumericsError::Overflow);
        }
        Ok(Scalar::Exact(Ratio::new(num, den)))
    }

    pub fn float(x: f64) -> Scalar {
        Scalar::Float(x)
    }

    /// `√2 − 1` as a double.
    pub fn sqrt2_minus_1() -> Scalar {
        Scalar::Float(std::f64::consts::SQRT_2 - 1.0)
    }

    pub fn mode(&self) -> ArithmeticMode {
        match self {
            Scalar::Exact(_) => ArithmeticMode::Exact,
            Scalar::Float(_) => ArithmeticMode::Float,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Scalar::Exact(_))
    }

    pub fn as_rational(&self) -> Option<Rational> {
        match self {
            Scalar::Exact(r) => Some(*r),
            Scalar::Float(_) => None,
        }
    }

    /// `(numerator, denominator)` in lowest terms, for exact scalars.
    pub fn to_parts(&self) -> Option<(i128, i128)> {
        self.as_rational().map(|r| (*r.numer(), *r.denom()))
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Scalar::Exact(r) => r.to_f64().unwrap_or(f64::NAN),
            Scalar::Float(x) => *x,
        }
    }

    /// Converts to the requested mode. Exact → float is lossy; float → exact
    /// is rejected since a double has no canonical rational reading here.
    pub fn to_mode(&self, mode: ArithmeticMode) -> Result<Scalar, NumericsError> {
        match (self, mode) {
            (Scalar::Exact(_), ArithmeticMode::Exact)
            | (Scalar::Float(_), ArithmeticMode::Float) => Ok(*self),
            (Scalar::Exact(_), ArithmeticMode::Float) => Ok(Scalar::Float(self.to_f64())),
            (Scalar::Float(x), ArithmeticMode::Exact) => Err(NumericsError::Parse {
                literal: x.to_string(),
                reason: "a float scalar cannot be used in an exact run".into(),
            }),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Scalar::Exact(r) => r.is_zero(),
            Scalar::Float(x) => *x == 0.0,
        }
    }

    pub fn abs(&self) -> Scalar {
        match self {
            Scalar::Exact(r) => Scalar::Exact(r.abs()),
            Scalar::Float(x) => Scalar::Float(x.abs()),
        }
    }

    pub fn checked_neg(&self) -> Result<Scalar, NumericsError> {
        match self {
            Scalar::Exact(r) => r
                .numer()
                .checked_neg()
                .map(|n| Scalar::Exact(Ratio::new_raw(n, *r.denom())))
                .ok_or(NumericsError::Overflow),
            Scalar::Float(x) => Ok(Scalar::Float(-x)),
        }
    }

    pub fn checked_add(&self, rhs: &Scalar) -> Result<Scalar, NumericsError> {
        match (self, rhs) {
            (Scalar::Exact(a), Scalar::Exact(b)) => a
                .checked_add(b)
                .map(Scalar::Exact)
                .ok_or(NumericsError::Overflow),
            _ => Ok(Scalar::Float(self.to_f64() + rhs.to_f64())),
        }
    }

    pub fn checked_sub(&self, rhs: &Scalar) -> Result<Scalar, NumericsError> {
        match (self, rhs) {
            (Scalar::Exact(a), Scalar::Exact(b)) => a
                .checked_sub(b)
                .map(Scalar::Exact)
                .ok_or(NumericsError::Overflow),
            _ => Ok(Scalar::Float(self.to_f64() - rhs.to_f64())),
        }
    }

    pub fn checked_mul(&self, rhs: &Scalar) -> Result<Scalar, NumericsError> {
        match (self, rhs) {
            (Scalar::Exact(a), Scalar::Exact(b)) => a
                .checked_mul(b)
                .map(Scalar::Exact)
                .ok_or(NumericsError::Overflow),
            _ => Ok(Scalar::Float(self.to_f64() * rhs.to_f64())),
        }
    }

    pub fn checked_div(&self, rhs: &Scalar) -> Result<Scalar, NumericsError> {
        if rhs.is_zero() {
            return Err(NumericsError::DivisionByZero);
        }
        match (self, rhs) {
            (Scalar::Exact(a), Scalar::Exact(b)) => num_traits::CheckedDiv::checked_div(a, b)
                .map(Scalar::Exact)
                .ok_or(NumericsError::Overflow),
            _ => Ok(Scalar::Float(self.to_f64() / rhs.to_f64())),
        }
    }

    /// Adds an integer, used for `e + ρ(u)` style updates.
    pub fn checked_add_int(&self, n: i128) -> Result<Scalar, NumericsError> {
        self.checked_add(&Scalar::integer(n))
    }

    /// Multiplies by an integer, used for `α·ρ(e)`.
    pub fn checked_mul_int(&self, n: i128) -> Result<Scalar, NumericsError> {
        self.checked_mul(&Scalar::integer(n))
    }

    /// Ceiling toward +∞ as an integer.
    pub fn ceil(&self) -> i128 {
        match self {
            Scalar::Exact(r) => *r.ceil().numer(),
            Scalar::Float(x) => x.ceil() as i128,
        }
    }

    /// Floor toward −∞ as an integer.
    pub fn floor(&self) -> i128 {
        match self {
            Scalar::Exact(r) => *r.floor().numer(),
            Scalar::Float(x) => x.floor() as i128,
        }
    }
}

impl PartialOrd for Scalar {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (Scalar::Exact(a), Scalar::Exact(b)) => Some(a.cmp(b)),
            _ => self.to_f64().partial_cmp(&other.to_f64()),
        }
    }
}

impl From<i128> for Scalar {
    fn from(n: i128) -> Self {
        Scalar::integer(n)
    }
}

impl From<i64> for Scalar {
    fn from(n: i64) -> Self {
        Scalar::integer(n as i128)
    }
}

impl From<Rational> for Scalar {
    fn from(r: Rational) -> Self {
        Scalar::Exact(r)
    }
}

impl From<f64> for Scalar {
    fn from(x: f64) -> Self {
        Scalar::Float(x)
    }
}

macro_rules! panicking_op {
    ($trait:ident, $method:ident, $checked:ident) => {
        impl std::ops::$trait for Scalar {
            type Output = Scalar;

            fn $method(self, rhs: Scalar) -> Scalar {
                self.$checked(&rhs)
                    .unwrap_or_else(|e| panic!("scalar {}: {e}", stringify!($method)))
            }
        }
    };
}

panicking_op!(Add, add, checked_add);
panicking_op!(Sub, sub, checked_sub);
panicking_op!(Mul, mul, checked_mul);
panicking_op!(Div, div, checked_div);

impl std::ops::Neg for Scalar {
    type Output = Scalar;

    fn neg(self) -> Scalar {
        self.checked_neg().expect("scalar neg overflowed")
    }
}

impl fmt::Display for Scalar {
    /// Exact scalars print as `n/m`, floats as the shortest round-trip decimal.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Exact(r) => write!(f, "{}/{}", r.numer(), r.denom()),
            Scalar::Float(x) => write!(f, "{x}"),
        }
    }
}

fn parse_error(literal: &str, reason: impl Into<String>) -> NumericsError {
    NumericsError::Parse {
        literal: literal.to_string(),
        reason: reason.into(),
    }
}

fn parse_int(literal: &str, digits: &str) -> Result<i128, NumericsError> {
    digits
        .parse::<i128>()
        .map_err(|e| parse_error(literal, e.to_string()))
}

/// Parses a plain decimal (`-1.25`, `3`, `.5`) as an exact rational.
fn parse_decimal(literal: &str, s: &str) -> Result<Rational, NumericsError> {
    let (negative, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int_digits, frac_digits) = body.split_once('.').unwrap_or((body, ""));
    if int_digits.is_empty() && frac_digits.is_empty() {
        return Err(parse_error(literal, "empty number"));
    }
    if !int_digits
        .chars()
        .chain(frac_digits.chars())
        .all(|c| c.is_ascii_digit())
    {
        return Err(parse_error(literal, "not a decimal number"));
    }
    let scale_exp =
        u32::try_from(frac_digits.len()).map_err(|_| parse_error(literal, "too many digits"))?;
    let scale = 10i128
        .checked_pow(scale_exp)
        .ok_or_else(|| parse_error(literal, "too many fractional digits"))?;
    let int_value = if int_digits.is_empty() {
        0
    } else {
        parse_int(literal, int_digits)?
    };
    let frac_value = if frac_digits.is_empty() {
        0
    } else {
        parse_int(literal, frac_digits)?
    };
    let numer = int_value
        .checked_mul(scale)
        .and_then(|v| v.checked_add(frac_value))
        .ok_or_else(|| parse_error(literal, "value exceeds 128-bit range"))?;
    let numer = if negative { -numer } else { numer };
    Ok(Ratio::new(numer, scale))
}

impl FromStr for Scalar {
    type Err = NumericsError;

    /// Accepted literals: `n/m`, decimals such as `0.4` (read exactly as 2/5),
    /// `float:<x>` for a binary double, and the keyword `sqrt2-1`.
    fn from_str(literal: &str) -> Result<Self, Self::Err> {
        let s = literal.trim();
        if s == "sqrt2-1" {
            return Ok(Scalar::sqrt2_minus_1());
        }
        if let Some(rest) = s.strip_prefix("float:") {
            let x: f64 = rest
                .trim()
                .parse()
                .map_err(|e: std::num::ParseFloatError| parse_error(literal, e.to_string()))?;
            if !x.is_finite() {
                return Err(parse_error(literal, "float scalars must be finite"));
            }
            return Ok(Scalar::Float(x));
        }
        if let Some((num, den)) = s.split_once('/') {
            let n = parse_int(literal, num.trim())?;
            let d = parse_int(literal, den.trim())?;
            if d == 0 {
                return Err(parse_error(literal, "zero denominator"));
            }
            return Scalar::ratio(n, d).map_err(|e| parse_error(literal, e.to_string()));
        }
        parse_decimal(literal, s).map(Scalar::Exact)
    }
}

impl Serialize for Scalar {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Scalar::Exact(_) => serializer.serialize_str(&self.to_string()),
            Scalar::Float(x) => serializer.serialize_str(&format!("float:{x}")),
        }
    }
}

struct ScalarVisitor;

impl Visitor<'_> for ScalarVisitor {
    type Value = Scalar;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("a scalar literal such as \"11/8\", \"0.4\", \"float:0.4\" or \"sqrt2-1\"")
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Scalar, E> {
        v.parse().map_err(E::custom)
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Scalar, E> {
        Ok(Scalar::integer(v as i128))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Scalar, E> {
        Ok(Scalar::integer(v as i128))
    }

    /// Bare numbers in config files are read through their shortest decimal
    /// spelling, so `0.4` means 2/5 just like the string form.
    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Scalar, E> {
        if !v.is_finite() {
            return Err(E::custom("scalar must be finite"));
        }
        let text = format!("{v}");
        text.parse().map_err(E::custom)
    }
}

impl<'de> Deserialize<'de> for Scalar {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        deserializer.deserialize_any(ScalarVisitor)
    }
}

/// Output of the rounding operator.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct QuantizedValue(pub i128);

impl QuantizedValue {
    pub fn value(self) -> i128 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn as_scalar(self) -> Scalar {
        Scalar::integer(self.0)
    }
}

impl fmt::Display for QuantizedValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Returns −1, 0 or +1.
pub fn sign(z: &Scalar) -> i32 {
    match z {
        Scalar::Exact(r) => match r.numer().cmp(&0) {
            Ordering::Greater => 1,
            Ordering::Equal => 0,
            Ordering::Less => -1,
        },
        Scalar::Float(x) => {
            if *x > 0.0 {
                1
            } else if *x < 0.0 {
                -1
            } else {
                0
            }
        }
    }
}

/// Integer part, truncating toward zero (floor for z ≥ 0, ceiling for z < 0).
pub fn int_part(z: &Scalar) -> i128 {
    match z {
        Scalar::Exact(r) => *r.numer() / *r.denom(),
        Scalar::Float(x) => x.trunc() as i128,
    }
}

/// `z − int_part(z)`; carries the sign of `z` and has magnitude below one.
pub fn frac_part(z: &Scalar) -> Scalar {
    match z {
        Scalar::Exact(r) => {
            let (_, rem) = r.numer().div_rem(r.denom());
            Scalar::Exact(Ratio::new_raw(rem, *r.denom()))
        }
        Scalar::Float(x) => Scalar::Float(x - x.trunc()),
    }
}

/// The rounding quantizer ρ: nearest integer, exact halves rounded away from zero.
pub fn round_half_away(z: &Scalar) -> QuantizedValue {
    let s = sign(z) as i128;
    let magnitude = int_part(z).abs();
    let at_or_above_half = match frac_part(z) {
        // 2·|rem| ≥ den, written to avoid doubling.
        Scalar::Exact(f) => {
            let rem = f.numer().unsigned_abs();
            let den = f.denom().unsigned_abs();
            rem >= den - rem
        }
        Scalar::Float(f) => f.abs() >= 0.5,
    };
    QuantizedValue(
        s * if at_or_above_half {
            magnitude + 1
        } else {
            magnitude
        },
    )
}

/// Shorthand for [`round_half_away`].
pub fn rho(z: &Scalar) -> QuantizedValue {
    round_half_away(z)
}

/// `z − ρ(z)`, bounded by 1/2 in magnitude.
pub fn rounding_error(z: &Scalar) -> Scalar {
    let q = round_half_away(z).0;
    match z {
        Scalar::Exact(r) => {
            // The true result fits in i128 (|rem| ≤ den/2), so modular
            // arithmetic on the intermediate product is exact.
            let den = *r.denom();
            let rem = r.numer().wrapping_sub(q.wrapping_mul(den));
            Scalar::Exact(Ratio::new_raw(rem, den))
        }
        Scalar::Float(x) => Scalar::Float(x - q as f64),
    }
}
