//! Grid sweeps over `(α, Δd)` and initial states, classifying the attractor
//! each shifted switched trajectory ends up in.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{in_entry_region, minimal_invariant_pairs, AnalysisError, EntryRegion};
use crate::dynamics::{shifted_switched_step, DynamicsError, QuantizedPair, ShiftedState};
use crate::numerics::{round_half_away, ArithmeticMode, NumericsError, Rational, Scalar};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReachabilityError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("could not build worker pool: {0}")]
    Pool(String),
}

/// `count` equally spaced values from `lo` to `hi`, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub lo: Scalar,
    pub hi: Scalar,
    pub count: u32,
}

impl Axis {
    pub fn new(lo: Scalar, hi: Scalar, count: u32) -> Self {
        Axis { lo, hi, count }
    }

    pub fn single(value: Scalar) -> Self {
        Axis {
            lo: value,
            hi: value,
            count: 1,
        }
    }

    /// Sample `i`, computed as `lo + (hi − lo)·i/(count − 1)` in the scalars' own arithmetic.
    pub fn value(&self, i: u32) -> Result<Scalar, NumericsError> {
        if self.count <= 1 {
            return Ok(self.lo);
        }
        let t = Scalar::ratio(i as i128, (self.count - 1) as i128)?;
        let t = if self.lo.is_exact() && self.hi.is_exact() {
            t
        } else {
            t.to_mode(ArithmeticMode::Float)?
        };
        self.lo
            .checked_add(&self.hi.checked_sub(&self.lo)?.checked_mul(&t)?)
    }

    pub fn values(&self) -> Result<Vec<Scalar>, NumericsError> {
        (0..self.count.max(1)).map(|i| self.value(i)).collect()
    }
}

/// Sweep specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub alpha: Axis,
    pub delta_d: Axis,
    /// Initial states span `[−bound, bound]²`.
    pub init_bound: Scalar,
    /// Samples per axis of the initial-state box.
    pub init_count: u32,
    /// Step budget per trajectory.
    pub budget: u64,
    #[serde(default)]
    pub mode: ArithmeticMode,
}

/// Trajectory-step count above which a sweep is considered full scale.
const FULL_SCALE_STEPS: f64 = 1e11;

impl GridSpec {
    /// Desk-scale default: 50 α values in [1.001, 1.499], 101 Δd values in
    /// [−1/2, 1/2], a 21×21 integer grid over [−10, 10]², 10⁴ steps.
    pub fn desk_scale() -> Self {
        GridSpec {
            alpha: Axis::new(q(1001, 1000), q(1499, 1000), 50),
            delta_d: Axis::new(q(-1, 2), q(1, 2), 101),
            init_bound: Scalar::integer(10),
            init_count: 21,
            budget: 10_000,
            mode: ArithmeticMode::Exact,
        }
    }

    /// The full grid of the original study: 500 × 1000 × 1000².
    pub fn full_scale() -> Self {
        GridSpec {
            alpha: Axis::new(q(1001, 1000), q(1499, 1000), 500),
            delta_d: Axis::new(q(-1, 2), q(1, 2), 1000),
            init_bound: Scalar::integer(10),
            init_count: 1000,
            budget: 10_000,
            mode: ArithmeticMode::Exact,
        }
    }

    pub fn validate(&self) -> Result<(), ReachabilityError> {
        if self.alpha.count == 0 || self.delta_d.count == 0 || self.init_count == 0 {
            return Err(ReachabilityError::InvalidGrid(
                "counts must be at least 1".into(),
            ));
        }
        if self.budget == 0 {
            return Err(ReachabilityError::InvalidGrid(
                "budget must be at least 1".into(),
            ));
        }
        if self.init_bound < Scalar::ZERO {
            return Err(ReachabilityError::InvalidGrid(
                "init_bound must be non-negative".into(),
            ));
        }
        for a in self.alpha.values()? {
            if !(a > Scalar::ONE && a < Scalar::ratio(3, 2)?) {
                return Err(ReachabilityError::InvalidGrid(format!(
                    "alpha {a} outside (1, 3/2)"
                )));
            }
        }
        for d in self.delta_d.values()? {
            if d.abs() > Scalar::HALF {
                return Err(ReachabilityError::InvalidGrid(format!(
                    "delta_d {d} outside [-1/2, 1/2]"
                )));
            }
        }
        Ok(())
    }

    pub fn init_axis(&self) -> Result<Axis, NumericsError> {
        Ok(Axis::new(
            self.init_bound.checked_neg()?,
            self.init_bound,
            self.init_count,
        ))
    }

    pub fn trajectory_count(&self) -> u64 {
        u64::from(self.alpha.count)
            * u64::from(self.delta_d.count)
            * u64::from(self.init_count).pow(2)
    }

    fn in_mode(&self, s: Scalar) -> Result<Scalar, NumericsError> {
        match self.mode {
            ArithmeticMode::Exact => s.to_mode(ArithmeticMode::Exact),
            ArithmeticMode::Float => s.to_mode(ArithmeticMode::Float),
        }
    }
}

fn q(n: i128, d: i128) -> Scalar {
    Scalar::ratio(n, d).expect("constant")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttractorTag {
    /// Terminal pairs within `{(0,0), (sign Δd, −sign Δd)}`.
    MinimalSet,
    /// Another set with unit quantized-error excursion.
    AltUnitSet,
    /// `{(−1,2),(1,−1)}` or `{(−1,1),(1,−2)}`.
    Amplitude2Set,
    /// Budget exhausted, or a terminal set matching none of the above.
    Unresolved,
}

impl fmt::Display for AttractorTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttractorTag::MinimalSet => "theorem1-set",
            AttractorTag::AltUnitSet => "alt-unit-set",
            AttractorTag::Amplitude2Set => "amplitude2-set",
            AttractorTag::Unresolved => "unresolved",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AttractorClass {
    pub tag: AttractorTag,
    /// Quantized pairs on the terminal orbit (the minimal set for region entries).
    pub witness_pairs: BTreeSet<QuantizedPair>,
    /// Step at which the region was entered or the terminal orbit began.
    pub steps_to_entry: Option<u64>,
}

/// Amplitude-2 sets found at `Δd = −1/2` and `Δd = 1/2`.
pub fn amplitude2_sets() -> [BTreeSet<QuantizedPair>; 2] {
    [
        [QuantizedPair::new(-1, 2), QuantizedPair::new(1, -1)]
            .into_iter()
            .collect(),
        [QuantizedPair::new(-1, 1), QuantizedPair::new(1, -2)]
            .into_iter()
            .collect(),
    ]
}

fn classify_pairs(
    pairs: BTreeSet<QuantizedPair>,
    delta_d: &Scalar,
    steps: Option<u64>,
) -> AttractorClass {
    let minimal = minimal_invariant_pairs(delta_d);
    let excursion = {
        let max = pairs.iter().map(|p| p.e).max().unwrap_or(0);
        let min = pairs.iter().map(|p| p.e).min().unwrap_or(0);
        max - min
    };
    let tag = if pairs.is_subset(&minimal) {
        AttractorTag::MinimalSet
    } else if amplitude2_sets().contains(&pairs) {
        AttractorTag::Amplitude2Set
    } else if excursion <= 1 {
        AttractorTag::AltUnitSet
    } else {
        AttractorTag::Unresolved
    };
    AttractorClass {
        tag,
        witness_pairs: pairs,
        steps_to_entry: steps,
    }
}

/// Length of the tail window used to read off the terminal pairs in float mode.
const FLOAT_TAIL: u64 = 1000;

/// Simulates the shifted switched loop from `(e0, ū0)` and classifies where
/// it ends up. Returns as soon as the entry region is reached; otherwise
/// looks for an exact state recurrence within `budget` steps. Float runs,
/// which cannot recur exactly, are classified by the pairs seen over the
/// last steps of the budget.
pub fn classify_trajectory(
    alpha: &Scalar,
    delta_d: &Scalar,
    e0: &Scalar,
    u_bar0: &Scalar,
    budget: u64,
) -> Result<AttractorClass, ReachabilityError> {
    if !EntryRegion::new(*alpha, *delta_d).valid {
        return Err(AnalysisError::InvalidRegion(*alpha).into());
    }
    if let Some(lattice) = Lattice::new(alpha, delta_d, e0, u_bar0) {
        if let Some(class) = lattice.classify(delta_d, budget) {
            return Ok(class);
        }
    }
    classify_scalar(alpha, delta_d, e0, u_bar0, budget)
}

/// Exact shifted dynamics on the grid `(1/L)ℤ`, `L` the least common
/// denominator of the inputs. Every state of the run stays on that grid, so
/// the recurrences need only integer arithmetic.
struct Lattice {
    l: i128,
    alpha: i128,
    dd: i128,
    e0: i128,
    u0: i128,
    sign: i128,
}

impl Lattice {
    fn new(alpha: &Scalar, dd: &Scalar, e0: &Scalar, u0: &Scalar) -> Option<Self> {
        let parts = [alpha, dd, e0, u0].map(|x| x.to_parts());
        let mut l = 1i128;
        for p in &parts {
            let (_, d) = (*p)?;
            l = l.checked_mul(d / num_integer::gcd(l, d))?;
        }
        let scaled = |p: Option<(i128, i128)>| {
            let (n, d) = p?;
            n.checked_mul(l / d)
        };
        // Headroom for the products formed in a step.
        if l > 1 << 40 {
            return None;
        }
        Some(Lattice {
            l,
            alpha: scaled(parts[0])?,
            dd: scaled(parts[1])?,
            e0: scaled(parts[2])?,
            u0: scaled(parts[3])?,
            sign: crate::numerics::sign(dd) as i128,
        })
    }

    fn rho(&self, x: i128) -> i128 {
        let (q, r) = (
            x.unsigned_abs() / self.l as u128,
            x.unsigned_abs() % self.l as u128,
        );
        let m = (q + u128::from(2 * r >= self.l as u128)) as i128;
        if x < 0 {
            -m
        } else {
            m
        }
    }

    fn in_region(&self, e: i128, u: i128) -> bool {
        let l = self.l;
        let open_half = |x: i128| 2 * x > -l && 2 * x < l;
        let gain = self.alpha - u * self.sign;
        open_half(e) && open_half(u) && gain >= l && 2 * gain < 3 * l
    }

    fn step(&self, e: i128, u: i128) -> Option<(i128, i128)> {
        let (re, ru) = (self.rho(e), self.rho(u));
        let e_next = e.checked_add(ru.checked_mul(self.l)?.checked_add(self.dd)?)?;
        let re_next = self.rho(e_next);
        let u_next = if re_next == 0 {
            ru.checked_add(re)?.checked_mul(self.l)?
        } else {
            u.checked_add(re.checked_mul(self.l)?)?
                .checked_sub(self.alpha.checked_mul(re_next)?)?
        };
        const LIMIT: i128 = 1 << 100;
        (e_next.abs() < LIMIT && u_next.abs() < LIMIT).then_some((e_next, u_next))
    }

    /// `None` when a value leaves the safe integer range.
    fn classify(&self, delta_d: &Scalar, budget: u64) -> Option<AttractorClass> {
        let (mut e, mut u) = (self.e0, self.u0);
        let mut seen: HashMap<(i128, i128), u64> = HashMap::new();
        let mut history: Vec<QuantizedPair> = Vec::new();
        for k in 0..=budget {
            if self.in_region(e, u) {
                return Some(AttractorClass {
                    tag: AttractorTag::MinimalSet,
                    witness_pairs: minimal_invariant_pairs(delta_d),
                    steps_to_entry: Some(k),
                });
            }
            if let Some(&start) = seen.get(&(e, u)) {
                let pairs = history[start as usize..].iter().copied().collect();
                return Some(classify_pairs(pairs, delta_d, Some(start)));
            }
            seen.insert((e, u), k);
            history.push(QuantizedPair::new(self.rho(e), self.rho(u)));
            if k < budget {
                (e, u) = self.step(e, u)?;
            }
        }
        Some(AttractorClass {
            tag: AttractorTag::Unresolved,
            witness_pairs: BTreeSet::new(),
            steps_to_entry: None,
        })
    }
}

fn classify_scalar(
    alpha: &Scalar,
    delta_d: &Scalar,
    e0: &Scalar,
    u_bar0: &Scalar,
    budget: u64,
) -> Result<AttractorClass, ReachabilityError> {
    let region = EntryRegion::new(*alpha, *delta_d);
    let exact = [alpha, delta_d, e0, u_bar0].iter().all(|s| s.is_exact());
    let mut state = ShiftedState::new(*e0, *u_bar0);
    let mut seen: HashMap<(Rational, Rational), u64> = HashMap::new();
    let mut history: Vec<QuantizedPair> = Vec::new();
    let tail_start = budget.saturating_sub(FLOAT_TAIL.min(budget / 2));
    for k in 0..=budget {
        if in_entry_region(&state.e, &state.u_bar, &region)? {
            return Ok(AttractorClass {
                tag: AttractorTag::MinimalSet,
                witness_pairs: minimal_invariant_pairs(delta_d),
                steps_to_entry: Some(k),
            });
        }
        let pair = QuantizedPair::new(round_half_away(&state.e).0, round_half_away(&state.u_bar).0);
        if exact {
            let key = (
                state.e.as_rational().expect("exact"),
                state.u_bar.as_rational().expect("exact"),
            );
            if let Some(&start) = seen.get(&key) {
                let pairs = history[start as usize..].iter().copied().collect();
                return Ok(classify_pairs(pairs, delta_d, Some(start)));
            }
            seen.insert(key, k);
            history.push(pair);
        } else if k >= tail_start {
            history.push(pair);
        }
        if k == budget {
            break;
        }
        state = shifted_switched_step(&state, delta_d, alpha)?.0;
    }
    if exact || history.is_empty() {
        return Ok(AttractorClass {
            tag: AttractorTag::Unresolved,
            witness_pairs: BTreeSet::new(),
            steps_to_entry: None,
        });
    }
    let pairs = history.into_iter().collect();
    Ok(classify_pairs(pairs, delta_d, Some(tail_start)))
}

/// Classification tally of one `(α, Δd)` cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellTally {
    pub alpha: Scalar,
    pub delta_d: Scalar,
    pub n_inits: u64,
    pub n_theorem1: u64,
    pub n_alt: u64,
    pub n_amp2: u64,
    pub n_unresolved: u64,
}

impl CellTally {
    fn record(&mut self, tag: AttractorTag) {
        self.n_inits += 1;
        match tag {
            AttractorTag::MinimalSet => self.n_theorem1 += 1,
            AttractorTag::AltUnitSet => self.n_alt += 1,
            AttractorTag::Amplitude2Set => self.n_amp2 += 1,
            AttractorTag::Unresolved => self.n_unresolved += 1,
        }
    }

    pub fn all_theorem1(&self) -> bool {
        self.n_inits > 0 && self.n_theorem1 == self.n_inits
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridResult {
    /// Cells in α-major order.
    pub cells: Vec<CellTally>,
}

fn evaluate_cell(
    spec: &GridSpec,
    inits: &[Scalar],
    alpha: Scalar,
    delta_d: Scalar,
) -> Result<CellTally, ReachabilityError> {
    let mut tally = CellTally {
        alpha,
        delta_d,
        n_inits: 0,
        n_theorem1: 0,
        n_alt: 0,
        n_amp2: 0,
        n_unresolved: 0,
    };
    for e0 in inits {
        for u0 in inits {
            let class = classify_trajectory(&alpha, &delta_d, e0, u0, spec.budget)?;
            tally.record(class.tag);
        }
    }
    Ok(tally)
}

/// Runs every cell of the grid on a pool of `jobs` worker threads
/// (`0` picks the number of CPUs). The result does not depend on `jobs`.
pub fn sweep(spec: &GridSpec, jobs: usize) -> Result<GridResult, ReachabilityError> {
    spec.validate()?;
    let steps = spec.trajectory_count() as f64 * spec.budget as f64;
    if steps > FULL_SCALE_STEPS {
        log::warn!(
            "sweep of {} trajectories × {} steps is full scale; expect a very long run",
            spec.trajectory_count(),
            spec.budget
        );
    }
    let alphas: Vec<Scalar> = spec
        .alpha
        .values()?
        .into_iter()
        .map(|a| spec.in_mode(a))
        .collect::<Result<_, _>>()?;
    let deltas: Vec<Scalar> = spec
        .delta_d
        .values()?
        .into_iter()
        .map(|d| spec.in_mode(d))
        .collect::<Result<_, _>>()?;
    let inits: Vec<Scalar> = spec
        .init_axis()?
        .values()?
        .into_iter()
        .map(|x| spec.in_mode(x))
        .collect::<Result<_, _>>()?;
    let cells: Vec<(Scalar, Scalar)> = alphas
        .iter()
        .flat_map(|a| deltas.iter().map(move |d| (*a, *d)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| ReachabilityError::Pool(e.to_string()))?;
    let cells = pool.install(|| {
        cells
            .par_iter()
            .map(|(a, d)| evaluate_cell(spec, &inits, *a, *d))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(GridResult { cells })
}

/// One entry of the attraction-region mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MaskEntry {
    pub alpha: Scalar,
    pub delta_d: Scalar,
    pub in_region: bool,
}

/// Cells whose every sampled initial state reached the minimal invariant set.
pub fn attraction_region(result: &GridResult) -> Vec<MaskEntry> {
    result
        .cells
        .iter()
        .map(|c| MaskEntry {
            alpha: c.alpha,
            delta_d: c.delta_d,
            in_region: c.all_theorem1(),
        })
        .collect()
}

/// An initial state reaching a given attractor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub alpha: Scalar,
    pub delta_d: Scalar,
    pub e0: Scalar,
    pub u_bar0: Scalar,
    pub class: AttractorClass,
}

/// Searches `[−bound, bound]²` for an initial state whose trajectory is
/// classified `target`, doubling the per-axis resolution from `start_count`
/// up to `max_count` until one is found. Points are tried in row-major order.
pub fn find_witness(
    alpha: &Scalar,
    delta_d: &Scalar,
    target: AttractorTag,
    bound: &Scalar,
    start_count: u32,
    max_count: u32,
    budget: u64,
) -> Result<Option<Witness>, ReachabilityError> {
    let mut count = start_count.max(2);
    loop {
        let axis = Axis::new(bound.checked_neg()?, *bound, count);
        let values = axis.values()?;
        for e0 in &values {
            for u0 in &values {
                let class = classify_trajectory(alpha, delta_d, e0, u0, budget)?;
                if class.tag == target {
                    return Ok(Some(Witness {
                        alpha: *alpha,
                        delta_d: *delta_d,
                        e0: *e0,
                        u_bar0: *u0,
                        class,
                    }));
                }
            }
        }
        if count >= max_count {
            return Ok(None);
        }
        count = (count - 1) * 2 + 1;
    }
}
