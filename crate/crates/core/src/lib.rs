//! Switched PI control of a quantized integrator with unit delay.
//!
//! * [`numerics`]: exact/float scalars and the rounding quantizer.
//! * [`dynamics`]: plant and controller recurrences and the stepper.
//! * [`analysis`]: invariant-set predicates, limit-cycle prediction and detection.
//! * [`reachability`]: grid sweeps classifying where trajectories end up.
//! * [`campaign`]: RMS metric, the disturbance campaign, CSV/config I/O and the CLI.

pub mod analysis;
pub mod campaign;
pub mod dynamics;
pub mod numerics;
pub mod reachability;

pub use dynamics::{
    Controller, Coordinates, Disturbance, LoopConfig, LoopState, QuantizedPair, ShiftedState,
    Trajectory,
};
pub use numerics::{rho, round_half_away, ArithmeticMode, QuantizedValue, Scalar};
