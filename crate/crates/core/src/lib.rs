//! Output-based feedback stabilization of a parabolic equation with a memory term.
//!
//! The crate is `no_std` (it needs `alloc`) and contains the numerical core:
//!
//! * [`mesh`]: structured triangulations of the unit square and the chessboard
//!   actuator/sensor layout,
//! * [`fem`]: piecewise-linear finite element matrices,
//! * [`memory`]: kernels, exact convolution weights and the discrete history term,
//! * [`feedback`]: actuator/sensor matrices, feedback and output-injection operators,
//! * [`timestepper`]: the Crank–Nicolson/Adams–Bashforth coupled plant/observer scheme.
//!
//! File formats, presets and the command line live in the companion `memstab` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod dense;
mod error;
pub mod feedback;
pub mod fem;
pub mod memory;
pub mod mesh;
#[cfg(feature = "oracles")]
pub mod oracle;
pub mod sparse;
pub mod timestepper;

pub use error::{Error, Result};
pub use feedback::{DeviceMatrices, DeviceSide, FeedbackGains};
pub use fem::{CoefficientField, FemMatrices};
pub use memory::{HistoryBuffer, KernelFamily, KernelSpec, MemoryWeights};
pub use mesh::{DeviceLayout, Rect, StructuredMesh};
pub use sparse::{CsrMatrix, SolverPolicy};
pub use timestepper::{
    decay_rate_fit, run, run_manufactured, InitialState, ManufacturedResult, Mode, NormSeries, ObserverInit, Scenario,
    SchemeState, SeriesKind, Simulation, StepOperators,
};
