//! Optimal control of switched systems with any number of modes through a
//! binary embedding of the switching signal.
//!
//! The mode index is written in `b = ⌈log₂ M⌉` bits, the bits are relaxed to
//! `[0, 1]`, and the mode vector fields are blended with multilinear vertex
//! weights. A concave penalty on fractional bits and on bit patterns that
//! decode to no mode drives the relaxed solution back to bang-bang switching.
//! The continuous problem is transcribed by direct collocation and solved
//! with an augmented-Lagrangian projected-gradient method; a mode insertion
//! gradient method is included as a baseline.

pub mod bench;
pub mod cli;
pub mod condensed;
pub mod embed;
pub mod encoding;
pub mod error;
pub mod extract;
pub mod linalg;
pub mod meocp;
pub mod mig;
pub mod ode;
pub mod problem;
pub mod solver;
pub mod transcribe;
pub mod verify;

pub use embed::{CostatePoint, EmbeddedSystem};
pub use encoding::{EmbeddingConfig, ModeIndex, RelaxedSwitch};
pub use error::{Error, Result};
pub use problem::{Bounds, Mode, SwitchSchedule, SwitchedProblem, TerminalCost};
