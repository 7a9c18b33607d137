//! Multichannel active noise control simulation.
//!
//! A J×K×M system (J reference microphones, K secondary sources, M error
//! microphones) is driven by synthetic noise through FIR acoustic paths while
//! one of three adaptive rules tunes the K×J control filters:
//!
//! * McFxLMS, fixed step size;
//! * MNFxLMS, step size normalized per error microphone by the power of its
//!   filtered references;
//! * momentum MNFxLMS, the normalized gradient passed through a leaky
//!   accumulator with forgetting factor γ.
//!
//! [`sim::run`] executes a [`sim::Scenario`] and returns the error,
//! disturbance and control histories, which [`metrics`] turns into
//! noise-reduction curves.

pub mod algorithms;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod scenarios;
pub mod signal;
pub mod sim;

pub use algorithms::{AlgorithmConfig, AlgorithmKind};
pub use error::{AncError, Result};
pub use model::{ControlFilterBank, FilteredReferenceState, ImpulseResponse, PathSet, SystemDims, TapDelayLine};
pub use sim::{run, run_comparison, Scenario, SimResult};
