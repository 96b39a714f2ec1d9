//! Partitioning of quantum circuits across multi-core quantum architectures.
//!
//! A circuit is cut into timeslices of parallel two-qubit gates. For every
//! slice the qubits must be placed so that each interacting pair shares a
//! core; moving a qubit between consecutive slices costs one non-local
//! communication. The crate provides:
//!
//! * [`circuit`]: gate-list parsing, ASAP timeslicing and benchmark generators,
//! * [`interaction`]: lookahead-weighted interaction graphs,
//! * [`partition`]: balanced assignments, the FGP-rOEE baseline, direct-swap
//!   repair and an exhaustive optimal oracle,
//! * [`environment`]: a swap-action decision environment with optional masks,
//! * [`policies`]: random and greedy policies driving the environment,
//! * [`bench`]: the experiment runner and report writers,
//! * [`envserver`]: a line-delimited JSON protocol for external trainers.
//!
//! The numeric code is generic over a [`Scalar`] (`f32` or `f64`). The
//! aliases below fix it to `f64`, which is what the CLI, the bench runner
//! and the wire protocol use.

pub mod bench;
pub mod circuit;
pub mod environment;
pub mod envserver;
pub mod interaction;
pub mod partition;
pub mod policies;
mod scalar;

pub use scalar::Scalar;

pub use circuit::{Circuit, Gate, GenSpec, QubitId, Timeslice};
pub use environment::{
    Action, ActionMask, EnvConfig, MaskMode, RewardParams, StepResult, Transition,
};
pub use partition::{Assignment, CoreConfig, InitStrategy, Trajectory};

/// Tiered edge weight with `f64` lookahead values.
pub type Weight = interaction::TieredWeight<f64>;
/// Interaction graph with `f64` lookahead values.
pub type Graph = interaction::InteractionGraph<f64>;
/// Environment producing `f64` observations and rewards.
pub type Env = environment::Environment<f64>;
/// Single-precision environment, for trainers that consume `f32` directly.
pub type Env32 = environment::Environment<f32>;
/// Policy driving an `f64` environment.
pub type BoxedPolicy = Box<dyn policies::Policy<f64> + Send>;
