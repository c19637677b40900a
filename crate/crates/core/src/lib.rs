//! Exact statevector laboratory for the quantum-encryption QKD protocol that
//! reuses a shared EPR pair as its key, and for the entangling attacks that
//! exploit that reuse.
//!
//! The crate is layered bottom-up:
//!
//! - [`qstate`]: dense statevector engine over labeled qubits (at most six).
//! - [`adversary`]: Eve's strategies, channel programs and key inference.
//! - [`protocol`]: the round pipeline, sessions and the check-bit phase.
//! - [`analysis`]: closed-form error rates, exact branch-enumerated
//!   disturbance, θ sweeps, the displayed-state oracle and the
//!   zero-disturbance feasibility search.
//! - [`cli`]: the batch runner behind the `qkdlab` binary.

pub mod adversary;
pub mod analysis;
pub mod cli;
pub mod error;
pub mod protocol;
pub mod qstate;
pub mod rng;

pub use error::{QkdError, Result};
