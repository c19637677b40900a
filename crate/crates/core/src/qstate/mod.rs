//! Dense statevector engine over a small register of labeled qubits.
//!
//! Basis-state indices are big-endian in layout order: position 0 is the most
//! significant bit, so for the layout `[A, B, γ, E]` the ket `|a,b,g,e⟩` sits
//! at index `8a + 4b + 2g + e`.

mod collapse;
mod density;
mod layout;
mod state;

pub use collapse::{Collapse, Exhaustive, Sampled};
pub use density::DensityMatrix;
pub use layout::{Label, RegisterLayout, MAX_QUBITS};
pub use state::{MeasurementBranch, StateVector};

pub use num_complex::Complex64 as Amplitude;

/// Norm drift tolerated after any public operation.
pub const NORM_TOLERANCE: f64 = 1e-12;

/// Branches whose probability falls below this are treated as impossible.
pub const BRANCH_PRUNE: f64 = 1e-15;

/// Purity a qubit must reach before it may be discarded.
pub const PRODUCT_PURITY_TOLERANCE: f64 = 1e-10;
