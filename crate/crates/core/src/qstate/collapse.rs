use rand::Rng;

use super::{Label, MeasurementBranch, StateVector};
use crate::Result;

/// How a pipeline resolves a measurement: follow one sampled outcome, or keep
/// every outcome with its exact probability.
pub trait Collapse {
    /// Returns the branches to continue with. `probability` is the weight of
    /// each branch relative to its parent.
    fn collapse(&mut self, state: &StateVector, label: Label) -> Result<Vec<MeasurementBranch>>;
}

/// Samples one outcome; the surviving branch carries weight 1.
pub struct Sampled<'a, R: Rng + ?Sized>(pub &'a mut R);

impl<R: Rng + ?Sized> Collapse for Sampled<'_, R> {
    fn collapse(&mut self, state: &StateVector, label: Label) -> Result<Vec<MeasurementBranch>> {
        let (bit, state) = state.measure_z(label, self.0)?;
        Ok(vec![MeasurementBranch { bit, probability: 1.0, state }])
    }
}

/// Keeps every outcome above the pruning threshold.
pub struct Exhaustive;

impl Collapse for Exhaustive {
    fn collapse(&mut self, state: &StateVector, label: Label) -> Result<Vec<MeasurementBranch>> {
        state.branch_measure_z(label)
    }
}
