use nalgebra::DMatrix;

use super::Amplitude;
use crate::{QkdError, Result};

/// Reduced state of a subset of qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    entries: DMatrix<Amplitude>,
}

impl DensityMatrix {
    pub(crate) fn from_matrix(entries: DMatrix<Amplitude>) -> Self {
        Self { entries }
    }

    /// Builds and validates a density matrix: square with power-of-two size,
    /// Hermitian and unit trace within 1e-12, eigenvalues ≥ −1e-10.
    pub fn new(entries: DMatrix<Amplitude>) -> Result<Self> {
        let rho = Self { entries };
        rho.validate()?;
        Ok(rho)
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entry(&self, row: usize, col: usize) -> Amplitude {
        self.entries[(row, col)]
    }

    pub fn matrix(&self) -> &DMatrix<Amplitude> {
        &self.entries
    }

    pub fn trace(&self) -> Amplitude {
        self.entries.trace()
    }

    /// `tr(ρ²)`.
    pub fn purity(&self) -> f64 {
        // ρ is Hermitian, so tr(ρ²) = Σ |ρ_ij|²
        self.entries.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self
            .entries
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Von Neumann entropy in bits.
    pub fn entropy_bits(&self) -> f64 {
        -self
            .eigenvalues()
            .into_iter()
            .filter(|&l| l > 1e-14)
            .map(|l| l * l.log2())
            .sum::<f64>()
    }

    /// Largest entrywise deviation from another matrix of the same size.
    pub fn max_abs_diff(&self, other: &DMatrix<Amplitude>) -> f64 {
        self.entries
            .iter()
            .zip(other.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.entries.nrows();
        if n != self.entries.ncols() || !n.is_power_of_two() {
            return Err(QkdError::InvariantViolation(format!(
                "density matrix has shape {}x{}",
                n,
                self.entries.ncols()
            )));
        }
        let herm = self.max_abs_diff(&self.entries.adjoint());
        if herm > 1e-12 {
            return Err(QkdError::InvariantViolation(format!(
                "density matrix is not Hermitian (deviation {herm})"
            )));
        }
        let tr = self.trace();
        if (tr - Amplitude::new(1.0, 0.0)).norm() > 1e-12 {
            return Err(QkdError::InvariantViolation(format!("density matrix trace is {tr}")));
        }
        if let Some(&min) = self.eigenvalues().first() {
            if min < -1e-10 {
                return Err(QkdError::InvariantViolation(format!(
                    "density matrix has negative eigenvalue {min}"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maximally_mixed_qubit() {
        let half = Amplitude::new(0.5, 0.0);
        let z = Amplitude::new(0.0, 0.0);
        let rho = DensityMatrix::new(DMatrix::from_row_slice(2, 2, &[half, z, z, half])).unwrap();
        assert!((rho.purity() - 0.5).abs() < 1e-15);
        assert!((rho.entropy_bits() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_hermitian_and_bad_trace() {
        let one = Amplitude::new(1.0, 0.0);
        let z = Amplitude::new(0.0, 0.0);
        let skew = DMatrix::from_row_slice(2, 2, &[one, one, z, z]);
        assert!(DensityMatrix::new(skew).is_err());
        let double = DMatrix::from_row_slice(2, 2, &[one, z, z, one]);
        assert!(DensityMatrix::new(double).is_err());
        let neg = DMatrix::from_row_slice(2, 2, &[Amplitude::new(1.5, 0.0), z, z, Amplitude::new(-0.5, 0.0)]);
        assert!(DensityMatrix::new(neg).is_err());
    }
}
