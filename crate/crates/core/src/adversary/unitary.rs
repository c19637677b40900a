//! Two-qubit unitaries parametrized by a Hermitian generator.
//!
//! Sixteen real coefficients weight the Pauli products `σ_a ⊗ σ_b`
//! (`a, b ∈ {I, X, Y, Z}`, coefficient index `4a + b`); the unitary is
//! `U = exp(i·H)` with `H = ½ Σ x_k σ_a ⊗ σ_b`. Every coefficient vector maps
//! to an exactly unitary matrix, and the zero vector maps to the identity.

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::qstate::Amplitude;
use crate::{QkdError, Result};

pub const GENERATOR_DIM: usize = 16;

/// Unitarity defect tolerated on reconstruction.
pub const UNITARITY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitaryParams(pub [f64; GENERATOR_DIM]);

impl Default for UnitaryParams {
    fn default() -> Self {
        Self([0.0; GENERATOR_DIM])
    }
}

fn pauli(k: usize) -> [[Amplitude; 2]; 2] {
    let z = Amplitude::new(0.0, 0.0);
    let o = Amplitude::new(1.0, 0.0);
    let i = Amplitude::new(0.0, 1.0);
    match k {
        0 => [[o, z], [z, o]],
        1 => [[z, o], [o, z]],
        2 => [[z, -i], [i, z]],
        _ => [[o, z], [z, -o]],
    }
}

/// `σ_a ⊗ σ_b` for coefficient index `k = 4a + b`.
pub fn pauli_product(k: usize) -> Matrix4<Amplitude> {
    let (pa, pb) = (pauli(k / 4), pauli(k % 4));
    Matrix4::from_fn(|r, c| pa[r / 2][c / 2] * pb[r % 2][c % 2])
}

impl UnitaryParams {
    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let arr: [f64; GENERATOR_DIM] = values.try_into().map_err(|_| {
            QkdError::Config(format!(
                "unitary parametrization needs {GENERATOR_DIM} values, got {}",
                values.len()
            ))
        })?;
        if arr.iter().any(|v| !v.is_finite()) {
            return Err(QkdError::Config("non-finite generator coefficient".into()));
        }
        Ok(Self(arr))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// The Hermitian generator `H`.
    pub fn generator(&self) -> Matrix4<Amplitude> {
        let mut h = Matrix4::zeros();
        for (k, &x) in self.0.iter().enumerate() {
            if x != 0.0 {
                h += pauli_product(k) * Amplitude::new(0.5 * x, 0.0);
            }
        }
        h
    }

    /// `exp(iH)` through the eigendecomposition of `H`.
    pub fn unitary(&self) -> Result<Matrix4<Amplitude>> {
        if self.0.iter().all(|&x| x == 0.0) {
            return Ok(Matrix4::identity());
        }
        let eig = self.generator().symmetric_eigen();
        let phases = Matrix4::from_diagonal(&eig.eigenvalues.map(|l| Amplitude::from_polar(1.0, l)));
        let u = eig.eigenvectors * phases * eig.eigenvectors.adjoint();
        let defect = unitarity_defect(&u);
        if defect.is_nan() || defect > UNITARITY_TOLERANCE {
            return Err(QkdError::InternalConsistency(format!(
                "reconstructed unitary has ‖U†U − I‖_max = {defect}"
            )));
        }
        Ok(u)
    }
}

/// `‖U†U − I‖_max`.
pub fn unitarity_defect(u: &Matrix4<Amplitude>) -> f64 {
    (u.adjoint() * u - Matrix4::identity())
        .iter()
        .map(|a| a.norm())
        .fold(0.0, f64::max)
}
