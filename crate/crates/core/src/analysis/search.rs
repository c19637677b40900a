//! Numerical search for a zero-disturbance entangling attack.
//!
//! Eve starts entangled with the pair as `|Λ⟩ = (|000⟩ + |111⟩)/√2` on
//! (A, B, E) and applies one unitary `U` to (γ, E) during the next round. The
//! objective is Bob's worst-case error probability over the carrier bit. A
//! zero objective means Eve stays in the loop without ever being seen.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::Matrix4;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::eve_entropy;
use super::simplex::{self, Options};
use crate::adversary::{UnitaryParams, GENERATOR_DIM};
use crate::protocol::CARRIER_POSITION;
use crate::qstate::{Amplitude, Label, RegisterLayout, StateVector};
use crate::rng;
use crate::{QkdError, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub theta: f64,
    pub best_disturbance: f64,
    pub best_params: UnitaryParams,
    pub restarts: usize,
    pub iterations_used: usize,
    /// Entropy of Eve's qubit after the best attack, in bits (one qubit, so
    /// already normalized to [0, 1]).
    pub eve_entropy_after: f64,
    /// Best objective of each restart, in restart order.
    pub restart_values: Vec<f64>,
}

/// `(|000⟩ + |111⟩)/√2` on (A, B, E).
pub fn lambda_state() -> Result<StateVector> {
    let layout = RegisterLayout::new(vec![Label::A, Label::B, Label::Eve])?;
    let mut amps = vec![Amplitude::new(0.0, 0.0); 8];
    amps[0] = Amplitude::new(FRAC_1_SQRT_2, 0.0);
    amps[7] = Amplitude::new(FRAC_1_SQRT_2, 0.0);
    StateVector::from_amplitudes(layout, amps)
}

/// State after Bob's CNOT, before his measurement.
fn decoded(rotated: &StateVector, psi2: u8, u: &Matrix4<Amplitude>) -> Result<StateVector> {
    let mut s = rotated.attach_qubit_at(Label::Carrier, psi2, CARRIER_POSITION)?;
    s.apply_cnot(Label::A, Label::Carrier)?;
    s.apply_two_qubit(Label::Carrier, Label::Eve, u)?;
    s.apply_cnot(Label::B, Label::Carrier)?;
    Ok(s)
}

fn rotated_lambda(theta: f64) -> Result<StateVector> {
    let mut s = lambda_state()?;
    s.apply_rotation(Label::A, theta)?;
    s.apply_rotation(Label::B, theta)?;
    Ok(s)
}

fn worst_error(rotated: &StateVector, u: &Matrix4<Amplitude>) -> Result<f64> {
    let mut worst = 0.0f64;
    for psi2 in 0..2u8 {
        let p1 = decoded(rotated, psi2, u)?.probability_one(Label::Carrier)?;
        worst = worst.max(if psi2 == 0 { p1 } else { 1.0 - p1 });
    }
    Ok(worst)
}

/// Bob's error probability maximized over the carrier bit, for Eve's unitary
/// `exp(iH(params))` on (γ, E).
pub fn appendix_objective(theta: f64, params: &UnitaryParams) -> Result<f64> {
    worst_error(&rotated_lambda(theta)?, &params.unitary()?)
}

struct RestartResult {
    params: UnitaryParams,
    value: f64,
    iterations: usize,
}

fn run_restart(theta: f64, rotated: &StateVector, max_iters: usize, seed: u64, k: usize) -> Result<RestartResult> {
    let mut rng = rng::stream(seed, k as u64);
    let x0: Vec<f64> = (0..GENERATOR_DIM).map(|_| rng.random_range(-PI..PI)).collect();
    let mut failure: Option<QkdError> = None;
    let objective = |x: &[f64]| {
        let params = UnitaryParams::from_slice(x).and_then(|p| p.unitary());
        match params.and_then(|u| worst_error(rotated, &u)) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::INFINITY
            }
        }
    };
    let opts = Options { max_iters, ..Options::default() };
    let out = simplex::minimize(objective, &x0, &opts);
    if let Some(e) = failure {
        return Err(QkdError::InternalConsistency(format!(
            "appendix search at θ = {theta}, restart {k}: {e}"
        )));
    }
    Ok(RestartResult { params: UnitaryParams::from_slice(&out.x)?, value: out.value, iterations: out.iterations })
}

/// Multi-start simplex search over Eve's unitaries. Restart `k` starts from a
/// point drawn on stream `k` of `seed`, so a run with more restarts extends a
/// run with fewer.
pub fn appendix_search(theta: f64, restarts: usize, max_iters: usize, seed: u64) -> Result<FeasibilityReport> {
    if restarts == 0 {
        return Err(QkdError::Config("appendix search needs at least one restart".into()));
    }
    if !theta.is_finite() {
        return Err(QkdError::Config(format!("theta {theta} is not finite")));
    }
    let rotated = rotated_lambda(theta)?;
    let results = (0..restarts)
        .into_par_iter()
        .map(|k| run_restart(theta, &rotated, max_iters, seed, k))
        .collect::<Result<Vec<_>>>()?;

    let mut best = 0;
    for (k, r) in results.iter().enumerate() {
        if r.value < results[best].value {
            best = k;
        }
    }
    let best_params = results[best].params;
    let after = decoded(&rotated, 0, &best_params.unitary()?)?;
    Ok(FeasibilityReport {
        theta,
        best_disturbance: results[best].value,
        best_params,
        restarts,
        iterations_used: results.iter().map(|r| r.iterations).sum(),
        eve_entropy_after: eve_entropy(&after, &[Label::Eve])?,
        restart_values: results.iter().map(|r| r.value).collect(),
    })
}
