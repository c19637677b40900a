//! Exact per-round error probabilities.
//!
//! Every measurement in the pipeline is branched rather than sampled, and each
//! branch carries its Born weight. The joint state entering a round is then an
//! ensemble `{(w_k, |s_k⟩)}`. Bob's error in later rounds depends on that
//! ensemble only through `ρ = Σ w_k |s_k⟩⟨s_k|`, so once the ensemble outgrows
//! the Hilbert-space dimension it is replaced by the eigen-decomposition of
//! `ρ`. That keeps deep rounds cheap without any approximation.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::{d1_formula, d2_formula};
use crate::adversary::StrategyKind;
use crate::protocol::{execute_round, initial_state, RoundSpec};
use crate::qstate::{Amplitude, Exhaustive, StateVector, BRANCH_PRUNE};
use crate::{QkdError, Result};

/// Deepest round the exact engine will evolve to.
pub const MAX_EXACT_ROUND: usize = 9;

type Ensemble = Vec<(f64, StateVector)>;

#[derive(Clone, Copy)]
enum KeyModel<'a> {
    Fixed(&'a [u8]),
    Uniform,
}

fn check_depth(rounds: usize) -> Result<()> {
    if rounds == 0 || rounds > MAX_EXACT_ROUND {
        return Err(QkdError::Config(format!(
            "exact analysis covers rounds 1..={MAX_EXACT_ROUND}, asked for {rounds}"
        )));
    }
    Ok(())
}

fn compress(ensemble: Ensemble) -> Result<Ensemble> {
    let dim = match ensemble.first() {
        Some((_, s)) => s.layout().dim(),
        None => return Ok(ensemble),
    };
    if ensemble.len() <= dim {
        return Ok(ensemble);
    }
    let layout = ensemble[0].1.layout().clone();
    let mut rho = DMatrix::<Amplitude>::zeros(dim, dim);
    for (w, s) in &ensemble {
        let v = nalgebra::DVector::from_column_slice(s.amplitudes());
        rho += (&v * v.adjoint()) * Amplitude::new(*w, 0.0);
    }
    let eig = rho.symmetric_eigen();
    let mut out = Vec::with_capacity(dim);
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < BRANCH_PRUNE {
            continue;
        }
        let amps: Vec<Amplitude> = eig.eigenvectors.column(k).iter().copied().collect();
        out.push((lambda, StateVector::from_amplitudes(layout.clone(), amps)?));
    }
    Ok(out)
}

fn evolve(strategy: &StrategyKind, theta: f64, rounds: usize, key: KeyModel<'_>) -> Result<Vec<f64>> {
    check_depth(rounds)?;
    if let KeyModel::Fixed(bits) = key {
        if bits.len() < rounds {
            return Err(QkdError::Config(format!(
                "{} key bits supplied for {rounds} rounds",
                bits.len()
            )));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(QkdError::Config("key bits must be 0 or 1".into()));
        }
    }
    let mut ensemble: Ensemble = vec![(1.0, initial_state(strategy)?)];
    let mut errors = Vec::with_capacity(rounds);
    for round in 1..=rounds {
        let choices: &[(u8, f64)] = match key {
            KeyModel::Fixed(bits) => &[(bits[round - 1], 1.0)],
            KeyModel::Uniform => &[(0, 0.5), (1, 0.5)],
        };
        let mut next = Vec::with_capacity(ensemble.len() * 4);
        let mut err = 0.0;
        for (w, state) in &ensemble {
            for &(key_bit, kw) in choices {
                let spec = RoundSpec { strategy, round, theta, key_bit, mutation: None };
                for b in execute_round(state.clone(), &spec, &mut Exhaustive, &mut |_, _| {})? {
                    let p = w * kw * b.weight;
                    if b.bob_bit != key_bit {
                        err += p;
                    }
                    next.push((p, b.state));
                }
            }
        }
        errors.push(err);
        ensemble = compress(next)?;
    }
    Ok(errors)
}

/// Exact probability that Bob misreads round `target_round` for the key
/// `psi_bits`, with Eve's and Bob's earlier outcomes weighted by their Born
/// probabilities.
pub fn exact_round_error(
    strategy: &StrategyKind,
    theta: f64,
    target_round: usize,
    psi_bits: &[u8],
) -> Result<f64> {
    Ok(*error_profile(strategy, theta, target_round, psi_bits)?
        .last()
        .expect("depth checked"))
}

/// Exact error probability of every round `1..=rounds` for one key.
pub fn error_profile(
    strategy: &StrategyKind,
    theta: f64,
    rounds: usize,
    psi_bits: &[u8],
) -> Result<Vec<f64>> {
    evolve(strategy, theta, rounds, KeyModel::Fixed(psi_bits))
}

/// [`exact_round_error`] averaged uniformly over all keys.
pub fn mean_round_error(strategy: &StrategyKind, theta: f64, target_round: usize) -> Result<f64> {
    Ok(*mean_error_profile(strategy, theta, target_round)?
        .last()
        .expect("depth checked"))
}

/// [`error_profile`] averaged uniformly over all keys.
pub fn mean_error_profile(strategy: &StrategyKind, theta: f64, rounds: usize) -> Result<Vec<f64>> {
    evolve(strategy, theta, rounds, KeyModel::Uniform)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub theta: f64,
    pub d1_formula: f64,
    pub d2_formula: f64,
    pub s1_exact_round2: f64,
    pub s2_exact_first_extraction: f64,
    pub sum_check: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

/// Formula values and key-averaged exact disturbance (S1 in round 2, S2 in
/// round 3) at each angle of `grid`, in grid order.
pub fn sweep(grid: &[f64]) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(QkdError::Config("empty θ grid".into()));
    }
    let rows = grid
        .par_iter()
        .map(|&theta| {
            let d1 = d1_formula(theta);
            let d2 = d2_formula(theta);
            Ok(SweepRow {
                theta,
                d1_formula: d1,
                d2_formula: d2,
                s1_exact_round2: mean_round_error(&StrategyKind::S1, theta, 2)?,
                s2_exact_first_extraction: mean_round_error(&StrategyKind::S2, theta, 3)?,
                sum_check: d1 + d2,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { rows })
}
