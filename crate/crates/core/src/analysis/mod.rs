//! Closed-form error rates, exact disturbance, the displayed-state oracle and
//! the zero-disturbance feasibility search.

mod exact;
mod oracle;
mod search;
pub mod simplex;

pub use exact::{
    error_profile, exact_round_error, mean_error_profile, mean_round_error, sweep, SweepResult,
    SweepRow, MAX_EXACT_ROUND,
};
pub use oracle::{
    displayed_state_oracle, oracle_stage_for, regression_states, Mismatch, OracleStage, OracleStateId,
    RegressionReport, ORACLE_ROUNDS,
};
pub use search::{appendix_objective, appendix_search, lambda_state, FeasibilityReport};

use crate::qstate::{Label, StateVector};
use crate::Result;

/// S1 error rate `2cos²θ sin²θ`.
pub fn d1_formula(theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    2.0 * c * c * s * s
}

/// S2 error rate `½(sin²θ − cos²θ)²`.
pub fn d2_formula(theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    let d = s * s - c * c;
    0.5 * d * d
}

/// The angle in (0, π/4) where `d1 = 1/4`, by bisection.
pub fn solve_theta0() -> f64 {
    // d1 rises monotonically on (0, π/4) from 0 to 1/2
    let (mut lo, mut hi) = (0.0f64, std::f64::consts::FRAC_PI_4);
    while hi - lo > 1e-14 {
        let mid = 0.5 * (lo + hi);
        if d1_formula(mid) < 0.25 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Von Neumann entropy, in bits, of the reduced state on `eve_labels`.
pub fn eve_entropy(state: &StateVector, eve_labels: &[Label]) -> Result<f64> {
    Ok(state.reduced_density(eve_labels)?.entropy_bits())
}
