//! Acceptance criteria, one line each. Run with `cargo test --test acceptance`.

use std::f64::consts::{FRAC_PI_4, FRAC_PI_8, PI};
use std::panic::{self, AssertUnwindSafe};
use std::process::Command;

use qkdlab::adversary::{infer_key, StrategyKind, UnitaryParams};
use qkdlab::analysis::{
    appendix_objective, appendix_search, d1_formula, d2_formula, error_profile, exact_round_error,
    mean_error_profile, regression_states, solve_theta0,
};
use qkdlab::protocol::{run_session, ProtocolConfig, Session, Stage};
use qkdlab::qstate::{Amplitude, Label};
use qkdlab::rng::{self, streams};
use rand::Rng;

type Check = fn() -> Result<String, String>;

fn ensure(ok: bool, detail: String) -> Result<String, String> {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_key(seed: u64, len: usize) -> Vec<u8> {
    rng::random_bits(&mut rng::stream(seed, streams::KEY), len)
}

fn all_keys(n: usize) -> impl Iterator<Item = Vec<u8>> {
    (0..1u32 << n).map(move |m| (0..n).map(|i| ((m >> i) & 1) as u8).collect())
}

fn c1_state_regression() -> Result<String, String> {
    let r = regression_states(&StrategyKind::S2, None).map_err(|e| e.to_string())?;
    ensure(
        r.passed() && r.stages_checked == 32 * 32 && r.worst_fidelity >= 1.0 - 1e-12,
        format!(
            "{} stage checks over {} keys, worst fidelity {:.3e} from 1, mismatch {:?}",
            r.stages_checked,
            r.key_assignments,
            1.0 - r.worst_fidelity,
            r.first_mismatch
        ),
    )
}

fn c2_undetectable_attack() -> Result<String, String> {
    let mut bad = Vec::new();
    for trial in 0..20 {
        let seed = rng::trial_seed(2, trial);
        let key = random_key(seed, 101);
        let r = run_session(&ProtocolConfig::new(StrategyKind::S2, FRAC_PI_4, 101, seed), &key)
            .map_err(|e| e.to_string())?;
        let rounds: Vec<usize> = r.eve_records.iter().map(|e| e.round).collect();
        let expected: Vec<usize> = (3..=101).step_by(2).collect();
        let bits_ok = r.eve_records.iter().all(|e| e.bit == key[e.round - 1] ^ key[0]);
        if r.qber != 0.0 || rounds != expected || !bits_ok {
            bad.push(trial);
        }
    }
    ensure(bad.is_empty(), format!("20 keys, qber 0 and 50 exact XOR records each; failing trials {bad:?}"))
}

fn c3_half_key_inference() -> Result<String, String> {
    let sessions = 200;
    let mut total = 0.0;
    for k in 0..sessions {
        let seed = rng::trial_seed(7, k);
        let key = random_key(seed, 101);
        let cfg = ProtocolConfig::new(StrategyKind::S2, FRAC_PI_4, 101, seed).with_check_fraction(0.1);
        let r = run_session(&cfg, &key).map_err(|e| e.to_string())?;
        let leaked = &r.detection.as_ref().expect("detection runs").leaked_bits;
        total += infer_key(&r.eve_records, leaked, &key).accuracy;
    }
    let mean = total / sessions as f64;
    ensure((0.45..=0.55).contains(&mean), format!("mean accuracy {mean:.5} over {sessions} sessions (band [0.45, 0.55])"))
}

fn c4_d1_exactness() -> Result<String, String> {
    let mut worst = 0.0f64;
    for k in 0..32 {
        let theta = k as f64 * PI / 32.0;
        for key in all_keys(2) {
            let e = exact_round_error(&StrategyKind::S1, theta, 2, &key).map_err(|e| e.to_string())?;
            worst = worst.max((e - d1_formula(theta)).abs());
        }
    }
    let quarter = exact_round_error(&StrategyKind::S1, FRAC_PI_4, 2, &[0, 0]).map_err(|e| e.to_string())?;
    ensure(
        worst <= 1e-12 && (quarter - 0.5).abs() <= 1e-12,
        format!("max |exact − d1| = {worst:.2e} on 32 angles; π/4 gives {quarter}"),
    )
}

fn c5_tradeoff_identity() -> Result<String, String> {
    let mut r = rng::stream(5, 0);
    let worst = (0..1000)
        .map(|_| {
            let t: f64 = r.random_range(-2.0 * PI..2.0 * PI);
            (d1_formula(t) + d2_formula(t) - 0.5).abs()
        })
        .fold(0.0, f64::max);
    let t0 = solve_theta0();
    let ok = worst <= 1e-15
        && (t0 - FRAC_PI_8).abs() <= 1e-12
        && (d1_formula(t0) - 0.25).abs() <= 1e-12
        && (d2_formula(t0) - 0.25).abs() <= 1e-12;
    ensure(ok, format!("max |d1 + d2 − 1/2| = {worst:.1e}; θ0 − π/8 = {:.1e}", t0 - FRAC_PI_8))
}

fn c6_s2_endpoints() -> Result<String, String> {
    let mut worst = 0.0f64;
    for key in all_keys(9) {
        for e in error_profile(&StrategyKind::S2, FRAC_PI_4, 9, &key).map_err(|e| e.to_string())? {
            worst = worst.max(e.abs());
        }
    }
    let eighth = mean_error_profile(&StrategyKind::S2, FRAC_PI_8, 5).map_err(|e| e.to_string())?;
    let peak = eighth[1..5].iter().copied().fold(0.0, f64::max);
    ensure(
        worst <= 1e-12 && peak >= 1e-3,
        format!("π/4: max error {worst:.1e} over 512 keys × 9 rounds; π/8 rounds 2–5: {:?}", &eighth[1..5]),
    )
}

const SEARCH_RESTARTS: usize = 20;
const SEARCH_ITERS: usize = 2000;
const SEARCH_SEED: u64 = 0;

fn search_best(theta: f64) -> Result<f64, String> {
    Ok(appendix_search(theta, SEARCH_RESTARTS, SEARCH_ITERS, SEARCH_SEED).map_err(|e| e.to_string())?.best_disturbance)
}

fn c7a_feasible_at_quarter_turn() -> Result<String, String> {
    let best = search_best(FRAC_PI_4)?;
    ensure(best <= 1e-6, format!("θ = π/4: best disturbance {best:.3e} (need ≤ 1e-6)"))
}

fn c7b_infeasible_at_theta0() -> Result<String, String> {
    let best = search_best(FRAC_PI_8)?;
    ensure(best >= 1e-3, format!("θ = π/8: best disturbance {best:.6} (need ≥ 1e-3)"))
}

fn c7c_infeasible_at_zero() -> Result<String, String> {
    let best = search_best(0.0)?;
    ensure(best >= 1e-3, format!("θ = 0: best disturbance {best:.3e} (need ≥ 1e-3)"))
}

fn c7d_identity_objective() -> Result<String, String> {
    let mut worst = 0.0f64;
    let mut angles: Vec<f64> = (0..32).map(|k| k as f64 * PI / 32.0).collect();
    angles.extend([FRAC_PI_4, FRAC_PI_8, 0.0]);
    for t in angles {
        let v = appendix_objective(t, &UnitaryParams::default()).map_err(|e| e.to_string())?;
        worst = worst.max((v - d1_formula(t)).abs());
    }
    ensure(worst <= 1e-12, format!("max |objective(U = I) − d1| = {worst:.1e}"))
}

fn c8_channel_indistinguishability() -> Result<String, String> {
    let half = nalgebra::DMatrix::from_diagonal_element(2, 2, Amplitude::new(0.5, 0.0));
    let mut worst = 0.0f64;
    for k in 0..8 {
        let theta = k as f64 * PI / 8.0;
        for bit in 0..2u8 {
            let mut s = Session::init(ProtocolConfig::new(StrategyKind::None, theta, 1, 0)).map_err(|e| e.to_string())?;
            let mut diff = None;
            s.run_round_observed(bit, &mut |stage, st| {
                if stage == Stage::Encoded {
                    diff = st.reduced_density(&[Label::Carrier]).ok().map(|r| r.max_abs_diff(&half));
                }
            })
            .map_err(|e| e.to_string())?;
            worst = worst.max(diff.ok_or("carrier never observed")?);
        }
    }
    ensure(worst <= 1e-12, format!("max |ρ_γ − I/2| = {worst:.1e} over 8 angles × 2 bits"))
}

fn c9_determinism() -> Result<String, String> {
    let bin = env!("CARGO_BIN_EXE_qkdlab");
    let run = ["run", "--strategy", "s2", "--theta", "0.39269908169872414", "--rounds", "101", "--seed", "7"];
    let search = ["appendix-search", "--theta", "0.7853981633974483", "--restarts", "8", "--max-iters", "500", "--seed", "7"];
    for args in [&run[..], &search[..]] {
        let mut outs = Vec::new();
        for threads in ["1", "1", "4", "4"] {
            let out = Command::new(bin)
                .args(args)
                .args(["--threads", threads])
                .output()
                .map_err(|e| e.to_string())?;
            if !out.status.success() {
                return Err(format!("{} exited with {:?}", args[0], out.status.code()));
            }
            outs.push(out.stdout);
        }
        if outs.windows(2).any(|w| w[0] != w[1]) {
            return Err(format!("{} output differs between executions", args[0]));
        }
    }
    Ok("run and appendix-search byte-identical over 2 executions × {1, 4} threads".into())
}

fn main() {
    let criteria: [(&str, Check); 12] = [
        ("1 state regression", c1_state_regression),
        ("2 undetectable attack", c2_undetectable_attack),
        ("3 half-key inference", c3_half_key_inference),
        ("4 d1 exactness", c4_d1_exactness),
        ("5 trade-off identity", c5_tradeoff_identity),
        ("6 S2 disturbance endpoints", c6_s2_endpoints),
        ("7a feasibility at π/4", c7a_feasible_at_quarter_turn),
        ("7b infeasibility at π/8", c7b_infeasible_at_theta0),
        ("7c infeasibility at 0", c7c_infeasible_at_zero),
        ("7d objective at U = I", c7d_identity_objective),
        ("8 channel indistinguishability", c8_channel_indistinguishability),
        ("9 determinism", c9_determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("[PASS] {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
