//! The `qkdlab` batch runner.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage, configuration or
//! internal error. Every report carries `"schema_version": 1` (JSON) or a
//! `# schema_version: 1` comment line (CSV).
//!
//! `--config <file>` reads a flat `key = value` file whose keys are long flag
//! names; its entries are spliced in front of the command-line flags, so
//! flags given on the command line win.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::adversary::{infer_key, StrategyKind};
use crate::analysis::{self, MAX_EXACT_ROUND};
use crate::protocol::{self, Mode, Mutation, ProtocolConfig};
use crate::rng::{self, streams};
use crate::{QkdError, Result};

pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const SWEEP_HEADER: &str = "theta,d1_formula,d2_formula,s1_exact_round2,s2_exact_first_extraction,sum_check";

#[derive(Debug, Parser)]
#[command(name = "qkdlab", version, about = "Statevector laboratory for EPR-reuse QKD attacks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Replay rounds 1–5 at θ = π/4 against the displayed S2 states.
    #[command(args_override_self = true)]
    Verify(VerifyArgs),
    /// Run one protocol session.
    #[command(args_override_self = true)]
    Run(RunArgs),
    /// Tabulate formula and exact disturbance over a θ grid.
    #[command(args_override_self = true)]
    Sweep(SweepArgs),
    /// Search for a zero-disturbance entangling unitary.
    #[command(name = "appendix-search", args_override_self = true)]
    AppendixSearch(SearchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    None,
    S1,
    S2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MutationArg {
    SkipEveRotation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Exact,
    Sampled,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Output path, or `-` for standard output.
    #[arg(long, default_value = "-")]
    pub out: String,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Flat `key = value` file of flag defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ThetaArgs {
    /// Rotation angle in radians.
    #[arg(long, allow_negative_numbers = true, conflicts_with = "theta_deg")]
    pub theta: Option<f64>,
    /// Rotation angle in degrees (reported back in radians).
    #[arg(long, allow_negative_numbers = true)]
    pub theta_deg: Option<f64>,
}

impl ThetaArgs {
    fn radians(&self, default: f64) -> f64 {
        match (self.theta, self.theta_deg) {
            (Some(t), _) => t,
            (None, Some(d)) => d.to_radians(),
            (None, None) => default,
        }
    }
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub mutate: Option<MutationArg>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value = "s2")]
    pub strategy: StrategyArg,
    #[command(flatten)]
    pub theta: ThetaArgs,
    #[arg(long, default_value_t = 101)]
    pub rounds: usize,
    #[arg(long, env = "QKDLAB_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.1)]
    pub check_fraction: f64,
    /// `random`, or an explicit bitstring such as `101101001`.
    #[arg(long, default_value = "random")]
    pub key: String,
    /// `exact` adds branch-enumerated per-round error probabilities for the
    /// first rounds; the session itself always samples.
    #[arg(long, value_enum, default_value = "sampled")]
    pub mode: ModeArg,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, allow_negative_numbers = true, default_value_t = 0.0)]
    pub theta_start: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = std::f64::consts::FRAC_PI_2)]
    pub theta_end: f64,
    #[arg(long, default_value_t = 33)]
    pub steps: usize,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub theta: ThetaArgs,
    #[arg(long, default_value_t = 20)]
    pub restarts: usize,
    #[arg(long, default_value_t = 2000)]
    pub max_iters: usize,
    #[arg(long, env = "QKDLAB_SEED", default_value_t = 0)]
    pub seed: u64,
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Verify(a) => &a.common,
            Command::Run(a) => &a.common,
            Command::Sweep(a) => &a.common,
            Command::AppendixSearch(a) => &a.common,
        }
    }
}

/// Reads a `key = value` file into `--key value` tokens.
pub fn config_tokens(text: &str) -> Result<Vec<OsString>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            QkdError::Config(format!("config line {}: expected key = value", n + 1))
        })?;
        let key = key.trim().replace('_', "-");
        if key.is_empty() || key == "config" {
            return Err(QkdError::Config(format!("config line {}: bad key {key:?}", n + 1)));
        }
        out.push(format!("--{key}").into());
        out.push(value.trim().into());
    }
    Ok(out)
}

/// Finds `--config` in raw arguments and splices the file's entries in right
/// after the subcommand name.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = args.get(i + 1).cloned();
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(p.into());
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text = std::fs::read_to_string(&path).map_err(|e| {
        QkdError::Config(format!("cannot read config {}: {e}", path.to_string_lossy()))
    })?;
    let tokens = config_tokens(&text)?;
    let sub = args
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map(|p| p + 2)
        .unwrap_or(args.len());
    let mut out = args[..sub].to_vec();
    out.extend(tokens);
    out.extend_from_slice(&args[sub..]);
    Ok(out)
}

fn to_json(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    s.push('\n');
    s
}

fn with_schema<T: Serialize>(command: &str, body: &T) -> Result<serde_json::Value> {
    let mut v = serde_json::to_value(body)
        .map_err(|e| QkdError::InternalConsistency(format!("serializing report: {e}")))?;
    let obj = v
        .as_object_mut()
        .ok_or_else(|| QkdError::InternalConsistency("report is not a JSON object".into()))?;
    let mut out = serde_json::Map::new();
    out.insert("schema_version".into(), json!(SCHEMA_VERSION));
    out.insert("command".into(), json!(command));
    out.append(obj);
    Ok(serde_json::Value::Object(out))
}

fn json_only(common: &Common, command: &str) -> Result<()> {
    if common.format == Some(Format::Csv) {
        return Err(QkdError::Config(format!("{command} writes JSON only")));
    }
    Ok(())
}

/// Command output plus its exit code.
pub struct Outcome {
    pub text: String,
    pub code: i32,
}

fn cmd_verify(a: &VerifyArgs) -> Result<Outcome> {
    json_only(&a.common, "verify")?;
    let mutation = a.mutate.map(|MutationArg::SkipEveRotation| Mutation::SkipEveRotation { round: 2 });
    let report = analysis::regression_states(&StrategyKind::S2, mutation)?;
    let passed = report.passed();
    let mut v = with_schema("verify", &report)?;
    v["passed"] = json!(passed);
    v["mutation"] = json!(a.mutate.map(|_| "skip-eve-rotation"));
    Ok(Outcome { text: to_json(&v), code: if passed { EXIT_OK } else { EXIT_VERIFY_FAILED } })
}

fn parse_key(spec: &str, rounds: usize, seed: u64) -> Result<Vec<u8>> {
    if spec == "random" {
        return Ok(rng::random_bits(&mut rng::stream(seed, streams::KEY), rounds));
    }
    let bits: Vec<u8> = spec
        .chars()
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            _ => Err(QkdError::Config(format!("key {spec:?} is neither `random` nor a bitstring"))),
        })
        .collect::<Result<_>>()?;
    if bits.len() != rounds {
        return Err(QkdError::Config(format!("key has {} bits, rounds is {rounds}", bits.len())));
    }
    Ok(bits)
}

fn cmd_run(a: &RunArgs) -> Result<Outcome> {
    json_only(&a.common, "run")?;
    let strategy = match a.strategy {
        StrategyArg::None => StrategyKind::None,
        StrategyArg::S1 => StrategyKind::S1,
        StrategyArg::S2 => StrategyKind::S2,
    };
    let config = ProtocolConfig {
        theta: a.theta.radians(std::f64::consts::FRAC_PI_4),
        rounds: a.rounds,
        check_fraction: a.check_fraction,
        seed: a.seed,
        mode: match a.mode {
            ModeArg::Exact => Mode::Exact,
            ModeArg::Sampled => Mode::Sampled,
        },
        strategy,
    };
    config.validate()?;
    let key = parse_key(&a.key, config.rounds, config.seed)?;
    let result = protocol::run_session(&config, &key)?;
    let leaked = result.detection.as_ref().map(|d| d.leaked_bits.clone()).unwrap_or_default();
    let inference = infer_key(&result.eve_records, &leaked, &key);
    let exact = match config.mode {
        Mode::Exact => {
            let depth = config.rounds.min(MAX_EXACT_ROUND);
            Some(analysis::error_profile(&config.strategy, config.theta, depth, &key)?)
        }
        Mode::Sampled => None,
    };
    let v = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "run",
        "config": {
            "strategy": config.strategy.to_string(),
            "theta": config.theta,
            "rounds": config.rounds,
            "check_fraction": config.check_fraction,
            "seed": config.seed,
            "mode": config.mode,
        },
        "key": key.iter().map(|b| char::from(b'0' + b)).collect::<String>(),
        "transcripts": result.transcripts,
        "qber": result.qber,
        "eve_records": result.eve_records,
        "inference": {
            "candidates": inference.candidate_keys,
            "psi1": inference.psi1,
            "resolved": inference.resolved,
            "accuracy": inference.accuracy,
        },
        "detection": result.detection,
        "exact_round_errors": exact,
    });
    Ok(Outcome { text: to_json(&v), code: EXIT_OK })
}

/// `steps` evenly spaced angles from `start` to `end` inclusive.
pub fn theta_grid(start: f64, end: f64, steps: usize) -> Result<Vec<f64>> {
    if steps == 0 || !start.is_finite() || !end.is_finite() || start > end {
        return Err(QkdError::Config(format!(
            "invalid sweep range {start}..{end} with {steps} steps"
        )));
    }
    if steps == 1 {
        return Ok(vec![start]);
    }
    let h = (end - start) / (steps - 1) as f64;
    Ok((0..steps)
        .map(|i| if i == steps - 1 { end } else { start + i as f64 * h })
        .collect())
}

fn cmd_sweep(a: &SweepArgs) -> Result<Outcome> {
    let grid = theta_grid(a.theta_start, a.theta_end, a.steps)?;
    let result = analysis::sweep(&grid)?;
    let text = match a.common.format.unwrap_or(Format::Csv) {
        Format::Json => {
            let mut v = with_schema("sweep", &result)?;
            v["averaging"] = json!("uniform over key bits; Born weights over measurement branches");
            to_json(&v)
        }
        Format::Csv => {
            let mut s = format!("# schema_version: {SCHEMA_VERSION}\n{SWEEP_HEADER}\n");
            for r in &result.rows {
                let _ = writeln!(
                    s,
                    "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                    r.theta, r.d1_formula, r.d2_formula, r.s1_exact_round2, r.s2_exact_first_extraction, r.sum_check
                );
            }
            s
        }
    };
    Ok(Outcome { text, code: EXIT_OK })
}

fn cmd_search(a: &SearchArgs) -> Result<Outcome> {
    json_only(&a.common, "appendix-search")?;
    let theta = a.theta.radians(std::f64::consts::FRAC_PI_4);
    let report = analysis::appendix_search(theta, a.restarts, a.max_iters, a.seed)?;
    let mut v = with_schema("appendix-search", &report)?;
    v["seed"] = json!(a.seed);
    v["max_iters"] = json!(a.max_iters);
    Ok(Outcome { text: to_json(&v), code: EXIT_OK })
}

/// Runs a parsed command on the configured thread pool.
pub fn execute(cli: &Cli) -> Result<Outcome> {
    let work = || match &cli.command {
        Command::Verify(a) => cmd_verify(a),
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::AppendixSearch(a) => cmd_search(a),
    };
    match cli.command.common().threads {
        Some(0) => Err(QkdError::Config("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| QkdError::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    }
}

fn write_output(out: &str, text: &str) -> std::io::Result<()> {
    if out == "-" {
        use std::io::Write;
        let mut stdout = std::io::stdout().lock();
        stdout.write_all(text.as_bytes())?;
        stdout.flush()
    } else {
        std::fs::write(out, text)
    }
}

/// Entry point shared by the binary and tests; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("qkdlab: {e}");
            return EXIT_USAGE;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(outcome) => {
            if let Err(e) = write_output(&cli.command.common().out, &outcome.text) {
                eprintln!("qkdlab: writing {}: {e}", cli.command.common().out);
                return EXIT_USAGE;
            }
            outcome.code
        }
        Err(e) => {
            eprintln!("qkdlab: {e}");
            EXIT_USAGE
        }
    }
}
