//! Protocol sessions over one reused EPR pair.
//!
//! A round runs the fixed pipeline
//!
//! 1. Alice and Bob rotate their halves by `R(θ)`; Eve may rotate her ancilla;
//! 2. Alice attaches the carrier `γ = |ψ⟩` and applies CNOT(A→γ);
//! 3. Eve's channel program acts on (γ, E);
//! 4. Bob applies CNOT(B→γ) and measures γ;
//! 5. the measured carrier is discarded.
//!
//! [`execute_round`] is the single implementation of that pipeline. A
//! [`Session`] drives it with sampled measurements; the analysis module drives
//! it with exhaustive branching to get exact error probabilities.

use rand::Rng;
use serde::Serialize;

use crate::adversary::{self, EveRecord, EveState, StrategyKind};
use crate::qstate::{Collapse, Label, Sampled, StateVector};
use crate::rng::{self, streams, StreamRng};
use crate::{QkdError, Result};

/// Position of the carrier in the register: right after A and B, before E.
pub const CARRIER_POSITION: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Exact probabilities are requested from the analysis layer alongside the
    /// sampled session; the session itself always samples.
    Exact,
    #[default]
    Sampled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub theta: f64,
    pub rounds: usize,
    pub check_fraction: f64,
    pub seed: u64,
    pub mode: Mode,
    pub strategy: StrategyKind,
}

impl ProtocolConfig {
    pub fn new(strategy: StrategyKind, theta: f64, rounds: usize, seed: u64) -> Self {
        Self { theta, rounds, check_fraction: 0.0, seed, mode: Mode::Sampled, strategy }
    }

    pub fn with_check_fraction(mut self, check_fraction: f64) -> Self {
        self.check_fraction = check_fraction;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(QkdError::Config("a session needs at least one round".into()));
        }
        if !(0.0..1.0).contains(&self.check_fraction) {
            return Err(QkdError::Config(format!(
                "check fraction {} outside [0, 1)",
                self.check_fraction
            )));
        }
        if !self.theta.is_finite() {
            return Err(QkdError::Config(format!("theta {} is not finite", self.theta)));
        }
        if let StrategyKind::Parametrized(p) = &self.strategy {
            p.unitary()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundTranscript {
    /// 1-based round number.
    pub index: usize,
    pub sent: u8,
    pub received: u8,
    pub error: bool,
    pub eve_record: Option<EveRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionReport {
    pub check_indices: Vec<usize>,
    pub mismatches: usize,
    pub leaked_bits: Vec<(usize, u8)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionResult {
    pub transcripts: Vec<RoundTranscript>,
    pub qber: f64,
    pub eve_records: Vec<EveRecord>,
    pub detection: Option<DetectionReport>,
}

impl SessionResult {
    pub fn sent_key(&self) -> Vec<u8> {
        self.transcripts.iter().map(|t| t.sent).collect()
    }
}

/// Points in the round pipeline where an observer is shown the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// After the start-of-round rotations.
    Rotated,
    /// Carrier attached, before Alice's CNOT.
    Attached,
    /// After Alice's CNOT.
    Encoded,
    /// After op `n` of Eve's channel program.
    Channel(usize),
    /// After Bob's CNOT, before his measurement.
    Decoded,
    /// Carrier measured and discarded.
    Settled,
}

/// Deliberate pipeline faults, for checking that verification notices them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    SkipEveRotation { round: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct RoundSpec<'a> {
    pub strategy: &'a StrategyKind,
    pub round: usize,
    pub theta: f64,
    pub key_bit: u8,
    pub mutation: Option<Mutation>,
}

/// One way a round can end.
#[derive(Debug, Clone)]
pub struct RoundBranch {
    /// Probability relative to the round's input state.
    pub weight: f64,
    pub state: StateVector,
    pub eve_bit: Option<u8>,
    pub bob_bit: u8,
}

/// Runs one round on `state` (layout `[A, B]` or `[A, B, E]`).
pub fn execute_round<C: Collapse + ?Sized>(
    mut state: StateVector,
    spec: &RoundSpec<'_>,
    collapse: &mut C,
    observe: &mut dyn FnMut(Stage, &StateVector),
) -> Result<Vec<RoundBranch>> {
    if spec.key_bit > 1 {
        return Err(QkdError::Config(format!("key bit {} is not 0 or 1", spec.key_bit)));
    }
    if state.layout().contains(Label::Carrier) {
        return Err(QkdError::Sequencing("a carrier is already in flight".into()));
    }
    state.apply_rotation(Label::A, spec.theta)?;
    state.apply_rotation(Label::B, spec.theta)?;
    let skip = matches!(spec.mutation, Some(Mutation::SkipEveRotation { round }) if round == spec.round);
    if !skip {
        adversary::rotate_ancilla(spec.strategy, spec.round, &mut state, spec.theta)?;
    }
    observe(Stage::Rotated, &state);

    let mut state = state.attach_qubit_at(Label::Carrier, spec.key_bit, CARRIER_POSITION)?;
    observe(Stage::Attached, &state);
    state.apply_cnot(Label::A, Label::Carrier)?;
    observe(Stage::Encoded, &state);

    let program = spec.strategy.channel_program(spec.round)?;
    let channel = adversary::run_channel_program(&program, state, collapse, &mut |step, s| {
        observe(Stage::Channel(step), s)
    })?;

    let mut out = Vec::with_capacity(channel.len() * 2);
    for ch in channel {
        let mut s = ch.state;
        s.apply_cnot(Label::B, Label::Carrier)?;
        observe(Stage::Decoded, &s);
        for m in collapse.collapse(&s, Label::Carrier)? {
            let settled = m.state.discard_qubit(Label::Carrier)?;
            settled.check_normalized()?;
            observe(Stage::Settled, &settled);
            out.push(RoundBranch {
                weight: ch.weight * m.probability,
                state: settled,
                eve_bit: ch.measured,
                bob_bit: m.bit,
            });
        }
    }
    Ok(out)
}

/// The joint state at the start of a session: `|Φ⁺⟩_AB`, plus Eve's `|0⟩_E`
/// when the strategy uses an ancilla.
pub fn initial_state(strategy: &StrategyKind) -> Result<StateVector> {
    let bell = StateVector::bell_pair(Label::A, Label::B)?;
    if strategy.uses_ancilla() {
        bell.attach_qubit(Label::Eve, 0)
    } else {
        Ok(bell)
    }
}

/// A live session: one shared pair reused round after round.
#[derive(Debug, Clone)]
pub struct Session {
    config: ProtocolConfig,
    state: StateVector,
    eve: EveState,
    psi1: Option<u8>,
    rng: StreamRng,
    transcripts: Vec<RoundTranscript>,
    mutation: Option<Mutation>,
}

impl Session {
    pub fn init(config: ProtocolConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            state: initial_state(&config.strategy)?,
            eve: EveState::new(config.strategy.clone()),
            psi1: None,
            rng: rng::stream(config.seed, streams::MEASUREMENT),
            transcripts: Vec::with_capacity(config.rounds),
            mutation: None,
            config,
        })
    }

    pub fn with_mutation(mut self, mutation: Mutation) -> Self {
        self.mutation = Some(mutation);
        self
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.config
    }

    /// Joint state of A, B (and E) between rounds.
    pub fn state(&self) -> &StateVector {
        &self.state
    }

    pub fn eve(&self) -> &EveState {
        &self.eve
    }

    /// The first key bit, once round 1 has run.
    pub fn psi1(&self) -> Option<u8> {
        self.psi1
    }

    pub fn rounds_done(&self) -> usize {
        self.transcripts.len()
    }

    pub fn transcripts(&self) -> &[RoundTranscript] {
        &self.transcripts
    }

    pub fn run_round(&mut self, key_bit: u8) -> Result<RoundTranscript> {
        self.run_round_observed(key_bit, &mut |_, _| {})
    }

    /// Like [`Session::run_round`], showing every pipeline stage to `observe`.
    pub fn run_round_observed(
        &mut self,
        key_bit: u8,
        observe: &mut dyn FnMut(Stage, &StateVector),
    ) -> Result<RoundTranscript> {
        if self.transcripts.len() >= self.config.rounds {
            return Err(QkdError::Sequencing(format!(
                "session already ran its {} rounds",
                self.config.rounds
            )));
        }
        let round = self.eve.begin_round();
        let spec = RoundSpec {
            strategy: &self.config.strategy,
            round,
            theta: self.config.theta,
            key_bit,
            mutation: self.mutation,
        };
        let mut branches =
            execute_round(self.state.clone(), &spec, &mut Sampled(&mut self.rng), observe)?;
        let br = match (branches.pop(), branches.is_empty()) {
            (Some(br), true) => br,
            _ => {
                return Err(QkdError::InternalConsistency(
                    "sampled round did not produce exactly one branch".into(),
                ))
            }
        };
        if let Some(bit) = br.eve_bit {
            self.eve.record(bit)?;
        }
        if round == 1 {
            self.psi1 = Some(key_bit);
        }
        self.state = br.state;
        let transcript = RoundTranscript {
            index: round,
            sent: key_bit,
            received: br.bob_bit,
            error: key_bit != br.bob_bit,
            eve_record: br.eve_bit.map(|bit| EveRecord { round, bit }),
        };
        self.transcripts.push(transcript.clone());
        Ok(transcript)
    }

    /// Summarizes the rounds run so far (no detection phase).
    pub fn result(&self) -> SessionResult {
        let errors = self.transcripts.iter().filter(|t| t.error).count();
        SessionResult {
            qber: if self.transcripts.is_empty() {
                0.0
            } else {
                errors as f64 / self.transcripts.len() as f64
            },
            transcripts: self.transcripts.clone(),
            eve_records: self.eve.records().to_vec(),
            detection: None,
        }
    }
}

/// Runs every round of `config` over `key_bits`, then the check-bit phase on
/// the session's detection stream.
pub fn run_session(config: &ProtocolConfig, key_bits: &[u8]) -> Result<SessionResult> {
    let (result, _) = run_session_with_eve(config, key_bits)?;
    Ok(result)
}

/// [`run_session`], also handing back Eve's final state.
pub fn run_session_with_eve(
    config: &ProtocolConfig,
    key_bits: &[u8],
) -> Result<(SessionResult, EveState)> {
    if key_bits.len() != config.rounds {
        return Err(QkdError::Config(format!(
            "{} key bits for a {}-round session",
            key_bits.len(),
            config.rounds
        )));
    }
    let mut session = Session::init(config.clone())?;
    for &bit in key_bits {
        session.run_round(bit)?;
    }
    let mut result = session.result();
    let mut det_rng = rng::stream(config.seed, streams::DETECTION);
    result.detection = Some(detection_phase(&result, config.check_fraction, &mut det_rng));
    Ok((result, session.eve))
}

/// Number of check bits for a session of `rounds` rounds.
pub fn check_count(check_fraction: f64, rounds: usize) -> usize {
    // the small slack keeps exact products such as 0.1 × 100 from rounding up
    ((check_fraction * rounds as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Publicly compares ⌈check_fraction · rounds⌉ uniformly chosen rounds.
pub fn detection_phase<R: Rng + ?Sized>(
    result: &SessionResult,
    check_fraction: f64,
    rng: &mut R,
) -> DetectionReport {
    let rounds = result.transcripts.len();
    let k = check_count(check_fraction, rounds).min(rounds);
    let mut check_indices: Vec<usize> =
        rand::seq::index::sample(rng, rounds, k).into_iter().map(|i| i + 1).collect();
    check_indices.sort_unstable();
    let mismatches = check_indices
        .iter()
        .filter(|&&i| result.transcripts[i - 1].error)
        .count();
    let leaked_bits = check_indices
        .iter()
        .map(|&i| (i, result.transcripts[i - 1].sent))
        .collect();
    DetectionReport { check_indices, mismatches, leaked_bits }
}
