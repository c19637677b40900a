//! Eve's channel programs.
//!
//! Eve keeps one ancilla qubit `E`, prepared in `|0⟩`. Her action in a round is
//! a short program of gates and measurements on the carrier `γ` and `E`,
//! run between Alice's and Bob's CNOTs:
//!
//! | program      | ops                                   |
//! |--------------|---------------------------------------|
//! | entangle     | CNOT(γ→E)                             |
//! | pass-through | CNOT(E→γ)                             |
//! | extract      | CNOT(E→γ), measure γ, CNOT(E→γ)       |
//! | flip-through | X(γ), CNOT(E→γ)                       |
//!
//! `S2` entangles in round 1, then cycles pass-through, extract,
//! flip-through, extract from round 2 on, rotating `E` along with Alice and
//! Bob at the start of every round after the first. `S1` entangles and then
//! extracts every round, never rotating `E`.

mod inference;
mod unitary;

pub use inference::{infer_key, KeyInference};
pub use unitary::{pauli_product, unitarity_defect, UnitaryParams, GENERATOR_DIM, UNITARITY_TOLERANCE};

use std::fmt;

use nalgebra::Matrix4;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::qstate::{Amplitude, Collapse, Label, Sampled, StateVector};
use crate::{QkdError, Result};

/// Eve's strategy for a whole session.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum StrategyKind {
    #[default]
    None,
    S1,
    S2,
    /// A fixed two-qubit unitary on (γ, E) every round, with `E` rotated
    /// along with Alice and Bob from round 2 on.
    Parametrized(UnitaryParams),
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StrategyKind::None => "none",
            StrategyKind::S1 => "s1",
            StrategyKind::S2 => "s2",
            StrategyKind::Parametrized(_) => "parametrized",
        })
    }
}

/// A bit Eve learned by measuring the carrier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EveRecord {
    pub round: usize,
    pub bit: u8,
}

/// One step of a channel program.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelOp {
    Cnot { control: Label, target: Label },
    X(Label),
    Measure(Label),
    Unitary { first: Label, second: Label, matrix: Box<Matrix4<Amplitude>> },
}

/// Which of Eve's fixed programs a round uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProgramKind {
    Idle,
    Entangle,
    PassThrough,
    Extract,
    FlipThrough,
    Unitary,
}

/// Result of running a channel program along one branch.
#[derive(Debug, Clone)]
pub struct ChannelBranch {
    /// Probability of this branch relative to the program's input.
    pub weight: f64,
    pub state: StateVector,
    pub measured: Option<u8>,
}

impl StrategyKind {
    pub fn uses_ancilla(&self) -> bool {
        !matches!(self, StrategyKind::None)
    }

    /// Whether Eve rotates her ancilla at the start of `round`.
    pub fn rotates_ancilla(&self, round: usize) -> bool {
        round >= 2 && matches!(self, StrategyKind::S2 | StrategyKind::Parametrized(_))
    }

    pub fn program_kind(&self, round: usize) -> ProgramKind {
        match self {
            StrategyKind::None => ProgramKind::Idle,
            StrategyKind::Parametrized(_) => ProgramKind::Unitary,
            _ if round <= 1 => ProgramKind::Entangle,
            StrategyKind::S1 => ProgramKind::Extract,
            StrategyKind::S2 => match (round - 2) % 4 {
                0 => ProgramKind::PassThrough,
                2 => ProgramKind::FlipThrough,
                _ => ProgramKind::Extract,
            },
        }
    }

    pub fn is_extraction_round(&self, round: usize) -> bool {
        self.program_kind(round) == ProgramKind::Extract
    }

    /// The ops Eve applies to (γ, E) while the carrier of `round` is in flight.
    pub fn channel_program(&self, round: usize) -> Result<Vec<ChannelOp>> {
        let (g, e) = (Label::Carrier, Label::Eve);
        Ok(match self.program_kind(round) {
            ProgramKind::Idle => vec![],
            ProgramKind::Entangle => vec![ChannelOp::Cnot { control: g, target: e }],
            ProgramKind::PassThrough => vec![ChannelOp::Cnot { control: e, target: g }],
            ProgramKind::Extract => vec![
                ChannelOp::Cnot { control: e, target: g },
                ChannelOp::Measure(g),
                ChannelOp::Cnot { control: e, target: g },
            ],
            ProgramKind::FlipThrough => {
                vec![ChannelOp::X(g), ChannelOp::Cnot { control: e, target: g }]
            }
            ProgramKind::Unitary => {
                let StrategyKind::Parametrized(params) = self else { unreachable!() };
                vec![ChannelOp::Unitary { first: g, second: e, matrix: Box::new(params.unitary()?) }]
            }
        })
    }
}

/// Applies Eve's start-of-round rotation, if her strategy calls for one.
pub fn rotate_ancilla(
    strategy: &StrategyKind,
    round: usize,
    state: &mut StateVector,
    theta: f64,
) -> Result<()> {
    if strategy.rotates_ancilla(round) {
        state.apply_rotation(Label::Eve, theta)?;
    }
    Ok(())
}

/// Runs `program`, splitting on measurements as `collapse` dictates.
/// `observe` sees the state after every op (step index, state).
pub fn run_channel_program<C: Collapse + ?Sized>(
    program: &[ChannelOp],
    state: StateVector,
    collapse: &mut C,
    observe: &mut dyn FnMut(usize, &StateVector),
) -> Result<Vec<ChannelBranch>> {
    if !program.is_empty() && !state.layout().contains(Label::Carrier) {
        return Err(QkdError::Sequencing("channel program run with no carrier in flight".into()));
    }
    let mut branches = vec![ChannelBranch { weight: 1.0, state, measured: None }];
    for (step, op) in program.iter().enumerate() {
        let mut next = Vec::with_capacity(branches.len());
        for mut br in branches {
            match op {
                ChannelOp::Cnot { control, target } => br.state.apply_cnot(*control, *target)?,
                ChannelOp::X(l) => br.state.apply_x(*l)?,
                ChannelOp::Unitary { first, second, matrix } => {
                    br.state.apply_two_qubit(*first, *second, matrix)?
                }
                ChannelOp::Measure(l) => {
                    for m in collapse.collapse(&br.state, *l)? {
                        observe(step, &m.state);
                        next.push(ChannelBranch {
                            weight: br.weight * m.probability,
                            state: m.state,
                            measured: Some(m.bit),
                        });
                    }
                    continue;
                }
            }
            observe(step, &br.state);
            next.push(br);
        }
        branches = next;
    }
    Ok(branches)
}

/// Eve's side of a session.
#[derive(Debug, Clone)]
pub struct EveState {
    strategy: StrategyKind,
    round: usize,
    records: Vec<EveRecord>,
}

impl EveState {
    pub fn new(strategy: StrategyKind) -> Self {
        Self { strategy, round: 0, records: Vec::new() }
    }

    pub fn strategy(&self) -> &StrategyKind {
        &self.strategy
    }

    /// Rounds started so far (the current round, once one is running).
    pub fn round(&self) -> usize {
        self.round
    }

    pub fn ancilla_label(&self) -> Option<Label> {
        self.strategy.uses_ancilla().then_some(Label::Eve)
    }

    pub fn records(&self) -> &[EveRecord] {
        &self.records
    }

    pub fn begin_round(&mut self) -> usize {
        self.round += 1;
        self.round
    }

    pub fn on_rotation(&self, state: &mut StateVector, theta: f64) -> Result<()> {
        rotate_ancilla(&self.strategy, self.round, state, theta)
    }

    /// Runs this round's program with sampled measurements and keeps any
    /// measured bit as a record.
    pub fn on_channel<R: Rng + ?Sized>(
        &mut self,
        state: StateVector,
        rng: &mut R,
    ) -> Result<(StateVector, Option<u8>)> {
        let program = self.strategy.channel_program(self.round)?;
        let mut branches = run_channel_program(&program, state, &mut Sampled(rng), &mut |_, _| {})?;
        let br = branches.pop().ok_or_else(|| {
            QkdError::InternalConsistency("sampled channel program produced no branch".into())
        })?;
        if let Some(bit) = br.measured {
            self.record(bit)?;
        }
        Ok((br.state, br.measured))
    }

    pub(crate) fn record(&mut self, bit: u8) -> Result<()> {
        if !self.strategy.is_extraction_round(self.round) {
            return Err(QkdError::Sequencing(format!(
                "measurement recorded in non-extraction round {}",
                self.round
            )));
        }
        self.records.push(EveRecord { round: self.round, bit });
        Ok(())
    }

    pub fn infer_key(&self, leaked_bits: &[(usize, u8)], true_key: &[u8]) -> KeyInference {
        infer_key(&self.records, leaked_bits, true_key)
    }
}
