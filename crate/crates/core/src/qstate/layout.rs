use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{QkdError, Result};

pub const MAX_QUBITS: usize = 6;

/// Role of a qubit in the register.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    /// Alice's half of the shared pair.
    A,
    /// Bob's half of the shared pair.
    B,
    /// The in-flight carrier γ.
    Carrier,
    /// Eve's ancilla.
    Eve,
    /// Anything else (search scratch qubits, tests).
    Extra(u8),
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::A => f.write_str("A"),
            Label::B => f.write_str("B"),
            Label::Carrier => f.write_str("γ"),
            Label::Eve => f.write_str("E"),
            Label::Extra(n) => write!(f, "Q{n}"),
        }
    }
}

/// Ordered, duplicate-free list of qubit labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RegisterLayout {
    labels: Vec<Label>,
}

impl RegisterLayout {
    pub fn new(labels: Vec<Label>) -> Result<Self> {
        if labels.is_empty() {
            return Err(QkdError::Config("layout must hold at least one qubit".into()));
        }
        if labels.len() > MAX_QUBITS {
            return Err(QkdError::Config(format!(
                "layout holds {} qubits, at most {MAX_QUBITS} are supported",
                labels.len()
            )));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(QkdError::Config(format!("duplicate label {l}")));
            }
        }
        Ok(Self { labels })
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        1 << self.labels.len()
    }

    pub fn contains(&self, label: Label) -> bool {
        self.labels.contains(&label)
    }

    pub fn position(&self, label: Label) -> Result<usize> {
        self.labels
            .iter()
            .position(|&l| l == label)
            .ok_or_else(|| QkdError::Addressing(format!("no qubit labeled {label} in {self}")))
    }

    /// Bit mask of `label` inside a basis-state index.
    pub fn mask(&self, label: Label) -> Result<usize> {
        let pos = self.position(label)?;
        Ok(1 << (self.labels.len() - 1 - pos))
    }

    pub(crate) fn inserted(&self, label: Label, position: usize) -> Result<Self> {
        if self.contains(label) {
            return Err(QkdError::Config(format!("label {label} already present")));
        }
        if position > self.labels.len() {
            return Err(QkdError::Config(format!(
                "insert position {position} beyond layout of {} qubits",
                self.labels.len()
            )));
        }
        let mut labels = self.labels.clone();
        labels.insert(position, label);
        Self::new(labels)
    }

    pub(crate) fn removed(&self, label: Label) -> Result<Self> {
        let pos = self.position(label)?;
        let mut labels = self.labels.clone();
        labels.remove(pos);
        Self::new(labels)
    }
}

impl fmt::Display for RegisterLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, l) in self.labels.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{l}")?;
        }
        f.write_str("]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masks_are_big_endian() {
        let l = RegisterLayout::new(vec![Label::A, Label::B, Label::Carrier, Label::Eve]).unwrap();
        assert_eq!(l.mask(Label::A).unwrap(), 8);
        assert_eq!(l.mask(Label::B).unwrap(), 4);
        assert_eq!(l.mask(Label::Carrier).unwrap(), 2);
        assert_eq!(l.mask(Label::Eve).unwrap(), 1);
    }

    #[test]
    fn rejects_duplicates_and_oversize() {
        assert!(matches!(
            RegisterLayout::new(vec![Label::A, Label::A]),
            Err(QkdError::Config(_))
        ));
        let seven = (0..7).map(Label::Extra).collect();
        assert!(RegisterLayout::new(seven).is_err());
        assert!(RegisterLayout::new(vec![]).is_err());
    }

    #[test]
    fn unknown_label_is_addressing_error() {
        let l = RegisterLayout::new(vec![Label::A]).unwrap();
        assert!(matches!(l.position(Label::Eve), Err(QkdError::Addressing(_))));
    }
}
