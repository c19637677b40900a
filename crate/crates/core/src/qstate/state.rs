use nalgebra::{DMatrix, Matrix4};
use rand::Rng;

use super::{
    Amplitude, DensityMatrix, Label, RegisterLayout, BRANCH_PRUNE, NORM_TOLERANCE,
    PRODUCT_PURITY_TOLERANCE,
};
use crate::{QkdError, Result};

/// Pure state of a labeled register.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    layout: RegisterLayout,
    amps: Vec<Amplitude>,
}

/// One outcome of a computational-basis measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementBranch {
    pub bit: u8,
    pub probability: f64,
    pub state: StateVector,
}

fn check_bit(bit: u8) -> Result<()> {
    if bit > 1 {
        return Err(QkdError::Config(format!("bit value {bit} is not 0 or 1")));
    }
    Ok(())
}

impl StateVector {
    /// The computational basis state `|bits⟩`, one bit per label in layout order.
    pub fn new_basis_state(layout: RegisterLayout, bits: &[u8]) -> Result<Self> {
        if bits.len() != layout.len() {
            return Err(QkdError::Config(format!(
                "{} bits given for a layout of {} qubits",
                bits.len(),
                layout.len()
            )));
        }
        let mut index = 0usize;
        for &b in bits {
            check_bit(b)?;
            index = (index << 1) | b as usize;
        }
        let mut amps = vec![Amplitude::new(0.0, 0.0); layout.dim()];
        amps[index] = Amplitude::new(1.0, 0.0);
        Ok(Self { layout, amps })
    }

    /// Builds a state from explicit amplitudes. The vector must already be
    /// normalized (within 1e-10) and finite.
    pub fn from_amplitudes(layout: RegisterLayout, amps: Vec<Amplitude>) -> Result<Self> {
        if amps.len() != layout.dim() {
            return Err(QkdError::Config(format!(
                "{} amplitudes given for a layout of dimension {}",
                amps.len(),
                layout.dim()
            )));
        }
        if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(QkdError::Config("non-finite amplitude".into()));
        }
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(QkdError::Config(format!("amplitudes have norm {norm}, expected 1")));
        }
        Ok(Self { layout, amps })
    }

    /// `(|00⟩ + |11⟩)/√2` on two fresh labels.
    pub fn bell_pair(a: Label, b: Label) -> Result<Self> {
        let layout = RegisterLayout::new(vec![a, b])?;
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let z = Amplitude::new(0.0, 0.0);
        Ok(Self {
            layout,
            amps: vec![Amplitude::new(h, 0.0), z, z, Amplitude::new(h, 0.0)],
        })
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &[Amplitude] {
        &self.amps
    }

    pub fn num_qubits(&self) -> usize {
        self.layout.len()
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Amplitude of `|bits⟩` (layout order).
    pub fn amplitude(&self, bits: &[u8]) -> Result<Amplitude> {
        if bits.len() != self.layout.len() {
            return Err(QkdError::Config("bit list does not match layout".into()));
        }
        let index = bits.iter().fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize);
        Ok(self.amps[index])
    }

    /// Real rotation `[[cos θ, sin θ], [−sin θ, cos θ]]` on one qubit.
    pub fn apply_rotation(&mut self, label: Label, theta: f64) -> Result<()> {
        if !theta.is_finite() {
            return Err(QkdError::Config(format!("rotation angle {theta} is not finite")));
        }
        let mask = self.layout.mask(label)?;
        let (s, c) = theta.sin_cos();
        for i in 0..self.amps.len() {
            if i & mask == 0 {
                let a0 = self.amps[i];
                let a1 = self.amps[i | mask];
                self.amps[i] = a0 * c + a1 * s;
                self.amps[i | mask] = a1 * c - a0 * s;
            }
        }
        Ok(())
    }

    pub fn apply_x(&mut self, label: Label) -> Result<()> {
        let mask = self.layout.mask(label)?;
        for i in 0..self.amps.len() {
            if i & mask == 0 {
                self.amps.swap(i, i | mask);
            }
        }
        Ok(())
    }

    pub fn apply_cnot(&mut self, control: Label, target: Label) -> Result<()> {
        if control == target {
            return Err(QkdError::Addressing(format!(
                "CNOT control and target are both {control}"
            )));
        }
        let cm = self.layout.mask(control)?;
        let tm = self.layout.mask(target)?;
        for i in 0..self.amps.len() {
            if i & cm != 0 && i & tm == 0 {
                self.amps.swap(i, i | tm);
            }
        }
        Ok(())
    }

    /// Applies a 4×4 matrix to the qubit pair `(first, second)`. The matrix is
    /// indexed by `2·bit(first) + bit(second)`.
    pub fn apply_two_qubit(
        &mut self,
        first: Label,
        second: Label,
        matrix: &Matrix4<Amplitude>,
    ) -> Result<()> {
        if first == second {
            return Err(QkdError::Addressing(format!("two-qubit gate on {first} twice")));
        }
        let m1 = self.layout.mask(first)?;
        let m2 = self.layout.mask(second)?;
        let offsets = [0, m2, m1, m1 | m2];
        for base in 0..self.amps.len() {
            if base & (m1 | m2) != 0 {
                continue;
            }
            let local: [Amplitude; 4] = std::array::from_fn(|k| self.amps[base | offsets[k]]);
            for (r, off) in offsets.iter().enumerate() {
                self.amps[base | off] = (0..4).map(|k| matrix[(r, k)] * local[k]).sum();
            }
        }
        Ok(())
    }

    /// Tensors `|bit⟩` onto the register as the last qubit.
    pub fn attach_qubit(&self, label: Label, bit: u8) -> Result<Self> {
        self.attach_qubit_at(label, bit, self.layout.len())
    }

    /// Tensors `|bit⟩` onto the register at layout position `position`.
    pub fn attach_qubit_at(&self, label: Label, bit: u8, position: usize) -> Result<Self> {
        check_bit(bit)?;
        let layout = self.layout.inserted(label, position)?;
        let new_mask = layout.mask(label)?;
        // bits above the insertion point shift left by one
        let low_mask = new_mask - 1;
        let mut amps = vec![Amplitude::new(0.0, 0.0); layout.dim()];
        for (i, &a) in self.amps.iter().enumerate() {
            let high = (i & !low_mask) << 1;
            let j = high | (i & low_mask) | if bit == 1 { new_mask } else { 0 };
            amps[j] = a;
        }
        Ok(Self { layout, amps })
    }

    /// Probability of reading 1 on `label`.
    pub fn probability_one(&self, label: Label) -> Result<f64> {
        let mask = self.layout.mask(label)?;
        Ok(self
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & mask != 0)
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    fn outcome_probabilities(&self, mask: usize) -> Result<[f64; 2]> {
        let mut p = [0.0; 2];
        for (i, a) in self.amps.iter().enumerate() {
            p[usize::from(i & mask != 0)] += a.norm_sqr();
        }
        if (p[0] + p[1] - 1.0).abs() > 1e-9 {
            return Err(QkdError::InternalConsistency(format!(
                "measurement probabilities sum to {}",
                p[0] + p[1]
            )));
        }
        Ok(p)
    }

    fn project(&self, mask: usize, bit: u8, probability: f64) -> Self {
        let scale = 1.0 / probability.sqrt();
        let amps = self
            .amps
            .iter()
            .enumerate()
            .map(|(i, &a)| {
                if u8::from(i & mask != 0) == bit {
                    a * scale
                } else {
                    Amplitude::new(0.0, 0.0)
                }
            })
            .collect();
        Self { layout: self.layout.clone(), amps }
    }

    /// Samples a Z measurement of `label` and returns the outcome together with
    /// the collapsed, renormalized state.
    pub fn measure_z<R: Rng + ?Sized>(&self, label: Label, rng: &mut R) -> Result<(u8, Self)> {
        let mask = self.layout.mask(label)?;
        let p = self.outcome_probabilities(mask)?;
        let bit = if p[1] < BRANCH_PRUNE {
            0
        } else if p[0] < BRANCH_PRUNE {
            1
        } else {
            u8::from(rng.random::<f64>() >= p[0] / (p[0] + p[1]))
        };
        Ok((bit, self.project(mask, bit, p[bit as usize])))
    }

    /// Both outcomes of a Z measurement with their exact probabilities.
    /// Outcomes below [`BRANCH_PRUNE`] are dropped.
    pub fn branch_measure_z(&self, label: Label) -> Result<Vec<MeasurementBranch>> {
        let mask = self.layout.mask(label)?;
        let p = self.outcome_probabilities(mask)?;
        Ok((0..2u8)
            .filter(|&b| p[b as usize] >= BRANCH_PRUNE)
            .map(|b| MeasurementBranch {
                bit: b,
                probability: p[b as usize],
                state: self.project(mask, b, p[b as usize]),
            })
            .collect())
    }

    /// Removes a qubit that is in a product state with the rest of the register.
    pub fn discard_qubit(&self, label: Label) -> Result<Self> {
        let purity = self.reduced_density(&[label])?.purity();
        if purity < 1.0 - PRODUCT_PURITY_TOLERANCE {
            return Err(QkdError::InvariantViolation(format!(
                "qubit {label} is entangled with the register (purity {purity})"
            )));
        }
        let mask = self.layout.mask(label)?;
        let p1 = self.probability_one(label)?;
        let keep = usize::from(p1 > 0.5);
        let layout = self.layout.removed(label)?;
        let low_mask = mask - 1;
        let mut amps = vec![Amplitude::new(0.0, 0.0); layout.dim()];
        for (i, &a) in self.amps.iter().enumerate() {
            if usize::from(i & mask != 0) == keep {
                let j = ((i >> 1) & !low_mask) | (i & low_mask);
                amps[j] = a;
            }
        }
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        for a in &mut amps {
            *a /= norm;
        }
        Ok(Self { layout, amps })
    }

    /// Partial trace onto `labels`; the result is indexed in the order given.
    pub fn reduced_density(&self, labels: &[Label]) -> Result<DensityMatrix> {
        if labels.is_empty() {
            return Err(QkdError::Config("reduced density over an empty subset".into()));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(QkdError::Config(format!("label {l} repeated in subset")));
            }
        }
        let masks = labels
            .iter()
            .map(|&l| self.layout.mask(l))
            .collect::<Result<Vec<_>>>()?;
        let kept: usize = masks.iter().fold(0, |acc, m| acc | m);
        let dim = 1 << labels.len();
        let sub_index = |i: usize| masks.iter().fold(0usize, |acc, &m| (acc << 1) | usize::from(i & m != 0));
        let mut rho = DMatrix::<Amplitude>::zeros(dim, dim);
        for (i, ai) in self.amps.iter().enumerate() {
            if ai.norm_sqr() == 0.0 {
                continue;
            }
            for (j, aj) in self.amps.iter().enumerate() {
                if i & !kept == j & !kept {
                    rho[(sub_index(i), sub_index(j))] += ai * aj.conj();
                }
            }
        }
        Ok(DensityMatrix::from_matrix(rho))
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> Result<Amplitude> {
        if self.layout != other.layout {
            return Err(QkdError::Config(format!(
                "layouts differ: {} vs {}",
                self.layout, other.layout
            )));
        }
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum())
    }

    /// `|⟨self|other⟩|²`, blind to a global phase.
    pub fn phase_invariant_fidelity(&self, other: &Self) -> Result<f64> {
        Ok(self.inner(other)?.norm_sqr().min(1.0))
    }

    /// Checks the unit-norm invariant.
    pub fn check_normalized(&self) -> Result<()> {
        let n = self.norm();
        if (n - 1.0).abs() > NORM_TOLERANCE || !n.is_finite() {
            return Err(QkdError::InternalConsistency(format!("state norm drifted to {n}")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, PI};

    fn layout(labels: &[Label]) -> RegisterLayout {
        RegisterLayout::new(labels.to_vec()).unwrap()
    }

    fn c(re: f64) -> Amplitude {
        Amplitude::new(re, 0.0)
    }

    fn close(a: &[Amplitude], b: &[Amplitude]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).norm() < 1e-12)
    }

    #[test]
    fn basis_states() {
        let s = StateVector::new_basis_state(layout(&[Label::A, Label::B]), &[0, 0]).unwrap();
        assert_eq!(s.amplitudes()[0], c(1.0));
        let l4 = layout(&[Label::A, Label::B, Label::Carrier, Label::Eve]);
        let s = StateVector::new_basis_state(l4, &[1, 1, 0, 0]).unwrap();
        assert_eq!(s.amplitudes()[12], c(1.0));
        assert_eq!(s.amplitude(&[1, 1, 0, 0]).unwrap(), c(1.0));
        let e = StateVector::new_basis_state(layout(&[Label::Eve]), &[0]).unwrap();
        assert_eq!(e.amplitudes(), &[c(1.0), c(0.0)]);
    }

    #[test]
    fn basis_state_length_mismatch() {
        let r = StateVector::new_basis_state(layout(&[Label::A, Label::B]), &[0]);
        assert!(matches!(r, Err(QkdError::Config(_))));
    }

    #[test]
    fn bell_pair_amplitudes_and_marginal() {
        let bell = StateVector::bell_pair(Label::A, Label::B).unwrap();
        let h = c(FRAC_1_SQRT_2);
        assert!(close(bell.amplitudes(), &[h, c(0.0), c(0.0), h]));
        assert!((bell.phase_invariant_fidelity(&bell).unwrap() - 1.0).abs() < 1e-15);
        let rho = bell.reduced_density(&[Label::A]).unwrap();
        assert!((rho.entry(0, 0) - c(0.5)).norm() < 1e-12);
        assert!((rho.entry(1, 1) - c(0.5)).norm() < 1e-12);
        assert!(rho.entry(0, 1).norm() < 1e-12);
        assert!(matches!(
            StateVector::bell_pair(Label::A, Label::A),
            Err(QkdError::Config(_))
        ));
    }

    #[test]
    fn rotation_quarter_turn() {
        let mut zero = StateVector::new_basis_state(layout(&[Label::A]), &[0]).unwrap();
        zero.apply_rotation(Label::A, FRAC_PI_4).unwrap();
        assert!(close(zero.amplitudes(), &[c(FRAC_1_SQRT_2), c(-FRAC_1_SQRT_2)]));
        let mut one = StateVector::new_basis_state(layout(&[Label::A]), &[1]).unwrap();
        one.apply_rotation(Label::A, FRAC_PI_4).unwrap();
        assert!(close(one.amplitudes(), &[c(FRAC_1_SQRT_2), c(FRAC_1_SQRT_2)]));
        let mut same = StateVector::bell_pair(Label::A, Label::B).unwrap();
        let before = same.clone();
        same.apply_rotation(Label::B, 0.0).unwrap();
        assert_eq!(same, before);
        assert!(matches!(
            same.apply_rotation(Label::Eve, 1.0),
            Err(QkdError::Addressing(_))
        ));
    }

    #[test]
    fn x_and_cnot() {
        let mut s = StateVector::new_basis_state(layout(&[Label::Carrier]), &[0]).unwrap();
        s.apply_x(Label::Carrier).unwrap();
        assert_eq!(s.amplitudes(), &[c(0.0), c(1.0)]);

        // CNOT(A→γ) on Φ⁺ ⊗ |0⟩
        let mut s = StateVector::bell_pair(Label::A, Label::B)
            .unwrap()
            .attach_qubit(Label::Carrier, 0)
            .unwrap();
        s.apply_cnot(Label::A, Label::Carrier).unwrap();
        let h = FRAC_1_SQRT_2;
        assert!((s.amplitude(&[0, 0, 0]).unwrap() - c(h)).norm() < 1e-15);
        assert!((s.amplitude(&[1, 1, 1]).unwrap() - c(h)).norm() < 1e-15);

        // CNOT(γ→E) on (|0000⟩+|1110⟩)/√2
        let mut s4 = s.attach_qubit(Label::Eve, 0).unwrap();
        s4.apply_cnot(Label::Carrier, Label::Eve).unwrap();
        assert!((s4.amplitude(&[0, 0, 0, 0]).unwrap() - c(h)).norm() < 1e-15);
        assert!((s4.amplitude(&[1, 1, 1, 1]).unwrap() - c(h)).norm() < 1e-15);

        assert!(matches!(
            s4.apply_cnot(Label::Eve, Label::Eve),
            Err(QkdError::Addressing(_))
        ));
    }

    #[test]
    fn attach_inserts_at_position() {
        let bell = StateVector::bell_pair(Label::A, Label::B).unwrap();
        let with_e = bell.attach_qubit(Label::Eve, 0).unwrap();
        let s = with_e.attach_qubit_at(Label::Carrier, 1, 2).unwrap();
        assert_eq!(
            s.layout().labels(),
            &[Label::A, Label::B, Label::Carrier, Label::Eve]
        );
        let h = FRAC_1_SQRT_2;
        assert!((s.amplitude(&[0, 0, 1, 0]).unwrap() - c(h)).norm() < 1e-15);
        assert!((s.amplitude(&[1, 1, 1, 0]).unwrap() - c(h)).norm() < 1e-15);
        assert!((s.norm() - 1.0).abs() < 1e-15);
        assert!(matches!(
            s.attach_qubit(Label::A, 0),
            Err(QkdError::Config(_))
        ));
        let back = s.discard_qubit(Label::Carrier).unwrap();
        assert!((back.phase_invariant_fidelity(&with_e).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn measuring_bell_pair() {
        let bell = StateVector::bell_pair(Label::A, Label::B).unwrap();
        let branches = bell.branch_measure_z(Label::A).unwrap();
        assert_eq!(branches.len(), 2);
        for (b, br) in branches.iter().enumerate() {
            assert_eq!(br.bit as usize, b);
            assert!((br.probability - 0.5).abs() < 1e-15);
            let expect =
                StateVector::new_basis_state(layout(&[Label::A, Label::B]), &[b as u8, b as u8]).unwrap();
            assert!((br.state.phase_invariant_fidelity(&expect).unwrap() - 1.0).abs() < 1e-12);
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let (bit, post) = bell.measure_z(Label::A, &mut rng).unwrap();
        assert_eq!(post.probability_one(Label::B).unwrap(), bit as f64);
    }

    #[test]
    fn measuring_a_basis_state_is_certain() {
        let s = StateVector::new_basis_state(layout(&[Label::A, Label::B]), &[1, 0]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            assert_eq!(s.measure_z(Label::A, &mut rng).unwrap().0, 1);
        }
        let br = s.branch_measure_z(Label::B).unwrap();
        assert_eq!(br.len(), 1);
        assert_eq!(br[0].bit, 0);
        assert_eq!(br[0].probability, 1.0);
    }

    #[test]
    fn discard_entangled_is_rejected() {
        let bell = StateVector::bell_pair(Label::A, Label::B).unwrap();
        assert!(matches!(
            bell.discard_qubit(Label::A),
            Err(QkdError::InvariantViolation(_))
        ));
        let s = bell.attach_qubit(Label::Carrier, 1).unwrap();
        let back = s.discard_qubit(Label::Carrier).unwrap();
        assert!(close(back.amplitudes(), bell.amplitudes()));
    }

    #[test]
    fn reduced_density_of_product_factor() {
        let s = StateVector::new_basis_state(layout(&[Label::A]), &[0])
            .unwrap()
            .attach_qubit(Label::B, 1)
            .unwrap();
        let mut s = s;
        s.apply_rotation(Label::B, 0.3).unwrap();
        let rho = s.reduced_density(&[Label::A]).unwrap();
        assert!((rho.entry(0, 0) - c(1.0)).norm() < 1e-12);
        assert!(rho.entry(1, 1).norm() < 1e-12);
        assert!(matches!(s.reduced_density(&[]), Err(QkdError::Config(_))));
    }

    #[test]
    fn fidelity_phase_and_orthogonality() {
        let l = layout(&[Label::A]);
        let zero = StateVector::new_basis_state(l.clone(), &[0]).unwrap();
        let one = StateVector::new_basis_state(l.clone(), &[1]).unwrap();
        assert_eq!(zero.phase_invariant_fidelity(&one).unwrap(), 0.0);
        let mut phi = zero.clone();
        phi.apply_rotation(Label::A, 0.7).unwrap();
        let neg = StateVector::from_amplitudes(l, phi.amplitudes().iter().map(|a| -a).collect()).unwrap();
        assert!((phi.phase_invariant_fidelity(&neg).unwrap() - 1.0).abs() < 1e-15);
        let other = StateVector::bell_pair(Label::A, Label::B).unwrap();
        assert!(matches!(
            phi.phase_invariant_fidelity(&other),
            Err(QkdError::Config(_))
        ));
    }

    #[test]
    fn two_qubit_matrix_matches_cnot() {
        let z = c(0.0);
        let o = c(1.0);
        // control = first, target = second
        let cx = Matrix4::new(o, z, z, z, z, o, z, z, z, z, z, o, z, z, o, z);
        let mut s = StateVector::bell_pair(Label::A, Label::B).unwrap();
        s.apply_rotation(Label::A, 0.4).unwrap();
        let s = s.attach_qubit(Label::Eve, 0).unwrap();
        let mut s = s;
        s.apply_rotation(Label::Eve, PI / 7.0).unwrap();
        let mut via_matrix = s.clone();
        via_matrix.apply_two_qubit(Label::Eve, Label::A, &cx).unwrap();
        s.apply_cnot(Label::Eve, Label::A).unwrap();
        assert!(close(s.amplitudes(), via_matrix.amplitudes()));
    }
}
