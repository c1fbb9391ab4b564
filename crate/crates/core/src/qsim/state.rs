use num_complex::Complex64;

use super::QsimError;

/// Largest register the simulator accepts.
pub const MAX_QUBITS: usize = 12;

/// 2×2 complex gate matrix, row-major.
pub type Gate1 = [[Complex64; 2]; 2];

/// A normalized pure state of `n_qubits` qubits.
///
/// Basis index `k` encodes qubit `q` in bit `q` of `k` (qubit 0 is the least
/// significant bit). Gate methods return a new state and leave `self` intact.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl QuantumState {
    /// The all-zeros computational basis state `|0…0⟩`.
    pub fn zero(n_qubits: usize) -> Result<Self, QsimError> {
        check_register(n_qubits)?;
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(Self {
            n_qubits,
            amplitudes,
        })
    }

    /// Builds a state from raw amplitudes, normalizing them.
    pub fn from_amplitudes(n_qubits: usize, amplitudes: Vec<Complex64>) -> Result<Self, QsimError> {
        check_register(n_qubits)?;
        if amplitudes.len() != 1 << n_qubits {
            return Err(QsimError::Dimension {
                expected: 1 << n_qubits,
                got: amplitudes.len(),
            });
        }
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(QsimError::NotNormalizable);
        }
        let amplitudes = amplitudes.into_iter().map(|a| a / norm).collect();
        Ok(Self {
            n_qubits,
            amplitudes,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    /// Euclidean norm of the amplitude vector.
    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Probability of measuring each basis state.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn apply_ry(&self, qubit: usize, theta: f64) -> Result<Self, QsimError> {
        self.apply_gate(qubit, &ry_gate(theta))
    }

    /// Applies an arbitrary single-qubit matrix. No unitarity check is made,
    /// which lets verification code feed deliberately broken gates.
    pub fn apply_gate(&self, qubit: usize, gate: &Gate1) -> Result<Self, QsimError> {
        self.check_qubit(qubit)?;
        let mut out = self.clone();
        apply_gate_in_place(&mut out.amplitudes, qubit, gate);
        Ok(out)
    }

    pub fn apply_cnot(&self, control: usize, target: usize) -> Result<Self, QsimError> {
        self.check_qubit(control)?;
        self.check_qubit(target)?;
        if control == target {
            return Err(QsimError::InvalidGate { control, target });
        }
        let mut out = self.clone();
        apply_cnot_in_place(&mut out.amplitudes, control, target);
        Ok(out)
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    fn check_qubit(&self, qubit: usize) -> Result<(), QsimError> {
        if qubit >= self.n_qubits {
            Err(QsimError::QubitIndex {
                qubit,
                n_qubits: self.n_qubits,
            })
        } else {
            Ok(())
        }
    }
}

pub(crate) fn check_register(n_qubits: usize) -> Result<(), QsimError> {
    if n_qubits == 0 || n_qubits > MAX_QUBITS {
        Err(QsimError::RegisterSize(n_qubits))
    } else {
        Ok(())
    }
}

/// `[[cos θ/2, −sin θ/2], [sin θ/2, cos θ/2]]`.
pub fn ry_matrix(theta: f64) -> [[f64; 2]; 2] {
    let (s, c) = (theta / 2.0).sin_cos();
    [[c, -s], [s, c]]
}

pub fn ry_gate(theta: f64) -> Gate1 {
    let m = ry_matrix(theta);
    [
        [Complex64::new(m[0][0], 0.0), Complex64::new(m[0][1], 0.0)],
        [Complex64::new(m[1][0], 0.0), Complex64::new(m[1][1], 0.0)],
    ]
}

pub(crate) fn apply_gate_in_place(amps: &mut [Complex64], qubit: usize, gate: &Gate1) {
    let bit = 1usize << qubit;
    for k in 0..amps.len() {
        if k & bit == 0 {
            let a0 = amps[k];
            let a1 = amps[k | bit];
            amps[k] = gate[0][0] * a0 + gate[0][1] * a1;
            amps[k | bit] = gate[1][0] * a0 + gate[1][1] * a1;
        }
    }
}

pub(crate) fn apply_cnot_in_place(amps: &mut [Complex64], control: usize, target: usize) {
    let c = 1usize << control;
    let t = 1usize << target;
    for k in 0..amps.len() {
        if k & c != 0 && k & t == 0 {
            amps.swap(k, k | t);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn assert_close(state: &QuantumState, expected: &[f64], tol: f64) {
        assert_eq!(state.dim(), expected.len());
        for (a, e) in state.amplitudes().iter().zip(expected) {
            assert!((a.re - e).abs() <= tol && a.im.abs() <= tol, "{a} vs {e}");
        }
    }

    #[test]
    fn zero_state_is_one_hot() {
        assert_close(&QuantumState::zero(1).unwrap(), &[1.0, 0.0], 0.0);
        assert_close(&QuantumState::zero(2).unwrap(), &[1.0, 0.0, 0.0, 0.0], 0.0);
        let s = QuantumState::zero(4).unwrap();
        assert_eq!(s.dim(), 16);
        assert_eq!(s.amplitudes()[0], c(1.0));
        assert!(s.amplitudes()[1..].iter().all(|a| *a == c(0.0)));
    }

    #[test]
    fn register_size_guard() {
        assert!(matches!(QuantumState::zero(0), Err(QsimError::RegisterSize(0))));
        assert!(matches!(QuantumState::zero(13), Err(QsimError::RegisterSize(13))));
        assert!(QuantumState::zero(12).is_ok());
    }

    #[test]
    fn ry_examples() {
        let zero = QuantumState::zero(1).unwrap();
        assert_close(&zero.apply_ry(0, 0.0).unwrap(), &[1.0, 0.0], 0.0);
        assert_close(&zero.apply_ry(0, PI).unwrap(), &[0.0, 1.0], 1e-15);
        // dense 2x2 product against the literal matrix
        let m = [[(PI / 4.0).cos(), -(PI / 4.0).sin()], [(PI / 4.0).sin(), (PI / 4.0).cos()]];
        let expected = [m[0][0] * 1.0 + m[0][1] * 0.0, m[1][0] * 1.0 + m[1][1] * 0.0];
        let out = zero.apply_ry(0, PI / 2.0).unwrap();
        assert_close(&out, &expected, 1e-15);
        assert_close(&out, &[FRAC_1_SQRT_2, FRAC_1_SQRT_2], 1e-15);
        assert!(matches!(zero.apply_ry(1, 0.3), Err(QsimError::QubitIndex { .. })));
    }

    #[test]
    fn cnot_truth_table() {
        // |10> with control = the high bit (qubit 1) and target qubit 0
        let mut amps = vec![c(0.0); 4];
        amps[0b10] = c(1.0);
        let s = QuantumState::from_amplitudes(2, amps).unwrap();
        let out = s.apply_cnot(1, 0).unwrap();
        assert_close(&out, &[0.0, 0.0, 0.0, 1.0], 0.0);

        let zero = QuantumState::zero(2).unwrap();
        assert_eq!(zero.apply_cnot(1, 0).unwrap(), zero);
        assert!(matches!(zero.apply_cnot(1, 1), Err(QsimError::InvalidGate { .. })));
    }

    #[test]
    fn cnot_against_permutation_matrix() {
        // (|00> + |10>)/√2 → (|00> + |11>)/√2, via an explicit 4x4 permutation
        let mut amps = vec![c(0.0); 4];
        amps[0b00] = c(FRAC_1_SQRT_2);
        amps[0b10] = c(FRAC_1_SQRT_2);
        let s = QuantumState::from_amplitudes(2, amps.clone()).unwrap();
        let perm = [0usize, 1, 3, 2]; // control qubit 1, target qubit 0: swaps 2 <-> 3
        let expected: Vec<f64> = (0..4).map(|k| amps[perm[k]].re).collect();
        let out = s.apply_cnot(1, 0).unwrap();
        assert_close(&out, &expected, 0.0);
        assert_close(&out, &[FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2], 0.0);
    }

    #[test]
    fn from_amplitudes_rejects_bad_input() {
        assert!(QuantumState::from_amplitudes(2, vec![c(1.0); 3]).is_err());
        assert!(QuantumState::from_amplitudes(1, vec![c(0.0); 2]).is_err());
        let s = QuantumState::from_amplitudes(1, vec![c(3.0), c(4.0)]).unwrap();
        assert!((s.norm() - 1.0).abs() < 1e-15);
    }
}
