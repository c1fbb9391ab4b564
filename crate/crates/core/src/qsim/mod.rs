//! Exact state-vector simulation of small qubit registers.
//!
//! The gate set is deliberately tiny: `Ry` rotations and CNOTs between
//! adjacent qubits, which is all the quantum convolution pathway uses. Every
//! amplitude is a `Complex64` (interleaved real/imaginary `f64`s).
//!
//! ```
//! use qcseis::qsim::{encode, expect, Observable};
//!
//! let state = encode(&[0.7, 0.0, 0.0, 0.0]).unwrap();
//! let z0 = expect(&state, &Observable::pauli_z(0)).unwrap();
//! assert!((z0 - 0.7f64.cos()).abs() < 1e-12);
//! ```

mod circuit;
mod compiled;
pub mod oracle;
mod state;

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use circuit::{run_circuit, RandomCircuit, DEFAULT_DEPTH};
pub use compiled::{product_state, CompiledExpectation};
pub use state::{ry_gate, ry_matrix, Gate1, QuantumState, MAX_QUBITS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QsimError {
    #[error("register of {0} qubits is outside the supported range 1..={MAX_QUBITS}")]
    RegisterSize(usize),
    #[error("qubit {qubit} out of range for a {n_qubits}-qubit register")]
    QubitIndex { qubit: usize, n_qubits: usize },
    #[error("invalid two-qubit gate: control {control} equals target {target}")]
    InvalidGate { control: usize, target: usize },
    #[error("entangler ({control}, {target}) does not act on adjacent qubits")]
    NonAdjacent { control: usize, target: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("amplitude vector has zero or non-finite norm")]
    NotNormalizable,
    #[error("non-finite encoding angle at component {0}")]
    NonFinite(usize),
    #[error("invalid circuit layout: {0}")]
    Layout(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObservableKind {
    PauliZ,
}

/// A single-qubit measurement operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observable {
    pub kind: ObservableKind,
    pub target_qubit: usize,
}

impl Observable {
    pub fn pauli_z(target_qubit: usize) -> Self {
        Self {
            kind: ObservableKind::PauliZ,
            target_qubit,
        }
    }
}

/// Angle encoding: `Ry(x_j)` on qubit `j` of `|0…0⟩`.
pub fn encode(x: &[f64]) -> Result<QuantumState, QsimError> {
    if let Some(j) = x.iter().position(|v| !v.is_finite()) {
        return Err(QsimError::NonFinite(j));
    }
    let mut state = QuantumState::zero(x.len())?;
    for (q, &theta) in x.iter().enumerate() {
        state = state.apply_ry(q, theta)?;
    }
    Ok(state)
}

/// `⟨ψ| O |ψ⟩`.
pub fn expect(state: &QuantumState, obs: &Observable) -> Result<f64, QsimError> {
    if obs.target_qubit >= state.n_qubits() {
        return Err(QsimError::QubitIndex {
            qubit: obs.target_qubit,
            n_qubits: state.n_qubits(),
        });
    }
    let bit = 1usize << obs.target_qubit;
    let value = match obs.kind {
        ObservableKind::PauliZ => state
            .amplitudes()
            .iter()
            .enumerate()
            .map(|(k, a)| if k & bit == 0 { a.norm_sqr() } else { -a.norm_sqr() })
            .sum::<f64>(),
    };
    Ok(value.clamp(-1.0, 1.0))
}

/// Expectation of `obs` after encoding `x` and running `circuit`.
pub fn encoded_expectation(x: &[f64], circuit: &RandomCircuit, obs: &Observable) -> Result<f64, QsimError> {
    if x.len() != circuit.n_qubits() {
        return Err(QsimError::Dimension {
            expected: circuit.n_qubits(),
            got: x.len(),
        });
    }
    expect(&run_circuit(&encode(x)?, circuit)?, obs)
}

/// Gradient of [`encoded_expectation`] with respect to the encoding angles,
/// by the two-term parameter-shift rule (exact for `Ry`).
pub fn grad_expect_wrt_encoding(
    x: &[f64],
    circuit: &RandomCircuit,
    obs: &Observable,
) -> Result<Vec<f64>, QsimError> {
    let mut shifted = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        shifted[j] = x[j] + FRAC_PI_2;
        let plus = encoded_expectation(&shifted, circuit, obs)?;
        shifted[j] = x[j] - FRAC_PI_2;
        let minus = encoded_expectation(&shifted, circuit, obs)?;
        shifted[j] = x[j];
        grad.push(0.5 * (plus - minus));
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn encode_examples() {
        let s = encode(&[0.0; 4]).unwrap();
        assert_eq!(s, QuantumState::zero(4).unwrap());

        let s = encode(&[PI, 0.0, 0.0, 0.0]).unwrap();
        assert!((s.amplitudes()[1].re - 1.0).abs() < 1e-15);

        // (π/2, π/2, 0, 0): Kronecker product of [c, s] ⊗ [c, s] on the two low qubits
        let h = [std::f64::consts::FRAC_1_SQRT_2; 2];
        let s = encode(&[PI / 2.0, PI / 2.0, 0.0, 0.0]).unwrap();
        for b in 0..16 {
            let expected = if b < 4 { h[b & 1] * h[b >> 1 & 1] } else { 0.0 };
            assert!((s.amplitudes()[b].re - expected).abs() < 1e-15);
        }
        assert!(matches!(encode(&[f64::NAN]), Err(QsimError::NonFinite(0))));
    }

    #[test]
    fn expectation_examples() {
        let z0 = Observable::pauli_z(0);
        assert_eq!(expect(&QuantumState::zero(4).unwrap(), &z0).unwrap(), 1.0);
        let flipped = encode(&[PI, 0.0, 0.0, 0.0]).unwrap();
        assert!((expect(&flipped, &z0).unwrap() + 1.0).abs() < 1e-15);
        for theta in [0.1, 0.7, 2.0] {
            let s = encode(&[theta, 0.0, 0.0, 0.0]).unwrap();
            assert!((expect(&s, &z0).unwrap() - theta.cos()).abs() < 1e-12);
        }
        assert!(expect(&flipped, &Observable::pauli_z(4)).is_err());
    }

    #[test]
    fn parameter_shift_examples() {
        let id = RandomCircuit::identity(4).unwrap();
        let z0 = Observable::pauli_z(0);
        let g = grad_expect_wrt_encoding(&[0.0; 4], &id, &z0).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-15));
        let g = grad_expect_wrt_encoding(&[PI / 2.0, 0.0, 0.0, 0.0], &id, &z0).unwrap();
        assert!((g[0] + 1.0).abs() < 1e-12);
        assert!(g[1..].iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn parameter_shift_matches_finite_difference() {
        let z0 = Observable::pauli_z(0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-4;
        for trial in 0..20 {
            let c = RandomCircuit::generate(rng.random(), trial, 2, 4).unwrap();
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-PI..PI)).collect();
            let g = grad_expect_wrt_encoding(&x, &c, &z0).unwrap();
            for j in 0..4 {
                let mut xp = x.clone();
                xp[j] += h;
                let mut xm = x.clone();
                xm[j] -= h;
                let fd = (encoded_expectation(&xp, &c, &z0).unwrap() - encoded_expectation(&xm, &c, &z0).unwrap())
                    / (2.0 * h);
                assert!((fd - g[j]).abs() < 1e-6, "trial {trial} j {j}: {fd} vs {}", g[j]);
            }
        }
    }

    fn random_state(rng: &mut ChaCha8Rng, n: usize) -> QuantumState {
        let amps = (0..1 << n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        QuantumState::from_amplitudes(n, amps).unwrap()
    }

    proptest! {
        #[test]
        fn gates_preserve_norm_and_inner_products(seed in any::<u64>(), q in 0usize..4, theta in -10.0f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random_state(&mut rng, 4);
            let v = random_state(&mut rng, 4);
            let before = u.inner(&v);
            let (gu, gv) = (u.apply_ry(q, theta).unwrap(), v.apply_ry(q, theta).unwrap());
            prop_assert!((gu.norm() - 1.0).abs() < 1e-12);
            prop_assert!((gu.inner(&gv) - before).norm() < 1e-10);
            let t = (q + 1) % 4;
            let (cu, cv) = (u.apply_cnot(q, t).unwrap(), v.apply_cnot(q, t).unwrap());
            prop_assert!((cu.norm() - 1.0).abs() < 1e-12);
            prop_assert!((cu.inner(&cv) - before).norm() < 1e-10);
        }

        #[test]
        fn encoding_periodicity(x in proptest::collection::vec(-6.0f64..6.0, 4), j in 0usize..4) {
            let mut shifted = x.clone();
            shifted[j] += 4.0 * PI;
            let a = encode(&x).unwrap();
            let b = encode(&shifted).unwrap();
            for (p, q) in a.amplitudes().iter().zip(b.amplitudes()) {
                prop_assert!((p - q).norm() < 1e-10);
            }
            let c = RandomCircuit::generate(5, 0, 2, 4).unwrap();
            let z0 = Observable::pauli_z(0);
            let mut half = x.clone();
            half[j] += 2.0 * PI;
            let e1 = encoded_expectation(&x, &c, &z0).unwrap();
            let e2 = encoded_expectation(&half, &c, &z0).unwrap();
            prop_assert!((e1 - e2).abs() < 1e-10);
            prop_assert!(e1.abs() <= 1.0 + 1e-12);
        }
    }
}
