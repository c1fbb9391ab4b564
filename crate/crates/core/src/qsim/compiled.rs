use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;

use super::{Observable, QsimError, RandomCircuit};

/// An observable pulled back through a circuit, `M = U† O U`.
///
/// `Ry` and CNOT are real, so `M` is a real symmetric matrix and the
/// expectation on an angle-encoded product state `ψ(x)` is `ψᵀ M ψ`. This is the
/// fast path used by the quantum convolution layer; it never builds a
/// [`super::QuantumState`].
#[derive(Debug, Clone)]
pub struct CompiledExpectation {
    n_qubits: usize,
    dim: usize,
    matrix: Vec<f64>,
}

impl CompiledExpectation {
    pub fn new(circuit: &RandomCircuit, obs: &Observable) -> Result<Self, QsimError> {
        let n = circuit.n_qubits();
        if obs.target_qubit >= n {
            return Err(QsimError::QubitIndex {
                qubit: obs.target_qubit,
                n_qubits: n,
            });
        }
        let dim = 1usize << n;
        // columns of U
        let mut u = vec![Complex64::new(0.0, 0.0); dim * dim];
        let mut col = vec![Complex64::new(0.0, 0.0); dim];
        for b in 0..dim {
            col.iter_mut().for_each(|a| *a = Complex64::new(0.0, 0.0));
            col[b] = Complex64::new(1.0, 0.0);
            circuit.apply_in_place(&mut col);
            for k in 0..dim {
                u[k * dim + b] = col[k];
            }
        }
        let bit = 1usize << obs.target_qubit;
        let mut matrix = vec![0.0; dim * dim];
        for a in 0..dim {
            for b in a..dim {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..dim {
                    let sign = if k & bit == 0 { 1.0 } else { -1.0 };
                    acc += u[k * dim + a].conj() * u[k * dim + b] * sign;
                }
                matrix[a * dim + b] = acc.re;
                matrix[b * dim + a] = acc.re;
            }
        }
        Ok(Self { n_qubits: n, dim, matrix })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    /// `⟨ψ(x)| M |ψ(x)⟩` for the angle-encoded product state.
    pub fn evaluate(&self, x: &[f64], scratch: &mut [f64]) -> f64 {
        debug_assert_eq!(x.len(), self.n_qubits);
        product_state(x, scratch);
        self.quadratic(scratch)
    }

    /// Parameter-shift gradient with respect to the encoding angles.
    pub fn gradient(&self, x: &[f64], grad: &mut [f64], scratch: &mut [f64]) {
        let mut shifted = [0.0f64; super::MAX_QUBITS];
        let shifted = &mut shifted[..x.len()];
        shifted.copy_from_slice(x);
        for j in 0..x.len() {
            shifted[j] = x[j] + FRAC_PI_2;
            let plus = self.evaluate(shifted, scratch);
            shifted[j] = x[j] - FRAC_PI_2;
            let minus = self.evaluate(shifted, scratch);
            shifted[j] = x[j];
            grad[j] = 0.5 * (plus - minus);
        }
    }

    fn quadratic(&self, psi: &[f64]) -> f64 {
        let d = self.dim;
        let mut total = 0.0;
        for a in 0..d {
            let row = &self.matrix[a * d..(a + 1) * d];
            let mut acc = 0.0;
            for b in 0..d {
                acc += row[b] * psi[b];
            }
            total += psi[a] * acc;
        }
        total
    }
}

/// Amplitudes of `⊗_j Ry(x_j)|0⟩` written into `out` (length `2^len(x)`).
pub fn product_state(x: &[f64], out: &mut [f64]) {
    out[0] = 1.0;
    let mut len = 1;
    for &theta in x {
        let (s, c) = (theta / 2.0).sin_cos();
        // qubit j occupies bit j: the new half is the "1" branch
        for k in 0..len {
            out[k + len] = out[k] * s;
            out[k] *= c;
        }
        len *= 2;
    }
}
