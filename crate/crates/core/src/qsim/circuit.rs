use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::state::{apply_cnot_in_place, apply_gate_in_place, check_register, ry_gate};
use super::{QsimError, QuantumState};

/// Layers used when a caller does not choose a depth.
pub const DEFAULT_DEPTH: usize = 2;

/// A frozen gate program: per layer, one `Ry` on every qubit followed by a
/// list of CNOTs between adjacent qubits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomCircuit {
    index: usize,
    n_qubits: usize,
    seed: u64,
    /// `angles[layer][qubit]`, radians.
    angles: Vec<Vec<f64>>,
    /// `(control, target)` pairs per layer.
    entanglers: Vec<Vec<(usize, usize)>>,
}

impl RandomCircuit {
    /// Draws circuit `index` of a family keyed by `seed`.
    ///
    /// Angles are uniform in `[0, 2π)` from a ChaCha8 stream selected by the
    /// circuit index, consumed in `(layer, qubit)` order, so the result depends
    /// only on `(seed, index, depth, n_qubits)`. Every layer ends with the
    /// chain `0→1, 1→2, …`.
    pub fn generate(seed: u64, index: usize, depth: usize, n_qubits: usize) -> Result<Self, QsimError> {
        check_register(n_qubits)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64);
        let angles = (0..depth)
            .map(|_| (0..n_qubits).map(|_| rng.random::<f64>() * TAU).collect())
            .collect();
        let chain: Vec<(usize, usize)> = (0..n_qubits.saturating_sub(1)).map(|q| (q, q + 1)).collect();
        Ok(Self {
            index,
            n_qubits,
            seed,
            angles,
            entanglers: vec![chain; depth],
        })
    }

    /// Rebuilds a circuit from stored angles and layout, without touching the
    /// generator. Used when restoring checkpoints.
    pub fn from_parts(
        index: usize,
        n_qubits: usize,
        seed: u64,
        angles: Vec<Vec<f64>>,
        entanglers: Vec<Vec<(usize, usize)>>,
    ) -> Result<Self, QsimError> {
        check_register(n_qubits)?;
        if angles.len() != entanglers.len() {
            return Err(QsimError::Layout(format!(
                "{} angle layers but {} entangler layers",
                angles.len(),
                entanglers.len()
            )));
        }
        for row in &angles {
            if row.len() != n_qubits {
                return Err(QsimError::Dimension {
                    expected: n_qubits,
                    got: row.len(),
                });
            }
            if row.iter().any(|a| !a.is_finite()) {
                return Err(QsimError::Layout("non-finite angle".into()));
            }
        }
        for &(a, b) in entanglers.iter().flatten() {
            if a >= n_qubits || b >= n_qubits {
                return Err(QsimError::QubitIndex {
                    qubit: a.max(b),
                    n_qubits,
                });
            }
            if a.abs_diff(b) != 1 {
                return Err(QsimError::NonAdjacent { control: a, target: b });
            }
        }
        Ok(Self {
            index,
            n_qubits,
            seed,
            angles,
            entanglers,
        })
    }

    /// A circuit with no layers.
    pub fn identity(n_qubits: usize) -> Result<Self, QsimError> {
        Self::from_parts(0, n_qubits, 0, Vec::new(), Vec::new())
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn depth(&self) -> usize {
        self.angles.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn angles(&self) -> &[Vec<f64>] {
        &self.angles
    }

    pub fn entanglers(&self) -> &[Vec<(usize, usize)>] {
        &self.entanglers
    }

    pub(crate) fn apply_in_place(&self, amps: &mut [num_complex::Complex64]) {
        for (layer, pairs) in self.angles.iter().zip(&self.entanglers) {
            for (q, &theta) in layer.iter().enumerate() {
                apply_gate_in_place(amps, q, &ry_gate(theta));
            }
            for &(c, t) in pairs {
                apply_cnot_in_place(amps, c, t);
            }
        }
    }
}

/// Evolves `state` through `circuit`.
pub fn run_circuit(state: &QuantumState, circuit: &RandomCircuit) -> Result<QuantumState, QsimError> {
    if state.n_qubits() != circuit.n_qubits() {
        return Err(QsimError::Dimension {
            expected: circuit.n_qubits(),
            got: state.n_qubits(),
        });
    }
    let mut out = state.clone();
    circuit.apply_in_place(out.amplitudes_mut());
    Ok(out)
}
