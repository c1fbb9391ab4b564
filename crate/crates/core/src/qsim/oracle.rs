//! Dense reference route for the simulator.
//!
//! Everything here is built from explicit Kronecker products of 2×2 blocks and
//! full matrix-vector products. It shares no kernels with the in-place gate
//! code, so agreement between the two is meaningful evidence. Cost is
//! `O(4^n)` per gate; keep `n` small.

use num_complex::Complex64;

use super::{Gate1, RandomCircuit};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub dim: usize,
    pub data: Vec<Complex64>,
}

impl DenseMatrix {
    pub fn identity(dim: usize) -> Self {
        let mut data = vec![Complex64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            data[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        Self { dim, data }
    }

    fn from_2x2(m: &Gate1) -> Self {
        Self {
            dim: 2,
            data: vec![m[0][0], m[0][1], m[1][0], m[1][1]],
        }
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.dim + c]
    }

    /// `self · rhs`.
    pub fn matmul(&self, rhs: &Self) -> Self {
        let d = self.dim;
        let mut data = vec![Complex64::new(0.0, 0.0); d * d];
        for i in 0..d {
            for k in 0..d {
                let a = self.data[i * d + k];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..d {
                    data[i * d + j] += a * rhs.data[k * d + j];
                }
            }
        }
        Self { dim: d, data }
    }

    pub fn add(&self, rhs: &Self) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let d = self.dim;
        (0..d)
            .map(|i| (0..d).map(|j| self.data[i * d + j] * v[j]).sum())
            .collect()
    }
}

/// `a ⊗ b`.
pub fn kron(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let dim = a.dim * b.dim;
    let mut data = vec![Complex64::new(0.0, 0.0); dim * dim];
    for ar in 0..a.dim {
        for ac in 0..a.dim {
            let x = a.get(ar, ac);
            for br in 0..b.dim {
                for bc in 0..b.dim {
                    data[(ar * b.dim + br) * dim + ac * b.dim + bc] = x * b.get(br, bc);
                }
            }
        }
    }
    DenseMatrix { dim, data }
}

/// Kronecker product of one 2×2 factor per qubit. Qubit 0 is the least
/// significant bit, so it is the rightmost factor.
fn kron_chain(factors: &[Gate1]) -> DenseMatrix {
    let mut out = DenseMatrix::identity(1);
    for f in factors.iter().rev() {
        out = kron(&out, &DenseMatrix::from_2x2(f));
    }
    out
}

const fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

const I2: Gate1 = [[c(1.0), c(0.0)], [c(0.0), c(1.0)]];
const X2: Gate1 = [[c(0.0), c(1.0)], [c(1.0), c(0.0)]];
const P0: Gate1 = [[c(1.0), c(0.0)], [c(0.0), c(0.0)]];
const P1: Gate1 = [[c(0.0), c(0.0)], [c(0.0), c(1.0)]];

/// `I ⊗ … ⊗ G ⊗ … ⊗ I` with `G` on `qubit`.
pub fn single_qubit_operator(n_qubits: usize, qubit: usize, gate: &Gate1) -> DenseMatrix {
    let factors: Vec<Gate1> = (0..n_qubits).map(|q| if q == qubit { *gate } else { I2 }).collect();
    kron_chain(&factors)
}

/// `|0⟩⟨0|_c ⊗ I + |1⟩⟨1|_c ⊗ X_t`.
pub fn cnot_operator(n_qubits: usize, control: usize, target: usize) -> DenseMatrix {
    let idle: Vec<Gate1> = (0..n_qubits).map(|q| if q == control { P0 } else { I2 }).collect();
    let flip: Vec<Gate1> = (0..n_qubits)
        .map(|q| match q {
            _ if q == control => P1,
            _ if q == target => X2,
            _ => I2,
        })
        .collect();
    kron_chain(&idle).add(&kron_chain(&flip))
}

/// Full unitary of a circuit as an ordered product of gate operators.
pub fn circuit_unitary(circuit: &RandomCircuit) -> DenseMatrix {
    let n = circuit.n_qubits();
    let mut u = DenseMatrix::identity(1 << n);
    for (layer, pairs) in circuit.angles().iter().zip(circuit.entanglers()) {
        for (q, &theta) in layer.iter().enumerate() {
            u = single_qubit_operator(n, q, &super::ry_gate(theta)).matmul(&u);
        }
        for &(ctl, tgt) in pairs {
            u = cnot_operator(n, ctl, tgt).matmul(&u);
        }
    }
    u
}

/// Angle-encoded state as the Kronecker product of `[cos(x_j/2), sin(x_j/2)]`.
pub fn encoding_state(x: &[f64]) -> Vec<Complex64> {
    let mut out = vec![c(1.0)];
    for &theta in x.iter().rev() {
        let (s, cs) = (theta / 2.0).sin_cos();
        out = out.iter().flat_map(|&a| [a * cs, a * s]).collect();
    }
    out
}

/// `Σ_k ±|v_k|²` for Pauli-Z on `qubit`.
pub fn pauli_z_expectation(v: &[Complex64], qubit: usize) -> f64 {
    v.iter()
        .enumerate()
        .map(|(k, a)| if k >> qubit & 1 == 0 { a.norm_sqr() } else { -a.norm_sqr() })
        .sum()
}
