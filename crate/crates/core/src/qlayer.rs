//! Quantum convolution over the trace axis.
//!
//! The input `[B, C, T, S]` is cut into non-overlapping windows of `n_qubits`
//! consecutive traces. Each window is angle-encoded, evolved through every
//! circuit and measured with Pauli-Z on qubit 0, giving `[B, C, T, S', K]`.
//! Channels are averaged and the trace axis is repeated `stride` times (then
//! cropped to `S`), so the result `[B, K, T, S]` lines up with a classical map
//! of the same spatial size.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autograd::{BackwardFn, Element, Tensor, TensorError};
use crate::qsim::{self, CompiledExpectation, Observable, QsimError, RandomCircuit};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QLayerError {
    #[error("invalid quantum layer config: {0}")]
    Config(String),
    #[error("circuit {index} acts on {got} qubits, layer expects {expected}")]
    QubitMismatch { index: usize, expected: usize, got: usize },
    #[error(transparent)]
    Qsim(#[from] QsimError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantumLayerConfig {
    pub n_qubits: usize,
    pub n_circuits: usize,
    pub window: usize,
    pub stride: usize,
    pub depth: usize,
    pub seed: u64,
    pub input_scale: f64,
}

impl Default for QuantumLayerConfig {
    fn default() -> Self {
        Self {
            n_qubits: 4,
            n_circuits: 4,
            window: 4,
            stride: 4,
            depth: qsim::DEFAULT_DEPTH,
            seed: 0,
            input_scale: 1.0,
        }
    }
}

impl QuantumLayerConfig {
    pub fn validate(&self) -> Result<(), QLayerError> {
        if self.n_qubits == 0 || self.n_qubits > qsim::MAX_QUBITS {
            return Err(QLayerError::Config(format!("n_qubits = {} outside 1..={}", self.n_qubits, qsim::MAX_QUBITS)));
        }
        if self.window != self.n_qubits || self.stride != self.n_qubits {
            return Err(QLayerError::Config(format!(
                "window ({}) and stride ({}) must both equal n_qubits ({})",
                self.window, self.stride, self.n_qubits
            )));
        }
        if self.n_circuits == 0 {
            return Err(QLayerError::Config("n_circuits must be at least 1".into()));
        }
        if !self.input_scale.is_finite() {
            return Err(QLayerError::Config("input_scale must be finite".into()));
        }
        Ok(())
    }
}

/// Patch matrix `[M, n_qubits]` (row-major, `M = B·C·T·S'`) and `S'`.
///
/// Rows are ordered by `(b, c, t, s')`; a trailing partial window is filled by
/// repeating the last trace.
pub fn unfold(data: &[f64], shape: &[usize], cfg: &QuantumLayerConfig) -> Result<(Vec<f64>, usize), TensorError> {
    let &[b, c, t, s] = shape else {
        return Err(TensorError::Shape(format!("unfold needs [B, C, T, S], got {shape:?}")));
    };
    let k = cfg.n_qubits;
    if s < k {
        return Err(TensorError::Shape(format!("unfold: {s} traces is fewer than the window of {k}")));
    }
    let sp = s.div_ceil(cfg.stride);
    let mut rows = Vec::with_capacity(b * c * t * sp * k);
    for line in data.chunks(s).take(b * c * t) {
        for w in 0..sp {
            for j in 0..k {
                rows.push(line[(w * cfg.stride + j).min(s - 1)]);
            }
        }
    }
    Ok((rows, sp))
}

fn pool(workers: usize) -> Arc<rayon::ThreadPool> {
    static POOLS: OnceLock<Mutex<HashMap<usize, Arc<rayon::ThreadPool>>>> = OnceLock::new();
    let mut pools = POOLS.get_or_init(Default::default).lock().expect("pool cache");
    pools
        .entry(workers)
        .or_insert_with(|| {
            Arc::new(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .expect("thread pool"),
            )
        })
        .clone()
}

/// A set of fixed random circuits applied as a quantum convolution.
#[derive(Debug, Clone)]
pub struct QuantumLayer {
    cfg: QuantumLayerConfig,
    circuits: Vec<RandomCircuit>,
    compiled: Arc<Vec<CompiledExpectation>>,
    workers: usize,
}

impl QuantumLayer {
    /// Draws `n_circuits` circuits from `cfg.seed`.
    pub fn new(cfg: QuantumLayerConfig) -> Result<Self, QLayerError> {
        cfg.validate()?;
        let circuits = (0..cfg.n_circuits)
            .map(|i| RandomCircuit::generate(cfg.seed, i, cfg.depth, cfg.n_qubits))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_circuits(cfg, circuits)
    }

    /// Uses the given circuits as they are; `n_circuits` is taken from their
    /// count.
    pub fn from_circuits(mut cfg: QuantumLayerConfig, circuits: Vec<RandomCircuit>) -> Result<Self, QLayerError> {
        cfg.n_circuits = circuits.len();
        cfg.validate()?;
        for c in &circuits {
            if c.n_qubits() != cfg.n_qubits {
                return Err(QLayerError::QubitMismatch {
                    index: c.index(),
                    expected: cfg.n_qubits,
                    got: c.n_qubits(),
                });
            }
        }
        let obs = Observable::pauli_z(0);
        let compiled = circuits
            .iter()
            .map(|c| CompiledExpectation::new(c, &obs))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            cfg,
            circuits,
            compiled: Arc::new(compiled),
            workers: 1,
        })
    }

    pub fn config(&self) -> &QuantumLayerConfig {
        &self.cfg
    }

    pub fn circuits(&self) -> &[RandomCircuit] {
        &self.circuits
    }

    pub fn n_outputs(&self) -> usize {
        self.circuits.len()
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Number of threads used for patch evaluation. Results do not depend on it.
    pub fn set_workers(&mut self, workers: usize) {
        self.workers = workers.max(1);
    }

    /// Per-patch expectations `[M, K]` for scaled patch rows.
    fn evaluate_patches(&self, angles: &[f64]) -> Vec<f64> {
        let (nq, kk) = (self.cfg.n_qubits, self.circuits.len());
        let m = angles.len() / nq;
        let mut out = vec![0.0; m * kk];
        let compiled = &self.compiled;
        let work = |(row, dst): (&[f64], &mut [f64]), scratch: &mut Vec<f64>| {
            for (v, c) in dst.iter_mut().zip(compiled.iter()) {
                *v = c.evaluate(row, scratch).clamp(-1.0, 1.0);
            }
        };
        let dim = 1usize << nq;
        if self.workers == 1 {
            let mut scratch = vec![0.0; dim];
            angles.chunks(nq).zip(out.chunks_mut(kk)).for_each(|p| work(p, &mut scratch));
        } else {
            pool(self.workers).install(|| {
                angles
                    .par_chunks(nq)
                    .zip(out.par_chunks_mut(kk))
                    .with_min_len(64)
                    .for_each_init(|| vec![0.0; dim], |scratch, p| work(p, scratch));
            });
        }
        out
    }

    /// Gradient rows `[M, n_qubits]` of `Σ_k u[r, k] · y_k(row_r)`.
    fn patch_gradients(&self, angles: &[f64], upstream: &[f64]) -> Vec<f64> {
        let (nq, kk) = (self.cfg.n_qubits, self.circuits.len());
        let m = angles.len() / nq;
        let mut out = vec![0.0; m * nq];
        let compiled = &self.compiled;
        let dim = 1usize << nq;
        let work = |((row, u), dst): ((&[f64], &[f64]), &mut [f64]), scratch: &mut (Vec<f64>, Vec<f64>)| {
            if u.iter().all(|v| *v == 0.0) {
                return;
            }
            let (psi, g) = scratch;
            for (c, &uk) in compiled.iter().zip(u) {
                if uk == 0.0 {
                    continue;
                }
                c.gradient(row, g, psi);
                for (d, gj) in dst.iter_mut().zip(g.iter()) {
                    *d += uk * gj;
                }
            }
        };
        let init = || (vec![0.0; dim], vec![0.0; nq]);
        if self.workers == 1 {
            let mut scratch = init();
            angles
                .chunks(nq)
                .zip(upstream.chunks(kk))
                .zip(out.chunks_mut(nq))
                .for_each(|p| work(p, &mut scratch));
        } else {
            pool(self.workers).install(|| {
                angles
                    .par_chunks(nq)
                    .zip(upstream.par_chunks(kk))
                    .zip(out.par_chunks_mut(nq))
                    .with_min_len(64)
                    .for_each_init(init, |scratch, p| work(p, scratch));
            });
        }
        out
    }

    /// Differentiable forward pass `[B, C, T, S] → [B, K, T, S]`.
    pub fn forward<T: Element>(&self, input: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
        let shape = input.shape().to_vec();
        let data: Vec<f64> = input.data().iter().map(|v| v.as_f64()).collect();
        let out = quantum_forward_values(self, &data, &shape)?;
        let (b, _, t, s) = (shape[0], shape[1], shape[2], shape[3]);
        let k = self.circuits.len();
        Ok(Tensor::from_op(
            vec![b, k, t, s],
            out.into_iter().map(T::from_f64).collect(),
            vec![input.clone()],
            QuantumBack { layer: self.clone() },
        ))
    }
}

fn quantum_forward_values(layer: &QuantumLayer, data: &[f64], shape: &[usize]) -> Result<Vec<f64>, TensorError> {
    let (mut rows, sp) = unfold(data, shape, &layer.cfg)?;
    let (b, c, t, s) = (shape[0], shape[1], shape[2], shape[3]);
    let scale = layer.cfg.input_scale;
    if scale != 1.0 {
        rows.iter_mut().for_each(|v| *v *= scale);
    }
    if let Some(bad) = rows.iter().position(|v| !v.is_finite()) {
        return Err(TensorError::NonFinite(format!("entering the quantum layer at patch element {bad}")));
    }
    let k = layer.circuits.len();
    let vals = layer.evaluate_patches(&rows);
    let inv_c = 1.0 / c as f64;
    let stride = layer.cfg.stride;
    let mut out = vec![0.0; b * k * t * s];
    for bi in 0..b {
        for ki in 0..k {
            for ti in 0..t {
                let dst = &mut out[((bi * k + ki) * t + ti) * s..((bi * k + ki) * t + ti + 1) * s];
                for w in 0..sp {
                    let mut acc = 0.0;
                    for ci in 0..c {
                        acc += vals[(((bi * c + ci) * t + ti) * sp + w) * k + ki];
                    }
                    let v = acc * inv_c;
                    for x in dst.iter_mut().skip(w * stride).take(stride) {
                        *x = v;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Evaluates the layer on raw values without recording a graph.
pub fn quantum_forward<T: Element>(
    input: &Tensor<T>,
    circuits: &[RandomCircuit],
    cfg: &QuantumLayerConfig,
) -> Result<Tensor<T>, QLayerError> {
    let layer = QuantumLayer::from_circuits(cfg.clone(), circuits.to_vec())?;
    layer.forward(input).map_err(|e| QLayerError::Config(e.to_string()))
}

struct QuantumBack {
    layer: QuantumLayer,
}

impl<T: Element> BackwardFn<T> for QuantumBack {
    fn name(&self) -> &'static str {
        "quantum_conv"
    }

    fn backward(&self, grad: &[T], parents: &[Tensor<T>], _: &[T]) -> Result<Vec<Option<Vec<T>>>, TensorError> {
        let input = &parents[0];
        let shape = input.shape();
        let (b, c, t, s) = (shape[0], shape[1], shape[2], shape[3]);
        let grad: Vec<f64> = grad.iter().map(|v| v.as_f64()).collect();
        let dx = quantum_backward(&self.layer, &grad, &input.data().iter().map(|v| v.as_f64()).collect::<Vec<_>>(), [b, c, t, s])?;
        Ok(vec![Some(dx.into_iter().map(T::from_f64).collect())])
    }
}

/// Input gradient of the layer for upstream `[B, K, T, S]` and saved input
/// values `[B, C, T, S]`.
pub fn quantum_backward(
    layer: &QuantumLayer,
    upstream: &[f64],
    saved_input: &[f64],
    shape: [usize; 4],
) -> Result<Vec<f64>, TensorError> {
    let [b, c, t, s] = shape;
    let k = layer.circuits.len();
    if upstream.len() != b * k * t * s || saved_input.len() != b * c * t * s {
        return Err(TensorError::Contract("quantum backward: saved context does not match the upstream gradient".into()));
    }
    let cfg = &layer.cfg;
    let (nq, stride) = (cfg.n_qubits, cfg.stride);
    let (mut rows, sp) = unfold(saved_input, &shape, cfg)?;
    rows.iter_mut().for_each(|v| *v *= cfg.input_scale);
    // adjoint of the repeat-and-crop, then of the channel mean
    let inv_c = 1.0 / c as f64;
    let mut pooled = vec![0.0; b * k * t * sp];
    for (line, dst) in upstream.chunks(s).zip(pooled.chunks_mut(sp)) {
        for (x, g) in line.iter().enumerate() {
            dst[x / stride] += g;
        }
    }
    let mut u = vec![0.0; b * c * t * sp * k];
    for bi in 0..b {
        for ci in 0..c {
            for ti in 0..t {
                for w in 0..sp {
                    let row = ((bi * c + ci) * t + ti) * sp + w;
                    for ki in 0..k {
                        u[row * k + ki] = pooled[((bi * k + ki) * t + ti) * sp + w] * inv_c;
                    }
                }
            }
        }
    }
    let g = layer.patch_gradients(&rows, &u);
    // fold back, replicate padding adds into the last trace
    let mut dx = vec![0.0; b * c * t * s];
    for (line, grow) in dx.chunks_mut(s).zip(g.chunks(sp * nq)) {
        for w in 0..sp {
            for j in 0..nq {
                line[(w * stride + j).min(s - 1)] += grow[w * nq + j] * cfg.input_scale;
            }
        }
    }
    Ok(dx)
}

/// Straightforward per-patch evaluation through the state-vector simulator,
/// used as a reference for the batched path.
pub fn reference_forward(
    data: &[f64],
    shape: [usize; 4],
    circuits: &[RandomCircuit],
    cfg: &QuantumLayerConfig,
) -> Result<Vec<f64>, QLayerError> {
    let [b, c, t, s] = shape;
    let nq = cfg.n_qubits;
    let k = circuits.len();
    let obs = Observable::pauli_z(0);
    let mut out = vec![0.0; b * k * t * s];
    for bi in 0..b {
        for ti in 0..t {
            for x in 0..s {
                let w = x / cfg.stride;
                for (ki, circ) in circuits.iter().enumerate() {
                    let mut acc = 0.0;
                    for ci in 0..c {
                        let base = ((bi * c + ci) * t + ti) * s;
                        let patch: Vec<f64> = (0..nq)
                            .map(|j| data[base + (w * cfg.stride + j).min(s - 1)] * cfg.input_scale)
                            .collect();
                        acc += qsim::encoded_expectation(&patch, circ, &obs)?;
                    }
                    out[((bi * k + ki) * t + ti) * s + x] = acc / c as f64;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::ops;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn cfg() -> QuantumLayerConfig {
        QuantumLayerConfig {
            seed: 42,
            ..Default::default()
        }
    }

    fn identity_layer(n: usize) -> QuantumLayer {
        let circuits = (0..n).map(|_| RandomCircuit::identity(4).unwrap()).collect();
        QuantumLayer::from_circuits(cfg(), circuits).unwrap()
    }

    fn random(shape: [usize; 4], seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..shape.iter().product()).map(|_| rng.random_range(-2.0..2.0)).collect()
    }

    #[test]
    fn unfold_bookkeeping() {
        let data: Vec<f64> = (0..16).map(|v| v as f64).collect();
        let (rows, sp) = unfold(&data, &[1, 1, 2, 8], &cfg()).unwrap();
        assert_eq!(sp, 2);
        assert_eq!(rows.len() / 4, 4);
        assert_eq!(&rows[..4], &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(&rows[8..12], &[8.0, 9.0, 10.0, 11.0]);

        let data: Vec<f64> = (0..10).map(|v| v as f64).collect();
        let (rows, sp) = unfold(&data, &[1, 1, 1, 10], &cfg()).unwrap();
        assert_eq!(sp, 3);
        assert_eq!(&rows[8..], &[8.0, 9.0, 9.0, 9.0]);

        let (rows, _) = unfold(&[0.5; 24], &[1, 2, 1, 12], &cfg()).unwrap();
        assert!(rows.iter().all(|v| *v == 0.5));
        assert!(unfold(&[0.0; 3], &[1, 1, 1, 3], &cfg()).is_err());
    }

    #[test]
    fn zero_input_identity_circuits_give_ones() {
        let layer = identity_layer(4);
        let x = Tensor::<f32>::zeros(&[2, 3, 2, 8]);
        let y = layer.forward(&x).unwrap();
        assert_eq!(y.shape(), &[2, 4, 2, 8]);
        assert!(y.data().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn flipped_patch_gives_minus_one() {
        let layer = identity_layer(1);
        let mut data = vec![0.0f64; 8];
        data[0] = PI;
        let x = Tensor::<f64>::new(&[1, 1, 1, 8], data).unwrap();
        let y = layer.forward(&x).unwrap();
        let y = y.data();
        assert!(y[..4].iter().all(|v| (v + 1.0).abs() < 1e-12));
        assert!(y[4..].iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn matches_per_patch_reference() {
        let layer = QuantumLayer::new(cfg()).unwrap();
        for (shape, seed) in [([1, 2, 4, 8], 1), ([2, 3, 3, 10], 2), ([2, 4, 16, 32], 3)] {
            let data = random(shape, seed);
            let x = Tensor::<f64>::new(&shape, data.clone()).unwrap();
            let fast = layer.forward(&x).unwrap().to_vec();
            let slow = reference_forward(&data, shape, layer.circuits(), layer.config()).unwrap();
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12);
            }
            assert!(fast.iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn worker_count_does_not_change_bits() {
        let mut layer = QuantumLayer::new(cfg()).unwrap();
        let shape = [2, 4, 16, 32];
        let x = Tensor::<f64>::param(&shape, random(shape, 9)).unwrap();
        let mut outs = Vec::new();
        for workers in [1, 2, 8] {
            layer.set_workers(workers);
            let y = layer.forward(&x).unwrap();
            let w = Tensor::<f64>::new(y.shape(), (0..y.numel()).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
            ops::sum(&ops::mul(&y, &w).unwrap()).backward().unwrap();
            outs.push((y.to_vec(), x.grad().unwrap()));
            x.zero_grad();
        }
        assert!(outs.windows(2).all(|p| p[0] == p[1]));
    }

    #[test]
    fn batch_permutation_equivariance() {
        let layer = QuantumLayer::new(cfg()).unwrap();
        let shape = [3, 2, 2, 8];
        let data = random(shape, 4);
        let per = 2 * 2 * 8;
        let mut permuted = Vec::new();
        for b in [2, 0, 1] {
            permuted.extend_from_slice(&data[b * per..(b + 1) * per]);
        }
        let y = layer.forward(&Tensor::<f64>::new(&shape, data).unwrap()).unwrap().to_vec();
        let yp = layer.forward(&Tensor::<f64>::new(&shape, permuted).unwrap()).unwrap().to_vec();
        let out_per = 4 * 2 * 8;
        for (i, b) in [2, 0, 1].into_iter().enumerate() {
            assert_eq!(&yp[i * out_per..(i + 1) * out_per], &y[b * out_per..(b + 1) * out_per]);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let layer = QuantumLayer::new(cfg()).unwrap();
        let shape = [1, 2, 2, 8];
        let g = quantum_backward(&layer, &vec![0.0; 4 * 2 * 8], &random(shape, 5), shape).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
        assert!(quantum_backward(&layer, &[0.0; 3], &random(shape, 5), shape).is_err());
    }

    #[test]
    fn single_patch_identity_gradient() {
        let layer = identity_layer(1);
        let x = [0.4, -1.1, 0.3, 2.0];
        let mut up = vec![0.0; 4];
        up[0] = 1.0;
        // upstream 1 on the first repeated position only
        let g = quantum_backward(&layer, &up, &x, [1, 1, 1, 4]).unwrap();
        assert!((g[0] + x[0].sin()).abs() < 1e-12);
        assert!(g[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn backward_matches_finite_difference() {
        let layer = QuantumLayer::new(QuantumLayerConfig {
            input_scale: 0.8,
            ..cfg()
        })
        .unwrap();
        let shape = [1, 2, 3, 10];
        let data = random(shape, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let up: Vec<f64> = (0..4 * 3 * 10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = quantum_backward(&layer, &up, &data, shape).unwrap();
        let h = 1e-4;
        let obj = |d: &[f64]| -> f64 {
            let y = quantum_forward_values(&layer, d, &shape).unwrap();
            y.iter().zip(&up).map(|(a, b)| a * b).sum()
        };
        for i in 0..data.len() {
            let mut p = data.clone();
            p[i] += h;
            let mut m = data.clone();
            m[i] -= h;
            let fd = (obj(&p) - obj(&m)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-4, "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn config_validation() {
        let bad = QuantumLayerConfig {
            stride: 2,
            ..cfg()
        };
        assert!(QuantumLayer::new(bad).is_err());
        let three = vec![RandomCircuit::identity(3).unwrap()];
        assert!(matches!(
            QuantumLayer::from_circuits(cfg(), three),
            Err(QLayerError::QubitMismatch { .. })
        ));
    }
}
