//! Hybrid generator, discriminator and UNet built from autograd ops and the
//! quantum convolution layer.
//!
//! Every network is generic over the element type so the same weights can be
//! evaluated in `f32` and `f64`. Initial values are always drawn through `f32`,
//! which makes a `f64` instance built from the same config hold exactly the
//! same numbers.

mod blocks;
mod gan;
mod unet;


use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::autograd::{Element, Parameter, Tensor, TensorError};
use crate::qlayer::{QLayerError, QuantumLayer, QuantumLayerConfig};

pub use blocks::{Conv, ConvUnit, FresBlock};
pub use gan::{Discriminator, Generator};
pub use unet::UNet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Quantum(#[from] QLayerError),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

/// Architecture hyperparameters shared by all three network families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    /// Number of dual-pathway blocks `L`.
    pub blocks: usize,
    /// Trunk width `C0` (UNet: first encoder width).
    pub base_channels: usize,
    /// Share of block input channels routed through the quantum pathway.
    pub quantum_fraction: f64,
    pub upsample: usize,
    pub height: usize,
    pub width: usize,
    /// `false` builds the classical twin.
    pub quantum: bool,
    pub n_qubits: usize,
    pub n_circuits: usize,
    pub circuit_depth: usize,
    pub input_scale: f64,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            blocks: 4,
            base_channels: 32,
            quantum_fraction: 0.25,
            upsample: 2,
            height: 64,
            width: 64,
            quantum: true,
            n_qubits: 4,
            n_circuits: 4,
            circuit_depth: crate::qsim::DEFAULT_DEPTH,
            input_scale: 1.0,
            seed: 0,
        }
    }
}

pub type GeneratorConfig = NetConfig;
pub type DiscriminatorConfig = NetConfig;
pub type UNetConfig = NetConfig;

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(ModelError::Config(m));
        if self.blocks == 0 {
            return fail("blocks must be at least 1".into());
        }
        if self.base_channels < 2 {
            return fail(format!("base_channels = {} is too small", self.base_channels));
        }
        if !(self.quantum_fraction > 0.0 && self.quantum_fraction < 1.0) {
            return fail(format!("quantum_fraction = {} outside (0, 1)", self.quantum_fraction));
        }
        if self.upsample != 2 {
            return fail(format!("upsample factor is fixed at 2, got {}", self.upsample));
        }
        if self.height < 8 || self.width < 8 {
            return fail(format!("patch {}x{} below the 8x8 minimum", self.height, self.width));
        }
        if self.quantum {
            self.quantum_layer(0).validate()?;
        }
        Ok(())
    }

    /// Channels given to the quantum pathway out of `channels`.
    pub fn quantum_split(&self, channels: usize) -> usize {
        ((channels as f64 * self.quantum_fraction).round() as usize).clamp(1, channels - 1)
    }

    /// Layer config with a circuit seed unique to `(seed, layer_id)`.
    pub fn quantum_layer(&self, layer_id: u64) -> QuantumLayerConfig {
        QuantumLayerConfig {
            n_qubits: self.n_qubits,
            n_circuits: self.n_circuits,
            window: self.n_qubits,
            stride: self.n_qubits,
            depth: self.circuit_depth,
            seed: derive_seed(self.seed, "circuits", layer_id),
            input_scale: self.input_scale,
        }
    }
}

/// Stable 64-bit seed from a parent seed, a purpose tag and an index.
pub fn derive_seed(seed: u64, tag: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(tag.as_bytes());
    h.update(index.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Deterministic parameter initializer.
pub struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// `U(−1/√fan_in, 1/√fan_in)`.
    pub fn fan_in<T: Element>(&mut self, shape: &[usize], fan_in: usize) -> Tensor<T> {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| T::from_f64(self.rng.random_range(-bound..bound) as f32 as f64))
            .collect();
        Tensor::param(shape, data).expect("shape")
    }

    pub fn constant<T: Element>(&mut self, shape: &[usize], value: f64, trainable: bool) -> Tensor<T> {
        let n = shape.iter().product();
        let data = vec![T::from_f64(value as f32 as f64); n];
        if trainable {
            Tensor::param(shape, data)
        } else {
            Tensor::new(shape, data)
        }
        .expect("shape")
    }
}

/// A network's result together with the `(classical, quantum)` feature pairs
/// recorded before each concatenation, in block order.
pub struct ForwardOutput<T: Element> {
    pub output: Tensor<T>,
    pub pairs: Vec<(Tensor<T>, Tensor<T>)>,
}

/// Common interface used by training, evaluation and checkpointing.
pub trait Network<T: Element> {
    fn forward(&self, x: &Tensor<T>, training: bool) -> Result<ForwardOutput<T>>;
    /// Trainable parameters and buffers, with unique dotted names.
    fn parameters(&self) -> Vec<Parameter<T>>;
    fn quantum_layers(&self) -> Vec<&QuantumLayer>;
    fn quantum_layers_mut(&mut self) -> Vec<&mut QuantumLayer>;
    fn config(&self) -> &NetConfig;

    fn trainable_count(&self) -> usize {
        self.parameters().iter().filter(|p| p.trainable).map(|p| p.tensor.numel()).sum()
    }

    fn set_workers(&mut self, workers: usize) {
        for q in self.quantum_layers_mut() {
            q.set_workers(workers);
        }
    }
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub(crate) fn push_param<T: Element>(out: &mut Vec<Parameter<T>>, prefix: &str, name: &str, t: &Tensor<T>) {
    out.push(Parameter::trainable(join(prefix, name), t.clone()));
}

pub(crate) fn push_buffer<T: Element>(out: &mut Vec<Parameter<T>>, prefix: &str, name: &str, t: &Tensor<T>) {
    out.push(Parameter::buffer(join(prefix, name), t.clone()));
}
