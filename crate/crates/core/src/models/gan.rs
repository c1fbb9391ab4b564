use crate::autograd::{nn, ops, Element, Parameter, Tensor};
use crate::qlayer::QuantumLayer;

use super::{derive_seed, push_param, Conv, ForwardOutput, FresBlock, Init, ModelError, NetConfig, Network, Result};

/// Stride-2 convolution that halves even sizes exactly.
const HALVING: [usize; 4] = [0, 1, 0, 1];

fn check_input<T: Element>(x: &Tensor<T>, what: &str) -> Result<(usize, usize, usize)> {
    match *x.shape() {
        [b, 1, h, w] => Ok((b, h, w)),
        _ => Err(ModelError::Config(format!("{what} expects [B, 1, T, S], got {:?}", x.shape()))),
    }
}

fn quantum_blocks<T: Element>(blocks: &[FresBlock<T>]) -> Vec<&QuantumLayer> {
    blocks.iter().filter_map(|b| b.quantum.as_ref()).collect()
}

fn quantum_blocks_mut<T: Element>(blocks: &mut [FresBlock<T>]) -> Vec<&mut QuantumLayer> {
    blocks.iter_mut().filter_map(|b| b.quantum.as_mut()).collect()
}

/// `x → f_up(X0 + F(X0))` with `X0 = PReLU(stem(x))` at half resolution.
#[derive(Debug, Clone)]
pub struct Generator<T: Element = f32> {
    cfg: NetConfig,
    pub stem: Conv<T>,
    pub stem_alpha: Tensor<T>,
    pub blocks: Vec<FresBlock<T>>,
    pub up: Conv<T>,
    pub out: Conv<T>,
}

impl<T: Element> Generator<T> {
    pub fn new(cfg: &NetConfig) -> Result<Self> {
        cfg.validate()?;
        let c0 = cfg.base_channels;
        let r = cfg.upsample;
        let mut init = Init::new(derive_seed(cfg.seed, "generator", 0));
        let stem = Conv::new(&mut init, 1, c0, 3, 2, HALVING, true);
        let stem_alpha = init.constant(&[c0], 0.25, true);
        let blocks = (0..cfg.blocks)
            .map(|l| {
                let q = cfg
                    .quantum
                    .then(|| (cfg.quantum_split(c0), cfg.quantum_layer(l as u64)));
                FresBlock::new(&mut init, c0, q, Some(c0))
            })
            .collect::<Result<Vec<_>>>()?;
        let up = Conv::same(&mut init, c0, r * r, 3, true);
        let out = Conv::same(&mut init, 1, 1, 3, true);
        Ok(Self {
            cfg: cfg.clone(),
            stem,
            stem_alpha,
            blocks,
            up,
            out,
        })
    }
}

impl<T: Element> Network<T> for Generator<T> {
    fn forward(&self, x: &Tensor<T>, training: bool) -> Result<ForwardOutput<T>> {
        let (_, h, w) = check_input(x, "generator")?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(ModelError::Tensor(crate::autograd::TensorError::Shape(format!(
                "generator input {h}x{w} must have even sizes"
            ))));
        }
        if self.cfg.quantum && w / 2 < self.cfg.n_qubits {
            return Err(ModelError::Config(format!(
                "{} traces leave fewer than {} at half resolution",
                w, self.cfg.n_qubits
            )));
        }
        let x0 = nn::prelu(&self.stem.forward(x)?, &self.stem_alpha)?;
        let mut pairs = Vec::new();
        let mut hcur = x0.clone();
        for b in &self.blocks {
            hcur = b.forward(&hcur, training, &mut pairs)?;
        }
        let trunk = ops::add(&x0, &hcur)?;
        let up = nn::pixel_shuffle(&self.up.forward(&trunk)?, self.cfg.upsample)?;
        Ok(ForwardOutput {
            output: self.out.forward(&up)?,
            pairs,
        })
    }

    fn parameters(&self) -> Vec<Parameter<T>> {
        let mut out = Vec::new();
        self.stem.params("stem", &mut out);
        push_param(&mut out, "stem", "alpha", &self.stem_alpha);
        for (i, b) in self.blocks.iter().enumerate() {
            b.params(&format!("blocks.{i}"), &mut out);
        }
        self.up.params("up", &mut out);
        self.out.params("out", &mut out);
        out
    }

    fn quantum_layers(&self) -> Vec<&QuantumLayer> {
        quantum_blocks(&self.blocks)
    }

    fn quantum_layers_mut(&mut self) -> Vec<&mut QuantumLayer> {
        quantum_blocks_mut(&mut self.blocks)
    }

    fn config(&self) -> &NetConfig {
        &self.cfg
    }
}

/// Stem, blocks with 2×2 average pooling in between, then
/// `σ(fc(flatten(X^L ⊕ Q^L)))`. The last block keeps its concatenated output.
#[derive(Debug, Clone)]
pub struct Discriminator<T: Element = f32> {
    cfg: NetConfig,
    pub stem: Conv<T>,
    pub stem_alpha: Tensor<T>,
    pub blocks: Vec<FresBlock<T>>,
    pub fc_weight: Tensor<T>,
    pub fc_bias: Tensor<T>,
}

impl<T: Element> Discriminator<T> {
    pub fn new(cfg: &NetConfig) -> Result<Self> {
        cfg.validate()?;
        let c0 = cfg.base_channels;
        let (mut h, mut w) = (cfg.height, cfg.width);
        let halve = |n: usize, what: &str| -> Result<usize> {
            if n % 2 != 0 {
                return Err(ModelError::Config(format!("discriminator {what} size {n} cannot be halved")));
            }
            Ok(n / 2)
        };
        h = halve(h, "time")?;
        w = halve(w, "trace")?;
        let mut init = Init::new(derive_seed(cfg.seed, "discriminator", 0));
        let stem = Conv::new(&mut init, 1, c0, 3, 2, HALVING, true);
        let stem_alpha = init.constant(&[c0], 0.25, true);
        let mut blocks = Vec::with_capacity(cfg.blocks);
        for l in 0..cfg.blocks {
            if cfg.quantum && w < cfg.n_qubits {
                return Err(ModelError::Config(format!(
                    "discriminator block {l} sees {w} traces, fewer than {} qubits",
                    cfg.n_qubits
                )));
            }
            let last = l + 1 == cfg.blocks;
            let q = cfg
                .quantum
                .then(|| (cfg.quantum_split(c0), cfg.quantum_layer(1000 + l as u64)));
            blocks.push(FresBlock::new(&mut init, c0, q, (!last).then_some(c0))?);
            if !last {
                h = halve(h, "time")?;
                w = halve(w, "trace")?;
            }
        }
        let features = blocks.last().map_or(c0, |b: &FresBlock<T>| b.out_channels()) * h * w;
        let fc_weight = init.fan_in(&[1, features], features);
        let fc_bias = init.constant(&[1], 0.0, true);
        Ok(Self {
            cfg: cfg.clone(),
            stem,
            stem_alpha,
            blocks,
            fc_weight,
            fc_bias,
        })
    }
}

impl<T: Element> Network<T> for Discriminator<T> {
    fn forward(&self, x: &Tensor<T>, training: bool) -> Result<ForwardOutput<T>> {
        let (_, h, w) = check_input(x, "discriminator")?;
        if (h, w) != (self.cfg.height, self.cfg.width) {
            return Err(ModelError::Tensor(crate::autograd::TensorError::Shape(format!(
                "discriminator built for {}x{} patches, got {h}x{w}",
                self.cfg.height, self.cfg.width
            ))));
        }
        let mut hcur = nn::prelu(&self.stem.forward(x)?, &self.stem_alpha)?;
        let mut pairs = Vec::new();
        for (l, b) in self.blocks.iter().enumerate() {
            hcur = b.forward(&hcur, training, &mut pairs)?;
            if l + 1 < self.blocks.len() {
                hcur = nn::avg_pool2d(&hcur, 2)?;
            }
        }
        let logits = nn::linear(&ops::flatten(&hcur)?, &self.fc_weight, Some(&self.fc_bias))?;
        Ok(ForwardOutput {
            output: ops::sigmoid(&logits),
            pairs,
        })
    }

    fn parameters(&self) -> Vec<Parameter<T>> {
        let mut out = Vec::new();
        self.stem.params("stem", &mut out);
        push_param(&mut out, "stem", "alpha", &self.stem_alpha);
        for (i, b) in self.blocks.iter().enumerate() {
            b.params(&format!("blocks.{i}"), &mut out);
        }
        push_param(&mut out, "fc", "weight", &self.fc_weight);
        push_param(&mut out, "fc", "bias", &self.fc_bias);
        out
    }

    fn quantum_layers(&self) -> Vec<&QuantumLayer> {
        quantum_blocks(&self.blocks)
    }

    fn quantum_layers_mut(&mut self) -> Vec<&mut QuantumLayer> {
        quantum_blocks_mut(&mut self.blocks)
    }

    fn config(&self) -> &NetConfig {
        &self.cfg
    }
}
