use crate::autograd::{nn, ops, Element, Parameter, Tensor, TensorError};
use crate::qlayer::QuantumLayer;

use super::{derive_seed, ConvUnit, Conv, ForwardOutput, FresBlock, Init, ModelError, NetConfig, Network, Result};

const LEVELS: usize = 3;

#[derive(Debug, Clone)]
struct Level<T: Element> {
    units: [ConvUnit<T>; 2],
}

impl<T: Element> Level<T> {
    fn new(init: &mut Init, cin: usize, cout: usize) -> Self {
        Self {
            units: [ConvUnit::new(init, cin, cout), ConvUnit::new(init, cout, cout)],
        }
    }

    fn forward(&self, x: &Tensor<T>, training: bool) -> Result<Tensor<T>> {
        let h = self.units[0].forward(x, training)?;
        self.units[1].forward(&h, training)
    }

    fn params(&self, prefix: &str, out: &mut Vec<Parameter<T>>) {
        self.units[0].params(&format!("{prefix}.0"), out);
        self.units[1].params(&format!("{prefix}.1"), out);
    }
}

/// Three-level encoder/decoder with skip concatenations and a dual-pathway
/// bottleneck. `base_channels` is the first encoder width; widths double per
/// level. `blocks` is ignored.
#[derive(Debug, Clone)]
pub struct UNet<T: Element = f32> {
    cfg: NetConfig,
    encoder: Vec<Level<T>>,
    bottleneck: FresBlock<T>,
    /// Per decoder level: the post-upsample unit and the two units after the skip concat.
    up_units: Vec<ConvUnit<T>>,
    decoder: Vec<Level<T>>,
    head: Conv<T>,
}

impl<T: Element> UNet<T> {
    pub fn new(cfg: &NetConfig) -> Result<Self> {
        cfg.validate()?;
        let c = cfg.base_channels;
        let widths: Vec<usize> = (0..LEVELS).map(|l| c << l).collect();
        let mut init = Init::new(derive_seed(cfg.seed, "unet", 0));
        let mut encoder = Vec::new();
        let mut cin = 1;
        for &w in &widths {
            encoder.push(Level::new(&mut init, cin, w));
            cin = w;
        }
        let deep = widths[LEVELS - 1];
        let q = cfg
            .quantum
            .then(|| (cfg.quantum_split(deep), cfg.quantum_layer(2000)));
        let bottleneck = FresBlock::new(&mut init, deep, q, Some(deep))?;
        let mut up_units = Vec::new();
        let mut decoder = Vec::new();
        let mut cur = deep;
        for &w in widths.iter().rev() {
            up_units.push(ConvUnit::new(&mut init, cur, w));
            decoder.push(Level::new(&mut init, 2 * w, w));
            cur = w;
        }
        let head = Conv::same(&mut init, c, 1, 1, true);
        Ok(Self {
            cfg: cfg.clone(),
            encoder,
            bottleneck,
            up_units,
            decoder,
            head,
        })
    }
}

impl<T: Element> Network<T> for UNet<T> {
    fn forward(&self, x: &Tensor<T>, training: bool) -> Result<ForwardOutput<T>> {
        let (h, w) = match *x.shape() {
            [_, 1, h, w] => (h, w),
            _ => return Err(ModelError::Config(format!("unet expects [B, 1, T, S], got {:?}", x.shape()))),
        };
        let f = 1 << LEVELS;
        if h % f != 0 || w % f != 0 {
            return Err(ModelError::Tensor(TensorError::Shape(format!(
                "unet input {h}x{w} must be divisible by {f}"
            ))));
        }
        if self.cfg.quantum && w / f < self.cfg.n_qubits {
            return Err(ModelError::Config(format!(
                "{w} traces leave fewer than {} at the bottleneck",
                self.cfg.n_qubits
            )));
        }
        let mut skips = Vec::with_capacity(LEVELS);
        let mut cur = x.clone();
        for level in &self.encoder {
            let s = level.forward(&cur, training)?;
            cur = nn::max_pool2d(&s, 2)?;
            skips.push(s);
        }
        let mut pairs = Vec::new();
        cur = self.bottleneck.forward(&cur, training, &mut pairs)?;
        for ((up, level), skip) in self.up_units.iter().zip(&self.decoder).zip(skips.iter().rev()) {
            let u = up.forward(&nn::nearest_upsample(&cur, 2, 2)?, training)?;
            cur = level.forward(&ops::concat_channels(&u, skip)?, training)?;
        }
        Ok(ForwardOutput {
            output: self.head.forward(&cur)?,
            pairs,
        })
    }

    fn parameters(&self) -> Vec<Parameter<T>> {
        let mut out = Vec::new();
        for (i, l) in self.encoder.iter().enumerate() {
            l.params(&format!("enc{i}"), &mut out);
        }
        self.bottleneck.params("bottleneck", &mut out);
        for (i, (u, l)) in self.up_units.iter().zip(&self.decoder).enumerate() {
            u.params(&format!("dec{i}.up"), &mut out);
            l.params(&format!("dec{i}"), &mut out);
        }
        self.head.params("head", &mut out);
        out
    }

    fn quantum_layers(&self) -> Vec<&QuantumLayer> {
        self.bottleneck.quantum.iter().collect()
    }

    fn quantum_layers_mut(&mut self) -> Vec<&mut QuantumLayer> {
        self.bottleneck.quantum.iter_mut().collect()
    }

    fn config(&self) -> &NetConfig {
        &self.cfg
    }
}
