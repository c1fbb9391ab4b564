use crate::autograd::nn::{self, BatchNormOptions, Padding};
use crate::autograd::{ops, Element, Parameter, Tensor};
use crate::qlayer::{QuantumLayer, QuantumLayerConfig};

use super::{push_buffer, push_param, Init, Result};

/// Convolution with fan-in uniform weights and an optional zero bias.
#[derive(Debug, Clone)]
pub struct Conv<T: Element> {
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
    pub stride: usize,
    pub padding: Padding,
}

impl<T: Element> Conv<T> {
    pub fn new(init: &mut Init, cin: usize, cout: usize, k: usize, stride: usize, padding: Padding, bias: bool) -> Self {
        Self {
            weight: init.fan_in(&[cout, cin, k, k], cin * k * k),
            bias: bias.then(|| init.constant(&[cout], 0.0, true)),
            stride,
            padding,
        }
    }

    /// `k×k`, stride 1, output size preserved.
    pub fn same(init: &mut Init, cin: usize, cout: usize, k: usize, bias: bool) -> Self {
        Self::new(init, cin, cout, k, 1, [k / 2; 4], bias)
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(nn::conv2d_padded(x, &self.weight, self.bias.as_ref(), self.stride, self.padding)?)
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn params(&self, prefix: &str, out: &mut Vec<Parameter<T>>) {
        push_param(out, prefix, "weight", &self.weight);
        if let Some(b) = &self.bias {
            push_param(out, prefix, "bias", b);
        }
    }
}

/// conv 3×3 (no bias) → batch norm → PReLU.
#[derive(Debug, Clone)]
pub struct ConvUnit<T: Element> {
    pub conv: Conv<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub alpha: Tensor<T>,
}

impl<T: Element> ConvUnit<T> {
    pub fn new(init: &mut Init, cin: usize, cout: usize) -> Self {
        Self {
            conv: Conv::same(init, cin, cout, 3, false),
            gamma: init.constant(&[cout], 1.0, true),
            beta: init.constant(&[cout], 0.0, true),
            running_mean: init.constant(&[cout], 0.0, false),
            running_var: init.constant(&[cout], 1.0, false),
            alpha: init.constant(&[cout], 0.25, true),
        }
    }

    pub fn forward(&self, x: &Tensor<T>, training: bool) -> Result<Tensor<T>> {
        let y = self.conv.forward(x)?;
        let opts = BatchNormOptions {
            training,
            ..Default::default()
        };
        let y = nn::batch_norm2d(&y, &self.gamma, &self.beta, &self.running_mean, &self.running_var, opts)?;
        Ok(nn::prelu(&y, &self.alpha)?)
    }

    pub fn params(&self, prefix: &str, out: &mut Vec<Parameter<T>>) {
        self.conv.params(&format!("{prefix}.conv"), out);
        push_param(out, prefix, "bn.gamma", &self.gamma);
        push_param(out, prefix, "bn.beta", &self.beta);
        push_buffer(out, prefix, "bn.running_mean", &self.running_mean);
        push_buffer(out, prefix, "bn.running_var", &self.running_var);
        push_param(out, prefix, "prelu.alpha", &self.alpha);
    }
}

/// Dual-pathway residual block.
///
/// With a quantum layer the input is split into `classical_channels` and
/// `quantum_channels`; the classical part goes through `x + Φ3(Φ2(Φ1(x)))`, the
/// quantum part through the layer, and the two are concatenated. Without one,
/// the residual path covers every channel. An optional 1×1 fuse convolution
/// maps the result to a fixed width.
#[derive(Debug, Clone)]
pub struct FresBlock<T: Element> {
    pub classical_channels: usize,
    pub quantum_channels: usize,
    pub units: Vec<ConvUnit<T>>,
    pub quantum: Option<QuantumLayer>,
    pub fuse: Option<Conv<T>>,
}

impl<T: Element> FresBlock<T> {
    /// `quantum = Some((channels, config))` enables the quantum pathway.
    pub fn new(
        init: &mut Init,
        in_channels: usize,
        quantum: Option<(usize, QuantumLayerConfig)>,
        fuse_out: Option<usize>,
    ) -> Result<Self> {
        let (qc, layer) = match quantum {
            Some((q, cfg)) => (q, Some(QuantumLayer::new(cfg)?)),
            None => (0, None),
        };
        let cc = in_channels - qc;
        let units = (0..3).map(|_| ConvUnit::new(init, cc, cc)).collect();
        let k = layer.as_ref().map_or(0, |l| l.n_outputs());
        let fuse = fuse_out.map(|c| Conv::same(init, cc + k, c, 1, true));
        Ok(Self {
            classical_channels: cc,
            quantum_channels: qc,
            units,
            quantum: layer,
            fuse,
        })
    }

    pub fn out_channels(&self) -> usize {
        match &self.fuse {
            Some(f) => f.out_channels(),
            None => self.classical_channels + self.quantum.as_ref().map_or(0, |l| l.n_outputs()),
        }
    }

    pub fn forward(&self, x: &Tensor<T>, training: bool, pairs: &mut Vec<(Tensor<T>, Tensor<T>)>) -> Result<Tensor<T>> {
        let (xc, xq) = match self.quantum {
            Some(_) => {
                let (a, b) = ops::split_channels(x, self.classical_channels)?;
                (a, Some(b))
            }
            None => (x.clone(), None),
        };
        let mut h = xc.clone();
        for u in &self.units {
            h = u.forward(&h, training)?;
        }
        let r = ops::add(&xc, &h)?;
        let merged = match (&self.quantum, xq) {
            (Some(layer), Some(xq)) => {
                let q = layer.forward(&xq)?;
                pairs.push((r.clone(), q.clone()));
                ops::concat_channels(&r, &q)?
            }
            _ => r,
        };
        match &self.fuse {
            Some(f) => f.forward(&merged),
            None => Ok(merged),
        }
    }

    pub fn params(&self, prefix: &str, out: &mut Vec<Parameter<T>>) {
        for (i, u) in self.units.iter().enumerate() {
            u.params(&format!("{prefix}.phi{}", i + 1), out);
        }
        if let Some(f) = &self.fuse {
            f.params(&format!("{prefix}.fuse"), out);
        }
    }
}
