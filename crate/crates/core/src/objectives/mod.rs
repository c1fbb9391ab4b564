//! Training losses, reconstruction metrics and spectral diagnostics.

mod metrics;
mod spectra;

use serde::{Deserialize, Serialize};

use crate::autograd::{ops, Element, Result, Tensor, TensorError};

pub use metrics::{
    mae, psnr, psnr_literal, psnr_max_for, rmse, ssim, EvalReport, LogBase, MetricError, SampleMetrics,
};
pub use spectra::{amplitude_spectrum, band_energy, fk_spectrum, patch_band_energy, FkSpectrum};

/// Bounds applied to scores before taking logs.
pub const SCORE_CLAMP: (f64, f64) = (1e-7, 1.0 - 1e-7);
pub const COSINE_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub lambda_rec: f64,
    pub lambda_com: f64,
    /// Add `λ_com · L_com` over the discriminator's own pairs to its loss.
    pub com_in_discriminator: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_rec: 100.0,
            lambda_com: 1.0,
            com_in_discriminator: true,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> std::result::Result<(), String> {
        for (name, v) in [("lambda_rec", self.lambda_rec), ("lambda_com", self.lambda_com)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("{name} = {v} must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

fn neg_mean_log<T: Element>(p: &Tensor<T>) -> Tensor<T> {
    ops::scale(&ops::mean(&ops::log_clamped(p, SCORE_CLAMP.0, SCORE_CLAMP.1)), -1.0)
}

/// `−mean log D(G(x)) + λ_rec · mean |pred − target|`.
pub fn loss_generator<T: Element>(pred: &Tensor<T>, target: &Tensor<T>, d_score: &Tensor<T>, w: &LossWeights) -> Result<Tensor<T>> {
    let adv = neg_mean_log(d_score);
    if w.lambda_rec == 0.0 {
        return Ok(adv);
    }
    let rec = ops::l1_loss(pred, target)?;
    ops::add(&adv, &ops::scale(&rec, w.lambda_rec))
}

/// `−(mean log d_real + mean log(1 − d_fake))`.
pub fn loss_discriminator<T: Element>(d_real: &Tensor<T>, d_fake: &Tensor<T>) -> Result<Tensor<T>> {
    let real = neg_mean_log(d_real);
    let fake = neg_mean_log(&ops::affine(d_fake, -1.0, 1.0));
    ops::add(&real, &fake)
}

/// Mean absolute cosine similarity between the channel-mean classical and
/// quantum maps of each pair, per sample. Zero for an empty list.
pub fn loss_complementarity<T: Element>(pairs: &[(Tensor<T>, Tensor<T>)]) -> Result<Tensor<T>> {
    if pairs.is_empty() {
        return Ok(Tensor::scalar(T::zero()));
    }
    let mut total: Option<Tensor<T>> = None;
    for (c, q) in pairs {
        if c.shape().len() != 4 || q.shape().len() != 4 || c.shape()[0] != q.shape()[0] || c.shape()[2..] != q.shape()[2..] {
            return Err(TensorError::Shape(format!(
                "complementarity pair shapes {:?} and {:?} do not align",
                c.shape(),
                q.shape()
            )));
        }
        let a = ops::flatten(&ops::channel_mean(c)?)?;
        let b = ops::flatten(&ops::channel_mean(q)?)?;
        let m = ops::mean(&ops::abs_cosine_rows(&a, &b, COSINE_EPS)?);
        total = Some(match total {
            Some(t) => ops::add(&t, &m)?,
            None => m,
        });
    }
    Ok(ops::scale(&total.expect("non-empty"), 1.0 / pairs.len() as f64))
}
