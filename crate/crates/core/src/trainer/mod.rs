//! Adam, the adversarial and supervised training loops, history and checkpoints.

mod adam;
mod checkpoint;
mod session;

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autograd::TensorError;
use crate::models::ModelError;
use crate::objectives::LossWeights;
use crate::seisdata::SeisError;

pub use adam::{Adam, StepOutcome};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, Entry, EntryData};
pub use session::{train_gan, train_unet, EpochStats, Family, Nets, Session, StepLog};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training config error: {0}")]
    Config(String),
    #[error("training diverged: non-finite loss for {steps} consecutive steps (epoch {epoch})")]
    Diverged { epoch: usize, steps: usize },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("architecture mismatch: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Data(#[from] SeisError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = TrainError> = std::result::Result<T, E>;

/// Learning rates used when [`TrainConfig::lr`] is unset.
pub const LR_GAN: f64 = 1e-5;
pub const LR_UNET: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Overrides the family default.
    pub lr: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm bound; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub loss: LossWeights,
    pub seed: u64,
    /// Write `last.qckp` every this many epochs (the final epoch always).
    pub checkpoint_every: usize,
    /// Patch-evaluation threads for the quantum layers; 0 uses every core.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 16,
            lr: None,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(5.0),
            loss: LossWeights::default(),
            seed: 0,
            checkpoint_every: 1,
            workers: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.batch_size < 2 {
            return bad(format!("batch_size = {} (batch norm needs at least 2)", self.batch_size));
        }
        if let Some(lr) = self.lr {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(format!("lr = {lr} must be positive"));
            }
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return bad("Adam betas must lie in [0, 1) and eps be positive".into());
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return bad(format!("clip_norm = {c} must be positive"));
            }
        }
        self.loss.validate().map_err(TrainError::Config)
    }

    pub fn resolved_workers(&self) -> usize {
        if self.workers == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            self.workers
        }
    }
}

/// One line of the history CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub split: String,
    pub mae: f64,
    pub rmse: f64,
    pub loss_g: Option<f64>,
    pub loss_d: Option<f64>,
    pub loss_com: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub rows: Vec<HistoryRow>,
}

impl History {
    pub const HEADER: &'static str = "epoch,split,mae,rmse,loss_g,loss_d,loss_com";

    pub fn split(&self, split: &str) -> impl Iterator<Item = &HistoryRow> {
        let split = split.to_string();
        self.rows.iter().filter(move |r| r.split == split)
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        writeln!(w, "{}", Self::HEADER)?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.epoch,
                r.split,
                r.mae,
                r.rmse,
                opt(r.loss_g),
                opt(r.loss_d),
                opt(r.loss_com)
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }
}

#[cfg(test)]
mod tests;
