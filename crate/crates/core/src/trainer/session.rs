use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    load_checkpoint, save_checkpoint, Adam, Checkpoint, Entry, EntryData, History, HistoryRow, Result, TrainConfig,
    TrainError, LR_GAN, LR_UNET,
};
use crate::autograd::{no_grad, ops, Parameter, Tensor, TensorError};
use crate::models::{derive_seed, Discriminator, Generator, ModelError, NetConfig, Network, UNet};
use crate::objectives::{loss_complementarity, loss_discriminator, loss_generator};
use crate::qlayer::QuantumLayer;
use crate::qsim::RandomCircuit;
use crate::seisdata::{SeisFile, Task};

/// Which networks a session trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gan,
    Unet,
}

impl Family {
    pub fn for_task(task: Task) -> Self {
        if task == Task::Lfe {
            Family::Unet
        } else {
            Family::Gan
        }
    }

    fn accepts(self, task: Task) -> bool {
        Self::for_task(task) == self
    }
}

pub enum Nets {
    Gan { g: Generator<f32>, d: Discriminator<f32> },
    Unet(UNet<f32>),
}

impl Nets {
    fn named(&self) -> Vec<(&'static str, &dyn Network<f32>)> {
        match self {
            Nets::Gan { g, d } => vec![("g", g as &dyn Network<f32>), ("d", d)],
            Nets::Unet(u) => vec![("net", u as &dyn Network<f32>)],
        }
    }

    fn named_mut(&mut self) -> Vec<(&'static str, &mut dyn Network<f32>)> {
        match self {
            Nets::Gan { g, d } => vec![("g", g as &mut dyn Network<f32>), ("d", d)],
            Nets::Unet(u) => vec![("net", u as &mut dyn Network<f32>)],
        }
    }

    /// The restoring network in inference mode.
    pub fn predict(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        no_grad(|| match self {
            Nets::Gan { g, .. } => Ok(g.forward(x, false)?.output),
            Nets::Unet(u) => Ok(u.forward(x, false)?.output),
        })
    }
}

fn non_finite(e: &TrainError) -> bool {
    matches!(
        e,
        TrainError::Tensor(TensorError::NonFinite(_)) | TrainError::Model(ModelError::Tensor(TensorError::NonFinite(_)))
    )
}

/// Losses and error sums of one optimization step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    /// Generator-side objective actually minimized (with `λ_com · L_com`).
    pub loss_g: f64,
    pub loss_d: Option<f64>,
    pub loss_com: f64,
    pub abs_err: f64,
    pub sq_err: f64,
    pub count: usize,
    pub clipped: bool,
    pub skipped: bool,
}

#[derive(Debug, Clone)]
pub struct EpochStats {
    pub epoch: usize,
    pub train: HistoryRow,
    pub val: Option<HistoryRow>,
    pub steps: Vec<StepLog>,
    /// Whether this epoch produced a new best checkpoint.
    pub improved: bool,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    family: Family,
    model: NetConfig,
    train: TrainConfig,
    epoch: usize,
    best_mae: Option<f64>,
    history: History,
    optimizers: Vec<OptMeta>,
}

#[derive(Serialize, Deserialize)]
struct OptMeta {
    step: u64,
    skipped: u64,
}

/// Networks, optimizers and bookkeeping of one training run.
pub struct Session {
    pub family: Family,
    pub model: NetConfig,
    pub train: TrainConfig,
    pub nets: Nets,
    /// One per entry of `nets` in the same order (`g`, `d` or `net`).
    pub opts: Vec<Adam>,
    /// Completed epochs.
    pub epoch: usize,
    pub history: History,
    /// Lowest validation MAE seen (training MAE when there is no validation set).
    pub best_mae: Option<f64>,
    bad_steps: usize,
}

fn trainable(net: &dyn Network<f32>) -> Vec<Parameter<f32>> {
    net.parameters().into_iter().filter(|p| p.trainable).collect()
}

fn zero_grads(net: &dyn Network<f32>) {
    net.parameters().iter().for_each(|p| p.tensor.zero_grad());
}

fn batch(file: &SeisFile, idx: &[usize], degraded: bool) -> Result<Tensor<f32>> {
    let n = file.t * file.s;
    let mut data = Vec::with_capacity(idx.len() * n);
    for &i in idx {
        let p = &file.patches[i];
        data.extend_from_slice(if degraded { &p.degraded } else { &p.target });
    }
    Ok(Tensor::new(&[idx.len(), 1, file.t, file.s], data)?)
}

fn errors(pred: &Tensor<f32>, target: &Tensor<f32>) -> (f64, f64) {
    pred.data()
        .iter()
        .zip(target.data().iter())
        .fold((0.0, 0.0), |(a, s), (p, t)| {
            let e = *p as f64 - *t as f64;
            (a + e.abs(), s + e * e)
        })
}

impl Session {
    pub fn new(family: Family, model: &NetConfig, train: &TrainConfig) -> Result<Self> {
        train.validate()?;
        model.validate()?;
        let nets = match family {
            Family::Gan => Nets::Gan {
                g: Generator::new(model)?,
                d: Discriminator::new(model)?,
            },
            Family::Unet => Nets::Unet(UNet::new(model)?),
        };
        let lr = train.lr.unwrap_or(match family {
            Family::Gan => LR_GAN,
            Family::Unet => LR_UNET,
        });
        let opts = nets
            .named()
            .iter()
            .map(|_| Adam {
                beta1: train.beta1,
                beta2: train.beta2,
                eps: train.eps,
                ..Adam::new(lr)
            })
            .collect();
        let mut s = Self {
            family,
            model: model.clone(),
            train: train.clone(),
            nets,
            opts,
            epoch: 0,
            history: History::default(),
            best_mae: None,
            bad_steps: 0,
        };
        s.set_workers(train.resolved_workers());
        Ok(s)
    }

    pub fn set_workers(&mut self, workers: usize) {
        for (_, n) in self.nets.named_mut() {
            n.set_workers(workers);
        }
    }

    /// Checks that `file` can be fed to this session's networks.
    pub fn check_data(&self, file: &SeisFile) -> Result<()> {
        if (file.t, file.s) != (self.model.height, self.model.width) {
            return Err(TrainError::Mismatch(format!(
                "data patches are {}x{}, model expects {}x{}",
                file.t, file.s, self.model.height, self.model.width
            )));
        }
        if !self.family.accepts(file.task) {
            return Err(TrainError::Mismatch(format!("task {} cannot train a {:?} model", file.task, self.family)));
        }
        Ok(())
    }

    fn gan_step(&mut self, x: &Tensor<f32>, y: &Tensor<f32>) -> Result<StepLog> {
        let w = self.train.loss;
        let clip = self.train.clip_norm;
        let Nets::Gan { g, d } = &self.nets else {
            unreachable!("gan step on a unet session")
        };
        zero_grads(g);
        zero_grads(d);
        let gout = g.forward(x, true)?;
        let fake = gout.output;

        let real_out = d.forward(y, true)?;
        let fake_out = d.forward(&fake.detach(), true)?;
        let mut loss_d = loss_discriminator(&real_out.output, &fake_out.output)?;
        if w.com_in_discriminator && w.lambda_com > 0.0 {
            let pairs: Vec<_> = real_out.pairs.into_iter().chain(fake_out.pairs).collect();
            if !pairs.is_empty() {
                loss_d = ops::add(&loss_d, &ops::scale(&loss_complementarity(&pairs)?, w.lambda_com))?;
            }
        }
        loss_d.backward()?;
        let d_params = trainable(d);
        let od = self.opts[1].step(&d_params.iter().collect::<Vec<_>>(), clip);

        zero_grads(d);
        let score = d.forward(&fake, true)?.output;
        let lg = loss_generator(&fake, y, &score, &w)?;
        let com = loss_complementarity(&gout.pairs)?;
        let total = if w.lambda_com > 0.0 && !gout.pairs.is_empty() {
            ops::add(&lg, &ops::scale(&com, w.lambda_com))?
        } else {
            lg
        };
        total.backward()?;
        let g_params = trainable(g);
        let og = self.opts[0].step(&g_params.iter().collect::<Vec<_>>(), clip);
        zero_grads(d);

        let (abs_err, sq_err) = errors(&fake, y);
        Ok(StepLog {
            loss_g: total.item() as f64,
            loss_d: Some(loss_d.item() as f64),
            loss_com: com.item() as f64,
            abs_err,
            sq_err,
            count: y.numel(),
            clipped: od.clipped || og.clipped,
            skipped: !(od.applied && og.applied),
        })
    }

    fn unet_step(&mut self, x: &Tensor<f32>, y: &Tensor<f32>) -> Result<StepLog> {
        let w = self.train.loss;
        let Nets::Unet(u) = &self.nets else {
            unreachable!("unet step on a gan session")
        };
        zero_grads(u);
        let out = u.forward(x, true)?;
        let l1 = ops::l1_loss(&out.output, y)?;
        let com = loss_complementarity(&out.pairs)?;
        let total = if w.lambda_com > 0.0 && !out.pairs.is_empty() {
            ops::add(&l1, &ops::scale(&com, w.lambda_com))?
        } else {
            l1
        };
        total.backward()?;
        let params = trainable(u);
        let o = self.opts[0].step(&params.iter().collect::<Vec<_>>(), self.train.clip_norm);
        let (abs_err, sq_err) = errors(&out.output, y);
        Ok(StepLog {
            loss_g: total.item() as f64,
            loss_d: None,
            loss_com: com.item() as f64,
            abs_err,
            sq_err,
            count: y.numel(),
            clipped: o.clipped,
            skipped: !o.applied,
        })
    }

    /// Batches of the shuffled training order for the next epoch. A trailing
    /// batch of a single patch is dropped.
    pub fn epoch_batches(&self, n: usize) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.train.seed, "shuffle", self.epoch as u64));
        order.shuffle(&mut rng);
        order
            .chunks(self.train.batch_size)
            .filter(|c| c.len() >= 2)
            .map(<[usize]>::to_vec)
            .collect()
    }

    /// One optimization step on the given training patches.
    pub fn step(&mut self, data: &SeisFile, idx: &[usize]) -> Result<StepLog> {
        let x = batch(data, idx, true)?;
        let y = batch(data, idx, false)?;
        let res = match self.family {
            Family::Gan => self.gan_step(&x, &y),
            Family::Unet => self.unet_step(&x, &y),
        };
        let log = match res {
            Ok(l) => l,
            Err(e) if non_finite(&e) => StepLog {
                loss_g: f64::NAN,
                loss_d: (self.family == Family::Gan).then_some(f64::NAN),
                loss_com: f64::NAN,
                abs_err: f64::NAN,
                sq_err: f64::NAN,
                count: y.numel(),
                clipped: false,
                skipped: true,
            },
            Err(e) => return Err(e),
        };
        let finite = log.loss_g.is_finite() && log.loss_d.is_none_or(f64::is_finite) && log.loss_com.is_finite();
        self.bad_steps = if finite { 0 } else { self.bad_steps + 1 };
        if self.bad_steps >= 3 {
            return Err(TrainError::Diverged {
                epoch: self.epoch + 1,
                steps: self.bad_steps,
            });
        }
        Ok(log)
    }

    /// Mean absolute and root-mean-square error of the restoring network over `file`.
    pub fn evaluate(&self, file: &SeisFile) -> Result<(f64, f64)> {
        let (mut a, mut s, mut n) = (0.0, 0.0, 0usize);
        let idx: Vec<usize> = (0..file.len()).collect();
        for chunk in idx.chunks(self.train.batch_size.max(1)) {
            let x = batch(file, chunk, true)?;
            let y = batch(file, chunk, false)?;
            let (da, ds) = errors(&self.nets.predict(&x)?, &y);
            a += da;
            s += ds;
            n += y.numel();
        }
        let n = n.max(1) as f64;
        Ok((a / n, (s / n).sqrt()))
    }

    /// Restored patches for every entry of `file`.
    pub fn predict_file(&self, file: &SeisFile) -> Result<Vec<Vec<f32>>> {
        let per = file.t * file.s;
        let idx: Vec<usize> = (0..file.len()).collect();
        let mut out = Vec::with_capacity(file.len());
        for chunk in idx.chunks(self.train.batch_size.max(1)) {
            let y = self.nets.predict(&batch(file, chunk, true)?)?;
            out.extend(y.data().chunks(per).map(<[f32]>::to_vec));
        }
        Ok(out)
    }

    /// Trains one epoch and appends its history rows.
    pub fn run_epoch(&mut self, train: &SeisFile, val: Option<&SeisFile>) -> Result<EpochStats> {
        if train.is_empty() {
            return Err(TrainError::Config("training set is empty".into()));
        }
        let batches = self.epoch_batches(train.len());
        if batches.is_empty() {
            return Err(TrainError::Config("training set yields no batch of at least 2 patches".into()));
        }
        let mut steps = Vec::with_capacity(batches.len());
        for b in &batches {
            steps.push(self.step(train, b)?);
        }
        self.epoch += 1;
        let n: usize = steps.iter().map(|s| s.count).sum();
        let mean = |f: fn(&StepLog) -> f64| steps.iter().map(f).sum::<f64>() / steps.len() as f64;
        let train_row = HistoryRow {
            epoch: self.epoch,
            split: "train".into(),
            mae: steps.iter().map(|s| s.abs_err).sum::<f64>() / n as f64,
            rmse: (steps.iter().map(|s| s.sq_err).sum::<f64>() / n as f64).sqrt(),
            loss_g: Some(mean(|s| s.loss_g)),
            loss_d: steps[0].loss_d.map(|_| mean(|s| s.loss_d.unwrap_or(0.0))),
            loss_com: Some(mean(|s| s.loss_com)),
        };
        self.history.rows.push(train_row.clone());
        let val_row = match val {
            Some(v) if !v.is_empty() => {
                let (mae, rmse) = self.evaluate(v).map_err(|e| {
                    if non_finite(&e) {
                        TrainError::Diverged {
                            epoch: self.epoch,
                            steps: self.bad_steps,
                        }
                    } else {
                        e
                    }
                })?;
                let row = HistoryRow {
                    epoch: self.epoch,
                    split: "val".into(),
                    mae,
                    rmse,
                    loss_g: None,
                    loss_d: None,
                    loss_com: None,
                };
                self.history.rows.push(row.clone());
                Some(row)
            }
            _ => None,
        };
        let score = val_row.as_ref().map_or(train_row.mae, |r| r.mae);
        let improved = self.best_mae.is_none_or(|b| score < b);
        if improved {
            self.best_mae = Some(score);
        }
        Ok(EpochStats {
            epoch: self.epoch,
            train: train_row,
            val: val_row,
            steps,
            improved,
        })
    }

    /// Runs until `train.epochs` epochs are complete. With `out_dir`, writes
    /// `history.csv`, `last.qckp` and `best.qckp` there after each epoch.
    pub fn fit(
        &mut self,
        train: &SeisFile,
        val: Option<&SeisFile>,
        out_dir: Option<&Path>,
        mut on_epoch: impl FnMut(&EpochStats),
    ) -> Result<()> {
        self.check_data(train)?;
        if let Some(v) = val {
            self.check_data(v)?;
        }
        if let Some(dir) = out_dir {
            fs::create_dir_all(dir).map_err(|source| TrainError::Io {
                path: dir.display().to_string(),
                source,
            })?;
        }
        while self.epoch < self.train.epochs {
            let stats = self.run_epoch(train, val)?;
            if let Some(dir) = out_dir {
                let hist = dir.join("history.csv");
                fs::write(&hist, self.history.to_csv_string()).map_err(|source| TrainError::Io {
                    path: hist.display().to_string(),
                    source,
                })?;
                let every = self.train.checkpoint_every.max(1);
                if self.epoch % every == 0 || self.epoch == self.train.epochs {
                    self.save(&dir.join("last.qckp"))?;
                }
                if stats.improved {
                    self.save(&dir.join("best.qckp"))?;
                }
            }
            on_epoch(&stats);
        }
        Ok(())
    }

    /// SHA-256 over every parameter and buffer value.
    pub fn param_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for (_, net) in self.nets.named() {
            for p in net.parameters() {
                for v in p.tensor.data().iter() {
                    h.update(v.to_le_bytes());
                }
            }
        }
        h.finalize().into()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = Meta {
            family: self.family,
            model: self.model.clone(),
            train: self.train.clone(),
            epoch: self.epoch,
            best_mae: self.best_mae,
            history: self.history.clone(),
            optimizers: self.opts.iter().map(|o| OptMeta { step: o.step, skipped: o.skipped }).collect(),
        };
        let mut entries = Vec::new();
        for ((prefix, net), opt) in self.nets.named().into_iter().zip(&self.opts) {
            for p in net.parameters() {
                entries.push(Entry {
                    name: format!("{prefix}.{}", p.name),
                    shape: p.tensor.shape().to_vec(),
                    data: EntryData::F32(p.tensor.to_vec()),
                });
            }
            for (l, q) in net.quantum_layers().iter().enumerate() {
                for (i, c) in q.circuits().iter().enumerate() {
                    let base = format!("{prefix}.quantum.{l}.circuit.{i}");
                    entries.push(Entry {
                        name: format!("{base}.angles"),
                        shape: vec![c.depth(), c.n_qubits()],
                        data: EntryData::F64(c.angles().iter().flatten().copied().collect()),
                    });
                    let pairs = c.entanglers().first().map_or(0, Vec::len);
                    entries.push(Entry {
                        name: format!("{base}.entanglers"),
                        shape: vec![c.depth(), pairs, 2],
                        data: EntryData::F64(
                            c.entanglers().iter().flatten().flat_map(|&(a, b)| [a as f64, b as f64]).collect(),
                        ),
                    });
                }
            }
            let params = trainable(net);
            for (k, p) in params.iter().enumerate() {
                let zeros = || vec![0.0; p.tensor.numel()];
                for (tag, buf) in [("m", opt.m.get(k)), ("v", opt.v.get(k))] {
                    entries.push(Entry {
                        name: format!("opt.{prefix}.{}.{tag}", p.name),
                        shape: p.tensor.shape().to_vec(),
                        data: EntryData::F64(buf.cloned().unwrap_or_else(zeros)),
                    });
                }
            }
        }
        Checkpoint {
            meta: serde_json::to_value(meta).expect("serializable"),
            entries,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(path, &self.to_checkpoint())
    }

    /// Rebuilds a session. With `expect`, the stored architecture must match it.
    pub fn from_checkpoint(ckpt: &Checkpoint, expect: Option<&NetConfig>) -> Result<Self> {
        let meta: Meta = serde_json::from_value(ckpt.meta.clone())
            .map_err(|e| TrainError::Checkpoint(format!("config blob: {e}")))?;
        if let Some(want) = expect {
            if *want != meta.model {
                return Err(TrainError::Mismatch(format!(
                    "checkpoint architecture {} differs from requested {}",
                    serde_json::to_string(&meta.model).unwrap_or_default(),
                    serde_json::to_string(want).unwrap_or_default()
                )));
            }
        }
        let mut s = Self::new(meta.family, &meta.model, &meta.train)?;
        if meta.optimizers.len() != s.opts.len() {
            return Err(TrainError::Checkpoint("optimizer count does not match the model family".into()));
        }
        for (prefix, net) in s.nets.named_mut() {
            for (l, q) in net.quantum_layers_mut().into_iter().enumerate() {
                *q = restore_layer(ckpt, &format!("{prefix}.quantum.{l}"), q)?;
            }
            for p in net.parameters() {
                let name = format!("{prefix}.{}", p.name);
                let e = ckpt.expect(&name, p.tensor.shape())?;
                let EntryData::F32(v) = &e.data else {
                    return Err(TrainError::Checkpoint(format!("entry {name} must be f32")));
                };
                p.tensor.data_mut().copy_from_slice(v);
            }
        }
        for (((prefix, net), opt), om) in s.nets.named().into_iter().zip(s.opts.iter_mut()).zip(&meta.optimizers) {
            opt.step = om.step;
            opt.skipped = om.skipped;
            opt.m.clear();
            opt.v.clear();
            for p in trainable(net) {
                for (tag, dst) in [("m", &mut opt.m), ("v", &mut opt.v)] {
                    let e = ckpt.expect(&format!("opt.{prefix}.{}.{tag}", p.name), p.tensor.shape())?;
                    dst.push(e.data.to_f64());
                }
            }
        }
        s.epoch = meta.epoch;
        s.best_mae = meta.best_mae;
        s.history = meta.history;
        Ok(s)
    }

    /// Loads a checkpoint file; nothing is returned unless every entry restores.
    pub fn load(path: &Path, expect: Option<&NetConfig>) -> Result<Self> {
        Self::from_checkpoint(&load_checkpoint(path)?, expect)
    }
}

fn restore_layer(ckpt: &Checkpoint, base: &str, current: &QuantumLayer) -> Result<QuantumLayer> {
    let cfg = current.config().clone();
    let mut circuits = Vec::with_capacity(current.circuits().len());
    for (i, c) in current.circuits().iter().enumerate() {
        let name = format!("{base}.circuit.{i}");
        let a = ckpt.expect(&format!("{name}.angles"), &[c.depth(), c.n_qubits()])?;
        let pairs = c.entanglers().first().map_or(0, Vec::len);
        let e = ckpt.expect(&format!("{name}.entanglers"), &[c.depth(), pairs, 2])?;
        let angles: Vec<Vec<f64>> = a.data.to_f64().chunks(c.n_qubits().max(1)).map(<[f64]>::to_vec).collect();
        let flat = e.data.to_f64();
        let entanglers = flat
            .chunks(2 * pairs.max(1))
            .take(c.depth())
            .map(|layer| layer.chunks(2).map(|p| (p[0] as usize, p[1] as usize)).collect())
            .collect();
        let angles = if c.depth() == 0 { Vec::new() } else { angles };
        circuits.push(
            RandomCircuit::from_parts(i, c.n_qubits(), c.seed(), angles, entanglers)
                .map_err(|err| TrainError::Checkpoint(format!("{name}: {err}")))?,
        );
    }
    let mut layer = QuantumLayer::from_circuits(cfg, circuits).map_err(|e| TrainError::Checkpoint(format!("{base}: {e}")))?;
    layer.set_workers(current.workers());
    Ok(layer)
}

fn run(family: Family, model: &NetConfig, cfg: &TrainConfig, train: &SeisFile, val: Option<&SeisFile>, out_dir: Option<&Path>) -> Result<Session> {
    if train.is_empty() {
        return Err(TrainError::Config("training set is empty".into()));
    }
    if !family.accepts(train.task) {
        return Err(TrainError::Config(format!("task {} is not handled by {:?} training", train.task, family)));
    }
    let mut s = Session::new(family, model, cfg)?;
    s.fit(train, val, out_dir, |_| {})?;
    Ok(s)
}

/// Alternating discriminator/generator training on an interpolation or denoising set.
pub fn train_gan(model: &NetConfig, cfg: &TrainConfig, train: &SeisFile, val: Option<&SeisFile>, out_dir: Option<&Path>) -> Result<Session> {
    run(Family::Gan, model, cfg, train, val, out_dir)
}

/// Supervised L1 (+ complementarity) training on a low-frequency extrapolation set.
pub fn train_unet(model: &NetConfig, cfg: &TrainConfig, train: &SeisFile, val: Option<&SeisFile>, out_dir: Option<&Path>) -> Result<Session> {
    run(Family::Unet, model, cfg, train, val, out_dir)
}
