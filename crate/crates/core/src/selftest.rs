//! Verification suite run by `qcseis selftest`.
//!
//! Each check returns a [`Check`] with a one-line detail; [`run_all`] runs
//! them in order. The `Ry` gate used by the unitarity check is injectable so a
//! deliberately broken matrix can be shown to be caught.

use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::gradcheck::{self, GradCheckOptions};
use crate::autograd::{Element, Tensor};
use crate::models::{Discriminator, Generator, NetConfig, Network};
use crate::objectives::{
    loss_complementarity, loss_discriminator, loss_generator, mae, psnr, psnr_literal, psnr_max_for, rmse, ssim,
    LogBase, LossWeights,
};
use crate::qlayer::{reference_forward, QuantumLayer, QuantumLayerConfig};
use crate::qsim::{
    encode, encoded_expectation, expect, grad_expect_wrt_encoding, oracle, ry_gate, run_circuit, Gate1, Observable,
    QuantumState, RandomCircuit,
};

/// Outcome of one verification step.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

fn timed(name: &'static str, f: impl FnOnce() -> Result<String, String>) -> Check {
    let t0 = Instant::now();
    let (passed, detail) = match f() {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    Check {
        name,
        passed,
        detail,
        seconds: t0.elapsed().as_secs_f64(),
    }
}

fn gate(cond: bool, detail: String) -> Result<String, String> {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_state(rng: &mut ChaCha8Rng, n: usize) -> QuantumState {
    let amps = (0..1 << n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    QuantumState::from_amplitudes(n, amps).expect("nonzero random state")
}

/// Norm and inner-product preservation over `trials` random single-qubit
/// applications of `ry(θ)` on 1 to 6 qubit registers.
pub fn unitarity(seed: u64, trials: usize, ry: &dyn Fn(f64) -> Gate1) -> Check {
    timed("qsim unitarity", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut norm_dev, mut inner_dev) = (0.0f64, 0.0f64);
        for _ in 0..trials {
            let n = rng.random_range(1..=6);
            let a = random_state(&mut rng, n);
            let b = random_state(&mut rng, n);
            let q = rng.random_range(0..n);
            let g = ry(rng.random_range(-7.0..7.0));
            let ua = a.apply_gate(q, &g).map_err(|e| e.to_string())?;
            let ub = b.apply_gate(q, &g).map_err(|e| e.to_string())?;
            norm_dev = norm_dev.max((ua.norm() - 1.0).abs());
            inner_dev = inner_dev.max((ua.inner(&ub) - a.inner(&b)).norm());
        }
        gate(
            norm_dev < 1e-12 && inner_dev < 1e-10,
            format!("{trials} applications: max norm deviation {norm_dev:.2e}, max inner-product deviation {inner_dev:.2e}"),
        )
    })
}

/// `run_circuit` against the dense Kronecker-product unitary.
pub fn circuit_oracle(seed: u64, circuits: usize) -> Check {
    timed("circuit vs dense unitary", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for i in 0..circuits {
            let c = RandomCircuit::generate(seed, i, 2, 4).map_err(|e| e.to_string())?;
            let psi = random_state(&mut rng, 4);
            let fast = run_circuit(&psi, &c).map_err(|e| e.to_string())?;
            let dense = oracle::circuit_unitary(&c).apply(psi.amplitudes());
            for (a, b) in fast.amplitudes().iter().zip(&dense) {
                worst = worst.max((a - b).norm());
            }
        }
        gate(worst < 1e-10, format!("{circuits} two-layer 4-qubit circuits: max amplitude deviation {worst:.2e}"))
    })
}

/// `⟨Z₀⟩` of `encode((θ, 0, 0, 0))` equals `cos θ`.
pub fn analytic_expectation(points: usize) -> Check {
    timed("analytic expectation", || {
        let mut worst = 0.0f64;
        for i in 0..points {
            let theta = -2.0 * std::f64::consts::PI + 4.0 * std::f64::consts::PI * i as f64 / (points - 1).max(1) as f64;
            let s = encode(&[theta, 0.0, 0.0, 0.0]).map_err(|e| e.to_string())?;
            let z = expect(&s, &Observable::pauli_z(0)).map_err(|e| e.to_string())?;
            worst = worst.max((z - theta.cos()).abs());
        }
        gate(worst < 1e-12, format!("{points} angles: max |<Z0> - cos θ| {worst:.2e}"))
    })
}

/// Parameter-shift gradients against central differences with `h = 1e-4`.
pub fn parameter_shift(seed: u64, samples: usize) -> Check {
    timed("parameter shift vs finite difference", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obs = Observable::pauli_z(0);
        let h = 1e-4;
        let mut worst = 0.0f64;
        for i in 0..samples {
            let c = RandomCircuit::generate(seed.wrapping_add(17), i, 2, 4).map_err(|e| e.to_string())?;
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
            let g = grad_expect_wrt_encoding(&x, &c, &obs).map_err(|e| e.to_string())?;
            for j in 0..4 {
                let mut p = x.clone();
                p[j] += h;
                let mut m = x.clone();
                m[j] -= h;
                let fd = (encoded_expectation(&p, &c, &obs).map_err(|e| e.to_string())?
                    - encoded_expectation(&m, &c, &obs).map_err(|e| e.to_string())?)
                    / (2.0 * h);
                worst = worst.max((fd - g[j]).abs());
            }
        }
        gate(worst < 1e-6, format!("{samples} (x, circuit) pairs: max |shift - fd| {worst:.2e}"))
    })
}

/// Every registered autograd operator in single precision over five shapes.
pub fn op_gradients(seed: u64) -> Check {
    timed("autograd op gradients", || {
        let mut shapes = std::collections::BTreeMap::<String, usize>::new();
        let mut worst = (0.0f64, String::new());
        for r in gradcheck::registered_op_checks::<f32>(seed, GradCheckOptions::single()) {
            let r = r.map_err(|e| e.to_string())?;
            *shapes.entry(r.name.clone()).or_default() += 1;
            if r.max_rel_error >= worst.0 {
                worst = (r.max_rel_error, format!("{} {:?}", r.name, r.shape));
            }
            if !r.passed(1e-3) {
                return Err(format!("{} {:?}: relative error {:.2e}", r.name, r.shape, r.max_rel_error));
            }
        }
        let few: Vec<_> = shapes.iter().filter(|(_, n)| **n < 5).map(|(k, _)| k.clone()).collect();
        gate(
            few.is_empty(),
            format!(
                "{} ops, max relative error {:.2e} ({}){}",
                shapes.len(),
                worst.0,
                worst.1,
                if few.is_empty() { String::new() } else { format!("; fewer than 5 shapes: {few:?}") }
            ),
        )
    })
}

/// Small generator configuration used by the end-to-end gradient check.
pub fn tiny_generator_config(seed: u64) -> NetConfig {
    NetConfig {
        blocks: 2,
        base_channels: 8,
        height: 8,
        width: 16,
        seed,
        ..NetConfig::default()
    }
}

fn batch<T: Element>(cfg: &NetConfig, seed: u64, tag: u64) -> Tensor<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ tag);
    let n = 2 * cfg.height * cfg.width;
    let v = (0..n).map(|_| T::from_f64(rng.random_range(-1.0..1.0) as f32 as f64)).collect();
    Tensor::new(&[2, 1, cfg.height, cfg.width], v).expect("shape")
}

fn generator_objective<T: Element>(
    g: &Generator<T>,
    d: &Discriminator<T>,
    x: &Tensor<T>,
    y: &Tensor<T>,
) -> crate::autograd::Result<Tensor<T>> {
    let err = |e: crate::models::ModelError| crate::autograd::TensorError::Contract(e.to_string());
    let pred = g.forward(x, true).map_err(err)?.output;
    let score = d.forward(&pred, true).map_err(err)?.output;
    loss_generator(&pred, y, &score, &LossWeights::default())
}

/// Largest relative error of the single-precision generator gradients of
/// `L_G` against central differences of the same network in double precision.
pub fn generator_gradient(seed: u64) -> Check {
    timed("generator end-to-end gradient", || {
        let cfg = tiny_generator_config(seed);
        let err = |e: crate::models::ModelError| e.to_string();
        let g32 = Generator::<f32>::new(&cfg).map_err(err)?;
        let g64 = Generator::<f64>::new(&cfg).map_err(err)?;
        let d32 = Discriminator::<f32>::new(&cfg).map_err(err)?;
        let d64 = Discriminator::<f64>::new(&cfg).map_err(err)?;
        let (x32, y32) = (batch::<f32>(&cfg, seed, 1), batch::<f32>(&cfg, seed, 2));
        let (x64, y64) = (batch::<f64>(&cfg, seed, 1), batch::<f64>(&cfg, seed, 2));
        let p32: Vec<_> = g32.parameters().into_iter().filter(|p| p.trainable).collect();
        let p64: Vec<_> = g64.parameters().into_iter().filter(|p| p.trainable).collect();
        let inputs: Vec<Tensor<f32>> = p32.iter().map(|p| p.tensor.clone()).collect();
        let refs: Vec<Tensor<f64>> = p64.iter().map(|p| p.tensor.clone()).collect();
        let opts = GradCheckOptions {
            step: 1e-6,
            seed,
            max_elements: usize::MAX,
        };
        let r = gradcheck::check_against(
            "generator",
            &inputs,
            |_| generator_objective(&g32, &d32, &x32, &y32),
            &refs,
            |_| generator_objective(&g64, &d64, &x64, &y64),
            opts,
        )
        .map_err(|e| e.to_string())?;
        let worst = r
            .worst
            .map(|(i, e, a, n)| format!(" at {}[{e}] (analytic {a:.4e}, numeric {n:.4e})", p32[i].name))
            .unwrap_or_default();
        gate(
            r.passed(5e-3),
            format!("{} parameters, max relative error {:.2e}{worst}", r.checked, r.max_rel_error),
        )
    })
}

/// Batched quantum forward against the per-patch loop, and worker-count
/// independence.
pub fn qlayer_equivalence(seed: u64) -> Check {
    timed("qlayer oracle equivalence", || {
        let shapes = [[1, 1, 2, 8], [1, 2, 4, 8], [2, 3, 5, 10], [2, 4, 16, 32]];
        let mut worst = 0.0f64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (k, shape) in shapes.iter().enumerate() {
            let cfg = QuantumLayerConfig {
                seed: seed + k as u64,
                ..Default::default()
            };
            let mut layer = QuantumLayer::new(cfg.clone()).map_err(|e| e.to_string())?;
            let n: usize = shape.iter().product();
            let data: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let x = Tensor::<f64>::new(shape, data.clone()).map_err(|e| e.to_string())?;
            let reference = reference_forward(&data, *shape, layer.circuits(), &cfg).map_err(|e| e.to_string())?;
            let mut outs = Vec::new();
            for w in [1, 2, 8] {
                layer.set_workers(w);
                outs.push(layer.forward(&x).map_err(|e| e.to_string())?.to_vec());
            }
            if outs.iter().any(|o| o.iter().zip(&outs[0]).any(|(a, b)| a.to_bits() != b.to_bits())) {
                return Err(format!("worker counts disagree on {shape:?}"));
            }
            for (a, b) in outs[0].iter().zip(&reference) {
                worst = worst.max((a - b).abs());
            }
        }
        gate(
            worst < 1e-6,
            format!("shapes up to 2x4x16x32, workers 1/2/8 bit-identical, max deviation {worst:.2e}"),
        )
    })
}

/// Closed-form loss and metric values.
pub fn hand_values() -> Check {
    timed("loss and metric hand values", || {
        let t = |shape: &[usize], v: Vec<f64>| Tensor::<f64>::new(shape, v).expect("shape");
        let w = LossWeights::default();
        let half = t(&[1, 1], vec![0.5]);
        let mut cases: Vec<(&str, f64, f64)> = Vec::new();
        let pred = t(&[1, 1, 2, 2], vec![0.01, 0.01, 0.01, 0.01]);
        let zero = t(&[1, 1, 2, 2], vec![0.0; 4]);
        let lg = loss_generator(&pred, &zero, &half, &w).map_err(|e| e.to_string())?.item();
        cases.push(("generator loss", lg, 2f64.ln() + 1.0));
        let ld = loss_discriminator(&half, &half).map_err(|e| e.to_string())?.item();
        cases.push(("discriminator loss", ld, 2.0 * 2f64.ln()));
        let pair = (t(&[1, 1, 1, 2], vec![1.0, 0.0]), t(&[1, 1, 1, 2], vec![1.0, 1.0]));
        let lc = loss_complementarity(&[pair]).map_err(|e| e.to_string())?.item();
        cases.push(("complementarity", lc, 0.5f64.sqrt()));
        let y = [0.0f64, 0.0];
        let yh = [0.0f64, 1.0];
        cases.push(("mae", mae(&y, &yh).map_err(|e| e.to_string())?, 0.5));
        cases.push(("rmse", rmse(&y, &yh).map_err(|e| e.to_string())?, 0.5f64.sqrt()));
        let yp = [1.0f64, 0.0, 0.0, 0.0];
        let yq = [1.0f64, 0.02, 0.0, 0.0];
        cases.push(("psnr", psnr(&yp, &yq).map_err(|e| e.to_string())?, 40.0));
        let ys = [0.1f64, -0.4, 0.9, 0.3, -1.0];
        cases.push(("ssim", ssim(&ys, &ys).map_err(|e| e.to_string())?, 1.0));
        let bad: Vec<String> = cases
            .iter()
            .filter(|(_, got, want)| (got - want).abs() >= 1e-4)
            .map(|(n, got, want)| format!("{n}: {got} vs {want}"))
            .collect();
        gate(
            bad.is_empty(),
            if bad.is_empty() {
                format!("{} values within 1e-4", cases.len())
            } else {
                bad.join("; ")
            },
        )
    })
}

/// Peak amplitudes implied by each reading of the PSNR formula for one
/// reference (RMSE, PSNR) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsnrReadings {
    pub rmse: f64,
    pub psnr_db: f64,
    /// `20·log10(MAX/RMSE)`.
    pub max_amplitude_20log10: f64,
    /// `10·log10(MAX/RMSE)`.
    pub max_literal_log10: f64,
    /// `10·ln(MAX/RMSE)`.
    pub max_literal_ln: f64,
}

impl PsnrReadings {
    pub fn new(rmse: f64, psnr_db: f64) -> Self {
        Self {
            rmse,
            psnr_db,
            max_amplitude_20log10: psnr_max_for(psnr_db, rmse, 20.0, LogBase::Ten),
            max_literal_log10: psnr_max_for(psnr_db, rmse, 10.0, LogBase::Ten),
            max_literal_ln: psnr_max_for(psnr_db, rmse, 10.0, LogBase::E),
        }
    }
}

/// Reference interpolation scores `(RMSE, PSNR dB)` used for the convention comparison.
pub const REFERENCE_PSNR: [(f64, f64); 4] = [(0.0101, 42.0782), (0.0077, 44.4564), (0.0147, 38.3814), (0.0129, 39.4488)];

/// The amplitude reading must give a plausible peak in `[1.23, 1.34]` for the
/// first reference pair and the literal decibel reading must need a peak above 10.
pub fn psnr_conventions() -> (Check, Vec<PsnrReadings>) {
    let rows: Vec<PsnrReadings> = REFERENCE_PSNR.iter().map(|&(r, p)| PsnrReadings::new(r, p)).collect();
    let first = rows[0];
    let check = timed("psnr convention", || {
        let back = psnr_literal(first.max_literal_log10, first.rmse, LogBase::Ten);
        gate(
            (1.23..=1.34).contains(&first.max_amplitude_20log10) && first.max_literal_log10 > 10.0 && (back - first.psnr_db).abs() < 1e-9,
            format!(
                "RMSE {} PSNR {} dB: 20log10 needs MAX {:.4}, 10log10 needs MAX {:.2}, 10ln needs MAX {:.4}",
                first.rmse, first.psnr_db, first.max_amplitude_20log10, first.max_literal_log10, first.max_literal_ln
            ),
        )
    });
    (check, rows)
}

/// Range, scale invariance and the parallel/orthogonal fixtures of `L_com`.
pub fn complementarity(seed: u64, trials: usize) -> Check {
    timed("complementarity properties", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst_scale = 0.0f64;
        let run = |x: &Tensor<f64>, q: &Tensor<f64>| {
            loss_complementarity(&[(x.clone(), q.clone())]).map(|t| t.item()).map_err(|e| e.to_string())
        };
        for _ in 0..trials {
            let (b, c, k, h, w) = (rng.random_range(1..4), rng.random_range(1..5), rng.random_range(1..5), 3, 4);
            let rand_t = |rng: &mut ChaCha8Rng, ch: usize| {
                Tensor::<f64>::new(&[b, ch, h, w], (0..b * ch * h * w).map(|_| rng.random_range(-1.0..1.0)).collect())
                    .expect("shape")
            };
            let x = rand_t(&mut rng, c);
            let q = rand_t(&mut rng, k);
            let v = run(&x, &q)?;
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("value {v} outside [0, 1]"));
            }
            let sign = |rng: &mut ChaCha8Rng| if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let a = sign(&mut rng) * rng.random_range(0.01..100.0);
            let bb = sign(&mut rng) * rng.random_range(0.01..100.0);
            let scaled = run(&crate::autograd::ops::scale(&x, a), &crate::autograd::ops::scale(&q, bb))?;
            worst_scale = worst_scale.max((scaled - v).abs());
        }
        let ones = Tensor::<f64>::new(&[1, 1, 2, 4], vec![1.0; 8]).expect("shape");
        let alt = Tensor::<f64>::new(&[1, 1, 2, 4], (0..8).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect()).expect("shape");
        let par = Tensor::<f64>::new(&[1, 1, 2, 4], (0..8).map(|i| 0.3 + i as f64).collect()).expect("shape");
        let parallel = run(&par, &par)?;
        let orthogonal = run(&ones, &alt)?;
        gate(
            worst_scale < 1e-6 && (parallel - 1.0).abs() < 1e-12 && orthogonal.abs() < 1e-12,
            format!("{trials} random pairs in [0, 1], scale deviation {worst_scale:.2e}, parallel {parallel}, orthogonal {orthogonal}"),
        )
    })
}

/// Every check in order with the correct `Ry` gate.
pub fn run_all(seed: u64) -> (Vec<Check>, Vec<PsnrReadings>) {
    let (psnr_check, readings) = psnr_conventions();
    let checks = vec![
        unitarity(seed, 1000, &ry_gate),
        circuit_oracle(seed, 100),
        analytic_expectation(100),
        parameter_shift(seed, 100),
        op_gradients(seed),
        generator_gradient(seed),
        qlayer_equivalence(seed),
        hand_values(),
        psnr_check,
        complementarity(seed, 200),
    ];
    (checks, readings)
}

/// `Ry(θ)` with its top-left entry nudged by `delta`, for the mutation check.
pub fn perturbed_ry(delta: f64) -> impl Fn(f64) -> Gate1 {
    move |theta| {
        let mut g = ry_gate(theta);
        g[0][0] += Complex64::new(delta, 0.0);
        g
    }
}
