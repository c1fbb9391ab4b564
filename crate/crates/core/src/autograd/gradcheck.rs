//! Central finite-difference checks of the backward rules.
//!
//! The checked quantity is `L = Σ w ⊙ f(inputs)` with fixed random weights of
//! either sign, so every output element contributes. The numeric side
//! differences the perturbed outputs element by element, accumulates in `f64`,
//! and divides by the perturbation that was actually representable.
//!
//! [`check_against`] takes the difference on a separate reference evaluation,
//! typically the same operator instantiated in `f64` at identical input
//! values, so single-precision backward rules are measured against a
//! difference quotient free of single-precision output rounding.

use std::cell::RefCell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{nn, no_grad, ops, Element, Result, Tensor};

/// `|analytic − numeric| / (|analytic| + 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + 1e-6)
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub name: String,
    pub shape: Vec<usize>,
    pub checked: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// `(input, element, analytic, numeric)` at the worst relative error.
    pub worst: Option<(usize, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// Step and output-weight seed for [`check`].
#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub step: f64,
    pub seed: u64,
    /// Check at most this many elements per input (evenly strided).
    pub max_elements: usize,
}

impl GradCheckOptions {
    pub fn single() -> Self {
        Self {
            step: 1e-3,
            seed: 0,
            max_elements: usize::MAX,
        }
    }
    pub fn double() -> Self {
        Self {
            step: 1e-5,
            seed: 0,
            max_elements: usize::MAX,
        }
    }
}

/// Copy of `t` in another element type, keeping `requires_grad`.
pub fn convert<T: Element, R: Element>(t: &Tensor<T>) -> Tensor<R> {
    let data = t.data().iter().map(|v| R::from_f64(v.as_f64())).collect();
    let out = if t.requires_grad() {
        Tensor::param(t.shape(), data)
    } else {
        Tensor::new(t.shape(), data)
    };
    out.expect("same shape")
}

fn output_weights(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    (0..n)
        .map(|_| {
            let m = rng.random_range(0.5..1.5);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect()
}

/// Compares the backward rule of `f` against central differences of `f`.
pub fn check<T: Element>(
    name: &str,
    inputs: &[Tensor<T>],
    f: impl Fn(&[Tensor<T>]) -> Result<Tensor<T>>,
    opts: GradCheckOptions,
) -> Result<GradCheckReport> {
    let reference: Vec<Tensor<T>> = inputs.iter().map(convert).collect();
    check_against(name, inputs, &f, &reference, &f, opts)
}

/// Compares the backward rule of `f` on `inputs` against central differences
/// of `reference_fn` on `reference_inputs`, which must hold the same values.
pub fn check_against<T: Element, R: Element>(
    name: &str,
    inputs: &[Tensor<T>],
    f: impl Fn(&[Tensor<T>]) -> Result<Tensor<T>>,
    reference_inputs: &[Tensor<R>],
    reference_fn: impl Fn(&[Tensor<R>]) -> Result<Tensor<R>>,
    opts: GradCheckOptions,
) -> Result<GradCheckReport> {
    inputs.iter().for_each(Tensor::zero_grad);
    let y = f(inputs)?;
    let w = output_weights(y.numel(), opts.seed);
    let wt = Tensor::new(y.shape(), w.iter().map(|v| T::from_f64(*v)).collect())?;
    ops::sum(&ops::mul(&y, &wt)?).backward()?;

    let eval = || -> Result<Vec<R>> { Ok(no_grad(|| reference_fn(reference_inputs))?.to_vec()) };

    let mut report = GradCheckReport {
        name: name.to_string(),
        shape: inputs.first().map(|t| t.shape().to_vec()).unwrap_or_default(),
        checked: 0,
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst: None,
    };
    for (i, (input, rinput)) in inputs.iter().zip(reference_inputs).enumerate() {
        if !input.requires_grad() {
            continue;
        }
        let analytic = input.grad().unwrap_or_else(|| vec![T::zero(); input.numel()]);
        let n = input.numel();
        let stride = n.div_ceil(opts.max_elements.max(1)).max(1);
        for k in (0..n).step_by(stride) {
            let orig = rinput.data()[k];
            let plus = R::from_f64(orig.as_f64() + opts.step);
            let minus = R::from_f64(orig.as_f64() - opts.step);
            rinput.data_mut()[k] = plus;
            let yp = eval()?;
            rinput.data_mut()[k] = minus;
            let ym = eval()?;
            rinput.data_mut()[k] = orig;
            let diff: f64 = yp.iter().zip(&ym).zip(&w).map(|((p, m), w)| (p.as_f64() - m.as_f64()) * w).sum();
            let numeric = diff / (plus.as_f64() - minus.as_f64());
            let a = analytic[k].as_f64();
            let rel = relative_error(a, numeric);
            report.checked += 1;
            report.max_abs_error = report.max_abs_error.max((a - numeric).abs());
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst = Some((i, k, a, numeric));
            }
        }
    }
    inputs.iter().for_each(Tensor::zero_grad);
    Ok(report)
}

fn uniform<T: Element>(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Result<Tensor<T>> {
    let n = shape.iter().product();
    Tensor::param(shape, (0..n).map(|_| T::from_f64(rng.random_range(lo..hi))).collect())
}

/// Uniform values in `[-hi, -gap] ∪ [gap, hi]`, kept away from kinks at zero.
fn away_from_zero<T: Element>(rng: &mut ChaCha8Rng, shape: &[usize], gap: f64, hi: f64) -> Result<Tensor<T>> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(gap..hi);
            T::from_f64(if rng.random_bool(0.5) { m } else { -m })
        })
        .collect();
    Tensor::param(shape, data)
}

/// Distinct values in random order, so pooling windows have unique maxima
/// separated by more than the difference step.
fn distinct<T: Element>(rng: &mut ChaCha8Rng, shape: &[usize]) -> Result<Tensor<T>> {
    let n: usize = shape.iter().product();
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        idx.swap(i, rng.random_range(0..=i));
    }
    let spacing = 2.0 / n as f64;
    Tensor::param(shape, idx.iter().map(|&k| T::from_f64(-1.0 + spacing * k as f64)).collect())
}

/// One test case of [`registered_op_checks`].
pub type CaseResult = Result<GradCheckReport>;

/// Runs every registered operator over five randomized shapes each.
pub fn registered_op_checks<T: Element>(seed: u64, opts: GradCheckOptions) -> Vec<CaseResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = RefCell::new(Vec::new());
    for case in 0..5 {
        let o = GradCheckOptions {
            seed: seed + case as u64,
            ..opts
        };
        if let Err(e) = op_cases::<T>(case, &mut rng, o, &out) {
            out.borrow_mut().push(Err(e));
        }
    }
    out.into_inner()
}

fn op_cases<T: Element>(
    case: usize,
    rng: &mut ChaCha8Rng,
    o: GradCheckOptions,
    out: &RefCell<Vec<CaseResult>>,
) -> Result<()> {
    const SHAPES: [[usize; 4]; 5] = [[1, 1, 3, 3], [2, 3, 4, 4], [2, 2, 3, 5], [3, 1, 2, 6], [2, 4, 2, 2]];
    const FLAT: [[usize; 2]; 5] = [[1, 3], [2, 5], [3, 4], [4, 2], [2, 7]];
    let s = &SHAPES[case];
    macro_rules! run {
        ($name:expr, $inputs:expr, |$x:ident| $body:expr) => {{
            let inputs: Vec<Tensor<T>> = $inputs;
            let reference: Vec<Tensor<f64>> = inputs.iter().map(convert).collect();
            let report = check_against(
                $name,
                &inputs,
                |$x: &[Tensor<T>]| $body,
                &reference,
                |$x: &[Tensor<f64>]| $body,
                o,
            );
            out.borrow_mut().push(report);
        }};
    }
    let a: Tensor<T> = uniform(rng, s, -1.0, 1.0)?;
    let b: Tensor<T> = uniform(rng, s, -1.0, 1.0)?;
    let nz: Tensor<T> = away_from_zero(rng, s, 0.05, 1.0)?;
    let pos: Tensor<T> = uniform(rng, s, 0.1, 0.9)?;
    let (bsz, c, h, w) = (s[0], s[1], s[2], s[3]);

    run!("add", vec![a.clone(), b.clone()], |x| ops::add(&x[0], &x[1]));
    run!("sub", vec![a.clone(), b.clone()], |x| ops::sub(&x[0], &x[1]));
    run!("mul", vec![a.clone(), b.clone()], |x| ops::mul(&x[0], &x[1]));
    run!("affine", vec![a.clone()], |x| Ok(ops::affine(&x[0], -1.7, 0.3)));
    run!("scale", vec![a.clone()], |x| Ok(ops::scale(&x[0], 2.5)));
    run!("sum", vec![a.clone()], |x| Ok(ops::sum(&x[0])));
    run!("mean", vec![a.clone()], |x| Ok(ops::mean(&x[0])));
    run!("reshape", vec![a.clone()], |x| ops::reshape(&x[0], &[bsz, c * h * w]));
    run!("flatten", vec![a.clone()], |x| ops::flatten(&x[0]));
    run!("sigmoid", vec![a.clone()], |x| Ok(ops::sigmoid(&ops::scale(&x[0], 3.0))));
    run!("abs", vec![nz.clone()], |x| Ok(ops::abs(&x[0])));
    run!("log_clamped", vec![pos.clone()], |x| Ok(ops::log_clamped(&x[0], 1e-7, 1.0)));
    {
        let shift: Tensor<T> = away_from_zero(rng, s, 0.05, 1.0)?;
        let target = Tensor::new(s, a.data().iter().zip(shift.data().iter()).map(|(x, d)| *x + *d).collect())?;
        run!("l1_loss", vec![a.clone(), target], |x| ops::l1_loss(&x[0], &x[1]));
    }
    run!("channel_mean", vec![a.clone()], |x| ops::channel_mean(&x[0]));
    if c > 1 {
        run!("split_channels", vec![a.clone()], |x| {
            let (p, q) = ops::split_channels(&x[0], 1)?;
            ops::concat_channels(&ops::scale(&q, 0.5), &ops::scale(&p, 2.0))
        });
    } else {
        let wide: Tensor<T> = uniform(rng, &[bsz, 3, h, w], -1.0, 1.0)?;
        run!("split_channels", vec![wide], |x| {
            let (p, q) = ops::split_channels(&x[0], 2)?;
            ops::concat_channels(&ops::scale(&q, 0.5), &ops::scale(&p, 2.0))
        });
    }
    run!("concat_channels", vec![a.clone(), b.clone()], |x| ops::concat_channels(&x[0], &x[1]));
    {
        let rows = bsz;
        let ra: Tensor<T> = uniform(rng, &[rows, c * h * w], -1.0, 1.0)?;
        let rb: Tensor<T> = uniform(rng, &[rows, c * h * w], -1.0, 1.0)?;
        run!("abs_cosine_rows", vec![ra, rb], |x| ops::abs_cosine_rows(&x[0], &x[1], 1e-8));
    }
    {
        let co = 1 + case % 3;
        let wgt: Tensor<T> = uniform(rng, &[co, c, 3, 3], -0.5, 0.5)?;
        let bias: Tensor<T> = uniform(rng, &[co], -0.5, 0.5)?;
        run!("conv2d", vec![a.clone(), wgt.clone(), bias.clone()], |x| {
            nn::conv2d(&x[0], &x[1], Some(&x[2]), 1, 1)
        });
        // padding that halves odd and even sizes alike
        let pad = |n: usize| if n % 2 == 1 { (1, 1) } else { (0, 1) };
        let ((top, bottom), (left, right)) = (pad(h), pad(w));
        run!("conv2d_stride2", vec![a.clone(), wgt.clone()], |x| {
            nn::conv2d_padded(&x[0], &x[1], None, 2, [top, bottom, left, right])
        });
        let one: Tensor<T> = uniform(rng, &[co, c, 1, 1], -0.5, 0.5)?;
        run!("conv2d_1x1", vec![a.clone(), one], |x| nn::conv2d(&x[0], &x[1], None, 1, 0));
    }
    {
        let alpha: Tensor<T> = uniform(rng, &[c], 0.1, 0.4)?;
        run!("prelu", vec![nz.clone(), alpha], |x| nn::prelu(&x[0], &x[1]));
    }
    {
        let bn_in: Tensor<T> = if bsz >= 2 { a.clone() } else { uniform(rng, &[2, c, h, w], -1.0, 1.0)? };
        let gamma: Tensor<T> = uniform(rng, &[c], 0.5, 1.5)?;
        let beta: Tensor<T> = uniform(rng, &[c], -0.5, 0.5)?;
        run!("batch_norm2d_train", vec![bn_in, gamma.clone(), beta.clone()], |x| {
            let rm = Tensor::zeros(&[c]);
            let rv = Tensor::full(&[c], Element::from_f64(1.0));
            nn::batch_norm2d(&x[0], &x[1], &x[2], &rm, &rv, nn::BatchNormOptions::default())
        });
    }
    {
        let gamma: Tensor<T> = uniform(rng, &[c], 0.5, 1.5)?;
        let beta: Tensor<T> = uniform(rng, &[c], -0.5, 0.5)?;
        let rm: Tensor<T> = Tensor::new(&[c], vec![T::from_f64(0.1); c])?;
        let rv: Tensor<T> = Tensor::new(&[c], vec![T::from_f64(0.8); c])?;
        run!("batch_norm2d_eval", vec![a.clone(), gamma, beta, rm, rv], |x| {
            let opts = nn::BatchNormOptions {
                training: false,
                ..Default::default()
            };
            nn::batch_norm2d(&x[0], &x[1], &x[2], &x[3], &x[4], opts)
        });
    }
    {
        let r = if case % 2 == 0 { 2 } else { 1 };
        let sh: Tensor<T> = uniform(rng, &[bsz, c * r * r, h, w], -1.0, 1.0)?;
        run!("pixel_shuffle", vec![sh], |x| nn::pixel_shuffle(&x[0], r));
        let un: Tensor<T> = uniform(rng, &[bsz, c, h * 2, w * 2], -1.0, 1.0)?;
        run!("pixel_unshuffle", vec![un], |x| nn::pixel_unshuffle(&x[0], 2));
    }
    run!("nearest_upsample", vec![a.clone()], |x| nn::nearest_upsample(&x[0], 1 + case % 2, 4));
    {
        let pooled: Tensor<T> = distinct(rng, &[bsz, c, h * 2, w * 2])?;
        run!("avg_pool2d", vec![pooled.clone()], |x| nn::avg_pool2d(&x[0], 2));
        run!("max_pool2d", vec![pooled], |x| nn::max_pool2d(&x[0], 2));
    }
    {
        let cfg = crate::qlayer::QuantumLayerConfig {
            seed: 3 + case as u64,
            input_scale: 0.9,
            ..Default::default()
        };
        let layer = crate::qlayer::QuantumLayer::new(cfg).map_err(|e| super::TensorError::Contract(e.to_string()))?;
        let qin: Tensor<T> = uniform(rng, &[bsz, c, h, 4 + 2 * case], -2.0, 2.0)?;
        run!("quantum_conv", vec![qin], |x| layer.forward(&x[0]));
    }
    {
        let [bb, ff] = FLAT[case];
        let fo = 1 + case;
        let x: Tensor<T> = uniform(rng, &[bb, ff], -1.0, 1.0)?;
        let wgt: Tensor<T> = uniform(rng, &[fo, ff], -1.0, 1.0)?;
        let bias: Tensor<T> = uniform(rng, &[fo], -1.0, 1.0)?;
        run!("linear", vec![x, wgt, bias], |x| nn::linear(&x[0], &x[1], Some(&x[2])));
    }
    Ok(())
}
