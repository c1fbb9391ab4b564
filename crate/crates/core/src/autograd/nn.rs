//! Convolution, normalization, activation, resampling and dense operators.
//!
//! Feature maps are `[batch, channel, time, trace]`, row-major.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};

use super::{BackwardFn, Element, Result, Tensor, TensorError};

fn dims4(t: &[usize], what: &str) -> Result<[usize; 4]> {
    match t {
        &[b, c, h, w] => Ok([b, c, h, w]),
        _ => Err(TensorError::Shape(format!("{what} needs [B, C, H, W], got {t:?}"))),
    }
}

/// `C ← alpha · A · B + beta · C` on row-major slices; `A` is `m×k` (or its
/// transpose when `ta`), `B` is `k×n` (or its transpose when `tb`).
#[allow(clippy::too_many_arguments)]
fn gemm<T: Element>(m: usize, k: usize, n: usize, a: &[T], ta: bool, b: &[T], tb: bool, beta: T, c: &mut [T]) {
    let av = if ta {
        ArrayView2::from_shape((k, m), a).expect("gemm lhs").reversed_axes()
    } else {
        ArrayView2::from_shape((m, k), a).expect("gemm lhs")
    };
    let bv = if tb {
        ArrayView2::from_shape((n, k), b).expect("gemm rhs").reversed_axes()
    } else {
        ArrayView2::from_shape((k, n), b).expect("gemm rhs")
    };
    let mut cv = ArrayViewMut2::from_shape((m, n), c).expect("gemm out");
    general_mat_mul(T::one(), &av, &bv, beta, &mut cv);
}

#[derive(Clone, Copy)]
struct ConvGeom {
    b: usize,
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad_top: usize,
    pad_left: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    fn ck(&self) -> usize {
        self.c * self.kh * self.kw
    }
    fn p(&self) -> usize {
        self.ho * self.wo
    }
}

fn im2col<T: Element>(x: &[T], g: &ConvGeom) -> Vec<T> {
    let (p, bp) = (g.p(), g.b * g.p());
    let mut col = vec![T::zero(); g.ck() * bp];
    for c in 0..g.c {
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = (c * g.kh + i) * g.kw + j;
                let dst = &mut col[row * bp..(row + 1) * bp];
                for b in 0..g.b {
                    let plane = &x[(b * g.c + c) * g.h * g.w..(b * g.c + c + 1) * g.h * g.w];
                    for oy in 0..g.ho {
                        let iy = (oy * g.stride + i) as isize - g.pad_top as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        let src_row = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                        let base = b * p + oy * g.wo;
                        for ox in 0..g.wo {
                            let ix = (ox * g.stride + j) as isize - g.pad_left as isize;
                            if ix >= 0 && ix < g.w as isize {
                                dst[base + ox] = src_row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    col
}

fn col2im<T: Element>(col: &[T], g: &ConvGeom) -> Vec<T> {
    let (p, bp) = (g.p(), g.b * g.p());
    let mut x = vec![T::zero(); g.b * g.c * g.h * g.w];
    for c in 0..g.c {
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = (c * g.kh + i) * g.kw + j;
                let src = &col[row * bp..(row + 1) * bp];
                for b in 0..g.b {
                    let plane = &mut x[(b * g.c + c) * g.h * g.w..(b * g.c + c + 1) * g.h * g.w];
                    for oy in 0..g.ho {
                        let iy = (oy * g.stride + i) as isize - g.pad_top as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        let base = b * p + oy * g.wo;
                        for ox in 0..g.wo {
                            let ix = (ox * g.stride + j) as isize - g.pad_left as isize;
                            if ix >= 0 && ix < g.w as isize {
                                let k = iy as usize * g.w + ix as usize;
                                plane[k] = plane[k] + src[base + ox];
                            }
                        }
                    }
                }
            }
        }
    }
    x
}

struct Conv2dBack {
    geom: ConvGeom,
    has_bias: bool,
}

impl<T: Element> BackwardFn<T> for Conv2dBack {
    fn name(&self) -> &'static str {
        "conv2d"
    }

    fn backward(&self, grad: &[T], parents: &[Tensor<T>], _: &[T]) -> Result<Vec<Option<Vec<T>>>> {
        let g = &self.geom;
        let (p, bp, ck) = (g.p(), g.b * g.p(), g.ck());
        // [B, O, P] → [O, B·P]
        let mut dout = vec![T::zero(); g.o * bp];
        for b in 0..g.b {
            for o in 0..g.o {
                dout[o * bp + b * p..o * bp + (b + 1) * p].copy_from_slice(&grad[(b * g.o + o) * p..(b * g.o + o + 1) * p]);
            }
        }
        let (input, weight) = (&parents[0], &parents[1]);
        let dweight = weight.requires_grad().then(|| {
            let col = im2col(&input.data(), g);
            let mut dw = vec![T::zero(); g.o * ck];
            gemm(g.o, bp, ck, &dout, false, &col, true, T::zero(), &mut dw);
            dw
        });
        let dinput = input.requires_grad().then(|| {
            let mut dcol = vec![T::zero(); ck * bp];
            gemm(ck, g.o, bp, &weight.data(), true, &dout, false, T::zero(), &mut dcol);
            col2im(&dcol, g)
        });
        let mut out = vec![dinput, dweight];
        if self.has_bias {
            let dbias = parents[2].requires_grad().then(|| {
                (0..g.o)
                    .map(|o| {
                        let s: f64 = dout[o * bp..(o + 1) * bp].iter().map(|v| v.as_f64()).sum();
                        T::from_f64(s)
                    })
                    .collect()
            });
            out.push(dbias);
        }
        Ok(out)
    }
}

/// Zero padding per side, `[top, bottom, left, right]`.
pub type Padding = [usize; 4];

/// 2-D cross-correlation with the same zero padding on every side.
pub fn conv2d<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    conv2d_padded(input, weight, bias, stride, [padding; 4])
}

/// 2-D cross-correlation with explicit per-side zero padding.
pub fn conv2d_padded<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: Padding,
) -> Result<Tensor<T>> {
    let [b, c, h, w] = dims4(input.shape(), "conv2d input")?;
    let [o, ci, kh, kw] = dims4(weight.shape(), "conv2d weight")?;
    if ci != c {
        return Err(TensorError::Shape(format!("conv2d: input has {c} channels, weight expects {ci}")));
    }
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(TensorError::Shape(format!("conv2d: kernel {kh}x{kw} must be odd")));
    }
    if stride == 0 {
        return Err(TensorError::Shape("conv2d: stride must be positive".into()));
    }
    let out_len = |n: usize, k: usize, before: usize, after: usize| -> Result<usize> {
        let padded = n + before + after;
        let span = padded
            .checked_sub(k)
            .ok_or_else(|| TensorError::Shape(format!("conv2d: kernel {k} larger than padded extent {padded}")))?;
        if span % stride != 0 {
            return Err(TensorError::Shape(format!(
                "conv2d: output size ({padded} − {k})/{stride} + 1 is not integral"
            )));
        }
        Ok(span / stride + 1)
    };
    let [pt, pb, pl, pr] = padding;
    let (ho, wo) = (out_len(h, kh, pt, pb)?, out_len(w, kw, pl, pr)?);
    if let Some(bias) = bias {
        if bias.shape() != [o] {
            return Err(TensorError::Shape(format!("conv2d: bias shape {:?}, expected [{o}]", bias.shape())));
        }
    }
    let geom = ConvGeom {
        b,
        c,
        h,
        w,
        o,
        kh,
        kw,
        stride,
        pad_top: pt,
        pad_left: pl,
        ho,
        wo,
    };
    let (p, bp) = (geom.p(), b * geom.p());
    let col = im2col(&input.data(), &geom);
    let mut out2 = vec![T::zero(); o * bp];
    gemm(o, geom.ck(), bp, &weight.data(), false, &col, false, T::zero(), &mut out2);
    drop(col);
    let mut data = vec![T::zero(); b * o * p];
    let bias_data = bias.map(|t| t.to_vec());
    for bi in 0..b {
        for oi in 0..o {
            let shift = bias_data.as_ref().map_or(T::zero(), |v| v[oi]);
            let dst = &mut data[(bi * o + oi) * p..(bi * o + oi + 1) * p];
            for (d, s) in dst.iter_mut().zip(&out2[oi * bp + bi * p..oi * bp + (bi + 1) * p]) {
                *d = *s + shift;
            }
        }
    }
    let mut parents = vec![input.clone(), weight.clone()];
    if let Some(bias) = bias {
        parents.push(bias.clone());
    }
    Ok(Tensor::from_op(
        vec![b, o, ho, wo],
        data,
        parents,
        Conv2dBack {
            geom,
            has_bias: bias.is_some(),
        },
    ))
}

fn channel_layout(shape: &[usize], what: &str) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 {
        return Err(TensorError::Shape(format!("{what} needs a channel axis, got {shape:?}")));
    }
    Ok((shape[0], shape[1], shape[2..].iter().product()))
}

struct PreluBack;
impl<T: Element> BackwardFn<T> for PreluBack {
    fn name(&self) -> &'static str {
        "prelu"
    }
    fn backward(&self, g: &[T], parents: &[Tensor<T>], _: &[T]) -> Result<Vec<Option<Vec<T>>>> {
        let (b, c, inner) = channel_layout(parents[0].shape(), "prelu")?;
        let x = parents[0].data();
        let alpha = parents[1].data();
        let mut dx = vec![T::zero(); x.len()];
        let mut dalpha = vec![0.0f64; c];
        for bi in 0..b {
            for ci in 0..c {
                let base = (bi * c + ci) * inner;
                for k in base..base + inner {
                    if x[k] > T::zero() {
                        dx[k] = g[k];
                    } else {
                        dx[k] = g[k] * alpha[ci];
                        dalpha[ci] += (g[k] * x[k]).as_f64();
                    }
                }
            }
        }
        Ok(vec![
            parents[0].requires_grad().then_some(dx),
            parents[1]
                .requires_grad()
                .then(|| dalpha.into_iter().map(T::from_f64).collect()),
        ])
    }
}

/// `x` where positive, `α_c · x` otherwise. The derivative at exactly zero is
/// taken as `α_c`.
pub fn prelu<T: Element>(input: &Tensor<T>, alpha: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, c, inner) = channel_layout(input.shape(), "prelu")?;
    if alpha.shape() != [c] {
        return Err(TensorError::Shape(format!("prelu: alpha shape {:?}, expected [{c}]", alpha.shape())));
    }
    let data = {
        let x = input.data();
        let a = alpha.data();
        let mut out = Vec::with_capacity(x.len());
        for bi in 0..b {
            for ci in 0..c {
                let base = (bi * c + ci) * inner;
                out.extend(x[base..base + inner].iter().map(|&v| if v > T::zero() { v } else { a[ci] * v }));
            }
        }
        out
    };
    Ok(Tensor::from_op(input.shape().to_vec(), data, vec![input.clone(), alpha.clone()], PreluBack))
}

/// Batch-norm settings shared by every normalization layer.
#[derive(Debug, Clone, Copy)]
pub struct BatchNormOptions {
    pub training: bool,
    pub momentum: f64,
    pub eps: f64,
}

impl Default for BatchNormOptions {
    fn default() -> Self {
        Self {
            training: true,
            momentum: 0.1,
            eps: 1e-5,
        }
    }
}

struct BatchNormBack {
    /// normalized input, `(x − μ)/σ`
    x_hat: Vec<f64>,
    inv_std: Vec<f64>,
    training: bool,
}

impl<T: Element> BackwardFn<T> for BatchNormBack {
    fn name(&self) -> &'static str {
        "batch_norm2d"
    }
    fn backward(&self, g: &[T], parents: &[Tensor<T>], _: &[T]) -> Result<Vec<Option<Vec<T>>>> {
        let (b, c, inner) = channel_layout(parents[0].shape(), "batch_norm")?;
        let gamma = parents[1].data();
        let n = (b * inner) as f64;
        let mut sum_g = vec![0.0f64; c];
        let mut sum_gx = vec![0.0f64; c];
        for bi in 0..b {
            for ci in 0..c {
                let base = (bi * c + ci) * inner;
                for k in base..base + inner {
                    let gv = g[k].as_f64();
                    sum_g[ci] += gv;
                    sum_gx[ci] += gv * self.x_hat[k];
                }
            }
        }
        let dx = parents[0].requires_grad().then(|| {
            let mut dx = vec![T::zero(); g.len()];
            for bi in 0..b {
                for ci in 0..c {
                    let gm = gamma[ci].as_f64();
                    let base = (bi * c + ci) * inner;
                    for k in base..base + inner {
                        let gv = g[k].as_f64();
                        let v = if self.training {
                            gm * self.inv_std[ci] * (gv - sum_g[ci] / n - self.x_hat[k] * sum_gx[ci] / n)
                        } else {
                            gm * self.inv_std[ci] * gv
                        };
                        dx[k] = T::from_f64(v);
                    }
                }
            }
            dx
        });
        Ok(vec![
            dx,
            parents[1]
                .requires_grad()
                .then(|| sum_gx.iter().map(|v| T::from_f64(*v)).collect()),
            parents[2]
                .requires_grad()
                .then(|| sum_g.iter().map(|v| T::from_f64(*v)).collect()),
        ])
    }
}

/// Per-channel batch normalization.
///
/// Training mode normalizes with biased batch statistics and folds the
/// unbiased variance into the running buffers with the given momentum;
/// evaluation mode uses the running buffers.
pub fn batch_norm2d<T: Element>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
    opts: BatchNormOptions,
) -> Result<Tensor<T>> {
    let (b, c, inner) = channel_layout(input.shape(), "batch_norm")?;
    for (name, t) in [("gamma", gamma), ("beta", beta), ("running_mean", running_mean), ("running_var", running_var)] {
        if t.shape() != [c] {
            return Err(TensorError::Shape(format!("batch_norm: {name} shape {:?}, expected [{c}]", t.shape())));
        }
    }
    if opts.training && b < 2 {
        return Err(TensorError::DegenerateBatch(b));
    }
    let x = input.data();
    let n = (b * inner) as f64;
    let (mean, var): (Vec<f64>, Vec<f64>) = if opts.training {
        let mut mean = vec![0.0; c];
        let mut sq = vec![0.0; c];
        for bi in 0..b {
            for ci in 0..c {
                let base = (bi * c + ci) * inner;
                for v in &x[base..base + inner] {
                    mean[ci] += v.as_f64();
                }
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        for bi in 0..b {
            for ci in 0..c {
                let base = (bi * c + ci) * inner;
                for v in &x[base..base + inner] {
                    let d = v.as_f64() - mean[ci];
                    sq[ci] += d * d;
                }
            }
        }
        let var = sq.iter().map(|s| s / n).collect();
        (mean, var)
    } else {
        (
            running_mean.data().iter().map(|v| v.as_f64()).collect(),
            running_var.data().iter().map(|v| v.as_f64()).collect(),
        )
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + opts.eps).sqrt()).collect();
    let gm = gamma.data();
    let bt = beta.data();
    let mut x_hat = vec![0.0f64; x.len()];
    let mut data = vec![T::zero(); x.len()];
    for bi in 0..b {
        for ci in 0..c {
            let base = (bi * c + ci) * inner;
            for k in base..base + inner {
                let xh = (x[k].as_f64() - mean[ci]) * inv_std[ci];
                x_hat[k] = xh;
                data[k] = T::from_f64(gm[ci].as_f64() * xh + bt[ci].as_f64());
            }
        }
    }
    drop((x, gm, bt));
    if opts.training {
        let m = opts.momentum;
        let unbias = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
        let mut rm = running_mean.data_mut();
        let mut rv = running_var.data_mut();
        for ci in 0..c {
            rm[ci] = T::from_f64((1.0 - m) * rm[ci].as_f64() + m * mean[ci]);
            rv[ci] = T::from_f64((1.0 - m) * rv[ci].as_f64() + m * var[ci] * unbias);
        }
    }
    Ok(Tensor::from_op(
        input.shape().to_vec(),
        data,
        vec![input.clone(), gamma.clone(), beta.clone()],
        BatchNormBack {
            x_hat,
            inv_std,
            training: opts.training,
        },
    ))
}

/// Index map of the sub-pixel rearrangement:
/// `out[b, c, h·r + i, w·r + j] = in[b, c·r² + i·r + j, h, w]`.
fn shuffle_index(shape_in: [usize; 4], r: usize) -> impl Iterator<Item = (usize, usize)> {
    let [b, cr, h, w] = shape_in;
    let c = cr / (r * r);
    let (ho, wo) = (h * r, w * r);
    (0..b).flat_map(move |bi| {
        (0..c).flat_map(move |ci| {
            (0..ho).flat_map(move |y| {
                (0..wo).map(move |x| {
                    let (hh, i, ww, j) = (y / r, y % r, x / r, x % r);
                    let src = ((bi * cr + ci * r * r + i * r + j) * h + hh) * w + ww;
                    let dst = ((bi * c + ci) * ho + y) * wo + x;
                    (dst, src)
                })
            })
        })
    })
}

struct ShuffleBack {
    shape_in: [usize; 4],
    r: usize,
    inverse: bool,
}
impl<T: Element> BackwardFn<T> for ShuffleBack {
    fn name(&self) -> &'static str {
        if self.inverse {
            "pixel_unshuffle"
        } else {
            "pixel_shuffle"
        }
    }
    fn backward(&self, g: &[T], _: &[Tensor<T>], _: &[T]) -> Result<Vec<Option<Vec<T>>>> {
        let mut out = vec![T::zero(); g.len()];
        for (dst, src) in shuffle_index(self.shape_in, self.r) {
            if self.inverse {
                out[dst] = g[src];
            } else {
                out[src] = g[dst];
            }
        }
        Ok(vec![Some(out)])
    }
}

/// `[B, C·r², H, W] → [B, C, H·r, W·r]`.
pub fn pixel_shuffle<T: Element>(input: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let [b, cr, h, w] = dims4(input.shape(), "pixel_shuffle")?;
    if r == 0 || cr % (r * r) != 0 {
        return Err(TensorError::Shape(format!("pixel_shuffle: {cr} channels not divisible by r² = {}", r * r)));
    }
    let x = input.data();
    let mut data = vec![T::zero(); x.len()];
    for (dst, src) in shuffle_index([b, cr, h, w], r) {
        data[dst] = x[src];
    }
    drop(x);
    Ok(Tensor::from_op(
        vec![b, cr / (r * r), h * r, w * r],
        data,
        vec![input.clone()],
        ShuffleBack {
            shape_in: [b, cr, h, w],
            r,
            inverse: false,
        },
    ))
}

/// Inverse of [`pixel_shuffle`]: `[B, C, H·r, W·r] → [B, C·r², H, W]`.
pub fn pixel_unshuffle<T: Element>(input: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let [b, c, ho, wo] = dims4(input.shape(), "pixel_unshuffle")?;
    if r == 0 || ho % r != 0 || wo % r != 0 {
        return Err(TensorError::Shape(format!("pixel_unshuffle: {ho}x{wo} not divisible by {r}")));
    }
    let shape_in = [b, c * r * r, ho / r, wo / r];
    let x = input.data();
    let mut data = vec![T::zero(); x.len()];
    for (dst, src) in shuffle_index(shape_in, r) {
        data[src] = x[dst];
    }
    drop(x);
    Ok(Tensor::from_op(
        shape_in.to_vec(),
        data,
        vec![input.clone()],
        ShuffleBack {
            shape_in,
            r,
            inverse: true,
        },
    ))
}

struct LinearBack {
    b: usize,
    f: usize,
    o: usize,
}
impl<T: Element> BackwardFn<T> for LinearBack {
    fn name(&self) -> &'static str {
        "linear"
    }
    fn backward(&self, g: &[T], parents: &[Tensor<T>], _: &[T]) -> Result<Vec<Option<Vec<T>>>> {
        let (b, f, o) = (self.b, self.f, self.o);
        let dx = parents[0].requires_grad().then(|| {
            let mut dx = vec![T::zero(); b * f];
            gemm(b, o, f, g, false, &parents[1].data(), false, T::zero(), &mut dx);
            dx
        });
        let dw = parents[1].requires_grad().then(|| {
            let mut dw = vec![T::zero(); o * f];
            gemm(o, b, f, g, true, &parents[0].data(), false, T::zero(), &mut dw);
            dw
        });
        let mut out = vec![dx, dw];
        if parents.len() == 3 {
            out.push(parents[2].requires_grad().then(|| {
                (0..o)
                    .map(|j| T::from_f64((0..b).map(|i| g[i * o + j].as_f64()).sum()))
                    .collect()
            }));
        }
        Ok(out)
    }
}

/// `y = x Wᵀ + b` for `x: [B, F]`, `W: [O, F]`, `b: [O]`.
pub fn linear<T: Element>(input: &Tensor<T>, weight: &Tensor<T>, bias: Option<&Tensor<T>>) -> Result<Tensor<T>> {
    let (&[b, f], &[o, fw]) = (input.shape(), weight.shape()) else {
        return Err(TensorError::Shape(format!(
            "linear: input {:?} / weight {:?} must both be rank 2",
            input.shape(),
            weight.shape()
        )));
    };
    if f != fw {
        return Err(TensorError::Shape(format!("linear: input has {f} features, weight expects {fw}")));
    }
    let mut data = vec![T::zero(); b * o];
    if let Some(bias) = bias {
        if bias.shape() != [o] {
            return Err(TensorError::Shape(format!("linear: bias shape {:?}, expected [{o}]", bias.shape())));
        }
        let bd = bias.data();
        for row in data.chunks_mut(o) {
            row.copy_from_slice(&bd);
        }
    }
    gemm(b, f, o, &input.data(), false, &weight.data(), true, T::one(), &mut data);
    let mut parents = vec![input.clone(), weight.clone()];
    if let Some(bias) = bias {
        parents.push(bias.clone());
    }
    Ok(Tensor::from_op(vec![b, o], data, parents, LinearBack { b, f, o }))
}

struct UpsampleBack {
    shape_in: [usize; 4],
    fh: usize,
    fw: usize,
}
impl<T: Element> BackwardFn<T> for UpsampleBack {
    fn name(&self) -> &'static str {
        "nearest_upsample"
    }
    fn backward(&self, g: &[T], _: &[Tensor<T>], _: &[T]) -> Result<Vec<Option<Vec<T>>>> {
        let [b, c, h, w] = self.shape_in;
        let (ho, wo) = (h * self.fh, w * self.fw);
        let mut out = vec![T::zero(); b * c * h * w];
        for plane in 0..b * c {
            for y in 0..ho {
                for x in 0..wo {
                    let k = (plane * h + y / self.fh) * w + x / self.fw;
                    out[k] = out[k] + g[(plane * ho + y) * wo + x];
                }
            }
        }
        Ok(vec![Some(out)])
    }
}

/// Nearest-neighbour upsampling by integer factors along time and trace.
pub fn nearest_upsample<T: Element>(input: &Tensor<T>, fh: usize, fw: usize) -> Result<Tensor<T>> {
    let [b, c, h, w] = dims4(input.shape(), "nearest_upsample")?;
    if fh == 0 || fw == 0 {
        return Err(TensorError::Shape("nearest_upsample: factors must be positive".into()));
    }
    let (ho, wo) = (h * fh, w * fw);
    let x = input.data();
    let mut data = Vec::with_capacity(b * c * ho * wo);
    for plane in 0..b * c {
        for y in 0..ho {
            let row = &x[(plane * h + y / fh) * w..(plane * h + y / fh + 1) * w];
            data.extend((0..wo).map(|xx| row[xx / fw]));
        }
    }
    drop(x);
    Ok(Tensor::from_op(
        vec![b, c, ho, wo],
        data,
        vec![input.clone()],
        UpsampleBack {
            shape_in: [b, c, h, w],
            fh,
            fw,
        },
    ))
}

struct PoolBack {
    shape_in: [usize; 4],
    k: usize,
    /// source index per output element for max pooling; `None` means average
    argmax: Option<Vec<usize>>,
}
impl<T: Element> BackwardFn<T> for PoolBack {
    fn name(&self) -> &'static str {
        if self.argmax.is_some() {
            "max_pool2d"
        } else {
            "avg_pool2d"
        }
    }
    fn backward(&self, g: &[T], _: &[Tensor<T>], _: &[T]) -> Result<Vec<Option<Vec<T>>>> {
        let [b, c, h, w] = self.shape_in;
        let mut out = vec![T::zero(); b * c * h * w];
        match &self.argmax {
            Some(idx) => {
                for (o, &src) in idx.iter().enumerate() {
                    out[src] = out[src] + g[o];
                }
            }
            None => {
                let k = self.k;
                let scale = T::from_f64(1.0 / (k * k) as f64);
                let (ho, wo) = (h / k, w / k);
                for plane in 0..b * c {
                    for y in 0..h {
                        for x in 0..w {
                            out[(plane * h + y) * w + x] = g[(plane * ho + y / k) * wo + x / k] * scale;
                        }
                    }
                }
            }
        }
        Ok(vec![Some(out)])
    }
}

fn pool<T: Element>(input: &Tensor<T>, k: usize, max: bool) -> Result<Tensor<T>> {
    let [b, c, h, w] = dims4(input.shape(), "pool2d")?;
    if k == 0 || h % k != 0 || w % k != 0 {
        return Err(TensorError::Shape(format!("pool2d: {h}x{w} not divisible by window {k}")));
    }
    let (ho, wo) = (h / k, w / k);
    let x = input.data();
    let mut data = Vec::with_capacity(b * c * ho * wo);
    let mut argmax = Vec::new();
    for plane in 0..b * c {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = (0usize, T::neg_infinity());
                let mut acc = 0.0f64;
                for dy in 0..k {
                    for dx in 0..k {
                        let idx = (plane * h + oy * k + dy) * w + ox * k + dx;
                        if x[idx] > best.1 {
                            best = (idx, x[idx]);
                        }
                        acc += x[idx].as_f64();
                    }
                }
                if max {
                    data.push(best.1);
                    argmax.push(best.0);
                } else {
                    data.push(T::from_f64(acc / (k * k) as f64));
                }
            }
        }
    }
    drop(x);
    Ok(Tensor::from_op(
        vec![b, c, ho, wo],
        data,
        vec![input.clone()],
        PoolBack {
            shape_in: [b, c, h, w],
            k,
            argmax: max.then_some(argmax),
        },
    ))
}

/// Non-overlapping `k×k` average pooling.
pub fn avg_pool2d<T: Element>(input: &Tensor<T>, k: usize) -> Result<Tensor<T>> {
    pool(input, k, false)
}

/// Non-overlapping `k×k` max pooling; ties go to the first element.
pub fn max_pool2d<T: Element>(input: &Tensor<T>, k: usize) -> Result<Tensor<T>> {
    pool(input, k, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::ops;

    #[test]
    fn conv_box_sum() {
        let x = Tensor::<f32>::new(&[1, 1, 3, 3], vec![1.0; 9]).unwrap();
        let w = Tensor::<f32>::new(&[1, 1, 3, 3], vec![1.0; 9]).unwrap();
        let y = conv2d(&x, &w, None, 1, 1).unwrap();
        assert_eq!(y.shape(), &[1, 1, 3, 3]);
        assert_eq!(*y.data(), vec![4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    }

    #[test]
    fn conv_identity_kernel() {
        let data: Vec<f32> = (0..2 * 5 * 4).map(|v| (v as f32 * 0.7).sin()).collect();
        let x = Tensor::<f32>::new(&[1, 2, 5, 4], data.clone()).unwrap();
        let mut k = vec![0.0f32; 2 * 2 * 9];
        k[4] = 1.0;
        k[(2 + 1) * 9 + 4] = 1.0;
        let w = Tensor::<f32>::new(&[2, 2, 3, 3], k).unwrap();
        let y = conv2d(&x, &w, None, 1, 1).unwrap();
        assert_eq!(*y.data(), data);
    }

    #[test]
    fn conv_shape_errors() {
        let x = Tensor::<f32>::zeros(&[1, 1, 4, 4]);
        let even = Tensor::<f32>::zeros(&[1, 1, 2, 2]);
        assert!(conv2d(&x, &even, None, 1, 0).is_err());
        let w = Tensor::<f32>::zeros(&[1, 1, 3, 3]);
        assert!(conv2d(&x, &w, None, 2, 1).is_err());
        assert!(conv2d(&x, &w, None, 2, 0).is_err());
        let odd = Tensor::<f32>::zeros(&[1, 1, 5, 5]);
        assert_eq!(conv2d(&odd, &w, None, 2, 1).unwrap().shape(), &[1, 1, 3, 3]);
        assert_eq!(conv2d_padded(&x, &w, None, 2, [0, 1, 0, 1]).unwrap().shape(), &[1, 1, 2, 2]);
    }

    #[test]
    fn prelu_values() {
        let x = Tensor::<f32>::new(&[1, 1, 2], vec![2.0, -2.0]).unwrap();
        let a = Tensor::<f32>::new(&[1], vec![0.25]).unwrap();
        assert_eq!(*prelu(&x, &a).unwrap().data(), vec![2.0, -0.5]);
    }

    #[test]
    fn batch_norm_constant_channel_gives_beta() {
        let x = Tensor::<f32>::new(&[2, 1, 2, 2], vec![3.0; 8]).unwrap();
        let gamma = Tensor::<f32>::new(&[1], vec![1.7]).unwrap();
        let beta = Tensor::<f32>::new(&[1], vec![0.4]).unwrap();
        let rm = Tensor::<f32>::zeros(&[1]);
        let rv = Tensor::<f32>::full(&[1], 1.0);
        let y = batch_norm2d(&x, &gamma, &beta, &rm, &rv, BatchNormOptions::default()).unwrap();
        assert!(y.data().iter().all(|v| *v == 0.4));
        assert!((rm.item() - 0.3).abs() < 1e-6);
        assert!((rv.item() - 0.9).abs() < 1e-6);
    }

    #[test]
    fn batch_norm_standardized_input_passes_through() {
        let vals = [-1.5f32, -0.5, 0.5, 1.5];
        let mean = 0.0f32;
        let var: f32 = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / 4.0;
        let x: Vec<f32> = vals.iter().map(|v| v / var.sqrt()).collect();
        let t = Tensor::<f32>::new(&[2, 1, 2, 1], x.clone()).unwrap();
        let ones = Tensor::<f32>::full(&[1], 1.0);
        let zeros = Tensor::<f32>::zeros(&[1]);
        let y = batch_norm2d(&t, &ones, &zeros, &Tensor::zeros(&[1]), &Tensor::full(&[1], 1.0), BatchNormOptions::default())
            .unwrap();
        for (a, b) in y.data().iter().zip(&x) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn batch_norm_single_sample_rejected() {
        let x = Tensor::<f32>::zeros(&[1, 2, 3, 3]);
        let g = Tensor::<f32>::full(&[2], 1.0);
        let z = Tensor::<f32>::zeros(&[2]);
        let err = batch_norm2d(&x, &g, &z, &z, &g, BatchNormOptions::default());
        assert!(matches!(err, Err(TensorError::DegenerateBatch(1))));
        let eval = BatchNormOptions {
            training: false,
            ..Default::default()
        };
        assert!(batch_norm2d(&x, &g, &z, &z, &g, eval).is_ok());
    }

    #[test]
    fn pixel_shuffle_index_map() {
        let x = Tensor::<f32>::new(&[1, 4, 1, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = pixel_shuffle(&x, 2).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert_eq!(*y.data(), vec![1.0, 2.0, 3.0, 4.0]);

        // enumerate every position of a larger case against the closed-form map
        let (b, c, h, w, r) = (2, 2, 3, 2, 3);
        let data: Vec<f32> = (0..b * c * r * r * h * w).map(|v| v as f32).collect();
        let x = Tensor::<f32>::new(&[b, c * r * r, h, w], data.clone()).unwrap();
        let y = pixel_shuffle(&x, r).unwrap();
        let yd = y.data();
        for bi in 0..b {
            for ci in 0..c {
                for yy in 0..h * r {
                    for xx in 0..w * r {
                        let src = ((bi * c * r * r + ci * r * r + (yy % r) * r + xx % r) * h + yy / r) * w + xx / r;
                        assert_eq!(yd[((bi * c + ci) * h * r + yy) * w * r + xx], data[src]);
                    }
                }
            }
        }
        assert!(pixel_shuffle(&Tensor::<f32>::zeros(&[1, 3, 1, 1]), 2).is_err());
    }

    #[test]
    fn pixel_shuffle_round_trip_and_identity() {
        let data: Vec<f32> = (0..2 * 8 * 3 * 5).map(|v| (v as f32).cos()).collect();
        let x = Tensor::<f32>::new(&[2, 8, 3, 5], data.clone()).unwrap();
        assert_eq!(*pixel_shuffle(&x, 1).unwrap().data(), data);
        let back = pixel_unshuffle(&pixel_shuffle(&x, 2).unwrap(), 2).unwrap();
        assert_eq!(*back.data(), data);
        assert_eq!(back.shape(), x.shape());
    }

    #[test]
    fn linear_identity() {
        let x = Tensor::<f32>::new(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mut eye = vec![0.0f32; 9];
        (0..3).for_each(|i| eye[i * 4] = 1.0);
        let w = Tensor::<f32>::new(&[3, 3], eye).unwrap();
        let b = Tensor::<f32>::zeros(&[3]);
        assert_eq!(*linear(&x, &w, Some(&b)).unwrap().data(), *x.data());
    }

    #[test]
    fn upsample_repeats_and_pools_back() {
        let x = Tensor::<f64>::param(&[1, 1, 1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let y = nearest_upsample(&x, 1, 4).unwrap();
        assert_eq!(*y.data(), vec![1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0, 3.0, 3.0, 3.0, 3.0]);
        let w = Tensor::<f64>::new(&[1, 1, 1, 12], (0..12).map(|v| v as f64).collect()).unwrap();
        ops::sum(&ops::mul(&y, &w).unwrap()).backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![6.0, 22.0, 38.0]);
    }

    #[test]
    fn pooling_values() {
        let x = Tensor::<f32>::new(&[1, 1, 2, 4], vec![1.0, 5.0, 2.0, 2.0, 3.0, 0.0, 4.0, 6.0]).unwrap();
        assert_eq!(*avg_pool2d(&x, 2).unwrap().data(), vec![2.25, 3.5]);
        assert_eq!(*max_pool2d(&x, 2).unwrap().data(), vec![5.0, 6.0]);
        assert!(avg_pool2d(&Tensor::<f32>::zeros(&[1, 1, 3, 4]), 2).is_err());
    }
}
