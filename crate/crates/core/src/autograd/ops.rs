//! Elementwise, reduction and layout operators.

use super::{numel, BackwardFn, Element, Result, Tensor, TensorError};

fn same_shape<T: Element>(a: &Tensor<T>, b: &Tensor<T>, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::Shape(format!(
            "{what}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn want<T: Element>(p: &Tensor<T>, g: impl FnOnce() -> Vec<T>) -> Option<Vec<T>> {
    p.requires_grad().then(g)
}

struct AddBack;
impl<T: Element> BackwardFn<T> for AddBack {
    fn name(&self) -> &'static str {
        "add"
    }
    fn backward(&self, g: &[T], p: &[Tensor<T>], _: &[T]) -> Result<Vec<Option<Vec<T>>>> {
        Ok(vec![want(&p[0], || g.to_vec()), want(&p[1], || g.to_vec())])
    }
}

pub fn add<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape(a, b, "add")?;
    let data = a.data().iter().zip(b.data().iter()).map(|(x, y)| *x + *y).collect();
    Ok(Tensor::from_op(a.shape().to_vec(), data, vec![a.clone(), b.clone()], AddBack))
}

struct SubBack;
impl<T: Element> BackwardFn<T> for SubBack {
    fn name(&self) -> &'static str {
        "sub"
    }
    fn backward(&self, g: &[T], p: &[Tensor<T>], _: &[T]) -> Result<Vec<Option<Vec<T>>>> {
        Ok(vec![
            want(&p[0], || g.to_vec()),
            want(&p[1], || g.iter().map(|v| -*v).collect()),
        ])
    }
}

pub fn sub<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape(a, b, "sub")?;
    let data = a.data().iter().zip(b.data().iter()).map(|(x, y)| *x - *y).collect();
    Ok(Tensor::from_op(a.shape().to_vec(), data, vec![a.clone(), b.clone()], SubBack))
}

struct MulBack;
impl<T: Element> BackwardFn<T> for MulBack {
    fn name(&self) -> &'static str {
        "mul"
    }
    fn backward(&self, g: &[T], p: &[Tensor<T>], _: &[T]) -> Result<Vec<Option<Vec<T>>>> {
        let a = p[0].data();
        let b = p[1].data();
        Ok(vec![
            want(&p[0], || g.iter().zip(b.iter()).map(|(g, b)| *g * *b).collect()),
            want(&p[1], || g.iter().zip(a.iter()).map(|(g, a)| *g * *a).collect()),
        ])
    }
}

/// Elementwise product.
pub fn mul<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape(a, b, "mul")?;
    let data = a.data().iter().zip(b.data().iter()).map(|(x, y)| *x * *y).collect();
    Ok(Tensor::from_op(a.shape().to_vec(), data, vec![a.clone(), b.clone()], MulBack))
}

struct AffineBack<T>(T);
impl<T: Element> BackwardFn<T> for AffineBack<T> {
    fn name(&self) -> &'static str {
        "affine"
    }
    fn backward(&self, g: &[T], _: &[Tensor<T>], _: &[T]) -> Result<Vec<Option<Vec<T>>>> {
        Ok(vec![Some(g.iter().map(|v| *v * self.0).collect())])
    }
}

/// `scale · a + shift`.
pub fn affine<T: Element>(a: &Tensor<T>, scale: f64, shift: f64) -> Tensor<T> {
    let (s, c) = (T::from_f64(scale), T::from_f64(shift));
    let data = a.data().iter().map(|v| *v * s + c).collect();
    Tensor::from_op(a.shape().to_vec(), data, vec![a.clone()], AffineBack(s))
}

pub fn scale<T: Element>(a: &Tensor<T>, s: f64) -> Tensor<T> {
    affine(a, s, 0.0)
}

struct SumBack<T>(T);
impl<T: Element> BackwardFn<T> for SumBack<T> {
    fn name(&self) -> &'static str {
        "sum"
    }
    fn backward(&self, g: &[T], p: &[Tensor<T>], _: &[T]) -> Result<Vec<Option<Vec<T>>>> {
        Ok(vec![Some(vec![g[0] * self.0; p[0].numel()])])
    }
}

/// Sequential left-to-right sum, accumulated in `f64`.
pub fn sum<T: Element>(a: &Tensor<T>) -> Tensor<T> {
    let total: f64 = a.data().iter().map(|v| v.as_f64()).sum();
    Tensor::from_op(Vec::new(), vec![T::from_f64(total)], vec![a.clone()], SumBack(T::one()))
}

pub fn mean<T: Element>(a: &Tensor<T>) -> Tensor<T> {
    let n = a.numel().max(1) as f64;
    let total: f64 = a.data().iter().map(|v| v.as_f64()).sum();
    Tensor::from_op(
        Vec::new(),
        vec![T::from_f64(total / n)],
        vec![a.clone()],
        SumBack(T::from_f64(1.0 / n)),
    )
}

struct ReshapeBack;
impl<T: Element> BackwardFn<T> for ReshapeBack {
    fn name(&self) -> &'static str {
        "reshape"
    }
    fn backward(&self, g: &[T], _: &[Tensor<T>], _: &[T]) -> Result<Vec<Option<Vec<T>>>> {
        Ok(vec![Some(g.to_vec())])
    }
}

pub fn reshape<T: Element>(a: &Tensor<T>, shape: &[usize]) -> Result<Tensor<T>> {
    if numel(shape) != a.numel() {
        return Err(TensorError::Shape(format!("cannot reshape {:?} into {shape:?}", a.shape())));
    }
    Ok(Tensor::from_op(shape.to_vec(), a.to_vec(), vec![a.clone()], ReshapeBack))
}

/// `[B, …] → [B, prod(…)]`.
pub fn flatten<T: Element>(a: &Tensor<T>) -> Result<Tensor<T>> {
    let Some(&b) = a.shape().first() else {
        return Err(TensorError::Shape("flatten needs rank ≥ 1".into()));
    };
    let rest = if b == 0 { 0 } else { a.numel() / b };
    reshape(a, &[b, rest])
}

struct SigmoidBack;
impl<T: Element> BackwardFn<T> for SigmoidBack {
    fn name(&self) -> &'static str {
        "sigmoid"
    }
    fn backward(&self, g: &[T], _: &[Tensor<T>], out: &[T]) -> Result<Vec<Option<Vec<T>>>> {
        Ok(vec![Some(g.iter().zip(out).map(|(g, y)| *g * *y * (T::one() - *y)).collect())])
    }
}

pub fn sigmoid<T: Element>(a: &Tensor<T>) -> Tensor<T> {
    let data = a
        .data()
        .iter()
        .map(|&x| {
            // split by sign so exp never overflows
            if x >= T::zero() {
                T::one() / (T::one() + (-x).exp())
            } else {
                let e = x.exp();
                e / (T::one() + e)
            }
        })
        .collect();
    Tensor::from_op(a.shape().to_vec(), data, vec![a.clone()], SigmoidBack)
}

struct AbsBack;
impl<T: Element> BackwardFn<T> for AbsBack {
    fn name(&self) -> &'static str {
        "abs"
    }
    fn backward(&self, g: &[T], p: &[Tensor<T>], _: &[T]) -> Result<Vec<Option<Vec<T>>>> {
        let x = p[0].data();
        Ok(vec![Some(g.iter().zip(x.iter()).map(|(g, x)| *g * sign(*x)).collect())])
    }
}

fn sign<T: Element>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

pub fn abs<T: Element>(a: &Tensor<T>) -> Tensor<T> {
    let data = a.data().iter().map(|v| v.abs()).collect();
    Tensor::from_op(a.shape().to_vec(), data, vec![a.clone()], AbsBack)
}

struct LogClampBack<T> {
    lo: T,
    hi: T,
}
impl<T: Element> BackwardFn<T> for LogClampBack<T> {
    fn name(&self) -> &'static str {
        "log_clamped"
    }
    fn backward(&self, g: &[T], p: &[Tensor<T>], _: &[T]) -> Result<Vec<Option<Vec<T>>>> {
        let x = p[0].data();
        let grad = g
            .iter()
            .zip(x.iter())
            .map(|(g, &x)| if x < self.lo || x > self.hi { T::zero() } else { *g / x })
            .collect();
        Ok(vec![Some(grad)])
    }
}

/// `ln(clamp(a, lo, hi))`; zero gradient where the clamp is active.
pub fn log_clamped<T: Element>(a: &Tensor<T>, lo: f64, hi: f64) -> Tensor<T> {
    let (lo, hi) = (T::from_f64(lo), T::from_f64(hi));
    let data = a.data().iter().map(|v| v.max(lo).min(hi).ln()).collect();
    Tensor::from_op(a.shape().to_vec(), data, vec![a.clone()], LogClampBack { lo, hi })
}

struct L1Back;
impl<T: Element> BackwardFn<T> for L1Back {
    fn name(&self) -> &'static str {
        "l1_loss"
    }
    fn backward(&self, g: &[T], p: &[Tensor<T>], _: &[T]) -> Result<Vec<Option<Vec<T>>>> {
        let a = p[0].data();
        let b = p[1].data();
        let k = g[0] / T::from_f64(a.len() as f64);
        let d: Vec<T> = a.iter().zip(b.iter()).map(|(x, y)| sign(*x - *y) * k).collect();
        Ok(vec![
            want(&p[0], || d.clone()),
            want(&p[1], || d.iter().map(|v| -*v).collect()),
        ])
    }
}

/// Mean absolute difference `mean |a − b|` as a scalar.
pub fn l1_loss<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape(a, b, "l1_loss")?;
    let n = a.numel().max(1) as f64;
    let total: f64 = a
        .data()
        .iter()
        .zip(b.data().iter())
        .map(|(x, y)| (*x - *y).abs().as_f64())
        .sum();
    Ok(Tensor::from_op(
        Vec::new(),
        vec![T::from_f64(total / n)],
        vec![a.clone(), b.clone()],
        L1Back,
    ))
}

fn nchw(shape: &[usize], what: &str) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 {
        return Err(TensorError::Shape(format!("{what} needs rank ≥ 2, got {shape:?}")));
    }
    Ok((shape[0], shape[1], shape[2..].iter().product()))
}

struct SplitBack {
    start: usize,
    width: usize,
}
impl<T: Element> BackwardFn<T> for SplitBack {
    fn name(&self) -> &'static str {
        "split_channels"
    }
    fn backward(&self, g: &[T], p: &[Tensor<T>], _: &[T]) -> Result<Vec<Option<Vec<T>>>> {
        let (b, c, inner) = nchw(p[0].shape(), "split")?;
        let mut out = vec![T::zero(); b * c * inner];
        for bi in 0..b {
            let dst = (bi * c + self.start) * inner;
            let src = bi * self.width * inner;
            out[dst..dst + self.width * inner].copy_from_slice(&g[src..src + self.width * inner]);
        }
        Ok(vec![Some(out)])
    }
}

fn channel_slice<T: Element>(x: &Tensor<T>, start: usize, width: usize) -> Result<Tensor<T>> {
    let (b, c, inner) = nchw(x.shape(), "split")?;
    let src = x.data();
    let mut data = Vec::with_capacity(b * width * inner);
    for bi in 0..b {
        let from = (bi * c + start) * inner;
        data.extend_from_slice(&src[from..from + width * inner]);
    }
    let mut shape = x.shape().to_vec();
    shape[1] = width;
    Ok(Tensor::from_op(shape, data, vec![x.clone()], SplitBack { start, width }))
}

/// Splits the channel axis into `[0, at)` and `[at, C)`.
pub fn split_channels<T: Element>(x: &Tensor<T>, at: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let (_, c, _) = nchw(x.shape(), "split")?;
    if at == 0 || at >= c {
        return Err(TensorError::Shape(format!("split point {at} must lie strictly inside 0..{c}")));
    }
    Ok((channel_slice(x, 0, at)?, channel_slice(x, at, c - at)?))
}

struct ConcatBack {
    ca: usize,
    cb: usize,
}
impl<T: Element> BackwardFn<T> for ConcatBack {
    fn name(&self) -> &'static str {
        "concat_channels"
    }
    fn backward(&self, g: &[T], p: &[Tensor<T>], _: &[T]) -> Result<Vec<Option<Vec<T>>>> {
        let (b, _, inner) = nchw(p[0].shape(), "concat")?;
        let (ca, cb) = (self.ca * inner, self.cb * inner);
        let mut ga = Vec::with_capacity(b * ca);
        let mut gb = Vec::with_capacity(b * cb);
        for bi in 0..b {
            let row = &g[bi * (ca + cb)..(bi + 1) * (ca + cb)];
            ga.extend_from_slice(&row[..ca]);
            gb.extend_from_slice(&row[ca..]);
        }
        Ok(vec![p[0].requires_grad().then_some(ga), p[1].requires_grad().then_some(gb)])
    }
}

/// Channel-wise concatenation `a ⊕ b`.
pub fn concat_channels<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (ba, ca, ia) = nchw(a.shape(), "concat")?;
    let (bb, cb, ib) = nchw(b.shape(), "concat")?;
    if ba != bb || ia != ib || a.shape()[2..] != b.shape()[2..] {
        return Err(TensorError::Shape(format!(
            "concat: {:?} and {:?} disagree outside the channel axis",
            a.shape(),
            b.shape()
        )));
    }
    let (da, db) = (a.data(), b.data());
    let mut data = Vec::with_capacity(a.numel() + b.numel());
    for bi in 0..ba {
        data.extend_from_slice(&da[bi * ca * ia..(bi + 1) * ca * ia]);
        data.extend_from_slice(&db[bi * cb * ib..(bi + 1) * cb * ib]);
    }
    let mut shape = a.shape().to_vec();
    shape[1] = ca + cb;
    drop((da, db));
    Ok(Tensor::from_op(shape, data, vec![a.clone(), b.clone()], ConcatBack { ca, cb }))
}

struct ChannelMeanBack {
    c: usize,
}
impl<T: Element> BackwardFn<T> for ChannelMeanBack {
    fn name(&self) -> &'static str {
        "channel_mean"
    }
    fn backward(&self, g: &[T], p: &[Tensor<T>], _: &[T]) -> Result<Vec<Option<Vec<T>>>> {
        let (b, c, inner) = nchw(p[0].shape(), "channel_mean")?;
        let k = T::from_f64(1.0 / self.c as f64);
        let mut out = vec![T::zero(); b * c * inner];
        for bi in 0..b {
            for ci in 0..c {
                let dst = &mut out[(bi * c + ci) * inner..(bi * c + ci + 1) * inner];
                for (d, s) in dst.iter_mut().zip(&g[bi * inner..(bi + 1) * inner]) {
                    *d = *s * k;
                }
            }
        }
        Ok(vec![Some(out)])
    }
}

/// Mean over the channel axis: `[B, C, …] → [B, 1, …]`.
pub fn channel_mean<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, c, inner) = nchw(x.shape(), "channel_mean")?;
    let src = x.data();
    let k = T::from_f64(1.0 / c as f64);
    let mut data = vec![T::zero(); b * inner];
    for bi in 0..b {
        let dst = &mut data[bi * inner..(bi + 1) * inner];
        for ci in 0..c {
            let row = &src[(bi * c + ci) * inner..(bi * c + ci + 1) * inner];
            for (d, s) in dst.iter_mut().zip(row) {
                *d = *d + *s;
            }
        }
        dst.iter_mut().for_each(|d| *d = *d * k);
    }
    let mut shape = x.shape().to_vec();
    shape[1] = 1;
    drop(src);
    Ok(Tensor::from_op(shape, data, vec![x.clone()], ChannelMeanBack { c }))
}

struct AbsCosineBack {
    eps: f64,
}
impl<T: Element> BackwardFn<T> for AbsCosineBack {
    fn name(&self) -> &'static str {
        "abs_cosine_rows"
    }
    fn backward(&self, g: &[T], p: &[Tensor<T>], _: &[T]) -> Result<Vec<Option<Vec<T>>>> {
        let (a, b) = (p[0].data(), p[1].data());
        let rows = p[0].shape()[0];
        let f = p[0].shape()[1];
        let mut ga = vec![T::zero(); a.len()];
        let mut gb = vec![T::zero(); b.len()];
        for r in 0..rows {
            let ar = &a[r * f..(r + 1) * f];
            let br = &b[r * f..(r + 1) * f];
            let st = row_stats(ar, br);
            let na = st.na.max(self.eps);
            let nb = st.nb.max(self.eps);
            let s = sign(st.dot);
            let go = g[r].as_f64();
            // d|dot|/(na nb): the norm terms only move when above the guard
            let ka = if st.na > self.eps { st.dot / (na * na * na * nb) } else { 0.0 };
            let kb = if st.nb > self.eps { st.dot / (na * nb * nb * nb) } else { 0.0 };
            for i in 0..f {
                let (x, y) = (ar[i].as_f64(), br[i].as_f64());
                ga[r * f + i] = T::from_f64(go * s * (y / (na * nb) - ka * x));
                gb[r * f + i] = T::from_f64(go * s * (x / (na * nb) - kb * y));
            }
        }
        Ok(vec![p[0].requires_grad().then_some(ga), p[1].requires_grad().then_some(gb)])
    }
}

struct RowStats {
    dot: f64,
    na: f64,
    nb: f64,
}

fn row_stats<T: Element>(a: &[T], b: &[T]) -> RowStats {
    let (mut dot, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (x.as_f64(), y.as_f64());
        dot += x * y;
        aa += x * x;
        bb += y * y;
    }
    RowStats {
        dot,
        na: aa.sqrt(),
        nb: bb.sqrt(),
    }
}

/// Per-row `|a·b| / (max(‖a‖, ε) · max(‖b‖, ε))` for `[R, F]` inputs; returns `[R]`.
pub fn abs_cosine_rows<T: Element>(a: &Tensor<T>, b: &Tensor<T>, eps: f64) -> Result<Tensor<T>> {
    same_shape(a, b, "abs_cosine_rows")?;
    if a.shape().len() != 2 {
        return Err(TensorError::Shape(format!("abs_cosine_rows needs [R, F], got {:?}", a.shape())));
    }
    let (rows, f) = (a.shape()[0], a.shape()[1]);
    let data = {
        let (da, db) = (a.data(), b.data());
        (0..rows)
            .map(|r| {
                let st = row_stats(&da[r * f..(r + 1) * f], &db[r * f..(r + 1) * f]);
                T::from_f64(st.dot.abs() / (st.na.max(eps) * st.nb.max(eps)))
            })
            .collect()
    };
    Ok(Tensor::from_op(vec![rows], data, vec![a.clone(), b.clone()], AbsCosineBack { eps }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: Vec<f64>) -> Tensor<f64> {
        Tensor::param(shape, data).unwrap()
    }

    #[test]
    fn sigmoid_of_zero_is_half() {
        let y = sigmoid(&Tensor::<f32>::new(&[1], vec![0.0]).unwrap());
        assert_eq!(y.item(), 0.5);
        let y = sigmoid(&Tensor::<f32>::new(&[2], vec![-200.0, 200.0]).unwrap());
        assert!(y.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn split_then_concat_is_bit_exact() {
        let x = Tensor::<f32>::new(&[1, 4, 2, 2], (0..16).map(|v| v as f32 * 0.37).collect()).unwrap();
        let (a, b) = split_channels(&x, 2).unwrap();
        assert_eq!(a.shape(), &[1, 2, 2, 2]);
        assert_eq!(b.shape(), &[1, 2, 2, 2]);
        let y = concat_channels(&a, &b).unwrap();
        assert_eq!(*y.data(), *x.data());
        assert!(split_channels(&x, 0).is_err());
        assert!(split_channels(&x, 4).is_err());
    }

    #[test]
    fn concat_gradient_is_ones() {
        let a = t(&[2, 1, 3], vec![1.0; 6]);
        let b = t(&[2, 2, 3], vec![2.0; 12]);
        sum(&concat_channels(&a, &b).unwrap()).backward().unwrap();
        assert_eq!(a.grad().unwrap(), vec![1.0; 6]);
        assert_eq!(b.grad().unwrap(), vec![1.0; 12]);
        let c = t(&[2, 1, 4], vec![0.0; 8]);
        assert!(concat_channels(&a, &c).is_err());
    }

    #[test]
    fn abs_cosine_fixtures() {
        let x = Tensor::<f64>::new(&[1, 2], vec![1.0, 0.0]).unwrap();
        let q = Tensor::<f64>::new(&[1, 2], vec![1.0, 1.0]).unwrap();
        let v = abs_cosine_rows(&x, &q, 1e-8).unwrap().item();
        assert!((v - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);

        let ones = Tensor::<f64>::new(&[1, 4], vec![1.0; 4]).unwrap();
        let alt = Tensor::<f64>::new(&[1, 4], vec![1.0, -1.0, 1.0, -1.0]).unwrap();
        assert_eq!(abs_cosine_rows(&ones, &alt, 1e-8).unwrap().item(), 0.0);
        assert!((abs_cosine_rows(&alt, &alt, 1e-8).unwrap().item() - 1.0).abs() < 1e-12);

        let zero = Tensor::<f64>::new(&[1, 4], vec![0.0; 4]).unwrap();
        assert_eq!(abs_cosine_rows(&zero, &alt, 1e-8).unwrap().item(), 0.0);
    }

    #[test]
    fn channel_mean_values() {
        let x = Tensor::<f64>::new(&[1, 2, 2], vec![1.0, 2.0, 3.0, 6.0]).unwrap();
        let m = channel_mean(&x).unwrap();
        assert_eq!(m.shape(), &[1, 1, 2]);
        assert_eq!(*m.data(), vec![2.0, 4.0]);
    }

    #[test]
    fn log_clamped_stays_finite() {
        let x = t(&[3], vec![0.0, 0.5, 1.0]);
        let y = log_clamped(&x, 1e-7, 1.0 - 1e-7);
        assert!(y.data().iter().all(|v| v.is_finite()));
        sum(&y).backward().unwrap();
        let g = x.grad().unwrap();
        assert_eq!(g[0], 0.0);
        assert!((g[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn l1_loss_value() {
        let a = Tensor::<f64>::new(&[4], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let b = Tensor::<f64>::new(&[4], vec![0.5, 0.5, 2.5, 2.5]).unwrap();
        assert_eq!(l1_loss(&a, &b).unwrap().item(), 0.5);
    }
}
