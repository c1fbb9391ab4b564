use std::io::Write;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("metric inputs differ in length: {0} vs {1}")]
    Length(usize, usize),
    #[error("metric inputs are empty")]
    Empty,
    #[error("reference has zero dynamic range")]
    Degenerate,
}

type Result<T> = std::result::Result<T, MetricError>;

fn pairs<'a, A: Copy + Into<f64>, B: Copy + Into<f64>>(y: &'a [A], yhat: &'a [B]) -> Result<impl Iterator<Item = (f64, f64)> + 'a> {
    if y.len() != yhat.len() {
        return Err(MetricError::Length(y.len(), yhat.len()));
    }
    if y.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(y.iter().zip(yhat).map(|(a, b)| ((*a).into(), (*b).into())))
}

pub fn mae<A: Copy + Into<f64>, B: Copy + Into<f64>>(y: &[A], yhat: &[B]) -> Result<f64> {
    let s: f64 = pairs(y, yhat)?.map(|(a, b)| (a - b).abs()).sum();
    Ok(s / y.len() as f64)
}

pub fn rmse<A: Copy + Into<f64>, B: Copy + Into<f64>>(y: &[A], yhat: &[B]) -> Result<f64> {
    let s: f64 = pairs(y, yhat)?.map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((s / y.len() as f64).sqrt())
}

fn max_abs<A: Copy + Into<f64>>(y: &[A]) -> f64 {
    y.iter().map(|v| (*v).into().abs()).fold(0.0, f64::max)
}

/// `20·log10(max|y| / RMSE)` in dB; `+∞` when the inputs are identical.
pub fn psnr<A: Copy + Into<f64>, B: Copy + Into<f64>>(y: &[A], yhat: &[B]) -> Result<f64> {
    let e = rmse(y, yhat)?;
    Ok(if e == 0.0 {
        f64::INFINITY
    } else {
        20.0 * (max_abs(y) / e).log10()
    })
}

/// Logarithm used by [`psnr_literal`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogBase {
    Ten,
    E,
}

impl LogBase {
    fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Ten => x.log10(),
            LogBase::E => x.ln(),
        }
    }

    fn exp(self, x: f64) -> f64 {
        match self {
            LogBase::Ten => 10f64.powf(x),
            LogBase::E => x.exp(),
        }
    }
}

/// `10·log(MAX / RMSE)` without squaring the ratio.
pub fn psnr_literal(max: f64, rmse: f64, base: LogBase) -> f64 {
    10.0 * base.log(max / rmse)
}

/// Peak amplitude that makes `factor·log(MAX / rmse)` equal `psnr_db`.
pub fn psnr_max_for(psnr_db: f64, rmse: f64, factor: f64, base: LogBase) -> f64 {
    rmse * base.exp(psnr_db / factor)
}

/// Single-window SSIM with `c1 = (0.01 L)²`, `c2 = (0.03 L)²`, `L = max y − min y`.
pub fn ssim<A: Copy + Into<f64>, B: Copy + Into<f64>>(y: &[A], yhat: &[B]) -> Result<f64> {
    let n = y.len() as f64;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sy, mut sh) = (0.0, 0.0);
    for (a, b) in pairs(y, yhat)? {
        lo = lo.min(a);
        hi = hi.max(a);
        sy += a;
        sh += b;
    }
    let range = hi - lo;
    if range <= 0.0 {
        return Err(MetricError::Degenerate);
    }
    let (my, mh) = (sy / n, sh / n);
    let (mut vy, mut vh, mut cov) = (0.0, 0.0, 0.0);
    for (a, b) in pairs(y, yhat)? {
        vy += (a - my) * (a - my);
        vh += (b - mh) * (b - mh);
        cov += (a - my) * (b - mh);
    }
    let (vy, vh, cov) = (vy / n, vh / n, cov / n);
    let c1 = (0.01 * range).powi(2);
    let c2 = (0.03 * range).powi(2);
    Ok(((2.0 * my * mh + c1) * (2.0 * cov + c2)) / ((my * my + mh * mh + c1) * (vy + vh + c2)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleMetrics {
    pub mae: f64,
    pub rmse: f64,
    pub psnr_db: f64,
    /// Clipped to `[0, 1]`.
    pub ssim: f64,
}

impl SampleMetrics {
    pub fn compute<A: Copy + Into<f64>, B: Copy + Into<f64>>(y: &[A], yhat: &[B]) -> Result<Self> {
        Ok(Self {
            mae: mae(y, yhat)?,
            rmse: rmse(y, yhat)?,
            psnr_db: psnr(y, yhat)?,
            ssim: ssim(y, yhat)?.clamp(0.0, 1.0),
        })
    }
}

/// Per-sample metrics and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub task: String,
    pub samples: Vec<SampleMetrics>,
}

impl EvalReport {
    pub fn new(task: impl Into<String>) -> Self {
        Self {
            task: task.into(),
            samples: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn aggregate(&self) -> Option<SampleMetrics> {
        if self.samples.is_empty() {
            return None;
        }
        let n = self.samples.len() as f64;
        let avg = |f: fn(&SampleMetrics) -> f64| self.samples.iter().map(f).sum::<f64>() / n;
        Some(SampleMetrics {
            mae: avg(|s| s.mae),
            rmse: avg(|s| s.rmse),
            psnr_db: avg(|s| s.psnr_db),
            ssim: avg(|s| s.ssim),
        })
    }

    /// `sample_id,mae,rmse,psnr_db,ssim`, one row per sample and a final `mean` row.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "sample_id,mae,rmse,psnr_db,ssim")?;
        let row = |w: &mut dyn Write, id: &str, m: &SampleMetrics| {
            writeln!(w, "{id},{:.8},{:.8},{},{:.8}", m.mae, m.rmse, fmt_db(m.psnr_db), m.ssim)
        };
        for (i, s) in self.samples.iter().enumerate() {
            row(&mut w, &i.to_string(), s)?;
        }
        if let Some(a) = self.aggregate() {
            row(&mut w, "mean", &a)?;
        }
        Ok(())
    }
}

fn fmt_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v:.6}")
    }
}
