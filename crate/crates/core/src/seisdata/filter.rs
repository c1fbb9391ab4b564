use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::{Result, SeisError, SeismicPatch};

fn rising(f: f64, edge: f64, width: f64) -> f64 {
    if width <= 0.0 {
        return if f >= edge { 1.0 } else { 0.0 };
    }
    let a = edge - width / 2.0;
    if f <= a {
        0.0
    } else if f >= a + width {
        1.0
    } else {
        0.5 * (1.0 - (std::f64::consts::PI * (f - a) / width).cos())
    }
}

/// Gain of the `[lo, hi]` pass band at `f ≥ 0` with raised-cosine edges of
/// `taper` Hz centred on each cutoff. A lower cutoff of 0 passes DC untapered.
pub fn band_gain(f: f64, [lo, hi]: [f64; 2], taper: f64) -> f64 {
    let up = if lo <= 0.0 { 1.0 } else { rising(f, lo, taper) };
    up * (1.0 - rising(f, hi, taper))
}

fn filter_traces(patch: &SeismicPatch, band: [f64; 2], taper: f64) -> SeismicPatch {
    let n = patch.t;
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let gains: Vec<f64> = (0..n)
        .map(|k| {
            let kk = k.min(n - k);
            band_gain(kk as f64 / (n as f64 * patch.dt), band, taper)
        })
        .collect();
    let mut out = vec![0.0f32; patch.data.len()];
    let mut buf = vec![Complex64::default(); n];
    for j in 0..patch.s {
        for i in 0..n {
            buf[i] = Complex64::new(patch.at(i, j) as f64, 0.0);
        }
        fwd.process(&mut buf);
        buf.iter_mut().zip(&gains).for_each(|(c, g)| *c *= g);
        inv.process(&mut buf);
        for i in 0..n {
            out[i * patch.s + j] = (buf[i].re / n as f64) as f32;
        }
    }
    SeismicPatch {
        data: out,
        ..patch.clone()
    }
}

/// Zero-phase per-trace filtering into the `input_band` and `label_band` parts.
///
/// Gains are real and symmetric in frequency so both outputs stay real.
pub fn bandpass_split(
    patch: &SeismicPatch,
    input_band: [f64; 2],
    label_band: [f64; 2],
    taper: f64,
) -> Result<(SeismicPatch, SeismicPatch)> {
    let nyquist = 0.5 / patch.dt;
    for (name, [a, b]) in [("input", input_band), ("label", label_band)] {
        if !(a >= 0.0 && a < b) {
            return Err(SeisError::Param(format!("{name} band [{a}, {b}] must be ordered")));
        }
        if b > nyquist {
            return Err(SeisError::Param(format!("{name} band edge {b} Hz beyond Nyquist {nyquist} Hz")));
        }
    }
    Ok((filter_traces(patch, input_band, taper), filter_traces(patch, label_band, taper)))
}
