use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

fn fft(data: &mut [Complex64]) {
    FftPlanner::<f64>::new().plan_fft_forward(data.len()).process(data);
}

/// Frequencies `k/(N·dt)` and DFT magnitudes for `k = 0..=N/2`.
pub fn amplitude_spectrum(trace: &[f64], dt: f64) -> (Vec<f64>, Vec<f64>) {
    let n = trace.len();
    let mut buf: Vec<Complex64> = trace.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    if n > 0 {
        fft(&mut buf);
    }
    let half = n / 2 + usize::from(n > 0);
    let freqs = (0..half).map(|k| k as f64 / (n as f64 * dt)).collect();
    let mags = buf[..half].iter().map(|c| c.norm()).collect();
    (freqs, mags)
}

/// `Σ |X_k|²` over non-negative frequency bins inside `[lo, hi]` Hz.
pub fn band_energy(trace: &[f64], dt: f64, lo: f64, hi: f64) -> f64 {
    let (f, m) = amplitude_spectrum(trace, dt);
    f.iter().zip(&m).filter(|(f, _)| **f >= lo && **f <= hi).map(|(_, m)| m * m).sum()
}

/// [`band_energy`] summed over every trace of a `[t, s]` time-major patch.
pub fn patch_band_energy<V: Copy + Into<f64>>(patch: &[V], t: usize, s: usize, dt: f64, lo: f64, hi: f64) -> f64 {
    assert_eq!(patch.len(), t * s, "patch length");
    (0..s)
        .map(|j| {
            let tr: Vec<f64> = (0..t).map(|i| patch[i * s + j].into()).collect();
            band_energy(&tr, dt, lo, hi)
        })
        .sum()
}

/// Frequency-wavenumber magnitude in dB relative to the panel maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct FkSpectrum {
    /// Non-negative temporal frequencies in Hz (rows).
    pub frequencies: Vec<f64>,
    /// Wavenumbers in cycles per meter, ascending from `−1/(2dx)` (columns).
    pub wavenumbers: Vec<f64>,
    /// Row-major `[frequencies × wavenumbers]`, floored at `-200` dB.
    pub magnitude_db: Vec<f64>,
}

/// 2-D DFT magnitude of a `[t, s]` row-major patch (time major).
pub fn fk_spectrum(patch: &[f64], t: usize, s: usize, dt: f64, dx: f64) -> FkSpectrum {
    assert_eq!(patch.len(), t * s, "patch length");
    let mut grid: Vec<Complex64> = patch.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut planner = FftPlanner::<f64>::new();
    let ft = planner.plan_fft_forward(t);
    let fx = planner.plan_fft_forward(s);
    let mut col = vec![Complex64::default(); t];
    for j in 0..s {
        for i in 0..t {
            col[i] = grid[i * s + j];
        }
        ft.process(&mut col);
        for i in 0..t {
            grid[i * s + j] = col[i];
        }
    }
    for row in grid.chunks_mut(s) {
        fx.process(row);
    }
    let nf = t / 2 + 1;
    let shift = s / 2;
    let mut mag = vec![0.0; nf * s];
    for i in 0..nf {
        for j in 0..s {
            mag[i * s + (j + shift) % s] = grid[i * s + j].norm();
        }
    }
    let peak = mag.iter().cloned().fold(0.0, f64::max);
    let magnitude_db = mag
        .iter()
        .map(|&m| if peak > 0.0 && m > 0.0 { (20.0 * (m / peak).log10()).max(-200.0) } else { -200.0 })
        .collect();
    FkSpectrum {
        frequencies: (0..nf).map(|i| i as f64 / (t as f64 * dt)).collect(),
        wavenumbers: (0..s).map(|j| (j as f64 - shift as f64) / (s as f64 * dx)).collect(),
        magnitude_db,
    }
}
