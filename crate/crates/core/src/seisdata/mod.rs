//! Synthetic shot gathers, degradation regimes and the SEIS dataset format.

mod dataset;
mod filter;
mod io;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dataset::{build_dataset, regenerate_degraded, DatasetSpec, DatasetSummary, SPLITS};
pub use filter::{bandpass_split, band_gain};
pub use io::{read_seis, read_sidecar, write_seis, write_sidecar, PatchPair, SeisFile, Sidecar};

#[derive(Debug, Error)]
pub enum SeisError {
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("no event landed inside the time window after {0} attempts")]
    Retries(usize),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed SEIS file: {0}")]
    Format(String),
}

pub type Result<T, E = SeisError> = std::result::Result<T, E>;

/// Minimum patch size along either axis.
pub const MIN_DIM: usize = 8;

/// A `[t × s]` gather, time major.
#[derive(Debug, Clone, PartialEq)]
pub struct SeismicPatch {
    pub t: usize,
    pub s: usize,
    /// Seconds per sample.
    pub dt: f64,
    /// Meters per trace.
    pub dx: f64,
    pub data: Vec<f32>,
}

impl SeismicPatch {
    pub fn new(t: usize, s: usize, dt: f64, dx: f64, data: Vec<f32>) -> Result<Self> {
        if t < MIN_DIM || s < MIN_DIM {
            return Err(SeisError::Param(format!("patch {t}x{s} below the {MIN_DIM}x{MIN_DIM} minimum")));
        }
        if data.len() != t * s {
            return Err(SeisError::Param(format!("{} values for a {t}x{s} patch", data.len())));
        }
        if !(dt > 0.0 && dx > 0.0) {
            return Err(SeisError::Param(format!("dt = {dt}, dx = {dx} must be positive")));
        }
        Ok(Self { t, s, dt, dx, data })
    }

    pub fn at(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.s + j]
    }

    pub fn trace(&self, j: usize) -> Vec<f64> {
        (0..self.t).map(|i| self.at(i, j) as f64).collect()
    }

    fn with_data(&self, data: Vec<f32>) -> Self {
        Self { data, ..self.clone() }
    }
}

/// Degradation regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    InterpolationRandom,
    InterpolationRegular,
    Denoise,
    Lfe,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::InterpolationRandom, Task::InterpolationRegular, Task::Denoise, Task::Lfe];

    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(tag as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::InterpolationRandom => "interpolation_random",
            Task::InterpolationRegular => "interpolation_regular",
            Task::Denoise => "denoise",
            Task::Lfe => "lfe",
        }
    }

    pub fn is_interpolation(self) -> bool {
        matches!(self, Task::InterpolationRandom | Task::InterpolationRegular)
    }
}

impl std::str::FromStr for Task {
    type Err = SeisError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| SeisError::Param(format!("unknown task {s:?}")))
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DegradationSpec {
    pub task: Task,
    pub missing_fraction_range: [f64; 2],
    pub noise_sigma: f64,
    /// Hz, kept in the network input for `lfe`.
    pub input_band: [f64; 2],
    /// Hz, the `lfe` label.
    pub label_band: [f64; 2],
    /// Raised-cosine edge width in Hz.
    pub taper: f64,
    pub seed: u64,
}

impl Default for DegradationSpec {
    fn default() -> Self {
        Self {
            task: Task::InterpolationRandom,
            missing_fraction_range: [0.3, 0.7],
            noise_sigma: 0.1,
            input_band: [5.0, 10.0],
            label_band: [0.0, 5.0],
            taper: 1.0,
            seed: 0,
        }
    }
}

impl DegradationSpec {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.missing_fraction_range;
        if !(lo > 0.0 && lo <= hi && hi < 1.0) {
            return Err(SeisError::Param(format!("missing_fraction_range [{lo}, {hi}] must be ordered inside (0, 1)")));
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return Err(SeisError::Param(format!("noise_sigma = {} must be positive", self.noise_sigma)));
        }
        for (name, [a, b]) in [("input_band", self.input_band), ("label_band", self.label_band)] {
            if !(a >= 0.0 && a < b && b.is_finite()) {
                return Err(SeisError::Param(format!("{name} [{a}, {b}] must be ordered and non-negative")));
            }
        }
        if !(self.taper >= 0.0 && self.taper.is_finite()) {
            return Err(SeisError::Param(format!("taper = {} must be non-negative", self.taper)));
        }
        Ok(())
    }
}

/// `(1 − 2π²f0²t²)·exp(−π²f0²t²)` on `t = −half_width..=half_width` in steps of `dt`.
pub fn ricker(f0: f64, dt: f64, half_width: f64) -> Result<Vec<f64>> {
    if !(f0 > 0.0 && dt > 0.0) {
        return Err(SeisError::Param(format!("ricker needs f0 > 0 and dt > 0, got {f0}, {dt}")));
    }
    if half_width < 2.0 / f0 - 1e-12 {
        return Err(SeisError::Param(format!("half_width {half_width} shorter than 2/f0 = {}", 2.0 / f0)));
    }
    let n = (half_width / dt).round() as i64;
    Ok((-n..=n).map(|i| ricker_at(f0, i as f64 * dt)).collect())
}

fn ricker_at(f0: f64, t: f64) -> f64 {
    let a = (PI * f0 * t).powi(2);
    (1.0 - 2.0 * a) * (-a).exp()
}

/// Gather geometry and event distribution for [`synth_gather`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GatherSpec {
    pub t: usize,
    pub s: usize,
    pub dt: f64,
    pub dx: f64,
    pub n_events: usize,
    /// m/s
    pub velocity: [f64; 2],
    /// Ricker peak frequency range in Hz.
    pub f0: [f64; 2],
}

impl Default for GatherSpec {
    fn default() -> Self {
        Self {
            t: 64,
            s: 64,
            dt: 0.004,
            dx: 25.0,
            n_events: 4,
            velocity: [1500.0, 4500.0],
            f0: [15.0, 30.0],
        }
    }
}

/// One hyperbolic reflection `t(x) = √(t0² + (x/v)²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub t0: f64,
    pub velocity: f64,
    pub amplitude: f64,
    pub f0: f64,
}

const MAX_RETRIES: usize = 100;

fn draw(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Sum of Ricker-convolved hyperbolas, peak-normalized to 1.
pub fn synth_gather(spec: &GatherSpec, seed: u64) -> Result<(SeismicPatch, Vec<Event>)> {
    if spec.n_events == 0 {
        return Err(SeisError::Param("n_events must be at least 1".into()));
    }
    if !(spec.velocity[0] > 0.0 && spec.velocity[0] <= spec.velocity[1]) {
        return Err(SeisError::Param(format!("velocity range {:?} invalid", spec.velocity)));
    }
    if !(spec.f0[0] > 0.0 && spec.f0[0] <= spec.f0[1]) {
        return Err(SeisError::Param(format!("f0 range {:?} invalid", spec.f0)));
    }
    let empty = SeismicPatch::new(spec.t, spec.s, spec.dt, spec.dx, vec![0.0; spec.t * spec.s])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let window = spec.t as f64 * spec.dt;
    let mut acc = vec![0.0f64; spec.t * spec.s];
    let mut events = Vec::with_capacity(spec.n_events);
    for _ in 0..spec.n_events {
        let mut tries = 0;
        let ev = loop {
            if tries == MAX_RETRIES {
                return Err(SeisError::Retries(MAX_RETRIES));
            }
            tries += 1;
            let ev = Event {
                t0: rng.random_range(0.0..1.25 * window),
                velocity: draw(&mut rng, spec.velocity),
                amplitude: rng.random_range(0.3..1.0),
                f0: draw(&mut rng, spec.f0),
            };
            let reach = 2.0 / ev.f0;
            if (0..spec.s).any(|j| event_time(&ev, j, spec.dx) < window + reach) {
                break ev;
            }
        };
        add_event(&mut acc, spec, &ev);
        events.push(ev);
    }
    let peak = acc.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        acc.iter_mut().for_each(|v| *v /= peak);
    }
    Ok((empty.with_data(acc.iter().map(|&v| v as f32).collect()), events))
}

fn event_time(ev: &Event, trace: usize, dx: f64) -> f64 {
    let x = trace as f64 * dx / ev.velocity;
    (ev.t0 * ev.t0 + x * x).sqrt()
}

fn add_event(acc: &mut [f64], spec: &GatherSpec, ev: &Event) {
    let reach = 2.0 / ev.f0;
    for j in 0..spec.s {
        let tj = event_time(ev, j, spec.dx);
        let lo = ((tj - reach) / spec.dt).floor().max(0.0) as usize;
        let hi = (((tj + reach) / spec.dt).ceil() as usize).min(spec.t.saturating_sub(1));
        for i in lo..=hi {
            acc[i * spec.s + j] += ev.amplitude * ricker_at(ev.f0, i as f64 * spec.dt - tj);
        }
    }
}

fn apply_mask(patch: &SeismicPatch, mask: &[u8]) -> SeismicPatch {
    let mut data = patch.data.clone();
    for row in data.chunks_mut(patch.s) {
        for (v, &m) in row.iter_mut().zip(mask) {
            if m == 0 {
                *v = 0.0;
            }
        }
    }
    patch.with_data(data)
}

/// Zeroes `round(fraction·S)` distinct random traces; mask 1 = kept.
pub fn degrade_mask_random(patch: &SeismicPatch, fraction: f64, seed: u64) -> Result<(SeismicPatch, Vec<u8>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(SeisError::Param(format!("missing fraction {fraction} outside [0, 1)")));
    }
    let drop = (fraction * patch.s as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = vec![1u8; patch.s];
    for j in rand::seq::index::sample(&mut rng, patch.s, drop) {
        mask[j] = 0;
    }
    Ok((apply_mask(patch, &mask), mask))
}

/// Zeroes every trace with index ≡ 2 (mod 3).
pub fn degrade_mask_regular(patch: &SeismicPatch) -> Result<(SeismicPatch, Vec<u8>)> {
    if patch.s < 3 {
        return Err(SeisError::Param("regular decimation needs at least 3 traces".into()));
    }
    let mask: Vec<u8> = (0..patch.s).map(|j| u8::from(j % 3 != 2)).collect();
    Ok((apply_mask(patch, &mask), mask))
}

/// Re-applies a stored mask.
pub fn mask_patch(patch: &SeismicPatch, mask: &[u8]) -> SeismicPatch {
    apply_mask(patch, mask)
}

/// Adds i.i.d. `N(0, σ²)` noise.
pub fn degrade_noise(patch: &SeismicPatch, sigma: f64, seed: u64) -> Result<SeismicPatch> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(SeisError::Param(format!("sigma = {sigma} must be non-negative")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).map_err(|e| SeisError::Param(e.to_string()))?;
    let data = patch
        .data
        .iter()
        .map(|&v| (v as f64 + normal.sample(&mut rng)) as f32)
        .collect();
    Ok(patch.with_data(data))
}

/// `10·log10(signal power / noise power)` for a clean patch and its noisy copy.
pub fn snr_db(clean: &SeismicPatch, noisy: &SeismicPatch) -> f64 {
    let ps: f64 = clean.data.iter().map(|v| (*v as f64).powi(2)).sum();
    let pn: f64 = clean
        .data
        .iter()
        .zip(&noisy.data)
        .map(|(a, b)| (*b as f64 - *a as f64).powi(2))
        .sum();
    10.0 * (ps / pn).log10()
}

#[cfg(test)]
mod tests;
