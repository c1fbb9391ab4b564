use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    bandpass_split, degrade_mask_random, degrade_mask_regular, degrade_noise, mask_patch, synth_gather, write_seis,
    write_sidecar, DegradationSpec, GatherSpec, PatchPair, Result, SeisError, SeisFile, SeismicPatch, Sidecar, Task,
};
use crate::models::derive_seed;

/// Split names, in file order.
pub const SPLITS: [&str; 3] = ["train", "val", "test"];

/// Everything needed to regenerate a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub degradation: DegradationSpec,
    pub gather: GatherSpec,
    pub n_patches: usize,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self::for_task(Task::InterpolationRandom, 100, 64, 64, 0)
    }
}

impl DatasetSpec {
    /// Task defaults: `lfe` uses a 7 Hz Ricker, the others 15 to 30 Hz.
    pub fn for_task(task: Task, n_patches: usize, height: usize, width: usize, seed: u64) -> Self {
        let f0 = if task == Task::Lfe { [7.0, 7.0] } else { [15.0, 30.0] };
        Self {
            degradation: DegradationSpec {
                task,
                seed,
                ..Default::default()
            },
            gather: GatherSpec {
                t: height,
                s: width,
                f0,
                ..Default::default()
            },
            n_patches,
        }
    }

    /// `(train, val, test)` with val and test each `⌊n/10⌋`.
    pub fn split_counts(&self) -> [usize; 3] {
        let tenth = self.n_patches / 10;
        [self.n_patches - 2 * tenth, tenth, tenth]
    }

    pub fn validate(&self) -> Result<()> {
        self.degradation.validate()?;
        if self.n_patches < 10 {
            return Err(SeisError::Param(format!("n_patches = {} below 10", self.n_patches)));
        }
        SeismicPatch::new(self.gather.t, self.gather.s, self.gather.dt, self.gather.dx, vec![0.0; self.gather.t * self.gather.s])?;
        if self.degradation.task == Task::Lfe {
            let nyq = 0.5 / self.gather.dt;
            if self.degradation.input_band[1] > nyq || self.degradation.label_band[1] > nyq {
                return Err(SeisError::Param(format!("filter bands exceed Nyquist {nyq} Hz")));
            }
        }
        Ok(())
    }

    /// Generates patch `index` deterministically.
    /// Patches `range` held in memory, without touching disk.
    pub fn make_file(&self, range: std::ops::Range<usize>) -> Result<SeisFile> {
        self.validate()?;
        Ok(SeisFile {
            t: self.gather.t,
            s: self.gather.s,
            dt: self.gather.dt,
            dx: self.gather.dx,
            task: self.degradation.task,
            patches: range.into_par_iter().map(|i| self.make_pair(i)).collect::<Result<_>>()?,
        })
    }

    pub fn make_pair(&self, index: usize) -> Result<PatchPair> {
        let d = &self.degradation;
        let (clean, _) = synth_gather(&self.gather, derive_seed(d.seed, "gather", index as u64))?;
        let dseed = derive_seed(d.seed, "degrade", index as u64);
        let ones = vec![1u8; clean.s];
        let (target, degraded, mask) = match d.task {
            Task::InterpolationRandom => {
                let mut rng = ChaCha8Rng::seed_from_u64(dseed);
                let [lo, hi] = d.missing_fraction_range;
                let frac = if hi > lo { rng.random_range(lo..=hi) } else { lo };
                let (deg, mask) = degrade_mask_random(&clean, frac, rng.random())?;
                (clean, deg, mask)
            }
            Task::InterpolationRegular => {
                let (deg, mask) = degrade_mask_regular(&clean)?;
                (clean, deg, mask)
            }
            Task::Denoise => {
                let deg = degrade_noise(&clean, d.noise_sigma, dseed)?;
                (clean, deg, ones)
            }
            Task::Lfe => {
                let (input, label) = bandpass_split(&clean, d.input_band, d.label_band, d.taper)?;
                (label, input, ones)
            }
        };
        Ok(PatchPair {
            target: target.data,
            degraded: degraded.data,
            mask,
        })
    }
}

/// Degraded patch implied by a stored target and mask (interpolation tasks).
pub fn regenerate_degraded(file: &SeisFile, index: usize) -> Option<Vec<f32>> {
    file.task
        .is_interpolation()
        .then(|| mask_patch(&file.target_patch(index), &file.patches[index].mask).data)
}

#[derive(Debug, Clone)]
pub struct DatasetSummary {
    pub files: [PathBuf; 3],
    pub sidecar: PathBuf,
    pub counts: [usize; 3],
    pub bytes: [u64; 3],
}

/// Writes `train.seis`, `val.seis`, `test.seis` and `dataset.json` into `out_dir`.
pub fn build_dataset(spec: &DatasetSpec, out_dir: &Path) -> Result<DatasetSummary> {
    spec.validate()?;
    fs::create_dir_all(out_dir).map_err(|source| SeisError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let pairs = (0..spec.n_patches)
        .into_par_iter()
        .map(|i| spec.make_pair(i))
        .collect::<Result<Vec<_>>>()?;
    let counts = spec.split_counts();
    let mut rest = pairs.into_iter();
    let mut files: [PathBuf; 3] = Default::default();
    let mut bytes = [0u64; 3];
    for (k, name) in SPLITS.iter().enumerate() {
        let file = SeisFile {
            t: spec.gather.t,
            s: spec.gather.s,
            dt: spec.gather.dt,
            dx: spec.gather.dx,
            task: spec.degradation.task,
            patches: rest.by_ref().take(counts[k]).collect(),
        };
        let path = out_dir.join(format!("{name}.seis"));
        write_seis(&path, &file)?;
        bytes[k] = fs::metadata(&path).map(|m| m.len()).unwrap_or(0);
        files[k] = path;
    }
    let sidecar = out_dir.join("dataset.json");
    write_sidecar(
        &sidecar,
        &Sidecar {
            dataset: spec.clone(),
            splits: counts,
        },
    )?;
    Ok(DatasetSummary {
        files,
        sidecar,
        counts,
        bytes,
    })
}
