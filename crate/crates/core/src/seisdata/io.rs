use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetSpec, Result, SeisError, SeismicPatch, Task};

const MAGIC: &[u8; 4] = b"SEIS";
const VERSION: u32 = 1;

/// One `(target, degraded)` pair and its trace mask (1 = observed).
#[derive(Debug, Clone, PartialEq)]
pub struct PatchPair {
    pub target: Vec<f32>,
    pub degraded: Vec<f32>,
    pub mask: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeisFile {
    pub t: usize,
    pub s: usize,
    pub dt: f64,
    pub dx: f64,
    pub task: Task,
    pub patches: Vec<PatchPair>,
}

impl SeisFile {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn target_patch(&self, i: usize) -> SeismicPatch {
        SeismicPatch {
            t: self.t,
            s: self.s,
            dt: self.dt,
            dx: self.dx,
            data: self.patches[i].target.clone(),
        }
    }

    pub fn degraded_patch(&self, i: usize) -> SeismicPatch {
        SeismicPatch {
            data: self.patches[i].degraded.clone(),
            ..self.target_patch(i)
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SeisError + '_ {
    move |source| SeisError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Little-endian `SEIS` v1 file.
pub fn write_seis(path: &Path, file: &SeisFile) -> Result<()> {
    let n = file.t * file.s;
    for (i, p) in file.patches.iter().enumerate() {
        if p.target.len() != n || p.degraded.len() != n || p.mask.len() != file.s {
            return Err(SeisError::Format(format!("patch {i} does not match {}x{}", file.t, file.s)));
        }
    }
    let f = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    let mut put = |bytes: &[u8]| w.write_all(bytes);
    (|| -> std::io::Result<()> {
        put(MAGIC)?;
        put(&VERSION.to_le_bytes())?;
        put(&(file.patches.len() as u64).to_le_bytes())?;
        put(&(file.t as u32).to_le_bytes())?;
        put(&(file.s as u32).to_le_bytes())?;
        put(&file.dt.to_le_bytes())?;
        put(&file.dx.to_le_bytes())?;
        put(&[file.task.tag()])?;
        for p in &file.patches {
            for v in p.target.iter().chain(&p.degraded) {
                put(&v.to_le_bytes())?;
            }
            put(&p.mask)?;
        }
        Ok(())
    })()
    .map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(e) => {
                let out = &self.bytes[self.pos..e];
                self.pos = e;
                Ok(out)
            }
            None => Err(SeisError::Format(format!("truncated while reading {what} at byte {}", self.pos))),
        }
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }
}

pub fn read_seis(path: &Path) -> Result<SeisFile> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    if &c.array::<4>("magic")? != MAGIC {
        return Err(SeisError::Format("bad magic, expected SEIS".into()));
    }
    let version = u32::from_le_bytes(c.array("version")?);
    if version != VERSION {
        return Err(SeisError::Format(format!("unsupported version {version}")));
    }
    let count = u64::from_le_bytes(c.array("patch count")?) as usize;
    let t = u32::from_le_bytes(c.array("T")?) as usize;
    let s = u32::from_le_bytes(c.array("S")?) as usize;
    let dt = f64::from_le_bytes(c.array("dt")?);
    let dx = f64::from_le_bytes(c.array("dx")?);
    let tag = c.array::<1>("task tag")?[0];
    let task = Task::from_tag(tag).ok_or_else(|| SeisError::Format(format!("unknown task tag {tag}")))?;
    let n = t * s;
    let floats = |raw: &[u8]| -> Vec<f32> { raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect() };
    let mut patches = Vec::with_capacity(count.min(1 << 20));
    for i in 0..count {
        let target = floats(c.take(4 * n, &format!("patch {i} target"))?);
        let degraded = floats(c.take(4 * n, &format!("patch {i} degraded"))?);
        let mask = c.take(s, &format!("patch {i} mask"))?.to_vec();
        patches.push(PatchPair { target, degraded, mask });
    }
    if c.pos != bytes.len() {
        return Err(SeisError::Format(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    Ok(SeisFile {
        t,
        s,
        dt,
        dx,
        task,
        patches,
    })
}

/// JSON written next to the split files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub dataset: DatasetSpec,
    /// Patch counts of train, val and test.
    pub splits: [usize; 3],
}

pub fn write_sidecar(path: &Path, sidecar: &Sidecar) -> Result<()> {
    let text = serde_json::to_string_pretty(sidecar).map_err(|e| SeisError::Format(e.to_string()))?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

pub fn read_sidecar(path: &Path) -> Result<Sidecar> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| SeisError::Format(format!("{}: {e}", path.display())))
}
