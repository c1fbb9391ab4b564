use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{Result, TrainError};

const MAGIC: &[u8; 4] = b"QCKP";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum EntryData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl EntryData {
    pub fn len(&self) -> usize {
        match self {
            EntryData::F32(v) => v.len(),
            EntryData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn tag(&self) -> u8 {
        match self {
            EntryData::F32(_) => 0,
            EntryData::F64(_) => 1,
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            EntryData::F32(v) => v.iter().map(|x| *x as f64).collect(),
            EntryData::F64(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: EntryData,
}

/// JSON metadata plus named tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub entries: Vec<Entry>,
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Result<&Entry> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| TrainError::Checkpoint(format!("missing entry {name}")))
    }

    /// Entry `name` with exactly `shape`.
    pub fn expect(&self, name: &str, shape: &[usize]) -> Result<&Entry> {
        let e = self.get(name)?;
        if e.shape != shape {
            return Err(TrainError::Checkpoint(format!(
                "entry {name} has shape {:?}, model expects {shape:?}",
                e.shape
            )));
        }
        Ok(e)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let json = serde_json::to_vec(&ckpt.meta).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
    for e in &ckpt.entries {
        if e.shape.iter().product::<usize>() != e.data.len() {
            return Err(TrainError::Checkpoint(format!("entry {} shape/data mismatch", e.name)));
        }
        if e.name.len() > u16::MAX as usize || e.shape.len() > u8::MAX as usize {
            return Err(TrainError::Checkpoint(format!("entry {} cannot be encoded", e.name)));
        }
    }
    let tmp = path.with_extension("tmp");
    let f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    let mut w = BufWriter::new(f);
    (|| -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        w.write_all(&(ckpt.entries.len() as u32).to_le_bytes())?;
        for e in &ckpt.entries {
            w.write_all(&(e.name.len() as u16).to_le_bytes())?;
            w.write_all(e.name.as_bytes())?;
            w.write_all(&[e.shape.len() as u8])?;
            for d in &e.shape {
                w.write_all(&(*d as u64).to_le_bytes())?;
            }
            w.write_all(&[e.data.tag()])?;
            match &e.data {
                EntryData::F32(v) => v.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))?,
                EntryData::F64(v) => v.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))?,
            }
        }
        w.flush()
    })()
    .map_err(io_err(&tmp))?;
    drop(w);
    fs::rename(&tmp, path).map_err(io_err(path))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        match self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()) {
            Some(e) => {
                let out = &self.bytes[self.pos..e];
                self.pos = e;
                Ok(out)
            }
            None => Err(TrainError::Checkpoint(format!("truncated while reading {what}"))),
        }
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let mut r = Reader { bytes: &bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(TrainError::Checkpoint("bad magic, expected QCKP".into()));
    }
    let version = u32::from_le_bytes(r.take(4, "version")?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(TrainError::Checkpoint(format!("unsupported version {version}")));
    }
    let len = r.u64("config length")? as usize;
    let meta = serde_json::from_slice(r.take(len, "config")?)
        .map_err(|e| TrainError::Checkpoint(format!("config blob: {e}")))?;
    let count = u32::from_le_bytes(r.take(4, "entry count")?.try_into().expect("4 bytes")) as usize;
    let mut entries = Vec::with_capacity(count.min(1 << 16));
    for k in 0..count {
        let what = format!("entry #{k}");
        let n = u16::from_le_bytes(r.take(2, &what)?.try_into().expect("2 bytes")) as usize;
        let name = String::from_utf8(r.take(n, &what)?.to_vec())
            .map_err(|_| TrainError::Checkpoint(format!("{what} name is not UTF-8")))?;
        let rank = r.take(1, &name)?[0] as usize;
        let shape = (0..rank).map(|_| r.u64(&name).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let numel = shape.iter().try_fold(1usize, |a, d| a.checked_mul(*d));
        let numel = numel.ok_or_else(|| TrainError::Checkpoint(format!("entry {name} shape overflows")))?;
        let data = match r.take(1, &name)?[0] {
            0 => EntryData::F32(
                r.take(numel.saturating_mul(4), &format!("entry {name}"))?
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                    .collect(),
            ),
            1 => EntryData::F64(
                r.take(numel.saturating_mul(8), &format!("entry {name}"))?
                    .chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                    .collect(),
            ),
            t => return Err(TrainError::Checkpoint(format!("entry {name} has unknown dtype tag {t}"))),
        };
        entries.push(Entry { name, shape, data });
    }
    if r.pos != bytes.len() {
        return Err(TrainError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(Checkpoint { meta, entries })
}
