//! DFVF feature files.
//!
//! ```text
//! "DFVF" | u32 version | u32 n | u32 D | u32 meta_len | meta (UTF-8 JSON)
//! n x ( u32 id_len | id (UTF-8) | u32 L | L x u32 label | D x f32 value )
//! ```
//!
//! All integers and floats are little-endian. The metadata carries the
//! effective pipeline configuration.

use std::io::{Read, Write};
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use dsp_core::{ClassId, Dataset};

use crate::output::write_atomic;

pub const FEATURE_MAGIC: &[u8; 4] = b"DFVF";
pub const FEATURE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub id: String,
    pub labels: Vec<ClassId>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    pub dim: usize,
    pub meta: serde_json::Value,
    pub records: Vec<FeatureRecord>,
}

fn u32_len(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).with_context(|| format!("{what} {n} does not fit the file format"))
}

impl FeatureFile {
    pub fn new(dim: usize, meta: serde_json::Value, records: Vec<FeatureRecord>) -> Result<Self> {
        for r in &records {
            ensure!(
                r.values.len() == dim,
                "record {:?} has {} values, expected {dim}",
                r.id,
                r.values.len()
            );
        }
        Ok(Self { dim, meta, records })
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let meta = serde_json::to_vec(&self.meta)?;
        out.write_all(FEATURE_MAGIC)?;
        out.write_u32::<LE>(FEATURE_VERSION)?;
        out.write_u32::<LE>(u32_len(self.records.len(), "record count")?)?;
        out.write_u32::<LE>(u32_len(self.dim, "dimension")?)?;
        out.write_u32::<LE>(u32_len(meta.len(), "metadata length")?)?;
        out.write_all(&meta)?;
        for r in &self.records {
            out.write_u32::<LE>(u32_len(r.id.len(), "id length")?)?;
            out.write_all(r.id.as_bytes())?;
            out.write_u32::<LE>(u32_len(r.labels.len(), "label count")?)?;
            for &l in &r.labels {
                out.write_u32::<LE>(l)?;
            }
            for &v in &r.values {
                out.write_f32::<LE>(v as f32)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic).context("truncated header")?;
        ensure!(&magic == FEATURE_MAGIC, "not a feature file (magic {magic:?})");
        let version = input.read_u32::<LE>().context("truncated header")?;
        ensure!(version == FEATURE_VERSION, "unsupported feature file version {version}");
        let n = input.read_u32::<LE>().context("truncated header")? as usize;
        let dim = input.read_u32::<LE>().context("truncated header")? as usize;
        let meta_len = input.read_u32::<LE>().context("truncated header")? as usize;
        let mut meta = vec![0u8; meta_len];
        input.read_exact(&mut meta).context("truncated metadata")?;
        let meta: serde_json::Value = serde_json::from_slice(&meta).context("metadata is not JSON")?;

        let mut records = Vec::with_capacity(n.min(1 << 16));
        for i in 0..n {
            let truncated = || format!("truncated at record {i} of {n}");
            let id_len = input.read_u32::<LE>().with_context(truncated)? as usize;
            let mut id = vec![0u8; id_len];
            input.read_exact(&mut id).with_context(truncated)?;
            let id = String::from_utf8(id).with_context(|| format!("record {i}: id is not UTF-8"))?;
            let count = input.read_u32::<LE>().with_context(truncated)? as usize;
            let labels = (0..count)
                .map(|_| input.read_u32::<LE>())
                .collect::<std::io::Result<Vec<_>>>()
                .with_context(truncated)?;
            let mut raw = vec![0f32; dim];
            input.read_f32_into::<LE>(&mut raw).with_context(truncated)?;
            let values: Vec<f64> = raw.into_iter().map(f64::from).collect();
            ensure!(values.iter().all(|v| v.is_finite()), "record {i}: non-finite value");
            records.push(FeatureRecord { id, labels, values });
        }
        let mut rest = [0u8; 1];
        if input.read(&mut rest)? != 0 {
            bail!("trailing bytes after {n} records");
        }
        Ok(Self { dim, meta, records })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        Self::read_from(std::io::BufReader::new(file)).with_context(|| format!("reading features {}", path.display()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, |w| self.write_to(w))
    }

    /// The records as a classifier dataset.
    pub fn dataset(&self) -> Result<Dataset> {
        ensure!(!self.records.is_empty(), "feature file has no records");
        for r in &self.records {
            ensure!(!r.labels.is_empty(), "record {:?} has no label", r.id);
        }
        let features = self.records.iter().map(|r| r.values.clone()).collect();
        let labels = self.records.iter().map(|r| r.labels.clone()).collect();
        Ok(Dataset::new(features, labels)?)
    }
}
