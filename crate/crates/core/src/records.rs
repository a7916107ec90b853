//! Flat record files and content hashes.
//!
//! A record file is one line of JSON ([`RecordHeader`]) followed by `count`
//! records of `dims` little-endian `f32` values each, with nothing in between.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::sim::{DepthImage, Observation};
use crate::{Error, Result};

pub const RECORD_FORMAT: &str = "uavxai-records";
pub const RECORD_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_f64s(values: impl IntoIterator<Item = f64>) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

pub fn hash_f32s(values: impl IntoIterator<Item = f32>) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

pub fn hash_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordHeader {
    pub format: String,
    pub version: u32,
    /// What each record is, e.g. `observation`, `attribution-full`.
    pub kind: String,
    /// Shape of one record.
    pub dims: Vec<usize>,
    pub count: usize,
    #[serde(default)]
    pub model_hash: Option<String>,
    #[serde(default)]
    pub background_hash: Option<String>,
    /// Explained output, e.g. `yaw`.
    #[serde(default)]
    pub head: Option<String>,
    /// `[frames, height, width]` of the depth stack inside observation records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stack: Option<Vec<usize>>,
}

impl RecordHeader {
    pub fn new(kind: &str, dims: &[usize], count: usize) -> Self {
        Self {
            format: RECORD_FORMAT.into(),
            version: RECORD_VERSION,
            kind: kind.into(),
            dims: dims.to_vec(),
            count,
            model_hash: None,
            background_hash: None,
            head: None,
            stack: None,
        }
    }

    pub fn record_len(&self) -> usize {
        self.dims.iter().product()
    }
}

pub fn write_records(path: &Path, header: &RecordHeader, data: &[f32]) -> Result<()> {
    if data.len() != header.count * header.record_len() {
        return Err(Error::Record(format!(
            "{} values do not make {} records of {:?}",
            data.len(),
            header.count,
            header.dims
        )));
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut out, header)?;
    out.write_all(b"\n")?;
    for v in data {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<(RecordHeader, Vec<f32>)> {
    let mut input = BufReader::new(std::fs::File::open(path)?);
    let mut line = String::new();
    input.read_line(&mut line)?;
    let header: RecordHeader = serde_json::from_str(line.trim_end())?;
    if header.format != RECORD_FORMAT || header.version != RECORD_VERSION {
        return Err(Error::Record(format!(
            "{}: unsupported format {} v{}",
            path.display(),
            header.format,
            header.version
        )));
    }
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let want = header.count * header.record_len() * 4;
    if bytes.len() != want {
        return Err(Error::Record(format!(
            "{}: expected {want} payload bytes, found {}",
            path.display(),
            bytes.len()
        )));
    }
    let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    Ok((header, data))
}

/// Observations as records: the depth stack, then bearing and distance.
pub fn write_observations(path: &Path, obs: &[Observation], model_hash: Option<String>) -> Result<()> {
    let first = obs.first().ok_or_else(|| Error::EmptyDataset("observations".into()))?;
    let f = first.newest();
    let shape = vec![first.frames.len(), f.height, f.width];
    let len = shape.iter().product::<usize>() + 2;
    let mut data = Vec::with_capacity(obs.len() * len);
    for o in obs {
        let stack = o.stack();
        if stack.len() + 2 != len {
            return Err(Error::Record("observations of mixed shape".into()));
        }
        data.extend(stack);
        data.push(o.bearing as f32);
        data.push(o.distance as f32);
    }
    let mut header = RecordHeader::new("observation", &[len], obs.len());
    header.model_hash = model_hash;
    header.stack = Some(shape);
    write_records(path, &header, &data)
}

pub fn read_observations(path: &Path) -> Result<Vec<Observation>> {
    let (header, data) = read_records(path)?;
    let bad = || Error::Record(format!("{}: not an observation file", path.display()));
    let shape = header.stack.clone().filter(|s| s.len() == 3).ok_or_else(bad)?;
    if header.kind != "observation" || header.record_len() != shape.iter().product::<usize>() + 2 {
        return Err(bad());
    }
    let (frames, height, width) = (shape[0], shape[1], shape[2]);
    let n = height * width;
    Ok(data
        .chunks_exact(header.record_len())
        .map(|r| Observation {
            frames: (0..frames)
                .map(|i| {
                    std::sync::Arc::new(DepthImage {
                        width,
                        height,
                        data: r[i * n..(i + 1) * n].to_vec(),
                    })
                })
                .collect(),
            bearing: r[frames * n] as f64,
            distance: r[frames * n + 1] as f64,
        })
        .collect())
}
