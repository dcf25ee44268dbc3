//! Binary checkpoint container.
//!
//! ```text
//! offset  size  content
//! 0       8     magic "MTSICKPT"
//! 8       4     format version, u32 LE
//! 12      8     header length H, u64 LE
//! 20      H     UTF-8 JSON header (config, epoch, history, CRF seed, section list)
//! ...           sections, in header order, each:
//!                 u32 LE name length, name bytes,
//!                 u32 LE rank, rank × u64 LE dims,
//!                 prod(dims) × f64 LE values
//! end-32  32    SHA-256 of every preceding byte
//! ```

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EpochLog, TrainConfig};
use crate::error::{Error, Result};
use crate::model::{init_params, ModelParams};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 8] = *b"MTSICKPT";
pub const FORMAT_VERSION: u32 = 1;

/// Trained weights with the configuration and history that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub config: TrainConfig,
    pub params: ModelParams,
    /// Completed training epochs.
    pub epoch: usize,
    pub history: Vec<EpochLog>,
}

impl Checkpoint {
    pub fn new(config: TrainConfig, params: ModelParams, epoch: usize, history: Vec<EpochLog>) -> Self {
        Self {
            version: FORMAT_VERSION,
            config,
            params,
            epoch,
            history,
        }
    }

    /// SHA-256 over the weights, for checking that nothing modified them.
    pub fn weights_digest(&self) -> String {
        let mut h = Sha256::new();
        for t in self.params.weights.entries() {
            for v in t.data() {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SectionInfo {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    epoch: usize,
    history: Vec<EpochLog>,
    crf_seed: u64,
    sections: Vec<SectionInfo>,
}

fn sections(params: &ModelParams) -> Vec<(String, Tensor)> {
    let mut out: Vec<(String, Tensor)> =
        params.weights.named().into_iter().map(|(n, t)| (n, t.clone())).collect();
    let crf = &params.crf;
    for (k, b) in crf.bases.iter().enumerate() {
        out.push((format!("crf.basis{k}"), Tensor::row(b.clone())));
    }
    for (l, b) in crf.layer_bases.iter().enumerate() {
        out.push((format!("crf.layer_basis{l}"), Tensor::row(b.clone())));
    }
    for (l, p) in crf.layer_projections.iter().enumerate() {
        out.push((format!("crf.layer_projection{l}"), p.clone()));
    }
    out
}

pub fn write_checkpoint(mut w: impl Write, checkpoint: &Checkpoint) -> Result<()> {
    let secs = sections(&checkpoint.params);
    let header = Header {
        config: checkpoint.config.clone(),
        epoch: checkpoint.epoch,
        history: checkpoint.history.clone(),
        crf_seed: checkpoint.params.crf.seed,
        sections: secs
            .iter()
            .map(|(n, t)| SectionInfo {
                name: n.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::format("header", e.to_string()))?;
    let mut buf = Vec::new();
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&checkpoint.version.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for (name, t) in &secs {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    w.write_all(&buf)?;
    Ok(())
}

pub fn save_checkpoint(path: impl AsRef<Path>, checkpoint: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::Io(e).context(path.display()))?;
    write_checkpoint(std::io::BufWriter::new(file), checkpoint)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, section: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(section, "file is truncated"));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, section: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, section)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, section: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, section)?.try_into().expect("8 bytes")))
    }
}

pub fn read_checkpoint(mut r: impl Read) -> Result<Checkpoint> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut cur = Cursor { buf: &buf, pos: 0 };
    if cur.take(8, "magic")? != MAGIC {
        return Err(Error::format("magic", "not a checkpoint file"));
    }
    let version = cur.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::format(
            "version",
            format!("unsupported format version {version}, expected {FORMAT_VERSION}"),
        ));
    }
    let header_len = cur.u64("header")?;
    let header_len = usize::try_from(header_len).map_err(|_| Error::format("header", "length overflows"))?;
    let header: Header = serde_json::from_slice(cur.take(header_len, "header")?)
        .map_err(|e| Error::format("header", e.to_string()))?;

    let mut arrays = Vec::with_capacity(header.sections.len());
    for info in &header.sections {
        let name = &info.name;
        let len = cur.u32(name)? as usize;
        if cur.take(len, name)? != name.as_bytes() {
            return Err(Error::format(name.as_str(), "section name does not match the header"));
        }
        let rank = cur.u32(name)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cur.u64(name)? as usize);
        }
        if shape != info.shape {
            return Err(Error::format(name.as_str(), "shape does not match the header"));
        }
        let count: usize = shape.iter().product();
        let bytes = cur.take(count.checked_mul(8).ok_or_else(|| Error::format(name.as_str(), "size overflows"))?, name)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| Error::format(name.as_str(), e.to_string()))?;
        arrays.push((name.clone(), t));
    }
    let body_end = cur.pos;
    let digest = cur.take(32, "checksum")?;
    if cur.pos != buf.len() {
        return Err(Error::format("checksum", "trailing bytes after checksum"));
    }
    if Sha256::digest(&buf[..body_end]).as_slice() != digest {
        return Err(Error::format("checksum", "content does not match its checksum"));
    }

    let mut params = init_params(&header.config.model, header.crf_seed)
        .map_err(|e| Error::format("header", e.to_string()))?;
    let mut slots: Vec<(String, &mut Tensor)> = Vec::new();
    let crf = &mut params.crf;
    let mut named: Vec<(String, &mut Tensor)> = Vec::new();
    params.weights.visit_mut(|n, t| named.push((n.to_string(), t)));
    slots.extend(named);
    let mut basis_rows: Vec<(String, usize, bool)> = Vec::new();
    for k in 0..crf.bases.len() {
        basis_rows.push((format!("crf.basis{k}"), k, false));
    }
    for l in 0..crf.layer_bases.len() {
        basis_rows.push((format!("crf.layer_basis{l}"), l, true));
    }
    for (l, p) in crf.layer_projections.iter_mut().enumerate() {
        slots.push((format!("crf.layer_projection{l}"), p));
    }
    let expected = slots.len() + basis_rows.len();
    if arrays.len() != expected {
        return Err(Error::format("header", format!("expected {expected} sections, found {}", arrays.len())));
    }
    for (name, t) in arrays {
        if let Some((_, slot)) = slots.iter_mut().find(|(n, _)| *n == name) {
            if slot.shape() != t.shape() {
                return Err(Error::format(name.as_str(), "shape does not match the configured model"));
            }
            **slot = t;
        } else if let Some((_, idx, layer)) = basis_rows.iter().find(|(n, _, _)| *n == name) {
            let target = if *layer { &mut crf.layer_bases[*idx] } else { &mut crf.bases[*idx] };
            if target.len() != t.len() {
                return Err(Error::format(name.as_str(), "basis size does not match the configured model"));
            }
            *target = t.into_data();
        } else {
            return Err(Error::format(name.as_str(), "unknown section"));
        }
    }
    Ok(Checkpoint {
        version,
        config: header.config,
        params,
        epoch: header.epoch,
        history: header.history,
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Io(e).context(path.display()))?;
    read_checkpoint(std::io::BufReader::new(file))
}
