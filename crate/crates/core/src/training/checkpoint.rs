//! Binary checkpoint format, little-endian throughout:
//!
//! ```text
//! "ARCK" | version u32 | tensor count u32
//! per tensor: name length u32 | name utf-8 | rank u32 | extents u32 x rank | f32 x numel
//! metadata length u32 | metadata (TOML)
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::networks::{build_discriminator, build_generator_with_blocks, Network, NetworkKind, NetworkSpec};
use crate::tensor::{Shape, Tensor};

pub const MAGIC: &[u8; 4] = b"ARCK";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// `generator` or `discriminator`.
    pub network: String,
    pub channels: usize,
    pub residual_blocks: usize,
    pub iteration: u64,
    pub config: Option<TrainConfig>,
}

impl CheckpointMeta {
    pub fn for_network(net: &Network<f32>, iteration: u64, config: Option<&TrainConfig>) -> Self {
        let spec = net.spec();
        let (network, channels) = match spec.kind {
            NetworkKind::Generator => ("generator", spec.in_channels),
            NetworkKind::Discriminator => ("discriminator", spec.in_channels / 2),
            NetworkKind::Features => ("features", spec.in_channels),
        };
        CheckpointMeta {
            network: network.into(),
            channels,
            residual_blocks: spec.residual_blocks(),
            iteration,
            config: config.cloned(),
        }
    }

    /// Rebuilds the architecture the checkpoint was written from.
    pub fn spec(&self) -> Result<NetworkSpec> {
        match self.network.as_str() {
            "generator" => build_generator_with_blocks(self.channels, self.residual_blocks),
            "discriminator" => build_discriminator(self.channels),
            other => Err(Error::Checkpoint(format!("checkpoint holds an unsupported network `{other}`"))),
        }
    }
}

/// Decoded file contents before they are matched against a spec.
#[derive(Clone, Debug, PartialEq)]
pub struct RawCheckpoint {
    pub tensors: Vec<(String, Tensor<f32>)>,
    pub meta: CheckpointMeta,
}

fn push_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{v} does not fit in 32 bits")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn encode_checkpoint(net: &Network<f32>, meta: &CheckpointMeta) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    push_u32(&mut out, net.params().len())?;
    for (name, t) in net.named_params() {
        push_u32(&mut out, name.len())?;
        out.extend_from_slice(name.as_bytes());
        push_u32(&mut out, 4)?;
        for e in t.shape().0 {
            push_u32(&mut out, e)?;
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let text = toml::to_string(meta).map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
    push_u32(&mut out, text.len())?;
    out.extend_from_slice(text.as_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!(
                "truncated at byte {} while reading {what} ({n} bytes needed, {} left)",
                self.pos,
                self.bytes.len() - self.pos
            ))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<RawCheckpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION as usize {
        return Err(Error::Checkpoint(format!("unsupported format version {version} (expected {VERSION})")));
    }
    let count = r.u32("tensor count")?;
    let mut tensors = Vec::new();
    for i in 0..count {
        let len = r.u32("name length")?;
        let name = std::str::from_utf8(r.take(len, "tensor name")?)
            .map_err(|_| Error::Checkpoint(format!("tensor {i}: name is not UTF-8")))?
            .to_string();
        let rank = r.u32("rank")?;
        if !(1..=4).contains(&rank) {
            return Err(Error::Checkpoint(format!("{name}: rank {rank} is outside 1..=4")));
        }
        let mut dims = [1usize; 4];
        for d in &mut dims[4 - rank..] {
            *d = r.u32("extent")?;
        }
        let numel = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::Checkpoint(format!("{name}: extents overflow")))?;
        let raw = r.take(
            numel.checked_mul(4).ok_or_else(|| Error::Checkpoint(format!("{name}: too large")))?,
            &name,
        )?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        tensors.push((name, Tensor::from_vec(Shape(dims), data)?));
    }
    let len = r.u32("metadata length")?;
    let text = std::str::from_utf8(r.take(len, "metadata")?).map_err(|_| Error::Checkpoint("metadata is not UTF-8".into()))?;
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes after metadata", bytes.len() - r.pos)));
    }
    let meta = toml::from_str(text).map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
    Ok(RawCheckpoint { tensors, meta })
}

/// Writes through a temporary sibling so a crash never leaves a partial file.
pub fn save_checkpoint(path: impl AsRef<Path>, net: &Network<f32>, meta: &CheckpointMeta) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(net, meta)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<RawCheckpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|e| match e {
        Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Loads into `spec`; tensor names and shapes must match it exactly.
pub fn load_checkpoint(path: impl AsRef<Path>, spec: NetworkSpec) -> Result<(Network<f32>, CheckpointMeta)> {
    let raw = read_checkpoint(path)?;
    Ok((Network::from_parameters(spec, raw.tensors)?, raw.meta))
}

/// Loads a checkpoint into the architecture recorded in its metadata.
pub fn load_network(path: impl AsRef<Path>) -> Result<(Network<f32>, CheckpointMeta)> {
    let raw = read_checkpoint(path)?;
    let spec = raw.meta.spec()?;
    Ok((Network::from_parameters(spec, raw.tensors)?, raw.meta))
}

pub fn load_generator(path: impl AsRef<Path>) -> Result<(Network<f32>, CheckpointMeta)> {
    let (net, meta) = load_network(path.as_ref())?;
    if net.spec().kind != NetworkKind::Generator {
        return Err(Error::Checkpoint(format!(
            "{} holds a {}, not a generator",
            path.as_ref().display(),
            meta.network
        )));
    }
    Ok((net, meta))
}

/// Where the discriminator of an adversarial run is stored next to the
/// generator checkpoint `generator`.
pub fn discriminator_path(generator: &Path) -> PathBuf {
    let stem = generator.file_stem().unwrap_or_default().to_string_lossy();
    let name = match generator.extension() {
        Some(ext) => format!("{stem}.disc.{}", ext.to_string_lossy()),
        None => format!("{stem}.disc"),
    };
    generator.with_file_name(name)
}
