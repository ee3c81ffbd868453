//! Versioned binary checkpoints.
//!
//! Layout, all little-endian: `GCAN`, u32 version, u32 tensor count, then per
//! tensor a u16 name length, the UTF-8 name, a u8 dtype code (0 = f32), a u8
//! rank, u32 dims and the payload. Two Adam blocks follow (generator, then
//! discriminator), each a u64 step, u32 tensor count and tensors named
//! `m.<param>` / `v.<param>`. Then a u32-length-prefixed UTF-8 config, and a
//! trailer: u64 step, u64 rng seed, u32 count of recent train DSC values and
//! those values as f64.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::optim::AdamState;
use crate::tensor::{Dtype, Tensor};
use crate::train::config::TrainConfig;

pub const MAGIC: &[u8; 4] = b"GCAN";
pub const VERSION: u32 = 1;

/// Everything needed to resume training.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    /// Steps completed.
    pub step: u64,
    /// Generator parameters and buffers, then discriminator parameters.
    pub tensors: BTreeMap<String, Tensor<f32>>,
    pub adam_g: AdamState<f32>,
    pub adam_d: AdamState<f32>,
    /// Seed of the per-step data streams.
    pub rng_seed: u64,
    /// Window of the running train DSC, oldest first.
    pub recent_dsc: Vec<f64>,
}

fn put_tensor(out: &mut Vec<u8>, name: &str, t: &Tensor<f32>) -> Result<()> {
    let len = u16::try_from(name.len()).map_err(|_| Error::Checkpoint(format!("tensor name too long: {name}")))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(Dtype::F32.code());
    out.push(t.shape().len() as u8);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

fn put_block(out: &mut Vec<u8>, tensors: &[(String, &Tensor<f32>)]) -> Result<()> {
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        put_tensor(out, name, t)?;
    }
    Ok(())
}

fn adam_tensors(state: &AdamState<f32>) -> Vec<(String, &Tensor<f32>)> {
    let m = state.first.iter().map(|(k, t)| (format!("m.{k}"), t));
    let v = state.second.iter().map(|(k, t)| (format!("v.{k}"), t));
    m.chain(v).collect()
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let model: Vec<(String, &Tensor<f32>)> = self.tensors.iter().map(|(k, t)| (k.clone(), t)).collect();
        put_block(&mut out, &model)?;
        for state in [&self.adam_g, &self.adam_d] {
            out.extend_from_slice(&state.step.to_le_bytes());
            put_block(&mut out, &adam_tensors(state))?;
        }
        let config = self.config.to_text();
        out.extend_from_slice(&(config.len() as u32).to_le_bytes());
        out.extend_from_slice(config.as_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&self.rng_seed.to_le_bytes());
        out.extend_from_slice(&(self.recent_dsc.len() as u32).to_le_bytes());
        for d in &self.recent_dsc {
            out.extend_from_slice(&d.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint (bad magic bytes)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version} (expected {VERSION})"
            )));
        }
        let tensors = r.block()?;
        let mut adam = Vec::with_capacity(2);
        for _ in 0..2 {
            let step = r.u64()?;
            let mut first = BTreeMap::new();
            let mut second = BTreeMap::new();
            for (name, t) in r.block()? {
                match name.split_once('.') {
                    Some(("m", p)) => first.insert(p.to_string(), t),
                    Some(("v", p)) => second.insert(p.to_string(), t),
                    _ => return Err(Error::Checkpoint(format!("unexpected optimizer tensor {name}"))),
                };
            }
            adam.push((step, first, second));
        }
        let len = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(len)?).map_err(|_| Error::Checkpoint("config is not UTF-8".into()))?;
        let config = TrainConfig::parse_text(text)?;
        let step = r.u64()?;
        let rng_seed = r.u64()?;
        let n = r.u32()? as usize;
        let recent_dsc = (0..n).map(|_| r.f64()).collect::<Result<_>>()?;
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let mut states = adam.into_iter().map(|(step, first, second)| AdamState {
            config: config.adam(),
            step,
            first,
            second,
        });
        let adam_g = states.next().expect("two blocks");
        let adam_d = states.next().expect("two blocks");
        Ok(Self {
            config,
            step,
            tensors,
            adam_g,
            adam_d,
            rng_seed,
            recent_dsc,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {} (wanted {n} more)", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn tensor(&mut self) -> Result<(String, Tensor<f32>)> {
        let len = u16::from_le_bytes(self.array()?) as usize;
        let name = String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let [code, rank] = self.array()?;
        if Dtype::from_code(code) != Some(Dtype::F32) {
            return Err(Error::Checkpoint(format!("{name}: unsupported dtype code {code}")));
        }
        let shape = (0..rank)
            .map(|_| self.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let data = self
            .take(
                n.checked_mul(4)
                    .ok_or_else(|| Error::Checkpoint(format!("{name}: shape overflows")))?,
            )?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
            .collect();
        Ok((name, Tensor::from_vec(&shape, data)?))
    }

    fn block(&mut self) -> Result<BTreeMap<String, Tensor<f32>>> {
        let count = self.u32()?;
        let mut out = BTreeMap::new();
        for _ in 0..count {
            let (name, t) = self.tensor()?;
            if out.insert(name.clone(), t).is_some() {
                return Err(Error::Checkpoint(format!("duplicate tensor {name}")));
            }
        }
        Ok(out)
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, ckpt.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes).map_err(|e| match e {
        Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
        other => other,
    })
}
