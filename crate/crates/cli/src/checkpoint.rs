//! Binary training checkpoint.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "ODCS" | version u32 | config_len u32 | config utf-8
//! epoch u64 | step u64
//! rng_seed [u8; 32] | rng_stream u64 | rng_word_pos u128
//! tensor_count u32 | { name_len u32 | name | rank u32 | dims u64 * rank | f32 * numel }
//! optimizer_count u32 | { name_len u32 | name | step u64 | buffer_count u32 | { len u64 | m f64 * len | v f64 * len } }
//! ```

use std::path::Path;

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"ODCS";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub name: String,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config_text: String,
    pub epoch: u64,
    pub step: u64,
    pub rng: RngState,
    pub tensors: Vec<NamedTensor>,
    pub optimizers: Vec<OptimizerState>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn text(&mut self, s: &str) {
        self.u32(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION as usize);
        w.text(&self.config_text);
        w.u64(self.epoch);
        w.u64(self.step);
        w.0.extend_from_slice(&self.rng.seed);
        w.u64(self.rng.stream);
        w.0.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        w.u32(self.tensors.len());
        for t in &self.tensors {
            w.text(&t.name);
            w.u32(t.dims.len());
            for &d in &t.dims {
                w.u64(d as u64);
            }
            for v in &t.data {
                w.0.extend_from_slice(&v.to_le_bytes());
            }
        }
        w.u32(self.optimizers.len());
        for o in &self.optimizers {
            w.text(&o.name);
            w.u64(o.step);
            w.u32(o.m.len());
            for (m, v) in o.m.iter().zip(&o.v) {
                w.u64(m.len() as u64);
                for x in m.iter().chain(v) {
                    w.0.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        w.0
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(CliError::Checkpoint("missing ODCS magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CliError::Version {
                found: version,
                expected: VERSION,
            });
        }
        let config_text = r.text()?;
        let epoch = r.u64()?;
        let step = r.u64()?;
        let seed: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let stream = r.u64()?;
        let word_pos = u128::from_le_bytes(r.take(16)?.try_into().expect("16 bytes"));

        let count = r.u32()?;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let name = r.text()?;
            let rank = r.u32()?;
            let dims = (0..rank)
                .map(|_| {
                    r.u64()
                        .and_then(|d| usize::try_from(d).map_err(|_| r.fail("dimension overflows")))
                })
                .collect::<Result<Vec<usize>>>()?;
            let numel = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| r.fail("tensor size overflows"))?;
            let data = r
                .block(numel, 4)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            tensors.push(NamedTensor { name, dims, data });
        }

        let count = r.u32()?;
        let mut optimizers = Vec::new();
        for _ in 0..count {
            let name = r.text()?;
            let step = r.u64()?;
            let buffers = r.u32()?;
            let (mut m, mut v) = (Vec::new(), Vec::new());
            for _ in 0..buffers {
                let len = usize::try_from(r.u64()?).map_err(|_| r.fail("buffer length overflows"))?;
                let read = |r: &mut Reader| -> Result<Vec<f64>> {
                    Ok(r.block(len, 8)?
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                        .collect())
                };
                m.push(read(&mut r)?);
                v.push(read(&mut r)?);
            }
            optimizers.push(OptimizerState { name, step, m, v });
        }
        if r.pos != bytes.len() {
            return Err(r.fail("trailing bytes"));
        }
        Ok(Checkpoint {
            config_text,
            epoch,
            step,
            rng: RngState { seed, stream, word_pos },
            tensors,
            optimizers,
        })
    }

    /// Writes through a temporary file and a rename, so a crash never leaves
    /// a torn checkpoint at `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("ckpt.tmp");
        std::fs::write(&tmp, self.encode()).map_err(|e| CliError::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::decode(&bytes).map_err(|e| match e {
            CliError::Checkpoint(msg) => CliError::Checkpoint(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn tensor(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn optimizer(&self, name: &str) -> Option<&OptimizerState> {
        self.optimizers.iter().find(|o| o.name == name)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn fail(&self, msg: &str) -> CliError {
        CliError::Checkpoint(format!("{msg} at byte {}", self.pos))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.fail("truncated"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    /// `count` items of `width` bytes, rejecting sizes the input cannot hold
    /// before allocating.
    fn block(&mut self, count: usize, width: usize) -> Result<&'a [u8]> {
        let n = count
            .checked_mul(width)
            .ok_or_else(|| self.fail("block size overflows"))?;
        self.take(n)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn text(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let start = self.pos;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| CliError::Checkpoint(format!("invalid utf-8 at byte {start}")))
    }
}
