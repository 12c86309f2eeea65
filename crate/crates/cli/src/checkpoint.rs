//! Little-endian binary checkpoints.
//!
//! Layout: magic `SLICEKIT`, `u32` version, the run config text, the step,
//! the optimizer update count, then three groups of named buffers
//! (parameters, first moments, second moments). Strings are `u32`
//! length-prefixed UTF-8; buffers are a `u32`-prefixed name and a
//! `u64`-prefixed run of `f64`.

use std::path::Path;

use slicekit::model::{ParamStore, SliceModel};
use slicekit::train::AdamW;

use crate::error::{io_at, CliError, CliResult};

pub const MAGIC: &[u8; 8] = b"SLICEKIT";
pub const VERSION: u32 = 1;

pub type NamedBuffers = Vec<(String, Vec<f64>)>;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub config: String,
    pub step: u64,
    pub optimizer_steps: u64,
    pub params: NamedBuffers,
    pub m: NamedBuffers,
    pub v: NamedBuffers,
}

fn named(store: &ParamStore) -> NamedBuffers {
    store.iter().map(|(n, b)| (n.to_string(), b.to_vec())).collect()
}

impl Checkpoint {
    pub fn capture(config: String, step: u64, model: &SliceModel, opt: &AdamW) -> Self {
        Self {
            version: VERSION,
            config,
            step,
            optimizer_steps: opt.t,
            params: named(model.params()),
            m: named(&opt.m),
            v: named(&opt.v),
        }
    }

    /// Copies parameters into `model` and returns the restored optimizer.
    pub fn restore(&self, model: &mut SliceModel) -> CliResult<AdamW> {
        model.params_mut().load(self.params.clone())?;
        let mut opt = AdamW::new(model.params());
        opt.m.load(self.m.clone())?;
        opt.v.load(self.v.clone())?;
        opt.t = self.optimizer_steps;
        Ok(opt)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        put_str(&mut out, &self.config);
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&self.optimizer_steps.to_le_bytes());
        for group in [&self.params, &self.m, &self.v] {
            out.extend_from_slice(&(group.len() as u32).to_le_bytes());
            for (name, data) in group {
                put_str(&mut out, name);
                out.extend_from_slice(&(data.len() as u64).to_le_bytes());
                for x in data {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> CliResult<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(CliError::Checkpoint("bad magic; not a checkpoint file".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CliError::Checkpoint(format!("unsupported version {version}")));
        }
        let config = r.string()?;
        let step = r.u64()?;
        let optimizer_steps = r.u64()?;
        let mut groups = Vec::with_capacity(3);
        for _ in 0..3 {
            let count = r.u32()? as usize;
            let mut g = Vec::with_capacity(count.min(1 << 16));
            for _ in 0..count {
                let name = r.string()?;
                let len = r.u64()? as usize;
                let raw = r.take(len.checked_mul(8).ok_or_else(truncated)?)?;
                let data = raw
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                    .collect();
                g.push((name, data));
            }
            groups.push(g);
        }
        if r.pos != bytes.len() {
            return Err(CliError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let v = groups.pop().expect("three groups");
        let m = groups.pop().expect("three groups");
        let params = groups.pop().expect("three groups");
        Ok(Self {
            version,
            config,
            step,
            optimizer_steps,
            params,
            m,
            v,
        })
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, self.to_bytes()).map_err(io_at(path))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(io_at(path))?)
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn truncated() -> CliError {
    CliError::Checkpoint("truncated file".into())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> CliResult<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(truncated)?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> CliResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> CliResult<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> CliResult<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| CliError::Checkpoint("invalid UTF-8 string".into()))
    }
}
