//! Binary checkpoint format (all integers and floats little-endian):
//!
//! ```text
//! "RTCK"  version:u8
//! meta_len:u32  meta: UTF-8 `key=value` lines
//! input_dim:u32 hidden:u32 depth:u32 skip:u32 (0xFFFFFFFF = none) output_dim:u32
//! n_layers:u32 then per layer: rows:u32 cols:u32 weights:f32[rows*cols] (row-major) bias:f32[rows]
//! has_optimizer:u8, and if 1:
//!   step:u64 lr beta1 beta2 eps decay_rate decay_steps:f64
//!   n_tensors:u32 then per tensor: len:u32 m:f32[len] v:f32[len]
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::adam::{AdamConfig, AdamState};
use super::mlp::{Dense, Mlp, MlpConfig};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"RTCK";
const VERSION: u8 = 1;
const NO_SKIP: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Mlp<f32>,
    pub optimizer: Option<AdamState<f32>>,
    pub meta: Vec<(String, String)>,
}

impl Checkpoint {
    pub fn new(model: Mlp<f32>) -> Self {
        Self {
            model,
            optimizer: None,
            meta: Vec::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        let meta: String = self.meta.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        put_u32(&mut out, meta.len() as u32);
        out.extend_from_slice(meta.as_bytes());

        let c = self.model.config();
        for v in [c.input_dim, c.hidden, c.depth] {
            put_u32(&mut out, v as u32);
        }
        put_u32(&mut out, c.skip.map_or(NO_SKIP, |s| s as u32));
        put_u32(&mut out, c.output_dim as u32);
        put_u32(&mut out, self.model.layers().len() as u32);
        for l in self.model.layers() {
            put_u32(&mut out, l.out_dim as u32);
            put_u32(&mut out, l.in_dim as u32);
            put_f32s(&mut out, &l.weight);
            put_f32s(&mut out, &l.bias);
        }

        match &self.optimizer {
            None => out.push(0),
            Some(opt) => {
                out.push(1);
                out.extend_from_slice(&opt.step.to_le_bytes());
                let a = opt.config;
                for v in [a.lr, a.beta1, a.beta2, a.eps, a.decay_rate, a.decay_steps] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                put_u32(&mut out, opt.m.len() as u32);
                for (m, v) in opt.m.iter().zip(&opt.v) {
                    put_u32(&mut out, m.len() as u32);
                    put_f32s(&mut out, m);
                    put_f32s(&mut out, v);
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = r.u8()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let meta_len = r.u32()? as usize;
        let meta_text = std::str::from_utf8(r.take(meta_len)?)
            .map_err(|_| Error::Format("checkpoint metadata is not UTF-8".into()))?;
        let meta = meta_text
            .lines()
            .filter(|l| !l.is_empty())
            .map(|l| {
                l.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| Error::Format(format!("bad metadata line {l:?}")))
            })
            .collect::<Result<Vec<_>>>()?;

        let input_dim = r.u32()? as usize;
        let hidden = r.u32()? as usize;
        let depth = r.u32()? as usize;
        let skip = match r.u32()? {
            NO_SKIP => None,
            s => Some(s as usize),
        };
        let output_dim = r.u32()? as usize;
        let config = MlpConfig {
            input_dim,
            hidden,
            depth,
            skip,
            output_dim,
        };
        let n_layers = r.u32()? as usize;
        if n_layers != depth + 1 {
            return Err(Error::Format(format!("{n_layers} layers for depth {depth}")));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let weight = r.f32s(rows.checked_mul(cols).ok_or_else(|| Error::Format("layer too large".into()))?)?;
            let bias = r.f32s(rows)?;
            layers.push(Dense {
                weight,
                bias,
                in_dim: cols,
                out_dim: rows,
            });
        }
        let model = Mlp::from_layers(config, layers)?;

        let optimizer = match r.u8()? {
            0 => None,
            1 => {
                let step = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
                let mut f = [0.0; 6];
                for v in &mut f {
                    *v = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
                }
                let config = AdamConfig {
                    lr: f[0],
                    beta1: f[1],
                    beta2: f[2],
                    eps: f[3],
                    decay_rate: f[4],
                    decay_steps: f[5],
                };
                let n = r.u32()? as usize;
                let shapes: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
                if n != shapes.len() {
                    return Err(Error::Format(format!("optimizer has {n} tensors, model {}", shapes.len())));
                }
                let (mut m, mut v) = (Vec::with_capacity(n), Vec::with_capacity(n));
                for &want in &shapes {
                    let len = r.u32()? as usize;
                    if len != want {
                        return Err(Error::Format(format!("optimizer tensor of {len}, expected {want}")));
                    }
                    m.push(r.f32s(len)?);
                    v.push(r.f32s(len)?);
                }
                Some(AdamState { config, step, m, v })
            }
            b => return Err(Error::Format(format!("bad optimizer flag {b}"))),
        };
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        if !model.is_finite() {
            return Err(Error::Format("checkpoint contains non-finite parameters".into()));
        }
        Ok(Self { model, optimizer, meta })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f32s(out: &mut Vec<u8>, vs: &[f32]) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format("truncated checkpoint".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::Format("length overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> Mlp<f32> {
        let cfg = MlpConfig {
            input_dim: 5,
            hidden: 8,
            depth: 3,
            skip: Some(2),
            output_dim: 4,
        };
        Mlp::new(cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap()
    }

    #[test]
    fn round_trip_with_optimizer() {
        let m = model();
        let shapes: Vec<usize> = m.params().iter().map(|p| p.len()).collect();
        let mut opt = AdamState::<f32>::new(AdamConfig::default(), &shapes);
        opt.step = 17;
        opt.m[1][0] = 0.25;
        let ck = Checkpoint {
            model: m,
            optimizer: Some(opt),
            meta: vec![("kind".into(), "sampler".into()), ("n_bins".into(), "63".into())],
        };
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.meta_value("n_bins"), Some("63"));
    }

    #[test]
    fn rejects_corruption() {
        let bytes = Checkpoint::new(model()).to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(Checkpoint::from_bytes(&long).is_err());
    }
}
