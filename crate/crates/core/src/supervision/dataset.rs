//! Depth-dataset file: recorded termination weights per training ray.
//!
//! Layout (little-endian):
//!
//! ```text
//! "TNDD" version:u8 width:u32 height:u32 count:u64
//! count x record:
//!   id:u64 origin:f32[3] direction:f32[3] a:f32[3] b:f32[3]
//!   n:u32 z:f32[n] w:f32[n]
//! ```
//!
//! `width`/`height` describe the pixel grid the ray ids index into
//! (`id = frame * width * height + y * width + x`); both are 0 when the rays
//! are not image-structured.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Ray, SegmentParam};
use crate::math::Vec3;
use crate::render::volume::WeightDistribution;

const MAGIC: &[u8; 4] = b"TNDD";
const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct DepthRecord {
    pub id: u64,
    pub ray: Ray,
    pub segment: SegmentParam,
    pub samples: WeightDistribution,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DepthDataset {
    pub width: u32,
    pub height: u32,
    pub records: Vec<DepthRecord>,
}

impl DepthDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&[VERSION])?;
        w.write_all(&self.width.to_le_bytes())?;
        w.write_all(&self.height.to_le_bytes())?;
        w.write_all(&(self.records.len() as u64).to_le_bytes())?;
        for r in &self.records {
            w.write_all(&r.id.to_le_bytes())?;
            for v in [r.ray.origin, r.ray.direction, r.segment.a, r.segment.b] {
                for c in v.to_array() {
                    w.write_all(&(c as f32).to_le_bytes())?;
                }
            }
            w.write_all(&(r.samples.len() as u32).to_le_bytes())?;
            for &z in &r.samples.z {
                w.write_all(&(z as f32).to_le_bytes())?;
            }
            for &x in &r.samples.w {
                w.write_all(&(x as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a depth dataset (bad magic)".into()));
        }
        let version = read_u8(r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported depth dataset version {version}")));
        }
        let width = read_u32(r)?;
        let height = read_u32(r)?;
        let count = read_u64(r)?;
        let mut records = Vec::new();
        for _ in 0..count {
            let id = read_u64(r)?;
            let mut v = [Vec3::ZERO; 4];
            for slot in &mut v {
                *slot = Vec3::new(read_f32(r)? as f64, read_f32(r)? as f64, read_f32(r)? as f64);
            }
            let direction = v[1]
                .try_normalize()
                .ok_or_else(|| Error::Format(format!("record {id} has a zero direction")))?;
            let n = read_u32(r)? as usize;
            let z = (0..n).map(|_| read_f32(r).map(f64::from)).collect::<Result<Vec<_>>>()?;
            let w = (0..n).map(|_| read_f32(r).map(f64::from)).collect::<Result<Vec<_>>>()?;
            if w.iter().any(|x| !(*x >= 0.0)) || z.iter().any(|x| !x.is_finite()) {
                return Err(Error::Format(format!("record {id} has invalid samples")));
            }
            records.push(DepthRecord {
                id,
                ray: Ray {
                    origin: v[0],
                    direction,
                },
                segment: SegmentParam { a: v[2], b: v[3] },
                samples: merge_coincident(z, w),
            });
        }
        let mut probe = [0u8; 1];
        if r.read(&mut probe)? != 0 {
            return Err(Error::Format("trailing bytes after depth dataset".into()));
        }
        Ok(Self {
            width,
            height,
            records,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

/// Depths that collide after 32-bit rounding are merged, keeping the larger weight.
fn merge_coincident(z: Vec<f64>, w: Vec<f64>) -> WeightDistribution {
    let mut out = WeightDistribution::default();
    let mut pairs: Vec<(f64, f64)> = z.into_iter().zip(w).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (z, w) in pairs {
        match out.z.last() {
            Some(&last) if z <= last => {
                let lw = out.w.last_mut().expect("non-empty");
                *lw = lw.max(w);
            }
            _ => {
                out.z.push(z);
                out.w.push(w);
            }
        }
    }
    out
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("truncated depth dataset".into()),
        _ => Error::Io(e),
    })
}

fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    read_exact(r, &mut b)?;
    Ok(b[0])
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f32<R: Read>(r: &mut R) -> Result<f32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(f32::from_le_bytes(b))
}
