//! The two learned models: the colour network `F(x, d) -> (c, sigma)` and
//! the sampling network mapping a discretised ray to bin probabilities.

use rand::Rng;

use crate::error::{Error, Result};
use crate::field::FieldSample;
use crate::geometry::{make_bin_grid, BinGrid, BinMode, Ray, Representation, SceneBounds, SegmentParam};
use crate::math::Vec3;
use crate::nn::checkpoint::Checkpoint;
use crate::nn::heads::{color_head, sampler_head};
use crate::nn::{Mlp, MlpConfig, PositionalEncoding};

/// Colour-network architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColorNetConfig {
    pub pos_freqs: usize,
    pub dir_freqs: usize,
    pub hidden: usize,
    pub depth: usize,
    pub skip: Option<usize>,
}

impl ColorNetConfig {
    /// 8 x 256 with the input re-injected at the fifth layer, L = 10 / 4.
    pub const PAPER: Self = Self {
        pos_freqs: 10,
        dir_freqs: 4,
        hidden: 256,
        depth: 8,
        skip: Some(5),
    };

    /// 4 x 128, L = 6 / 2.
    pub const DESK: Self = Self {
        pos_freqs: 6,
        dir_freqs: 2,
        hidden: 128,
        depth: 4,
        skip: Some(2),
    };

    fn pos_pe(&self) -> PositionalEncoding {
        PositionalEncoding::new(self.pos_freqs, true)
    }

    fn dir_pe(&self) -> PositionalEncoding {
        PositionalEncoding::new(self.dir_freqs, true)
    }

    pub fn input_dim(&self) -> usize {
        self.pos_pe().output_dim(3) + self.dir_pe().output_dim(3)
    }

    pub fn mlp(&self) -> MlpConfig {
        MlpConfig {
            input_dim: self.input_dim(),
            hidden: self.hidden,
            depth: self.depth,
            skip: self.skip,
            output_dim: 4,
        }
    }
}

/// Which slot a colour network fills in the two-network hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorRole {
    Coarse,
    Fine,
}

impl ColorRole {
    pub fn kind(self) -> &'static str {
        match self {
            ColorRole::Coarse => "color_coarse",
            ColorRole::Fine => "color_fine",
        }
    }
}

/// Positions are normalised to the bounds sphere before encoding, and the
/// density is forced to zero outside it.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorNet {
    pub mlp: Mlp<f32>,
    pub config: ColorNetConfig,
    pub bounds: SceneBounds,
}

impl ColorNet {
    pub fn new<R: Rng + ?Sized>(config: ColorNetConfig, bounds: SceneBounds, rng: &mut R) -> Result<Self> {
        Ok(Self {
            mlp: Mlp::new(config.mlp(), rng)?,
            config,
            bounds,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim()
    }

    /// Encoded network input rows for `(points[i], dirs[i])`.
    pub fn encode(&self, points: &[Vec3], dirs: &[Vec3]) -> Vec<f32> {
        let dim = self.input_dim();
        let ppe = self.config.pos_pe();
        let dpe = self.config.dir_pe();
        let split = ppe.output_dim(3);
        let inv_r = 1.0 / self.bounds.radius;
        let mut out = vec![0.0f32; points.len() * dim];
        for ((row, &p), &d) in out.chunks_exact_mut(dim).zip(points).zip(dirs) {
            let x = ((p - self.bounds.center) * inv_r).to_array();
            let (a, b) = row.split_at_mut(split);
            ppe.encode_into(&x.map(|v| v as f32), a);
            dpe.encode_into(&d.to_array().map(|v| v as f32), b);
        }
        out
    }

    /// True where the network's density is used (inside the bounds sphere).
    pub fn active(&self, p: Vec3) -> bool {
        self.bounds.contains(p)
    }

    pub fn decode(&self, raw: &[f32], p: Vec3) -> FieldSample {
        let (rgb, sigma) = color_head(raw);
        FieldSample {
            color: Vec3::new(rgb[0] as f64, rgb[1] as f64, rgb[2] as f64),
            sigma: if self.active(p) { sigma as f64 } else { 0.0 },
        }
    }

    pub fn eval(&self, points: &[Vec3], dirs: &[Vec3]) -> Result<Vec<FieldSample>> {
        if points.is_empty() {
            return Ok(Vec::new());
        }
        let input = self.encode(points, dirs);
        let raw = self.mlp.infer(&input, points.len())?;
        Ok(raw.chunks_exact(4).zip(points).map(|(r, &p)| self.decode(r, p)).collect())
    }

    pub fn to_checkpoint(&self, role: ColorRole) -> Checkpoint {
        let c = &self.config;
        Checkpoint::new(self.mlp.clone())
            .with_meta("kind", role.kind())
            .with_meta("pos_freqs", c.pos_freqs)
            .with_meta("dir_freqs", c.dir_freqs)
            .with_meta("bounds", bounds_to_string(&self.bounds))
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Self, ColorRole)> {
        let role = match ck.meta_value("kind") {
            Some("color_coarse") => ColorRole::Coarse,
            Some("color_fine") => ColorRole::Fine,
            other => return Err(Error::Format(format!("not a colour-network checkpoint (kind {other:?})"))),
        };
        let m = ck.model.config();
        let config = ColorNetConfig {
            pos_freqs: meta_num(ck, "pos_freqs")?,
            dir_freqs: meta_num(ck, "dir_freqs")?,
            hidden: m.hidden,
            depth: m.depth,
            skip: m.skip,
        };
        if config.mlp() != *m {
            return Err(Error::Format("colour checkpoint shape disagrees with its encoding".into()));
        }
        let bounds = bounds_from_string(ck.meta_value("bounds").unwrap_or_default())?;
        Ok((
            Self {
                mlp: ck.model.clone(),
                config,
                bounds,
            },
            role,
        ))
    }
}

/// Sampling-network architecture and ray discretisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerConfig {
    pub n_bins: usize,
    pub mode: BinMode,
    pub representation: Representation,
    pub freqs: usize,
    pub hidden: usize,
    pub depth: usize,
    pub skip: Option<usize>,
}

impl SamplerConfig {
    pub const DESK: Self = Self {
        n_bins: 31,
        mode: BinMode::CenteredLog,
        representation: Representation::ConstantSegment,
        freqs: 4,
        hidden: 128,
        depth: 4,
        skip: Some(2),
    };

    pub const PAPER: Self = Self {
        n_bins: 127,
        mode: BinMode::CenteredLog,
        representation: Representation::ConstantSegment,
        freqs: 10,
        hidden: 256,
        depth: 8,
        skip: Some(5),
    };

    fn pe(&self) -> PositionalEncoding {
        PositionalEncoding::new(self.freqs, true)
    }

    pub fn input_dim(&self) -> usize {
        self.n_bins * self.pe().output_dim(3)
    }

    pub fn mlp(&self) -> MlpConfig {
        MlpConfig {
            input_dim: self.input_dim(),
            hidden: self.hidden,
            depth: self.depth,
            skip: self.skip,
            output_dim: self.n_bins,
        }
    }
}

/// A ray reduced to its canonical segment and bin grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteRay {
    pub segment: SegmentParam,
    pub grid: BinGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerNet {
    pub mlp: Mlp<f32>,
    pub config: SamplerConfig,
    pub bounds: SceneBounds,
    fractions: Vec<f64>,
}

impl SamplerNet {
    pub fn new<R: Rng + ?Sized>(config: SamplerConfig, bounds: SceneBounds, rng: &mut R) -> Result<Self> {
        let fractions = config.mode.fractions(config.n_bins)?;
        Ok(Self {
            mlp: Mlp::new(config.mlp(), rng)?,
            config,
            bounds,
            fractions,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.config.n_bins
    }

    /// Segment and grid for `ray`, or `None` when it misses the bounds sphere.
    pub fn discretize(&self, ray: &Ray) -> Result<Option<DiscreteRay>> {
        discretize(ray, &self.bounds, self.config.representation, self.config.mode, self.config.n_bins)
    }

    /// Encoded boundary points of `seg`, one network input row.
    pub fn encode_into(&self, seg: &SegmentParam, out: &mut [f32]) {
        let pe = self.config.pe();
        let w = pe.output_dim(3);
        let inv_r = 1.0 / self.bounds.radius;
        for (k, &s) in self.fractions.iter().enumerate() {
            let p = ((seg.lerp(s) - self.bounds.center) * inv_r).to_array();
            pe.encode_into(&p.map(|v| v as f32), &mut out[k * w..(k + 1) * w]);
        }
    }

    pub fn encode(&self, segs: &[SegmentParam]) -> Vec<f32> {
        let dim = self.config.input_dim();
        let mut out = vec![0.0f32; segs.len() * dim];
        for (row, seg) in out.chunks_exact_mut(dim).zip(segs) {
            self.encode_into(seg, row);
        }
        out
    }

    /// Normalised bin probabilities for each segment.
    pub fn probabilities(&self, segs: &[SegmentParam]) -> Result<Vec<Vec<f64>>> {
        if segs.is_empty() {
            return Ok(Vec::new());
        }
        let raw = self.mlp.infer(&self.encode(segs), segs.len())?;
        Ok(raw
            .chunks_exact(self.n_bins())
            .map(|r| sampler_head(r).into_iter().map(f64::from).collect())
            .collect())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let c = &self.config;
        Checkpoint::new(self.mlp.clone())
            .with_meta("kind", "sampler")
            .with_meta("n_bins", c.n_bins)
            .with_meta("mode", c.mode.name())
            .with_meta("representation", c.representation.name())
            .with_meta("freqs", c.freqs)
            .with_meta("bounds", bounds_to_string(&self.bounds))
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta_value("kind") != Some("sampler") {
            return Err(Error::Format("not a sampler checkpoint".into()));
        }
        let m = ck.model.config();
        let mode = ck
            .meta_value("mode")
            .and_then(BinMode::parse)
            .ok_or_else(|| Error::Format("sampler checkpoint lacks a bin mode".into()))?;
        let representation = ck
            .meta_value("representation")
            .and_then(Representation::parse)
            .ok_or_else(|| Error::Format("sampler checkpoint lacks a representation".into()))?;
        let config = SamplerConfig {
            n_bins: meta_num(ck, "n_bins")?,
            mode,
            representation,
            freqs: meta_num(ck, "freqs")?,
            hidden: m.hidden,
            depth: m.depth,
            skip: m.skip,
        };
        if config.mlp() != *m {
            return Err(Error::Format("sampler checkpoint shape disagrees with its metadata".into()));
        }
        let bounds = bounds_from_string(ck.meta_value("bounds").unwrap_or_default())?;
        Ok(Self {
            mlp: ck.model.clone(),
            config,
            bounds,
            fractions: mode.fractions(config.n_bins)?,
        })
    }
}

/// Shared ray discretisation; `None` for rays that miss the bounds sphere.
pub fn discretize(
    ray: &Ray,
    bounds: &SceneBounds,
    representation: Representation,
    mode: BinMode,
    n_bins: usize,
) -> Result<Option<DiscreteRay>> {
    match representation.parameterize(ray, bounds) {
        Ok(segment) => {
            let grid = make_bin_grid(&segment, ray, mode, n_bins)?;
            Ok(Some(DiscreteRay { segment, grid }))
        }
        Err(Error::RayMissesScene { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

fn meta_num<T: std::str::FromStr>(ck: &Checkpoint, key: &str) -> Result<T> {
    ck.meta_value(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Format(format!("checkpoint metadata `{key}` missing or invalid")))
}

pub(crate) fn bounds_to_string(b: &SceneBounds) -> String {
    format!(
        "{} {} {} {} {} {} {}",
        b.center.x, b.center.y, b.center.z, b.radius, b.segment_length, b.near, b.far
    )
}

pub(crate) fn bounds_from_string(s: &str) -> Result<SceneBounds> {
    let v: Vec<f64> = s
        .split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Format(format!("invalid bounds `{s}`")))?;
    if v.len() != 7 {
        return Err(Error::Format(format!("invalid bounds `{s}`")));
    }
    SceneBounds::new(Vec3::new(v[0], v[1], v[2]), v[3], v[4], v[5], v[6])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn checkpoints_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let small = ColorNetConfig {
            hidden: 16,
            depth: 2,
            skip: None,
            ..ColorNetConfig::DESK
        };
        let c = ColorNet::new(small, SceneBounds::default(), &mut rng).unwrap();
        let ck = Checkpoint::from_bytes(&c.to_checkpoint(ColorRole::Coarse).to_bytes()).unwrap();
        let (back, role) = ColorNet::from_checkpoint(&ck).unwrap();
        assert_eq!(back, c);
        assert_eq!(role, ColorRole::Coarse);

        let cfg = SamplerConfig {
            n_bins: 7,
            mode: BinMode::Equidistant,
            representation: Representation::SphereChord,
            hidden: 16,
            depth: 2,
            skip: None,
            freqs: 2,
        };
        let s = SamplerNet::new(cfg, SceneBounds::default(), &mut rng).unwrap();
        let back = SamplerNet::from_checkpoint(&s.to_checkpoint()).unwrap();
        assert_eq!(back, s);
        assert!(SamplerNet::from_checkpoint(&c.to_checkpoint(ColorRole::Fine)).is_err());
    }

    #[test]
    fn sampler_outputs_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = SamplerConfig {
            hidden: 32,
            depth: 2,
            skip: None,
            ..SamplerConfig::DESK
        };
        let s = SamplerNet::new(cfg, SceneBounds::default(), &mut rng).unwrap();
        let ray = Ray::new(Vec3::new(0.2, 0.1, -4.0), Vec3::new(0.0, 0.0, 1.0));
        let d = s.discretize(&ray).unwrap().unwrap();
        assert_eq!(d.grid.n_bins(), 31);
        let p = s.probabilities(&[d.segment]).unwrap();
        assert!((p[0].iter().sum::<f64>() - 1.0).abs() < 1e-5);
        let miss = Ray::new(Vec3::new(3.0, 0.0, -4.0), Vec3::new(0.0, 0.0, 1.0));
        assert!(s.discretize(&miss).unwrap().is_none());
    }

    #[test]
    fn density_vanishes_outside_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = ColorNet::new(ColorNetConfig::DESK, SceneBounds::default(), &mut rng).unwrap();
        let d = Vec3::new(0.0, 0.0, 1.0);
        let f = c.eval(&[Vec3::new(0.0, 0.0, 3.0), Vec3::ZERO], &[d, d]).unwrap();
        assert_eq!(f[0].sigma, 0.0);
        assert!(f[1].sigma > 0.0);
    }
}
