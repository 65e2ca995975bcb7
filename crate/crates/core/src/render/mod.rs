//! Ray rendering along three paths:
//!
//! * `oracle` — dense equidistant quadrature (512 samples by default);
//! * `coarse_fine` — two-network hierarchical sampling: stratified coarse
//!   samples, then inverse-CDF fine samples on the coarse weights, with the
//!   fine network evaluated on the union;
//! * `terminerf` — one sampling-network pass predicts bin probabilities, and
//!   `n` colour-network samples are drawn from them.
//!
//! Rays that miss the bounds sphere return the background colour and cost no
//! network evaluations on every path.

pub mod camera;
pub mod image;
pub mod volume;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{oracle_weights, AnalyticScene, FieldSample};
use crate::geometry::{BinGrid, BinMode, Ray, Representation, SceneBounds};
use crate::math::Vec3;
use crate::networks::{discretize, ColorNet, DiscreteRay, SamplerNet};

use camera::Camera;
use image::ImageBuffer;
use volume::{composite_color, deltas_for, sample_from_bins, transmittance_weights, WeightDistribution};

/// Anything that maps `(x, d)` to colour and density.
pub trait RadianceField: Sync {
    fn eval_batch(&self, points: &[Vec3], dirs: &[Vec3]) -> Result<Vec<FieldSample>>;
}

impl RadianceField for AnalyticScene {
    fn eval_batch(&self, points: &[Vec3], dirs: &[Vec3]) -> Result<Vec<FieldSample>> {
        Ok(points.iter().zip(dirs).map(|(&p, &d)| self.eval(p, d)).collect())
    }
}

impl RadianceField for ColorNet {
    fn eval_batch(&self, points: &[Vec3], dirs: &[Vec3]) -> Result<Vec<FieldSample>> {
        self.eval(points, dirs)
    }
}

/// Predicts a distribution over a ray's bins in one pass.
pub trait RaySampler: Sync {
    fn discretize(&self, ray: &Ray) -> Result<Option<DiscreteRay>>;
    /// Normalised bin probabilities for each discretised ray.
    fn bin_probabilities(&self, rays: &[Ray], discs: &[DiscreteRay]) -> Result<Vec<Vec<f64>>>;
}

impl RaySampler for SamplerNet {
    fn discretize(&self, ray: &Ray) -> Result<Option<DiscreteRay>> {
        SamplerNet::discretize(self, ray)
    }

    fn bin_probabilities(&self, _rays: &[Ray], discs: &[DiscreteRay]) -> Result<Vec<Vec<f64>>> {
        let segs: Vec<_> = discs.iter().map(|d| d.segment).collect();
        self.probabilities(&segs)
    }
}

/// Ideal sampler: exact bin masses of the analytic termination distribution,
/// integrated on a dense grid.
#[derive(Debug, Clone)]
pub struct OracleSampler<'a> {
    pub scene: &'a AnalyticScene,
    pub representation: Representation,
    pub mode: BinMode,
    pub n_bins: usize,
    pub resolution: usize,
}

impl<'a> OracleSampler<'a> {
    pub fn new(scene: &'a AnalyticScene, n_bins: usize) -> Self {
        Self {
            scene,
            representation: Representation::ConstantSegment,
            mode: BinMode::CenteredLog,
            n_bins,
            resolution: 4096,
        }
    }
}

impl RaySampler for OracleSampler<'_> {
    fn discretize(&self, ray: &Ray) -> Result<Option<DiscreteRay>> {
        discretize(ray, &self.scene.bounds, self.representation, self.mode, self.n_bins)
    }

    fn bin_probabilities(&self, rays: &[Ray], discs: &[DiscreteRay]) -> Result<Vec<Vec<f64>>> {
        let b = &self.scene.bounds;
        let dense = BinGrid::uniform_cells(b.near, b.far, self.resolution)?;
        Ok(rays
            .iter()
            .zip(discs)
            .map(|(ray, disc)| {
                let d = oracle_weights(self.scene, ray, &dense);
                let mut mass = vec![0.0; disc.grid.n_bins()];
                let bounds = disc.grid.boundaries();
                for (&z, &w) in d.z.iter().zip(&d.w) {
                    let j = bounds.partition_point(|&e| e <= z);
                    if j > 0 {
                        mass[j - 1] += w;
                    }
                }
                let total: f64 = mass.iter().sum();
                if total > 0.0 {
                    mass.iter_mut().for_each(|m| *m /= total);
                } else {
                    mass.iter_mut().for_each(|m| *m = 1.0 / self.n_bins as f64);
                }
                mass
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderPath {
    OracleDense,
    CoarseFine,
    TermiNerf,
}

impl RenderPath {
    pub fn name(self) -> &'static str {
        match self {
            RenderPath::OracleDense => "oracle",
            RenderPath::CoarseFine => "coarse_fine",
            RenderPath::TermiNerf => "terminerf",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "oracle" | "oracle_dense" => Some(RenderPath::OracleDense),
            "coarse_fine" => Some(RenderPath::CoarseFine),
            "terminerf" => Some(RenderPath::TermiNerf),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderConfig {
    pub path: RenderPath,
    /// Colour samples per ray on the `terminerf` path.
    pub n_samples: usize,
    pub n_coarse: usize,
    pub n_fine: usize,
    /// Samples per ray on the `oracle` path.
    pub n_dense: usize,
    pub stochastic: bool,
    pub seed: u64,
    pub background: Vec3,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            path: RenderPath::OracleDense,
            n_samples: 32,
            n_coarse: 64,
            n_fine: 128,
            n_dense: 512,
            stochastic: false,
            seed: 0,
            background: Vec3::ONE,
        }
    }
}

impl RenderConfig {
    pub fn oracle() -> Self {
        Self::default()
    }

    pub fn coarse_fine(n_coarse: usize, n_fine: usize) -> Self {
        Self {
            path: RenderPath::CoarseFine,
            n_coarse,
            n_fine,
            ..Self::default()
        }
    }

    pub fn terminerf(n_samples: usize) -> Self {
        Self {
            path: RenderPath::TermiNerf,
            n_samples,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |count, reason| Err(Error::InvalidCount { count, reason });
        match self.path {
            RenderPath::OracleDense if self.n_dense == 0 => bad(0, "oracle path needs samples"),
            RenderPath::CoarseFine if self.n_coarse == 0 => bad(0, "coarse_fine needs coarse samples"),
            RenderPath::CoarseFine if self.n_fine == 0 => bad(0, "coarse_fine needs fine samples"),
            RenderPath::TermiNerf if self.n_samples == 0 => bad(0, "terminerf needs samples"),
            _ => Ok(()),
        }
    }

    /// Network evaluations spent on a ray that hits the scene.
    pub fn passes_per_ray(&self) -> u64 {
        match self.path {
            RenderPath::OracleDense => self.n_dense as u64,
            RenderPath::CoarseFine => (2 * self.n_coarse + self.n_fine) as u64,
            RenderPath::TermiNerf => 1 + self.n_samples as u64,
        }
    }

    pub fn label(&self) -> String {
        match self.path {
            RenderPath::OracleDense => format!("oracle {}", self.n_dense),
            RenderPath::CoarseFine => format!("coarse_fine {}+{}", self.n_coarse, self.n_fine),
            RenderPath::TermiNerf => format!("terminerf {}", self.n_samples),
        }
    }
}

/// Per-ray RNG stream keyed by `(seed, ray id)`, independent of scheduling.
pub fn ray_rng(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// `n` stratified depths over `[near, far]`: cell midpoints, or a uniform
/// jitter inside each cell when `stochastic`.
pub fn stratified_depths<R: Rng + ?Sized>(near: f64, far: f64, n: usize, stochastic: bool, rng: &mut R) -> Vec<f64> {
    let step = (far - near) / n as f64;
    (0..n)
        .map(|k| {
            let t = if stochastic { rng.gen::<f64>() } else { 0.5 };
            near + (k as f64 + t) * step
        })
        .collect()
}

/// Inverse-CDF draw that falls back to uniform bin weights when the
/// distribution has no mass.
pub fn draw_depths<R: Rng + ?Sized>(
    grid: &BinGrid,
    weights: &[f64],
    n: usize,
    far: f64,
    stochastic: bool,
    rng: &mut R,
) -> Result<Vec<f64>> {
    match sample_from_bins(grid, weights, n, far, stochastic, rng) {
        Err(Error::DegenerateDistribution) => {
            let uniform = vec![1.0; grid.n_bins()];
            sample_from_bins(grid, &uniform, n, far, stochastic, rng)
        }
        other => other,
    }
}

/// Fine-stage depths: `n_fine` draws from the coarse weights merged with the
/// coarse depths, sorted.
pub fn hierarchical_depths<R: Rng + ?Sized>(
    coarse_z: &[f64],
    coarse_w: &[f64],
    n_fine: usize,
    far: f64,
    stochastic: bool,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let grid = BinGrid::new(coarse_z.to_vec(), true)?;
    let mut z = draw_depths(&grid, coarse_w, n_fine, far, stochastic, rng)?;
    z.extend_from_slice(coarse_z);
    z.sort_by(f64::total_cmp);
    Ok(z)
}

/// Result of tracing one ray.
#[derive(Debug, Clone, PartialEq)]
pub struct RayTrace {
    pub color: Vec3,
    /// Network evaluations spent on this ray.
    pub passes: u64,
    /// Final-stage sample depths and their Eq.-4 weights (empty for misses).
    pub samples: WeightDistribution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RenderStats {
    pub rays: u64,
    pub forward_passes: u64,
}

impl RenderStats {
    pub fn passes_per_ray(&self) -> f64 {
        if self.rays == 0 {
            0.0
        } else {
            self.forward_passes as f64 / self.rays as f64
        }
    }

    pub fn merge(self, o: RenderStats) -> RenderStats {
        RenderStats {
            rays: self.rays + o.rays,
            forward_passes: self.forward_passes + o.forward_passes,
        }
    }
}

/// Rays processed per batched field query.
const CHUNK: usize = 1024;

/// Renders rays with a coarse field, a fine field and an optional sampler.
#[derive(Clone, Copy)]
pub struct Renderer<'a> {
    pub coarse: &'a dyn RadianceField,
    pub fine: &'a dyn RadianceField,
    pub sampler: Option<&'a dyn RaySampler>,
    pub bounds: SceneBounds,
}

impl<'a> Renderer<'a> {
    /// Every stage queries the analytic scene.
    pub fn analytic(scene: &'a AnalyticScene) -> Self {
        Self {
            coarse: scene,
            fine: scene,
            sampler: None,
            bounds: scene.bounds,
        }
    }

    pub fn with_sampler(mut self, sampler: &'a dyn RaySampler) -> Self {
        self.sampler = Some(sampler);
        self
    }

    pub fn render_ray(&self, ray: &Ray, id: u64, cfg: &RenderConfig) -> Result<RayTrace> {
        Ok(self.trace(std::slice::from_ref(ray), &[id], cfg)?.remove(0))
    }

    /// Traces rays in parallel chunks; ray `i` uses RNG stream `ids[i]`.
    pub fn render_rays(&self, rays: &[Ray], ids: &[u64], cfg: &RenderConfig) -> Result<Vec<RayTrace>> {
        cfg.validate()?;
        if rays.len() != ids.len() {
            return Err(Error::ShapeMismatch {
                expected: rays.len(),
                got: ids.len(),
            });
        }
        let chunks: Vec<Result<Vec<RayTrace>>> = rays
            .par_chunks(CHUNK)
            .zip(ids.par_chunks(CHUNK))
            .map(|(r, i)| self.trace(r, i, cfg))
            .collect();
        let mut out = Vec::with_capacity(rays.len());
        for c in chunks {
            out.extend(c?);
        }
        Ok(out)
    }

    pub fn render_image(&self, camera: &Camera, cfg: &RenderConfig) -> Result<(ImageBuffer, RenderStats)> {
        let rays = camera.rays();
        let ids: Vec<u64> = (0..rays.len() as u64).collect();
        let traces = self.render_rays(&rays, &ids, cfg)?;
        let pixels: Vec<Vec3> = traces.iter().map(|t| t.color).collect();
        let stats = RenderStats {
            rays: traces.len() as u64,
            forward_passes: traces.iter().map(|t| t.passes).sum(),
        };
        Ok((ImageBuffer::from_pixels(camera.width, camera.height, &pixels), stats))
    }

    fn trace(&self, rays: &[Ray], ids: &[u64], cfg: &RenderConfig) -> Result<Vec<RayTrace>> {
        let b = &self.bounds;
        let mut out: Vec<RayTrace> = rays
            .iter()
            .map(|_| RayTrace {
                color: cfg.background,
                passes: 0,
                samples: WeightDistribution::default(),
            })
            .collect();
        let mut rngs: Vec<ChaCha8Rng> = ids.iter().map(|&id| ray_rng(cfg.seed, id)).collect();

        // depth lists for rays that hit the scene
        let mut jobs: Vec<(usize, Vec<f64>)> = Vec::new();
        match cfg.path {
            RenderPath::OracleDense => {
                let step = (b.far - b.near) / cfg.n_dense as f64;
                let z: Vec<f64> = (0..cfg.n_dense).map(|k| b.near + step * k as f64).collect();
                for (i, ray) in rays.iter().enumerate() {
                    if b.ray_hits(ray) {
                        jobs.push((i, z.clone()));
                    }
                }
            }
            RenderPath::CoarseFine => {
                let coarse: Vec<(usize, Vec<f64>)> = rays
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| b.ray_hits(r))
                    .map(|(i, _)| (i, stratified_depths(b.near, b.far, cfg.n_coarse, cfg.stochastic, &mut rngs[i])))
                    .collect();
                let fields = self.query(self.coarse, rays, &coarse)?;
                for ((i, z), f) in coarse.into_iter().zip(fields) {
                    let sig: Vec<f64> = f.iter().map(|s| s.sigma).collect();
                    let w = transmittance_weights(&sig, &deltas_for(&z, b.far))?;
                    let zf = hierarchical_depths(&z, &w, cfg.n_fine, b.far, cfg.stochastic, &mut rngs[i])?;
                    jobs.push((i, zf));
                    out[i].passes += cfg.n_coarse as u64;
                }
            }
            RenderPath::TermiNerf => {
                let sampler = self
                    .sampler
                    .ok_or_else(|| Error::Config("terminerf path needs a sampling network".into()))?;
                let mut hit = Vec::new();
                let mut discs = Vec::new();
                for (i, ray) in rays.iter().enumerate() {
                    if let Some(d) = sampler.discretize(ray)? {
                        hit.push(i);
                        discs.push(d);
                    }
                }
                let hit_rays: Vec<Ray> = hit.iter().map(|&i| rays[i]).collect();
                let probs = sampler.bin_probabilities(&hit_rays, &discs)?;
                for ((&i, d), p) in hit.iter().zip(&discs).zip(&probs) {
                    let z = draw_depths(&d.grid, p, cfg.n_samples, b.far, cfg.stochastic, &mut rngs[i])?;
                    jobs.push((i, z));
                    out[i].passes += 1;
                }
            }
        }

        let fields = self.query(self.fine, rays, &jobs)?;
        for ((i, z), f) in jobs.into_iter().zip(fields) {
            let sig: Vec<f64> = f.iter().map(|s| s.sigma).collect();
            let col: Vec<Vec3> = f.iter().map(|s| s.color).collect();
            let w = transmittance_weights(&sig, &deltas_for(&z, b.far))?;
            out[i].color = composite_color(&w, &col, cfg.background);
            out[i].passes += z.len() as u64;
            out[i].samples = dedup_samples(z, w);
        }
        Ok(out)
    }

    /// One batched field query covering every `(ray, depths)` job.
    fn query(&self, field: &dyn RadianceField, rays: &[Ray], jobs: &[(usize, Vec<f64>)]) -> Result<Vec<Vec<FieldSample>>> {
        let total: usize = jobs.iter().map(|(_, z)| z.len()).sum();
        let mut pts = Vec::with_capacity(total);
        let mut dirs = Vec::with_capacity(total);
        for (i, z) in jobs {
            let r = &rays[*i];
            for &t in z {
                pts.push(r.at(t));
                dirs.push(r.direction);
            }
        }
        let flat = field.eval_batch(&pts, &dirs)?;
        let mut it = flat.into_iter();
        Ok(jobs.iter().map(|(_, z)| it.by_ref().take(z.len()).collect()).collect())
    }
}

/// Collapses coincident depths (possible when a fine draw lands exactly on a
/// coarse sample) into one entry carrying their summed weight.
fn dedup_samples(z: Vec<f64>, w: Vec<f64>) -> WeightDistribution {
    let mut out = WeightDistribution::default();
    for (zi, wi) in z.into_iter().zip(w) {
        match out.z.last() {
            Some(&last) if zi <= last => *out.w.last_mut().expect("non-empty") += wi,
            _ => {
                out.z.push(zi);
                out.w.push(wi);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::presets;

    fn cam(w: usize, h: usize) -> Camera {
        Camera::look_at(Vec3::new(0.0, -4.0, 0.0), Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0), camera::DEFAULT_FOV_X, w, h).unwrap()
    }

    #[test]
    fn vacuum_renders_background_on_every_path() {
        let scene = AnalyticScene::empty(SceneBounds::default());
        let oracle = OracleSampler::new(&scene, 15);
        let r = Renderer::analytic(&scene).with_sampler(&oracle);
        for cfg in [RenderConfig::oracle(), RenderConfig::coarse_fine(8, 16), RenderConfig::terminerf(8)] {
            let (img, _) = r.render_image(&cam(2, 2), &cfg).unwrap();
            assert!(img.data.iter().all(|&v| v == 1.0), "{}", cfg.label());
        }
    }

    #[test]
    fn pass_accounting() {
        let scene = presets::red_ball();
        let oracle = OracleSampler::new(&scene, 15);
        let r = Renderer::analytic(&scene).with_sampler(&oracle);
        let c = cam(6, 5);
        let hits = c.rays().iter().filter(|ray| scene.bounds.ray_hits(ray)).count() as u64;
        assert_eq!(hits, 30);
        for cfg in [RenderConfig::oracle(), RenderConfig::coarse_fine(8, 16), RenderConfig::terminerf(16)] {
            let (_, stats) = r.render_image(&c, &cfg).unwrap();
            assert_eq!(stats.forward_passes, hits * cfg.passes_per_ray());
        }
        assert_eq!(RenderConfig::coarse_fine(8, 16).passes_per_ray(), 32);
        assert_eq!(RenderConfig::terminerf(32).passes_per_ray(), 33);
    }

    #[test]
    fn ball_centre_is_redder_than_corner() {
        let scene = presets::red_ball();
        let (img, _) = Renderer::analytic(&scene).render_image(&cam(9, 9), &RenderConfig::oracle()).unwrap();
        let redness = |c: Vec3| c.x - 0.5 * (c.y + c.z);
        assert!(redness(img.get(4, 4)) > redness(img.get(0, 0)) + 0.3);
    }

    #[test]
    fn rendering_is_deterministic_under_seed() {
        let scene = presets::two_shell();
        let r = Renderer::analytic(&scene);
        let cfg = RenderConfig {
            stochastic: true,
            seed: 7,
            ..RenderConfig::coarse_fine(8, 8)
        };
        let a = r.render_image(&cam(8, 8), &cfg).unwrap().0;
        let b = r.render_image(&cam(8, 8), &cfg).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn terminerf_without_sampler_is_a_config_error() {
        let scene = presets::red_ball();
        let err = Renderer::analytic(&scene).render_image(&cam(2, 2), &RenderConfig::terminerf(4));
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn opaque_wall_terminerf_matches_oracle() {
        let scene = presets::wall();
        let oracle = OracleSampler::new(&scene, 31);
        let r = Renderer::analytic(&scene).with_sampler(&oracle);
        let c = cam(16, 16);
        let (dense, _) = r.render_image(&c, &RenderConfig::oracle()).unwrap();
        let (fast, _) = r.render_image(&c, &RenderConfig::terminerf(16)).unwrap();
        let worst = dense
            .data
            .iter()
            .zip(&fast.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(worst < 0.01, "{worst}");
    }
}
