//! Depth-dataset construction and sampling-network training.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{oracle_weights, AnalyticScene};
use crate::geometry::{BinGrid, Ray, SceneBounds, SegmentParam};
use crate::networks::{discretize, SamplerConfig, SamplerNet};
use crate::nn::heads::{sampler_head, sampler_head_backward};
use crate::nn::AdamState;
use crate::render::camera::CameraSet;
use crate::render::image::PSNR_CAP;
use crate::render::volume::WeightDistribution;
use crate::render::{RenderConfig, RenderStats};
use crate::supervision::{
    donerf_blur_filter, donerf_classify, make_labels, median_depth, normalize, DepthDataset, DepthRecord, LabelConfig,
};

use super::color::{adam_for, apply, batch_indices, check_finite, ColorPair};
use super::log::MetricLog;
use super::TrainConfig;

/// Where recorded termination weights come from.
#[derive(Clone, Copy)]
pub enum WeightSource<'a> {
    /// Dense left-edge quadrature of the analytic scene.
    Oracle { scene: &'a AnalyticScene, samples: usize },
    /// Final-stage weights of a trained coarse/fine model.
    Model { pair: &'a ColorPair, n_coarse: usize, n_fine: usize, seed: u64 },
}

impl WeightSource<'_> {
    pub fn bounds(&self) -> SceneBounds {
        match self {
            WeightSource::Oracle { scene, .. } => scene.bounds,
            WeightSource::Model { pair, .. } => pair.fine.bounds,
        }
    }

    /// Recorded `(z, w)` tuples for each ray, plus the evaluation count.
    pub fn record(&self, rays: &[Ray], ids: &[u64]) -> Result<(Vec<WeightDistribution>, RenderStats)> {
        match *self {
            WeightSource::Oracle { scene, samples } => {
                let b = scene.bounds;
                let dense = BinGrid::uniform_cells(b.near, b.far, samples)?;
                let out: Vec<WeightDistribution> = rays.par_iter().map(|r| oracle_weights(scene, r, &dense)).collect();
                let stats = RenderStats {
                    rays: rays.len() as u64,
                    forward_passes: (rays.len() * samples) as u64,
                };
                Ok((out, stats))
            }
            WeightSource::Model {
                pair,
                n_coarse,
                n_fine,
                seed,
            } => {
                let cfg = RenderConfig {
                    stochastic: true,
                    seed,
                    ..RenderConfig::coarse_fine(n_coarse, n_fine)
                };
                let traces = pair.renderer().render_rays(rays, ids, &cfg)?;
                let stats = RenderStats {
                    rays: traces.len() as u64,
                    forward_passes: traces.iter().map(|t| t.passes).sum(),
                };
                Ok((traces.into_iter().map(|t| t.samples).collect(), stats))
            }
        }
    }
}

/// Records termination weights for up to `rays_per_camera` pixels of every
/// camera (all pixels when 0), keeping rays that hit the scene.
pub fn build_depth_dataset(
    source: &WeightSource<'_>,
    cameras: &CameraSet,
    rays_per_camera: usize,
    seed: u64,
) -> Result<DepthDataset> {
    let bounds = source.bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rays = Vec::new();
    let mut ids = Vec::new();
    for (f, cam) in cameras.cameras().enumerate() {
        let mut pix: Vec<usize> = (0..cam.n_pixels()).collect();
        if rays_per_camera > 0 && rays_per_camera < pix.len() {
            pix.shuffle(&mut rng);
            pix.truncate(rays_per_camera);
            pix.sort_unstable();
        }
        for p in pix {
            let ray = cam.ray(p % cam.width, p / cam.width);
            if bounds.ray_hits(&ray) {
                rays.push(ray);
                ids.push((f * cam.n_pixels() + p) as u64);
            }
        }
    }
    let (samples, _) = source.record(&rays, &ids)?;
    let mut records = Vec::with_capacity(rays.len());
    for ((ray, id), s) in rays.into_iter().zip(ids).zip(samples) {
        let segment = bounds_segment(&ray, &bounds)?;
        records.push(DepthRecord {
            id,
            ray,
            segment,
            samples: s,
        });
    }
    Ok(DepthDataset {
        width: cameras.width as u32,
        height: cameras.height as u32,
        records,
    })
}

fn bounds_segment(ray: &Ray, bounds: &SceneBounds) -> Result<SegmentParam> {
    crate::geometry::Representation::ConstantSegment.parameterize(ray, bounds)
}

/// Sampler inputs with their normalised bin labels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledRays {
    pub rays: Vec<Ray>,
    pub segments: Vec<SegmentParam>,
    pub labels: Vec<Vec<f64>>,
}

impl LabeledRays {
    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }

    fn select(&self, idx: &[usize]) -> Self {
        Self {
            rays: idx.iter().map(|&i| self.rays[i]).collect(),
            segments: idx.iter().map(|&i| self.segments[i]).collect(),
            labels: idx.iter().map(|&i| self.labels[i].clone()).collect(),
        }
    }

    /// Labels every ray/distribution pair on the sampler's own bins.
    pub fn build(rays: &[Ray], dists: &[WeightDistribution], cfg: &SamplerConfig, bounds: &SceneBounds, labels: &LabelConfig) -> Result<Self> {
        let out: Vec<Option<(Ray, SegmentParam, Vec<f64>)>> = rays
            .par_iter()
            .zip(dists)
            .map(|(ray, d)| {
                let Some(disc) = discretize(ray, bounds, cfg.representation, cfg.mode, cfg.n_bins)? else {
                    return Ok(None);
                };
                if d.is_empty() {
                    return Ok(None);
                }
                Ok(Some((*ray, disc.segment, make_labels(d, labels, &disc.grid)?)))
            })
            .collect::<Result<_>>()?;
        let mut lr = Self::default();
        for (r, s, l) in out.into_iter().flatten() {
            lr.rays.push(r);
            lr.segments.push(s);
            lr.labels.push(l);
        }
        Ok(lr)
    }

    pub fn from_dataset(ds: &DepthDataset, cfg: &SamplerConfig, bounds: &SceneBounds, labels: &LabelConfig) -> Result<Self> {
        let rays: Vec<Ray> = ds.records.iter().map(|r| r.ray).collect();
        let dists: Vec<WeightDistribution> = ds.records.iter().map(|r| r.samples.clone()).collect();
        Self::build(&rays, &dists, cfg, bounds, labels)
    }

    /// Rays labelled directly from dense oracle quadrature, without storing
    /// the raw distributions.
    pub fn from_oracle(scene: &AnalyticScene, rays: &[Ray], dense: usize, cfg: &SamplerConfig, labels: &LabelConfig) -> Result<Self> {
        let mut out = Self::default();
        for chunk in rays.chunks(4096) {
            let (d, _) = WeightSource::Oracle { scene, samples: dense }.record(chunk, &[])?;
            let part = Self::build(chunk, &d, cfg, &scene.bounds, labels)?;
            out.rays.extend(part.rays);
            out.segments.extend(part.segments);
            out.labels.extend(part.labels);
        }
        Ok(out)
    }
}

/// Single-depth supervision: each ray's median termination depth as a
/// one-hot bin, smoothed with [`donerf_blur_filter`] over every camera's
/// pixel grid (`k` x `k` pixels, `z` bins) and normalised.
pub fn single_depth_labels(
    scene: &AnalyticScene,
    cameras: &CameraSet,
    dense: usize,
    cfg: &SamplerConfig,
    k: usize,
    z: usize,
) -> Result<LabeledRays> {
    let b = scene.bounds;
    let grid = BinGrid::uniform_cells(b.near, b.far, dense)?;
    let mut out = LabeledRays::default();
    for cam in cameras.cameras() {
        let rays = cam.rays();
        let per_ray: Vec<(Option<SegmentParam>, Vec<f64>)> = rays
            .par_iter()
            .map(|ray| {
                let Some(disc) = discretize(ray, &b, cfg.representation, cfg.mode, cfg.n_bins)? else {
                    return Ok((None, vec![0.0; cfg.n_bins]));
                };
                let label = match median_depth(&oracle_weights(scene, ray, &grid)) {
                    Some(d) => donerf_classify(d.clamp(b.near, b.far), &disc.grid, b.near, b.far)?,
                    None => vec![0.0; cfg.n_bins],
                };
                Ok((Some(disc.segment), label))
            })
            .collect::<Result<_>>()?;
        let raw: Vec<Vec<f64>> = per_ray.iter().map(|(_, l)| l.clone()).collect();
        let filtered = donerf_blur_filter(&raw, cam.width, cam.height, k, z)?;
        for ((ray, (seg, _)), l) in rays.iter().zip(per_ray).zip(filtered) {
            if let Some(seg) = seg {
                out.rays.push(*ray);
                out.segments.push(seg);
                out.labels.push(normalize(&l));
            }
        }
    }
    Ok(out)
}

/// One MSE step of the sampler on `(segments, labels)`; returns the loss.
pub fn sampler_step(net: &mut SamplerNet, opt: &mut AdamState<f32>, segs: &[SegmentParam], labels: &[Vec<f64>], iteration: usize) -> Result<f64> {
    let n = net.n_bins();
    let b = segs.len();
    let cache = net.mlp.forward(&net.encode(segs), b)?;
    let mut d_raw = vec![0.0f32; b * n];
    let mut loss = 0.0;
    let scale = 2.0 / (b * n) as f32;
    for (i, label) in labels.iter().enumerate() {
        let raw = &cache.output[i * n..(i + 1) * n];
        let p = sampler_head(raw);
        let d_p: Vec<f32> = p.iter().zip(label).map(|(&p, &y)| (p - y as f32) * scale).collect();
        loss += p.iter().zip(label).map(|(&p, &y)| (p as f64 - y).powi(2)).sum::<f64>();
        d_raw[i * n..(i + 1) * n].copy_from_slice(&sampler_head_backward(raw, &p, &d_p));
    }
    loss /= (b * n) as f64;
    let grads = net.mlp.backward(&cache, &d_raw)?;
    check_finite(iteration, loss, &[&grads])?;
    apply(&mut net.mlp, opt, &grads)?;
    Ok(loss)
}

/// Mean squared error between predicted and label distributions.
pub fn sampler_mse(net: &SamplerNet, data: &LabeledRays) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let p = net.probabilities(&data.segments)?;
    let se: f64 = p
        .iter()
        .zip(&data.labels)
        .map(|(p, y)| p.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        .sum();
    Ok(se / (data.len() * net.n_bins()) as f64)
}

/// Validation score of a sampler: `-10 log10(MSE)` against held-out labels.
pub fn sampler_val_psnr(net: &SamplerNet, val: &LabeledRays) -> Result<Option<f64>> {
    if val.is_empty() {
        return Ok(None);
    }
    let mse = sampler_mse(net, val)?;
    Ok(Some(if mse > 0.0 { (-10.0 * mse.log10()).min(PSNR_CAP) } else { PSNR_CAP }))
}

#[derive(Debug, Clone)]
pub struct SamplerTraining {
    pub net: SamplerNet,
    pub log: MetricLog,
    pub best_psnr: Option<f64>,
}

/// Splits labelled rays into train/validation by `val_fraction`, seeded.
pub fn split_labeled(data: &LabeledRays, val_fraction: f64, max_val: usize, seed: u64) -> (LabeledRays, LabeledRays) {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5a3b));
    let n_val = ((val_fraction * data.len() as f64).round() as usize).min(max_val).min(data.len().saturating_sub(1));
    let (v, t) = idx.split_at(n_val);
    (data.select(t), data.select(v))
}

/// Trains a fresh sampler on `data` for `sampler_iters` iterations, keeping
/// the best validation checkpoint.
pub fn train_sampler(data: &LabeledRays, bounds: SceneBounds, cfg: &TrainConfig) -> Result<SamplerTraining> {
    cfg.validate()?;
    let net = SamplerNet::new(cfg.sampler_net(), bounds, &mut ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(17)))?;
    continue_sampler(net, data, cfg, cfg.sampler_iters)
}

pub fn continue_sampler(mut net: SamplerNet, data: &LabeledRays, cfg: &TrainConfig, iters: usize) -> Result<SamplerTraining> {
    if data.is_empty() {
        return Err(Error::EmptySource);
    }
    if data.labels.iter().any(|l| l.len() != net.n_bins()) {
        return Err(Error::Config("label bins disagree with the sampler".into()));
    }
    let (train, held) = split_labeled(data, cfg.val_fraction, cfg.val_rays, cfg.seed);
    let mut opt = adam_for(&net.mlp, cfg.adam(cfg.lr_sampler));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5a));
    let mut log = MetricLog::new(cfg.timing);
    let mut best: Option<(f64, SamplerNet)> = None;
    let mut passes = 0u64;
    for it in 0..iters {
        let idx = batch_indices(&mut rng, train.len(), cfg.batch_rays);
        let segs: Vec<SegmentParam> = idx.iter().map(|&i| train.segments[i]).collect();
        let labels: Vec<Vec<f64>> = idx.iter().map(|&i| train.labels[i].clone()).collect();
        let loss = sampler_step(&mut net, &mut opt, &segs, &labels, it)?;
        passes += idx.len() as u64;
        let mut val = None;
        if (it + 1) % cfg.val_every == 0 || it + 1 == iters {
            val = sampler_val_psnr(&net, &held)?;
            let score = val.unwrap_or(-loss);
            if best.as_ref().map_or(true, |(s, _)| score > *s) {
                best = Some((score, net.clone()));
            }
        }
        log.push(it, loss, val, passes);
    }
    let best_psnr = log.best_val();
    Ok(SamplerTraining {
        net: best.map(|(_, n)| n).unwrap_or(net),
        log,
        best_psnr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::presets;
    use crate::math::Vec3;

    #[test]
    fn oracle_dataset_and_labels() {
        let scene = presets::red_ball();
        let cams = CameraSet::orbit(2, 4.0, 0.2, Vec3::ZERO, 6, 6).unwrap();
        let src = WeightSource::Oracle { scene: &scene, samples: 64 };
        let ds = build_depth_dataset(&src, &cams, 10, 0).unwrap();
        assert!(ds.len() <= 20 && !ds.is_empty());
        assert!(ds.records.iter().all(|r| r.samples.len() == 64));
        let cfg = SamplerConfig {
            n_bins: 7,
            ..SamplerConfig::DESK
        };
        let l = LabeledRays::from_dataset(&ds, &cfg, &scene.bounds, &LabelConfig::default()).unwrap();
        assert_eq!(l.len(), ds.len());
        for y in &l.labels {
            assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn sampler_fits_a_fixed_target() {
        let scene = presets::red_ball();
        let cams = CameraSet::orbit(4, 4.0, 0.2, Vec3::ZERO, 8, 8).unwrap();
        let rays: Vec<Ray> = cams.cameras().flat_map(|c| c.rays()).collect();
        let cfg = TrainConfig {
            n_bins: 7,
            sampler_hidden: 32,
            sampler_depth: 2,
            sampler_skip: 0,
            sampler_freqs: 2,
            sampler_iters: 150,
            val_every: 50,
            batch_rays: 64,
            ..TrainConfig::default()
        };
        let data = LabeledRays::from_oracle(&scene, &rays, 128, &cfg.sampler_net(), &cfg.label_config()).unwrap();
        let t = train_sampler(&data, scene.bounds, &cfg).unwrap();
        let vals: Vec<f64> = t.log.validations().filter_map(|r| r.val_psnr).collect();
        assert_eq!(vals.len(), 3);
        assert!(vals[2] > vals[0], "{vals:?}");
        assert_eq!(t.log.rows.last().unwrap().forward_passes_cum, 150 * 64);
    }
}
