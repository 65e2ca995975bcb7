//! Colour fine-tuning under a sampling network: frozen-sampler fine-tuning,
//! alternating joint updates, and scene-edit adaptation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::geometry::{Ray, SegmentParam};
use crate::math::Vec3;
use crate::networks::{ColorNet, SamplerNet};
use crate::render::volume::{deltas_for, transmittance_weights, WeightDistribution};
use crate::render::{draw_depths, stratified_depths, RenderConfig, Renderer};
use crate::supervision::make_labels;

use super::color::{adam_for, apply, batch_indices, check_finite, photometric, validation_psnr};
use super::data::{RayBatch, SceneDataset};
use super::log::MetricLog;
use super::sampler::sampler_step;
use super::TrainConfig;

/// Renderer that samples `net` through `sampler`.
pub fn terminerf_renderer<'a>(net: &'a ColorNet, sampler: &'a SamplerNet) -> Renderer<'a> {
    Renderer {
        coarse: net,
        fine: net,
        sampler: Some(sampler),
        bounds: net.bounds,
    }
}

/// Per-ray depth lists: `n_pred` draws from the sampler's distribution plus
/// `n_uniform` stratified depths over `[near, far]`, sorted. Rays the sampler
/// cannot discretise keep only the stratified part.
fn mixed_depths(sampler: &SamplerNet, rays: &[Ray], n_pred: usize, n_uniform: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    let b = sampler.bounds;
    let discs = rays.iter().map(|r| sampler.discretize(r)).collect::<Result<Vec<_>>>()?;
    let segs: Vec<SegmentParam> = discs.iter().flatten().map(|d| d.segment).collect();
    let probs = if n_pred > 0 { sampler.probabilities(&segs)? } else { Vec::new() };
    let mut p_iter = probs.iter();
    let mut out = Vec::with_capacity(rays.len());
    for d in &discs {
        let mut z = Vec::with_capacity(n_pred + n_uniform);
        if n_uniform > 0 {
            z.extend(stratified_depths(b.near, b.far, n_uniform, true, rng));
        }
        if let (Some(d), true) = (d, n_pred > 0) {
            let p = p_iter.next().expect("one distribution per discretised ray");
            z.extend(draw_depths(&d.grid, p, n_pred, b.far, true, rng)?);
        }
        z.sort_by(f64::total_cmp);
        out.push(z);
    }
    Ok(out)
}

/// Outcome of a fine-tuning run.
#[derive(Debug, Clone)]
pub struct FinetuneResult {
    pub color: ColorNet,
    pub sampler: SamplerNet,
    pub log: MetricLog,
    pub best_psnr: Option<f64>,
    pub color_updates: usize,
    pub sampler_updates: usize,
}

/// Which network an iteration of the joint schedule updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointStep {
    Color,
    Sampler,
}

/// `ratio` colour steps followed by one sampler step, repeating; every step
/// is a colour step when the sampler is frozen.
pub fn joint_schedule(iteration: usize, ratio: usize, freeze_sampler: bool) -> JointStep {
    if freeze_sampler || iteration % (ratio + 1) < ratio {
        JointStep::Color
    } else {
        JointStep::Sampler
    }
}

/// Sampler labels from the colour network's weights on the mixed sample set.
pub fn joint_labels(color: &ColorNet, sampler: &SamplerNet, rays: &[Ray], depths: &[Vec<f64>], cfg: &TrainConfig) -> Result<(Vec<SegmentParam>, Vec<Vec<f64>>)> {
    let far = color.bounds.far;
    let label_cfg = cfg.label_config();
    let mut segs = Vec::new();
    let mut labels = Vec::new();
    for (ray, z) in rays.iter().zip(depths) {
        let Some(disc) = sampler.discretize(ray)? else { continue };
        let pts: Vec<Vec3> = z.iter().map(|&t| ray.at(t)).collect();
        let dirs = vec![ray.direction; z.len()];
        let sig: Vec<f64> = color.eval(&pts, &dirs)?.iter().map(|s| s.sigma).collect();
        let w = transmittance_weights(&sig, &deltas_for(z, far))?;
        let dist = dedup(z, &w);
        segs.push(disc.segment);
        labels.push(make_labels(&dist, &label_cfg, &disc.grid)?);
    }
    Ok((segs, labels))
}

fn dedup(z: &[f64], w: &[f64]) -> WeightDistribution {
    let mut out = WeightDistribution::default();
    for (&zi, &wi) in z.iter().zip(w) {
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

fn validate_terminerf(color: &ColorNet, sampler: &SamplerNet, val: &RayBatch, background: Vec3, n: usize) -> Result<Option<f64>> {
    let cfg = RenderConfig {
        background,
        ..RenderConfig::terminerf(n)
    };
    validation_psnr(&terminerf_renderer(color, sampler), val, &cfg)
}

/// Shared fine-tuning loop. Colour steps use `n_pred` sampler draws plus
/// `n_uniform` stratified depths; sampler steps (unless frozen) regress onto
/// labels from the colour network's weights on the same mix.
fn run(
    mut color: ColorNet,
    mut sampler: SamplerNet,
    ds: &SceneDataset,
    cfg: &TrainConfig,
    iters: usize,
    lr_color: f64,
    n_pred: usize,
    n_uniform: usize,
    freeze: bool,
) -> Result<FinetuneResult> {
    cfg.validate()?;
    let mut opt_c = adam_for(&color.mlp, cfg.adam(lr_color));
    let mut opt_s = adam_for(&sampler.mlp, cfg.adam(cfg.lr_sampler));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x7017));
    let mut log = MetricLog::new(cfg.timing);
    let mut best: Option<(f64, ColorNet, SamplerNet)> = None;
    let (mut cu, mut su) = (0, 0);
    let mut passes = 0u64;
    for it in 0..iters {
        let idx = batch_indices(&mut rng, ds.train.len(), cfg.batch_rays);
        let b = ds.train.select(&idx);
        let z = mixed_depths(&sampler, &b.rays, n_pred, n_uniform, &mut rng)?;
        let sampler_pass = if n_pred > 0 { b.len() as u64 } else { 0 };
        let evals: u64 = z.iter().map(|v| v.len() as u64).sum();
        let loss = match joint_schedule(it, cfg.joint_ratio, freeze) {
            JointStep::Color => {
                let p = photometric(&color, &b.rays, &z, &b.colors, ds.background)?;
                check_finite(it, p.loss, &[&p.grads])?;
                apply(&mut color.mlp, &mut opt_c, &p.grads)?;
                cu += 1;
                p.loss
            }
            JointStep::Sampler => {
                let (segs, labels) = joint_labels(&color, &sampler, &b.rays, &z, cfg)?;
                su += 1;
                if segs.is_empty() {
                    0.0
                } else {
                    passes += segs.len() as u64;
                    sampler_step(&mut sampler, &mut opt_s, &segs, &labels, it)?
                }
            }
        };
        passes += sampler_pass + evals;

        let mut val = None;
        if (it + 1) % cfg.val_every == 0 || it + 1 == iters {
            val = validate_terminerf(&color, &sampler, &ds.val, ds.background, cfg.n_samples)?;
            let score = val.unwrap_or(-loss);
            if best.as_ref().map_or(true, |(s, _, _)| score > *s) {
                best = Some((score, color.clone(), sampler.clone()));
            }
        }
        log.push(it, loss, val, passes);
    }
    let best_psnr = log.best_val();
    let (color, sampler) = match best {
        Some((_, c, s)) => (c, s),
        None => (color, sampler),
    };
    Ok(FinetuneResult {
        color,
        sampler,
        log,
        best_psnr,
        color_updates: cu,
        sampler_updates: su,
    })
}

/// Alternating joint fine-tuning with the `n_pred + n_uniform` sample mix.
/// With `freeze_sampler` every iteration fine-tunes the colour network only.
pub fn finetune_joint(color: ColorNet, sampler: SamplerNet, ds: &SceneDataset, cfg: &TrainConfig) -> Result<FinetuneResult> {
    run(
        color,
        sampler,
        ds,
        cfg,
        cfg.joint_iters,
        cfg.lr_color,
        cfg.n_pred,
        cfg.n_uniform,
        cfg.freeze_sampler,
    )
}

/// Retrains only the colour network on an edited dataset, sampling
/// `n_samples` depths per ray from the frozen sampler.
pub fn adapt_to_edit(color: ColorNet, sampler: &SamplerNet, ds: &SceneDataset, cfg: &TrainConfig) -> Result<FinetuneResult> {
    run(
        color,
        sampler.clone(),
        ds,
        cfg,
        cfg.adapt_iters,
        cfg.lr_adapt,
        cfg.n_samples,
        0,
        true,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::presets;
    use crate::geometry::SceneBounds;
    use crate::networks::{ColorNetConfig, SamplerConfig};
    use crate::render::camera::CameraSet;

    #[test]
    fn schedule_alternates() {
        let n = 10;
        let c = (0..2 * n).filter(|&i| joint_schedule(i, 1, false) == JointStep::Color).count();
        assert_eq!(c, n);
        assert!((0..9).all(|i| joint_schedule(i, 1, true) == JointStep::Color));
        let c3 = (0..12).filter(|&i| joint_schedule(i, 3, false) == JointStep::Color).count();
        assert_eq!(c3, 9);
    }

    fn setup() -> (SceneDataset, ColorNet, SamplerNet, TrainConfig) {
        let scene = presets::red_ball();
        let cams = CameraSet::orbit(5, 4.0, 0.3, Vec3::ZERO, 10, 10).unwrap();
        let ds = SceneDataset::from_scene(&scene, &cams, 0.2, 50, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ccfg = ColorNetConfig {
            pos_freqs: 2,
            dir_freqs: 1,
            hidden: 16,
            depth: 2,
            skip: None,
        };
        let scfg = SamplerConfig {
            n_bins: 7,
            freqs: 2,
            hidden: 16,
            depth: 2,
            skip: None,
            ..SamplerConfig::DESK
        };
        let b = SceneBounds::default();
        let cfg = TrainConfig {
            batch_rays: 16,
            joint_iters: 8,
            adapt_iters: 6,
            val_every: 4,
            n_pred: 8,
            n_uniform: 4,
            n_samples: 8,
            ..TrainConfig::default()
        };
        (
            ds,
            ColorNet::new(ccfg, b, &mut rng).unwrap(),
            SamplerNet::new(scfg, b, &mut rng).unwrap(),
            cfg,
        )
    }

    #[test]
    fn joint_bookkeeping_and_pass_counts() {
        let (ds, c, s, cfg) = setup();
        let r = finetune_joint(c, s, &ds, &cfg).unwrap();
        assert_eq!((r.color_updates, r.sampler_updates), (4, 4));
        // every iteration: 1 sampler pass + 12 colour evaluations per ray, plus
        // one sampler training pass per ray on sampler steps
        let per_it = 16 * 13;
        assert_eq!(r.log.rows.last().unwrap().forward_passes_cum, (8 * per_it + 4 * 16) as u64);
        assert!(r.log.rows.iter().all(|row| row.loss.is_finite()));
    }

    #[test]
    fn adaptation_leaves_sampler_untouched() {
        let (ds, c, s, cfg) = setup();
        let before = s.mlp.param_hash();
        let r = adapt_to_edit(c, &s, &ds, &cfg).unwrap();
        assert_eq!(s.mlp.param_hash(), before);
        assert_eq!(r.sampler.mlp.param_hash(), before);
        assert_eq!(r.sampler_updates, 0);
        assert_eq!(r.log.rows.last().unwrap().forward_passes_cum, 6 * 16 * 9);
    }
}
