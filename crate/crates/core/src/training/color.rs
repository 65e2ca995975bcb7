//! Photometric training of the coarse/fine colour networks.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Ray, SceneBounds};
use crate::math::Vec3;
use crate::networks::{ColorNet, ColorRole};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::heads::color_head_backward;
use crate::nn::{AdamConfig, AdamState, Gradients, Mlp};
use crate::render::image::psnr_from_mse;
use crate::render::volume::{composite_backward, composite_unclamped, deltas_for, transmittance_weights};
use crate::render::{hierarchical_depths, stratified_depths, RenderConfig, Renderer};

use super::data::{RayBatch, SceneDataset};
use super::log::MetricLog;
use super::TrainConfig;

/// The coarse and fine colour networks of the hierarchical renderer.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorPair {
    pub coarse: ColorNet,
    pub fine: ColorNet,
}

impl ColorPair {
    pub fn new(cfg: &TrainConfig, bounds: SceneBounds) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Self {
            coarse: ColorNet::new(cfg.color_net(), bounds, &mut rng)?,
            fine: ColorNet::new(cfg.color_net(), bounds, &mut rng)?,
        })
    }

    pub fn renderer(&self) -> Renderer<'_> {
        Renderer {
            coarse: &self.coarse,
            fine: &self.fine,
            sampler: None,
            bounds: self.fine.bounds,
        }
    }

    pub fn checkpoints(&self) -> [Checkpoint; 2] {
        [
            self.coarse.to_checkpoint(ColorRole::Coarse),
            self.fine.to_checkpoint(ColorRole::Fine),
        ]
    }

    /// Assembles a pair from checkpoints in any order. A lone fine network
    /// fills both slots.
    pub fn from_checkpoints(cks: &[Checkpoint]) -> Result<Self> {
        let (mut coarse, mut fine) = (None, None);
        for ck in cks {
            if let Ok((net, role)) = ColorNet::from_checkpoint(ck) {
                match role {
                    ColorRole::Coarse => coarse = Some(net),
                    ColorRole::Fine => fine = Some(net),
                }
            }
        }
        match (coarse, fine) {
            (Some(c), Some(f)) => Ok(Self { coarse: c, fine: f }),
            (None, Some(f)) => Ok(Self { coarse: f.clone(), fine: f }),
            _ => Err(Error::Config("a fine colour-network checkpoint is required".into())),
        }
    }
}

/// Adam state shaped like `mlp`'s parameters.
pub fn adam_for(mlp: &Mlp<f32>, config: AdamConfig) -> AdamState<f32> {
    let shapes: Vec<usize> = mlp.params().iter().map(|p| p.len()).collect();
    AdamState::new(config, &shapes)
}

pub(crate) fn apply(mlp: &mut Mlp<f32>, opt: &mut AdamState<f32>, grads: &Gradients<f32>) -> Result<()> {
    let g = grads.slices();
    opt.step(&mut mlp.params_mut(), &g)
}

/// Loss, parameter gradients and per-ray weights of one photometric pass.
#[derive(Debug, Clone)]
pub struct Photometric {
    /// `mean |C - C_gt|^2` over rays and channels.
    pub loss: f64,
    pub grads: Gradients<f32>,
    pub weights: Vec<Vec<f64>>,
    pub colors: Vec<Vec3>,
}

/// Renders `rays` at `depths` through `net` and backpropagates the
/// mean-squared colour error against `targets`.
pub fn photometric(net: &ColorNet, rays: &[Ray], depths: &[Vec<f64>], targets: &[Vec3], background: Vec3) -> Result<Photometric> {
    if rays.len() != depths.len() || rays.len() != targets.len() {
        return Err(Error::ShapeMismatch {
            expected: rays.len(),
            got: depths.len().min(targets.len()),
        });
    }
    let far = net.bounds.far;
    let total: usize = depths.iter().map(Vec::len).sum();
    let mut points = Vec::with_capacity(total);
    let mut dirs = Vec::with_capacity(total);
    for (r, z) in rays.iter().zip(depths) {
        for &t in z {
            points.push(r.at(t));
            dirs.push(r.direction);
        }
    }
    let cache = net.mlp.forward(&net.encode(&points, &dirs), total)?;
    let raw = &cache.output;
    let scale = 2.0 / (3.0 * rays.len().max(1) as f64);

    let mut d_raw = vec![0.0f32; raw.len()];
    let mut loss = 0.0;
    let mut weights = Vec::with_capacity(rays.len());
    let mut colors = Vec::with_capacity(rays.len());
    let mut off = 0;
    for (z, &target) in depths.iter().zip(targets) {
        let n = z.len();
        let samples: Vec<_> = (off..off + n).map(|k| net.decode(&raw[4 * k..4 * k + 4], points[k])).collect();
        let sig: Vec<f64> = samples.iter().map(|s| s.sigma).collect();
        let col: Vec<Vec3> = samples.iter().map(|s| s.color).collect();
        let deltas = deltas_for(z, far);
        let w = transmittance_weights(&sig, &deltas)?;
        let c = composite_unclamped(&w, &col, background);
        let err = c - target;
        loss += err.dot(err);
        let (d_sig, d_col) = composite_backward(&sig, &deltas, &col, background, err * scale);
        for i in 0..n {
            let k = off + i;
            let ds = if net.active(points[k]) { d_sig[i] as f32 } else { 0.0 };
            let dc = d_col[i].to_array().map(|v| v as f32);
            d_raw[4 * k..4 * k + 4].copy_from_slice(&color_head_backward(&raw[4 * k..4 * k + 4], dc, ds));
        }
        weights.push(w);
        colors.push(c);
        off += n;
    }
    let grads = net.mlp.backward(&cache, &d_raw)?;
    Ok(Photometric {
        loss: loss / (3.0 * rays.len().max(1) as f64),
        grads,
        weights,
        colors,
    })
}

pub(crate) fn check_finite(iteration: usize, loss: f64, grads: &[&Gradients<f32>]) -> Result<()> {
    if !loss.is_finite() {
        return Err(Error::Divergence {
            iteration,
            detail: format!("loss became {loss}"),
        });
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::Divergence {
            iteration,
            detail: "non-finite gradient".into(),
        });
    }
    Ok(())
}

pub(crate) fn batch_indices(rng: &mut ChaCha8Rng, len: usize, batch: usize) -> Vec<usize> {
    if batch >= len {
        (0..len).collect()
    } else {
        sample(rng, len, batch).into_vec()
    }
}

/// PSNR of `renderer` under `cfg` against the colours of `val`.
pub fn validation_psnr(renderer: &Renderer<'_>, val: &RayBatch, cfg: &RenderConfig) -> Result<Option<f64>> {
    if val.is_empty() {
        return Ok(None);
    }
    let traces = renderer.render_rays(&val.rays, &val.ids, cfg)?;
    let mse = traces
        .iter()
        .zip(&val.colors)
        .map(|(t, &c)| {
            let e = t.color - c;
            e.dot(e)
        })
        .sum::<f64>()
        / (3 * val.len()) as f64;
    Ok(Some(psnr_from_mse(mse)))
}

/// Result of a colour-network run: the best-validating pair and its log.
#[derive(Debug, Clone)]
pub struct ColorTraining {
    pub pair: ColorPair,
    pub log: MetricLog,
    pub best_psnr: Option<f64>,
}

/// Hierarchical photometric training from scratch at `lr_color_pretrain`.
///
/// Each iteration draws `batch_rays` rays, renders them with stratified
/// coarse samples and fine samples on the union, and updates both networks.
/// `forward_passes_cum` counts training evaluations only.
pub fn train_color(ds: &SceneDataset, cfg: &TrainConfig) -> Result<ColorTraining> {
    cfg.validate()?;
    let mut pair = ColorPair::new(cfg, ds.bounds)?;
    let adam = cfg.adam(cfg.lr_color_pretrain);
    let mut opt_c = adam_for(&pair.coarse.mlp, adam);
    let mut opt_f = adam_for(&pair.fine.mlp, adam);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0xc0102));
    let mut log = MetricLog::new(cfg.timing);
    let (near, far) = (ds.bounds.near, ds.bounds.far);
    let val_cfg = RenderConfig {
        background: ds.background,
        ..RenderConfig::coarse_fine(cfg.n_coarse, cfg.n_fine)
    };
    let mut best: Option<(f64, ColorPair)> = None;
    let mut passes = 0u64;

    for it in 0..cfg.color_iters {
        let idx = batch_indices(&mut rng, ds.train.len(), cfg.batch_rays);
        let b = ds.train.select(&idx);
        let zc: Vec<Vec<f64>> = b
            .rays
            .iter()
            .map(|_| stratified_depths(near, far, cfg.n_coarse, true, &mut rng))
            .collect();
        let pc = photometric(&pair.coarse, &b.rays, &zc, &b.colors, ds.background)?;
        let zf = zc
            .iter()
            .zip(&pc.weights)
            .map(|(z, w)| hierarchical_depths(z, w, cfg.n_fine, far, true, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let pf = photometric(&pair.fine, &b.rays, &zf, &b.colors, ds.background)?;
        let loss = pc.loss + pf.loss;
        check_finite(it, loss, &[&pc.grads, &pf.grads])?;
        apply(&mut pair.coarse.mlp, &mut opt_c, &pc.grads)?;
        apply(&mut pair.fine.mlp, &mut opt_f, &pf.grads)?;
        passes += (b.len() * (2 * cfg.n_coarse + cfg.n_fine)) as u64;

        let mut val = None;
        if (it + 1) % cfg.val_every == 0 || it + 1 == cfg.color_iters {
            val = validation_psnr(&pair.renderer(), &ds.val, &val_cfg)?;
            let score = val.unwrap_or(-loss);
            if best.as_ref().map_or(true, |(s, _)| score > *s) {
                best = Some((score, pair.clone()));
            }
        }
        log.push(it, loss, val, passes);
    }
    let best_psnr = log.best_val();
    let pair = best.map(|(_, p)| p).unwrap_or(pair);
    Ok(ColorTraining { pair, log, best_psnr })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::presets;
    use crate::networks::ColorNetConfig;
    use crate::render::camera::CameraSet;

    fn tiny_net(seed: u64) -> ColorNet {
        let cfg = ColorNetConfig {
            pos_freqs: 2,
            dir_freqs: 1,
            hidden: 8,
            depth: 2,
            skip: None,
        };
        ColorNet::new(cfg, SceneBounds::default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn photometric_gradient_matches_finite_difference() {
        let net = tiny_net(3);
        let rays = [Ray::new(Vec3::new(0.1, -4.0, 0.2), Vec3::new(0.0, 1.0, 0.0))];
        let depths = [vec![3.0, 3.5, 4.0, 4.5, 5.0]];
        let target = [Vec3::new(0.2, 0.7, 0.4)];
        let p = photometric(&net, &rays, &depths, &target, Vec3::ONE).unwrap();
        for (layer, idx) in [(0usize, 3usize), (1, 0), (2, 5)] {
            let h = 1e-2f32;
            let mut plus = net.clone();
            plus.mlp.layers_mut()[layer].weight[idx] += h;
            let mut minus = net.clone();
            minus.mlp.layers_mut()[layer].weight[idx] -= h;
            let lp = photometric(&plus, &rays, &depths, &target, Vec3::ONE).unwrap().loss;
            let lm = photometric(&minus, &rays, &depths, &target, Vec3::ONE).unwrap().loss;
            let fd = (lp - lm) / (2.0 * h as f64);
            let an = p.grads.weights[layer][idx] as f64;
            assert!((fd - an).abs() < 1e-3 + 0.05 * an.abs(), "layer {layer}: fd {fd} vs {an}");
        }
    }

    #[test]
    fn short_training_improves_loss() {
        let scene = presets::red_ball();
        let cams = CameraSet::orbit(6, 4.0, 0.3, Vec3::ZERO, 12, 12).unwrap();
        let ds = SceneDataset::from_scene(&scene, &cams, 0.2, 64, 0).unwrap();
        let cfg = TrainConfig {
            color_iters: 60,
            val_every: 30,
            batch_rays: 64,
            n_coarse: 16,
            n_fine: 16,
            color_hidden: 32,
            color_depth: 2,
            pos_freqs: 3,
            dir_freqs: 1,
            ..TrainConfig::default()
        };
        let t = train_color(&ds, &cfg).unwrap();
        let first = t.log.rows[0].loss;
        let last = t.log.rows.iter().rev().take(10).map(|r| r.loss).sum::<f64>() / 10.0;
        assert!(last < first, "{first} -> {last}");
        assert_eq!(t.log.validations().count(), 2);
        assert_eq!(t.log.rows.last().unwrap().forward_passes_cum, 60 * 64 * 48);
    }
}
