//! Training rays with target colours, split into train/validation by camera.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::AnalyticScene;
use crate::geometry::{Ray, SceneBounds};
use crate::math::Vec3;
use crate::render::camera::CameraSet;
use crate::render::image::ImageBuffer;
use crate::render::{RenderConfig, Renderer};

/// Rays with target pixel colours. `ids` index `frame * W * H + pixel`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RayBatch {
    pub rays: Vec<Ray>,
    pub colors: Vec<Vec3>,
    pub ids: Vec<u64>,
}

impl RayBatch {
    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }

    pub fn push(&mut self, ray: Ray, color: Vec3, id: u64) {
        self.rays.push(ray);
        self.colors.push(color);
        self.ids.push(id);
    }

    pub fn select(&self, idx: &[usize]) -> RayBatch {
        RayBatch {
            rays: idx.iter().map(|&i| self.rays[i]).collect(),
            colors: idx.iter().map(|&i| self.colors[i]).collect(),
            ids: idx.iter().map(|&i| self.ids[i]).collect(),
        }
    }
}

/// Photometric dataset. Only rays that hit the bounds sphere are kept: the
/// others always render the background and carry no gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneDataset {
    pub bounds: SceneBounds,
    pub background: Vec3,
    pub train: RayBatch,
    pub val: RayBatch,
    pub train_frames: Vec<usize>,
    pub val_frames: Vec<usize>,
}

/// Holds out `round(fraction * n)` frames (at least one when `n >= 2` and
/// `fraction > 0`), chosen by `seed`.
pub fn split_frames(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5b1d));
    let n_val = if n >= 2 && fraction > 0.0 {
        ((fraction * n as f64).round() as usize).clamp(1, n - 1)
    } else {
        0
    };
    let mut val = idx[..n_val].to_vec();
    let mut train = idx[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

impl SceneDataset {
    /// Builds the dataset from images aligned with `cameras`.
    pub fn from_images(
        bounds: SceneBounds,
        background: Vec3,
        cameras: &CameraSet,
        images: &[ImageBuffer],
        val_fraction: f64,
        val_rays: usize,
        seed: u64,
    ) -> Result<Self> {
        if images.len() != cameras.len() {
            return Err(Error::ShapeMismatch {
                expected: cameras.len(),
                got: images.len(),
            });
        }
        if cameras.is_empty() {
            return Err(Error::Config("dataset needs at least one camera".into()));
        }
        let (train_frames, val_frames) = split_frames(cameras.len(), val_fraction, seed);
        let collect = |frames: &[usize]| -> Result<RayBatch> {
            let mut b = RayBatch::default();
            for &f in frames {
                let cam = cameras.camera(f);
                let img = &images[f];
                if img.width != cam.width || img.height != cam.height {
                    return Err(Error::DimensionMismatch {
                        a: (cam.width, cam.height),
                        b: (img.width, img.height),
                    });
                }
                for y in 0..cam.height {
                    for x in 0..cam.width {
                        let ray = cam.ray(x, y);
                        if bounds.ray_hits(&ray) {
                            let id = (f * cam.n_pixels() + y * cam.width + x) as u64;
                            b.push(ray, img.get(x, y), id);
                        }
                    }
                }
            }
            Ok(b)
        };
        let train = collect(&train_frames)?;
        let mut val = collect(&val_frames)?;
        if val.len() > val_rays {
            let mut idx: Vec<usize> = (0..val.len()).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(1)));
            idx.truncate(val_rays);
            idx.sort_unstable();
            val = val.select(&idx);
        }
        if train.is_empty() {
            return Err(Error::Config("no training ray hits the scene".into()));
        }
        Ok(Self {
            bounds,
            background,
            train,
            val,
            train_frames,
            val_frames,
        })
    }

    /// Renders every camera with the dense oracle and builds the dataset.
    pub fn from_scene(scene: &AnalyticScene, cameras: &CameraSet, val_fraction: f64, val_rays: usize, seed: u64) -> Result<Self> {
        let images = render_oracle_images(scene, cameras)?;
        Self::from_images(scene.bounds, Vec3::ONE, cameras, &images, val_fraction, val_rays, seed)
    }
}

pub fn render_oracle_images(scene: &AnalyticScene, cameras: &CameraSet) -> Result<Vec<ImageBuffer>> {
    let r = Renderer::analytic(scene);
    let cfg = RenderConfig::oracle();
    cameras.cameras().map(|c| r.render_image(&c, &cfg).map(|(img, _)| img)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::presets;

    #[test]
    fn split_is_seeded_and_disjoint() {
        let (t, v) = split_frames(20, 0.1, 3);
        assert_eq!(v.len(), 2);
        assert_eq!(t.len(), 18);
        assert!(v.iter().all(|i| !t.contains(i)));
        assert_eq!(split_frames(20, 0.1, 3), (t, v));
        assert_eq!(split_frames(1, 0.1, 0).1.len(), 0);
    }

    #[test]
    fn dataset_keeps_hitting_rays() {
        let scene = presets::red_ball();
        let cams = CameraSet::orbit(4, 4.0, 0.2, Vec3::ZERO, 8, 8).unwrap();
        let ds = SceneDataset::from_scene(&scene, &cams, 0.25, 10, 0).unwrap();
        assert_eq!(ds.val_frames.len(), 1);
        assert!(ds.val.len() <= 10);
        assert!(ds.train.rays.iter().all(|r| scene.bounds.ray_hits(r)));
    }
}
