//! Turning recorded termination weights into sampler labels: equalise,
//! Gaussian blur, max-resample onto the sampler's bins, normalise.

use crate::error::{Error, Result};
use crate::geometry::BinGrid;
use crate::render::volume::WeightDistribution;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelConfig {
    /// Blur window in samples (odd); 1 disables the blur.
    pub kernel_size: usize,
    /// Gaussian standard deviation in sample-index units.
    pub sigma: f64,
    /// Resample onto an equidistant grid before blurring.
    pub equalize: bool,
    /// Equalised sample count; `None` keeps the source count.
    pub equalize_samples: Option<usize>,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            kernel_size: 9,
            sigma: 3.0,
            equalize: true,
            equalize_samples: None,
        }
    }
}

impl LabelConfig {
    pub fn no_blur() -> Self {
        Self {
            kernel_size: 1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_size == 0 || self.kernel_size % 2 == 0 {
            return Err(Error::Config(format!("blur kernel size {} must be odd", self.kernel_size)));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::Config(format!("blur sigma {} must be positive", self.sigma)));
        }
        if let Some(n) = self.equalize_samples {
            if n < 2 {
                return Err(Error::Config("equalisation needs at least 2 samples".into()));
            }
        }
        Ok(())
    }
}

fn mean_spacing(z: &[f64]) -> f64 {
    if z.len() < 2 {
        0.0
    } else {
        (z[z.len() - 1] - z[0]) / (z.len() - 1) as f64
    }
}

/// Gaussian-weighted average of each weight with its neighbours within ray
/// distance `d / 2`, where `d = K * spacing` and the Gaussian's `sigma` is
/// measured in units of the mean sample spacing.
pub fn gaussian_blur_weights(dist: &WeightDistribution, cfg: &LabelConfig) -> WeightDistribution {
    let n = dist.len();
    let spacing = mean_spacing(&dist.z);
    if cfg.kernel_size <= 1 || n < 2 || !(spacing > 0.0) {
        return dist.clone();
    }
    // slack keeps the window symmetric when neighbours sit exactly on its edge
    let half = 0.5 * cfg.kernel_size as f64 * spacing * (1.0 + 1e-9);
    let inv = 1.0 / (2.0 * cfg.sigma * cfg.sigma * spacing * spacing);
    let mut out = Vec::with_capacity(n);
    let mut lo = 0;
    let mut hi = 0;
    for i in 0..n {
        let zi = dist.z[i];
        while zi - dist.z[lo] > half {
            lo += 1;
        }
        while hi < n && dist.z[hi] - zi <= half {
            hi += 1;
        }
        let (mut num, mut den) = (0.0, 0.0);
        for j in lo..hi {
            let dz = dist.z[j] - zi;
            let g = (-dz * dz * inv).exp();
            num += g * dist.w[j];
            den += g;
        }
        out.push(num / den);
    }
    WeightDistribution {
        z: dist.z.clone(),
        w: out,
    }
}

/// Resamples onto `n` equidistant depths spanning the source range. Each
/// target takes the largest source weight within half a spacing of it, or
/// the linear interpolation when no source falls there, so no peak is lost.
pub fn equalize_samples(dist: &WeightDistribution, n: usize) -> Result<WeightDistribution> {
    if dist.is_empty() {
        return Err(Error::EmptySource);
    }
    if n < 2 {
        return Err(Error::InvalidCount {
            count: n,
            reason: "equalisation needs at least 2 samples",
        });
    }
    let (z0, z1) = (dist.z[0], dist.z[dist.len() - 1]);
    if !(z1 > z0) {
        return Ok(WeightDistribution {
            z: vec![z0],
            w: vec![dist.w[0]],
        });
    }
    let step = (z1 - z0) / (n - 1) as f64;
    let mut z = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    let mut j = 0;
    for k in 0..n {
        let zk = z0 + step * k as f64;
        let upper = if k + 1 == n { f64::INFINITY } else { zk + 0.5 * step };
        let mut best: Option<f64> = None;
        while j < dist.len() && dist.z[j] < upper {
            best = Some(best.map_or(dist.w[j], |b: f64| b.max(dist.w[j])));
            j += 1;
        }
        z.push(zk);
        w.push(best.unwrap_or_else(|| dist.interpolate(zk)));
    }
    Ok(WeightDistribution { z, w })
}

/// For every target bin `[e_j, e_{j+1}]`, the largest of the source weights
/// inside it and the source's linear interpolation at both edges. The open
/// last bin `[e_last, inf)` uses its left edge only. Interpolation beyond the
/// source range repeats the nearest source weight.
pub fn max_resample(dist: &WeightDistribution, target: &BinGrid) -> Result<Vec<f64>> {
    if dist.is_empty() {
        return Err(Error::EmptySource);
    }
    let e = target.boundaries();
    let n_bins = target.n_bins();
    let mut out = Vec::with_capacity(n_bins);
    for j in 0..n_bins {
        let lo = e[j];
        let hi = e.get(j + 1).copied();
        let mut m = dist.interpolate(lo);
        if let Some(hi) = hi {
            m = m.max(dist.interpolate(hi));
        }
        let start = dist.z.partition_point(|&z| z < lo);
        let end = match hi {
            Some(hi) => dist.z.partition_point(|&z| z <= hi),
            None => dist.len(),
        };
        for &w in &dist.w[start..end.max(start)] {
            m = m.max(w);
        }
        out.push(m);
    }
    Ok(out)
}

/// Scales to unit sum; an all-zero vector becomes uniform.
pub fn normalize(weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    if total > 0.0 && total.is_finite() {
        weights.iter().map(|w| w / total).collect()
    } else {
        vec![1.0 / weights.len().max(1) as f64; weights.len()]
    }
}

/// Full label pipeline: optional equalisation, blur, max-resample onto
/// `target`, normalisation.
pub fn make_labels(raw: &WeightDistribution, cfg: &LabelConfig, target: &BinGrid) -> Result<Vec<f64>> {
    cfg.validate()?;
    if raw.is_empty() {
        return Err(Error::EmptySource);
    }
    if raw.total() <= 0.0 {
        return Ok(normalize(&vec![0.0; target.n_bins()]));
    }
    let eq;
    let src = if cfg.equalize && raw.len() >= 2 {
        eq = equalize_samples(raw, cfg.equalize_samples.unwrap_or(raw.len()))?;
        &eq
    } else {
        raw
    };
    let blurred = gaussian_blur_weights(src, cfg);
    Ok(normalize(&max_resample(&blurred, target)?))
}
