//! Emission-absorption quadrature and inverse-CDF sampling over bins.

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::BinGrid;
use crate::math::Vec3;

/// Paired `(z, w)` samples of ray-termination mass.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightDistribution {
    pub z: Vec<f64>,
    pub w: Vec<f64>,
}

impl WeightDistribution {
    pub fn new(z: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        if z.len() != w.len() {
            return Err(Error::ShapeMismatch {
                expected: z.len(),
                got: w.len(),
            });
        }
        if z.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::Format("weight distribution z must be strictly increasing".into()));
        }
        if w.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::Format("weights must be non-negative".into()));
        }
        Ok(Self { z, w })
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.w.iter().sum()
    }

    /// Linear interpolation of the weights at `z`, clamped to the end values
    /// outside the recorded range.
    pub fn interpolate(&self, z: f64) -> f64 {
        let n = self.z.len();
        if n == 0 {
            return 0.0;
        }
        if z <= self.z[0] {
            return self.w[0];
        }
        if z >= self.z[n - 1] {
            return self.w[n - 1];
        }
        // first index with self.z[i] > z
        let i = self.z.partition_point(|&v| v <= z);
        let (z0, z1) = (self.z[i - 1], self.z[i]);
        let t = (z - z0) / (z1 - z0);
        self.w[i - 1] + t * (self.w[i] - self.w[i - 1])
    }
}

/// Termination weights `w_i = exp(-sum_{j<i} sigma_j delta_j) (1 - exp(-sigma_i delta_i))`.
pub fn transmittance_weights(sigmas: &[f64], deltas: &[f64]) -> Result<Vec<f64>> {
    if sigmas.len() != deltas.len() {
        return Err(Error::ShapeMismatch {
            expected: sigmas.len(),
            got: deltas.len(),
        });
    }
    let mut out = Vec::with_capacity(sigmas.len());
    let mut optical_depth = 0.0f64;
    for (i, (&sigma, &delta)) in sigmas.iter().zip(deltas).enumerate() {
        if sigma < 0.0 || sigma.is_nan() {
            return Err(Error::NegativeDensity { index: i, value: sigma });
        }
        let tau = sigma * delta;
        out.push((-optical_depth).exp() * (-(-tau).exp_m1()));
        optical_depth += tau;
    }
    Ok(out)
}

/// Quadrature spacings for sorted sample depths: `z_{i+1} - z_i`, with the
/// last sample's spacing capped at `far - z_last` (never negative).
pub fn deltas_for(z: &[f64], far: f64) -> Vec<f64> {
    let n = z.len();
    let mut d = Vec::with_capacity(n);
    for i in 0..n {
        let next = if i + 1 < n { z[i + 1] } else { far };
        d.push((next - z[i]).max(0.0));
    }
    d
}

/// `C = sum w_i c_i + (1 - sum w_i) background`, clamped to `[0, 1]`.
pub fn composite_color(weights: &[f64], colors: &[Vec3], background: Vec3) -> Vec3 {
    composite_unclamped(weights, colors, background).clamp01()
}

pub fn composite_unclamped(weights: &[f64], colors: &[Vec3], background: Vec3) -> Vec3 {
    debug_assert_eq!(weights.len(), colors.len());
    let mut c = Vec3::ZERO;
    let mut total = 0.0;
    for (&w, &col) in weights.iter().zip(colors) {
        c += col * w;
        total += w;
    }
    c + background * (1.0 - total)
}

/// Gradients of the unclamped composite colour with respect to each sample's
/// density and colour, given `dl_dc = dL/dC`.
///
/// Returns `(dL/dsigma_i, dL/dc_i)`.
pub fn composite_backward(
    sigmas: &[f64],
    deltas: &[f64],
    colors: &[Vec3],
    background: Vec3,
    dl_dc: Vec3,
) -> (Vec<f64>, Vec<Vec3>) {
    let n = sigmas.len();
    let mut trans = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    trans.push(1.0);
    for i in 0..n {
        acc += sigmas[i] * deltas[i];
        trans.push((-acc).exp());
    }
    let mut d_sigma = vec![0.0; n];
    let mut d_color = vec![Vec3::ZERO; n];
    // suffix = sum_{i>k} w_i c_i + T_{n} * background, built back to front
    let mut suffix = background * trans[n];
    for k in (0..n).rev() {
        let w = trans[k] - trans[k + 1];
        d_color[k] = dl_dc * w;
        let dc_dsigma = (colors[k] * trans[k + 1] - suffix) * deltas[k];
        d_sigma[k] = dl_dc.dot(dc_dsigma);
        suffix += colors[k] * w;
    }
    (d_sigma, d_color)
}

/// Draws `n` depths from the piecewise-constant density that puts mass
/// `weights[j]` uniformly over bin `j` (the open last bin ends at `far`).
///
/// Deterministic mode uses the midpoints of `n` equal-mass quantiles; the
/// stochastic mode draws independent uniforms. Output is sorted.
pub fn sample_from_bins<R: Rng + ?Sized>(
    grid: &BinGrid,
    weights: &[f64],
    n: usize,
    far: f64,
    stochastic: bool,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let n_bins = grid.n_bins();
    if weights.len() != n_bins {
        return Err(Error::ShapeMismatch {
            expected: n_bins,
            got: weights.len(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidCount {
            count: n,
            reason: "need at least one sample",
        });
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegenerateDistribution);
    }
    let mut cdf = Vec::with_capacity(n_bins + 1);
    let mut acc = 0.0;
    cdf.push(0.0);
    for &w in weights {
        acc += w.max(0.0) / total;
        cdf.push(acc);
    }
    let mut us: Vec<f64> = if stochastic {
        (0..n).map(|_| rng.gen::<f64>()).collect()
    } else {
        (0..n).map(|k| (k as f64 + 0.5) / n as f64).collect()
    };
    us.sort_by(f64::total_cmp);
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    for u in us {
        // advance to the bin whose cdf interval contains u, skipping empty bins
        while j + 1 < n_bins && (cdf[j + 1] <= u || weights[j] <= 0.0) {
            j += 1;
        }
        while weights[j] <= 0.0 && j > 0 {
            j -= 1;
        }
        let (lo, hi) = grid.bin_extent(j, far);
        let mass = cdf[j + 1] - cdf[j];
        let t = if mass > 0.0 {
            ((u - cdf[j]) / mass).clamp(0.0, 1.0)
        } else {
            0.5
        };
        out.push(lo + t * (hi - lo));
    }
    out.sort_by(f64::total_cmp);
    Ok(out)
}
