//! Output activations applied to raw network outputs, with their derivatives.

use super::Real;

pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// Raw colour-network row `(r, g, b, sigma)` to `([0,1]^3, sigma >= 0)`.
pub fn color_head<T: Real>(raw: &[T]) -> ([T; 3], T) {
    ([sigmoid(raw[0]), sigmoid(raw[1]), sigmoid(raw[2])], softplus(raw[3]))
}

/// Gradient of the colour head with respect to its raw input.
pub fn color_head_backward<T: Real>(raw: &[T], d_rgb: [T; 3], d_sigma: T) -> [T; 4] {
    let mut out = [T::zero(); 4];
    for c in 0..3 {
        let s = sigmoid(raw[c]);
        out[c] = d_rgb[c] * s * (T::one() - s);
    }
    out[3] = d_sigma * sigmoid(raw[3]);
    out
}

/// Softplus followed by normalisation to a probability vector.
pub fn sampler_head<T: Real>(raw: &[T]) -> Vec<T> {
    let s: Vec<T> = raw.iter().map(|&r| softplus(r)).collect();
    let total = s.iter().copied().sum::<T>().max(T::min_positive_value());
    s.into_iter().map(|v| v / total).collect()
}

/// Gradient of [`sampler_head`] with respect to `raw`, given `d_probs`.
pub fn sampler_head_backward<T: Real>(raw: &[T], probs: &[T], d_probs: &[T]) -> Vec<T> {
    let total = raw.iter().map(|&r| softplus(r)).sum::<T>().max(T::min_positive_value());
    let dot: T = d_probs.iter().zip(probs).map(|(&d, &p)| d * p).sum();
    raw.iter()
        .zip(d_probs)
        .map(|(&r, &d)| (d - dot) / total * sigmoid(r))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input_gives_half_rgb() {
        let (rgb, sigma) = color_head(&[0.0f64; 4]);
        assert_eq!(rgb, [0.5; 3]);
        assert!((sigma - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(1000.0f64), 1000.0);
        assert!(softplus(-1000.0f64) >= 0.0);
        assert!((softplus(0.3f64) - (1.0 + 0.3f64.exp()).ln()).abs() < 1e-15);
    }

    #[test]
    fn sampler_head_normalizes() {
        let p = sampler_head(&[0.2f64, -1.0, 3.0, 0.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn head_gradients_match_differences() {
        let raw = [0.3f64, -0.7, 1.1, -0.2, 0.9];
        let dp = [0.5, -1.0, 0.25, 2.0, -0.3];
        let loss = |r: &[f64]| sampler_head(r).iter().zip(&dp).map(|(a, b)| a * b).sum::<f64>();
        let probs = sampler_head(&raw);
        let g = sampler_head_backward(&raw, &probs, &dp);
        for k in 0..raw.len() {
            let mut hi = raw;
            let mut lo = raw;
            hi[k] += 1e-6;
            lo[k] -= 1e-6;
            let num = (loss(&hi) - loss(&lo)) / 2e-6;
            assert!((num - g[k]).abs() < 1e-8, "{k}: {num} vs {}", g[k]);
        }

        let raw = [0.4f64, -2.0, 0.1, 0.7];
        let (d_rgb, d_s) = ([1.0, -0.5, 2.0], 0.7);
        let f = |r: &[f64]| {
            let (c, s) = color_head(r);
            c[0] * d_rgb[0] + c[1] * d_rgb[1] + c[2] * d_rgb[2] + s * d_s
        };
        let g = color_head_backward(&raw, d_rgb, d_s);
        for k in 0..4 {
            let mut hi = raw;
            let mut lo = raw;
            hi[k] += 1e-6;
            lo[k] -= 1e-6;
            assert!(((f(&hi) - f(&lo)) / 2e-6 - g[k]).abs() < 1e-8);
        }
    }
}
