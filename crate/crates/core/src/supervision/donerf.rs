//! Single-depth classification labels in the style of depth-oracle networks:
//! a one-hot bin per ray, smoothed across neighbouring pixels and along the
//! ray.

use crate::error::{Error, Result};
use crate::geometry::BinGrid;
use crate::render::volume::WeightDistribution;

/// One-hot label for depth `depth` on `grid`: bin `z` with
/// `d_z <= depth < d_{z+1}`. Depths before the first boundary go to bin 0,
/// and `depth == far` lands in the last bin.
pub fn donerf_classify(depth: f64, grid: &BinGrid, near: f64, far: f64) -> Result<Vec<f64>> {
    if !(depth >= near && depth <= far) {
        return Err(Error::DepthOutOfRange { depth, near, far });
    }
    let n = grid.n_bins();
    let idx = grid.boundaries().partition_point(|&e| e <= depth);
    let bin = idx.saturating_sub(1).min(n - 1);
    let mut out = vec![0.0; n];
    out[bin] = 1.0;
    Ok(out)
}

/// Depth at which the cumulative termination weight first reaches half of
/// the ray's total; `None` for rays without mass.
pub fn median_depth(dist: &WeightDistribution) -> Option<f64> {
    let total = dist.total();
    if !(total > 0.0) {
        return None;
    }
    let mut acc = 0.0;
    for (&z, &w) in dist.z.iter().zip(&dist.w) {
        acc += w;
        if acc >= 0.5 * total {
            return Some(z);
        }
    }
    dist.z.last().copied()
}

/// Image-space max filter with radial penalty followed by a triangular filter
/// along the bins, clamped to `[0, 1]`.
///
/// `labels` holds `width * height` per-ray vectors in row-major pixel order.
pub fn donerf_blur_filter(
    labels: &[Vec<f64>],
    width: usize,
    height: usize,
    k: usize,
    z: usize,
) -> Result<Vec<Vec<f64>>> {
    if labels.len() != width * height {
        return Err(Error::ShapeMismatch {
            expected: width * height,
            got: labels.len(),
        });
    }
    let n_bins = labels.first().map_or(0, Vec::len);
    if labels.iter().any(|l| l.len() != n_bins) {
        return Err(Error::Format("label vectors differ in length".into()));
    }
    let hk = (k / 2) as isize;
    let hz = (z / 2) as isize;
    let norm = std::f64::consts::SQRT_2 * hk as f64;

    let mut out = Vec::with_capacity(labels.len());
    for y in 0..height as isize {
        for x in 0..width as isize {
            // neighbourhood max; the unpenalised centre term keeps it >= the input
            let mut spatial = labels[(y as usize) * width + x as usize].clone();
            for j in -hk..=hk {
                for i in -hk..=hk {
                    if i == 0 && j == 0 {
                        continue;
                    }
                    let (xx, yy) = (x + i, y + j);
                    if xx < 0 || yy < 0 || xx >= width as isize || yy >= height as isize {
                        continue;
                    }
                    let penalty = ((i * i + j * j) as f64).sqrt() / norm;
                    let nb = &labels[(yy as usize) * width + xx as usize];
                    for (s, &v) in spatial.iter_mut().zip(nb) {
                        *s = s.max(v - penalty);
                    }
                }
            }
            spatial.iter_mut().for_each(|v| *v = v.max(0.0));

            let mut filtered = vec![0.0; n_bins];
            for (b, f) in filtered.iter_mut().enumerate() {
                let mut acc = 0.0;
                for i in -hz..=hz {
                    let bb = b as isize + i;
                    if bb < 0 || bb >= n_bins as isize {
                        continue;
                    }
                    let tri = (hz + 1 - i.abs()) as f64 / (hz + 1) as f64;
                    acc += spatial[bb as usize] * tri;
                }
                *f = acc.min(1.0);
            }
            out.push(filtered);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> BinGrid {
        BinGrid::new(vec![2.0, 3.0, 4.0, 5.0, 6.0], false).unwrap()
    }

    #[test]
    fn classification() {
        assert_eq!(donerf_classify(4.5, &grid(), 2.0, 6.0).unwrap(), vec![0.0, 0.0, 1.0, 0.0]);
        // a boundary belongs to the bin it opens
        assert_eq!(donerf_classify(3.0, &grid(), 2.0, 6.0).unwrap(), vec![0.0, 1.0, 0.0, 0.0]);
        assert_eq!(donerf_classify(6.0, &grid(), 2.0, 6.0).unwrap(), vec![0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            donerf_classify(7.0, &grid(), 2.0, 6.0),
            Err(Error::DepthOutOfRange { .. })
        ));
    }

    #[test]
    fn identities() {
        let l = vec![vec![0.0, 1.0, 0.0, 0.0]];
        assert_eq!(donerf_blur_filter(&l, 1, 1, 1, 1).unwrap(), l);
        let img: Vec<Vec<f64>> = (0..6).map(|i| vec![(i % 3) as f64 * 0.3, 0.5, 0.0]).collect();
        assert_eq!(donerf_blur_filter(&img, 3, 2, 1, 1).unwrap(), img);
    }

    #[test]
    fn single_hot_pixel_spreads_with_penalty() {
        let mut img = vec![vec![0.0]; 9];
        img[4] = vec![1.0];
        let out = donerf_blur_filter(&img, 3, 3, 3, 1).unwrap();
        assert_eq!(out[4][0], 1.0);
        // edge neighbours: 1 - 1/sqrt(2); diagonals: 1 - sqrt(2)/sqrt(2) = 0
        assert!((out[1][0] - (1.0 - 1.0 / 2f64.sqrt())).abs() < 1e-12);
        assert!(out[0][0].abs() < 1e-12);
    }

    #[test]
    fn triangular_filter_along_bins() {
        let l = vec![vec![0.0, 0.0, 1.0, 0.0, 0.0]];
        let out = donerf_blur_filter(&l, 1, 1, 1, 5).unwrap();
        let expect = [1.0 / 3.0, 2.0 / 3.0, 1.0, 2.0 / 3.0, 1.0 / 3.0];
        for (a, b) in out[0].iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        // neighbouring ones saturate at 1
        let l = vec![vec![1.0, 1.0, 1.0]];
        assert!(donerf_blur_filter(&l, 1, 1, 1, 3).unwrap()[0].iter().all(|&v| v == 1.0));
    }

    #[test]
    fn median() {
        let d = WeightDistribution::new(vec![1.0, 2.0, 3.0], vec![0.2, 0.1, 0.4]).unwrap();
        assert_eq!(median_depth(&d), Some(3.0));
        let v = WeightDistribution::new(vec![1.0, 2.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(median_depth(&v), None);
    }
}
