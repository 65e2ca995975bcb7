//! Builds sampler labels for a ray through both shells: the blurred,
//! max-resampled distribution label next to the single-depth label.

use ray_termination::field::{oracle_weights, presets};
use ray_termination::geometry::{BinGrid, Ray};
use ray_termination::math::Vec3;
use ray_termination::networks::{discretize, SamplerConfig};
use ray_termination::supervision::{donerf_classify, make_labels, median_depth, normalize, LabelConfig};

fn bar(p: f64) -> String {
    "#".repeat((p * 60.0).round() as usize)
}

fn main() -> ray_termination::Result<()> {
    let scene = presets::two_shell();
    let b = scene.bounds;
    let ray = Ray::new(Vec3::new(0.1, 0.05, -4.0), Vec3::new(0.0, 0.0, 1.0));
    let dense = oracle_weights(&scene, &ray, &BinGrid::uniform_cells(b.near, b.far, 512)?);
    println!("dense quadrature: {} samples, total weight {:.3}", dense.len(), dense.total());

    let cfg = SamplerConfig::DESK;
    let disc = discretize(&ray, &b, cfg.representation, cfg.mode, cfg.n_bins)?.expect("ray hits the scene");
    let blurred = make_labels(&dense, &LabelConfig::default(), &disc.grid)?;
    let sharp = make_labels(&dense, &LabelConfig::no_blur(), &disc.grid)?;
    let depth = median_depth(&dense).unwrap_or(b.far);
    let single = normalize(&donerf_classify(depth, &disc.grid, b.near, b.far)?);

    println!("median depth {depth:.3}");
    println!("{:>4} {:>7} {:>7} {:>7} {:>7}", "bin", "start", "blur", "K=1", "single");
    for j in 0..disc.grid.n_bins() {
        let (lo, _) = disc.grid.bin_extent(j, b.far);
        println!(
            "{j:>4} {lo:>7.3} {:>7.3} {:>7.3} {:>7.3} {}",
            blurred[j],
            sharp[j],
            single[j],
            bar(blurred[j])
        );
    }
    Ok(())
}
