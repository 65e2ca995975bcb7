//! Reduces a few camera rays to origin-free segments and prints the bin
//! boundaries each discretisation places along them.

use ray_termination::geometry::{make_bin_grid, BinMode, Ray, Representation, SceneBounds};
use ray_termination::math::Vec3;

fn main() -> ray_termination::Result<()> {
    let bounds = SceneBounds::default();
    let rays = [
        Ray::new(Vec3::new(0.0, 0.0, -4.0), Vec3::new(0.0, 0.0, 1.0)),
        Ray::new(Vec3::new(3.0, 1.0, -2.5), Vec3::new(-3.0, -0.6, 2.5)),
        // same line as above, origin moved along it
        Ray::new(Vec3::new(3.0, 1.0, -2.5) + Vec3::new(-3.0, -0.6, 2.5).normalize() * 0.7, Vec3::new(-3.0, -0.6, 2.5)),
    ];
    for (i, ray) in rays.iter().enumerate() {
        println!("ray {i}: impact distance {:.3}", bounds.impact_distance(ray));
        for repr in [Representation::ConstantSegment, Representation::SphereChord] {
            let seg = repr.parameterize(ray, &bounds)?;
            println!(
                "  {:<8} A = ({:+.4}, {:+.4}, {:+.4})  B = ({:+.4}, {:+.4}, {:+.4})  |B-A| = {:.4}",
                repr.name(),
                seg.a.x, seg.a.y, seg.a.z, seg.b.x, seg.b.y, seg.b.z,
                seg.length()
            );
        }
        let seg = Representation::ConstantSegment.parameterize(ray, &bounds)?;
        for mode in [BinMode::CenteredLog, BinMode::Equidistant] {
            let grid = make_bin_grid(&seg, ray, mode, 15)?;
            let widths: Vec<String> = grid.boundaries().windows(2).map(|w| format!("{:.2}", w[1] - w[0])).collect();
            println!("  {:<12} bin widths {}", mode.name(), widths.join(" "));
        }
    }
    Ok(())
}
