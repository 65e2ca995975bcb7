//! Renders the two-shell scene along the dense, coarse/fine and
//! oracle-sampled paths and reports quality against forward passes.

use ray_termination::field::presets;
use ray_termination::math::Vec3;
use ray_termination::render::camera::CameraSet;
use ray_termination::render::image::psnr;
use ray_termination::render::{OracleSampler, RenderConfig, Renderer};

fn main() -> ray_termination::Result<()> {
    let scene = presets::two_shell();
    let cams = CameraSet::orbit(1, 4.0, 0.35, Vec3::ZERO, 64, 64)?;
    let cam = cams.camera(0);
    let oracle = OracleSampler::new(&scene, 31);
    let renderer = Renderer::analytic(&scene).with_sampler(&oracle);
    let (gt, _) = renderer.render_image(&cam, &RenderConfig::oracle())?;
    let out = std::env::temp_dir().join("rterm-volume-rendering");
    std::fs::create_dir_all(&out)?;
    gt.write_png(&out.join("oracle.png"))?;
    for cfg in [
        RenderConfig::coarse_fine(64, 128),
        RenderConfig::coarse_fine(16, 32),
        RenderConfig::terminerf(8),
        RenderConfig::terminerf(32),
    ] {
        let (img, stats) = renderer.render_image(&cam, &cfg)?;
        img.write_png(&out.join(format!("{}.png", cfg.label().replace([' ', '+'], "_"))))?;
        println!(
            "{:<22} {:6.2} dB  {:7.1} passes/pixel",
            cfg.label(),
            psnr(&img, &gt)?,
            stats.passes_per_ray()
        );
    }
    println!("images in {}", out.display());
    Ok(())
}
