//! Produces the speed/quality table for the blocks scene with the exact
//! oracle sampler standing in for a trained network.

use ray_termination::eval::{evaluate, format_table, reference_config, to_csv};
use ray_termination::field::presets;
use ray_termination::math::Vec3;
use ray_termination::render::camera::CameraSet;
use ray_termination::render::{OracleSampler, RenderConfig, Renderer};
use ray_termination::training::data::render_oracle_images;

fn main() -> ray_termination::Result<()> {
    let scene = presets::blocks();
    let cams = CameraSet::orbit(2, 4.0, 0.35, Vec3::ZERO, 48, 48)?;
    let refs = render_oracle_images(&scene, &cams)?;
    let oracle = OracleSampler::new(&scene, 31);
    let r = Renderer::analytic(&scene).with_sampler(&oracle);
    let mut configs = vec![reference_config(), RenderConfig::coarse_fine(32, 64)];
    configs.extend([4, 8, 16, 32].map(RenderConfig::terminerf));
    let rows = evaluate(&r, &cams, &refs, &configs, "oracle", true)?;
    print!("{}", format_table(&rows));
    println!();
    print!("{}", to_csv(&rows));
    Ok(())
}
