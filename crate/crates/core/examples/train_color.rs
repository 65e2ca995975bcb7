//! Trains a small coarse/fine colour pair on oracle renders of the red
//! ball and prints the validation curve.

use ray_termination::field::presets;
use ray_termination::math::Vec3;
use ray_termination::render::camera::CameraSet;
use ray_termination::training::{train_color, SceneDataset, TrainConfig};

fn main() -> ray_termination::Result<()> {
    let mut cfg = TrainConfig::default();
    cfg.apply_text("color_iters = 400\nval_every = 50\nn_cameras = 12\nresolution = 24\nval_rays = 256")?;
    let scene = presets::red_ball();
    let cams = CameraSet::orbit(cfg.n_cameras, 4.0, 0.35, Vec3::ZERO, cfg.resolution, cfg.resolution)?;
    let ds = SceneDataset::from_scene(&scene, &cams, cfg.val_fraction, cfg.val_rays, cfg.seed)?;
    println!("{} training rays, {} validation rays", ds.train.len(), ds.val.len());
    let run = train_color(&ds, &cfg)?;
    for row in run.log.validations() {
        println!(
            "iteration {:>4}  loss {:.5}  val {:.2} dB  passes {}",
            row.iteration,
            row.loss,
            row.val_psnr.unwrap_or(f64::NAN),
            row.forward_passes_cum
        );
    }
    println!("best validation PSNR {:.2} dB", run.best_psnr.unwrap_or(f64::NAN));
    Ok(())
}
