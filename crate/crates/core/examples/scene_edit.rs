//! Pre-trains colour and sampler networks on the red ball, jointly
//! fine-tunes them, then recolours the ball and adapts only the colour
//! network with the sampler frozen.

use ray_termination::field::presets;
use ray_termination::geometry::Ray;
use ray_termination::math::Vec3;
use ray_termination::render::camera::CameraSet;
use ray_termination::training::{
    adapt_to_edit, finetune_joint, train_color, train_sampler, LabeledRays, SceneDataset, TrainConfig,
};

fn main() -> ray_termination::Result<()> {
    let mut cfg = TrainConfig::default();
    cfg.apply_text(
        "color_iters = 400\nsampler_iters = 800\njoint_iters = 100\nadapt_iters = 200\n\
         val_every = 50\nn_cameras = 12\nresolution = 24\nval_rays = 256",
    )?;
    let scene = presets::red_ball();
    let cams = CameraSet::orbit(cfg.n_cameras, 4.0, 0.35, Vec3::ZERO, cfg.resolution, cfg.resolution)?;
    let ds = SceneDataset::from_scene(&scene, &cams, cfg.val_fraction, cfg.val_rays, cfg.seed)?;

    let color = train_color(&ds, &cfg)?;
    println!("colour pre-training: {:.2} dB", color.best_psnr.unwrap_or(f64::NAN));
    let rays: Vec<Ray> = ds.train.rays.clone();
    let labels = LabeledRays::from_oracle(&scene, &rays, 512, &cfg.sampler_net(), &cfg.label_config())?;
    let sampler = train_sampler(&labels, scene.bounds, &cfg)?;
    println!("sampler: label PSNR {:.2} dB", sampler.best_psnr.unwrap_or(f64::NAN));

    let joint = finetune_joint(color.pair.fine.clone(), sampler.net.clone(), &ds, &cfg)?;
    println!(
        "joint fine-tuning: {:.2} dB ({} colour / {} sampler updates)",
        joint.best_psnr.unwrap_or(f64::NAN),
        joint.color_updates,
        joint.sampler_updates
    );

    let edited = scene.recolored(|_, _| Vec3::new(0.1, 0.2, 0.9));
    let ds_edit = SceneDataset::from_scene(&edited, &cams, cfg.val_fraction, cfg.val_rays, cfg.seed)?;
    let before = joint.sampler.mlp.param_hash();
    let adapted = adapt_to_edit(joint.color, &joint.sampler, &ds_edit, &cfg)?;
    for row in adapted.log.validations() {
        println!(
            "  adapt iteration {:>4}: {:.2} dB after {} passes",
            row.iteration,
            row.val_psnr.unwrap_or(f64::NAN),
            row.forward_passes_cum
        );
    }
    assert_eq!(before, adapted.sampler.mlp.param_hash());
    println!("sampler parameters unchanged by adaptation");
    Ok(())
}
