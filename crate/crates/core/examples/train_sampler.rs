//! Trains the sampling network on dense-quadrature labels of the two-shell
//! scene and compares its renders with the oracle sampler.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ray_termination::eval::support_mass;
use ray_termination::field::presets;
use ray_termination::geometry::Ray;
use ray_termination::math::Vec3;
use ray_termination::render::camera::CameraSet;
use ray_termination::render::image::psnr;
use ray_termination::render::{OracleSampler, RaySampler, RenderConfig, Renderer};
use ray_termination::training::{train_sampler, LabeledRays, TrainConfig};

fn main() -> ray_termination::Result<()> {
    let scene = presets::two_shell();
    let mut cfg = TrainConfig::default();
    cfg.apply_text("sampler_iters = 1500\nlr_decay_steps = 1500\nval_every = 250")?;
    let cams = CameraSet::random_sphere(30, 4.0, Vec3::ZERO, 24, 24, &mut ChaCha8Rng::seed_from_u64(1))?;
    let rays: Vec<Ray> = cams.cameras().flat_map(|c| c.rays()).filter(|r| scene.bounds.ray_hits(r)).collect();
    let data = LabeledRays::from_oracle(&scene, &rays, 512, &cfg.sampler_net(), &cfg.label_config())?;
    let run = train_sampler(&data, scene.bounds, &cfg)?;
    for row in run.log.validations() {
        println!("iteration {:>5}  label PSNR {:.2} dB", row.iteration, row.val_psnr.unwrap_or(f64::NAN));
    }
    let net = run.net;

    let oracle = OracleSampler::new(&scene, net.n_bins());
    let probe: Vec<Ray> = rays.iter().step_by(7).copied().take(500).collect();
    let discs: Vec<_> = probe.iter().filter_map(|r| net.discretize(r).ok().flatten()).collect();
    let po = oracle.bin_probabilities(&probe, &discs)?;
    let pn = RaySampler::bin_probabilities(&net, &probe, &discs)?;
    let mass: f64 = po.iter().zip(&pn).map(|(o, p)| support_mass(p, o, 0.95)).sum::<f64>() / po.len() as f64;
    println!("mean predicted mass inside the oracle 95% support: {mass:.3}");

    let view = CameraSet::orbit(1, 4.0, 0.35, Vec3::ZERO, 48, 48)?.camera(0);
    let gt = Renderer::analytic(&scene).render_image(&view, &RenderConfig::oracle())?.0;
    for n in [8, 16, 32] {
        let learned = Renderer::analytic(&scene).with_sampler(&net).render_image(&view, &RenderConfig::terminerf(n))?.0;
        let ideal = Renderer::analytic(&scene).with_sampler(&oracle).render_image(&view, &RenderConfig::terminerf(n))?.0;
        println!("{n:>3} samples: learned {:.2} dB, oracle sampler {:.2} dB", psnr(&learned, &gt)?, psnr(&ideal, &gt)?);
    }
    Ok(())
}
