//! The `rterm` command line: scene generation, training, rendering,
//! evaluation and comparison tables.
//!
//! Every command writes only below `--out`; all randomness derives from
//! `--seed` (default 0). Exit codes: 0 success, 2 usage or configuration
//! error, 3 data error, 4 numeric divergence.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::{self, EvalRow};
use crate::field::{presets, AnalyticScene};
use crate::geometry::SceneBounds;
use crate::math::Vec3;
use crate::networks::{ColorNet, SamplerNet};
use crate::nn::checkpoint::Checkpoint;
use crate::render::camera::CameraSet;
use crate::render::image::ImageBuffer;
use crate::render::{RenderConfig, RenderPath, Renderer};
use crate::supervision::DepthDataset;
use crate::training::data::render_oracle_images;
use crate::training::{
    adapt_to_edit, build_depth_dataset, finetune_joint, terminerf_renderer, train_color, train_sampler, ColorPair,
    LabeledRays, MetricLog, SceneDataset, TrainConfig, WeightSource,
};

/// Camera distance from the scene centre for generated camera sets.
pub const CAMERA_DISTANCE: f64 = 4.0;
/// Elevation (radians) of the generated orbit test cameras.
pub const TEST_ELEVATION: f64 = 0.35;
pub const TEST_VIEWS: usize = 4;

#[derive(Debug, Parser)]
#[command(name = "rterm", version, about = "Learned ray-termination sampling for volume rendering")]
pub struct Cli {
    /// Print every configuration key with its value (after `--config`) and exit.
    #[arg(long, global = true)]
    pub dump_config: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Flat `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Inline configuration override `key=value` (repeatable, applied last).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Record wall-clock time in logs and tables.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a scene file with training and test camera sets.
    GenScene {
        #[command(flatten)]
        common: Common,
        /// Preset name or scene file.
        #[arg(long)]
        scene: String,
        /// Replace every primitive colour, e.g. `0.1,0.2,0.9`.
        #[arg(long)]
        recolor: Option<String>,
    },
    /// Render dense-quadrature ground truth for a camera set.
    RenderOracle {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scene: String,
        #[arg(long)]
        cameras: PathBuf,
    },
    /// Train the coarse/fine colour pair from images.
    TrainColor {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        cameras: PathBuf,
        /// Directory of reference images (`000.pfm`, ...).
        #[arg(long = "ref")]
        reference: Option<PathBuf>,
        /// Scene supplying bounds, and ground truth when `--ref` is absent.
        #[arg(long)]
        scene: Option<String>,
    },
    /// Record termination weights into a depth dataset.
    BuildDepth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        cameras: PathBuf,
        /// Oracle weight source.
        #[arg(long, conflicts_with = "checkpoint")]
        scene: Option<String>,
        /// Colour checkpoints of a trained coarse/fine model.
        #[arg(long)]
        checkpoint: Vec<PathBuf>,
        /// Pixels recorded per camera (0 = all).
        #[arg(long, default_value_t = 0)]
        rays_per_camera: usize,
    },
    /// Train the sampling network on a depth dataset.
    TrainSampler {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Scene whose bounds the sampler is parameterised by.
        #[arg(long)]
        scene: Option<String>,
    },
    /// Jointly fine-tune colour and sampling networks.
    Finetune {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        /// Fine colour checkpoint and sampler checkpoint.
        #[arg(long, required = true)]
        checkpoint: Vec<PathBuf>,
    },
    /// Retrain the colour network on an edited scene with the sampler frozen.
    Adapt {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, required = true)]
        checkpoint: Vec<PathBuf>,
    },
    /// Render images along a path.
    Render {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        cameras: PathBuf,
        #[arg(long, value_parser = parse_path)]
        path: RenderPath,
        /// Colour samples per ray on the `terminerf` path.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        checkpoint: Vec<PathBuf>,
        /// Analytic field used when no colour checkpoint is given.
        #[arg(long)]
        scene: Option<String>,
    },
    /// Score the reference path and terminerf sample counts against ground truth.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        cameras: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [16usize, 32])]
        samples: Vec<usize>,
        #[arg(long)]
        checkpoint: Vec<PathBuf>,
        #[arg(long = "ref")]
        reference: Option<PathBuf>,
        #[arg(long)]
        scene: Option<String>,
    },
    /// Cross-tabulate terminerf PSNR of several evaluation tables.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Evaluation CSVs (repeatable).
        #[arg(long = "ref")]
        reference: Vec<PathBuf>,
    },
}

#[derive(Debug, Args, Clone)]
pub struct DataArgs {
    #[arg(long)]
    pub cameras: PathBuf,
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub scene: Option<String>,
}

fn parse_path(s: &str) -> std::result::Result<RenderPath, String> {
    RenderPath::parse(s).ok_or_else(|| format!("unknown path `{s}` (oracle, coarse_fine, terminerf)"))
}

/// Maps an error to the process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidCount { .. } => 2,
        Error::Divergence { .. } => 4,
        _ => 3,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    let Some(command) = cli.command else {
        if cli.dump_config {
            print!("{}", TrainConfig::default().to_text());
            return Ok(());
        }
        return Err(Error::Config("no command given (see --help)".into()));
    };
    let common = common(&command).clone();
    let cfg = load_config(&common)?;
    if cli.dump_config {
        print!("{}", cfg.to_text());
        return Ok(());
    }
    let out = common
        .out
        .clone()
        .ok_or_else(|| Error::Config("--out is required".into()))?;
    match command {
        Command::GenScene { scene, recolor, .. } => gen_scene(&out, &cfg, &scene, recolor.as_deref()),
        Command::RenderOracle { scene, cameras, .. } => render_oracle(&out, &cfg, &scene, &cameras),
        Command::TrainColor {
            cameras,
            reference,
            scene,
            ..
        } => {
            let ds = dataset(
                &DataArgs {
                    cameras,
                    reference,
                    scene: scene.clone(),
                },
                None,
                &cfg,
            )?;
            let run = train_color(&ds, &cfg)?;
            fs::create_dir_all(&out)?;
            let [c, f] = run.pair.checkpoints();
            c.save(&out.join("color_coarse.ckpt"))?;
            f.save(&out.join("color_fine.ckpt"))?;
            run.log.save(&out.join("color_log.csv"))?;
            report("train-color", &run.log, run.best_psnr);
            Ok(())
        }
        Command::BuildDepth {
            cameras,
            scene,
            checkpoint,
            rays_per_camera,
            ..
        } => {
            let cams = CameraSet::load(&cameras)?;
            let data = match (scene, checkpoint.is_empty()) {
                (Some(s), _) => {
                    let scene = load_scene(&s)?;
                    let src = WeightSource::Oracle {
                        scene: &scene,
                        samples: cfg.dense_samples,
                    };
                    build_depth_dataset(&src, &cams, rays_per_camera, cfg.seed)?
                }
                (None, false) => {
                    let pair = ColorPair::from_checkpoints(&load_checkpoints(&checkpoint)?)?;
                    let src = WeightSource::Model {
                        pair: &pair,
                        n_coarse: cfg.n_coarse,
                        n_fine: cfg.n_fine,
                        seed: cfg.seed,
                    };
                    build_depth_dataset(&src, &cams, rays_per_camera, cfg.seed)?
                }
                (None, true) => return Err(Error::Config("build-depth needs --scene or --checkpoint".into())),
            };
            fs::create_dir_all(&out)?;
            data.save(&out.join("depth.tndd"))?;
            println!("build-depth: {} rays recorded", data.len());
            Ok(())
        }
        Command::TrainSampler { data, scene, .. } => {
            let bounds = match scene {
                Some(s) => load_scene(&s)?.bounds,
                None => SceneBounds::default(),
            };
            let depth = DepthDataset::load(&data)?;
            let labeled = LabeledRays::from_dataset(&depth, &cfg.sampler_net(), &bounds, &cfg.label_config())?;
            let run = train_sampler(&labeled, bounds, &cfg)?;
            fs::create_dir_all(&out)?;
            run.net.to_checkpoint().save(&out.join("sampler.ckpt"))?;
            run.log.save(&out.join("sampler_log.csv"))?;
            report("train-sampler", &run.log, run.best_psnr);
            Ok(())
        }
        Command::Finetune { data, checkpoint, .. } => {
            let (color, sampler) = load_color_and_sampler(&checkpoint)?;
            let ds = dataset(&data, Some(color.bounds), &cfg)?;
            let res = finetune_joint(color, sampler, &ds, &cfg)?;
            fs::create_dir_all(&out)?;
            res.color.to_checkpoint(crate::networks::ColorRole::Fine).save(&out.join("color_fine.ckpt"))?;
            res.sampler.to_checkpoint().save(&out.join("sampler.ckpt"))?;
            res.log.save(&out.join("finetune_log.csv"))?;
            report("finetune", &res.log, res.best_psnr);
            Ok(())
        }
        Command::Adapt { data, checkpoint, .. } => {
            let (color, sampler) = load_color_and_sampler(&checkpoint)?;
            let ds = dataset(&data, Some(color.bounds), &cfg)?;
            let res = adapt_to_edit(color, &sampler, &ds, &cfg)?;
            fs::create_dir_all(&out)?;
            res.color.to_checkpoint(crate::networks::ColorRole::Fine).save(&out.join("color_fine.ckpt"))?;
            res.log.save(&out.join("adapt_log.csv"))?;
            report("adapt", &res.log, res.best_psnr);
            Ok(())
        }
        Command::Render {
            cameras,
            path,
            samples,
            checkpoint,
            scene,
            ..
        } => {
            let cams = CameraSet::load(&cameras)?;
            let models = Models::load(&checkpoint, scene.as_deref())?;
            let renderer = models.renderer(path)?;
            let rc = render_config(path, samples.unwrap_or(cfg.n_samples), &cfg);
            fs::create_dir_all(&out)?;
            let mut stats = String::from("view,rays,forward_passes,passes_per_ray\n");
            for (i, cam) in cams.cameras().enumerate() {
                let (img, s) = renderer.render_image(&cam, &rc)?;
                write_image(&out, i, &img)?;
                stats.push_str(&format!("{i},{},{},{:.4}\n", s.rays, s.forward_passes, s.passes_per_ray()));
            }
            fs::write(out.join("render_stats.csv"), stats)?;
            println!("render: {} views ({}) written to {}", cams.len(), rc.label(), out.display());
            Ok(())
        }
        Command::Eval {
            cameras,
            samples,
            checkpoint,
            reference,
            scene,
            ..
        } => {
            let cams = CameraSet::load(&cameras)?;
            let models = Models::load(&checkpoint, scene.as_deref())?;
            let refs = match (&reference, &models.scene) {
                (Some(dir), _) => read_images(dir, cams.len())?,
                (None, Some(s)) => render_oracle_images(s, &cams)?,
                (None, None) => return Err(Error::Config("eval needs reference images (--ref or --scene)".into())),
            };
            let mut rows: Vec<EvalRow> = Vec::new();
            let reference_path = models.renderer(RenderPath::CoarseFine)?;
            rows.extend(eval::evaluate(&reference_path, &cams, &refs, &[eval::reference_config()], "", common.timing)?);
            if models.sampler.is_some() {
                let r = models.renderer(RenderPath::TermiNerf)?;
                let cfgs: Vec<RenderConfig> = samples.iter().map(|&n| RenderConfig::terminerf(n)).collect();
                rows.extend(eval::evaluate(&r, &cams, &refs, &cfgs, &models.sampler_label(), common.timing)?);
            }
            fs::create_dir_all(&out)?;
            fs::write(out.join("eval.csv"), eval::to_csv(&rows))?;
            let table = eval::format_table(&rows);
            fs::write(out.join("eval.txt"), &table)?;
            print!("{table}");
            Ok(())
        }
        Command::Compare { reference, .. } => {
            if reference.is_empty() {
                return Err(Error::Config("compare needs evaluation tables via --ref".into()));
            }
            let tables = reference
                .iter()
                .map(|p| eval::parse_csv(&fs::read_to_string(p)?))
                .collect::<Result<Vec<_>>>()?;
            let table = eval::compare_tables(&tables)?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("compare.txt"), &table)?;
            print!("{table}");
            Ok(())
        }
    }
}

fn common(c: &Command) -> &Common {
    match c {
        Command::GenScene { common, .. }
        | Command::RenderOracle { common, .. }
        | Command::TrainColor { common, .. }
        | Command::BuildDepth { common, .. }
        | Command::TrainSampler { common, .. }
        | Command::Finetune { common, .. }
        | Command::Adapt { common, .. }
        | Command::Render { common, .. }
        | Command::Eval { common, .. }
        | Command::Compare { common, .. } => common,
    }
}

/// Defaults, then `--config`, then `--set` overrides, then `--seed`/`--timing`.
pub fn load_config(common: &Common) -> Result<TrainConfig> {
    let mut cfg = match &common.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    for kv in &common.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{kv}` is not key=value")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.seed = common.seed;
    cfg.timing |= common.timing;
    cfg.validate()?;
    Ok(cfg)
}

/// A preset name or a scene file.
pub fn load_scene(spec: &str) -> Result<AnalyticScene> {
    match presets::by_name(spec) {
        Some(s) if !Path::new(spec).exists() => Ok(s),
        _ => AnalyticScene::load(Path::new(spec)),
    }
}

fn parse_rgb(s: &str) -> Result<Vec3> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("colour `{s}` is not r,g,b")))?;
    match v[..] {
        [r, g, b] if v.iter().all(|c| (0.0..=1.0).contains(c)) => Ok(Vec3::new(r, g, b)),
        _ => Err(Error::Config(format!("colour `{s}` must be three values in [0, 1]"))),
    }
}

fn gen_scene(out: &Path, cfg: &TrainConfig, spec: &str, recolor: Option<&str>) -> Result<()> {
    let mut scene = load_scene(spec)?;
    if let Some(c) = recolor {
        let rgb = parse_rgb(c)?;
        scene = scene.recolored(|_, _| rgb);
    }
    let target = scene.bounds.center;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let train = CameraSet::random_sphere(cfg.n_cameras, CAMERA_DISTANCE, target, cfg.resolution, cfg.resolution, &mut rng)?;
    let test = CameraSet::orbit(TEST_VIEWS, CAMERA_DISTANCE, TEST_ELEVATION, target, cfg.resolution, cfg.resolution)?;
    fs::create_dir_all(out)?;
    scene.save(&out.join("scene.txt"))?;
    train.save(&out.join("cameras.txt"))?;
    test.save(&out.join("test_cameras.txt"))?;
    println!(
        "gen-scene: {} primitives, {} training and {} test cameras in {}",
        scene.primitives.len(),
        train.len(),
        test.len(),
        out.display()
    );
    Ok(())
}

fn render_oracle(out: &Path, cfg: &TrainConfig, spec: &str, cameras: &Path) -> Result<()> {
    let scene = load_scene(spec)?;
    let cams = CameraSet::load(cameras)?;
    let r = Renderer::analytic(&scene);
    let rc = RenderConfig {
        n_dense: cfg.dense_samples,
        ..RenderConfig::oracle()
    };
    fs::create_dir_all(out)?;
    for (i, cam) in cams.cameras().enumerate() {
        let (img, _) = r.render_image(&cam, &rc)?;
        write_image(out, i, &img)?;
    }
    println!("render-oracle: {} views written to {}", cams.len(), out.display());
    Ok(())
}

fn image_path(dir: &Path, i: usize, ext: &str) -> PathBuf {
    dir.join(format!("{i:03}.{ext}"))
}

fn write_image(dir: &Path, i: usize, img: &ImageBuffer) -> Result<()> {
    img.write_pfm(&image_path(dir, i, "pfm"))?;
    img.write_png(&image_path(dir, i, "png"))
}

/// Reads `000.pfm` (or `.png`) ... for `n` views.
pub fn read_images(dir: &Path, n: usize) -> Result<Vec<ImageBuffer>> {
    (0..n)
        .map(|i| {
            let pfm = image_path(dir, i, "pfm");
            if pfm.exists() {
                ImageBuffer::read_pfm(&pfm)
            } else {
                ImageBuffer::read_png(&image_path(dir, i, "png"))
            }
        })
        .collect()
}

fn dataset(args: &DataArgs, bounds: Option<SceneBounds>, cfg: &TrainConfig) -> Result<SceneDataset> {
    let cams = CameraSet::load(&args.cameras)?;
    let scene = args.scene.as_deref().map(load_scene).transpose()?;
    let bounds = bounds.or(scene.as_ref().map(|s| s.bounds)).unwrap_or_default();
    let images = match (&args.reference, &scene) {
        (Some(dir), _) => read_images(dir, cams.len())?,
        (None, Some(s)) => render_oracle_images(s, &cams)?,
        (None, None) => return Err(Error::Config("training needs images (--ref) or a scene (--scene)".into())),
    };
    SceneDataset::from_images(bounds, Vec3::ONE, &cams, &images, cfg.val_fraction, cfg.val_rays, cfg.seed)
}

fn load_checkpoints(paths: &[PathBuf]) -> Result<Vec<Checkpoint>> {
    paths.iter().map(|p| Checkpoint::load(p)).collect()
}

fn load_color_and_sampler(paths: &[PathBuf]) -> Result<(ColorNet, SamplerNet)> {
    let models = Models::load(paths, None)?;
    match (models.pair, models.sampler) {
        (Some(pair), Some(s)) => Ok((pair.fine, s)),
        _ => Err(Error::Config("needs a fine colour checkpoint and a sampler checkpoint".into())),
    }
}

/// Networks named on the command line, plus an optional analytic scene.
struct Models {
    pair: Option<ColorPair>,
    sampler: Option<SamplerNet>,
    scene: Option<AnalyticScene>,
}

impl Models {
    fn load(paths: &[PathBuf], scene: Option<&str>) -> Result<Self> {
        let cks = load_checkpoints(paths)?;
        let mut sampler = None;
        let mut color = Vec::new();
        for ck in cks {
            if ck.meta_value("kind") == Some("sampler") {
                sampler = Some(SamplerNet::from_checkpoint(&ck)?);
            } else {
                ColorNet::from_checkpoint(&ck)?;
                color.push(ck);
            }
        }
        let pair = if color.is_empty() {
            None
        } else {
            Some(ColorPair::from_checkpoints(&color)?)
        };
        Ok(Self {
            pair,
            sampler,
            scene: scene.map(load_scene).transpose()?,
        })
    }

    fn sampler_label(&self) -> String {
        self.sampler
            .as_ref()
            .map(|s| format!("{}+{}", s.config.representation.name(), s.config.mode.name()))
            .unwrap_or_default()
    }

    fn renderer(&self, path: RenderPath) -> Result<Renderer<'_>> {
        let base = match (&self.pair, &self.scene) {
            (Some(p), _) if path == RenderPath::TermiNerf => {
                let s = self.sampler_for(path)?;
                return Ok(terminerf_renderer(&p.fine, s));
            }
            (Some(p), _) => p.renderer(),
            (None, Some(s)) => Renderer::analytic(s),
            (None, None) => return Err(Error::Config("rendering needs colour checkpoints or --scene".into())),
        };
        Ok(match path {
            RenderPath::TermiNerf => base.with_sampler(self.sampler_for(path)?),
            _ => base,
        })
    }

    fn sampler_for(&self, path: RenderPath) -> Result<&SamplerNet> {
        self.sampler
            .as_ref()
            .ok_or_else(|| Error::Config(format!("path {} needs a sampler checkpoint", path.name())))
    }
}

fn render_config(path: RenderPath, samples: usize, cfg: &TrainConfig) -> RenderConfig {
    match path {
        RenderPath::OracleDense => RenderConfig {
            n_dense: cfg.dense_samples,
            ..RenderConfig::oracle()
        },
        RenderPath::CoarseFine => RenderConfig::coarse_fine(cfg.n_coarse, cfg.n_fine),
        RenderPath::TermiNerf => RenderConfig::terminerf(samples),
    }
}

fn report(what: &str, log: &MetricLog, best: Option<f64>) {
    let last = log.rows.last();
    println!(
        "{what}: {} iterations, {} forward passes, best validation PSNR {}",
        last.map_or(0, |r| r.iteration + 1),
        last.map_or(0, |r| r.forward_passes_cum),
        best.map_or("n/a".to_string(), |p| format!("{p:.2} dB"))
    );
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::Format("x".into())), 3);
        assert_eq!(
            exit_code(&Error::Divergence {
                iteration: 3,
                detail: "nan".into()
            }),
            4
        );
        assert_eq!(run(["rterm", "no-such-command"]), 2);
        assert_eq!(run(["rterm", "compare", "--out", "/nonexistent-dir-never-created"]), 2);
    }

    #[test]
    fn rgb_parsing() {
        assert_eq!(parse_rgb("0.1, 0.2,1").unwrap(), Vec3::new(0.1, 0.2, 1.0));
        assert!(parse_rgb("1,2").is_err());
        assert!(parse_rgb("0,0,2").is_err());
    }

    #[test]
    fn config_layers() {
        let common = Common {
            out: None,
            seed: 7,
            config: None,
            overrides: vec!["n_samples=16".into()],
            timing: false,
        };
        let cfg = load_config(&common).unwrap();
        assert_eq!((cfg.seed, cfg.n_samples), (7, 16));
    }
}
