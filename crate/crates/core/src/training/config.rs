//! Flat `key = value` training configuration.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{BinMode, Representation};
use crate::networks::{ColorNetConfig, SamplerConfig};
use crate::nn::AdamConfig;
use crate::supervision::LabelConfig;

/// Where depth-dataset weights come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthSource {
    /// Dense quadrature of the analytic scene.
    Oracle,
    /// Fine-stage weights of a trained coarse/fine colour model.
    CoarseFine,
}

impl DepthSource {
    pub fn name(self) -> &'static str {
        match self {
            DepthSource::Oracle => "oracle",
            DepthSource::CoarseFine => "coarse_fine",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub batch_rays: usize,
    pub color_iters: usize,
    pub sampler_iters: usize,
    pub joint_iters: usize,
    pub adapt_iters: usize,
    pub lr_color_pretrain: f64,
    pub lr_color: f64,
    pub lr_sampler: f64,
    /// Colour learning rate when adapting to an edited scene.
    pub lr_adapt: f64,
    pub lr_decay_steps: f64,
    pub n_coarse: usize,
    pub n_fine: usize,
    pub n_samples: usize,
    pub n_pred: usize,
    pub n_uniform: usize,
    /// Colour updates per sampler update during joint fine-tuning.
    pub joint_ratio: usize,
    pub freeze_sampler: bool,
    pub blur_kernel: usize,
    pub blur_sigma: f64,
    pub equalize: bool,
    /// 0 keeps the source sample count.
    pub equalize_samples: usize,
    pub val_fraction: f64,
    pub val_every: usize,
    pub val_rays: usize,
    pub color_hidden: usize,
    pub color_depth: usize,
    /// 0 disables the skip connection.
    pub color_skip: usize,
    pub pos_freqs: usize,
    pub dir_freqs: usize,
    pub sampler_hidden: usize,
    pub sampler_depth: usize,
    pub sampler_skip: usize,
    pub sampler_freqs: usize,
    pub n_bins: usize,
    pub bin_mode: BinMode,
    pub representation: Representation,
    pub depth_source: DepthSource,
    pub dense_samples: usize,
    pub n_cameras: usize,
    pub resolution: usize,
    /// Record wall-clock milliseconds in metric logs (off keeps logs reproducible).
    pub timing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            batch_rays: 128,
            color_iters: 1500,
            sampler_iters: 3000,
            joint_iters: 400,
            adapt_iters: 400,
            lr_color_pretrain: 5e-4,
            lr_color: 5e-5,
            lr_sampler: 5e-4,
            lr_adapt: 5e-4,
            lr_decay_steps: 250_000.0,
            n_coarse: 32,
            n_fine: 64,
            n_samples: 32,
            n_pred: 128,
            n_uniform: 64,
            joint_ratio: 1,
            freeze_sampler: false,
            blur_kernel: 9,
            blur_sigma: 3.0,
            equalize: true,
            equalize_samples: 0,
            val_fraction: 0.1,
            val_every: 100,
            val_rays: 1024,
            color_hidden: 64,
            color_depth: 3,
            color_skip: 0,
            pos_freqs: 6,
            dir_freqs: 2,
            sampler_hidden: 128,
            sampler_depth: 4,
            sampler_skip: 2,
            sampler_freqs: 4,
            n_bins: 31,
            bin_mode: BinMode::CenteredLog,
            representation: Representation::ConstantSegment,
            depth_source: DepthSource::Oracle,
            dense_samples: 512,
            n_cameras: 40,
            resolution: 64,
            timing: false,
        }
    }
}

macro_rules! config_fields {
    ($m:ident) => {
        $m!(seed, u64);
        $m!(batch_rays, usize);
        $m!(color_iters, usize);
        $m!(sampler_iters, usize);
        $m!(joint_iters, usize);
        $m!(adapt_iters, usize);
        $m!(lr_color_pretrain, f64);
        $m!(lr_color, f64);
        $m!(lr_sampler, f64);
        $m!(lr_adapt, f64);
        $m!(lr_decay_steps, f64);
        $m!(n_coarse, usize);
        $m!(n_fine, usize);
        $m!(n_samples, usize);
        $m!(n_pred, usize);
        $m!(n_uniform, usize);
        $m!(joint_ratio, usize);
        $m!(freeze_sampler, bool);
        $m!(blur_kernel, usize);
        $m!(blur_sigma, f64);
        $m!(equalize, bool);
        $m!(equalize_samples, usize);
        $m!(val_fraction, f64);
        $m!(val_every, usize);
        $m!(val_rays, usize);
        $m!(color_hidden, usize);
        $m!(color_depth, usize);
        $m!(color_skip, usize);
        $m!(pos_freqs, usize);
        $m!(dir_freqs, usize);
        $m!(sampler_hidden, usize);
        $m!(sampler_depth, usize);
        $m!(sampler_skip, usize);
        $m!(sampler_freqs, usize);
        $m!(n_bins, usize);
        $m!(dense_samples, usize);
        $m!(n_cameras, usize);
        $m!(resolution, usize);
        $m!(timing, bool);
    };
}

impl TrainConfig {
    /// Every field as `key = value`, one per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        macro_rules! put {
            ($f:ident, $t:ty) => {
                let _ = writeln!(s, "{} = {}", stringify!($f), self.$f);
            };
        }
        config_fields!(put);
        let _ = writeln!(s, "bin_mode = {}", self.bin_mode.name());
        let _ = writeln!(s, "representation = {}", self.representation.name());
        let _ = writeln!(s, "depth_source = {}", self.depth_source.name());
        s
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || Error::Config(format!("invalid value `{value}` for `{key}`"));
        macro_rules! assign {
            ($f:ident, $t:ty) => {
                if key == stringify!($f) {
                    self.$f = value.parse::<$t>().map_err(|_| bad())?;
                    return Ok(());
                }
            };
        }
        config_fields!(assign);
        match key {
            "bin_mode" => self.bin_mode = BinMode::parse(value).ok_or_else(bad)?,
            "representation" => self.representation = Representation::parse(value).ok_or_else(bad)?,
            "depth_source" => {
                self.depth_source = match value {
                    "oracle" => DepthSource::Oracle,
                    "coarse_fine" => DepthSource::CoarseFine,
                    _ => return Err(bad()),
                }
            }
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines (`#` comments allowed) on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(idx + 1, format!("expected key = value, got `{line}`")))?;
            self.set(k.trim(), v.trim()).map_err(|e| Error::parse(idx + 1, e.to_string()))?;
        }
        self.validate()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_rays", self.batch_rays),
            ("n_coarse", self.n_coarse),
            ("n_fine", self.n_fine),
            ("n_samples", self.n_samples),
            ("joint_ratio", self.joint_ratio),
            ("val_every", self.val_every),
            ("val_rays", self.val_rays),
            ("color_hidden", self.color_hidden),
            ("color_depth", self.color_depth),
            ("sampler_hidden", self.sampler_hidden),
            ("sampler_depth", self.sampler_depth),
            ("dense_samples", self.dense_samples),
            ("resolution", self.resolution),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("`{k}` must be at least 1")));
            }
        }
        for (k, v) in [
            ("lr_color_pretrain", self.lr_color_pretrain),
            ("lr_color", self.lr_color),
            ("lr_sampler", self.lr_sampler),
            ("lr_adapt", self.lr_adapt),
            ("lr_decay_steps", self.lr_decay_steps),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("`{k}` must be positive")));
            }
        }
        if self.n_pred + self.n_uniform == 0 {
            return Err(Error::Config("joint sample mix is empty".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config("`val_fraction` must lie in [0, 1)".into()));
        }
        self.label_config().validate()?;
        self.color_net().mlp().validate()?;
        self.sampler_net().mlp().validate()?;
        self.bin_mode.fractions(self.n_bins)?;
        Ok(())
    }

    pub fn label_config(&self) -> LabelConfig {
        LabelConfig {
            kernel_size: self.blur_kernel,
            sigma: self.blur_sigma,
            equalize: self.equalize,
            equalize_samples: (self.equalize_samples > 0).then_some(self.equalize_samples),
        }
    }

    pub fn color_net(&self) -> ColorNetConfig {
        ColorNetConfig {
            pos_freqs: self.pos_freqs,
            dir_freqs: self.dir_freqs,
            hidden: self.color_hidden,
            depth: self.color_depth,
            skip: (self.color_skip > 0).then_some(self.color_skip),
        }
    }

    pub fn sampler_net(&self) -> SamplerConfig {
        SamplerConfig {
            n_bins: self.n_bins,
            mode: self.bin_mode,
            representation: self.representation,
            freqs: self.sampler_freqs,
            hidden: self.sampler_hidden,
            depth: self.sampler_depth,
            skip: (self.sampler_skip > 0).then_some(self.sampler_skip),
        }
    }

    pub fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            decay_steps: self.lr_decay_steps,
            ..AdamConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_and_parse_round_trip() {
        let mut c = TrainConfig::default();
        c.seed = 9;
        c.bin_mode = BinMode::Equidistant;
        c.freeze_sampler = true;
        assert_eq!(TrainConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(TrainConfig::parse("nope = 1").is_err());
        assert!(TrainConfig::parse("batch_rays = -3").is_err());
        assert!(TrainConfig::parse("blur_kernel = 4").is_err());
        assert!(TrainConfig::parse("n_bins = 30").is_err());
        let c = TrainConfig::parse("# comment\nseed = 4\n\nlr_sampler = 1e-3\n").unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.lr_sampler, 1e-3);
    }
}
