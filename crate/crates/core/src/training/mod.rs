//! The three training regimes: colour-network pre-training, sampler training
//! on recorded weights, and fine-tuning under the sampler.

pub mod color;
pub mod config;
pub mod data;
pub mod joint;
pub mod log;
pub mod sampler;

pub use color::{train_color, ColorPair, ColorTraining};
pub use config::{DepthSource, TrainConfig};
pub use data::{RayBatch, SceneDataset};
pub use joint::{adapt_to_edit, finetune_joint, terminerf_renderer, FinetuneResult};
pub use log::{MetricLog, MetricRow};
pub use sampler::{build_depth_dataset, train_sampler, LabeledRays, SamplerTraining, WeightSource};
