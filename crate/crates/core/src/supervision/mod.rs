//! Sampler supervision: label construction from recorded weights, the
//! single-depth classification baseline, and the depth-dataset file.

pub mod dataset;
pub mod donerf;
pub mod labels;

pub use dataset::{DepthDataset, DepthRecord};
pub use donerf::{donerf_blur_filter, donerf_classify, median_depth};
pub use labels::{equalize_samples, gaussian_blur_weights, make_labels, max_resample, normalize, LabelConfig};
