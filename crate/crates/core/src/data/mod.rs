//! Ingestion, windowing, sampling, normalisation and model-input assembly.

pub mod frame;
pub mod input;
pub mod normalize;
pub mod registry;
pub mod sample;
pub mod synthetic;
pub mod windows;

pub use frame::{SeriesFrame, Split, SplitFractions};
pub use input::{apply_patch_mask, build_model_input, masked_count, zero_mask_patches};
pub use normalize::{denormalize, normalize_sample, NormStats, SIGMA_FLOOR};
pub use registry::{DatasetEntry, DatasetRegistry};
pub use sample::WindowSample;
pub use synthetic::SyntheticSpec;
pub use windows::{
    item_weight, jittered_windows, weighted_sample, window_count, SamplerConfig, WindowPlan,
};
