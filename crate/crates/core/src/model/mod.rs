//! Forecasting models built on the autodiff graph.

pub mod attention;
pub mod backbone;
pub mod baseline;
pub mod config;
pub mod layers;
pub mod params;

pub use attention::{attention_csv, attention_file_name, mass_report, MassReport};
pub use backbone::{
    is_backbone_param, is_head_param, patch_merge_naive, AttentionMap, BackboneOutput, DecoderPath,
    PatchGrid, Side, UShapedModel,
};
pub use baseline::LinearBaseline;
pub use config::ModelConfig;
pub use layers::PassState;
pub use params::{Binding, Param, ParameterStore};
