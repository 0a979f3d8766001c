//! U-shaped patch transformer for long-horizon time-series forecasting.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`] is a small dense tensor with a tape-based reverse-mode
//!   autodiff graph and a finite-difference gradient checker.
//! * [`model`] holds the backbone (patch embedding, transformer groups,
//!   learnable patch merge/split, encoder→decoder skip summation), the
//!   reconstruction and forecast heads, and a linear baseline.
//! * [`data`] covers CSV ingestion, jittered sliding windows, weighted
//!   dataset sampling, per-window normalization, prediction padding and
//!   zero-masking.
//! * [`train`] implements Adam, the pretrain/finetune loops, metrics,
//!   evaluation and checkpointing.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`). The
//! aliases below pin the two precisions used in practice: 32-bit for
//! training, 64-bit for gradient verification.

pub mod data;
pub mod error;
pub mod model;
pub mod scalar;
pub mod tensor;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor32 = tensor::Tensor<f32>;
pub type Tensor64 = tensor::Tensor<f64>;
pub type Graph32 = tensor::Graph<f32>;
pub type Graph64 = tensor::Graph<f64>;
pub type Model32 = model::UShapedModel<f32>;
pub type Model64 = model::UShapedModel<f64>;
pub type ParameterStore32 = model::ParameterStore<f32>;
pub type ParameterStore64 = model::ParameterStore<f64>;
pub type LinearBaseline32 = model::LinearBaseline<f32>;
pub type SeriesFrame32 = data::SeriesFrame<f32>;
pub type WindowSample32 = data::WindowSample<f32>;
