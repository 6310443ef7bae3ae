//! Slice-conditional denoising diffusion for volumetric data.
//!
//! The crate trains a noise-prediction network on axial slice bundles drawn
//! from 3D volumes, generates whole volumes in overlapping stages that
//! condition each stage on slices of the previous one, and scores sets of
//! volumes against a reference set (multi-scale SSIM, kernel MMD, and
//! per-view Fréchet distance).
//!
//! Modules mirror the pipeline: [`data`] loads and synthesizes volumes,
//! [`schedule`] holds the noise schedule, [`slices`] picks conditioning and
//! target slice sets, [`nn`] is the denoiser, [`training`] fits it,
//! [`sampler`] runs reverse diffusion, [`metrics`] evaluates the output, and
//! [`checkpoint`]/[`config`] handle persistence.

pub mod canon;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod exec;
pub mod fsutil;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod sampler;
pub mod scalar;
pub mod schedule;
pub mod slices;
pub mod training;

pub use error::{Error, Result};
pub use rng::{substream, substream_indexed, CdpmRng};
pub use scalar::Scalar;
