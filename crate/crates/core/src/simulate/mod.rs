//! Synthetic experiments with complete ground truth.
//!
//! An experiment is a population of particles moving over a square field
//! with reflecting walls for a fixed number of frames. Square fields of
//! view are cut from the field, packed into padded tensors, and optionally
//! rendered as 8-bit spot videos.

mod config;
pub mod fbm;
mod fovs;
mod models;
mod render;

pub use config::{DimParams, MsmParams, QtmParams, SimConfig, TcmParams};
pub use fbm::{sample_fbm_displacements, FgnSampler};
pub use fovs::{extract_fovs, fov_layout, Fov, FovData};
pub use models::{sample_parameters, simulate_experiment};
pub use render::{render_frames, render_vip_frame, RenderConfig};

pub use crate::fov::{to_fov_tensor, to_fov_tensors};

/// Substream ids for [`crate::Rng::split`], one per stochastic stage.
pub mod streams {
    pub const EXPERIMENT: u64 = 1;
    pub const FOV_LAYOUT: u64 = 2;
    pub const RENDER: u64 = 3;
}
