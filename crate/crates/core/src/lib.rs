//! Characterization of anomalous diffusion from single-particle data.
//!
//! The crate is organized as a pipeline of independent stages that talk to
//! each other only through the types in [`types`] and the file formats in
//! [`io`]:
//!
//! - [`simulate`]: synthetic experiments for five phenomenological models,
//!   field-of-view extraction, padded tensors and spot rendering.
//! - [`detect`] and [`link`]: spot detection and frame-to-frame linking.
//! - [`infer`]: per-frame `(alpha, K, state)` estimation.
//! - [`segment`]: change-point detection, state smoothing, piecewise
//!   normalization and ensemble clustering.
//! - [`metrics`]: the change-point, parameter, state and ensemble scores.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assign;
pub mod detect;
pub mod error;
pub mod fov;
pub mod infer;
pub mod io;
pub mod link;
pub mod metrics;
pub mod pgm;
pub mod rng;
pub mod segment;
pub mod simulate;
pub mod types;

pub use error::{Error, Result};
pub use rng::Rng;
pub use types::{
    DiffusionParams, DiffusionState, ExperimentGroundTruth, ModelKind, ParamTrack, Segment,
    SegmentedTrajectory, Trajectory,
};
