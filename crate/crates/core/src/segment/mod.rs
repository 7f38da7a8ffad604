//! Change-point detection, state smoothing, piecewise normalization and
//! ensemble clustering of parameter tracks.

mod changepoint;
mod cost;
mod ensemble;
mod normalize;
mod smooth;

pub use changepoint::{
    default_penalty, detect_changepoints, penalized_objective, CpAlgorithm, CpConfig,
};
pub use cost::{segment_cost, CostModel};
pub use ensemble::{aggregate_ensemble, kmeans, ClusterSummary, EnsembleSummary, KMeans};
pub use normalize::{normalize_trajectory, standardize};
pub use smooth::{smooth_states, MIN_DWELL};
