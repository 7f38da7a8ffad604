//! Domain types shared by all pipeline stages.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower clamp for the anomalous exponent; keeps `ln(alpha)` finite.
pub const ALPHA_MIN: f64 = 1e-3;
pub const ALPHA_MAX: f64 = 2.0;

/// Exponent above which free motion is labelled directed.
pub const DIRECTED_ALPHA: f64 = 1.9;

/// Motion state codes, serialized as the bare integers 0..=3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
#[repr(u8)]
pub enum DiffusionState {
    Immobile = 0,
    Confined = 1,
    Free = 2,
    Directed = 3,
}

impl DiffusionState {
    pub const ALL: [DiffusionState; 4] = [
        DiffusionState::Immobile,
        DiffusionState::Confined,
        DiffusionState::Free,
        DiffusionState::Directed,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    /// State of an unobstructed particle with exponent `alpha`.
    pub fn for_free_motion(alpha: f64) -> Self {
        if alpha > DIRECTED_ALPHA {
            DiffusionState::Directed
        } else {
            DiffusionState::Free
        }
    }
}

impl TryFrom<u8> for DiffusionState {
    type Error = String;

    fn try_from(code: u8) -> std::result::Result<Self, Self::Error> {
        match code {
            0 => Ok(DiffusionState::Immobile),
            1 => Ok(DiffusionState::Confined),
            2 => Ok(DiffusionState::Free),
            3 => Ok(DiffusionState::Directed),
            other => Err(format!("state code {other} outside 0..=3")),
        }
    }
}

impl From<DiffusionState> for u8 {
    fn from(s: DiffusionState) -> u8 {
        s.code()
    }
}

impl fmt::Display for DiffusionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

/// Anomalous exponent and generalized diffusion coefficient.
///
/// Construction clamps `alpha` into `[ALPHA_MIN, 2]` and `k` into `[0, inf)`
/// so that downstream logarithms are always defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionParams {
    pub alpha: f64,
    pub k: f64,
}

impl DiffusionParams {
    pub fn new(alpha: f64, k: f64) -> Result<Self> {
        if !alpha.is_finite() || !k.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "non-finite diffusion parameters (alpha={alpha}, k={k})"
            )));
        }
        Ok(Self {
            alpha: alpha.clamp(ALPHA_MIN, ALPHA_MAX),
            k: k.max(0.0),
        })
    }
}

/// Phenomenological model used to generate an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ssm,
    Msm,
    Dim,
    Tcm,
    Qtm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Ssm,
        ModelKind::Msm,
        ModelKind::Dim,
        ModelKind::Tcm,
        ModelKind::Qtm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Ssm => "ssm",
            ModelKind::Msm => "msm",
            ModelKind::Dim => "dim",
            ModelKind::Tcm => "tcm",
            ModelKind::Qtm => "qtm",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown model kind '{s}'")))
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Positions of one particle over consecutive frames, in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: u64,
    pub start_frame: usize,
    pub points: Vec<[f64; 2]>,
    pub fov_id: u32,
}

impl Trajectory {
    pub fn new(id: u64, start_frame: usize, points: Vec<[f64; 2]>, fov_id: u32) -> Result<Self> {
        let t = Self {
            id,
            start_frame,
            points,
            fov_id,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::InvalidInput(format!(
                "trajectory {} has no points",
                self.id
            )));
        }
        if let Some(i) = self
            .points
            .iter()
            .position(|p| !p[0].is_finite() || !p[1].is_finite())
        {
            return Err(Error::InvalidInput(format!(
                "trajectory {} has a non-finite coordinate at frame {}",
                self.id,
                self.start_frame + i
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// One past the last frame.
    pub fn end_frame(&self) -> usize {
        self.start_frame + self.points.len()
    }

    pub fn frames(&self) -> std::ops::Range<usize> {
        self.start_frame..self.end_frame()
    }
}

/// Per-frame `(alpha, K, state)` values for one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamTrack {
    pub traj_id: u64,
    pub start_frame: usize,
    pub alpha: Vec<f64>,
    pub k: Vec<f64>,
    pub state: Vec<DiffusionState>,
}

impl ParamTrack {
    pub fn validate(&self) -> Result<()> {
        let n = self.alpha.len();
        if self.k.len() != n || self.state.len() != n {
            return Err(Error::LengthMismatch(format!(
                "track {}: alpha/k/state lengths {}/{}/{}",
                self.traj_id,
                n,
                self.k.len(),
                self.state.len()
            )));
        }
        if let Some(i) = self
            .alpha
            .iter()
            .position(|a| !(a.is_finite() && *a > 0.0 && *a <= ALPHA_MAX))
        {
            return Err(Error::InvalidInput(format!(
                "track {}: alpha {} at frame {} outside (0, 2]",
                self.traj_id,
                self.alpha[i],
                self.start_frame + i
            )));
        }
        if let Some(i) = self.k.iter().position(|k| !(k.is_finite() && *k >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "track {}: K {} at frame {} is negative or non-finite",
                self.traj_id,
                self.k[i],
                self.start_frame + i
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    /// Frame offsets (relative to `start_frame`) where the `(alpha, K, state)`
    /// triple differs from the previous frame.
    pub fn changepoints(&self) -> Vec<usize> {
        (1..self.len())
            .filter(|&t| {
                self.alpha[t] != self.alpha[t - 1]
                    || self.k[t] != self.k[t - 1]
                    || self.state[t] != self.state[t - 1]
            })
            .collect()
    }
}

/// Constant-parameter interval `[start, end)` of a trajectory, in frame
/// offsets relative to the trajectory start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub params: DiffusionParams,
    pub state: DiffusionState,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentedTrajectory {
    pub traj_id: u64,
    pub segments: Vec<Segment>,
}

impl SegmentedTrajectory {
    /// Checks that segments are non-empty and tile `[0, n)` exactly.
    pub fn validate(&self) -> Result<()> {
        let mut expected = 0;
        for seg in &self.segments {
            if seg.start != expected || seg.end <= seg.start {
                return Err(Error::InvalidInput(format!(
                    "trajectory {}: segment [{}, {}) does not continue at {}",
                    self.traj_id, seg.start, seg.end, expected
                )));
            }
            expected = seg.end;
        }
        if self.segments.is_empty() {
            return Err(Error::InvalidInput(format!(
                "trajectory {} has no segments",
                self.traj_id
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.segments.last().map_or(0, |s| s.end)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn changepoints(&self) -> Vec<usize> {
        self.segments.iter().skip(1).map(|s| s.start).collect()
    }

    /// Piecewise-constant values broadcast back onto frames.
    pub fn to_param_track(&self, start_frame: usize) -> ParamTrack {
        let n = self.len();
        let mut track = ParamTrack {
            traj_id: self.traj_id,
            start_frame,
            alpha: Vec::with_capacity(n),
            k: Vec::with_capacity(n),
            state: Vec::with_capacity(n),
        };
        for seg in &self.segments {
            for _ in seg.start..seg.end {
                track.alpha.push(seg.params.alpha);
                track.k.push(seg.params.k);
                track.state.push(seg.state);
            }
        }
        track
    }

    /// Splits a piecewise-constant track at every frame where its triple
    /// changes.
    pub fn from_piecewise_track(track: &ParamTrack) -> Result<Self> {
        track.validate()?;
        if track.is_empty() {
            return Err(Error::InvalidInput(format!(
                "track {} is empty",
                track.traj_id
            )));
        }
        let mut bounds = track.changepoints();
        bounds.insert(0, 0);
        bounds.push(track.len());
        let segments = bounds
            .windows(2)
            .map(|w| {
                Ok(Segment {
                    start: w[0],
                    end: w[1],
                    params: DiffusionParams::new(track.alpha[w[0]], track.k[w[0]])?,
                    state: track.state[w[0]],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            traj_id: track.traj_id,
            segments,
        })
    }
}

/// Simulated experiment with complete per-frame truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGroundTruth {
    pub model_kind: ModelKind,
    pub trajectories: Vec<Trajectory>,
    pub truth_tracks: Vec<ParamTrack>,
    pub changepoints: Vec<Vec<usize>>,
}

impl ExperimentGroundTruth {
    pub fn validate(&self) -> Result<()> {
        if self.trajectories.len() != self.truth_tracks.len()
            || self.trajectories.len() != self.changepoints.len()
        {
            return Err(Error::LengthMismatch(
                "one truth track and change-point list per trajectory".into(),
            ));
        }
        for ((traj, track), cps) in self
            .trajectories
            .iter()
            .zip(&self.truth_tracks)
            .zip(&self.changepoints)
        {
            traj.validate()?;
            track.validate()?;
            if traj.id != track.traj_id || traj.len() != track.len() {
                return Err(Error::LengthMismatch(format!(
                    "trajectory {} and its truth track disagree",
                    traj.id
                )));
            }
            if cps.iter().any(|&c| c == 0 || c >= traj.len()) {
                return Err(Error::InvalidInput(format!(
                    "trajectory {}: change point outside (0, {})",
                    traj.id,
                    traj.len()
                )));
            }
        }
        Ok(())
    }
}
