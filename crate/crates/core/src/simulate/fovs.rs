use serde::{Deserialize, Serialize};

use super::config::SimConfig;
use super::streams;
use crate::rng::Rng;
use crate::types::{ExperimentGroundTruth, ParamTrack, Trajectory};

/// Square observation window inside the field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fov {
    pub id: u32,
    pub origin: [f64; 2],
    pub size: f64,
}

impl Fov {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let x = p[0] - self.origin[0];
        let y = p[1] - self.origin[1];
        (0.0..self.size).contains(&x) && (0.0..self.size).contains(&y)
    }
}

/// Trajectories observed through one field of view, in FOV coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FovData {
    pub fov: Fov,
    pub trajectories: Vec<Trajectory>,
    pub truth: Vec<ParamTrack>,
    /// Offsets into the matching trajectory.
    pub changepoints: Vec<Vec<usize>>,
    /// Source particle id in the experiment, per trajectory.
    pub source: Vec<u64>,
}

/// Uniformly placed FOV origins drawn from the layout substream of the
/// configured seed.
pub fn fov_layout(cfg: &SimConfig) -> Vec<Fov> {
    let mut rng = Rng::new(cfg.seed).split(streams::FOV_LAYOUT);
    let span = cfg.field_size - cfg.fov_size;
    (0..cfg.n_fovs)
        .map(|id| Fov {
            id: id as u32,
            origin: [rng.uniform_in(0.0, span), rng.uniform_in(0.0, span)],
            size: cfg.fov_size,
        })
        .collect()
}

/// Clips every experiment trajectory to each FOV.
///
/// Each maximal run of consecutive in-FOV frames becomes its own
/// trajectory, so a particle that leaves and re-enters yields two. Ids are
/// assigned per FOV in order of appearance.
pub fn extract_fovs(experiment: &ExperimentGroundTruth, fovs: &[Fov]) -> Vec<FovData> {
    fovs.iter()
        .map(|fov| {
            let mut data = FovData {
                fov: *fov,
                trajectories: Vec::new(),
                truth: Vec::new(),
                changepoints: Vec::new(),
                source: Vec::new(),
            };
            for (traj, track) in experiment
                .trajectories
                .iter()
                .zip(&experiment.truth_tracks)
            {
                let mut t = 0;
                while t < traj.len() {
                    if !fov.contains(traj.points[t]) {
                        t += 1;
                        continue;
                    }
                    let run_start = t;
                    while t < traj.len() && fov.contains(traj.points[t]) {
                        t += 1;
                    }
                    let id = data.trajectories.len() as u64;
                    let start_frame = traj.start_frame + run_start;
                    let sub = ParamTrack {
                        traj_id: id,
                        start_frame,
                        alpha: track.alpha[run_start..t].to_vec(),
                        k: track.k[run_start..t].to_vec(),
                        state: track.state[run_start..t].to_vec(),
                    };
                    data.changepoints.push(sub.changepoints());
                    data.truth.push(sub);
                    data.trajectories.push(Trajectory {
                        id,
                        start_frame,
                        points: traj.points[run_start..t]
                            .iter()
                            .map(|p| [p[0] - fov.origin[0], p[1] - fov.origin[1]])
                            .collect(),
                        fov_id: fov.id,
                    });
                    data.source.push(traj.id);
                }
            }
            data
        })
        .collect()
}
