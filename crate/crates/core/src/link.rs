//! Frame-to-frame linking of detections and VIP label matching.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::assign::solve_assignment;
use crate::detect::Detection;
use crate::error::{Error, Result};
use crate::pgm::GrayImage;
use crate::types::Trajectory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkConfig {
    pub search_range: f64,
    /// Frames a particle may go undetected and still be continued.
    pub memory: usize,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            search_range: 5.0,
            memory: 0,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.search_range > 0.0) || !self.search_range.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "search_range {} must be positive",
                self.search_range
            )));
        }
        Ok(())
    }
}

struct Track {
    points: Vec<[f64; 2]>,
    start_frame: usize,
    last_frame: usize,
}

impl Track {
    fn last(&self) -> [f64; 2] {
        *self.points.last().expect("tracks are never empty")
    }

    /// Appends a point at `frame`, interpolating across skipped frames.
    fn extend_to(&mut self, frame: usize, p: [f64; 2]) {
        let gap = frame - self.last_frame;
        let q = self.last();
        for s in 1..gap {
            let f = s as f64 / gap as f64;
            self.points
                .push([q[0] + f * (p[0] - q[0]), q[1] + f * (p[1] - q[1])]);
        }
        self.points.push(p);
        self.last_frame = frame;
    }
}

/// Links detections into trajectories by per-frame optimal assignment on
/// squared displacement. Trajectory ids follow order of first appearance
/// and `fov_id` is 0.
pub fn link(detections: &[Detection], cfg: &LinkConfig) -> Result<Vec<Trajectory>> {
    cfg.validate()?;
    let mut by_frame: BTreeMap<usize, Vec<[f64; 2]>> = BTreeMap::new();
    for d in detections {
        if !d.x.is_finite() || !d.y.is_finite() {
            return Err(Error::InvalidInput(format!(
                "non-finite detection in frame {}",
                d.frame
            )));
        }
        by_frame.entry(d.frame).or_default().push([d.x, d.y]);
    }

    let max_sq = cfg.search_range * cfg.search_range;
    let mut tracks: Vec<Track> = Vec::new();
    let mut active: Vec<usize> = Vec::new();
    for (&frame, points) in &by_frame {
        active.retain(|&i| frame - tracks[i].last_frame <= cfg.memory + 1);
        let cost: Vec<Vec<f64>> = active
            .iter()
            .map(|&i| {
                let q = tracks[i].last();
                points
                    .iter()
                    .map(|p| {
                        let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
                        if d2 <= max_sq {
                            d2
                        } else {
                            f64::INFINITY
                        }
                    })
                    .collect()
            })
            .collect();
        let taken = if active.is_empty() {
            vec![None; points.len()]
        } else {
            solve_assignment(&cost)?.col_to_row(points.len())
        };
        for (j, p) in points.iter().enumerate() {
            match taken[j] {
                Some(r) => tracks[active[r]].extend_to(frame, *p),
                None => {
                    active.push(tracks.len());
                    tracks.push(Track {
                        points: vec![*p],
                        start_frame: frame,
                        last_frame: frame,
                    });
                }
            }
        }
    }

    tracks
        .into_iter()
        .enumerate()
        .map(|(id, t)| Trajectory::new(id as u64, t.start_frame, t.points, 0))
        .collect()
}

/// Labeled regions of a VIP frame; pixel value is the label, 0 is
/// background.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VipLabelFrame {
    pub regions: BTreeMap<u32, Vec<(usize, usize)>>,
}

impl VipLabelFrame {
    pub fn from_image(img: &GrayImage) -> Self {
        let mut regions: BTreeMap<u32, Vec<(usize, usize)>> = BTreeMap::new();
        for y in 0..img.height {
            for x in 0..img.width {
                let v = img.get(x, y);
                if v > 0 {
                    regions.entry(v as u32).or_default().push((x, y));
                }
            }
        }
        Self { regions }
    }

    pub fn centroids(&self) -> BTreeMap<u32, [f64; 2]> {
        self.regions
            .iter()
            .map(|(&label, px)| {
                let n = px.len() as f64;
                let sx: f64 = px.iter().map(|p| p.0 as f64).sum();
                let sy: f64 = px.iter().map(|p| p.1 as f64).sum();
                (label, [sx / n, sy / n])
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VipMatch {
    pub map: BTreeMap<u32, u64>,
    pub unmatched: Vec<u32>,
}

/// Matches label centroids to `(trajectory id, position)` candidates by
/// minimum total Euclidean distance. Pairs farther than `max_distance`
/// are not allowed.
pub fn match_vips(
    vip: &VipLabelFrame,
    candidates: &[(u64, [f64; 2])],
    max_distance: Option<f64>,
) -> Result<VipMatch> {
    let centroids = vip.centroids();
    let labels: Vec<u32> = centroids.keys().copied().collect();
    let reach = max_distance.unwrap_or(f64::INFINITY);
    let cost: Vec<Vec<f64>> = centroids
        .values()
        .map(|c| {
            candidates
                .iter()
                .map(|(_, p)| {
                    let d = ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt();
                    if d <= reach {
                        d
                    } else {
                        f64::INFINITY
                    }
                })
                .collect()
        })
        .collect();
    let a = solve_assignment(&cost)?;
    let mut out = VipMatch::default();
    for (r, c) in a.row_to_col.iter().enumerate() {
        match c {
            Some(c) => {
                out.map.insert(labels[r], candidates[*c].0);
            }
            None => out.unmatched.push(labels[r]),
        }
    }
    Ok(out)
}

/// Positions of the trajectories present at `frame`.
pub fn positions_at(trajectories: &[Trajectory], frame: usize) -> Vec<(u64, [f64; 2])> {
    trajectories
        .iter()
        .filter(|t| t.frames().contains(&frame))
        .map(|t| (t.id, t.points[frame - t.start_frame]))
        .collect()
}
