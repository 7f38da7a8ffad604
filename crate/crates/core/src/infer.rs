//! Per-frame parameter estimation from positions, plus ingestion of
//! externally produced parameter tracks.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{DiffusionState, ParamTrack, Trajectory, ALPHA_MAX, ALPHA_MIN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub window: usize,
    pub min_lags: usize,
    pub k_immobile: f64,
    pub alpha_directed: f64,
    pub confinement_radius: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            window: 31,
            min_lags: 4,
            k_immobile: 1e-3,
            alpha_directed: 1.9,
            confinement_radius: 2.0,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_lags < 1 {
            return Err(Error::InvalidParameter("min_lags must be >= 1".into()));
        }
        if self.window.is_multiple_of(2) || self.window < 2 * self.min_lags + 1 {
            return Err(Error::InvalidParameter(format!(
                "window {} must be odd and >= 2 * min_lags + 1 = {}",
                self.window,
                2 * self.min_lags + 1
            )));
        }
        if !(self.k_immobile >= 0.0 && self.confinement_radius >= 0.0) {
            return Err(Error::InvalidParameter(
                "thresholds must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Frame-to-frame displacements multiplied by `scale`.
pub fn to_displacements(traj: &Trajectory, scale: f64) -> Vec<[f64; 2]> {
    traj.points
        .windows(2)
        .map(|w| [(w[1][0] - w[0][0]) * scale, (w[1][1] - w[0][1]) * scale])
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub track: ParamTrack,
    /// Set when the trajectory was too short for a lag fit.
    pub low_confidence: bool,
}

/// Per-axis time-averaged MSD of `points` at `lag`.
fn ta_msd(points: &[[f64; 2]], lag: usize) -> f64 {
    let n = points.len() - lag;
    let s: f64 = (0..n)
        .map(|i| {
            let a = points[i];
            let b = points[i + lag];
            (b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)
        })
        .sum();
    s / (2.0 * n as f64)
}

/// Least-squares fit of `log MSD = log K + alpha log lag` inside one
/// window. Returns `(alpha, K)`.
fn fit_window(points: &[[f64; 2]], max_lag: usize) -> (f64, f64) {
    let lags = max_lag.min(points.len() - 1);
    let mut xs = Vec::with_capacity(lags);
    let mut ys = Vec::with_capacity(lags);
    for lag in 1..=lags {
        let m = ta_msd(points, lag);
        if m > 0.0 {
            xs.push((lag as f64).ln());
            ys.push(m.ln());
        }
    }
    if xs.is_empty() {
        return (1.0, 0.0);
    }
    if xs.len() == 1 {
        return (1.0, (ys[0] - xs[0]).exp());
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let alpha = slope.clamp(ALPHA_MIN, ALPHA_MAX);
    // Intercept from the unclamped slope keeps K consistent with the fit.
    let k = (my - slope * mx).exp();
    (alpha, k)
}

fn window_bounds(t: usize, n: usize, half: usize) -> (usize, usize) {
    (t.saturating_sub(half), (t + half + 1).min(n))
}

/// Sliding-window TA-MSD estimator. Frames within `min_lags` of either end
/// copy the nearest interior estimate.
pub fn estimate_params_window(traj: &Trajectory, cfg: &EstimatorConfig) -> Result<Estimate> {
    cfg.validate()?;
    traj.validate()?;
    let n = traj.len();
    let pts = &traj.points;
    let half = cfg.window / 2;
    let mut alpha = vec![1.0; n];
    let mut k = vec![0.0; n];
    let low_confidence = n < cfg.min_lags + 2;
    if low_confidence {
        let steps = to_displacements(traj, 1.0);
        let k0 = if steps.is_empty() {
            0.0
        } else {
            steps.iter().map(|d| d[0] * d[0] + d[1] * d[1]).sum::<f64>()
                / (2.0 * steps.len() as f64)
        };
        k.iter_mut().for_each(|v| *v = k0);
    } else {
        let (lo, hi) = if n > 2 * cfg.min_lags {
            (cfg.min_lags, n - cfg.min_lags)
        } else {
            (n / 2, n / 2 + 1)
        };
        for t in lo..hi {
            let (a, b) = window_bounds(t, n, half);
            let (al, kk) = fit_window(&pts[a..b], cfg.min_lags);
            alpha[t] = al;
            k[t] = kk;
        }
        for t in 0..lo {
            alpha[t] = alpha[lo];
            k[t] = k[lo];
        }
        for t in hi..n {
            alpha[t] = alpha[hi - 1];
            k[t] = k[hi - 1];
        }
    }
    let state = classify_state(&alpha, &k, pts, cfg);
    Ok(Estimate {
        track: ParamTrack {
            traj_id: traj.id,
            start_frame: traj.start_frame,
            alpha,
            k,
            state,
        },
        low_confidence,
    })
}

/// Threshold rules applied per frame, in order: Immobile on small K,
/// Directed on large alpha, Confined when the radius of gyration over the
/// window is small, Free otherwise.
pub fn classify_state(
    alpha: &[f64],
    k: &[f64],
    positions: &[[f64; 2]],
    cfg: &EstimatorConfig,
) -> Vec<DiffusionState> {
    let n = alpha.len();
    let half = cfg.window / 2;
    (0..n)
        .map(|t| {
            if k[t] < cfg.k_immobile {
                return DiffusionState::Immobile;
            }
            if alpha[t] > cfg.alpha_directed {
                return DiffusionState::Directed;
            }
            let (a, b) = window_bounds(t, positions.len().min(n), half);
            let w = &positions[a..b];
            let m = w.len() as f64;
            let cx = w.iter().map(|p| p[0]).sum::<f64>() / m;
            let cy = w.iter().map(|p| p[1]).sum::<f64>() / m;
            let rg = (w
                .iter()
                .map(|p| (p[0] - cx).powi(2) + (p[1] - cy).powi(2))
                .sum::<f64>()
                / m)
                .sqrt();
            if rg < cfg.confinement_radius {
                DiffusionState::Confined
            } else {
                DiffusionState::Free
            }
        })
        .collect()
}

/// Reads a parameter-track table and, when `trajectories` is given, checks
/// that every track has a trajectory with the same id, start frame and
/// length.
pub fn load_predictions<R: Read>(
    r: R,
    trajectories: Option<&[Trajectory]>,
) -> Result<Vec<ParamTrack>> {
    let tracks = crate::io::read_param_tracks(r)?;
    for t in &tracks {
        t.validate()?;
    }
    let Some(trajs) = trajectories else {
        return Ok(tracks);
    };
    let by_id: BTreeMap<u64, &Trajectory> = trajs.iter().map(|t| (t.id, t)).collect();
    let mut problems = Vec::new();
    for t in &tracks {
        match by_id.get(&t.traj_id) {
            None => problems.push(format!("prediction {} has no trajectory", t.traj_id)),
            Some(traj) if traj.start_frame != t.start_frame || traj.len() != t.len() => {
                return Err(Error::LengthMismatch(format!(
                    "trajectory {} covers frames {:?} but its prediction covers {}..{}",
                    t.traj_id,
                    traj.frames(),
                    t.start_frame,
                    t.start_frame + t.len()
                )));
            }
            Some(_) => {}
        }
    }
    if !problems.is_empty() {
        return Err(Error::IdMismatch(problems));
    }
    Ok(tracks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::simulate::sample_fbm_displacements;
    use crate::types::DiffusionParams;

    fn traj(points: Vec<[f64; 2]>) -> Trajectory {
        Trajectory::new(0, 0, points, 0).unwrap()
    }

    fn fbm_path(n: usize, alpha: f64, k: f64, rng: &mut Rng) -> Trajectory {
        let steps =
            sample_fbm_displacements(n - 1, DiffusionParams::new(alpha, k).unwrap(), rng).unwrap();
        let mut p = [0.0, 0.0];
        let mut pts = vec![p];
        for s in steps {
            p = [p[0] + s[0], p[1] + s[1]];
            pts.push(p);
        }
        traj(pts)
    }

    fn median(mut v: Vec<f64>) -> f64 {
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }

    #[test]
    fn displacements() {
        let t = traj(vec![[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]]);
        assert_eq!(to_displacements(&t, 1.0), vec![[1.0, 0.0], [2.0, 0.0]]);
        let t = traj(vec![[0.0, 0.0], [1.0, 0.0]]);
        assert_eq!(to_displacements(&t, 2.0), vec![[2.0, 0.0]]);
        assert!(to_displacements(&traj(vec![[1.0, 1.0]]), 1.0).is_empty());
        let t = traj(vec![[4.0, 4.0]; 5]);
        assert!(to_displacements(&t, 1.0).iter().all(|d| *d == [0.0, 0.0]));
    }

    #[test]
    fn ballistic_path_has_alpha_two() {
        let t = traj((0..100).map(|i| [i as f64, 0.0]).collect());
        let e = estimate_params_window(&t, &EstimatorConfig::default()).unwrap();
        for a in &e.track.alpha[15..85] {
            assert!((a - 2.0).abs() <= 0.05);
        }
        assert!(e.track.state[50] == DiffusionState::Directed);
    }

    #[test]
    fn frozen_particle_is_immobile() {
        let e = estimate_params_window(&traj(vec![[3.0, 3.0]; 60]), &EstimatorConfig::default())
            .unwrap();
        assert!(e.track.k.iter().all(|&k| k == 0.0));
        assert!(e.track.state.iter().all(|&s| s == DiffusionState::Immobile));
    }

    #[test]
    fn output_length_matches_input() {
        let mut rng = Rng::new(3);
        for n in [2, 5, 6, 9, 10, 31, 50] {
            let t = fbm_path(n, 1.0, 1.0, &mut rng);
            let e = estimate_params_window(&t, &EstimatorConfig::default()).unwrap();
            assert_eq!(e.track.len(), n);
            assert_eq!(e.low_confidence, n < 6);
            e.track.validate().unwrap();
        }
    }

    #[test]
    fn short_track_fallback() {
        let t = traj(vec![[0.0, 0.0], [1.0, 1.0], [1.0, 2.0]]);
        let e = estimate_params_window(&t, &EstimatorConfig::default()).unwrap();
        assert!(e.low_confidence);
        assert_eq!(e.track.alpha, vec![1.0; 3]);
        assert_eq!(e.track.k, vec![0.75; 3]);
    }

    #[test]
    fn subdiffusive_median_alpha() {
        let mut rng = Rng::new(100);
        let mut meds = Vec::new();
        for _ in 0..100 {
            let t = fbm_path(208, 0.5, 1.0, &mut rng);
            let e = estimate_params_window(&t, &EstimatorConfig::default()).unwrap();
            meds.push(median(e.track.alpha[15..193].to_vec()));
        }
        let m = median(meds);
        assert!((0.3..=0.7).contains(&m), "median alpha {m}");
    }

    #[test]
    fn scaling_positions_scales_k_by_square() {
        let mut rng = Rng::new(8);
        let t = fbm_path(120, 0.8, 1.0, &mut rng);
        let mut s = t.clone();
        s.points.iter_mut().for_each(|p| *p = [p[0] * 3.0, p[1] * 3.0]);
        let cfg = EstimatorConfig::default();
        let a = estimate_params_window(&t, &cfg).unwrap().track;
        let b = estimate_params_window(&s, &cfg).unwrap().track;
        for i in 0..a.len() {
            assert!((a.alpha[i] - b.alpha[i]).abs() < 1e-9);
            assert!((b.k[i] / a.k[i] - 9.0).abs() < 1e-9);
        }
    }

    #[test]
    fn classification_rules() {
        let cfg = EstimatorConfig::default();
        let pos = vec![[0.0, 0.0]; 5];
        let s = classify_state(&[1.0; 5], &[0.0; 5], &pos, &cfg);
        assert!(s.iter().all(|&s| s == DiffusionState::Immobile));
        let s = classify_state(&[1.95], &[1.0], &[[0.0, 0.0]], &cfg);
        assert_eq!(s, vec![DiffusionState::Directed]);
        let s = classify_state(&[1.0; 5], &[1.0; 5], &pos, &cfg);
        assert!(s.iter().all(|&s| s == DiffusionState::Confined));
    }

    #[test]
    fn free_brownian_particle_is_mostly_free() {
        let mut rng = Rng::new(12);
        let t = fbm_path(208, 1.0, 1.0, &mut rng);
        let e = estimate_params_window(&t, &EstimatorConfig::default()).unwrap();
        let free = e.track.state.iter().filter(|&&s| s == DiffusionState::Free).count();
        assert!(free * 2 > e.track.len(), "{free} free frames");
    }

    #[test]
    fn load_predictions_cases() {
        let header = "traj_id,frame,alpha,k,state\n";
        assert!(load_predictions(header.as_bytes(), None).unwrap().is_empty());
        let bad = format!("{header}0,0,1.0,1.0,2\n0,1,1.0,1.0,4\n");
        match load_predictions(bad.as_bytes(), None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let track = ParamTrack {
            traj_id: 7,
            start_frame: 2,
            alpha: vec![0.5, 0.5, 1.5],
            k: vec![1.0, 1.0, 0.2],
            state: vec![DiffusionState::Free, DiffusionState::Free, DiffusionState::Confined],
        };
        let mut buf = Vec::new();
        crate::io::write_param_tracks(&mut buf, std::slice::from_ref(&track)).unwrap();
        let t = Trajectory::new(7, 2, vec![[0.0, 0.0]; 3], 0).unwrap();
        let back = load_predictions(buf.as_slice(), Some(std::slice::from_ref(&t))).unwrap();
        assert_eq!(back, vec![track]);
        let short = Trajectory::new(7, 2, vec![[0.0, 0.0]; 2], 0).unwrap();
        assert!(matches!(
            load_predictions(buf.as_slice(), Some(&[short])),
            Err(Error::LengthMismatch(_))
        ));
        let other = Trajectory::new(8, 2, vec![[0.0, 0.0]; 3], 0).unwrap();
        assert!(matches!(
            load_predictions(buf.as_slice(), Some(&[other])),
            Err(Error::IdMismatch(_))
        ));
    }
}
