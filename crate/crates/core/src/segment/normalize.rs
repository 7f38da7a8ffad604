use super::changepoint::{detect_changepoints, CpConfig};
use super::smooth::smooth_states;
use crate::error::{Error, Result};
use crate::types::{DiffusionParams, DiffusionState, ParamTrack, Segment, SegmentedTrajectory};

/// Z-score of a series; a constant series maps to zeros.
pub fn standardize(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd > 0.0 {
        x.iter().map(|v| (v - mean) / sd).collect()
    } else {
        vec![0.0; x.len()]
    }
}

fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let h = v.len() / 2;
    if v.len() % 2 == 1 {
        v[h]
    } else {
        0.5 * (v[h - 1] + v[h])
    }
}

fn mode(states: &[DiffusionState]) -> DiffusionState {
    let mut counts = [0usize; 4];
    for s in states {
        counts[s.code() as usize] += 1;
    }
    let best = (0..4).max_by_key(|&c| (counts[c], std::cmp::Reverse(c))).unwrap();
    DiffusionState::ALL[best]
}

/// Turns a per-frame track into piecewise-constant segments.
///
/// States are smoothed first. Change points are detected separately on the
/// standardized alpha and K channels and merged, dropping any point closer
/// than `min_segment` to one already kept. Each segment carries the median
/// alpha and K and the most frequent smoothed state (lower code on ties).
pub fn normalize_trajectory(track: &ParamTrack, cfg: &CpConfig) -> Result<SegmentedTrajectory> {
    track.validate()?;
    let n = track.len();
    if n == 0 {
        return Err(Error::InvalidInput(format!(
            "track {} is empty",
            track.traj_id
        )));
    }
    let states = smooth_states(&track.state);
    let mut cps = detect_changepoints(&standardize(&track.alpha), cfg)?;
    cps.extend(detect_changepoints(&standardize(&track.k), cfg)?);
    cps.sort_unstable();
    let mut bounds = vec![0];
    for c in cps {
        let last = *bounds.last().unwrap();
        if c - last >= cfg.min_segment && n - c >= cfg.min_segment {
            bounds.push(c);
        }
    }
    bounds.push(n);
    let segments = bounds
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            Ok(Segment {
                start: a,
                end: b,
                params: DiffusionParams::new(median(&track.alpha[a..b]), median(&track.k[a..b]))?,
                state: mode(&states[a..b]),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SegmentedTrajectory {
        traj_id: track.traj_id,
        segments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::segment::CpAlgorithm;
    use proptest::prelude::*;

    fn track(alpha: Vec<f64>, k: Vec<f64>, state: Vec<DiffusionState>) -> ParamTrack {
        ParamTrack {
            traj_id: 3,
            start_frame: 0,
            alpha,
            k,
            state,
        }
    }

    #[test]
    fn constant_track_is_one_segment() {
        let t = track(vec![0.7; 40], vec![2.0; 40], vec![DiffusionState::Free; 40]);
        let s = normalize_trajectory(&t, &CpConfig::default()).unwrap();
        assert_eq!(s.segments.len(), 1);
        assert_eq!(s.segments[0].params.alpha, 0.7);
        assert_eq!(s.segments[0].params.k, 2.0);
        assert_eq!(s.segments[0].state, DiffusionState::Free);
    }

    #[test]
    fn two_level_alpha_fixture() {
        let alpha: Vec<f64> = (0..100).map(|i| if i < 50 { 0.5 } else { 1.5 }).collect();
        let t = track(alpha, vec![1.0; 100], vec![DiffusionState::Free; 100]);
        let s = normalize_trajectory(&t, &CpConfig::default()).unwrap();
        assert_eq!(s.segments.len(), 2);
        assert!(s.segments[1].start.abs_diff(50) <= 2);
        assert_eq!(s.segments[0].params.alpha, 0.5);
        assert_eq!(s.segments[1].params.alpha, 1.5);
    }

    #[test]
    fn segment_state_is_modal() {
        let mut st = vec![DiffusionState::Free; 30];
        for s in &mut st[10..16] {
            *s = DiffusionState::Confined;
        }
        let t = track(vec![1.0; 30], vec![1.0; 30], st);
        let s = normalize_trajectory(&t, &CpConfig::default()).unwrap();
        assert_eq!(s.segments.len(), 1);
        assert_eq!(s.segments[0].state, DiffusionState::Free);
    }

    #[test]
    fn mode_ties_go_to_lower_code() {
        assert_eq!(
            mode(&[DiffusionState::Free, DiffusionState::Confined]),
            DiffusionState::Confined
        );
    }

    proptest! {
        #[test]
        fn segments_partition_the_track(
            seed in 0u64..1000,
            n in 1usize..120,
            algo in prop_oneof![
                Just(CpAlgorithm::Pelt),
                Just(CpAlgorithm::BinSeg),
                Just(CpAlgorithm::BottomUp),
                Just(CpAlgorithm::Window)
            ],
        ) {
            let mut rng = Rng::new(seed);
            let alpha: Vec<f64> = (0..n).map(|_| rng.uniform_in(0.1, 2.0)).collect();
            let k: Vec<f64> = (0..n).map(|_| rng.uniform_in(0.0, 3.0)).collect();
            let state: Vec<DiffusionState> =
                (0..n).map(|_| DiffusionState::ALL[rng.index(4)]).collect();
            let cfg = CpConfig { algorithm: algo, ..CpConfig::default() };
            let s = normalize_trajectory(&track(alpha, k, state), &cfg).unwrap();
            s.validate().unwrap();
            prop_assert_eq!(s.len(), n);
        }
    }
}
