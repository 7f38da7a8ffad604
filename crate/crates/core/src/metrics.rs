//! Change-point, parameter, state and ensemble scores.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::assign::solve_assignment;
use crate::error::{Error, Result};
use crate::types::{DiffusionState, SegmentedTrajectory};

/// Default change-point gate in frames.
pub const EPS_CP: f64 = 10.0;

pub fn gated_distance(t_gt: f64, t_pred: f64, eps: f64) -> f64 {
    (t_gt - t_pred).abs().min(eps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpMatchResult {
    /// Assigned `(gt index, pred index)` pairs, including those beyond the
    /// gate.
    pub pairs: Vec<(usize, usize)>,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub eps_cp: f64,
}

impl CpMatchResult {
    /// Pairs whose gated distance is strictly below the gate.
    pub fn true_positives<'a>(
        &'a self,
        gt: &'a [usize],
        pred: &'a [usize],
    ) -> impl Iterator<Item = (usize, usize)> + 'a {
        self.pairs
            .iter()
            .copied()
            .filter(move |&(i, j)| gated_distance(gt[i] as f64, pred[j] as f64, self.eps_cp) < self.eps_cp)
    }
}

/// Minimum total gated distance pairing of ground-truth and predicted
/// change points.
pub fn pair_changepoints(gt: &[usize], pred: &[usize], eps: f64) -> Result<CpMatchResult> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps {eps} must be positive")));
    }
    let cost: Vec<Vec<f64>> = gt
        .iter()
        .map(|&g| pred.iter().map(|&p| gated_distance(g as f64, p as f64, eps)).collect())
        .collect();
    let a = solve_assignment(&cost)?;
    let pairs: Vec<(usize, usize)> = a.pairs().collect();
    let tp = pairs.iter().filter(|&&(i, j)| cost[i][j] < eps).count();
    Ok(CpMatchResult {
        pairs,
        tp,
        fp: pred.len() - tp,
        fn_: gt.len() - tp,
        eps_cp: eps,
    })
}

/// `TP / (TP + FP + FN)`; 1 when there is nothing to match.
pub fn jsc(tp: usize, fp: usize, fn_: usize) -> f64 {
    let d = tp + fp + fn_;
    if d == 0 {
        1.0
    } else {
        tp as f64 / d as f64
    }
}

/// Root mean square of raw frame differences over true-positive pairs; 0
/// without any.
pub fn rmse_cp(m: &CpMatchResult, gt: &[usize], pred: &[usize]) -> f64 {
    let d: Vec<f64> = m
        .true_positives(gt, pred)
        .map(|(i, j)| gt[i] as f64 - pred[j] as f64)
        .collect();
    rms(&d)
}

fn rms(d: &[f64]) -> f64 {
    if d.is_empty() {
        0.0
    } else {
        (d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64).sqrt()
    }
}

fn same_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch(format!("{what}: {a} ground-truth vs {b} predicted values")));
    }
    Ok(())
}

pub fn mae_alpha(gt: &[f64], pred: &[f64]) -> Result<f64> {
    same_len(gt.len(), pred.len(), "alpha")?;
    if gt.is_empty() {
        return Ok(0.0);
    }
    Ok(gt.iter().zip(pred).map(|(g, p)| (g - p).abs()).sum::<f64>() / gt.len() as f64)
}

/// Mean of `(ln(K_gt + 1) - ln(K_pred + 1))^2`; negative inputs count as 0.
pub fn msle_k(gt: &[f64], pred: &[f64]) -> Result<f64> {
    same_len(gt.len(), pred.len(), "K")?;
    if gt.is_empty() {
        return Ok(0.0);
    }
    if gt.iter().chain(pred).any(|&v| v < 0.0) {
        log::warn!("negative K values clamped to 0 for MSLE");
    }
    Ok(gt
        .iter()
        .zip(pred)
        .map(|(g, p)| (g.max(0.0).ln_1p() - p.max(0.0).ln_1p()).powi(2))
        .sum::<f64>()
        / gt.len() as f64)
}

/// Micro-averaged F1 over frames with counts summed across the four
/// classes.
pub fn f1_state(gt: &[DiffusionState], pred: &[DiffusionState]) -> Result<f64> {
    same_len(gt.len(), pred.len(), "state")?;
    let (tp, fp, fn_) = state_counts(gt, pred);
    Ok(f1_from_counts(tp, fp, fn_))
}

fn state_counts(gt: &[DiffusionState], pred: &[DiffusionState]) -> (usize, usize, usize) {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for c in DiffusionState::ALL {
        for (g, p) in gt.iter().zip(pred) {
            match (*g == c, *p == c) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
    }
    (tp, fp, fn_)
}

fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    let d = 2 * tp + fp + fn_;
    if d == 0 {
        1.0
    } else {
        2.0 * tp as f64 / d as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum W1Support {
    /// Integrate only over `[min Q, max Q]`.
    Restricted,
    /// Integrate over the whole real line.
    Unrestricted,
}

/// First Wasserstein distance between the empirical distributions of `p`
/// and `q`, integrating `|F_P - F_Q|` exactly between sample breakpoints.
pub fn wasserstein1(p: &[f64], q: &[f64], support: W1Support) -> Result<f64> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::InvalidInput("W1 needs non-empty samples".into()));
    }
    if p.iter().chain(q).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("W1 samples must be finite".into()));
    }
    let mut sp = p.to_vec();
    let mut sq = q.to_vec();
    sp.sort_by(f64::total_cmp);
    sq.sort_by(f64::total_cmp);
    let mut xs: Vec<f64> = sp.iter().chain(&sq).copied().collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let (lo, hi) = match support {
        W1Support::Restricted => (sq[0], sq[sq.len() - 1]),
        W1Support::Unrestricted => (xs[0], xs[xs.len() - 1]),
    };
    let (np, nq) = (sp.len() as f64, sq.len() as f64);
    let (mut ip, mut iq) = (0, 0);
    let mut total = 0.0;
    for w in xs.windows(2) {
        while ip < sp.len() && sp[ip] <= w[0] {
            ip += 1;
        }
        while iq < sq.len() && sq[iq] <= w[0] {
            iq += 1;
        }
        let a = w[0].max(lo);
        let b = w[1].min(hi);
        if b > a {
            total += (ip as f64 / np - iq as f64 / nq).abs() * (b - a);
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n_trajs: usize,
    pub rmse_cp: f64,
    pub jsc: f64,
    pub mae_alpha: f64,
    pub msle_k: f64,
    pub f1_state: f64,
    pub w1_alpha: f64,
    pub w1_k: f64,
    pub w1_alpha_unrestricted: f64,
    pub w1_k_unrestricted: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Scores one experiment. Trajectories are aligned by id; change-point
/// counts, squared CP errors and frames are pooled over trajectories, and
/// the ensemble distances compare pooled segment parameters.
pub fn evaluate_experiment(
    predictions: &[SegmentedTrajectory],
    truth: &[SegmentedTrajectory],
    eps: f64,
) -> Result<EvaluationReport> {
    let pred: BTreeMap<u64, &SegmentedTrajectory> =
        predictions.iter().map(|t| (t.traj_id, t)).collect();
    let gt: BTreeMap<u64, &SegmentedTrajectory> = truth.iter().map(|t| (t.traj_id, t)).collect();
    let mut problems: Vec<String> = gt
        .keys()
        .filter(|id| !pred.contains_key(id))
        .map(|id| format!("trajectory {id} has no prediction"))
        .collect();
    problems.extend(
        pred.keys()
            .filter(|id| !gt.contains_key(id))
            .map(|id| format!("prediction {id} has no ground truth")),
    );
    if !problems.is_empty() || pred.len() != predictions.len() || gt.len() != truth.len() {
        if problems.is_empty() {
            problems.push("duplicate trajectory ids".into());
        }
        return Err(Error::IdMismatch(problems));
    }
    if truth.is_empty() {
        return Err(Error::InvalidInput("nothing to evaluate".into()));
    }

    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    let mut cp_err = Vec::new();
    let (mut ga, mut pa, mut gk, mut pk) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let (mut gs, mut ps) = (Vec::new(), Vec::new());
    let (mut seg_ga, mut seg_pa, mut seg_gk, mut seg_pk) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (id, g) in &gt {
        let p = pred[id];
        g.validate()?;
        p.validate()?;
        if g.len() != p.len() {
            return Err(Error::LengthMismatch(format!(
                "trajectory {id}: {} ground-truth frames vs {} predicted",
                g.len(),
                p.len()
            )));
        }
        let (gc, pc) = (g.changepoints(), p.changepoints());
        let m = pair_changepoints(&gc, &pc, eps)?;
        tp += m.tp;
        fp += m.fp;
        fn_ += m.fn_;
        cp_err.extend(m.true_positives(&gc, &pc).map(|(i, j)| gc[i] as f64 - pc[j] as f64));
        let (gt_track, pr_track) = (g.to_param_track(0), p.to_param_track(0));
        ga.extend(gt_track.alpha);
        pa.extend(pr_track.alpha);
        gk.extend(gt_track.k);
        pk.extend(pr_track.k);
        gs.extend(gt_track.state);
        ps.extend(pr_track.state);
        for s in &g.segments {
            seg_ga.push(s.params.alpha);
            seg_gk.push(s.params.k);
        }
        for s in &p.segments {
            seg_pa.push(s.params.alpha);
            seg_pk.push(s.params.k);
        }
    }
    Ok(EvaluationReport {
        n_trajs: gt.len(),
        rmse_cp: rms(&cp_err),
        jsc: jsc(tp, fp, fn_),
        mae_alpha: mae_alpha(&ga, &pa)?,
        msle_k: msle_k(&gk, &pk)?,
        f1_state: f1_state(&gs, &ps)?,
        w1_alpha: wasserstein1(&seg_pa, &seg_ga, W1Support::Restricted)?,
        w1_k: wasserstein1(&seg_pk, &seg_gk, W1Support::Restricted)?,
        w1_alpha_unrestricted: wasserstein1(&seg_pa, &seg_ga, W1Support::Unrestricted)?,
        w1_k_unrestricted: wasserstein1(&seg_pk, &seg_gk, W1Support::Unrestricted)?,
        tp,
        fp,
        fn_,
    })
}

/// Combines experiments: single-trajectory scores are weighted by
/// trajectory count, ensemble distances are averaged arithmetically and
/// counts are summed.
pub fn combine_reports(reports: &[EvaluationReport]) -> Result<EvaluationReport> {
    let n: usize = reports.iter().map(|r| r.n_trajs).sum();
    if reports.is_empty() || n == 0 {
        return Err(Error::InvalidInput("no trajectories to combine".into()));
    }
    let weighted = |f: fn(&EvaluationReport) -> f64| {
        reports.iter().map(|r| f(r) * r.n_trajs as f64).sum::<f64>() / n as f64
    };
    let mean = |f: fn(&EvaluationReport) -> f64| {
        reports.iter().map(f).sum::<f64>() / reports.len() as f64
    };
    Ok(EvaluationReport {
        n_trajs: n,
        rmse_cp: weighted(|r| r.rmse_cp),
        jsc: weighted(|r| r.jsc),
        mae_alpha: weighted(|r| r.mae_alpha),
        msle_k: weighted(|r| r.msle_k),
        f1_state: weighted(|r| r.f1_state),
        w1_alpha: mean(|r| r.w1_alpha),
        w1_k: mean(|r| r.w1_k),
        w1_alpha_unrestricted: mean(|r| r.w1_alpha_unrestricted),
        w1_k_unrestricted: mean(|r| r.w1_k_unrestricted),
        tp: reports.iter().map(|r| r.tp).sum(),
        fp: reports.iter().map(|r| r.fp).sum(),
        fn_: reports.iter().map(|r| r.fn_).sum(),
    })
}

pub const REPORT_CSV_HEADER: [&str; 9] = [
    "exp", "n_trajs", "rmse_cp", "jsc", "mae_alpha", "msle_k", "f1_state", "w1_alpha", "w1_k",
];

/// One row per experiment in the table column order.
pub fn write_report_csv<W: Write>(w: W, rows: &[(String, EvaluationReport)]) -> Result<()> {
    let mut out = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    out.write_record(REPORT_CSV_HEADER)?;
    for (name, r) in rows {
        out.write_record([
            name.clone(),
            r.n_trajs.to_string(),
            r.rmse_cp.to_string(),
            r.jsc.to_string(),
            r.mae_alpha.to_string(),
            r.msle_k.to_string(),
            r.f1_state.to_string(),
            r.w1_alpha.to_string(),
            r.w1_k.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("report.csv", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::types::{DiffusionParams, Segment};
    use proptest::prelude::*;

    #[test]
    fn gated_distance_fixtures() {
        assert_eq!(gated_distance(100.0, 104.0, 10.0), 4.0);
        assert_eq!(gated_distance(100.0, 150.0, 10.0), 10.0);
        assert_eq!(gated_distance(42.0, 42.0, 10.0), 0.0);
    }

    #[test]
    fn pairing_fixtures() {
        let m = pair_changepoints(&[50], &[53], EPS_CP).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_), (1, 0, 0));
        assert_eq!(rmse_cp(&m, &[50], &[53]), 3.0);
        let m = pair_changepoints(&[50], &[80], EPS_CP).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_), (0, 1, 1));
        assert_eq!(rmse_cp(&m, &[50], &[80]), 0.0);
        let m = pair_changepoints(&[10, 20], &[19, 11], EPS_CP).unwrap();
        assert_eq!(m.pairs, vec![(0, 1), (1, 0)]);
        assert_eq!(m.tp, 2);
        assert_eq!(rmse_cp(&m, &[10, 20], &[19, 11]), 1.0);
        // Exactly at the gate is not a hit.
        assert_eq!(pair_changepoints(&[50], &[60], EPS_CP).unwrap().tp, 0);
    }

    #[test]
    fn jsc_fixtures() {
        assert_eq!(jsc(2, 1, 1), 0.5);
        assert_eq!(jsc(0, 3, 0), 0.0);
        assert_eq!(jsc(0, 0, 0), 1.0);
        assert_eq!(pair_changepoints(&[], &[], EPS_CP).unwrap().tp, 0);
    }

    #[test]
    fn mae_msle_fixtures() {
        assert!((mae_alpha(&[1.0, 0.5], &[1.2, 0.4]).unwrap() - 0.15).abs() < 1e-12);
        assert_eq!(mae_alpha(&[0.3, 0.9], &[0.3, 0.9]).unwrap(), 0.0);
        assert!(mae_alpha(&[1.0], &[]).is_err());
        assert_eq!(msle_k(&[2.0, 0.1], &[2.0, 0.1]).unwrap(), 0.0);
        let e = std::f64::consts::E;
        assert!((msle_k(&[e - 1.0], &[0.0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(msle_k(&[-1.0], &[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn msle_matches_direct_formula() {
        let mut rng = Rng::new(31);
        let g: Vec<f64> = (0..50).map(|_| rng.uniform_in(0.0, 5.0)).collect();
        let p: Vec<f64> = (0..50).map(|_| rng.uniform_in(0.0, 5.0)).collect();
        let mut acc = 0.0;
        for i in 0..50 {
            let d = (1.0 + g[i]).ln() - (1.0 + p[i]).ln();
            acc += d * d;
        }
        assert!((msle_k(&g, &p).unwrap() - acc / 50.0).abs() < 1e-12);
    }

    #[test]
    fn f1_fixtures() {
        use DiffusionState::*;
        assert_eq!(f1_state(&[Free, Confined], &[Free, Confined]).unwrap(), 1.0);
        assert_eq!(f1_state(&[Free, Free], &[Confined, Immobile]).unwrap(), 0.0);
        // One confusion: TP = 3, FP = 1, FN = 1.
        let g = [Free, Free, Confined, Immobile];
        let p = [Free, Confined, Confined, Immobile];
        assert_eq!(f1_state(&g, &p).unwrap(), 0.75);
    }

    /// `integral of |F_P - F_Q|` by a midpoint rule on a fine grid.
    fn grid_w1(p: &[f64], q: &[f64], lo: f64, hi: f64, h: f64) -> f64 {
        let cdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
        let steps = ((hi - lo) / h).round() as usize;
        (0..steps)
            .map(|i| {
                let x = lo + (i as f64 + 0.5) * h;
                (cdf(p, x) - cdf(q, x)).abs() * h
            })
            .sum()
    }

    #[test]
    fn w1_fixtures() {
        let u = W1Support::Unrestricted;
        let r = W1Support::Restricted;
        assert_eq!(wasserstein1(&[0.3, 1.0], &[1.0, 0.3], u).unwrap(), 0.0);
        assert_eq!(wasserstein1(&[0.0; 3], &[1.0; 3], r).unwrap(), 0.0);
        assert_eq!(wasserstein1(&[0.0; 3], &[1.0; 3], u).unwrap(), 1.0);
        let oracle = grid_w1(&[0.0, 1.0], &[0.0, 2.0], 0.0, 2.0, 1e-4);
        assert!((oracle - 0.5).abs() < 1e-9);
        assert_eq!(wasserstein1(&[0.0, 1.0], &[0.0, 2.0], u).unwrap(), 0.5);
        assert_eq!(wasserstein1(&[0.0, 1.0], &[0.0, 2.0], r).unwrap(), 0.5);
        // Equal sizes: mean absolute difference of sorted samples.
        assert!((wasserstein1(&[3.0, 0.0, 1.0], &[2.0, 1.0, 5.0], u).unwrap() - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn w1_matches_grid_oracle() {
        let mut rng = Rng::new(6);
        for _ in 0..5 {
            let p: Vec<f64> = (0..1 + rng.index(6)).map(|_| rng.index(20) as f64 / 4.0).collect();
            let q: Vec<f64> = (0..1 + rng.index(6)).map(|_| rng.index(20) as f64 / 4.0).collect();
            let lo = q.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exact = wasserstein1(&p, &q, W1Support::Restricted).unwrap();
            assert!((exact - grid_w1(&p, &q, lo, hi, 1e-3)).abs() < 1e-6);
        }
    }

    fn seg_traj(id: u64, parts: &[(usize, f64, f64, DiffusionState)]) -> SegmentedTrajectory {
        let mut start = 0;
        let segments = parts
            .iter()
            .map(|&(len, a, k, s)| {
                let seg = Segment {
                    start,
                    end: start + len,
                    params: DiffusionParams::new(a, k).unwrap(),
                    state: s,
                };
                start += len;
                seg
            })
            .collect();
        SegmentedTrajectory {
            traj_id: id,
            segments,
        }
    }

    #[test]
    fn perfect_prediction_scores_perfectly() {
        use DiffusionState::*;
        let t = vec![
            seg_traj(0, &[(40, 0.5, 1.0, Free), (60, 1.2, 0.3, Confined)]),
            seg_traj(1, &[(100, 1.0, 2.0, Free)]),
        ];
        let r = evaluate_experiment(&t, &t, EPS_CP).unwrap();
        assert_eq!(r.n_trajs, 2);
        assert_eq!((r.rmse_cp, r.mae_alpha, r.msle_k, r.w1_alpha, r.w1_k), (0.0, 0.0, 0.0, 0.0, 0.0));
        assert_eq!((r.jsc, r.f1_state), (1.0, 1.0));
    }

    #[test]
    fn evaluation_pools_frames_and_changepoints() {
        use DiffusionState::*;
        let gt = vec![seg_traj(4, &[(50, 0.5, 1.0, Free), (50, 1.5, 1.0, Free)])];
        let pred = vec![seg_traj(4, &[(53, 0.5, 1.0, Free), (47, 1.5, 1.0, Free)])];
        let r = evaluate_experiment(&pred, &gt, EPS_CP).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_), (1, 0, 0));
        assert_eq!(r.rmse_cp, 3.0);
        assert!((r.mae_alpha - 0.03).abs() < 1e-12);
        assert_eq!(r.w1_alpha, 0.0);
    }

    #[test]
    fn mismatched_ids_are_listed() {
        let a = vec![seg_traj(1, &[(10, 1.0, 1.0, DiffusionState::Free)])];
        let b = vec![seg_traj(2, &[(10, 1.0, 1.0, DiffusionState::Free)])];
        match evaluate_experiment(&a, &b, EPS_CP) {
            Err(Error::IdMismatch(v)) => assert_eq!(v.len(), 2),
            other => panic!("{other:?}"),
        }
        let c = vec![seg_traj(1, &[(12, 1.0, 1.0, DiffusionState::Free)])];
        assert!(matches!(evaluate_experiment(&a, &c, EPS_CP), Err(Error::LengthMismatch(_))));
    }

    #[test]
    fn combination_weights() {
        let base = EvaluationReport {
            n_trajs: 100,
            rmse_cp: 0.0,
            jsc: 1.0,
            mae_alpha: 0.1,
            msle_k: 0.0,
            f1_state: 1.0,
            w1_alpha: 0.2,
            w1_k: 0.0,
            w1_alpha_unrestricted: 0.0,
            w1_k_unrestricted: 0.0,
            tp: 0,
            fp: 0,
            fn_: 0,
        };
        let other = EvaluationReport {
            n_trajs: 300,
            mae_alpha: 0.3,
            w1_alpha: 0.4,
            ..base.clone()
        };
        let c = combine_reports(&[base, other]).unwrap();
        assert!((c.mae_alpha - 0.25).abs() < 1e-12);
        assert!((c.w1_alpha - 0.3).abs() < 1e-12);
        assert_eq!(c.n_trajs, 400);
    }

    #[test]
    fn report_csv_layout() {
        let r = EvaluationReport {
            n_trajs: 1,
            rmse_cp: 0.0,
            jsc: 1.0,
            mae_alpha: 0.0,
            msle_k: 0.0,
            f1_state: 1.0,
            w1_alpha: 0.0,
            w1_k: 0.0,
            w1_alpha_unrestricted: 0.0,
            w1_k_unrestricted: 0.0,
            tp: 0,
            fp: 0,
            fn_: 0,
        };
        let mut buf = Vec::new();
        write_report_csv(&mut buf, &[("exp_0".into(), r)]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "exp,n_trajs,rmse_cp,jsc,mae_alpha,msle_k,f1_state,w1_alpha,w1_k\nexp_0,1,0,1,0,0,1,0,0\n"
        );
    }

    fn brute_gated(gt: &[usize], pred: &[usize], eps: f64) -> f64 {
        // Pad the shorter side with dummies so every permutation is a full
        // pairing; dummy pairs contribute nothing.
        let n = gt.len().max(pred.len());
        let mut best = f64::INFINITY;
        let mut perm: Vec<usize> = (0..n).collect();
        permute(&mut perm, 0, &mut |p| {
            let total: f64 = (0..n)
                .map(|i| match (gt.get(i), pred.get(p[i])) {
                    (Some(&g), Some(&q)) => gated_distance(g as f64, q as f64, eps),
                    _ => 0.0,
                })
                .sum();
            best = best.min(total);
        });
        best
    }

    fn permute(v: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
        if k == v.len() {
            f(v);
            return;
        }
        for i in k..v.len() {
            v.swap(k, i);
            permute(v, k + 1, f);
            v.swap(k, i);
        }
    }

    proptest! {
        #[test]
        fn hungarian_pairing_is_optimal(
            gt in proptest::collection::vec(0usize..60, 0..6),
            pred in proptest::collection::vec(0usize..60, 0..6),
        ) {
            let m = pair_changepoints(&gt, &pred, EPS_CP).unwrap();
            let total: f64 = m.pairs.iter().map(|&(i, j)| gated_distance(gt[i] as f64, pred[j] as f64, EPS_CP)).sum();
            prop_assert!((total - brute_gated(&gt, &pred, EPS_CP)).abs() < 1e-9);
            let j = jsc(m.tp, m.fp, m.fn_);
            prop_assert!((0.0..=1.0).contains(&j));
        }

        #[test]
        fn w1_shift_and_symmetry(
            p in proptest::collection::vec(-5.0f64..5.0, 1..12),
            q in proptest::collection::vec(-5.0f64..5.0, 1..12),
            delta in -3.0f64..3.0,
        ) {
            let u = W1Support::Unrestricted;
            let a = wasserstein1(&p, &q, u).unwrap();
            prop_assert!(a >= 0.0);
            prop_assert!((a - wasserstein1(&q, &p, u).unwrap()).abs() < 1e-9);
            let shifted: Vec<f64> = p.iter().map(|v| v + delta).collect();
            let b = wasserstein1(&shifted, &q, u).unwrap();
            prop_assert!((b - a).abs() <= delta.abs() + 1e-9);
            prop_assert_eq!(wasserstein1(&p, &p, W1Support::Restricted).unwrap(), 0.0);
        }

        #[test]
        fn f1_in_unit_interval(
            g in proptest::collection::vec(0u8..4, 0..30),
            seed in 0u64..100,
        ) {
            let mut rng = Rng::new(seed);
            let gs: Vec<DiffusionState> = g.iter().map(|&c| DiffusionState::try_from(c).unwrap()).collect();
            let ps: Vec<DiffusionState> = gs.iter().map(|_| DiffusionState::ALL[rng.index(4)]).collect();
            let f = f1_state(&gs, &ps).unwrap();
            prop_assert!((0.0..=1.0).contains(&f));
        }
    }
}
