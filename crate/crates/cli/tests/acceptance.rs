//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use anodiff::assign::solve_assignment;
use anodiff::detect::{locate_frames, DetectConfig};
use anodiff::infer::{estimate_params_window, EstimatorConfig};
use anodiff::link::{link, LinkConfig};
use anodiff::metrics::{
    combine_reports, evaluate_experiment, f1_state, gated_distance, jsc, mae_alpha, msle_k,
    pair_changepoints, rmse_cp, wasserstein1, W1Support, EPS_CP,
};
use anodiff::segment::{
    detect_changepoints, normalize_trajectory, penalized_objective, segment_cost, smooth_states,
    CostModel, CpAlgorithm, CpConfig,
};
use anodiff::simulate::{
    extract_fovs, fov_layout, render_frames, sample_fbm_displacements, simulate_experiment,
    RenderConfig, SimConfig,
};
use anodiff::{DiffusionParams, DiffusionState, ModelKind, ParamTrack, Rng, SegmentedTrajectory, Trajectory};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(got: f64, want: f64, what: &str) -> Result<(), String> {
    ensure((got - want).abs() <= 1e-12, || format!("{what}: got {got}, want {want}"))
}

fn grid_w1(p: &[f64], q: &[f64], lo: f64, hi: f64) -> f64 {
    let cdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
    let h = 1e-4;
    let n = ((hi - lo) / h).round() as usize;
    (0..n)
        .map(|i| {
            let x = lo + (i as f64 + 0.5) * h;
            (cdf(p, x) - cdf(q, x)).abs() * h
        })
        .sum()
}

fn metric_fixtures() -> Outcome {
    use DiffusionState::*;
    close(gated_distance(100.0, 104.0, 10.0), 4.0, "gated below")?;
    close(gated_distance(100.0, 150.0, 10.0), 10.0, "gated capped")?;
    close(gated_distance(7.0, 7.0, 10.0), 0.0, "gated identity")?;

    let m = pair_changepoints(&[50], &[53], EPS_CP).map_err(|e| e.to_string())?;
    ensure((m.tp, m.fp, m.fn_) == (1, 0, 0), || format!("[50]/[53] counts {m:?}"))?;
    close(rmse_cp(&m, &[50], &[53]), 3.0, "rmse [50]/[53]")?;
    let m = pair_changepoints(&[50], &[80], EPS_CP).map_err(|e| e.to_string())?;
    ensure((m.tp, m.fp, m.fn_) == (0, 1, 1), || format!("[50]/[80] counts {m:?}"))?;
    close(rmse_cp(&m, &[50], &[80]), 0.0, "rmse without pairs")?;
    let (gt, pred) = ([10, 20], [19, 11]);
    let m = pair_changepoints(&gt, &pred, EPS_CP).map_err(|e| e.to_string())?;
    let mut pairs: Vec<(usize, usize)> = m.pairs.iter().map(|&(i, j)| (gt[i], pred[j])).collect();
    pairs.sort();
    ensure(pairs == [(10, 11), (20, 19)] && m.tp == 2, || format!("crossing pairs {pairs:?}"))?;
    close(rmse_cp(&m, &gt, &pred), 1.0, "rmse crossing")?;

    close(jsc(2, 1, 1), 0.5, "jsc")?;
    close(jsc(0, 3, 0), 0.0, "jsc no tp")?;
    close(jsc(0, 0, 0), 1.0, "jsc empty")?;

    close(mae_alpha(&[1.0, 0.5], &[1.2, 0.4]).unwrap(), 0.15, "mae")?;
    close(mae_alpha(&[0.3, 1.7], &[0.3, 1.7]).unwrap(), 0.0, "mae identity")?;
    close(msle_k(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0, "msle identity")?;
    close(msle_k(&[std::f64::consts::E - 1.0], &[0.0]).unwrap(), 1.0, "msle e-1")?;
    let mut rng = Rng::new(11);
    let g: Vec<f64> = (0..50).map(|_| rng.uniform_in(0.0, 5.0)).collect();
    let p: Vec<f64> = (0..50).map(|_| rng.uniform_in(0.0, 5.0)).collect();
    let direct = g
        .iter()
        .zip(&p)
        .map(|(a, b)| ((a + 1.0).ln() - (b + 1.0).ln()).powi(2))
        .sum::<f64>()
        / 50.0;
    close(msle_k(&g, &p).unwrap(), direct, "msle random")?;

    close(f1_state(&[Free, Free], &[Free, Free]).unwrap(), 1.0, "f1 identity")?;
    close(f1_state(&[Free, Free], &[Confined, Immobile]).unwrap(), 0.0, "f1 disjoint")?;
    close(
        f1_state(&[Free, Free, Confined, Immobile], &[Free, Free, Confined, Free]).unwrap(),
        0.75,
        "f1 three of four",
    )?;

    let w = |p: &[f64], q: &[f64], s| wasserstein1(p, q, s).unwrap();
    close(w(&[0.2, 0.9], &[0.2, 0.9], W1Support::Restricted), 0.0, "w1 identity")?;
    close(w(&[0.0; 3], &[1.0; 3], W1Support::Restricted), 0.0, "w1 point mass restricted")?;
    close(w(&[0.0; 3], &[1.0; 3], W1Support::Unrestricted), 1.0, "w1 point mass unrestricted")?;
    let oracle = grid_w1(&[0.0, 1.0], &[0.0, 2.0], 0.0, 2.0);
    ensure((oracle - 0.5).abs() < 1e-6, || format!("grid oracle {oracle}"))?;
    close(w(&[0.0, 1.0], &[0.0, 2.0], W1Support::Restricted), 0.5, "w1 {0,1} vs {0,2}")?;
    close(w(&[0.0, 1.0], &[0.0, 2.0], W1Support::Unrestricted), 0.5, "w1 unrestricted")?;

    close(segment_cost(&[0.0, 0.0, 4.0, 4.0], 0, 4, CostModel::L2), 16.0, "L2 cost")?;
    close(segment_cost(&[0.0, 1.0, 2.0, 3.0], 0, 4, CostModel::Linear), 0.0, "linear cost")?;

    let mut reports = Vec::new();
    for (i, model) in ModelKind::ALL.into_iter().enumerate() {
        let cfg = SimConfig {
            model,
            seed: 100 + i as u64,
            ..SimConfig::default()
        };
        let exp = simulate_experiment(&cfg).map_err(|e| e.to_string())?;
        let truth: Vec<SegmentedTrajectory> = extract_fovs(&exp, &fov_layout(&cfg))
            .iter()
            .flat_map(|f| f.truth.iter())
            .map(SegmentedTrajectory::from_piecewise_track)
            .collect::<anodiff::Result<_>>()
            .map_err(|e| e.to_string())?;
        let r = evaluate_experiment(&truth, &truth, EPS_CP).map_err(|e| e.to_string())?;
        reports.push(r);
    }
    let c = combine_reports(&reports).map_err(|e| e.to_string())?;
    let errors = [c.mae_alpha, c.msle_k, c.rmse_cp, c.w1_alpha, c.w1_k];
    ensure(
        errors.iter().all(|&e| e == 0.0) && c.jsc == 1.0 && c.f1_state == 1.0,
        || format!("self-evaluation not perfect: {c:?}"),
    )?;
    Ok(format!("fixtures exact; self-evaluation over {} trajectories perfect", c.n_trajs))
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..n {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

fn hungarian_oracle() -> Outcome {
    let mut rng = Rng::new(2);
    for case in 0..200 {
        let rows = 1 + rng.index(6);
        let cols = 1 + rng.index(6);
        let cost: Vec<Vec<f64>> = (0..rows)
            .map(|_| (0..cols).map(|_| rng.index(50) as f64).collect())
            .collect();
        let got = solve_assignment(&cost).map_err(|e| e.to_string())?.total;
        let (small, large) = (rows.min(cols), rows.max(cols));
        let best = permutations(large)
            .iter()
            .map(|p| {
                (0..small)
                    .map(|i| if rows <= cols { cost[i][p[i]] } else { cost[p[i]][i] })
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min);
        ensure(got == best, || format!("case {case} ({rows}x{cols}): {got} vs {best}"))?;
    }
    Ok("200 matrices match brute force".into())
}

fn exhaustive_best(series: &[f64], ms: usize, beta: f64) -> f64 {
    let n = series.len();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << (n - 1)) {
        let cps: Vec<usize> = (1..n).filter(|&t| mask >> (t - 1) & 1 == 1).collect();
        let mut bounds = vec![0];
        bounds.extend(&cps);
        bounds.push(n);
        if bounds.windows(2).any(|w| w[1] - w[0] < ms) {
            continue;
        }
        best = best.min(penalized_objective(series, &cps, CostModel::L2, beta));
    }
    best
}

fn pelt_oracle() -> Outcome {
    let mut rng = Rng::new(3);
    for case in 0..100 {
        let n = 8 + rng.index(13);
        let jumps = rng.index(4);
        let mut level = 0.0;
        let cuts: Vec<usize> = (0..jumps).map(|_| 1 + rng.index(n - 1)).collect();
        let series: Vec<f64> = (0..n)
            .map(|t| {
                if cuts.contains(&t) {
                    level += rng.uniform_in(-4.0, 4.0);
                }
                level + 0.5 * rng.normal()
            })
            .collect();
        let ms = 1 + rng.index(3);
        let beta = rng.uniform_in(0.5, 4.0);
        let cfg = CpConfig {
            algorithm: CpAlgorithm::Pelt,
            cost: CostModel::L2,
            penalty: Some(beta),
            min_segment: ms,
            ..CpConfig::default()
        };
        let cps = detect_changepoints(&series, &cfg).map_err(|e| e.to_string())?;
        let got = penalized_objective(&series, &cps, CostModel::L2, beta);
        let want = exhaustive_best(&series, ms, beta);
        ensure(got == want, || format!("case {case} (n={n}): {got} vs {want}"))?;
    }
    let series: Vec<f64> = [0.0; 8].iter().chain(&[5.0; 8]).chain(&[0.0; 8]).copied().collect();
    let cfg = CpConfig {
        algorithm: CpAlgorithm::Pelt,
        penalty: Some(1.0),
        ..CpConfig::default()
    };
    let cps = detect_changepoints(&series, &cfg).map_err(|e| e.to_string())?;
    ensure(cps == [8, 16], || format!("two-jump fixture gave {cps:?}"))?;
    Ok("100 series optimal; two-jump fixture [8, 16]".into())
}

fn fit_loglog(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, (my - slope * mx).exp())
}

fn msd_law() -> Outcome {
    let lags: Vec<usize> = vec![1, 2, 4, 8, 16, 32, 64, 128, 200];
    let mut worst = (0.0f64, 0.0f64);
    for (ai, alpha) in [0.5, 1.0, 1.5].into_iter().enumerate() {
        for (ki, k) in [0.5, 2.0].into_iter().enumerate() {
            let params = DiffusionParams::new(alpha, k).map_err(|e| e.to_string())?;
            let mut rng = Rng::new(40 + 10 * ai as u64 + ki as u64);
            let mut msd = vec![0.0; lags.len()];
            for _ in 0..1000 {
                let steps = sample_fbm_displacements(200, params, &mut rng).map_err(|e| e.to_string())?;
                let mut pos = [0.0, 0.0];
                let mut li = 0;
                for (t, s) in steps.iter().enumerate() {
                    pos = [pos[0] + s[0], pos[1] + s[1]];
                    if li < lags.len() && t + 1 == lags[li] {
                        msd[li] += (pos[0] * pos[0] + pos[1] * pos[1]) / 2.0;
                        li += 1;
                    }
                }
            }
            let xs: Vec<f64> = lags.iter().map(|&l| (l as f64).ln()).collect();
            let ys: Vec<f64> = msd.iter().map(|m| (m / 1000.0).ln()).collect();
            let (a_hat, k_hat) = fit_loglog(&xs, &ys);
            let (da, dk) = ((a_hat - alpha).abs(), (k_hat / k - 1.0).abs());
            worst = (worst.0.max(da), worst.1.max(dk));
            ensure(da <= 0.05 && dk <= 0.10, || {
                format!("alpha={alpha} K={k}: fitted alpha {a_hat:.4}, K {k_hat:.4}")
            })?;
        }
    }
    Ok(format!("max |d alpha| {:.4}, max rel K error {:.4}", worst.0, worst.1))
}

fn tracking_fidelity() -> Outcome {
    let mut rng = Rng::new(21);
    let n_frames = 100;
    let truth: Vec<Trajectory> = (0..25)
        .map(|i| {
            let params = DiffusionParams::new(rng.uniform_in(0.4, 1.6), rng.uniform_in(0.01, 0.05)).unwrap();
            let steps = sample_fbm_displacements(n_frames - 1, params, &mut rng).unwrap();
            let mut p = [20.0 + 22.0 * (i % 5) as f64, 20.0 + 22.0 * (i / 5) as f64];
            let mut pts = vec![p];
            for s in steps {
                let len = s[0].hypot(s[1]);
                let f = if len > 1.0 { 1.0 / len } else { 1.0 };
                p = [p[0] + s[0] * f, p[1] + s[1] * f];
                pts.push(p);
            }
            Trajectory::new(i as u64, 0, pts, 0).unwrap()
        })
        .collect();
    for t in 0..n_frames {
        for a in 0..truth.len() {
            for b in a + 1..truth.len() {
                let (p, q) = (truth[a].points[t], truth[b].points[t]);
                ensure((p[0] - q[0]).hypot(p[1] - q[1]) >= 6.0, || "fixture spacing".into())?;
            }
        }
    }
    let render = RenderConfig {
        noise_sigma: 0.0,
        ..RenderConfig::default()
    };
    let frames = render_frames(&truth, n_frames, 128, &render, &mut Rng::new(0)).map_err(|e| e.to_string())?;
    let det = locate_frames(&frames, &DetectConfig::default()).map_err(|e| e.to_string())?;
    let linked = link(&det, &LinkConfig::default()).map_err(|e| e.to_string())?;

    let nearest = |frame: usize, p: [f64; 2]| -> (usize, f64) {
        truth
            .iter()
            .enumerate()
            .map(|(i, t)| (i, (t.points[frame][0] - p[0]).hypot(t.points[frame][1] - p[1])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
    };
    let (mut swaps, mut sq, mut covered) = (0usize, 0.0, 0usize);
    let mut seen = std::collections::BTreeSet::new();
    for t in &linked {
        let owners: Vec<(usize, f64)> = t
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| nearest(t.start_frame + i, *p))
            .collect();
        if owners.iter().any(|o| o.0 != owners[0].0 || o.1 > 1.0) || !seen.insert(owners[0].0) {
            swaps += 1;
            continue;
        }
        covered += owners.len();
        sq += owners.iter().map(|o| o.1 * o.1).sum::<f64>();
    }
    let total = truth.len() * n_frames;
    let coverage = covered as f64 / total as f64;
    let rmse = (sq / covered.max(1) as f64).sqrt();
    ensure(swaps == 0, || format!("{swaps} identity swaps"))?;
    ensure(coverage >= 0.95, || format!("coverage {coverage:.3}"))?;
    ensure(rmse <= 0.3, || format!("localization RMSE {rmse:.3}"))?;
    Ok(format!(
        "{} tracks, 0 swaps, coverage {coverage:.3}, RMSE {rmse:.3} px",
        linked.len()
    ))
}

fn cp_recall() -> Outcome {
    let mut rng = Rng::new(6);
    let cfg = CpConfig::default();
    let (mut tp, mut fp, mut fn_, mut sq) = (0, 0, 0, 0.0);
    for id in 0..100 {
        let n = 200;
        let n_cps = rng.index(4);
        let mut cps: Vec<usize>;
        loop {
            cps = (0..n_cps).map(|_| 20 + rng.index(n - 39)).collect();
            cps.sort_unstable();
            let mut bounds = vec![0];
            bounds.extend(&cps);
            bounds.push(n);
            if bounds.windows(2).all(|w| w[1] - w[0] >= 20) {
                break;
            }
        }
        let mut levels = vec![rng.uniform_in(0.2, 1.8)];
        for _ in 0..n_cps {
            let prev = *levels.last().unwrap();
            let next = loop {
                let v = rng.uniform_in(0.2, 1.8);
                if (v - prev).abs() >= 0.5 {
                    break v;
                }
            };
            levels.push(next);
        }
        let alpha: Vec<f64> = (0..n)
            .map(|t| {
                let seg = cps.iter().filter(|&&c| c <= t).count();
                (levels[seg] + 0.05 * rng.normal()).clamp(1e-3, 2.0)
            })
            .collect();
        let track = ParamTrack {
            traj_id: id,
            start_frame: 0,
            alpha,
            k: vec![1.0; n],
            state: vec![DiffusionState::Free; n],
        };
        let seg = normalize_trajectory(&track, &cfg).map_err(|e| e.to_string())?;
        let pred = seg.changepoints();
        let m = pair_changepoints(&cps, &pred, EPS_CP).map_err(|e| e.to_string())?;
        tp += m.tp;
        fp += m.fp;
        fn_ += m.fn_;
        sq += m
            .true_positives(&cps, &pred)
            .map(|(i, j)| (cps[i] as f64 - pred[j] as f64).powi(2))
            .sum::<f64>();
    }
    let score = jsc(tp, fp, fn_);
    let rmse = if tp == 0 { 0.0 } else { (sq / tp as f64).sqrt() };
    ensure(score >= 0.8 && rmse <= 3.0, || {
        format!("JSC {score:.3} RMSE {rmse:.3} (tp {tp}, fp {fp}, fn {fn_})")
    })?;
    Ok(format!("JSC {score:.3}, RMSE_CP {rmse:.3} (tp {tp}, fp {fp}, fn {fn_})"))
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn estimator_sanity() -> Outcome {
    let est = EstimatorConfig::default();
    let (mut maes, mut msles) = (Vec::new(), Vec::new());
    let mut seed = 0;
    while maes.len() < 500 {
        let cfg = SimConfig {
            model: ModelKind::Ssm,
            density: 300.0,
            seed,
            ..SimConfig::default()
        };
        seed += 1;
        let exp = simulate_experiment(&cfg).map_err(|e| e.to_string())?;
        for (traj, truth) in exp.trajectories.iter().zip(&exp.truth_tracks) {
            if maes.len() == 500 {
                break;
            }
            ensure(traj.len() == 208, || format!("trajectory length {}", traj.len()))?;
            let e = estimate_params_window(traj, &est).map_err(|e| e.to_string())?;
            maes.push(mae_alpha(&truth.alpha, &e.track.alpha).map_err(|e| e.to_string())?);
            msles.push(msle_k(&truth.k, &e.track.k).map_err(|e| e.to_string())?);
        }
    }
    let (mae, msle) = (median(&mut maes), median(&mut msles));
    ensure(mae <= 0.3 && msle <= 0.15, || format!("median MAE {mae:.3}, MSLE {msle:.3}"))?;
    Ok(format!("500 trajectories: median MAE(alpha) {mae:.3}, MSLE(K) {msle:.3}"))
}

fn normalization_rules() -> Outcome {
    use DiffusionState::*;
    let code = |s: &[u8]| -> Vec<DiffusionState> {
        s.iter().map(|&c| DiffusionState::try_from(c).unwrap()).collect()
    };
    for (input, want) in [
        (vec![2, 2, 2, 0, 2, 2, 2], vec![2; 7]),
        (vec![0, 0, 0, 1, 1, 0, 0, 0], vec![0; 8]),
        (vec![0, 0, 0, 1, 1, 1], vec![0, 0, 0, 1, 1, 1]),
    ] {
        let got = smooth_states(&code(&input));
        ensure(got == code(&want), || format!("smooth {input:?} gave {got:?}"))?;
    }
    let n = 100;
    let track = ParamTrack {
        traj_id: 0,
        start_frame: 0,
        alpha: (0..n).map(|t| if t < 50 { 0.5 } else { 1.5 }).collect(),
        k: vec![1.0; n],
        state: vec![Free; n],
    };
    let seg = normalize_trajectory(&track, &CpConfig::default()).map_err(|e| e.to_string())?;
    let alphas: Vec<f64> = seg.segments.iter().map(|s| s.params.alpha).collect();
    let cps = seg.changepoints();
    ensure(alphas == [0.5, 1.5], || format!("segment medians {alphas:?}"))?;
    ensure(cps.len() == 1 && cps[0].abs_diff(50) <= 2, || format!("change points {cps:?}"))?;
    Ok(format!("smoothing fixtures exact; medians {alphas:?}, CP {}", cps[0]))
}

fn run_pipeline(dir: &Path) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_anodiff"))
        .args(["pipeline", "--seed", "1", "--out"])
        .arg(dir)
        .env("RUST_LOG", "error")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("pipeline failed: {}", String::from_utf8_lossy(&out.stderr))
    })?;
    std::fs::read(dir.join("report.json")).map_err(|e| e.to_string())
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let a = run_pipeline(&tmp.path().join("a"))?;
    let b = run_pipeline(&tmp.path().join("b"))?;
    ensure(!a.is_empty() && a == b, || "report.json differs between runs".into())?;
    Ok(format!("report.json identical ({} bytes)", a.len()))
}

type Criterion = (&'static str, u64, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("metric fixtures", 10, metric_fixtures),
        ("hungarian oracle", 5, hungarian_oracle),
        ("pelt oracle", 30, pelt_oracle),
        ("simulator MSD law", 60, msd_law),
        ("tracking fidelity", 60, tracking_fidelity),
        ("change-point recall", 30, cp_recall),
        ("estimator sanity", 120, estimator_sanity),
        ("normalization rules", 30, normalization_rules),
        ("end-to-end determinism", 120, determinism),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut outcome = check();
        let elapsed = start.elapsed();
        if outcome.is_ok() && elapsed > Duration::from_secs(*budget) {
            outcome = Err(format!("took {elapsed:.1?}, budget {budget} s"));
        }
        match outcome {
            Ok(msg) => println!("criterion {}: PASS {name} ({elapsed:.2?}): {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {}: FAIL {name} ({elapsed:.2?}): {msg}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
