//! Stage implementations shared by the individual subcommands and the
//! chained pipeline.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anodiff::detect::{locate_frames, Detection};
use anodiff::fov::to_fov_tensors;
use anodiff::infer::estimate_params_window;
use anodiff::link::{link, match_vips, positions_at, VipLabelFrame};
use anodiff::metrics::{evaluate_experiment, EvaluationReport};
use anodiff::pgm::GrayImage;
use anodiff::segment::{aggregate_ensemble, normalize_trajectory, EnsembleSummary};
use anodiff::simulate::{
    extract_fovs, fov_layout, render_frames, render_vip_frame, simulate_experiment, streams,
    FovData, SimConfig,
};
use anodiff::{io, ModelKind, ParamTrack, Rng, SegmentedTrajectory, Trajectory};
use anyhow::Context;
use serde::Serialize;

use crate::config::PipelineConfig;

/// Substream base for per-experiment seeds.
const EXPERIMENT_STREAM_BASE: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub model: ModelKind,
    pub seed: u64,
}

/// `per_model` experiments for each configured model, each with its own
/// seed derived from the root seed.
pub fn experiment_specs(cfg: &PipelineConfig) -> Vec<ExperimentSpec> {
    let root = Rng::new(cfg.seed);
    let mut out = Vec::new();
    for &model in &cfg.fixture.models {
        for i in 0..cfg.fixture.per_model {
            let idx = out.len() as u64;
            out.push(ExperimentSpec {
                name: format!("{}_{i:02}", model.name()),
                model,
                seed: root.split(EXPERIMENT_STREAM_BASE + idx).next_u64(),
            });
        }
    }
    out
}

pub fn simulate_fovs(sim: &SimConfig) -> anodiff::Result<Vec<FovData>> {
    let exp = simulate_experiment(sim)?;
    Ok(extract_fovs(&exp, &fov_layout(sim)))
}

pub struct Video {
    pub frames: Vec<GrayImage>,
    pub vip: GrayImage,
    /// VIP label -> simulated trajectory id.
    pub vip_truth: BTreeMap<u32, u64>,
}

pub fn render_fov(
    trajectories: &[Trajectory],
    cfg: &PipelineConfig,
    rng: &mut Rng,
) -> anodiff::Result<Video> {
    let size = cfg.sim.fov_size.round() as usize;
    let frames = render_frames(trajectories, cfg.sim.n_frames, size, &cfg.render, rng)?;
    let (vip, vip_truth) = render_vip_frame(
        trajectories,
        0,
        size,
        cfg.fixture.n_vips,
        cfg.fixture.vip_radius,
    );
    Ok(Video {
        frames,
        vip,
        vip_truth,
    })
}

pub fn render_rng(seed: u64) -> Rng {
    Rng::new(seed).split(streams::RENDER)
}

fn pgm_path(dir: &Path, t: usize) -> PathBuf {
    dir.join(format!("frame_{t:04}.pgm"))
}

pub fn write_video(dir: &Path, video: &Video) -> anyhow::Result<Vec<PathBuf>> {
    let frames_dir = dir.join("frames");
    std::fs::create_dir_all(&frames_dir)
        .with_context(|| format!("creating {}", frames_dir.display()))?;
    let mut written = Vec::new();
    for (t, f) in video.frames.iter().enumerate() {
        let p = pgm_path(&frames_dir, t);
        f.write_pgm(io::create(&p)?)
            .with_context(|| format!("writing {}", p.display()))?;
        written.push(p);
    }
    let vip = dir.join("vip.pgm");
    video
        .vip
        .write_pgm(io::create(&vip)?)
        .with_context(|| format!("writing {}", vip.display()))?;
    let truth = dir.join("vip_truth.csv");
    io::write_vip_map(io::create(&truth)?, &video.vip_truth)?;
    written.push(vip);
    written.push(truth);
    Ok(written)
}

pub fn read_frames(dir: &Path) -> anyhow::Result<Vec<GrayImage>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            GrayImage::read_pgm(io::open(p)?)
                .with_context(|| format!("reading {}", p.display()))
        })
        .collect()
}

/// Writes the simulated data of one FOV; returns the files written.
pub fn write_fov(dir: &Path, fov: &FovData) -> anyhow::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    let p = dir.join("trajectories.csv");
    io::write_trajectories(io::create(&p)?, &fov.trajectories)?;
    written.push(p);
    let p = dir.join("truth.csv");
    io::write_param_tracks(io::create(&p)?, &fov.truth)?;
    written.push(p);
    let p = dir.join("changepoints.csv");
    io::write_changepoints(io::create(&p)?, &fov.trajectories, &fov.changepoints)?;
    written.push(p);
    for (k, tensor) in to_fov_tensors(&fov.trajectories, fov.fov.id)?
        .iter()
        .enumerate()
    {
        let bin = dir.join(format!("tensor_{k:02}.bin"));
        std::fs::write(&bin, tensor.to_le_bytes())
            .with_context(|| format!("writing {}", bin.display()))?;
        let json = dir.join(format!("tensor_{k:02}.json"));
        std::fs::write(&json, serde_json::to_string_pretty(&tensor.header())? + "\n")
            .with_context(|| format!("writing {}", json.display()))?;
        written.push(bin);
        written.push(json);
    }
    Ok(written)
}

pub fn track(frames: &[GrayImage], cfg: &PipelineConfig) -> anodiff::Result<(Vec<Detection>, Vec<Trajectory>)> {
    let det = locate_frames(frames, &cfg.detect)?;
    let trajs = link(&det, &cfg.link)?;
    Ok((det, trajs))
}

pub fn estimate_all(trajectories: &[Trajectory], cfg: &PipelineConfig) -> anodiff::Result<Vec<ParamTrack>> {
    let mut short = 0usize;
    let mut out = Vec::with_capacity(trajectories.len());
    for t in trajectories {
        let e = estimate_params_window(t, &cfg.estimator)?;
        if e.low_confidence {
            log::debug!("trajectory {} has {} frames; low-confidence estimate", t.id, t.len());
            short += 1;
        }
        out.push(e.track);
    }
    if short > 0 {
        log::warn!(
            "{short} of {} trajectories too short for a windowed fit; using step-variance fallback",
            trajectories.len()
        );
    }
    Ok(out)
}

pub fn segment_all(tracks: &[ParamTrack], cfg: &PipelineConfig) -> anodiff::Result<Vec<SegmentedTrajectory>> {
    tracks.iter().map(|t| normalize_trajectory(t, &cfg.cp)).collect()
}

pub fn truth_segments(truth: &[ParamTrack]) -> anodiff::Result<Vec<SegmentedTrajectory>> {
    truth.iter().map(SegmentedTrajectory::from_piecewise_track).collect()
}

pub fn ensemble(segments: &[SegmentedTrajectory], cfg: &PipelineConfig) -> anodiff::Result<Option<EnsembleSummary>> {
    if segments.is_empty() {
        return Ok(None);
    }
    aggregate_ensemble(segments, cfg.evaluate.n_states).map(Some)
}

/// Predictions for the VIP trajectories of a tracked video, re-keyed to
/// the simulated ids and stretched over the simulated frames: frames the
/// tracked trajectory does not cover take its nearest estimate.
pub fn vip_predictions(
    video: &Video,
    tracked: &[Trajectory],
    tracked_pred: &[ParamTrack],
    truth: &[ParamTrack],
) -> anodiff::Result<(Vec<ParamTrack>, Vec<ParamTrack>)> {
    let matched = match_vips(
        &VipLabelFrame::from_image(&video.vip),
        &positions_at(tracked, 0),
        Some(3.0),
    )?;
    if !matched.unmatched.is_empty() {
        log::warn!("{} VIP labels without a tracked particle", matched.unmatched.len());
    }
    let pred_by_id: BTreeMap<u64, &ParamTrack> = tracked_pred.iter().map(|p| (p.traj_id, p)).collect();
    let truth_by_id: BTreeMap<u64, &ParamTrack> = truth.iter().map(|t| (t.traj_id, t)).collect();
    let mut preds = Vec::new();
    let mut truths = Vec::new();
    for (label, tracked_id) in &matched.map {
        let Some(&truth_id) = video.vip_truth.get(label) else {
            continue;
        };
        let (Some(p), Some(t)) = (pred_by_id.get(tracked_id), truth_by_id.get(&truth_id)) else {
            continue;
        };
        let mut out = ParamTrack {
            traj_id: truth_id,
            start_frame: t.start_frame,
            alpha: Vec::with_capacity(t.len()),
            k: Vec::with_capacity(t.len()),
            state: Vec::with_capacity(t.len()),
        };
        for f in t.start_frame..t.start_frame + t.len() {
            let i = f.clamp(p.start_frame, p.start_frame + p.len() - 1) - p.start_frame;
            out.alpha.push(p.alpha[i]);
            out.k.push(p.k[i]);
            out.state.push(p.state[i]);
        }
        preds.push(out);
        truths.push((*t).clone());
    }
    Ok((preds, truths))
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub name: String,
    pub model: ModelKind,
    pub seed: u64,
    pub report: Option<EvaluationReport>,
    pub ensemble: Option<EnsembleSummary>,
}

/// Runs one experiment end to end and writes its per-FOV files under
/// `dir`.
pub fn run_experiment(spec: &ExperimentSpec, cfg: &PipelineConfig, dir: &Path) -> anyhow::Result<ExperimentResult> {
    let mut sim = cfg.sim.clone();
    sim.model = spec.model;
    sim.seed = spec.seed;
    let fovs = simulate_fovs(&sim)?;
    let mut rng = render_rng(spec.seed);
    let mut all_pred = Vec::new();
    let mut all_truth = Vec::new();
    for fov in &fovs {
        let fov_dir = dir.join(format!("fov_{:03}", fov.fov.id));
        write_fov(&fov_dir, fov)?;
        let (pred, truth) = if cfg.fixture.video {
            let video = render_fov(&fov.trajectories, cfg, &mut rng)?;
            let (det, tracked) = track(&video.frames, cfg)?;
            io::write_detections(io::create(&fov_dir.join("detections.csv"))?, &det)?;
            io::write_trajectories(io::create(&fov_dir.join("tracked.csv"))?, &tracked)?;
            let tracked_pred = estimate_all(&tracked, cfg)?;
            vip_predictions(&video, &tracked, &tracked_pred, &fov.truth)?
        } else {
            (estimate_all(&fov.trajectories, cfg)?, fov.truth.clone())
        };
        io::write_param_tracks(io::create(&fov_dir.join("predictions.csv"))?, &pred)?;
        let pred_seg = segment_all(&pred, cfg)?;
        io::write_segments(io::create(&fov_dir.join("segments.csv"))?, &pred_seg)?;
        let truth_seg = truth_segments(&truth)?;
        // Ids are per FOV; offset them so an experiment can pool its FOVs.
        let offset = u64::from(fov.fov.id) << 32;
        all_pred.extend(pred_seg.into_iter().map(|mut s| {
            s.traj_id += offset;
            s
        }));
        all_truth.extend(truth_seg.into_iter().map(|mut s| {
            s.traj_id += offset;
            s
        }));
    }
    let report = if all_truth.is_empty() {
        log::warn!("experiment {} has no trajectories to evaluate", spec.name);
        None
    } else {
        Some(evaluate_experiment(&all_pred, &all_truth, cfg.evaluate.eps_cp)?)
    };
    Ok(ExperimentResult {
        name: spec.name.clone(),
        model: spec.model,
        seed: spec.seed,
        report,
        ensemble: ensemble(&all_pred, cfg)?,
    })
}

/// Equal-width histogram rows `(lo, hi, count)` over `[min, max]`.
pub fn histogram(values: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    if values.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (lo + i as f64 * width, lo + (i + 1) as f64 * width, c))
        .collect()
}

pub fn write_histogram(path: &Path, values: &[f64], bins: usize) -> anyhow::Result<()> {
    let mut text = String::from("bin_lo,bin_hi,count\n");
    for (lo, hi, c) in histogram(values, bins) {
        text.push_str(&format!("{lo},{hi},{c}\n"));
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
