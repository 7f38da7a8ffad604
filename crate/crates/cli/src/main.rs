//! `anodiff`: simulate, track, infer, segment and evaluate anomalous
//! diffusion experiments from the command line.

mod config;
mod meta;
mod stages;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anodiff::metrics::{combine_reports, evaluate_experiment, write_report_csv, EvaluationReport};
use anodiff::segment::{CostModel, CpAlgorithm};
use anodiff::{io, ModelKind, ParamTrack, SegmentedTrajectory};
use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use config::{PipelineConfig, Predictor};
use meta::StageMeta;

#[derive(Parser)]
#[command(name = "anodiff", version, about = "Anomalous diffusion characterization pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate experiments and write ground truth per field of view.
    Simulate(SimulateArgs),
    /// Render spot videos and a VIP label frame from a trajectory table.
    Render(RenderArgs),
    /// Detect and link spots in a directory of PGM frames.
    Track(TrackArgs),
    /// Estimate per-frame parameters for a trajectory table.
    Infer(InferArgs),
    /// Segment per-frame parameter tracks and summarize the ensemble.
    Segment(SegmentArgs),
    /// Score predictions against ground truth.
    Evaluate(EvaluateArgs),
    /// Run every stage over a generated experiment set.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct Common {
    /// TOML configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for experiment-level parallelism.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    fovs: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    /// Expected particle count over the whole field.
    #[arg(long)]
    density: Option<f64>,
    /// Generate this many experiments per model instead of one.
    #[arg(long)]
    per_model: Option<usize>,
    /// Models used with --per-model, comma separated.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<ModelKind>>,
}

#[derive(Args)]
struct TrackFlags {
    #[arg(long)]
    diameter: Option<usize>,
    #[arg(long)]
    minmass: Option<f64>,
    #[arg(long)]
    separation: Option<f64>,
    #[arg(long)]
    search_range: Option<f64>,
    #[arg(long)]
    memory: Option<usize>,
}

#[derive(Args)]
struct CpFlags {
    #[arg(long)]
    cp_algo: Option<CpAlgorithm>,
    #[arg(long)]
    cp_cost: Option<CostModel>,
    #[arg(long)]
    penalty: Option<f64>,
    #[arg(long)]
    min_segment: Option<usize>,
    /// Force one or two ensemble states.
    #[arg(long)]
    n_states: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    sim: SimArgs,
    /// Also render PGM frames and a VIP frame per FOV.
    #[arg(long)]
    render: bool,
}

#[derive(Args)]
struct RenderArgs {
    /// FOV directory holding trajectories.csv.
    #[arg(long)]
    input: PathBuf,
    /// Defaults to the input directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    frames: Option<usize>,
}

#[derive(Args)]
struct TrackArgs {
    /// Directory of PGM frames, read in file-name order.
    #[arg(long)]
    frames: PathBuf,
    /// Label frame; writes vip_map.csv when given.
    #[arg(long)]
    vip: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    flags: TrackFlags,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    trajectories: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    predictor: Option<Predictor>,
    /// Parameter-track table used with `--predictor file`.
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    min_lags: Option<usize>,
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(long)]
    tracks: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    cp: CpFlags,
    /// Width of the sliding-window detector.
    #[arg(long)]
    window: Option<usize>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Segments or per-frame parameter tracks.
    #[arg(long)]
    pred: PathBuf,
    /// Segments or per-frame parameter tracks.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    eps: Option<f64>,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    sim: SimArgs,
    #[command(flatten)]
    track: TrackFlags,
    #[command(flatten)]
    cp: CpFlags,
    /// Render videos and evaluate tracked VIP trajectories.
    #[arg(long)]
    video: bool,
    #[arg(long)]
    est_window: Option<usize>,
    #[arg(long)]
    cp_window: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
}

/// Marker for runs that completed but produced nothing.
#[derive(Debug)]
struct EmptyResult(String);

impl fmt::Display for EmptyResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "empty result: {}", self.0)
    }
}

impl std::error::Error for EmptyResult {}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<EmptyResult>().is_some() {
        return 2;
    }
    let invalid = e
        .chain()
        .filter_map(|c| c.downcast_ref::<anodiff::Error>())
        .any(anodiff::Error::is_validation);
    if invalid {
        3
    } else {
        1
    }
}

fn set_if<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn base_config(common: &Common) -> anyhow::Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(common.config.as_deref())?;
    set_if(&mut cfg.seed, common.seed);
    if let Some(j) = common.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .context("configuring worker threads")?;
    }
    Ok(cfg)
}

fn apply_sim(cfg: &mut PipelineConfig, a: &SimArgs) {
    set_if(&mut cfg.sim.model, a.model);
    set_if(&mut cfg.sim.n_fovs, a.fovs);
    set_if(&mut cfg.sim.n_frames, a.frames);
    set_if(&mut cfg.sim.density, a.density);
    set_if(&mut cfg.fixture.per_model, a.per_model);
    set_if(&mut cfg.fixture.models, a.models.clone());
}

fn apply_track(cfg: &mut PipelineConfig, a: &TrackFlags) {
    set_if(&mut cfg.detect.diameter, a.diameter);
    set_if(&mut cfg.detect.minmass, a.minmass);
    set_if(&mut cfg.detect.separation, a.separation);
    set_if(&mut cfg.link.search_range, a.search_range);
    set_if(&mut cfg.link.memory, a.memory);
}

fn apply_cp(cfg: &mut PipelineConfig, a: &CpFlags) {
    set_if(&mut cfg.cp.algorithm, a.cp_algo);
    set_if(&mut cfg.cp.cost, a.cp_cost);
    if a.penalty.is_some() {
        cfg.cp.penalty = a.penalty;
    }
    set_if(&mut cfg.cp.min_segment, a.min_segment);
    if a.n_states.is_some() {
        cfg.evaluate.n_states = a.n_states;
    }
}

fn finish(cfg: &PipelineConfig, out_dir: &Path) -> anyhow::Result<()> {
    cfg.validate()?;
    cfg.write_resolved(out_dir)
}

fn cmd_simulate(a: SimulateArgs) -> anyhow::Result<()> {
    let mut cfg = base_config(&a.common)?;
    apply_sim(&mut cfg, &a.sim);
    finish(&cfg, &a.out)?;
    let mut meta = StageMeta::new("simulate", &cfg);
    let jobs: Vec<(PathBuf, anodiff::simulate::SimConfig)> = if a.sim.per_model.is_some() {
        stages::experiment_specs(&cfg)
            .into_iter()
            .map(|s| {
                let mut sim = cfg.sim.clone();
                sim.model = s.model;
                sim.seed = s.seed;
                (a.out.join(&s.name), sim)
            })
            .collect()
    } else {
        let mut sim = cfg.sim.clone();
        sim.seed = cfg.seed;
        vec![(a.out.clone(), sim)]
    };
    let written: Vec<Vec<PathBuf>> = jobs
        .par_iter()
        .map(|(dir, sim)| -> anyhow::Result<Vec<PathBuf>> {
            let mut files = Vec::new();
            let mut rng = stages::render_rng(sim.seed);
            for fov in stages::simulate_fovs(sim)? {
                let fov_dir = dir.join(format!("fov_{:03}", fov.fov.id));
                files.extend(stages::write_fov(&fov_dir, &fov)?);
                if a.render {
                    let video = stages::render_fov(&fov.trajectories, &cfg, &mut rng)?;
                    files.extend(stages::write_video(&fov_dir, &video)?);
                }
            }
            Ok(files)
        })
        .collect::<anyhow::Result<_>>()?;
    for f in written.iter().flatten() {
        meta.output(&a.out, f)?;
    }
    meta.write(&a.out.join("simulate.meta.json"))
}

fn cmd_render(a: RenderArgs) -> anyhow::Result<()> {
    let mut cfg = base_config(&a.common)?;
    set_if(&mut cfg.sim.n_frames, a.frames);
    let out = a.out.clone().unwrap_or_else(|| a.input.clone());
    finish(&cfg, &out)?;
    let input = a.input.join("trajectories.csv");
    let trajs = io::read_trajectories(io::open(&input)?, 0)?;
    let video = stages::render_fov(&trajs, &cfg, &mut stages::render_rng(cfg.seed))?;
    let mut meta = StageMeta::new("render", &cfg);
    meta.input(&input)?;
    for f in stages::write_video(&out, &video)? {
        meta.output(&out, &f)?;
    }
    meta.write(&out.join("render.meta.json"))
}

fn cmd_track(a: TrackArgs) -> anyhow::Result<()> {
    let mut cfg = base_config(&a.common)?;
    apply_track(&mut cfg, &a.flags);
    finish(&cfg, &a.out)?;
    let frames = stages::read_frames(&a.frames)?;
    if frames.is_empty() {
        return Err(EmptyResult(format!("no PGM frames in {}", a.frames.display())).into());
    }
    let (det, trajs) = stages::track(&frames, &cfg)?;
    let mut meta = StageMeta::new("track", &cfg);
    let det_path = a.out.join("detections.csv");
    io::write_detections(io::create(&det_path)?, &det)?;
    let traj_path = a.out.join("trajectories.csv");
    io::write_trajectories(io::create(&traj_path)?, &trajs)?;
    meta.output(&a.out, &det_path)?;
    meta.output(&a.out, &traj_path)?;
    if let Some(vip_path) = &a.vip {
        meta.input(vip_path)?;
        let img = anodiff::pgm::GrayImage::read_pgm(io::open(vip_path)?)?;
        let first = trajs.iter().map(|t| t.start_frame).min().unwrap_or(0);
        let m = anodiff::link::match_vips(
            &anodiff::link::VipLabelFrame::from_image(&img),
            &anodiff::link::positions_at(&trajs, first),
            Some(cfg.link.search_range),
        )?;
        for label in &m.unmatched {
            log::warn!("VIP label {label} has no trajectory nearby");
        }
        let p = a.out.join("vip_map.csv");
        io::write_vip_map(io::create(&p)?, &m.map)?;
        meta.output(&a.out, &p)?;
    }
    meta.write(&a.out.join("track.meta.json"))?;
    if det.is_empty() {
        return Err(EmptyResult("no detections".into()).into());
    }
    Ok(())
}

fn meta_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    out.with_file_name(name)
}

fn cmd_infer(a: InferArgs) -> anyhow::Result<()> {
    let mut cfg = base_config(&a.common)?;
    set_if(&mut cfg.predictor, a.predictor);
    set_if(&mut cfg.estimator.window, a.window);
    set_if(&mut cfg.estimator.min_lags, a.min_lags);
    let out_dir = a.out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    finish(&cfg, out_dir)?;
    let mut meta = StageMeta::new("infer", &cfg);
    meta.input(&a.trajectories)?;
    let trajs = io::read_trajectories(io::open(&a.trajectories)?, 0)?;
    let tracks = match cfg.predictor {
        Predictor::Msd => stages::estimate_all(&trajs, &cfg)?,
        Predictor::File => {
            let path = a
                .predictions
                .as_ref()
                .context("--predictor file needs --predictions")?;
            meta.input(path)?;
            anodiff::infer::load_predictions(io::open(path)?, Some(&trajs))?
        }
    };
    io::write_param_tracks(io::create(&a.out)?, &tracks)?;
    meta.output(out_dir, &a.out)?;
    meta.write(&meta_path(&a.out))?;
    if tracks.is_empty() {
        return Err(EmptyResult("no trajectories".into()).into());
    }
    Ok(())
}

fn cmd_segment(a: SegmentArgs) -> anyhow::Result<()> {
    let mut cfg = base_config(&a.common)?;
    apply_cp(&mut cfg, &a.cp);
    set_if(&mut cfg.cp.window_width, a.window);
    finish(&cfg, &a.out)?;
    let mut meta = StageMeta::new("segment", &cfg);
    meta.input(&a.tracks)?;
    let tracks = io::read_param_tracks(io::open(&a.tracks)?)?;
    if tracks.is_empty() {
        return Err(EmptyResult(format!("no tracks in {}", a.tracks.display())).into());
    }
    let segs = stages::segment_all(&tracks, &cfg)?;
    let p = a.out.join("segments.csv");
    io::write_segments(io::create(&p)?, &segs)?;
    meta.output(&a.out, &p)?;
    if let Some(summary) = stages::ensemble(&segs, &cfg)? {
        let p = a.out.join("ensemble.json");
        std::fs::write(&p, serde_json::to_string_pretty(&summary)? + "\n")
            .with_context(|| format!("writing {}", p.display()))?;
        meta.output(&a.out, &p)?;
    }
    let seg_values = |f: fn(&anodiff::Segment) -> f64| -> Vec<f64> {
        segs.iter().flat_map(|s| s.segments.iter().map(f)).collect()
    };
    for (name, values) in [
        ("hist_alpha.csv", seg_values(|s| s.params.alpha)),
        ("hist_k.csv", seg_values(|s| s.params.k)),
    ] {
        let p = a.out.join(name);
        stages::write_histogram(&p, &values, 20)?;
        meta.output(&a.out, &p)?;
    }
    meta.write(&a.out.join("segment.meta.json"))
}

/// Reads segments or piecewise per-frame tracks, chosen by header.
fn read_segmented(path: &Path) -> anyhow::Result<Vec<SegmentedTrajectory>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let header = text.lines().next().unwrap_or_default();
    let out = if header.split(',').any(|c| c == "frame") {
        let tracks: Vec<ParamTrack> = io::read_param_tracks(text.as_bytes())?;
        stages::truth_segments(&tracks)?
    } else {
        io::read_segments(text.as_bytes())?
    };
    Ok(out)
}

#[derive(Serialize)]
struct NamedReport {
    name: String,
    report: EvaluationReport,
}

#[derive(Serialize)]
struct EvaluateOutput<'a> {
    config: &'a PipelineConfig,
    experiments: Vec<NamedReport>,
    combined: EvaluationReport,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn cmd_evaluate(a: EvaluateArgs) -> anyhow::Result<()> {
    let mut cfg = base_config(&a.common)?;
    set_if(&mut cfg.evaluate.eps_cp, a.eps);
    finish(&cfg, &a.out)?;
    let mut meta = StageMeta::new("evaluate", &cfg);
    meta.input(&a.pred)?;
    meta.input(&a.truth)?;
    let pred = read_segmented(&a.pred)?;
    let truth = read_segmented(&a.truth)?;
    if truth.is_empty() {
        return Err(EmptyResult("no ground-truth trajectories".into()).into());
    }
    let report = evaluate_experiment(&pred, &truth, cfg.evaluate.eps_cp)?;
    let json = a.out.join("report.json");
    write_json(
        &json,
        &EvaluateOutput {
            config: &cfg,
            experiments: vec![NamedReport {
                name: "exp".into(),
                report: report.clone(),
            }],
            combined: report.clone(),
        },
    )?;
    let csv = a.out.join("report.csv");
    write_report_csv(io::create(&csv)?, &[("exp".into(), report)])?;
    meta.output(&a.out, &json)?;
    meta.output(&a.out, &csv)?;
    meta.write(&a.out.join("evaluate.meta.json"))
}

#[derive(Serialize)]
struct PipelineOutput<'a> {
    config: &'a PipelineConfig,
    experiments: Vec<stages::ExperimentResult>,
    combined: Option<EvaluationReport>,
}

fn cmd_pipeline(a: PipelineArgs) -> anyhow::Result<()> {
    let mut cfg = base_config(&a.common)?;
    apply_sim(&mut cfg, &a.sim);
    apply_track(&mut cfg, &a.track);
    apply_cp(&mut cfg, &a.cp);
    cfg.fixture.video |= a.video;
    set_if(&mut cfg.estimator.window, a.est_window);
    set_if(&mut cfg.cp.window_width, a.cp_window);
    set_if(&mut cfg.evaluate.eps_cp, a.eps);
    finish(&cfg, &a.out)?;
    let specs = stages::experiment_specs(&cfg);
    let results: Vec<stages::ExperimentResult> = specs
        .par_iter()
        .map(|s| stages::run_experiment(s, &cfg, &a.out.join(&s.name)))
        .collect::<anyhow::Result<_>>()?;
    let rows: Vec<(String, EvaluationReport)> = results
        .iter()
        .filter_map(|r| r.report.clone().map(|rep| (r.name.clone(), rep)))
        .collect();
    let combined = if rows.is_empty() {
        None
    } else {
        let reports: Vec<EvaluationReport> = rows.iter().map(|r| r.1.clone()).collect();
        Some(combine_reports(&reports)?)
    };
    write_json(
        &a.out.join("report.json"),
        &PipelineOutput {
            config: &cfg,
            experiments: results,
            combined: combined.clone(),
        },
    )?;
    let mut csv_rows = rows;
    if let Some(c) = combined {
        csv_rows.push(("combined".into(), c));
    } else {
        return Err(EmptyResult("no trajectories in any experiment".into()).into());
    }
    write_report_csv(io::create(&a.out.join("report.csv"))?, &csv_rows)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Render(a) => cmd_render(a),
        Command::Track(a) => cmd_track(a),
        Command::Infer(a) => cmd_infer(a),
        Command::Segment(a) => cmd_segment(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Pipeline(a) => cmd_pipeline(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
