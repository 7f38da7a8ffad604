use std::collections::HashMap;

use super::config::SimConfig;
use super::fbm::FgnSampler;
use super::streams;
use crate::error::Result;
use crate::rng::Rng;
use crate::types::{
    DiffusionParams, DiffusionState, ExperimentGroundTruth, ModelKind, ParamTrack, Trajectory,
};

/// Draws `(alpha, K)` for one particle or state.
///
/// `alpha ~ Normal(1, sigma_alpha)` truncated to `(0, 2]`; `K ~ Normal(1,
/// sigma_k)` truncated to `K > 0`, except for single-state experiments
/// where `K ~ Uniform(ssm_k_range)`.
pub fn sample_parameters(model: ModelKind, cfg: &SimConfig, rng: &mut Rng) -> DiffusionParams {
    let alpha = truncated_normal(rng, cfg.sigma_alpha, |a| a > 0.0 && a <= 2.0);
    let k = match model {
        ModelKind::Ssm => rng.uniform_in(cfg.ssm_k_range[0], cfg.ssm_k_range[1]),
        _ => truncated_normal(rng, cfg.sigma_k, |k| k > 0.0),
    };
    DiffusionParams::new(alpha, k).expect("finite draws")
}

fn truncated_normal(rng: &mut Rng, sigma: f64, accept: impl Fn(f64) -> bool) -> f64 {
    if sigma == 0.0 {
        return 1.0;
    }
    loop {
        let v = 1.0 + sigma * rng.normal();
        if accept(v) {
            return v;
        }
    }
}

/// Folds a coordinate back into `[0, len]` as if reflected by both walls.
fn reflect(v: f64, len: f64) -> f64 {
    let period = 2.0 * len;
    let r = v.rem_euclid(period);
    if r > len {
        period - r
    } else {
        r
    }
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Per-frame truth triple.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Truth {
    alpha: f64,
    k: f64,
    state: DiffusionState,
}

impl Truth {
    fn free(p: DiffusionParams) -> Self {
        Self {
            alpha: p.alpha,
            k: p.k,
            state: DiffusionState::for_free_motion(p.alpha),
        }
    }
}

struct Recorder {
    positions: Vec<Vec<[f64; 2]>>,
    truths: Vec<Vec<Truth>>,
}

impl Recorder {
    fn new(n: usize, frames: usize) -> Self {
        Self {
            positions: vec![Vec::with_capacity(frames); n],
            truths: vec![Vec::with_capacity(frames); n],
        }
    }

    fn push(&mut self, i: usize, pos: [f64; 2], truth: Truth) {
        self.positions[i].push(pos);
        self.truths[i].push(truth);
    }
}

/// Generates one experiment over the whole field.
///
/// All particles are present for every frame. Per-frame truth at frame `t`
/// describes the motion regime in force at `t` (the one that produces the
/// step `t -> t+1`); change points are the frames where that triple
/// changes.
pub fn simulate_experiment(cfg: &SimConfig) -> Result<ExperimentGroundTruth> {
    cfg.validate()?;
    let mut rng = Rng::new(cfg.seed).split(streams::EXPERIMENT);
    let n = rng.poisson(cfg.density);
    let start: Vec<[f64; 2]> = (0..n)
        .map(|_| {
            [
                rng.uniform_in(0.0, cfg.field_size),
                rng.uniform_in(0.0, cfg.field_size),
            ]
        })
        .collect();
    let sampler = FgnSampler::new(cfg.n_frames - 1)?;

    let rec = match cfg.model {
        ModelKind::Ssm => run_single(cfg, &sampler, &start, &mut rng, ModelKind::Ssm),
        ModelKind::Msm => run_multi_state(cfg, &sampler, &start, &mut rng),
        ModelKind::Dim => run_dimerization(cfg, &sampler, &start, &mut rng),
        ModelKind::Tcm => {
            let centers = place_compartments(cfg, &mut rng);
            run_confinement(cfg, &sampler, &start, &centers, &mut rng)
        }
        ModelKind::Qtm => run_traps(cfg, &sampler, &start, &mut rng),
    };

    let mut out = ExperimentGroundTruth {
        model_kind: cfg.model,
        trajectories: Vec::with_capacity(n),
        truth_tracks: Vec::with_capacity(n),
        changepoints: Vec::with_capacity(n),
    };
    for (i, (points, truths)) in rec.positions.into_iter().zip(rec.truths).enumerate() {
        let id = i as u64;
        let track = ParamTrack {
            traj_id: id,
            start_frame: 0,
            alpha: truths.iter().map(|t| t.alpha).collect(),
            k: truths.iter().map(|t| t.k).collect(),
            state: truths.iter().map(|t| t.state).collect(),
        };
        out.changepoints.push(track.changepoints());
        out.truth_tracks.push(track);
        out.trajectories.push(Trajectory {
            id,
            start_frame: 0,
            points,
            fov_id: 0,
        });
    }
    Ok(out)
}

fn run_single(
    cfg: &SimConfig,
    sampler: &FgnSampler,
    start: &[[f64; 2]],
    rng: &mut Rng,
    model: ModelKind,
) -> Recorder {
    let mut rec = Recorder::new(start.len(), cfg.n_frames);
    for (i, &p0) in start.iter().enumerate() {
        let params = sample_parameters(model, cfg, rng);
        let noise = sampler.sample_pair(params.alpha / 2.0, rng);
        let scale = params.k.sqrt();
        let truth = Truth::free(params);
        let mut pos = p0;
        for t in 0..cfg.n_frames {
            rec.push(i, pos, truth);
            if t + 1 < cfg.n_frames {
                pos = [
                    reflect(pos[0] + scale * noise[0][t], cfg.field_size),
                    reflect(pos[1] + scale * noise[1][t], cfg.field_size),
                ];
            }
        }
    }
    rec
}

fn run_multi_state(
    cfg: &SimConfig,
    sampler: &FgnSampler,
    start: &[[f64; 2]],
    rng: &mut Rng,
) -> Recorder {
    let m = cfg.msm.n_states;
    let states: Vec<DiffusionParams> = (0..m)
        .map(|_| sample_parameters(ModelKind::Msm, cfg, rng))
        .collect();
    // destinations[s] holds weights over the other states, in index order.
    let destinations: Vec<Vec<f64>> = (0..m).map(|_| rng.dirichlet_flat(m - 1)).collect();

    let mut rec = Recorder::new(start.len(), cfg.n_frames);
    for (i, &p0) in start.iter().enumerate() {
        let noise: Vec<[Vec<f64>; 2]> = states
            .iter()
            .map(|p| sampler.sample_pair(p.alpha / 2.0, rng))
            .collect();
        let mut s = rng.index(m);
        let mut pos = p0;
        for t in 0..cfg.n_frames {
            let params = states[s];
            rec.push(i, pos, Truth::free(params));
            if t + 1 < cfg.n_frames {
                let scale = params.k.sqrt();
                pos = [
                    reflect(pos[0] + scale * noise[s][0][t], cfg.field_size),
                    reflect(pos[1] + scale * noise[s][1][t], cfg.field_size),
                ];
                if m > 1 && rng.bernoulli(cfg.msm.switch_prob) {
                    let u = rng.uniform();
                    let mut acc = 0.0;
                    let mut next = None;
                    for (slot, w) in destinations[s].iter().enumerate() {
                        acc += w;
                        if u < acc {
                            next = Some(slot);
                            break;
                        }
                    }
                    let slot = next.unwrap_or(m - 2);
                    s = if slot >= s { slot + 1 } else { slot };
                }
            }
        }
    }
    rec
}

fn run_dimerization(
    cfg: &SimConfig,
    sampler: &FgnSampler,
    start: &[[f64; 2]],
    rng: &mut Rng,
) -> Recorder {
    let n = start.len();
    let dim = &cfg.dim;
    let params: Vec<DiffusionParams> = (0..n)
        .map(|_| sample_parameters(ModelKind::Dim, cfg, rng))
        .collect();
    let noise: Vec<[Vec<f64>; 2]> = params
        .iter()
        .map(|p| sampler.sample_pair(p.alpha / 2.0, rng))
        .collect();
    let mut pos = start.to_vec();
    let mut partner: Vec<Option<usize>> = vec![None; n];
    let mut rec = Recorder::new(n, cfg.n_frames);

    let slower = |i: usize, j: usize| {
        if params[j].k < params[i].k {
            j
        } else {
            i
        }
    };

    for t in 0..cfg.n_frames {
        for i in 0..n {
            let truth = match partner[i] {
                Some(j) => {
                    let s = slower(i, j);
                    let p = params[s];
                    Truth {
                        alpha: p.alpha,
                        k: dim.k_factor * p.k,
                        state: DiffusionState::for_free_motion(p.alpha),
                    }
                }
                None => Truth::free(params[i]),
            };
            rec.push(i, pos[i], truth);
        }
        if t + 1 == cfg.n_frames {
            break;
        }

        // Displacements; a bound pair shares one step.
        let mut step = vec![[0.0; 2]; n];
        for i in 0..n {
            match partner[i] {
                Some(j) if j < i => step[i] = step[j],
                Some(j) => {
                    let s = slower(i, j);
                    let scale = (dim.k_factor * params[s].k).sqrt();
                    step[i] = [scale * noise[s][0][t], scale * noise[s][1][t]];
                }
                None => {
                    let scale = params[i].k.sqrt();
                    step[i] = [scale * noise[i][0][t], scale * noise[i][1][t]];
                }
            }
        }
        for i in 0..n {
            pos[i] = [
                reflect(pos[i][0] + step[i][0], cfg.field_size),
                reflect(pos[i][1] + step[i][1], cfg.field_size),
            ];
        }

        for i in 0..n {
            if let Some(j) = partner[i] {
                if i < j && rng.bernoulli(dim.p_unbind) {
                    partner[i] = None;
                    partner[j] = None;
                }
            }
        }
        if dim.r_bind > 0.0 {
            bind_pairs(&pos, &mut partner, dim.r_bind, dim.p_bind, rng);
        }
    }
    rec
}

/// Binds free particles closer than `r` with probability `p`, visiting
/// pairs in ascending index order.
fn bind_pairs(pos: &[[f64; 2]], partner: &mut [Option<usize>], r: f64, p: f64, rng: &mut Rng) {
    let cell = |q: [f64; 2]| ((q[0] / r).floor() as i64, (q[1] / r).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, &q) in pos.iter().enumerate() {
        if partner[i].is_none() {
            grid.entry(cell(q)).or_default().push(i);
        }
    }
    let r2 = r * r;
    for i in 0..pos.len() {
        if partner[i].is_some() {
            continue;
        }
        let (cx, cy) = cell(pos[i]);
        let mut near: Vec<usize> = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(v) = grid.get(&(cx + dx, cy + dy)) {
                    near.extend(v.iter().copied().filter(|&j| j > i));
                }
            }
        }
        near.sort_unstable();
        for j in near {
            if partner[j].is_none() && dist2(pos[i], pos[j]) < r2 && rng.bernoulli(p) {
                partner[i] = Some(j);
                partner[j] = Some(i);
                break;
            }
        }
    }
}

fn compartment_radius(cfg: &SimConfig) -> f64 {
    cfg.tcm.radius.min(cfg.field_size / 2.0)
}

/// Compartment centers, kept clear of the walls so wall reflection never
/// pushes a confined particle out.
fn place_compartments(cfg: &SimConfig, rng: &mut Rng) -> Vec<[f64; 2]> {
    let radius = compartment_radius(cfg);
    (0..cfg.tcm.n_compartments)
        .map(|_| {
            [
                rng.uniform_in(radius, cfg.field_size - radius),
                rng.uniform_in(radius, cfg.field_size - radius),
            ]
        })
        .collect()
}

fn run_confinement(
    cfg: &SimConfig,
    sampler: &FgnSampler,
    start: &[[f64; 2]],
    centers: &[[f64; 2]],
    rng: &mut Rng,
) -> Recorder {
    let tcm = &cfg.tcm;
    let radius = compartment_radius(cfg);
    let r2 = radius * radius;
    let inside = |q: [f64; 2]| centers.iter().position(|&c| dist2(q, c) < r2);

    let mut rec = Recorder::new(start.len(), cfg.n_frames);
    for (i, &p0) in start.iter().enumerate() {
        let params = sample_parameters(ModelKind::Tcm, cfg, rng);
        let noise = sampler.sample_pair(params.alpha / 2.0, rng);
        let mut pos = p0;
        for t in 0..cfg.n_frames {
            let here = inside(pos);
            let k = match here {
                Some(_) => tcm.k_factor * params.k,
                None => params.k,
            };
            let truth = match here {
                Some(_) => Truth {
                    alpha: params.alpha,
                    k,
                    state: DiffusionState::Confined,
                },
                None => Truth::free(params),
            };
            rec.push(i, pos, truth);
            if t + 1 == cfg.n_frames {
                break;
            }
            let scale = k.sqrt();
            let proposed = [pos[0] + scale * noise[0][t], pos[1] + scale * noise[1][t]];
            let next = match here {
                Some(c) => {
                    if dist2(proposed, centers[c]) < r2 || rng.bernoulli(tcm.transmittance) {
                        proposed
                    } else {
                        reflect_into_disk(centers[c], radius, proposed).unwrap_or(pos)
                    }
                }
                None => match inside(proposed) {
                    Some(c) if !rng.bernoulli(tcm.transmittance) => {
                        reflect_out_of_disk(centers[c], radius, proposed).unwrap_or(pos)
                    }
                    _ => proposed,
                },
            };
            pos = [
                reflect(next[0], cfg.field_size),
                reflect(next[1], cfg.field_size),
            ];
        }
    }
    rec
}

/// Mirrors a point outside a disk through its boundary; `None` when the
/// mirrored point would still lie outside.
fn reflect_into_disk(center: [f64; 2], radius: f64, q: [f64; 2]) -> Option<[f64; 2]> {
    let d = [q[0] - center[0], q[1] - center[1]];
    let r = d[0].hypot(d[1]);
    let mirrored = 2.0 * radius - r;
    if r == 0.0 || mirrored.abs() >= radius {
        return None;
    }
    let s = mirrored / r;
    Some([center[0] + d[0] * s, center[1] + d[1] * s])
}

fn reflect_out_of_disk(center: [f64; 2], radius: f64, q: [f64; 2]) -> Option<[f64; 2]> {
    let d = [q[0] - center[0], q[1] - center[1]];
    let r = d[0].hypot(d[1]);
    if r == 0.0 {
        return None;
    }
    let s = (2.0 * radius - r) / r;
    Some([center[0] + d[0] * s, center[1] + d[1] * s])
}

fn run_traps(cfg: &SimConfig, sampler: &FgnSampler, start: &[[f64; 2]], rng: &mut Rng) -> Recorder {
    let qtm = &cfg.qtm;
    let traps: Vec<[f64; 2]> = (0..qtm.n_traps)
        .map(|_| {
            [
                rng.uniform_in(0.0, cfg.field_size),
                rng.uniform_in(0.0, cfg.field_size),
            ]
        })
        .collect();
    let r2 = qtm.radius * qtm.radius;

    let mut rec = Recorder::new(start.len(), cfg.n_frames);
    for (i, &p0) in start.iter().enumerate() {
        let params = sample_parameters(ModelKind::Qtm, cfg, rng);
        let noise = sampler.sample_pair(params.alpha / 2.0, rng);
        let scale = params.k.sqrt();
        let mut pos = p0;
        let mut trapped: Option<usize> = None;
        // Trap just escaped from; ignored until the particle leaves it.
        let mut released: Option<usize> = None;
        for t in 0..cfg.n_frames {
            if let Some(j) = released {
                if dist2(pos, traps[j]) >= r2 {
                    released = None;
                }
            }
            if trapped.is_none() {
                trapped = traps
                    .iter()
                    .enumerate()
                    .position(|(j, &c)| Some(j) != released && dist2(pos, c) < r2);
            }
            if let Some(j) = trapped {
                if rng.bernoulli(qtm.p_escape) {
                    trapped = None;
                    released = Some(j);
                }
            }
            let truth = if trapped.is_some() {
                Truth {
                    alpha: params.alpha,
                    k: 0.0,
                    state: DiffusionState::Immobile,
                }
            } else {
                Truth::free(params)
            };
            rec.push(i, pos, truth);
            if t + 1 < cfg.n_frames && trapped.is_none() {
                pos = [
                    reflect(pos[0] + scale * noise[0][t], cfg.field_size),
                    reflect(pos[1] + scale * noise[1][t], cfg.field_size),
                ];
            }
        }
    }
    rec
}
