use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::types::SegmentedTrajectory;

const KMEANS_SEED: u64 = 0;
const KMEANS_RESTARTS: usize = 50;
const KMEANS_TOL: f64 = 1e-9;
const KMEANS_MAX_ITER: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub alpha_mean: f64,
    pub alpha_std: f64,
    pub k_mean: f64,
    pub k_std: f64,
    /// Fraction of segments in the cluster.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub n_states: usize,
    /// Ordered by increasing mean alpha.
    pub clusters: Vec<ClusterSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub labels: Vec<usize>,
    pub centers: Vec<[f64; 2]>,
    pub inertia: f64,
    /// Objective after each Lloyd iteration of the selected restart.
    pub history: Vec<f64>,
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn nearest(p: [f64; 2], centers: &[[f64; 2]]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = dist2(p, *c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus(points: &[[f64; 2]], k: usize, rng: &mut Rng) -> Vec<[f64; 2]> {
    let mut centers = vec![points[rng.index(points.len())]];
    while centers.len() < k {
        let d: Vec<f64> = points.iter().map(|&p| nearest(p, &centers).1).collect();
        let total: f64 = d.iter().sum();
        if total <= 0.0 {
            centers.push(points[rng.index(points.len())]);
            continue;
        }
        let mut u = rng.uniform() * total;
        let mut pick = points.len() - 1;
        for (i, di) in d.iter().enumerate() {
            if u < *di {
                pick = i;
                break;
            }
            u -= di;
        }
        centers.push(points[pick]);
    }
    centers
}

fn lloyd(points: &[[f64; 2]], mut centers: Vec<[f64; 2]>) -> KMeans {
    let k = centers.len();
    let mut labels = vec![0; points.len()];
    let mut history = Vec::new();
    let mut prev = f64::INFINITY;
    for _ in 0..KMEANS_MAX_ITER {
        let mut inertia = 0.0;
        for (l, &p) in labels.iter_mut().zip(points) {
            let (j, d) = nearest(p, &centers);
            *l = j;
            inertia += d;
        }
        let mut sums = vec![[0.0; 2]; k];
        let mut counts = vec![0usize; k];
        for (&l, p) in labels.iter().zip(points) {
            sums[l][0] += p[0];
            sums[l][1] += p[1];
            counts[l] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = [sums[j][0] / counts[j] as f64, sums[j][1] / counts[j] as f64];
            }
        }
        let after: f64 = labels
            .iter()
            .zip(points)
            .map(|(&l, &p)| dist2(p, centers[l]))
            .sum();
        history.push(after);
        let done = prev.is_finite() && (prev - inertia).abs() <= KMEANS_TOL * prev.max(f64::MIN_POSITIVE);
        prev = inertia;
        if done {
            break;
        }
    }
    let inertia = *history.last().unwrap_or(&0.0);
    KMeans {
        labels,
        centers,
        inertia,
        history,
    }
}

/// k-means with k-means++ seeding; keeps the restart with the lowest
/// objective (earliest on ties). Points equidistant from two centers go to
/// the lower index.
pub fn kmeans(points: &[[f64; 2]], k: usize, seed: u64, restarts: usize) -> Result<KMeans> {
    if points.is_empty() || k == 0 || k > points.len() {
        return Err(Error::InvalidParameter(format!(
            "k-means with k = {k} on {} points",
            points.len()
        )));
    }
    let mut rng = Rng::new(seed);
    let mut best: Option<KMeans> = None;
    for _ in 0..restarts.max(1) {
        let run = lloyd(points, plus_plus(points, k, &mut rng));
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn summarize(points: &[[f64; 2]], total: usize) -> ClusterSummary {
    let n = points.len() as f64;
    let ma = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let mk = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let sa = (points.iter().map(|p| (p[0] - ma).powi(2)).sum::<f64>() / n).sqrt();
    let sk = (points.iter().map(|p| (p[1] - mk).powi(2)).sum::<f64>() / n).sqrt();
    ClusterSummary {
        alpha_mean: ma,
        alpha_std: sa,
        k_mean: mk,
        k_std: sk,
        weight: points.len() as f64 / total as f64,
    }
}

/// Ensemble statistics over all segments. `n_states` forces one or two
/// states; `None` uses two whenever some trajectory has a change point.
pub fn aggregate_ensemble(
    trajectories: &[SegmentedTrajectory],
    n_states: Option<usize>,
) -> Result<EnsembleSummary> {
    let mut points: Vec<[f64; 2]> = trajectories
        .iter()
        .flat_map(|t| t.segments.iter().map(|s| [s.params.alpha, s.params.k]))
        .collect();
    if points.is_empty() {
        return Err(Error::InvalidInput("no segments to aggregate".into()));
    }
    let mut want = match n_states {
        Some(n @ (1 | 2)) => n,
        Some(n) => {
            return Err(Error::InvalidParameter(format!(
                "n_states must be 1 or 2, got {n}"
            )))
        }
        None if trajectories.iter().any(|t| t.segments.len() > 1) => 2,
        None => 1,
    };
    points.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    if want == 2 {
        let distinct = points.windows(2).filter(|w| w[0] != w[1]).count() + 1;
        if distinct < 2 {
            log::warn!("fewer than two distinct segment parameters; reporting one state");
            want = 1;
        }
    }
    let total = points.len();
    if want == 1 {
        return Ok(EnsembleSummary {
            n_states: 1,
            clusters: vec![summarize(&points, total)],
        });
    }
    let n = total as f64;
    let mean = [0, 1].map(|d| points.iter().map(|p| p[d]).sum::<f64>() / n);
    let sd = [0, 1].map(|d| {
        let s = (points.iter().map(|p| (p[d] - mean[d]).powi(2)).sum::<f64>() / n).sqrt();
        if s > 0.0 {
            s
        } else {
            1.0
        }
    });
    let z: Vec<[f64; 2]> = points
        .iter()
        .map(|p| [(p[0] - mean[0]) / sd[0], (p[1] - mean[1]) / sd[1]])
        .collect();
    let km = kmeans(&z, 2, KMEANS_SEED, KMEANS_RESTARTS)?;
    let mut clusters: Vec<ClusterSummary> = (0..2)
        .filter_map(|c| {
            let members: Vec<[f64; 2]> = points
                .iter()
                .zip(&km.labels)
                .filter(|(_, &l)| l == c)
                .map(|(p, _)| *p)
                .collect();
            (!members.is_empty()).then(|| summarize(&members, total))
        })
        .collect();
    clusters.sort_by(|a, b| {
        a.alpha_mean
            .total_cmp(&b.alpha_mean)
            .then(a.k_mean.total_cmp(&b.k_mean))
    });
    Ok(EnsembleSummary {
        n_states: clusters.len(),
        clusters,
    })
}
