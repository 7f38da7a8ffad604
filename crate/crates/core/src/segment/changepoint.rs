use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::cost::{segment_cost, CostModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CpAlgorithm {
    Pelt,
    BinSeg,
    BottomUp,
    #[default]
    Window,
}

impl FromStr for CpAlgorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pelt" => Ok(Self::Pelt),
            "binseg" => Ok(Self::BinSeg),
            "bottomup" => Ok(Self::BottomUp),
            "window" => Ok(Self::Window),
            _ => Err(Error::InvalidParameter(format!(
                "unknown change-point algorithm {s:?}"
            ))),
        }
    }
}

impl fmt::Display for CpAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pelt => "pelt",
            Self::BinSeg => "binseg",
            Self::BottomUp => "bottomup",
            Self::Window => "window",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CpConfig {
    pub algorithm: CpAlgorithm,
    pub cost: CostModel,
    /// Fixed penalty; `None` uses [`default_penalty`].
    pub penalty: Option<f64>,
    pub window_width: usize,
    pub min_segment: usize,
}

impl Default for CpConfig {
    fn default() -> Self {
        Self {
            algorithm: CpAlgorithm::Window,
            cost: CostModel::L2,
            penalty: None,
            window_width: 20,
            min_segment: 3,
        }
    }
}

impl CpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_segment < 1 {
            return Err(Error::InvalidParameter("min_segment must be >= 1".into()));
        }
        if self.window_width < 2 * self.min_segment {
            return Err(Error::InvalidParameter(format!(
                "window_width {} < 2 * min_segment {}",
                self.window_width, self.min_segment
            )));
        }
        if let Some(p) = self.penalty {
            if !(p >= 0.0 && p.is_finite()) {
                return Err(Error::InvalidParameter(format!("penalty {p} must be >= 0")));
            }
        }
        Ok(())
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let h = v.len() / 2;
    if v.len() % 2 == 1 {
        v[h]
    } else {
        0.5 * (v[h - 1] + v[h])
    }
}

/// `3 * sigma^2 * ln n`, with `sigma` the MAD-based noise level of the
/// first differences. Noise-free series fall back to a small fraction of
/// the series variance so that flat stretches never split.
pub fn default_penalty(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 3 {
        return 0.0;
    }
    let mut d: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
    let md = median(&mut d);
    let mut dev: Vec<f64> = d.iter().map(|v| (v - md).abs()).collect();
    let sigma = 1.4826 * median(&mut dev) / 2f64.sqrt();
    let mean = series.iter().sum::<f64>() / n as f64;
    let var = series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let s2 = (sigma * sigma).max(1e-4 * var).max(1e-12);
    3.0 * s2 * (n as f64).ln()
}

/// Total segment cost plus `penalty` per change point, summed left to
/// right.
pub fn penalized_objective(series: &[f64], cps: &[usize], cost: CostModel, penalty: f64) -> f64 {
    let mut acc = 0.0;
    let mut start = 0;
    for (i, &end) in cps.iter().chain(std::iter::once(&series.len())).enumerate() {
        if i > 0 {
            acc += penalty;
        }
        acc += segment_cost(series, start, end, cost);
        start = end;
    }
    acc
}

/// Change points of `series` as ascending indices strictly inside
/// `(0, n)`. Every segment is at least `min_segment` long.
pub fn detect_changepoints(series: &[f64], cfg: &CpConfig) -> Result<Vec<usize>> {
    cfg.validate()?;
    let n = series.len();
    if n < 2 * cfg.min_segment {
        return Ok(Vec::new());
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("series contains non-finite values".into()));
    }
    let penalty = cfg.penalty.unwrap_or_else(|| default_penalty(series));
    Ok(match cfg.algorithm {
        CpAlgorithm::Pelt => pelt(series, cfg.cost, penalty, cfg.min_segment),
        CpAlgorithm::BinSeg => binseg(series, cfg.cost, penalty, cfg.min_segment),
        CpAlgorithm::BottomUp => bottom_up(series, cfg.cost, penalty, cfg.min_segment),
        CpAlgorithm::Window => window(series, cfg.cost, penalty, cfg.min_segment, cfg.window_width),
    })
}

fn pelt(x: &[f64], cost: CostModel, beta: f64, ms: usize) -> Vec<usize> {
    let n = x.len();
    let mut f = vec![f64::INFINITY; n + 1];
    let mut prev = vec![0usize; n + 1];
    f[0] = 0.0;
    // Candidate last change points, with the time at which they became
    // dominated. A dominated candidate is dropped only once a full minimum
    // segment fits after the dominating time.
    let mut cands: Vec<(usize, Option<usize>)> = vec![(0, None)];
    for t in ms..=n {
        if t >= 2 * ms {
            cands.push((t - ms, None));
        }
        cands.retain(|&(_, d)| d.is_none_or(|d| t < d + ms));
        let mut best = f64::INFINITY;
        let mut arg = 0;
        let mut vals = Vec::with_capacity(cands.len());
        for &(s, _) in &cands {
            let v = if t - s < ms || !f[s].is_finite() {
                f64::INFINITY
            } else if s == 0 {
                segment_cost(x, 0, t, cost)
            } else {
                f[s] + beta + segment_cost(x, s, t, cost)
            };
            vals.push(v);
            if v < best {
                best = v;
                arg = s;
            }
        }
        f[t] = best;
        prev[t] = arg;
        let margin = 1e-9 * (best.abs() + 1.0);
        for (c, v) in cands.iter_mut().zip(vals) {
            if c.1.is_none() && v.is_finite() && v - beta > best + margin {
                c.1 = Some(t);
            }
        }
    }
    let mut cps = Vec::new();
    let mut t = n;
    while t > 0 {
        let s = prev[t];
        if s > 0 {
            cps.push(s);
        }
        t = s;
    }
    cps.reverse();
    cps
}

fn split_gain(x: &[f64], a: usize, t: usize, b: usize, cost: CostModel) -> f64 {
    segment_cost(x, a, b, cost) - segment_cost(x, a, t, cost) - segment_cost(x, t, b, cost)
}

fn binseg(x: &[f64], cost: CostModel, beta: f64, ms: usize) -> Vec<usize> {
    let mut bounds = vec![0, x.len()];
    loop {
        let mut best: Option<(f64, usize)> = None;
        for w in bounds.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b - a < 2 * ms {
                continue;
            }
            for t in a + ms..=b - ms {
                let g = split_gain(x, a, t, b, cost);
                if best.is_none_or(|(bg, _)| g > bg) {
                    best = Some((g, t));
                }
            }
        }
        match best {
            Some((g, t)) if g > beta => {
                let pos = bounds.partition_point(|&v| v < t);
                bounds.insert(pos, t);
            }
            _ => break,
        }
    }
    bounds[1..bounds.len() - 1].to_vec()
}

/// Merges from single frames upward. Segments shorter than `ms` are merged
/// first; afterwards the cheapest merge is taken while its cost increase
/// stays below the penalty.
fn bottom_up(x: &[f64], cost: CostModel, beta: f64, ms: usize) -> Vec<usize> {
    let n = x.len();
    let mut bounds: Vec<usize> = (0..=n).collect();
    while bounds.len() > 2 {
        let short = bounds.windows(2).any(|w| w[1] - w[0] < ms);
        let mut best: Option<(f64, usize)> = None;
        for i in 1..bounds.len() - 1 {
            let (a, t, b) = (bounds[i - 1], bounds[i], bounds[i + 1]);
            if short && t - a >= ms && b - t >= ms {
                continue;
            }
            let g = split_gain(x, a, t, b, cost);
            if best.is_none_or(|(bg, _)| g < bg) {
                best = Some((g, i));
            }
        }
        let (g, i) = best.expect("at least one interior bound");
        if !short && g >= beta {
            break;
        }
        bounds.remove(i);
    }
    bounds[1..bounds.len() - 1].to_vec()
}

fn window(x: &[f64], cost: CostModel, beta: f64, ms: usize, width: usize) -> Vec<usize> {
    let n = x.len();
    let half = width / 2;
    let score: Vec<f64> = (0..=n)
        .map(|t| {
            if t < ms || t + ms > n {
                return f64::NEG_INFINITY;
            }
            let a = t.saturating_sub(half);
            let b = (t + half).min(n);
            split_gain(x, a, t, b, cost)
        })
        .collect();
    let mut peaks: Vec<(f64, usize)> = Vec::new();
    for t in ms..=n - ms {
        let s = score[t];
        if !(s > beta) {
            continue;
        }
        let lo = t.saturating_sub(half);
        let hi = (t + half).min(n);
        let tol = 1e-9 * s.abs();
        if (lo..=hi).all(|u| score[u] <= s + tol) {
            peaks.push((s, t));
        }
    }
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut kept: Vec<usize> = Vec::new();
    for (_, t) in peaks {
        if kept.iter().all(|&k| k.abs_diff(t) >= ms) {
            kept.push(t);
        }
    }
    kept.sort_unstable();
    kept
}
