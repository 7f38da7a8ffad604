//! Spot detection: band-pass filtering, local maxima, mass threshold and
//! intensity-weighted sub-pixel centroids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pgm::GrayImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectConfig {
    /// Feature size in pixels; odd, at least 3.
    pub diameter: usize,
    /// Minimum integrated brightness (raw counts) of a feature.
    pub minmass: f64,
    /// Minimum distance between two features.
    pub separation: f64,
    /// Mirror padding added around the frame; defaults to `diameter`.
    pub border_pad: Option<usize>,
    /// Radius of the centroid mask; defaults to `diameter`.
    pub mask_radius: Option<f64>,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            diameter: 3,
            minmass: 13.0,
            separation: 2.6,
            border_pad: None,
            mask_radius: None,
        }
    }
}

impl DetectConfig {
    pub fn validate(&self) -> Result<()> {
        if self.diameter < 3 || self.diameter.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "diameter {} must be odd and >= 3",
                self.diameter
            )));
        }
        if !(self.separation > 0.0) || !(self.minmass >= 0.0) {
            return Err(Error::InvalidParameter(
                "separation must be positive and minmass non-negative".into(),
            ));
        }
        if let Some(r) = self.mask_radius {
            if !(r >= 1.0) {
                return Err(Error::InvalidParameter(format!("mask_radius {r} < 1")));
            }
        }
        Ok(())
    }

    pub fn pad(&self) -> usize {
        self.border_pad.unwrap_or(self.diameter)
    }

    pub fn mask_radius(&self) -> f64 {
        self.mask_radius.unwrap_or(self.diameter as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame: usize,
    pub x: f64,
    pub y: f64,
    pub mass: f64,
}

/// Band-passed frame including its mirror padding. Values are in raw
/// counts.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredFrame {
    pub width: usize,
    pub height: usize,
    pub pad: usize,
    pub data: Vec<f64>,
}

impl FilteredFrame {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Value at a pixel of the unpadded frame.
    pub fn at_original(&self, x: usize, y: usize) -> f64 {
        self.get(x + self.pad, y + self.pad)
    }
}

fn mirror(i: i64, n: usize) -> usize {
    let n = n as i64;
    let period = 2 * n;
    let r = i.rem_euclid(period);
    (if r < n { r } else { period - 1 - r }) as usize
}

/// Separable 1-D convolution along rows then columns; out-of-range taps
/// reuse the nearest edge pixel.
fn convolve_separable(data: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as i64;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                let xx = (x as i64 + k as i64 - r).clamp(0, w as i64 - 1) as usize;
                acc += kv * data[y * w + xx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                let yy = (y as i64 + k as i64 - r).clamp(0, h as i64 - 1) as usize;
                acc += kv * tmp[yy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (4.0 * sigma).ceil() as i64;
    let k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Mirror-pads, standardizes and band-passes a frame: Gaussian blur at
/// `sigma = diameter / 4` minus a boxcar mean of width `2 * diameter + 1`,
/// negatives clipped to zero, then scaled back to raw counts.
pub fn preprocess(frame: &GrayImage, cfg: &DetectConfig) -> Result<FilteredFrame> {
    cfg.validate()?;
    if frame.width < 2 * cfg.diameter || frame.height < 2 * cfg.diameter {
        return Err(Error::InvalidInput(format!(
            "frame {}x{} smaller than twice the feature diameter {}",
            frame.width, frame.height, cfg.diameter
        )));
    }
    let pad = cfg.pad();
    let (w, h) = (frame.width + 2 * pad, frame.height + 2 * pad);
    let n = (frame.width * frame.height) as f64;
    let mean = frame.data.iter().map(|&v| v as f64).sum::<f64>() / n;
    let std = (frame
        .data
        .iter()
        .map(|&v| (v as f64 - mean).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    if std == 0.0 {
        return Ok(FilteredFrame {
            width: w,
            height: h,
            pad,
            data: vec![0.0; w * h],
        });
    }
    let mut padded = vec![0.0; w * h];
    for y in 0..h {
        let sy = mirror(y as i64 - pad as i64, frame.height);
        for x in 0..w {
            let sx = mirror(x as i64 - pad as i64, frame.width);
            padded[y * w + x] = (frame.get(sx, sy) as f64 - mean) / std;
        }
    }
    let blurred = convolve_separable(&padded, w, h, &gaussian_kernel(cfg.diameter as f64 / 4.0));
    let box_width = 2 * cfg.diameter + 1;
    let boxcar = vec![1.0 / box_width as f64; box_width];
    let background = convolve_separable(&padded, w, h, &boxcar);
    let data = blurred
        .iter()
        .zip(&background)
        .map(|(g, b)| (g - b).max(0.0) * std)
        .collect();
    Ok(FilteredFrame {
        width: w,
        height: h,
        pad,
        data,
    })
}

/// Integrated value and centroid offset within a disk around `(cx, cy)`
/// (padded coordinates).
fn moments(f: &FilteredFrame, cx: usize, cy: usize, radius: f64) -> (f64, f64, f64) {
    let reach = radius.floor() as i64;
    let r2 = radius * radius;
    let (mut mass, mut mx, mut my) = (0.0, 0.0, 0.0);
    for dy in -reach..=reach {
        for dx in -reach..=reach {
            if (dx * dx + dy * dy) as f64 > r2 {
                continue;
            }
            let x = cx as i64 + dx;
            let y = cy as i64 + dy;
            if x < 0 || y < 0 || x >= f.width as i64 || y >= f.height as i64 {
                continue;
            }
            let v = f.get(x as usize, y as usize);
            mass += v;
            mx += v * dx as f64;
            my += v * dy as f64;
        }
    }
    if mass > 0.0 {
        (mass, mx / mass, my / mass)
    } else {
        (0.0, 0.0, 0.0)
    }
}

/// Finds features in one frame. Coordinates are in the unpadded frame.
pub fn locate(frame: &GrayImage, frame_index: usize, cfg: &DetectConfig) -> Result<Vec<Detection>> {
    let f = preprocess(frame, cfg)?;
    let pad = f.pad;
    let nb = (cfg.diameter / 2) as i64;
    let radius = cfg.mask_radius();

    let mut candidates = Vec::new();
    for y in pad..pad + frame.height {
        for x in pad..pad + frame.width {
            let v = f.get(x, y);
            if v <= 0.0 {
                continue;
            }
            let mut is_max = true;
            'scan: for dy in -nb..=nb {
                for dx in -nb..=nb {
                    let xx = (x as i64 + dx).clamp(0, f.width as i64 - 1) as usize;
                    let yy = (y as i64 + dy).clamp(0, f.height as i64 - 1) as usize;
                    if f.get(xx, yy) > v {
                        is_max = false;
                        break 'scan;
                    }
                }
            }
            if is_max {
                candidates.push((x, y));
            }
        }
    }

    let mut features = Vec::with_capacity(candidates.len());
    for (x0, y0) in candidates {
        let (mut cx, mut cy) = (x0, y0);
        let (mut mass, mut ox, mut oy) = moments(&f, cx, cy, radius);
        // Re-center when the centroid lies closer to a neighboring pixel.
        for _ in 0..10 {
            if ox.abs() <= 0.5 && oy.abs() <= 0.5 {
                break;
            }
            let nx = (cx as f64 + ox).round().clamp(0.0, (f.width - 1) as f64) as usize;
            let ny = (cy as f64 + oy).round().clamp(0.0, (f.height - 1) as f64) as usize;
            if (nx, ny) == (cx, cy) {
                break;
            }
            cx = nx;
            cy = ny;
            (mass, ox, oy) = moments(&f, cx, cy, radius);
        }
        if mass < cfg.minmass || mass <= 0.0 {
            continue;
        }
        let x = cx as f64 - pad as f64 + ox;
        let y = cy as f64 - pad as f64 + oy;
        if x < -0.5 || y < -0.5 || x > frame.width as f64 - 0.5 || y > frame.height as f64 - 0.5 {
            continue;
        }
        features.push(Detection {
            frame: frame_index,
            x,
            y,
            mass,
        });
    }

    // Greedy separation pruning: heavier first, then smaller (y, x).
    features.sort_by(|a, b| {
        b.mass
            .total_cmp(&a.mass)
            .then(a.y.total_cmp(&b.y))
            .then(a.x.total_cmp(&b.x))
    });
    let sep2 = cfg.separation * cfg.separation;
    let mut kept: Vec<Detection> = Vec::with_capacity(features.len());
    for d in features {
        if kept
            .iter()
            .all(|k| (k.x - d.x).powi(2) + (k.y - d.y).powi(2) >= sep2)
        {
            kept.push(d);
        }
    }
    kept.sort_by(|a, b| a.y.total_cmp(&b.y).then(a.x.total_cmp(&b.x)));
    Ok(kept)
}

/// [`locate`] over a frame sequence; frame indices follow slice order.
pub fn locate_frames(frames: &[GrayImage], cfg: &DetectConfig) -> Result<Vec<Detection>> {
    let mut out = Vec::new();
    for (i, f) in frames.iter().enumerate() {
        out.extend(locate(f, i, cfg)?);
    }
    Ok(out)
}
