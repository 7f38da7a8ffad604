use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pgm::GrayImage;
use crate::rng::Rng;
use crate::types::Trajectory;

/// Spot-video rendering settings. Intensities are in 8-bit counts; a spot
/// adds `particle_intensity * exp(-r^2 / 2 psf_sigma^2)` on top of a flat
/// background, followed by Gaussian read noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub psf_sigma: f64,
    pub particle_intensity: f64,
    pub background: f64,
    pub noise_sigma: f64,
    pub bit_depth: u8,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            psf_sigma: 1.0,
            particle_intensity: 120.0,
            background: 20.0,
            noise_sigma: 2.0,
            bit_depth: 8,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        let all_nonneg = [
            self.psf_sigma,
            self.particle_intensity,
            self.background,
            self.noise_sigma,
        ]
        .iter()
        .all(|v| v.is_finite() && *v >= 0.0);
        if !all_nonneg {
            return Err(Error::InvalidParameter(
                "render settings must be finite and non-negative".into(),
            ));
        }
        if self.particle_intensity + self.background > 255.0 {
            return Err(Error::InvalidParameter(format!(
                "intensity {} + background {} exceeds 255",
                self.particle_intensity, self.background
            )));
        }
        if self.bit_depth != 8 {
            return Err(Error::InvalidParameter(format!(
                "only 8-bit rendering is supported (got {})",
                self.bit_depth
            )));
        }
        Ok(())
    }
}

/// Renders `n_frames` frames of `size x size` pixels. Trajectories are in
/// FOV coordinates; pixel `(x, y)` is centered at `(x, y)`.
pub fn render_frames(
    trajectories: &[Trajectory],
    n_frames: usize,
    size: usize,
    cfg: &RenderConfig,
    rng: &mut Rng,
) -> Result<Vec<GrayImage>> {
    cfg.validate()?;
    let mut by_frame: Vec<Vec<[f64; 2]>> = vec![Vec::new(); n_frames];
    for t in trajectories {
        for (i, p) in t.points.iter().enumerate() {
            if let Some(slot) = by_frame.get_mut(t.start_frame + i) {
                slot.push(*p);
            }
        }
    }
    let reach = (4.0 * cfg.psf_sigma).ceil() as i64 + 1;
    let inv_two_var = if cfg.psf_sigma > 0.0 {
        1.0 / (2.0 * cfg.psf_sigma * cfg.psf_sigma)
    } else {
        f64::INFINITY
    };
    let mut frames = Vec::with_capacity(n_frames);
    let mut buf = vec![0.0f64; size * size];
    for spots in &by_frame {
        buf.iter_mut().for_each(|v| *v = cfg.background);
        for p in spots {
            let cx = p[0].round() as i64;
            let cy = p[1].round() as i64;
            for y in (cy - reach).max(0)..=(cy + reach).min(size as i64 - 1) {
                for x in (cx - reach).max(0)..=(cx + reach).min(size as i64 - 1) {
                    let r2 = (x as f64 - p[0]).powi(2) + (y as f64 - p[1]).powi(2);
                    let w = if inv_two_var.is_finite() {
                        (-r2 * inv_two_var).exp()
                    } else if r2 == 0.0 {
                        1.0
                    } else {
                        0.0
                    };
                    buf[y as usize * size + x as usize] += cfg.particle_intensity * w;
                }
            }
        }
        if cfg.noise_sigma > 0.0 {
            for v in buf.iter_mut() {
                *v += cfg.noise_sigma * rng.normal();
            }
        }
        frames.push(GrayImage {
            width: size,
            height: size,
            data: buf.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect(),
        });
    }
    Ok(frames)
}

/// Label image marking up to `n_vips` particles present at `frame`: a disk
/// of `radius` pixels around each, valued `1..=n`. Returns the image and
/// the label -> trajectory id map used to draw it.
pub fn render_vip_frame(
    trajectories: &[Trajectory],
    frame: usize,
    size: usize,
    n_vips: usize,
    radius: f64,
) -> (GrayImage, BTreeMap<u32, u64>) {
    let mut img = GrayImage::new(size, size);
    let mut labels = BTreeMap::new();
    let present = trajectories
        .iter()
        .filter(|t| t.frames().contains(&frame))
        .take(n_vips.min(255));
    for (i, t) in present.enumerate() {
        let label = (i + 1) as u32;
        let p = t.points[frame - t.start_frame];
        let reach = radius.ceil() as i64;
        let (cx, cy) = (p[0].round() as i64, p[1].round() as i64);
        for y in (cy - reach).max(0)..=(cy + reach).min(size as i64 - 1) {
            for x in (cx - reach).max(0)..=(cx + reach).min(size as i64 - 1) {
                if (x as f64 - p[0]).powi(2) + (y as f64 - p[1]).powi(2) <= radius * radius {
                    img.set(x as usize, y as usize, label as u8);
                }
            }
        }
        labels.insert(label, t.id);
    }
    (img, labels)
}
