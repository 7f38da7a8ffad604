//! Fractional Gaussian noise (increments of fractional Brownian motion).
//!
//! Increments are stationary Gaussian with autocovariance
//! `gamma(k) = K/2 (|k+1|^2H - 2|k|^2H + |k-1|^2H)`, `H = alpha/2`, so that
//! `Var[x(t) - x(0)] = K t^alpha` per axis. Samples come from the
//! Davies-Harte circulant embedding; the Durbin-Levinson (Hosking)
//! recursion is used when the embedding has a significantly negative
//! eigenvalue.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::types::DiffusionParams;

/// Largest supported number of increments.
pub const MAX_STEPS: usize = 1 << 20;

/// Relative size of negative circulant eigenvalues that is attributed to
/// rounding and clipped to zero.
const EIGEN_TOLERANCE: f64 = 1e-10;

/// Unit-variance fGn autocovariance at lag `k`.
pub fn fgn_autocovariance(k: usize, hurst: f64) -> f64 {
    let h2 = 2.0 * hurst;
    let k = k as f64;
    0.5 * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).abs().powf(h2))
}

/// Reusable generator for a fixed number of increments.
pub struct FgnSampler {
    n: usize,
    embed: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FgnSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FgnSampler")
            .field("n", &self.n)
            .field("embed", &self.embed)
            .finish()
    }
}

impl FgnSampler {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("at least one step required".into()));
        }
        if n > MAX_STEPS {
            return Err(Error::Capacity {
                what: "fBm steps",
                got: n,
                max: MAX_STEPS,
            });
        }
        let embed = 2 * n.next_power_of_two();
        let fft = FftPlanner::new().plan_fft_forward(embed);
        Ok(Self { n, embed, fft })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Two independent unit-variance fGn series with Hurst exponent `hurst`.
    pub fn sample_pair(&self, hurst: f64, rng: &mut Rng) -> [Vec<f64>; 2] {
        match self.circulant_eigenvalues(hurst) {
            Some(lambda) => self.davies_harte(&lambda, rng),
            None => [
                hosking_fgn(self.n, hurst, rng),
                hosking_fgn(self.n, hurst, rng),
            ],
        }
    }

    /// Eigenvalues of the minimal circulant embedding, or `None` when it is
    /// not nonnegative definite.
    fn circulant_eigenvalues(&self, hurst: f64) -> Option<Vec<f64>> {
        let m = self.embed;
        let half = m / 2;
        let mut row: Vec<Complex<f64>> = (0..m)
            .map(|j| {
                let lag = if j <= half { j } else { m - j };
                Complex::new(fgn_autocovariance(lag, hurst), 0.0)
            })
            .collect();
        self.fft.process(&mut row);
        let max = row.iter().map(|c| c.re).fold(0.0f64, f64::max);
        let mut lambda = Vec::with_capacity(m);
        for c in row {
            if c.re < -EIGEN_TOLERANCE * max.max(1.0) {
                return None;
            }
            lambda.push(c.re.max(0.0));
        }
        Some(lambda)
    }

    fn davies_harte(&self, lambda: &[f64], rng: &mut Rng) -> [Vec<f64>; 2] {
        let m = self.embed as f64;
        let mut w: Vec<Complex<f64>> = lambda
            .iter()
            .map(|&l| {
                let s = (l / m).sqrt();
                Complex::new(s * rng.normal(), s * rng.normal())
            })
            .collect();
        self.fft.process(&mut w);
        let x = w[..self.n].iter().map(|c| c.re).collect();
        let y = w[..self.n].iter().map(|c| c.im).collect();
        [x, y]
    }
}

/// Unit-variance fGn by the Durbin-Levinson recursion, `O(n^2)`.
pub fn hosking_fgn(n: usize, hurst: f64, rng: &mut Rng) -> Vec<f64> {
    let gamma: Vec<f64> = (0..n).map(|k| fgn_autocovariance(k, hurst)).collect();
    let mut out = Vec::with_capacity(n);
    let mut phi: Vec<f64> = Vec::with_capacity(n);
    let mut prev: Vec<f64> = Vec::with_capacity(n);
    let mut var = gamma[0];
    out.push(var.sqrt() * rng.normal());
    for t in 1..n {
        let num = gamma[t]
            - phi
                .iter()
                .enumerate()
                .map(|(j, p)| p * gamma[t - 1 - j])
                .sum::<f64>();
        let kappa = if var > 0.0 { num / var } else { 0.0 };
        prev.clear();
        prev.extend_from_slice(&phi);
        for j in 0..phi.len() {
            phi[j] = prev[j] - kappa * prev[prev.len() - 1 - j];
        }
        phi.push(kappa);
        var = (var * (1.0 - kappa * kappa)).max(0.0);
        // phi[j] weights x[t-1-j].
        let mean: f64 = phi.iter().enumerate().map(|(j, p)| p * out[t - 1 - j]).sum();
        out.push(mean + var.sqrt() * rng.normal());
    }
    out
}

/// `n` two-dimensional fBm increments with `Var[x(t) - x(0)] = K t^alpha`
/// per axis (t in frames).
pub fn sample_fbm_displacements(
    n: usize,
    params: DiffusionParams,
    rng: &mut Rng,
) -> Result<Vec<[f64; 2]>> {
    if n > MAX_STEPS {
        return Err(Error::Capacity {
            what: "fBm steps",
            got: n,
            max: MAX_STEPS,
        });
    }
    if n == 0 {
        return Err(Error::InvalidParameter("at least one step required".into()));
    }
    if params.k == 0.0 {
        return Ok(vec![[0.0, 0.0]; n]);
    }
    let sampler = FgnSampler::new(n)?;
    let [x, y] = sampler.sample_pair(params.alpha / 2.0, rng);
    let scale = params.k.sqrt();
    Ok(x.into_iter()
        .zip(y)
        .map(|(a, b)| [scale * a, scale * b])
        .collect())
}
