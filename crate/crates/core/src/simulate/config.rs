use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::ModelKind;

/// Upper bound on the expected particle count of one experiment.
pub const MAX_PARTICLES: f64 = 1e4;

/// Experiment and field-of-view geometry plus per-model settings. Lengths
/// are in pixels, times in frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub field_size: f64,
    pub fov_size: f64,
    pub n_frames: usize,
    pub max_particles_per_fov: usize,
    pub n_fovs: usize,
    pub model: ModelKind,
    /// Expected number of particles over the whole field (Poisson mean).
    pub density: f64,
    pub sigma_alpha: f64,
    pub sigma_k: f64,
    /// `K` range for single-state experiments.
    pub ssm_k_range: [f64; 2],
    pub msm: MsmParams,
    pub dim: DimParams,
    pub tcm: TcmParams,
    pub qtm: QtmParams,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            field_size: 512.0,
            fov_size: 128.0,
            n_frames: 208,
            max_particles_per_fov: 64,
            n_fovs: 1,
            model: ModelKind::Ssm,
            density: 200.0,
            sigma_alpha: 0.3,
            sigma_k: 0.3,
            ssm_k_range: [1e-4, 4.0],
            msm: MsmParams::default(),
            dim: DimParams::default(),
            tcm: TcmParams::default(),
            qtm: QtmParams::default(),
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.field_size > 0.0 && self.fov_size > 0.0 && self.fov_size <= self.field_size) {
            return bad(format!(
                "fov_size {} must be positive and at most field_size {}",
                self.fov_size, self.field_size
            ));
        }
        if self.n_frames < 2 {
            return bad(format!("n_frames {} < 2", self.n_frames));
        }
        if !(self.density >= 0.0) {
            return bad(format!("density {} must be non-negative", self.density));
        }
        if self.density > MAX_PARTICLES {
            return Err(Error::Capacity {
                what: "expected particles per experiment",
                got: self.density as usize,
                max: MAX_PARTICLES as usize,
            });
        }
        if !(self.sigma_alpha >= 0.0 && self.sigma_k >= 0.0) {
            return bad("parameter spreads must be non-negative".into());
        }
        let [lo, hi] = self.ssm_k_range;
        if !(lo > 0.0 && hi >= lo) {
            return bad(format!("ssm_k_range [{lo}, {hi}] invalid"));
        }
        if self.max_particles_per_fov == 0 {
            return bad("max_particles_per_fov must be positive".into());
        }
        self.msm.validate()?;
        self.dim.validate()?;
        self.tcm.validate()?;
        self.qtm.validate()
    }
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} = {p} is not a probability"
        )))
    }
}

/// Multi-state switching. The per-frame leaving probability and the
/// Dirichlet-distributed destination weights stand in for the transition
/// sampler of the reference data generator; they are not canonical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MsmParams {
    pub n_states: usize,
    /// Per-frame probability of leaving the current state (1 / mean dwell).
    pub switch_prob: f64,
    pub parameterization: String,
}

impl Default for MsmParams {
    fn default() -> Self {
        Self {
            n_states: 2,
            switch_prob: 1.0 / 50.0,
            parameterization: "dirichlet-dwell (non-canonical)".to_string(),
        }
    }
}

impl MsmParams {
    fn validate(&self) -> Result<()> {
        if self.n_states == 0 {
            return Err(Error::InvalidParameter("msm.n_states must be >= 1".into()));
        }
        check_prob("msm.switch_prob", self.switch_prob)
    }
}

/// Dimerization: particles closer than `r_bind` bind with `p_bind`, move
/// together with the slower member's exponent and `k_factor` times its
/// `K`, and unbind with per-frame probability `p_unbind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DimParams {
    pub r_bind: f64,
    pub p_bind: f64,
    pub p_unbind: f64,
    pub k_factor: f64,
}

impl Default for DimParams {
    fn default() -> Self {
        Self {
            r_bind: 1.0,
            p_bind: 0.5,
            p_unbind: 0.05,
            k_factor: 0.5,
        }
    }
}

impl DimParams {
    fn validate(&self) -> Result<()> {
        if !(self.r_bind >= 0.0 && self.k_factor >= 0.0) {
            return Err(Error::InvalidParameter(
                "dim.r_bind and dim.k_factor must be non-negative".into(),
            ));
        }
        check_prob("dim.p_bind", self.p_bind)?;
        check_prob("dim.p_unbind", self.p_unbind)
    }
}

/// Transient confinement in circular compartments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TcmParams {
    pub radius: f64,
    pub n_compartments: usize,
    /// Probability that a boundary crossing is allowed.
    pub transmittance: f64,
    pub k_factor: f64,
}

impl Default for TcmParams {
    fn default() -> Self {
        Self {
            radius: 5.0,
            n_compartments: 30,
            transmittance: 0.1,
            k_factor: 0.3,
        }
    }
}

impl TcmParams {
    fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.k_factor >= 0.0) {
            return Err(Error::InvalidParameter(
                "tcm.radius must be positive and tcm.k_factor non-negative".into(),
            ));
        }
        check_prob("tcm.transmittance", self.transmittance)
    }
}

/// Quenched traps: static sites that immobilize particles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QtmParams {
    pub n_traps: usize,
    pub radius: f64,
    pub p_escape: f64,
}

impl Default for QtmParams {
    fn default() -> Self {
        Self {
            n_traps: 100,
            radius: 0.5,
            p_escape: 0.02,
        }
    }
}

impl QtmParams {
    fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) {
            return Err(Error::InvalidParameter("qtm.radius must be positive".into()));
        }
        check_prob("qtm.p_escape", self.p_escape)
    }
}
