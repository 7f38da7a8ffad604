use std::path::Path;

use anodiff::detect::DetectConfig;
use anodiff::infer::EstimatorConfig;
use anodiff::link::LinkConfig;
use anodiff::metrics::EPS_CP;
use anodiff::segment::CpConfig;
use anodiff::simulate::{RenderConfig, SimConfig};
use anodiff::ModelKind;
use anyhow::Context;
use serde::{Deserialize, Serialize};

/// Mass threshold calibrated for the bundled renderer at its default
/// intensity and noise: noise peaks stay below ~35, single spots sit near 360.
pub const RENDER_MINMASS: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub eps_cp: f64,
    /// Forces one or two ensemble states.
    pub n_states: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            eps_cp: EPS_CP,
            n_states: None,
        }
    }
}

/// Experiment set generated by `simulate --per-model` and `pipeline`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureConfig {
    pub per_model: usize,
    pub models: Vec<ModelKind>,
    /// Render videos and evaluate tracked VIP trajectories instead of the
    /// simulated ones.
    pub video: bool,
    pub n_vips: usize,
    pub vip_radius: f64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            per_model: 1,
            models: ModelKind::ALL.to_vec(),
            video: false,
            n_vips: 15,
            vip_radius: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Predictor {
    #[default]
    Msd,
    File,
}

impl std::str::FromStr for Predictor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "msd" => Ok(Self::Msd),
            "file" => Ok(Self::File),
            _ => Err(format!("unknown predictor {s:?} (expected msd or file)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Root seed; every stage derives its own stream from it.
    pub seed: u64,
    pub predictor: Predictor,
    pub sim: SimConfig,
    pub render: RenderConfig,
    pub detect: DetectConfig,
    pub link: LinkConfig,
    pub estimator: EstimatorConfig,
    pub cp: CpConfig,
    pub evaluate: EvalConfig,
    pub fixture: FixtureConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            predictor: Predictor::Msd,
            sim: SimConfig::default(),
            render: RenderConfig::default(),
            detect: DetectConfig {
                minmass: RENDER_MINMASS,
                ..DetectConfig::default()
            },
            link: LinkConfig::default(),
            estimator: EstimatorConfig::default(),
            cp: CpConfig::default(),
            evaluate: EvalConfig::default(),
            fixture: FixtureConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).map_err(|e| {
            anyhow::Error::new(anodiff::Error::InvalidInput(format!(
                "{}: {e}",
                path.display()
            )))
        })
    }

    pub fn validate(&self) -> anodiff::Result<()> {
        self.sim.validate()?;
        self.render.validate()?;
        self.detect.validate()?;
        self.link.validate()?;
        self.estimator.validate()?;
        self.cp.validate()?;
        if self.evaluate.eps_cp.is_nan() || self.evaluate.eps_cp <= 0.0 {
            return Err(anodiff::Error::InvalidParameter("eps_cp must be positive".into()));
        }
        if let Some(n) = self.evaluate.n_states {
            if !(1..=2).contains(&n) {
                return Err(anodiff::Error::InvalidParameter(format!(
                    "n_states must be 1 or 2, got {n}"
                )));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Writes the resolved configuration next to the outputs.
    pub fn write_resolved(&self, out_dir: &Path) -> anyhow::Result<()> {
        std::fs::create_dir_all(out_dir)
            .with_context(|| format!("creating {}", out_dir.display()))?;
        let path = out_dir.join("config.resolved.toml");
        std::fs::write(&path, self.to_toml()?)
            .with_context(|| format!("writing {}", path.display()))
    }
}
