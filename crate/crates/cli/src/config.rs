//! Run configuration: one JSON document describing instance, noise, risk,
//! solver, rounding and evaluation settings.

use std::path::{Path, PathBuf};

use qctrl_core::instances::InstanceSpec;
use qctrl_core::objective::RiskSpec;
use qctrl_core::optimizers::{AdamConfig, QuasiNewtonConfig};
use qctrl_core::rounding::{RoundingConfig, RoundingMode};
use qctrl_core::uncertainty::{NoiseModel, DEFAULT_TIME_OFFSET_RATIO};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InstanceRef {
    File { file: PathBuf },
    Inline(InstanceSpec),
}

/// A scalar applies to every control Hamiltonian; a list gives the intrinsic
/// entry first, then one per controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sigma {
    Scalar(f64),
    PerHamiltonian(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub sigma_offset: Sigma,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_time: Option<Sigma>,
    #[serde(default = "default_ratio")]
    pub time_offset_ratio: f64,
    /// Offset sd of the intrinsic Hamiltonian when `sigma_offset` is a scalar.
    #[serde(default)]
    pub intrinsic: f64,
}

fn default_ratio() -> f64 {
    DEFAULT_TIME_OFFSET_RATIO
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { sigma_offset: Sigma::Scalar(0.0), sigma_time: None, time_offset_ratio: DEFAULT_TIME_OFFSET_RATIO, intrinsic: 0.0 }
    }
}

impl NoiseSpec {
    pub fn uniform(sigma: f64) -> Self {
        Self { sigma_offset: Sigma::Scalar(sigma), ..Default::default() }
    }

    fn expand(s: &Sigma, controllers: usize, intrinsic: f64, field: &str) -> Result<Vec<f64>, CliError> {
        match s {
            Sigma::Scalar(v) => {
                let mut out = vec![*v; controllers + 1];
                out[0] = intrinsic;
                Ok(out)
            }
            Sigma::PerHamiltonian(v) if v.len() == controllers + 1 => Ok(v.clone()),
            Sigma::PerHamiltonian(v) => Err(CliError::Config(format!(
                "noise.{field}: expected {} entries (intrinsic + {controllers} controllers), got {}",
                controllers + 1,
                v.len()
            ))),
        }
    }

    pub fn model(&self, controllers: usize) -> Result<NoiseModel, CliError> {
        let offset = Self::expand(&self.sigma_offset, controllers, self.intrinsic, "sigma_offset")?;
        let time = match &self.sigma_time {
            Some(s) => Some(Self::expand(s, controllers, self.time_offset_ratio * self.intrinsic, "sigma_time")?),
            None => None,
        };
        NoiseModel::new(offset, time, self.time_offset_ratio).map_err(|e| CliError::Config(format!("noise: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Adam,
    #[default]
    Qn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// 1-based controller indices on the two axes.
    pub controllers: (usize, usize),
    pub range: (f64, f64),
    pub grid_points: usize,
    pub per_cell: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self { controllers: (1, 2), range: (-0.5, 0.5), grid_points: 21, per_cell: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSpec {
    pub groups: usize,
    pub per_group: usize,
    pub sweep: SweepSpec,
}

impl Default for EvaluationSpec {
    fn default() -> Self {
        Self { groups: 10, per_group: 500, sweep: SweepSpec::default() }
    }
}

fn default_rounding() -> RoundingConfig {
    RoundingConfig { c_sur: 1, mode: RoundingMode::Sos1 }
}

fn default_scenarios() -> usize {
    1
}

fn default_starts() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub instance: InstanceRef,
    #[serde(default)]
    pub noise: NoiseSpec,
    pub risk: RiskSpec,
    /// In-sample scenario count `S`.
    #[serde(default = "default_scenarios")]
    pub scenarios: usize,
    #[serde(default)]
    pub solver: SolverKind,
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default)]
    pub quasi_newton: QuasiNewtonConfig,
    /// Half-width of the seeded uniform perturbation of the `1/N` start.
    #[serde(default)]
    pub init_jitter: f64,
    /// Number of seeded starting points; the best final objective is kept.
    #[serde(default = "default_starts")]
    pub starts: usize,
    #[serde(default = "default_rounding")]
    pub rounding: RoundingConfig,
    #[serde(default)]
    pub evaluation: EvaluationSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Directory that relative file references resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("line {} column {}: {e}", e.line(), e.column())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, msg: String| Err(CliError::Config(format!("{field}: {msg}")));
        if let Err(e) = self.risk.validate() {
            return bad("risk", e.to_string());
        }
        if self.scenarios == 0 {
            return bad("scenarios", "must be at least 1".into());
        }
        if self.starts == 0 {
            return bad("starts", "must be at least 1".into());
        }
        if self.rounding.c_sur == 0 {
            return bad("rounding.c_sur", "must be at least 1".into());
        }
        if let Err(e) = self.adam.validate() {
            return bad("adam", e.to_string());
        }
        if self.quasi_newton.memory == 0 {
            return bad("quasi_newton.memory", "must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.init_jitter) {
            return bad("init_jitter", format!("must lie in [0, 1], got {}", self.init_jitter));
        }
        if self.evaluation.groups == 0 || self.evaluation.per_group == 0 {
            return bad("evaluation", "groups and per_group must be positive".into());
        }
        Ok(())
    }

    pub fn instance_spec(&self) -> Result<InstanceSpec, CliError> {
        match &self.instance {
            InstanceRef::Inline(spec) => Ok(spec.clone()),
            InstanceRef::File { file } => {
                let path = self.base_dir.join(file);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| CliError::Config(format!("cannot read instance file {}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| {
                    CliError::Config(format!("{} line {} column {}: {e}", path.display(), e.line(), e.column()))
                })
            }
        }
    }

    /// Directory that relative instance file references resolve against.
    pub fn instance_base(&self) -> PathBuf {
        match &self.instance {
            InstanceRef::File { file } => {
                self.base_dir.join(file).parent().map(Path::to_path_buf).unwrap_or_default()
            }
            InstanceRef::Inline(_) => self.base_dir.clone(),
        }
    }

    /// Hex SHA-256 of the effective configuration serialized as JSON. The
    /// output directory is left out: it does not affect any result.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(&Self { out: None, ..self.clone() }).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}
