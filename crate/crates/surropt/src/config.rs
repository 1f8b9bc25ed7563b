//! Pipeline configuration: one TOML file drives every command.
//!
//! ```toml
//! [space]
//! preset = "spba-four-param"      # or file = "space.toml", or inline
//!                                 # [[space.parameter]] / [[space.constraint]]
//! [oracle]
//! kind = "synthetic"              # or "dataset" with dataset = "runs.csv"
//!
//! [sample]
//! count = 800
//! skip = 1
//! seed = 42
//!
//! [retry]
//! max_retries = 5
//! perturb_scale = 0.02
//!
//! [split]
//! train_fraction = 0.8
//! seed = 0
//!
//! [kernel]
//! kind = "thin_plate_spline"
//! smoothing = 0.0
//!
//! [target]
//! total_angle_deg = 150.0         # with unit counts, or angle_rad = 1.5
//! gripper_units = 7
//! model_units = 4
//!
//! [optimizer]
//! epsilon = 1.0
//! starts = 8
//! seed = 0
//!
//! [sensitivity]
//! keep = 4
//!
//! [surface]
//! parameters = ["H_C", "W_B"]
//! resolution = 50
//! fixed = { T_A = 1.5, L_A = 6.0 }
//!
//! [learning_curve]
//! sizes = [200, 800, 2400, 5400]
//!
//! [output]
//! dir = "out"
//! ```
//!
//! Relative file references resolve against the config file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::design_space::{DesignSpace, DesignSpaceError, ParameterDef, StrictLinearConstraint};
use crate::evaluation::SplitSpec;
use crate::oracle::{DatasetOracle, Oracle, OracleError, RetryPolicy, SyntheticOracle};
use crate::optimize::{target_angle, OptimizeError, OptimizerSettings};
use crate::sensitivity::SweepSettings;
use crate::surrogate::KernelSpec;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config error: {0}")]
    Invalid(String),
    #[error("referenced file {0} does not exist")]
    MissingFile(String),
    #[error(transparent)]
    Space(#[from] DesignSpaceError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub preset: Option<String>,
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub parameter: Vec<ParameterDef>,
    #[serde(default)]
    pub constraint: Vec<StrictLinearConstraint>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub kind: String,
    pub dataset: Option<PathBuf>,
    pub inert_seed: Option<u64>,
    pub inert_amplitude: Option<f64>,
    pub failure_center: Option<Vec<f64>>,
    pub failure_radius: Option<f64>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            kind: "synthetic".into(),
            dataset: None,
            inert_seed: None,
            inert_amplitude: None,
            failure_center: None,
            failure_radius: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub count: usize,
    pub skip: u64,
    pub seed: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            count: 800,
            skip: 1,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryConfig {
    pub max_retries: usize,
    pub perturb_scale: f64,
}

impl Default for RetryConfig {
    fn default() -> Self {
        Self {
            max_retries: 5,
            perturb_scale: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub kind: String,
    pub smoothing: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            kind: "thin_plate_spline".into(),
            smoothing: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub angle_rad: Option<f64>,
    pub total_angle_deg: Option<f64>,
    pub gripper_units: Option<u32>,
    pub model_units: Option<u32>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub epsilon: f64,
    pub max_iterations: usize,
    pub max_line_search: usize,
    pub stationarity_tol: f64,
    pub starts: usize,
    pub seed: u64,
    pub write_trace: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            max_iterations: 200,
            max_line_search: 40,
            stationarity_tol: 1e-6,
            starts: 8,
            seed: 0,
            write_trace: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityConfig {
    pub keep: usize,
    pub points: usize,
    pub degree: usize,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self {
            keep: 4,
            points: 9,
            degree: 4,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceConfig {
    pub parameters: Vec<String>,
    pub resolution: usize,
    #[serde(default)]
    pub fixed: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveConfig {
    pub sizes: Vec<usize>,
}

impl Default for CurveConfig {
    fn default() -> Self {
        Self {
            sizes: vec![200, 800, 2400, 5400],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub space: SpaceConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub sample: SampleConfig,
    #[serde(default)]
    pub retry: RetryConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub target: TargetConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub sensitivity: SensitivityConfig,
    #[serde(default)]
    pub surface: Option<SurfaceConfig>,
    #[serde(default)]
    pub learning_curve: CurveConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut config: PipelineConfig =
            toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        config.validate()?;
        Ok(config)
    }

    pub fn from_str_with_base(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut config: PipelineConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.base_dir = base_dir.to_path_buf();
        config.validate()?;
        Ok(config)
    }

    fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.sample.count == 0 {
            return Err(ConfigError::Invalid("sample.count must be positive".into()));
        }
        if self.kernel.kind != "thin_plate_spline" {
            return Err(ConfigError::Invalid(format!(
                "unknown kernel kind {:?}",
                self.kernel.kind
            )));
        }
        if self.kernel.smoothing < 0.0 {
            return Err(ConfigError::Invalid(
                "kernel.smoothing must be nonnegative".into(),
            ));
        }
        if !(self.retry.perturb_scale >= 0.0 && self.retry.perturb_scale.is_finite()) {
            return Err(ConfigError::Invalid(
                "retry.perturb_scale must be finite and nonnegative".into(),
            ));
        }
        if !(self.optimizer.epsilon > 0.0 && self.optimizer.epsilon.is_finite()) {
            return Err(ConfigError::Invalid(
                "optimizer.epsilon must be positive".into(),
            ));
        }
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            return Err(ConfigError::Invalid(
                "split.train_fraction must lie strictly between 0 and 1".into(),
            ));
        }
        match self.oracle.kind.as_str() {
            "synthetic" => {}
            "dataset" => {
                let Some(dataset) = &self.oracle.dataset else {
                    return Err(ConfigError::Invalid(
                        "oracle.kind = \"dataset\" needs oracle.dataset".into(),
                    ));
                };
                let path = self.resolve(dataset);
                if !path.exists() {
                    return Err(ConfigError::MissingFile(path.display().to_string()));
                }
            }
            other => {
                return Err(ConfigError::Invalid(format!(
                    "unknown oracle kind {other:?} (expected synthetic or dataset)"
                )));
            }
        }
        if let Some(file) = &self.space.file {
            let path = self.resolve(file);
            if !path.exists() {
                return Err(ConfigError::MissingFile(path.display().to_string()));
            }
        }
        if let Some(surface) = &self.surface {
            if surface.parameters.len() != 2 {
                return Err(ConfigError::Invalid(
                    "surface.parameters needs exactly two names".into(),
                ));
            }
            if surface.parameters[0] == surface.parameters[1] {
                return Err(ConfigError::Invalid(
                    "surface.parameters must be distinct".into(),
                ));
            }
            if surface.resolution < 2 {
                return Err(ConfigError::Invalid(
                    "surface.resolution must be at least 2".into(),
                ));
            }
        }
        if self.learning_curve.sizes.is_empty()
            || self.learning_curve.sizes.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(ConfigError::Invalid(
                "learning_curve.sizes must be ascending and non-empty".into(),
            ));
        }
        Ok(())
    }

    pub fn design_space(&self) -> Result<DesignSpace, ConfigError> {
        if let Some(preset) = &self.space.preset {
            return match preset.as_str() {
                "spba-four-param" => Ok(DesignSpace::spba_four_param()),
                "spba-eight-param" => Ok(DesignSpace::spba_eight_param()),
                other => Err(ConfigError::Invalid(format!(
                    "unknown space preset {other:?}"
                ))),
            };
        }
        if let Some(file) = &self.space.file {
            let path = self.resolve(file);
            let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Io {
                path: path.display().to_string(),
                source,
            })?;
            return Ok(DesignSpace::from_toml_str(&text)?);
        }
        if !self.space.parameter.is_empty() {
            return Ok(DesignSpace::new(
                self.space.parameter.clone(),
                self.space.constraint.clone(),
            )?);
        }
        Err(ConfigError::Invalid(
            "space needs a preset, a file, or inline parameters".into(),
        ))
    }

    pub fn oracle(&self, space: &DesignSpace) -> Result<(Box<dyn Oracle>, Vec<String>), ConfigError> {
        match self.oracle.kind.as_str() {
            "synthetic" => {
                let mut oracle = SyntheticOracle::new(space.clone())?;
                if let (Some(seed), Some(amplitude)) =
                    (self.oracle.inert_seed, self.oracle.inert_amplitude)
                {
                    oracle = oracle.with_inert_wiggle(seed, amplitude);
                }
                if let (Some(center), Some(radius)) =
                    (&self.oracle.failure_center, self.oracle.failure_radius)
                {
                    let point = crate::design_space::DesignPoint::new(center.clone());
                    oracle = oracle.with_failure_ball(&point, radius);
                }
                Ok((Box::new(oracle), Vec::new()))
            }
            "dataset" => {
                let path = self.resolve(self.oracle.dataset.as_ref().expect("validated"));
                let (oracle, warnings) = DatasetOracle::from_csv(space.clone(), &path)?;
                Ok((Box::new(oracle), warnings))
            }
            other => Err(ConfigError::Invalid(format!("unknown oracle kind {other:?}"))),
        }
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.retry.max_retries,
            perturb_scale: self.retry.perturb_scale,
        }
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train_fraction: self.split.train_fraction,
            seed: self.split.seed,
        }
    }

    pub fn kernel_spec(&self) -> KernelSpec {
        KernelSpec::thin_plate_spline().with_smoothing(self.kernel.smoothing)
    }

    pub fn sweep_settings(&self) -> SweepSettings {
        SweepSettings {
            points: self.sensitivity.points,
            degree: self.sensitivity.degree,
            epsilon: self.optimizer.epsilon,
        }
    }

    pub fn optimizer_settings(&self) -> OptimizerSettings {
        OptimizerSettings {
            max_iterations: self.optimizer.max_iterations,
            max_line_search: self.optimizer.max_line_search,
            stationarity_tol: self.optimizer.stationarity_tol,
        }
    }

    /// The required bending angle: explicit radians, or derived from the
    /// gripper-to-model unit ratio.
    pub fn target_angle(&self) -> Result<f64, ConfigError> {
        if let Some(angle) = self.target.angle_rad {
            if angle.is_nan() || angle <= 0.0 {
                return Err(ConfigError::Invalid(
                    "target.angle_rad must be positive".into(),
                ));
            }
            return Ok(angle);
        }
        match (
            self.target.total_angle_deg,
            self.target.gripper_units,
            self.target.model_units,
        ) {
            (Some(deg), Some(gripper), Some(model)) => Ok(target_angle(deg, gripper, model)?),
            _ => Err(ConfigError::Invalid(
                "target needs angle_rad or (total_angle_deg, gripper_units, model_units)".into(),
            )),
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.output.dir)
    }

    /// Applies the --seed override to every seeded stage.
    pub fn override_seed(&mut self, seed: u64) {
        self.sample.seed = seed;
        self.split.seed = seed;
        self.optimizer.seed = seed;
    }
}
