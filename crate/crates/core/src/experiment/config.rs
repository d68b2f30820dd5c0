use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::inference::InferenceConfig;
use crate::phantom::PhantomSpec;
use crate::predictor::train::TrainConfig;
use crate::predictor::{Architecture, ClassHeads, RegressionMode};
use crate::rng::derive_seed;
use crate::volume::InputMode;

/// Output root used when neither the config, a flag nor `ITN_OUT_DIR` names one.
pub const DEFAULT_OUTPUT_DIR: &str = "itn-out";

const TRAIN_STREAM: u64 = 1;
const INFERENCE_STREAM: u64 = 2;
const ORACLE_STREAM: u64 = 3;

/// Which outputs a model has, named after the ablation rows:
/// M1 = t,q; M2 = t,q,P; M3 = t,q,Q; M4 = t,q,P,Q; M4+ = M4 on the three
/// orthogonal planes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HeadsSelection {
    M1,
    M2,
    M3,
    M4,
    #[serde(rename = "M4+")]
    M4Plus,
}

impl HeadsSelection {
    pub const ALL: [HeadsSelection; 5] = [Self::M1, Self::M2, Self::M3, Self::M4, Self::M4Plus];

    pub fn class_heads(self) -> ClassHeads {
        match self {
            Self::M1 => ClassHeads::NONE,
            Self::M2 => ClassHeads { translation: true, rotation: false },
            Self::M3 => ClassHeads { translation: false, rotation: true },
            Self::M4 | Self::M4Plus => ClassHeads::BOTH,
        }
    }

    pub fn input_mode(self) -> InputMode {
        if self == Self::M4Plus {
            InputMode::Triplet
        } else {
            InputMode::Single
        }
    }

    /// The selection a trained model corresponds to.
    pub fn of(heads: ClassHeads, input: InputMode) -> Option<Self> {
        Self::ALL.into_iter().find(|h| h.class_heads() == heads && h.input_mode() == input)
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::M1 => "M1",
            Self::M2 => "M2",
            Self::M3 => "M3",
            Self::M4 => "M4",
            Self::M4Plus => "M4+",
        }
    }
}

impl fmt::Display for HeadsSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for HeadsSelection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|h| h.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown heads selection '{s}' (expected M1, M2, M3, M4 or M4+)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OracleKind {
    #[default]
    Exact,
    Capped,
    Noisy,
}

impl fmt::Display for OracleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Exact => "exact",
            Self::Capped => "capped",
            Self::Noisy => "noisy",
        })
    }
}

impl FromStr for OracleKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(Self::Exact),
            "capped" => Ok(Self::Capped),
            "noisy" => Ok(Self::Noisy),
            _ => Err(format!("unknown oracle '{s}' (expected exact, capped or noisy)")),
        }
    }
}

/// A ground-truth predictor standing in for a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub kind: OracleKind,
    /// Step caps of the `capped` oracle, voxels and degrees.
    pub max_translation: f64,
    pub max_rotation_deg: f64,
    /// Noise of the `noisy` oracle.
    pub sigma_translation: f64,
    pub sigma_rotation_deg: f64,
    pub epsilon: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            kind: OracleKind::Exact,
            max_translation: 4.0,
            max_rotation_deg: 5.0,
            sigma_translation: 1.0,
            sigma_rotation_deg: 2.0,
            epsilon: 0.1,
        }
    }
}

/// Every directory defaults to the output root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub output_dir: Option<PathBuf>,
    /// Dataset used for training.
    pub train_dir: Option<PathBuf>,
    /// Dataset detected on and evaluated against.
    pub test_dir: Option<PathBuf>,
    /// Checkpoint written by `train` and read by `detect`; default `<out>/model.itnm`.
    pub model: Option<PathBuf>,
    /// Where `eval` finds `detections.csv`.
    pub detections_dir: Option<PathBuf>,
}

/// One experiment, read from JSON; command-line flags override fields.
///
/// `train.seed` and `inference.seed` are derived from `seed` and ignored in
/// the file; [`ExperimentConfig::resolved`] shows the values actually used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub phantom: PhantomSpec,
    pub phantom_count: usize,
    /// Unset: taken from the checkpoint when detecting, `quat` when training.
    pub mode: Option<RegressionMode>,
    /// Unset: taken from the checkpoint when detecting, M4 when training and
    /// M1 (plain update) for oracles.
    pub heads: Option<HeadsSelection>,
    pub architecture: Architecture,
    pub train: TrainConfig,
    pub inference: InferenceConfig,
    /// Detect with this oracle instead of a checkpoint.
    pub oracle: Option<OracleConfig>,
    /// Write every sampled plane of every run as 16-bit PGM.
    pub dump_planes: bool,
    /// Row label in reports; default derived from the predictor.
    pub model_id: Option<String>,
    /// Add the M4+ row to `conf-bench`.
    pub include_triplet: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            paths: PathsConfig::default(),
            phantom: PhantomSpec::default(),
            phantom_count: 30,
            mode: None,
            heads: None,
            architecture: Architecture::default(),
            train: TrainConfig::default(),
            inference: InferenceConfig::default(),
            oracle: None,
            dump_planes: false,
            model_id: None,
            include_triplet: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        serde_json::from_str(text).map_err(|e| ExperimentError::Config(format!("config: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn output_root(&self) -> PathBuf {
        self.paths.output_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }

    pub fn train_dir(&self) -> PathBuf {
        self.paths.train_dir.clone().unwrap_or_else(|| self.output_root())
    }

    pub fn test_dir(&self) -> PathBuf {
        self.paths.test_dir.clone().unwrap_or_else(|| self.output_root())
    }

    pub fn model_path(&self) -> PathBuf {
        self.paths.model.clone().unwrap_or_else(|| self.output_root().join("model.itnm"))
    }

    pub fn detections_dir(&self) -> PathBuf {
        self.paths.detections_dir.clone().unwrap_or_else(|| self.output_root())
    }

    /// Seed of the `index`-th generated phantom.
    pub fn phantom_seed(&self, index: usize) -> u64 {
        derive_seed(self.seed, index as u64)
    }

    /// Seed of the initial poses for the `index`-th volume of a dataset.
    /// Independent of the predictor, so every benchmark row starts alike.
    pub fn inference_seed(&self, index: usize) -> u64 {
        derive_seed(derive_seed(self.seed, INFERENCE_STREAM), index as u64)
    }

    pub fn oracle_seed(&self) -> u64 {
        derive_seed(self.seed, ORACLE_STREAM)
    }

    /// The config with derived seeds filled in.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.train.seed = derive_seed(self.seed, TRAIN_STREAM);
        c.inference.seed = derive_seed(self.seed, INFERENCE_STREAM);
        c
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let cfg = |e: &dyn fmt::Display| ExperimentError::Config(e.to_string());
        self.train.validate().map_err(|e| cfg(&e))?;
        self.inference.validate().map_err(|e| cfg(&e))?;
        self.architecture.validate().map_err(|e| cfg(&e))?;
        if self.architecture.input_size != self.inference.plane_size {
            return Err(ExperimentError::Config(format!(
                "network input size {} differs from inference plane size {}",
                self.architecture.input_size, self.inference.plane_size
            )));
        }
        if let (Some(mode), Some(heads)) = (self.mode, self.heads) {
            if mode != RegressionMode::Quat && heads.class_heads() != ClassHeads::NONE {
                return Err(ExperimentError::Config(format!(
                    "heads {heads} need the quat mode; {mode} models have no class outputs"
                )));
            }
        }
        if let Some(o) = &self.oracle {
            let ok = [o.max_translation, o.max_rotation_deg, o.sigma_translation, o.sigma_rotation_deg]
                .iter()
                .all(|v| v.is_finite() && *v >= 0.0)
                && (0.0..=1.0).contains(&o.epsilon);
            if !ok {
                return Err(ExperimentError::Config(format!("invalid oracle settings {o:?}")));
            }
            if o.kind == OracleKind::Noisy && self.mode.is_some_and(|m| m != RegressionMode::Quat) {
                return Err(ExperimentError::Config("the noisy oracle only reports quaternions".into()));
            }
        }
        Ok(())
    }
}
