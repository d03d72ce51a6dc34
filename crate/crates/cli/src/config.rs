//! The JSON experiment description and the flag override rules.
//!
//! Every run starts from one config file. Command line flags override the
//! matching fields, and the merged result is what gets hashed into the run
//! id, snapshotted into the manifest, and executed. Absent optional fields
//! stay absent in the snapshot so that two configs agree byte for byte
//! exactly when they describe the same run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use curvctmc_core::bounds::RateVariant;
use curvctmc_core::chain_model::{ChainSpec, StateFunction};
use curvctmc_core::{Error, Result};

pub const DEFAULT_N_PATHS: u64 = 100_000;
pub const DEFAULT_CONFIDENCE: f64 = 0.99;
pub const DEFAULT_OUT_DIR: &str = "runs";

/// Where the chain comes from: a separate file or an inline description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioSpec {
    File { path: PathBuf },
    Inline(ChainSpec),
}

impl ScenarioSpec {
    /// The inline or loaded description. Relative file paths resolve
    /// against the config file's own directory, so a config can sit next
    /// to the chain it points at.
    pub fn resolve(&self, base: &Path) -> Result<ChainSpec> {
        match self {
            ScenarioSpec::File { path } => {
                let full = if path.is_absolute() {
                    path.clone()
                } else {
                    base.join(path)
                };
                ChainSpec::from_path(&full)
            }
            ScenarioSpec::Inline(spec) => Ok(spec.clone()),
        }
    }
}

/// The observable under study.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FunctionSpec {
    Identity,
    CoordinateAverage { arity: usize },
    Table { values: Vec<f64> },
}

impl FunctionSpec {
    /// The single-argument form on `n_states` states. A coordinate
    /// average is multivariate and has no such form.
    pub fn state_function(&self, n_states: usize) -> Result<StateFunction> {
        match self {
            FunctionSpec::Identity => Ok(StateFunction::identity(n_states)),
            FunctionSpec::Table { values } => StateFunction::new(values.clone()),
            FunctionSpec::CoordinateAverage { .. } => Err(Error::InvalidParameter(
                "a coordinate average observes several times at once; pair it with the multitime machinery".into(),
            )),
        }
    }
}

/// Moment rate function selection for the closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantChoice {
    Standard,
    Bennett,
    Both,
}

impl VariantChoice {
    pub fn variants(self) -> Vec<RateVariant> {
        match self {
            VariantChoice::Standard => vec![RateVariant::Standard],
            VariantChoice::Bennett => vec![RateVariant::Bennett],
            VariantChoice::Both => vec![RateVariant::Standard, RateVariant::Bennett],
        }
    }
}

fn is_false(flag: &bool) -> bool {
    !*flag
}

/// One experiment, fully described. All fields are optional in the file;
/// each command checks for the ones it needs and rejects a run that lacks
/// them rather than guessing.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<FunctionSpec>,
    /// Time horizons. The multitime estimator reads the whole list; the
    /// scalar estimators take exactly one entry.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub times: Vec<f64>,
    /// Deviation levels, strictly increasing.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub y_grid: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_paths: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    /// Bound selectors by name, e.g. "wasserstein" or "optimized".
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bounds: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<VariantChoice>,
    /// Evaluate the stationary forms instead of fixed horizons.
    #[serde(default, skip_serializing_if = "is_false")]
    pub stationary: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<usize>,
    /// Scales the analytic side of every verification comparison. Unity
    /// means honest checks; anything else is for exercising the suite's
    /// ability to notice a wrong bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Flags beat file fields. Only explicitly given flags land here.
    pub fn apply_overrides(&mut self, seed: Option<u64>, paths: Option<u64>, out: Option<&Path>) {
        if let Some(s) = seed {
            self.seed = Some(s);
        }
        if let Some(p) = paths {
            self.n_paths = Some(p);
        }
        if let Some(o) = out {
            self.out_dir = Some(o.to_path_buf());
        }
    }

    /// Every command is seeded so its outputs are reproducible; a run
    /// without a seed is refused rather than silently randomized.
    pub fn require_seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| {
            Error::InvalidParameter("no seed given: set \"seed\" in the config or pass --seed".into())
        })
    }

    pub fn require_scenario(&self, base: &Path) -> Result<ChainSpec> {
        self.scenario
            .as_ref()
            .ok_or(Error::MissingParameter("scenario"))?
            .resolve(base)
    }

    pub fn function(&self) -> FunctionSpec {
        self.function.clone().unwrap_or(FunctionSpec::Identity)
    }

    pub fn n_paths(&self) -> u64 {
        self.n_paths.unwrap_or(DEFAULT_N_PATHS)
    }

    pub fn confidence(&self) -> f64 {
        self.confidence.unwrap_or(DEFAULT_CONFIDENCE)
    }

    pub fn variants(&self) -> Vec<RateVariant> {
        self.variant.unwrap_or(VariantChoice::Standard).variants()
    }

    pub fn x0(&self) -> usize {
        self.x0.unwrap_or(0)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }
}
