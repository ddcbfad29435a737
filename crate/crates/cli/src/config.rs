//! Run configuration: a TOML file of dotted keys whose every omitted field
//! falls back to the search defaults (population 30, length 9, ...).

use std::path::{Path, PathBuf};

use ipnas_core::codec::{decode_address, Architecture, InterfaceAddress};
use ipnas_core::fitness::DEFAULT_SHARPNESS;
use ipnas_core::{EvalProtocolConfig, PsoCoefficients, SlotConstraints, SwarmConfig};
use serde::{Deserialize, Serialize};

/// A configuration problem; the CLI exits with status 2.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config field `{field}`: {message}")]
    Field {
        field: &'static str,
        message: String,
    },
}

fn field(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvaluatorKind {
    /// Train each decoded CNN and score it on the held-out part.
    Train,
    /// Closed-form distance to a target architecture.
    Surrogate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Idx,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsoSection {
    pub population_size: usize,
    pub max_length: usize,
    pub max_fully_connected: usize,
    pub w: f64,
    pub c1: [f64; 2],
    pub c2: [f64; 2],
    pub v_max: [f64; 2],
    /// Evaluate particles on several threads.
    pub parallel: bool,
}

impl Default for PsoSection {
    fn default() -> Self {
        let c = PsoCoefficients::default();
        Self {
            population_size: 30,
            max_length: 9,
            max_fully_connected: 3,
            w: c.w,
            c1: c.c1,
            c2: c.c2,
            v_max: c.v_max,
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitnessSection {
    /// Training epochs per evaluation (k).
    pub epochs: usize,
    /// Evaluation batch size on the fitness part.
    pub batch_size: usize,
    pub train_batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Share of the training data used to train candidates; the rest scores them.
    pub train_fraction: f64,
    /// Seed of the train/fitness split.
    pub split_seed: u64,
}

impl Default for FitnessSection {
    fn default() -> Self {
        let p = EvalProtocolConfig::default();
        Self {
            epochs: p.epochs,
            batch_size: p.batch_size,
            train_batch_size: p.train_batch_size,
            learning_rate: p.learning_rate,
            momentum: p.momentum,
            train_fraction: 0.8,
            split_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub format: DatasetFormat,
    /// IDX image file.
    pub images: Option<PathBuf>,
    /// IDX label file.
    pub labels: Option<PathBuf>,
    /// CSV file, label first, no header.
    pub csv: Option<PathBuf>,
    /// Image height and width; required for CSV.
    pub height: Option<usize>,
    pub width: Option<usize>,
    /// Output classes; inferred from the labels when omitted.
    pub num_classes: Option<usize>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            format: DatasetFormat::Idx,
            images: None,
            labels: None,
            csv: None,
            height: None,
            width: None,
            num_classes: None,
        }
    }
}

/// Layer listing of the paper's evolved MB architecture (its Table VI).
pub const DEFAULT_SURROGATE_TARGET: [&str; 6] =
    ["2.100", "11.70", "15.199", "13.171", "30.149", "24.9"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateSection {
    /// Target architecture as dotted addresses, first to last layer.
    pub target: Vec<String>,
    pub sharpness: f64,
    pub num_classes: usize,
}

impl Default for SurrogateSection {
    fn default() -> Self {
        Self {
            target: DEFAULT_SURROGATE_TARGET
                .iter()
                .map(|s| s.to_string())
                .collect(),
            sharpness: DEFAULT_SHARPNESS,
            num_classes: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub max_generations: usize,
    pub evaluator: EvaluatorKind,
    pub pso: PsoSection,
    pub fitness: FitnessSection,
    pub dataset: DatasetSection,
    pub surrogate: SurrogateSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            max_generations: 10,
            evaluator: EvaluatorKind::Train,
            pso: PsoSection::default(),
            fitness: FitnessSection::default(),
            dataset: DatasetSection::default(),
            surrogate: SurrogateSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Reads and validates a config file. Relative dataset paths resolve
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut config.dataset.images,
            &mut config.dataset.labels,
            &mut config.dataset.csv,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Checks every range and, for the training evaluator, that the dataset
    /// fields it needs are present.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let pso = &self.pso;
        if pso.population_size == 0 {
            return Err(field("pso.population_size", "must be at least 1"));
        }
        if pso.max_length < 2 {
            return Err(field("pso.max_length", "must be at least 2"));
        }
        if pso.max_fully_connected == 0 || pso.max_fully_connected >= pso.max_length {
            return Err(field(
                "pso.max_fully_connected",
                format!("must be in [1, max_length = {})", pso.max_length),
            ));
        }
        for (name, value) in [
            ("pso.w", pso.w),
            ("pso.c1", pso.c1[0].min(pso.c1[1])),
            ("pso.c2", pso.c2[0].min(pso.c2[1])),
            ("pso.v_max", pso.v_max[0].min(pso.v_max[1])),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(field(name, "entries must be finite and > 0"));
            }
        }
        let fit = &self.fitness;
        for (name, value) in [
            ("fitness.epochs", fit.epochs),
            ("fitness.batch_size", fit.batch_size),
            ("fitness.train_batch_size", fit.train_batch_size),
        ] {
            if value == 0 {
                return Err(field(name, "must be at least 1"));
            }
        }
        if !(fit.learning_rate.is_finite() && fit.learning_rate > 0.0) {
            return Err(field("fitness.learning_rate", "must be finite and > 0"));
        }
        if !(0.0..1.0).contains(&fit.momentum) {
            return Err(field("fitness.momentum", "must be in [0, 1)"));
        }
        if !(fit.train_fraction > 0.0 && fit.train_fraction < 1.0) {
            return Err(field("fitness.train_fraction", "must be in (0, 1)"));
        }
        match self.evaluator {
            EvaluatorKind::Train => self.validate_dataset()?,
            EvaluatorKind::Surrogate => {
                self.surrogate_target()?;
            }
        }
        Ok(())
    }

    fn validate_dataset(&self) -> Result<(), ConfigError> {
        let ds = &self.dataset;
        let required = "is required when evaluator = \"train\"";
        match ds.format {
            DatasetFormat::Idx => {
                if ds.images.is_none() {
                    return Err(field("dataset.images", required));
                }
                if ds.labels.is_none() {
                    return Err(field("dataset.labels", required));
                }
            }
            DatasetFormat::Csv => {
                if ds.csv.is_none() {
                    return Err(field("dataset.csv", required));
                }
                if ds.height.is_none() {
                    return Err(field("dataset.height", "is required for CSV datasets"));
                }
                if ds.width.is_none() {
                    return Err(field("dataset.width", "is required for CSV datasets"));
                }
            }
        }
        if let Some(n) = ds.num_classes {
            if !(1..=2048).contains(&n) {
                return Err(field("dataset.num_classes", "must be in [1, 2048]"));
            }
        }
        Ok(())
    }

    pub fn slot_constraints(&self, num_classes: usize) -> Result<SlotConstraints, ConfigError> {
        SlotConstraints::new(
            self.pso.max_length,
            self.pso.max_fully_connected,
            num_classes,
        )
        .map_err(|e| field("pso", e.to_string()))
    }

    pub fn swarm_config(&self, num_classes: usize) -> Result<SwarmConfig, ConfigError> {
        Ok(SwarmConfig {
            constraints: self.slot_constraints(num_classes)?,
            population_size: self.pso.population_size,
            max_generations: self.max_generations,
            coefficients: PsoCoefficients {
                w: self.pso.w,
                c1: self.pso.c1,
                c2: self.pso.c2,
                v_max: self.pso.v_max,
            },
            parallel: self.pso.parallel,
        })
    }

    pub fn protocol(&self) -> EvalProtocolConfig {
        EvalProtocolConfig {
            epochs: self.fitness.epochs,
            batch_size: self.fitness.batch_size,
            train_batch_size: self.fitness.train_batch_size,
            learning_rate: self.fitness.learning_rate,
            momentum: self.fitness.momentum,
        }
    }

    /// The surrogate's target, decoded and checked against the slot rules'
    /// length limit.
    pub fn surrogate_target(&self) -> Result<Architecture, ConfigError> {
        let s = &self.surrogate;
        if !(s.sharpness.is_finite() && s.sharpness > 0.0) {
            return Err(field("surrogate.sharpness", "must be finite and > 0"));
        }
        if !(1..=2048).contains(&s.num_classes) {
            return Err(field("surrogate.num_classes", "must be in [1, 2048]"));
        }
        if s.target.len() > self.pso.max_length {
            return Err(field(
                "surrogate.target",
                format!("has {} layers, more than pso.max_length", s.target.len()),
            ));
        }
        let layers = s
            .target
            .iter()
            .map(|a| {
                let addr: InterfaceAddress = a.parse().map_err(|e: ipnas_core::CodecError| {
                    field("surrogate.target", e.to_string())
                })?;
                decode_address(addr).map_err(|e| field("surrogate.target", e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Architecture::new(layers, s.num_classes)
            .map_err(|e| field("surrogate.target", e.to_string()))
    }
}
