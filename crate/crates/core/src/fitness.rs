//! Fitness evaluators: the train-then-batch-evaluate protocol on a partial
//! dataset, and a deterministic surrogate landscape for exercising the
//! search engine without training.

use rand::seq::SliceRandom;

use crate::cnn::{CnnError, Model, Scalar};
use crate::codec::{Architecture, LayerSpec};
use crate::dataset::{batch_ranges, LabeledDataset};
use crate::SearchRng;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitnessError {
    #[error("training diverged: {0}")]
    Numeric(#[from] CnnError),
    #[error("dataset mismatch: {0}")]
    Data(String),
    #[error("invalid protocol configuration: {0}")]
    Config(String),
    #[error("evaluator failed: {0}")]
    Failed(String),
}

/// Scores a decoded architecture with a value in `[0, 1]`.
///
/// The same architecture and the same RNG state must yield the same score.
pub trait FitnessEvaluator: Sync {
    fn evaluate(
        &self,
        architecture: &Architecture,
        rng: &mut SearchRng,
    ) -> Result<f64, FitnessError>;

    /// Whether evaluations of different particles may run in parallel.
    fn concurrency_safe(&self) -> bool {
        false
    }
}

impl<F> FitnessEvaluator for F
where
    F: Fn(&Architecture, &mut SearchRng) -> Result<f64, FitnessError> + Sync,
{
    fn evaluate(
        &self,
        architecture: &Architecture,
        rng: &mut SearchRng,
    ) -> Result<f64, FitnessError> {
        self(architecture, rng)
    }
}

/// Training and scoring settings for [`evaluate_by_training`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalProtocolConfig {
    /// Training epochs before scoring.
    pub epochs: usize,
    /// Batch size used when scoring on the fitness part.
    pub batch_size: usize,
    /// Mini-batch size for SGD.
    pub train_batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
}

impl Default for EvalProtocolConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 200,
            train_batch_size: 32,
            learning_rate: 0.01,
            momentum: 0.9,
        }
    }
}

impl EvalProtocolConfig {
    pub fn validate(&self) -> Result<(), FitnessError> {
        if self.epochs == 0 {
            return Err(FitnessError::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 || self.train_batch_size == 0 {
            return Err(FitnessError::Config(
                "batch sizes must be at least 1".into(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(FitnessError::Config(format!(
                "learning rate {} must be finite and >= 0",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(FitnessError::Config(format!(
                "momentum {} outside [0, 1)",
                self.momentum
            )));
        }
        Ok(())
    }
}

/// Mean of per-batch accuracies over consecutive batches of `batch_size`.
/// A short final batch counts as one batch like any other.
pub fn mean_batch_accuracy(predictions: &[usize], labels: &[usize], batch_size: usize) -> f64 {
    assert_eq!(predictions.len(), labels.len());
    let accuracies: Vec<f64> = batch_ranges(labels.len(), batch_size)
        .map(|r| {
            let hits = predictions[r.clone()]
                .iter()
                .zip(&labels[r.clone()])
                .filter(|(p, l)| p == l)
                .count();
            hits as f64 / r.len() as f64
        })
        .collect();
    accuracies.iter().sum::<f64>() / accuracies.len() as f64
}

/// Builds the network with Xavier init, trains it for `config.epochs`
/// shuffled epochs on `train`, and returns the mean batch accuracy on
/// `fitness`.
pub fn evaluate_by_training<T: Scalar>(
    architecture: &Architecture,
    train: &LabeledDataset,
    fitness: &LabeledDataset,
    config: &EvalProtocolConfig,
    rng: &mut SearchRng,
) -> Result<f64, FitnessError> {
    config.validate()?;
    if (train.height(), train.width()) != (fitness.height(), fitness.width()) {
        return Err(FitnessError::Data(format!(
            "train images are {}x{}, fitness images {}x{}",
            train.height(),
            train.width(),
            fitness.height(),
            fitness.width()
        )));
    }
    let classes = train.num_classes().max(fitness.num_classes());
    if classes > architecture.num_classes() {
        return Err(FitnessError::Data(format!(
            "data has {classes} classes, architecture outputs {}",
            architecture.num_classes()
        )));
    }

    let mut model =
        Model::<T>::from_architecture(architecture, (train.height(), train.width(), 1), rng)?;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(rng);
        for range in batch_ranges(order.len(), config.train_batch_size) {
            let idx = &order[range];
            let x = train.gather::<T>(idx);
            model.backward_and_step(
                &x,
                &train.gather_labels(idx),
                config.learning_rate,
                config.momentum,
            )?;
        }
    }

    let mut predictions = Vec::with_capacity(fitness.len());
    let all: Vec<usize> = (0..fitness.len()).collect();
    for range in batch_ranges(fitness.len(), config.batch_size) {
        let x = fitness.gather::<T>(&all[range]);
        let logits = model.forward(&x)?;
        if !logits.all_finite() {
            return Err(CnnError::Numeric("non-finite logits on the fitness set".into()).into());
        }
        predictions.extend(model.predict(&x)?);
    }
    Ok(mean_batch_accuracy(
        &predictions,
        fitness.labels(),
        config.batch_size,
    ))
}

/// [`evaluate_by_training`] over a fixed train/fitness split, in `f32`.
#[derive(Debug, Clone)]
pub struct TrainingEvaluator {
    train: LabeledDataset,
    fitness: LabeledDataset,
    config: EvalProtocolConfig,
}

impl TrainingEvaluator {
    pub fn new(
        train: LabeledDataset,
        fitness: LabeledDataset,
        config: EvalProtocolConfig,
    ) -> Result<Self, FitnessError> {
        config.validate()?;
        Ok(Self {
            train,
            fitness,
            config,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.train.num_classes().max(self.fitness.num_classes())
    }

    pub fn config(&self) -> &EvalProtocolConfig {
        &self.config
    }
}

impl FitnessEvaluator for TrainingEvaluator {
    fn evaluate(
        &self,
        architecture: &Architecture,
        rng: &mut SearchRng,
    ) -> Result<f64, FitnessError> {
        evaluate_by_training::<f32>(architecture, &self.train, &self.fitness, &self.config, rng)
    }

    fn concurrency_safe(&self) -> bool {
        true
    }
}

/// Default surrogate sharpness: fitness 0.95 at distance 1, the cost of
/// one wrong layer, so "fitness >= 0.95" reads "within one layer of the
/// target".
pub const DEFAULT_SHARPNESS: f64 = 0.051_293_294_387_550_58;

/// A smooth peak around a target architecture.
///
/// The distance between two architectures is
///
/// ```text
/// d = edit(a, b) + |depth_a - depth_b|
/// ```
///
/// where `edit` is the Levenshtein distance between the layer sequences with
/// unit insertion and deletion cost and a substitution cost of 1 between
/// layers of different kinds, or the parameter gap between layers of the
/// same kind. The gap is the mean over the layer's fields of
/// `|x - y| / (range - 1)` for numeric fields and 0/1 for the pool type, so
/// it lies in `[0, 1]`. Pool placeholders are ignored. Fitness is
/// `exp(-sharpness * d)`, which is 1 exactly at the target.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateLandscape {
    target: Architecture,
    sharpness: f64,
}

impl SurrogateLandscape {
    pub fn new(target: Architecture, sharpness: f64) -> Result<Self, FitnessError> {
        if !(sharpness.is_finite() && sharpness > 0.0) {
            return Err(FitnessError::Config(format!(
                "sharpness {sharpness} must be finite and > 0"
            )));
        }
        Ok(Self { target, sharpness })
    }

    pub fn target(&self) -> &Architecture {
        &self.target
    }

    pub fn sharpness(&self) -> f64 {
        self.sharpness
    }
}

fn field_gap(a: impl Into<f64>, b: impl Into<f64>, range: f64) -> f64 {
    (a.into() - b.into()).abs() / (range - 1.0)
}

/// Normalised parameter gap in `[0, 1]` between two layers of the same kind.
pub fn layer_parameter_gap(a: &LayerSpec, b: &LayerSpec) -> Option<f64> {
    match (*a, *b) {
        (
            LayerSpec::Conv {
                filter_size: fa,
                feature_maps: ma,
                stride: sa,
            },
            LayerSpec::Conv {
                filter_size: fb,
                feature_maps: mb,
                stride: sb,
            },
        ) => {
            Some((field_gap(fa, fb, 8.0) + field_gap(ma, mb, 128.0) + field_gap(sa, sb, 4.0)) / 3.0)
        }
        (
            LayerSpec::Pool {
                kernel: ka,
                stride: sa,
                pool_type: ta,
                ..
            },
            LayerSpec::Pool {
                kernel: kb,
                stride: sb,
                pool_type: tb,
                ..
            },
        ) => Some(
            (field_gap(ka, kb, 4.0) + field_gap(sa, sb, 4.0) + f64::from(u8::from(ta != tb))) / 3.0,
        ),
        (LayerSpec::FullyConnected { neurons: na }, LayerSpec::FullyConnected { neurons: nb }) => {
            Some(field_gap(na, nb, 2048.0))
        }
        (LayerSpec::Disabled { .. }, LayerSpec::Disabled { .. }) => Some(0.0),
        _ => None,
    }
}

/// Distance used by [`SurrogateLandscape`]; zero iff the architectures
/// agree on every field other than pool placeholders.
pub fn architecture_distance(a: &Architecture, b: &Architecture) -> f64 {
    let (a, b) = (a.layers(), b.layers());
    let mut prev: Vec<f64> = (0..=b.len()).map(|j| j as f64).collect();
    for (i, la) in a.iter().enumerate() {
        let mut cur = vec![(i + 1) as f64; b.len() + 1];
        for (j, lb) in b.iter().enumerate() {
            let substitute = prev[j] + layer_parameter_gap(la, lb).unwrap_or(1.0);
            cur[j + 1] = substitute.min(prev[j + 1] + 1.0).min(cur[j] + 1.0);
        }
        prev = cur;
    }
    prev[b.len()] + a.len().abs_diff(b.len()) as f64
}

pub fn surrogate_evaluate(architecture: &Architecture, landscape: &SurrogateLandscape) -> f64 {
    (-landscape.sharpness * architecture_distance(architecture, &landscape.target)).exp()
}

impl FitnessEvaluator for SurrogateLandscape {
    fn evaluate(
        &self,
        architecture: &Architecture,
        _rng: &mut SearchRng,
    ) -> Result<f64, FitnessError> {
        Ok(surrogate_evaluate(architecture, self))
    }

    fn concurrency_safe(&self) -> bool {
        true
    }
}
