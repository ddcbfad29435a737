use rand::Rng;

use super::layers::{Conv2d, Dense, Layer, Pool2d};
use super::{CnnError, Scalar, Tensor};
use crate::codec::{Architecture, LayerSpec};

/// Mean softmax cross-entropy and its gradient with respect to the logits.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<(f64, Tensor<T>), CnnError> {
    let (b, classes) = match *logits.shape() {
        [b, c] => (b, c),
        ref s => return Err(CnnError::Shape(format!("logits must be 2-D, got {s:?}"))),
    };
    if labels.len() != b {
        return Err(CnnError::Shape(format!(
            "{} labels for a batch of {b}",
            labels.len()
        )));
    }
    let mut grad = softmax(logits)?.into_data();
    let scale = T::from_f64(1.0 / b as f64);
    let mut loss = 0.0;
    for (row, &label) in grad.chunks_mut(classes).zip(labels) {
        if label >= classes {
            return Err(CnnError::Label {
                label,
                num_classes: classes,
            });
        }
        loss -= row[label].to_f64().max(f64::MIN_POSITIVE).ln();
        row[label] = row[label] - T::one();
        for g in row.iter_mut() {
            *g = *g * scale;
        }
    }
    let loss = loss / b as f64;
    if !loss.is_finite() {
        return Err(CnnError::Numeric(format!("non-finite loss {loss}")));
    }
    Ok((loss, Tensor::new(logits.shape().to_vec(), grad)?))
}

/// Row-wise softmax of a `(batch, classes)` tensor.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>, CnnError> {
    let classes = match *logits.shape() {
        [_, c] => c,
        ref s => return Err(CnnError::Shape(format!("logits must be 2-D, got {s:?}"))),
    };
    let mut out = logits.data().to_vec();
    for row in out.chunks_mut(classes) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum = sum + *x;
        }
        for x in row.iter_mut() {
            *x = *x / sum;
        }
    }
    Tensor::new(logits.shape().to_vec(), out)
}

/// A feed-forward stack ending in `num_classes` logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    layers: Vec<Layer<T>>,
    num_classes: usize,
}

impl<T: Scalar> Model<T> {
    pub fn new(layers: Vec<Layer<T>>, num_classes: usize) -> Self {
        Self {
            layers,
            num_classes,
        }
    }

    /// Builds and Xavier-initialises the network for `arch` on inputs of
    /// shape `(height, width, channels)`. Conv and hidden FC layers are
    /// followed by ReLU; flattening before the first FC is implicit.
    pub fn from_architecture<R: Rng + ?Sized>(
        arch: &Architecture,
        input: (usize, usize, usize),
        rng: &mut R,
    ) -> Result<Self, CnnError> {
        let (mut h, mut w, mut c) = input;
        let mut flat: Option<usize> = None;
        let mut layers = Vec::new();
        let last = arch.layers().len() - 1;
        for (i, spec) in arch.layers().iter().enumerate() {
            match *spec {
                LayerSpec::Conv {
                    filter_size,
                    feature_maps,
                    stride,
                } => {
                    if flat.is_some() {
                        return Err(CnnError::Shape("conv after a fully-connected layer".into()));
                    }
                    let conv = Conv2d::xavier(
                        filter_size.into(),
                        stride.into(),
                        c,
                        feature_maps.into(),
                        rng,
                    );
                    (h, w) = conv.output_hw(h, w);
                    c = feature_maps.into();
                    layers.push(Layer::Conv(conv));
                    layers.push(Layer::Relu);
                }
                LayerSpec::Pool {
                    kernel,
                    stride,
                    pool_type,
                    ..
                } => {
                    if flat.is_some() {
                        return Err(CnnError::Shape("pool after a fully-connected layer".into()));
                    }
                    let pool = Pool2d::new(kernel.into(), stride.into(), pool_type);
                    (h, w) = pool.output_hw(h, w);
                    layers.push(Layer::Pool(pool));
                }
                LayerSpec::FullyConnected { neurons } => {
                    let inputs = flat.unwrap_or(h * w * c);
                    let outputs = if i == last {
                        arch.num_classes()
                    } else {
                        neurons.into()
                    };
                    layers.push(Layer::Dense(Dense::xavier(inputs, outputs, rng)));
                    if i != last {
                        layers.push(Layer::Relu);
                    }
                    flat = Some(outputs);
                }
                LayerSpec::Disabled { .. } => {}
            }
        }
        Ok(Self::new(layers, arch.num_classes()))
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.params())
            .map(|p| p.len())
            .sum()
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>, CnnError> {
        let mut x = input.clone();
        for layer in &self.layers {
            x = layer.forward(&x)?;
        }
        self.check_logits(&x)?;
        Ok(x)
    }

    fn check_logits(&self, logits: &Tensor<T>) -> Result<(), CnnError> {
        if logits.shape().len() != 2 || logits.shape()[1] != self.num_classes {
            return Err(CnnError::Shape(format!(
                "model ends with shape {:?}, expected (batch, {})",
                logits.shape(),
                self.num_classes
            )));
        }
        Ok(())
    }

    /// Argmax class per example.
    pub fn predict(&self, input: &Tensor<T>) -> Result<Vec<usize>, CnnError> {
        let logits = self.forward(input)?;
        Ok(logits
            .data()
            .chunks(self.num_classes)
            .map(|row| {
                let mut best = 0;
                for (j, v) in row.iter().enumerate() {
                    if *v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect())
    }

    /// Mean loss on the batch; fills every parameter's gradient and returns
    /// the gradient with respect to the input.
    pub fn loss_and_gradients(
        &mut self,
        input: &Tensor<T>,
        labels: &[usize],
    ) -> Result<(f64, Tensor<T>), CnnError> {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.clone());
        for layer in &self.layers {
            let next = layer.forward(activations.last().expect("non-empty"))?;
            activations.push(next);
        }
        let logits = activations.pop().expect("non-empty");
        self.check_logits(&logits)?;
        let (loss, mut grad) = softmax_cross_entropy(&logits, labels)?;
        for (layer, act) in self.layers.iter_mut().zip(&activations).rev() {
            grad = layer.backward(act, &grad)?;
        }
        Ok((loss, grad))
    }

    /// One momentum-SGD step on the batch; returns the pre-step loss.
    pub fn backward_and_step(
        &mut self,
        input: &Tensor<T>,
        labels: &[usize],
        learning_rate: f64,
        momentum: f64,
    ) -> Result<f64, CnnError> {
        let (loss, _) = self.loss_and_gradients(input, labels)?;
        let (lr, mu) = (T::from_f64(learning_rate), T::from_f64(momentum));
        for layer in &mut self.layers {
            for param in layer.params_mut() {
                param.sgd_step(lr, mu);
            }
        }
        Ok(loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{LayerSpec, PoolType};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn arch() -> Architecture {
        Architecture::new(
            vec![
                LayerSpec::Conv {
                    filter_size: 3,
                    feature_maps: 4,
                    stride: 2,
                },
                LayerSpec::Pool {
                    kernel: 2,
                    stride: 2,
                    pool_type: PoolType::Max,
                    placeholder: 0,
                },
                LayerSpec::FullyConnected { neurons: 6 },
                LayerSpec::FullyConnected { neurons: 3 },
            ],
            3,
        )
        .unwrap()
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let logits =
            Tensor::<f64>::new(vec![2, 3], vec![1.0, 2.0, 3.0, -500.0, 0.0, 800.0]).unwrap();
        let p = softmax(&logits).unwrap();
        for row in p.data().chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn confident_correct_prediction_has_vanishing_loss() {
        let logits = Tensor::<f64>::new(vec![1, 2], vec![40.0, 0.0]).unwrap();
        let (loss, _) = softmax_cross_entropy(&logits, &[0]).unwrap();
        assert!(loss < 1e-15);
        assert!(matches!(
            softmax_cross_entropy(&logits, &[2]),
            Err(CnnError::Label { .. })
        ));
    }

    #[test]
    fn architecture_builds_to_expected_layer_stack() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = Model::<f64>::from_architecture(&arch(), (8, 8, 1), &mut rng).unwrap();
        // conv relu pool dense relu dense
        assert_eq!(model.layers().len(), 6);
        match &model.layers()[3] {
            Layer::Dense(d) => assert_eq!(d.inputs(), 2 * 2 * 4),
            other => panic!("unexpected {other:?}"),
        }
        let out = model.forward(&Tensor::zeros(vec![5, 8, 8, 1])).unwrap();
        assert_eq!(out.shape(), &[5, 3]);
    }

    #[test]
    fn zero_learning_rate_leaves_model_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut model = Model::<f64>::from_architecture(&arch(), (6, 6, 1), &mut rng).unwrap();
        let before = model.clone();
        let x = Tensor::from_f64(vec![2, 6, 6, 1], &[0.5; 72]).unwrap();
        let loss = model.backward_and_step(&x, &[0, 2], 0.0, 0.9).unwrap();
        assert!(loss.is_finite());
        for (a, b) in model.layers().iter().zip(before.layers()) {
            for (pa, pb) in a.params().iter().zip(b.params()) {
                assert_eq!(pa.value, pb.value);
            }
        }
    }

    #[test]
    fn repeated_steps_drive_single_example_loss_down() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut model = Model::<f64>::new(vec![Layer::Dense(Dense::xavier(4, 2, &mut rng))], 2);
        let x = Tensor::from_f64(vec![1, 4], &[1.0, -0.5, 0.25, 2.0]).unwrap();
        let mut prev = f64::INFINITY;
        let mut loss = prev;
        for _ in 0..200 {
            loss = model.backward_and_step(&x, &[1], 0.1, 0.0).unwrap();
            assert!(loss <= prev);
            prev = loss;
        }
        assert!(loss < 1e-2, "loss {loss}");
    }

    #[test]
    fn identical_seeds_give_bitwise_identical_training() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let mut model = Model::<f64>::from_architecture(&arch(), (6, 6, 1), &mut rng).unwrap();
            let data: Vec<f64> = (0..108).map(|i| ((i * 7) % 11) as f64 / 11.0).collect();
            let x = Tensor::from_f64(vec![3, 6, 6, 1], &data).unwrap();
            (0..5)
                .map(|_| {
                    model
                        .backward_and_step(&x, &[0, 1, 2], 0.05, 0.9)
                        .unwrap()
                        .to_bits()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
