//! Central finite differences for verifying analytic gradients, and the
//! standard per-layer and whole-model checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Conv2d, Dense, Layer, Model, Pool2d, Tensor};
use crate::codec::PoolType;

/// Default perturbation for 64-bit checks.
pub const STEP: f64 = 1e-5;
/// Relative tolerance of the standard checks.
pub const REL_TOL: f64 = 1e-4;
/// Differences below this are accepted regardless of relative error, since
/// relative error is meaningless for near-zero gradients.
pub const ABS_FLOOR: f64 = 1e-8;

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate of `x`.
pub fn central_difference(x: &mut [f64], step: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + step;
            let plus = f(x);
            x[i] = orig - step;
            let minus = f(x);
            x[i] = orig;
            (plus - minus) / (2.0 * step)
        })
        .collect()
}

/// Pass when `|a - n| <= abs_floor` or `|a - n| / max(|a|, |n|) <= rel_tol`.
pub fn gradients_agree(analytic: f64, numeric: f64, rel_tol: f64, abs_floor: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= abs_floor || diff / analytic.abs().max(numeric.abs()) <= rel_tol
}

/// Largest relative error over coordinates that fail the absolute floor,
/// or 0 when all pass it.
pub fn worst_relative_error(analytic: &[f64], numeric: &[f64], abs_floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| {
            let diff = (a - n).abs();
            if diff <= abs_floor {
                0.0
            } else {
                diff / a.abs().max(n.abs())
            }
        })
        .fold(0.0, f64::max)
}

/// Outcome of one analytic-versus-numeric comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: String,
    /// Coordinates compared (inputs and parameters).
    pub checked: usize,
    /// Coordinates outside both tolerances.
    pub failures: usize,
    pub worst_relative: f64,
}

impl CheckReport {
    fn new(name: &str, analytic: &[f64], numeric: &[f64]) -> Self {
        Self {
            name: name.to_string(),
            checked: analytic.len(),
            failures: analytic
                .iter()
                .zip(numeric)
                .filter(|(a, n)| !gradients_agree(**a, **n, REL_TOL, ABS_FLOOR))
                .count(),
            worst_relative: worst_relative_error(analytic, numeric, ABS_FLOOR),
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Checks one layer on the scalar `L = sum(layer(x) * r)` for a fixed random
/// `r`: gradients with respect to the input and every parameter.
pub fn check_layer(
    name: &str,
    layer: &mut Layer<f64>,
    input_shape: &[usize],
    seed: u64,
) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = random_vec(&mut rng, input_shape.iter().product());
    let input = Tensor::new(input_shape.to_vec(), x.clone()).expect("shape");
    let out = layer.forward(&input).expect("forward");
    let r =
        Tensor::new(out.shape().to_vec(), random_vec(&mut rng, out.data().len())).expect("shape");
    let loss = |layer: &Layer<f64>, x: &[f64]| -> f64 {
        let t = Tensor::new(input_shape.to_vec(), x.to_vec()).expect("shape");
        let y = layer.forward(&t).expect("forward");
        y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
    };

    let grad_input = layer.backward(&input, &r).expect("backward");
    let mut analytic = grad_input.data().to_vec();
    let mut numeric = central_difference(&mut x, STEP, |x| loss(layer, x));
    for p in 0..layer.params().len() {
        analytic.extend(layer.params()[p].grad.iter().copied());
        let mut values = layer.params()[p].value.clone();
        let mut probe = layer.clone();
        numeric.extend(central_difference(&mut values, STEP, |v| {
            probe.params_mut()[p].value.copy_from_slice(v);
            loss(&probe, &x)
        }));
    }
    CheckReport::new(name, &analytic, &numeric)
}

/// Checks a whole model on its mean softmax cross-entropy.
pub fn check_model(
    name: &str,
    model: &mut Model<f64>,
    input_shape: &[usize],
    labels: &[usize],
    seed: u64,
) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = random_vec(&mut rng, input_shape.iter().product());
    let input = Tensor::new(input_shape.to_vec(), x.clone()).expect("shape");
    let loss = |m: &Model<f64>, x: &[f64]| -> f64 {
        let t = Tensor::new(input_shape.to_vec(), x.to_vec()).expect("shape");
        let logits = m.forward(&t).expect("forward");
        super::softmax_cross_entropy(&logits, labels)
            .expect("loss")
            .0
    };

    let (_, grad_input) = model.loss_and_gradients(&input, labels).expect("backward");
    let mut analytic = grad_input.data().to_vec();
    let mut numeric = central_difference(&mut x, STEP, |x| loss(model, x));
    for l in 0..model.layers().len() {
        for p in 0..model.layers()[l].params().len() {
            analytic.extend(model.layers()[l].params()[p].grad.iter().copied());
            let mut values = model.layers()[l].params()[p].value.clone();
            let mut probe = model.clone();
            numeric.extend(central_difference(&mut values, STEP, |v| {
                probe.layers_mut()[l].params_mut()[p]
                    .value
                    .copy_from_slice(v);
                loss(&probe, &x)
            }));
        }
    }
    CheckReport::new(name, &analytic, &numeric)
}

/// Conv, max pool, average pool, fully-connected, and a composed
/// conv-pool-FC-FC model, all in 64-bit.
pub fn standard_suite(seed: u64) -> Vec<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut conv = Layer::Conv(Conv2d::xavier(3, 2, 2, 3, &mut rng));
    let mut max_pool = Layer::Pool(Pool2d::new(3, 2, PoolType::Max));
    let mut avg_pool = Layer::Pool(Pool2d::new(2, 2, PoolType::Average));
    let mut dense = Layer::Dense(Dense::xavier(12, 5, &mut rng));
    let mut model = Model::new(
        vec![
            Layer::Conv(Conv2d::xavier(2, 1, 1, 3, &mut rng)),
            Layer::Relu,
            Layer::Pool(Pool2d::new(2, 2, PoolType::Max)),
            Layer::Dense(Dense::xavier(3 * 3 * 3, 6, &mut rng)),
            Layer::Relu,
            Layer::Dense(Dense::xavier(6, 3, &mut rng)),
        ],
        3,
    );
    vec![
        check_layer("conv", &mut conv, &[2, 5, 5, 2], seed ^ 1),
        check_layer("max pool", &mut max_pool, &[2, 5, 5, 2], seed ^ 2),
        check_layer("average pool", &mut avg_pool, &[2, 5, 5, 2], seed ^ 3),
        check_layer("fully connected", &mut dense, &[3, 12], seed ^ 4),
        check_model(
            "conv-pool-fc-fc model",
            &mut model,
            &[3, 6, 6, 1],
            &[0, 2, 1],
            seed ^ 5,
        ),
    ]
}
