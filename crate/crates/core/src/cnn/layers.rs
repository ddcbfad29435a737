use rand::Rng;

use super::scalar::matmul;
use super::{CnnError, Scalar, Tensor};
use crate::codec::PoolType;

/// A trainable buffer with its gradient and momentum state.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub value: Vec<T>,
    pub grad: Vec<T>,
    velocity: Vec<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(value: Vec<T>) -> Self {
        let n = value.len();
        Self {
            value,
            grad: vec![T::zero(); n],
            velocity: vec![T::zero(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    /// Momentum SGD: `v = momentum * v - lr * g; value += v`.
    pub fn sgd_step(&mut self, lr: T, momentum: T) {
        for ((x, v), g) in self
            .value
            .iter_mut()
            .zip(self.velocity.iter_mut())
            .zip(&self.grad)
        {
            *v = momentum * *v - lr * *g;
            *x = *x + *v;
        }
    }
}

/// Xavier/Glorot uniform sample on `[-sqrt(6/(fan_in+fan_out)), +...]`.
pub fn xavier_uniform<T: Scalar, R: Rng + ?Sized>(
    len: usize,
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Vec<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..len)
        .map(|_| T::from_f64(rng.gen_range(-limit..=limit)))
        .collect()
}

/// Output length and leading pad for same-style windowing:
/// `out = ceil(input / stride)`, padding split with the extra cell at the end.
pub fn same_padding(input: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = input.div_ceil(stride);
    let needed = ((out - 1) * stride + kernel).saturating_sub(input);
    (out, needed / 2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    filter: usize,
    stride: usize,
    in_channels: usize,
    out_channels: usize,
    /// `(filter, filter, in_channels, out_channels)` row-major.
    pub weights: Param<T>,
    pub bias: Param<T>,
}

struct ConvGeometry {
    h: usize,
    w: usize,
    out_h: usize,
    out_w: usize,
    pad_y: usize,
    pad_x: usize,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(filter: usize, stride: usize, in_channels: usize, out_channels: usize) -> Self {
        let k = filter * filter * in_channels;
        Self {
            filter,
            stride,
            in_channels,
            out_channels,
            weights: Param::new(vec![T::zero(); k * out_channels]),
            bias: Param::new(vec![T::zero(); out_channels]),
        }
    }

    pub fn xavier<R: Rng + ?Sized>(
        filter: usize,
        stride: usize,
        in_channels: usize,
        out_channels: usize,
        rng: &mut R,
    ) -> Self {
        let mut conv = Self::new(filter, stride, in_channels, out_channels);
        let area = filter * filter;
        conv.weights.value = xavier_uniform(
            conv.weights.len(),
            area * in_channels,
            area * out_channels,
            rng,
        );
        conv
    }

    pub fn filter(&self) -> usize {
        self.filter
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            same_padding(h, self.filter, self.stride).0,
            same_padding(w, self.filter, self.stride).0,
        )
    }

    fn patch_len(&self) -> usize {
        self.filter * self.filter * self.in_channels
    }

    fn geometry(&self, input: &Tensor<T>) -> Result<(usize, ConvGeometry), CnnError> {
        let (b, h, w, c) = input.dims4()?;
        if c != self.in_channels {
            return Err(CnnError::Shape(format!(
                "conv expects {} input channels, got {c}",
                self.in_channels
            )));
        }
        let (out_h, pad_y) = same_padding(h, self.filter, self.stride);
        let (out_w, pad_x) = same_padding(w, self.filter, self.stride);
        Ok((
            b,
            ConvGeometry {
                h,
                w,
                out_h,
                out_w,
                pad_y,
                pad_x,
            },
        ))
    }

    /// Visits `(patch row, patch column offset, image offset)` for every
    /// in-bounds tap; each hit covers `in_channels` contiguous values.
    fn for_each_tap(&self, g: &ConvGeometry, mut f: impl FnMut(usize, usize, usize)) {
        let c = self.in_channels;
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let row = oy * g.out_w + ox;
                for ky in 0..self.filter {
                    let iy = (oy * self.stride + ky) as isize - g.pad_y as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    for kx in 0..self.filter {
                        let ix = (ox * self.stride + kx) as isize - g.pad_x as isize;
                        if ix < 0 || ix >= g.w as isize {
                            continue;
                        }
                        let col = (ky * self.filter + kx) * c;
                        let src = (iy as usize * g.w + ix as usize) * c;
                        f(row, col, src);
                    }
                }
            }
        }
    }

    fn im2col(&self, g: &ConvGeometry, image: &[T], cols: &mut [T]) {
        let (c, k) = (self.in_channels, self.patch_len());
        cols.fill(T::zero());
        self.for_each_tap(g, |row, col, src| {
            cols[row * k + col..row * k + col + c].copy_from_slice(&image[src..src + c]);
        });
    }

    fn col2im(&self, g: &ConvGeometry, cols: &[T], image: &mut [T]) {
        let (c, k) = (self.in_channels, self.patch_len());
        self.for_each_tap(g, |row, col, src| {
            for i in 0..c {
                image[src + i] = image[src + i] + cols[row * k + col + i];
            }
        });
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>, CnnError> {
        let (b, g) = self.geometry(input)?;
        let (k, n) = (self.patch_len(), self.out_channels);
        let p = g.out_h * g.out_w;
        let in_len = g.h * g.w * self.in_channels;
        let mut cols = vec![T::zero(); p * k];
        let mut out = vec![T::zero(); b * p * n];
        for (image, out) in input.data().chunks(in_len).zip(out.chunks_mut(p * n)) {
            self.im2col(&g, image, &mut cols);
            matmul(
                p,
                k,
                n,
                &cols,
                false,
                &self.weights.value,
                false,
                out,
                false,
            );
            for row in out.chunks_mut(n) {
                for (y, bias) in row.iter_mut().zip(&self.bias.value) {
                    *y = *y + *bias;
                }
            }
        }
        Tensor::new(vec![b, g.out_h, g.out_w, n], out)
    }

    /// Writes parameter gradients and returns the input gradient.
    pub fn backward(
        &mut self,
        input: &Tensor<T>,
        grad_output: &Tensor<T>,
    ) -> Result<Tensor<T>, CnnError> {
        let (b, g) = self.geometry(input)?;
        let (k, n) = (self.patch_len(), self.out_channels);
        let p = g.out_h * g.out_w;
        if grad_output.shape() != [b, g.out_h, g.out_w, n] {
            return Err(CnnError::Shape(format!(
                "conv output gradient has shape {:?}",
                grad_output.shape()
            )));
        }
        let in_len = g.h * g.w * self.in_channels;
        let mut cols = vec![T::zero(); p * k];
        let mut grad_cols = vec![T::zero(); p * k];
        let mut grad_input = vec![T::zero(); input.data().len()];
        self.weights.grad.fill(T::zero());
        self.bias.grad.fill(T::zero());
        for ((image, dout), dimage) in input
            .data()
            .chunks(in_len)
            .zip(grad_output.data().chunks(p * n))
            .zip(grad_input.chunks_mut(in_len))
        {
            self.im2col(&g, image, &mut cols);
            matmul(
                k,
                p,
                n,
                &cols,
                true,
                dout,
                false,
                &mut self.weights.grad,
                true,
            );
            for row in dout.chunks(n) {
                for (gb, d) in self.bias.grad.iter_mut().zip(row) {
                    *gb = *gb + *d;
                }
            }
            matmul(
                p,
                n,
                k,
                dout,
                false,
                &self.weights.value,
                true,
                &mut grad_cols,
                false,
            );
            self.col2im(&g, &grad_cols, dimage);
        }
        Tensor::new(input.shape().to_vec(), grad_input)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pool2d {
    pub kernel: usize,
    pub stride: usize,
    pub pool_type: PoolType,
}

impl Pool2d {
    pub fn new(kernel: usize, stride: usize, pool_type: PoolType) -> Self {
        Self {
            kernel,
            stride,
            pool_type,
        }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            same_padding(h, self.kernel, self.stride).0,
            same_padding(w, self.kernel, self.stride).0,
        )
    }

    /// Calls `f(out_index, in_indices)` for every output cell; `in_indices`
    /// lists the in-bounds window cells in row-major order.
    fn for_each_window(
        &self,
        shape: (usize, usize, usize, usize),
        mut f: impl FnMut(usize, &[usize]),
    ) -> (usize, usize) {
        let (b, h, w, c) = shape;
        let (out_h, pad_y) = same_padding(h, self.kernel, self.stride);
        let (out_w, pad_x) = same_padding(w, self.kernel, self.stride);
        let mut window = Vec::with_capacity(self.kernel * self.kernel);
        for n in 0..b {
            for oy in 0..out_h {
                let y0 = (oy * self.stride) as isize - pad_y as isize;
                for ox in 0..out_w {
                    let x0 = (ox * self.stride) as isize - pad_x as isize;
                    for ch in 0..c {
                        window.clear();
                        for iy in y0.max(0)..(y0 + self.kernel as isize).min(h as isize) {
                            for ix in x0.max(0)..(x0 + self.kernel as isize).min(w as isize) {
                                window.push(((n * h + iy as usize) * w + ix as usize) * c + ch);
                            }
                        }
                        f(((n * out_h + oy) * out_w + ox) * c + ch, &window);
                    }
                }
            }
        }
        (out_h, out_w)
    }

    pub fn forward<T: Scalar>(&self, input: &Tensor<T>) -> Result<Tensor<T>, CnnError> {
        let dims = input.dims4()?;
        let (b, h, w, c) = dims;
        let (oh, ow) = self.output_hw(h, w);
        let x = input.data();
        let mut out = vec![T::zero(); b * oh * ow * c];
        self.for_each_window(dims, |o, window| {
            out[o] = match self.pool_type {
                PoolType::Max => window.iter().map(|&i| x[i]).fold(T::neg_infinity(), T::max),
                PoolType::Average => {
                    window.iter().map(|&i| x[i]).sum::<T>() / T::from_f64(window.len() as f64)
                }
            };
        });
        Tensor::new(vec![b, oh, ow, c], out)
    }

    pub fn backward<T: Scalar>(
        &self,
        input: &Tensor<T>,
        grad_output: &Tensor<T>,
    ) -> Result<Tensor<T>, CnnError> {
        let dims = input.dims4()?;
        let (b, h, w, c) = dims;
        let (oh, ow) = self.output_hw(h, w);
        if grad_output.shape() != [b, oh, ow, c] {
            return Err(CnnError::Shape(format!(
                "pool output gradient has shape {:?}",
                grad_output.shape()
            )));
        }
        let x = input.data();
        let dy = grad_output.data();
        let mut dx = vec![T::zero(); x.len()];
        self.for_each_window(dims, |o, window| match self.pool_type {
            PoolType::Max => {
                // first maximum wins, matching the forward fold
                let mut arg = window[0];
                for &i in &window[1..] {
                    if x[i] > x[arg] {
                        arg = i;
                    }
                }
                dx[arg] = dx[arg] + dy[o];
            }
            PoolType::Average => {
                let share = dy[o] / T::from_f64(window.len() as f64);
                for &i in window {
                    dx[i] = dx[i] + share;
                }
            }
        });
        Tensor::new(input.shape().to_vec(), dx)
    }
}

/// Affine layer over flattened examples.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    inputs: usize,
    outputs: usize,
    /// `(inputs, outputs)` row-major.
    pub weights: Param<T>,
    pub bias: Param<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: Param::new(vec![T::zero(); inputs * outputs]),
            bias: Param::new(vec![T::zero(); outputs]),
        }
    }

    pub fn xavier<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let mut dense = Self::new(inputs, outputs);
        dense.weights.value = xavier_uniform(inputs * outputs, inputs, outputs, rng);
        dense
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<(), CnnError> {
        if input.features() != self.inputs {
            return Err(CnnError::Shape(format!(
                "fully-connected layer expects {} features, got {}",
                self.inputs,
                input.features()
            )));
        }
        Ok(())
    }

    /// Any input shape is flattened to `(batch, features)`.
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>, CnnError> {
        self.check_input(input)?;
        let b = input.batch();
        let mut out = vec![T::zero(); b * self.outputs];
        for row in out.chunks_mut(self.outputs) {
            row.copy_from_slice(&self.bias.value);
        }
        matmul(
            b,
            self.inputs,
            self.outputs,
            input.data(),
            false,
            &self.weights.value,
            false,
            &mut out,
            true,
        );
        Tensor::new(vec![b, self.outputs], out)
    }

    pub fn backward(
        &mut self,
        input: &Tensor<T>,
        grad_output: &Tensor<T>,
    ) -> Result<Tensor<T>, CnnError> {
        self.check_input(input)?;
        let b = input.batch();
        if grad_output.shape() != [b, self.outputs] {
            return Err(CnnError::Shape(format!(
                "fully-connected output gradient has shape {:?}",
                grad_output.shape()
            )));
        }
        let dy = grad_output.data();
        matmul(
            self.inputs,
            b,
            self.outputs,
            input.data(),
            true,
            dy,
            false,
            &mut self.weights.grad,
            false,
        );
        self.bias.grad.fill(T::zero());
        for row in dy.chunks(self.outputs) {
            for (g, d) in self.bias.grad.iter_mut().zip(row) {
                *g = *g + *d;
            }
        }
        let mut dx = vec![T::zero(); b * self.inputs];
        matmul(
            b,
            self.outputs,
            self.inputs,
            dy,
            false,
            &self.weights.value,
            true,
            &mut dx,
            false,
        );
        Tensor::new(input.shape().to_vec(), dx)
    }
}

pub fn relu_forward<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let data = input.data().iter().map(|&x| x.max(T::zero())).collect();
    Tensor::new(input.shape().to_vec(), data).expect("same shape")
}

pub fn relu_backward<T: Scalar>(input: &Tensor<T>, grad_output: &Tensor<T>) -> Tensor<T> {
    let data = input
        .data()
        .iter()
        .zip(grad_output.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(input.shape().to_vec(), data).expect("same shape")
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv(Conv2d<T>),
    Pool(Pool2d),
    Dense(Dense<T>),
    Relu,
}

impl<T: Scalar> Layer<T> {
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>, CnnError> {
        match self {
            Layer::Conv(l) => l.forward(input),
            Layer::Pool(l) => l.forward(input),
            Layer::Dense(l) => l.forward(input),
            Layer::Relu => Ok(relu_forward(input)),
        }
    }

    pub fn backward(
        &mut self,
        input: &Tensor<T>,
        grad_output: &Tensor<T>,
    ) -> Result<Tensor<T>, CnnError> {
        match self {
            Layer::Conv(l) => l.backward(input, grad_output),
            Layer::Pool(l) => l.backward(input, grad_output),
            Layer::Dense(l) => l.backward(input, grad_output),
            Layer::Relu => Ok(relu_backward(input, grad_output)),
        }
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        match self {
            Layer::Conv(l) => vec![&l.weights, &l.bias],
            Layer::Dense(l) => vec![&l.weights, &l.bias],
            Layer::Pool(_) | Layer::Relu => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        match self {
            Layer::Conv(l) => vec![&mut l.weights, &mut l.bias],
            Layer::Dense(l) => vec![&mut l.weights, &mut l.bias],
            Layer::Pool(_) | Layer::Relu => Vec::new(),
        }
    }
}
