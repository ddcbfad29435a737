use super::{CnnError, Scalar};

/// Dense row-major batch, either `(batch, height, width, channels)` or
/// `(batch, features)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self, CnnError> {
        if !(shape.len() == 2 || shape.len() == 4) {
            return Err(CnnError::Shape(format!(
                "tensors are 2-D or 4-D, got shape {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(CnnError::Shape(format!(
                "shape {shape:?} needs {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self::new(shape, vec![T::zero(); len]).expect("zeros shape")
    }

    pub fn from_f64(shape: Vec<usize>, data: &[f64]) -> Result<Self, CnnError> {
        Self::new(shape, data.iter().map(|&x| T::from_f64(x)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    /// Elements per example.
    pub fn features(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn dims4(&self) -> Result<(usize, usize, usize, usize), CnnError> {
        match *self.shape.as_slice() {
            [b, h, w, c] => Ok((b, h, w, c)),
            _ => Err(CnnError::Shape(format!(
                "expected (batch, height, width, channels), got {:?}",
                self.shape
            ))),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}
