//! Dense N-dimensional array of 64-bit reals.
//!
//! Feature maps use T×Y×X×C layout with the channel axis contiguous, which
//! keeps the inner convolution loops running over adjacent memory.

use super::KernelError;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Tensor {
        let len = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; len] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Tensor, KernelError> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(KernelError::ShapeMismatch(format!(
                "tensor of shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Tensor {
        let mut t = Tensor::zeros(shape);
        let mut idx = vec![0usize; shape.len()];
        for flat in 0..t.data.len() {
            t.data[flat] = f(&idx);
            for axis in (0..shape.len()).rev() {
                idx[axis] += 1;
                if idx[axis] < shape[axis] {
                    break;
                }
                idx[axis] = 0;
            }
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut flat = 0;
        for (axis, &i) in idx.iter().enumerate() {
            debug_assert!(i < self.shape[axis], "index {idx:?} out of shape {:?}", self.shape);
            flat = flat * self.shape[axis] + i;
        }
        flat
    }

    pub fn at(&self, idx: &[usize]) -> f64 {
        self.data[self.flat_index(idx)]
    }

    pub fn at_mut(&mut self, idx: &[usize]) -> &mut f64 {
        let flat = self.flat_index(idx);
        &mut self.data[flat]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute difference to another tensor of the same shape.
    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff on mismatched shapes");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Expect a 4-D feature map and return (T, Y, X, C).
pub fn feature_dims(t: &Tensor) -> Result<(usize, usize, usize, usize), KernelError> {
    match *t.shape() {
        [a, b, c, d] => Ok((a, b, c, d)),
        ref s => Err(KernelError::ShapeMismatch(format!(
            "expected a T*Y*X*C feature map, got shape {s:?}"
        ))),
    }
}
