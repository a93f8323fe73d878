//! Dense n-dimensional array with an attached gradient slot.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major dense tensor. The universal value type of the autodiff engine:
/// images, feature maps, disparity maps, kernels and scalar losses are all
/// `Tensor`s.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<F: Scalar> {
    shape: Vec<usize>,
    data: Vec<F>,
    grad: Option<Vec<F>>,
    requires_grad: bool,
}

impl<F: Scalar> Tensor<F> {
    /// Builds a tensor from raw row-major data. Fails if the element count
    /// does not match the shape or any value is non-finite.
    pub fn from_vec(shape: &[usize], data: Vec<F>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() || shape.iter().any(|&d| d == 0) {
            return Err(Error::Config(format!(
                "shape {:?} does not describe {} elements",
                shape,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("tensor holds NaN/Inf".into()));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
            grad: None,
            requires_grad: false,
        })
    }

    /// Like [`Tensor::from_vec`] but skips the finiteness scan. For internal
    /// op outputs that are checked separately.
    pub(crate) fn from_vec_unchecked(shape: &[usize], data: Vec<F>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            shape: shape.to_vec(),
            data,
            grad: None,
            requires_grad: false,
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![F::zero(); numel],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn full(shape: &[usize], value: F) -> Self {
        let numel: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; numel],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn scalar(value: F) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    pub fn item(&self) -> F {
        debug_assert!(self.is_scalar());
        self.data[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, on: bool) {
        self.requires_grad = on;
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn grad(&self) -> Option<&[F]> {
        self.grad.as_deref()
    }

    /// Adds `delta` into the gradient slot, allocating it on first use.
    pub fn accumulate_grad(&mut self, delta: &[F]) {
        debug_assert_eq!(delta.len(), self.data.len());
        let grad = self
            .grad
            .get_or_insert_with(|| vec![F::zero(); self.data.len()]);
        for (g, d) in grad.iter_mut().zip(delta) {
            *g = *g + *d;
        }
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = F::zero());
        }
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    /// Errors with `context` if any stored value is NaN or infinite.
    pub fn check_finite(&self, context: &str) -> Result<()> {
        if self.data.iter().any(|v| !v.is_finite()) {
            Err(Error::Numeric(format!("non-finite values in {context}")))
        } else {
            Ok(())
        }
    }

    /// Interprets the shape as `[C,H,W]` or `[H,W]` (C = 1).
    pub fn spatial_dims(&self) -> Result<(usize, usize, usize)> {
        match self.shape.as_slice() {
            [h, w] => Ok((1, *h, *w)),
            [c, h, w] => Ok((*c, *h, *w)),
            other => Err(Error::Config(format!(
                "expected a [H,W] or [C,H,W] tensor, got shape {other:?}"
            ))),
        }
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Tensor<F> {
        Tensor::from_vec_unchecked(&self.shape, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Converts element type (used to move data between f32 and f64 builds).
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor::from_vec_unchecked(
            &self.shape,
            self.data.iter().map(|v| T::from_f64(v.to_f64_lossy())).collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_data_mismatch_is_config_error() {
        let r = Tensor::<f64>::from_vec(&[2, 3], vec![0.0; 5]);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn non_finite_is_numeric_error() {
        let r = Tensor::<f64>::from_vec(&[2], vec![1.0, f64::NAN]);
        assert!(matches!(r, Err(Error::Numeric(_))));
    }

    #[test]
    fn grad_accumulates() {
        let mut t = Tensor::<f64>::zeros(&[3]);
        t.accumulate_grad(&[1.0, 2.0, 3.0]);
        t.accumulate_grad(&[1.0, 2.0, 3.0]);
        assert_eq!(t.grad().unwrap(), &[2.0, 4.0, 6.0]);
        t.zero_grad();
        assert_eq!(t.grad().unwrap(), &[0.0, 0.0, 0.0]);
    }
}
