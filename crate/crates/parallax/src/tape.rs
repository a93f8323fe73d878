//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Operations append nodes in execution order, so the tape is always
//! topologically sorted: one backward sweep visits each node exactly once in
//! reverse. Tensors are immutable once written by their producing op; the
//! tape is single-owner and a forward/backward pass runs on one thread.
//! Data parallelism is expressed as gradient accumulation across independent
//! tapes.

use crate::error::{Error, Result};
use crate::ops::lrn::LrnParams;
use crate::ops::{conv, elem, lrn, pool, upsample, warp, CropPad, Pad2};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VarId(usize);

enum Op<F: Scalar> {
    Leaf,
    Add(VarId, VarId),
    Sub(VarId, VarId),
    Mul(VarId, VarId),
    Scale(VarId, F),
    Relu(VarId),
    SumAll(VarId),
    CropPad(VarId, CropPad),
    Conv2d {
        input: VarId,
        kernel: VarId,
        bias: Option<VarId>,
        stride: (usize, usize),
        pad: Pad2,
    },
    Upsample {
        input: VarId,
        kernel: VarId,
        factor: usize,
    },
    MaxPool {
        input: VarId,
        argmax: Vec<u32>,
    },
    Lrn {
        input: VarId,
        params: LrnParams,
    },
    Warp {
        right: VarId,
        disparity: VarId,
    },
}

struct Node<F: Scalar> {
    value: Tensor<F>,
    op: Op<F>,
    needs_grad: bool,
}

/// Recording of one forward pass.
pub struct Tape<F: Scalar> {
    nodes: Vec<Node<F>>,
}

impl<F: Scalar> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Tape<F> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Inserts a tensor as a leaf. Its `requires_grad` flag decides whether
    /// backward fills its gradient slot.
    pub fn leaf(&mut self, tensor: Tensor<F>) -> VarId {
        let needs = tensor.requires_grad();
        self.push(tensor, Op::Leaf, needs)
    }

    /// Inserts a non-differentiable constant.
    pub fn constant(&mut self, tensor: Tensor<F>) -> VarId {
        self.push(tensor, Op::Leaf, false)
    }

    pub fn value(&self, id: VarId) -> &Tensor<F> {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: VarId) -> Option<&[F]> {
        self.nodes[id.0].value.grad()
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.value.zero_grad();
        }
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>, needs_grad: bool) -> VarId {
        let mut value = value;
        value.set_requires_grad(needs_grad);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        VarId(self.nodes.len() - 1)
    }

    fn needs(&self, id: VarId) -> bool {
        self.nodes[id.0].needs_grad
    }

    fn checked(&mut self, value: Tensor<F>, op: Op<F>, needs: bool, what: &str) -> Result<VarId> {
        value.check_finite(what)?;
        Ok(self.push(value, op, needs))
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let v = elem::add(self.value(a), self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        self.checked(v, Op::Add(a, b), needs, "add output")
    }

    pub fn sub(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let v = elem::sub(self.value(a), self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        self.checked(v, Op::Sub(a, b), needs, "sub output")
    }

    pub fn mul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let v = elem::mul(self.value(a), self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        self.checked(v, Op::Mul(a, b), needs, "mul output")
    }

    pub fn scale(&mut self, a: VarId, factor: F) -> Result<VarId> {
        let v = elem::scale(self.value(a), factor);
        let needs = self.needs(a);
        self.checked(v, Op::Scale(a, factor), needs, "scale output")
    }

    pub fn relu(&mut self, a: VarId) -> Result<VarId> {
        let v = elem::relu(self.value(a));
        let needs = self.needs(a);
        self.checked(v, Op::Relu(a), needs, "relu output")
    }

    pub fn sum_all(&mut self, a: VarId) -> Result<VarId> {
        let v = elem::sum_all(self.value(a));
        let needs = self.needs(a);
        self.checked(v, Op::SumAll(a), needs, "sum output")
    }

    pub fn crop_pad(&mut self, a: VarId, cp: CropPad) -> Result<VarId> {
        let v = elem::crop_pad(self.value(a), cp)?;
        let needs = self.needs(a);
        self.checked(v, Op::CropPad(a, cp), needs, "crop_pad output")
    }

    pub fn conv2d(
        &mut self,
        input: VarId,
        kernel: VarId,
        bias: Option<VarId>,
        stride: (usize, usize),
        pad: Pad2,
    ) -> Result<VarId> {
        let v = conv::forward(
            self.value(input),
            self.value(kernel),
            bias.map(|b| self.value(b)),
            stride,
            pad,
        )?;
        let needs = self.needs(input)
            || self.needs(kernel)
            || bias.map(|b| self.needs(b)).unwrap_or(false);
        self.checked(
            v,
            Op::Conv2d {
                input,
                kernel,
                bias,
                stride,
                pad,
            },
            needs,
            "conv2d output",
        )
    }

    pub fn upsample(&mut self, input: VarId, kernel: VarId, factor: usize) -> Result<VarId> {
        let v = upsample::forward(self.value(input), self.value(kernel), factor)?;
        let needs = self.needs(input) || self.needs(kernel);
        self.checked(
            v,
            Op::Upsample {
                input,
                kernel,
                factor,
            },
            needs,
            "upsample output",
        )
    }

    pub fn maxpool2d(
        &mut self,
        input: VarId,
        window: (usize, usize),
        stride: (usize, usize),
        pad: Pad2,
    ) -> Result<VarId> {
        let (v, argmax) = pool::forward(self.value(input), window, stride, pad)?;
        let needs = self.needs(input);
        self.checked(v, Op::MaxPool { input, argmax }, needs, "maxpool output")
    }

    pub fn lrn(&mut self, input: VarId, params: LrnParams) -> Result<VarId> {
        let v = lrn::forward(self.value(input), &params)?;
        let needs = self.needs(input);
        self.checked(v, Op::Lrn { input, params }, needs, "lrn output")
    }

    /// Records the scanline warp. The warped image is differentiable w.r.t.
    /// both inputs; the validity mask is piecewise constant in the disparity
    /// and is returned as a detached tensor.
    pub fn warp_scanline(&mut self, right: VarId, disparity: VarId) -> Result<(VarId, Tensor<F>)> {
        let (v, mask) = warp::forward(self.value(right), self.value(disparity))?;
        let needs = self.needs(right) || self.needs(disparity);
        let id = self.checked(v, Op::Warp { right, disparity }, needs, "warp output")?;
        Ok((id, mask))
    }

    /// Reverse sweep from a scalar loss. Gradients land in the `grad` slot of
    /// every `requires_grad` tensor reachable from the loss; repeated calls
    /// accumulate until [`Tape::zero_grads`].
    pub fn backward(&mut self, loss: VarId) -> Result<()> {
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(Error::Usage(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        let mut adjoint: Vec<Option<Vec<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        adjoint[loss.0] = Some(vec![F::one()]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(adj) = adjoint[i].take() else {
                continue;
            };
            self.propagate(i, &adj, &mut adjoint);
            if self.nodes[i].value.requires_grad() {
                self.nodes[i].value.accumulate_grad(&adj);
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, adj: &[F], adjoint: &mut [Option<Vec<F>>]) {
        let acc = |adjoint: &mut [Option<Vec<F>>], id: VarId, delta: Vec<F>| {
            match &mut adjoint[id.0] {
                Some(buf) => {
                    for (b, d) in buf.iter_mut().zip(&delta) {
                        *b = *b + *d;
                    }
                }
                slot @ None => *slot = Some(delta),
            }
        };
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if self.needs(*a) {
                    acc(adjoint, *a, adj.to_vec());
                }
                if self.needs(*b) {
                    acc(adjoint, *b, adj.to_vec());
                }
            }
            Op::Sub(a, b) => {
                if self.needs(*a) {
                    acc(adjoint, *a, adj.to_vec());
                }
                if self.needs(*b) {
                    acc(adjoint, *b, adj.iter().map(|&g| -g).collect());
                }
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    let d = self.value(*b).data();
                    acc(adjoint, *a, adj.iter().zip(d).map(|(&g, &v)| g * v).collect());
                }
                if self.needs(*b) {
                    let d = self.value(*a).data();
                    acc(adjoint, *b, adj.iter().zip(d).map(|(&g, &v)| g * v).collect());
                }
            }
            Op::Scale(a, f) => {
                if self.needs(*a) {
                    let f = *f;
                    acc(adjoint, *a, adj.iter().map(|&g| g * f).collect());
                }
            }
            Op::Relu(a) => {
                if self.needs(*a) {
                    acc(adjoint, *a, elem::relu_backward(self.value(*a), adj));
                }
            }
            Op::SumAll(a) => {
                if self.needs(*a) {
                    acc(adjoint, *a, vec![adj[0]; self.value(*a).numel()]);
                }
            }
            Op::CropPad(a, cp) => {
                if self.needs(*a) {
                    acc(
                        adjoint,
                        *a,
                        elem::crop_pad_backward(self.value(*a).shape(), *cp, adj),
                    );
                }
            }
            Op::Conv2d {
                input,
                kernel,
                bias,
                stride,
                pad,
            } => {
                let (gx, gk, gb) =
                    conv::backward(self.value(*input), self.value(*kernel), *stride, *pad, adj);
                if self.needs(*input) {
                    acc(adjoint, *input, gx);
                }
                if self.needs(*kernel) {
                    acc(adjoint, *kernel, gk);
                }
                if let Some(b) = bias {
                    if self.needs(*b) {
                        acc(adjoint, *b, gb);
                    }
                }
            }
            Op::Upsample {
                input,
                kernel,
                factor,
            } => {
                let (gx, gk) =
                    upsample::backward(self.value(*input), self.value(*kernel), *factor, adj);
                if self.needs(*input) {
                    acc(adjoint, *input, gx);
                }
                if self.needs(*kernel) {
                    acc(adjoint, *kernel, gk);
                }
            }
            Op::MaxPool { input, argmax } => {
                if self.needs(*input) {
                    acc(
                        adjoint,
                        *input,
                        pool::backward(self.value(*input).numel(), argmax, adj),
                    );
                }
            }
            Op::Lrn { input, params } => {
                if self.needs(*input) {
                    acc(adjoint, *input, lrn::backward(self.value(*input), params, adj));
                }
            }
            Op::Warp { right, disparity } => {
                let (gr, gd) = warp::backward(self.value(*right), self.value(*disparity), adj);
                if self.needs(*right) {
                    acc(adjoint, *right, gr);
                }
                if self.needs(*disparity) {
                    acc(adjoint, *disparity, gd);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_all_ones() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(
            Tensor::from_vec(&[3], vec![1.0, -2.0, 3.0]).unwrap().with_grad(),
        );
        let loss = tape.sum_all(x).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn sum_of_squares_gradient_is_two_x() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(
            Tensor::from_vec(&[3], vec![1.0, -2.0, 3.0]).unwrap().with_grad(),
        );
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum_all(sq).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[2.0, -4.0, 6.0]);
    }

    #[test]
    fn backward_twice_doubles_gradients() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(
            Tensor::from_vec(&[2], vec![1.5, -0.5]).unwrap().with_grad(),
        );
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum_all(sq).unwrap();
        tape.backward(loss).unwrap();
        let first: Vec<f64> = tape.grad(x).unwrap().to_vec();
        tape.backward(loss).unwrap();
        let second: Vec<f64> = tape.grad(x).unwrap().to_vec();
        for (a, b) in first.iter().zip(&second) {
            assert_eq!(*b, 2.0 * *a);
        }
    }

    #[test]
    fn backward_on_non_scalar_is_usage_error() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::zeros(&[2, 2]).with_grad());
        let y = tape.relu(x).unwrap();
        assert!(matches!(tape.backward(y), Err(Error::Usage(_))));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_vec(&[2], vec![2.0, 3.0]).unwrap().with_grad());
        let k = tape.constant(Tensor::from_vec(&[2], vec![5.0, 7.0]).unwrap());
        let prod = tape.mul(x, k).unwrap();
        let loss = tape.sum_all(prod).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[5.0, 7.0]);
        assert!(tape.grad(k).is_none());
    }
}
