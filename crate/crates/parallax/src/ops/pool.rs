//! Max pooling over spatial windows. Ties go to the first element in scan
//! order; out-of-bounds positions under asymmetric padding never win.

use super::Pad2;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn output_shape(
    input: &[usize],
    window: (usize, usize),
    stride: (usize, usize),
    pad: Pad2,
) -> Result<Vec<usize>> {
    let (c, h, w) = match input {
        [c, h, w] => (*c, *h, *w),
        other => {
            return Err(Error::Config(format!(
                "maxpool2d input must be [C,H,W], got {other:?}"
            )))
        }
    };
    if window.0 == 0 || window.1 == 0 || stride.0 == 0 || stride.1 == 0 {
        return Err(Error::Config("maxpool2d window/stride must be positive".into()));
    }
    let ph = h + pad.top + pad.bottom;
    let pw = w + pad.left + pad.right;
    if window.0 > ph || window.1 > pw {
        return Err(Error::Config(format!(
            "maxpool2d window {:?} exceeds padded extent {}x{}",
            window, ph, pw
        )));
    }
    let ho = (ph - window.0) / stride.0 + 1;
    let wo = (pw - window.1) / stride.1 + 1;
    if ho == 0 || wo == 0 {
        return Err(Error::Config("maxpool2d produces an empty output".into()));
    }
    Ok(vec![c, ho, wo])
}

/// Returns the pooled tensor plus, per output element, the flat input index
/// of its argmax (consumed by the backward rule).
pub fn forward<F: Scalar>(
    input: &Tensor<F>,
    window: (usize, usize),
    stride: (usize, usize),
    pad: Pad2,
) -> Result<(Tensor<F>, Vec<u32>)> {
    let out_shape = output_shape(input.shape(), window, stride, pad)?;
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (ho, wo) = (out_shape[1], out_shape[2]);
    let x = input.data();
    let mut out = vec![F::zero(); c * ho * wo];
    let mut arg = vec![0u32; c * ho * wo];

    for ch in 0..c {
        let base = ch * h * w;
        for y in 0..ho {
            for xcol in 0..wo {
                let mut best: Option<(F, usize)> = None;
                for i in 0..window.0 {
                    let yy = (y * stride.0 + i) as isize - pad.top as isize;
                    if yy < 0 || yy >= h as isize {
                        continue;
                    }
                    for j in 0..window.1 {
                        let xx = (xcol * stride.1 + j) as isize - pad.left as isize;
                        if xx < 0 || xx >= w as isize {
                            continue;
                        }
                        let idx = base + yy as usize * w + xx as usize;
                        let v = x[idx];
                        match best {
                            // strict > keeps the first-scanned element on ties
                            Some((bv, _)) if v > bv => best = Some((v, idx)),
                            None => best = Some((v, idx)),
                            _ => {}
                        }
                    }
                }
                let (v, idx) = best.ok_or_else(|| {
                    Error::Config("maxpool2d window contains no input pixels".into())
                })?;
                out[(ch * ho + y) * wo + xcol] = v;
                arg[(ch * ho + y) * wo + xcol] = idx as u32;
            }
        }
    }
    Ok((Tensor::from_vec_unchecked(&out_shape, out), arg))
}

pub fn backward<F: Scalar>(input_numel: usize, argmax: &[u32], grad_out: &[F]) -> Vec<F> {
    let mut gx = vec![F::zero(); input_numel];
    for (&idx, &g) in argmax.iter().zip(grad_out) {
        gx[idx as usize] = gx[idx as usize] + g;
    }
    gx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_window_takes_max() {
        let input = Tensor::<f64>::from_vec(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (out, arg) = forward(&input, (2, 2), (2, 2), Pad2::ZERO).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1]);
        assert_eq!(out.data()[0], 4.0);
        assert_eq!(arg[0], 3);
    }

    #[test]
    fn ties_route_gradient_to_first_scanned() {
        let input = Tensor::<f64>::full(&[1, 2, 2], 7.0);
        let (_, arg) = forward(&input, (2, 2), (1, 1), Pad2::ZERO).unwrap();
        assert_eq!(arg[0], 0);
        let gx = backward(4, &arg, &[1.0]);
        assert_eq!(gx, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn window_larger_than_input_rejected() {
        let r = output_shape(&[1, 2, 2], (3, 3), (1, 1), Pad2::ZERO);
        assert!(r.is_err());
    }
}
