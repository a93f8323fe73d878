//! 2-D cross-correlation ("convolution" in the deep-learning sense, no
//! kernel flip) with stride and asymmetric zero padding.

use super::Pad2;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Output spatial size of one dimension: floor((n + pad - k)/stride) + 1.
fn out_dim(n: usize, pad: usize, k: usize, stride: usize) -> Result<usize> {
    let padded = n + pad;
    if padded < k {
        return Err(Error::Config(format!(
            "kernel extent {k} exceeds padded input extent {padded}"
        )));
    }
    Ok((padded - k) / stride + 1)
}

pub fn output_shape(
    input: &[usize],
    kernel: &[usize],
    stride: (usize, usize),
    pad: Pad2,
) -> Result<Vec<usize>> {
    let (c_in, h, w) = match input {
        [c, h, w] => (*c, *h, *w),
        other => {
            return Err(Error::Config(format!(
                "conv2d input must be [C,H,W], got {other:?}"
            )))
        }
    };
    let (c_out, kc, kh, kw) = match kernel {
        [o, i, kh, kw] => (*o, *i, *kh, *kw),
        other => {
            return Err(Error::Config(format!(
                "conv2d kernel must be [Cout,Cin,kH,kW], got {other:?}"
            )))
        }
    };
    if kc != c_in {
        return Err(Error::Config(format!(
            "conv2d channel mismatch: input has {c_in}, kernel expects {kc}"
        )));
    }
    if stride.0 == 0 || stride.1 == 0 {
        return Err(Error::Config("conv2d stride must be positive".into()));
    }
    let ho = out_dim(h, pad.top + pad.bottom, kh, stride.0)?;
    let wo = out_dim(w, pad.left + pad.right, kw, stride.1)?;
    Ok(vec![c_out, ho, wo])
}

pub fn forward<F: Scalar>(
    input: &Tensor<F>,
    kernel: &Tensor<F>,
    bias: Option<&Tensor<F>>,
    stride: (usize, usize),
    pad: Pad2,
) -> Result<Tensor<F>> {
    let out_shape = output_shape(input.shape(), kernel.shape(), stride, pad)?;
    let (c_in, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (c_out, kh, kw) = (kernel.shape()[0], kernel.shape()[2], kernel.shape()[3]);
    let (ho, wo) = (out_shape[1], out_shape[2]);
    if let Some(b) = bias {
        if b.shape() != [c_out] {
            return Err(Error::Config(format!(
                "conv2d bias must be [{c_out}], got {:?}",
                b.shape()
            )));
        }
    }

    let x = input.data();
    let k = kernel.data();
    let mut out = vec![F::zero(); c_out * ho * wo];

    for o in 0..c_out {
        let b = bias.map(|b| b.data()[o]).unwrap_or_else(F::zero);
        for y in 0..ho {
            for xcol in 0..wo {
                let mut acc = b;
                for ci in 0..c_in {
                    let kbase = ((o * c_in + ci) * kh) * kw;
                    let xbase = ci * h * w;
                    for i in 0..kh {
                        let yy = (y * stride.0 + i) as isize - pad.top as isize;
                        if yy < 0 || yy >= h as isize {
                            continue;
                        }
                        let row = xbase + yy as usize * w;
                        let krow = kbase + i * kw;
                        for j in 0..kw {
                            let xx = (xcol * stride.1 + j) as isize - pad.left as isize;
                            if xx < 0 || xx >= w as isize {
                                continue;
                            }
                            acc = acc + x[row + xx as usize] * k[krow + j];
                        }
                    }
                }
                out[(o * ho + y) * wo + xcol] = acc;
            }
        }
    }
    Ok(Tensor::from_vec_unchecked(&out_shape, out))
}

/// Gradients w.r.t. input, kernel and bias given the upstream gradient.
pub fn backward<F: Scalar>(
    input: &Tensor<F>,
    kernel: &Tensor<F>,
    stride: (usize, usize),
    pad: Pad2,
    grad_out: &[F],
) -> (Vec<F>, Vec<F>, Vec<F>) {
    let (c_in, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (c_out, kh, kw) = (kernel.shape()[0], kernel.shape()[2], kernel.shape()[3]);
    let ho = (h + pad.top + pad.bottom - kh) / stride.0 + 1;
    let wo = (w + pad.left + pad.right - kw) / stride.1 + 1;

    let x = input.data();
    let k = kernel.data();
    let mut gx = vec![F::zero(); x.len()];
    let mut gk = vec![F::zero(); k.len()];
    let mut gb = vec![F::zero(); c_out];

    for o in 0..c_out {
        for y in 0..ho {
            for xcol in 0..wo {
                let g = grad_out[(o * ho + y) * wo + xcol];
                gb[o] = gb[o] + g;
                for ci in 0..c_in {
                    let kbase = ((o * c_in + ci) * kh) * kw;
                    let xbase = ci * h * w;
                    for i in 0..kh {
                        let yy = (y * stride.0 + i) as isize - pad.top as isize;
                        if yy < 0 || yy >= h as isize {
                            continue;
                        }
                        let row = xbase + yy as usize * w;
                        let krow = kbase + i * kw;
                        for j in 0..kw {
                            let xx = (xcol * stride.1 + j) as isize - pad.left as isize;
                            if xx < 0 || xx >= w as isize {
                                continue;
                            }
                            gx[row + xx as usize] = gx[row + xx as usize] + g * k[krow + j];
                            gk[krow + j] = gk[krow + j] + g * x[row + xx as usize];
                        }
                    }
                }
            }
        }
    }
    (gx, gk, gb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_ones_3x3_sums_to_nine() {
        let input = Tensor::<f64>::full(&[1, 3, 3], 1.0);
        let kernel = Tensor::<f64>::full(&[1, 1, 3, 3], 1.0);
        let bias = Tensor::<f64>::zeros(&[1]);
        let out = forward(&input, &kernel, Some(&bias), (1, 1), Pad2::ZERO).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1]);
        assert_eq!(out.data()[0], 9.0);
    }

    #[test]
    fn identity_kernel_passes_input_through() {
        let input =
            Tensor::<f64>::from_vec(&[1, 2, 2], vec![1.0, -2.0, 3.0, 4.0]).unwrap();
        let kernel = Tensor::<f64>::full(&[1, 1, 1, 1], 1.0);
        let out = forward(&input, &kernel, None, (1, 1), Pad2::ZERO).unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn channel_mismatch_rejected() {
        let r = output_shape(&[2, 4, 4], &[1, 3, 3, 3], (1, 1), Pad2::ZERO);
        assert!(r.is_err());
    }

    #[test]
    fn shape_formula_with_uneven_padding() {
        // 10 rows, 3x3 window, stride 2, pad bottom 1: floor((10+1-3)/2)+1 = 5
        let s = output_shape(&[1, 10, 37], &[1, 1, 3, 3], (2, 2), Pad2::hw(0, 1, 0, 0))
            .unwrap();
        assert_eq!(s, vec![1, 5, 18]);
    }
}
