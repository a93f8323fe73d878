//! Learnable upsampling as a transposed convolution whose kernel starts as
//! the separable bilinear interpolation filter.
//!
//! The input is replicate-padded by one pixel before the transposed
//! convolution and the full output is cropped symmetrically, so with the
//! initial kernel the op performs exact edge-clamped bilinear interpolation:
//! a constant image stays constant and interior samples are the usual
//! convex combinations. The kernel remains an ordinary learnable parameter
//! afterwards.

use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};
use crate::tensor::Tensor;

/// Kernel size used for an upsampling factor: 2f - (f mod 2).
pub fn kernel_size(factor: usize) -> usize {
    2 * factor - factor % 2
}

/// 1-D bilinear filter taps for the given factor.
pub fn bilinear_taps(factor: usize) -> Vec<f64> {
    let k = kernel_size(factor);
    let f = factor as f64;
    let center = (k as f64 - 1.0) / 2.0;
    (0..k)
        .map(|i| 1.0 - (i as f64 - center).abs() / f)
        .collect()
}

/// Builds the `[C, C, k, k]` transposed-conv kernel that bilinearly
/// interpolates each channel independently.
pub fn bilinear_kernel<F: Scalar>(channels: usize, factor: usize) -> Tensor<F> {
    let k = kernel_size(factor);
    let taps = bilinear_taps(factor);
    let mut data = vec![F::zero(); channels * channels * k * k];
    for ch in 0..channels {
        for i in 0..k {
            for j in 0..k {
                data[((ch * channels + ch) * k + i) * k + j] = c::<F>(taps[i] * taps[j]);
            }
        }
    }
    Tensor::from_vec_unchecked(&[channels, channels, k, k], data)
}

fn checked_geometry(input: &[usize], kernel: &[usize], factor: usize) -> Result<(usize, usize, usize, usize, usize, usize)> {
    let (c_in, h, w) = match input {
        [c, h, w] => (*c, *h, *w),
        other => {
            return Err(Error::Config(format!(
                "upsample input must be [C,H,W], got {other:?}"
            )))
        }
    };
    let (kc_in, c_out, kh, kw) = match kernel {
        [a, b, kh, kw] => (*a, *b, *kh, *kw),
        other => {
            return Err(Error::Config(format!(
                "upsample kernel must be [Cin,Cout,k,k], got {other:?}"
            )))
        }
    };
    if factor < 2 {
        return Err(Error::Config(format!("upsample factor must be >= 2, got {factor}")));
    }
    if kc_in != c_in {
        return Err(Error::Config(format!(
            "upsample channel mismatch: input has {c_in}, kernel expects {kc_in}"
        )));
    }
    let k = kernel_size(factor);
    if kh != k || kw != k {
        return Err(Error::Config(format!(
            "upsample factor {factor} requires a {k}x{k} kernel, got {kh}x{kw}"
        )));
    }
    Ok((c_in, c_out, h, w, k, factor))
}

pub fn output_shape(input: &[usize], kernel: &[usize], factor: usize) -> Result<Vec<usize>> {
    let (_, c_out, h, w, _, f) = checked_geometry(input, kernel, factor)?;
    Ok(vec![c_out, f * h, f * w])
}

#[inline]
fn clamp_pad(i: usize, n: usize) -> usize {
    // padded index -> source index with edge replication (pad width 1)
    (i.saturating_sub(1)).min(n - 1)
}

pub fn forward<F: Scalar>(
    input: &Tensor<F>,
    kernel: &Tensor<F>,
    factor: usize,
) -> Result<Tensor<F>> {
    let (c_in, c_out, h, w, k, f) = checked_geometry(input.shape(), kernel.shape(), factor)?;
    let (hp, wp) = (h + 2, w + 2);
    let (hf, wf) = ((hp - 1) * f + k, (wp - 1) * f + k);
    let crop = (f + k) / 2;
    let (ho, wo) = (f * h, f * w);

    let x = input.data();
    let kk = kernel.data();
    let mut full = vec![F::zero(); c_out * hf * wf];
    for ci in 0..c_in {
        for yp in 0..hp {
            let ysrc = clamp_pad(yp, h);
            for xp in 0..wp {
                let v = x[(ci * h + ysrc) * w + clamp_pad(xp, w)];
                if v == F::zero() {
                    continue;
                }
                for co in 0..c_out {
                    let kbase = ((ci * c_out + co) * k) * k;
                    let obase = co * hf * wf;
                    for i in 0..k {
                        let row = obase + (yp * f + i) * wf + xp * f;
                        let krow = kbase + i * k;
                        for j in 0..k {
                            full[row + j] = full[row + j] + v * kk[krow + j];
                        }
                    }
                }
            }
        }
    }

    let mut out = vec![F::zero(); c_out * ho * wo];
    for co in 0..c_out {
        for y in 0..ho {
            let src = (co * hf + y + crop) * wf + crop;
            let dst = (co * ho + y) * wo;
            out[dst..dst + wo].copy_from_slice(&full[src..src + wo]);
        }
    }
    Ok(Tensor::from_vec_unchecked(&[c_out, ho, wo], out))
}

pub fn backward<F: Scalar>(
    input: &Tensor<F>,
    kernel: &Tensor<F>,
    factor: usize,
    grad_out: &[F],
) -> (Vec<F>, Vec<F>) {
    let (c_in, c_out, h, w, k, f) =
        checked_geometry(input.shape(), kernel.shape(), factor).expect("checked in forward");
    let (hp, wp) = (h + 2, w + 2);
    let (hf, wf) = ((hp - 1) * f + k, (wp - 1) * f + k);
    let crop = (f + k) / 2;
    let (ho, wo) = (f * h, f * w);

    // un-crop the upstream gradient into full-output coordinates
    let mut gfull = vec![F::zero(); c_out * hf * wf];
    for co in 0..c_out {
        for y in 0..ho {
            let dst = (co * hf + y + crop) * wf + crop;
            let src = (co * ho + y) * wo;
            gfull[dst..dst + wo].copy_from_slice(&grad_out[src..src + wo]);
        }
    }

    let x = input.data();
    let kk = kernel.data();
    let mut gx = vec![F::zero(); x.len()];
    let mut gk = vec![F::zero(); kk.len()];
    for ci in 0..c_in {
        for yp in 0..hp {
            let ysrc = clamp_pad(yp, h);
            for xp in 0..wp {
                let xsrc = clamp_pad(xp, w);
                let v = x[(ci * h + ysrc) * w + xsrc];
                let mut gin = F::zero();
                for co in 0..c_out {
                    let kbase = ((ci * c_out + co) * k) * k;
                    let obase = co * hf * wf;
                    for i in 0..k {
                        let row = obase + (yp * f + i) * wf + xp * f;
                        let krow = kbase + i * k;
                        for j in 0..k {
                            let g = gfull[row + j];
                            gin = gin + g * kk[krow + j];
                            gk[krow + j] = gk[krow + j] + g * v;
                        }
                    }
                }
                let t = (ci * h + ysrc) * w + xsrc;
                gx[t] = gx[t] + gin;
            }
        }
    }
    (gx, gk)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_stays_constant_at_double_size() {
        let input = Tensor::<f64>::full(&[1, 3, 5], 0.7);
        let kernel = bilinear_kernel::<f64>(1, 2);
        let out = forward(&input, &kernel, 2).unwrap();
        assert_eq!(out.shape(), &[1, 6, 10]);
        for &v in out.data() {
            assert!((v - 0.7).abs() < 1e-12, "got {v}");
        }
    }

    #[test]
    fn ramp_upsamples_to_linear_interpolation() {
        // 1-D ramp [0,1] doubled: edge-clamped half-pixel sampling gives
        // [0, 0.25, 0.75, 1].
        let input = Tensor::<f64>::from_vec(&[1, 1, 2], vec![0.0, 1.0]).unwrap();
        let kernel = bilinear_kernel::<f64>(1, 2);
        let out = forward(&input, &kernel, 2).unwrap();
        assert_eq!(out.shape(), &[1, 2, 4]);
        let expect = [0.0, 0.25, 0.75, 1.0];
        for (v, e) in out.data()[..4].iter().zip(expect) {
            assert!((v - e).abs() < 1e-12, "got {v}, want {e}");
        }
    }

    #[test]
    fn taps_partition_unity_per_phase() {
        let taps = bilinear_taps(2);
        assert_eq!(taps, vec![0.25, 0.75, 0.75, 0.25]);
        assert!((taps[0] + taps[2] - 1.0).abs() < 1e-15);
        assert!((taps[1] + taps[3] - 1.0).abs() < 1e-15);
    }
}
