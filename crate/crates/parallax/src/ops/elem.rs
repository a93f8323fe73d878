//! Elementwise and shape-bookkeeping primitives: sum, difference, product,
//! constant scaling, ReLU, crop/pad, and full reduction.

use super::CropPad;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn check_same_shape<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>, op: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Config(format!(
            "{op}: shape mismatch {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

pub fn add<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    check_same_shape(a, b, "add")?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| *x + *y).collect();
    Ok(Tensor::from_vec_unchecked(a.shape(), data))
}

pub fn sub<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    check_same_shape(a, b, "sub")?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| *x - *y).collect();
    Ok(Tensor::from_vec_unchecked(a.shape(), data))
}

pub fn mul<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    check_same_shape(a, b, "mul")?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| *x * *y).collect();
    Ok(Tensor::from_vec_unchecked(a.shape(), data))
}

pub fn scale<F: Scalar>(a: &Tensor<F>, factor: F) -> Tensor<F> {
    a.map(|v| v * factor)
}

pub fn relu<F: Scalar>(a: &Tensor<F>) -> Tensor<F> {
    a.map(|v| if v > F::zero() { v } else { F::zero() })
}

pub fn relu_backward<F: Scalar>(input: &Tensor<F>, grad_out: &[F]) -> Vec<F> {
    input
        .data()
        .iter()
        .zip(grad_out)
        .map(|(&x, &g)| if x > F::zero() { g } else { F::zero() })
        .collect()
}

pub fn sum_all<F: Scalar>(a: &Tensor<F>) -> Tensor<F> {
    let mut acc = F::zero();
    for &v in a.data() {
        acc = acc + v;
    }
    Tensor::scalar(acc)
}

pub fn crop_pad_shape(shape: &[usize], cp: CropPad) -> Result<Vec<usize>> {
    let (c, h, w) = match shape {
        [h, w] => (None, *h, *w),
        [c, h, w] => (Some(*c), *h, *w),
        other => {
            return Err(Error::Config(format!(
                "crop_pad expects [H,W] or [C,H,W], got {other:?}"
            )))
        }
    };
    let ho = h as i64 + cp.top + cp.bottom;
    let wo = w as i64 + cp.left + cp.right;
    if ho < 1 || wo < 1 {
        return Err(Error::Config(format!(
            "crop_pad {cp:?} empties a {h}x{w} map"
        )));
    }
    if -cp.top > h as i64 || -cp.bottom > h as i64 || -cp.left > w as i64 || -cp.right > w as i64 {
        return Err(Error::Config(format!(
            "crop_pad {cp:?} crops more than the {h}x{w} extent"
        )));
    }
    Ok(match c {
        Some(c) => vec![c, ho as usize, wo as usize],
        None => vec![ho as usize, wo as usize],
    })
}

/// Positive offsets zero-pad, negative offsets crop.
pub fn crop_pad<F: Scalar>(input: &Tensor<F>, cp: CropPad) -> Result<Tensor<F>> {
    let out_shape = crop_pad_shape(input.shape(), cp)?;
    let (c, h, w) = input.spatial_dims()?;
    let (ho, wo) = (out_shape[out_shape.len() - 2], out_shape[out_shape.len() - 1]);
    let x = input.data();
    let mut out = vec![F::zero(); c * ho * wo];
    for ch in 0..c {
        for y in 0..ho {
            let ys = y as i64 - cp.top;
            if ys < 0 || ys >= h as i64 {
                continue;
            }
            for xcol in 0..wo {
                let xs = xcol as i64 - cp.left;
                if xs < 0 || xs >= w as i64 {
                    continue;
                }
                out[(ch * ho + y) * wo + xcol] = x[(ch * h + ys as usize) * w + xs as usize];
            }
        }
    }
    Ok(Tensor::from_vec_unchecked(&out_shape, out))
}

/// Adjoint of [`crop_pad`]: routes each output gradient back to the input
/// pixel it came from (cropped regions receive zero, padded regions vanish).
pub fn crop_pad_backward<F: Scalar>(
    input_shape: &[usize],
    cp: CropPad,
    grad_out: &[F],
) -> Vec<F> {
    let (c, h, w) = match input_shape {
        [h, w] => (1, *h, *w),
        [c, h, w] => (*c, *h, *w),
        _ => unreachable!("validated in forward"),
    };
    let ho = (h as i64 + cp.top + cp.bottom) as usize;
    let wo = (w as i64 + cp.left + cp.right) as usize;
    let mut gx = vec![F::zero(); c * h * w];
    for ch in 0..c {
        for y in 0..ho {
            let ys = y as i64 - cp.top;
            if ys < 0 || ys >= h as i64 {
                continue;
            }
            for xcol in 0..wo {
                let xs = xcol as i64 - cp.left;
                if xs < 0 || xs >= w as i64 {
                    continue;
                }
                let t = (ch * h + ys as usize) * w + xs as usize;
                gx[t] = gx[t] + grad_out[(ch * ho + y) * wo + xcol];
            }
        }
    }
    gx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_zero_is_identity() {
        let a = Tensor::<f64>::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let z = Tensor::<f64>::zeros(&[2, 2]);
        assert_eq!(add(&a, &z).unwrap().data(), a.data());
    }

    #[test]
    fn crop_then_pad_restores_interior() {
        let a = Tensor::<f64>::from_vec(&[3, 3], (0..9).map(|v| v as f64).collect()).unwrap();
        let cropped = crop_pad(
            &a,
            CropPad {
                top: -1,
                bottom: -1,
                left: -1,
                right: -1,
            },
        )
        .unwrap();
        assert_eq!(cropped.shape(), &[1, 1]);
        assert_eq!(cropped.data(), &[4.0]);
        let padded = crop_pad(
            &cropped,
            CropPad {
                top: 1,
                bottom: 1,
                left: 1,
                right: 1,
            },
        )
        .unwrap();
        assert_eq!(padded.shape(), &[3, 3]);
        assert_eq!(padded.data()[4], 4.0);
        assert_eq!(padded.data().iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn over_cropping_rejected() {
        let a = Tensor::<f64>::zeros(&[2, 2]);
        let r = crop_pad(
            &a,
            CropPad {
                top: -2,
                bottom: 0,
                left: 0,
                right: 0,
            },
        );
        assert!(r.is_err());
    }

    #[test]
    fn shape_mismatch_is_config_error() {
        let a = Tensor::<f64>::zeros(&[2, 2]);
        let b = Tensor::<f64>::zeros(&[2, 3]);
        assert!(add(&a, &b).is_err());
    }
}
