//! Scanline inverse warping: sample the right image at `x + D(x,y)` with
//! horizontal linear interpolation. Rectified pairs move along scanlines
//! only, so no vertical interpolation is needed.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Validity and sampling geometry for one pixel.
#[derive(Clone, Copy)]
struct SamplePoint {
    valid: bool,
    x0: usize,
    frac: f64,
}

fn sample_point<F: Scalar>(x: usize, d: F, width: usize) -> SamplePoint {
    let xs = x as f64 + d.to_f64_lossy();
    if !(0.0..=(width - 1) as f64).contains(&xs) {
        return SamplePoint {
            valid: false,
            x0: 0,
            frac: 0.0,
        };
    }
    let x0 = xs.floor() as usize;
    let x0 = x0.min(width - 1);
    SamplePoint {
        valid: true,
        x0,
        frac: xs - x0 as f64,
    }
}

/// Returns the warped image and a `[H,W]` validity mask (1 where the sampled
/// abscissa lies inside `[0, W-1]`, 0 elsewhere with the output zeroed).
pub fn forward<F: Scalar>(
    right: &Tensor<F>,
    disparity: &Tensor<F>,
) -> Result<(Tensor<F>, Tensor<F>)> {
    let (c, h, w) = right.spatial_dims()?;
    let (dc, dh, dw) = disparity.spatial_dims()?;
    if dc != 1 || dh != h || dw != w {
        return Err(Error::Config(format!(
            "disparity shape {:?} does not match image {}x{}",
            disparity.shape(),
            h,
            w
        )));
    }
    let r = right.data();
    let d = disparity.data();
    let mut warped = vec![F::zero(); c * h * w];
    let mut mask = vec![F::zero(); h * w];

    for y in 0..h {
        for x in 0..w {
            let p = sample_point(x, d[y * w + x], w);
            if !p.valid {
                continue;
            }
            mask[y * w + x] = F::one();
            let t = F::from_f64(p.frac);
            for ch in 0..c {
                let row = (ch * h + y) * w;
                let a = r[row + p.x0];
                let v = if p.x0 + 1 < w {
                    a + t * (r[row + p.x0 + 1] - a)
                } else {
                    a
                };
                warped[row + x] = v;
            }
        }
    }
    Ok((
        Tensor::from_vec_unchecked(right.shape(), warped),
        Tensor::from_vec_unchecked(&[h, w], mask),
    ))
}

/// Gradients w.r.t. the right image and the disparity map. Invalid pixels
/// propagate nothing. At the exact right edge (`x0 == W-1`) the sample is
/// constant in the fractional offset, so the disparity derivative is zero.
pub fn backward<F: Scalar>(
    right: &Tensor<F>,
    disparity: &Tensor<F>,
    grad_out: &[F],
) -> (Vec<F>, Vec<F>) {
    let (c, h, w) = right.spatial_dims().expect("checked in forward");
    let r = right.data();
    let d = disparity.data();
    let mut g_right = vec![F::zero(); r.len()];
    let mut g_disp = vec![F::zero(); d.len()];

    for y in 0..h {
        for x in 0..w {
            let p = sample_point(x, d[y * w + x], w);
            if !p.valid {
                continue;
            }
            let t = F::from_f64(p.frac);
            let mut slope_sum = F::zero();
            for ch in 0..c {
                let row = (ch * h + y) * w;
                let g = grad_out[row + x];
                if p.x0 + 1 < w {
                    g_right[row + p.x0] = g_right[row + p.x0] + g * (F::one() - t);
                    g_right[row + p.x0 + 1] = g_right[row + p.x0 + 1] + g * t;
                    slope_sum = slope_sum + g * (r[row + p.x0 + 1] - r[row + p.x0]);
                } else {
                    g_right[row + p.x0] = g_right[row + p.x0] + g;
                }
            }
            g_disp[y * w + x] = slope_sum;
        }
    }
    (g_right, g_disp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(values: &[f64], h: usize, w: usize) -> Tensor<f64> {
        Tensor::from_vec(&[1, h, w], values.to_vec()).unwrap()
    }

    #[test]
    fn zero_disparity_is_identity_with_full_mask() {
        let right = image(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 2, 3);
        let d = Tensor::<f64>::zeros(&[2, 3]);
        let (warped, mask) = forward(&right, &d).unwrap();
        assert_eq!(warped.data(), right.data());
        assert!(mask.data().iter().all(|&m| m == 1.0));
    }

    #[test]
    fn integer_shift_reads_neighbor_and_masks_last_column() {
        let right = image(&[10.0, 20.0, 30.0], 1, 3);
        let d = Tensor::<f64>::full(&[1, 3], 1.0);
        let (warped, mask) = forward(&right, &d).unwrap();
        assert_eq!(warped.data(), &[20.0, 30.0, 0.0]);
        assert_eq!(mask.data(), &[1.0, 1.0, 0.0]);
    }

    #[test]
    fn fractional_shift_interpolates() {
        let right = image(&[0.0, 1.0], 1, 2);
        let d = Tensor::<f64>::from_vec(&[1, 2], vec![0.25, 0.0]).unwrap();
        let (warped, _) = forward(&right, &d).unwrap();
        assert!((warped.data()[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn negative_out_of_range_masks() {
        let right = image(&[1.0, 2.0], 1, 2);
        let d = Tensor::<f64>::from_vec(&[1, 2], vec![-0.5, -3.0]).unwrap();
        let (warped, mask) = forward(&right, &d).unwrap();
        assert_eq!(mask.data(), &[0.0, 0.0]);
        assert_eq!(warped.data(), &[0.0, 0.0]);
    }
}
