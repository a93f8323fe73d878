//! Resizing for the coarse-to-fine stages: 2x2 area averaging for clean
//! halvings, align-centers bilinear otherwise, nearest for validity-aware
//! label resampling. Disparity values rescale with the width ratio.

use super::StereoSample;
use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};
use crate::tensor::Tensor;

/// 2x2 area average; both spatial dims must be even.
fn halve_area<F: Scalar>(t: &Tensor<F>) -> Tensor<F> {
    let (ch, h, w) = t.spatial_dims().expect("checked by caller");
    let (ho, wo) = (h / 2, w / 2);
    let x = t.data();
    let quarter = c::<F>(0.25);
    let mut out = vec![F::zero(); ch * ho * wo];
    for cc in 0..ch {
        for y in 0..ho {
            for xx in 0..wo {
                let base = (cc * h + 2 * y) * w + 2 * xx;
                out[(cc * ho + y) * wo + xx] =
                    (x[base] + x[base + 1] + x[base + w] + x[base + w + 1]) * quarter;
            }
        }
    }
    let shape: Vec<usize> = if t.shape().len() == 2 {
        vec![ho, wo]
    } else {
        vec![ch, ho, wo]
    };
    Tensor::from_vec_unchecked(&shape, out)
}

/// Align-centers bilinear resize with edge clamping.
pub fn resize_bilinear<F: Scalar>(t: &Tensor<F>, ho: usize, wo: usize) -> Result<Tensor<F>> {
    let (ch, h, w) = t.spatial_dims()?;
    if ho == 0 || wo == 0 {
        return Err(Error::Config("resize target must be positive".into()));
    }
    if (ho, wo) == (h, w) {
        return Ok(t.clone());
    }
    let x = t.data();
    let mut out = vec![F::zero(); ch * ho * wo];
    let sy = h as f64 / ho as f64;
    let sx = w as f64 / wo as f64;
    for y in 0..ho {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let ty = c::<F>(fy - y0 as f64);
        for xx in 0..wo {
            let fx = ((xx as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let tx = c::<F>(fx - x0 as f64);
            for cc in 0..ch {
                let base = cc * h * w;
                let top = x[base + y0 * w + x0]
                    + tx * (x[base + y0 * w + x1] - x[base + y0 * w + x0]);
                let bot = x[base + y1 * w + x0]
                    + tx * (x[base + y1 * w + x1] - x[base + y1 * w + x0]);
                out[(cc * ho + y) * wo + xx] = top + ty * (bot - top);
            }
        }
    }
    let shape: Vec<usize> = if t.shape().len() == 2 {
        vec![ho, wo]
    } else {
        vec![ch, ho, wo]
    };
    Ok(Tensor::from_vec_unchecked(&shape, out))
}

/// Nearest-neighbor resize (validity-aware label resampling).
pub fn resize_nearest<F: Scalar>(t: &Tensor<F>, ho: usize, wo: usize) -> Result<Tensor<F>> {
    let (ch, h, w) = t.spatial_dims()?;
    if (ho, wo) == (h, w) {
        return Ok(t.clone());
    }
    let x = t.data();
    let mut out = vec![F::zero(); ch * ho * wo];
    let sy = h as f64 / ho as f64;
    let sx = w as f64 / wo as f64;
    for y in 0..ho {
        let ys = (((y as f64 + 0.5) * sy - 0.5).round().max(0.0) as usize).min(h - 1);
        for xx in 0..wo {
            let xs = (((xx as f64 + 0.5) * sx - 0.5).round().max(0.0) as usize).min(w - 1);
            for cc in 0..ch {
                out[(cc * ho + y) * wo + xx] = x[(cc * h + ys) * w + xs];
            }
        }
    }
    let shape: Vec<usize> = if t.shape().len() == 2 {
        vec![ho, wo]
    } else {
        vec![ch, ho, wo]
    };
    Ok(Tensor::from_vec_unchecked(&shape, out))
}

/// Downsample via repeated 2x2 area averaging while the target divides
/// evenly, finishing with bilinear resampling for awkward ratios.
pub fn resize_to<F: Scalar>(t: &Tensor<F>, ho: usize, wo: usize) -> Result<Tensor<F>> {
    let (_, h, w) = t.spatial_dims()?;
    if ho > h || wo > w {
        return resize_bilinear(t, ho, wo);
    }
    let mut cur = t.clone();
    loop {
        let (_, h, w) = cur.spatial_dims()?;
        if h % 2 == 0 && w % 2 == 0 && h / 2 >= ho && w / 2 >= wo {
            cur = halve_area(&cur);
        } else {
            break;
        }
    }
    resize_bilinear(&cur, ho, wo)
}

/// Resizes a disparity map and rescales its values by the width ratio.
pub fn resize_disparity<F: Scalar>(d: &Tensor<F>, ho: usize, wo: usize) -> Result<Tensor<F>> {
    let (_, _, w) = d.spatial_dims()?;
    let resized = resize_to(d, ho, wo)?;
    let ratio = c::<F>(wo as f64 / w as f64);
    Ok(resized.map(|v| v * ratio))
}

/// Resizes a whole sample to a stage resolution: images by area/bilinear,
/// ground truth with value rescaling, occlusion by nearest, calibration
/// focal length by the width ratio.
pub fn resize_for_stage<F: Scalar>(
    sample: &StereoSample<F>,
    target: [usize; 2],
) -> Result<StereoSample<F>> {
    let [h, w] = sample.resolution();
    let [ho, wo] = target;
    if ho > h || wo > w {
        return Err(Error::Config(format!(
            "stage resolution {ho}x{wo} exceeds native {h}x{w}"
        )));
    }
    if [ho, wo] == [h, w] {
        return Ok(sample.clone());
    }
    let gt = match &sample.gt_disparity {
        Some(gt) => Some(resize_disparity(gt, ho, wo)?),
        None => None,
    };
    let occlusion = match &sample.occlusion {
        Some(o) => Some(resize_nearest(o, ho, wo)?),
        None => None,
    };
    StereoSample::new(
        sample.id.clone(),
        resize_to(&sample.left, ho, wo)?,
        resize_to(&sample.right, ho, wo)?,
        sample.calibration.scaled(wo as f64 / w as f64),
        gt,
        occlusion,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Calibration;

    #[test]
    fn identity_resize_is_exact() {
        let t = Tensor::<f64>::from_vec(&[1, 2, 4], (0..8).map(|v| v as f64).collect()).unwrap();
        let r = resize_to(&t, 2, 4).unwrap();
        assert_eq!(r.data(), t.data());
    }

    #[test]
    fn halving_is_area_average() {
        let t = Tensor::<f64>::from_vec(&[1, 2, 2], vec![1.0, 3.0, 5.0, 7.0]).unwrap();
        let r = resize_to(&t, 1, 1).unwrap();
        assert_eq!(r.data(), &[4.0]);
    }

    #[test]
    fn halving_width_halves_disparity_values() {
        let d = Tensor::<f64>::full(&[4, 8], 6.0);
        let r = resize_disparity(&d, 2, 4).unwrap();
        assert_eq!(r.shape(), &[2, 4]);
        for &v in r.data() {
            assert!((v - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn stage_resize_scales_calibration_and_gt() {
        let cal = Calibration::new(100.0, 0.54).unwrap();
        let left = Tensor::<f64>::zeros(&[1, 4, 8]);
        let right = Tensor::<f64>::zeros(&[1, 4, 8]);
        let gt = Tensor::<f64>::full(&[4, 8], 2.0);
        let s = StereoSample::new("s", left, right, cal, Some(gt), None).unwrap();
        let r = resize_for_stage(&s, [2, 4]).unwrap();
        assert_eq!(r.resolution(), [2, 4]);
        assert!((r.calibration.focal_px - 50.0).abs() < 1e-12);
        assert!((r.gt_disparity.unwrap().data()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn upsizing_a_sample_is_rejected() {
        let cal = Calibration::new(100.0, 0.54).unwrap();
        let s = StereoSample::<f64>::new(
            "s",
            Tensor::zeros(&[1, 2, 2]),
            Tensor::zeros(&[1, 2, 2]),
            cal,
            None,
            None,
        )
        .unwrap();
        assert!(resize_for_stage(&s, [4, 4]).is_err());
    }
}
