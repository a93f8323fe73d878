//! Fine-tuning augmentations: color x scale x flip, 2x2x2 = 8 variants per
//! sample. One factor is drawn per augmentation call and shared across the
//! eight combinations.

use super::resize::{resize_bilinear, resize_nearest};
use super::StereoSample;
use crate::error::Result;
use crate::scalar::{c, Scalar};
use crate::tensor::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn mirror_w<F: Scalar>(t: &Tensor<F>) -> Tensor<F> {
    let (ch, h, w) = t.spatial_dims().expect("images are [C,H,W] or [H,W]");
    let x = t.data();
    let mut out = vec![F::zero(); x.len()];
    for cc in 0..ch {
        for y in 0..h {
            let row = (cc * h + y) * w;
            for xx in 0..w {
                out[row + xx] = x[row + w - 1 - xx];
            }
        }
    }
    Tensor::from_vec_unchecked(t.shape(), out)
}

fn crop<F: Scalar>(t: &Tensor<F>, oy: usize, ox: usize, h: usize, w: usize) -> Tensor<F> {
    let (ch, hs, ws) = t.spatial_dims().expect("validated");
    debug_assert!(oy + h <= hs && ox + w <= ws);
    let x = t.data();
    let mut out = vec![F::zero(); ch * h * w];
    for cc in 0..ch {
        for y in 0..h {
            let src = (cc * hs + oy + y) * ws + ox;
            let dst = (cc * h + y) * w;
            out[dst..dst + w].copy_from_slice(&x[src..src + w]);
        }
    }
    let shape: Vec<usize> = if t.shape().len() == 2 {
        vec![h, w]
    } else {
        vec![ch, h, w]
    };
    Tensor::from_vec_unchecked(&shape, out)
}

/// Mirrors both images horizontally and swaps them; disparities stay
/// positive and the ground truth is mirrored. Applying it twice returns the
/// original sample exactly.
pub fn flip_swap<F: Scalar>(sample: &StereoSample<F>) -> StereoSample<F> {
    StereoSample {
        id: sample.id.clone(),
        left: mirror_w(&sample.right),
        right: mirror_w(&sample.left),
        calibration: sample.calibration,
        gt_disparity: sample.gt_disparity.as_ref().map(mirror_w),
        occlusion: sample.occlusion.as_ref().map(mirror_w),
    }
}

fn apply_color<F: Scalar>(img: &Tensor<F>, factors: &[f64]) -> Tensor<F> {
    let (ch, h, w) = img.spatial_dims().expect("validated");
    let mut out = img.data().to_vec();
    let half = c::<F>(0.5);
    for cc in 0..ch {
        let f = c::<F>(factors[cc % factors.len()]);
        for v in &mut out[cc * h * w..(cc + 1) * h * w] {
            *v = (*v + half) * f - half;
        }
    }
    Tensor::from_vec_unchecked(img.shape(), out)
}

fn apply_scale<F: Scalar>(
    sample: &StereoSample<F>,
    hs: usize,
    ws: usize,
    oy: usize,
    ox: usize,
) -> Result<StereoSample<F>> {
    let [h, w] = sample.resolution();
    let ratio = c::<F>(ws as f64 / w as f64);
    let left = crop(&resize_bilinear(&sample.left, hs, ws)?, oy, ox, h, w);
    let right = crop(&resize_bilinear(&sample.right, hs, ws)?, oy, ox, h, w);
    let gt = match &sample.gt_disparity {
        Some(gt) => {
            let up = resize_bilinear(gt, hs, ws)?;
            Some(crop(&up, oy, ox, h, w).map(|v| v * ratio))
        }
        None => None,
    };
    let occ = match &sample.occlusion {
        Some(o) => Some(crop(&resize_nearest(o, hs, ws)?, oy, ox, h, w)),
        None => None,
    };
    Ok(StereoSample {
        id: sample.id.clone(),
        left,
        right,
        calibration: sample.calibration.scaled(ws as f64 / w as f64),
        gt_disparity: gt,
        occlusion: occ,
    })
}

/// Produces exactly 8 variants: every combination of {identity, color
/// multiply}, {identity, scale+crop} and {identity, flip-swap}. Index 0 is
/// the untouched input. The color factors (per channel, U[0.9, 1.1]), the
/// scale (U[1, 1.6]) and the crop offsets are drawn once and shared.
pub fn augment<F: Scalar>(
    sample: &StereoSample<F>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<StereoSample<F>>> {
    let [h, w] = sample.resolution();
    let channels = sample.channels();
    let colors: Vec<f64> = (0..channels).map(|_| rng.gen_range(0.9..1.1)).collect();
    let s: f64 = rng.gen_range(1.0..1.6);
    let (hs, ws) = ((h as f64 * s) as usize, (w as f64 * s) as usize);
    let (hs, ws) = (hs.max(h), ws.max(w));
    let oy = if hs > h { rng.gen_range(0..=hs - h) } else { 0 };
    let ox = if ws > w { rng.gen_range(0..=ws - w) } else { 0 };

    let mut out = Vec::with_capacity(8);
    for i in 0..8usize {
        let mut v = sample.clone();
        if i & 1 != 0 {
            v.left = apply_color(&v.left, &colors);
            v.right = apply_color(&v.right, &colors);
        }
        if i & 2 != 0 {
            v = apply_scale(&v, hs, ws, oy, ox)?;
        }
        if i & 4 != 0 {
            v = flip_swap(&v);
        }
        v.id = format!("{}_aug{i}", sample.id);
        out.push(v);
    }
    // the identity branch keeps the original id and bytes
    out[0].id = sample.id.clone();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{SceneFamily, TextureKind};
    use rand::SeedableRng;

    fn sample() -> StereoSample<f64> {
        let family = SceneFamily {
            image_size: [16, 48],
            ..SceneFamily::desk_default()
        };
        family.generate(1, "a", 3).unwrap().remove(0)
    }

    #[test]
    fn produces_exactly_eight_variants_and_identity_is_bitwise() {
        let s = sample();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v = augment(&s, &mut rng).unwrap();
        assert_eq!(v.len(), 8);
        assert_eq!(v[0].left.data(), s.left.data());
        assert_eq!(v[0].right.data(), s.right.data());
        assert_eq!(
            v[0].gt_disparity.as_ref().unwrap().data(),
            s.gt_disparity.as_ref().unwrap().data()
        );
    }

    #[test]
    fn augmentation_is_deterministic_under_a_fixed_seed() {
        let s = sample();
        let a = augment(&s, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = augment(&s, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.left.data(), y.left.data());
            assert_eq!(x.right.data(), y.right.data());
        }
    }

    #[test]
    fn flip_swap_is_an_involution() {
        let s = sample();
        let once = flip_swap(&s);
        let twice = flip_swap(&once);
        assert_eq!(twice.left.data(), s.left.data());
        assert_eq!(twice.right.data(), s.right.data());
        assert_eq!(
            twice.gt_disparity.as_ref().unwrap().data(),
            s.gt_disparity.as_ref().unwrap().data()
        );
    }

    #[test]
    fn flip_swap_of_constant_plane_keeps_constant_gt() {
        let family = SceneFamily {
            image_size: [8, 24],
            surfaces: [0, 0],
            background_disparity: [3.0, 3.0],
            integer_disparities: true,
            texture: TextureKind::Noise,
            ..SceneFamily::desk_default()
        };
        let s: StereoSample<f64> = family.generate(1, "p", 1).unwrap().remove(0);
        let f = flip_swap(&s);
        for &v in f.gt_disparity.as_ref().unwrap().data() {
            assert!((v - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn scale_branch_multiplies_gt_disparity() {
        // constant-disparity plane: away from borders the resampled gt is
        // the constant itself, so scaling must multiply it by ws/w exactly
        let family = SceneFamily {
            image_size: [16, 48],
            surfaces: [0, 0],
            background_disparity: [4.0, 4.0],
            integer_disparities: true,
            ..SceneFamily::desk_default()
        };
        let s: StereoSample<f64> = family.generate(1, "p", 2).unwrap().remove(0);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let v = augment(&s, &mut rng).unwrap();
        let scaled = &v[2]; // scale-only branch
        let ratio = scaled.calibration.focal_px / s.calibration.focal_px;
        assert!(ratio > 1.0);
        let gt = scaled.gt_disparity.as_ref().unwrap();
        let [h, w] = scaled.resolution();
        for y in 2..h - 2 {
            for x in 2..w - 2 {
                let got = gt.data()[y * w + x];
                assert!(
                    (got - 4.0 * ratio).abs() < 1e-6,
                    "at ({x},{y}): {got} vs {}",
                    4.0 * ratio
                );
            }
        }
    }
}
