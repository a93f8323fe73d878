//! The fixed, parameter-free decoder: scanline inverse warping, photometric
//! reconstruction loss, smoothness prior, the combined objective, and the
//! first-order warp linearization used for analysis and the stereo baseline.

use crate::error::{Error, Result};
use crate::ops::{elem, warp, CropPad};
use crate::scalar::{c, Scalar};
use crate::tape::{Tape, VarId};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// Stereo rig description: focal length in pixels and baseline in metres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub focal_px: f64,
    pub baseline_m: f64,
}

impl Calibration {
    pub fn new(focal_px: f64, baseline_m: f64) -> Result<Self> {
        let cal = Calibration {
            focal_px,
            baseline_m,
        };
        cal.validate()?;
        Ok(cal)
    }

    pub fn validate(&self) -> Result<()> {
        let fb = self.focal_px * self.baseline_m;
        if !(fb.is_finite() && self.focal_px > 0.0 && self.baseline_m > 0.0) {
            return Err(Error::Config(format!(
                "calibration needs positive finite f and B, got f={} B={}",
                self.focal_px, self.baseline_m
            )));
        }
        Ok(())
    }

    /// Product f*B linking disparity and depth: D = fB / d.
    pub fn fb(&self) -> f64 {
        self.focal_px * self.baseline_m
    }

    /// Rescales the focal length when images are resized by `width_ratio`.
    pub fn scaled(&self, width_ratio: f64) -> Calibration {
        Calibration {
            focal_px: self.focal_px * width_ratio,
            baseline_m: self.baseline_m,
        }
    }
}

/// Per-pixel scanline displacement in pixels of its own resolution.
#[derive(Clone, Debug)]
pub struct DisparityMap<F: Scalar> {
    values: Tensor<F>,
}

impl<F: Scalar> DisparityMap<F> {
    pub fn new(values: Tensor<F>) -> Result<Self> {
        if values.shape().len() != 2 {
            return Err(Error::Config(format!(
                "disparity map must be [H,W], got {:?}",
                values.shape()
            )));
        }
        values.check_finite("disparity map")?;
        Ok(DisparityMap { values })
    }

    pub fn zeros(h: usize, w: usize) -> Self {
        DisparityMap {
            values: Tensor::zeros(&[h, w]),
        }
    }

    pub fn values(&self) -> &Tensor<F> {
        &self.values
    }

    pub fn into_values(self) -> Tensor<F> {
        self.values
    }

    pub fn height(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.values.shape()[1]
    }
}

/// Per-pixel metric depth in metres.
#[derive(Clone, Debug)]
pub struct DepthMap<F: Scalar> {
    values: Tensor<F>,
}

impl<F: Scalar> DepthMap<F> {
    pub fn new(values: Tensor<F>) -> Result<Self> {
        if values.shape().len() != 2 {
            return Err(Error::Config(format!(
                "depth map must be [H,W], got {:?}",
                values.shape()
            )));
        }
        Ok(DepthMap { values })
    }

    pub fn values(&self) -> &Tensor<F> {
        &self.values
    }

    pub fn height(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.values.shape()[1]
    }
}

/// The three scalars of the combined objective, kept in the exact
/// accumulation order the tape used: total == recons + gamma * smooth.
#[derive(Clone, Copy, Debug)]
pub struct LossBreakdown<F: Scalar> {
    pub recons: F,
    pub smooth: F,
    pub total: F,
    pub gamma: F,
    /// Set when every warped pixel fell outside the image; the photometric
    /// term is then defined as 0.
    pub degenerate: bool,
}

/// Tape handles for the assembled objective.
pub struct LossNodes {
    pub recons: VarId,
    pub smooth: VarId,
    pub total: VarId,
    pub valid_pixels: usize,
    pub degenerate: bool,
}

/// Inverse warp: `warped(x,y) = right(x + D(x,y), y)` with horizontal linear
/// interpolation. Returns the warped image and the validity mask.
pub fn inverse_warp<F: Scalar>(
    right: &Tensor<F>,
    disparity: &Tensor<F>,
) -> Result<(Tensor<F>, Tensor<F>)> {
    warp::forward(right, disparity)
}

/// Mean over valid pixels and channels of the squared reconstruction error.
/// The mean (rather than a sum) keeps the value comparable across the
/// coarse-to-fine resolutions.
pub fn photometric_loss<F: Scalar>(
    left: &Tensor<F>,
    warped: &Tensor<F>,
    mask: &Tensor<F>,
) -> Result<(F, bool)> {
    elem::check_same_shape(left, warped, "photometric_loss")?;
    let (ch, h, w) = left.spatial_dims()?;
    if mask.shape() != [h, w] {
        return Err(Error::Config(format!(
            "mask shape {:?} does not match {h}x{w}",
            mask.shape()
        )));
    }
    let m = mask.data();
    let valid: usize = m.iter().filter(|&&v| v != F::zero()).count();
    let mut acc = F::zero();
    for cch in 0..ch {
        let base = cch * h * w;
        for s in 0..h * w {
            let d = warped.data()[base + s] - left.data()[base + s];
            acc = acc + d * d * m[s];
        }
    }
    if valid == 0 {
        return Ok((F::zero(), true));
    }
    // multiply by the reciprocal so the value is bit-identical to the tape
    // route, which uses a scale node
    Ok((acc * c::<F>(1.0 / (valid * ch) as f64), false))
}

/// Mean of squared forward differences of the disparity, horizontal and
/// vertical terms pooled (last column/row excluded per direction).
pub fn smoothness_loss<F: Scalar>(disparity: &Tensor<F>) -> Result<F> {
    let (cch, h, w) = disparity.spatial_dims()?;
    if cch != 1 || h < 2 || w < 2 {
        return Err(Error::Config(format!(
            "smoothness_loss needs a single-channel map at least 2x2, got {:?}",
            disparity.shape()
        )));
    }
    let d = disparity.data();
    let mut acc = F::zero();
    for y in 0..h {
        for x in 0..w - 1 {
            let dx = d[y * w + x + 1] - d[y * w + x];
            acc = acc + dx * dx;
        }
    }
    for y in 0..h - 1 {
        for x in 0..w {
            let dy = d[(y + 1) * w + x] - d[y * w + x];
            acc = acc + dy * dy;
        }
    }
    let count = h * (w - 1) + (h - 1) * w;
    Ok(acc * c::<F>(1.0 / count as f64))
}

fn expand_mask_channels<F: Scalar>(mask: &Tensor<F>, channels: usize) -> Tensor<F> {
    if channels == 1 {
        let (_, h, w) = mask.spatial_dims().unwrap();
        return Tensor::from_vec_unchecked(&[1, h, w], mask.data().to_vec());
    }
    let (_, h, w) = mask.spatial_dims().unwrap();
    let mut data = Vec::with_capacity(channels * h * w);
    for _ in 0..channels {
        data.extend_from_slice(mask.data());
    }
    Tensor::from_vec_unchecked(&[channels, h, w], data)
}

/// Records the photometric term on the tape. The validity mask is detached
/// (it is piecewise constant in the disparity).
pub fn photometric_on_tape<F: Scalar>(
    tape: &mut Tape<F>,
    left: VarId,
    right: VarId,
    disparity: VarId,
) -> Result<(VarId, Tensor<F>, usize)> {
    let channels = tape.value(left).spatial_dims()?.0;
    let (warped, mask) = tape.warp_scanline(right, disparity)?;
    let valid = mask.data().iter().filter(|&&v| v != F::zero()).count();
    let mask_c = tape.constant(expand_mask_channels(&mask, channels));
    // left enters as [C,H,W]; warp output has the same shape
    let diff = tape.sub(warped, left)?;
    let sq = tape.mul(diff, diff)?;
    let masked = tape.mul(sq, mask_c)?;
    let total = tape.sum_all(masked)?;
    let denom = (valid * channels).max(1) as f64;
    let recons = tape.scale(total, c::<F>(1.0 / denom))?;
    Ok((recons, mask, valid))
}

/// Records the smoothness prior on the tape via crop/sub/mul primitives.
pub fn smoothness_on_tape<F: Scalar>(tape: &mut Tape<F>, disparity: VarId) -> Result<VarId> {
    let (cch, h, w) = tape.value(disparity).spatial_dims()?;
    if cch != 1 || h < 2 || w < 2 {
        return Err(Error::Config(format!(
            "smoothness needs a single-channel map at least 2x2, got {:?}",
            tape.value(disparity).shape()
        )));
    }
    let shift_left = tape.crop_pad(
        disparity,
        CropPad {
            top: 0,
            bottom: 0,
            left: -1,
            right: 0,
        },
    )?;
    let keep_left = tape.crop_pad(
        disparity,
        CropPad {
            top: 0,
            bottom: 0,
            left: 0,
            right: -1,
        },
    )?;
    let dx = tape.sub(shift_left, keep_left)?;
    let dx2 = tape.mul(dx, dx)?;
    let sum_x = tape.sum_all(dx2)?;

    let shift_up = tape.crop_pad(
        disparity,
        CropPad {
            top: -1,
            bottom: 0,
            left: 0,
            right: 0,
        },
    )?;
    let keep_up = tape.crop_pad(
        disparity,
        CropPad {
            top: 0,
            bottom: -1,
            left: 0,
            right: 0,
        },
    )?;
    let dy = tape.sub(shift_up, keep_up)?;
    let dy2 = tape.mul(dy, dy)?;
    let sum_y = tape.sum_all(dy2)?;

    let total = tape.add(sum_x, sum_y)?;
    let count = h * (w - 1) + (h - 1) * w;
    tape.scale(total, c::<F>(1.0 / count as f64))
}

/// Assembles E = E_recons + gamma * E_smooth on the tape.
pub fn total_loss_on_tape<F: Scalar>(
    tape: &mut Tape<F>,
    left: VarId,
    right: VarId,
    disparity: VarId,
    gamma: f64,
) -> Result<LossNodes> {
    if gamma < 0.0 {
        return Err(Error::Config(format!("gamma must be >= 0, got {gamma}")));
    }
    let (recons, _mask, valid) = photometric_on_tape(tape, left, right, disparity)?;
    let smooth = smoothness_on_tape(tape, disparity)?;
    let weighted = tape.scale(smooth, c::<F>(gamma))?;
    let total = tape.add(recons, weighted)?;
    Ok(LossNodes {
        recons,
        smooth,
        total,
        valid_pixels: valid,
        degenerate: valid == 0,
    })
}

/// Eq. 3 as plain values: builds a throwaway tape over constants so the
/// scalars come from exactly the same accumulation order as training.
pub fn total_loss<F: Scalar>(
    left: &Tensor<F>,
    right: &Tensor<F>,
    disparity: &Tensor<F>,
    gamma: f64,
) -> Result<LossBreakdown<F>> {
    let mut tape = Tape::new();
    let l = tape.constant(left.clone());
    let r = tape.constant(right.clone());
    let d = tape.constant(disparity.clone());
    let nodes = total_loss_on_tape(&mut tape, l, r, d, gamma)?;
    Ok(LossBreakdown {
        recons: tape.value(nodes.recons).item(),
        smooth: tape.value(nodes.smooth).item(),
        total: tape.value(nodes.total).item(),
        gamma: c::<F>(gamma),
        degenerate: nodes.degenerate,
    })
}

/// Horizontal image gradient by central differences with replicated edges.
pub fn horizontal_gradient<F: Scalar>(img: &Tensor<F>) -> Result<Tensor<F>> {
    let (ch, h, w) = img.spatial_dims()?;
    let x = img.data();
    let mut out = vec![F::zero(); x.len()];
    let half = c::<F>(0.5);
    for cch in 0..ch {
        for y in 0..h {
            let row = (cch * h + y) * w;
            for xx in 0..w {
                let xm = if xx == 0 { 0 } else { xx - 1 };
                let xp = if xx + 1 < w { xx + 1 } else { w - 1 };
                out[row + xx] = (x[row + xp] - x[row + xm]) * half;
            }
        }
    }
    Ok(Tensor::from_vec_unchecked(img.shape(), out))
}

/// First-order model of the warp around `d_prev`:
/// `I2(x + D_prev) + (D_new - D_prev) * I2h(x + D_prev)` where `I2h` is the
/// horizontal gradient of the right image sampled at the warped location.
/// The trainer's backprop through [`inverse_warp`] realizes the same model
/// implicitly; this explicit form drives the Horn-Schunck baseline and the
/// linearization tests.
pub fn linearized_warp<F: Scalar>(
    right: &Tensor<F>,
    d_prev: &Tensor<F>,
    d_new: &Tensor<F>,
) -> Result<(Tensor<F>, Tensor<F>)> {
    elem::check_same_shape(d_prev, d_new, "linearized_warp")?;
    let (warped, mask) = warp::forward(right, d_prev)?;
    let grad = horizontal_gradient(right)?;
    let (grad_w, _) = warp::forward(&grad, d_prev)?;
    let (ch, h, w) = warped.spatial_dims()?;
    let mut out = warped.data().to_vec();
    for cch in 0..ch {
        let base = cch * h * w;
        for s in 0..h * w {
            let dd = d_new.data()[s] - d_prev.data()[s];
            out[base + s] = out[base + s] + dd * grad_w.data()[base + s] * mask.data()[s];
        }
    }
    Ok((Tensor::from_vec_unchecked(warped.shape(), out), mask))
}

/// Converts disparity to clamped metric depth: d = fB / max(D, fB/d_max),
/// clamped into [d_min, d_max]. Non-positive disparities saturate at d_max.
pub fn disparity_to_depth<F: Scalar>(
    disparity: &DisparityMap<F>,
    cal: &Calibration,
    clamp: (f64, f64),
) -> Result<DepthMap<F>> {
    let (d_min, d_max) = clamp;
    if !(d_min > 0.0 && d_min < d_max) {
        return Err(Error::Config(format!(
            "depth clamp must satisfy 0 < d_min < d_max, got [{d_min}, {d_max}]"
        )));
    }
    cal.validate()?;
    let fb = c::<F>(cal.fb());
    let floor = c::<F>(cal.fb() / d_max);
    let lo = c::<F>(d_min);
    let hi = c::<F>(d_max);
    let values = disparity.values().map(|d| {
        let depth = fb / d.max(floor);
        depth.max(lo).min(hi)
    });
    DepthMap::new(values)
}

/// Inverse of [`disparity_to_depth`] on the unclamped range: D = fB / d.
pub fn depth_to_disparity<F: Scalar>(depth: &DepthMap<F>, cal: &Calibration) -> DisparityMap<F> {
    let fb = c::<F>(cal.fb());
    DisparityMap {
        values: depth.values().map(|d| fb / d),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor2(h: usize, w: usize, data: Vec<f64>) -> Tensor<f64> {
        Tensor::from_vec(&[h, w], data).unwrap()
    }

    fn image(h: usize, w: usize, data: Vec<f64>) -> Tensor<f64> {
        Tensor::from_vec(&[1, h, w], data).unwrap()
    }

    #[test]
    fn identical_images_have_zero_loss() {
        let img = image(2, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        let mask = Tensor::<f64>::full(&[2, 3], 1.0);
        let (loss, degenerate) = photometric_loss(&img, &img, &mask).unwrap();
        assert_eq!(loss, 0.0);
        assert!(!degenerate);
    }

    #[test]
    fn constant_offset_gives_squared_constant() {
        let left = image(2, 2, vec![0.0, 0.1, 0.2, 0.3]);
        let warped = left.map(|v| v + 0.25);
        let mask = Tensor::<f64>::full(&[2, 2], 1.0);
        let (loss, _) = photometric_loss(&left, &warped, &mask).unwrap();
        assert!((loss - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn all_invalid_mask_defines_zero_with_flag() {
        let img = image(2, 2, vec![1.0; 4]);
        let mask = Tensor::<f64>::zeros(&[2, 2]);
        let (loss, degenerate) = photometric_loss(&img, &img, &mask).unwrap();
        assert_eq!(loss, 0.0);
        assert!(degenerate);
    }

    #[test]
    fn constant_disparity_is_perfectly_smooth() {
        let d = Tensor::<f64>::full(&[3, 4], 2.5);
        assert_eq!(smoothness_loss(&d).unwrap(), 0.0);
    }

    #[test]
    fn unit_ramp_on_2x2_matches_hand_evaluation() {
        // D = [[0,1],[0,1]]: dx terms {1,1}, dy terms {0,0} -> mean 0.5
        let d = tensor2(2, 2, vec![0.0, 1.0, 0.0, 1.0]);
        assert!((smoothness_loss(&d).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn tape_losses_match_direct_losses_bitwise() {
        let left = image(3, 4, (0..12).map(|v| (v as f64 * 0.37).sin() * 0.3).collect());
        let right = image(3, 4, (0..12).map(|v| (v as f64 * 0.53).cos() * 0.3).collect());
        let disp = tensor2(3, 4, (0..12).map(|v| (v % 3) as f64 * 0.4).collect());

        let bd = total_loss(&left, &right, &disp, 0.01).unwrap();
        let (warped, mask) = inverse_warp(&right, &disp).unwrap();
        let (recons, _) = photometric_loss(&left, &warped, &mask).unwrap();
        let smooth = smoothness_loss(&disp).unwrap();
        assert_eq!(bd.recons, recons);
        assert_eq!(bd.smooth, smooth);
        assert_eq!(bd.total, recons + 0.01 * smooth);
    }

    #[test]
    fn gamma_zero_total_equals_recons() {
        let left = image(2, 3, vec![0.1; 6]);
        let right = image(2, 3, vec![0.2; 6]);
        let disp = tensor2(2, 3, vec![0.5; 6]);
        let bd = total_loss(&left, &right, &disp, 0.0).unwrap();
        assert_eq!(bd.total, bd.recons);
    }

    #[test]
    fn loss_zero_on_self_with_zero_disparity() {
        let left = image(2, 3, vec![0.3, -0.1, 0.2, 0.0, 0.1, -0.4]);
        let disp = Tensor::<f64>::zeros(&[2, 3]);
        let bd = total_loss(&left, &left, &disp, 0.01).unwrap();
        assert_eq!(bd.total, 0.0);
    }

    #[test]
    fn linearized_warp_with_equal_disparities_is_exact_warp() {
        let right = image(2, 4, (0..8).map(|v| (v as f64).sin()).collect());
        let d = tensor2(2, 4, vec![0.7; 8]);
        let (lin, _) = linearized_warp(&right, &d, &d).unwrap();
        let (exact, _) = inverse_warp(&right, &d).unwrap();
        assert_eq!(lin.data(), exact.data());
    }

    #[test]
    fn depth_conversion_matches_formula_and_round_trips() {
        let cal = Calibration::new(100.0, 0.54).unwrap();
        let d = DisparityMap::new(tensor2(1, 2, vec![27.0, 2.0])).unwrap();
        let depth = disparity_to_depth(&d, &cal, (1.0, 50.0)).unwrap();
        assert!((depth.values().data()[0] - 2.0).abs() < 1e-12);
        assert!((depth.values().data()[1] - 27.0).abs() < 1e-12);
        let back = depth_to_disparity(&depth, &cal);
        for (a, b) in back.values().data().iter().zip(d.values().data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_disparity_clamps_to_max_depth() {
        let cal = Calibration::new(100.0, 0.54).unwrap();
        let d = DisparityMap::new(tensor2(1, 1, vec![0.0])).unwrap();
        let depth = disparity_to_depth(&d, &cal, (1.0, 50.0)).unwrap();
        assert_eq!(depth.values().data()[0], 50.0);
    }
}
