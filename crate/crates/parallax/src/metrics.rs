//! The seven depth error/accuracy measures, the evaluation protocol
//! (upsample, convert, clamp, crop), and error heat-map export.

use crate::data::{resize_disparity, StereoSample};
use crate::error::{Error, Result};
use crate::geometry::{self, DepthMap, DisparityMap};
use crate::scalar::{c, Scalar};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// RMS, log RMS (natural log), absolute relative, squared relative, and the
/// three delta accuracies (fraction with max(d/gt, gt/d) < 1.25^k).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rms: f64,
    pub log_rms: f64,
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub acc_1: f64,
    pub acc_2: f64,
    pub acc_3: f64,
    pub n_pixels: usize,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "rms,log_rms,abs_rel,sq_rel,delta1,delta2,delta3";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.rms, self.log_rms, self.abs_rel, self.sq_rel, self.acc_1, self.acc_2, self.acc_3
        )
    }

    pub fn kv_text(&self) -> String {
        format!(
            "rms={}\nlog_rms={}\nabs_rel={}\nsq_rel={}\ndelta1={}\ndelta2={}\ndelta3={}\nn_pixels={}\n",
            self.rms,
            self.log_rms,
            self.abs_rel,
            self.sq_rel,
            self.acc_1,
            self.acc_2,
            self.acc_3,
            self.n_pixels
        )
    }
}

/// Computes the seven measures over `valid` pixels (all pixels when no mask
/// is given). Depths must be positive wherever valid.
pub fn compute_metrics<F: Scalar>(
    pred: &DepthMap<F>,
    gt: &DepthMap<F>,
    valid: Option<&Tensor<F>>,
) -> Result<MetricsReport> {
    if pred.values().shape() != gt.values().shape() {
        return Err(Error::Config(format!(
            "depth map shapes differ: {:?} vs {:?}",
            pred.values().shape(),
            gt.values().shape()
        )));
    }
    if let Some(m) = valid {
        if m.shape() != pred.values().shape() {
            return Err(Error::Config("validity mask shape mismatch".into()));
        }
    }
    let p = pred.values().data();
    let g = gt.values().data();
    let mut n = 0usize;
    let (mut se, mut sle, mut sar, mut ssr) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let (mut a1, mut a2, mut a3) = (0usize, 0usize, 0usize);
    let (t1, t2, t3) = (1.25f64, 1.25f64 * 1.25, 1.25f64 * 1.25 * 1.25);
    for i in 0..p.len() {
        if let Some(m) = valid {
            if m.data()[i] == F::zero() {
                continue;
            }
        }
        let (pi, gi) = (p[i].to_f64_lossy(), g[i].to_f64_lossy());
        if pi <= 0.0 || gi <= 0.0 {
            return Err(Error::Eval(format!(
                "non-positive depth at valid pixel {i}: pred {pi}, gt {gi}"
            )));
        }
        n += 1;
        let e = pi - gi;
        se += e * e;
        let le = pi.ln() - gi.ln();
        sle += le * le;
        sar += e.abs() / gi;
        ssr += e * e / gi;
        let ratio = (pi / gi).max(gi / pi);
        if ratio < t1 {
            a1 += 1;
        }
        if ratio < t2 {
            a2 += 1;
        }
        if ratio < t3 {
            a3 += 1;
        }
    }
    if n == 0 {
        return Err(Error::Eval("no valid pixels to evaluate".into()));
    }
    let nf = n as f64;
    Ok(MetricsReport {
        rms: (se / nf).sqrt(),
        log_rms: (sle / nf).sqrt(),
        abs_rel: sar / nf,
        sq_rel: ssr / nf,
        acc_1: a1 as f64 / nf,
        acc_2: a2 as f64 / nf,
        acc_3: a3 as f64 / nf,
        n_pixels: n,
    })
}

/// Inclusive-exclusive crop rectangle `[top, left, bottom, right)`.
pub type CropRect = [usize; 4];

fn crop_map<F: Scalar>(t: &Tensor<F>, rect: CropRect) -> Result<Tensor<F>> {
    let (h, w) = (t.shape()[0], t.shape()[1]);
    let [top, left, bottom, right] = rect;
    if top >= bottom || left >= right || bottom > h || right > w {
        return Err(Error::Config(format!(
            "crop {rect:?} invalid for a {h}x{w} map"
        )));
    }
    let mut out = Vec::with_capacity((bottom - top) * (right - left));
    for y in top..bottom {
        out.extend_from_slice(&t.data()[y * w + left..y * w + right]);
    }
    Tensor::from_vec(&[bottom - top, right - left], out)
}

/// Full evaluation protocol for a predicted disparity at any resolution:
/// upsample to the capture resolution, convert to depth with clamping,
/// crop the region of interest (full image by default), and compare with
/// the ground truth depth `fB / D_gt` where it is defined (`D_gt > 0`).
pub fn evaluation_protocol<F: Scalar>(
    pred: &DisparityMap<F>,
    sample: &StereoSample<F>,
    crop: Option<CropRect>,
    clamp: (f64, f64),
) -> Result<MetricsReport> {
    let gt = sample
        .gt_disparity
        .as_ref()
        .ok_or_else(|| Error::Eval(format!("sample {} has no ground truth", sample.id)))?;
    let [h, w] = sample.resolution();
    let up = resize_disparity(pred.values(), h, w)?;
    let pred_depth =
        geometry::disparity_to_depth(&DisparityMap::new(up)?, &sample.calibration, clamp)?;

    let fb = c::<F>(sample.calibration.fb());
    let gt_depth = gt.map(|d| if d > F::zero() { fb / d } else { F::zero() });
    let valid = gt.map(|d| if d > F::zero() { F::one() } else { F::zero() });

    let rect = crop.unwrap_or([0, 0, h, w]);
    let pd = crop_map(pred_depth.values(), rect)?;
    let gd = crop_map(&gt_depth, rect)?;
    let vm = crop_map(&valid, rect)?;
    compute_metrics(&DepthMap::new(pd)?, &DepthMap::new(gd)?, Some(&vm))
}

/// Per-pixel absolute difference.
pub fn abs_error_map<F: Scalar>(pred: &Tensor<F>, gt: &Tensor<F>) -> Result<Tensor<F>> {
    if pred.shape() != gt.shape() {
        return Err(Error::Config("error map shapes differ".into()));
    }
    Ok(Tensor::from_vec_unchecked(
        pred.shape(),
        pred.data()
            .iter()
            .zip(gt.data())
            .map(|(&a, &b)| (a - b).abs())
            .collect(),
    ))
}

// fixed ramp stops: dark blue -> cyan -> yellow -> red
const RAMP: [(f64, [f64; 3]); 4] = [
    (0.0, [0.05, 0.05, 0.55]),
    (0.33, [0.05, 0.65, 0.90]),
    (0.66, [0.95, 0.90, 0.10]),
    (1.0, [0.85, 0.05, 0.05]),
];

fn ramp_color(t: f64) -> [f64; 3] {
    let t = t.clamp(0.0, 1.0);
    for pair in RAMP.windows(2) {
        let (t0, c0) = pair[0];
        let (t1, c1) = pair[1];
        if t <= t1 {
            let u = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
            return [
                c0[0] + u * (c1[0] - c0[0]),
                c0[1] + u * (c1[1] - c0[1]),
                c0[2] + u * (c1[2] - c0[2]),
            ];
        }
    }
    RAMP[3].1
}

/// Colors |pred - gt| through the fixed ramp, normalized by the map's own
/// maximum (a perfect prediction renders uniformly in the coldest color).
/// Returns `[3,H,W]` with values in [0,1].
pub fn error_heatmap<F: Scalar>(pred: &DepthMap<F>, gt: &DepthMap<F>) -> Result<Tensor<F>> {
    let err = abs_error_map(pred.values(), gt.values())?;
    colorize_error_map(&err)
}

pub fn colorize_error_map<F: Scalar>(err: &Tensor<F>) -> Result<Tensor<F>> {
    let (cch, h, w) = err.spatial_dims()?;
    if cch != 1 {
        return Err(Error::Config("error map must be single-channel".into()));
    }
    let max = err
        .data()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.to_f64_lossy()));
    let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
    let mut out = vec![F::zero(); 3 * h * w];
    for s in 0..h * w {
        let rgb = ramp_color(err.data()[s].to_f64_lossy() * scale);
        for (ch, &v) in rgb.iter().enumerate() {
            out[ch * h * w + s] = c::<F>(v);
        }
    }
    Ok(Tensor::from_vec_unchecked(&[3, h, w], out))
}

/// Writes a `[3,H,W]` map with values in [0,1] as an 8-bit PNG.
pub fn save_heatmap_png<F: Scalar>(path: &Path, heat: &Tensor<F>) -> Result<()> {
    let (cch, h, w) = heat.spatial_dims()?;
    if cch != 3 {
        return Err(Error::Config("heat map must be [3,H,W]".into()));
    }
    let mut img = image::RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let px = |ch: usize| {
                (heat.data()[ch * h * w + y * w + x].to_f64_lossy() * 255.0)
                    .round()
                    .clamp(0.0, 255.0) as u8
            };
            img.put_pixel(x as u32, y as u32, image::Rgb([px(0), px(1), px(2)]));
        }
    }
    img.save(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Inverse-depth visualization scaled to [0,1] (brighter = closer),
/// exported alongside heat maps for qualitative inspection.
pub fn inverse_depth_image<F: Scalar>(depth: &DepthMap<F>) -> Result<Tensor<F>> {
    let (h, w) = (depth.height(), depth.width());
    let inv: Vec<f64> = depth
        .values()
        .data()
        .iter()
        .map(|d| {
            let d = d.to_f64_lossy();
            if d > 0.0 {
                1.0 / d
            } else {
                0.0
            }
        })
        .collect();
    let max = inv.iter().cloned().fold(0.0f64, f64::max);
    let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
    Ok(Tensor::from_vec_unchecked(
        &[h, w],
        inv.into_iter().map(|v| c::<F>(v * scale)).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn depth(h: usize, w: usize, v: Vec<f64>) -> DepthMap<f64> {
        DepthMap::new(Tensor::from_vec(&[h, w], v).unwrap()).unwrap()
    }

    #[test]
    fn perfect_prediction_scores_zero_errors_full_accuracy() {
        let gt = depth(1, 3, vec![2.0, 5.0, 8.0]);
        let m = compute_metrics(&gt, &gt, None).unwrap();
        assert_eq!(
            (m.rms, m.log_rms, m.abs_rel, m.sq_rel),
            (0.0, 0.0, 0.0, 0.0)
        );
        assert_eq!((m.acc_1, m.acc_2, m.acc_3), (1.0, 1.0, 1.0));
        assert_eq!(m.n_pixels, 3);
    }

    #[test]
    fn doubled_prediction_fails_all_delta_thresholds() {
        // ratio 2 exceeds 1.25^3 = 1.953125, so every accuracy is 0
        let gt = depth(1, 2, vec![3.0, 6.0]);
        let pred = depth(1, 2, vec![6.0, 12.0]);
        let m = compute_metrics(&pred, &gt, None).unwrap();
        assert!((m.abs_rel - 1.0).abs() < 1e-15);
        assert_eq!((m.acc_1, m.acc_2, m.acc_3), (0.0, 0.0, 0.0));
    }

    #[test]
    fn three_pixel_toy_matches_hand_numbers() {
        let pred = depth(1, 3, vec![2.0, 4.0, 10.0]);
        let gt = depth(1, 3, vec![2.0, 5.0, 8.0]);
        let m = compute_metrics(&pred, &gt, None).unwrap();
        assert!((m.rms - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((m.abs_rel - 0.15).abs() < 1e-15);
    }

    #[test]
    fn accuracies_are_nested() {
        let pred = depth(1, 4, vec![1.0, 1.3, 1.9, 2.5]);
        let gt = depth(1, 4, vec![1.0, 1.0, 1.0, 1.0]);
        let m = compute_metrics(&pred, &gt, None).unwrap();
        assert!(m.acc_1 <= m.acc_2 && m.acc_2 <= m.acc_3);
    }

    #[test]
    fn degrading_one_pixel_never_improves_any_metric() {
        let gt = depth(1, 4, vec![2.0, 5.0, 8.0, 20.0]);
        let base = compute_metrics(&gt, &gt, None).unwrap();
        for i in 0..4 {
            for delta in [0.5, -0.5, 3.0] {
                let mut v = gt.values().data().to_vec();
                v[i] += delta;
                let worse = compute_metrics(&depth(1, 4, v), &gt, None).unwrap();
                assert!(worse.rms >= base.rms);
                assert!(worse.log_rms >= base.log_rms);
                assert!(worse.abs_rel >= base.abs_rel);
                assert!(worse.sq_rel >= base.sq_rel);
                assert!(worse.acc_1 <= base.acc_1);
                assert!(worse.acc_2 <= base.acc_2);
                assert!(worse.acc_3 <= base.acc_3);
            }
        }
    }

    #[test]
    fn empty_valid_set_is_an_evaluation_error() {
        let gt = depth(1, 2, vec![1.0, 2.0]);
        let mask = Tensor::<f64>::zeros(&[1, 2]);
        assert!(matches!(
            compute_metrics(&gt, &gt, Some(&mask)),
            Err(Error::Eval(_))
        ));
    }

    #[test]
    fn heatmap_is_cold_on_perfect_and_hot_on_single_error() {
        let gt = depth(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let heat = error_heatmap(&gt, &gt).unwrap();
        let first = [heat.data()[0], heat.data()[4], heat.data()[8]];
        for s in 0..4 {
            assert_eq!(heat.data()[s], first[0]);
            assert_eq!(heat.data()[4 + s], first[1]);
            assert_eq!(heat.data()[8 + s], first[2]);
        }
        let mut wrong = gt.values().data().to_vec();
        wrong[2] += 2.0;
        let heat = error_heatmap(&depth(2, 2, wrong), &gt).unwrap();
        // hottest channel pattern at pixel 2, coldest elsewhere
        assert!(heat.data()[2] > heat.data()[0]); // red channel
        assert!(heat.data()[8 + 2] < heat.data()[8]); // blue channel
    }
}
