//! Variational Horn-Schunck stereo (coarse-to-fine, iterative warping) and
//! proxy-supervised training: regressing the encoder against classical
//! stereo output with hole-masked least squares.
//!
//! The solver minimizes, per pyramid level, the linearized photometric term
//! plus `gamma_hs * ||grad D||^2` (sum form) by Gauss-Seidel sweeps on the
//! Euler-Lagrange equations, re-linearizing the warp between sweeps. An
//! energy guard halves the increment whenever a step would increase the
//! true (non-linearized) energy, so the per-level energy trace is
//! non-increasing by construction.

use crate::data::{flip_swap, resize_disparity, resize_to, StereoSample};
use crate::error::{Error, Result};
use crate::geometry::{self, DisparityMap};
use crate::net::Network;
use crate::scalar::{c, Scalar};
use crate::tensor::Tensor;
use crate::train::{
    run_training, EpochHook, Objective, OptimizerConfig, StageSchedule, TrainState,
};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HsConfig {
    pub pyramid_levels: usize,
    pub pyramid_scale: f64,
    /// Outer (re-linearization) iterations per level.
    pub warp_iterations: usize,
    /// Smoothness strength of the stereo energy.
    pub gamma_hs: f64,
    /// Gauss-Seidel sweeps per linearization.
    pub inner_iterations: usize,
    /// Gauss-Seidel stop threshold (max absolute update).
    pub inner_tolerance: f64,
    /// Early exit when a warp iteration changes no pixel more than this.
    pub warp_tolerance: f64,
}

impl Default for HsConfig {
    fn default() -> Self {
        HsConfig {
            pyramid_levels: 6,
            pyramid_scale: 0.5,
            warp_iterations: 1000,
            gamma_hs: 0.01,
            inner_iterations: 100,
            inner_tolerance: 1e-6,
            warp_tolerance: 1e-4,
        }
    }
}

impl HsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.pyramid_scale && self.pyramid_scale < 1.0) {
            return Err(Error::Config(format!(
                "pyramid scale must be in (0,1), got {}",
                self.pyramid_scale
            )));
        }
        if self.pyramid_levels == 0 || self.warp_iterations == 0 {
            return Err(Error::Config(
                "pyramid levels and warp iterations must be positive".into(),
            ));
        }
        if self.gamma_hs < 0.0 {
            return Err(Error::Config("gamma_hs must be non-negative".into()));
        }
        Ok(())
    }
}

/// Solver audit trail for one pyramid level.
#[derive(Clone, Debug)]
pub struct LevelTrace<F: Scalar> {
    pub level: usize,
    /// `[H, W]` at this level.
    pub resolution: [usize; 2],
    /// The initialization actually used (upscaled coarser result).
    pub init: Tensor<F>,
    pub final_disparity: Tensor<F>,
    /// True energy after each accepted warp iteration.
    pub energies: Vec<f64>,
}

pub struct HsResult<F: Scalar> {
    pub disparity: DisparityMap<F>,
    pub trace: Vec<LevelTrace<F>>,
}

/// Sum-form energy used by the solver and its audit:
/// sum_x m(x) ||warp(right, D)(x) - left(x)||^2 + gamma * sum ||grad D||^2.
pub fn hs_energy<F: Scalar>(
    left: &Tensor<F>,
    right: &Tensor<F>,
    d: &Tensor<F>,
    gamma: f64,
) -> Result<f64> {
    let (warped, mask) = geometry::inverse_warp(right, d)?;
    let (ch, h, w) = left.spatial_dims()?;
    let mut data = 0.0f64;
    for cc in 0..ch {
        let base = cc * h * w;
        for s in 0..h * w {
            let diff =
                (warped.data()[base + s] - left.data()[base + s]).to_f64_lossy();
            data += diff * diff * mask.data()[s].to_f64_lossy();
        }
    }
    let dd = d.data();
    let mut smooth = 0.0f64;
    for y in 0..h {
        for x in 0..w - 1 {
            let v = (dd[y * w + x + 1] - dd[y * w + x]).to_f64_lossy();
            smooth += v * v;
        }
    }
    for y in 0..h - 1 {
        for x in 0..w {
            let v = (dd[(y + 1) * w + x] - dd[y * w + x]).to_f64_lossy();
            smooth += v * v;
        }
    }
    Ok(data + gamma * smooth)
}

/// One linearization + Gauss-Seidel solve, returning the proposed update.
fn solve_linearized<F: Scalar>(
    left: &Tensor<F>,
    right: &Tensor<F>,
    d: &Tensor<F>,
    cfg: &HsConfig,
) -> Result<Tensor<F>> {
    let (ch, h, w) = left.spatial_dims()?;
    let (warped, mask) = geometry::inverse_warp(right, d)?;
    let grad = geometry::horizontal_gradient(right)?;
    let (grad_w, _) = geometry::inverse_warp(&grad, d)?;

    // per-pixel normal-equation coefficients, summed over channels
    let mut a = vec![0.0f64; h * w];
    let mut b = vec![0.0f64; h * w];
    for cc in 0..ch {
        let base = cc * h * w;
        for s in 0..h * w {
            let ix = grad_w.data()[base + s].to_f64_lossy();
            let it = (warped.data()[base + s] - left.data()[base + s]).to_f64_lossy();
            a[s] += ix * ix;
            b[s] += ix * it;
        }
    }

    let gamma = cfg.gamma_hs;
    let mut dn: Vec<f64> = d.data().iter().map(|v| v.to_f64_lossy()).collect();
    let d0: Vec<f64> = dn.clone();
    for _ in 0..cfg.inner_iterations {
        let mut max_change = 0.0f64;
        for y in 0..h {
            for x in 0..w {
                let s = y * w + x;
                let m = mask.data()[s].to_f64_lossy();
                let mut nsum = 0.0f64;
                let mut deg = 0.0f64;
                if x > 0 {
                    nsum += dn[s - 1];
                    deg += 1.0;
                }
                if x + 1 < w {
                    nsum += dn[s + 1];
                    deg += 1.0;
                }
                if y > 0 {
                    nsum += dn[s - w];
                    deg += 1.0;
                }
                if y + 1 < h {
                    nsum += dn[s + w];
                    deg += 1.0;
                }
                let denom = m * a[s] + gamma * deg;
                if denom <= 0.0 {
                    continue;
                }
                let new = (m * (a[s] * d0[s] - b[s]) + gamma * nsum) / denom;
                max_change = max_change.max((new - dn[s]).abs());
                dn[s] = new;
            }
        }
        if max_change < cfg.inner_tolerance {
            break;
        }
    }
    Ok(Tensor::from_vec_unchecked(
        d.shape(),
        dn.into_iter().map(|v| F::from_f64(v)).collect(),
    ))
}

/// Coarse-to-fine Horn-Schunck stereo with the full audit trace.
pub fn hs_stereo_traced<F: Scalar>(
    pair: &StereoSample<F>,
    cfg: &HsConfig,
) -> Result<HsResult<F>> {
    cfg.validate()?;
    let [h, w] = pair.resolution();

    // pyramid resolutions, finest first
    let mut sizes = vec![[h, w]];
    for _ in 1..cfg.pyramid_levels {
        let [ph, pw] = *sizes.last().expect("non-empty");
        let nh = ((ph as f64) * cfg.pyramid_scale).round() as usize;
        let nw = ((pw as f64) * cfg.pyramid_scale).round() as usize;
        if nh < 2 || nw < 2 {
            break;
        }
        sizes.push([nh, nw]);
    }

    let mut trace = Vec::new();
    let mut d: Option<Tensor<F>> = None;
    for (level, &[lh, lw]) in sizes.iter().enumerate().rev() {
        let left = resize_to(&pair.left, lh, lw)?;
        let right = resize_to(&pair.right, lh, lw)?;
        let init = match &d {
            None => Tensor::zeros(&[lh, lw]),
            Some(prev) => resize_disparity(prev, lh, lw)?,
        };
        let mut cur = init.clone();
        let mut energy = hs_energy(&left, &right, &cur, cfg.gamma_hs)?;
        let mut energies = Vec::new();
        for _ in 0..cfg.warp_iterations {
            let proposal = solve_linearized(&left, &right, &cur, cfg)?;
            // guard: never accept a step that raises the true energy
            let mut accepted = None;
            let mut step = 1.0f64;
            for _ in 0..8 {
                let blended = if step == 1.0 {
                    proposal.clone()
                } else {
                    let s = c::<F>(step);
                    Tensor::from_vec_unchecked(
                        cur.shape(),
                        cur.data()
                            .iter()
                            .zip(proposal.data())
                            .map(|(&old, &new)| old + s * (new - old))
                            .collect(),
                    )
                };
                let e = hs_energy(&left, &right, &blended, cfg.gamma_hs)?;
                if e <= energy {
                    accepted = Some((blended, e));
                    break;
                }
                step *= 0.5;
            }
            let Some((next, e)) = accepted else {
                // no admissible step: keep the best iterate and stop
                energies.push(energy);
                break;
            };
            let max_change = cur
                .data()
                .iter()
                .zip(next.data())
                .map(|(&o, &n)| (n - o).abs().to_f64_lossy())
                .fold(0.0f64, f64::max);
            cur = next;
            energy = e;
            energies.push(energy);
            if max_change < cfg.warp_tolerance {
                break;
            }
        }
        trace.push(LevelTrace {
            level,
            resolution: [lh, lw],
            init,
            final_disparity: cur.clone(),
            energies,
        });
        d = Some(cur);
    }

    Ok(HsResult {
        disparity: DisparityMap::new(d.expect("at least one level"))?,
        trace,
    })
}

/// Coarse-to-fine Horn-Schunck stereo.
pub fn hs_stereo<F: Scalar>(pair: &StereoSample<F>, cfg: &HsConfig) -> Result<DisparityMap<F>> {
    Ok(hs_stereo_traced(pair, cfg)?.disparity)
}

/// Disparity labels from a stereo engine plus a validity mask; the training
/// loss only reads pixels with `valid == 1`.
#[derive(Clone, Debug)]
pub struct ProxyLabel<F: Scalar> {
    pub disparity: Tensor<F>,
    pub valid: Tensor<F>,
}

impl<F: Scalar> ProxyLabel<F> {
    pub fn new(disparity: Tensor<F>, valid: Tensor<F>) -> Result<Self> {
        if disparity.shape() != valid.shape() || disparity.shape().len() != 2 {
            return Err(Error::Config(format!(
                "proxy label shapes must be equal [H,W], got {:?} and {:?}",
                disparity.shape(),
                valid.shape()
            )));
        }
        Ok(ProxyLabel { disparity, valid })
    }

    pub fn valid_count(&self) -> usize {
        self.valid.data().iter().filter(|&&v| v != F::zero()).count()
    }

    pub fn hole_fraction(&self) -> f64 {
        1.0 - self.valid_count() as f64 / self.valid.numel() as f64
    }
}

/// Which stereo engine produces the proxy disparities.
#[derive(Clone, Debug)]
pub enum ProxyEngine {
    Hs(HsConfig),
    /// Synthetic ground truth (test oracle).
    GroundTruth,
}

#[derive(Clone, Debug)]
pub struct ProxyOptions {
    pub engine: ProxyEngine,
    /// Mask out pixels failing the left-right consistency check (or, for the
    /// ground-truth engine, the exact occlusion mask), reproducing the
    /// systematic holes a semi-global matcher would leave.
    pub inject_holes: bool,
    /// Consistency threshold in pixels.
    pub consistency_px: f64,
}

impl Default for ProxyOptions {
    fn default() -> Self {
        ProxyOptions {
            engine: ProxyEngine::Hs(HsConfig::default()),
            inject_holes: false,
            consistency_px: 1.0,
        }
    }
}

fn sample_linear<F: Scalar>(map: &Tensor<F>, y: usize, xs: f64) -> Option<f64> {
    let (h, w) = (map.shape()[0], map.shape()[1]);
    debug_assert!(y < h);
    if !(0.0..=(w - 1) as f64).contains(&xs) {
        return None;
    }
    let x0 = (xs.floor() as usize).min(w - 1);
    let t = xs - x0 as f64;
    let a = map.data()[y * w + x0].to_f64_lossy();
    if x0 + 1 < w {
        let b = map.data()[y * w + x0 + 1].to_f64_lossy();
        Some(a + t * (b - a))
    } else {
        Some(a)
    }
}

/// Runs the engine over the dataset. With `inject_holes`, validity comes
/// from a left-right consistency check: the pair is flip-swapped, solved
/// again, and pixels where the two disparities disagree by more than
/// `consistency_px` at the corresponding location are masked out.
pub fn make_proxy_labels<F: Scalar>(
    dataset: &[StereoSample<F>],
    opts: &ProxyOptions,
) -> Result<Vec<ProxyLabel<F>>> {
    dataset
        .iter()
        .map(|pair| {
            let [h, w] = pair.resolution();
            match &opts.engine {
                ProxyEngine::GroundTruth => {
                    let gt = pair.gt_disparity.as_ref().ok_or_else(|| {
                        Error::Config(format!("sample {} has no ground truth", pair.id))
                    })?;
                    let valid = if opts.inject_holes {
                        match &pair.occlusion {
                            Some(occ) => occ.map(|v| F::one() - v),
                            None => Tensor::full(&[h, w], F::one()),
                        }
                    } else {
                        Tensor::full(&[h, w], F::one())
                    };
                    ProxyLabel::new(gt.clone(), valid)
                }
                ProxyEngine::Hs(cfg) => {
                    let d_lr = hs_stereo(pair, cfg)?.into_values();
                    let valid = if opts.inject_holes {
                        let flipped = flip_swap(pair);
                        let d_rl_flipped = hs_stereo(&flipped, cfg)?.into_values();
                        // un-mirror: disparity of the right image
                        let mut d_rl = vec![F::zero(); h * w];
                        for y in 0..h {
                            for x in 0..w {
                                d_rl[y * w + x] =
                                    d_rl_flipped.data()[y * w + (w - 1 - x)];
                            }
                        }
                        let d_rl = Tensor::from_vec_unchecked(&[h, w], d_rl);
                        let mut valid = vec![F::zero(); h * w];
                        for y in 0..h {
                            for x in 0..w {
                                let dl = d_lr.data()[y * w + x].to_f64_lossy();
                                let ok = sample_linear(&d_rl, y, x as f64 + dl)
                                    .map(|dr| (dl - dr).abs() <= opts.consistency_px)
                                    .unwrap_or(false);
                                if ok {
                                    valid[y * w + x] = F::one();
                                }
                            }
                        }
                        Tensor::from_vec_unchecked(&[h, w], valid)
                    } else {
                        Tensor::full(&[h, w], F::one())
                    };
                    ProxyLabel::new(d_lr, valid)
                }
            }
        })
        .collect()
}

/// Mean hole fraction over a label set.
pub fn hole_fraction<F: Scalar>(labels: &[ProxyLabel<F>]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    labels.iter().map(|l| l.hole_fraction()).sum::<f64>() / labels.len() as f64
}

/// Trains the encoder against proxy labels with the same stage-wise
/// machinery as the unsupervised path, minimizing the hole-masked least
/// squares disparity difference.
pub fn train_proxy_supervised<F: Scalar>(
    net: &mut Network<F>,
    dataset: &[StereoSample<F>],
    labels: Vec<ProxyLabel<F>>,
    schedule: &StageSchedule,
    cfg: &OptimizerConfig,
    state: &mut TrainState<F>,
    on_epoch: Option<EpochHook<'_, F>>,
) -> Result<()> {
    run_training(
        net,
        dataset,
        &Objective::ProxyDisparity { labels },
        schedule,
        cfg,
        state,
        on_epoch,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{SceneFamily, TextureKind};
    use crate::geometry::Calibration;

    fn desk_hs() -> HsConfig {
        HsConfig {
            pyramid_levels: 5,
            warp_iterations: 30,
            inner_iterations: 40,
            gamma_hs: 0.01,
            ..HsConfig::default()
        }
    }

    #[test]
    fn identical_images_give_exactly_zero_disparity() {
        let family = SceneFamily {
            image_size: [24, 64],
            surfaces: [0, 0],
            ..SceneFamily::desk_default()
        };
        let mut s: StereoSample<f64> = family.generate(1, "z", 3).unwrap().remove(0);
        s.right = s.left.clone();
        let d = hs_stereo(&s, &desk_hs()).unwrap();
        assert!(d.values().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_plane_recovers_integer_disparity() {
        let cal = Calibration::new(100.0, 0.54).unwrap();
        let family = SceneFamily {
            image_size: [32, 96],
            calibration: cal,
            surfaces: [0, 0],
            background_disparity: [4.0, 4.0],
            integer_disparities: true,
            texture: TextureKind::Noise,
            texture_scale: 10.0,
            texture_amplitude: 0.4,
            shading_gain: 0.0,
            disparity_range: [4.0, 4.0],
        };
        let s: StereoSample<f64> = family.generate(1, "p", 9).unwrap().remove(0);
        let d = hs_stereo(&s, &desk_hs()).unwrap();
        let mut errs: Vec<f64> = d.values().data().iter().map(|&v| (v - 4.0).abs()).collect();
        errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = errs[errs.len() / 2];
        assert!(median < 0.25, "median error {median}");
    }

    #[test]
    fn textureless_pair_stays_near_zero() {
        let family = SceneFamily {
            image_size: [16, 48],
            surfaces: [0, 0],
            texture_amplitude: 0.0,
            shading_gain: 0.0,
            background_disparity: [3.0, 3.0],
            ..SceneFamily::desk_default()
        };
        let s: StereoSample<f64> = family.generate(1, "t", 1).unwrap().remove(0);
        let d = hs_stereo(&s, &desk_hs()).unwrap();
        for &v in d.values().data() {
            assert!(v.abs() < 1e-6, "prior should pin flat scenes at zero, got {v}");
        }
    }

    #[test]
    fn energies_non_increasing_and_pyramid_consistent() {
        let family = SceneFamily {
            image_size: [24, 72],
            ..SceneFamily::desk_default()
        };
        let s: StereoSample<f64> = family.generate(1, "e", 5).unwrap().remove(0);
        let result = hs_stereo_traced(&s, &desk_hs()).unwrap();
        for level in &result.trace {
            for pair in level.energies.windows(2) {
                assert!(
                    pair[1] <= pair[0] + 1e-8,
                    "energy rose at level {}: {} -> {}",
                    level.level,
                    pair[0],
                    pair[1]
                );
            }
        }
        // each level's init is the upscaled previous final
        for k in 1..result.trace.len() {
            let prev = &result.trace[k - 1];
            let cur = &result.trace[k];
            let up = resize_disparity(
                &prev.final_disparity,
                cur.resolution[0],
                cur.resolution[1],
            )
            .unwrap();
            assert_eq!(up.data(), cur.init.data());
        }
    }

    #[test]
    fn ground_truth_proxy_labels_match_gt_and_holes_match_occlusion() {
        let family = SceneFamily {
            image_size: [16, 48],
            ..SceneFamily::desk_default()
        };
        let dataset: Vec<StereoSample<f64>> = family.generate(2, "g", 7).unwrap();
        let perfect = make_proxy_labels(
            &dataset,
            &ProxyOptions {
                engine: ProxyEngine::GroundTruth,
                inject_holes: false,
                consistency_px: 1.0,
            },
        )
        .unwrap();
        for (l, s) in perfect.iter().zip(&dataset) {
            assert_eq!(l.disparity.data(), s.gt_disparity.as_ref().unwrap().data());
            assert_eq!(l.hole_fraction(), 0.0);
        }
        let holed = make_proxy_labels(
            &dataset,
            &ProxyOptions {
                engine: ProxyEngine::GroundTruth,
                inject_holes: true,
                consistency_px: 1.0,
            },
        )
        .unwrap();
        for (l, s) in holed.iter().zip(&dataset) {
            let occ = s.occlusion.as_ref().unwrap();
            let occluded: usize = occ.data().iter().filter(|&&v| v != 0.0).count();
            assert_eq!(l.valid_count(), occ.numel() - occluded);
        }
    }

    #[test]
    fn consistency_holes_cover_the_occluded_band() {
        let cal = Calibration::new(100.0, 0.54).unwrap();
        let spec = crate::data::SyntheticSceneSpec {
            id: "two".into(),
            image_size: [24, 72],
            calibration: cal,
            background_depth_m: cal.fb() / 1.5,
            background_seed: 2,
            surfaces: vec![crate::data::SurfaceSpec {
                depth_m: cal.fb() / 5.5,
                rect: [20, 4, 44, 20],
                texture_seed: 8,
            }],
            texture: TextureKind::Noise,
            texture_scale: 14.0,
            texture_amplitude: 0.45,
            shading_gain: 0.0,
        };
        let s: StereoSample<f64> =
            crate::data::generate_synthetic_pair(&spec).unwrap();
        let cfg = HsConfig {
            pyramid_levels: 4,
            warp_iterations: 100,
            inner_iterations: 80,
            gamma_hs: 0.002,
            ..HsConfig::default()
        };
        let labels = make_proxy_labels(
            std::slice::from_ref(&s),
            &ProxyOptions {
                engine: ProxyEngine::Hs(cfg),
                inject_holes: true,
                consistency_px: 1.0,
            },
        )
        .unwrap();
        let occluded = s.occlusion.as_ref().unwrap();
        let occ_frac = occluded.data().iter().filter(|&&v| v != 0.0).count() as f64
            / occluded.numel() as f64;
        let hole_frac = labels[0].hole_fraction();
        assert!(
            (hole_frac - occ_frac).abs() < 0.02,
            "hole fraction {hole_frac} vs occluded fraction {occ_frac}"
        );
        // the holes concentrate on the true occlusion band
        let mut hit = 0usize;
        let mut total = 0usize;
        for (o, v) in occluded.data().iter().zip(labels[0].valid.data()) {
            if *o != 0.0 {
                total += 1;
                if *v == 0.0 {
                    hit += 1;
                }
            }
        }
        assert!(
            hit as f64 >= 0.35 * total as f64,
            "only {hit}/{total} occluded pixels masked"
        );
    }
}
