//! Central finite-difference validation of analytic gradients.
//!
//! The numeric side only ever re-runs forward passes, so it stays
//! independent of the backward rules it is checking. All checks run in f64.

use crate::error::Result;
use crate::geometry;
use crate::ops::lrn::LrnParams;
use crate::ops::{upsample, CropPad, Pad2};
use crate::tape::{Tape, VarId};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug)]
pub struct CheckConfig {
    /// Central-difference step.
    pub step: f64,
    /// Maximum allowed elementwise relative error.
    pub tolerance: f64,
    /// Components where both gradients are below this magnitude are skipped.
    pub floor: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            step: 1e-5,
            tolerance: 1e-4,
            floor: 1e-8,
        }
    }
}

/// Result of checking one operation (or the end-to-end composite).
#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: String,
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckOutcome {
    pub fn summary_line(&self) -> String {
        format!(
            "{:<28} {}  max_rel_err {:.3e}  (checked {}, skipped {}, tol {:.1e})",
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.max_rel_err,
            self.checked,
            self.skipped,
            self.tolerance
        )
    }
}

/// One differentiable computation under test: `build` maps input vars to an
/// output var on the tape. A fixed random projection turns the output into
/// a scalar so a single backward pass yields every input gradient.
pub struct GradCase {
    pub name: String,
    pub inputs: Vec<Tensor<f64>>,
    pub build: Box<dyn Fn(&mut Tape<f64>, &[VarId]) -> Result<VarId>>,
    /// Optional component filter: `(input_index, flat_component)` pairs to
    /// exclude (interpolation knots, ReLU kinks).
    pub skip: Option<Box<dyn Fn(usize, usize, &[Tensor<f64>]) -> bool>>,
    /// Check at most this many randomly chosen components per input.
    pub max_components: Option<usize>,
}

fn projection_weights(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            sign * rng.gen_range(0.25..1.0)
        })
        .collect();
    Tensor::from_vec_unchecked(shape, data)
}

fn projected_loss(case: &GradCase, inputs: &[Tensor<f64>], weights: &Tensor<f64>) -> Result<f64> {
    let mut tape = Tape::new();
    let vars: Vec<VarId> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let out = (case.build)(&mut tape, &vars)?;
    let w = tape.constant(weights.clone());
    let prod = tape.mul(out, w)?;
    let loss = tape.sum_all(prod)?;
    Ok(tape.value(loss).item())
}

/// Runs one case: analytic gradients from the tape vs central differences.
pub fn run_case(case: &GradCase, cfg: &CheckConfig, seed: u64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // analytic pass
    let mut tape = Tape::new();
    let vars: Vec<VarId> = case
        .inputs
        .iter()
        .map(|t| tape.leaf(t.clone().with_grad()))
        .collect();
    let out = (case.build)(&mut tape, &vars)?;
    let weights = projection_weights(tape.value(out).shape(), &mut rng);
    let w = tape.constant(weights.clone());
    let prod = tape.mul(out, w)?;
    let loss = tape.sum_all(prod)?;
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(&case.inputs)
        .map(|(v, t)| {
            tape.grad(*v)
                .map(|g| g.to_vec())
                .unwrap_or_else(|| vec![0.0; t.numel()])
        })
        .collect();

    // numeric pass
    let mut checked = 0usize;
    let mut skipped = 0usize;
    let mut max_rel = 0.0f64;
    for (i, input) in case.inputs.iter().enumerate() {
        let n = input.numel();
        let components: Vec<usize> = match case.max_components {
            Some(m) if m < n => {
                let mut idx: Vec<usize> = (0..n).collect();
                for k in 0..m {
                    let j = rng.gen_range(k..n);
                    idx.swap(k, j);
                }
                idx.truncate(m);
                idx
            }
            _ => (0..n).collect(),
        };
        for j in components {
            if let Some(skip) = &case.skip {
                if skip(i, j, &case.inputs) {
                    skipped += 1;
                    continue;
                }
            }
            let mut plus = case.inputs.to_vec();
            plus[i].data_mut()[j] += cfg.step;
            let lp = projected_loss(case, &plus, &weights)?;
            let mut minus = case.inputs.to_vec();
            minus[i].data_mut()[j] -= cfg.step;
            let lm = projected_loss(case, &minus, &weights)?;
            let numeric = (lp - lm) / (2.0 * cfg.step);
            let a = analytic[i][j];
            if a.abs() <= cfg.floor && numeric.abs() <= cfg.floor {
                skipped += 1;
                continue;
            }
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs());
            max_rel = max_rel.max(rel);
            checked += 1;
        }
    }
    Ok(CheckOutcome {
        name: case.name.clone(),
        checked,
        skipped,
        max_rel_err: max_rel,
        tolerance: cfg.tolerance,
        passed: max_rel < cfg.tolerance,
    })
}

fn random_tensor(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::from_vec_unchecked(shape, data)
}

/// Random values bounded away from zero, for ops with a kink at the origin.
fn random_tensor_off_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            sign * rng.gen_range(0.05..1.0)
        })
        .collect();
    Tensor::from_vec_unchecked(shape, data)
}

/// Builds the full per-primitive suite.
pub fn primitive_cases(seed: u64) -> Vec<GradCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::new();

    // conv2d: gradients w.r.t. input, kernel and bias
    cases.push(GradCase {
        name: "conv2d".into(),
        inputs: vec![
            random_tensor(&[2, 5, 5], -1.0, 1.0, &mut rng),
            random_tensor(&[3, 2, 3, 3], -1.0, 1.0, &mut rng),
            random_tensor(&[3], -0.5, 0.5, &mut rng),
        ],
        build: Box::new(|tape, v| tape.conv2d(v[0], v[1], Some(v[2]), (1, 1), Pad2::ZERO)),
        skip: None,
        max_components: None,
    });
    cases.push(GradCase {
        name: "conv2d_strided_padded".into(),
        inputs: vec![
            random_tensor(&[2, 6, 7], -1.0, 1.0, &mut rng),
            random_tensor(&[2, 2, 3, 3], -1.0, 1.0, &mut rng),
            random_tensor(&[2], -0.5, 0.5, &mut rng),
        ],
        build: Box::new(|tape, v| {
            tape.conv2d(v[0], v[1], Some(v[2]), (2, 2), Pad2::hw(0, 1, 1, 0))
        }),
        skip: None,
        max_components: None,
    });

    // maxpool: random values make ties measure-zero
    cases.push(GradCase {
        name: "maxpool2d".into(),
        inputs: vec![random_tensor(&[1, 6, 6], -1.0, 1.0, &mut rng)],
        build: Box::new(|tape, v| tape.maxpool2d(v[0], (3, 3), (2, 2), Pad2::ZERO)),
        skip: None,
        max_components: None,
    });

    // lrn with the trunk's constants
    cases.push(GradCase {
        name: "lrn".into(),
        inputs: vec![random_tensor(&[4, 3, 3], -1.0, 1.0, &mut rng)],
        build: Box::new(|tape, v| tape.lrn(v[0], LrnParams::default())),
        skip: None,
        max_components: None,
    });
    cases.push(GradCase {
        name: "lrn_strong".into(),
        inputs: vec![random_tensor(&[4, 2, 2], -1.0, 1.0, &mut rng)],
        build: Box::new(|tape, v| {
            tape.lrn(
                v[0],
                LrnParams {
                    depth_radius: 1,
                    alpha: 0.5,
                    beta: 0.75,
                    k: 1.0,
                },
            )
        }),
        skip: None,
        max_components: None,
    });

    // learnable bilinear upsampling: input and kernel gradients
    let up_kernel = {
        let mut k = upsample::bilinear_kernel::<f64>(1, 2);
        for v in k.data_mut() {
            *v += rng.gen_range(-0.05..0.05);
        }
        k
    };
    cases.push(GradCase {
        name: "bilinear_upsample".into(),
        inputs: vec![random_tensor(&[1, 4, 4], -1.0, 1.0, &mut rng), up_kernel],
        build: Box::new(|tape, v| tape.upsample(v[0], v[1], 2)),
        skip: None,
        max_components: None,
    });

    // elementwise family
    cases.push(GradCase {
        name: "elementwise_sum".into(),
        inputs: vec![
            random_tensor(&[3, 4], -1.0, 1.0, &mut rng),
            random_tensor(&[3, 4], -1.0, 1.0, &mut rng),
        ],
        build: Box::new(|tape, v| tape.add(v[0], v[1])),
        skip: None,
        max_components: None,
    });
    cases.push(GradCase {
        name: "elementwise_sub_mul".into(),
        inputs: vec![
            random_tensor(&[3, 4], -1.0, 1.0, &mut rng),
            random_tensor(&[3, 4], -1.0, 1.0, &mut rng),
        ],
        build: Box::new(|tape, v| {
            let d = tape.sub(v[0], v[1])?;
            tape.mul(d, v[0])
        }),
        skip: None,
        max_components: None,
    });
    cases.push(GradCase {
        name: "scale".into(),
        inputs: vec![random_tensor(&[2, 5], -1.0, 1.0, &mut rng)],
        build: Box::new(|tape, v| tape.scale(v[0], -0.7)),
        skip: None,
        max_components: None,
    });
    cases.push(GradCase {
        name: "crop_pad".into(),
        inputs: vec![random_tensor(&[1, 5, 6], -1.0, 1.0, &mut rng)],
        build: Box::new(|tape, v| {
            let cropped = tape.crop_pad(
                v[0],
                CropPad {
                    top: -1,
                    bottom: 1,
                    left: 2,
                    right: -2,
                },
            )?;
            tape.mul(cropped, cropped)
        }),
        skip: None,
        max_components: None,
    });
    cases.push(GradCase {
        name: "relu".into(),
        inputs: vec![random_tensor_off_zero(&[3, 5], &mut rng)],
        build: Box::new(|tape, v| tape.relu(v[0])),
        skip: None,
        max_components: None,
    });

    // inverse warp: knots excluded where the sampling abscissa is within
    // 1e-3 of an integer
    let right = random_tensor(&[2, 4, 8], -0.5, 0.5, &mut rng);
    let disp = random_tensor(&[4, 8], 0.0, 3.0, &mut rng);
    cases.push(GradCase {
        name: "inverse_warp".into(),
        inputs: vec![right, disp],
        build: Box::new(|tape, v| {
            let (warped, _) = tape.warp_scanline(v[0], v[1])?;
            Ok(warped)
        }),
        skip: Some(Box::new(|input, j, inputs| {
            if input != 1 {
                return false; // the image side has no interpolation knots
            }
            let disp = &inputs[1];
            let w = disp.shape()[1];
            let x = (j % w) as f64;
            let frac = (x + disp.data()[j]).fract();
            frac.min(1.0 - frac) <= 1e-3
        })),
        max_components: None,
    });

    // photometric / smoothness / total losses w.r.t. the disparity
    let left = random_tensor(&[1, 4, 8], -0.5, 0.5, &mut rng);
    let right = random_tensor(&[1, 4, 8], -0.5, 0.5, &mut rng);
    let disp = random_tensor(&[4, 8], 0.2, 2.8, &mut rng);
    let knot_skip = |input: usize, j: usize, inputs: &[Tensor<f64>]| {
        if input != 0 {
            return false;
        }
        let disp = &inputs[0];
        let w = disp.shape()[1];
        let x = (j % w) as f64;
        let frac = (x + disp.data()[j]).fract();
        frac.min(1.0 - frac) <= 1e-3
    };
    {
        let (l, r) = (left.clone(), right.clone());
        cases.push(GradCase {
            name: "photometric_loss".into(),
            inputs: vec![disp.clone()],
            build: Box::new(move |tape, v| {
                let lv = tape.constant(l.clone());
                let rv = tape.constant(r.clone());
                let (recons, _, _) = geometry::photometric_on_tape(tape, lv, rv, v[0])?;
                Ok(recons)
            }),
            skip: Some(Box::new(knot_skip)),
            max_components: None,
        });
    }
    cases.push(GradCase {
        name: "smoothness_loss".into(),
        inputs: vec![random_tensor(&[5, 6], -2.0, 2.0, &mut rng)],
        build: Box::new(|tape, v| geometry::smoothness_on_tape(tape, v[0])),
        skip: None,
        max_components: None,
    });
    {
        let (l, r) = (left.clone(), right.clone());
        cases.push(GradCase {
            name: "total_loss".into(),
            inputs: vec![disp],
            build: Box::new(move |tape, v| {
                let lv = tape.constant(l.clone());
                let rv = tape.constant(r.clone());
                let nodes = geometry::total_loss_on_tape(tape, lv, rv, v[0], 0.01)?;
                Ok(nodes.total)
            }),
            skip: Some(Box::new(knot_skip)),
            max_components: None,
        });
    }

    cases
}

/// Runs the whole primitive suite with the default tolerances.
pub fn primitive_suite(seed: u64, cfg: &CheckConfig) -> Result<Vec<CheckOutcome>> {
    primitive_cases(seed)
        .iter()
        .enumerate()
        .map(|(i, case)| run_case(case, cfg, seed.wrapping_add(i as u64)))
        .collect()
}

/// End-to-end composite: the full desk network (every stage grown, all
/// parameters jittered to break the zero and bilinear initializations)
/// against the combined objective on one synthetic stereo pair. The
/// analytic gradient of every parameter tensor is compared with central
/// differences on `samples_per_param` randomly chosen components.
pub fn composite_network_check(
    samples_per_param: usize,
    seed: u64,
    cfg: &CheckConfig,
) -> Result<CheckOutcome> {
    use crate::data::{resize_for_stage, SceneFamily};
    use crate::geometry;
    use crate::net::{Network, NetworkConfig};

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::<f64>::build(NetworkConfig::desk(1), &mut rng)?;
    for _ in 0..net.config().stages.len() {
        net.grow_stage()?;
    }
    for p in net.params_mut() {
        for v in p.value.data_mut().iter_mut() {
            *v += rng.gen_range(-0.05..0.05);
        }
    }

    let sample = SceneFamily::desk_default()
        .generate::<f64>(1, "gc", seed)?
        .remove(0);
    let target = net.output_resolution()?;
    let staged = resize_for_stage(&sample, target)?;
    let gamma = 0.01;

    let loss_of = |net: &Network<f64>| -> Result<f64> {
        let mut tape = Tape::new();
        let pass = net.forward_on_tape(&mut tape, &sample.left)?;
        let l = tape.constant(staged.left.clone());
        let r = tape.constant(staged.right.clone());
        let nodes = geometry::total_loss_on_tape(&mut tape, l, r, pass.disparity, gamma)?;
        Ok(tape.value(nodes.total).item())
    };

    // analytic gradients
    let analytic: Vec<Vec<f64>> = {
        let mut tape = Tape::new();
        let pass = net.forward_on_tape(&mut tape, &sample.left)?;
        let l = tape.constant(staged.left.clone());
        let r = tape.constant(staged.right.clone());
        let nodes = geometry::total_loss_on_tape(&mut tape, l, r, pass.disparity, gamma)?;
        tape.backward(nodes.total)?;
        pass.param_vars
            .iter()
            .map(|v| {
                tape.grad(*v)
                    .map(|g| g.to_vec())
                    .unwrap_or_else(|| vec![0.0; tape.value(*v).numel()])
            })
            .collect()
    };

    let mut checked = 0usize;
    let mut skipped = 0usize;
    let mut max_rel = 0.0f64;
    for pi in 0..net.params().len() {
        let n = net.params()[pi].value.numel();
        let mut idx: Vec<usize> = (0..n).collect();
        for k in 0..samples_per_param.min(n) {
            let j = rng.gen_range(k..n);
            idx.swap(k, j);
        }
        idx.truncate(samples_per_param.min(n));
        for j in idx {
            let original = net.params()[pi].value.data()[j];
            net.params_mut()[pi].value.data_mut()[j] = original + cfg.step;
            let lp = loss_of(&net)?;
            net.params_mut()[pi].value.data_mut()[j] = original - cfg.step;
            let lm = loss_of(&net)?;
            net.params_mut()[pi].value.data_mut()[j] = original;
            let numeric = (lp - lm) / (2.0 * cfg.step);
            let a = analytic[pi][j];
            if a.abs() <= cfg.floor && numeric.abs() <= cfg.floor {
                skipped += 1;
                continue;
            }
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs());
            max_rel = max_rel.max(rel);
            checked += 1;
        }
    }
    Ok(CheckOutcome {
        name: "composite_network".into(),
        checked,
        skipped,
        max_rel_err: max_rel,
        tolerance: cfg.tolerance,
        passed: max_rel < cfg.tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_primitive_passes_finite_difference_check() {
        let cfg = CheckConfig::default();
        let outcomes = primitive_suite(11, &cfg).unwrap();
        for o in &outcomes {
            assert!(o.passed, "{}", o.summary_line());
            assert!(o.checked > 0, "{} checked nothing", o.name);
        }
    }

    #[test]
    fn smoothness_gradient_is_tight() {
        // quadratic form: central differences are near-exact in f64
        let cfg = CheckConfig {
            tolerance: 1e-6,
            ..CheckConfig::default()
        };
        let cases = primitive_cases(5);
        let case = cases
            .iter()
            .find(|c| c.name == "smoothness_loss")
            .expect("case exists");
        let outcome = run_case(case, &cfg, 5).unwrap();
        assert!(outcome.passed, "{}", outcome.summary_line());
    }
}
