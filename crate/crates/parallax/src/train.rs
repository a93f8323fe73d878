//! Stage-wise training: SGD with classical momentum and weight decay, the
//! per-epoch learning-rate decay law, coarse-to-fine stage growth with a
//! divided initial learning rate, and fine-tuning over the 8x augmented
//! dataset.

use crate::baseline::ProxyLabel;
use crate::data::{augment, resize_for_stage, resize_nearest, StereoSample};
use crate::error::{Error, Result};
use crate::geometry;
use crate::net::{Network, Param};
use crate::scalar::{c, Scalar};
use crate::tape::Tape;
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub momentum: f64,
    pub weight_decay: f64,
    /// Initial learning rate of the coarse stage.
    pub lr0: f64,
    /// Decay constant of the per-epoch schedule.
    pub alpha: f64,
    /// Each finer stage starts at the previous initial rate divided by this.
    pub stage_lr_divisor: f64,
    pub batch_size: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            momentum: 0.9,
            weight_decay: 0.0005,
            lr0: 0.01,
            alpha: 0.0005,
            stage_lr_divisor: 4.0,
            batch_size: 16,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.momentum < 0.0 || self.momentum >= 1.0 {
            return Err(Error::Config(format!(
                "momentum must be in [0,1), got {}",
                self.momentum
            )));
        }
        if self.weight_decay < 0.0 || self.lr0 < 0.0 || self.alpha < 0.0 {
            return Err(Error::Config("optimizer constants must be non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(())
    }

    /// Initial learning rate for a stage (0 = coarse).
    pub fn stage_lr0(&self, stage: usize) -> f64 {
        self.lr0 / self.stage_lr_divisor.powi(stage as i32)
    }
}

/// Per-epoch decay law: lr = lr0 / (1 + alpha * n)^(n - 1), n >= 1.
pub fn lr_schedule(lr0: f64, epoch: usize, alpha: f64) -> f64 {
    assert!(epoch >= 1, "epoch index is 1-based");
    lr0 / (1.0 + alpha * epoch as f64).powi(epoch as i32 - 1)
}

/// What the disparity prediction is trained against.
#[derive(Clone, Debug)]
pub enum Objective<F: Scalar> {
    /// Photometric reconstruction + smoothness prior (Eq. 3 style).
    Unsupervised { gamma: f64 },
    /// Hole-masked least squares against proxy disparities, one label per
    /// dataset sample at native resolution.
    ProxyDisparity { labels: Vec<ProxyLabel<F>> },
}

/// One training stage of the schedule.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StagePlan {
    /// Layer ids active during this stage (audited: strict superset chain).
    pub active_layers: Vec<String>,
    pub epochs: usize,
    pub initial_learning_rate: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageSchedule {
    pub stages: Vec<StagePlan>,
}

impl StageSchedule {
    /// Coarse stage plus one plan per upsampling stage; learning rates
    /// follow the stage divisor rule.
    pub fn for_network(
        cfg: &crate::net::NetworkConfig,
        opt: &OptimizerConfig,
        coarse_epochs: usize,
        fine_epochs: usize,
    ) -> Self {
        let sets = cfg.stage_layer_sets();
        let stages = sets
            .into_iter()
            .enumerate()
            .map(|(i, active_layers)| StagePlan {
                active_layers,
                epochs: if i == 0 { coarse_epochs } else { fine_epochs },
                initial_learning_rate: opt.stage_lr0(i),
            })
            .collect();
        StageSchedule { stages }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Config("schedule has no stages".into()));
        }
        for pair in self.stages.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if a.active_layers.len() >= b.active_layers.len()
                || !a.active_layers.iter().all(|id| b.active_layers.contains(id))
            {
                return Err(Error::Config(
                    "each stage's active layer set must strictly contain the previous one".into(),
                ));
            }
        }
        Ok(())
    }
}

/// One appended loss-curve row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: usize,
    pub epoch: usize,
    pub lr: f64,
    pub recons: f64,
    pub smooth: f64,
    pub total: f64,
}

/// Mutable optimizer state, checkpointable for exact resume.
#[derive(Clone, Debug)]
pub struct TrainState<F: Scalar> {
    /// Index of the stage currently being trained.
    pub stage: usize,
    /// Last completed epoch within that stage (0 = none yet).
    pub epoch: usize,
    /// Momentum buffers aligned with the network parameters.
    pub velocity: Vec<Tensor<F>>,
    /// Shuffle/augmentation randomness.
    pub rng: ChaCha8Rng,
    pub history: Vec<EpochRecord>,
}

impl<F: Scalar> TrainState<F> {
    pub fn new(rng: ChaCha8Rng) -> Self {
        TrainState {
            stage: 0,
            epoch: 0,
            velocity: Vec::new(),
            rng,
            history: Vec::new(),
        }
    }

    /// Extends the velocity buffers after the network grew.
    pub fn sync_with(&mut self, net: &Network<F>) {
        for p in net.params().iter().skip(self.velocity.len()) {
            self.velocity.push(Tensor::zeros(p.value.shape()));
        }
    }
}

/// Classical momentum update:
/// v <- momentum*v - lr*(grad + weight_decay*param); param <- param + v.
pub fn sgd_step<F: Scalar>(
    params: &mut [Param<F>],
    grads: &[Vec<F>],
    velocity: &mut [Tensor<F>],
    cfg: &OptimizerConfig,
    lr: f64,
) -> Result<()> {
    debug_assert_eq!(params.len(), grads.len());
    debug_assert_eq!(params.len(), velocity.len());
    let momentum = c::<F>(cfg.momentum);
    let wd = c::<F>(cfg.weight_decay);
    let lr = c::<F>(lr);
    for ((p, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        let pv = p.value.data_mut();
        let vv = v.data_mut();
        for i in 0..pv.len() {
            vv[i] = momentum * vv[i] - lr * (g[i] + wd * pv[i]);
            pv[i] = pv[i] + vv[i];
        }
        if pv.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite update in parameter {}",
                p.name
            )));
        }
    }
    Ok(())
}

struct SampleGrad<F: Scalar> {
    recons: f64,
    smooth: f64,
    total: f64,
    grads: Vec<Vec<F>>,
}

/// Forward + backward for one sample; the network input is the native left
/// image while the loss compares at the stage resolution.
fn eval_sample<F: Scalar>(
    net: &Network<F>,
    native: &StereoSample<F>,
    staged: &StereoSample<F>,
    label: Option<&ProxyLabel<F>>,
    objective: &Objective<F>,
) -> Result<SampleGrad<F>> {
    let mut tape = Tape::new();
    let pass = net.forward_on_tape(&mut tape, &native.left)?;
    let (recons, smooth, total) = match objective {
        Objective::Unsupervised { gamma } => {
            let l = tape.constant(staged.left.clone());
            let r = tape.constant(staged.right.clone());
            let nodes = geometry::total_loss_on_tape(&mut tape, l, r, pass.disparity, *gamma)?;
            let rec = tape.value(nodes.recons).item().to_f64_lossy();
            let sm = tape.value(nodes.smooth).item().to_f64_lossy();
            let tot = tape.value(nodes.total).item().to_f64_lossy();
            tape.backward(nodes.total)?;
            (rec, sm, tot)
        }
        Objective::ProxyDisparity { .. } => {
            let label = label.expect("proxy training resolves labels per stage");
            let (h, w) = (label.disparity.shape()[0], label.disparity.shape()[1]);
            let lbl = tape.constant(Tensor::from_vec_unchecked(
                &[1, h, w],
                label.disparity.data().to_vec(),
            ));
            let msk = tape.constant(Tensor::from_vec_unchecked(
                &[1, h, w],
                label.valid.data().to_vec(),
            ));
            let diff = tape.sub(pass.disparity, lbl)?;
            let sq = tape.mul(diff, diff)?;
            let masked = tape.mul(sq, msk)?;
            let sum = tape.sum_all(masked)?;
            let count = label.valid_count().max(1);
            let loss = tape.scale(sum, c::<F>(1.0 / count as f64))?;
            let tot = tape.value(loss).item().to_f64_lossy();
            tape.backward(loss)?;
            (tot, 0.0, tot)
        }
    };
    let grads = pass
        .param_vars
        .iter()
        .map(|v| {
            tape.grad(*v)
                .map(|g| g.to_vec())
                .unwrap_or_else(|| vec![F::zero(); tape.value(*v).numel()])
        })
        .collect();
    Ok(SampleGrad {
        recons,
        smooth,
        total,
        grads,
    })
}

/// Aggregate epoch statistics (means over samples).
struct EpochStats {
    recons: f64,
    smooth: f64,
    total: f64,
}

fn run_epoch<F: Scalar>(
    net: &mut Network<F>,
    native: &[StereoSample<F>],
    staged: &[StereoSample<F>],
    labels: Option<&[ProxyLabel<F>]>,
    objective: &Objective<F>,
    cfg: &OptimizerConfig,
    lr: f64,
    state: &mut TrainState<F>,
) -> Result<EpochStats> {
    let mut order: Vec<usize> = (0..native.len()).collect();
    order.shuffle(&mut state.rng);

    let mut sums = (0.0, 0.0, 0.0);
    for chunk in order.chunks(cfg.batch_size) {
        // pure per-sample passes, reduced in index order so the result is
        // identical regardless of thread count
        let results: Vec<Result<SampleGrad<F>>> = chunk
            .par_iter()
            .map(|&i| {
                eval_sample(
                    net,
                    &native[i],
                    &staged[i],
                    labels.map(|l| &l[i]),
                    objective,
                )
            })
            .collect();
        let mut acc: Vec<Vec<F>> = net
            .params()
            .iter()
            .map(|p| vec![F::zero(); p.value.numel()])
            .collect();
        let mut n = 0usize;
        for r in results {
            let s = r?;
            for (a, g) in acc.iter_mut().zip(&s.grads) {
                for (x, y) in a.iter_mut().zip(g) {
                    *x = *x + *y;
                }
            }
            sums.0 += s.recons;
            sums.1 += s.smooth;
            sums.2 += s.total;
            n += 1;
        }
        let inv = c::<F>(1.0 / n as f64);
        for a in &mut acc {
            for x in a.iter_mut() {
                *x = *x * inv;
            }
        }
        state.sync_with(net);
        let velocity = &mut state.velocity;
        sgd_step(net.params_mut(), &acc, velocity, cfg, lr)?;
    }
    let n = native.len() as f64;
    Ok(EpochStats {
        recons: sums.0 / n,
        smooth: sums.1 / n,
        total: sums.2 / n,
    })
}

/// Resizes proxy labels to the stage resolution: nearest resampling for both
/// disparity and validity, disparity values rescaled by the width ratio.
fn stage_labels<F: Scalar>(
    labels: &[ProxyLabel<F>],
    target: [usize; 2],
) -> Result<Vec<ProxyLabel<F>>> {
    labels
        .iter()
        .map(|l| {
            let (h, w) = (l.disparity.shape()[0], l.disparity.shape()[1]);
            if [h, w] == target {
                return Ok(l.clone());
            }
            let ratio = c::<F>(target[1] as f64 / w as f64);
            let d = resize_nearest(&l.disparity, target[0], target[1])?.map(|v| v * ratio);
            let v = resize_nearest(&l.valid, target[0], target[1])?;
            ProxyLabel::new(d, v)
        })
        .collect()
}

/// Hook invoked after every completed epoch (checkpointing, CSV streaming).
pub type EpochHook<'a, F> =
    &'a mut dyn FnMut(&Network<F>, &TrainState<F>, &EpochRecord) -> Result<()>;

/// Trains one stage for `plan.epochs` epochs with the decaying learning
/// rate. The dataset is resized to the stage resolution once. Training
/// aborts with a divergence error after 3 consecutive epochs above twice
/// the best total loss.
pub fn train_stage<F: Scalar>(
    net: &mut Network<F>,
    dataset: &[StereoSample<F>],
    objective: &Objective<F>,
    plan: &StagePlan,
    cfg: &OptimizerConfig,
    state: &mut TrainState<F>,
    mut on_epoch: Option<EpochHook<'_, F>>,
) -> Result<()> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("training dataset is empty".into()));
    }
    let target = net.output_resolution()?;
    let staged: Vec<StereoSample<F>> = dataset
        .iter()
        .map(|s| resize_for_stage(s, target))
        .collect::<Result<_>>()?;
    let labels = match objective {
        Objective::ProxyDisparity { labels } => {
            if labels.len() != dataset.len() {
                return Err(Error::Config(format!(
                    "{} proxy labels for {} samples",
                    labels.len(),
                    dataset.len()
                )));
            }
            Some(stage_labels(labels, target)?)
        }
        Objective::Unsupervised { .. } => None,
    };
    state.sync_with(net);

    let mut best = f64::INFINITY;
    let mut bad_epochs = 0usize;
    for epoch in state.epoch + 1..=plan.epochs {
        let lr = lr_schedule(plan.initial_learning_rate, epoch, cfg.alpha);
        let stats = run_epoch(
            net,
            dataset,
            &staged,
            labels.as_deref(),
            objective,
            cfg,
            lr,
            state,
        )?;
        let record = EpochRecord {
            stage: state.stage,
            epoch,
            lr,
            recons: stats.recons,
            smooth: stats.smooth,
            total: stats.total,
        };
        state.epoch = epoch;
        state.history.push(record.clone());
        if let Some(hook) = on_epoch.as_mut() {
            hook(net, state, &record)?;
        }
        if stats.total > 2.0 * best && best.is_finite() {
            bad_epochs += 1;
            if bad_epochs >= 3 {
                return Err(Error::Divergence(format!(
                    "stage {} epoch {}: loss {:.6e} above 2x best {:.6e} for 3 consecutive epochs",
                    state.stage, epoch, stats.total, best
                )));
            }
        } else {
            bad_epochs = 0;
        }
        best = best.min(stats.total);
    }
    Ok(())
}

/// Runs the whole coarse-to-fine schedule: stage k trains with k upsampling
/// stages grown. Resumes transparently from a restored [`TrainState`].
pub fn run_training<F: Scalar>(
    net: &mut Network<F>,
    dataset: &[StereoSample<F>],
    objective: &Objective<F>,
    schedule: &StageSchedule,
    cfg: &OptimizerConfig,
    state: &mut TrainState<F>,
    mut on_epoch: Option<EpochHook<'_, F>>,
) -> Result<()> {
    schedule.validate()?;
    while state.stage < schedule.stages.len() {
        while net.active_stages() < state.stage {
            net.grow_stage()?;
        }
        let plan = &schedule.stages[state.stage];
        let hook: Option<EpochHook<'_, F>> = match on_epoch.as_mut() {
            Some(h) => Some(&mut **h),
            None => None,
        };
        train_stage(net, dataset, objective, plan, cfg, state, hook)?;
        state.stage += 1;
        state.epoch = 0;
    }
    Ok(())
}

/// Fine-tunes the fully grown network (no further growth) on the 8x
/// augmented dataset. The augmentations are drawn once, deterministically
/// from the training RNG.
pub fn finetune_with_augmentation<F: Scalar>(
    net: &mut Network<F>,
    dataset: &[StereoSample<F>],
    gamma: f64,
    epochs: usize,
    cfg: &OptimizerConfig,
    state: &mut TrainState<F>,
    on_epoch: Option<EpochHook<'_, F>>,
) -> Result<()> {
    if net.active_stages() != net.config().stages.len() {
        return Err(Error::Config(
            "fine-tuning expects a fully grown network".into(),
        ));
    }
    let mut augmented = Vec::with_capacity(dataset.len() * 8);
    for s in dataset {
        augmented.extend(augment(s, &mut state.rng)?);
    }
    let plan = StagePlan {
        active_layers: net
            .config()
            .stage_layer_sets()
            .last()
            .cloned()
            .unwrap_or_default(),
        epochs,
        initial_learning_rate: cfg.stage_lr0(net.config().stages.len() + 1),
    };
    state.epoch = 0;
    train_stage(
        net,
        &augmented,
        &Objective::Unsupervised { gamma },
        &plan,
        cfg,
        state,
        on_epoch,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SceneFamily;
    use crate::net::NetworkConfig;
    use rand::SeedableRng;

    #[test]
    fn lr_schedule_first_epoch_is_identity() {
        assert_eq!(lr_schedule(0.01, 1, 0.0005), 0.01);
    }

    #[test]
    fn lr_schedule_matches_direct_evaluation() {
        let lr = lr_schedule(0.01, 2, 0.0005);
        assert!((lr - 0.01 / 1.001).abs() < 1e-15);
        let lr100 = lr_schedule(0.01, 100, 0.0005);
        assert!((lr100 - 0.01 / 1.05f64.powi(99)).abs() < 1e-15);
    }

    #[test]
    fn lr_schedule_is_monotone_non_increasing() {
        let mut prev = f64::INFINITY;
        for n in 1..300 {
            let lr = lr_schedule(0.01, n, 0.0005);
            assert!(lr <= prev);
            prev = lr;
        }
    }

    fn param(v: Vec<f64>) -> Vec<Param<f64>> {
        vec![Param {
            name: "x".into(),
            value: Tensor::from_vec(&[v.len()], v).unwrap(),
        }]
    }

    #[test]
    fn plain_gradient_descent_when_momentum_and_decay_are_zero() {
        let mut params = param(vec![1.0, -2.0]);
        let mut vel = vec![Tensor::zeros(&[2])];
        let cfg = OptimizerConfig {
            momentum: 0.0,
            weight_decay: 0.0,
            ..OptimizerConfig::default()
        };
        sgd_step(&mut params, &[vec![0.5, -1.0]], &mut vel, &cfg, 0.1).unwrap();
        assert!((params[0].value.data()[0] - 0.95).abs() < 1e-15);
        assert!((params[0].value.data()[1] + 1.9).abs() < 1e-15);
    }

    #[test]
    fn velocity_decays_geometrically_with_zero_gradient() {
        let mut params = param(vec![0.0]);
        let mut vel = vec![Tensor::from_vec(&[1], vec![1.0]).unwrap()];
        let cfg = OptimizerConfig {
            momentum: 0.5,
            weight_decay: 0.0,
            ..OptimizerConfig::default()
        };
        sgd_step(&mut params, &[vec![0.0]], &mut vel, &cfg, 0.1).unwrap();
        assert!((vel[0].data()[0] - 0.5).abs() < 1e-15);
        sgd_step(&mut params, &[vec![0.0]], &mut vel, &cfg, 0.1).unwrap();
        assert!((vel[0].data()[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut params = param(vec![3.0, -1.5]);
        let before = params[0].value.data().to_vec();
        let mut vel = vec![Tensor::zeros(&[2])];
        sgd_step(
            &mut params,
            &[vec![5.0, 5.0]],
            &mut vel,
            &OptimizerConfig::default(),
            0.0,
        )
        .unwrap();
        assert_eq!(params[0].value.data(), &before[..]);
    }

    #[test]
    fn weight_decay_alone_shrinks_parameters_geometrically() {
        let mut params = param(vec![2.0]);
        let mut vel = vec![Tensor::zeros(&[1])];
        let cfg = OptimizerConfig {
            momentum: 0.0,
            weight_decay: 0.01,
            ..OptimizerConfig::default()
        };
        sgd_step(&mut params, &[vec![0.0]], &mut vel, &cfg, 0.5).unwrap();
        let expect = 2.0 * (1.0 - 0.5 * 0.01);
        assert!((params[0].value.data()[0] - expect).abs() < 1e-10);
    }

    #[test]
    fn quadratic_bowl_converges() {
        // f(x) = ||x||^2, grad = 2x: plain descent contracts by 0.8 per step
        let mut params = param(vec![1.0, -0.7, 0.3]);
        let mut vel = vec![Tensor::zeros(&[3])];
        let cfg = OptimizerConfig {
            momentum: 0.0,
            weight_decay: 0.0,
            ..OptimizerConfig::default()
        };
        for _ in 0..200 {
            let g: Vec<f64> = params[0].value.data().iter().map(|&x| 2.0 * x).collect();
            sgd_step(&mut params, &[g], &mut vel, &cfg, 0.1).unwrap();
        }
        for &x in params[0].value.data() {
            assert!(x.abs() < 1e-6, "did not converge: {x}");
        }
        // with heavy-ball momentum the contraction is sqrt(0.9) per step
        let mut params = param(vec![1.0]);
        let mut vel = vec![Tensor::zeros(&[1])];
        let cfg = OptimizerConfig {
            momentum: 0.9,
            weight_decay: 0.0,
            ..OptimizerConfig::default()
        };
        for _ in 0..400 {
            let g: Vec<f64> = params[0].value.data().iter().map(|&x| 2.0 * x).collect();
            sgd_step(&mut params, &[g], &mut vel, &cfg, 0.1).unwrap();
        }
        assert!(params[0].value.data()[0].abs() < 1e-6);
    }

    #[test]
    fn constant_images_keep_zero_disparity() {
        // aperture-problem degenerate case: no texture, no gradient
        let family = SceneFamily {
            texture_amplitude: 0.0,
            shading_gain: 0.0,
            surfaces: [0, 0],
            ..SceneFamily::desk_default()
        };
        let dataset: Vec<StereoSample<f32>> = family.generate(2, "flat", 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = Network::<f32>::build(NetworkConfig::desk(1), &mut rng).unwrap();
        let mut state = TrainState::new(ChaCha8Rng::seed_from_u64(3));
        let cfg = OptimizerConfig {
            batch_size: 2,
            ..OptimizerConfig::default()
        };
        let plan = StagePlan {
            active_layers: vec![],
            epochs: 3,
            initial_learning_rate: cfg.lr0,
        };
        train_stage(
            &mut net,
            &dataset,
            &Objective::Unsupervised { gamma: 0.01 },
            &plan,
            &cfg,
            &mut state,
            None,
        )
        .unwrap();
        let d = net.forward(&dataset[0].left).unwrap();
        assert!(d.values().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn training_is_deterministic_under_fixed_seed() {
        let family = SceneFamily::desk_default();
        let dataset: Vec<StereoSample<f32>> = family.generate(3, "d", 11).unwrap();
        let run = || -> Vec<EpochRecord> {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let mut net = Network::<f32>::build(NetworkConfig::desk(1), &mut rng).unwrap();
            let mut state = TrainState::new(ChaCha8Rng::seed_from_u64(8));
            let cfg = OptimizerConfig {
                batch_size: 2,
                ..OptimizerConfig::default()
            };
            let plan = StagePlan {
                active_layers: vec![],
                epochs: 3,
                initial_learning_rate: cfg.lr0,
            };
            train_stage(
                &mut net,
                &dataset,
                &Objective::Unsupervised { gamma: 0.01 },
                &plan,
                &cfg,
                &mut state,
                None,
            )
            .unwrap();
            state.history
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn schedule_superset_validation() {
        let cfg = NetworkConfig::desk(1);
        let opt = OptimizerConfig::default();
        let mut schedule = StageSchedule::for_network(&cfg, &opt, 10, 5);
        schedule.validate().unwrap();
        assert_eq!(schedule.stages.len(), 4);
        assert!((schedule.stages[1].initial_learning_rate - 0.0025).abs() < 1e-12);
        schedule.stages[1].active_layers.clear();
        assert!(schedule.validate().is_err());
    }
}
