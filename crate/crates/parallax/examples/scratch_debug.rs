// temporary: coarse-stage sweep over batch size and texture frequency
use parallax::data::{resize_disparity, SceneFamily, StereoSample};
use parallax::net::{Network, NetworkConfig};
use parallax::train::{run_training, Objective, OptimizerConfig, StageSchedule, TrainState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn native_mae(net: &Network<f32>, samples: &[StereoSample<f32>]) -> (f64, f32, f32) {
    let mut total = 0.0f64;
    let mut count = 0usize;
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for s in samples {
        let d = net.forward(&s.left).unwrap();
        let [h, w] = s.resolution();
        let up = resize_disparity(d.values(), h, w).unwrap();
        let gt = s.gt_disparity.as_ref().unwrap();
        for (a, b) in up.data().iter().zip(gt.data()) {
            total += (a - b).abs() as f64;
            count += 1;
            lo = lo.min(*a);
            hi = hi.max(*a);
        }
    }
    (total / count as f64, lo, hi)
}

fn main() {
    for &(batch, tex, amp, shade) in &[
        (2usize, 22.0, 0.25, 0.9),
        (4, 22.0, 0.25, 0.9),
        (8, 22.0, 0.25, 0.9),
        (4, 14.0, 0.35, 0.9),
    ] {
        let t0 = Instant::now();
        let family = SceneFamily {
            surfaces: [1, 2],
            disparity_range: [4.0, 8.0],
            background_disparity: [2.0, 3.0],
            texture_scale: tex,
            texture_amplitude: amp,
            shading_gain: shade,
            rect_width: [30, 60],
            rect_height: [20, 36],
            ..SceneFamily::desk_default()
        };
        let train: Vec<StereoSample<f32>> = family.generate(16, "train", 0x5eed).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        rng.set_stream(1);
        let mut net = Network::<f32>::build(NetworkConfig::desk(1), &mut rng).unwrap();
        let mut train_rng = ChaCha8Rng::seed_from_u64(7);
        train_rng.set_stream(2);
        let mut state = TrainState::new(train_rng);

        let cfg = OptimizerConfig {
            batch_size: batch,
            ..OptimizerConfig::default()
        };
        let net_cfg = net.config().clone();
        let mut schedule = StageSchedule::for_network(&net_cfg, &cfg, 200, 100);
        schedule.stages.truncate(1); // coarse only

        let (mae0, _, _) = native_mae(&net, &train);
        run_training(
            &mut net,
            &train,
            &Objective::Unsupervised { gamma: 0.01 },
            &schedule,
            &cfg,
            &mut state,
            None,
        )
        .unwrap();
        let (mae, lo, hi) = native_mae(&net, &train);
        println!(
            "batch {batch} tex {tex} amp {amp} shade {shade}: mae {mae0:.2} -> {mae:.2}, pred range [{lo:.1}, {hi:.1}] ({}s)",
            t0.elapsed().as_secs()
        );
    }
}
