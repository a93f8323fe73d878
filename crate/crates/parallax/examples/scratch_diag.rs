//診断: where does the disparity error live after training?
use parallax::data::{resize_disparity, SceneFamily, StereoSample};
use parallax::net::{Network, NetworkConfig};
use parallax::train::{run_training, Objective, OptimizerConfig, StageSchedule, TrainState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn main() {
    let t0 = Instant::now();
    let family = SceneFamily {
        surfaces: [1, 2],
        disparity_range: [5.0, 10.0],
        background_disparity: [2.0, 3.0],
        texture_scale: 16.0,
        texture_amplitude: 0.35,
        shading_gain: 0.7,
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
        batch_size: 2,
        ..OptimizerConfig::default()
    };
    let net_cfg = net.config().clone();
    let mut schedule = StageSchedule::for_network(&net_cfg, &cfg, 200, 100);
    schedule.stages.truncate(3);

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
    println!("trained in {}s", t0.elapsed().as_secs());

    // split error into boundary band (within 6 px of a gt step) vs interior
    let mut int_err = (0.0f64, 0usize);
    let mut bnd_err = (0.0f64, 0usize);
    for s in &train {
        let d = net.forward(&s.left).unwrap();
        let [h, w] = s.resolution();
        let up = resize_disparity(d.values(), h, w).unwrap();
        let gt = s.gt_disparity.as_ref().unwrap();
        // boundary mask: gt gradient nonzero within radius 6
        let mut edge = vec![false; h * w];
        for y in 0..h {
            for x in 0..w {
                let g = gt.data()[y * w + x];
                let right_differs = x + 1 < w && (gt.data()[y * w + x + 1] - g).abs() > 0.01;
                let down_differs = y + 1 < h && (gt.data()[(y + 1) * w + x] - g).abs() > 0.01;
                if right_differs || down_differs {
                    for yy in y.saturating_sub(6)..(y + 7).min(h) {
                        for xx in x.saturating_sub(6)..(x + 7).min(w) {
                            edge[yy * w + xx] = true;
                        }
                    }
                }
            }
        }
        for i in 0..h * w {
            let e = (up.data()[i] - gt.data()[i]).abs() as f64;
            if edge[i] {
                bnd_err.0 += e;
                bnd_err.1 += 1;
            } else {
                int_err.0 += e;
                int_err.1 += 1;
            }
        }
    }
    let im = int_err.0 / int_err.1 as f64;
    let bm = bnd_err.0 / bnd_err.1 as f64;
    let bf = bnd_err.1 as f64 / (int_err.1 + bnd_err.1) as f64;
    println!("interior MAE {im:.3} ({:.0}% of px), boundary MAE {bm:.3} ({:.0}%)",
        100.0 * (1.0 - bf), 100.0 * bf);
    println!("overall {:.3}", (int_err.0 + bnd_err.0) / (int_err.1 + bnd_err.1) as f64);

    // one row of one scene: gt vs prediction
    let s = &train[0];
    let d = net.forward(&s.left).unwrap();
    let [h, w] = s.resolution();
    let up = resize_disparity(d.values(), h, w).unwrap();
    let gt = s.gt_disparity.as_ref().unwrap();
    let y = h / 2;
    print!("gt  : ");
    for x in (0..w).step_by(6) {
        print!("{:5.1}", gt.data()[y * w + x]);
    }
    println!();
    print!("pred: ");
    for x in (0..w).step_by(6) {
        print!("{:5.1}", up.data()[y * w + x]);
    }
    println!();
}
