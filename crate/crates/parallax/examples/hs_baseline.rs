//! Classical variational stereo as a baseline: coarse-to-fine Horn-Schunck
//! with iterative warping, plus its per-level energy trace.

use parallax::baseline::{hs_stereo_traced, HsConfig};
use parallax::data::{SceneFamily, StereoSample};

fn main() {
    let family = SceneFamily {
        image_size: [32, 96],
        surfaces: [0, 0],
        background_disparity: [4.0, 4.0],
        integer_disparities: true,
        shading_gain: 0.0,
        texture_scale: 10.0,
        texture_amplitude: 0.4,
        ..SceneFamily::desk_default()
    };
    let pair: StereoSample<f64> = family.generate(1, "plane", 9).unwrap().remove(0);

    let cfg = HsConfig {
        pyramid_levels: 5,
        warp_iterations: 30,
        inner_iterations: 40,
        ..HsConfig::default()
    };
    let result = hs_stereo_traced(&pair, &cfg).unwrap();

    println!("pyramid (coarse to fine):");
    for level in &result.trace {
        println!(
            "  level {} ({}x{}): {} warp iterations, energy {:.6} -> {:.6}",
            level.level,
            level.resolution[0],
            level.resolution[1],
            level.energies.len(),
            level.energies.first().unwrap_or(&0.0),
            level.energies.last().unwrap_or(&0.0),
        );
    }

    let gt = pair.gt_disparity.as_ref().unwrap();
    let mut errs: Vec<f64> = result
        .disparity
        .values()
        .data()
        .iter()
        .zip(gt.data())
        .map(|(a, b)| (a - b).abs())
        .collect();
    errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    println!(
        "true disparity 4.0 px: median |error| = {:.3} px",
        errs[errs.len() / 2]
    );
}
