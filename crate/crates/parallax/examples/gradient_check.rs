//! Central finite-difference validation of every differentiable primitive
//! (conv, pool, lrn, learnable bilinear upsampling, elementwise ops, the
//! scanline warp, and the losses) plus the end-to-end composite through the
//! full desk network. Equivalent to `parallax gradcheck`.

use parallax::gradcheck::{composite_network_check, primitive_suite, CheckConfig};

fn main() {
    let cfg = CheckConfig::default();
    let mut outcomes = primitive_suite(11, &cfg).unwrap();
    outcomes.push(
        composite_network_check(
            3,
            11,
            &CheckConfig {
                tolerance: 1e-3,
                ..cfg
            },
        )
        .unwrap(),
    );
    let mut all = true;
    for o in &outcomes {
        println!("{}", o.summary_line());
        all &= o.passed;
    }
    println!("{}", if all { "ALL PASS" } else { "FAILURES" });
    std::process::exit(if all { 0 } else { 3 });
}
