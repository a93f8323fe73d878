//! Walk the declared layer graphs of both scale profiles and print the
//! coarse-to-fine resolution ladder each one produces. With the published
//! 188x620 input the ladder lands on 10x37, 22x76, 44x152, 88x304 and
//! 176x608.

use parallax::net::NetworkConfig;

fn main() {
    for (name, cfg) in [
        ("desk (64x192 input)", NetworkConfig::desk(1)),
        ("paper (188x620 input)", NetworkConfig::paper(3, false)),
    ] {
        println!("== {name}");
        let reports = cfg.audit().unwrap();
        for r in &reports {
            println!(
                "  {:<8} {:<10} out {}x{}x{}  params {}",
                r.id,
                format!("{:?}", r.kind),
                r.output[0],
                r.output[1],
                r.output[2],
                r.param_count
            );
        }
        let ladder = cfg.resolution_ladder().unwrap();
        let pretty: Vec<String> = ladder
            .iter()
            .map(|(id, [h, w])| format!("{id} {h}x{w}"))
            .collect();
        println!("  ladder: {}", pretty.join(" -> "));
        println!(
            "  total params: {}",
            reports.iter().map(|r| r.param_count).sum::<usize>()
        );
    }
}
