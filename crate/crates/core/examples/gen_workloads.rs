//! Regenerates the sample workloads under `data/workloads`.
//!
//!     cargo run -p neusim --example gen_workloads

use std::path::Path;

use neusim::config::Config;
use neusim::workload::{compile_reference, models};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let out = root.join("workloads");
    std::fs::create_dir_all(&out)?;
    let cfg = Config::load(&[root.join("platform.yaml")])?;

    let lists = [
        ("conv_act", models::conv_act(64, 64, 64)),
        ("conv_stack10", models::conv_stack(10, 28, 28, 256)),
        ("resnet50", models::resnet50()),
    ];
    for (name, ops) in &lists {
        std::fs::write(out.join(format!("{name}.ops.json")), ops.to_json() + "\n")?;
    }
    let graph = compile_reference(&lists[0].1, &cfg.platform)?;
    std::fs::write(out.join("conv_act.graph.json"), graph.to_json() + "\n")?;
    println!("wrote {}", out.display());
    Ok(())
}
