//! A reduced battery written to disk, followed by a re-render of one stored
//! scenario from its directory alone.
//!
//! cargo run --release --example run_battery -- [out_dir]

use std::path::PathBuf;

use axiom_bench::harness::{render_scenario, run, RunConfig};
use axiom_bench::micronet::Model;
use axiom_bench::scenario::load_instance;

fn main() -> axiom_bench::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| "battery-out".into());
    let mut config = RunConfig::default();
    for family in &mut config.scenarios {
        family.count = family.count.div_ceil(10);
    }
    let result = run(&config, &out, None)?;
    println!("{} jobs in {:.1}s", result.report.jobs.len(), result.seconds);
    for a in &result.report.aggregates {
        println!("{:<22} {:<14} {:?}", a.method, a.metric, a.value);
    }

    let Some(id) = result.report.jobs.iter().find_map(|j| j.scenario_id.clone()) else {
        return Ok(());
    };
    let model = Model::load(&out.join("model.axbm"))?;
    let inst = load_instance(&out.join("scenarios").join(&id))?;
    let methods = config.expanded_methods(&model)?;
    let index = render_scenario(&model, &inst, &methods, &out.join("rerendered").join(&id))?;
    println!("re-rendered {} maps for {id}", index.maps.len());
    Ok(())
}
