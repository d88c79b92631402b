//! GradCAM null-feature scores at each conv layer over a small battery.
//!
//! cargo run --release --example layer_sweep -- [instances]

use axiom_bench::attribution::MethodConfig;
use axiom_bench::harness::{layer_sweep, run_with_model, ModelSource, RunConfig, ScenarioSpec};
use axiom_bench::scenario::{ScenarioConfig, ScenarioKind};

fn main() -> axiom_bench::Result<()> {
    let n: usize = std::env::args().nth(1).map(|a| a.parse().expect("instances")).unwrap_or(6);
    let (model, training) = ModelSource::default().materialize()?;
    let base = RunConfig {
        scenarios: vec![ScenarioSpec {
            kind: ScenarioKind::Null,
            count: n,
            config: ScenarioConfig::default(),
        }],
        ..RunConfig::default()
    };
    let layers: Vec<String> = model.conv_layers().iter().map(|s| s.to_string()).collect();
    let sweep = layer_sweep(&base, &MethodConfig::Gradcam { layer: None }, &layers)?;
    let result = run_with_model(&sweep, &model, training, None, None)?;
    for a in &result.report.aggregates {
        println!(
            "{:<8} {} = {:?} over {} instances",
            a.layer.as_deref().unwrap_or("-"),
            a.metric,
            a.value,
            a.samples
        );
    }
    Ok(())
}
