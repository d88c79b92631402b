//! Class sensitivity: does a map for class b avoid the patch that drives
//! class a?
//!
//! Double scenarios carry one patch per class and the metric is the share of
//! b's map on a's patch. Single scenarios carry only a's patch; the in/out
//! ratios of both maps are printed for comparison.
//!
//! cargo run --release --example class_sensitivity -- [instances]

use axiom_bench::attribution::{attribute, Context, MethodConfig};
use axiom_bench::harness::ModelSource;
use axiom_bench::metrics::{class_sensitivity_double, in_out_ratio, Preprocess};
use axiom_bench::scenario::{gen_class_double, gen_class_single, ScenarioConfig};

fn main() -> axiom_bench::Result<()> {
    let n: u64 = std::env::args().nth(1).map(|a| a.parse().expect("instances")).unwrap_or(3);
    let (model, _) = ModelSource::default().materialize()?;
    let config = ScenarioConfig::default();
    let methods = [
        MethodConfig::Gradient,
        MethodConfig::Gradcam { layer: None },
        MethodConfig::ShapleyExact,
    ];
    let pre = Preprocess::PositivePart;
    for seed in 0..n {
        let (a, b) = (seed as usize % 10, (seed as usize + 5) % 10);
        for double in [true, false] {
            let inst = if double {
                gen_class_double(&model, a, b, &config, seed)?
            } else {
                gen_class_single(&model, a, b, &config, seed)?
            };
            println!("{} ({a} vs {b}): converged {}", inst.id, inst.converged);
            if !inst.converged {
                continue;
            }
            let players: Vec<_> = inst.patches.iter().map(|p| p.region).collect();
            let ctx = Context {
                reference: &inst.reference,
                players: &players,
            };
            let input = inst.compose(inst.full_coalition())?;
            let fa = inst.patch("f_a").expect("a slot").region;
            for m in &methods {
                let sa = pre.apply(&attribute(&model, &input, a, m, &ctx)?.scores);
                let sb = pre.apply(&attribute(&model, &input, b, m, &ctx)?.scores);
                if double {
                    let fb = inst.patch("f_b").expect("b slot").region;
                    let v = class_sensitivity_double(&sa, &sb, &fa, &fb).map(|r| r.value);
                    println!("  {:<16} double {v:.4?}", m.id());
                } else {
                    let ra = in_out_ratio(&sa, &fa).map(|r| r.value);
                    let rb = in_out_ratio(&sb, &fa).map(|r| r.value);
                    println!("  {:<16} in/out a {ra:.3?}  b {rb:.3?}", m.id());
                }
            }
        }
    }
    Ok(())
}
