//! Saturation: two patches that each push class a to the same confidence.
//!
//! Shapley splits credit evenly up to the residuals; the greedy extremal
//! mask tends to settle on one patch.
//!
//! cargo run --release --example saturation -- [instances]

use axiom_bench::attribution::{attribute, Context, MethodConfig};
use axiom_bench::harness::ModelSource;
use axiom_bench::metrics::concentration;
use axiom_bench::scenario::{gen_saturation, ScenarioConfig};

fn main() -> axiom_bench::Result<()> {
    let n: u64 = std::env::args().nth(1).map(|a| a.parse().expect("instances")).unwrap_or(6);
    let (model, _) = ModelSource::default().materialize()?;
    let config = ScenarioConfig::default();
    let extremal = MethodConfig::defaults()
        .into_iter()
        .find(|m| m.id() == "extremal_greedy")
        .expect("default method");
    for seed in 0..n {
        let a = seed as usize % 10;
        let inst = gen_saturation(&model, a, &config, seed)?;
        println!("{} class {a}: converged {} after {} steps", inst.id, inst.converged, inst.steps);
        if !inst.converged {
            continue;
        }
        let players: Vec<_> = inst.patches.iter().map(|p| p.region).collect();
        let ctx = Context {
            reference: &inst.reference,
            players: &players,
        };
        let input = inst.compose(inst.full_coalition())?;
        let width = input.shape()[2];
        for m in [MethodConfig::ShapleyExact, extremal.clone()] {
            let s = attribute(&model, &input, a, &m, &ctx)?.scores;
            let mass = |i: usize| players[i].pixels(width).map(|p| s.data()[p]).sum::<f64>();
            let (m1, m2) = (mass(0), mass(1));
            let share = concentration(m1.max(0.0), m2.max(0.0)).map(|r| r.value);
            println!("  {:<16} patch masses {m1:>9.4} {m2:>9.4}  larger share {share:.3?}", m.id());
        }
    }
    Ok(())
}
