//! Generate null-feature scenarios and score every method on them.
//!
//! The second patch leaves the target logit unchanged, so a faithful map puts
//! (almost) nothing on it. Shapley values come with a bound from the stored
//! residuals.
//!
//! cargo run --release --example null_feature -- [instances]

use axiom_bench::attribution::{attribute, Context, MethodConfig};
use axiom_bench::harness::ModelSource;
use axiom_bench::metrics::{null_feature_metric, Preprocess};
use axiom_bench::scenario::{gen_null_feature, ScenarioConfig};

fn main() -> axiom_bench::Result<()> {
    let n: u64 = std::env::args().nth(1).map(|a| a.parse().expect("instances")).unwrap_or(4);
    let (model, _) = ModelSource::default().materialize()?;
    let config = ScenarioConfig::default();
    for seed in 0..n {
        let (a, b) = (seed as usize % 10, (seed as usize + 3) % 10);
        let inst = gen_null_feature(&model, a, b, &config, seed)?;
        println!("{} target {a}: converged {} after {} steps", inst.id, inst.converged, inst.steps);
        if !inst.converged {
            continue;
        }
        let null = inst.patch("f_null").expect("null slot").region;
        let players: Vec<_> = inst.patches.iter().map(|p| p.region).collect();
        let ctx = Context {
            reference: &inst.reference,
            players: &players,
        };
        let input = inst.compose(inst.full_coalition())?;
        for method in MethodConfig::defaults() {
            let map = attribute(&model, &input, a, &method, &ctx)?;
            let score = null_feature_metric(&Preprocess::PositivePart.apply(&map.scores), &null);
            match score {
                Ok(r) => println!("  {:<22} {:.4}", method.id(), r.value),
                Err(e) => println!("  {:<22} undefined ({e:?})", method.id()),
            }
        }
        let mut res: Vec<f64> = inst.residuals.values().filter(|r| r.constrained).map(|r| r.value).collect();
        res.sort_by(f64::total_cmp);
        let r = 0.5 * res.iter().rev().take(2).sum::<f64>();
        println!("  shapley bound          {:.4}", r / (inst.delta - r));
    }
    Ok(())
}
