//! Exact Shapley values: a textbook game, then patch players on a real model.
//!
//! cargo run --release --example shapley

use axiom_bench::attribution::{attr_shapley_exact, shapley_values};
use axiom_bench::harness::ModelSource;
use axiom_bench::micronet::synthetic::clipped_noise;
use axiom_bench::region::Region;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> axiom_bench::Result<()> {
    // Glove game: player 0 holds a left glove, 1 and 2 hold right gloves.
    // v(S) = 1 when S pairs a left with a right.
    let v: Vec<f64> = (0u32..8).map(|s| f64::from(s & 1 != 0 && s & 6 != 0)).collect();
    let phi = shapley_values(3, &v)?;
    println!("glove game: {phi:.4?} (expected [0.6667, 0.1667, 0.1667])");

    let (model, _) = ModelSource::default().materialize()?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let reference = clipped_noise(&mut rng, &[1, 32, 32], 0.5);
    let input = clipped_noise(&mut rng, &[1, 32, 32], 0.5);
    let players = [
        Region::new(0, 0, 16, 16),
        Region::new(0, 16, 16, 16),
        Region::new(16, 0, 16, 16),
        Region::new(16, 16, 16, 16),
    ];
    let z = model.logits(&input)?;
    let t = (0..z.len()).max_by(|&i, &j| z.data()[i].total_cmp(&z.data()[j])).expect("classes");
    let map = attr_shapley_exact(&model, &input, t, &reference, &players)?;
    let per_player: Vec<f64> = players
        .iter()
        .map(|r| r.pixels(32).map(|i| map.scores.data()[i]).sum())
        .collect();
    let gap = z.data()[t] - model.logits(&reference)?.data()[t];
    println!("quadrant values for class {t}: {per_player:.4?}");
    println!("sum {:.6} vs logit gap {gap:.6}", per_player.iter().sum::<f64>());
    Ok(())
}
