//! Compare reverse-mode gradients of small random classifiers with central
//! differences, for both the input and every parameter tensor.
//!
//! cargo run --release --example gradcheck -- [nets]

use axiom_bench::autodiff::{finite_difference_check, Graph};
use axiom_bench::micronet::synthetic::clipped_noise;
use axiom_bench::micronet::{build_classifier, ArchConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> axiom_bench::Result<()> {
    let nets: u64 = std::env::args().nth(1).map(|a| a.parse().expect("nets")).unwrap_or(10);
    let arch = ArchConfig {
        input_shape: [1, 8, 8],
        conv_channels: vec![2, 3],
        hidden: 6,
        classes: 3,
        ..ArchConfig::default()
    };
    let mut worst = 0.0f64;
    for seed in 0..nets {
        let model = build_classifier(&arch, seed)?;
        let mut g = Graph::new();
        let bound = model.bind(&mut g, true);
        let x = g.leaf(clipped_noise(&mut ChaCha8Rng::seed_from_u64(seed), &[1, 8, 8], 0.5));
        let out = bound.apply(&model, &mut g, x)?;
        let root = g.cross_entropy(out.logits, (seed % 3) as usize)?;
        let mut leaves = vec![x];
        leaves.extend(bound.parameter_ids());
        let (mut checked, mut excluded) = (0, 0);
        for leaf in leaves {
            let r = finite_difference_check(&mut g, root, leaf, 1e-6)?;
            worst = worst.max(r.max_relative_error);
            checked += r.checked;
            excluded += r.excluded;
        }
        println!("net {seed:>2}: {checked} entries checked, {excluded} skipped at kinks");
    }
    println!("largest relative error {worst:.2e}");
    Ok(())
}
