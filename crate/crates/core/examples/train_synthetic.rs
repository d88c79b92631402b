//! Train the default classifier on synthetic texture classes and save it.
//!
//! cargo run --release --example train_synthetic -- [epochs] [out.axbm]

use std::time::Instant;

use axiom_bench::micronet::synthetic::SyntheticConfig;
use axiom_bench::micronet::{build_classifier, train_synthetic, ArchConfig, Model, TrainConfig};

fn main() -> axiom_bench::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map(|a| a.parse().expect("epochs")).unwrap_or(5);
    let out = args.next();

    for (label, data) in [
        ("bars vs blobs", SyntheticConfig::bars_vs_blobs()),
        ("ten textures", SyntheticConfig::default()),
    ] {
        let arch = ArchConfig {
            classes: data.classes(),
            ..ArchConfig::default()
        };
        let model = build_classifier(&arch, 7)?;
        let start = Instant::now();
        let (trained, report) = train_synthetic(&model, &data, &TrainConfig::default(), epochs, 7)?;
        println!(
            "{label:>14}: loss {:.4}  train acc {:.3}  holdout acc {:.3}  ({:.1?})",
            report.final_loss,
            report.train_accuracy,
            report.holdout_accuracy,
            start.elapsed()
        );
        if let (Some(path), 10) = (&out, data.classes()) {
            trained.save(path.as_ref())?;
            let back = Model::load(path.as_ref())?;
            assert_eq!(back, trained);
            println!("saved to {path}");
        }
    }
    Ok(())
}
