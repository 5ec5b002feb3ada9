//! Trains every propagation variant on a synthetic citation graph and
//! prints mean test accuracy over several seeds.
//!
//! cargo run --release --example propagation_comparison -- [seeds]

use gcn::data::{planted_partition, Dataset, PlantedPartition};
use gcn::model::GcnConfig;
use gcn::train::{mean_stderr, train};
use gcn::PropagationKind;

fn main() -> gcn::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let ds = planted_partition(&PlantedPartition::default(), 3)?;
    let ds = Dataset {
        features: ds.features.row_normalized(),
        ..ds
    };
    println!("{:<12} {:>8} {:>8}", "variant", "accuracy", "stderr");
    for kind in PropagationKind::comparison_set() {
        let mut accs = Vec::new();
        for seed in 0..seeds {
            let config = GcnConfig {
                propagation: kind,
                seed,
                ..GcnConfig::default()
            };
            accs.push(train(&ds, &config)?.1.test_accuracy);
        }
        let (mean, err) = mean_stderr(&accs);
        println!("{:<12} {:>8.3} {:>8.3}", kind.to_string(), mean, err);
    }
    Ok(())
}
