//! Builds a planted-partition citation graph, saves it as a bundle, reloads
//! it and compares the graph model against a feature-only baseline.
//!
//! cargo run --release --example synthetic_citation -- [bundle-dir]

use std::path::PathBuf;

use gcn::data::{load_bundle, planted_partition, save_bundle, Dataset, PlantedPartition};
use gcn::model::GcnConfig;
use gcn::propagation::PropagationKind;
use gcn::train::{mean_stderr, train};

fn main() -> gcn::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("gcn-synthetic"));
    let ds = planted_partition(&PlantedPartition::default(), 1)?;
    save_bundle(&ds, &dir)?;
    let ds = load_bundle(&dir)?;
    println!(
        "bundle at {}: {} nodes, {} edges, {} features, {} classes",
        dir.display(),
        ds.n(),
        ds.graph.undirected_edge_count(),
        ds.features.cols(),
        ds.class_count
    );
    let ds = Dataset {
        features: ds.features.row_normalized(),
        ..ds
    };
    for prop in [PropagationKind::RENORM, PropagationKind::Mlp] {
        let mut accs = Vec::new();
        for seed in 0..5 {
            let config = GcnConfig {
                propagation: prop,
                seed,
                ..GcnConfig::default()
            };
            let (_, report) = train(&ds, &config)?;
            accs.push(report.test_accuracy);
        }
        let (mean, err) = mean_stderr(&accs);
        println!("{:>6}: test accuracy {:.3} ± {:.3}", prop.to_string(), mean, err);
    }
    Ok(())
}
