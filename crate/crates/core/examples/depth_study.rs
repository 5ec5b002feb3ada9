//! Cross-validated accuracy of deeper models with and without residual
//! connections on a synthetic citation graph.
//!
//! cargo run --release --example depth_study -- [max-depth]

use gcn::data::{planted_partition, Dataset, PlantedPartition};
use gcn::model::GcnConfig;
use gcn::train::cross_validate;

fn main() -> gcn::Result<()> {
    let max_depth: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(6);
    let p = PlantedPartition {
        n: 1000,
        ..PlantedPartition::default()
    };
    let ds = planted_partition(&p, 5)?;
    let ds = Dataset {
        features: ds.features.row_normalized(),
        ..ds
    };
    println!("depth  plain(train/test)  residual(train/test)");
    for depth in 1..=max_depth {
        let mut cells = Vec::new();
        for residual in [false, true] {
            let config = GcnConfig {
                max_epochs: 200,
                ..GcnConfig::depth_study(depth, residual, 0)
            };
            let cv = cross_validate(&ds, 5, &config)?;
            cells.push(format!("{:.3}/{:.3}", cv.train_mean_stderr().0, cv.test_mean_stderr().0));
        }
        println!("{depth:>5}  {:>17}  {:>20}", cells[0], cells[1]);
    }
    Ok(())
}
