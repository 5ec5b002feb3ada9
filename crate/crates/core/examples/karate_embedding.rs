//! Trains the three-layer tanh model on the karate club with one label per
//! community and prints the 2-d hidden embedding at a few checkpoints.
//!
//! cargo run --release --example karate_embedding -- [seed]

use gcn::data::{karate_club, KARATE_TRAIN_NODES};
use gcn::model::GcnConfig;
use gcn::train::{evaluate, train_with};
use gcn::PropagationOps;

fn main() -> gcn::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let ds = karate_club();
    let config = GcnConfig::karate_embedding(300, seed);
    let ops = PropagationOps::build(&ds.graph, config.propagation, config.lambda_max)?;
    let checkpoints = [1, 50, 300];
    let (model, _) = train_with(&ds, &config, |epoch, model| {
        if checkpoints.contains(&epoch) {
            let outputs = model.layer_outputs(&ops, &ds.features)?;
            let emb = &outputs[model.depth() - 2];
            println!("iteration {epoch}");
            for i in 0..emb.rows() {
                let mark = if KARATE_TRAIN_NODES.contains(&i) { "*" } else { " " };
                println!(
                    "  {i:>2}{mark} class {} ({:+.3}, {:+.3})",
                    ds.labels[i].unwrap(),
                    emb[(i, 0)],
                    emb[(i, 1)]
                );
            }
        }
        Ok(())
    })?;
    let all: Vec<usize> = (0..ds.n()).collect();
    println!("accuracy over all 34 members: {:.3}", evaluate(&model, &ds, &ops, &all)?);
    Ok(())
}
