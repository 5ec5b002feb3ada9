//! Runs color refinement on the karate club and checks that an untrained
//! graph model maps nodes of equal color to equal hidden rows.

use gcn::data::{karate_club, Features};
use gcn::model::{build_model, GcnConfig};
use gcn::rng::{stream, Stream};
use gcn::wl::{wl1_refine, Coloring};
use gcn::{DenseMatrix, PropagationOps};

fn main() -> gcn::Result<()> {
    let ds = karate_club();
    let n = ds.n();
    let history = wl1_refine(&ds.graph, &Coloring::uniform(n), n)?;
    for c in &history {
        println!("round {}: {} colors", c.round, c.distinct());
    }
    let stable = history.last().expect("nonempty history");
    let mut classes: Vec<Vec<usize>> = vec![Vec::new(); stable.distinct()];
    for (i, &c) in stable.colors.iter().enumerate() {
        classes[c].push(i);
    }
    for (c, members) in classes.iter().enumerate().filter(|(_, m)| m.len() > 1) {
        println!("color {c}: nodes {members:?}");
    }

    let config = GcnConfig::default();
    let model = build_model(&config, 1, 2, &mut stream(0, Stream::Init))?;
    let ops = PropagationOps::build(&ds.graph, config.propagation, config.lambda_max)?;
    let hidden = &model.layer_outputs(&ops, &Features::Dense(DenseMatrix::filled(n, 1, 1.0)))?[0];
    let mut gap: f64 = 0.0;
    for members in &classes {
        for &i in members {
            for (a, b) in hidden.row(i).iter().zip(hidden.row(members[0])) {
                gap = gap.max((a - b).abs());
            }
        }
    }
    println!("largest hidden-row difference within a color: {gap:.2e}");
    Ok(())
}
