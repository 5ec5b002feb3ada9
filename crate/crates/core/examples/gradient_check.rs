//! Compares backpropagated gradients of the training objective with central
//! finite differences for every propagation variant.

use gcn::autodiff::finite_difference_gradient;
use gcn::data::karate_club;
use gcn::model::{build_model, GcnConfig};
use gcn::rng::{stream, Stream};
use gcn::train::{objective, objective_with_gradients};
use gcn::{Model, PropagationKind, PropagationOps};

fn main() -> gcn::Result<()> {
    let ds = karate_club();
    for kind in PropagationKind::comparison_set() {
        let config = GcnConfig {
            hidden_dims: vec![4],
            propagation: kind,
            ..GcnConfig::default()
        };
        let ops = PropagationOps::build(&ds.graph, kind, config.lambda_max)?;
        let mut model = build_model(&config, ds.features.cols(), ds.class_count, &mut stream(0, Stream::Init))?;
        let mask = ds.masks.train.clone();
        objective_with_gradients(&mut model, &ds, &ops, &config, &mask, true, &mut stream(0, Stream::Dropout))?;
        let mut params = model.params.clone();
        let numeric = finite_difference_gradient(
            |ps| {
                let probe = Model {
                    layers: model.layers.clone(),
                    params: ps.to_vec(),
                };
                objective(&probe, &ds, &ops, &config, &mask, true, &mut stream(0, Stream::Dropout))
            },
            &mut params,
            1e-5,
        )?;
        let mut worst: f64 = 0.0;
        for (p, g) in model.params.iter().zip(&numeric) {
            let scale = p.grad.max_abs().max(g.max_abs()).max(1e-12);
            worst = worst.max(p.grad.max_abs_diff(g) / scale);
        }
        println!("{:<12} relative error {worst:.2e}", kind.to_string());
    }
    Ok(())
}
