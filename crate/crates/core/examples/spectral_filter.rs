//! Compares a Chebyshev-approximated spectral filter against the exact
//! filter computed through a full eigendecomposition of the Laplacian.

use gcn::graph::SparseGraph;
use gcn::operator::{dense_eigenvalues, exact_spectral_filter, normalized_laplacian};
use gcn::propagation::{propagate, LambdaMax};
use gcn::{DenseMatrix, PropagationKind, PropagationOps};

fn main() -> gcn::Result<()> {
    let n = 12;
    let mut edges: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect();
    edges.extend([(0, 6, 1.0), (3, 9, 1.0)]);
    let g = SparseGraph::from_edge_list(&edges, n, true)?;
    let laplacian = normalized_laplacian(&g).to_dense();
    println!("laplacian spectrum: {:.3?}", dense_eigenvalues(&laplacian));

    let mut x = vec![0.0; n];
    x[0] = 1.0;
    let theta = [0.5, -0.3, 0.2, 0.1];
    for order in 1..=3 {
        let kind = PropagationKind::Chebyshev { order };
        let ops = PropagationOps::build(&g, kind, LambdaMax::Estimate)?;
        let lam = ops.lambda_max().expect("chebyshev ops carry lambda_max");
        let weights: Vec<DenseMatrix> = theta[..=order].iter().map(|&t| DenseMatrix::filled(1, 1, t)).collect();
        let fast = propagate(kind, &ops, &DenseMatrix::column(&x), &weights)?;
        let exact = exact_spectral_filter(
            &laplacian,
            |l| {
                let s = 2.0 * l / lam - 1.0;
                let (mut t0, mut t1) = (1.0, s);
                let mut acc = theta[0] + theta[1] * s;
                for t in &theta[2..=order] {
                    (t0, t1) = (t1, 2.0 * s * t1 - t0);
                    acc += t * t1;
                }
                acc
            },
            &x,
        )?;
        let gap = fast.values().iter().zip(&exact).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let support = fast.values().iter().filter(|v| v.abs() > 1e-14).count();
        println!("K={order}: lambda_max {lam:.6}, max deviation {gap:.1e}, {support} nonzero nodes");
    }
    Ok(())
}
