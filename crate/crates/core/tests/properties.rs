mod common;

use common::{bfs, erdos_renyi, permute_rows, random_permutation, rng, uniform_matrix};
use gcn::autodiff::softmax_rowwise;
use gcn::data::{load_bundle, random_graph, random_split, save_bundle, Dataset, Features, Masks};
use gcn::operator::{
    first_order_operator, normalized_laplacian, renormalized_adjacency, scaled_laplacian,
    single_param_operator,
};
use gcn::propagation::{chebyshev_basis, propagate, LambdaMax, PropagationKind, PropagationOps};
use gcn::wl::{partition_refines, wl1_refine, Coloring};
use gcn::{CsrMatrix, DenseMatrix, SparseGraph};
use proptest::prelude::*;

fn graph_strategy(max_n: usize) -> impl Strategy<Value = SparseGraph> {
    (1..=max_n, 0.0..0.6f64, any::<bool>(), any::<u64>())
        .prop_map(|(n, p, weighted, seed)| erdos_renyi(n, p, weighted, &mut rng(seed)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn spmm_matches_dense_product(
        rows in 1..40usize,
        inner in 1..40usize,
        cols in 1..6usize,
        density in 0.0..0.5f64,
        seed in any::<u64>(),
    ) {
        let mut r = rng(seed);
        let mut a = uniform_matrix(rows, inner, &mut r);
        for v in a.values_mut() {
            if v.abs() > density {
                *v = 0.0;
            }
        }
        let x = uniform_matrix(inner, cols, &mut r);
        let sparse = CsrMatrix::from_dense(&a);
        let got = sparse.spmm(&x).unwrap();
        prop_assert!(got.max_abs_diff(&a.matmul(&x).unwrap()) <= 1e-12);
        let back = sparse.spmm_transpose(&got).unwrap();
        prop_assert!(back.max_abs_diff(&a.transpose().matmul(&got).unwrap()) <= 1e-12);
    }

    #[test]
    fn operators_are_exactly_symmetric(g in graph_strategy(30), lambda in 0.1..4.0f64) {
        let laplacian = normalized_laplacian(&g);
        let ops = [
            renormalized_adjacency(&g, 1.0).unwrap(),
            renormalized_adjacency(&g, lambda).unwrap(),
            scaled_laplacian(&laplacian, lambda).unwrap(),
            laplacian,
            first_order_operator(&g),
            single_param_operator(&g),
        ];
        for op in &ops {
            prop_assert_eq!(op.matrix(), &op.matrix().transpose());
        }
    }

    #[test]
    fn renormalized_entries_are_nonnegative(g in graph_strategy(30)) {
        let op = renormalized_adjacency(&g, 1.0).unwrap();
        prop_assert!(op.matrix().values().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn propagation_is_permutation_equivariant(g in graph_strategy(25), seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = g.n();
        let h = uniform_matrix(n, 3, &mut r);
        let perm = random_permutation(n, &mut r);
        let pg = g.permuted(&perm).unwrap();
        let ph = permute_rows(&h, &perm);
        for kind in PropagationKind::comparison_set() {
            let weights: Vec<DenseMatrix> =
                (0..kind.weight_count()).map(|_| uniform_matrix(3, 2, &mut r)).collect();
            let a = PropagationOps::build(&g, kind, LambdaMax::Fixed(1.7)).unwrap();
            let b = PropagationOps::build(&pg, kind, LambdaMax::Fixed(1.7)).unwrap();
            let out = propagate(kind, &a, &h, &weights).unwrap();
            let pout = propagate(kind, &b, &ph, &weights).unwrap();
            prop_assert!(permute_rows(&out, &perm).max_abs_diff(&pout) <= 1e-12, "{}", kind);
        }
    }

    #[test]
    fn chebyshev_terms_are_k_localized(g in graph_strategy(30), source in 0..30usize, lam in 1.0..2.5f64) {
        let n = g.n();
        let source = source % n;
        let l_tilde = scaled_laplacian(&normalized_laplacian(&g), lam).unwrap();
        let mut impulse = DenseMatrix::zeros(n, 1);
        impulse[(source, 0)] = 1.0;
        let basis = chebyshev_basis(&l_tilde, &impulse, 5).unwrap();
        let dist = bfs(&g, source);
        for (k, term) in basis.terms.iter().enumerate() {
            for (i, &d) in dist.iter().enumerate() {
                if d > k {
                    prop_assert_eq!(term[(i, 0)], 0.0, "term {} node {}", k, i);
                }
            }
        }
        for k in 2..basis.terms.len() {
            let mut residual = l_tilde.matrix().spmm(&basis.terms[k - 1]).unwrap().scale(2.0);
            residual = basis.terms[k].sub(&residual).unwrap().add(&basis.terms[k - 2]).unwrap();
            prop_assert!(residual.max_abs() <= 1e-10);
        }
        prop_assert_eq!(&basis.terms[0], &impulse);
    }

    #[test]
    fn softmax_rows_are_distributions(rows in 1..10usize, cols in 1..8usize, scale in 0.1..15.0f64, seed in any::<u64>()) {
        let z = uniform_matrix(rows, cols, &mut rng(seed)).scale(scale);
        let p = softmax_rowwise(&z).unwrap();
        for i in 0..rows {
            let s: f64 = p.row(i).iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-12);
            prop_assert!(p.row(i).iter().all(|&v| v > 0.0 && v < 1.0 || cols == 1));
        }
    }

    #[test]
    fn random_graph_is_simple_with_2n_edges(n in 5..300usize, seed in any::<u64>()) {
        let ds = random_graph(n, seed).unwrap();
        let edges = ds.graph.upper_edges();
        prop_assert_eq!(edges.len(), 2 * n);
        prop_assert_eq!(ds.graph.stored_entries(), 4 * n);
        prop_assert!((0..n).all(|i| ds.graph.adjacency().get(i, i) == 0.0));
    }

    #[test]
    fn wl_refinement_is_monotone_and_terminates(g in graph_strategy(30)) {
        let n = g.n();
        let history = wl1_refine(&g, &Coloring::uniform(n), n).unwrap();
        prop_assert!(history.len() - 1 <= n);
        for pair in history.windows(2) {
            prop_assert!(pair[1].distinct() >= pair[0].distinct());
            prop_assert!(partition_refines(&pair[0], &pair[1]).unwrap());
        }
        let last = history.last().unwrap();
        let again = wl1_refine(&g, last, 1).unwrap();
        prop_assert_eq!(again.last().unwrap().distinct(), last.distinct());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn random_splits_are_disjoint(seed in any::<u64>()) {
        let labels: Vec<Option<usize>> = (0..400).map(|i| if i % 7 == 0 { None } else { Some(i % 4) }).collect();
        let m = random_split(&labels, 4, 20, 80, 120, seed).unwrap();
        prop_assert_eq!(m.train.len(), 80);
        m.check(labels.len(), &labels).unwrap();
        for c in 0..4 {
            prop_assert_eq!(m.train.iter().filter(|&&i| labels[i] == Some(c)).count(), 20);
        }
    }

    #[test]
    fn bundle_round_trip(g in graph_strategy(20), seed in any::<u64>(), identity in any::<bool>()) {
        use rand::Rng;
        let mut r = rng(seed);
        let n = g.n();
        let features = if identity {
            Features::Identity(n)
        } else {
            let mut triplets = Vec::new();
            for i in 0..n {
                for j in 0..5 {
                    if r.random::<f64>() < 0.4 {
                        triplets.push((i, j, r.random_range(0.001..10.0)));
                    }
                }
            }
            Features::Sparse(CsrMatrix::from_triplets(n, 5, triplets, |a, _| a).unwrap())
        };
        let labels: Vec<Option<usize>> = (0..n).map(|i| (i % 3 != 2).then_some(i % 2)).collect();
        let labeled: Vec<usize> = (0..n).filter(|&i| labels[i].is_some()).collect();
        let (train, rest) = labeled.split_at(labeled.len() / 2);
        let ds = Dataset {
            graph: g,
            features,
            labels,
            class_count: 2,
            masks: Masks { train: train.to_vec(), val: Vec::new(), test: rest.to_vec() },
            class_names: None,
            directed_source: seed % 2 == 0,
        };
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&ds, dir.path()).unwrap();
        prop_assert_eq!(load_bundle(dir.path()).unwrap(), ds);
    }

    #[test]
    fn wl_is_isomorphism_invariant(g in graph_strategy(30), seed in any::<u64>()) {
        let n = g.n();
        let perm = random_permutation(n, &mut rng(seed));
        let pg = g.permuted(&perm).unwrap();
        let a = wl1_refine(&g, &Coloring::uniform(n), n).unwrap().pop().unwrap();
        let b = wl1_refine(&pg, &Coloring::uniform(n), n).unwrap().pop().unwrap();
        let pulled_back: Vec<usize> = (0..n).map(|i| b.colors[perm[i]]).collect();
        let pulled_back = Coloring::new(&pulled_back, b.round);
        prop_assert!(partition_refines(&a, &pulled_back).unwrap());
        prop_assert!(partition_refines(&pulled_back, &a).unwrap());
    }
}
