//! Properties of the graph operators and the Laplacian eigenbasis, checked
//! against straightforward reference computations.

use proptest::prelude::*;
use specsync::generators::{random_connected, rng_from_seed};
use specsync::matrix::dot;
use specsync::spectral::{symmetric_eigen, SpectralBasis};
use specsync::{DenseMatrix, WeightedGraph};

fn graph(seed: u64, n: usize, p: f64) -> WeightedGraph {
    random_connected(n, p, [0.1, 3.0], &mut rng_from_seed(seed)).unwrap()
}

fn reference_laplacian(g: &WeightedGraph) -> DenseMatrix {
    let mut l = DenseMatrix::zeros(g.n(), g.n());
    for e in g.edges() {
        l[(e.i, e.j)] -= e.w;
        l[(e.j, e.i)] -= e.w;
        l[(e.i, e.i)] += e.w;
        l[(e.j, e.j)] += e.w;
    }
    l
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn laplacian_matches_edge_sum(seed in any::<u64>(), n in 1usize..18, p in 0.0f64..1.0) {
        let g = graph(seed, n, p);
        let l = g.laplacian();
        prop_assert_eq!(l.sub(&reference_laplacian(&g)).unwrap().max_abs(), 0.0);
        let b = g.incidence();
        let bwbt = b.matmul(&g.weight_matrix()).unwrap().matmul(&b.transpose()).unwrap();
        prop_assert!(l.sub(&bwbt).unwrap().max_abs() <= 1e-12);
        for row in l.row_sums() {
            prop_assert!(row.abs() <= 1e-12);
        }
        // Edges are stored with i < j, and B has +1 at the tail.
        for (a, e) in g.edges().iter().enumerate() {
            prop_assert!(e.i < e.j);
            prop_assert_eq!(b[(e.i, a)], 1.0);
            prop_assert_eq!(b[(e.j, a)], -1.0);
        }
    }

    #[test]
    fn eigenbasis_is_orthonormal_and_exact(seed in any::<u64>(), n in 1usize..18, p in 0.0f64..1.0) {
        let g = graph(seed, n, p);
        let l = g.laplacian();
        let basis = SpectralBasis::new(&g).unwrap();
        let lams = basis.eigenvalues();
        prop_assert!(lams.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(lams[0].abs() <= 1e-10);
        if n > 1 {
            // Connected: the zero eigenvalue is simple.
            prop_assert!(lams[1] > 1e-10);
        }
        for r in 0..n {
            let v = basis.vertex_vector(r);
            let lv = l.mat_vec(v).unwrap();
            for i in 0..n {
                prop_assert!((lv[i] - lams[r] * v[i]).abs() <= 1e-9);
            }
            for s in 0..n {
                let expected = if r == s { 1.0 } else { 0.0 };
                prop_assert!((dot(v, basis.vertex_vector(s)) - expected).abs() <= 1e-10);
            }
            // Sign convention: the first clearly non-zero entry is positive.
            if let Some(x) = v.iter().find(|x| x.abs() > 1e-8) {
                prop_assert!(*x > 0.0);
            }
        }
    }

    #[test]
    fn edge_vectors_pair_to_eigenvalues(seed in any::<u64>(), n in 2usize..16, p in 0.0f64..1.0) {
        let g = graph(seed, n, p);
        let basis = SpectralBasis::new(&g).unwrap();
        let ldn = g.down_edge_laplacian();
        for r in 0..n {
            let er = basis.edge_vector(r);
            // e⁽ʳ⁾ = Bᵀv⁽ʳ⁾ computed by hand.
            let v = basis.vertex_vector(r);
            for (a, e) in g.edges().iter().enumerate() {
                prop_assert!((er[a] - (v[e.i] - v[e.j])).abs() <= 1e-12);
            }
            let le = ldn.mat_vec(&er).unwrap();
            for a in 0..g.m() {
                prop_assert!((le[a] - basis.eigenvalue(r) * er[a]).abs() <= 1e-8);
            }
            for s in 0..n {
                let es = basis.edge_vector(s);
                let pair: f64 = g.edges().iter().enumerate().map(|(a, e)| er[a] * e.w * es[a]).sum();
                let expected = if r == s { basis.eigenvalue(r) } else { 0.0 };
                prop_assert!((pair - expected).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn decompose_reconstruct_round_trip(
        seed in any::<u64>(),
        n in 1usize..16,
        theta in proptest::collection::vec(-10.0f64..10.0, 16),
    ) {
        let g = graph(seed, n, 0.4);
        let basis = SpectralBasis::new(&g).unwrap();
        let x = &theta[..n];
        let alpha = basis.decompose(x).unwrap();
        let back = basis.reconstruct(&alpha).unwrap();
        for (a, b) in back.iter().zip(x) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
        // Parseval.
        prop_assert!((dot(&alpha, &alpha) - dot(x, x)).abs() <= 1e-9 * (1.0 + dot(x, x)));
        // α₀ is the scaled mean.
        let mean = x.iter().sum::<f64>() / n as f64;
        prop_assert!((alpha[0] - mean * (n as f64).sqrt()).abs() <= 1e-10);
    }

    #[test]
    fn weight_matrix_round_trip(seed in any::<u64>(), n in 1usize..14) {
        let g = graph(seed, n, 0.5);
        let back = WeightedGraph::from_weight_matrix(&g.adjacency()).unwrap();
        prop_assert_eq!(back, g);
    }

    #[test]
    fn jacobi_matches_diagonal_similarity(diag in proptest::collection::vec(-5.0f64..5.0, 1..10), seed in any::<u64>()) {
        // Q·D·Qᵀ with Q from a random graph's eigenbasis has spectrum D.
        let n = diag.len();
        let g = graph(seed, n, 0.5);
        let q = DenseMatrix::from_columns(SpectralBasis::new(&g).unwrap().vertex_vectors());
        let m = q.matmul(&DenseMatrix::diagonal(&diag)).unwrap().matmul(&q.transpose()).unwrap();
        let eig = symmetric_eigen(&m).unwrap();
        let mut sorted = diag.clone();
        sorted.sort_by(f64::total_cmp);
        for (a, b) in eig.values.iter().zip(&sorted) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }
}

#[test]
fn rejects_bad_graphs() {
    assert!(WeightedGraph::new(3, [(0, 1, 1.0)]).is_err());
    assert!(WeightedGraph::new(2, [(0, 1, -1.0)]).is_err());
    assert!(WeightedGraph::new(2, [(0, 0, 1.0)]).is_err());
    assert!(WeightedGraph::new(2, [(0, 2, 1.0)]).is_err());
    // Repeated pairs merge by summing.
    let g = WeightedGraph::new(2, [(0, 1, 1.0), (1, 0, 0.5)]).unwrap();
    assert_eq!(g.m(), 1);
    assert_eq!(g.edges()[0].w, 1.5);
}

#[test]
fn path_spectrum() {
    // P3: eigenvalues 0, 1, 3 with known vectors.
    let g = WeightedGraph::new(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
    let basis = SpectralBasis::new(&g).unwrap();
    for (got, want) in basis.eigenvalues().iter().zip([0.0, 1.0, 3.0]) {
        assert!((got - want).abs() < 1e-12);
    }
    let s2 = 0.5_f64.sqrt();
    let v1 = basis.vertex_vector(1);
    assert!((v1[0] - s2).abs() < 1e-12 && v1[1].abs() < 1e-12 && (v1[2] + s2).abs() < 1e-12);
}
