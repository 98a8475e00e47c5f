//! Weighted undirected graphs, vertex partitions and the matrix operators
//! built from them: adjacency, degree, Laplacian, signed incidence, the
//! weighted down-edge Laplacian, indicator and quotient matrices.
//!
//! Edges are stored once, as `(i, j, w)` with `i < j`, sorted by `(i, j)`.
//! That order is the canonical edge index used by the incidence matrix and
//! by per-edge phase lags; edge `a` is oriented from `i` to `j`.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

/// A connected, positively weighted, simple undirected graph.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<Edge>,
}

impl WeightedGraph {
    /// Validates and canonicalizes an edge list.
    ///
    /// Endpoints may be given in either order. Repeated vertex pairs are
    /// merged by summing their weights (a warning is logged). Self-loops,
    /// non-positive or non-finite weights, out-of-range endpoints and
    /// disconnected graphs are rejected.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("graph must have at least one vertex".into()));
        }
        let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (a, b, w) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidGraph(format!("edge ({a}, {b}) out of range for n = {n}")));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at vertex {a}")));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a}, {b}) has non-positive or non-finite weight {w}"
                )));
            }
            let key = (a.min(b), a.max(b));
            if let Some(existing) = merged.get_mut(&key) {
                log::warn!("merging duplicate edge {key:?}: {existing} + {w}");
                *existing += w;
            } else {
                merged.insert(key, w);
            }
        }
        let edges = merged.into_iter().map(|((i, j), w)| Edge { i, j, w }).collect();
        let g = Self { n, edges };
        if let Some(unreachable) = g.first_unreachable() {
            return Err(Error::Disconnected { unreachable });
        }
        Ok(g)
    }

    /// Builds a graph from a dense symmetric weight matrix (zeros mean no edge).
    pub fn from_weight_matrix(a: &DenseMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::InvalidGraph("weight matrix must be square".into()));
        }
        let n = a.rows();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if a[(i, j)] != a[(j, i)] {
                    return Err(Error::NotSymmetric {
                        asymmetry: (a[(i, j)] - a[(j, i)]).abs(),
                    });
                }
                if a[(i, j)] != 0.0 {
                    edges.push((i, j, a[(i, j)]));
                }
            }
        }
        Self::new(n, edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn weights(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.w).collect()
    }

    /// Same topology with new weights, in canonical edge order.
    pub fn with_weights(&self, weights: &[f64]) -> Result<Self> {
        if weights.len() != self.m() {
            return Err(Error::DimensionMismatch {
                expected: self.m(),
                actual: weights.len(),
            });
        }
        Self::new(self.n, self.edges.iter().zip(weights).map(|(e, &w)| (e.i, e.j, w)))
    }

    /// Weighted degrees (sum of incident weights).
    pub fn degrees(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for e in &self.edges {
            d[e.i] += e.w;
            d[e.j] += e.w;
        }
        d
    }

    pub fn neighbors(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.n];
        for e in &self.edges {
            adj[e.i].push((e.j, e.w));
            adj[e.j].push((e.i, e.w));
        }
        adj
    }

    fn first_unreachable(&self) -> Option<usize> {
        let adj = self.neighbors();
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            for &(u, _) in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
        seen.iter().position(|s| !s)
    }

    pub fn adjacency(&self) -> DenseMatrix {
        let mut a = DenseMatrix::zeros(self.n, self.n);
        for e in &self.edges {
            a[(e.i, e.j)] = e.w;
            a[(e.j, e.i)] = e.w;
        }
        a
    }

    /// `L = D − A`.
    pub fn laplacian(&self) -> DenseMatrix {
        let mut l = DenseMatrix::zeros(self.n, self.n);
        for e in &self.edges {
            l[(e.i, e.j)] -= e.w;
            l[(e.j, e.i)] -= e.w;
            l[(e.i, e.i)] += e.w;
            l[(e.j, e.j)] += e.w;
        }
        l
    }

    /// Signed incidence matrix `B` (n × m): `+1` at the tail `i`, `−1` at the head `j`.
    pub fn incidence(&self) -> DenseMatrix {
        let mut b = DenseMatrix::zeros(self.n, self.m());
        for (a, e) in self.edges.iter().enumerate() {
            b[(e.i, a)] = 1.0;
            b[(e.j, a)] = -1.0;
        }
        b
    }

    /// Diagonal edge-weight matrix `W` (m × m).
    pub fn weight_matrix(&self) -> DenseMatrix {
        DenseMatrix::diagonal(&self.weights())
    }

    /// Weighted down-edge Laplacian `BᵀBW` (m × m, generally non-symmetric).
    pub fn down_edge_laplacian(&self) -> DenseMatrix {
        let m = self.m();
        let mut out = DenseMatrix::zeros(m, m);
        // (BᵀB)_ab is the signed overlap of the endpoints of edges a and b.
        let sign = |a: &Edge, v: usize| -> f64 {
            if v == a.i {
                1.0
            } else if v == a.j {
                -1.0
            } else {
                0.0
            }
        };
        let mut incident: Vec<Vec<usize>> = vec![Vec::new(); self.n];
        for (a, e) in self.edges.iter().enumerate() {
            incident[e.i].push(a);
            incident[e.j].push(a);
        }
        for (a, ea) in self.edges.iter().enumerate() {
            for &v in &[ea.i, ea.j] {
                for &b in &incident[v] {
                    let eb = &self.edges[b];
                    out[(a, b)] += sign(ea, v) * sign(eb, v) * eb.w;
                }
            }
        }
        out
    }

    /// `L·P` computed from the edge list: entry `(i, c)` is the weight
    /// vertex `i` sends out of its own cell when `c` is its cell, and minus
    /// the weight it sends into cell `c` otherwise.
    pub fn laplacian_times_indicator(&self, p: &VertexPartition) -> Result<DenseMatrix> {
        p.check_len(self.n)?;
        let mut lp = DenseMatrix::zeros(self.n, p.k());
        for e in &self.edges {
            let (ci, cj) = (p.cell(e.i), p.cell(e.j));
            if ci != cj {
                lp[(e.i, ci)] += e.w;
                lp[(e.i, cj)] -= e.w;
                lp[(e.j, cj)] += e.w;
                lp[(e.j, ci)] -= e.w;
            }
        }
        Ok(lp)
    }

    /// Total edge weight from each vertex into each cell (n × k).
    pub fn cell_weight_sums(&self, p: &VertexPartition) -> Result<DenseMatrix> {
        p.check_len(self.n)?;
        let mut s = DenseMatrix::zeros(self.n, p.k());
        for e in &self.edges {
            s[(e.i, p.cell(e.j))] += e.w;
            s[(e.j, p.cell(e.i))] += e.w;
        }
        Ok(s)
    }
}

/// Assignment of vertices to cells `0..k`, every cell non-empty.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VertexPartition {
    assignment: Vec<usize>,
    k: usize,
}

impl VertexPartition {
    pub fn new(assignment: Vec<usize>) -> Result<Self> {
        if assignment.is_empty() {
            return Err(Error::InvalidPartition("empty assignment".into()));
        }
        let k = assignment.iter().max().map_or(0, |&c| c + 1);
        let mut sizes = vec![0usize; k];
        for &c in &assignment {
            sizes[c] += 1;
        }
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidPartition(format!("cell {empty} is empty")));
        }
        Ok(Self { assignment, k })
    }

    /// Partition from explicit cells; every vertex `0..n` must appear exactly once.
    pub fn from_cells(n: usize, cells: &[Vec<usize>]) -> Result<Self> {
        let mut assignment = vec![usize::MAX; n];
        for (c, cell) in cells.iter().enumerate() {
            for &v in cell {
                if v >= n {
                    return Err(Error::InvalidPartition(format!("vertex {v} out of range")));
                }
                if assignment[v] != usize::MAX {
                    return Err(Error::InvalidPartition(format!("vertex {v} assigned twice")));
                }
                assignment[v] = c;
            }
        }
        if let Some(v) = assignment.iter().position(|&c| c == usize::MAX) {
            return Err(Error::InvalidPartition(format!("vertex {v} unassigned")));
        }
        Self::new(assignment)
    }

    pub fn trivial(n: usize) -> Self {
        Self {
            assignment: vec![0; n],
            k: 1,
        }
    }

    pub fn discrete(n: usize) -> Self {
        Self {
            assignment: (0..n).collect(),
            k: n,
        }
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn cell(&self, v: usize) -> usize {
        self.assignment[v]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn cell_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }

    pub fn cells(&self) -> Vec<Vec<usize>> {
        let mut cells = vec![Vec::new(); self.k];
        for (v, &c) in self.assignment.iter().enumerate() {
            cells[c].push(v);
        }
        cells
    }

    pub(crate) fn check_len(&self, n: usize) -> Result<()> {
        if self.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: self.n(),
            });
        }
        Ok(())
    }

    /// Indicator matrix `P` (n × k), `P[i][c] = 1` iff vertex `i` is in cell `c`.
    pub fn indicator_matrix(&self) -> DenseMatrix {
        let mut p = DenseMatrix::zeros(self.n(), self.k);
        for (v, &c) in self.assignment.iter().enumerate() {
            p[(v, c)] = 1.0;
        }
        p
    }

    /// Lifts a cell-valued vector to vertices: `P·x`.
    pub fn lift(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.k {
            return Err(Error::DimensionMismatch {
                expected: self.k,
                actual: x.len(),
            });
        }
        Ok(self.assignment.iter().map(|&c| x[c]).collect())
    }

    /// Cell averages of a vertex signal: `(PᵀP)⁻¹Pᵀ·x`.
    pub fn cell_means(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x.len())?;
        let mut sums = vec![0.0; self.k];
        for (&c, &xi) in self.assignment.iter().zip(x) {
            sums[c] += xi;
        }
        Ok(sums
            .iter()
            .zip(self.cell_sizes())
            .map(|(s, size)| s / size as f64)
            .collect())
    }

    /// Quotient `(PᵀP)⁻¹PᵀMP` of an n × n matrix.
    pub fn quotient_matrix(&self, m: &DenseMatrix) -> Result<DenseMatrix> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch {
                expected: m.rows(),
                actual: m.cols(),
            });
        }
        self.check_len(m.rows())?;
        let mut q = DenseMatrix::zeros(self.k, self.k);
        for i in 0..m.rows() {
            let ci = self.assignment[i];
            for (j, &x) in m.row(i).iter().enumerate() {
                q[(ci, self.assignment[j])] += x;
            }
        }
        for (c, size) in self.cell_sizes().into_iter().enumerate() {
            for x in q.row_mut(c) {
                *x /= size as f64;
            }
        }
        Ok(q)
    }

    /// Quotient of an n × k matrix that already has `P` applied on the right:
    /// `(PᵀP)⁻¹Pᵀ·X`.
    pub fn cell_average_rows(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_len(x.rows())?;
        let mut q = DenseMatrix::zeros(self.k, x.cols());
        for i in 0..x.rows() {
            let c = self.assignment[i];
            for (j, &v) in x.row(i).iter().enumerate() {
                q[(c, j)] += v;
            }
        }
        for (c, size) in self.cell_sizes().into_iter().enumerate() {
            for v in q.row_mut(c) {
                *v /= size as f64;
            }
        }
        Ok(q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn path3() -> WeightedGraph {
        WeightedGraph::new(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap()
    }

    pub(crate) fn k23() -> WeightedGraph {
        let mut edges = Vec::new();
        for a in 0..2 {
            for b in 2..5 {
                edges.push((a, b, 1.0));
            }
        }
        WeightedGraph::new(5, edges).unwrap()
    }

    #[test]
    fn two_vertex_laplacian() {
        let g = WeightedGraph::new(2, [(0, 1, 2.0)]).unwrap();
        assert_eq!(g.laplacian(), DenseMatrix::from_rows(&[[2.0, -2.0], [-2.0, 2.0]]));
    }

    #[test]
    fn path_laplacian_and_incidence() {
        let g = path3();
        assert_eq!(
            g.laplacian(),
            DenseMatrix::from_rows(&[[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]])
        );
        assert_eq!(
            g.incidence(),
            DenseMatrix::from_rows(&[[1.0, 0.0], [-1.0, 1.0], [0.0, -1.0]])
        );
    }

    #[test]
    fn single_edge_incidence_and_down_laplacian() {
        let g = WeightedGraph::new(2, [(1, 0, 3.5)]).unwrap();
        assert_eq!(g.incidence(), DenseMatrix::from_rows(&[[1.0], [-1.0]]));
        assert_eq!(g.down_edge_laplacian(), DenseMatrix::from_rows(&[[7.0]]));
    }

    #[test]
    fn path_down_edge_laplacian() {
        // Oracle: BᵀB·W by explicit matrix products.
        let g = path3();
        let b = g.incidence();
        let oracle = b.transpose().matmul(&b).unwrap().matmul(&g.weight_matrix()).unwrap();
        assert_eq!(oracle, DenseMatrix::from_rows(&[[2.0, -1.0], [-1.0, 2.0]]));
        assert_eq!(g.down_edge_laplacian(), oracle);
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(matches!(
            WeightedGraph::new(3, [(0, 1, 1.0)]),
            Err(Error::Disconnected { unreachable: 2 })
        ));
        assert!(WeightedGraph::new(2, [(0, 0, 1.0)]).is_err());
        assert!(WeightedGraph::new(2, [(0, 1, 0.0)]).is_err());
        assert!(WeightedGraph::new(2, [(0, 1, -1.0)]).is_err());
        assert!(WeightedGraph::new(2, [(0, 1, f64::NAN)]).is_err());
        assert!(WeightedGraph::new(2, [(0, 2, 1.0)]).is_err());
        assert!(WeightedGraph::new(0, []).is_err());
        assert!(WeightedGraph::new(1, []).is_ok());
    }

    #[test]
    fn duplicate_edges_are_summed() {
        let g = WeightedGraph::new(2, [(0, 1, 1.0), (1, 0, 0.5)]).unwrap();
        assert_eq!(g.m(), 1);
        assert_eq!(g.edges()[0].w, 1.5);
    }

    #[test]
    fn edges_are_canonically_sorted() {
        let g = WeightedGraph::new(4, [(3, 2, 1.0), (0, 3, 1.0), (1, 0, 1.0)]).unwrap();
        let pairs: Vec<_> = g.edges().iter().map(|e| (e.i, e.j)).collect();
        assert_eq!(pairs, vec![(0, 1), (0, 3), (2, 3)]);
    }

    #[test]
    fn indicator_matrices() {
        let p = VertexPartition::from_cells(3, &[vec![0], vec![1, 2]]).unwrap();
        assert_eq!(
            p.indicator_matrix(),
            DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
        );
        let ones = VertexPartition::trivial(4).indicator_matrix();
        assert_eq!(ones, DenseMatrix::from_rows(&[[1.0], [1.0], [1.0], [1.0]]));
        assert_eq!(
            VertexPartition::discrete(3).indicator_matrix(),
            DenseMatrix::identity(3)
        );
    }

    #[test]
    fn partition_validation() {
        assert!(VertexPartition::new(vec![0, 2, 2]).is_err());
        assert!(VertexPartition::new(vec![]).is_err());
        assert!(VertexPartition::from_cells(3, &[vec![0, 1], vec![1, 2]]).is_err());
        assert!(VertexPartition::from_cells(3, &[vec![0, 1]]).is_err());
    }

    #[test]
    fn quotient_of_path() {
        let g = path3();
        let p = VertexPartition::from_cells(3, &[vec![0, 2], vec![1]]).unwrap();
        let q = p.quotient_matrix(&g.laplacian()).unwrap();
        assert_eq!(q, DenseMatrix::from_rows(&[[1.0, -1.0], [-2.0, 2.0]]));
    }

    #[test]
    fn quotient_of_k23() {
        let g = k23();
        let p = VertexPartition::new(vec![0, 0, 1, 1, 1]).unwrap();
        let q = p.quotient_matrix(&g.laplacian()).unwrap();
        assert_eq!(q, DenseMatrix::from_rows(&[[3.0, -3.0], [-2.0, 2.0]]));
    }

    #[test]
    fn discrete_quotient_is_identity_map() {
        let m = DenseMatrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.5]]);
        assert_eq!(VertexPartition::discrete(3).quotient_matrix(&m).unwrap(), m);
    }

    #[test]
    fn edge_list_lp_matches_dense_product() {
        let g = WeightedGraph::new(4, [(0, 1, 1.0), (1, 2, 2.5), (2, 3, 0.5), (0, 3, 1.5), (0, 2, 0.25)]).unwrap();
        let p = VertexPartition::new(vec![0, 1, 0, 1]).unwrap();
        let dense = g.laplacian().matmul(&p.indicator_matrix()).unwrap();
        let fast = g.laplacian_times_indicator(&p).unwrap();
        assert!(dense.sub(&fast).unwrap().max_abs() < 1e-15);
    }
}
