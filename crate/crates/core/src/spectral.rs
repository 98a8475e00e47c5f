//! Laplacian eigenbasis and the paired down-edge vectors.
//!
//! Symmetric problems use cyclic Jacobi rotations; the small non-symmetric
//! quotient matrices go through a real Schur form. Eigenvectors are unit
//! length and carry a fixed sign (first component above `SIGN_EPS` is
//! positive) so runs are reproducible.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{VertexPartition, WeightedGraph};
use crate::matrix::{dot, norm, DenseMatrix};

const SYMMETRY_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 100;
const SIGN_EPS: f64 = 1e-8;
/// Eigenvalues closer than this are treated as one degenerate block.
pub const DEGENERACY_GAP: f64 = 1e-8;

/// Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// `vectors[r]` is the unit eigenvector for `values[r]`.
    pub vectors: Vec<Vec<f64>>,
}

/// Cyclic Jacobi eigensolver for a symmetric matrix.
pub fn symmetric_eigen(m: &DenseMatrix) -> Result<SymmetricEigen> {
    let asym = m.asymmetry().ok_or(Error::DimensionMismatch {
        expected: m.rows(),
        actual: m.cols(),
    })?;
    let scale = m.max_abs().max(1.0);
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    let n = m.rows();
    // Work on the symmetrized copy so tiny asymmetries do not leak in.
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = 0.5 * (m[(i, j)] + m[(j, i)]);
        }
    }
    // Rows of `v` are the accumulated eigenvectors.
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let frob: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let target = f64::EPSILON * frob.max(f64::MIN_POSITIVE);
    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let off: f64 = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= target {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                // Skip rotations that no longer change the diagonal.
                if apq.abs() < 1e-300
                    || (app.abs() + 1e18 * apq.abs() == app.abs() && aqq.abs() + 1e18 * apq.abs() == aqq.abs())
                {
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                let (lo, hi) = v.split_at_mut(q * n);
                let (vp, vq) = (&mut lo[p * n..p * n + n], &mut hi[..n]);
                for (x, y) in vp.iter_mut().zip(vq.iter_mut()) {
                    let (xp, yq) = (*x, *y);
                    *x = c * xp - s * yq;
                    *y = s * xp + c * yq;
                }
            }
        }
    }
    if !converged {
        let off: f64 = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off > 1e3 * target {
            return Err(Error::NoConvergence { sweeps: MAX_SWEEPS });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = order
        .iter()
        .map(|&i| {
            let mut vec = v[i * n..(i + 1) * n].to_vec();
            normalize_with_sign(&mut vec);
            vec
        })
        .collect();
    Ok(SymmetricEigen { values, vectors })
}

/// Scales to unit length and flips so the first clearly nonzero entry is positive.
fn normalize_with_sign(v: &mut [f64]) {
    let len = norm(v);
    if len > 0.0 {
        for x in v.iter_mut() {
            *x /= len;
        }
    }
    if let Some(first) = v.iter().find(|x| x.abs() > SIGN_EPS) {
        if *first < 0.0 {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
    }
}

/// Real eigenpairs of a small general (non-symmetric) matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneralEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

/// Eigenpairs of a square matrix whose spectrum is real, such as a quotient
/// Laplacian. Eigenvalues come from a real Schur form; eigenvectors span the
/// numerical null space of `M − λI`. Fails on complex spectra or when a
/// repeated eigenvalue has too few eigenvectors.
pub fn eigendecompose_general(m: &DenseMatrix) -> Result<GeneralEigen> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.rows(),
            actual: m.cols(),
        });
    }
    let k = m.rows();
    if k == 0 {
        return Ok(GeneralEigen {
            values: vec![],
            vectors: vec![],
        });
    }
    let scale = m.max_abs().max(1.0);
    let na = DMatrix::from_row_slice(k, k, m.as_slice());
    let complex = na.clone().complex_eigenvalues();
    let mut values = Vec::with_capacity(k);
    for z in complex.iter() {
        if z.im.abs() > 1e-8 * scale {
            return Err(Error::ComplexSpectrum { re: z.re, im: z.im });
        }
        values.push(z.re);
    }
    values.sort_by(f64::total_cmp);

    // Group numerically equal eigenvalues.
    let cluster_tol = 1e-7 * scale;
    let mut groups: Vec<(f64, usize)> = Vec::new();
    for &lam in &values {
        match groups.last_mut() {
            Some((center, count)) if (lam - *center / *count as f64).abs() <= cluster_tol => {
                *center += lam;
                *count += 1;
            }
            _ => groups.push((lam, 1)),
        }
    }

    let mut out_values = Vec::with_capacity(k);
    let mut out_vectors = Vec::with_capacity(k);
    for (sum, mult) in groups {
        let lam = sum / mult as f64;
        let shifted = &na - DMatrix::identity(k, k) * lam;
        let svd = shifted.svd(false, true);
        let v_t = svd
            .v_t
            .ok_or_else(|| Error::Eigenvectors("SVD did not return V".into()))?;
        // Singular values are sorted descending; the last `mult` rows of Vᵀ
        // span the (approximate) null space.
        let mut idx: Vec<usize> = (0..k).collect();
        idx.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
        for &row in idx.iter().take(mult) {
            let mut vec: Vec<f64> = v_t.row(row).iter().copied().collect();
            normalize_with_sign(&mut vec);
            let residual = m
                .mat_vec(&vec)?
                .iter()
                .zip(&vec)
                .map(|(mv, x)| (mv - lam * x).powi(2))
                .sum::<f64>()
                .sqrt();
            if residual > 1e-8 * scale {
                return Err(Error::Eigenvectors(format!(
                    "eigenvalue {lam} has residual {residual:e}; matrix may be defective"
                )));
            }
            out_values.push(lam);
            out_vectors.push(vec);
        }
    }
    Ok(GeneralEigen {
        values: out_values,
        vectors: out_vectors,
    })
}

/// Eigenpairs of the quotient Laplacian `(PᵀP)⁻¹PᵀLP`, computed through the
/// similar symmetric matrix `S^{-1/2}PᵀLP S^{-1/2}` (S = PᵀP). The similarity
/// holds for any partition, equitable or not. Returned vectors are unit length
/// in cell coordinates.
pub fn quotient_eigen(g: &WeightedGraph, p: &VertexPartition) -> Result<GeneralEigen> {
    let q = p.cell_average_rows(&g.laplacian_times_indicator(p)?)?;
    let sizes: Vec<f64> = p.cell_sizes().iter().map(|&s| s as f64).collect();
    let k = p.k();
    let mut sym = DenseMatrix::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            // PᵀLP = S·Q, then scale by S^{-1/2} on both sides.
            sym[(a, b)] = sizes[a] * q[(a, b)] / (sizes[a] * sizes[b]).sqrt();
        }
    }
    let asym = sym.asymmetry().unwrap_or(0.0);
    if asym > 1e-9 * sym.max_abs().max(1.0) {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    for a in 0..k {
        for b in a + 1..k {
            let avg = 0.5 * (sym[(a, b)] + sym[(b, a)]);
            sym[(a, b)] = avg;
            sym[(b, a)] = avg;
        }
    }
    let eig = symmetric_eigen(&sym)?;
    let vectors = eig
        .vectors
        .into_iter()
        .map(|u| {
            let mut v: Vec<f64> = u.iter().zip(&sizes).map(|(x, s)| x / s.sqrt()).collect();
            normalize_with_sign(&mut v);
            v
        })
        .collect();
    Ok(GeneralEigen {
        values: eig.values,
        vectors,
    })
}

/// Laplacian eigenpairs together with the down-edge vectors `e⁽ʳ⁾ = Bᵀv⁽ʳ⁾`.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    eigenvalues: Vec<f64>,
    vertex_vectors: Vec<Vec<f64>>,
    /// m × n, column `r` is `e⁽ʳ⁾` in canonical edge order.
    edge_vectors: DenseMatrix,
}

impl SpectralBasis {
    pub fn new(g: &WeightedGraph) -> Result<Self> {
        let eig = symmetric_eigen(&g.laplacian())?;
        let n = g.n();
        let mut edge_vectors = DenseMatrix::zeros(g.m(), n);
        for (a, e) in g.edges().iter().enumerate() {
            let row = edge_vectors.row_mut(a);
            for (r, v) in eig.vectors.iter().enumerate() {
                row[r] = v[e.i] - v[e.j];
            }
        }
        Ok(Self {
            eigenvalues: eig.values,
            vertex_vectors: eig.vectors,
            edge_vectors,
        })
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvalue(&self, r: usize) -> f64 {
        self.eigenvalues[r]
    }

    pub fn vertex_vector(&self, r: usize) -> &[f64] {
        &self.vertex_vectors[r]
    }

    pub fn vertex_vectors(&self) -> &[Vec<f64>] {
        &self.vertex_vectors
    }

    /// Edge matrix with `e⁽ʳ⁾` as column `r` (m × n).
    pub fn edge_vectors(&self) -> &DenseMatrix {
        &self.edge_vectors
    }

    pub fn edge_vector(&self, r: usize) -> Vec<f64> {
        self.edge_vectors.column(r)
    }

    /// `α_r = v⁽ʳ⁾·θ`.
    pub fn decompose(&self, theta: &[f64]) -> Result<Vec<f64>> {
        if theta.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                actual: theta.len(),
            });
        }
        Ok(self.vertex_vectors.iter().map(|v| dot(v, theta)).collect())
    }

    /// `θ = Σ_r α_r v⁽ʳ⁾`.
    pub fn reconstruct(&self, alpha: &[f64]) -> Result<Vec<f64>> {
        if alpha.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                actual: alpha.len(),
            });
        }
        let mut theta = vec![0.0; self.n()];
        for (a, v) in alpha.iter().zip(&self.vertex_vectors) {
            for (t, x) in theta.iter_mut().zip(v) {
                *t += a * x;
            }
        }
        Ok(theta)
    }

    /// Projections `v⁽ʳ⁾·x` of any vertex signal, e.g. `ω⁽ʳ⁾`.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.decompose(x)
    }

    /// Index ranges of (numerically) repeated eigenvalues.
    pub fn degenerate_blocks(&self) -> Vec<std::ops::Range<usize>> {
        let mut blocks = Vec::new();
        let mut start = 0;
        for r in 1..=self.n() {
            if r == self.n() || self.eigenvalues[r] - self.eigenvalues[r - 1] >= DEGENERACY_GAP {
                blocks.push(start..r);
                start = r;
            }
        }
        blocks
    }

    /// Modes whose eigenvector is constant on every cell of `p` (largest
    /// deviation from the cell mean at most `tol`). Inside a degenerate block
    /// the test is on the eigenspace: the number of unit singular values of
    /// `V_blockᵀ·Q` (Q the orthonormalized indicator) decides how many of the
    /// block's indices are reported.
    pub fn structural_indices(&self, p: &VertexPartition, tol: f64) -> Result<Vec<usize>> {
        p.check_len(self.n())?;
        let sizes = p.cell_sizes();
        let mut out = Vec::new();
        for block in self.degenerate_blocks() {
            if block.len() == 1 {
                let r = block.start;
                if cell_deviation(p, &self.vertex_vectors[r])? <= tol {
                    out.push(r);
                }
                continue;
            }
            // Cross-Gram between the eigenspace and col(P).
            let g = block.len();
            let k = p.k();
            let mut cross = DMatrix::<f64>::zeros(g, k);
            for (row, r) in block.clone().enumerate() {
                for (v, &c) in p.assignment().iter().enumerate() {
                    cross[(row, c)] += self.vertex_vectors[r][v] / (sizes[c] as f64).sqrt();
                }
            }
            let dim = cross
                .singular_values()
                .iter()
                .filter(|&&s| 1.0 - s <= tol.max(1e-10))
                .count();
            out.extend(block.take(dim));
        }
        Ok(out)
    }

    /// Eigenvalues and row-major eigenvector matrix (row `r` = `v⁽ʳ⁾`).
    pub fn export(&self) -> BasisExport {
        BasisExport {
            n: self.n(),
            eigenvalues: self.eigenvalues.clone(),
            eigenvectors: self.vertex_vectors.iter().flatten().copied().collect(),
        }
    }
}

/// Largest |x_i − mean(x over cell(i))|.
pub fn cell_deviation(p: &VertexPartition, x: &[f64]) -> Result<f64> {
    let means = p.cell_means(x)?;
    Ok(x.iter()
        .zip(p.assignment())
        .map(|(xi, &c)| (xi - means[c]).abs())
        .fold(0.0, f64::max))
}

/// JSON form of a basis for external plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisExport {
    pub n: usize,
    pub eigenvalues: Vec<f64>,
    /// Row-major n × n; row `r` is the eigenvector for `eigenvalues[r]`.
    pub eigenvectors: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> WeightedGraph {
        WeightedGraph::new(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap()
    }

    fn k23() -> WeightedGraph {
        let edges = (0..2).flat_map(|a| (2..5).map(move |b| (a, b, 1.0)));
        WeightedGraph::new(5, edges).unwrap()
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn two_vertex_spectrum() {
        let g = WeightedGraph::new(2, [(0, 1, 2.0)]).unwrap();
        let b = SpectralBasis::new(&g).unwrap();
        assert_close(b.eigenvalues(), &[0.0, 4.0], 1e-12);
        let s = 1.0 / 2f64.sqrt();
        assert_close(b.vertex_vector(1), &[s, -s], 1e-12);
        assert_close(b.vertex_vector(0), &[s, s], 1e-12);
    }

    #[test]
    fn path_spectrum() {
        // Characteristic polynomial of the 3-vertex path: −λ(λ−1)(λ−3).
        let b = SpectralBasis::new(&path3()).unwrap();
        assert_close(b.eigenvalues(), &[0.0, 1.0, 3.0], 1e-12);
    }

    #[test]
    fn complete_bipartite_spectrum() {
        let b = SpectralBasis::new(&k23()).unwrap();
        assert_close(b.eigenvalues(), &[0.0, 2.0, 2.0, 3.0, 5.0], 1e-12);
    }

    #[test]
    fn five_cycle_matches_circulant_formula() {
        let g = WeightedGraph::new(5, (0..5).map(|i| (i, (i + 1) % 5, 1.0))).unwrap();
        let b = SpectralBasis::new(&g).unwrap();
        let mut expected: Vec<f64> = (0..5)
            .map(|k| 2.0 - 2.0 * (2.0 * std::f64::consts::PI * k as f64 / 5.0).cos())
            .collect();
        expected.sort_by(f64::total_cmp);
        assert_close(b.eigenvalues(), &expected, 1e-12);
        assert!((b.eigenvalue(1) - 1.381966).abs() < 1e-6);
    }

    #[test]
    fn rejects_non_symmetric() {
        let m = DenseMatrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]);
        assert!(matches!(symmetric_eigen(&m), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn general_eigen_examples() {
        let m = DenseMatrix::from_rows(&[[1.0, -1.0], [-2.0, 2.0]]);
        let e = eigendecompose_general(&m).unwrap();
        assert_close(&e.values, &[0.0, 3.0], 1e-10);
        let s = 1.0 / 2f64.sqrt();
        assert_close(&e.vectors[0], &[s, s], 1e-10);

        let m = DenseMatrix::from_rows(&[[3.0, -3.0], [-2.0, 2.0]]);
        let e = eigendecompose_general(&m).unwrap();
        assert_close(&e.values, &[0.0, 5.0], 1e-10);

        let e = eigendecompose_general(&DenseMatrix::identity(3)).unwrap();
        assert_close(&e.values, &[1.0, 1.0, 1.0], 1e-12);
        assert_eq!(e.vectors.len(), 3);
    }

    #[test]
    fn general_eigen_rejects_rotation() {
        let m = DenseMatrix::from_rows(&[[0.0, -1.0], [1.0, 0.0]]);
        assert!(matches!(eigendecompose_general(&m), Err(Error::ComplexSpectrum { .. })));
    }

    #[test]
    fn quotient_routes_agree() {
        let g = k23();
        let p = VertexPartition::new(vec![0, 0, 1, 1, 1]).unwrap();
        let q = p.quotient_matrix(&g.laplacian()).unwrap();
        let a = eigendecompose_general(&q).unwrap();
        let b = quotient_eigen(&g, &p).unwrap();
        assert_close(&a.values, &b.values, 1e-10);
        for (x, y) in a.vectors.iter().zip(&b.vectors) {
            assert_close(x, y, 1e-8);
        }
    }

    #[test]
    fn decompose_examples() {
        let g = WeightedGraph::new(4, [(0, 1, 1.0), (1, 2, 2.0), (2, 3, 0.5), (0, 3, 1.5)]).unwrap();
        let b = SpectralBasis::new(&g).unwrap();
        let alpha = b.decompose(&[0.7; 4]).unwrap();
        assert!((alpha[0] - 0.7 * 2.0).abs() < 1e-10);
        assert!(alpha[1..].iter().all(|a| a.abs() < 1e-10));

        let alpha = b.decompose(b.vertex_vector(1)).unwrap();
        assert_close(&alpha, &[0.0, 1.0, 0.0, 0.0], 1e-10);

        assert!(b.decompose(&[1.0; 3]).is_err());
    }

    #[test]
    fn structural_modes_of_path() {
        let b = SpectralBasis::new(&path3()).unwrap();
        let p = VertexPartition::from_cells(3, &[vec![0, 2], vec![1]]).unwrap();
        assert_eq!(b.structural_indices(&p, 1e-8).unwrap(), vec![0, 2]);
        assert_eq!(
            b.structural_indices(&VertexPartition::trivial(3), 1e-8).unwrap(),
            vec![0]
        );
        assert_eq!(
            b.structural_indices(&VertexPartition::discrete(3), 1e-8).unwrap(),
            vec![0, 1, 2]
        );
    }

    #[test]
    fn structural_modes_in_degenerate_block() {
        // K₂,₃ has a double eigenvalue 2 from differences inside the 3-side;
        // the bipartition's quotient eigenvalues are {0, 5}.
        let b = SpectralBasis::new(&k23()).unwrap();
        let p = VertexPartition::new(vec![0, 0, 1, 1, 1]).unwrap();
        assert_eq!(b.structural_indices(&p, 1e-8).unwrap(), vec![0, 4]);
        // Discrete partition: every eigenspace lies in col(P).
        assert_eq!(
            b.structural_indices(&VertexPartition::discrete(5), 1e-8).unwrap(),
            vec![0, 1, 2, 3, 4]
        );
    }

    #[test]
    fn export_is_row_major() {
        let b = SpectralBasis::new(&path3()).unwrap();
        let e = b.export();
        assert_eq!(e.eigenvectors.len(), 9);
        assert_eq!(&e.eigenvectors[3..6], b.vertex_vector(1));
    }
}
