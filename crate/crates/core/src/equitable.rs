//! Almost equitable partitions and their approximate counterparts.
//!
//! A partition is an AEP when `LP = PL^π`. The residual `E = PL^π − LP`
//! (the equitable error matrix) measures how far a partition is from that,
//! and bounds how well lifted quotient eigenvectors approximate true ones.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{VertexPartition, WeightedGraph};
use crate::matrix::{norm, DenseMatrix};
use crate::spectral::{quotient_eigen, symmetric_eigen, SpectralBasis};

/// Default tolerance for exact-AEP checks.
pub const AEP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AepReport {
    pub is_aep: bool,
    /// `‖LP − PL^π‖_max`.
    pub max_deviation: f64,
    /// `|E|` entrywise (n × k).
    pub per_vertex_deviations: DenseMatrix,
    /// Largest gap between a vertex's out-weight into another cell and the
    /// average of that out-weight over the vertex's own cell.
    pub combinatorial_deviation: f64,
}

/// `E = PL^π − LP` together with `L^π` (computed from the edge list).
pub fn error_matrix(g: &WeightedGraph, p: &VertexPartition) -> Result<(DenseMatrix, DenseMatrix)> {
    let lp = g.laplacian_times_indicator(p)?;
    let lq = p.cell_average_rows(&lp)?;
    let mut e = DenseMatrix::zeros(g.n(), p.k());
    for i in 0..g.n() {
        let ci = p.cell(i);
        for c in 0..p.k() {
            e[(i, c)] = lq[(ci, c)] - lp[(i, c)];
        }
    }
    Ok((e, lq))
}

pub fn check_aep(g: &WeightedGraph, p: &VertexPartition, tol: f64) -> Result<AepReport> {
    let (e, _) = error_matrix(g, p)?;
    let mut abs = e.clone();
    for i in 0..abs.rows() {
        for x in abs.row_mut(i) {
            *x = x.abs();
        }
    }
    let max_deviation = abs.max_abs();

    let out = g.cell_weight_sums(p)?;
    let avg = p.cell_average_rows(&out)?;
    let mut combinatorial = 0.0_f64;
    for i in 0..g.n() {
        let ci = p.cell(i);
        for c in (0..p.k()).filter(|&c| c != ci) {
            combinatorial = combinatorial.max((out[(i, c)] - avg[(ci, c)]).abs());
        }
    }
    if (max_deviation <= tol) != (combinatorial <= tol) {
        log::warn!(
            "algebraic ({max_deviation:e}) and combinatorial ({combinatorial:e}) AEP checks disagree at tol {tol:e}"
        );
    }
    Ok(AepReport {
        is_aep: max_deviation <= tol,
        max_deviation,
        per_vertex_deviations: abs,
        combinatorial_deviation: combinatorial,
    })
}

/// Bound chain for one quotient eigenpair, with `v` unit length.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeError {
    pub lambda: f64,
    pub vector: Vec<f64>,
    /// `‖Ev‖`.
    pub epsilon_norm: f64,
    /// `σ₁(E)·‖v‖`.
    pub bound_sigma: f64,
    /// `2k·‖v‖·max_i Σ_j |e_ij|`.
    pub bound_rowsum: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquitableErrorReport {
    pub e: DenseMatrix,
    pub quotient: DenseMatrix,
    pub sigma1: f64,
    pub per_mode: Vec<ModeError>,
}

impl EquitableErrorReport {
    pub fn bounds_hold(&self, slack: f64) -> bool {
        self.per_mode.iter().all(|m| {
            m.epsilon_norm <= m.bound_sigma * (1.0 + slack) + slack
                && m.bound_sigma <= m.bound_rowsum * (1.0 + slack) + slack
        })
    }
}

/// Largest singular value, from the top eigenvalue of the k × k `EᵀE`.
pub fn sigma1(e: &DenseMatrix) -> Result<f64> {
    if e.cols() == 0 {
        return Ok(0.0);
    }
    let ete = e.transpose().matmul(e)?;
    let eig = symmetric_eigen(&ete)?;
    Ok(eig.values.last().copied().unwrap_or(0.0).max(0.0).sqrt())
}

pub fn equitable_error(g: &WeightedGraph, p: &VertexPartition) -> Result<EquitableErrorReport> {
    let (e, quotient) = error_matrix(g, p)?;
    let s1 = sigma1(&e)?;
    let row_sum = e.max_abs_row_sum();
    let k = p.k() as f64;
    let eig = quotient_eigen(g, p)?;
    let per_mode = eig
        .values
        .into_iter()
        .zip(eig.vectors)
        .map(|(lambda, v)| {
            let vn = norm(&v);
            Ok(ModeError {
                lambda,
                epsilon_norm: norm(&e.mat_vec(&v)?),
                bound_sigma: s1 * vn,
                bound_rowsum: 2.0 * k * vn * row_sum,
                vector: v,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EquitableErrorReport {
        e,
        quotient,
        sigma1: s1,
        per_mode,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApproximationBoundReport {
    pub lambda: f64,
    pub gamma: f64,
    /// Retained modes: `|λ_i − λ| ≤ γ`.
    pub retained: Vec<usize>,
    /// `δ = ‖Ev‖`.
    pub delta: f64,
    pub actual_error: f64,
    /// `(δ/γ)·√(n − |A|)`.
    pub bound: f64,
}

/// How well `Pv` is captured by the eigenvectors of `L` whose eigenvalues lie
/// within `gamma` of `lambda`.
pub fn approximation_bound(
    g: &WeightedGraph,
    p: &VertexPartition,
    basis: &SpectralBasis,
    lambda: f64,
    v: &[f64],
    gamma: f64,
) -> Result<ApproximationBoundReport> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    if basis.n() != g.n() {
        return Err(Error::DimensionMismatch {
            expected: g.n(),
            actual: basis.n(),
        });
    }
    let (e, _) = error_matrix(g, p)?;
    let delta = norm(&e.mat_vec(v)?);
    let pv = p.lift(v)?;
    let beta = basis.decompose(&pv)?;
    let retained: Vec<usize> = (0..basis.n())
        .filter(|&i| (basis.eigenvalue(i) - lambda).abs() <= gamma)
        .collect();
    let mut kept = vec![0.0; basis.n()];
    for &i in &retained {
        kept[i] = beta[i];
    }
    let u = basis.reconstruct(&kept)?;
    let diff: Vec<f64> = pv.iter().zip(&u).map(|(a, b)| a - b).collect();
    let missing = (g.n() - retained.len()) as f64;
    Ok(ApproximationBoundReport {
        lambda,
        gamma,
        retained,
        delta,
        actual_error: norm(&diff),
        bound: delta / gamma * missing.sqrt(),
    })
}

/// `σ₁(E)` over the mean weighted degree; 0 for an exact AEP.
pub fn qep_score(g: &WeightedGraph, p: &VertexPartition) -> Result<f64> {
    let (e, _) = error_matrix(g, p)?;
    let mean_degree = g.degrees().iter().sum::<f64>() / g.n() as f64;
    if mean_degree == 0.0 {
        return Ok(0.0);
    }
    Ok(sigma1(&e)? / mean_degree)
}

/// `NP − PN^π` for a noise matrix `N` (n × n). When `L` admits `p` as an AEP,
/// the equitable error of `L + N` is the negation of this.
pub fn noise_placement(noise: &DenseMatrix, p: &VertexPartition) -> Result<DenseMatrix> {
    p.check_len(noise.rows())?;
    let np = noise.matmul(&p.indicator_matrix())?;
    let nq = p.cell_average_rows(&np)?;
    let mut out = np;
    for i in 0..out.rows() {
        let ci = p.cell(i);
        for c in 0..p.k() {
            out[(i, c)] -= nq[(ci, c)];
        }
    }
    Ok(out)
}
