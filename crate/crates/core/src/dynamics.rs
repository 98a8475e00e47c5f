//! Kuramoto and Kuramoto–Sakaguchi integration in the vertex basis and in
//! the Laplacian-eigenvector (coefficient) basis.
//!
//! Both integrators use fixed-step classic RK4 on the same time grid, so a
//! coefficient run reconstructed through `V` can be compared against a
//! vertex run sample by sample. Phases live in ℝ; nothing is wrapped unless
//! [`rezero`] is called.

use std::f64::consts::PI;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{VertexPartition, WeightedGraph};
use crate::matrix::DenseMatrix;
use crate::spectral::SpectralBasis;

pub const DEFAULT_DT: f64 = 0.01;

/// Graph, natural frequencies, coupling and per-edge phase lags.
///
/// `beta[a]` is the lag on canonical edge `a` oriented `i → j` (`i < j`);
/// the reverse orientation carries `-beta[a]`. The coupling `sigma` plays the
/// role of `K/N` in the usual normalization.
#[derive(Debug, Clone)]
pub struct OscillatorSystem {
    graph: WeightedGraph,
    omega: Vec<f64>,
    sigma: f64,
    beta: Vec<f64>,
}

impl OscillatorSystem {
    pub fn new(graph: WeightedGraph, omega: Vec<f64>, sigma: f64) -> Result<Self> {
        if omega.len() != graph.n() {
            return Err(Error::DimensionMismatch {
                expected: graph.n(),
                actual: omega.len(),
            });
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "coupling must be finite and non-negative, got {sigma}"
            )));
        }
        if let Some(w) = omega.iter().find(|w| !w.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite frequency {w}")));
        }
        let beta = vec![0.0; graph.m()];
        Ok(Self {
            graph,
            omega,
            sigma,
            beta,
        })
    }

    pub fn with_beta(mut self, beta: Vec<f64>) -> Result<Self> {
        if beta.len() != self.graph.m() {
            return Err(Error::DimensionMismatch {
                expected: self.graph.m(),
                actual: beta.len(),
            });
        }
        if let Some(b) = beta.iter().find(|b| !b.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite phase lag {b}")));
        }
        self.beta = beta;
        Ok(self)
    }

    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Self::new(self.graph.clone(), self.omega.clone(), sigma)?.with_beta(self.beta.clone())
    }

    pub fn graph(&self) -> &WeightedGraph {
        &self.graph
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn has_phase_lag(&self) -> bool {
        self.beta.iter().any(|&b| b != 0.0)
    }

    pub fn mean_omega(&self) -> f64 {
        self.omega.iter().sum::<f64>() / self.omega.len() as f64
    }

    /// `θ̇_i = ω_i − σ Σ_j A_ij sin(θ_i − θ_j + β_ij)`.
    pub fn vertex_velocity(&self, theta: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.omega);
        for (e, &b) in self.graph.edges().iter().zip(&self.beta) {
            let s = self.sigma * e.w * (theta[e.i] - theta[e.j] + b).sin();
            out[e.i] -= s;
            out[e.j] += s;
        }
    }
}

/// Phases on a uniform time grid: `states[s]` is the state at `t0 + s·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t0: f64,
    pub dt: f64,
    pub states: Vec<Vec<f64>>,
}

/// Spectral coefficients on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTrajectory {
    pub t0: f64,
    pub dt: f64,
    pub coeffs: Vec<Vec<f64>>,
}

macro_rules! grid_accessors {
    ($ty:ty, $field:ident) => {
        impl $ty {
            pub fn len(&self) -> usize {
                self.$field.len()
            }

            pub fn is_empty(&self) -> bool {
                self.$field.is_empty()
            }

            /// Number of steps taken; one less than the number of samples.
            pub fn steps(&self) -> usize {
                self.$field.len().saturating_sub(1)
            }

            pub fn time(&self, s: usize) -> f64 {
                self.t0 + s as f64 * self.dt
            }

            pub fn times(&self) -> Vec<f64> {
                (0..self.len()).map(|s| self.time(s)).collect()
            }

            pub fn dim(&self) -> usize {
                self.$field.first().map_or(0, Vec::len)
            }

            pub fn last(&self) -> &[f64] {
                self.$field.last().map(Vec::as_slice).unwrap_or(&[])
            }

            /// Time series of one component.
            pub fn series(&self, r: usize) -> Vec<f64> {
                self.$field.iter().map(|x| x[r]).collect()
            }
        }
    };
}

grid_accessors!(Trajectory, states);
grid_accessors!(CoefficientTrajectory, coeffs);

impl Trajectory {
    pub fn decompose(&self, basis: &SpectralBasis) -> Result<CoefficientTrajectory> {
        Ok(CoefficientTrajectory {
            t0: self.t0,
            dt: self.dt,
            coeffs: self
                .states
                .iter()
                .map(|th| basis.decompose(th))
                .collect::<Result<_>>()?,
        })
    }

    /// Largest absolute phase difference over all samples.
    pub fn max_abs_diff(&self, other: &Trajectory) -> Result<f64> {
        if self.len() != other.len() || self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.len() * self.dim(),
                actual: other.len() * other.dim(),
            });
        }
        Ok(self
            .states
            .iter()
            .zip(&other.states)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max))
    }
}

impl CoefficientTrajectory {
    pub fn reconstruct(&self, basis: &SpectralBasis) -> Result<Trajectory> {
        Ok(Trajectory {
            t0: self.t0,
            dt: self.dt,
            states: self
                .coeffs
                .iter()
                .map(|a| basis.reconstruct(a))
                .collect::<Result<_>>()?,
        })
    }
}

fn check_grid(dt: f64, len: usize, n: usize) -> Result<()> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    if len != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: len,
        });
    }
    Ok(())
}

/// Classic RK4 with every step recorded. Fails on the first non-finite state.
fn rk4(mut f: impl FnMut(&[f64], &mut [f64]), y0: &[f64], dt: f64, steps: usize) -> Result<Vec<Vec<f64>>> {
    let n = y0.len();
    let mut out = Vec::with_capacity(steps + 1);
    out.push(y0.to_vec());
    let mut y = y0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for step in 1..=steps {
        f(&y, &mut k1);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * dt * k1[i];
        }
        f(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * dt * k2[i];
        }
        f(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + dt * k3[i];
        }
        f(&tmp, &mut k4);
        for i in 0..n {
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if y.iter().any(|x| !x.is_finite()) {
            return Err(Error::BlowUp { step });
        }
        out.push(y.clone());
    }
    Ok(out)
}

pub fn integrate_vertex(sys: &OscillatorSystem, theta0: &[f64], dt: f64, steps: usize) -> Result<Trajectory> {
    check_grid(dt, theta0.len(), sys.graph.n())?;
    let states = rk4(|th, out| sys.vertex_velocity(th, out), theta0, dt, steps)?;
    Ok(Trajectory { t0: 0.0, dt, states })
}

/// Right-hand side of the coefficient equations for a fixed edge
/// orientation: `e` holds `e⁽ʳ⁾_a` (m × n) and `beta` the lags in that
/// orientation.
struct CoefficientField<'a> {
    omega_r: Vec<f64>,
    e: &'a DenseMatrix,
    weights: Vec<f64>,
    beta: &'a [f64],
    sigma: f64,
    edge_buf: Vec<f64>,
}

impl CoefficientField<'_> {
    fn eval(&mut self, alpha: &[f64], out: &mut [f64]) {
        let n = alpha.len();
        // Edge phase differences Σ_{s>0} e_a⁽ˢ⁾ α_s.
        for (a, buf) in self.edge_buf.iter_mut().enumerate() {
            let row = self.e.row(a);
            let mut phi = 0.0;
            for s in 1..n {
                phi += row[s] * alpha[s];
            }
            *buf = self.sigma * self.weights[a] * (phi + self.beta[a]).sin();
        }
        out.copy_from_slice(&self.omega_r);
        for (a, &c) in self.edge_buf.iter().enumerate() {
            let row = self.e.row(a);
            for r in 1..n {
                out[r] -= row[r] * c;
            }
        }
    }
}

fn integrate_coefficient_inner(
    sys: &OscillatorSystem,
    basis: &SpectralBasis,
    e: &DenseMatrix,
    beta: &[f64],
    alpha0: &[f64],
    dt: f64,
    steps: usize,
) -> Result<CoefficientTrajectory> {
    check_grid(dt, alpha0.len(), sys.graph.n())?;
    if basis.n() != sys.graph.n() {
        return Err(Error::DimensionMismatch {
            expected: sys.graph.n(),
            actual: basis.n(),
        });
    }
    let mut omega_r = basis.project(&sys.omega)?;
    // Mode 0 only drifts: α̇₀ = √n·ω̄.
    omega_r[0] = (sys.graph.n() as f64).sqrt() * sys.mean_omega();
    let mut field = CoefficientField {
        omega_r,
        e,
        weights: sys.graph.weights(),
        beta,
        sigma: sys.sigma,
        edge_buf: vec![0.0; sys.graph.m()],
    };
    let coeffs = rk4(|a, out| field.eval(a, out), alpha0, dt, steps)?;
    Ok(CoefficientTrajectory { t0: 0.0, dt, coeffs })
}

/// RK4 over `α̇_r = ω⁽ʳ⁾ − σ Σ_a W_aa e_a⁽ʳ⁾ sin(Σ_{s>0} e_a⁽ˢ⁾ α_s + β_a)`
/// for `r ≥ 1` and `α̇₀ = √n·ω̄`.
pub fn integrate_coefficient(
    sys: &OscillatorSystem,
    basis: &SpectralBasis,
    alpha0: &[f64],
    dt: f64,
    steps: usize,
) -> Result<CoefficientTrajectory> {
    integrate_coefficient_inner(sys, basis, basis.edge_vectors(), &sys.beta, alpha0, dt, steps)
}

/// As [`integrate_coefficient`], with the orientation of every edge where
/// `flip[a]` is set reversed: `e_a` and `β_a` both change sign.
pub fn integrate_coefficient_oriented(
    sys: &OscillatorSystem,
    basis: &SpectralBasis,
    flip: &[bool],
    alpha0: &[f64],
    dt: f64,
    steps: usize,
) -> Result<CoefficientTrajectory> {
    if flip.len() != sys.graph.m() {
        return Err(Error::DimensionMismatch {
            expected: sys.graph.m(),
            actual: flip.len(),
        });
    }
    let mut e = basis.edge_vectors().clone();
    let mut beta = sys.beta.clone();
    for (a, _) in flip.iter().enumerate().filter(|(_, &f)| f) {
        for x in e.row_mut(a) {
            *x = -*x;
        }
        beta[a] = -beta[a];
    }
    integrate_coefficient_inner(sys, basis, &e, &beta, alpha0, dt, steps)
}

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(x: f64) -> f64 {
    x - 2.0 * PI * ((x - PI) / (2.0 * PI)).ceil()
}

/// Circular mean of a set of phases, or `None` when the resultant vanishes.
pub fn circular_mean(phases: &[f64]) -> Option<f64> {
    let (s, c) = phases.iter().fold((0.0, 0.0), |(s, c), &x| (s + x.sin(), c + x.cos()));
    if s.hypot(c) <= 1e-12 * phases.len().max(1) as f64 {
        None
    } else {
        Some(s.atan2(c))
    }
}

/// Suffix of `traj` from sample `at`, shifted so that at that sample every
/// phase lies in `(−π, π]` around the circular mean (which becomes 0). Each
/// oscillator is shifted by a constant, so whole-turn offsets between
/// otherwise locked oscillators disappear while the dynamics are untouched.
pub fn rezero(traj: &Trajectory, at: usize) -> Result<Trajectory> {
    if at >= traj.len() {
        return Err(Error::InvalidParameter(format!(
            "rezero index {at} beyond trajectory of {} samples",
            traj.len()
        )));
    }
    let ref_state = &traj.states[at];
    let psi = circular_mean(ref_state).unwrap_or(0.0);
    let shift: Vec<f64> = ref_state.iter().map(|&x| x - wrap_angle(x - psi)).collect();
    let states = traj.states[at..]
        .iter()
        .map(|st| st.iter().zip(&shift).map(|(x, s)| x - s).collect())
        .collect();
    Ok(Trajectory {
        t0: traj.time(at),
        dt: traj.dt,
        states,
    })
}

/// Per cell, the largest pairwise circular distance between phases at sample `at`.
pub fn cluster_spread(traj: &Trajectory, p: &VertexPartition, at: usize) -> Result<Vec<f64>> {
    let state = traj
        .states
        .get(at)
        .ok_or_else(|| Error::InvalidParameter(format!("sample {at} beyond trajectory of {}", traj.len())))?;
    phase_spread(state, p)
}

pub fn phase_spread(state: &[f64], p: &VertexPartition) -> Result<Vec<f64>> {
    p.check_len(state.len())?;
    Ok(p.cells()
        .iter()
        .map(|cell| {
            let mut worst = 0.0_f64;
            for (x, &a) in cell.iter().enumerate() {
                for &b in &cell[x + 1..] {
                    worst = worst.max(wrap_angle(state[a] - state[b]).abs());
                }
            }
            worst
        })
        .collect())
}

/// Row-oriented export of a sampled series: `t,<prefix>_0,...`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeriesKind {
    Theta,
    Alpha,
}

impl SeriesKind {
    fn prefix(self) -> &'static str {
        match self {
            SeriesKind::Theta => "theta",
            SeriesKind::Alpha => "alpha",
        }
    }
}

/// 17 significant digits: enough to round-trip any f64.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_series_csv<W: Write>(w: W, kind: SeriesKind, t0: f64, dt: f64, rows: &[Vec<f64>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let dim = rows.first().map_or(0, Vec::len);
    let mut header = vec!["t".to_string()];
    header.extend((0..dim).map(|i| format!("{}_{i}", kind.prefix())));
    out.write_record(&header)?;
    for (s, row) in rows.iter().enumerate() {
        let mut rec = vec![format_f64(t0 + s as f64 * dt)];
        rec.extend(row.iter().map(|&x| format_f64(x)));
        out.write_record(&rec)?;
    }
    out.flush().map_err(|source| Error::Io {
        path: "<csv>".into(),
        source,
    })?;
    Ok(())
}

/// Reads a series written by [`write_series_csv`]; returns times and rows.
pub fn read_series_csv<R: Read>(r: R) -> Result<(SeriesKind, Vec<f64>, Vec<Vec<f64>>)> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    let kind = match headers.get(1) {
        Some(h) if h.starts_with("alpha_") => SeriesKind::Alpha,
        _ => SeriesKind::Theta,
    };
    let mut times = Vec::new();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let vals = rec
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidParameter(format!("bad number `{f}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let (t, rest) = vals
            .split_first()
            .ok_or_else(|| Error::InvalidParameter("empty CSV row".into()))?;
        times.push(*t);
        rows.push(rest.to_vec());
    }
    Ok((kind, times, rows))
}

impl Trajectory {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_series_csv(w, SeriesKind::Theta, self.t0, self.dt, &self.states)
    }
}

impl CoefficientTrajectory {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_series_csv(w, SeriesKind::Alpha, self.t0, self.dt, &self.coeffs)
    }
}
