//! Closed-form predictions for the coefficient dynamics and the tools used to
//! compare them with simulations.
//!
//! Linearizing the coefficient equations around the synchronous state gives
//! independent relaxations `α̇_r = ω⁽ʳ⁾ − σλ_r α_r`; keeping the next order in
//! one mode, with all others pinned at their limits, gives a Riccati equation
//! `α̇ = ω⁽ʳ⁾ − σλ_r α + σx_r α²` whose discriminant separates settling from
//! runaway (oscillating) behavior.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::dynamics::{CoefficientTrajectory, OscillatorSystem};
use crate::error::{Error, Result};
use crate::spectral::SpectralBasis;

/// Eigenvalues at or below this are treated as zero modes.
const ZERO_EIGENVALUE: f64 = 1e-10;
/// `|σx|` below this makes the quadratic term negligible.
const NEGLIGIBLE_QUADRATIC: f64 = 1e-14;
/// Max `|α̇_r|` (r ≥ 1) for a trajectory to count as settled.
pub const SETTLED_RATE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModePrediction {
    pub mode: usize,
    pub lambda: f64,
    /// `ω·v⁽ʳ⁾`.
    pub omega_r: f64,
    /// `Σ_a W_aa e_a⁽ʳ⁾ β_a`.
    pub lag_term: f64,
    /// `(ω⁽ʳ⁾ − σ·lag_term)/(σλ_r)`.
    pub alpha_inf: f64,
    /// `σλ_r`.
    pub decay_rate: f64,
}

impl ModePrediction {
    /// Linearized solution from `α_r(0) = alpha0`.
    pub fn at(&self, alpha0: f64, t: f64) -> f64 {
        let decay = (-self.decay_rate * t).exp();
        self.alpha_inf * (1.0 - decay) + alpha0 * decay
    }
}

/// Per-mode linear predictions for modes `1..n`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearPrediction {
    pub sigma: f64,
    pub modes: Vec<ModePrediction>,
}

impl LinearPrediction {
    pub fn mode(&self, r: usize) -> Result<&ModePrediction> {
        if r == 0 {
            return Err(Error::ZeroMode { mode: 0, lambda: 0.0 });
        }
        self.modes
            .get(r - 1)
            .ok_or_else(|| Error::InvalidParameter(format!("mode {r} out of range for {} modes", self.modes.len() + 1)))
    }

    pub fn alpha_inf(&self) -> Vec<f64> {
        std::iter::once(0.0)
            .chain(self.modes.iter().map(|m| m.alpha_inf))
            .collect()
    }
}

/// `α_r(t) = (ω⁽ʳ⁾/(σλ_r))(1 − e^{−σλ_r t}) + α_r(0)e^{−σλ_r t}`.
pub fn linear_solution(pred: &LinearPrediction, r: usize, alpha_r0: f64, t: f64) -> Result<f64> {
    Ok(pred.mode(r)?.at(alpha_r0, t))
}

fn check_mode(basis: &SpectralBasis, r: usize) -> Result<f64> {
    if r >= basis.n() {
        return Err(Error::InvalidParameter(format!(
            "mode {r} out of range for {} modes",
            basis.n()
        )));
    }
    let lambda = basis.eigenvalue(r);
    if r == 0 || lambda <= ZERO_EIGENVALUE {
        return Err(Error::ZeroMode { mode: r, lambda });
    }
    Ok(lambda)
}

fn check_basis(sys: &OscillatorSystem, basis: &SpectralBasis) -> Result<()> {
    if basis.n() != sys.graph().n() {
        return Err(Error::DimensionMismatch {
            expected: sys.graph().n(),
            actual: basis.n(),
        });
    }
    if sys.sigma() <= 0.0 {
        return Err(Error::InvalidParameter("predictions need a positive coupling".into()));
    }
    Ok(())
}

/// Limits `α_r^∞ = (ω⁽ʳ⁾ − σΣ_a W_aa e_a⁽ʳ⁾β_a)/(σλ_r)` of the linearized
/// equations, for every mode `r ≥ 1`.
pub fn asymptotic_coefficients(sys: &OscillatorSystem, basis: &SpectralBasis) -> Result<LinearPrediction> {
    check_basis(sys, basis)?;
    let omega_r = basis.project(sys.omega())?;
    let weighted_beta: Vec<f64> = sys
        .graph()
        .weights()
        .iter()
        .zip(sys.beta())
        .map(|(w, b)| w * b)
        .collect();
    let lag = basis.edge_vectors().transpose_mat_vec(&weighted_beta)?;
    let sigma = sys.sigma();
    let modes = (1..basis.n())
        .map(|r| {
            let lambda = check_mode(basis, r)?;
            Ok(ModePrediction {
                mode: r,
                lambda,
                omega_r: omega_r[r],
                lag_term: lag[r],
                alpha_inf: (omega_r[r] - sigma * lag[r]) / (sigma * lambda),
                decay_rate: sigma * lambda,
            })
        })
        .collect::<Result<_>>()?;
    Ok(LinearPrediction { sigma, modes })
}

/// `max_{r≥1} |α̇_r|` at a vertex state.
pub fn coefficient_rate(sys: &OscillatorSystem, basis: &SpectralBasis, theta: &[f64]) -> Result<f64> {
    let mut vel = vec![0.0; theta.len()];
    sys.vertex_velocity(theta, &mut vel);
    let rates = basis.project(&vel)?;
    Ok(rates[1..].iter().fold(0.0_f64, |m, x| m.max(x.abs())))
}

/// Terminal linearization error of one mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeError {
    pub mode: usize,
    pub alpha_final: f64,
    pub alpha_inf: f64,
    pub error: f64,
}

/// Compares terminal coefficients with the linear limits. The trajectory must
/// have settled: the finite-difference rate over its last step stays below
/// `SETTLED_RATE` for every mode `r ≥ 1`.
pub fn prediction_error_profile(sim: &CoefficientTrajectory, pred: &LinearPrediction) -> Result<Vec<ModeError>> {
    if sim.len() < 2 {
        return Err(Error::InvalidParameter(
            "need at least two samples to judge settling".into(),
        ));
    }
    if sim.dim() != pred.modes.len() + 1 {
        return Err(Error::DimensionMismatch {
            expected: pred.modes.len() + 1,
            actual: sim.dim(),
        });
    }
    let last = sim.last();
    let prev = &sim.coeffs[sim.len() - 2];
    let rate = last[1..]
        .iter()
        .zip(&prev[1..])
        .map(|(a, b)| ((a - b) / sim.dt).abs())
        .fold(0.0, f64::max);
    if rate > SETTLED_RATE {
        return Err(Error::NotSettled { rate });
    }
    Ok(pred
        .modes
        .iter()
        .map(|m| ModeError {
            mode: m.mode,
            alpha_final: last[m.mode],
            alpha_inf: m.alpha_inf,
            error: (last[m.mode] - m.alpha_inf).abs(),
        })
        .collect())
}

/// Second-order coupling of mode `r1` to the pinned limits of the others:
/// `x = Σ_{s≠0,r1} ω⁽ˢ⁾/(2σλ_s) Σ_a W_aa (e_a⁽ʳ¹⁾)³ e_a⁽ˢ⁾`.
pub fn x_coupling(sys: &OscillatorSystem, basis: &SpectralBasis, r1: usize) -> Result<f64> {
    check_basis(sys, basis)?;
    check_mode(basis, r1)?;
    let omega_r = basis.project(sys.omega())?;
    let e = basis.edge_vectors();
    let weights = sys.graph().weights();
    // c_a = W_aa (e_a⁽ʳ¹⁾)³, then contract against every other mode.
    let cubes: Vec<f64> = (0..e.rows()).map(|a| weights[a] * e[(a, r1)].powi(3)).collect();
    let sums = e.transpose_mat_vec(&cubes)?;
    let mut x = 0.0;
    for s in 1..basis.n() {
        if s == r1 || omega_r[s] == 0.0 {
            continue;
        }
        let lambda = check_mode(basis, s)?;
        x += omega_r[s] / (2.0 * sys.sigma() * lambda) * sums[s];
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeBehavior {
    FixedPoint,
    LimitCycleCandidate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscriminantEntry {
    pub mode: usize,
    pub lambda: f64,
    pub omega_r: f64,
    pub x: f64,
    /// `σ²λ² − 4σω⁽ʳ⁾x`.
    pub delta: f64,
    pub behavior: ModeBehavior,
    /// Coupling at which `delta` changes sign (0 when it is positive for all σ).
    pub critical_sigma: f64,
}

pub fn discriminant(sys: &OscillatorSystem, basis: &SpectralBasis, r1: usize) -> Result<DiscriminantEntry> {
    let lambda = check_mode(basis, r1)?;
    let x = x_coupling(sys, basis, r1)?;
    let omega_r = basis.project(sys.omega())?[r1];
    let sigma = sys.sigma();
    let delta = sigma * sigma * lambda * lambda - 4.0 * sigma * omega_r * x;
    // σx does not depend on σ, so Δ(σ) = σ²λ² − C with C fixed.
    let c = 4.0 * sigma * omega_r * x;
    Ok(DiscriminantEntry {
        mode: r1,
        lambda,
        omega_r,
        x,
        delta,
        behavior: if delta > 0.0 {
            ModeBehavior::FixedPoint
        } else {
            ModeBehavior::LimitCycleCandidate
        },
        critical_sigma: if c > 0.0 { c.sqrt() / lambda } else { 0.0 },
    })
}

/// Discriminants for every mode `r ≥ 1`.
pub fn discriminant_report(sys: &OscillatorSystem, basis: &SpectralBasis) -> Result<Vec<DiscriminantEntry>> {
    (1..basis.n()).map(|r| discriminant(sys, basis, r)).collect()
}

/// Which closed form produced a single-mode prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Linear,
    Stable,
    Tangent,
    Critical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleModeValue {
    pub value: f64,
    pub branch: Branch,
    /// False once the closed form has passed (or come within the margin of)
    /// its singularity.
    pub valid: bool,
}

/// Parameters of `α̇ = ω − bα + aα²` with `a = σx`, `b = σλ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Riccati {
    pub omega: f64,
    pub a: f64,
    pub b: f64,
}

impl Riccati {
    pub fn for_mode(sys: &OscillatorSystem, basis: &SpectralBasis, r1: usize) -> Result<Self> {
        let d = discriminant(sys, basis, r1)?;
        Ok(Self {
            omega: d.omega_r,
            a: sys.sigma() * d.x,
            b: sys.sigma() * d.lambda,
        })
    }

    pub fn discriminant(&self) -> f64 {
        self.b * self.b - 4.0 * self.a * self.omega
    }

    pub fn rate(&self, alpha: f64) -> f64 {
        self.omega - self.b * alpha + self.a * alpha * alpha
    }

    /// Stable fixed point when the discriminant is positive.
    pub fn stable_root(&self) -> Option<f64> {
        let d = self.discriminant();
        if d <= 0.0 {
            return None;
        }
        if self.a.abs() < NEGLIGIBLE_QUADRATIC {
            return Some(self.omega / self.b);
        }
        // (b − √Δ)/(2a), written to avoid cancellation.
        Some(2.0 * self.omega / (self.b + d.sqrt()))
    }

    /// Time at which the tangent form reaches `π/2 − margin` (Δ < 0 only).
    pub fn tangent_window(&self, alpha0: f64, margin: f64) -> Option<f64> {
        let d = self.discriminant();
        if d >= 0.0 || self.a.abs() < NEGLIGIBLE_QUADRATIC {
            return None;
        }
        let s = (-d).sqrt();
        let phi0 = ((2.0 * self.a * alpha0 - self.b) / s).atan();
        Some((2.0 * (FRAC_PI_2 - margin - phi0) / s).max(0.0))
    }

    /// Closed-form `α(t)` from `α(0) = alpha0`. `margin` (radians) is how far
    /// the tangent argument must stay below `π/2` for the value to be valid.
    pub fn solve(&self, alpha0: f64, t: f64, margin: f64) -> SingleModeValue {
        let d = self.discriminant();
        if self.a.abs() < NEGLIGIBLE_QUADRATIC {
            let inf = self.omega / self.b;
            let decay = (-self.b * t).exp();
            return SingleModeValue {
                value: inf + (alpha0 - inf) * decay,
                branch: Branch::Linear,
                valid: true,
            };
        }
        let u0 = 2.0 * self.a * alpha0 - self.b;
        if d > 0.0 {
            let s = d.sqrt();
            let plus = (self.b + s) / (2.0 * self.a);
            let minus = self.stable_root().unwrap_or((self.b - s) / (2.0 * self.a));
            if alpha0 == plus {
                return SingleModeValue {
                    value: plus,
                    branch: Branch::Stable,
                    valid: true,
                };
            }
            // (α − α₊)/(α − α₋) = P e^{√Δ t} with P fixed by α(0); rewritten
            // in terms of q = 1/P so that it decays instead of overflowing.
            let q = (alpha0 - minus) / (alpha0 - plus);
            let decay = (-s * t).exp();
            let denom = q * decay - 1.0;
            let value = minus + (plus - minus) * q * decay / denom;
            // A sign change of the denominator means α passed through ±∞.
            let valid = value.is_finite() && (denom < 0.0) == (q - 1.0 < 0.0);
            return SingleModeValue {
                value,
                branch: Branch::Stable,
                valid,
            };
        }
        if d == 0.0 {
            // u̇ = u²/2.
            let denom = 1.0 - u0 * t / 2.0;
            return SingleModeValue {
                value: (u0 / denom + self.b) / (2.0 * self.a),
                branch: Branch::Critical,
                valid: denom > 0.0,
            };
        }
        // u = 2aα − b obeys u̇ = (u² − Δ)/2, so u = √−Δ·tan(φ₀ + √−Δ·t/2).
        let s = (-d).sqrt();
        let arg = (u0 / s).atan() + s * t / 2.0;
        SingleModeValue {
            value: (s * arg.tan() + self.b) / (2.0 * self.a),
            branch: Branch::Tangent,
            valid: arg < FRAC_PI_2 - margin,
        }
    }
}

/// Single-unstable-mode prediction for `α_{r1}(t)`, other modes pinned at
/// their linear limits.
pub fn single_mode_solution(
    sys: &OscillatorSystem,
    basis: &SpectralBasis,
    r1: usize,
    alpha_r1_0: f64,
    t: f64,
    margin: f64,
) -> Result<SingleModeValue> {
    if !(0.0..FRAC_PI_2).contains(&margin) {
        return Err(Error::InvalidParameter(format!(
            "tangent margin must lie in [0, π/2), got {margin}"
        )));
    }
    Ok(Riccati::for_mode(sys, basis, r1)?.solve(alpha_r1_0, t, margin))
}

/// A maximal time interval with a constant set of active modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub t_start: f64,
    pub t_end: f64,
    pub active: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSegmentation {
    pub threshold: f64,
    pub regimes: Vec<Regime>,
}

impl RegimeSegmentation {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t_start", "t_end", "active_modes"])?;
        for r in &self.regimes {
            let modes = r.active.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
            out.write_record([
                crate::dynamics::format_f64(r.t_start),
                crate::dynamics::format_f64(r.t_end),
                modes,
            ])?;
        }
        out.flush().map_err(|source| Error::Io {
            path: "<csv>".into(),
            source,
        })?;
        Ok(())
    }
}

/// `frac` times the largest `|α_r|` (r ≥ 1) in the given sample.
pub fn activity_threshold(alpha: &[f64], frac: f64) -> f64 {
    frac * alpha.iter().skip(1).fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Splits a trajectory into regimes by which modes `r ≥ 1` exceed
/// `threshold` in magnitude. Runs shorter than `min_dwell` are absorbed into
/// the preceding regime (the following one, for a short leading run), and
/// neighbours with equal active sets are merged.
pub fn segment_regimes(sim: &CoefficientTrajectory, threshold: f64, min_dwell: f64) -> Result<RegimeSegmentation> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "activity threshold must be positive, got {threshold}"
        )));
    }
    if sim.is_empty() {
        return Ok(RegimeSegmentation {
            threshold,
            regimes: vec![],
        });
    }
    // Raw runs as (first sample, active set).
    let mut runs: Vec<(usize, Vec<usize>)> = Vec::new();
    for (s, alpha) in sim.coeffs.iter().enumerate() {
        let active: Vec<usize> = (1..alpha.len()).filter(|&r| alpha[r].abs() > threshold).collect();
        if runs.last().map(|(_, a)| a != &active).unwrap_or(true) {
            runs.push((s, active));
        }
    }
    let t_end = sim.time(sim.len() - 1);
    let mut regimes: Vec<Regime> = runs
        .iter()
        .enumerate()
        .map(|(i, (s, active))| Regime {
            t_start: sim.time(*s),
            t_end: runs.get(i + 1).map_or(t_end, |(next, _)| sim.time(*next)),
            active: active.clone(),
        })
        .collect();

    loop {
        let short = regimes
            .iter()
            .position(|r| r.t_end - r.t_start < min_dwell && regimes.len() > 1);
        let Some(i) = short else { break };
        if i == 0 {
            let r = regimes.remove(0);
            regimes[0].t_start = r.t_start;
        } else {
            let r = regimes.remove(i);
            regimes[i - 1].t_end = r.t_end;
        }
        merge_equal_neighbours(&mut regimes);
    }
    merge_equal_neighbours(&mut regimes);
    Ok(RegimeSegmentation { threshold, regimes })
}

fn merge_equal_neighbours(regimes: &mut Vec<Regime>) {
    let mut merged: Vec<Regime> = Vec::with_capacity(regimes.len());
    for r in regimes.drain(..) {
        match merged.last_mut() {
            Some(prev) if prev.active == r.active => prev.t_end = r.t_end,
            _ => merged.push(r),
        }
    }
    *regimes = merged;
}

/// Least-squares decay rate of `|α_r(t)|`: minus the slope of `ln|α_r|`
/// against time over the samples before `|α_r|` first drops below
/// `floor_frac·|α_r(0)|`. Needs at least three samples.
pub fn fit_decay_rate(sim: &CoefficientTrajectory, r: usize, floor_frac: f64) -> Result<f64> {
    let series = sim.series(r);
    let start = series.first().copied().unwrap_or(0.0).abs();
    if start == 0.0 {
        return Err(Error::InvalidParameter(format!("mode {r} starts at zero")));
    }
    let floor = floor_frac * start;
    let pts: Vec<(f64, f64)> = series
        .iter()
        .enumerate()
        .take_while(|(_, a)| a.abs() > floor)
        .map(|(s, a)| (sim.time(s), a.abs().ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "mode {r} decays below the floor within {} samples",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let (mt, my) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t / n, b + y / n));
    let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |(sxy, sxx), (t, y)| {
        (sxy + (t - mt) * (y - my), sxx + (t - mt) * (t - mt))
    });
    Ok(-sxy / sxx)
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson correlation of average ranks). `None`
/// when either input is constant or the lengths differ.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mean) * (b - mean);
        sxx += (a - mean) * (a - mean);
        syy += (b - mean) * (b - mean);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::WeightedGraph;

    fn single_edge() -> (OscillatorSystem, SpectralBasis) {
        let g = WeightedGraph::new(2, [(0, 1, 1.0)]).unwrap();
        let b = SpectralBasis::new(&g).unwrap();
        (OscillatorSystem::new(g, vec![0.3, -0.3], 1.0).unwrap(), b)
    }

    #[test]
    fn linear_solution_examples() {
        let m = ModePrediction {
            mode: 1,
            lambda: 2.0,
            omega_r: 0.0,
            lag_term: 0.0,
            alpha_inf: 0.0,
            decay_rate: 2.0,
        };
        assert!((m.at(1.0, 1.0) - (-2.0f64).exp()).abs() < 1e-15);
        let m = ModePrediction {
            omega_r: 0.6,
            alpha_inf: 0.3,
            ..m
        };
        assert_eq!(m.at(0.7, 0.0), 0.7);
        assert!((m.at(0.7, 100.0) - 0.3).abs() < 1e-15);
        let pred = LinearPrediction {
            sigma: 1.0,
            modes: vec![m],
        };
        assert!(linear_solution(&pred, 0, 0.0, 1.0).is_err());
    }

    #[test]
    fn uniform_frequencies_have_zero_limits() {
        let g = WeightedGraph::new(3, [(0, 1, 1.0), (1, 2, 2.0)]).unwrap();
        let b = SpectralBasis::new(&g).unwrap();
        let sys = OscillatorSystem::new(g, vec![0.4; 3], 1.5).unwrap();
        let pred = asymptotic_coefficients(&sys, &b).unwrap();
        assert!(pred.modes.iter().all(|m| m.alpha_inf.abs() < 1e-12));
        let doubled = asymptotic_coefficients(&sys.with_sigma(3.0).unwrap(), &b).unwrap();
        assert!((doubled.modes[0].decay_rate - 2.0 * pred.modes[0].decay_rate).abs() < 1e-12);
    }

    #[test]
    fn single_edge_has_no_cubic_coupling() {
        let (sys, b) = single_edge();
        assert_eq!(x_coupling(&sys, &b, 1).unwrap(), 0.0);
        let d = discriminant(&sys, &b, 1).unwrap();
        assert!((d.delta - 4.0).abs() < 1e-12);
        assert_eq!(d.behavior, ModeBehavior::FixedPoint);
        assert!(discriminant(&sys, &b, 0).is_err());
    }

    #[test]
    fn riccati_stable_branch_converges_to_root() {
        let r = Riccati {
            omega: 0.3,
            a: 0.2,
            b: 1.0,
        };
        let root = r.stable_root().unwrap();
        assert!(r.rate(root).abs() < 1e-14);
        let v = r.solve(0.0, 60.0, 0.1);
        assert!(v.valid && (v.value - root).abs() < 1e-12);
        assert_eq!(r.solve(0.25, 0.0, 0.1).value, 0.25_f64);
        // Starting at the root stays there.
        assert!((r.solve(root, 3.0, 0.1).value - root).abs() < 1e-15);
    }

    #[test]
    fn riccati_branches_solve_the_ode() {
        // Compare every branch against a fine RK4 integration.
        let cases = [
            (
                Riccati {
                    omega: 0.3,
                    a: 0.2,
                    b: 1.0,
                },
                0.5,
                4.0,
            ),
            (
                Riccati {
                    omega: 1.0,
                    a: 0.5,
                    b: 1.0,
                },
                -0.2,
                2.0,
            ),
            (
                Riccati {
                    omega: 0.5,
                    a: 0.5,
                    b: 1.0,
                },
                -0.5,
                1.0,
            ),
            (
                Riccati {
                    omega: 0.5,
                    a: 0.0,
                    b: 2.0,
                },
                1.0,
                3.0,
            ),
        ];
        for (ric, a0, t_end) in cases {
            let steps = 20_000;
            let h = t_end / steps as f64;
            let mut y: f64 = a0;
            for _ in 0..steps {
                let k1 = ric.rate(y);
                let k2 = ric.rate(y + 0.5 * h * k1);
                let k3 = ric.rate(y + 0.5 * h * k2);
                let k4 = ric.rate(y + h * k3);
                y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
            let v = ric.solve(a0, t_end, 0.0);
            assert!(v.valid, "{ric:?}");
            assert!(
                (v.value - y).abs() < 1e-9 * y.abs().max(1.0),
                "{ric:?}: {} vs {y}",
                v.value
            );
        }
    }

    #[test]
    fn tangent_branch_flags_singularity() {
        let r = Riccati {
            omega: 1.0,
            a: 0.5,
            b: 1.0,
        };
        let tw = r.tangent_window(0.0, 0.3).unwrap();
        assert!(r.solve(0.0, 0.99 * tw, 0.3).valid);
        assert!(!r.solve(0.0, 1.01 * tw, 0.3).valid);
    }

    #[test]
    fn segmentation_basics() {
        let sim = CoefficientTrajectory {
            t0: 0.0,
            dt: 1.0,
            coeffs: vec![vec![0.0; 3]; 10],
        };
        let seg = segment_regimes(&sim, 0.1, 5.0).unwrap();
        assert_eq!(seg.regimes.len(), 1);
        assert!(seg.regimes[0].active.is_empty());
        assert!(segment_regimes(&sim, 0.0, 5.0).is_err());

        // Mode 2 dies at t=3, a blip of mode 1 at t=5, mode 1 dies at t=12.
        let coeffs = (0..20)
            .map(|s| {
                let m1 = if s < 12 || s == 15 { 1.0 } else { 0.0 };
                let m2 = if s < 3 { 1.0 } else { 0.0 };
                vec![5.0, m1, m2]
            })
            .collect();
        let sim = CoefficientTrajectory {
            t0: 0.0,
            dt: 1.0,
            coeffs,
        };
        let seg = segment_regimes(&sim, 0.5, 2.0).unwrap();
        let actives: Vec<_> = seg.regimes.iter().map(|r| r.active.clone()).collect();
        assert_eq!(actives, vec![vec![1, 2], vec![1], vec![]]);
        assert_eq!(seg.regimes[2].t_start, 12.0);
        assert_eq!(seg.regimes[2].t_end, 19.0);
    }

    #[test]
    fn decay_fit_recovers_rate() {
        let coeffs = (0..200).map(|s| vec![0.0, (-0.7 * s as f64 * 0.05).exp()]).collect();
        let sim = CoefficientTrajectory {
            t0: 0.0,
            dt: 0.05,
            coeffs,
        };
        assert!((fit_decay_rate(&sim, 1, 0.05).unwrap() - 0.7).abs() < 1e-10);
    }

    #[test]
    fn spearman_handles_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_none());
    }
}
