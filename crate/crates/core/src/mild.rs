//! Fractional heat semigroup, Duhamel quadrature and the Picard solver for
//! the mild formulation `b(t) = G(t) b0 + ∫₀ᵗ G(t − s) N(b(s)) ds`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{self, SimParams, Simulation, Trajectory};
use crate::fields::{self, NormRequest};
use crate::regimes::{self, RegimeReport};
use crate::spectral::{self, Grid, SpectralVectorField};

/// Default number of Picard sample times.
pub const DEFAULT_POINTS: usize = 64;
/// Ratio `T / t_1` of the default geometric grid.
pub const GEOMETRIC_SPAN: f64 = 1024.0;
pub const DEFAULT_TOL_REL: f64 = 1e-8;
pub const DEFAULT_MAX_ITERS: usize = 50;
/// Consecutive non-contracting iterations tolerated before giving up.
const NON_CONTRACTIVE_RUN: usize = 3;

/// `G_β(t)`: the multiplier `e^{−t|k|^{2β}}` on a fixed grid.
#[derive(Clone, Debug)]
pub struct SemigroupOp {
    beta: f64,
    grid: Grid,
    /// `|k|^{2β}` per mode.
    lambda: Vec<f64>,
}

impl SemigroupOp {
    pub fn new(beta: f64, grid: &Grid) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidExponent(format!("beta must be > 0, got {beta}")));
        }
        let lambda = (0..grid.len()).map(|i| grid.k_norm2(i).powf(beta)).collect();
        Ok(Self {
            beta,
            grid: grid.clone(),
            lambda,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `|k|^{2β}` per mode.
    pub fn rates(&self) -> &[f64] {
        &self.lambda
    }

    fn check(&self, f: &SpectralVectorField) -> Result<()> {
        if f.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }
}

/// `G_β(t) f`.
pub fn semigroup_apply(op: &SemigroupOp, t: f64, f: &SpectralVectorField) -> Result<SpectralVectorField> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::NegativeTime(t));
    }
    op.check(f)?;
    let mut out = f.clone();
    if t > 0.0 {
        out.apply_multiplier(|i| (-t * op.lambda[i]).exp());
    }
    Ok(out)
}

/// `‖Λ^γ G(t) f‖_{L^q} · t^{γ/2β + (d/2β)(1/p − 1/q)} / ‖f‖_{L^p}`.
pub fn smoothing_ratio(
    op: &SemigroupOp,
    t: f64,
    f: &SpectralVectorField,
    gamma: f64,
    p: f64,
    q: f64,
) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::NegativeTime(t));
    }
    if !(gamma >= 0.0) {
        return Err(Error::InvalidExponent(format!("gamma must be >= 0, got {gamma}")));
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidExponent(format!("p must be >= 1, got {p}")));
    }
    if q < p {
        return Err(Error::ExponentOrder { p, q });
    }
    op.check(f)?;
    if !f.is_zero_mean() {
        return Err(Error::NonzeroMean);
    }
    let mut g = f.clone();
    g.apply_multiplier(|i| {
        let k2 = op.grid.k_norm2(i);
        if k2 == 0.0 {
            0.0
        } else {
            k2.powf(0.5 * gamma) * (-t * op.lambda[i]).exp()
        }
    });
    let d = op.grid.d() as f64;
    let inv = |x: f64| if x.is_infinite() { 0.0 } else { 1.0 / x };
    let power = gamma / (2.0 * op.beta) + d / (2.0 * op.beta) * (inv(p) - inv(q));
    let top = fields::norm(&g, NormRequest::Lp(q))?;
    let bottom = fields::norm(f, NormRequest::Lp(p))?;
    Ok(top * t.powf(power) / bottom)
}

/// Per-mode weights for one interval of length `dt` with rate `lambda`:
/// `(e^{−λΔ}, w_left, w_right)` such that
/// `∫₀^Δ e^{−λ(Δ−τ)} F(τ) dτ = w_left F(0) + w_right F(Δ)` for linear `F`.
pub fn duhamel_weights(lambda: f64, dt: f64) -> (f64, f64, f64) {
    if lambda == 0.0 {
        return (1.0, 0.5 * dt, 0.5 * dt);
    }
    let z = lambda * dt;
    let phi1 = -(-z).exp_m1() / lambda;
    let left = if z < 0.5 {
        // Σ_{m≥2} (−1)^m (m−1)/m! z^{m−2}
        let mut sum = 0.0;
        let mut fact = 2.0;
        let mut zp = 1.0;
        for m in 2..30 {
            let term = (m as f64 - 1.0) / fact * zp;
            sum += if m % 2 == 0 { term } else { -term };
            fact *= (m + 1) as f64;
            zp *= z;
        }
        sum * dt
    } else {
        (1.0 - (-z).exp() * (1.0 + z)) / (lambda * z)
    };
    ((-z).exp(), left, phi1 - left)
}

fn check_samples(op: &SemigroupOp, t_grid: &[f64], forcing: &[SpectralVectorField]) -> Result<()> {
    if t_grid.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    if forcing.len() != t_grid.len() {
        return Err(Error::DimensionMismatch {
            expected: t_grid.len(),
            found: forcing.len(),
        });
    }
    if t_grid[0] < 0.0 {
        return Err(Error::NegativeTime(t_grid[0]));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Configuration("time grid must be strictly increasing".into()));
    }
    forcing.iter().try_for_each(|f| op.check(f))
}

/// `∫₀^{t_m} G(t_m − s) F(s) ds` at every grid time.
///
/// `F` is interpolated linearly between samples; when `t_grid[0] > 0` it is
/// held at its first sample on `[0, t_grid[0]]`.
pub fn duhamel_cumulative(
    op: &SemigroupOp,
    t_grid: &[f64],
    forcing: &[SpectralVectorField],
) -> Result<Vec<SpectralVectorField>> {
    check_samples(op, t_grid, forcing)?;
    let mut acc = forcing[0].clone();
    let t0 = t_grid[0];
    if t0 > 0.0 {
        acc.apply_multiplier(|i| duhamel_weights(op.lambda[i], t0).1 + duhamel_weights(op.lambda[i], t0).2);
    } else {
        acc.scale(0.0);
    }
    let mut out = Vec::with_capacity(t_grid.len());
    out.push(acc.clone());
    let len = op.grid.len();
    for m in 1..t_grid.len() {
        let h = t_grid[m] - t_grid[m - 1];
        let mut decay = Vec::with_capacity(len);
        let mut left = Vec::with_capacity(len);
        let mut right = Vec::with_capacity(len);
        for &l in &op.lambda {
            let (e, wl, wr) = duhamel_weights(l, h);
            decay.push(e);
            left.push(wl);
            right.push(wr);
        }
        let (fa, fb) = (&forcing[m - 1], &forcing[m]);
        for j in 0..op.grid.d() {
            let dst = acc.components_mut()[j].coeffs_mut();
            let (a, b) = (fa.component(j).coeffs(), fb.component(j).coeffs());
            for i in 0..len {
                dst[i] = dst[i] * decay[i] + a[i] * left[i] + b[i] * right[i];
            }
        }
        out.push(acc.clone());
    }
    Ok(out)
}

/// `∫₀ᵗ G(t − s) F(s) ds` at the last grid time.
pub fn duhamel_integral(
    op: &SemigroupOp,
    t_grid: &[f64],
    forcing: &[SpectralVectorField],
) -> Result<SpectralVectorField> {
    Ok(duhamel_cumulative(op, t_grid, forcing)?.pop().expect("non-empty grid"))
}

/// Geometric times `T ρ^{j−points}`, `j = 1..=points`, with `ρ^{points−1} = span`.
pub fn geometric_grid(t_end: f64, points: usize, span: f64) -> Result<Vec<f64>> {
    if !(t_end > 0.0) || points == 0 || !(span >= 1.0) {
        return Err(Error::Configuration(format!(
            "geometric grid needs T > 0, points >= 1, span >= 1 (got {t_end}, {points}, {span})"
        )));
    }
    if points == 1 {
        return Ok(vec![t_end]);
    }
    let last = (points - 1) as f64;
    Ok((1..=points)
        .map(|j| {
            if j == points {
                t_end
            } else {
                t_end * span.powf((j as f64 - points as f64) / last)
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PicardConfig {
    /// Strictly increasing sample times in `(0, T]`.
    pub t_grid: Vec<f64>,
    pub max_iters: usize,
    pub tol_rel: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub sigma: f64,
}

impl PicardConfig {
    /// Exponents from `report` on the default 64-point geometric grid.
    pub fn from_report(report: &RegimeReport, t_end: f64) -> Result<Self> {
        let e = report
            .exponents
            .as_ref()
            .ok_or_else(|| Error::Configuration("regime has no mild-solution exponents".into()))?;
        Ok(Self {
            t_grid: geometric_grid(t_end, DEFAULT_POINTS, GEOMETRIC_SPAN)?,
            max_iters: DEFAULT_MAX_ITERS,
            tol_rel: DEFAULT_TOL_REL,
            p: e.p,
            q: e.q,
            r: e.r,
            sigma: e.sigma,
        })
    }

    /// Classifies `params` and builds the default configuration up to `t_end`.
    pub fn for_params(params: &SimParams) -> Result<Self> {
        let report = regimes::classify_f64(params.d, params.alpha, params.beta, params.s, params.eta, None);
        Self::from_report(&report, params.t_end)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_grid.is_empty() || !(self.t_grid[0] > 0.0) {
            return Err(Error::Configuration("Picard times must be positive".into()));
        }
        if self.t_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Configuration("Picard times must be strictly increasing".into()));
        }
        if self.max_iters == 0 || !(self.tol_rel > 0.0) {
            return Err(Error::Configuration("need max_iters >= 1 and tol_rel > 0".into()));
        }
        if !(self.q >= 1.0 && self.sigma >= 0.0) {
            return Err(Error::InvalidExponent(format!("q = {}, sigma = {}", self.q, self.sigma)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PicardResult {
    pub iterations: usize,
    /// `‖b^{m+1} − b^m‖_{F_T}` per iteration.
    pub distances: Vec<f64>,
    /// Successive distance ratios.
    pub ratios: Vec<f64>,
    pub times: Vec<f64>,
    pub trajectory: Vec<SpectralVectorField>,
    /// Largest observed ratio of successive distances.
    pub contraction_ratio: f64,
    pub converged: bool,
}

/// Discrete `sup t^σ ‖b(t)‖_{L^q}` over samples.
pub fn ft_norm_samples(times: &[f64], fields: &[SpectralVectorField], sigma: f64, q: f64) -> Result<f64> {
    if fields.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let mut sup = 0.0f64;
    for (&t, f) in times.iter().zip(fields) {
        if t < 0.0 {
            return Err(Error::NegativeTime(t));
        }
        let w = t.powf(sigma);
        if w > 0.0 {
            sup = sup.max(w * fields::norm(f, NormRequest::Lp(q))?);
        }
    }
    Ok(sup)
}

/// [`ft_norm_samples`] over the stored fields of a trajectory.
pub fn ft_norm(traj: &Trajectory, sigma: f64, q: f64) -> Result<f64> {
    ft_norm_samples(&traj.times, &traj.fields, sigma, q)
}

/// `sup_t ‖b(t)‖_{L^p}` over the stored fields.
pub fn nt_norm(traj: &Trajectory, p: f64) -> Result<f64> {
    if traj.fields.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    traj.fields
        .iter()
        .try_fold(0.0f64, |m, f| Ok(m.max(fields::norm(f, NormRequest::Lp(p))?)))
}

fn check_picard_inputs(b0: &SpectralVectorField, cfg: &PicardConfig, params: &SimParams) -> Result<()> {
    cfg.validate()?;
    params.validate()?;
    if params.eta != 1.0 {
        return Err(Error::Configuration(format!("Picard solver needs eta = 1, got {}", params.eta)));
    }
    let report = regimes::classify_f64(params.d, params.alpha, params.beta, params.s, params.eta, None);
    if !report.mild_admissible {
        return Err(Error::Configuration(format!(
            "parameters outside the mild-solution regime: {}",
            report.mild_reasons.join("; ")
        )));
    }
    if b0.grid() != &params.grid()? {
        return Err(Error::GridMismatch);
    }
    let ratio = b0.divergence_ratio();
    if ratio > spectral::DIVERGENCE_TOL {
        return Err(Error::NonDivergenceFreeInput(ratio));
    }
    if !b0.is_zero_mean() {
        return Err(Error::NonzeroMean);
    }
    Ok(())
}

/// Picard iteration `b^{m+1} = G(t) b0 + ∫ G(t − s) N(b^m(s)) ds` on `cfg.t_grid`,
/// starting from the free evolution `b^0(t) = G(t) b0`.
pub fn picard_solve(b0: &SpectralVectorField, cfg: &PicardConfig, params: &SimParams) -> Result<PicardResult> {
    check_picard_inputs(b0, cfg, params)?;
    let b0 = spectral::dealias_vec(b0);
    let op = SemigroupOp::new(params.beta, b0.grid())?;
    // t = 0 is prepended so the forcing there is N(b0) exactly
    let mut times = Vec::with_capacity(cfg.t_grid.len() + 1);
    times.push(0.0);
    times.extend_from_slice(&cfg.t_grid);
    let free: Vec<SpectralVectorField> = times
        .iter()
        .map(|&t| semigroup_apply(&op, t, &b0))
        .collect::<Result<_>>()?;

    let ft = |fields: &[SpectralVectorField]| ft_norm_samples(&times, fields, cfg.sigma, cfg.q);
    let mut current = free.clone();
    let mut distances = Vec::new();
    let mut ratios = Vec::new();
    let mut converged = false;
    let mut streak = 0;
    for _ in 0..cfg.max_iters {
        let forcing: Vec<SpectralVectorField> =
            current.iter().map(|b| evolve::rhs(b, params)).collect::<Result<_>>()?;
        let integral = duhamel_cumulative(&op, &times, &forcing)?;
        let mut next = free.clone();
        for (b, i) in next.iter_mut().zip(&integral) {
            b.add_scaled(1.0, i)?;
            if !b.is_finite() {
                return Err(Error::NonFiniteField);
            }
        }
        let diff: Vec<SpectralVectorField> =
            next.iter().zip(&current).map(|(a, b)| a.sub(b)).collect::<Result<_>>()?;
        let dist = ft(&diff)?;
        let scale = ft(&current)?;
        if !dist.is_finite() {
            return Err(Error::NonFiniteField);
        }
        if let Some(&prev) = distances.last() {
            let ratio = if prev > 0.0 { dist / prev } else { 0.0 };
            ratios.push(ratio);
            streak = if ratio >= 1.0 { streak + 1 } else { 0 };
            if streak >= NON_CONTRACTIVE_RUN {
                return Err(Error::NonContractive(ratio));
            }
        }
        distances.push(dist);
        current = next;
        if dist <= cfg.tol_rel * scale {
            converged = true;
            break;
        }
    }
    let contraction_ratio = ratios.iter().copied().fold(0.0, f64::max);
    current.remove(0);
    Ok(PicardResult {
        iterations: distances.len(),
        distances,
        ratios,
        times: cfg.t_grid.clone(),
        trajectory: current,
        contraction_ratio,
        converged,
    })
}

/// Stepper solution from `params.ic` sampled at `times`, with substeps of at most `max_dt`.
pub fn stepper_on_grid(params: &SimParams, times: &[f64], max_dt: f64) -> Result<Vec<SpectralVectorField>> {
    let mut sim = Simulation::new(params.clone())?;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        sim.advance_to(t, max_dt)?;
        out.push(sim.field().clone());
    }
    Ok(out)
}

/// `max_t ‖a(t) − b(t)‖_{L²} / max_t ‖b(t)‖_{L²}`.
pub fn max_relative_l2(a: &[SpectralVectorField], b: &[SpectralVectorField]) -> Result<f64> {
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        num = num.max(x.sub(y)?.norm_sq().sqrt());
        den = den.max(y.norm_sq().sqrt());
    }
    Ok(if den > 0.0 { num / den } else { num })
}

/// `∫₀ᵗ (t − s)^{−a} s^{−b} ds` for `0 ≤ a, b < 1` by composite Simpson after
/// removing both endpoint singularities with power substitutions.
pub fn beta_quadrature(a: f64, b: f64, t: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&a) || !(0.0..1.0).contains(&b) {
        return Err(Error::InvalidExponent(format!("need 0 <= a, b < 1, got a = {a}, b = {b}")));
    }
    if !(t > 0.0) {
        return Err(Error::NegativeTime(t));
    }
    // ∫₀^{t/2} (t−s)^{−a} s^{−b} ds with s = v^m, m = 1/(1−b)
    let half = |a: f64, b: f64| {
        let m = 1.0 / (1.0 - b);
        let top = (0.5 * t).powf(1.0 - b);
        simpson(|v| m * (t - v.powf(m)).powf(-a), top, 2000)
    };
    Ok(half(a, b) + half(b, a))
}

fn simpson(f: impl Fn(f64) -> f64, hi: f64, panels: usize) -> f64 {
    let h = hi / panels as f64;
    let mut sum = f(0.0) + f(hi);
    for i in 1..panels {
        sum += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    sum * h / 3.0
}
