//! Integrating-factor RK4 time stepping of the induction equation.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::fields::{self, InitialCondition, NormRequest};
use crate::spectral::{self, Grid, SpectralVectorField};
use crate::stokes::{self, StokesConfig};

/// Floor on `max|u|` in the CFL formula.
pub const CFL_VELOCITY_FLOOR: f64 = 1e-8;
/// Growth of `‖b‖_{H^s}` that flags a suspected blow-up.
pub const BLOWUP_GROWTH: f64 = 1e6;
/// Adaptive steps below this size flag a suspected blow-up.
pub const MIN_DT: f64 = 1e-12;

/// Physical and numerical parameters of a run.
///
/// Missing keys take their [`Default`] values when deserialized, except
/// `dt`, which stays absent so that `cfl` alone selects adaptive stepping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimParams {
    pub d: usize,
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub nu: f64,
    pub eta: f64,
    /// Sobolev exponent tracked by `b_Hs` and the blow-up heuristic.
    pub s: f64,
    /// Lebesgue exponent tracked by `b_Lp`.
    pub lp: f64,
    pub t_end: f64,
    /// Fixed step; when absent the step follows the CFL rule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cfl: Option<f64>,
    /// Upper bound on adaptive steps.
    pub dt_max: f64,
    pub sample_every: usize,
    pub seed: u64,
    pub ic: InitialCondition,
    pub reproject_every: usize,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            d: 2,
            n: 32,
            alpha: 1.0,
            beta: 1.0,
            nu: 1.0,
            eta: 1.0,
            s: 2.0,
            lp: 2.0,
            t_end: 1.0,
            dt: Some(1e-2),
            cfl: None,
            dt_max: 1e-2,
            sample_every: 1,
            seed: 0,
            ic: InitialCondition::Zero {},
            reproject_every: 1,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Configuration(msg));
        if self.d < 2 || self.d > 3 {
            return bad(format!("d must be 2 or 3, got {}", self.d));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("eta", self.eta), ("s", self.s)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return bad(format!("nu must be > 0, got {}", self.nu));
        }
        if !(self.lp >= 1.0) {
            return bad(format!("lp must be >= 1, got {}", self.lp));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be > 0, got {}", self.t_end));
        }
        match (self.dt, self.cfl) {
            (Some(dt), None) if dt > 0.0 && dt.is_finite() => {}
            (None, Some(c)) if c > 0.0 && c <= 1.0 => {}
            (Some(_), Some(_)) => return bad("set either dt or cfl, not both".into()),
            _ => return bad(format!("need dt > 0 or cfl in (0, 1], got {:?} / {:?}", self.dt, self.cfl)),
        }
        if !(self.dt_max > 0.0) {
            return bad(format!("dt_max must be > 0, got {}", self.dt_max));
        }
        if self.sample_every == 0 || self.reproject_every == 0 {
            return bad("sample_every and reproject_every must be >= 1".into());
        }
        Ok(())
    }

    pub fn stokes(&self) -> StokesConfig {
        StokesConfig {
            alpha: self.alpha,
            nu: self.nu,
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.d, self.n)
    }

    /// Number of fixed steps needed to reach `t_end`.
    fn fixed_steps(&self, dt: f64) -> u64 {
        let ratio = self.t_end / dt;
        let rounded = ratio.round();
        if (ratio - rounded).abs() <= 1e-9 * ratio.max(1.0) {
            rounded as u64
        } else {
            ratio.ceil() as u64
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrajectoryStatus {
    Running,
    Completed,
    BlowupSuspected,
    Diverged,
}

/// Sampled output of a run.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub records: Vec<DiagnosticsRecord>,
    /// Sampled fields, present only when requested.
    pub fields: Vec<SpectralVectorField>,
    pub status: TrajectoryStatus,
    pub final_field: SpectralVectorField,
    pub steps: u64,
    /// Per-step trapezoid value of `∫ ‖u‖²_{Ḣ^α} dt`.
    pub dissipation_integral: f64,
}

/// Per-mode multiplier tables shared by the stepper and its monitors.
struct Tables {
    /// `η |k|^{2β}`.
    lambda: Vec<f64>,
    w_alpha: Vec<f64>,
    w_crit: Vec<f64>,
    w_hs: Vec<f64>,
    w_h1: Vec<f64>,
    /// `ν^{-1} |k|^{-2α}`.
    velocity: Vec<f64>,
}

impl Tables {
    fn new(grid: &Grid, p: &SimParams) -> Self {
        let d = grid.d() as f64;
        let len = grid.len();
        let hom = |g: f64| -> Vec<f64> {
            (0..len)
                .map(|i| if i == 0 { 0.0 } else { grid.k_norm2(i).powf(g) })
                .collect()
        };
        let inhom = |s: f64| -> Vec<f64> { (0..len).map(|i| (1.0 + grid.k_norm2(i)).powf(s)).collect() };
        Self {
            lambda: hom(p.beta).into_iter().map(|w| p.eta * w).collect(),
            w_alpha: hom(p.alpha),
            w_crit: hom(d / 2.0 + 1.0),
            w_hs: inhom(p.s),
            w_h1: inhom(1.0),
            velocity: stokes::velocity_multiplier(grid, p.stokes()),
        }
    }
}

fn weighted(v: &SpectralVectorField, w: &[f64]) -> f64 {
    let mut acc = 0.0;
    for c in v.components() {
        for (z, &wi) in c.coeffs().iter().zip(w) {
            acc += wi * z.norm_sqr();
        }
    }
    acc
}

/// `N(b)` and `u(b)` for a band-limited `b`.
fn nonlinear(b: &SpectralVectorField, velocity: &[f64]) -> (SpectralVectorField, SpectralVectorField) {
    let grid = b.grid();
    let bp = spectral::to_physical(b);
    let u = stokes::velocity_from_physical(grid, &bp, velocity);
    let up = spectral::to_physical(&u);
    let n = spectral::div_antisymmetric_with(grid, &bp, &up, true);
    (n, u)
}

/// `N(b) = P Div(b⊗u − u⊗b)` with `u` from the Stokes solve; dealiased.
pub fn rhs(b: &SpectralVectorField, params: &SimParams) -> Result<SpectralVectorField> {
    let u = stokes::solve_velocity(b, params.stokes())?;
    let bd = spectral::dealias_vec(b);
    let mut n = spectral::div_antisymmetric_product(&bd, &u)?;
    spectral::leray_in_place(&mut n);
    Ok(n)
}

/// `out = Σ_t m_t(k) · c_t · x_t(k)` with per-term optional multipliers,
/// evaluated on retained modes only (all inputs vanish elsewhere).
fn combine(out: &mut SpectralVectorField, terms: &[(&SpectralVectorField, f64, Option<&[f64]>)]) {
    let grid = out.grid().clone();
    let d = grid.d();
    for j in 0..d {
        let dst = out.components_mut()[j].coeffs_mut();
        for run in grid.retained_runs() {
            dst[run.clone()].fill(Complex64::new(0.0, 0.0));
            for (field, c, m) in terms {
                let src = &field.component(j).coeffs()[run.clone()];
                match m {
                    Some(m) => {
                        for ((z, x), w) in dst[run.clone()].iter_mut().zip(src).zip(&m[run.clone()]) {
                            *z += x * (c * w);
                        }
                    }
                    None => {
                        for (z, x) in dst[run.clone()].iter_mut().zip(src) {
                            *z += x * *c;
                        }
                    }
                }
            }
        }
    }
}

fn decay(lambda: &[f64], h: f64) -> Vec<f64> {
    lambda.iter().map(|&l| (-h * l).exp()).collect()
}

/// One Lawson-form RK4 step of size `h` given `k1 = N(b)`.
fn ifrk4_core(
    b: &SpectralVectorField,
    k1: &SpectralVectorField,
    h: f64,
    e_half: &[f64],
    e_full: &[f64],
    velocity: &[f64],
) -> SpectralVectorField {
    let mut stage = b.clone();
    combine(&mut stage, &[(b, 1.0, Some(e_half)), (k1, 0.5 * h, Some(e_half))]);
    let (k2, _) = nonlinear(&stage, velocity);
    combine(&mut stage, &[(b, 1.0, Some(e_half)), (&k2, 0.5 * h, None)]);
    let (k3, _) = nonlinear(&stage, velocity);
    combine(&mut stage, &[(b, 1.0, Some(e_full)), (&k3, h, Some(e_half))]);
    let (k4, _) = nonlinear(&stage, velocity);
    combine(
        &mut stage,
        &[
            (b, 1.0, Some(e_full)),
            (k1, h / 6.0, Some(e_full)),
            (&k2, h / 3.0, Some(e_half)),
            (&k3, h / 3.0, Some(e_half)),
            (&k4, h / 6.0, None),
        ],
    );
    stage
}

/// Advances `b` by one integrating-factor RK4 step.
pub fn step_ifrk4(b: &SpectralVectorField, dt: f64, params: &SimParams) -> Result<SpectralVectorField> {
    if !(dt > 0.0) {
        return Err(Error::Configuration(format!("dt must be > 0, got {dt}")));
    }
    let k1 = rhs(b, params)?;
    let tables = Tables::new(b.grid(), params);
    let lambda = &tables.lambda;
    let bd = spectral::dealias_vec(b);
    let out = ifrk4_core(&bd, &k1, dt, &decay(lambda, dt / 2.0), &decay(lambda, dt), &tables.velocity);
    if !out.is_finite() {
        return Err(Error::NonFiniteField);
    }
    Ok(out)
}

fn max_speed(u: &SpectralVectorField) -> f64 {
    let up = spectral::to_physical(u);
    let len = up[0].len();
    (0..len)
        .map(|i| up.iter().map(|c| c[i] * c[i]).sum::<f64>())
        .fold(0.0, f64::max)
        .sqrt()
}

fn cfl_formula(u: &SpectralVectorField, params: &SimParams) -> f64 {
    let cfl = params.cfl.unwrap_or(1.0);
    let h = 2.0 * std::f64::consts::PI / params.n as f64;
    (cfl * h / max_speed(u).max(CFL_VELOCITY_FLOOR)).min(params.dt_max)
}

/// Adaptive step `cfl · (2π/n) / max(max|u|, 1e-8)`, capped at `dt_max`.
pub fn cfl_dt(b: &SpectralVectorField, params: &SimParams) -> Result<f64> {
    let u = stokes::solve_velocity(b, params.stokes())?;
    Ok(cfl_formula(&u, params))
}

/// Mutable state that a checkpoint must carry besides the field itself.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Accumulators {
    pub t: f64,
    pub step: u64,
    pub cont_integral: f64,
    pub dissipation_integral: f64,
    pub hs0: f64,
}

/// A running simulation; owns the current field and its monitors.
pub struct Simulation {
    params: SimParams,
    grid: Grid,
    tables: Tables,
    b: SpectralVectorField,
    /// `N(b)` and `u(b)` at the current state.
    k1: SpectralVectorField,
    u: SpectralVectorField,
    acc: Accumulators,
    cached: Option<(u64, Vec<f64>, Vec<f64>)>,
    prev_sample: (f64, SpectralVectorField),
    status: TrajectoryStatus,
    total_steps: Option<u64>,
}

impl Simulation {
    pub fn new(params: SimParams) -> Result<Self> {
        params.validate()?;
        let grid = params.grid()?;
        let b = fields::make_initial(&params.ic, &grid, params.seed)?;
        let hs0 = fields::norm(&b, NormRequest::Sobolev(params.s))?;
        let acc = Accumulators {
            t: 0.0,
            step: 0,
            cont_integral: 0.0,
            dissipation_integral: 0.0,
            hs0,
        };
        Self::assemble(params, grid, b, acc)
    }

    /// Rebuilds a simulation from a saved field and accumulators.
    pub fn restore(params: SimParams, b: SpectralVectorField, acc: Accumulators) -> Result<Self> {
        params.validate()?;
        let grid = params.grid()?;
        if b.grid() != &grid {
            return Err(Error::GridMismatch);
        }
        Self::assemble(params, grid, b, acc)
    }

    fn assemble(params: SimParams, grid: Grid, b: SpectralVectorField, acc: Accumulators) -> Result<Self> {
        let ratio = b.divergence_ratio();
        if ratio > spectral::DIVERGENCE_TOL {
            return Err(Error::NonDivergenceFreeInput(ratio));
        }
        if !b.is_zero_mean() {
            return Err(Error::NonzeroMean);
        }
        let tables = Tables::new(&grid, &params);
        let b = spectral::dealias_vec(&b);
        let (k1, u) = nonlinear(&b, &tables.velocity);
        let total_steps = params.dt.map(|dt| params.fixed_steps(dt));
        let prev_sample = (acc.t, b.clone());
        Ok(Self {
            params,
            grid,
            tables,
            b,
            k1,
            u,
            acc,
            cached: None,
            prev_sample,
            status: TrajectoryStatus::Running,
            total_steps,
        })
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn field(&self) -> &SpectralVectorField {
        &self.b
    }

    pub fn velocity(&self) -> &SpectralVectorField {
        &self.u
    }

    pub fn time(&self) -> f64 {
        self.acc.t
    }

    pub fn accumulators(&self) -> Accumulators {
        self.acc
    }

    pub fn status(&self) -> TrajectoryStatus {
        self.status
    }

    pub fn is_finished(&self) -> bool {
        self.status != TrajectoryStatus::Running
    }

    fn crit_norm(&self) -> f64 {
        weighted(&self.u, &self.tables.w_crit).sqrt()
    }

    fn alpha_norm_sq(&self) -> f64 {
        weighted(&self.u, &self.tables.w_alpha)
    }

    /// Takes one step of size `h`; `tag` identifies `h` for the factor cache.
    fn advance(&mut self, h: f64, tag: u64) -> Result<()> {
        let fresh = !matches!(&self.cached, Some((t, _, _)) if *t == tag);
        if fresh {
            let half = decay(&self.tables.lambda, h / 2.0);
            let full = decay(&self.tables.lambda, h);
            self.cached = Some((tag, half, full));
        }
        let (_, half, full) = self.cached.as_ref().expect("factor cache");
        let next = ifrk4_core(&self.b, &self.k1, h, half, full, &self.tables.velocity);
        if !next.is_finite() {
            return Err(Error::NonFiniteField);
        }
        let crit_before = self.crit_norm();
        let alpha_before = self.alpha_norm_sq();
        self.b = next;
        self.acc.step += 1;
        if self.acc.step % self.params.reproject_every as u64 == 0 {
            spectral::leray_in_place(&mut self.b);
        }
        let (k1, u) = nonlinear(&self.b, &self.tables.velocity);
        self.k1 = k1;
        self.u = u;
        self.acc.cont_integral += 0.5 * h * (crit_before + self.crit_norm());
        self.acc.dissipation_integral += 0.5 * h * (alpha_before + self.alpha_norm_sq());
        Ok(())
    }

    /// Advances one step of the configured schedule.
    pub fn step(&mut self) -> Result<()> {
        if self.is_finished() {
            return Ok(());
        }
        match (self.params.dt, self.total_steps) {
            (Some(dt), Some(total)) => {
                let last = self.acc.step + 1 >= total;
                let h = if last { self.params.t_end - self.acc.step as f64 * dt } else { dt };
                let tag = if last { h.to_bits() } else { dt.to_bits() };
                self.advance(h, tag)?;
                self.acc.t = if last { self.params.t_end } else { self.acc.step as f64 * dt };
                if last {
                    self.status = TrajectoryStatus::Completed;
                }
            }
            _ => {
                let mut h = cfl_formula(&self.u, &self.params);
                if h < MIN_DT {
                    self.status = TrajectoryStatus::BlowupSuspected;
                    return Ok(());
                }
                let remaining = self.params.t_end - self.acc.t;
                let last = h >= remaining * (1.0 - 1e-12);
                if last {
                    h = remaining;
                }
                self.advance(h, h.to_bits())?;
                self.acc.t = if last { self.params.t_end } else { self.acc.t + h };
                if last {
                    self.status = TrajectoryStatus::Completed;
                }
            }
        }
        Ok(())
    }

    /// Steps with `ceil((t - now)/max_dt)` equal substeps to land on `t` exactly.
    pub fn advance_to(&mut self, t: f64, max_dt: f64) -> Result<()> {
        let span = t - self.acc.t;
        if span <= 0.0 {
            return Ok(());
        }
        let m = (span / max_dt * (1.0 - 1e-12)).ceil().max(1.0) as u64;
        let h = span / m as f64;
        for _ in 0..m {
            self.advance(h, h.to_bits())?;
        }
        self.acc.t = t;
        Ok(())
    }

    /// Diagnostics at the current state; the balance residual covers the
    /// interval since the previous call.
    pub fn record(&mut self) -> Result<DiagnosticsRecord> {
        let b = &self.b;
        let m = 0.5 * b.norm_sq();
        let (t_prev, b_prev) = &self.prev_sample;
        let residual = if self.acc.t > *t_prev {
            Some(diagnostics::interval_residual(
                b_prev,
                b,
                self.acc.t - t_prev,
                &self.params,
            )?)
        } else {
            None
        };
        let helicity = if self.grid.d() == 3 {
            Some(diagnostics::magnetic_helicity(b)?)
        } else {
            None
        };
        let record = DiagnosticsRecord {
            t: self.acc.t,
            m,
            h: helicity,
            u_ha2: self.alpha_norm_sq(),
            u_hd2p1: self.crit_norm(),
            b_hs: weighted(b, &self.tables.w_hs).sqrt(),
            b_h1: weighted(b, &self.tables.w_h1).sqrt(),
            b_lp: fields::norm(b, NormRequest::Lp(self.params.lp))?,
            energy_residual: residual,
            cont_integral: self.acc.cont_integral,
            arnold_margin: helicity.map(|h| m - 0.5 * h.abs()),
        };
        self.prev_sample = (self.acc.t, b.clone());
        if record.b_hs > BLOWUP_GROWTH * self.acc.hs0 && self.acc.hs0 > 0.0 {
            self.status = TrajectoryStatus::BlowupSuspected;
        }
        Ok(record)
    }

    /// Whether the step just taken should be sampled.
    pub fn at_sample(&self) -> bool {
        self.is_finished() || self.acc.step % self.params.sample_every as u64 == 0
    }

    /// Drives the run to completion, calling `on_sample` after each record.
    pub fn run_with(
        &mut self,
        store_fields: bool,
        on_sample: impl FnMut(&Simulation, &DiagnosticsRecord) -> Result<()>,
    ) -> Result<Trajectory> {
        self.drive(store_fields, true, on_sample)
    }

    /// Like [`Simulation::run_with`] but without a record at the starting
    /// time, which a restored run has already emitted.
    pub fn resume_with(
        &mut self,
        store_fields: bool,
        on_sample: impl FnMut(&Simulation, &DiagnosticsRecord) -> Result<()>,
    ) -> Result<Trajectory> {
        self.drive(store_fields, false, on_sample)
    }

    fn drive(
        &mut self,
        store_fields: bool,
        initial: bool,
        mut on_sample: impl FnMut(&Simulation, &DiagnosticsRecord) -> Result<()>,
    ) -> Result<Trajectory> {
        let mut traj = Trajectory {
            times: Vec::new(),
            records: Vec::new(),
            fields: Vec::new(),
            status: TrajectoryStatus::Running,
            final_field: self.b.clone(),
            steps: self.acc.step,
            dissipation_integral: 0.0,
        };
        let mut sample = |sim: &mut Simulation, traj: &mut Trajectory| -> Result<()> {
            let rec = sim.record()?;
            on_sample(sim, &rec)?;
            traj.times.push(rec.t);
            traj.records.push(rec);
            if store_fields {
                traj.fields.push(sim.b.clone());
            }
            Ok(())
        };
        if initial {
            sample(self, &mut traj)?;
        }
        while !self.is_finished() {
            match self.step() {
                Ok(()) => {}
                Err(Error::NonFiniteField) => {
                    self.status = TrajectoryStatus::Diverged;
                    break;
                }
                Err(e) => return Err(e),
            }
            if self.status != TrajectoryStatus::BlowupSuspected && self.at_sample() {
                sample(self, &mut traj)?;
            }
        }
        traj.status = self.status;
        traj.final_field = self.b.clone();
        traj.steps = self.acc.step;
        traj.dissipation_integral = self.acc.dissipation_integral;
        Ok(traj)
    }
}

/// Runs `params` from its initial condition to `t_end`, keeping sampled fields.
pub fn run(params: &SimParams) -> Result<Trajectory> {
    Simulation::new(params.clone())?.run_with(true, |_, _| Ok(()))
}
