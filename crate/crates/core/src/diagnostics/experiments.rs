//! Packaged experiments: scaling covariance, decay probe, log-Sobolev sweep,
//! amplitude sweep and the Picard/stepper cross-check.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{Accumulators, SimParams, Simulation, Trajectory, TrajectoryStatus};
use crate::fields::{self, NormRequest};
use crate::mild::{self, PicardConfig};
use crate::regimes::{self, Truth};
use crate::spectral::{Grid, SpectralVectorField};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExperimentKind {
    /// Compare the run of `b0` at `n` with the run of
    /// `λ^{α+β−1} b0(λx)` at `n·λ` over `λ^{−2β}` times the horizon.
    Scaling { lambda: u32 },
    /// `t^θ ‖b(t)‖_{L^p}` for data in `L^{s_low}`.
    DecayProbe { s_low: f64 },
    /// Log-Sobolev ratio over the family `Σ |k|^{−d/2} e^{ik·x}`, `|k| ≤ N`.
    LogSobolevSweep { n_max: Vec<f64> },
    /// Time for `‖b‖_{H^s}` to reach `growth` times its initial value, per amplitude.
    AmplitudeSweep { amplitudes: Vec<f64>, growth: f64 },
    /// Picard iterate vs stepper on the default geometric grid.
    PicardCross,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    #[serde(flatten)]
    pub kind: ExperimentKind,
    pub base: SimParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplitudePoint {
    pub amplitude: f64,
    pub hs0: f64,
    /// `None` when the threshold was not reached before `t_end`.
    pub validity_time: Option<f64>,
    pub status: TrajectoryStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentReport {
    Scaling {
        lambda: u32,
        times: Vec<f64>,
        mismatch: Vec<f64>,
        max_mismatch: f64,
    },
    DecayProbe {
        s_low: f64,
        p: f64,
        theta: f64,
        times: Vec<f64>,
        weighted: Vec<f64>,
        max_weighted: f64,
        bounded: bool,
    },
    LogSobolevSweep {
        s: f64,
        n_max: Vec<f64>,
        ratios: Vec<f64>,
        max_ratio: f64,
    },
    AmplitudeSweep {
        growth: f64,
        points: Vec<AmplitudePoint>,
        /// Least-squares slope of `log T` against `log amplitude`.
        exponent: Option<f64>,
        /// Median of `1 / (‖b0‖_{H^s} √T)`, the constant in `T ≈ (c‖b0‖)^{−2}`.
        c_cal: Option<f64>,
    },
    PicardCross {
        iterations: usize,
        converged: bool,
        contraction_ratio: f64,
        discrepancy: f64,
    },
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        let bad = |m: String| Err(Error::Configuration(m));
        match &self.kind {
            ExperimentKind::Scaling { lambda } => {
                if *lambda < 2 {
                    return bad(format!("scaling factor must be an integer >= 2, got {lambda}"));
                }
                if self.base.dt.is_none() {
                    return bad("scaling experiment needs a fixed dt".into());
                }
            }
            ExperimentKind::DecayProbe { s_low } => {
                let b = &self.base;
                let rep = regimes::classify_f64(b.d, b.alpha, b.beta, b.s, b.eta, None);
                if !rep.mild_admissible {
                    return bad(format!("decay probe outside the mild regime: {}", rep.mild_reasons.join("; ")));
                }
                match regimes::in_decay_window(&rep, *s_low) {
                    Truth::Yes => {}
                    t => {
                        let (lo, hi) = rep.theta_window.unwrap_or((f64::NAN, f64::NAN));
                        return bad(format!("1/s_low = {} not inside ({lo}, {hi}) [{t:?}]", 1.0 / s_low));
                    }
                }
            }
            ExperimentKind::LogSobolevSweep { n_max } => {
                if n_max.is_empty() || n_max.iter().any(|&n| !(n >= 1.0)) {
                    return bad("log-Sobolev sweep needs cutoffs >= 1".into());
                }
                let half = self.base.d as f64 / 2.0;
                if !(self.base.s > half) {
                    return Err(Error::ExponentTooSmall {
                        s: self.base.s,
                        min: half,
                    });
                }
            }
            ExperimentKind::AmplitudeSweep { amplitudes, growth } => {
                if amplitudes.len() < 2 || amplitudes.iter().any(|&a| !(a > 0.0)) {
                    return bad("amplitude sweep needs at least two positive amplitudes".into());
                }
                if !(*growth > 1.0) {
                    return bad(format!("growth threshold must exceed 1, got {growth}"));
                }
            }
            ExperimentKind::PicardCross => {}
        }
        Ok(())
    }
}

/// Runs `params` from an explicit initial field, keeping sampled fields.
pub fn run_from(params: &SimParams, b0: SpectralVectorField) -> Result<Trajectory> {
    let hs0 = fields::norm(&b0, NormRequest::Sobolev(params.s))?;
    let acc = Accumulators {
        t: 0.0,
        step: 0,
        cont_integral: 0.0,
        dissipation_integral: 0.0,
        hs0,
    };
    Simulation::restore(params.clone(), b0, acc)?.run_with(true, |_, _| Ok(()))
}

/// `c · f(λx)` on the grid of size `n·λ`.
pub fn compress(f: &SpectralVectorField, lambda: usize, c: f64) -> Result<SpectralVectorField> {
    let coarse = f.grid();
    let fine = Grid::new(coarse.d(), coarse.n() * lambda)?;
    let mut out = SpectralVectorField::zeros(&fine);
    let d = coarse.d();
    for idx in 0..coarse.len() {
        let k = coarse.wavevector(idx);
        let scaled: Vec<i64> = k[..d].iter().map(|&ki| ki * lambda as i64).collect();
        let target = fine.index_of(&scaled).ok_or(Error::GridMismatch)?;
        for j in 0..d {
            let v = f.component(j).coeffs()[idx];
            out.components_mut()[j].coeffs_mut()[target] = v * c;
        }
    }
    Ok(out)
}

fn scaling(spec: &ExperimentSpec, lambda: u32) -> Result<ExperimentReport> {
    let base = &spec.base;
    let l = lambda as f64;
    let grid = base.grid()?;
    let b0 = fields::make_initial(&base.ic, &grid, base.seed)?;
    let amp = l.powf(base.alpha + base.beta - 1.0);
    let time = l.powf(-2.0 * base.beta);
    let coarse = run_from(base, b0.clone())?;
    let fine_params = SimParams {
        n: base.n * lambda as usize,
        t_end: base.t_end * time,
        dt: base.dt.map(|dt| dt * time),
        ..base.clone()
    };
    let fine = run_from(&fine_params, compress(&b0, lambda as usize, amp)?)?;
    if coarse.fields.len() != fine.fields.len() {
        return Err(Error::Configuration("scaled runs sampled at different steps".into()));
    }
    let mut mismatch = Vec::with_capacity(fine.fields.len());
    for (c, f) in coarse.fields.iter().zip(&fine.fields) {
        let mapped = compress(c, lambda as usize, amp)?;
        let den = mapped.norm_sq().sqrt();
        let num = f.sub(&mapped)?.norm_sq().sqrt();
        mismatch.push(if den > 0.0 { num / den } else { num });
    }
    let max_mismatch = mismatch.iter().copied().fold(0.0, f64::max);
    Ok(ExperimentReport::Scaling {
        lambda,
        times: fine.times,
        mismatch,
        max_mismatch,
    })
}

fn decay_probe(spec: &ExperimentSpec, s_low: f64) -> Result<ExperimentReport> {
    let b = &spec.base;
    let rep = regimes::classify_f64(b.d, b.alpha, b.beta, b.s, b.eta, None);
    let p = rep.exponents.as_ref().map(|e| e.p).ok_or(Error::Configuration("no exponent p".into()))?;
    let theta = regimes::decay_theta(b.d, b.beta, s_low, p);
    let traj = crate::evolve::run(b)?;
    let mut weighted = Vec::with_capacity(traj.fields.len());
    for (t, f) in traj.times.iter().zip(&traj.fields) {
        weighted.push(t.powf(theta) * fields::norm(f, NormRequest::Lp(p))?);
    }
    let max_weighted = weighted.iter().copied().fold(0.0, f64::max);
    Ok(ExperimentReport::DecayProbe {
        s_low,
        p,
        theta,
        times: traj.times,
        weighted,
        max_weighted,
        bounded: max_weighted.is_finite(),
    })
}

fn log_sobolev(spec: &ExperimentSpec, n_max: &[f64]) -> Result<ExperimentReport> {
    let grid = spec.base.grid()?;
    let ratios: Vec<f64> = n_max
        .iter()
        .map(|&n| fields::log_sobolev_check(&fields::log_sobolev_family(&grid, n)?, spec.base.s))
        .collect::<Result<_>>()?;
    Ok(ExperimentReport::LogSobolevSweep {
        s: spec.base.s,
        n_max: n_max.to_vec(),
        max_ratio: ratios.iter().copied().fold(0.0, f64::max),
        ratios,
    })
}

/// First time the series crosses `level`, interpolated linearly.
fn crossing(times: &[f64], values: &[f64], level: f64) -> Option<f64> {
    let i = values.iter().position(|&v| v >= level)?;
    if i == 0 {
        return Some(times[0]);
    }
    let (t0, t1, v0, v1) = (times[i - 1], times[i], values[i - 1], values[i]);
    Some(t0 + (t1 - t0) * (level - v0) / (v1 - v0))
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len().min(y.len());
    if n < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn amplitude_sweep(spec: &ExperimentSpec, amplitudes: &[f64], growth: f64) -> Result<ExperimentReport> {
    let base = &spec.base;
    let grid = base.grid()?;
    let shape = fields::make_initial(&base.ic, &grid, base.seed)?;
    let mut points = Vec::with_capacity(amplitudes.len());
    for &amplitude in amplitudes {
        let traj = run_from(base, shape.scaled(amplitude))?;
        let hs: Vec<f64> = traj.records.iter().map(|r| r.b_hs).collect();
        let hs0 = hs[0];
        let validity_time = match crossing(&traj.times, &hs, growth * hs0) {
            Some(t) => Some(t),
            None if traj.status != TrajectoryStatus::Completed => traj.times.last().copied(),
            None => None,
        };
        points.push(AmplitudePoint {
            amplitude,
            hs0,
            validity_time,
            status: traj.status,
        });
    }
    let observed: Vec<&AmplitudePoint> = points.iter().filter(|p| p.validity_time.is_some_and(|t| t > 0.0)).collect();
    let lx: Vec<f64> = observed.iter().map(|p| p.amplitude.ln()).collect();
    let ly: Vec<f64> = observed.iter().map(|p| p.validity_time.unwrap().ln()).collect();
    let mut cs: Vec<f64> = observed
        .iter()
        .map(|p| 1.0 / (p.hs0 * p.validity_time.unwrap().sqrt()))
        .collect();
    cs.sort_by(f64::total_cmp);
    Ok(ExperimentReport::AmplitudeSweep {
        growth,
        exponent: fit_slope(&lx, &ly),
        c_cal: (!cs.is_empty()).then(|| cs[cs.len() / 2]),
        points,
    })
}

fn picard_cross(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let base = &spec.base;
    let grid = base.grid()?;
    let b0 = fields::make_initial(&base.ic, &grid, base.seed)?;
    let cfg = PicardConfig::for_params(base)?;
    let res = mild::picard_solve(&b0, &cfg, base)?;
    let max_dt = base.dt.unwrap_or(base.dt_max).min(1e-3);
    let stepped = mild::stepper_on_grid(base, &res.times, max_dt)?;
    Ok(ExperimentReport::PicardCross {
        iterations: res.iterations,
        converged: res.converged,
        contraction_ratio: res.contraction_ratio,
        discrepancy: mild::max_relative_l2(&res.trajectory, &stepped)?,
    })
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    match &spec.kind {
        ExperimentKind::Scaling { lambda } => scaling(spec, *lambda),
        ExperimentKind::DecayProbe { s_low } => decay_probe(spec, *s_low),
        ExperimentKind::LogSobolevSweep { n_max } => log_sobolev(spec, n_max),
        ExperimentKind::AmplitudeSweep { amplitudes, growth } => amplitude_sweep(spec, amplitudes, *growth),
        ExperimentKind::PicardCross => picard_cross(spec),
    }
}
