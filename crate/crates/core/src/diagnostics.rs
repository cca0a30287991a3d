//! Energy, helicity and balance monitors, plus the packaged experiments.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{SimParams, Trajectory};
use crate::fields::{self, NormRequest};
use crate::spectral::SpectralVectorField;
use crate::stokes;

mod experiments;
pub use experiments::*;

/// One NDJSON diagnostics line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsRecord {
    pub t: f64,
    /// Magnetic energy `½‖b‖²`.
    #[serde(rename = "M")]
    pub m: f64,
    /// Magnetic helicity (d = 3 only).
    #[serde(rename = "H")]
    pub h: Option<f64>,
    /// `‖u‖²_{Ḣ^α}`.
    #[serde(rename = "u_Ha2")]
    pub u_ha2: f64,
    /// `‖u‖_{Ḣ^{d/2+1}}`.
    #[serde(rename = "u_Hd2p1")]
    pub u_hd2p1: f64,
    #[serde(rename = "b_Hs")]
    pub b_hs: f64,
    #[serde(rename = "b_H1")]
    pub b_h1: f64,
    #[serde(rename = "b_Lp")]
    pub b_lp: f64,
    /// Balance residual over the interval ending here; absent on the first line.
    pub energy_residual: Option<f64>,
    pub cont_integral: f64,
    /// `M − |H|/2` (d = 3 only).
    pub arnold_margin: Option<f64>,
}

/// `H = ∫ A·b` with the Coulomb-gauge potential `Â = i k × b̂ / |k|²`.
pub fn magnetic_helicity(b: &SpectralVectorField) -> Result<f64> {
    let grid = b.grid();
    if grid.d() != 3 {
        return Err(Error::WrongDimension {
            expected: 3,
            found: grid.d(),
        });
    }
    let c = |j: usize| b.component(j).coeffs();
    let (b0, b1, b2) = (c(0), c(1), c(2));
    let mut h = 0.0;
    for idx in 1..grid.len() {
        let k = grid.derivative_wavevector(idx);
        let kk = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
        if kk == 0.0 {
            continue;
        }
        let v = [b0[idx], b1[idx], b2[idx]];
        let cross = [
            v[2] * k[1] - v[1] * k[2],
            v[0] * k[2] - v[2] * k[0],
            v[1] * k[0] - v[0] * k[1],
        ];
        let mut dot = Complex64::new(0.0, 0.0);
        for j in 0..3 {
            dot += cross[j] * Complex64::i() * v[j].conj();
        }
        h += dot.re / kk;
    }
    Ok(h)
}

/// `ΔM/Δt + ν‖Λ^α u‖² + η‖Λ^β b‖²` with the dissipation evaluated at the
/// midpoint field `(b_prev + b_now)/2`.
pub fn interval_residual(
    b_prev: &SpectralVectorField,
    b_now: &SpectralVectorField,
    dt: f64,
    params: &SimParams,
) -> Result<f64> {
    let mut mid = b_prev.scaled(0.5);
    mid.add_scaled(0.5, b_now)?;
    let u = stokes::solve_velocity(&mid, params.stokes())?;
    let du = params.nu * fields::norm(&u, NormRequest::HomSobolev(params.alpha))?.powi(2);
    let db = if params.eta == 0.0 {
        0.0
    } else {
        params.eta * fields::norm(&mid, NormRequest::HomSobolev(params.beta))?.powi(2)
    };
    // ½⟨b_now − b_prev, b_now + b_prev⟩ avoids cancelling two close energies
    let diff = b_now.sub(b_prev)?;
    let mut sum = b_now.clone();
    sum.add_scaled(1.0, b_prev)?;
    let dm = 0.5 * diff.dot(&sum);
    Ok(dm / dt + du + db)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualSeries {
    pub values: Vec<f64>,
    pub max_abs: f64,
    pub mean_abs: f64,
}

/// Balance residual on every interval between stored samples.
pub fn energy_balance_residual(traj: &Trajectory, params: &SimParams) -> Result<ResidualSeries> {
    let found = traj.fields.len();
    if found < 2 || traj.times.len() != found {
        return Err(Error::InsufficientSamples { needed: 2, found });
    }
    let mut values = Vec::with_capacity(found - 1);
    for i in 1..found {
        let dt = traj.times[i] - traj.times[i - 1];
        values.push(interval_residual(&traj.fields[i - 1], &traj.fields[i], dt, params)?);
    }
    let max_abs = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mean_abs = values.iter().map(|v| v.abs()).sum::<f64>() / values.len() as f64;
    Ok(ResidualSeries {
        values,
        max_abs,
        mean_abs,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContinuationVerdict {
    Finite,
    GrowingFast,
}

/// Trapezoid integral of sampled `‖u‖_{Ḣ^{d/2+1}}` and a growth verdict.
///
/// The verdict is `GrowingFast` when the last quarter of the time window
/// carries more than half of the integral and the integrand is increasing
/// with increasing increments over the last three samples.
pub fn continuation_monitor(times: &[f64], norms: &[f64]) -> (f64, ContinuationVerdict) {
    let n = times.len().min(norms.len());
    if n < 2 {
        return (0.0, ContinuationVerdict::Finite);
    }
    let t_quarter = times[0] + 0.75 * (times[n - 1] - times[0]);
    let mut total = 0.0;
    let mut tail = 0.0;
    for i in 1..n {
        let piece = 0.5 * (times[i] - times[i - 1]) * (norms[i] + norms[i - 1]);
        total += piece;
        if times[i - 1] >= t_quarter {
            tail += piece;
        }
    }
    let accelerating = n >= 3 && {
        let (a, b, c) = (norms[n - 3], norms[n - 2], norms[n - 1]);
        c > b && b > a && (c - b) > (b - a)
    };
    let verdict = if total > 0.0 && tail > 0.5 * total && accelerating {
        ContinuationVerdict::GrowingFast
    } else {
        ContinuationVerdict::Finite
    };
    (total, verdict)
}

/// Continuation monitor over the records of a trajectory.
pub fn trajectory_continuation(traj: &Trajectory) -> (f64, ContinuationVerdict) {
    let norms: Vec<f64> = traj.records.iter().map(|r| r.u_hd2p1).collect();
    continuation_monitor(&traj.times, &norms)
}
