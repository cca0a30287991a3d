//! Initial conditions and Lebesgue/Sobolev norms.

use std::f64::consts::{E, PI};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{self, Grid, SpectralScalar, SpectralVectorField};

/// Which norm to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum NormRequest {
    /// Physical-space `L^p`, `p ∈ [1, ∞]`, of the pointwise Euclidean magnitude.
    Lp(f64),
    /// Inhomogeneous `H^s`, weight `(1 + |k|²)^s`.
    Sobolev(f64),
    /// Homogeneous `Ḣ^s`, weight `|k|^{2s}`.
    HomSobolev(f64),
    /// Grid maximum of the pointwise magnitude.
    LinfPhysical,
}

impl NormRequest {
    /// Parses `L2`, `Linf`, `H1.5`, `Hdot-0.5` style labels.
    pub fn parse(label: &str) -> Result<Self> {
        let bad = || Error::Configuration(format!("unknown norm '{label}'"));
        let lower = label.trim().to_ascii_lowercase();
        if lower == "linf" {
            return Ok(NormRequest::LinfPhysical);
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        if let Some(rest) = lower.strip_prefix("hdot") {
            Ok(NormRequest::HomSobolev(num(rest)?))
        } else if let Some(rest) = lower.strip_prefix('h') {
            Ok(NormRequest::Sobolev(num(rest)?))
        } else if let Some(rest) = lower.strip_prefix('l') {
            Ok(NormRequest::Lp(num(rest)?))
        } else {
            Err(bad())
        }
    }
}

fn spectral_weighted(comps: &[SpectralScalar], weight: impl Fn(usize) -> f64) -> f64 {
    let len = comps[0].grid().len();
    let mut acc = 0.0;
    for idx in 0..len {
        let w = weight(idx);
        if w == 0.0 {
            continue;
        }
        let m: f64 = comps.iter().map(|c| c.coeffs()[idx].norm_sqr()).sum();
        acc += w * m;
    }
    acc.sqrt()
}

fn physical_magnitudes(comps: &[SpectralScalar]) -> Vec<f64> {
    let refs: Vec<&SpectralScalar> = comps.iter().collect();
    let phys = spectral::inverse_many(&refs);
    let len = comps[0].grid().len();
    (0..len)
        .map(|i| phys.iter().map(|f| f[i] * f[i]).sum::<f64>().sqrt())
        .collect()
}

fn norm_of(comps: &[SpectralScalar], req: NormRequest) -> Result<f64> {
    let grid = comps[0].grid().clone();
    match req {
        NormRequest::LinfPhysical | NormRequest::Lp(f64::INFINITY) => {
            Ok(physical_magnitudes(comps).into_iter().fold(0.0, f64::max))
        }
        NormRequest::Lp(p) => {
            if !(p >= 1.0) {
                return Err(Error::InvalidExponent(format!("L^p needs p >= 1, got {p}")));
            }
            let mags = physical_magnitudes(comps);
            let sum: f64 = if p == 2.0 {
                mags.iter().map(|m| m * m).sum()
            } else {
                mags.iter().map(|m| m.powf(p)).sum()
            };
            Ok((sum * grid.cell_volume()).powf(1.0 / p))
        }
        NormRequest::Sobolev(s) => {
            if !(s >= 0.0) || !s.is_finite() {
                return Err(Error::InvalidExponent(format!("H^s needs s >= 0, got {s}")));
            }
            Ok(spectral_weighted(comps, |i| (1.0 + grid.k_norm2(i)).powf(s)))
        }
        NormRequest::HomSobolev(s) => {
            if !s.is_finite() {
                return Err(Error::InvalidExponent(format!("s = {s}")));
            }
            if s < 0.0 && comps.iter().any(|c| c.mean_coeff() != Complex64::new(0.0, 0.0)) {
                return Err(Error::NonzeroMean);
            }
            Ok(spectral_weighted(comps, |i| {
                if i == 0 {
                    if s == 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    grid.k_norm2(i).powf(s)
                }
            }))
        }
    }
}

/// Norm of a vector field (pointwise Euclidean magnitude for `L^p`).
pub fn norm(f: &SpectralVectorField, req: NormRequest) -> Result<f64> {
    norm_of(f.components(), req)
}

/// Norm of a scalar field.
pub fn scalar_norm(f: &SpectralScalar, req: NormRequest) -> Result<f64> {
    norm_of(std::slice::from_ref(f), req)
}

/// Recipes for real, zero-mean, divergence-free initial fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    Zero {},
    /// `amplitude · polarization · sin(k·x)`; the polarization must be orthogonal to `k`.
    SingleMode {
        k: Vec<i64>,
        amplitude: f64,
        polarization: Vec<f64>,
    },
    /// Arnold-Beltrami-Childress field (d = 3), an eigenfield of curl.
    Abc { a: f64, b: f64, c: f64 },
    /// `amplitude · (-sin x2, sin 2x1)` (d = 2).
    OrszagTang { amplitude: f64 },
    /// Isotropic Gaussian field on the shell `k_min <= |k| <= k_max`,
    /// rescaled so that `‖b‖_{H^s} = target_norm`. Coefficients are drawn
    /// from the seed passed to [`make_initial`].
    RandomBandLimited {
        k_min: f64,
        k_max: f64,
        target_norm: f64,
        s: f64,
    },
}

fn unit(grid: &Grid) -> f64 {
    (2.0 * PI).powf(grid.d() as f64 / 2.0)
}

/// Adds `amp · cos(k·x)` (or `sin` when `sine`) to one component.
fn add_mode(field: &mut SpectralScalar, k: &[i64], amp: f64, sine: bool) -> Result<()> {
    let grid = field.grid().clone();
    let idx = grid
        .index_of(k)
        .filter(|&i| grid.is_retained(i))
        .ok_or_else(|| Error::InvalidInitialCondition(format!("mode {k:?} outside the dealiased band")))?;
    let nidx = grid.neg_index(idx);
    let half = 0.5 * amp * unit(&grid);
    let c = if sine {
        Complex64::new(0.0, -half)
    } else {
        Complex64::new(half, 0.0)
    };
    let coeffs = field.coeffs_mut();
    coeffs[idx] += c;
    coeffs[nidx] += c.conj();
    Ok(())
}

/// Builds the initial field described by `ic` on `grid`.
pub fn make_initial(ic: &InitialCondition, grid: &Grid, seed: u64) -> Result<SpectralVectorField> {
    let d = grid.d();
    let mut b = SpectralVectorField::zeros(grid);
    match ic {
        InitialCondition::Zero {} => {}
        InitialCondition::SingleMode {
            k,
            amplitude,
            polarization,
        } => {
            if k.len() != d || polarization.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: k.len().min(polarization.len()),
                });
            }
            if k.iter().all(|&ki| ki == 0) {
                return Err(Error::InvalidInitialCondition("k = 0 has nonzero mean".into()));
            }
            let kdotp: f64 = k.iter().zip(polarization).map(|(&ki, p)| ki as f64 * p).sum();
            let knorm = k.iter().map(|&ki| (ki * ki) as f64).sum::<f64>().sqrt();
            let pnorm = polarization.iter().map(|p| p * p).sum::<f64>().sqrt();
            if kdotp.abs() > 1e-12 * knorm * pnorm {
                return Err(Error::InvalidInitialCondition(
                    "polarization not orthogonal to k (field is not divergence-free)".into(),
                ));
            }
            for (j, p) in polarization.iter().enumerate() {
                if *p != 0.0 {
                    add_mode(&mut b.components_mut()[j], k, amplitude * p, true)?;
                }
            }
        }
        InitialCondition::Abc { a, b: bb, c } => {
            if d != 3 {
                return Err(Error::DimensionMismatch { expected: 3, found: d });
            }
            let comps = b.components_mut();
            // (A sin z + C cos y, B sin x + A cos z, C sin y + B cos x)
            add_mode(&mut comps[0], &[0, 0, 1], *a, true)?;
            add_mode(&mut comps[0], &[0, 1, 0], *c, false)?;
            add_mode(&mut comps[1], &[1, 0, 0], *bb, true)?;
            add_mode(&mut comps[1], &[0, 0, 1], *a, false)?;
            add_mode(&mut comps[2], &[0, 1, 0], *c, true)?;
            add_mode(&mut comps[2], &[1, 0, 0], *bb, false)?;
        }
        InitialCondition::OrszagTang { amplitude } => {
            if d != 2 {
                return Err(Error::DimensionMismatch { expected: 2, found: d });
            }
            let comps = b.components_mut();
            add_mode(&mut comps[0], &[0, 1], -amplitude, true)?;
            add_mode(&mut comps[1], &[2, 0], *amplitude, true)?;
        }
        InitialCondition::RandomBandLimited {
            k_min,
            k_max,
            target_norm,
            s,
        } => {
            if !(*k_min >= 0.0 && k_max >= k_min) || !(*target_norm >= 0.0) || !(*s >= 0.0) {
                return Err(Error::InvalidInitialCondition(format!(
                    "need 0 <= k_min <= k_max, target >= 0, s >= 0 (got {k_min}, {k_max}, {target_norm}, {s})"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (lo, hi) = (k_min * k_min, k_max * k_max);
            for idx in 1..grid.len() {
                let k2 = grid.k_norm2(idx);
                if k2 < lo || k2 > hi || !grid.is_retained(idx) {
                    continue;
                }
                for comp in b.components_mut() {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    comp.coeffs_mut()[idx] = Complex64::new(re, im);
                }
            }
            b = spectral::leray_project(&b)?;
            b.hermitian_symmetrize();
            let current = norm(&b, NormRequest::Sobolev(*s))?;
            if current == 0.0 {
                return Err(Error::InvalidInitialCondition(
                    "no admissible modes in the requested shell".into(),
                ));
            }
            b.scale(target_norm / current);
        }
    }
    Ok(b)
}

/// Ratio `‖f‖_{L^∞} / (1 + ‖f‖_{Ḣ^{d/2}} log(e + ‖f‖_{Ḣ^s}))` for zero-mean `f`.
pub fn log_sobolev_check(f: &SpectralScalar, s: f64) -> Result<f64> {
    let d = f.grid().d() as f64;
    if !(s > d / 2.0) {
        return Err(Error::ExponentTooSmall { s, min: d / 2.0 });
    }
    if f.mean_coeff() != Complex64::new(0.0, 0.0) {
        return Err(Error::NonzeroMean);
    }
    let sup = scalar_norm(f, NormRequest::LinfPhysical)?;
    if sup == 0.0 {
        return Err(Error::Configuration("log-Sobolev ratio of the zero field".into()));
    }
    let crit = scalar_norm(f, NormRequest::HomSobolev(d / 2.0))?;
    let high = scalar_norm(f, NormRequest::HomSobolev(s))?;
    Ok(sup / (1.0 + crit * (E + high).ln()))
}

/// `Σ_{1 <= |k| <= N} |k|^{-d/2} e^{ik·x}`, the log-growing sup-norm family.
pub fn log_sobolev_family(grid: &Grid, n_max: f64) -> Result<SpectralScalar> {
    let d = grid.d() as f64;
    let mut f = SpectralScalar::zeros(grid);
    let u = unit(grid);
    let mut any = false;
    for idx in 1..grid.len() {
        let k2 = grid.k_norm2(idx);
        if k2 > n_max * n_max {
            continue;
        }
        if !grid.is_retained(idx) {
            return Err(Error::InvalidGrid(format!(
                "n = {} cannot resolve the |k| <= {n_max} family",
                grid.n()
            )));
        }
        f.coeffs_mut()[idx] = Complex64::new(u * k2.powf(-d / 4.0), 0.0);
        any = true;
    }
    if !any {
        return Err(Error::Configuration(format!("empty family for N = {n_max}")));
    }
    Ok(f)
}
