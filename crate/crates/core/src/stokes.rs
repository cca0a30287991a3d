//! Quasi-static Stokes solve `ν Λ^{2α} u + ∇p̄ = (b·∇)b` for the velocity.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{self, Grid, SpectralScalar, SpectralVectorField, DIVERGENCE_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StokesConfig {
    pub alpha: f64,
    pub nu: f64,
}

impl StokesConfig {
    pub fn new(alpha: f64, nu: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidExponent(format!("alpha must be >= 0, got {alpha}")));
        }
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::Configuration(format!("nu must be > 0, got {nu}")));
        }
        Ok(Self { alpha, nu })
    }
}

impl Default for StokesConfig {
    fn default() -> Self {
        Self { alpha: 1.0, nu: 1.0 }
    }
}

fn check_input(b: &SpectralVectorField) -> Result<()> {
    let ratio = b.divergence_ratio();
    if ratio > DIVERGENCE_TOL {
        return Err(Error::NonDivergenceFreeInput(ratio));
    }
    Ok(())
}

/// `u = ν^{-1} Λ^{-2α} P D` in place, where `D = Div(b⊗b)`.
pub(crate) fn velocity_from_forcing(mut forcing: SpectralVectorField, cfg: StokesConfig) -> SpectralVectorField {
    let grid = forcing.grid().clone();
    spectral::leray_in_place(&mut forcing);
    let inv_nu = 1.0 / cfg.nu;
    let alpha = cfg.alpha;
    forcing.apply_multiplier(|i| {
        if i == 0 {
            0.0
        } else if alpha == 1.0 {
            inv_nu / grid.k_norm2(i)
        } else {
            inv_nu * grid.k_norm2(i).powf(-alpha)
        }
    });
    forcing
}

/// Per-mode factor `ν^{-1} |k|^{-2α}` (0 on the mean).
pub(crate) fn velocity_multiplier(grid: &Grid, cfg: StokesConfig) -> Vec<f64> {
    (0..grid.len())
        .map(|i| if i == 0 { 0.0 } else { grid.k_norm2(i).powf(-cfg.alpha) / cfg.nu })
        .collect()
}

/// Velocity from physical samples of a band-limited `b`, given the
/// precomputed [`velocity_multiplier`].
pub(crate) fn velocity_from_physical(grid: &Grid, bp: &[Vec<f64>], multiplier: &[f64]) -> SpectralVectorField {
    spectral::div_symmetric_with(grid, bp, true, Some(multiplier))
}

/// The zero-mean, divergence-free velocity driven by the Lorentz force of `b`.
pub fn solve_velocity(b: &SpectralVectorField, cfg: StokesConfig) -> Result<SpectralVectorField> {
    check_input(b)?;
    Ok(velocity_from_forcing(spectral::div_symmetric_product(b), cfg))
}

/// Zero-mean total pressure with `∇p̄ = (I - P) Div(b⊗b)`.
pub fn recover_pressure(b: &SpectralVectorField, cfg: StokesConfig) -> Result<SpectralScalar> {
    check_input(b)?;
    let _ = cfg;
    let forcing = spectral::div_symmetric_product(b);
    let grid = b.grid().clone();
    let d = grid.d();
    let mut p = SpectralScalar::zeros(&grid);
    for (idx, out) in p.coeffs_mut().iter_mut().enumerate().skip(1) {
        let k = grid.derivative_wavevector(idx);
        let kk: f64 = k[..d].iter().map(|x| x * x).sum();
        if kk == 0.0 {
            continue;
        }
        let mut kd = Complex64::new(0.0, 0.0);
        for j in 0..d {
            kd += forcing.component(j).coeffs()[idx] * k[j];
        }
        // -i (k·D̂) / |k|²
        *out = Complex64::new(kd.im, -kd.re) / kk;
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{make_initial, norm, InitialCondition, NormRequest};
    use std::collections::HashMap;

    fn random_b(d: usize, n: usize, seed: u64, k_max: f64) -> SpectralVectorField {
        let grid = Grid::new(d, n).unwrap();
        let ic = InitialCondition::RandomBandLimited {
            k_min: 1.0,
            k_max,
            target_norm: 1.0,
            s: 0.0,
        };
        make_initial(&ic, &grid, seed).unwrap()
    }

    fn shear(n: usize) -> SpectralVectorField {
        let grid = Grid::new(2, n).unwrap();
        let ic = InitialCondition::SingleMode {
            k: vec![0, 1],
            amplitude: 1.0,
            polarization: vec![1.0, 0.0],
        };
        make_initial(&ic, &grid, 0).unwrap()
    }

    #[test]
    fn zero_field_gives_zero_velocity_and_pressure() {
        let grid = Grid::new(3, 8).unwrap();
        let b = SpectralVectorField::zeros(&grid);
        let cfg = StokesConfig::default();
        assert_eq!(solve_velocity(&b, cfg).unwrap().max_abs(), 0.0);
        assert_eq!(recover_pressure(&b, cfg).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn shear_drives_no_flow() {
        let b = shear(16);
        let cfg = StokesConfig::new(1.0, 1.0).unwrap();
        assert!(solve_velocity(&b, cfg).unwrap().max_abs() < 1e-15);
        // (b·∇)b = 0 here, so the pressure gradient carries the full tensor divergence
        let p = recover_pressure(&b, cfg).unwrap();
        let forcing = spectral::div_symmetric_product(&b);
        let grid = b.grid().clone();
        for idx in 0..grid.len() {
            let k = grid.derivative_wavevector(idx);
            for j in 0..2 {
                let grad = Complex64::new(0.0, k[j]) * p.coeffs()[idx];
                assert!((grad - forcing.component(j).coeffs()[idx]).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn divergent_input_rejected() {
        let grid = Grid::new(2, 16).unwrap();
        let mut b = SpectralVectorField::zeros(&grid);
        let idx = grid.index_of(&[1, 0]).unwrap();
        let nidx = grid.neg_index(idx);
        b.components_mut()[0].coeffs_mut()[idx] = Complex64::new(0.0, -1.0);
        b.components_mut()[0].coeffs_mut()[nidx] = Complex64::new(0.0, 1.0);
        let cfg = StokesConfig::default();
        assert!(matches!(solve_velocity(&b, cfg), Err(Error::NonDivergenceFreeInput(_))));
        assert!(matches!(recover_pressure(&b, cfg), Err(Error::NonDivergenceFreeInput(_))));
    }

    #[test]
    fn config_validation() {
        assert!(StokesConfig::new(1.0, 0.0).is_err());
        assert!(StokesConfig::new(-0.5, 1.0).is_err());
        assert!(StokesConfig::new(0.0, 2.0).is_ok());
    }

    type Modes = HashMap<Vec<i64>, Vec<Complex64>>;

    fn sparse_modes(b: &SpectralVectorField) -> Modes {
        let grid = b.grid();
        let d = grid.d();
        let mut out = Modes::new();
        for idx in 0..grid.len() {
            let v: Vec<Complex64> = (0..d).map(|j| b.component(j).coeffs()[idx]).collect();
            if v.iter().any(|z| z.norm() > 1e-14) {
                out.insert(grid.wavevector(idx)[..d].to_vec(), v);
            }
        }
        out
    }

    /// `ν^{-1} |k|^{-2α} P (Div b⊗b)^(k)` by explicit convolution over the
    /// nonzero modes, keeping only outputs inside the dealiased band.
    fn brute_force_velocity(b: &SpectralVectorField, cfg: StokesConfig) -> Modes {
        let grid = b.grid();
        let d = grid.d();
        let cutoff = grid.dealias_cutoff() as i64;
        let modes = sparse_modes(b);
        let unit = (2.0 * std::f64::consts::PI).powf(-(d as f64) / 2.0);
        let mut div = Modes::new();
        for (p, bp) in &modes {
            for (q, bq) in &modes {
                let k: Vec<i64> = p.iter().zip(q).map(|(a, c)| a + c).collect();
                if k.iter().any(|ki| ki.abs() > cutoff) || k.iter().all(|&ki| ki == 0) {
                    continue;
                }
                let entry = div.entry(k.clone()).or_insert_with(|| vec![Complex64::new(0.0, 0.0); d]);
                for j in 0..d {
                    for i in 0..d {
                        entry[j] += Complex64::new(0.0, k[i] as f64) * bp[i] * bq[j] * unit;
                    }
                }
            }
        }
        let mut u = Modes::new();
        for (k, dv) in div {
            let kf: Vec<f64> = k.iter().map(|&x| x as f64).collect();
            let kk: f64 = kf.iter().map(|x| x * x).sum();
            let kdot: Complex64 = (0..d).map(|j| dv[j] * kf[j]).sum();
            let scale = kk.powf(-cfg.alpha) / cfg.nu;
            let proj: Vec<Complex64> = (0..d).map(|j| (dv[j] - kdot * kf[j] / kk) * scale).collect();
            u.insert(k, proj);
        }
        u
    }

    fn compare_with_brute_force(b: &SpectralVectorField, cfg: StokesConfig) -> f64 {
        let u = solve_velocity(b, cfg).unwrap();
        let oracle = brute_force_velocity(b, cfg);
        let grid = b.grid();
        let d = grid.d();
        let mut err: f64 = 0.0;
        for idx in 0..grid.len() {
            let k = grid.wavevector(idx)[..d].to_vec();
            for j in 0..d {
                let expect = oracle.get(&k).map_or(Complex64::new(0.0, 0.0), |v| v[j]);
                err = err.max((u.component(j).coeffs()[idx] - expect).norm());
            }
        }
        err
    }

    #[test]
    fn abc_velocity_matches_convolution_and_vanishes() {
        let grid = Grid::new(3, 16).unwrap();
        let b = make_initial(&InitialCondition::Abc { a: 1.0, b: 1.0, c: 1.0 }, &grid, 0).unwrap();
        let cfg = StokesConfig::new(1.0, 1.0).unwrap();
        assert!(compare_with_brute_force(&b, cfg) < 1e-13);
        assert!(solve_velocity(&b, cfg).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn random_velocity_matches_convolution() {
        for (d, n) in [(2, 16), (3, 8)] {
            let b = random_b(d, n, 11, 2.5);
            let cfg = StokesConfig::new(0.7, 1.3).unwrap();
            let scale = solve_velocity(&b, cfg).unwrap().max_abs();
            assert!(compare_with_brute_force(&b, cfg) < 1e-12 * scale.max(1.0));
        }
    }

    #[test]
    fn momentum_balance_residual() {
        let b = random_b(3, 16, 5, 4.0);
        let cfg = StokesConfig::new(1.5, 0.8).unwrap();
        let u = solve_velocity(&b, cfg).unwrap();
        let p = recover_pressure(&b, cfg).unwrap();
        let forcing = spectral::div_symmetric_product(&b);
        let grid = b.grid().clone();
        let scale = forcing.max_abs();
        let mut worst: f64 = 0.0;
        for idx in 1..grid.len() {
            let k = grid.derivative_wavevector(idx);
            let lap = cfg.nu * grid.k_norm2(idx).powf(cfg.alpha);
            for j in 0..3 {
                let r = u.component(j).coeffs()[idx] * lap + Complex64::new(0.0, k[j]) * p.coeffs()[idx]
                    - forcing.component(j).coeffs()[idx];
                worst = worst.max(r.norm());
            }
        }
        assert!(worst <= 1e-10 * scale, "{worst} vs {scale}");
        assert!(u.is_zero_mean() && u.is_divergence_free());
        assert_eq!(p.mean_coeff(), Complex64::new(0.0, 0.0));
    }

    /// `∫ (b·∇)b · u` with the advective form evaluated on the grid.
    fn advective_work(b: &SpectralVectorField, u: &SpectralVectorField) -> f64 {
        let grid = b.grid().clone();
        let d = grid.d();
        let bp = spectral::to_physical(b);
        let up = spectral::to_physical(u);
        let mut grads = Vec::new();
        for j in 0..d {
            for i in 0..d {
                let coeffs: Vec<Complex64> = b
                    .component(j)
                    .coeffs()
                    .iter()
                    .enumerate()
                    .map(|(idx, z)| z * Complex64::new(0.0, grid.derivative_wavevector(idx)[i]))
                    .collect();
                let g = SpectralScalar::from_coeffs(&grid, coeffs).unwrap();
                grads.push(spectral::inverse_transform(&g));
            }
        }
        let mut total = 0.0;
        for x in 0..grid.len() {
            for j in 0..d {
                let adv: f64 = (0..d).map(|i| bp[i][x] * grads[j * d + i][x]).sum();
                total += adv * up[j][x];
            }
        }
        total * grid.cell_volume()
    }

    #[test]
    fn energy_duality() {
        for (d, n, alpha) in [(2, 32, 1.0), (2, 32, 2.0), (3, 16, 0.6)] {
            let b = random_b(d, n, 17, 4.0);
            let cfg = StokesConfig::new(alpha, 1.7).unwrap();
            let u = solve_velocity(&b, cfg).unwrap();
            let dissipation = cfg.nu * norm(&u, NormRequest::HomSobolev(alpha)).unwrap().powi(2);
            let work = advective_work(&b, &u);
            assert!((dissipation - work).abs() <= 1e-9 * dissipation, "{dissipation} vs {work}");
        }
    }

    #[test]
    fn velocity_is_quadratic_in_b() {
        let b = random_b(2, 32, 2, 5.0);
        let cfg = StokesConfig::default();
        let u = solve_velocity(&b, cfg).unwrap();
        let u3 = solve_velocity(&b.scaled(3.0), cfg).unwrap();
        let diff = u3.sub(&u.scaled(9.0)).unwrap();
        assert!(diff.norm_sq().sqrt() <= 1e-13 * u3.norm_sq().sqrt());
    }

    #[test]
    fn high_regularity_velocity_bound_is_stable() {
        // ‖u‖_{Ḣ^{s+α}} / ‖b‖²_{H^s} across an ensemble at fixed (d, α, s)
        let (alpha, s) = (1.0, 2.0);
        let cfg = StokesConfig::new(alpha, 1.0).unwrap();
        let mut ratios = Vec::new();
        for seed in 0..12 {
            let k_max = 2.0 + (seed % 4) as f64;
            let b = random_b(2, 32, seed, k_max);
            let u = solve_velocity(&b, cfg).unwrap();
            let top = norm(&u, NormRequest::HomSobolev(s + alpha)).unwrap();
            let bottom = norm(&b, NormRequest::Sobolev(s)).unwrap().powi(2);
            ratios.push(top / bottom);
        }
        let max = ratios.iter().cloned().fold(0.0, f64::max);
        let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min > 0.0 && max / min <= 10.0, "{ratios:?}");
    }
}
