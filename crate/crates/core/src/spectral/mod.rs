//! Fourier-space kernel layer on `T^d = [0, 2π]^d`.
//!
//! Coefficients use the unitary convention
//! `f̂(k) = (2π)^{-d/2} ∫ f(x) e^{-ik·x} dx`, so that
//! `‖f‖²_{L²} = Σ_k |f̂(k)|²` holds exactly. Arrays are stored in full-spectrum
//! FFT order along every axis (`0, 1, …, n/2, -n/2+1, …, -1`), row-major with
//! the last axis contiguous.

mod fft;

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use fft::FftEngine;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Relative divergence below which a field counts as divergence-free.
pub const DIVERGENCE_TOL: f64 = 1e-10;

/// Uniform periodic grid with `n` points per axis in `d` dimensions.
#[derive(Clone)]
pub struct Grid {
    inner: Arc<GridData>,
}

struct GridData {
    d: usize,
    n: usize,
    len: usize,
    cutoff: usize,
    engine: FftEngine,
    axis_kept: Vec<bool>,
    wavevectors: Vec<[i64; 3]>,
    k2: Vec<f64>,
    kd: Vec<[f64; 3]>,
    neg: Vec<usize>,
    retained: Vec<bool>,
    /// Maximal runs `start..end` of consecutive retained indices.
    runs: Vec<(usize, usize)>,
}

impl Grid {
    pub fn new(d: usize, n: usize) -> Result<Self> {
        if !(d == 2 || d == 3) {
            return Err(Error::InvalidGrid(format!("d must be 2 or 3, got {d}")));
        }
        if n < 8 || n % 2 != 0 {
            return Err(Error::InvalidGrid(format!("n must be even and >= 8, got {n}")));
        }
        // largest c with 3c < n: products of two retained fields never alias
        // back onto a retained mode
        let cutoff = (n - 1) / 3;
        let len = n.pow(d as u32);
        let axis_k: Vec<i64> = (0..n)
            .map(|i| if i <= n / 2 { i as i64 } else { i as i64 - n as i64 })
            .collect();
        let axis_kept: Vec<bool> = axis_k.iter().map(|k| k.unsigned_abs() as usize <= cutoff).collect();

        let mut wavevectors = Vec::with_capacity(len);
        let mut k2 = Vec::with_capacity(len);
        let mut kd = Vec::with_capacity(len);
        let mut neg = Vec::with_capacity(len);
        let mut retained = Vec::with_capacity(len);
        let nyquist = (n / 2) as i64;
        for idx in 0..len {
            let mut rem = idx;
            let mut k = [0i64; 3];
            let mut digits = [0usize; 3];
            for axis in (0..d).rev() {
                digits[axis] = rem % n;
                k[axis] = axis_k[rem % n];
                rem /= n;
            }
            let mut nidx = 0;
            for axis in 0..d {
                nidx = nidx * n + (n - digits[axis]) % n;
            }
            let mut kdv = [0.0; 3];
            for axis in 0..d {
                if k[axis] != nyquist {
                    kdv[axis] = k[axis] as f64;
                }
            }
            wavevectors.push(k);
            k2.push(k.iter().map(|&ki| (ki * ki) as f64).sum());
            kd.push(kdv);
            neg.push(nidx);
            retained.push(digits[..d].iter().all(|&i| axis_kept[i]));
        }

        let mut runs: Vec<(usize, usize)> = Vec::new();
        for (idx, &r) in retained.iter().enumerate() {
            if !r {
                continue;
            }
            match runs.last_mut() {
                Some(last) if last.1 == idx => last.1 = idx + 1,
                _ => runs.push((idx, idx + 1)),
            }
        }

        Ok(Grid {
            inner: Arc::new(GridData {
                d,
                n,
                len,
                cutoff,
                engine: FftEngine::new(n),
                axis_kept,
                wavevectors,
                k2,
                kd,
                neg,
                retained,
                runs,
            }),
        })
    }

    pub fn d(&self) -> usize {
        self.inner.d
    }

    pub fn n(&self) -> usize {
        self.inner.n
    }

    /// Number of grid points (and of Fourier coefficients), `n^d`.
    pub fn len(&self) -> usize {
        self.inner.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Largest retained `|k_i|` under the two-thirds rule.
    pub fn dealias_cutoff(&self) -> usize {
        self.inner.cutoff
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.inner.n as f64
    }

    /// Quadrature weight per grid point, `(2π/n)^d`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.inner.d as i32)
    }

    /// Integer wavevector of a flat index (unused trailing entries are 0).
    pub fn wavevector(&self, idx: usize) -> [i64; 3] {
        self.inner.wavevectors[idx]
    }

    /// `|k|²` including the Nyquist component as `n/2`.
    pub fn k_norm2(&self, idx: usize) -> f64 {
        self.inner.k2[idx]
    }

    /// Wavevector used for derivatives; Nyquist components are zeroed so
    /// that odd derivatives keep real fields real.
    pub fn derivative_wavevector(&self, idx: usize) -> [f64; 3] {
        self.inner.kd[idx]
    }

    /// Flat index of `-k`.
    pub fn neg_index(&self, idx: usize) -> usize {
        self.inner.neg[idx]
    }

    pub fn is_retained(&self, idx: usize) -> bool {
        self.inner.retained[idx]
    }

    /// Retained indices as maximal contiguous ranges.
    pub(crate) fn retained_runs(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        self.inner.runs.iter().map(|&(a, b)| a..b)
    }

    /// Flat index of an integer wavevector, if representable on this grid.
    pub fn index_of(&self, k: &[i64]) -> Option<usize> {
        let n = self.inner.n as i64;
        if k.len() != self.inner.d {
            return None;
        }
        let mut idx = 0usize;
        for &ki in k {
            if ki > n / 2 || ki <= -n / 2 {
                return None;
            }
            idx = idx * self.inner.n + ki.rem_euclid(n) as usize;
        }
        Some(idx)
    }

    /// Physical coordinates of a flat grid index.
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let n = self.inner.n;
        let h = self.spacing();
        let mut rem = idx;
        let mut x = [0.0; 3];
        for axis in (0..self.inner.d).rev() {
            x[axis] = (rem % n) as f64 * h;
            rem /= n;
        }
        x
    }

    fn forward_scale(&self) -> f64 {
        (2.0 * PI).powf(self.inner.d as f64 / 2.0) / self.inner.len as f64
    }

    fn inverse_scale(&self) -> f64 {
        (2.0 * PI).powf(-(self.inner.d as f64) / 2.0)
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.d == other.inner.d && self.inner.n == other.inner.n)
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("d", &self.inner.d)
            .field("n", &self.inner.n)
            .field("dealias_cutoff", &self.inner.cutoff)
            .finish()
    }
}

/// Fourier coefficients of a real scalar field.
#[derive(Clone, Debug)]
pub struct SpectralScalar {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl SpectralScalar {
    pub fn zeros(grid: &Grid) -> Self {
        SpectralScalar {
            grid: grid.clone(),
            coeffs: vec![ZERO; grid.len()],
        }
    }

    pub fn from_coeffs(grid: &Grid, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                found: coeffs.len(),
            });
        }
        Ok(SpectralScalar {
            grid: grid.clone(),
            coeffs,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// Zero-mode coefficient.
    pub fn mean_coeff(&self) -> Complex64 {
        self.coeffs[0]
    }

    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// `max_k |ĉ(k) - conj ĉ(-k)| / max_k |ĉ(k)|`; zero for real fields.
    pub fn hermitian_defect(&self) -> f64 {
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let worst = (0..self.coeffs.len())
            .map(|i| (self.coeffs[i] - self.coeffs[self.grid.neg_index(i)].conj()).norm())
            .fold(0.0, f64::max);
        worst / scale
    }

    /// Replace `ĉ(k)` by `(ĉ(k) + conj ĉ(-k)) / 2`.
    pub fn hermitian_symmetrize(&mut self) {
        for i in 0..self.coeffs.len() {
            let j = self.grid.neg_index(i);
            if i < j {
                let avg = (self.coeffs[i] + self.coeffs[j].conj()) * 0.5;
                self.coeffs[i] = avg;
                self.coeffs[j] = avg.conj();
            } else if i == j {
                self.coeffs[i].im = 0.0;
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.coeffs.iter_mut().for_each(|z| *z *= c);
    }

    /// `self += c * other`.
    pub fn add_scaled(&mut self, c: f64, other: &SpectralScalar) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b * c;
        }
        Ok(())
    }

    /// Multiply every coefficient by a real function of its flat index.
    pub fn apply_multiplier(&mut self, mut m: impl FnMut(usize) -> f64) {
        for (i, z) in self.coeffs.iter_mut().enumerate() {
            *z *= m(i);
        }
    }
}

/// A `d`-component vector field whose components share one grid.
#[derive(Clone, Debug)]
pub struct SpectralVectorField {
    components: Vec<SpectralScalar>,
}

impl SpectralVectorField {
    pub fn zeros(grid: &Grid) -> Self {
        SpectralVectorField {
            components: (0..grid.d()).map(|_| SpectralScalar::zeros(grid)).collect(),
        }
    }

    pub fn from_components(components: Vec<SpectralScalar>) -> Result<Self> {
        let Some(first) = components.first() else {
            return Err(Error::DimensionMismatch { expected: 2, found: 0 });
        };
        let d = first.grid.d();
        if components.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: components.len(),
            });
        }
        if components.iter().any(|c| c.grid != first.grid) {
            return Err(Error::GridMismatch);
        }
        Ok(SpectralVectorField { components })
    }

    pub fn grid(&self) -> &Grid {
        &self.components[0].grid
    }

    pub fn components(&self) -> &[SpectralScalar] {
        &self.components
    }

    pub fn components_mut(&mut self) -> &mut [SpectralScalar] {
        &mut self.components
    }

    pub fn component(&self, i: usize) -> &SpectralScalar {
        &self.components[i]
    }

    pub fn into_components(self) -> Vec<SpectralScalar> {
        self.components
    }

    /// `Σ_j Σ_k |v̂_j(k)|²`, which equals `‖v‖²_{L²}`.
    pub fn norm_sq(&self) -> f64 {
        self.components.iter().map(SpectralScalar::norm_sq).sum()
    }

    /// Real `L²` inner product `∫ a·c dx`.
    pub fn dot(&self, other: &SpectralVectorField) -> f64 {
        self.components
            .iter()
            .zip(&other.components)
            .map(|(a, c)| {
                a.coeffs
                    .iter()
                    .zip(&c.coeffs)
                    .map(|(x, y)| (x.conj() * y).re)
                    .sum::<f64>()
            })
            .sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.components.iter().map(SpectralScalar::max_abs).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().all(SpectralScalar::is_finite)
    }

    pub fn is_zero_mean(&self) -> bool {
        self.components.iter().all(|c| c.coeffs[0] == ZERO)
    }

    pub fn hermitian_defect(&self) -> f64 {
        self.components
            .iter()
            .map(SpectralScalar::hermitian_defect)
            .fold(0.0, f64::max)
    }

    /// `max_k |k · v̂(k)| / max_k |v̂(k)|`.
    pub fn divergence_ratio(&self) -> f64 {
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let grid = self.grid();
        let mut worst: f64 = 0.0;
        for idx in 0..grid.len() {
            let k = grid.derivative_wavevector(idx);
            let mut div = ZERO;
            for (j, comp) in self.components.iter().enumerate() {
                div += comp.coeffs[idx] * k[j];
            }
            worst = worst.max(div.norm());
        }
        worst / scale
    }

    pub fn is_divergence_free(&self) -> bool {
        self.divergence_ratio() <= DIVERGENCE_TOL
    }

    pub fn scale(&mut self, c: f64) {
        self.components.iter_mut().for_each(|comp| comp.scale(c));
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.scale(c);
        out
    }

    pub fn add_scaled(&mut self, c: f64, other: &SpectralVectorField) -> Result<()> {
        if self.components.len() != other.components.len() {
            return Err(Error::GridMismatch);
        }
        for (a, b) in self.components.iter_mut().zip(&other.components) {
            a.add_scaled(c, b)?;
        }
        Ok(())
    }

    /// `self - other`.
    pub fn sub(&self, other: &SpectralVectorField) -> Result<Self> {
        let mut out = self.clone();
        out.add_scaled(-1.0, other)?;
        Ok(out)
    }

    pub fn apply_multiplier(&mut self, mut m: impl FnMut(usize) -> f64) {
        let len = self.grid().len();
        let weights: Vec<f64> = (0..len).map(&mut m).collect();
        for comp in &mut self.components {
            comp.apply_multiplier(|i| weights[i]);
        }
    }

    pub fn hermitian_symmetrize(&mut self) {
        self.components.iter_mut().for_each(SpectralScalar::hermitian_symmetrize);
    }
}

fn check_len(field: &[f64], grid: &Grid) -> Result<()> {
    if field.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            found: field.len(),
        });
    }
    Ok(())
}

/// Rectangle-rule Fourier coefficients of a real field sampled on the grid.
pub fn forward_transform(field: &[f64], grid: &Grid) -> Result<SpectralScalar> {
    check_len(field, grid)?;
    Ok(forward_many(grid, &[field], false).pop().unwrap())
}

/// Physical-space samples of a spectral field (real part of the synthesis).
pub fn inverse_transform(f: &SpectralScalar) -> Vec<f64> {
    inverse_many(&[f]).pop().unwrap()
}

/// Transform several real fields, two per complex FFT. With `dealiased`
/// only retained modes are computed; all others are exactly zero.
pub(crate) fn forward_many(grid: &Grid, fields: &[&[f64]], dealiased: bool) -> Vec<SpectralScalar> {
    forward_by(grid, fields.len(), dealiased, |slot, z, imag| fill_plain(z, imag, fields[slot]))
}

/// Forward transform of `count` real fields; `fill(slot, z, imag)` writes
/// the samples of field `slot` into the real or imaginary parts of `z`.
fn forward_by(
    grid: &Grid,
    count: usize,
    dealiased: bool,
    fill: impl Fn(usize, &mut [Complex64], bool),
) -> Vec<SpectralScalar> {
    let len = grid.len();
    let scale = 0.5 * grid.forward_scale();
    let keep = dealiased.then(|| grid.inner.axis_kept.as_slice());
    let retained = &grid.inner.retained;
    let neg = &grid.inner.neg;
    let mut out = Vec::with_capacity(count);
    for first_slot in (0..count).step_by(2) {
        let paired = first_slot + 1 < count;
        let mut z = vec![ZERO; len];
        fill(first_slot, &mut z, false);
        if paired {
            fill(first_slot + 1, &mut z, true);
        }
        grid.inner.engine.process(grid.d(), &mut z, false, keep);
        let mut first = Vec::with_capacity(len);
        let mut second = Vec::with_capacity(if paired { len } else { 0 });
        for idx in 0..len {
            if dealiased && !retained[idx] {
                first.push(ZERO);
                if paired {
                    second.push(ZERO);
                }
                continue;
            }
            let zk = z[idx];
            let zm = z[neg[idx]].conj();
            first.push((zk + zm) * scale);
            if paired {
                // (Z(k) - conj Z(-k)) / 2i
                let diff = (zk - zm) * scale;
                second.push(Complex64::new(diff.im, -diff.re));
            }
        }
        out.push(SpectralScalar {
            grid: grid.clone(),
            coeffs: first,
        });
        if paired {
            out.push(SpectralScalar {
                grid: grid.clone(),
                coeffs: second,
            });
        }
    }
    out
}

/// Writes `a·b` (or `a·b - c·e` when `minus` is given) into one part of `z`.
fn fill_product(z: &mut [Complex64], imag: bool, a: &[f64], b: &[f64], minus: Option<(&[f64], &[f64])>) {
    match (minus, imag) {
        (None, false) => z.iter_mut().zip(a.iter().zip(b)).for_each(|(z, (x, y))| z.re = x * y),
        (None, true) => z.iter_mut().zip(a.iter().zip(b)).for_each(|(z, (x, y))| z.im = x * y),
        (Some((c, e)), false) => z
            .iter_mut()
            .zip(a.iter().zip(b).zip(c.iter().zip(e)))
            .for_each(|(z, ((x, y), (p, q)))| z.re = x * y - p * q),
        (Some((c, e)), true) => z
            .iter_mut()
            .zip(a.iter().zip(b).zip(c.iter().zip(e)))
            .for_each(|(z, ((x, y), (p, q)))| z.im = x * y - p * q),
    }
}

fn fill_plain(z: &mut [Complex64], imag: bool, a: &[f64]) {
    if imag {
        z.iter_mut().zip(a).for_each(|(z, x)| z.im = *x);
    } else {
        z.iter_mut().zip(a).for_each(|(z, x)| z.re = *x);
    }
}

/// Synthesize several real fields, two per complex FFT.
pub(crate) fn inverse_many(fields: &[&SpectralScalar]) -> Vec<Vec<f64>> {
    let Some(first) = fields.first() else {
        return Vec::new();
    };
    let grid = first.grid.clone();
    let scale = grid.inverse_scale();
    let retained = &grid.inner.retained;
    let band_limited = fields
        .iter()
        .all(|f| f.coeffs.iter().zip(retained).all(|(c, &r)| r || *c == ZERO));
    let keep = band_limited.then(|| grid.inner.axis_kept.as_slice());
    let mut out = Vec::with_capacity(fields.len());
    for pair in fields.chunks(2) {
        let mut z: Vec<Complex64> = match pair {
            [f, g] => f
                .coeffs
                .iter()
                .zip(&g.coeffs)
                .map(|(a, b)| Complex64::new(a.re - b.im, a.im + b.re))
                .collect(),
            [f] => f.coeffs.clone(),
            _ => unreachable!(),
        };
        grid.inner.engine.process(grid.d(), &mut z, true, keep);
        out.push(z.iter().map(|c| c.re * scale).collect());
        if pair.len() == 2 {
            out.push(z.iter().map(|c| c.im * scale).collect());
        }
    }
    out
}

/// Physical samples of every component.
pub fn to_physical(v: &SpectralVectorField) -> Vec<Vec<f64>> {
    let refs: Vec<&SpectralScalar> = v.components.iter().collect();
    inverse_many(&refs)
}

/// Transform physical components back to a vector field.
pub fn from_physical(grid: &Grid, fields: &[Vec<f64>], dealiased: bool) -> Result<SpectralVectorField> {
    if fields.len() != grid.d() {
        return Err(Error::DimensionMismatch {
            expected: grid.d(),
            found: fields.len(),
        });
    }
    for f in fields {
        check_len(f, grid)?;
    }
    let refs: Vec<&[f64]> = fields.iter().map(Vec::as_slice).collect();
    SpectralVectorField::from_components(forward_many(grid, &refs, dealiased))
}

/// `Λ^γ f`, the Fourier multiplier `|k|^γ`.
///
/// Negative orders are Riesz potentials on zero-mean data; the zero mode of
/// the output is 0 unless `γ = 0`.
pub fn fractional_laplacian(f: &SpectralScalar, gamma: f64) -> Result<SpectralScalar> {
    if !gamma.is_finite() {
        return Err(Error::InvalidExponent(format!("gamma = {gamma}")));
    }
    if gamma < 0.0 && f.coeffs[0] != ZERO {
        return Err(Error::NegativeOrderOnNonzeroMean);
    }
    let mut out = f.clone();
    if gamma == 0.0 {
        return Ok(out);
    }
    let grid = f.grid.clone();
    let half = gamma / 2.0;
    out.apply_multiplier(|i| if i == 0 { 0.0 } else { grid.k_norm2(i).powf(half) });
    Ok(out)
}

/// Component-wise `Λ^γ` on a vector field.
pub fn fractional_laplacian_vec(v: &SpectralVectorField, gamma: f64) -> Result<SpectralVectorField> {
    let comps = v
        .components
        .iter()
        .map(|c| fractional_laplacian(c, gamma))
        .collect::<Result<Vec<_>>>()?;
    SpectralVectorField::from_components(comps)
}

/// Leray projection onto divergence-free fields, multiplier `I - k⊗k/|k|²`.
pub fn leray_project(v: &SpectralVectorField) -> Result<SpectralVectorField> {
    if !v.is_zero_mean() {
        return Err(Error::NonzeroMean);
    }
    Ok(leray_unchecked(v))
}

pub(crate) fn leray_unchecked(v: &SpectralVectorField) -> SpectralVectorField {
    let mut out = v.clone();
    leray_in_place(&mut out);
    out
}

pub(crate) fn leray_in_place(v: &mut SpectralVectorField) {
    let grid = v.grid().clone();
    let d = grid.d();
    for idx in 1..grid.len() {
        let k = grid.derivative_wavevector(idx);
        let kk: f64 = k[..d].iter().map(|x| x * x).sum();
        if kk == 0.0 {
            continue;
        }
        let mut kv = ZERO;
        for j in 0..d {
            kv += v.components[j].coeffs[idx] * k[j];
        }
        let kv = kv / kk;
        for j in 0..d {
            v.components[j].coeffs[idx] -= kv * k[j];
        }
    }
    for comp in &mut v.components {
        comp.coeffs[0] = ZERO;
    }
}

/// Two-thirds rule: zero every mode with some `|k_i|` above the cutoff.
pub fn dealias(f: &SpectralScalar) -> SpectralScalar {
    let mut out = f.clone();
    dealias_in_place(&mut out);
    out
}

pub(crate) fn dealias_in_place(f: &mut SpectralScalar) {
    let grid = f.grid.clone();
    for (i, z) in f.coeffs.iter_mut().enumerate() {
        if !grid.is_retained(i) {
            *z = ZERO;
        }
    }
}

pub fn dealias_vec(v: &SpectralVectorField) -> SpectralVectorField {
    SpectralVectorField {
        components: v.components.iter().map(dealias).collect(),
    }
}

/// Spectral divergence `D_j = Σ_i i k_i T̂_ij` of a tensor given entry-wise,
/// optionally Leray-projected and scaled per mode.
fn tensor_divergence(
    grid: &Grid,
    entry: impl Fn(usize, usize) -> Option<(usize, f64)>,
    table: &[SpectralScalar],
    project: bool,
    scale: Option<&[f64]>,
) -> SpectralVectorField {
    let d = grid.d();
    let len = grid.len();
    let terms: Vec<Vec<(usize, usize, f64)>> = (0..d)
        .map(|j| {
            (0..d)
                .filter_map(|i| entry(i, j).map(|(slot, sign)| (i, slot, sign)))
                .collect()
        })
        .collect();
    let mut out: Vec<Vec<Complex64>> = (0..d).map(|_| Vec::with_capacity(len)).collect();
    for idx in 0..len {
        let mut dv = [ZERO; 3];
        if grid.inner.retained[idx] {
            let k = &grid.inner.kd[idx];
            for j in 0..d {
                let mut acc = ZERO;
                for &(i, slot, sign) in &terms[j] {
                    acc += table[slot].coeffs[idx] * (k[i] * sign);
                }
                // multiply by i
                dv[j] = Complex64::new(-acc.im, acc.re);
            }
            if project {
                let kk: f64 = k[..d].iter().map(|x| x * x).sum();
                if kk > 0.0 {
                    let mut kv = ZERO;
                    for j in 0..d {
                        kv += dv[j] * k[j];
                    }
                    let kv = kv / kk;
                    for j in 0..d {
                        dv[j] -= kv * k[j];
                    }
                }
            }
            if let Some(scale) = scale {
                for z in &mut dv[..d] {
                    *z *= scale[idx];
                }
            }
        }
        for j in 0..d {
            out[j].push(dv[j]);
        }
    }
    SpectralVectorField {
        components: out
            .into_iter()
            .map(|coeffs| SpectralScalar {
                grid: grid.clone(),
                coeffs,
            })
            .collect(),
    }
}

/// `Div(a ⊗ c)_j = Σ_i ∂_i (a_i c_j)`, computed pseudo-spectrally and dealiased.
pub fn nonlinear_div_tensor(a: &SpectralVectorField, c: &SpectralVectorField) -> Result<SpectralVectorField> {
    if a.grid() != c.grid() || a.components.len() != c.components.len() {
        return Err(Error::GridMismatch);
    }
    let grid = a.grid().clone();
    let d = grid.d();
    let ap = to_physical(&dealias_vec(a));
    let cp = to_physical(&dealias_vec(c));
    let table = forward_by(&grid, d * d, true, |slot, z, imag| {
        fill_product(z, imag, &ap[slot / d], &cp[slot % d], None)
    });
    Ok(tensor_divergence(&grid, |i, j| Some((i * d + j, 1.0)), &table, false, None))
}

/// Symmetric slot numbering for the `d(d+1)/2` independent entries.
fn symmetric_slots(d: usize) -> (Vec<(usize, usize)>, [[usize; 3]; 3]) {
    let mut pairs = Vec::new();
    let mut slots = [[0usize; 3]; 3];
    for i in 0..d {
        for j in i..d {
            slots[i][j] = pairs.len();
            slots[j][i] = pairs.len();
            pairs.push((i, j));
        }
    }
    (pairs, slots)
}

/// `Div(a ⊗ a)` from physical samples of a band-limited `a`, optionally
/// projected and scaled per mode.
pub(crate) fn div_symmetric_with(
    grid: &Grid,
    ap: &[Vec<f64>],
    project: bool,
    scale: Option<&[f64]>,
) -> SpectralVectorField {
    let (pairs, slots) = symmetric_slots(grid.d());
    let table = forward_by(grid, pairs.len(), true, |slot, z, imag| {
        let (i, j) = pairs[slot];
        fill_product(z, imag, &ap[i], &ap[j], None)
    });
    tensor_divergence(grid, |i, j| Some((slots[i][j], 1.0)), &table, project, scale)
}

/// `Div(a ⊗ c - c ⊗ a)` from physical samples of band-limited `a`, `c`,
/// optionally projected.
pub(crate) fn div_antisymmetric_with(
    grid: &Grid,
    ap: &[Vec<f64>],
    cp: &[Vec<f64>],
    project: bool,
) -> SpectralVectorField {
    let d = grid.d();
    let mut pairs = Vec::new();
    let mut slots = [[0usize; 3]; 3];
    for i in 0..d {
        for j in i + 1..d {
            slots[i][j] = pairs.len();
            slots[j][i] = pairs.len();
            pairs.push((i, j));
        }
    }
    let table = forward_by(grid, pairs.len(), true, |slot, z, imag| {
        let (i, j) = pairs[slot];
        fill_product(z, imag, &ap[i], &cp[j], Some((&cp[i], &ap[j])))
    });
    tensor_divergence(
        grid,
        |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Less => Some((slots[i][j], 1.0)),
            std::cmp::Ordering::Greater => Some((slots[i][j], -1.0)),
        },
        &table,
        project,
        None,
    )
}

/// `Div(a ⊗ a)`, dealiased.
pub fn div_symmetric_product(a: &SpectralVectorField) -> SpectralVectorField {
    let ap = to_physical(&dealias_vec(a));
    div_symmetric_with(a.grid(), &ap, false, None)
}

/// `Div(a ⊗ c - c ⊗ a)`, dealiased.
pub fn div_antisymmetric_product(a: &SpectralVectorField, c: &SpectralVectorField) -> Result<SpectralVectorField> {
    if a.grid() != c.grid() {
        return Err(Error::GridMismatch);
    }
    let ap = to_physical(&dealias_vec(a));
    let cp = to_physical(&dealias_vec(c));
    Ok(div_antisymmetric_with(a.grid(), &ap, &cp, false))
}

#[cfg(test)]
mod tests;
