use super::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_band_limited(grid: &Grid, kmax: i64, seed: u64) -> SpectralScalar {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = SpectralScalar::zeros(grid);
    for idx in 0..grid.len() {
        let k = grid.wavevector(idx);
        if k.iter().all(|ki| ki.abs() <= kmax) {
            f.coeffs_mut()[idx] = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
    }
    f.hermitian_symmetrize();
    f
}

fn zero_mean(mut f: SpectralScalar) -> SpectralScalar {
    f.coeffs_mut()[0] = ZERO;
    f
}

fn random_vector(grid: &Grid, kmax: i64, seed: u64) -> SpectralVectorField {
    let comps = (0..grid.d())
        .map(|j| zero_mean(random_band_limited(grid, kmax, seed * 31 + j as u64)))
        .collect();
    SpectralVectorField::from_components(comps).unwrap()
}

/// Direct O(n^{2d}) discrete Fourier sum with the unitary normalization.
fn direct_dft(grid: &Grid, field: &[f64]) -> Vec<Complex64> {
    let d = grid.d();
    let scale = (2.0 * PI).powf(d as f64 / 2.0) / grid.len() as f64;
    (0..grid.len())
        .map(|kidx| {
            let k = grid.wavevector(kidx);
            let mut acc = ZERO;
            for (xidx, &v) in field.iter().enumerate() {
                let x = grid.point(xidx);
                let phase: f64 = (0..d).map(|a| k[a] as f64 * x[a]).sum();
                acc += Complex64::from_polar(v, -phase);
            }
            acc * scale
        })
        .collect()
}

fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

#[test]
fn grid_validation() {
    assert!(Grid::new(1, 16).is_err());
    assert!(Grid::new(4, 16).is_err());
    assert!(Grid::new(2, 6).is_err());
    assert!(Grid::new(2, 15).is_err());
    let g = Grid::new(3, 8).unwrap();
    assert_eq!(g.len(), 512);
    assert_eq!(g.dealias_cutoff(), 2);
    assert_eq!(Grid::new(2, 64).unwrap().dealias_cutoff(), 21);
    assert_eq!(Grid::new(2, 48).unwrap().dealias_cutoff(), 15);
    let idx = g.index_of(&[1, -2, 3]).unwrap();
    assert_eq!(g.wavevector(idx), [1, -2, 3]);
    assert_eq!(g.wavevector(g.neg_index(idx)), [-1, 2, -3]);
}

#[test]
fn cosine_has_two_modes() {
    let grid = Grid::new(2, 16).unwrap();
    let f: Vec<f64> = (0..grid.len()).map(|i| grid.point(i)[0].cos()).collect();
    let fh = forward_transform(&f, &grid).unwrap();
    let plus = grid.index_of(&[1, 0]).unwrap();
    let minus = grid.index_of(&[-1, 0]).unwrap();
    for (i, c) in fh.coeffs().iter().enumerate() {
        let expected = if i == plus || i == minus { PI } else { 0.0 };
        assert!((c - Complex64::new(expected, 0.0)).norm() < 1e-14, "mode {i}: {c}");
    }
}

#[test]
fn zero_field_transforms_to_zero() {
    let grid = Grid::new(3, 8).unwrap();
    let fh = forward_transform(&vec![0.0; grid.len()], &grid).unwrap();
    assert!(fh.coeffs().iter().all(|c| *c == ZERO));
    assert!(forward_transform(&[0.0; 10], &grid).is_err());
}

#[test]
fn forward_matches_direct_sum() {
    for d in [2, 3] {
        let grid = Grid::new(d, 8).unwrap();
        let f = inverse_transform(&random_band_limited(&grid, 3, 11 + d as u64));
        let fast = forward_transform(&f, &grid).unwrap();
        let slow = direct_dft(&grid, &f);
        let scale = fast.max_abs();
        assert!(max_diff(fast.coeffs(), &slow) <= 1e-12 * scale);
        let back = inverse_transform(&fast);
        let err = back.iter().zip(&f).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let fmax = f.iter().map(|x| x.abs()).fold(0.0, f64::max);
        assert!(err <= 1e-12 * fmax);
    }
}

#[test]
fn paired_transforms_match_single() {
    let grid = Grid::new(3, 12).unwrap();
    let v = random_vector(&grid, 5, 3);
    let phys = to_physical(&v);
    for (j, comp) in v.components().iter().enumerate() {
        let single = inverse_transform(comp);
        let err = single.iter().zip(&phys[j]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-13);
    }
    let back = from_physical(&grid, &phys, false).unwrap();
    for j in 0..3 {
        assert!(max_diff(back.component(j).coeffs(), v.component(j).coeffs()) < 1e-12);
    }
}

#[test]
fn pruned_transforms_are_bitwise_identical() {
    let grid = Grid::new(3, 16).unwrap();
    let f = random_band_limited(&grid, grid.dealias_cutoff() as i64, 5);
    // band-limited input takes the pruned path
    let pruned = inverse_transform(&f);
    let mut z = f.coeffs().to_vec();
    grid.inner.engine.process(3, &mut z, true, None);
    let scale = grid.inverse_scale();
    for (a, b) in pruned.iter().zip(&z) {
        assert_eq!(a.to_bits(), (b.re * scale).to_bits());
    }
    let full = forward_many(&grid, &[&pruned], false).pop().unwrap();
    let cut = forward_many(&grid, &[&pruned], true).pop().unwrap();
    assert_eq!(dealias(&full).coeffs(), cut.coeffs());
}

#[test]
fn parseval_identity() {
    let grid = Grid::new(2, 16).unwrap();
    let f = random_band_limited(&grid, 7, 8);
    let phys = inverse_transform(&f);
    let quad: f64 = phys.iter().map(|x| x * x).sum::<f64>() * grid.cell_volume();
    assert!((quad - f.norm_sq()).abs() <= 1e-10 * quad);
}

#[test]
fn fractional_laplacian_eigenmode() {
    let grid = Grid::new(2, 16).unwrap();
    let mut f = SpectralScalar::zeros(&grid);
    let idx = grid.index_of(&[1, 1]).unwrap();
    f.coeffs_mut()[idx] = Complex64::new(0.3, -0.2);
    let g = fractional_laplacian(&f, 1.0).unwrap();
    assert!((g.coeffs()[idx] - f.coeffs()[idx] * 2f64.sqrt()).norm() < 1e-15);
    let id = fractional_laplacian(&f, 0.0).unwrap();
    assert_eq!(id.coeffs(), f.coeffs());
}

#[test]
fn fractional_laplacian_zero_mode_rules() {
    let grid = Grid::new(2, 8).unwrap();
    let mut f = SpectralScalar::zeros(&grid);
    f.coeffs_mut()[0] = Complex64::new(1.0, 0.0);
    assert_eq!(fractional_laplacian(&f, 0.0).unwrap().coeffs()[0], Complex64::new(1.0, 0.0));
    assert_eq!(fractional_laplacian(&f, 0.5).unwrap().coeffs()[0], ZERO);
    assert!(matches!(
        fractional_laplacian(&f, -0.5),
        Err(Error::NegativeOrderOnNonzeroMean)
    ));
}

#[test]
fn riesz_potential_inverts_laplacian() {
    let grid = Grid::new(3, 8).unwrap();
    let f = zero_mean(random_band_limited(&grid, 4, 21));
    let g = fractional_laplacian(&fractional_laplacian(&f, -0.7).unwrap(), 0.7).unwrap();
    assert!(max_diff(g.coeffs(), f.coeffs()) <= 1e-12 * f.max_abs());
}

#[test]
fn leray_annihilates_gradients() {
    let grid = Grid::new(2, 16).unwrap();
    // ∇ sin(x1 + x2) = (cos(x1 + x2), cos(x1 + x2))
    let c: Vec<f64> = (0..grid.len())
        .map(|i| {
            let x = grid.point(i);
            (x[0] + x[1]).cos()
        })
        .collect();
    let mut v = from_physical(&grid, &[c.clone(), c], false).unwrap();
    for comp in v.components_mut() {
        comp.coeffs_mut()[0] = ZERO;
    }
    let p = leray_project(&v).unwrap();
    assert!(p.max_abs() < 1e-14);
}

#[test]
fn leray_fixes_divergence_free_fields() {
    let grid = Grid::new(3, 8).unwrap();
    let v = leray_project(&random_vector(&grid, 3, 4)).unwrap();
    let w = leray_project(&v).unwrap();
    for j in 0..3 {
        assert!(max_diff(v.component(j).coeffs(), w.component(j).coeffs()) < 1e-14 * v.max_abs());
    }
}

#[test]
fn leray_output_is_divergence_free_per_mode() {
    let grid = Grid::new(3, 8).unwrap();
    let p = leray_project(&random_vector(&grid, 4, 9)).unwrap();
    for idx in 0..grid.len() {
        let k = grid.derivative_wavevector(idx);
        let div: Complex64 = (0..3).map(|j| p.component(j).coeffs()[idx] * k[j]).sum();
        assert!(div.norm() < 1e-14);
    }
    assert!(p.is_divergence_free());
}

#[test]
fn leray_rejects_nonzero_mean() {
    let grid = Grid::new(2, 8).unwrap();
    let mut v = SpectralVectorField::zeros(&grid);
    v.components_mut()[0].coeffs_mut()[0] = Complex64::new(1.0, 0.0);
    assert!(matches!(leray_project(&v), Err(Error::NonzeroMean)));
}

#[test]
fn dealias_rules() {
    let grid = Grid::new(2, 16).unwrap();
    let f = random_band_limited(&grid, grid.dealias_cutoff() as i64, 2);
    assert_eq!(dealias(&f).coeffs(), f.coeffs());
    let mut g = SpectralScalar::zeros(&grid);
    let idx = grid.index_of(&[8, 0]).unwrap();
    g.coeffs_mut()[idx] = Complex64::new(1.0, 0.0);
    assert!(dealias(&g).coeffs().iter().all(|c| *c == ZERO));
}

/// Continuum product of two trigonometric polynomials by direct convolution
/// of their coefficients, restricted to retained modes.
fn convolution_product(grid: &Grid, f: &SpectralScalar, g: &SpectralScalar) -> Vec<Complex64> {
    let d = grid.d();
    let norm = (2.0 * PI).powf(-(d as f64) / 2.0);
    let support: Vec<usize> = (0..grid.len()).filter(|&i| f.coeffs()[i] != ZERO).collect();
    let mut out = vec![ZERO; grid.len()];
    for kidx in (0..grid.len()).filter(|&i| grid.is_retained(i)) {
        let k = grid.wavevector(kidx);
        let mut acc = ZERO;
        for &m in &support {
            let km = grid.wavevector(m);
            let diff: Vec<i64> = (0..d).map(|a| k[a] - km[a]).collect();
            if let Some(j) = grid.index_of(&diff) {
                if grid.wavevector(j)[..d] == diff[..] {
                    acc += f.coeffs()[m] * g.coeffs()[j];
                }
            }
        }
        out[kidx] = acc * norm;
    }
    out
}

#[test]
fn dealiased_product_matches_continuum_projection() {
    let grid = Grid::new(2, 16).unwrap();
    let c = grid.dealias_cutoff() as i64;
    let f = random_band_limited(&grid, c, 41);
    let g = random_band_limited(&grid, c, 42);
    let fp = inverse_transform(&f);
    let gp = inverse_transform(&g);
    let prod: Vec<f64> = fp.iter().zip(&gp).map(|(a, b)| a * b).collect();
    let spectral = dealias(&forward_transform(&prod, &grid).unwrap());
    let oracle = convolution_product(&grid, &f, &g);
    assert!(max_diff(spectral.coeffs(), &oracle) < 1e-12 * spectral.max_abs());
}

fn single_mode_vector(grid: &Grid, amps: &[(usize, [i64; 2], Complex64)]) -> SpectralVectorField {
    let mut v = SpectralVectorField::zeros(grid);
    for &(comp, k, a) in amps {
        let idx = grid.index_of(&k).unwrap();
        v.components_mut()[comp].coeffs_mut()[idx] += a;
        let nidx = grid.neg_index(idx);
        v.components_mut()[comp].coeffs_mut()[nidx] += a.conj();
    }
    v
}

#[test]
fn shear_nonlinearity_vanishes() {
    let grid = Grid::new(2, 16).unwrap();
    let a: Vec<f64> = (0..grid.len()).map(|i| grid.point(i)[1].sin()).collect();
    let a = from_physical(&grid, &[a, vec![0.0; grid.len()]], false).unwrap();
    assert_eq!(nonlinear_div_tensor(&SpectralVectorField::zeros(&grid), &a).unwrap().max_abs(), 0.0);
    let out = nonlinear_div_tensor(&a, &a).unwrap();
    assert!(out.max_abs() < 1e-14);
}

#[test]
fn two_mode_divergence_by_hand() {
    // a = (cos x2, 0), c = (0, cos x1):
    // a ⊗ c has the single entry a1 c2 = cos x2 cos x1 at (i=1, j=2), so
    // Div(a⊗c)_2 = ∂1(cos x1 cos x2) = -sin x1 cos x2, Div(a⊗c)_1 = 0.
    let grid = Grid::new(2, 16).unwrap();
    let h = Complex64::new(PI, 0.0);
    let a = single_mode_vector(&grid, &[(0, [0, 1], h)]);
    let c = single_mode_vector(&grid, &[(1, [1, 0], h)]);
    let out = nonlinear_div_tensor(&a, &c).unwrap();
    let phys = to_physical(&out);
    for i in 0..grid.len() {
        let x = grid.point(i);
        assert!(phys[0][i].abs() < 1e-13);
        assert!((phys[1][i] + x[0].sin() * x[1].cos()).abs() < 1e-13);
    }
}

#[test]
fn specialised_products_match_general() {
    let grid = Grid::new(3, 12).unwrap();
    let a = random_vector(&grid, 4, 70);
    let c = random_vector(&grid, 4, 71);
    let sym = div_symmetric_product(&a);
    let gen = nonlinear_div_tensor(&a, &a).unwrap();
    let anti = div_antisymmetric_product(&a, &c).unwrap();
    let ac = nonlinear_div_tensor(&a, &c).unwrap();
    let ca = nonlinear_div_tensor(&c, &a).unwrap();
    let gen_anti = ac.sub(&ca).unwrap();
    for j in 0..3 {
        assert!(max_diff(sym.component(j).coeffs(), gen.component(j).coeffs()) < 1e-12 * gen.max_abs());
        assert!(max_diff(anti.component(j).coeffs(), gen_anti.component(j).coeffs()) < 1e-12 * gen_anti.max_abs());
    }
    // divergence of an antisymmetric tensor is divergence-free
    assert!(anti.divergence_ratio() < 1e-13);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn leray_is_an_l2_contraction(seed in 0u64..1000) {
        let grid = Grid::new(2, 8).unwrap();
        let v = random_vector(&grid, 3, seed);
        let p = leray_project(&v).unwrap();
        prop_assert!(p.norm_sq() <= v.norm_sq() * (1.0 + 1e-14));
        let pp = leray_project(&p).unwrap();
        prop_assert!((pp.norm_sq() - p.norm_sq()).abs() <= 1e-13 * p.norm_sq());
    }

    #[test]
    fn multipliers_compose(seed in 0u64..1000, g1 in -1.5f64..1.5, g2 in -1.5f64..1.5) {
        let grid = Grid::new(2, 8).unwrap();
        let f = zero_mean(random_band_limited(&grid, 3, seed));
        let a = fractional_laplacian(&fractional_laplacian(&f, g1).unwrap(), g2).unwrap();
        let b = fractional_laplacian(&f, g1 + g2).unwrap();
        prop_assert!(max_diff(a.coeffs(), b.coeffs()) <= 1e-12 * b.max_abs().max(f.max_abs()));
    }

    #[test]
    fn operations_preserve_hermitian_symmetry(seed in 0u64..1000) {
        let grid = Grid::new(2, 12).unwrap();
        let a = random_vector(&grid, 4, seed);
        let c = random_vector(&grid, 4, seed + 1);
        prop_assert!(leray_project(&a).unwrap().hermitian_defect() < 1e-14);
        prop_assert!(fractional_laplacian_vec(&a, 0.6).unwrap().hermitian_defect() < 1e-14);
        prop_assert!(nonlinear_div_tensor(&a, &c).unwrap().hermitian_defect() < 1e-11);
        let phys = to_physical(&a);
        let back = from_physical(&grid, &phys, false).unwrap();
        prop_assert!(back.hermitian_defect() < 1e-12);
    }
}
