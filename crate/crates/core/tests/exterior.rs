use mixdim::exterior::*;
use mixdim::interface::{FourierFn, MultiscaleDecomposition};
use mixdim::poly::Poly;
use mixdim::tree_dtn::{coercivity_check, OperatorKind};
use mixdim::Error;
use num_complex::Complex64;
use proptest::prelude::*;
use std::collections::BTreeMap;
use std::f64::consts::PI;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// φ(r) = (r − R)²(r_max − r)² on [R, r_max].
fn bump(radius: f64, r_max: f64) -> Poly {
    let a = Poly::new(vec![radius * radius, -2.0 * radius, 1.0]);
    let b = Poly::new(vec![r_max * r_max, -2.0 * r_max, 1.0]);
    &a * &b
}

/// Mode-k Laplacian of φ(r)e^{ikθ}: Σ (i² − k²) a_i r^{i−2}.
fn mode_laplacian(phi: &Poly, k: i64) -> RadialProfile {
    let kk = (k * k) as f64;
    RadialProfile {
        min_power: -2,
        coeffs: phi.coeffs.iter().enumerate().map(|(i, a)| c(((i * i) as f64 - kk) * a, 0.0)).collect(),
    }
}

#[test]
fn dtn_symbol_values() {
    let s = dtn_symbol(1.0, 8).unwrap();
    assert_eq!(s.value(0), 0.0);
    assert_eq!(s.value(3), -3.0);
    assert_eq!(s.value(-3), -3.0);
    let s = dtn_symbol(2.5, 64).unwrap();
    for k in 1..=64i64 {
        assert!(-s.value(k) >= (1.0 + (k * k) as f64).sqrt() / (2.5 * 2f64.sqrt()));
    }
    assert!(dtn_symbol(0.0, 4).is_err());
}

#[test]
fn layer_symbol_identities() {
    let l = layer_symbols(1.0, 2.0, 16).unwrap();
    let d = dtn_symbol(1.0, 16).unwrap();
    assert_eq!(l.single.value(2), 0.25);
    assert_eq!(l.single.value(2) * d.value(2), -0.5);
    assert_eq!(l.double_t.value(0), -1.0);
    assert!((l.single.value(0) - 2f64.ln()).abs() < 1e-15);
    assert_eq!(l.hypersingular.value(3), 1.5);
    assert!(matches!(layer_symbols(1.0, 1.0, 4), Err(Error::ScaleEqualsRadius(_))));
    assert!(hypersingular_crosscheck(1.0, 2.0, 64).unwrap() < 1e-12);
}

#[test]
fn single_layer_quadrature_oracle() {
    let l = layer_symbols(1.3, 2.6, 8).unwrap();
    for k in -8..=8i64 {
        let q = single_layer_quadrature(1.3, 2.6, k, 2048);
        assert!((q - l.single.value(k)).abs() < 1e-6, "k = {k}");
    }
}

#[test]
fn boundary_equation_crosscheck() {
    let a = bie_dtn_crosscheck(1.0, 2.0, 64, false).unwrap();
    let b = bie_dtn_crosscheck(1.0, 3.0, 64, false).unwrap();
    assert!(a <= 1e-12);
    assert_eq!(a, b);
    assert!((bie_dtn_crosscheck(1.0, 2.0, 64, true).unwrap() - 1.0).abs() < 1e-15);
}

#[test]
fn harmonic_exterior_modes() {
    let radius = 1.5;
    let g = FourierFn::mode(3, c(0.7, -0.2), 3);
    let v = solve_exterior_dirichlet(&g, &RadialSource::none(), radius, Mode0Radiation::Bounded).unwrap();
    for r in [1.5, 2.0, 7.0] {
        assert!((v.mode_value(3, r) - g.get(3) * (radius / r).powi(3)).norm() < 1e-15);
    }
    let d = gamma1_exterior(&v);
    assert!((d.get(3) - g.get(3) * (-3.0 / radius)).norm() < 1e-14);

    let one = FourierFn::mode(0, c(1.0, 0.0), 0);
    let v = solve_exterior_dirichlet(&one, &RadialSource::none(), radius, Mode0Radiation::Bounded).unwrap();
    assert!((v.value(5.0, 0.3) - c(1.0, 0.0)).norm() < 1e-15);
    assert_eq!(gamma1_exterior(&v).get(0), c(0.0, 0.0));
}

#[test]
fn neumann_trace_matches_symbol() {
    let mut g = FourierFn::zero(10);
    for k in -10..=10i64 {
        g.set(k, c(1.0 / (1.0 + k.abs() as f64), 0.1 * k as f64));
    }
    let v = solve_exterior_dirichlet(&g, &RadialSource::none(), 0.8, Mode0Radiation::Bounded).unwrap();
    let lhs = gamma1_exterior(&v);
    let rhs = dtn_symbol(0.8, 10).unwrap().apply(&g);
    for k in -10..=10i64 {
        assert!((lhs.get(k) - rhs.get(k)).norm() < 1e-13);
    }
}

#[test]
fn manufactured_sources_are_recovered() {
    let (radius, r_max) = (1.0, 2.0);
    let phi = bump(radius, r_max);
    for k in [0i64, 1, 4] {
        let g = FourierFn::mode(k, c(0.3, 0.4), k.unsigned_abs() as usize);
        let mut modes = BTreeMap::new();
        modes.insert(k, mode_laplacian(&phi, k).scale(c(-1.0, 0.0)));
        let source = RadialSource { r_max, modes };
        let v = solve_exterior_dirichlet(&g, &source, radius, Mode0Radiation::Bounded).unwrap();
        for r in [1.0, 1.2, 1.5, 1.9, 2.0, 3.0, 10.0] {
            let n = k.unsigned_abs() as i32;
            let expected = g.get(k) * (radius / r).powi(n) + if r <= r_max { phi.eval(r) } else { 0.0 };
            assert!((v.mode_value(k, r) - expected).norm() < 1e-8, "k = {k}, r = {r}");
        }
        let slope = phi.derivative().eval(radius);
        let dn = gamma1_exterior(&v).get(k);
        assert!((dn - (g.get(k) * (-(k.abs() as f64) / radius) + slope)).norm() < 1e-8);
    }
}

#[test]
fn mode_zero_log_variant() {
    let mut modes = BTreeMap::new();
    modes.insert(0, RadialProfile { min_power: 0, coeffs: vec![c(1.0, 0.0)] });
    let source = RadialSource { r_max: 2.0, modes };
    let zero = FourierFn::zero(0);
    let bounded = solve_exterior_dirichlet(&zero, &source, 1.0, Mode0Radiation::Bounded).unwrap();
    assert!(bounded.constant_at_infinity().norm() > 0.1);
    assert!(matches!(
        solve_exterior_dirichlet(&zero, &source, 1.0, Mode0Radiation::LogGrowth),
        Err(Error::UnresolvableMode0 { .. })
    ));
    let source3 = RadialSource { r_max: 4.0, ..source };
    let logv = solve_exterior_dirichlet(&zero, &source3, 2.0, Mode0Radiation::LogGrowth).unwrap();
    let far = 1e6;
    let b = logv.log_coeff;
    assert!((logv.mode_value(0, far) - b * far.ln()).norm() < 1e-9 * far.ln());
    assert!(logv.mode_value(0, 2.0).norm() < 1e-14);
}

#[test]
fn galerkin_trivial_and_two_cell_forms() {
    let d0 = MultiscaleDecomposition::new(1.0, 2, 0).unwrap();
    let a = dtn_galerkin(&d0, 0, &dtn_symbol(1.0, 16).unwrap(), 16, false).unwrap();
    assert_eq!(a.dim(), 1);
    assert_eq!(a.matrix[(0, 0)], 0.0);

    let d1 = MultiscaleDecomposition::new(1.0, 2, 1).unwrap();
    let m = 32;
    let a = dtn_galerkin(&d1, 1, &dtn_symbol(1.0, m).unwrap(), 16, false).unwrap();
    // s = 2π Σ_{k odd ≤ M} 2·(−k)·|2/(2πk)|² from the half-circle indicator coefficients
    let s: f64 = (1..=m).filter(|k| k % 2 == 1).map(|k| -2.0 * 2.0 * PI * k as f64 * (1.0 / (PI * k as f64)).powi(2)).sum();
    assert!(s < 0.0);
    assert!((a.matrix[(0, 0)] - s).abs() < 1e-12);
    assert!((a.matrix[(0, 1)] + s).abs() < 1e-12);
    assert!((a.matrix[(1, 1)] - s).abs() < 1e-12);
    assert!(matches!(
        dtn_galerkin(&d1, 1, &dtn_symbol(1.0, 31).unwrap(), 16, false),
        Err(Error::CutoffTooSmall { cutoff: 31, required: 32 })
    ));
}

#[test]
fn galerkin_is_negative_semidefinite_with_constant_kernel() {
    for (p, n) in [(2, 5), (3, 3)] {
        let d = MultiscaleDecomposition::new(0.7, p, n).unwrap();
        let m = default_cutoff(p, n, DEFAULT_OVERSAMPLING);
        let a = dtn_galerkin(&d, n, &dtn_symbol(0.7, m).unwrap(), DEFAULT_OVERSAMPLING, false).unwrap();
        let rep = coercivity_check(&a, OperatorKind::ExteriorDtn);
        assert!(rep.passed);
        assert!(rep.constant_residual < 1e-10);
        assert!(rep.symmetry_defect < 1e-10);
    }
}

#[test]
fn galerkin_cutoff_dependence() {
    let d = MultiscaleDecomposition::new(1.0, 2, 3).unwrap();
    let build = |m| dtn_galerkin(&d, 3, &dtn_symbol(1.0, m).unwrap(), 16, false).unwrap().matrix;
    let (a, b, c2) = (build(1024), build(2048), build(4096));
    let drift1 = b[(0, 0)] - a[(0, 0)];
    let drift2 = c2[(0, 0)] - b[(0, 0)];
    let expected = -(2.0 / PI) * 2f64.ln();
    assert!((drift1 - expected).abs() < 1e-2 && (drift2 - expected).abs() < 1e-2);
    // entries away from the diagonal and its neighbours settle
    assert!((b[(0, 4)] - a[(0, 4)]).abs() < 1e-3);
    assert!((c2[(0, 4)] - b[(0, 4)]).abs() < (b[(0, 4)] - a[(0, 4)]).abs());
}

#[test]
fn cell_integrals_of_constants() {
    let one = FourierFn::mode(0, c(2.0, 0.0), 4);
    for v in cell_integrals(&one, 3, 2, 1.5) {
        assert!((v - c(2.0 * 2.0 * PI * 1.5 / 9.0, 0.0)).norm() < 1e-14);
    }
}

#[test]
fn symbol_csv() {
    let csv = dtn_symbol(1.0, 2).unwrap().to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "k,value");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("0,") && lines[3].starts_with("2,-2.0"));
}

proptest! {
    #[test]
    fn symbols_are_even(k in 0i64..500, r in 0.1f64..5.0) {
        let l = layer_symbols(r, 2.0 * r, 500).unwrap();
        let d = dtn_symbol(r, 500).unwrap();
        for s in [&l.single, &l.double_t, &l.hypersingular, &d] {
            prop_assert_eq!(s.value(k), s.value(-k));
        }
    }

    #[test]
    fn manufactured_recovery(k in -6i64..=6, re in -1.0f64..1.0, im in -1.0f64..1.0, r_max in 1.5f64..3.0) {
        let phi = bump(1.0, r_max);
        let mut modes = BTreeMap::new();
        modes.insert(k, mode_laplacian(&phi, k).scale(c(-re, -im)));
        let source = RadialSource { r_max, modes };
        let v = solve_exterior_dirichlet(&FourierFn::zero(0), &source, 1.0, Mode0Radiation::Bounded).unwrap();
        for t in [0.1, 0.5, 0.9] {
            let r = 1.0 + t * (r_max - 1.0);
            prop_assert!((v.mode_value(k, r) - c(re, im) * phi.eval(r)).norm() < 1e-8);
        }
    }
}
