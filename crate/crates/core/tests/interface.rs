use mixdim::interface::*;
use mixdim::tree_calculus::gamma0_n;
use mixdim::tree_model::{build_truncated, TreeParams};
use mixdim::Error;
use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::PI;
use std::sync::Arc;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[test]
fn decomposition_conditions() {
    let d = MultiscaleDecomposition::new(1.5, 3, 6).unwrap();
    let rep = d.verify_conditions();
    assert!(rep.passed());
    assert!(rep.max_diam_ratio <= rep.c1);
    assert!(rep.max_overlap_ratio <= rep.c2);
    assert!((d.cell_measure(2) - 2.0 * PI * 1.5 / 9.0).abs() < 1e-15);
    assert!(MultiscaleDecomposition::new(1.0, 1, 3).is_err());
    assert!(MultiscaleDecomposition::new(0.0, 2, 3).is_err());
}

#[test]
fn projection_of_constants_and_exponentials() {
    let one = FourierFn::mode(0, c(1.0, 0.0), 4);
    assert!(project_pn_fourier(&one, 2, 3).values.iter().all(|v| (v - c(1.0, 0.0)).norm() < 1e-15));
    let e = FourierFn::mode(1, c(1.0, 0.0), 4);
    let proj = project_pn_fourier(&e, 2, 2);
    for (k, v) in proj.values.iter().enumerate() {
        let (a, b) = (PI * k as f64 / 2.0, PI * (k + 1) as f64 / 2.0);
        let expected = (Complex64::from_polar(1.0, b) - Complex64::from_polar(1.0, a)) / (c(0.0, 1.0) * (b - a));
        assert!((v - expected).norm() < 1e-14);
    }
}

#[test]
fn cell_projection_identities() {
    let g = PiecewiseConstantFn::from_real(2, 4, &(0..16).map(|k| (k as f64).cos()).collect::<Vec<_>>());
    assert_eq!(project_pn(&g, 4), g);
    for n in 0..=4 {
        for m in 0..=4 {
            let lhs = project_pn(&project_pn(&g, m), n);
            let rhs = project_pn(&g, n.min(m));
            let diff = lhs.refine(4).sub(&rhs.refine(4)).max_abs();
            assert!(diff < 1e-14);
        }
    }
}

#[test]
fn indicator_coefficients() {
    let whole = indicator_fourier(2, 0, 0, 8);
    assert!((whole.get(0) - c(1.0, 0.0)).norm() < 1e-15);
    assert!((1..=8).all(|k| whole.get(k).norm() < 1e-15));
    let ind = indicator_fourier(2, 3, 5, 8);
    assert!((ind.get(0) - c(0.125, 0.0)).norm() < 1e-15);
    let mut sum = FourierFn::zero(8);
    for k in 0..8 {
        let f = indicator_fourier(2, 3, k, 8);
        for j in -8..=8 {
            sum.set(j, sum.get(j) + f.get(j));
        }
    }
    assert!((sum.get(0) - c(1.0, 0.0)).norm() < 1e-14);
    assert!((1..=8).all(|k| sum.get(k).norm() < 1e-14));
}

#[test]
fn indicator_parseval() {
    let angle = 2.0 * PI / 8.0;
    let mut prev_gap = f64::INFINITY;
    for m in [64usize, 256, 1024] {
        let f = indicator_fourier(2, 3, 1, m);
        let energy: f64 = 2.0 * PI * f.modes().map(|(_, v)| v.norm_sqr()).sum::<f64>();
        let gap = angle - energy;
        assert!(gap >= -1e-14 && gap <= 2.0 / m as f64);
        assert!(gap < prev_gap);
        prev_gap = gap;
    }
}

#[test]
fn aliasing_identity_matches_direct_energy() {
    let mut g = FourierFn::zero(12);
    g.set(1, c(0.5, 0.2));
    g.set(-1, c(0.5, -0.2));
    g.set(7, c(0.0, 0.3));
    g.set(-7, c(0.0, -0.3));
    g.set(0, c(2.0, 0.0));
    let r = 1.3;
    for n in 0..7 {
        let full = 2.0 * PI * r * g.modes().map(|(_, v)| v.norm_sqr()).sum::<f64>();
        let proj = project_pn_fourier(&g, 2, n);
        let cell = 2.0 * PI * r / proj.len() as f64;
        let kept: f64 = proj.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * cell;
        assert!((projection_error_sq(&g, 2, n, r) - (full - kept)).abs() < 1e-12);
    }
}

#[test]
fn ar_norm_of_constant_and_cell_functions() {
    let k = FourierFn::mode(0, c(-3.0, 0.0), 4);
    let n = ar_norm_fourier(&k, 2, 2.0, 0.3, 20);
    assert!((n.value - 3.0 * (4.0 * PI).sqrt()).abs() < 1e-12);
    let g = PiecewiseConstantFn::from_real(2, 3, &[1.0, 0.0, 2.0, 0.0, -1.0, 0.5, 0.0, 0.0]);
    let a = ar_norm_pcf(&g, 1.0, 0.3);
    assert_eq!(a.tail_estimate, 0.0);
    let mut series = 0.0;
    let p0 = project_pn(&g, 0).refine(3).l2_norm(1.0);
    series += p0 * p0;
    for j in 0..3 {
        let e = g.sub(&project_pn(&g, j).refine(3)).l2_norm(1.0);
        series += 2f64.powf(2.0 * j as f64 * 0.3) * e * e;
    }
    assert!((a.value - series.sqrt()).abs() < 1e-12);
}

#[test]
fn ar_norm_is_equivalent_to_fourier_norm_on_cosines() {
    let mut ratios = Vec::new();
    for k in [1i64, 2, 4, 8, 16] {
        let g = FourierFn::cos(k, k as usize);
        let a = ar_norm_fourier(&g, 2, 1.0, 0.3, 40).value;
        let h = sobolev_norm_fourier(&g, 0.3, 1.0);
        ratios.push(a / h);
    }
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(l, h), r| (l.min(*r), h.max(*r)));
    assert!(lo > 0.2 && hi < 5.0, "ratios {ratios:?}");
}

#[test]
fn ar_norm_monotone_in_r() {
    let g = FourierFn::cos(3, 3);
    let mut prev = 0.0;
    for r in [0.05, 0.1, 0.2, 0.3, 0.45] {
        let v = ar_norm_fourier(&g, 2, 1.0, r, 40).value;
        assert!(v >= prev);
        prev = v;
    }
}

#[test]
fn projector_bound_trivial_cases() {
    let k = FourierFn::mode(0, c(1.0, 0.0), 2);
    let chk = projector_error_check(&k, 2, 1.0, 3, 0.339, 0.42, 20).unwrap();
    assert_eq!(chk.lhs, 0.0);
    assert!(chk.holds());
    assert!((chk.constant - 2.666).abs() < 1e-3);
    assert!(matches!(
        projector_error_check(&k, 2, 1.0, 3, 0.42, 0.339, 20),
        Err(Error::ExponentOrderViolated { .. })
    ));
}

#[test]
fn projector_error_decays() {
    let g = FourierFn::cos(1, 1);
    let mut prev = f64::INFINITY;
    for n in 2..=10 {
        let chk = projector_error_check(&g, 2, 1.0, n, 0.339, 0.42, 40).unwrap();
        assert!(chk.holds());
        if n > 2 {
            assert!(chk.lhs <= prev * 2f64.powf(-0.081));
        }
        prev = chk.lhs;
    }
}

#[test]
fn lift_reproduces_projections() {
    let tree = Arc::new(build_truncated(&TreeParams::reference(), 4));
    let one = FourierFn::mode(0, c(1.0, 0.0), 2);
    let v = lift_to_tree(&one, &tree);
    assert!((0..tree.num_edges()).all(|i| (v.re.vertex_value(i) - 1.0).abs() < 1e-14));
    assert_eq!(v.re.root_value(), 0.0);

    let g = FourierFn::cos(3, 3);
    let v = lift_to_tree(&g, &tree);
    let decomp = MultiscaleDecomposition::new(1.0, 2, 4).unwrap();
    let tr = gamma0_n(&v.re, &decomp).unwrap();
    let proj = project_pn_fourier(&g, 2, 4);
    for (a, b) in tr.values.iter().zip(&proj.values) {
        assert!((a - b).norm() < 1e-14);
    }

    let ind = PiecewiseConstantFn::indicator(2, 1, 1);
    let v = lift_to_tree(&ind, &tree);
    for i in 1..tree.num_edges() {
        let e = tree.edge(i);
        let inside = e.k >= tree.generation_size(e.n) / 2;
        let expected = if inside { 1.0 } else { 0.0 };
        assert!((v.re.vertex_value(i) - expected).abs() < 1e-15);
    }
    assert!((v.re.vertex_value(0) - 0.5).abs() < 1e-15);
}

#[test]
fn sobolev_norm_examples() {
    let g = FourierFn::mode(3, c(1.0, 0.0), 3);
    assert!((sobolev_norm_fourier(&g, 0.5, 2.0).powi(2) - 4.0 * PI * 10f64.sqrt()).abs() < 1e-12);
    let pcf = PiecewiseConstantFn::from_real(2, 2, &[1.0, -1.0, 0.5, 2.0]);
    let f = FourierFn::from_pcf(&pcf, 4096);
    let l2 = pcf.l2_norm(1.0);
    let s0 = sobolev_norm_fourier(&f, 0.0, 1.0);
    assert!(s0 <= l2 + 1e-12 && l2 - s0 < 1e-2);
}

#[test]
fn csv_headers() {
    let g = PiecewiseConstantFn::from_real(2, 1, &[1.0, 2.0]);
    assert!(g.to_csv_component(false).starts_with("level,cell,value\n"));
    assert!(FourierFn::cos(1, 1).to_csv().starts_with("k,re,im\n"));
}

proptest! {
    #[test]
    fn sobolev_duality(a in proptest::collection::vec(-1.0f64..1.0, 18), s in 0.0f64..1.0) {
        let mut h = FourierFn::zero(4);
        let mut g = FourierFn::zero(4);
        for (i, k) in (-4i64..=4).enumerate() {
            h.set(k, c(a[2 * i], a[2 * i + 1]));
            g.set(k, c(a[(2 * i + 5) % 18], a[(2 * i + 7) % 18]));
        }
        let pairing = h.pair(&g, 1.0).norm();
        let bound = sobolev_norm_fourier(&h, -s, 1.0) * sobolev_norm_fourier(&g, s, 1.0);
        prop_assert!(pairing <= bound * (1.0 + 1e-12));
    }

    #[test]
    fn projection_is_idempotent(vals in proptest::collection::vec(-1.0f64..1.0, 27), n in 0usize..3) {
        let g = PiecewiseConstantFn::from_real(3, 3, &vals);
        let once = project_pn(&g, n);
        let twice = project_pn(&once, n);
        prop_assert!(once.sub(&twice).max_abs() < 1e-15);
    }
}
