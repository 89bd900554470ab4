use mixdim::exterior::{gamma1_exterior, RadialProfile, RadialSource};
use mixdim::interface::{FourierFn, PiecewiseConstantFn};
use mixdim::poly::Poly;
use mixdim::transmission::*;
use mixdim::tree_model::{EdgeRef, TreeParams};
use mixdim::Error;
use num_complex::Complex64;
use proptest::prelude::*;
use std::collections::BTreeMap;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn base(level: usize) -> TransmissionConfig {
    TransmissionConfig::new(TreeParams::reference(), 1.0, level, c(1.0, 0.0))
}

fn exterior_source(scale: Complex64) -> RadialSource {
    let mut modes = BTreeMap::new();
    let bump = RadialProfile { min_power: 0, coeffs: vec![c(-2.0, 0.0), c(3.0, 0.0), c(-1.0, 0.0)] };
    modes.insert(0, bump.scale(scale));
    modes.insert(2, bump.scale(scale * 0.5));
    modes.insert(-2, bump.scale(scale.conj() * 0.5));
    RadialSource { r_max: 2.0, modes }
}

fn tree_source(scale: f64) -> TreeSource {
    let mut src = TreeSource::default();
    src.generations.insert(0, Poly::constant(scale));
    src.generations.insert(2, Poly::linear(0.0, -scale));
    src.edges.insert(EdgeRef::new(1, 1), Poly::new(vec![0.5 * scale, 0.0, scale]));
    src
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

#[test]
fn zero_data_gives_zero_solution() {
    let cfg = base(3);
    let (sys, sol) = solve_transmission(&cfg).unwrap();
    assert!(sys.rhs.iter().all(|v| v.norm() == 0.0));
    assert_eq!(sol.g.max_abs(), 0.0);
    assert!(sol.u_tree.leaf_values().iter().all(|v| v.norm() == 0.0));
    assert_eq!(sol.exterior.value(3.0, 0.2).norm(), 0.0);
}

#[test]
fn system_matrix_assembly_identity() {
    let sys = assemble_system(&base(3)).unwrap();
    let m = sys.matrix();
    for i in 0..8 {
        for j in 0..8 {
            let expected = -sys.c.matrix[(i, j)] + sys.d.matrix[(i, j)];
            assert!((m[(i, j)] - c(expected, 0.0)).norm() < 1e-15);
        }
    }
    assert!(sys.flags.case_i && !sys.flags.case_ii);
}

#[test]
fn configuration_errors() {
    let mut cfg = base(3);
    cfg.alpha1 = c(0.0, 0.0);
    assert!(matches!(assemble_system(&cfg), Err(Error::Alpha1Zero)));
    assert!(matches!(assemble_system(&base(0)), Err(Error::DepthBelowChartLevel { level: 0, required: 1 })));
    let mut cfg = base(2);
    cfg.mode_cutoff = Some(10);
    assert!(matches!(assemble_system(&cfg), Err(Error::CutoffTooSmall { .. })));
    let mut cfg = base(2);
    cfg.alpha0 = Alpha0::Cellwise(vec![c(1.0, 0.0); 3]);
    assert!(matches!(assemble_system(&cfg), Err(Error::DepthMismatch { expected: 4, got: 3 })));
    let mut cfg = base(2);
    cfg.n_src = Some(2);
    cfg.tree_source.generations.insert(5, Poly::constant(1.0));
    assert!(matches!(assemble_system(&cfg), Err(Error::InvalidParameter(_))));
}

#[test]
fn rhs_is_linear_in_the_data() {
    let mut a = base(3);
    a.tree_source = tree_source(1.0);
    let mut b = base(3);
    b.exterior_source = exterior_source(c(1.0, 0.0));
    let mut cc = base(3);
    cc.c_root = c(1.0, 0.0);
    let (x, y, z) = (c(0.7, 0.2), c(-1.3, 0.0), c(0.4, -2.0));
    let mut all = base(3);
    all.tree_source = tree_source(1.0);
    all.exterior_source = exterior_source(y);
    all.c_root = z;
    // x scales the tree part through a second solve
    let mut all_x = all.clone();
    all_x.tree_source = tree_source(x.re);
    let ha = assemble_system(&a).unwrap().rhs;
    let hb = assemble_system(&b).unwrap().rhs;
    let hc = assemble_system(&cc).unwrap().rhs;
    let h = assemble_system(&all_x).unwrap().rhs;
    for k in 0..8 {
        let expected = ha[k] * x.re + hb[k] * y + hc[k] * z;
        assert!((h[k] - expected).norm() < 1e-12 * (1.0 + expected.norm()));
    }
}

#[test]
fn solutions_superpose() {
    let mut a = base(3);
    a.alpha0 = Alpha0::Constant(c(0.2, 0.1));
    a.tree_source = tree_source(1.0);
    let mut b = a.clone();
    b.tree_source = TreeSource::default();
    b.exterior_source = exterior_source(c(1.0, 0.0));
    let mut ab = a.clone();
    ab.exterior_source = exterior_source(c(1.0, 0.0));
    let ga = solve_interface(&assemble_system(&a).unwrap()).unwrap().g;
    let gb = solve_interface(&assemble_system(&b).unwrap()).unwrap().g;
    let gab = solve_interface(&assemble_system(&ab).unwrap()).unwrap().g;
    for k in 0..8 {
        assert!((gab.values[k] - ga.values[k] - gb.values[k]).norm() < 1e-10);
    }
}

#[test]
fn reconstruction_satisfies_both_transmission_conditions() {
    let mut cfg = base(4);
    cfg.alpha1 = c(1.5, 0.5);
    cfg.alpha0 = Alpha0::Constant(c(0.3, 0.0));
    cfg.c_root = c(0.4, 0.0);
    cfg.tree_source = tree_source(1.0);
    cfg.exterior_source = exterior_source(c(1.0, 0.3));
    let (sys, sol) = solve_transmission(&cfg).unwrap();
    assert!(sol.trace_defect_tree <= 1e-10);
    assert!(sol.trace_defect_exterior <= 1e-10);
    assert!(sol.flux_residual <= 1e-9, "flux residual {}", sol.flux_residual);
    assert!(sol.condition.is_finite());
    let m = sys.matrix();
    let g = nalgebra::DVector::from_vec(sol.g.values.clone());
    let h = nalgebra::DVector::from_vec(sys.rhs.clone());
    assert!((&m * &g + &h).norm() <= 1e-10 * h.norm());
    assert!((sol.u_tree.re.root_value() - 0.4).abs() < 1e-12);
}

#[test]
fn strong_coupling_suppresses_the_interface_trace() {
    let mut cfg = base(3);
    cfg.alpha1 = c(1e4, 0.0);
    cfg.exterior_source = exterior_source(c(1.0, 0.0));
    let sys = assemble_system(&cfg).unwrap();
    let sol = solve_interface(&sys).unwrap();
    let bound = norm(&sys.rhs) / sys.hermitian_min_eigenvalue();
    assert!(norm(&sol.g.values) <= bound);
    let full = reconstruct(&cfg, &sys, &sol).unwrap();
    let free = mixdim::exterior::solve_exterior_dirichlet(
        &FourierFn::zero(0),
        &cfg.exterior_source.scale(c(-1.0, 0.0)),
        1.0,
        Default::default(),
    )
    .unwrap();
    let diff = (full.exterior.value(1.5, 0.3) - free.value(1.5, 0.3)).norm();
    assert!(diff < 1e-2 * free.value(1.5, 0.3).norm().max(1e-3));
    assert!(gamma1_exterior(&full.exterior).get(0).norm() > 0.0);
}

#[test]
fn root_forcing_is_exact_under_deeper_condensation() {
    let mut a = base(3);
    a.c_root = c(1.0, 0.0);
    a.alpha1 = c(2.0, 0.0);
    let mut b = a.clone();
    b.n_src = Some(9);
    let ha = assemble_system(&a).unwrap().rhs;
    let hb = assemble_system(&b).unwrap().rhs;
    assert!(norm(&ha) > 0.0);
    for k in 0..8 {
        assert!((ha[k] - hb[k]).norm() < 1e-12);
    }
}

#[test]
fn tree_source_rhs_is_depth_independent() {
    let mut a = base(3);
    a.tree_source = tree_source(1.0);
    let mut b = a.clone();
    b.n_src = Some(8);
    let ha = assemble_system(&a).unwrap().rhs;
    let hb = assemble_system(&b).unwrap().rhs;
    for k in 0..8 {
        assert!((ha[k] - hb[k]).norm() < 1e-12);
    }
}

#[test]
fn imaginary_coupling_is_solvable() {
    let mut cfg = base(4);
    cfg.alpha1 = c(0.0, 1.0);
    cfg.exterior_source = exterior_source(c(1.0, 0.0));
    let sys = assemble_system(&cfg).unwrap();
    assert!(sys.flags.case_ii && !sys.flags.case_i);
    let sol = solve_interface(&sys).unwrap();
    assert!(sol.residual <= 1e-10);
}

#[test]
fn hermitian_part_is_positive_for_case_one() {
    for (a1, a0) in [(1.0, 0.0), (0.1, 2.0), (3.0, 0.5)] {
        let mut cfg = base(4);
        cfg.alpha1 = c(a1, -1.0);
        cfg.alpha0 = Alpha0::Constant(c(a0, 0.7));
        let sys = assemble_system(&cfg).unwrap();
        assert!(sys.flags.case_i);
        assert!(sys.hermitian_min_eigenvalue() > 0.0);
    }
}

#[test]
fn pencil_eigenvalue_is_singular() {
    let sys = assemble_system(&base(3)).unwrap();
    let pencil = plasmonic_pencil(&sys.c, &sys.d, None).unwrap();
    let alpha = pencil.symmetric[0];
    let mut cfg = base(3);
    cfg.alpha1 = c(alpha, 0.0);
    match solve_interface(&assemble_system(&cfg).unwrap()) {
        Err(Error::SingularInterfaceOperator { condition, nearest_pencil_eigenvalue }) => {
            assert!(condition > SINGULAR_CONDITION);
            assert!((nearest_pencil_eigenvalue.unwrap() - alpha).abs() < 1e-10 * alpha.abs());
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn pencil_location_and_constant_mode() {
    let mut leading = Vec::new();
    for n in 3..=7 {
        let sys = assemble_system(&base(n)).unwrap();
        let p = plasmonic_pencil(&sys.c, &sys.d, None).unwrap();
        assert_eq!(p.zero_index, p.symmetric.len() - 1);
        assert!(p.constant_alignment > 1.0 - 1e-10);
        assert!(p.max_imag() <= 1e-8);
        let nonzero: Vec<f64> = p.symmetric[..p.symmetric.len() - 1].to_vec();
        assert!(nonzero.iter().all(|v| *v < 0.0));
        leading.push(nonzero[nonzero.len() - 1]);
        for (z, s) in p.eigenvalues.iter().zip(&p.symmetric) {
            assert!((z.re - s).abs() <= 1e-8 * (1.0 + s.abs()));
        }
    }
    let steps: Vec<f64> = leading.windows(2).map(|w| w[1] - w[0]).collect();
    assert!(steps.iter().all(|d| *d > 0.0), "leading eigenvalues {leading:?}");
    assert!(steps.windows(2).all(|w| w[1] < 0.6 * w[0]), "leading eigenvalues {leading:?}");
    let aitken = |i: usize| leading[i + 2] + steps[i + 1] * steps[i + 1] / (steps[i] - steps[i + 1]);
    assert!(((aitken(1) - aitken(2)) / aitken(2)).abs() < 5e-3, "leading eigenvalues {leading:?}");
}

#[test]
fn pencil_scales_with_weights() {
    let sys = assemble_system(&base(3)).unwrap();
    let mut scaled = base(3);
    scaled.params = TreeParams::reference().with_weight_scale(4.0);
    let sys2 = assemble_system(&scaled).unwrap();
    let a = plasmonic_pencil(&sys.c, &sys.d, None).unwrap();
    let b = plasmonic_pencil(&sys2.c, &sys2.d, None).unwrap();
    for (x, y) in a.symmetric.iter().zip(&b.symmetric) {
        assert!((x / 4.0 - y).abs() < 1e-10 * (1.0 + x.abs()));
    }
    let top = plasmonic_pencil(&sys.c, &sys.d, Some(3)).unwrap();
    assert_eq!(top.eigenvalues.len(), 3);
    assert!(top.to_csv().starts_with("index,re,im\n0,"));
}

#[test]
fn manufactured_cell_target_is_exact() {
    let values: Vec<f64> = (0..8).map(|k| (k as f64 * 1.7).sin()).collect();
    let target = PiecewiseConstantFn::from_real(2, 3, &values);
    for n in 3..=5 {
        let mut cfg = base(n);
        cfg.alpha0 = Alpha0::Constant(c(0.3, 0.0));
        cfg.manufactured = Some(Manufactured::Cells(target.clone()));
        let sys = assemble_system(&cfg).unwrap();
        let sol = solve_interface(&sys).unwrap();
        assert!(sol.g.sub(&target.refine(n)).max_abs() < 1e-10);
        let full = reconstruct(&cfg, &sys, &sol).unwrap();
        assert!(full.flux_residual < 1e-9);
    }
    let mut cfg = base(2);
    cfg.manufactured = Some(Manufactured::Cells(target));
    assert!(matches!(assemble_system(&cfg), Err(Error::InvalidParameter(_))));
}

#[test]
fn convergence_tables() {
    let mut cfg = base(3);
    cfg.alpha0 = Alpha0::Constant(c(0.3, 0.0));
    cfg.manufactured = Some(Manufactured::Fourier(FourierFn::cos(2, 2)));
    let t = convergence_study(&cfg, &[5, 3, 4]).unwrap();
    assert_eq!(t.rows.iter().map(|r| r.level).collect::<Vec<_>>(), vec![3, 4, 5]);
    assert!(t.monotone_h12());
    assert!(t.rows[0].rate_running.is_none() && t.rows[1].rate_running.unwrap() > 0.0);
    assert!(t.rows.iter().all(|r| r.err_l2 < r.err_h12));
    let csv = t.to_csv();
    assert!(csv.starts_with("N,dof,err_l2,err_h12,rate_running\n3,8,"));
    assert_eq!(csv.lines().count(), 4);
    assert!((t.rho_bound.unwrap() - (1.0 - 2.0 * 0.339_035_952_556) / 2.0).abs() < 1e-9);

    let mut src = base(3);
    src.exterior_source = exterior_source(c(1.0, 0.0));
    src.tree_source = tree_source(1.0);
    let t = convergence_study(&src, &[2, 3, 4, 5]).unwrap();
    assert_eq!(t.rows.len(), 3);
    assert!(t.monotone_h12());
    assert!(t.rho_hat.unwrap() > 0.0);
    assert!(matches!(convergence_study(&src, &[2, 3]), Err(Error::InsufficientLevels { required: 3, got: 2 })));
    assert!(matches!(convergence_study(&cfg, &[3]), Err(Error::InsufficientLevels { required: 2, got: 1 })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn sufficient_conditions_give_solvable_systems(
        a1 in (0.0f64..4.0, -4.0f64..4.0),
        a0 in (0.0f64..4.0, -4.0f64..4.0),
        imaginary in any::<bool>(),
    ) {
        let (a1, a0) = if imaginary {
            (c(a1.1, a1.0.max(1e-3)), c(a0.1, a0.0))
        } else {
            (c(a1.0.max(1e-3), a1.1), c(a0.0, a0.1))
        };
        let mut cfg = base(3);
        cfg.alpha1 = a1;
        cfg.alpha0 = Alpha0::Constant(a0);
        cfg.exterior_source = exterior_source(c(1.0, 0.0));
        let sys = assemble_system(&cfg).unwrap();
        prop_assert!(sys.flags.case_i || sys.flags.case_ii);
        let sol = solve_interface(&sys).unwrap();
        prop_assert!(sol.condition.is_finite() && sol.residual <= 1e-10);
    }
}
