//! The acceptance suite: ten oracle and property checks, each reporting pass/fail with a detail line.

use crate::error::{Error, Result};
use crate::exterior::{bie_dtn_crosscheck, dtn_galerkin, dtn_symbol, layer_symbols, single_layer_quadrature};
use crate::interface::{projector_error_check, FourierFn, MultiscaleDecomposition, PiecewiseConstantFn};
use crate::poly::Poly;
use crate::transmission::{
    assemble_system, convergence_study, plasmonic_pencil, solve_interface, Alpha0, Manufactured, TransmissionConfig,
};
use crate::tree_calculus::{green_identity_check, harmonic_with, poisson_with, TreeFunction, TreeSolver};
use crate::tree_dtn::{coercivity_check, compress, condensed_dtn, truncated_dtn, AssemblyOptions, OperatorKind};
use crate::tree_model::{build_truncated, validate_params, TreeParams};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

pub const DEFAULT_SEED: u64 = 20_240_917;

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] criterion {:>2} {}: {} ({:.2} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

fn timed(id: usize, name: &'static str, limit: Option<f64>, body: impl FnOnce() -> Result<(bool, String)>) -> Outcome {
    let start = Instant::now();
    let res = body();
    let seconds = start.elapsed().as_secs_f64();
    let (mut passed, mut detail) = match res {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    if let Some(l) = limit {
        if seconds >= l {
            passed = false;
            detail.push_str(&format!("; runtime {seconds:.2} s exceeds {l} s"));
        }
    }
    Outcome { id, name, passed, detail, seconds }
}

/// Geometric parameters drawn until every structural condition holds.
pub fn random_admissible_params(rng: &mut ChaCha8Rng) -> TreeParams {
    loop {
        let p = rng.gen_range(2..=3);
        let ell = rng.gen_range(0.2..0.9);
        let omega = rng.gen_range(0.15..0.9);
        let l0 = rng.gen_range(0.5..2.0);
        let omega0 = rng.gen_range(0.5..2.0);
        let params = TreeParams::geometric(p, ell, omega, l0, omega0);
        if validate_params(&params).is_ok() && params.r() < 0.9 {
            return params;
        }
    }
}

pub fn interval_oracle() -> Outcome {
    timed(1, "interval oracle", Some(1.0), || {
        let params = TreeParams::geometric(1, 0.5, 1.0, 1.0, 1.0);
        validate_params(&params)?;
        let mut worst: f64 = 0.0;
        for n in 1..=6 {
            let a = truncated_dtn(&params, n, AssemblyOptions::default())?;
            let expected = 0.5 / (1.0 - 0.5f64.powi(n as i32));
            worst = worst.max((a.matrix[(0, 0)] - expected).abs());
            let c = condensed_dtn(&params, n, AssemblyOptions::default())?;
            worst = worst.max((c.matrix[(0, 0)] - 0.5).abs());
        }
        Ok((worst <= 1e-12, format!("max deviation {worst:.3e}")))
    })
}

pub fn radial_oracle() -> Outcome {
    timed(2, "radial oracle", Some(10.0), || {
        let params = TreeParams::geometric(2, 0.5, 0.4, 1.0, 1.0);
        let flux = 0.375;
        let gamma = 2.0 * PI;
        let mut worst: f64 = 0.0;
        for n in 2..=8 {
            let a = condensed_dtn(&params, n, AssemblyOptions::default())?;
            let cell = gamma / a.dim() as f64;
            for s in a.row_sums() {
                worst = worst.max(((s / cell) - flux / gamma).abs() / (flux / gamma));
            }
        }
        Ok((worst <= 1e-10, format!("max relative density error {worst:.3e}")))
    })
}

pub fn condensation_exactness() -> Outcome {
    timed(3, "condensation exactness", Some(30.0), || {
        let params = TreeParams::reference();
        let mut worst: f64 = 0.0;
        for n in 2..=4 {
            let fine = condensed_dtn(&params, n + 3, AssemblyOptions::default())?;
            let coarse = condensed_dtn(&params, n, AssemblyOptions::default())?;
            worst = worst.max((compress(&fine, n + 1).matrix - coarse.matrix).amax());
        }
        Ok((worst <= 1e-9, format!("max entry difference {worst:.3e}")))
    })
}

pub fn tree_coercivity(seed: u64) -> Outcome {
    timed(4, "tree DtN coercivity", None, || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut min_eig = f64::INFINITY;
        let mut max_sym: f64 = 0.0;
        let mut ok = true;
        for _ in 0..10 {
            let params = random_admissible_params(&mut rng);
            let n = if params.p == 2 { 4 } else { 2 };
            let rep = coercivity_check(&condensed_dtn(&params, n, AssemblyOptions::default())?, OperatorKind::TreeDtn);
            ok &= rep.passed && rep.symmetry_defect < 1e-9;
            min_eig = min_eig.min(rep.min_eigenvalue);
            max_sym = max_sym.max(rep.symmetry_defect);
        }
        Ok((ok, format!("min eigenvalue {min_eig:.3e}, max symmetry defect {max_sym:.3e} over 10 sets")))
    })
}

pub fn projector_bound() -> Outcome {
    timed(5, "projector error bound", None, || {
        let g = FourierFn::cos(1, 1);
        let (sigma, sigma_prime) = (0.33904, 0.42);
        let mut violations = 0;
        let mut worst_ratio: f64 = 0.0;
        for n in 2..=10 {
            let c = projector_error_check(&g, 2, 1.0, n, sigma, sigma_prime, 40)?;
            if (c.constant - 2.667).abs() > 1e-3 {
                return Err(Error::Numerical(format!("bound constant {}", c.constant)));
            }
            if !c.holds() {
                violations += 1;
            }
            worst_ratio = worst_ratio.max(c.lhs / c.rhs);
        }
        Ok((violations == 0, format!("{violations} violations, max lhs/rhs {worst_ratio:.4}")))
    })
}

pub fn exterior_symbols() -> Outcome {
    timed(6, "exterior symbol suite", None, || {
        let (radius, r_scale) = (1.0, 2.0);
        let layers = layer_symbols(radius, r_scale, 64)?;
        let quad = (-8..=8i64)
            .map(|k| (single_layer_quadrature(radius, r_scale, k, 2048) - layers.single.value(k)).abs())
            .fold(0.0, f64::max);
        let bie = bie_dtn_crosscheck(radius, r_scale, 64, false)?;
        let mut galerkin_ok = true;
        let mut worst_const: f64 = 0.0;
        let mut worst_eig = f64::NEG_INFINITY;
        for n in 0..=6 {
            let decomp = MultiscaleDecomposition::new(radius, 2, n)?;
            let m = 16 * 2usize.pow(n as u32);
            let a = dtn_galerkin(&decomp, n, &dtn_symbol(radius, m)?, 16, false)?;
            let rep = coercivity_check(&a, OperatorKind::ExteriorDtn);
            galerkin_ok &= rep.passed && rep.symmetry_defect < 1e-10;
            worst_const = worst_const.max(rep.constant_residual);
            worst_eig = worst_eig.max(rep.max_eigenvalue);
        }
        let passed = quad <= 1e-6 && bie <= 1e-12 && galerkin_ok;
        Ok((
            passed,
            format!(
                "S quadrature {quad:.3e}, boundary equation {bie:.3e}, max eigenvalue {worst_eig:.3e}, |A·1| {worst_const:.3e}"
            ),
        ))
    })
}

fn random_poly(rng: &mut ChaCha8Rng, degree: usize) -> Poly {
    Poly::new((0..=degree).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

/// Random Kirchhoff function: Poisson solution plus a harmonic part, degree ≤ 4.
fn random_kirchhoff(rng: &mut ChaCha8Rng, solver: &TreeSolver) -> Result<TreeFunction> {
    let tree = solver.tree().clone();
    let source = TreeFunction::from_edges(tree.clone(), (0..tree.num_edges()).map(|_| random_poly(rng, 2)).collect())?;
    let w = poisson_with(solver, &source)?;
    let leaves: Vec<f64> = (0..tree.num_leaves()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let h = harmonic_with(solver, &leaves, rng.gen_range(-1.0..1.0))?;
    Ok(w.add(&h))
}

/// Random continuous function vanishing at the root: piecewise linear plus edge bubbles, degree ≤ 4.
fn random_test_function(rng: &mut ChaCha8Rng, tree: &Arc<crate::tree_model::FiniteTree>) -> Result<TreeFunction> {
    let vertex: Vec<f64> = (0..tree.num_edges()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let lin = TreeFunction::piecewise_linear(tree.clone(), 0.0, &vertex);
    let bubbles = (0..tree.num_edges())
        .map(|i| {
            let l = tree.length(i);
            &Poly::new(vec![0.0, l, -1.0]) * &random_poly(rng, 2)
        })
        .collect();
    Ok(lin.add(&TreeFunction::from_edges(tree.clone(), bubbles)?))
}

pub fn green_identity(seed: u64) -> Outcome {
    timed(7, "Green identity on trees", None, || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let params = random_admissible_params(&mut rng);
            let depth = rng.gen_range(0..=5);
            let tree = Arc::new(build_truncated(&params, depth));
            let solver = TreeSolver::new(tree.clone());
            let u = random_kirchhoff(&mut rng, &solver)?;
            let v = random_test_function(&mut rng, &tree)?;
            worst = worst.max(green_identity_check(&u, &v).defect);
        }
        Ok((worst <= 1e-9, format!("max defect {worst:.3e} over 100 pairs")))
    })
}

pub fn manufactured_transmission(seed: u64) -> Outcome {
    timed(8, "manufactured transmission", Some(120.0), || {
        let mut cfg = TransmissionConfig::new(TreeParams::reference(), 1.0, 3, Complex64::new(1.0, 0.0));
        cfg.alpha0 = Alpha0::Constant(Complex64::new(0.3, 0.0));
        cfg.manufactured = Some(Manufactured::Fourier(FourierFn::cos(1, 1)));
        let levels: Vec<usize> = (3..=8).collect();
        let smooth = convergence_study(&cfg, &levels)?;
        let rho = smooth.rho_hat.unwrap_or(f64::NAN);
        let monotone = smooth.monotone_h12();

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        cfg.manufactured = Some(Manufactured::Cells(PiecewiseConstantFn::from_real(2, 3, &values)));
        let exact = convergence_study(&cfg, &levels)?;
        let worst = exact.rows.iter().map(|r| r.err_l2.max(r.err_h12)).fold(0.0, f64::max);

        let errs: Vec<String> = smooth.rows.iter().map(|r| format!("{:.3e}", r.err_h12)).collect();
        Ok((
            monotone && rho > 0.0 && worst <= 1e-9,
            format!(
                "H^1/2 errors [{}], rho_hat {rho:.4} (bound {:.4}), V_3 error {worst:.3e}",
                errs.join(", "),
                smooth.rho_bound.unwrap_or(f64::NAN)
            ),
        ))
    })
}

pub fn sufficient_solvability(seed: u64) -> Outcome {
    timed(9, "sufficient solvability conditions", None, || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = TransmissionConfig::new(TreeParams::reference(), 1.0, 4, Complex64::new(1.0, 0.0));
        let mut worst_cond: f64 = 0.0;
        let mut failures = 0;
        for case in 0..2 {
            for _ in 0..20 {
                let (a1, a0) = if case == 0 {
                    let a1 = Complex64::new(rng.gen_range(0.0..5.0), rng.gen_range(-5.0..5.0));
                    let a0 = Complex64::new(rng.gen_range(0.0..5.0), rng.gen_range(-5.0..5.0));
                    (a1, a0)
                } else {
                    let a1 = Complex64::new(rng.gen_range(-5.0..5.0), rng.gen_range(0.0..5.0));
                    let a0 = Complex64::new(rng.gen_range(-5.0..5.0), rng.gen_range(0.0..5.0));
                    (a1, a0)
                };
                let mut cfg = base.clone();
                cfg.alpha1 = a1;
                cfg.alpha0 = Alpha0::Constant(a0);
                let sys = assemble_system(&cfg)?;
                let flags_ok = if case == 0 { sys.flags.case_i } else { sys.flags.case_ii };
                match solve_interface(&sys) {
                    Ok(sol) if flags_ok && sol.condition.is_finite() => worst_cond = worst_cond.max(sol.condition),
                    _ => failures += 1,
                }
            }
        }
        let sys = assemble_system(&base)?;
        let pencil = plasmonic_pencil(&sys.c, &sys.d, None)?;
        let alpha = pencil
            .symmetric
            .iter()
            .copied()
            .rfind(|v| *v < -1e-8)
            .ok_or_else(|| Error::Numerical("no nonzero pencil eigenvalue".into()))?;
        let mut cfg = base.clone();
        cfg.alpha1 = Complex64::new(alpha, 0.0);
        let singular = matches!(
            solve_interface(&assemble_system(&cfg)?),
            Err(Error::SingularInterfaceOperator { .. })
        );
        Ok((
            failures == 0 && singular,
            format!(
                "{failures} failures in 40 solvable draws, max condition {worst_cond:.3e}, alpha1 = {alpha:.6} flagged singular: {singular}"
            ),
        ))
    })
}

pub fn plasmonic_location() -> Outcome {
    timed(10, "plasmonic pencil", None, || {
        let mut ok = true;
        let mut worst_im: f64 = 0.0;
        let mut worst_re = f64::NEG_INFINITY;
        let mut worst_align: f64 = 1.0;
        for n in 3..=6 {
            let sys = assemble_system(&TransmissionConfig::new(TreeParams::reference(), 1.0, n, Complex64::new(1.0, 0.0)))?;
            let pencil = plasmonic_pencil(&sys.c, &sys.d, None)?;
            let scale = pencil.eigenvalues.iter().fold(0.0, |m: f64, z| m.max(z.norm()));
            let zeros = pencil.eigenvalues.iter().filter(|z| z.norm() <= 1e-10 * scale).count();
            for z in pencil.eigenvalues.iter().filter(|z| z.norm() > 1e-10 * scale) {
                worst_im = worst_im.max(z.im.abs());
                worst_re = worst_re.max(z.re);
            }
            worst_align = worst_align.min(pencil.constant_alignment);
            ok &= zeros == 1 && pencil.symmetric[pencil.zero_index].abs() <= 1e-10 * scale;
        }
        ok &= worst_im <= 1e-8 && worst_re < 0.0 && worst_align >= 1.0 - 1e-8;
        Ok((
            ok,
            format!("max |Im| {worst_im:.3e}, max nonzero Re {worst_re:.4e}, constant alignment {worst_align:.12}"),
        ))
    })
}

pub fn run_all(seed: u64) -> Vec<Outcome> {
    vec![
        interval_oracle(),
        radial_oracle(),
        condensation_exactness(),
        tree_coercivity(seed),
        projector_bound(),
        exterior_symbols(),
        green_identity(seed),
        manufactured_transmission(seed),
        sufficient_solvability(seed),
        plasmonic_location(),
    ]
}
