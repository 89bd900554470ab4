//! The coupled interface equation M g = −h with M = −𝒞 + α₁D + α₀ on V_N.
//!
//! Source data follow Δu_T = f_T on the tree and Δu_Ω = f_Ω outside the disk; the
//! exterior solver uses −Δ, so f_Ω is negated on the way in.

use crate::error::{Error, Result};
use crate::exterior::{
    cell_integrals, dtn_galerkin, dtn_symbol, gamma1_exterior, solve_exterior_dirichlet, ExteriorField,
    Mode0Radiation, RadialSource, DEFAULT_OVERSAMPLING,
};
use crate::interface::{
    project_pn_fourier, projection_error_sq, sobolev_norm_fourier, FourierFn, MultiscaleDecomposition,
    PiecewiseConstantFn, CHART_LEVEL,
};
use crate::poly::Poly;
use crate::tree_calculus::{
    harmonic_with, laplacian, leaf_fluxes, poisson_with, root_bump, ComplexTreeFunction, TreeFunction, TreeSolver,
};
use crate::tree_dtn::{exact_dtn, fit_line, AssemblyOptions, GalerkinOperator};
use crate::tree_model::{build_condensed, validate_params, EdgeRef, FiniteTree, TreeParams};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

/// Condition numbers above this are treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e10;

#[derive(Debug, Clone, PartialEq)]
pub enum Alpha0 {
    Constant(Complex64),
    /// One value per cell at the solve level.
    Cellwise(Vec<Complex64>),
}

impl Alpha0 {
    pub fn cells(&self, count: usize) -> Result<Vec<Complex64>> {
        match self {
            Alpha0::Constant(c) => Ok(vec![*c; count]),
            Alpha0::Cellwise(v) if v.len() == count => Ok(v.clone()),
            Alpha0::Cellwise(v) => Err(Error::DepthMismatch { expected: count, got: v.len() }),
        }
    }
}

/// Piecewise-polynomial tree source, given per generation with optional per-edge replacements.
/// Polynomials are in the local edge coordinate s ∈ [0, ℓ_{n,k}].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TreeSource {
    pub generations: BTreeMap<usize, Poly>,
    pub edges: BTreeMap<EdgeRef, Poly>,
}

impl TreeSource {
    pub fn is_empty(&self) -> bool {
        self.generations.values().chain(self.edges.values()).all(Poly::is_zero)
    }

    /// Deepest generation carrying a nonzero polynomial.
    pub fn depth(&self) -> usize {
        let g = self.generations.iter().filter(|(_, p)| !p.is_zero()).map(|(n, _)| *n);
        let e = self.edges.iter().filter(|(_, p)| !p.is_zero()).map(|(e, _)| e.n);
        g.chain(e).max().unwrap_or(0)
    }

    pub fn to_function(&self, tree: &Arc<FiniteTree>) -> Result<TreeFunction> {
        if !self.is_empty() && self.depth() >= tree.depth() {
            return Err(Error::InvalidParameter(format!(
                "tree source reaches generation {} but the source tree resolves generations < {}",
                self.depth(),
                tree.depth()
            )));
        }
        let mut f = TreeFunction::zero(tree.clone());
        for i in 0..tree.num_edges() {
            let e = tree.edge(i);
            if let Some(p) = self.edges.get(&e).or_else(|| self.generations.get(&e.n)) {
                f.edges[i] = p.clone();
            }
        }
        Ok(f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Manufactured {
    Fourier(FourierFn),
    Cells(PiecewiseConstantFn),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionConfig {
    pub params: TreeParams,
    pub radius: f64,
    pub level: usize,
    pub alpha1: Complex64,
    pub alpha0: Alpha0,
    pub c_root: Complex64,
    pub tree_source: TreeSource,
    pub exterior_source: RadialSource,
    /// Condensation depth for tree source solves; default level + 4.
    pub n_src: Option<usize>,
    pub oversampling: usize,
    /// Absolute mode cutoff; must be at least oversampling·p^N.
    pub mode_cutoff: Option<usize>,
    pub allow_large: bool,
    /// Replaces the source-driven right-hand side by h = 𝒞g* − α₁Dg* − α₀g*.
    pub manufactured: Option<Manufactured>,
    pub radiation: Mode0Radiation,
}

impl TransmissionConfig {
    pub fn new(params: TreeParams, radius: f64, level: usize, alpha1: Complex64) -> Self {
        TransmissionConfig {
            params,
            radius,
            level,
            alpha1,
            alpha0: Alpha0::Constant(Complex64::new(0.0, 0.0)),
            c_root: Complex64::new(0.0, 0.0),
            tree_source: TreeSource::default(),
            exterior_source: RadialSource::none(),
            n_src: None,
            oversampling: DEFAULT_OVERSAMPLING,
            mode_cutoff: None,
            allow_large: false,
            manufactured: None,
            radiation: Mode0Radiation::Bounded,
        }
    }

    pub fn at_level(&self, level: usize) -> Self {
        TransmissionConfig { level, ..self.clone() }
    }

    pub fn source_depth(&self) -> usize {
        self.n_src.unwrap_or(self.level + 4).max(self.params.n1).max(self.level.saturating_sub(1))
    }

    pub fn cutoff(&self) -> usize {
        let required = self.oversampling * self.params.p.pow(self.level as u32);
        self.mode_cutoff.unwrap_or(required).max(required)
    }
}

/// Sufficient solvability conditions: case (i) Re α₁, Re α₀ ≥ 0 with Re α₁ + Re α₀ > 0, case (ii) the imaginary-part variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolvabilityFlags {
    /// Re α₁, Re α₀ ≥ 0 and Re α₁ + Re α₀ > 0 (cellwise)
    pub case_i: bool,
    /// Im α₁, Im α₀ ≥ 0 and Im α₁ + Im α₀ > 0 (cellwise)
    pub case_ii: bool,
}

pub fn solvability_flags(alpha1: Complex64, alpha0: &[Complex64]) -> SolvabilityFlags {
    let check = |f: fn(&Complex64) -> f64| {
        f(&alpha1) >= 0.0 && alpha0.iter().all(|a| f(a) >= 0.0 && f(&alpha1) + f(a) > 0.0)
    };
    SolvabilityFlags { case_i: check(|c| c.re), case_ii: check(|c| c.im) }
}

#[derive(Debug, Clone)]
pub struct InterfaceSystem {
    pub p: usize,
    pub level: usize,
    pub radius: f64,
    pub cutoff: usize,
    /// Exterior DtN Galerkin matrix C_N.
    pub c: GalerkinOperator,
    /// Tree DtN D_N on V_N.
    pub d: GalerkinOperator,
    /// Diagonal of A0_N: α₀_K |Γ_{N,K}|.
    pub a0: Vec<Complex64>,
    pub alpha1: Complex64,
    /// h_N[K] = ∫_{Γ_{N,K}} h ds
    pub rhs: Vec<Complex64>,
    pub flags: SolvabilityFlags,
}

impl InterfaceSystem {
    /// M_N = −C_N + α₁D_N + A0_N.
    pub fn matrix(&self) -> DMatrix<Complex64> {
        let n = self.c.dim();
        let mut m = DMatrix::from_fn(n, n, |i, j| {
            Complex64::new(-self.c.matrix[(i, j)], 0.0) + self.alpha1 * self.d.matrix[(i, j)]
        });
        for i in 0..n {
            m[(i, i)] += self.a0[i];
        }
        m
    }

    pub fn alpha0_is_zero(&self) -> bool {
        self.a0.iter().all(|a| a.norm() == 0.0)
    }

    /// Smallest eigenvalue of (M + Mᴴ)/2.
    pub fn hermitian_min_eigenvalue(&self) -> f64 {
        let m = self.matrix();
        let h = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
        h.symmetric_eigenvalues().min()
    }

    fn cell_measure(&self) -> f64 {
        2.0 * PI * self.radius / self.c.dim() as f64
    }
}

fn check_config(cfg: &TransmissionConfig) -> Result<()> {
    if cfg.alpha1.norm() == 0.0 {
        return Err(Error::Alpha1Zero);
    }
    validate_params(&cfg.params)?;
    let required = CHART_LEVEL.max(cfg.params.n1);
    if cfg.level < required {
        return Err(Error::DepthBelowChartLevel { level: cfg.level, required });
    }
    if let Some(m) = cfg.mode_cutoff {
        let req = cfg.oversampling * cfg.params.p.pow(cfg.level as u32);
        if m < req {
            return Err(Error::CutoffTooSmall { cutoff: m, required: req });
        }
    }
    Ok(())
}

fn sum_groups(values: &[Complex64], group: usize) -> Vec<Complex64> {
    values.chunks(group).map(|c| c.iter().sum()).collect()
}

/// Tree-side auxiliary solves on the condensed source tree.
struct TreeAux {
    tree: Arc<FiniteTree>,
    solver: TreeSolver,
    /// Solution of Δw = f_T.
    w_source: TreeFunction,
    /// Solution of Δw = Δu₁.
    w_bump: TreeFunction,
}

impl TreeAux {
    fn new(cfg: &TransmissionConfig) -> Result<Self> {
        let tree = Arc::new(build_condensed(&cfg.params, cfg.source_depth())?);
        let solver = TreeSolver::new(tree.clone());
        let f = cfg.tree_source.to_function(&tree)?;
        let w_source = poisson_with(&solver, &f)?;
        let (lap_bump, _) = laplacian(&root_bump(&tree));
        let w_bump = poisson_with(&solver, &lap_bump)?;
        Ok(TreeAux { tree, solver, w_source, w_bump })
    }

    /// u_f = w_source − c·w_bump as a complex tree function.
    fn u_f(&self, c: Complex64) -> ComplexTreeFunction {
        ComplexTreeFunction::from_real(self.w_source.clone()).add_scaled(-c, &self.w_bump)
    }

    /// ∫_{Γ_{N,K}} γ₁u_f for level-N cells.
    fn flux_integrals(&self, c: Complex64, level: usize) -> Vec<Complex64> {
        let fl: Vec<Complex64> = leaf_fluxes(&self.w_source)
            .into_iter()
            .zip(leaf_fluxes(&self.w_bump))
            .map(|(a, b)| Complex64::new(a, 0.0) - c * b)
            .collect();
        sum_groups(&fl, self.tree.p().pow((self.tree.depth() - level) as u32))
    }
}

fn source_rhs(cfg: &TransmissionConfig) -> Result<Vec<Complex64>> {
    let p = cfg.params.p;
    let n = cfg.level;
    let mut h = vec![Complex64::new(0.0, 0.0); p.pow(n as u32)];
    if !cfg.exterior_source.is_empty() {
        let vf = solve_exterior_dirichlet(
            &FourierFn::zero(0),
            &cfg.exterior_source.scale(Complex64::new(-1.0, 0.0)),
            cfg.radius,
            cfg.radiation,
        )?;
        for (hk, e) in h.iter_mut().zip(cell_integrals(&gamma1_exterior(&vf), p, n, cfg.radius)) {
            *hk -= e;
        }
    }
    if !cfg.tree_source.is_empty() || cfg.c_root.norm() != 0.0 {
        let aux = TreeAux::new(cfg)?;
        for (hk, t) in h.iter_mut().zip(aux.flux_integrals(cfg.c_root, n)) {
            *hk += cfg.alpha1 * t;
        }
    }
    Ok(h)
}

fn apply_real(a: &DMatrix<f64>, x: &[Complex64]) -> Vec<Complex64> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| x[j] * a[(i, j)]).sum())
        .collect()
}

/// (D g, 1_K) for all level-N cells, through D 1_K ∈ V_{max(N, N1+1)}.
fn tree_dtn_pairing(params: &TreeParams, g: &Manufactured, level: usize, opts: AssemblyOptions) -> Result<Vec<Complex64>> {
    let fine = level.max(params.n1 + 1);
    let a = exact_dtn(params, fine, opts)?;
    let avg = match g {
        Manufactured::Fourier(f) => project_pn_fourier(f, params.p, fine).values,
        Manufactured::Cells(c) if c.level <= fine => c.refine(fine).values,
        Manufactured::Cells(c) => c.coarsen(fine).values,
    };
    Ok(sum_groups(&apply_real(&a.matrix, &avg), params.p.pow((fine - level) as u32)))
}

fn manufactured_rhs(cfg: &TransmissionConfig, sys: &InterfaceSystem, g: &Manufactured) -> Result<Vec<Complex64>> {
    let (p, n) = (sys.p, sys.level);
    let opts = AssemblyOptions { allow_large: cfg.allow_large };
    let (ext, avg) = match g {
        Manufactured::Fourier(f) => {
            let sym = dtn_symbol(cfg.radius, f.m)?;
            (cell_integrals(&sym.apply(f), p, n, cfg.radius), project_pn_fourier(f, p, n).values)
        }
        Manufactured::Cells(c) => {
            if c.level > n {
                return Err(Error::InvalidParameter(format!(
                    "manufactured cell function at level {} is not in V_{n}",
                    c.level
                )));
            }
            let v = c.refine(n).values;
            (apply_real(&sys.c.matrix, &v), v)
        }
    };
    let tree = tree_dtn_pairing(&cfg.params, g, n, opts)?;
    Ok((0..ext.len())
        .map(|k| ext[k] - cfg.alpha1 * tree[k] - sys.a0[k] * avg[k])
        .collect())
}

pub fn assemble_system(cfg: &TransmissionConfig) -> Result<InterfaceSystem> {
    check_config(cfg)?;
    let p = cfg.params.p;
    let n = cfg.level;
    let decomp = MultiscaleDecomposition::new(cfg.radius, p, n)?;
    let cutoff = cfg.cutoff();
    let opts = AssemblyOptions { allow_large: cfg.allow_large };
    let c = dtn_galerkin(&decomp, n, &dtn_symbol(cfg.radius, cutoff)?, cfg.oversampling, cfg.allow_large)?;
    let d = exact_dtn(&cfg.params, n, opts)?;
    let alpha0 = cfg.alpha0.cells(decomp.cells(n))?;
    let cell = decomp.cell_measure(n);
    let a0 = alpha0.iter().map(|a| a * cell).collect();
    let mut sys = InterfaceSystem {
        p,
        level: n,
        radius: cfg.radius,
        cutoff,
        c,
        d,
        a0,
        alpha1: cfg.alpha1,
        rhs: Vec::new(),
        flags: solvability_flags(cfg.alpha1, &alpha0),
    };
    sys.rhs = match &cfg.manufactured {
        Some(g) => manufactured_rhs(cfg, &sys, g)?,
        None => source_rhs(cfg)?,
    };
    Ok(sys)
}

/// 2-norm condition estimate: exact singular values up to 1024 unknowns, power/inverse iteration beyond.
pub fn condition_estimate(m: &DMatrix<Complex64>) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 1.0;
    }
    if n <= 1024 {
        let s = m.clone().svd(false, false).singular_values;
        let (max, min) = (s.max(), s.min());
        return if min > 0.0 { max / min } else { f64::INFINITY };
    }
    let lu = m.clone().lu();
    let mut x = DVector::from_element(n, Complex64::new(1.0, 0.0)) / Complex64::new((n as f64).sqrt(), 0.0);
    let mut smax = 0.0;
    for _ in 0..50 {
        let y = m.adjoint() * (m * &x);
        smax = y.norm().sqrt();
        x = &y / Complex64::new(y.norm(), 0.0);
    }
    let mut z = DVector::from_fn(n, |i, _| Complex64::new(1.0 + (i % 7) as f64, 0.0));
    z /= Complex64::new(z.norm(), 0.0);
    let mut smin_inv = 0.0;
    for _ in 0..50 {
        let Some(w) = lu.solve(&z) else { return f64::INFINITY };
        // (MᴴM)⁻¹ z through two triangular-factored solves
        let Some(w2) = m.adjoint().lu().solve(&w) else { return f64::INFINITY };
        smin_inv = w2.norm().sqrt();
        z = &w2 / Complex64::new(w2.norm(), 0.0);
    }
    smax * smin_inv
}

#[derive(Debug, Clone)]
pub struct InterfaceSolution {
    pub g: PiecewiseConstantFn,
    /// ‖M g + h‖ / ‖h‖
    pub residual: f64,
    pub condition: f64,
}

pub fn solve_interface(sys: &InterfaceSystem) -> Result<InterfaceSolution> {
    let m = sys.matrix();
    let condition = condition_estimate(&m);
    if !condition.is_finite() || condition > SINGULAR_CONDITION {
        let nearest = if sys.alpha0_is_zero() {
            plasmonic_pencil(&sys.c, &sys.d, None).ok().and_then(|pp| {
                pp.symmetric
                    .iter()
                    .copied()
                    .min_by(|a, b| (a - sys.alpha1.re).abs().total_cmp(&(b - sys.alpha1.re).abs()))
            })
        } else {
            None
        };
        return Err(Error::SingularInterfaceOperator { condition, nearest_pencil_eigenvalue: nearest });
    }
    let h = DVector::from_vec(sys.rhs.clone());
    let hn = h.norm();
    let x = m
        .clone()
        .lu()
        .solve(&(-&h))
        .ok_or(Error::SingularInterfaceOperator { condition, nearest_pencil_eigenvalue: None })?;
    let residual = if hn > 0.0 { (&m * &x + &h).norm() / hn } else { (&m * &x).norm() };
    Ok(InterfaceSolution {
        g: PiecewiseConstantFn::new(sys.p, sys.level, x.iter().copied().collect())?,
        residual,
        condition,
    })
}

#[derive(Debug, Clone)]
pub struct TransmissionSolution {
    pub g: PiecewiseConstantFn,
    /// u + c·u₁ + u_f on the condensed source tree.
    pub u_tree: ComplexTreeFunction,
    /// v + v_f
    pub exterior: ExteriorField,
    /// max |γ₀u_T − g| over leaf cells
    pub trace_defect_tree: f64,
    /// max |v̂_k(R) − ĝ_k| over modes
    pub trace_defect_exterior: f64,
    /// ‖(γ₁u_Ω − α₁γ₁u_T − α₀γ₀u_Ω, 1_K) − injected h‖ / ‖h‖
    pub flux_residual: f64,
    pub condition: f64,
}

pub fn reconstruct(cfg: &TransmissionConfig, sys: &InterfaceSystem, sol: &InterfaceSolution) -> Result<TransmissionSolution> {
    let p = sys.p;
    let n = sys.level;
    let aux = TreeAux::new(cfg)?;
    let fine = aux.tree.depth();
    let data = sol.g.refine(fine).values;
    let re: Vec<f64> = data.iter().map(|v| v.re).collect();
    let im: Vec<f64> = data.iter().map(|v| v.im).collect();
    let u = ComplexTreeFunction { re: harmonic_with(&aux.solver, &re, 0.0)?, im: harmonic_with(&aux.solver, &im, 0.0)? };
    let u_tree = u.add_scaled(cfg.c_root, &root_bump(&aux.tree)).add(&aux.u_f(cfg.c_root));

    let g_hat = FourierFn::from_pcf(&sol.g, sys.cutoff);
    let ext_source = if cfg.manufactured.is_some() {
        RadialSource::none()
    } else {
        cfg.exterior_source.scale(Complex64::new(-1.0, 0.0))
    };
    let exterior = solve_exterior_dirichlet(&g_hat, &ext_source, cfg.radius, cfg.radiation)?;

    let trace_defect_tree = u_tree
        .leaf_values()
        .iter()
        .zip(&data)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let trace = exterior.trace();
    let trace_defect_exterior = g_hat.modes().map(|(k, c)| (trace.get(k) - c).norm()).fold(0.0, f64::max);

    let ext_flux = cell_integrals(&gamma1_exterior(&exterior), p, n, cfg.radius);
    let tree_flux = sum_groups(&u_tree.leaf_fluxes(), p.pow((fine - n) as u32));
    let cell = sys.cell_measure();
    let injected = if cfg.manufactured.is_some() { sys.rhs.clone() } else { vec![Complex64::new(0.0, 0.0); sys.rhs.len()] };
    let mut res = 0.0;
    for k in 0..ext_flux.len() {
        let alpha0 = sys.a0[k] / cell;
        let f = ext_flux[k] - sys.alpha1 * tree_flux[k] - alpha0 * sol.g.values[k] * cell - injected[k];
        res += f.norm_sqr();
    }
    let hn = sys.rhs.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    Ok(TransmissionSolution {
        g: sol.g.clone(),
        u_tree,
        exterior,
        trace_defect_tree,
        trace_defect_exterior,
        flux_residual: if hn > 0.0 { res.sqrt() / hn } else { res.sqrt() },
        condition: sol.condition,
    })
}

/// Assemble, solve and reconstruct in one step.
pub fn solve_transmission(cfg: &TransmissionConfig) -> Result<(InterfaceSystem, TransmissionSolution)> {
    let sys = assemble_system(cfg)?;
    let sol = solve_interface(&sys)?;
    let full = reconstruct(cfg, &sys, &sol)?;
    Ok((sys, full))
}

#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub level: usize,
    pub dof: usize,
    pub err_l2: f64,
    pub err_h12: f64,
    pub rate_running: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares rate of the H^{1/2} error in powers of p^{−N}.
    pub rho_hat: Option<f64>,
    /// (1 − 2σ)/2, the admissible rate bound.
    pub rho_bound: Option<f64>,
    pub reference_cutoff: usize,
}

impl ConvergenceTable {
    pub fn monotone_h12(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].err_h12 <= w[0].err_h12)
    }

    /// CSV with header N,dof,err_l2,err_h12,rate_running.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("N,dof,err_l2,err_h12,rate_running\n");
        for r in &self.rows {
            let rate = r.rate_running.map(crate::csv::fmt_f64).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.level,
                r.dof,
                crate::csv::fmt_f64(r.err_l2),
                crate::csv::fmt_f64(r.err_h12),
                rate
            );
        }
        out
    }
}

/// Errors of the level-N interface solutions against the manufactured target, or against the
/// finest level when no target is configured.
pub fn convergence_study(cfg: &TransmissionConfig, levels: &[usize]) -> Result<ConvergenceTable> {
    let mut levels = levels.to_vec();
    levels.sort_unstable();
    levels.dedup();
    let required = if cfg.manufactured.is_some() { 2 } else { 3 };
    if levels.len() < required {
        return Err(Error::InsufficientLevels { required, got: levels.len() });
    }
    let p = cfg.params.p;
    let finest = *levels.last().unwrap();
    let m_ref = cfg.at_level(finest).cutoff();
    let mut solutions = Vec::with_capacity(levels.len());
    for &n in &levels {
        let sys = assemble_system(&cfg.at_level(n))?;
        solutions.push(solve_interface(&sys)?.g);
    }
    let radius = cfg.radius;
    let (reference, used): (Manufactured, &[usize]) = match &cfg.manufactured {
        Some(g) => (g.clone(), &levels[..]),
        None => (Manufactured::Cells(solutions.last().unwrap().clone()), &levels[..levels.len() - 1]),
    };
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for (i, &n) in used.iter().enumerate() {
        let g = &solutions[i];
        let (err_l2, err_h12) = match &reference {
            Manufactured::Cells(c) => {
                let diff = g.sub(c);
                (diff.l2_norm(radius), sobolev_norm_fourier(&FourierFn::from_pcf(&diff, m_ref), 0.5, radius))
            }
            Manufactured::Fourier(f) => {
                let proj = project_pn_fourier(f, p, n);
                let cell = 2.0 * PI * radius / g.len() as f64;
                let within: f64 = g.values.iter().zip(&proj.values).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() * cell;
                let l2 = (projection_error_sq(f, p, n, radius) + within).sqrt();
                let diff = FourierFn::from_pcf(g, m_ref).sub(&f.with_cutoff(m_ref));
                (l2, sobolev_norm_fourier(&diff, 0.5, radius))
            }
        };
        let rate_running = rows.last().and_then(|prev| {
            (prev.err_h12 > 0.0 && err_h12 > 0.0)
                .then(|| (prev.err_h12 / err_h12).ln() / ((n - prev.level) as f64 * (p as f64).ln()))
        });
        rows.push(ConvergenceRow { level: n, dof: g.len(), err_l2, err_h12, rate_running });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.err_h12 > 0.0)
        .map(|r| (r.level as f64 * (p as f64).ln(), -r.err_h12.ln()))
        .collect();
    let rho_hat = (pts.len() >= 2).then(|| {
        let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        fit_line(&x, &y).0
    });
    Ok(ConvergenceTable {
        rows,
        rho_hat,
        rho_bound: cfg.params.sigma().map(|s| (1.0 - 2.0 * s) / 2.0),
        reference_cutoff: m_ref,
    })
}

#[derive(Debug, Clone)]
pub struct PlasmonicPencil {
    /// Eigenvalues of D⁻¹C from a nonsymmetric Schur decomposition, ascending real part.
    pub eigenvalues: Vec<Complex64>,
    /// Eigenvalues of the symmetric-definite reduction, ascending.
    pub symmetric: Vec<f64>,
    /// D-orthonormal eigenvectors matching `symmetric` (columns).
    pub eigenvectors: DMatrix<f64>,
    /// Index in `symmetric` of the eigenvalue closest to zero.
    pub zero_index: usize,
    /// |cos| of the angle between that eigenvector and the constant vector.
    pub constant_alignment: f64,
}

impl PlasmonicPencil {
    pub fn max_imag(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0, |m, z| m.max(z.im.abs()))
    }

    /// CSV with header index,re,im.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,re,im\n");
        for (i, z) in self.eigenvalues.iter().enumerate() {
            let _ = writeln!(out, "{i},{},{}", crate::csv::fmt_f64(z.re), crate::csv::fmt_f64(z.im));
        }
        out
    }
}

/// Generalized eigenvalues α of C g = α D g; `count` keeps the ones closest to zero.
pub fn plasmonic_pencil(c: &GalerkinOperator, d: &GalerkinOperator, count: Option<usize>) -> Result<PlasmonicPencil> {
    if c.dim() != d.dim() {
        return Err(Error::DepthMismatch { expected: c.dim(), got: d.dim() });
    }
    let n = c.dim();
    let dsym = (&d.matrix + d.matrix.transpose()) * 0.5;
    let csym = (&c.matrix + c.matrix.transpose()) * 0.5;
    let chol = dsym.clone().cholesky().ok_or_else(|| Error::Numerical("tree DtN not positive definite".into()))?;
    let linv = chol.l().try_inverse().ok_or_else(|| Error::Numerical("Cholesky factor singular".into()))?;
    let b = &linv * csym * linv.transpose();
    let eig = ((&b + b.transpose()) * 0.5).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let symmetric: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = linv.transpose() * &eig.eigenvectors;
    let eigenvectors = DMatrix::from_fn(n, n, |r, col| vecs[(r, order[col])]);

    let dinv_c = chol.solve(&c.matrix);
    let mut eigenvalues: Vec<Complex64> = dinv_c.complex_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));

    let zero_index = (0..n).min_by(|&i, &j| symmetric[i].abs().total_cmp(&symmetric[j].abs())).unwrap_or(0);
    let v = eigenvectors.column(zero_index);
    let constant_alignment = if n > 0 { v.sum().abs() / (v.norm() * (n as f64).sqrt()) } else { 0.0 };

    let mut out = PlasmonicPencil { eigenvalues, symmetric, eigenvectors, zero_index, constant_alignment };
    if let Some(k) = count {
        let k = k.min(n);
        out.eigenvalues = out.eigenvalues[n - k..].to_vec();
    }
    Ok(out)
}
