//! Exact piecewise-polynomial calculus on finite trees.
//!
//! Each edge carries a polynomial in the shifted coordinate `s = t − (L_{n,k} − ℓ_{n,k})`,
//! so `s ∈ [0, ℓ_{n,k}]` runs from the parent vertex to `X_{n,k}`.
//! Harmonic and Poisson solves eliminate the tree from the leaves upward, which
//! costs O(#edges) and produces no fill-in.

use crate::error::{Error, Result};
use crate::interface::{MultiscaleDecomposition, PiecewiseConstantFn};
use crate::poly::Poly;
use crate::quadrature;
use crate::tree_model::{EdgeRef, FiniteTree, TreeKind};
use nalgebra::DMatrix;
use num_complex::Complex64;
use std::fmt::Write as _;
use std::sync::Arc;

pub const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct TreeFunction {
    pub tree: Arc<FiniteTree>,
    pub edges: Vec<Poly>,
}

impl TreeFunction {
    pub fn zero(tree: Arc<FiniteTree>) -> Self {
        let n = tree.num_edges();
        TreeFunction { tree, edges: vec![Poly::zero(); n] }
    }

    pub fn from_edges(tree: Arc<FiniteTree>, edges: Vec<Poly>) -> Result<Self> {
        if edges.len() != tree.num_edges() {
            return Err(Error::DepthMismatch { expected: tree.num_edges(), got: edges.len() });
        }
        Ok(TreeFunction { tree, edges })
    }

    /// Piecewise-linear function with the given root value and vertex values `X_e` (indexed by edge).
    pub fn piecewise_linear(tree: Arc<FiniteTree>, root_value: f64, vertex: &[f64]) -> Self {
        let edges = (0..tree.num_edges())
            .map(|i| {
                let start = tree.parent_index(i).map_or(root_value, |q| vertex[q]);
                Poly::linear(start, (vertex[i] - start) / tree.length(i))
            })
            .collect();
        TreeFunction { tree, edges }
    }

    pub fn degree(&self) -> usize {
        self.edges.iter().map(Poly::degree).max().unwrap_or(0)
    }

    pub fn eval(&self, edge: usize, s: f64) -> f64 {
        self.edges[edge].eval(s)
    }

    pub fn root_value(&self) -> f64 {
        self.edges[0].eval(0.0)
    }

    /// Value at the far vertex X_e of edge `i`.
    pub fn vertex_value(&self, i: usize) -> f64 {
        self.edges[i].eval(self.tree.length(i))
    }

    pub fn leaf_values(&self) -> Vec<f64> {
        let t = &self.tree;
        (0..t.num_leaves()).map(|k| self.vertex_value(t.leaf_index(k))).collect()
    }

    /// Largest jump between parent end value and child start value, relative to the function scale.
    pub fn continuity_defect(&self) -> f64 {
        let t = &self.tree;
        let scale = self.edges.iter().map(Poly::max_abs_coeff).fold(1.0, f64::max);
        let mut worst: f64 = 0.0;
        for i in 0..t.num_interior() {
            let v = self.vertex_value(i);
            for c in t.children(i) {
                worst = worst.max((self.edges[c].eval(0.0) - v).abs());
            }
        }
        worst / scale
    }

    pub fn scale(&self, a: f64) -> TreeFunction {
        TreeFunction {
            tree: self.tree.clone(),
            edges: self.edges.iter().map(|p| p.scale(a)).collect(),
        }
    }

    pub fn add(&self, other: &TreeFunction) -> TreeFunction {
        TreeFunction {
            tree: self.tree.clone(),
            edges: self.edges.iter().zip(&other.edges).map(|(a, b)| a + b).collect(),
        }
    }

    /// Weighted ∫_T f g dμ, exact.
    pub fn inner(&self, other: &TreeFunction) -> f64 {
        (0..self.tree.num_edges())
            .map(|i| self.tree.weight(i) * (&self.edges[i] * &other.edges[i]).integral(self.tree.length(i)))
            .sum()
    }

    /// Weighted ∫_T f′ g′ dμ, exact.
    pub fn gradient_inner(&self, other: &TreeFunction) -> f64 {
        (0..self.tree.num_edges())
            .map(|i| {
                let d = &self.edges[i].derivative() * &other.edges[i].derivative();
                self.tree.weight(i) * d.integral(self.tree.length(i))
            })
            .sum()
    }

    /// CSV with columns n,k,coeff_index,value.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,k,coeff_index,value\n");
        for (i, p) in self.edges.iter().enumerate() {
            let e = self.tree.edge(i);
            for (j, c) in p.coeffs.iter().enumerate() {
                let _ = writeln!(out, "{},{},{},{}", e.n, e.k, j, crate::csv::fmt_f64(*c));
            }
        }
        out
    }
}

pub fn l2_norm(f: &TreeFunction) -> f64 {
    f.inner(f).max(0.0).sqrt()
}

pub fn h1_seminorm(f: &TreeFunction) -> f64 {
    f.gradient_inner(f).max(0.0).sqrt()
}

/// Kirchhoff residuals ρ_e = ω_e f′_e(L⁻) − Σ_j ω_j f′_j(L⁺) at interior vertices, indexed by edge.
#[derive(Debug, Clone)]
pub struct KirchhoffResidual {
    pub values: Vec<f64>,
    /// Largest individual flux term, used as the tolerance scale.
    pub scale: f64,
}

impl KirchhoffResidual {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn kirchhoff_residual(f: &TreeFunction) -> KirchhoffResidual {
    let t = &f.tree;
    let mut scale: f64 = 0.0;
    let values = (0..t.num_interior())
        .map(|i| {
            let out = t.weight(i) * f.edges[i].derivative().eval(t.length(i));
            scale = scale.max(out.abs());
            let mut inflow = 0.0;
            for c in t.children(i) {
                let term = t.weight(c) * f.edges[c].derivative().eval(0.0);
                scale = scale.max(term.abs());
                inflow += term;
            }
            out - inflow
        })
        .collect();
    KirchhoffResidual { values, scale }
}

/// Per-edge second derivative together with the Kirchhoff residuals.
pub fn laplacian(f: &TreeFunction) -> (TreeFunction, KirchhoffResidual) {
    let edges = f.edges.iter().map(|p| p.derivative().derivative()).collect();
    (TreeFunction { tree: f.tree.clone(), edges }, kirchhoff_residual(f))
}

/// Leaf-to-root elimination of the clamped weighted graph Laplacian.
///
/// For each edge `e` with far vertex value `x_e`, elimination yields `x_e = a_e x_parent + b_e`.
#[derive(Debug, Clone)]
pub struct TreeSolver {
    tree: Arc<FiniteTree>,
    a: Vec<f64>,
    d: Vec<f64>,
}

impl TreeSolver {
    pub fn new(tree: Arc<FiniteTree>) -> Self {
        let m = tree.num_edges();
        let mut a = vec![0.0; m];
        let mut d = vec![0.0; m];
        for i in (0..tree.num_interior()).rev() {
            let c = tree.conductance(i);
            let mut di = c;
            for j in tree.children(i) {
                di += tree.conductance(j) * (1.0 - a[j]);
            }
            d[i] = di;
            a[i] = c / di;
        }
        TreeSolver { tree, a, d }
    }

    pub fn tree(&self) -> &Arc<FiniteTree> {
        &self.tree
    }

    /// Vertex values for interior loads `q` (length num_interior), leaf values and root value.
    pub fn solve(&self, q: Option<&[f64]>, leaf_values: &[f64], root_value: f64) -> Vec<f64> {
        let t = &self.tree;
        let m = t.num_edges();
        let ni = t.num_interior();
        let mut b = vec![0.0; m];
        b[ni..].copy_from_slice(leaf_values);
        for i in (0..ni).rev() {
            let mut acc = q.map_or(0.0, |q| q[i]);
            for j in t.children(i) {
                acc += t.conductance(j) * b[j];
            }
            b[i] = acc / self.d[i];
        }
        let mut x = vec![0.0; m];
        for i in 0..m {
            let parent = t.parent_index(i).map_or(root_value, |q| x[q]);
            x[i] = self.a[i] * parent + b[i];
        }
        x
    }
}

pub fn solve_harmonic_dirichlet(tree: &Arc<FiniteTree>, leaf_values: &[f64], root_value: f64) -> Result<TreeFunction> {
    harmonic_with(&TreeSolver::new(tree.clone()), leaf_values, root_value)
}

pub fn harmonic_with(solver: &TreeSolver, leaf_values: &[f64], root_value: f64) -> Result<TreeFunction> {
    let tree = solver.tree();
    if leaf_values.len() != tree.num_leaves() {
        return Err(Error::DepthMismatch { expected: tree.num_leaves(), got: leaf_values.len() });
    }
    let x = solver.solve(None, leaf_values, root_value);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    Ok(TreeFunction::piecewise_linear(tree.clone(), root_value, &x))
}

/// Solves Δu = source with u(o) = 0, zero leaf values and Kirchhoff conditions at interior vertices.
pub fn solve_poisson_zero_trace(tree: &Arc<FiniteTree>, source: &TreeFunction) -> Result<TreeFunction> {
    poisson_with(&TreeSolver::new(tree.clone()), source)
}

pub fn poisson_with(solver: &TreeSolver, source: &TreeFunction) -> Result<TreeFunction> {
    let t = solver.tree();
    if source.edges.len() != t.num_edges() {
        return Err(Error::DepthMismatch { expected: t.num_edges(), got: source.edges.len() });
    }
    let part: Vec<Poly> = source.edges.iter().map(|h| h.antiderivative().antiderivative()).collect();
    let end_val: Vec<f64> = (0..t.num_edges()).map(|i| part[i].eval(t.length(i))).collect();
    let q: Vec<f64> = (0..t.num_interior())
        .map(|i| {
            let l = t.length(i);
            let mut v = -t.weight(i) * (part[i].derivative().eval(l) - end_val[i] / l);
            for j in t.children(i) {
                v -= t.weight(j) * end_val[j] / t.length(j);
            }
            v
        })
        .collect();
    let x = solver.solve(Some(&q), &vec![0.0; t.num_leaves()], 0.0);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    let edges = (0..t.num_edges())
        .map(|i| {
            let l = t.length(i);
            let start = t.parent_index(i).map_or(0.0, |q| x[q]);
            let corr = Poly::linear(start, (x[i] - start - end_val[i]) / l);
            &part[i] + &corr
        })
        .collect();
    Ok(TreeFunction { tree: t.clone(), edges })
}

/// Leaf values as a cell function at the tree depth.
pub fn gamma0_n(f: &TreeFunction, decomp: &MultiscaleDecomposition) -> Result<PiecewiseConstantFn> {
    let depth = f.tree.depth();
    if decomp.p != f.tree.p() || depth > decomp.max_level {
        return Err(Error::DepthMismatch { expected: decomp.max_level, got: depth });
    }
    Ok(PiecewiseConstantFn::from_real(decomp.p, depth, &f.leaf_values()))
}

/// γ₁ leaf density h_K = (ω_{N,K}/|Γ_{N,K}|) u′_{N,K}(L⁻).
#[derive(Debug, Clone)]
pub struct LeafDensity {
    pub level: usize,
    pub cell_measure: f64,
    pub values: Vec<f64>,
}

impl LeafDensity {
    /// ∫_{Γ_{N,K}} h ds for every leaf cell.
    pub fn cell_integrals(&self) -> Vec<f64> {
        self.values.iter().map(|v| v * self.cell_measure).collect()
    }
}

/// Integrated leaf fluxes ω_K u′_K(L⁻), no Kirchhoff check.
pub fn leaf_fluxes(f: &TreeFunction) -> Vec<f64> {
    let t = &f.tree;
    (0..t.num_leaves())
        .map(|k| {
            let i = t.leaf_index(k);
            t.weight(i) * f.edges[i].derivative().eval(t.length(i))
        })
        .collect()
}

pub fn gamma1_n(f: &TreeFunction, decomp: &MultiscaleDecomposition) -> Result<LeafDensity> {
    let t = &f.tree;
    if decomp.p != t.p() || t.depth() > decomp.max_level {
        return Err(Error::DepthMismatch { expected: decomp.max_level, got: t.depth() });
    }
    let res = kirchhoff_residual(f);
    let tol = RESIDUAL_TOL * res.scale.max(1e-300);
    if let Some((i, r)) = res.values.iter().enumerate().find(|(_, r)| r.abs() > tol.max(1e-14)) {
        let e = t.edge(i);
        return Err(Error::KirchhoffViolated { n: e.n, k: e.k, residual: *r, tolerance: tol });
    }
    let cell = decomp.cell_measure(t.depth());
    Ok(LeafDensity {
        level: t.depth(),
        cell_measure: cell,
        values: leaf_fluxes(f).into_iter().map(|v| v / cell).collect(),
    })
}

#[derive(Debug, Clone, Copy)]
pub struct GreenIdentity {
    /// Σ_K ω_K u′_K(L⁻) v(X_K)
    pub boundary_pairing: f64,
    pub volume_term: f64,
    pub gradient_term: f64,
    pub defect: f64,
    /// ‖u‖_{H¹Δ}·‖v‖_{H¹}
    pub scale: f64,
}

/// Green identity (γ₁u, γ₀v) = ∫(Δu)v + ∫u′v′; meaningful when v(o) = 0 and u satisfies Kirchhoff.
pub fn green_identity_check(u: &TreeFunction, v: &TreeFunction) -> GreenIdentity {
    let fluxes = leaf_fluxes(u);
    let boundary_pairing: f64 = fluxes.iter().zip(v.leaf_values()).map(|(a, b)| a * b).sum();
    let (lap, _) = laplacian(u);
    let volume_term = lap.inner(v);
    let gradient_term = u.gradient_inner(v);
    let norm_u = (u.inner(u) + u.gradient_inner(u) + lap.inner(&lap)).sqrt();
    let norm_v = (v.inner(v) + v.gradient_inner(v)).sqrt();
    GreenIdentity {
        boundary_pairing,
        volume_term,
        gradient_term,
        defect: (boundary_pairing - volume_term - gradient_term).abs(),
        scale: norm_u * norm_v,
    }
}

/// Radial harmonic extension on a geometric tree together with its closed-form record.
#[derive(Debug, Clone)]
pub struct RadialHarmonic {
    pub function: TreeFunction,
    /// Total flux through the root edge of this finite tree.
    pub flux: f64,
    /// Flux of the infinite geometric tree with the same boundary value: b ω0 (1−r)/L0.
    pub infinite_flux: f64,
    /// Root-to-leaf resistance of this tree.
    pub resistance: f64,
}

/// Closed-form radial solution with root value 0 and leaf value `boundary_value`.
pub fn radial_harmonic(tree: &Arc<FiniteTree>, boundary_value: f64) -> Result<RadialHarmonic> {
    let params = &tree.params;
    if params.has_overrides() {
        return Err(Error::NotGeometric("per-edge overrides present".into()));
    }
    let r = params.r();
    let unit = params.l0 / params.omega0;
    let depth = tree.depth();
    // cumulative resistance to the end of generation n, in units of L0/ω0
    let cum = |n: usize| -> f64 {
        if r == 1.0 {
            (n + 1) as f64
        } else {
            (1.0 - r.powi(n as i32 + 1)) / (1.0 - r)
        }
    };
    let total = match tree.kind {
        TreeKind::Truncated => cum(depth),
        TreeKind::Condensed => cum(depth - 1) + r.powi(depth as i32) * params.condensation_factor(),
    };
    let vertex: Vec<f64> = (0..tree.num_edges())
        .map(|i| {
            let n = tree.edge(i).n;
            if n == depth {
                boundary_value
            } else {
                boundary_value * cum(n) / total
            }
        })
        .collect();
    let resistance = unit * total;
    Ok(RadialHarmonic {
        function: TreeFunction::piecewise_linear(tree.clone(), 0.0, &vertex),
        flux: boundary_value / resistance,
        infinite_flux: boundary_value * params.omega0 * (1.0 - r) / params.l0,
        resistance,
    })
}

/// The root bump u1 = (1 − s/ℓ00)² on the root edge, zero elsewhere.
pub fn root_bump(tree: &Arc<FiniteTree>) -> TreeFunction {
    let mut f = TreeFunction::zero(tree.clone());
    let l = tree.length(0);
    f.edges[0] = Poly::new(vec![1.0, -2.0 / l, 1.0 / (l * l)]);
    f
}

/// Poincaré constant 1/√a_N from piecewise-cubic elements vanishing at the root.
pub fn poincare_constant(tree: &Arc<FiniteTree>) -> Result<f64> {
    let t = tree;
    let m = t.num_edges();
    let ndof = 3 * m;
    // local basis on x ∈ [0,1]: start vertex, end vertex, two bubbles
    let basis = [
        Poly::new(vec![1.0, -1.0]),
        Poly::new(vec![0.0, 1.0]),
        Poly::new(vec![0.0, 1.0, -1.0]),
        Poly::new(vec![0.0, -1.0, 3.0, -2.0]),
    ];
    let mut k_ref = [[0.0; 4]; 4];
    let mut m_ref = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            k_ref[a][b] = (&basis[a].derivative() * &basis[b].derivative()).integral(1.0);
            m_ref[a][b] = (&basis[a] * &basis[b]).integral(1.0);
        }
    }
    let mut kmat = DMatrix::<f64>::zeros(ndof, ndof);
    let mut mmat = DMatrix::<f64>::zeros(ndof, ndof);
    for i in 0..m {
        let (l, w) = (t.length(i), t.weight(i));
        let dofs = [t.parent_index(i), Some(i), Some(m + 2 * i), Some(m + 2 * i + 1)];
        for a in 0..4 {
            for b in 0..4 {
                if let (Some(da), Some(db)) = (dofs[a], dofs[b]) {
                    kmat[(da, db)] += w / l * k_ref[a][b];
                    mmat[(da, db)] += w * l * m_ref[a][b];
                }
            }
        }
    }
    let chol = mmat.cholesky().ok_or_else(|| Error::Numerical("mass matrix not SPD".into()))?;
    let linv = chol
        .l()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("mass factor not invertible".into()))?;
    let reduced = &linv * kmat * linv.transpose();
    let sym = (&reduced + reduced.transpose()) * 0.5;
    let a_min = sym.symmetric_eigenvalues().min();
    if a_min <= 0.0 {
        return Err(Error::Numerical(format!("nonpositive Poincaré eigenvalue {a_min}")));
    }
    Ok(1.0 / a_min.sqrt())
}

/// Complex-valued tree function stored as real and imaginary parts.
#[derive(Debug, Clone)]
pub struct ComplexTreeFunction {
    pub re: TreeFunction,
    pub im: TreeFunction,
}

impl ComplexTreeFunction {
    pub fn from_real(f: TreeFunction) -> Self {
        let im = TreeFunction::zero(f.tree.clone());
        ComplexTreeFunction { re: f, im }
    }

    /// self + c·f for real f.
    pub fn add_scaled(&self, c: Complex64, f: &TreeFunction) -> Self {
        ComplexTreeFunction { re: self.re.add(&f.scale(c.re)), im: self.im.add(&f.scale(c.im)) }
    }

    pub fn add(&self, o: &ComplexTreeFunction) -> Self {
        ComplexTreeFunction { re: self.re.add(&o.re), im: self.im.add(&o.im) }
    }

    pub fn leaf_values(&self) -> Vec<Complex64> {
        self.re
            .leaf_values()
            .into_iter()
            .zip(self.im.leaf_values())
            .map(|(a, b)| Complex64::new(a, b))
            .collect()
    }

    pub fn leaf_fluxes(&self) -> Vec<Complex64> {
        leaf_fluxes(&self.re)
            .into_iter()
            .zip(leaf_fluxes(&self.im))
            .map(|(a, b)| Complex64::new(a, b))
            .collect()
    }

    pub fn is_real(&self) -> bool {
        self.im.edges.iter().all(Poly::is_zero)
    }
}

/// Gauss–Legendre evaluation of ∫(Δu)v and ∫u′v′, independent of exact polynomial products.
pub fn quadrature_green_terms(u: &TreeFunction, v: &TreeFunction, nodes: usize) -> (f64, f64) {
    let rule = quadrature::rule(nodes);
    let t = &u.tree;
    let (mut vol, mut grad) = (0.0, 0.0);
    for i in 0..t.num_edges() {
        let (du, ddu, dv) = (u.edges[i].derivative(), u.edges[i].derivative().derivative(), v.edges[i].derivative());
        let w = t.weight(i);
        vol += w * quadrature::integrate(&rule, 0.0, t.length(i), |s| ddu.eval(s) * v.edges[i].eval(s));
        grad += w * quadrature::integrate(&rule, 0.0, t.length(i), |s| du.eval(s) * dv.eval(s));
    }
    (vol, grad)
}

/// Value of `f` at generation-n vertices, useful for radial checks.
pub fn generation_values(f: &TreeFunction, n: usize) -> Vec<f64> {
    let t = &f.tree;
    (0..t.generation_size(n)).map(|k| f.vertex_value(t.index(EdgeRef::new(n, k)))).collect()
}
