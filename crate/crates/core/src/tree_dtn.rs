//! Tree Dirichlet-to-Neumann matrices on V_N.
//!
//! Column L of a tree DtN matrix comes from the harmonic solve with unit data on leaf L;
//! entry `A[K][L] = ω_K u′_K(L⁻)` is the integrated leaf flux, since the density
//! factor `1/|Γ_K|` and the pairing factor `|Γ_K|` cancel.

use crate::error::{Error, Result};
use crate::tree_calculus::TreeSolver;
use crate::tree_model::{build_condensed, build_truncated, FiniteTree, TreeParams};
use nalgebra::DMatrix;
use rayon::prelude::*;
use std::sync::Arc;

/// Largest number of cells assembled densely without `allow_large`.
pub const DENSE_LIMIT: usize = 4096;

/// Dense pairing matrix A[K][L] = ∫_Γ (Op 1_L) 1_K ds on a level-N cell basis.
#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinOperator {
    pub p: usize,
    pub level: usize,
    pub matrix: DMatrix<f64>,
}

impl GalerkinOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// max |A − Aᵀ| / max |A|
    pub fn symmetry_defect(&self) -> f64 {
        let scale = self.matrix.amax().max(f64::MIN_POSITIVE);
        (&self.matrix - self.matrix.transpose()).amax() / scale
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.matrix.row_iter().map(|r| r.sum()).collect()
    }

    pub fn to_csv(&self) -> String {
        crate::csv::matrix_csv(&self.matrix)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AssemblyOptions {
    pub allow_large: bool,
}

fn check_size(cells: usize, opts: AssemblyOptions) -> Result<()> {
    if cells > DENSE_LIMIT && !opts.allow_large {
        return Err(Error::TooLarge { size: cells, limit: DENSE_LIMIT });
    }
    Ok(())
}

/// Leaf-flux DtN matrix of a finite tree with the root clamped to zero.
pub fn assemble_tree_dtn(tree: &Arc<FiniteTree>) -> DMatrix<f64> {
    let solver = TreeSolver::new(tree.clone());
    let leaves = tree.num_leaves();
    let columns: Vec<Vec<f64>> = (0..leaves)
        .into_par_iter()
        .map(|l| {
            let mut data = vec![0.0; leaves];
            data[l] = 1.0;
            let x = solver.solve(None, &data, 0.0);
            (0..leaves)
                .map(|k| {
                    let i = tree.leaf_index(k);
                    let parent = tree.parent_index(i).map_or(0.0, |q| x[q]);
                    tree.conductance(i) * (x[i] - parent)
                })
                .collect()
        })
        .collect();
    DMatrix::from_fn(leaves, leaves, |k, l| columns[l][k])
}

/// DtN of the (N+1)-condensation; level N+1.
pub fn condensed_dtn(params: &TreeParams, n: usize, opts: AssemblyOptions) -> Result<GalerkinOperator> {
    check_size(params.p.pow(n as u32 + 1), opts)?;
    let tree = Arc::new(build_condensed(params, n)?);
    Ok(GalerkinOperator { p: params.p, level: n + 1, matrix: assemble_tree_dtn(&tree) })
}

/// DtN of the truncated tree with `generations` edge generations; leaf level `generations − 1`.
pub fn truncated_dtn(params: &TreeParams, generations: usize, opts: AssemblyOptions) -> Result<GalerkinOperator> {
    if generations == 0 {
        return Err(Error::InvalidParameter("truncated DtN needs at least one edge generation".into()));
    }
    let level = generations - 1;
    check_size(params.p.pow(level as u32), opts)?;
    let tree = Arc::new(build_truncated(params, level));
    Ok(GalerkinOperator { p: params.p, level, matrix: assemble_tree_dtn(&tree) })
}

/// Infinite-tree DtN on V_level, obtained from the shallowest exact condensation.
pub fn exact_dtn(params: &TreeParams, level: usize, opts: AssemblyOptions) -> Result<GalerkinOperator> {
    let fine = level.max(params.n1 + 1).max(1);
    let op = condensed_dtn(params, fine - 1, opts)?;
    Ok(compress(&op, level))
}

/// Galerkin restriction EᵀAE to a coarser level.
pub fn compress(op: &GalerkinOperator, level: usize) -> GalerkinOperator {
    assert!(level <= op.level, "compression target above operator level");
    let f = op.p.pow((op.level - level) as u32);
    let n = op.dim() / f;
    let a = &op.matrix;
    let m = DMatrix::from_fn(n, n, |k, l| {
        let mut s = 0.0;
        for i in k * f..(k + 1) * f {
            for j in l * f..(l + 1) * f {
                s += a[(i, j)];
            }
        }
        s
    });
    GalerkinOperator { p: op.p, level, matrix: m }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    TreeDtn,
    ExteriorDtn,
}

#[derive(Debug, Clone, Copy)]
pub struct CoercivityReport {
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub symmetry_defect: f64,
    /// max |A·1| (relevant for the exterior DtN)
    pub constant_residual: f64,
    pub passed: bool,
}

pub fn coercivity_check(op: &GalerkinOperator, kind: OperatorKind) -> CoercivityReport {
    let sym = (&op.matrix + op.matrix.transpose()) * 0.5;
    let eig = sym.symmetric_eigenvalues();
    let (min, max) = (eig.min(), eig.max());
    let constant_residual = op.row_sums().iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    let scale = op.matrix.amax().max(f64::MIN_POSITIVE);
    let passed = match kind {
        OperatorKind::TreeDtn => min > 0.0,
        OperatorKind::ExteriorDtn => max <= 1e-12 * scale && constant_residual <= 1e-10,
    };
    CoercivityReport {
        min_eigenvalue: min,
        max_eigenvalue: max,
        symmetry_defect: op.symmetry_defect(),
        constant_residual,
        passed,
    }
}

/// Frobenius norm of A − B.
pub fn operator_difference(a: &GalerkinOperator, b: &GalerkinOperator) -> f64 {
    (&a.matrix - &b.matrix).norm()
}

#[derive(Debug, Clone)]
pub struct RateFit {
    pub levels: Vec<usize>,
    /// Level on which truncated and exact operators are compared.
    pub comparison_level: usize,
    /// ‖compressed truncated − exact‖_F for each truncation leaf level
    pub differences: Vec<f64>,
    /// −slope of ln(difference) against the level
    pub decay_per_level: f64,
    /// decay_per_level / ln p, for p ≥ 2
    pub rho_hat: Option<f64>,
    /// root-mean-square residual of the log fit
    pub residual: f64,
}

/// Least-squares slope and RMS residual of y against x.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let icept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - icept - slope * a).powi(2)).sum();
    (slope, icept, (rss / n).sqrt())
}

/// Geometric decay of the truncated-tree DtN towards the infinite-tree DtN.
///
/// Both operators are compressed to the shallowest requested level: leaf-level entries of the
/// truncated DtN keep an O(1) relative error, so convergence holds only in this weak sense.
pub fn dtn_convergence_rate(params: &TreeParams, levels: &[usize], opts: AssemblyOptions) -> Result<RateFit> {
    let mut levels: Vec<usize> = levels.to_vec();
    levels.sort_unstable();
    levels.dedup();
    if levels.len() < 3 {
        return Err(Error::InsufficientDepths { required: 3, got: levels.len() });
    }
    let comparison_level = levels[0];
    let reference = exact_dtn(params, comparison_level, opts)?;
    let mut differences = Vec::with_capacity(levels.len());
    for &lvl in &levels {
        let trunc = truncated_dtn(params, lvl + 1, opts)?;
        differences.push(operator_difference(&compress(&trunc, comparison_level), &reference));
    }
    let x: Vec<f64> = levels.iter().map(|&l| l as f64).collect();
    let y: Vec<f64> = differences.iter().map(|d| d.ln()).collect();
    let (slope, _, residual) = fit_line(&x, &y);
    let decay = -slope;
    Ok(RateFit {
        levels,
        comparison_level,
        differences,
        decay_per_level: decay,
        rho_hat: (params.p >= 2).then(|| decay / (params.p as f64).ln()),
        residual,
    })
}
