//! p-adic rooted metric trees: parameters, structural validation and finite sections.
//!
//! Edge `(n, k)` lives in generation `n` with `0 <= k < p^n`; its children are
//! `(n + 1, p k + j)`. Geometric generations carry length `L0 ℓ^n` and weight `ω0 ω^n`.

use crate::error::{Error, Result};
use std::collections::BTreeMap;

/// Edge coordinates `(n, k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeRef {
    pub n: usize,
    pub k: usize,
}

impl EdgeRef {
    pub const ROOT: EdgeRef = EdgeRef { n: 0, k: 0 };

    pub fn new(n: usize, k: usize) -> Self {
        EdgeRef { n, k }
    }

    pub fn parent(self, p: usize) -> Option<EdgeRef> {
        (self.n > 0).then(|| EdgeRef::new(self.n - 1, self.k / p))
    }

    pub fn child(self, p: usize, j: usize) -> EdgeRef {
        EdgeRef::new(self.n + 1, p * self.k + j)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeParams {
    pub p: usize,
    pub ell: f64,
    pub omega: f64,
    pub l0: f64,
    pub omega0: f64,
    /// First generation from which the tree is geometric.
    pub n1: usize,
    /// Absolute edge lengths for generations below `n1`.
    pub length_overrides: BTreeMap<EdgeRef, f64>,
    /// Absolute edge weights for generations below `n1`.
    pub weight_overrides: BTreeMap<EdgeRef, f64>,
}

impl TreeParams {
    pub fn geometric(p: usize, ell: f64, omega: f64, l0: f64, omega0: f64) -> Self {
        TreeParams {
            p,
            ell,
            omega,
            l0,
            omega0,
            n1: 0,
            length_overrides: BTreeMap::new(),
            weight_overrides: BTreeMap::new(),
        }
    }

    /// The reference tree p=2, ℓ=0.5, ω=0.4, L0=ω0=1.
    pub fn reference() -> Self {
        TreeParams::geometric(2, 0.5, 0.4, 1.0, 1.0)
    }

    pub fn has_overrides(&self) -> bool {
        !self.length_overrides.is_empty() || !self.weight_overrides.is_empty()
    }

    pub fn length(&self, e: EdgeRef) -> f64 {
        self.length_overrides
            .get(&e)
            .copied()
            .unwrap_or_else(|| self.l0 * self.ell.powi(e.n as i32))
    }

    pub fn weight(&self, e: EdgeRef) -> f64 {
        self.weight_overrides
            .get(&e)
            .copied()
            .unwrap_or_else(|| self.omega0 * self.omega.powi(e.n as i32))
    }

    /// r = ℓ/(pω).
    pub fn r(&self) -> f64 {
        self.ell / (self.p as f64 * self.omega)
    }

    /// σ = ½(1 − (ln ℓ − ln ω)/ln p); undefined for p = 1.
    pub fn sigma(&self) -> Option<f64> {
        (self.p >= 2)
            .then(|| 0.5 * (1.0 - (self.ell.ln() - self.omega.ln()) / (self.p as f64).ln()))
    }

    /// Leaf-length factor 1/(1 − r) of the condensed tree.
    pub fn condensation_factor(&self) -> f64 {
        1.0 / (1.0 - self.r())
    }

    /// Scales every weight (including overrides) by `s`.
    pub fn with_weight_scale(&self, s: f64) -> TreeParams {
        let mut q = self.clone();
        q.omega0 *= s;
        for w in q.weight_overrides.values_mut() {
            *w *= s;
        }
        q
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub sigma: Option<f64>,
    pub r: f64,
    pub min_c: f64,
    pub checks: Vec<ConditionCheck>,
    /// Set for p = 1, where trace-related checks are skipped.
    pub oracle_only: bool,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&ConditionCheck> {
        self.checks.iter().find(|c| !c.passed)
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::NonPositiveParameter { name: name.into(), value: v })
    }
}

/// Evaluates every structural condition without failing on violations.
pub fn evaluate_params(params: &TreeParams) -> Result<ValidationReport> {
    if params.p == 0 {
        return Err(Error::NonPositiveParameter { name: "p".into(), value: 0.0 });
    }
    positive("ell", params.ell)?;
    positive("omega", params.omega)?;
    positive("L0", params.l0)?;
    positive("omega0", params.omega0)?;
    for (e, v) in &params.length_overrides {
        positive(&format!("override.{}.{}.length", e.n, e.k), *v)?;
    }
    for (e, v) in &params.weight_overrides {
        positive(&format!("override.{}.{}.weight", e.n, e.k), *v)?;
    }

    let p = params.p as f64;
    let (ell, omega) = (params.ell, params.omega);
    let mut checks = vec![
        ConditionCheck {
            name: "ell < 1",
            passed: ell < 1.0,
            detail: format!("ell = {ell}"),
        },
        ConditionCheck {
            name: "ell < omega*p",
            passed: ell < omega * p,
            detail: format!("ell = {ell}, omega*p = {}", omega * p),
        },
        ConditionCheck {
            name: "omega*p < 1/ell",
            passed: omega * p < 1.0 / ell,
            detail: format!("omega*p = {}, 1/ell = {}", omega * p, 1.0 / ell),
        },
    ];

    let mut override_ok = true;
    let mut min_c: f64 = 1.0;
    for (e, v) in &params.length_overrides {
        override_ok &= e.n < params.n1 && e.k < params.p.pow(e.n as u32);
        let ratio = v / (params.l0 * ell.powi(e.n as i32));
        min_c = min_c.max(ratio).max(1.0 / ratio);
    }
    for (e, v) in &params.weight_overrides {
        override_ok &= e.n < params.n1 && e.k < params.p.pow(e.n as u32);
        let ratio = v / (params.omega0 * omega.powi(e.n as i32));
        min_c = min_c.max(ratio).max(1.0 / ratio);
    }
    checks.push(ConditionCheck {
        name: "overrides below N1",
        passed: override_ok,
        detail: format!("N1 = {}", params.n1),
    });
    checks.push(ConditionCheck {
        name: "C-corridor",
        passed: min_c.is_finite(),
        detail: format!("minimal C = {min_c}"),
    });

    let sigma = params.sigma();
    if let Some(s) = sigma {
        checks.push(ConditionCheck {
            name: "sigma*d < 1/2",
            passed: s < 0.5,
            detail: format!("sigma = {s}, d = 1"),
        });
    }

    Ok(ValidationReport {
        sigma,
        r: params.r(),
        min_c,
        checks,
        oracle_only: params.p == 1,
    })
}

/// Validates the parameters; any violated structural inequality is an error.
pub fn validate_params(params: &TreeParams) -> Result<ValidationReport> {
    let report = evaluate_params(params)?;
    if let Some(c) = report.first_failure() {
        return Err(Error::StructuralConditionViolated {
            condition: format!("{} ({})", c.name, c.detail),
        });
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeKind {
    Truncated,
    Condensed,
}

/// A materialized finite section of the tree; edges stored generation by generation.
#[derive(Debug, Clone)]
pub struct FiniteTree {
    pub params: TreeParams,
    pub kind: TreeKind,
    depth: usize,
    offsets: Vec<usize>,
    lengths: Vec<f64>,
    weights: Vec<f64>,
    end_dist: Vec<f64>,
}

pub type TruncatedTree = FiniteTree;
pub type CondensedTree = FiniteTree;

impl FiniteTree {
    fn build(params: &TreeParams, depth: usize, kind: TreeKind) -> Self {
        let p = params.p;
        let mut offsets = Vec::with_capacity(depth + 2);
        let mut total = 0usize;
        for n in 0..=depth {
            offsets.push(total);
            total += p.pow(n as u32);
        }
        offsets.push(total);
        let mut lengths = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        let mut end_dist = Vec::with_capacity(total);
        let factor = params.condensation_factor();
        for n in 0..=depth {
            for k in 0..p.pow(n as u32) {
                let e = EdgeRef::new(n, k);
                let mut l = params.length(e);
                if kind == TreeKind::Condensed && n == depth {
                    l *= factor;
                }
                lengths.push(l);
                weights.push(params.weight(e));
                let start = if n == 0 { 0.0 } else { end_dist[offsets[n - 1] + k / p] };
                end_dist.push(start + l);
            }
        }
        FiniteTree { params: params.clone(), kind, depth, offsets, lengths, weights, end_dist }
    }

    pub fn p(&self) -> usize {
        self.params.p
    }

    /// Leaf generation.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn num_edges(&self) -> usize {
        self.lengths.len()
    }

    pub fn num_leaves(&self) -> usize {
        self.p().pow(self.depth as u32)
    }

    /// Non-leaf edges occupy indices `0..num_interior()`.
    pub fn num_interior(&self) -> usize {
        self.offsets[self.depth]
    }

    pub fn generation_size(&self, n: usize) -> usize {
        self.p().pow(n as u32)
    }

    pub fn index(&self, e: EdgeRef) -> usize {
        self.offsets[e.n] + e.k
    }

    pub fn edge(&self, i: usize) -> EdgeRef {
        let n = self.offsets.partition_point(|&o| o <= i) - 1;
        EdgeRef::new(n, i - self.offsets[n])
    }

    pub fn leaf_index(&self, k: usize) -> usize {
        self.offsets[self.depth] + k
    }

    pub fn parent_index(&self, i: usize) -> Option<usize> {
        let e = self.edge(i);
        e.parent(self.p()).map(|q| self.index(q))
    }

    /// Indices of the children of interior edge `i`.
    pub fn children(&self, i: usize) -> std::ops::Range<usize> {
        let e = self.edge(i);
        if e.n >= self.depth {
            return 0..0;
        }
        let first = self.offsets[e.n + 1] + self.p() * e.k;
        first..first + self.p()
    }

    pub fn length(&self, i: usize) -> f64 {
        self.lengths[i]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    /// Conductance ω_e/ℓ_e.
    pub fn conductance(&self, i: usize) -> f64 {
        self.weights[i] / self.lengths[i]
    }

    /// Root distance L_{n,k} of the far vertex X_{n,k}.
    pub fn end_distance(&self, i: usize) -> f64 {
        self.end_dist[i]
    }

    pub fn start_distance(&self, i: usize) -> f64 {
        self.end_dist[i] - self.lengths[i]
    }

    /// μ(T) = Σ ω_e ℓ_e.
    pub fn total_measure(&self) -> f64 {
        self.lengths.iter().zip(&self.weights).map(|(l, w)| l * w).sum()
    }
}

/// Finite section keeping generations `0..=n`.
pub fn build_truncated(params: &TreeParams, n: usize) -> FiniteTree {
    FiniteTree::build(params, n, TreeKind::Truncated)
}

/// The (N+1)-condensation: depth N+1 with leaf lengths multiplied by 1/(1−r).
pub fn build_condensed(params: &TreeParams, n: usize) -> Result<FiniteTree> {
    if n < params.n1 {
        return Err(Error::CondensationBelowGeometricGeneration { n, n1: params.n1 });
    }
    if params.r() >= 1.0 {
        return Err(Error::StructuralConditionViolated {
            condition: format!("r = ell/(p*omega) < 1 (r = {})", params.r()),
        });
    }
    Ok(FiniteTree::build(params, n + 1, TreeKind::Condensed))
}
