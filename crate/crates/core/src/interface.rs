//! The interface circle of radius R with its p-adic arc decomposition.
//!
//! Cell `(n, k)` is the arc of angles `[2πk/pⁿ, 2π(k+1)/pⁿ)` with length `2πR/pⁿ`.
//! Fourier convention: `g(θ) = Σ ĝ_k e^{ikθ}`, so `‖g‖²_{L²} = 2πR Σ |ĝ_k|²`.

use crate::error::{Error, Result};
use crate::tree_calculus::{ComplexTreeFunction, TreeFunction};
use crate::tree_model::FiniteTree;
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq)]
pub struct MultiscaleDecomposition {
    pub radius: f64,
    pub p: usize,
    pub max_level: usize,
}

/// Chart level N₀ for arclength charts on the circle.
pub const CHART_LEVEL: usize = 1;

#[derive(Debug, Clone)]
pub struct DecompositionReport {
    pub c1: f64,
    pub c2: f64,
    /// max over checked cells of diam(Γ_{n,k})·pⁿ
    pub max_diam_ratio: f64,
    /// max over sampled shifts of |U∖(U+h)|/|h|
    pub max_overlap_ratio: f64,
    pub partition_ok: bool,
    pub measure_ok: bool,
}

impl DecompositionReport {
    pub fn passed(&self) -> bool {
        self.partition_ok && self.measure_ok && self.max_diam_ratio <= self.c1 && self.max_overlap_ratio <= self.c2
    }
}

impl MultiscaleDecomposition {
    pub fn new(radius: f64, p: usize, max_level: usize) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::NonPositiveParameter { name: "radius".into(), value: radius });
        }
        if p < 2 {
            return Err(Error::InvalidParameter("interface decompositions need p >= 2".into()));
        }
        Ok(MultiscaleDecomposition { radius, p, max_level })
    }

    pub fn cells(&self, n: usize) -> usize {
        self.p.pow(n as u32)
    }

    pub fn cell_measure(&self, n: usize) -> f64 {
        2.0 * PI * self.radius / (self.p as f64).powi(n as i32)
    }

    pub fn total_measure(&self) -> f64 {
        2.0 * PI * self.radius
    }

    /// Angular interval of cell (n, k).
    pub fn cell_arc(&self, n: usize, k: usize) -> (f64, f64) {
        arc(self.p, n, k)
    }

    /// Checks nesting, measures, the diameter bound with c₁ = 2πR and the overlap bound with c₂ = 1.
    pub fn verify_conditions(&self) -> DecompositionReport {
        let r = self.radius;
        let top = self.max_level.min(10);
        let mut partition_ok = true;
        let mut measure_ok = true;
        let mut max_diam_ratio: f64 = 0.0;
        for n in 0..=top {
            let scale = (self.p as f64).powi(n as i32);
            for k in 0..self.cells(n) {
                let (a, b) = self.cell_arc(n, k);
                let len = r * (b - a);
                measure_ok &= (len - self.cell_measure(n)).abs() <= 1e-12 * self.total_measure();
                let chord = if b - a >= PI { 2.0 * r } else { 2.0 * r * ((b - a) / 2.0).sin() };
                max_diam_ratio = max_diam_ratio.max(chord * scale);
                if n < top {
                    let (c0, _) = self.cell_arc(n + 1, self.p * k);
                    let (_, c1) = self.cell_arc(n + 1, self.p * k + self.p - 1);
                    partition_ok &= (c0 - a).abs() < 1e-14 && (c1 - b).abs() < 1e-13;
                    for j in 0..self.p - 1 {
                        let (_, e) = self.cell_arc(n + 1, self.p * k + j);
                        let (s, _) = self.cell_arc(n + 1, self.p * k + j + 1);
                        partition_ok &= (e - s).abs() < 1e-14;
                    }
                }
            }
        }
        let mut max_overlap_ratio: f64 = 0.0;
        for n in 0..=top {
            let width = 2.0 * PI / (self.p as f64).powi(n as i32);
            for frac in [1e-3, 0.1, 0.5, 0.9, 1.5] {
                let shift = frac * width;
                let lost = r * shift.min(width);
                max_overlap_ratio = max_overlap_ratio.max(lost / (r * shift));
            }
        }
        DecompositionReport {
            c1: 2.0 * PI * r,
            c2: 1.0,
            max_diam_ratio,
            max_overlap_ratio,
            partition_ok,
            measure_ok,
        }
    }
}

fn arc(p: usize, n: usize, k: usize) -> (f64, f64) {
    let m = (p as f64).powi(n as i32);
    (2.0 * PI * k as f64 / m, 2.0 * PI * (k + 1) as f64 / m)
}

/// Element of V_N: one complex value per level-N cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstantFn {
    pub p: usize,
    pub level: usize,
    pub values: Vec<Complex64>,
}

impl PiecewiseConstantFn {
    pub fn new(p: usize, level: usize, values: Vec<Complex64>) -> Result<Self> {
        let want = p.pow(level as u32);
        if values.len() != want {
            return Err(Error::DepthMismatch { expected: want, got: values.len() });
        }
        Ok(PiecewiseConstantFn { p, level, values })
    }

    pub fn from_real(p: usize, level: usize, values: &[f64]) -> Self {
        PiecewiseConstantFn { p, level, values: values.iter().map(|&v| Complex64::new(v, 0.0)).collect() }
    }

    pub fn constant(p: usize, level: usize, c: Complex64) -> Self {
        PiecewiseConstantFn { p, level, values: vec![c; p.pow(level as u32)] }
    }

    pub fn indicator(p: usize, level: usize, k: usize) -> Self {
        let mut f = PiecewiseConstantFn::constant(p, level, Complex64::new(0.0, 0.0));
        f.values[k] = Complex64::new(1.0, 0.0);
        f
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_real(&self) -> bool {
        self.values.iter().all(|v| v.im == 0.0)
    }

    /// The same function written at a finer level.
    pub fn refine(&self, level: usize) -> Self {
        assert!(level >= self.level);
        let f = self.p.pow((level - self.level) as u32);
        PiecewiseConstantFn {
            p: self.p,
            level,
            values: (0..self.values.len() * f).map(|i| self.values[i / f]).collect(),
        }
    }

    /// Cell averages at a coarser level.
    pub fn coarsen(&self, level: usize) -> Self {
        assert!(level <= self.level);
        let f = self.p.pow((self.level - level) as u32);
        PiecewiseConstantFn {
            p: self.p,
            level,
            values: self
                .values
                .chunks(f)
                .map(|c| c.iter().sum::<Complex64>() / f as f64)
                .collect(),
        }
    }

    pub fn sub(&self, o: &Self) -> Self {
        let lvl = self.level.max(o.level);
        let (a, b) = (self.refine(lvl), o.refine(lvl));
        PiecewiseConstantFn {
            p: self.p,
            level: lvl,
            values: a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect(),
        }
    }

    pub fn l2_norm(&self, radius: f64) -> f64 {
        let cell = 2.0 * PI * radius / self.values.len() as f64;
        (cell * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// CSV with columns level,cell,value using the chosen component.
    pub fn to_csv_component(&self, imaginary: bool) -> String {
        let mut out = String::from("level,cell,value\n");
        for (k, v) in self.values.iter().enumerate() {
            let x = if imaginary { v.im } else { v.re };
            let _ = writeln!(out, "{},{},{}", self.level, k, crate::csv::fmt_f64(x));
        }
        out
    }
}

/// Complex Fourier coefficients ĝ_k for |k| ≤ M.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierFn {
    pub m: usize,
    pub coeffs: Vec<Complex64>,
}

impl FourierFn {
    pub fn zero(m: usize) -> Self {
        FourierFn { m, coeffs: vec![Complex64::new(0.0, 0.0); 2 * m + 1] }
    }

    /// c·e^{ikθ}
    pub fn mode(k: i64, c: Complex64, m: usize) -> Self {
        let mut f = FourierFn::zero(m.max(k.unsigned_abs() as usize));
        f.set(k, c);
        f
    }

    /// cos(kθ)
    pub fn cos(k: i64, m: usize) -> Self {
        let mut f = FourierFn::zero(m.max(k.unsigned_abs() as usize));
        if k == 0 {
            f.set(0, Complex64::new(1.0, 0.0));
        } else {
            f.set(k, Complex64::new(0.5, 0.0));
            f.set(-k, Complex64::new(0.5, 0.0));
        }
        f
    }

    pub fn get(&self, k: i64) -> Complex64 {
        if k.unsigned_abs() as usize > self.m {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[(k + self.m as i64) as usize]
        }
    }

    pub fn set(&mut self, k: i64, c: Complex64) {
        let i = (k + self.m as i64) as usize;
        self.coeffs[i] = c;
    }

    pub fn modes(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        let m = self.m as i64;
        self.coeffs.iter().enumerate().map(move |(i, c)| (i as i64 - m, *c))
    }

    /// Highest mode with a nonzero coefficient.
    pub fn bandwidth(&self) -> usize {
        self.modes().filter(|(_, c)| c.norm() > 0.0).map(|(k, _)| k.unsigned_abs() as usize).max().unwrap_or(0)
    }

    pub fn with_cutoff(&self, m: usize) -> Self {
        let mut f = FourierFn::zero(m);
        for k in -(m as i64)..=(m as i64) {
            f.set(k, self.get(k));
        }
        f
    }

    pub fn sub(&self, o: &Self) -> Self {
        let m = self.m.max(o.m);
        let mut f = FourierFn::zero(m);
        for k in -(m as i64)..=(m as i64) {
            f.set(k, self.get(k) - o.get(k));
        }
        f
    }

    pub fn scale(&self, c: Complex64) -> Self {
        FourierFn { m: self.m, coeffs: self.coeffs.iter().map(|v| v * c).collect() }
    }

    pub fn eval(&self, theta: f64) -> Complex64 {
        self.modes().map(|(k, c)| c * Complex64::from_polar(1.0, k as f64 * theta)).sum()
    }

    pub fn is_real(&self, tol: f64) -> bool {
        (1..=self.m as i64).all(|k| (self.get(k) - self.get(-k).conj()).norm() <= tol)
            && self.get(0).im.abs() <= tol
    }

    /// Coefficients of a cell function up to mode M.
    pub fn from_pcf(g: &PiecewiseConstantFn, m: usize) -> Self {
        let cells = g.values.len();
        let width = 2.0 * PI / cells as f64;
        let coeffs = (0..2 * m + 1)
            .into_par_iter()
            .map(|i| {
                let k = i as i64 - m as i64;
                let base = indicator_coefficient(0.0, width, k);
                let mut acc = Complex64::new(0.0, 0.0);
                for (c, v) in g.values.iter().enumerate() {
                    acc += v * Complex64::from_polar(1.0, -(k as f64) * c as f64 * width);
                }
                acc * base
            })
            .collect();
        FourierFn { m, coeffs }
    }

    /// Bilinear pairing ∫_Γ h g ds = 2πR Σ ĥ_k ĝ_{−k}.
    pub fn pair(&self, o: &FourierFn, radius: f64) -> Complex64 {
        2.0 * PI * radius * self.modes().map(|(k, c)| c * o.get(-k)).sum::<Complex64>()
    }

    /// CSV with columns k,re,im.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,re,im\n");
        for (k, c) in self.modes() {
            let _ = writeln!(out, "{},{},{}", k, crate::csv::fmt_f64(c.re), crate::csv::fmt_f64(c.im));
        }
        out
    }
}

/// k-th Fourier coefficient of the indicator of the angular arc (a, b).
pub fn indicator_coefficient(a: f64, b: f64, k: i64) -> Complex64 {
    if k == 0 {
        return Complex64::new((b - a) / (2.0 * PI), 0.0);
    }
    let kf = k as f64;
    let num = Complex64::from_polar(1.0, -kf * a) - Complex64::from_polar(1.0, -kf * b);
    num / Complex64::new(0.0, 2.0 * PI * kf)
}

/// Fourier coefficients of 1_{Γ_{N,K}} up to mode M.
pub fn indicator_fourier(p: usize, n: usize, k: usize, m: usize) -> FourierFn {
    let (a, b) = arc(p, n, k);
    let mut f = FourierFn::zero(m);
    for j in -(m as i64)..=(m as i64) {
        f.set(j, indicator_coefficient(a, b, j));
    }
    f
}

/// Average of e^{ikθ} over the angular arc (a, b).
pub fn mode_average(a: f64, b: f64, k: i64) -> Complex64 {
    if k == 0 {
        return Complex64::new(1.0, 0.0);
    }
    let kf = k as f64;
    (Complex64::from_polar(1.0, kf * b) - Complex64::from_polar(1.0, kf * a)) / Complex64::new(0.0, kf * (b - a))
}

/// P_N of a Fourier function: exact cell averages.
pub fn project_pn_fourier(g: &FourierFn, p: usize, n: usize) -> PiecewiseConstantFn {
    let cells = p.pow(n as u32);
    let values = (0..cells)
        .into_par_iter()
        .map(|c| {
            let (a, b) = arc(p, n, c);
            g.modes().map(|(k, v)| v * mode_average(a, b, k)).sum()
        })
        .collect();
    PiecewiseConstantFn { p, level: n, values }
}

/// P_N of a cell function: averaging to coarser levels, identity otherwise.
pub fn project_pn(g: &PiecewiseConstantFn, n: usize) -> PiecewiseConstantFn {
    if n >= g.level {
        g.clone()
    } else {
        g.coarsen(n)
    }
}

/// 1 − sinc²(x), accurate for small x.
fn one_minus_sinc_sq(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 0.5 {
        // Σ_{n≥2} (−1)^n 2^{2n−1} x^{2n−2}/(2n)!
        let x2 = x * x;
        let mut term = 8.0 / 24.0 * x2;
        let mut sum = 0.0;
        let mut n = 2.0;
        while term.abs() > 1e-300 && n < 30.0 {
            sum += term;
            term *= -4.0 * x2 / ((2.0 * n + 1.0) * (2.0 * n + 2.0));
            n += 1.0;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        let s = x.sin() / x;
        1.0 - s * s
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

/// ‖g − P_n g‖²_{L²} for a band-limited g, evaluated through the aliasing identity
/// without subtracting nearly equal norms.
pub fn projection_error_sq(g: &FourierFn, p: usize, n: usize, radius: f64) -> f64 {
    let cells = (p as f64).powi(n as i32);
    let h = 2.0 * PI / cells;
    let mut diag = 0.0;
    for (k, c) in g.modes() {
        if k != 0 {
            diag += c.norm_sqr() * one_minus_sinc_sq(k as f64 * h / 2.0);
        }
    }
    let mut cross = 0.0;
    let m = g.m as i64;
    if cells <= (2 * g.m) as f64 {
        let step = cells as i64;
        for (k, c) in g.modes() {
            if c.norm() == 0.0 {
                continue;
            }
            let sk = sinc(k as f64 * h / 2.0);
            let mut q = 1i64;
            loop {
                let mut any = false;
                for j in [k - q * step, k + q * step] {
                    if j.abs() <= m {
                        any = true;
                        let sign = if q % 2 == 0 { 1.0 } else { -1.0 };
                        cross += (c * g.get(j).conj()).re * sk * sinc(j as f64 * h / 2.0) * sign;
                    }
                }
                if !any {
                    break;
                }
                q += 1;
            }
        }
    }
    (2.0 * PI * radius * (diag - cross)).max(0.0)
}

/// ‖g − P_n g‖²_{L²} for a cell function.
pub fn projection_error_sq_pcf(g: &PiecewiseConstantFn, n: usize, radius: f64) -> f64 {
    if n >= g.level {
        return 0.0;
    }
    let coarse = g.coarsen(n);
    let f = g.p.pow((g.level - n) as u32);
    let cell = 2.0 * PI * radius / g.values.len() as f64;
    g.values.iter().enumerate().map(|(i, v)| (v - coarse.values[i / f]).norm_sqr()).sum::<f64>() * cell
}

#[derive(Debug, Clone, Copy)]
pub struct ArNorm {
    pub value: f64,
    /// Geometric estimate of the omitted levels beyond n_max (included in `value`).
    pub tail_estimate: f64,
}

fn ar_from_errors(p: usize, r: f64, p0: f64, errors: &[f64], bandlimited_tail: bool) -> ArNorm {
    let pf = p as f64;
    let mut sum = p0;
    let mut last = 0.0;
    for (n, e) in errors.iter().enumerate() {
        last = pf.powf(2.0 * n as f64 * r) * e;
        sum += last;
    }
    let tail = if bandlimited_tail {
        let q = pf.powf(2.0 * r - 2.0);
        last * q / (1.0 - q)
    } else {
        0.0
    };
    ArNorm { value: (sum + tail).sqrt(), tail_estimate: tail }
}

/// A^r norm of a band-limited function, levels 0..=n_max.
pub fn ar_norm_fourier(g: &FourierFn, p: usize, radius: f64, r: f64, n_max: usize) -> ArNorm {
    let p0 = 2.0 * PI * radius * g.get(0).norm_sqr();
    let errors: Vec<f64> = (0..=n_max).map(|n| projection_error_sq(g, p, n, radius)).collect();
    ar_from_errors(p, r, p0, &errors, true)
}

/// A^r norm of a cell function; the series terminates at its level.
pub fn ar_norm_pcf(g: &PiecewiseConstantFn, radius: f64, r: f64) -> ArNorm {
    let mean = g.values.iter().sum::<Complex64>() / g.values.len() as f64;
    let p0 = 2.0 * PI * radius * mean.norm_sqr();
    let errors: Vec<f64> = (0..=g.level).map(|n| projection_error_sq_pcf(g, n, radius)).collect();
    ar_from_errors(g.p, r, p0, &errors, false)
}

#[derive(Debug, Clone, Copy)]
pub struct ProjectorCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// p^{2σ}/(p^{2σ} − 1)
    pub constant: f64,
}

impl ProjectorCheck {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }
}

/// ‖P_N g − g‖_{A^σ} against p^{2σ}/(p^{2σ}−1)·p^{−N(σ′−σ)}‖g‖_{A^{σ′}}.
pub fn projector_error_check(
    g: &FourierFn,
    p: usize,
    radius: f64,
    n: usize,
    sigma: f64,
    sigma_prime: f64,
    n_max: usize,
) -> Result<ProjectorCheck> {
    if !(0.0 < sigma && sigma < sigma_prime && sigma_prime < 0.5) {
        return Err(Error::ExponentOrderViolated { sigma, sigma_prime });
    }
    let n_max = n_max.max(n + 1);
    let errors: Vec<f64> = (0..=n_max).map(|j| projection_error_sq(g, p, j, radius)).collect();
    // g − P_N g has zero mean and level errors e_{max(n, N)}(g)
    let shifted: Vec<f64> = (0..=n_max).map(|j| errors[j.max(n)]).collect();
    let lhs = ar_from_errors(p, sigma, 0.0, &shifted, true).value;
    let norm = ar_from_errors(p, sigma_prime, 2.0 * PI * radius * g.get(0).norm_sqr(), &errors, true).value;
    let pf = p as f64;
    let constant = pf.powf(2.0 * sigma) / (pf.powf(2.0 * sigma) - 1.0);
    Ok(ProjectorCheck { lhs, rhs: constant * pf.powf(-(n as f64) * (sigma_prime - sigma)) * norm, constant })
}

/// Fourier Sobolev norm (2πR Σ (1+k²)^s |ĝ_k|²)^{1/2}.
pub fn sobolev_norm_fourier(g: &FourierFn, s: f64, radius: f64) -> f64 {
    let sum: f64 = g.modes().map(|(k, c)| (1.0 + (k * k) as f64).powf(s) * c.norm_sqr()).sum();
    (2.0 * PI * radius * sum).sqrt()
}

/// Cell averages g_{n,k} at every level 0..=depth.
pub trait CellAverages {
    fn averages(&self, p: usize, level: usize) -> Vec<Complex64>;
}

impl CellAverages for FourierFn {
    fn averages(&self, p: usize, level: usize) -> Vec<Complex64> {
        project_pn_fourier(self, p, level).values
    }
}

impl CellAverages for PiecewiseConstantFn {
    fn averages(&self, _p: usize, level: usize) -> Vec<Complex64> {
        if level <= self.level {
            self.coarsen(level).values
        } else {
            self.refine(level).values
        }
    }
}

/// Piecewise-linear lift: v(o) = 0 and v(X_{n,k}) = cell average g_{n,k}.
pub fn lift_to_tree<G: CellAverages>(g: &G, tree: &Arc<FiniteTree>) -> ComplexTreeFunction {
    let p = tree.p();
    let mut re = vec![0.0; tree.num_edges()];
    let mut im = vec![0.0; tree.num_edges()];
    for n in 0..=tree.depth() {
        let avg = g.averages(p, n);
        for (k, v) in avg.iter().enumerate() {
            let i = tree.index(crate::tree_model::EdgeRef::new(n, k));
            re[i] = v.re;
            im[i] = v.im;
        }
    }
    ComplexTreeFunction {
        re: TreeFunction::piecewise_linear(tree.clone(), 0.0, &re),
        im: TreeFunction::piecewise_linear(tree.clone(), 0.0, &im),
    }
}
