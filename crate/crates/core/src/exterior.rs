//! Exterior Laplace problems outside the disk of radius R, realized per Fourier mode.
//!
//! The normal points into the exterior, so γ₁ = ∂_r at r = R. Operators are Fourier
//! multipliers on the circle:
//!
//! | operator | s_0 | s_k (k ≠ 0) |
//! |---|---|---|
//! | DtN | 0 | −\|k\|/R |
//! | single layer S | R log(r_scale/R) | R/(2\|k\|) |
//! | double layer T | −1 | 0 |
//! | hypersingular R | 0 | \|k\|/(2R) |
//!
//! Source problems follow the convention −Δv = f.

use crate::error::{Error, Result};
use crate::interface::{indicator_coefficient, FourierFn, MultiscaleDecomposition};
use crate::quadrature::{gl64, integrate};
use crate::tree_dtn::{GalerkinOperator, DENSE_LIMIT};
use num_complex::Complex64;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::f64::consts::PI;

/// Default ratio between the Galerkin mode cutoff and the number of cells.
pub const DEFAULT_OVERSAMPLING: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymbolKind {
    Dtn,
    SingleLayer,
    DoubleLayerT,
    Hypersingular,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExteriorSymbol {
    pub kind: SymbolKind,
    pub radius: f64,
    pub r_scale: f64,
    pub cutoff: usize,
}

impl ExteriorSymbol {
    pub fn value(&self, k: i64) -> f64 {
        let r = self.radius;
        let a = k.unsigned_abs() as f64;
        match (self.kind, k) {
            (SymbolKind::Dtn, _) => -a / r,
            (SymbolKind::SingleLayer, 0) => r * (self.r_scale / r).ln(),
            (SymbolKind::SingleLayer, _) => r / (2.0 * a),
            (SymbolKind::DoubleLayerT, 0) => -1.0,
            (SymbolKind::DoubleLayerT, _) => 0.0,
            (SymbolKind::Hypersingular, _) => a / (2.0 * r),
        }
    }

    /// s_0, …, s_M
    pub fn values(&self) -> Vec<f64> {
        (0..=self.cutoff as i64).map(|k| self.value(k)).collect()
    }

    pub fn apply(&self, g: &FourierFn) -> FourierFn {
        FourierFn { m: g.m, coeffs: g.modes().map(|(k, c)| c * self.value(k)).collect() }
    }

    /// CSV with columns k,value for k = 0..M.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,value\n");
        for (k, v) in self.values().iter().enumerate() {
            out.push_str(&format!("{k},{}\n", crate::csv::fmt_f64(*v)));
        }
        out
    }
}

fn check_radius(radius: f64) -> Result<()> {
    if radius.is_finite() && radius > 0.0 {
        Ok(())
    } else {
        Err(Error::NonPositiveParameter { name: "radius".into(), value: radius })
    }
}

pub fn dtn_symbol(radius: f64, cutoff: usize) -> Result<ExteriorSymbol> {
    check_radius(radius)?;
    Ok(ExteriorSymbol { kind: SymbolKind::Dtn, radius, r_scale: 2.0 * radius, cutoff })
}

#[derive(Debug, Clone, Copy)]
pub struct LayerSymbols {
    pub single: ExteriorSymbol,
    pub double_t: ExteriorSymbol,
    pub hypersingular: ExteriorSymbol,
}

pub fn layer_symbols(radius: f64, r_scale: f64, cutoff: usize) -> Result<LayerSymbols> {
    check_radius(radius)?;
    if !(r_scale.is_finite() && r_scale > 0.0) {
        return Err(Error::NonPositiveParameter { name: "r_scale".into(), value: r_scale });
    }
    if (r_scale - radius).abs() <= 1e-14 * radius {
        return Err(Error::ScaleEqualsRadius(radius));
    }
    let mk = |kind| ExteriorSymbol { kind, radius, r_scale, cutoff };
    Ok(LayerSymbols {
        single: mk(SymbolKind::SingleLayer),
        double_t: mk(SymbolKind::DoubleLayerT),
        hypersingular: mk(SymbolKind::Hypersingular),
    })
}

/// max over modes of |S_k dtn_k + ½(1 − T_k)|, modes 1..M (and k = 0 when requested).
pub fn bie_dtn_crosscheck(radius: f64, r_scale: f64, cutoff: usize, include_zero: bool) -> Result<f64> {
    let l = layer_symbols(radius, r_scale, cutoff)?;
    let d = dtn_symbol(radius, cutoff)?;
    let start = if include_zero { 0 } else { 1 };
    Ok((start..=cutoff as i64)
        .map(|k| (l.single.value(k) * d.value(k) + 0.5 * (1.0 - l.double_t.value(k))).abs())
        .fold(0.0, f64::max))
}

/// max over modes 0..M of |R_k + ½ dtn_k (1 + T_k)|.
pub fn hypersingular_crosscheck(radius: f64, r_scale: f64, cutoff: usize) -> Result<f64> {
    let l = layer_symbols(radius, r_scale, cutoff)?;
    let d = dtn_symbol(radius, cutoff)?;
    Ok((0..=cutoff as i64)
        .map(|k| (l.hypersingular.value(k) + 0.5 * d.value(k) * (1.0 + l.double_t.value(k))).abs())
        .fold(0.0, f64::max))
}

/// Single-layer kernel quadrature applied to e^{ikφ} at θ = 0 with offset midpoint nodes.
///
/// The logarithmic singularity is subtracted: ∫K(f − f(0)) is summed by the midpoint rule
/// and f(0)·∫K = R log(r_scale/R) uses ∫₀^{2π} log|2 sin(x/2)| dx = 0.
pub fn single_layer_quadrature(radius: f64, r_scale: f64, k: i64, nodes: usize) -> f64 {
    let h = 2.0 * PI / nodes as f64;
    let mut acc = 0.0;
    for j in 0..nodes {
        let phi = (j as f64 + 0.5) * h;
        let dist = (2.0 * radius * (phi / 2.0).sin()).abs();
        let kernel = (r_scale / dist).ln() / (2.0 * PI);
        acc += kernel * ((k as f64 * phi).cos() - 1.0) * radius * h;
    }
    acc + radius * (r_scale / radius).ln()
}

/// Radial profile Σ_j c_j r^{min_power + j}.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    pub min_power: i32,
    pub coeffs: Vec<Complex64>,
}

impl RadialProfile {
    pub fn eval(&self, r: f64) -> Complex64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(j, c)| c * r.powi(self.min_power + j as i32))
            .sum()
    }

    pub fn scale(&self, a: Complex64) -> Self {
        RadialProfile { min_power: self.min_power, coeffs: self.coeffs.iter().map(|c| c * a).collect() }
    }

    pub fn conj(&self) -> Self {
        RadialProfile { min_power: self.min_power, coeffs: self.coeffs.iter().map(|c| c.conj()).collect() }
    }
}

/// f(r, θ) = Σ_k f_k(r) e^{ikθ} supported in R ≤ r ≤ r_max.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RadialSource {
    pub r_max: f64,
    pub modes: BTreeMap<i64, RadialProfile>,
}

impl RadialSource {
    pub fn none() -> Self {
        RadialSource::default()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.values().all(|p| p.coeffs.iter().all(|c| c.norm() == 0.0))
    }

    pub fn scale(&self, a: Complex64) -> Self {
        RadialSource { r_max: self.r_max, modes: self.modes.iter().map(|(k, p)| (*k, p.scale(a))).collect() }
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.modes.iter().all(|(k, prof)| {
            let other = self.modes.get(&-k).map(RadialProfile::conj);
            let r = self.r_max;
            let probe = [0.0, 0.37, 0.81, 1.0];
            match other {
                None => prof.coeffs.iter().all(|c| c.norm() <= tol),
                Some(o) => probe.iter().all(|t| {
                    let x = r * (0.5 + 0.5 * t);
                    (prof.eval(x) - o.eval(x)).norm() <= tol * (1.0 + prof.eval(x).norm())
                }),
            }
        })
    }

    pub fn eval(&self, r: f64, theta: f64) -> Complex64 {
        self.modes
            .iter()
            .map(|(k, p)| p.eval(r) * Complex64::from_polar(1.0, *k as f64 * theta))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode0Radiation {
    /// v = O(1) at infinity.
    #[default]
    Bounded,
    /// v = b log r + o(1) at infinity; diagnostic only.
    LogGrowth,
}

/// Spectral exterior field: boundary data, source modes and the mode-0 log coefficient.
#[derive(Debug, Clone)]
pub struct ExteriorField {
    pub radius: f64,
    pub boundary: FourierFn,
    /// Right-hand sides F_k of Δv = F, per mode.
    pub forcing: BTreeMap<i64, RadialProfile>,
    pub r_max: f64,
    pub log_coeff: Complex64,
}

impl ExteriorField {
    fn particular(&self, k: i64, r: f64) -> (Complex64, Complex64) {
        let Some(f) = self.forcing.get(&k) else {
            return (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        };
        let big_r = self.radius;
        let rm = self.r_max;
        let rc = r.min(rm);
        let rule = gl64();
        if k == 0 {
            let i1: Complex64 = if rc > big_r {
                integrate(rule, big_r, rc, |s| f.eval(s) * (s * (s / big_r).ln()))
            } else {
                Complex64::default()
            };
            let i2: Complex64 = if rc < rm {
                integrate(rule, rc, rm, |s| f.eval(s) * s)
            } else {
                Complex64::default()
            };
            let v = -(i1 + i2 * (r / big_r).ln());
            let dv = -i2 / r;
            return (v, dv);
        }
        let n = k.unsigned_abs() as i32;
        let nf = n as f64;
        let y1 = |s: f64| (s / big_r).powi(n) - (big_r / s).powi(n);
        let y2 = |s: f64| (big_r / s).powi(n);
        let i1: Complex64 = if rc > big_r {
            integrate(rule, big_r, rc, |s| f.eval(s) * (s * y1(s)))
        } else {
            Complex64::default()
        };
        let i2: Complex64 = if rc < rm {
            integrate(rule, rc, rm, |s| f.eval(s) * (s * y2(s)))
        } else {
            Complex64::default()
        };
        let c = -2.0 * nf;
        let dy1 = nf / r * ((r / big_r).powi(n) + (big_r / r).powi(n));
        let dy2 = -nf / r * y2(r);
        ((i1 * y2(r) + i2 * y1(r)) / c, (i1 * dy2 + i2 * dy1) / c)
    }

    fn all_modes(&self) -> Vec<i64> {
        let m = self.boundary.m as i64;
        let mut ks: Vec<i64> = (-m..=m).collect();
        for k in self.forcing.keys() {
            if k.abs() > m {
                ks.push(*k);
            }
        }
        ks.sort_unstable();
        ks
    }

    /// Radial coefficient v_k(r).
    pub fn mode_value(&self, k: i64, r: f64) -> Complex64 {
        let n = k.unsigned_abs() as i32;
        let hom = self.boundary.get(k) * (self.radius / r).powi(n);
        let log = if k == 0 { self.log_coeff * (r / self.radius).ln() } else { Complex64::default() };
        hom + self.particular(k, r).0 + log
    }

    /// Radial derivative ∂_r v_k(r).
    pub fn mode_derivative(&self, k: i64, r: f64) -> Complex64 {
        let n = k.unsigned_abs() as i32;
        let hom = self.boundary.get(k) * (-(n as f64) / r * (self.radius / r).powi(n));
        let log = if k == 0 { self.log_coeff / r } else { Complex64::default() };
        hom + self.particular(k, r).1 + log
    }

    pub fn value(&self, r: f64, theta: f64) -> Complex64 {
        self.all_modes()
            .into_iter()
            .map(|k| self.mode_value(k, r) * Complex64::from_polar(1.0, k as f64 * theta))
            .sum()
    }

    /// Mode-0 constant approached at infinity when the log coefficient vanishes.
    pub fn constant_at_infinity(&self) -> Complex64 {
        self.boundary.get(0) + self.particular(0, self.r_max.max(self.radius)).0
    }

    /// Fourier coefficients of the boundary values v(R, ·).
    pub fn trace(&self) -> FourierFn {
        let ks = self.all_modes();
        let m = ks.iter().map(|k| k.unsigned_abs() as usize).max().unwrap_or(0);
        let mut f = FourierFn::zero(m);
        for k in ks {
            f.set(k, self.mode_value(k, self.radius));
        }
        f
    }
}

/// Solves −Δv = f outside the disk with v = g on the circle.
pub fn solve_exterior_dirichlet(
    g: &FourierFn,
    source: &RadialSource,
    radius: f64,
    radiation: Mode0Radiation,
) -> Result<ExteriorField> {
    check_radius(radius)?;
    let active = !source.is_empty();
    if active && !(source.r_max.is_finite() && source.r_max > radius) {
        return Err(Error::InvalidParameter(format!(
            "source support r_max = {} must exceed the radius {radius}",
            source.r_max
        )));
    }
    let forcing = if active {
        source.modes.iter().map(|(k, p)| (*k, p.scale(Complex64::new(-1.0, 0.0)))).collect()
    } else {
        BTreeMap::new()
    };
    let mut field = ExteriorField {
        radius,
        boundary: g.clone(),
        forcing,
        r_max: if active { source.r_max } else { radius },
        log_coeff: Complex64::default(),
    };
    if radiation == Mode0Radiation::LogGrowth {
        let c = field.constant_at_infinity();
        let log_r = radius.ln();
        if log_r.abs() < 1e-14 {
            if c.norm() > 1e-12 {
                return Err(Error::UnresolvableMode0 { constant: c.norm() });
            }
        } else {
            field.log_coeff = c / log_r;
        }
    }
    Ok(field)
}

/// ∂_r v at r = R, per mode.
pub fn gamma1_exterior(field: &ExteriorField) -> FourierFn {
    let ks = field.all_modes();
    let m = ks.iter().map(|k| k.unsigned_abs() as usize).max().unwrap_or(0);
    let mut f = FourierFn::zero(m);
    for k in ks {
        f.set(k, field.mode_derivative(k, field.radius));
    }
    f
}

/// ∫_{Γ_{n,K}} φ ds = 2πR Σ_k φ̂_k (1̂_K)_{−k} for every level-n cell.
pub fn cell_integrals(phi: &FourierFn, p: usize, n: usize, radius: f64) -> Vec<Complex64> {
    let cells = p.pow(n as u32);
    let width = 2.0 * PI / cells as f64;
    (0..cells)
        .into_par_iter()
        .map(|c| {
            let a = c as f64 * width;
            let s: Complex64 = phi.modes().map(|(k, v)| v * indicator_coefficient(a, a + width, -k)).sum();
            s * (2.0 * PI * radius)
        })
        .collect()
}

/// Galerkin matrix A[K][L] = 2πR Σ_{|k|≤M} s_k (1̂_L)_k (1̂_K)_{−k} on the level-n cells.
///
/// The matrix is circulant; modes are folded modulo pⁿ before the cosine sum.
pub fn dtn_galerkin(
    decomp: &MultiscaleDecomposition,
    n: usize,
    symbol: &ExteriorSymbol,
    oversampling: usize,
    allow_large: bool,
) -> Result<GalerkinOperator> {
    let cells = decomp.cells(n);
    let required = oversampling * cells;
    if symbol.cutoff < required {
        return Err(Error::CutoffTooSmall { cutoff: symbol.cutoff, required });
    }
    if cells > DENSE_LIMIT && !allow_large {
        return Err(Error::TooLarge { size: cells, limit: DENSE_LIMIT });
    }
    let width = 2.0 * PI / cells as f64;
    let w0 = symbol.value(0) / (cells as f64 * cells as f64);
    let mut folded = vec![0.0; cells];
    for k in (1..=symbol.cutoff).filter(|k| k % cells != 0) {
        let kf = k as f64;
        let s = (kf * width / 2.0).sin();
        folded[k % cells] += symbol.value(k as i64) * s * s / (PI * PI * kf * kf);
    }
    let cos_table: Vec<f64> = (0..cells).map(|m| (2.0 * PI * m as f64 / cells as f64).cos()).collect();
    let scale = 2.0 * PI * symbol.radius;
    let first: Vec<f64> = (0..cells)
        .into_par_iter()
        .map(|j| {
            let mut acc = 0.0;
            for (r, w) in folded.iter().enumerate() {
                acc += w * cos_table[(r * j) % cells];
            }
            scale * (w0 + 2.0 * acc)
        })
        .collect();
    let matrix = nalgebra::DMatrix::from_fn(cells, cells, |a, b| first[(b + cells - a) % cells]);
    Ok(GalerkinOperator { p: decomp.p, level: n, matrix })
}

/// Mode cutoff used for level n.
pub fn default_cutoff(p: usize, n: usize, oversampling: usize) -> usize {
    oversampling * p.pow(n as u32)
}
