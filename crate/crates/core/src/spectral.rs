//! Spatial discretization on the interval `(0, L)` with homogeneous
//! Dirichlet conditions.
//!
//! Fields are expanded in the orthonormal eigenfunctions
//! `w_j(x) = √(2/L) sin(jπx/L)` of `-Δ`, with eigenvalues `λ_j = (jπ/L)²`.
//! Pointwise work (the polynomial nonlinearity, `L^p` integrals) happens on
//! the interior collocation grid `x_m = m L / (n_c + 1)`, where the discrete
//! sine transform is exact for trigonometric polynomials of degree below
//! `n_c + 1`.

use crate::error::{Error, Result};
use crate::integrate::gauss_legendre;
use crate::linalg::{poly_derivative, poly_eval, real_roots};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialBasis {
    length: f64,
    n_modes: usize,
    n_colloc: usize,
    eigenvalues: Vec<f64>,
    grid: Vec<f64>,
    /// `w_j(x_m)`, row-major by mode
    table: Vec<f64>,
}

/// Builds the Dirichlet sine basis with `n` modes and `n_c` collocation
/// points (`n_c ≥ ⌈3n/2⌉`).
pub fn eigenbasis(length: f64, n: usize, n_c: usize) -> Result<SpatialBasis> {
    if !(length > 0.0 && length.is_finite()) {
        return Err(Error::param("domain.length", format!("must be positive, got {length}")));
    }
    if n == 0 {
        return Err(Error::param("space.n_modes", "need at least one mode"));
    }
    let min_c = (3 * n).div_ceil(2);
    if n_c < min_c {
        return Err(Error::param(
            "space.n_collocation",
            format!("{n_c} points cannot resolve {n} modes (need >= {min_c})"),
        ));
    }
    let eigenvalues = (1..=n)
        .map(|j| {
            let k = j as f64 * PI / length;
            k * k
        })
        .collect();
    let h = length / (n_c + 1) as f64;
    let grid: Vec<f64> = (1..=n_c).map(|m| m as f64 * h).collect();
    let norm = libm::sqrt(2.0 / length);
    let mut table = Vec::with_capacity(n * n_c);
    for j in 1..=n {
        for m in 1..=n_c {
            table.push(norm * libm::sin(PI * (j * m) as f64 / (n_c + 1) as f64));
        }
    }
    Ok(SpatialBasis {
        length,
        n_modes: n,
        n_colloc: n_c,
        eigenvalues,
        grid,
        table,
    })
}

impl SpatialBasis {
    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn n_colloc(&self) -> usize {
        self.n_colloc
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn lambda1(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    fn spacing(&self) -> f64 {
        self.length / (self.n_colloc + 1) as f64
    }

    /// `w_j(x)` for 1-based mode index `j`.
    pub fn eigenfunction(&self, j: usize, x: f64) -> f64 {
        libm::sqrt(2.0 / self.length) * libm::sin(j as f64 * PI * x / self.length)
    }

    /// Point values on the collocation grid.
    pub fn to_nodal(&self, field: &SpectralField) -> Vec<f64> {
        let mut out = vec![0.0; self.n_colloc];
        for (j, b) in field.coeffs.iter().enumerate() {
            if *b == 0.0 {
                continue;
            }
            let row = &self.table[j * self.n_colloc..(j + 1) * self.n_colloc];
            for (o, w) in out.iter_mut().zip(row) {
                *o += b * w;
            }
        }
        out
    }

    /// Discrete sine transform of collocation values back to modal
    /// coefficients.
    pub fn to_modal(&self, values: &[f64]) -> SpectralField {
        let h = self.spacing();
        let coeffs = (0..self.n_modes)
            .map(|j| {
                let row = &self.table[j * self.n_colloc..(j + 1) * self.n_colloc];
                h * row.iter().zip(values).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect();
        SpectralField { coeffs }
    }

    /// Trapezoid integral over `(0, L)` of grid values with zero boundary
    /// values.
    pub fn integrate_nodal(&self, values: &[f64]) -> f64 {
        self.spacing() * values.iter().sum::<f64>()
    }

    pub fn eval(&self, field: &SpectralField, x: f64) -> f64 {
        field
            .coeffs
            .iter()
            .enumerate()
            .map(|(j, b)| b * self.eigenfunction(j + 1, x))
            .sum()
    }

    /// `|u|_q^q = ∫ |u|^q` evaluated on the collocation grid.
    pub fn lp_norm_pow(&self, field: &SpectralField, q: i32) -> f64 {
        let v = self.to_nodal(field);
        self.integrate_nodal(&v.iter().map(|u| libm::pow(u.abs(), q as f64)).collect::<Vec<_>>())
    }
}

/// Modal coefficients `b_j` of a field in the sine basis.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpectralField {
    pub coeffs: Vec<f64>,
}

impl SpectralField {
    pub fn zeros(n: usize) -> Self {
        SpectralField { coeffs: vec![0.0; n] }
    }

    pub fn from_coeffs(coeffs: Vec<f64>) -> Self {
        SpectralField { coeffs }
    }

    /// The single eigenfunction `amp · w_j` (1-based `j`).
    pub fn mode(n: usize, j: usize, amp: f64) -> Self {
        let mut f = Self::zeros(n);
        f.coeffs[j - 1] = amp;
        f
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `|u|² = Σ b_j²`.
    pub fn norm_h_sq(&self) -> f64 {
        self.coeffs.iter().map(|b| b * b).sum()
    }

    /// `‖u‖² = |∇u|² = Σ λ_j b_j²`.
    pub fn norm_v_sq(&self, basis: &SpatialBasis) -> f64 {
        self.coeffs
            .iter()
            .zip(basis.eigenvalues())
            .map(|(b, l)| l * b * b)
            .sum()
    }

    pub fn dot(&self, other: &SpectralField) -> f64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum()
    }

    pub fn sub(&self, other: &SpectralField) -> SpectralField {
        SpectralField {
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|b| b.is_finite())
    }
}

/// `L²` projection `P_n` of a function onto the first `n` modes, by
/// composite Gauss–Legendre quadrature of `(u, w_j)`.
pub fn project<F: Fn(f64) -> f64>(u: F, basis: &SpatialBasis) -> SpectralField {
    let n = basis.n_modes();
    let panels = 2 * n + 8;
    let (gx, gw) = gauss_legendre(10);
    let width = basis.length() / panels as f64;
    let mut coeffs = vec![0.0; n];
    for p in 0..panels {
        let a = p as f64 * width;
        for (t, w) in gx.iter().zip(&gw) {
            let x = a + 0.5 * width * (t + 1.0);
            let ux = u(x) * 0.5 * width * w;
            for (j, c) in coeffs.iter_mut().enumerate() {
                *c += ux * basis.eigenfunction(j + 1, x);
            }
        }
    }
    SpectralField { coeffs }
}

/// Structural constants of the nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FConstants {
    /// leading coefficient
    pub f0: f64,
    /// `f(u) u ≥ ½ f₀ u^{2p} - a₀`
    pub a0: f64,
    /// `f'(u) ≥ -d₀/2`
    pub d0: f64,
    /// `f' > 0` for `|u| ≥ M`
    pub m: f64,
}

/// Odd-degree polynomial nonlinearity with positive leading coefficient.
///
/// Coefficients are given in descending powers, `[c_{2p-1}, …, c_1, c_0]`,
/// so the first entry is the leading coefficient `f₀`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Nonlinearity {
    descending: Vec<f64>,
    ascending: Vec<f64>,
    derivative: Vec<f64>,
    p: usize,
    constants: FConstants,
}

const OUTWARD: f64 = 1e-9;

impl Nonlinearity {
    pub fn new(descending: Vec<f64>) -> Result<Self> {
        let constants = f_constants(&descending)?;
        let ascending: Vec<f64> = descending.iter().rev().copied().collect();
        let derivative = poly_derivative(&ascending);
        Ok(Nonlinearity {
            p: descending.len() / 2,
            descending,
            ascending,
            derivative,
            constants,
        })
    }

    /// `f ≡ 0`.
    pub fn zero() -> Self {
        Nonlinearity {
            descending: Vec::new(),
            ascending: Vec::new(),
            derivative: Vec::new(),
            p: 1,
            constants: FConstants {
                f0: 0.0,
                a0: 0.0,
                d0: 0.0,
                m: 0.0,
            },
        }
    }

    pub fn is_zero(&self) -> bool {
        self.descending.is_empty()
    }

    pub fn coeffs_descending(&self) -> &[f64] {
        &self.descending
    }

    /// Half of `deg f + 1`.
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn constants(&self) -> FConstants {
        self.constants
    }

    pub fn eval(&self, u: f64) -> f64 {
        poly_eval(&self.ascending, u)
    }

    pub fn derivative(&self, u: f64) -> f64 {
        poly_eval(&self.derivative, u)
    }
}

/// Computes `(f₀, a₀, d₀, M)` for a polynomial in descending powers.
///
/// `a₀` and `d₀` are suprema of polynomials, found exactly at the real
/// roots of their derivatives, then rounded outward by `1e-9` when positive.
pub fn f_constants(descending: &[f64]) -> Result<FConstants> {
    if descending.is_empty() || descending.len() % 2 != 0 {
        return Err(Error::param(
            "f.coeffs",
            format!("need an odd-degree polynomial (even number of coefficients), got {}", descending.len()),
        ));
    }
    let f0 = descending[0];
    if !(f0 > 0.0) {
        return Err(Error::param("f.coeffs", format!("leading coefficient must be positive, got {f0}")));
    }
    if descending.iter().any(|c| !c.is_finite()) {
        return Err(Error::param("f.coeffs", "coefficients must be finite"));
    }
    let p = descending.len() / 2;
    let asc: Vec<f64> = descending.iter().rev().copied().collect();

    // h(u) = ½ f₀ u^{2p} - u f(u)
    let mut h = vec![0.0; 2 * p + 1];
    h[2 * p] += 0.5 * f0;
    for (k, c) in asc.iter().enumerate() {
        h[k + 1] -= c;
    }
    let sup_h = real_roots(&poly_derivative(&h))
        .into_iter()
        .map(|u| poly_eval(&h, u))
        .fold(0.0, f64::max);
    let a0 = if sup_h > 0.0 { sup_h + OUTWARD } else { 0.0 };

    let df = poly_derivative(&asc);
    let inf_df = real_roots(&poly_derivative(&df))
        .into_iter()
        .map(|u| poly_eval(&df, u))
        .fold(poly_eval(&df, 0.0), f64::min);
    let d0 = if inf_df < 0.0 { -2.0 * inf_df + OUTWARD } else { 0.0 };

    let m = real_roots(&df).into_iter().map(f64::abs).fold(0.0, f64::max);
    Ok(FConstants { f0, a0, d0, m })
}

/// Errors if the collocation grid cannot represent `P_n f(u_n)` without
/// aliasing, which needs `n_c ≥ p·n`.
pub fn check_dealiasing(basis: &SpatialBasis, f: &Nonlinearity) -> Result<()> {
    let need = f.p() * basis.n_modes();
    if basis.n_colloc() < need {
        return Err(Error::param(
            "space.n_collocation",
            format!(
                "{} points alias a degree-{} nonlinearity on {} modes (need >= {need})",
                basis.n_colloc(),
                2 * f.p() - 1,
                basis.n_modes()
            ),
        ));
    }
    Ok(())
}

/// `P_n f(u_n)`, computed pseudo-spectrally on the collocation grid.
pub fn nonlinear_galerkin(field: &SpectralField, f: &Nonlinearity, basis: &SpatialBasis) -> Result<SpectralField> {
    check_dealiasing(basis, f)?;
    if f.is_zero() {
        return Ok(SpectralField::zeros(basis.n_modes()));
    }
    let mut v = basis.to_nodal(field);
    for u in v.iter_mut() {
        *u = f.eval(*u);
    }
    Ok(basis.to_modal(&v))
}

/// `(f(u), u)` by collocation quadrature.
pub fn f_dot_u(field: &SpectralField, f: &Nonlinearity, basis: &SpatialBasis) -> f64 {
    let v = basis.to_nodal(field);
    basis.integrate_nodal(&v.iter().map(|u| f.eval(*u) * u).collect::<Vec<_>>())
}

/// Admissible diffusion laws `r ↦ a(r)` with declared bounds `m ≤ a ≤ m̃`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum DiffusionLaw {
    Constant(f64),
    /// `a(r) = clamp(base + slope · r, m, m̃)`
    ClampedAffine { base: f64, slope: f64, m: f64, m_tilde: f64 },
}

/// The non-local coefficient `a(l(u))` with `l(u) = ∫ g_l u dx`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NonlocalCoefficient {
    law: DiffusionLaw,
    l_weight: SpectralField,
}

impl NonlocalCoefficient {
    pub fn new(law: DiffusionLaw, l_weight: SpectralField) -> Result<Self> {
        match law {
            DiffusionLaw::Constant(v) => {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::param("a.value", format!("must be positive, got {v}")));
                }
            }
            DiffusionLaw::ClampedAffine { base, slope, m, m_tilde } => {
                if !(m > 0.0) {
                    return Err(Error::param("a.m", format!("must be positive, got {m}")));
                }
                if !(m_tilde >= m && m_tilde.is_finite()) {
                    return Err(Error::param("a.m_tilde", format!("need m <= m_tilde < inf, got {m_tilde}")));
                }
                if !(base.is_finite() && slope.is_finite()) {
                    return Err(Error::param("a.base", "base and slope must be finite"));
                }
            }
        }
        Ok(NonlocalCoefficient { law, l_weight })
    }

    pub fn constant(value: f64, n_modes: usize) -> Result<Self> {
        Self::new(DiffusionLaw::Constant(value), SpectralField::zeros(n_modes))
    }

    pub fn law(&self) -> DiffusionLaw {
        self.law
    }

    pub fn l_weight(&self) -> &SpectralField {
        &self.l_weight
    }

    /// Lower bound `m`.
    pub fn lower(&self) -> f64 {
        match self.law {
            DiffusionLaw::Constant(v) => v,
            DiffusionLaw::ClampedAffine { m, .. } => m,
        }
    }

    /// Upper bound `m̃`.
    pub fn upper(&self) -> f64 {
        match self.law {
            DiffusionLaw::Constant(v) => v,
            DiffusionLaw::ClampedAffine { m_tilde, .. } => m_tilde,
        }
    }

    /// Global Lipschitz constant of `a`, which bounds every local `L_a(R)`.
    pub fn lipschitz(&self) -> f64 {
        match self.law {
            DiffusionLaw::Constant(_) => 0.0,
            DiffusionLaw::ClampedAffine { slope, .. } => slope.abs(),
        }
    }

    pub fn a(&self, r: f64) -> f64 {
        match self.law {
            DiffusionLaw::Constant(v) => v,
            DiffusionLaw::ClampedAffine { base, slope, m, m_tilde } => (base + slope * r).clamp(m, m_tilde),
        }
    }

    /// `l(u) = Σ_j b_j ĝ_j`.
    pub fn functional(&self, field: &SpectralField) -> f64 {
        self.l_weight.dot(field)
    }
}

/// `a(l(u))`.
pub fn nonlocal_value(field: &SpectralField, coeff: &NonlocalCoefficient) -> f64 {
    coeff.a(coeff.functional(field))
}
