//! One-dimensional quadrature: Gauss–Legendre rules and a globally adaptive
//! Gauss–Kronrod (7/15) integrator for finite and semi-infinite ranges.

use crate::error::{Error, Result};
use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = alloc::vec![0.0; n];
    let mut weights = alloc::vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = libm::cos(PI * (i as f64 + 0.75) / (n as f64 + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

const MAX_INTERVALS: usize = 20_000;

/// Adaptive Gauss–Kronrod integration of `f` over `[a, b]`.
///
/// Endpoints are never evaluated, so integrable endpoint singularities are
/// handled by repeated bisection.
pub fn adaptive<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Integral> {
    if a == b {
        return Ok(Integral {
            value: 0.0,
            error: 0.0,
        });
    }
    let (v, e) = gk15(&mut f, a, b);
    let mut pieces: Vec<(f64, f64, f64, f64)> = alloc::vec![(a, b, v, e)];
    let mut total = v;
    let mut total_err = e;
    while total_err > abs_tol.max(rel_tol * total.abs()) {
        if pieces.len() >= MAX_INTERVALS {
            return Err(Error::Convergence {
                what: "adaptive quadrature",
                detail: format!("error estimate {total_err:e} on [{a}, {b}]"),
            });
        }
        let (idx, _) = pieces
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, p)| {
                if p.3 > best.1 {
                    (i, p.3)
                } else {
                    best
                }
            });
        let (lo, hi, pv, pe) = pieces.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            // interval collapsed to machine resolution; accept what we have
            pieces.push((lo, hi, pv, 0.0));
            total_err -= pe;
            continue;
        }
        let (lv, le) = gk15(&mut f, lo, mid);
        let (rv, re) = gk15(&mut f, mid, hi);
        total += lv + rv - pv;
        total_err += le + re - pe;
        pieces.push((lo, mid, lv, le));
        pieces.push((mid, hi, rv, re));
    }
    // re-sum to shed accumulated cancellation
    let value = pieces.iter().map(|p| p.2).sum();
    let error = pieces.iter().map(|p| p.3).sum();
    Ok(Integral { value, error })
}

/// Adaptive integration over `[a, ∞)` via `s = a + x / (1 - x)`.
pub fn adaptive_semi_infinite<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Integral> {
    adaptive(
        |x| {
            let one_minus = 1.0 - x;
            let s = a + x / one_minus;
            let v = f(s) / (one_minus * one_minus);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        abs_tol,
        rel_tol,
    )
}
