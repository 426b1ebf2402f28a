//! Small dense helpers: symmetric tridiagonal eigenproblems (for Gauss rules
//! built from recurrence coefficients) and polynomial real-root isolation.

use alloc::vec;
use alloc::vec::Vec;

/// Eigenvalues and squared first eigenvector components of the symmetric
/// tridiagonal matrix with diagonal `diag` and off-diagonal `off`
/// (`off.len() == diag.len() - 1`), sorted by eigenvalue.
///
/// Implicit QL with Wilkinson shifts.
pub fn tridiagonal_eigen(diag: &[f64], off: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n.saturating_sub(1)].copy_from_slice(&off[..n.saturating_sub(1)]);
    // only the first row of the eigenvector matrix is needed
    let mut z = vec![0.0; n];
    if n > 0 {
        z[0] = 1.0;
    }
    let mut zfull = vec![vec![0.0; n]; n];
    for (i, row) in zfull.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                break;
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = libm::hypot(g, 1.0);
            g = d[m] - d[l] + e[l] / (g + if g >= 0.0 { r.abs() } else { -r.abs() });
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = libm::hypot(f, g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for row in zfull.iter_mut() {
                    let fz = row[i + 1];
                    row[i + 1] = s * row[i] + c * fz;
                    row[i] = c * row[i] - s * fz;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    for k in 0..n {
        z[k] = zfull[0][k] * zfull[0][k];
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    (idx.iter().map(|&i| d[i]).collect(), idx.iter().map(|&i| z[i]).collect())
}

/// Evaluates a polynomial given by ascending-power coefficients.
pub fn poly_eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Derivative of an ascending-power polynomial.
pub fn poly_derivative(coeffs: &[f64]) -> Vec<f64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, c)| k as f64 * c)
        .collect()
}

fn trim(coeffs: &[f64]) -> &[f64] {
    let mut n = coeffs.len();
    while n > 0 && coeffs[n - 1] == 0.0 {
        n -= 1;
    }
    &coeffs[..n]
}

/// All distinct real roots of an ascending-power polynomial, sorted.
///
/// Roots of the derivative split the line into monotone pieces; each piece
/// holding a sign change is bisected to machine precision.
pub fn real_roots(coeffs: &[f64]) -> Vec<f64> {
    let c = trim(coeffs);
    if c.len() <= 1 {
        return Vec::new();
    }
    if c.len() == 2 {
        return vec![-c[0] / c[1]];
    }
    let lead = c[c.len() - 1];
    let bound = 1.0
        + c[..c.len() - 1]
            .iter()
            .map(|a| (a / lead).abs())
            .fold(0.0, f64::max);
    let crit = real_roots(&poly_derivative(c));
    let mut knots = vec![-bound];
    knots.extend(crit.iter().copied().filter(|x| x.abs() < bound));
    knots.push(bound);
    let mut roots: Vec<f64> = Vec::new();
    for w in knots.windows(2) {
        let (mut lo, mut hi) = (w[0], w[1]);
        let (flo, fhi) = (poly_eval(c, lo), poly_eval(c, hi));
        if flo == 0.0 {
            push_root(&mut roots, lo);
            continue;
        }
        if flo * fhi > 0.0 {
            continue;
        }
        if fhi == 0.0 {
            push_root(&mut roots, hi);
            continue;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let fm = poly_eval(c, mid);
            if fm == 0.0 {
                lo = mid;
                hi = mid;
                break;
            }
            if (fm > 0.0) == (flo > 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        push_root(&mut roots, 0.5 * (lo + hi));
    }
    // double roots where the polynomial touches zero at a critical point
    for x in crit {
        if poly_eval(c, x).abs() <= 1e-13 * libm::pow(1.0 + x.abs(), c.len() as f64) {
            push_root(&mut roots, x);
        }
    }
    roots.sort_by(f64::total_cmp);
    roots
}

fn push_root(roots: &mut Vec<f64>, x: f64) {
    if !roots.iter().any(|r| (r - x).abs() <= 1e-12 * (1.0 + x.abs())) {
        roots.push(x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_of_2x2() {
        let (ev, z) = tridiagonal_eigen(&[2.0, 2.0], &[1.0]);
        assert!((ev[0] - 1.0).abs() < 1e-14 && (ev[1] - 3.0).abs() < 1e-14);
        assert!((z[0] - 0.5).abs() < 1e-14 && (z[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn roots_of_cubic() {
        // (x-1)(x+2)(x-3) = x^3 - 2x^2 - 5x + 6
        let r = real_roots(&[6.0, -5.0, -2.0, 1.0]);
        assert_eq!(r.len(), 3);
        for (got, want) in r.iter().zip([-2.0, 1.0, 3.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn double_root_detected() {
        // 3x^2 has a double root at 0
        let r = real_roots(&[0.0, 0.0, 3.0]);
        assert_eq!(r, vec![0.0]);
    }
}
