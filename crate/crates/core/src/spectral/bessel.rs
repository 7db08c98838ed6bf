//! Integer-order Bessel functions `J_n` and their positive zeros.
//!
//! `J_n(x) = (1/2π) ∫₀^{2π} cos(nτ − x sin τ) dτ` has an analytic periodic
//! integrand, so the trapezoid rule converges geometrically once the number
//! of nodes exceeds `n + x` by a margin.

use std::f64::consts::PI;

use crate::error::{LabError, Result};

/// Largest argument for which zeros are tabulated.
pub const MAX_ARGUMENT: f64 = 2000.0;

const ZERO_TOL: f64 = 1e-12;

fn nodes(n: u32, x: f64) -> usize {
    let x = x.abs();
    (n as f64 + 1.1 * x + 15.0 * x.cbrt() + 40.0).ceil() as usize
}

/// `(J_n(x), J_n'(x))`.
pub fn j_and_derivative(n: u32, x: f64) -> (f64, f64) {
    let m = nodes(n, x);
    let h = 2.0 * PI / m as f64;
    let nf = n as f64;
    let (mut j, mut dj) = (0.0, 0.0);
    for k in 0..m {
        let tau = k as f64 * h;
        let s = tau.sin();
        let (sp, cp) = (nf * tau - x * s).sin_cos();
        j += cp;
        dj += s * sp;
    }
    (j / m as f64, dj / m as f64)
}

pub fn j(n: u32, x: f64) -> f64 {
    j_and_derivative(n, x).0
}

/// Root of `J_n` in `[lo, hi]`, where the sign changes. Newton steps that
/// leave the bracket fall back to bisection.
fn refine(n: u32, mut lo: f64, mut hi: f64) -> f64 {
    let f_lo = j(n, lo);
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (f, df) = j_and_derivative(n, x);
        if f.abs() <= ZERO_TOL * 1e-2 {
            return x;
        }
        if (f < 0.0) == (f_lo < 0.0) {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - f / df;
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - x).abs() <= 4.0 * f64::EPSILON * x {
            return next;
        }
        x = next;
    }
    x
}

/// Positive zeros `j_{ν,k} ≤ x_max` of `J_ν` for `ν = 0, 1, …`, one list per
/// order, stopping at the first order with no zero below `x_max`.
///
/// `J₀` zeros are bracketed by `[(k − ½)π, kπ]`. Higher orders use the
/// interlacing `j_{ν−1,k} < j_{ν,k} < j_{ν−1,k+1}`; past the last known zero
/// of `J_{ν−1}` a sign-change scan with step `1` (below the zero spacing)
/// takes over.
pub fn zeros_up_to(x_max: f64) -> Result<Vec<Vec<f64>>> {
    if !(x_max.is_finite() && x_max > 0.0) {
        return Err(LabError::arg(format!("x_max must be positive, got {x_max}")));
    }
    if x_max > MAX_ARGUMENT {
        return Err(LabError::BracketRange(x_max));
    }
    let mut table: Vec<Vec<f64>> = Vec::new();
    let mut prev: Vec<f64> = Vec::new();
    let mut k = 1.0;
    loop {
        let z = refine(0, (k - 0.5) * PI, k * PI);
        prev.push(z);
        if z > x_max {
            break;
        }
        k += 1.0;
    }
    // `prev` keeps one zero past x_max for bracketing the next order.
    table.push(prev.iter().copied().filter(|&z| z <= x_max).collect());
    let mut nu = 1u32;
    loop {
        let mut cur = Vec::new();
        for w in prev.windows(2) {
            let z = refine(nu, w[0], w[1]);
            cur.push(z);
            if z > x_max {
                break;
            }
        }
        if cur.last().is_none_or(|&z| z <= x_max) {
            let mut a = cur.last().copied().or(prev.last().copied()).unwrap_or(nu as f64).max(nu as f64);
            let mut fa = j(nu, a + 1e-9);
            loop {
                let b = a + 1.0;
                let fb = j(nu, b);
                if (fa < 0.0) != (fb < 0.0) {
                    let z = refine(nu, a, b);
                    cur.push(z);
                    if z > x_max {
                        break;
                    }
                }
                a = b;
                fa = fb;
            }
        }
        if cur.first().is_none_or(|&z| z > x_max) {
            break;
        }
        table.push(cur.iter().copied().filter(|&z| z <= x_max).collect());
        prev = cur;
        nu += 1;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Power series, an independent oracle for moderate arguments.
    fn series(n: u32, x: f64) -> f64 {
        let mut term = (0.5 * x).powi(n as i32) / (1..=n).map(f64::from).product::<f64>();
        let mut sum = term;
        for k in 1..80 {
            term *= -(0.25 * x * x) / (k as f64 * (k + n) as f64);
            sum += term;
        }
        sum
    }

    #[test]
    fn values_match_series() {
        for n in 0..6 {
            for k in 0..40 {
                let x = 0.25 * k as f64;
                assert!((j(n, x) - series(n, x)).abs() < 1e-13, "J_{n}({x})");
            }
        }
        assert!((j(0, 0.0) - 1.0).abs() < 1e-15);
        assert!(j(3, 0.0).abs() < 1e-15);
    }

    #[test]
    fn derivative_recurrence() {
        for &x in &[0.7, 3.3, 12.0, 150.0] {
            let (_, d0) = j_and_derivative(0, x);
            assert!((d0 + j(1, x)).abs() < 1e-13);
            let (_, d2) = j_and_derivative(2, x);
            assert!((d2 - 0.5 * (j(1, x) - j(3, x))).abs() < 1e-13);
        }
    }

    #[test]
    fn known_zeros() {
        let table = zeros_up_to(6.0).unwrap();
        assert!((table[0][0] - 2.404_825_557_695_773).abs() < 1e-12);
        assert!((table[0][1] - 5.520_078_110_286_311).abs() < 1e-12);
        assert!((table[1][0] - 3.831_705_970_207_512).abs() < 1e-12);
        assert!((table[2][0] - 5.135_622_301_840_683).abs() < 1e-12);
        assert_eq!(table.len(), 3);
    }

    #[test]
    fn zeros_are_roots_and_interlace() {
        let table = zeros_up_to(120.0).unwrap();
        for (nu, zs) in table.iter().enumerate() {
            assert!(!zs.is_empty());
            for &z in zs {
                assert!(j(nu as u32, z).abs() <= ZERO_TOL, "J_{nu}({z})");
            }
            // Spacing is close to π and never below 2.9.
            for w in zs.windows(2) {
                assert!(w[1] - w[0] > 2.9);
            }
            if nu > 0 {
                let below = &table[nu - 1];
                for (k, &z) in zs.iter().enumerate() {
                    assert!(z > below[k]);
                    if k + 1 < below.len() {
                        assert!(z < below[k + 1]);
                    }
                }
            }
        }
        // Weyl-type count of zeros: Σ_ν #{j_{νk} ≤ X} ≈ X²/4.
        let count: usize = table.iter().enumerate().map(|(nu, zs)| if nu == 0 { zs.len() } else { 2 * zs.len() }).sum();
        let weyl = 120.0f64.powi(2) / 4.0;
        assert!((count as f64 - weyl).abs() < 0.05 * weyl);
    }

    #[test]
    fn range_errors() {
        assert!(matches!(zeros_up_to(5000.0), Err(LabError::BracketRange(_))));
        assert!(zeros_up_to(0.0).is_err());
    }
}
