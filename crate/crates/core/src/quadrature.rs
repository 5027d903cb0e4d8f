//! Quadrature rules: Gauss–Legendre, symmetric Gauss–Jacobi, and composite
//! Newton–Cotes weights on uniform segments.

use crate::error::{domain, Result};
use crate::specfun::ln_gamma;
use nalgebra::DMatrix;
use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on [−1, 1], nodes ascending.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        // Tricomi initial guess, then Newton on the Legendre recurrence.
        let mut z = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_deriv(m, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_deriv(m, z);
        if d.is_finite() {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[m - 1 - i] = z;
        w[i] = wi;
        w[m - 1 - i] = wi;
    }
    if m % 2 == 1 {
        x[m / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_deriv(m: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if m == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=m {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * z * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let d = m as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Gauss–Jacobi rule for the weight (1−x²)^α on [−1, 1], nodes ascending.
///
/// Golub–Welsch for the initial nodes, then Newton polishing and the
/// closed-form weights.
pub fn gauss_jacobi_symmetric(m: usize, alpha: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if alpha <= -1.0 {
        return domain(format!("Gauss-Jacobi exponent {alpha} must exceed -1"));
    }
    if m == 0 {
        return Ok((vec![], vec![]));
    }
    let mut jm = DMatrix::<f64>::zeros(m, m);
    for j in 1..m {
        let jf = j as f64;
        let b2 = if j == 1 {
            1.0 / (3.0 + 2.0 * alpha)
        } else {
            jf * (jf + 2.0 * alpha)
                / ((2.0 * jf + 2.0 * alpha + 1.0) * (2.0 * jf + 2.0 * alpha - 1.0))
        };
        let b = b2.sqrt();
        jm[(j, j - 1)] = b;
        jm[(j - 1, j)] = b;
    }
    let eig = jm.symmetric_eigen();
    let mut x: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mf = m as f64;
    let log_c = ln_gamma(mf + alpha + 1.0) * 2.0 - ln_gamma(mf + 2.0 * alpha + 1.0) - ln_gamma(mf + 1.0)
        + (2.0 * alpha + 1.0) * std::f64::consts::LN_2;
    let mut w = vec![0.0; m];
    for i in 0..m {
        let mut z = x[i];
        for _ in 0..4 {
            let p = jacobi_raw(m, alpha, alpha, z);
            let dp = 0.5 * (mf + 2.0 * alpha + 1.0) * jacobi_raw(m - 1, alpha + 1.0, alpha + 1.0, z);
            let dz = p / dp;
            if !dz.is_finite() {
                break;
            }
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        let dp = 0.5 * (mf + 2.0 * alpha + 1.0) * jacobi_raw(m - 1, alpha + 1.0, alpha + 1.0, z);
        x[i] = z;
        w[i] = (log_c - ((1.0 - z * z) * dp * dp).ln()).exp();
    }
    // Enforce exact symmetry.
    for i in 0..m / 2 {
        let xs = 0.5 * (x[m - 1 - i] - x[i]);
        let ws = 0.5 * (w[i] + w[m - 1 - i]);
        x[i] = -xs;
        x[m - 1 - i] = xs;
        w[i] = ws;
        w[m - 1 - i] = ws;
    }
    if m % 2 == 1 {
        x[m / 2] = 0.0;
    }
    Ok((x, w))
}

/// Three-term recurrence for P_k^{(a,b)}(x), no parameter checks.
pub(crate) fn jacobi_raw(k: usize, a: f64, b: f64, x: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let mut p0 = 1.0;
    let mut p1 = 0.5 * (a - b) + 0.5 * (a + b + 2.0) * x;
    for n in 2..=k {
        let nf = n as f64;
        let s = 2.0 * nf + a + b;
        let c1 = 2.0 * nf * (nf + a + b) * (s - 2.0);
        let c2 = (s - 1.0) * (s * (s - 2.0) * x + a * a - b * b);
        let c3 = 2.0 * (nf + a - 1.0) * (nf + b - 1.0) * s;
        let p2 = (c2 * p1 - c3 * p0) / c1;
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Composite Newton–Cotes weights for `intervals` equal steps of size h:
/// Simpson throughout, with a 3/8 panel closing an odd count.
pub fn newton_cotes_weights(intervals: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; intervals + 1];
    match intervals {
        0 => {}
        1 => {
            w[0] = 0.5 * h;
            w[1] = 0.5 * h;
        }
        _ => {
            let simpson_panels = if intervals % 2 == 0 { intervals } else { intervals - 3 };
            let mut i = 0;
            while i < simpson_panels {
                w[i] += h / 3.0;
                w[i + 1] += 4.0 * h / 3.0;
                w[i + 2] += h / 3.0;
                i += 2;
            }
            if intervals % 2 == 1 {
                let s = simpson_panels;
                w[s] += 3.0 * h / 8.0;
                w[s + 1] += 9.0 * h / 8.0;
                w[s + 2] += 9.0 * h / 8.0;
                w[s + 3] += 3.0 * h / 8.0;
            }
        }
    }
    w
}

/// Trapezoid weights with sixth-order Gregory end corrections (exact on
/// quintics); short segments fall back to Newton–Cotes.
pub fn gregory_weights(intervals: usize, h: f64) -> Vec<f64> {
    if intervals < 9 {
        return newton_cotes_weights(intervals, h);
    }
    const END: [f64; 5] = [95.0 / 288.0, 317.0 / 240.0, 23.0 / 30.0, 793.0 / 720.0, 157.0 / 160.0];
    let mut w = vec![h; intervals + 1];
    for (i, c) in END.iter().enumerate() {
        w[i] = c * h;
        w[intervals - i] = c * h;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rule_integrates_polynomials() {
        let (x, w) = gauss_legendre(10);
        for p in 0..20 {
            let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum();
            let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
            assert!((s - exact).abs() < 1e-14, "degree {p}: {s} vs {exact}");
        }
    }

    #[test]
    fn jacobi_rule_matches_beta_moments() {
        // ∫(1−x²)^α x^{2q} dx = B(q+1/2, α+1)
        for &alpha in &[-0.5, 0.0, 0.5, 3.0, 20.0] {
            let (x, w) = gauss_jacobi_symmetric(24, alpha).unwrap();
            for q in 0..20 {
                let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(2 * q)).sum();
                let qf = q as f64;
                let exact = (ln_gamma(qf + 0.5) + ln_gamma(alpha + 1.0) - ln_gamma(qf + alpha + 1.5)).exp();
                assert!(((s - exact) / exact).abs() < 1e-12, "alpha {alpha} q {q}: {s} vs {exact}");
            }
        }
    }

    #[test]
    fn gregory_exact_on_quintics() {
        for intervals in [9usize, 10, 17, 40] {
            let h = 0.7;
            let w = gregory_weights(intervals, h);
            let b = intervals as f64 * h;
            for p in 0..6 {
                let s: f64 = w.iter().enumerate().map(|(i, w)| w * (i as f64 * h).powi(p)).sum();
                let exact = b.powi(p + 1) / (p as f64 + 1.0);
                assert!(((s - exact) / exact).abs() < 1e-13, "{intervals} {p}: {s} vs {exact}");
            }
        }
    }

    #[test]
    fn newton_cotes_exact_on_cubics() {
        for intervals in [1usize, 2, 3, 4, 5, 7, 10] {
            let h = 0.3;
            let w = newton_cotes_weights(intervals, h);
            let s: f64 = w.iter().enumerate().map(|(i, w)| w * (i as f64 * h).powi(if intervals == 1 { 1 } else { 3 })).sum();
            let b = intervals as f64 * h;
            let exact = if intervals == 1 { b * b / 2.0 } else { b.powi(4) / 4.0 };
            assert!((s - exact).abs() < 1e-12, "{intervals}: {s} vs {exact}");
        }
    }
}
