//! Hermite functions and Gauss–Hermite quadrature.
//!
//! Both are built from the normalized three-term recurrence
//!
//! ```text
//! φ₀(x) = π^{-1/4} e^{-x²/2}
//! φₙ₊₁(x) = √(2/(n+1)) x φₙ(x) − √(n/(n+1)) φₙ₋₁(x)
//! ```
//!
//! which never forms a factorial.

use std::f64::consts::PI;

const PI_M4: f64 = 0.751_125_544_464_942_5;

/// Fills `out[n]` with the Hermite function φₙ(x) for `n = 0..out.len()`.
///
/// The recurrence runs on a rescaled mantissa with the Gaussian envelope
/// kept in a separate log factor, so high orders stay accurate at `|x|`
/// where `e^{-x²/2}` alone would underflow.
pub fn hermite_functions(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    let mut log_scale = PI_M4.ln() - 0.5 * x * x;
    let mut prev = 0.0;
    let mut cur = 1.0;
    out[0] = log_scale.exp();
    for n in 0..out.len() - 1 {
        let nf = n as f64;
        let next = (2.0 / (nf + 1.0)).sqrt() * x * cur - (nf / (nf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
        if cur.abs() > RESCALE {
            prev /= RESCALE;
            cur /= RESCALE;
            log_scale += RESCALE.ln();
        }
        out[n + 1] = cur * log_scale.exp();
    }
}

const RESCALE: f64 = 1e150;

/// The single Hermite function φₙ(x).
pub fn hermite_function(n: usize, x: f64) -> f64 {
    let mut log_scale = PI_M4.ln() - 0.5 * x * x;
    let mut prev = 0.0;
    let mut cur = 1.0;
    for k in 0..n {
        let kf = k as f64;
        let next = (2.0 / (kf + 1.0)).sqrt() * x * cur - (kf / (kf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
        if cur.abs() > RESCALE {
            prev /= RESCALE;
            cur /= RESCALE;
            log_scale += RESCALE.ln();
        }
    }
    cur * log_scale.exp()
}

/// Nodes and weights of the `n`-point Gauss–Hermite rule for the weight
/// `e^{-x²}`, nodes ascending.
///
/// Newton iteration on the orthonormal recurrence with the usual asymptotic
/// starting guesses.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Hermite rule needs at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let m = n.div_ceil(2);
    let mut z = 0.0;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = PI_M4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 3e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    x.reverse();
    w.reverse();
    (x, w)
}

/// `E[f(X)]` for `X ~ N(mean, sd²)` by an `order`-point Gauss–Hermite rule.
pub fn normal_expectation(mean: f64, sd: f64, order: usize, f: impl Fn(f64) -> f64) -> f64 {
    let (x, w) = gauss_hermite(order);
    let scale = std::f64::consts::SQRT_2 * sd;
    x.iter().zip(&w).map(|(&xi, &wi)| wi * f(mean + scale * xi)).sum::<f64>() / PI.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_integrates_polynomials_exactly() {
        let (x, w) = gauss_hermite(20);
        // ∫ x^{2k} e^{-x²} dx = Γ(k + 1/2)
        let gamma_half = [PI.sqrt(), PI.sqrt() / 2.0, 3.0 * PI.sqrt() / 4.0, 15.0 * PI.sqrt() / 8.0];
        for (k, expected) in gamma_half.iter().enumerate() {
            let got: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(2 * k as i32)).sum();
            assert!((got - expected).abs() < 1e-13, "k={k}: {got} vs {expected}");
        }
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn single_and_odd_rules() {
        let (x, w) = gauss_hermite(1);
        assert_eq!(x.len(), 1);
        assert!(x[0].abs() < 1e-15);
        assert!((w[0] - PI.sqrt()).abs() < 1e-14);
        let (x, _) = gauss_hermite(7);
        assert!(x[3].abs() < 1e-14);
    }

    #[test]
    fn hermite_functions_are_orthonormal() {
        let (x, w) = gauss_hermite(80);
        let nmax = 30;
        let mut buf = vec![0.0; nmax];
        let mut gram = vec![vec![0.0; nmax]; nmax];
        for (&xi, &wi) in x.iter().zip(&w) {
            hermite_functions(xi, &mut buf);
            // quadrature weight is for e^{-x²}; undo it
            let ww = wi * (xi * xi).exp();
            for a in 0..nmax {
                for b in 0..nmax {
                    gram[a][b] += ww * buf[a] * buf[b];
                }
            }
        }
        for (a, row) in gram.iter().enumerate() {
            for (b, g) in row.iter().enumerate() {
                let expected = if a == b { 1.0 } else { 0.0 };
                assert!((g - expected).abs() < 1e-10, "({a},{b}) = {g}");
            }
        }
    }

    #[test]
    fn single_function_matches_batch() {
        let mut buf = vec![0.0; 12];
        hermite_functions(0.7, &mut buf);
        for (n, v) in buf.iter().enumerate() {
            assert!((hermite_function(n, 0.7) - v).abs() < 1e-15);
        }
    }

    #[test]
    fn high_orders_survive_envelope_underflow() {
        // φ₉₀₀ oscillates with O(0.1) amplitude inside its turning point
        // √1801 ≈ 42.4, where e^{-x²/2} itself is far below f64 range.
        let x = 40.0;
        let mut buf = vec![0.0; 901];
        hermite_functions(x, &mut buf);
        assert_eq!(buf[0], 0.0);
        assert!(buf[900].is_finite() && buf[900].abs() > 1e-4, "{}", buf[900]);
        assert!((hermite_function(900, x) - buf[900]).abs() < 1e-12);
        // WKB amplitude bound (2/π)^{1/2} (2n+1−x²)^{-1/4}
        let bound = (2.0 / PI).sqrt() * (1801.0 - x * x).powf(-0.25);
        assert!(buf[900].abs() <= 1.5 * bound);
    }

    #[test]
    fn normal_expectation_of_fourth_moment() {
        let m4 = normal_expectation(0.0, 2.0, 10, |x| x.powi(4));
        assert!((m4 - 3.0 * 16.0).abs() < 1e-11);
    }
}
