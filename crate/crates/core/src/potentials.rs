//! Polynomial potentials and closed-form propagation for degree ≤ 2.
//!
//! Coefficients are stored as a power series, `V(q) = Σ c_k q^k`, which is
//! also the `V0,V1,V2,...` form accepted on the command line. The Taylor
//! coefficients `V_k = k! c_k` (so `V = V₀ + V₁q + ½V₂q² + V₃q³/6 + …`) are
//! what the closed-form propagators are written in; see [`PolynomialPotential::taylor`].

use serde::{Deserialize, Serialize};

use crate::error::{require_finite, require_positive, Error, Result};
use crate::packets::PacketParams;
use crate::trajectory::{validate_times, PacketState, SolverMeta, Trajectory, TrajectoryKind};

/// Highest supported polynomial degree.
pub const MAX_DEGREE: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialClass {
    Free,
    Linear,
    Quadratic,
    Higher,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialPotential {
    coeffs: Vec<f64>,
    /// `(k+1) c_{k+1}`: power-series coefficients of `V'`.
    slope: Vec<f64>,
    mass: f64,
}

impl PolynomialPotential {
    /// Power-series coefficients `c_0, c_1, …` and particle mass.
    pub fn new(coeffs: Vec<f64>, mass: f64) -> Result<Self> {
        require_positive("mu", mass)?;
        for &c in &coeffs {
            require_finite("V", c)?;
        }
        let mut coeffs = coeffs;
        while coeffs.len() > 1 && *coeffs.last().unwrap() == 0.0 {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        if coeffs.len() - 1 > MAX_DEGREE {
            return Err(Error::InvalidParameter {
                name: "V",
                reason: format!("degree {} exceeds the supported maximum {MAX_DEGREE}", coeffs.len() - 1),
            });
        }
        let slope = coeffs.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect();
        Ok(Self { coeffs, slope, mass })
    }

    /// From Taylor coefficients `V_k = V^{(k)}(0)`.
    pub fn from_taylor(derivatives: &[f64], mass: f64) -> Result<Self> {
        let mut factorial = 1.0;
        let coeffs = derivatives
            .iter()
            .enumerate()
            .map(|(k, v)| {
                if k > 0 {
                    factorial *= k as f64;
                }
                v / factorial
            })
            .collect();
        Self::new(coeffs, mass)
    }

    pub fn free(mass: f64) -> Result<Self> {
        Self::new(vec![0.0], mass)
    }

    /// `½ V₂ q²`.
    pub fn harmonic(v2: f64, mass: f64) -> Result<Self> {
        Self::new(vec![0.0, 0.0, 0.5 * v2], mass)
    }

    /// `V₃ q³ / 6`.
    pub fn cubic(v3: f64, mass: f64) -> Result<Self> {
        Self::new(vec![0.0, 0.0, 0.0, v3 / 6.0], mass)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Power-series coefficient `c_k` (zero beyond the degree).
    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    /// Taylor coefficient `V_k = k! c_k`.
    pub fn taylor(&self, k: usize) -> f64 {
        (1..=k).map(|i| i as f64).product::<f64>() * self.coeff(k)
    }

    pub fn class(&self) -> PotentialClass {
        if self.degree() >= 3 {
            PotentialClass::Higher
        } else if self.coeff(2) != 0.0 {
            PotentialClass::Quadratic
        } else if self.coeff(1) != 0.0 {
            PotentialClass::Linear
        } else {
            PotentialClass::Free
        }
    }

    pub fn value(&self, q: f64) -> f64 {
        horner(&self.coeffs, q)
    }

    /// `−dV/dq`.
    #[inline]
    pub fn force(&self, q: f64) -> f64 {
        -horner(&self.slope, q)
    }

    /// `V''(q)`.
    pub fn curvature(&self, q: f64) -> f64 {
        let second: Vec<f64> = self.slope.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect();
        horner(&second, q)
    }

    /// `p²/2μ + V(q)`.
    pub fn energy(&self, q: f64, p: f64) -> f64 {
        0.5 * p * p / self.mass + self.value(q)
    }

    /// Time over which the packet changes appreciably: `√(μ/|V''(Q)|)`, or
    /// `ΔQ μ / ΔP` where the local curvature vanishes.
    pub fn characteristic_time(&self, params: &PacketParams) -> f64 {
        let curvature = self.curvature(params.mean_q).abs();
        if curvature > 0.0 {
            (self.mass / curvature).sqrt()
        } else {
            params.dq * self.mass / params.dp
        }
    }

    /// Coefficients of the affine flow `Q(t) = f₀ + Q f₁ + P f₂`,
    /// `P(t) = g₀ + Q g₁ + P g₂` for degree ≤ 2.
    ///
    /// `V₂ > 0` is the trigonometric oscillator, `V₂ = 0` the uniform field,
    /// and `V₂ < 0` the inverted oscillator, obtained by continuing
    /// `ω → iω` (cos → cosh, sin → sinh).
    pub fn quadratic_propagator(&self, t: f64) -> Result<PropagatorCoefficients> {
        if self.degree() > 2 {
            return Err(Error::NotQuadratic(self.degree()));
        }
        let mu = self.mass;
        let v1 = self.taylor(1);
        let v2 = self.taylor(2);
        if v2 == 0.0 {
            return Ok(PropagatorCoefficients {
                f0: -v1 / (2.0 * mu) * t * t,
                f1: 1.0,
                f2: t / mu,
                g0: -v1 * t,
                g1: 0.0,
                g2: 1.0,
            });
        }
        let omega = (v2.abs() / mu).sqrt();
        let xi = (mu * v2.abs()).sqrt();
        let wt = omega * t;
        let ratio = v1 / v2;
        if v2 > 0.0 {
            let (s, c) = wt.sin_cos();
            let half = (0.5 * wt).sin();
            Ok(PropagatorCoefficients {
                f0: -ratio * 2.0 * half * half,
                f1: c,
                f2: s / xi,
                g0: -xi * ratio * s,
                g1: -xi * s,
                g2: c,
            })
        } else {
            let (s, c) = (wt.sinh(), wt.cosh());
            let half = (0.5 * wt).sinh();
            Ok(PropagatorCoefficients {
                f0: ratio * 2.0 * half * half,
                f1: c,
                f2: s / xi,
                g0: xi * ratio * s,
                g1: xi * s,
                g2: c,
            })
        }
    }
}

#[inline]
fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Affine phase-space flow of an at-most-quadratic potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagatorCoefficients {
    pub f0: f64,
    pub f1: f64,
    pub f2: f64,
    pub g0: f64,
    pub g1: f64,
    pub g2: f64,
}

impl PropagatorCoefficients {
    /// `f₁g₂ − f₂g₁`, identically 1 for a symplectic flow.
    pub fn determinant(&self) -> f64 {
        self.f1 * self.g2 - self.f2 * self.g1
    }

    pub fn apply(&self, params: &PacketParams) -> PacketState {
        let (q, p, dq, dp) = (params.mean_q, params.mean_p, params.dq, params.dp);
        PacketState {
            q: self.f0 + q * self.f1 + p * self.f2,
            p: self.g0 + q * self.g1 + p * self.g2,
            dq: (self.f1 * self.f1 * dq * dq + self.f2 * self.f2 * dp * dp).sqrt(),
            dp: (self.g1 * self.g1 * dq * dq + self.g2 * self.g2 * dp * dp).sqrt(),
        }
    }
}

/// Closed-form `(Q, P, ΔQ, ΔP)` at each time; identical for the classical
/// and quantum packets when the potential is at most quadratic.
pub fn exact_trajectory(params: &PacketParams, potential: &PolynomialPotential, times: &[f64]) -> Result<Trajectory> {
    params.validate()?;
    validate_times(times)?;
    let states = times
        .iter()
        .map(|&t| potential.quadratic_propagator(t).map(|c| c.apply(params)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        kind: TrajectoryKind::Exact,
        times: times.to_vec(),
        states,
        std_errors: None,
        meta: SolverMeta { scheme: "closed-form".into(), ..Default::default() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn force_examples() {
        assert_eq!(PolynomialPotential::harmonic(1.0, 1.0).unwrap().force(3.0), -3.0);
        assert_eq!(PolynomialPotential::cubic(6.0, 1.0).unwrap().force(2.0), -12.0);
        assert_eq!(PolynomialPotential::new(vec![4.2], 1.0).unwrap().force(5.0), 0.0);
    }

    #[test]
    fn classification_and_taylor() {
        let p = PolynomialPotential::new(vec![1.0, 0.0, 0.0, 0.0], 1.0).unwrap();
        assert_eq!(p.class(), PotentialClass::Free);
        assert_eq!(p.degree(), 0);
        assert_eq!(PolynomialPotential::new(vec![0.0, 2.0], 1.0).unwrap().class(), PotentialClass::Linear);
        assert_eq!(PolynomialPotential::harmonic(-1.0, 1.0).unwrap().class(), PotentialClass::Quadratic);
        let c = PolynomialPotential::cubic(0.3, 1.0).unwrap();
        assert_eq!(c.class(), PotentialClass::Higher);
        assert!((c.taylor(3) - 0.3).abs() < 1e-15);
        assert!(PolynomialPotential::new(vec![0.0; 15].into_iter().chain([1.0]).collect(), 1.0).is_err());
        assert!(PolynomialPotential::new(vec![1.0], 0.0).is_err());
    }

    #[test]
    fn propagator_examples() {
        let h = PolynomialPotential::harmonic(1.0, 1.0).unwrap();
        let c = h.quadratic_propagator(PI / 2.0).unwrap();
        let expect = [0.0, 0.0, 1.0, 0.0, -1.0, 0.0];
        let got = [c.f0, c.f1, c.f2, c.g0, c.g1, c.g2];
        for (g, e) in got.iter().zip(expect) {
            assert!((g - e).abs() < 1e-15, "{got:?}");
        }

        let free = PolynomialPotential::free(2.0).unwrap().quadratic_propagator(3.0).unwrap();
        assert_eq!([free.f0, free.f1, free.f2, free.g0, free.g1, free.g2], [0.0, 1.0, 1.5, 0.0, 0.0, 1.0]);

        let field = PolynomialPotential::new(vec![0.0, 2.0], 1.0).unwrap().quadratic_propagator(1.0).unwrap();
        assert_eq!(field.f0, -1.0);
        assert_eq!(field.g0, -2.0);

        assert!(matches!(
            PolynomialPotential::cubic(1.0, 1.0).unwrap().quadratic_propagator(1.0),
            Err(Error::NotQuadratic(3))
        ));
    }

    #[test]
    fn small_curvature_limits_agree() {
        let t = 2.7;
        let flat = PolynomialPotential::new(vec![0.0, 0.7], 1.3).unwrap().quadratic_propagator(t).unwrap();
        for v2 in [1e-8, -1e-8] {
            let c = PolynomialPotential::from_taylor(&[0.0, 0.7, v2], 1.3).unwrap().quadratic_propagator(t).unwrap();
            for (a, b) in [(c.f0, flat.f0), (c.f2, flat.f2), (c.g0, flat.g0), (c.f1, flat.f1), (c.g2, flat.g2)] {
                assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0), "{a} vs {b}");
            }
            assert!(c.g1.abs() < 1e-6);
        }
    }

    #[test]
    fn anti_harmonic_solves_equation_of_motion() {
        // μ q̈ = −V₁ − V₂ q, checked by central differences
        let pot = PolynomialPotential::from_taylor(&[0.0, 0.4, -0.9], 1.7).unwrap();
        let params = PacketParams::new(0.3, -0.2, 1.0, 1.0).unwrap();
        let q = |t: f64| pot.quadratic_propagator(t).unwrap().apply(&params).q;
        let p = |t: f64| pot.quadratic_propagator(t).unwrap().apply(&params).p;
        let (t, h) = (1.3, 1e-4);
        let qdd = (q(t + h) - 2.0 * q(t) + q(t - h)) / (h * h);
        assert!((pot.mass() * qdd - (-0.4 + 0.9 * q(t))).abs() < 1e-5);
        let qd = (q(t + h) - q(t - h)) / (2.0 * h);
        assert!((pot.mass() * qd - p(t)).abs() < 1e-7);
    }

    #[test]
    fn exact_trajectory_examples() {
        let free = PolynomialPotential::free(1.0).unwrap();
        let pk = PacketParams::new(0.0, 1.0, 1.0, 1.0).unwrap();
        let tr = exact_trajectory(&pk, &free, &[0.0, 2.0]).unwrap();
        assert_eq!(tr.states[0], PacketState { q: 0.0, p: 1.0, dq: 1.0, dp: 1.0 });
        assert!((tr.states[1].q - 2.0).abs() < 1e-15);
        assert!((tr.states[1].dq - 5f64.sqrt()).abs() < 1e-15);

        let h = PolynomialPotential::harmonic(1.0, 1.0).unwrap();
        let pk = PacketParams::new(1.0, 0.0, 1.0, 1.0).unwrap();
        let tr = exact_trajectory(&pk, &h, &[0.3, 1.1, PI]).unwrap();
        for s in &tr.states {
            assert!((s.dq - 1.0).abs() < 1e-15);
        }
        assert!((tr.states[2].q + 1.0).abs() < 1e-15);
        assert!(tr.states[2].p.abs() < 1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn symplectic_identity(v1 in -3.0..3.0f64, v2 in -2.0..2.0f64, mu in 0.1..5.0f64, t in 0.0..6.0f64) {
                let pot = PolynomialPotential::from_taylor(&[0.0, v1, v2], mu).unwrap();
                let c = pot.quadratic_propagator(t).unwrap();
                let scale = c.f1.abs().max(c.g2.abs()).powi(2).max(1.0);
                prop_assert!((c.determinant() - 1.0).abs() < 1e-10 * scale);
            }

            #[test]
            fn initial_state_is_returned(q in -5.0..5.0f64, p in -5.0..5.0f64, dq in 0.1..3.0f64, dp in 0.1..3.0f64, v2 in -2.0..2.0f64) {
                let pot = PolynomialPotential::from_taylor(&[0.0, 0.5, v2], 1.0).unwrap();
                let pk = PacketParams::new(q, p, dq, dp).unwrap();
                let s = exact_trajectory(&pk, &pot, &[0.0]).unwrap().states[0];
                prop_assert_eq!(s, PacketState { q, p, dq, dp });
            }
        }
    }
}
