//! Harmonic chain of `N + 1` particles with nearest-neighbour springs,
//! `H = Σ pₙ²/2μ + (κ²/2) Σ (xₙ − xₙ₋₁ − ξ)²`, in its Gibbs state.
//!
//! After shifting out the equilibrium positions `nξ` the chain separates
//! into the centre of mass and `N` normal modes with
//! `ω_m = (2κ/√μ) sin(πm / 2(N+1))`. Each mode is an independent oscillator
//! with geometric phonon statistics, so all thermal quantities are `O(N)`
//! mode sums.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Error, Result};
use crate::trajectory::num;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RodSpec {
    /// Number of modes; the chain has `n + 1` particles.
    pub n: usize,
    pub mu: f64,
    pub kappa: f64,
    pub xi: f64,
    /// Inverse temperature `λ = 1/kT`.
    pub lam: f64,
    pub hbar: f64,
    /// Boltzmann constant used by [`RodSpec::temperature`].
    pub k_boltzmann: f64,
}

impl RodSpec {
    pub fn new(n: usize, mu: f64, kappa: f64, xi: f64, lam: f64) -> Result<Self> {
        let spec = Self { n, mu, kappa, xi, lam, hbar: 1.0, k_boltzmann: 1.0 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_hbar(mut self, hbar: f64) -> Result<Self> {
        self.hbar = hbar;
        self.validate()?;
        Ok(self)
    }

    pub fn with_lambda(mut self, lam: f64) -> Result<Self> {
        self.lam = lam;
        self.validate()?;
        Ok(self)
    }

    pub fn with_n(mut self, n: usize) -> Result<Self> {
        self.n = n;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::InvalidParameter { name: "N", reason: "need at least one mode".into() });
        }
        require_positive("mu", self.mu)?;
        require_positive("kappa", self.kappa)?;
        require_positive("xi", self.xi)?;
        require_positive("lambda", self.lam)?;
        require_positive("hbar", self.hbar)?;
        require_positive("k", self.k_boltzmann)
    }

    pub fn total_mass(&self) -> f64 {
        (self.n + 1) as f64 * self.mu
    }

    pub fn temperature(&self) -> f64 {
        1.0 / (self.k_boltzmann * self.lam)
    }

    /// `ω_m` for `m = 1..=N`, ascending.
    pub fn frequencies(&self) -> Vec<f64> {
        (1..=self.n).map(|m| self.frequency(m)).collect()
    }

    pub fn frequency(&self, m: usize) -> f64 {
        2.0 * self.kappa / self.mu.sqrt() * (PI * m as f64 / (2.0 * (self.n + 1) as f64)).sin()
    }

    fn check_mode(&self, m: usize) -> Result<()> {
        if m == 0 || m > self.n {
            return Err(Error::InvalidParameter { name: "m", reason: format!("mode index must be in 1..={}", self.n) });
        }
        Ok(())
    }

    /// Probability of `r` phonons in mode `m`: `(1 − e^{−x}) e^{−xr}`, `x = λħω_m`.
    pub fn mode_occupation(&self, m: usize, r: u64) -> Result<f64> {
        self.check_mode(m)?;
        let x = self.lam * self.hbar * self.frequency(m);
        Ok(-(-x).exp_m1() * (-x * r as f64).exp())
    }

    /// Bose mean `1/(e^{λħω_m} − 1)`.
    pub fn mean_occupation(&self, m: usize) -> Result<f64> {
        self.check_mode(m)?;
        Ok(bose(self.lam * self.hbar * self.frequency(m)))
    }

    pub fn zero_point_energy(&self) -> f64 {
        zero_point(self, &self.frequencies())
    }

    /// `E = Σ ħω_m (½ + n̄_m)`.
    pub fn internal_energy(&self) -> f64 {
        energy_at(self, &self.frequencies(), self.lam)
    }

    /// `Var(E) = Σ (ħω_m)² / (4 sinh²(λħω_m/2))`.
    pub fn energy_variance(&self) -> f64 {
        variance_at(self, &self.frequencies(), self.lam)
    }

    /// `Var(E) / E²`.
    pub fn energy_fluctuation(&self) -> f64 {
        self.energy_variance() / self.internal_energy().powi(2)
    }

    /// Coefficient of mode `m` in `x_{N+1} − x₁`.
    pub fn length_coefficient(&self, m: usize) -> f64 {
        if m.is_multiple_of(2) {
            0.0
        } else {
            let n1 = (self.n + 1) as f64;
            -2.0 * (2.0 / n1).sqrt() * (PI * m as f64 / (2.0 * n1)).cos()
        }
    }

    /// `⟨u_m²⟩ = (ħ/2μω_m) coth(λħω_m/2)`.
    pub fn mode_displacement_variance(&self, m: usize) -> f64 {
        let w = self.frequency(m);
        let x = 0.5 * self.lam * self.hbar * w;
        self.hbar / (2.0 * self.mu * w) / x.tanh()
    }

    /// Mean and variance of the end-to-end length `x_{N+1} − x₁`.
    ///
    /// The mean is `Nξ` for every Gibbs state because mode displacements
    /// average to zero.
    pub fn rod_length_stats(&self) -> (f64, f64) {
        let mean = self.n as f64 * self.xi;
        let var = (1..=self.n)
            .step_by(2)
            .map(|m| self.length_coefficient(m).powi(2) * self.mode_displacement_variance(m))
            .sum();
        (mean, var)
    }

    /// `Var(L) / L²`.
    pub fn length_fluctuation(&self) -> f64 {
        let (l, var) = self.rod_length_stats();
        var / (l * l)
    }
}

fn bose(x: f64) -> f64 {
    1.0 / x.exp_m1()
}

fn zero_point(spec: &RodSpec, omega: &[f64]) -> f64 {
    omega.iter().map(|w| 0.5 * spec.hbar * w).sum()
}

fn energy_at(spec: &RodSpec, omega: &[f64], lam: f64) -> f64 {
    omega
        .iter()
        .map(|w| {
            let e = spec.hbar * w;
            e * (0.5 + bose(lam * e))
        })
        .sum()
}

fn variance_at(spec: &RodSpec, omega: &[f64], lam: f64) -> f64 {
    omega
        .iter()
        .map(|w| {
            let e = spec.hbar * w;
            let s = (0.5 * lam * e).sinh();
            e * e / (4.0 * s * s)
        })
        .sum()
}

/// Phonon frequencies of `spec`, ascending.
pub fn phonon_frequencies(spec: &RodSpec) -> Vec<f64> {
    spec.frequencies()
}

/// Inverse temperature at which the chain's mean energy equals `energy`.
///
/// Bisection in `ln λ` brackets the root, Newton with `dE/dλ = −Var(E)`
/// polishes it. The value of `spec.lam` is ignored.
pub fn lambda_from_energy(spec: &RodSpec, energy: f64) -> Result<f64> {
    let omega = spec.frequencies();
    let zp = zero_point(spec, &omega);
    if !(energy > zp) || !energy.is_finite() {
        return Err(Error::BelowZeroPoint { energy, zero_point: zp });
    }
    let e_of = |lam: f64| energy_at(spec, &omega, lam);
    let (mut lo, mut hi) = (1.0, 1.0);
    let mut guard = 0;
    while e_of(lo) <= energy {
        lo *= 0.5;
        guard += 1;
        if guard > 2000 {
            return Err(Error::NoConvergence { iterations: guard, residual: f64::NAN });
        }
    }
    while e_of(hi) >= energy {
        hi *= 2.0;
        guard += 1;
        if guard > 2000 || !hi.is_finite() {
            // energy so close to the zero point that no finite λ resolves it
            return Err(Error::NoConvergence { iterations: guard, residual: e_of(hi) - energy });
        }
    }
    let mut iterations = 0;
    while (hi / lo).ln() > 1e-13 && iterations < 200 {
        let mid = (lo * hi).sqrt();
        if e_of(mid) > energy {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    let mut lam = (lo * hi).sqrt();
    for _ in 0..4 {
        let var = variance_at(spec, &omega, lam);
        let next = lam + (e_of(lam) - energy) / var;
        if !(next > lo * 0.5 && next < hi * 2.0) {
            break;
        }
        lam = next;
    }
    let residual = (e_of(lam) - energy).abs();
    if residual > 1e-10 * energy {
        return Err(Error::NoConvergence { iterations, residual });
    }
    Ok(lam)
}

/// Particle-to-mode transform and its frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeBasis {
    pub frequencies: Vec<f64>,
    /// Row 0 is the centre of mass `1/√(N+1)`; row `m` is
    /// `√(2/(N+1)) cos(πm(2n−1)/2(N+1))` over particles `n = 1..=N+1`.
    pub transform: DMatrix<f64>,
}

impl ModeBasis {
    pub fn new(spec: &RodSpec) -> Self {
        let n1 = spec.n + 1;
        let norm = (2.0 / n1 as f64).sqrt();
        let transform = DMatrix::from_fn(n1, n1, |m, col| {
            if m == 0 {
                1.0 / (n1 as f64).sqrt()
            } else {
                let n = (col + 1) as f64;
                norm * (PI * m as f64 * (2.0 * n - 1.0) / (2.0 * n1 as f64)).cos()
            }
        });
        Self { frequencies: spec.frequencies(), transform }
    }

    /// Largest deviation of `Y Yᵀ` from the identity.
    pub fn orthogonality_residual(&self) -> f64 {
        let n = self.transform.nrows();
        (&self.transform * self.transform.transpose() - DMatrix::identity(n, n)).amax()
    }

    /// Largest off-diagonal entry of `Y K Yᵀ`, and largest deviation of
    /// its diagonal from `(0, μω₁², …, μω_N²)`.
    pub fn diagonalization_residuals(&self, spec: &RodSpec) -> (f64, f64) {
        let d = &self.transform * coupling_matrix(spec) * self.transform.transpose();
        let n = d.nrows();
        let mut off: f64 = 0.0;
        let mut diag: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    let expected = if i == 0 { 0.0 } else { spec.mu * self.frequencies[i - 1].powi(2) };
                    diag = diag.max((d[(i, i)] - expected).abs());
                } else {
                    off = off.max(d[(i, j)].abs());
                }
            }
        }
        (off, diag)
    }
}

/// Spring matrix `K` of the open chain: `V = ½ uᵀKu` for displacements `u`
/// from equilibrium.
pub fn coupling_matrix(spec: &RodSpec) -> DMatrix<f64> {
    let n1 = spec.n + 1;
    let k2 = spec.kappa * spec.kappa;
    DMatrix::from_fn(n1, n1, |i, j| {
        if i == j {
            if i == 0 || i == n1 - 1 {
                k2
            } else {
                2.0 * k2
            }
        } else if i.abs_diff(j) == 1 {
            -k2
        } else {
            0.0
        }
    })
}

/// One row of a rod table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RodSummary {
    pub n: usize,
    pub mu: f64,
    pub kappa: f64,
    pub xi: f64,
    pub lambda: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub total_mass: f64,
    pub energy: f64,
    pub zero_point: f64,
    pub temperature: f64,
    pub length: f64,
    pub length_variance: f64,
    pub length_rel_variance: f64,
    pub energy_variance: f64,
    pub energy_rel_variance: f64,
}

impl RodSummary {
    pub fn of(spec: &RodSpec) -> Self {
        let (length, length_variance) = spec.rod_length_stats();
        let energy = spec.internal_energy();
        let energy_variance = spec.energy_variance();
        Self {
            n: spec.n,
            mu: spec.mu,
            kappa: spec.kappa,
            xi: spec.xi,
            lambda: spec.lam,
            omega_min: spec.frequency(1),
            omega_max: spec.frequency(spec.n),
            total_mass: spec.total_mass(),
            energy,
            zero_point: spec.zero_point_energy(),
            temperature: spec.temperature(),
            length,
            length_variance,
            length_rel_variance: length_variance / (length * length),
            energy_variance,
            energy_rel_variance: energy_variance / (energy * energy),
        }
    }

    pub const CSV_HEADER: &'static str =
        "N,mu,kappa,xi,lambda,omega_min,omega_max,M,E,E0,T,L,var_L,relvar_L,var_E,relvar_E";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.n,
            num(self.mu),
            num(self.kappa),
            num(self.xi),
            num(self.lambda),
            num(self.omega_min),
            num(self.omega_max),
            num(self.total_mass),
            num(self.energy),
            num(self.zero_point),
            num(self.temperature),
            num(self.length),
            num(self.length_variance),
            num(self.length_rel_variance),
            num(self.energy_variance),
            num(self.energy_rel_variance),
        )
    }
}

/// Summaries of `base` with the mode count replaced by each of `ns`.
pub fn scan_n(base: &RodSpec, ns: &[usize]) -> Result<Vec<RodSummary>> {
    ns.iter().map(|&n| Ok(RodSummary::of(&base.with_n(n)?))).collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
