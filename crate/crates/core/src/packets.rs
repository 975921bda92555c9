//! Classical and quantum maximum-entropy packets.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{require_finite, require_positive, Error, Result};
use crate::hermite;

/// Default truncation tolerance for quantum spectra.
pub const DEFAULT_SPECTRUM_TOL: f64 = 1e-10;

/// Hard cap on the number of retained spectral terms.
pub const MAX_SPECTRUM_TERMS: usize = 100_000;

/// Slack below `ν = 1` still treated as the minimum-uncertainty state.
const NU_SLACK: f64 = 1e-12;

/// Averages and spreads of position and momentum, plus `ħ` and the
/// phase-space volume `v` that makes the classical density dimensionless.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacketParams {
    pub mean_q: f64,
    pub mean_p: f64,
    pub dq: f64,
    pub dp: f64,
    pub hbar: f64,
    pub v: f64,
}

/// A point of phase space.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhasePoint {
    pub q: f64,
    pub p: f64,
}

impl PacketParams {
    /// Packet with `ħ = 1` and `v = 2πħ`.
    pub fn new(mean_q: f64, mean_p: f64, dq: f64, dp: f64) -> Result<Self> {
        let params = Self { mean_q, mean_p, dq, dp, hbar: 1.0, v: 2.0 * PI };
        params.validate()?;
        Ok(params)
    }

    /// Sets `ħ` and resets `v` to `2πħ`.
    pub fn with_hbar(mut self, hbar: f64) -> Result<Self> {
        self.hbar = hbar;
        self.v = 2.0 * PI * hbar;
        self.validate()?;
        Ok(self)
    }

    /// Overrides the auxiliary phase-space volume.
    pub fn with_volume(mut self, v: f64) -> Result<Self> {
        self.v = v;
        self.validate()?;
        Ok(self)
    }

    /// Same averages, both spreads multiplied by `s`.
    pub fn scaled_spreads(&self, s: f64) -> Result<Self> {
        let scaled = Self { dq: self.dq * s, dp: self.dp * s, ..*self };
        scaled.validate()?;
        Ok(scaled)
    }

    pub fn validate(&self) -> Result<()> {
        require_finite("Q", self.mean_q)?;
        require_finite("P", self.mean_p)?;
        require_positive("dQ", self.dq)?;
        require_positive("dP", self.dp)?;
        require_positive("hbar", self.hbar)?;
        require_positive("v", self.v)
    }

    /// Fuzziness `ν = 2ΔQΔP/ħ`; equals 1 for a minimum-uncertainty packet.
    pub fn nu(&self) -> f64 {
        2.0 * self.dp * self.dq / self.hbar
    }

    /// Classical ME density, normalized against `dq dp / v`.
    pub fn classical_density(&self, q: f64, p: f64) -> f64 {
        let zq = (q - self.mean_q) / self.dq;
        let zp = (p - self.mean_p) / self.dp;
        self.v / (2.0 * PI * self.dq * self.dp) * (-0.5 * (zq * zq + zp * zp)).exp()
    }

    /// `−∫ (dq dp / v) ρ ln ρ = 1 + ln(2πΔQΔP / v)`.
    pub fn classical_entropy(&self) -> f64 {
        1.0 + (2.0 * PI * self.dq * self.dp / self.v).ln()
    }

    /// Central moment `⟨(q−Q)ⁱ (p−P)ʲ⟩` of the classical packet.
    pub fn classical_central_moment(&self, i: u32, j: u32) -> f64 {
        gaussian_central_moment(self.dq, i) * gaussian_central_moment(self.dp, j)
    }

    /// Raw position moment `⟨qᵏ⟩` of the classical packet.
    pub fn classical_raw_moment_q(&self, k: u32) -> f64 {
        raw_from_central(self.mean_q, k, |i| gaussian_central_moment(self.dq, i))
    }

    /// Raw momentum moment `⟨pᵏ⟩` of the classical packet.
    pub fn classical_raw_moment_p(&self, k: u32) -> f64 {
        raw_from_central(self.mean_p, k, |i| gaussian_central_moment(self.dp, i))
    }

    /// Minimum-uncertainty Gaussian wave packet with the packet's `Q`, `P`
    /// and `ΔQ`. It is the full quantum packet only when `ν = 1`.
    pub fn ground_wavefunction(&self, q: f64) -> Complex64 {
        let amp = (1.0 / (2.0 * PI * self.dq * self.dq)).powf(0.25);
        let d = q - self.mean_q;
        let envelope = amp * (-d * d / (4.0 * self.dq * self.dq)).exp();
        Complex64::from_polar(envelope, self.mean_p * q / self.hbar)
    }

    /// `n` independent draws from the classical packet.
    ///
    /// Sample `i` uses its own ChaCha stream keyed by `(seed, i)`, so the
    /// ensemble does not depend on how the index range is split across
    /// threads.
    pub fn sample_classical(&self, n: usize, seed: u64) -> Vec<PhasePoint> {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                let zq: f64 = StandardNormal.sample(&mut rng);
                let zp: f64 = StandardNormal.sample(&mut rng);
                PhasePoint { q: self.mean_q + self.dq * zq, p: self.mean_p + self.dp * zp }
            })
            .collect()
    }
}

/// `(i−1)!! σⁱ` for even `i`, zero for odd.
pub fn gaussian_central_moment(sigma: f64, i: u32) -> f64 {
    if i % 2 == 1 {
        return 0.0;
    }
    let mut double_factorial = 1.0;
    let mut k = i as i64 - 1;
    while k > 1 {
        double_factorial *= k as f64;
        k -= 2;
    }
    double_factorial * sigma.powi(i as i32)
}

fn raw_from_central(mean: f64, k: u32, central: impl Fn(u32) -> f64) -> f64 {
    let mut binom = 1.0;
    let mut total = 0.0;
    for i in 0..=k {
        total += binom * mean.powi((k - i) as i32) * central(i);
        binom = binom * (k - i) as f64 / (i + 1) as f64;
    }
    total
}

/// Coefficient `(ν/2) ln((ν+1)/(ν−1))` multiplying `K` in the quantum packet
/// exponent. Tends to 1 as `ν → ∞`, where the quantum exponent takes the
/// classical Gaussian form.
pub fn exponent_coefficient(nu: f64) -> f64 {
    // ln((ν+1)/(ν−1)) = 2 atanh(1/ν), accurate for large ν
    nu * (1.0 / nu).atanh()
}

/// Geometric ratio `r = (ν−1)/(ν+1)` of the quantum spectrum.
pub fn spectral_ratio(nu: f64) -> Result<f64> {
    if !(nu >= 1.0 - NU_SLACK) {
        return Err(Error::BelowMinimumUncertainty { nu });
    }
    Ok(((nu - 1.0) / (nu + 1.0)).max(0.0))
}

/// Von Neumann entropy `−ln(1−r) − r ln r /(1−r)` of the quantum packet.
pub fn quantum_entropy(params: &PacketParams) -> Result<f64> {
    let r = spectral_ratio(params.nu())?;
    if r == 0.0 {
        return Ok(0.0);
    }
    Ok(-(-r).ln_1p() - r / (1.0 - r) * r.ln())
}

/// Eigen-decomposition of the quantum ME packet.
///
/// The packet operator is a function of the displaced-oscillator form
/// `K = (q−Q)²/2ΔQ² + (p−P)²/2ΔP²` whose eigenvalues are `(2/ν)(n+½)`.
/// Exponentiating gives geometric weights `wₙ = (1−r) rⁿ` on displaced,
/// boosted Hermite functions of width `ℓ = √(ħΔQ/ΔP)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantumSpectral {
    pub params: PacketParams,
    pub ratio: f64,
    pub weights: Vec<f64>,
    pub length_scale: f64,
}

impl QuantumSpectral {
    /// Truncates at the smallest `n_max` with `Σ_{n ≤ n_max} wₙ ≥ 1 − tol`.
    pub fn new(params: &PacketParams, tol: f64) -> Result<Self> {
        params.validate()?;
        if !(tol > 0.0 && tol < 1.0) {
            return Err(Error::InvalidParameter { name: "tol", reason: format!("must lie in (0, 1), got {tol}") });
        }
        let ratio = spectral_ratio(params.nu())?;
        let terms = if ratio == 0.0 {
            1
        } else {
            let estimate = (tol.ln() / ratio.ln()).ceil();
            if !(estimate <= MAX_SPECTRUM_TERMS as f64) {
                return Err(Error::TruncationCap {
                    needed: if estimate.is_finite() { estimate as usize } else { usize::MAX },
                    cap: MAX_SPECTRUM_TERMS,
                });
            }
            estimate.max(1.0) as usize
        };
        let mut weights = Vec::with_capacity(terms + 1);
        let mut w = 1.0 - ratio;
        // the discarded tail weighs exactly r^{len}
        while weights.len() < terms || ratio.powi(weights.len() as i32) > tol {
            if weights.len() >= MAX_SPECTRUM_TERMS {
                return Err(Error::TruncationCap { needed: weights.len() + 1, cap: MAX_SPECTRUM_TERMS });
            }
            weights.push(w);
            w *= ratio;
        }
        let length_scale = (params.hbar * params.dq / params.dp).sqrt();
        Ok(Self { params: *params, ratio, weights, length_scale })
    }

    pub fn n_max(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn trace(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn purity(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum()
    }

    /// `−Σ wₙ ln wₙ` over the retained terms.
    pub fn truncated_entropy(&self) -> f64 {
        self.weights.iter().filter(|&&w| w > 0.0).map(|w| -w * w.ln()).sum()
    }

    /// Eigenvalue of `K` for eigenfunction `n`.
    pub fn k_eigenvalue(&self, n: usize) -> f64 {
        2.0 / self.params.nu() * (n as f64 + 0.5)
    }

    /// Eigenfunction `n` at `q`.
    pub fn eigenfunction(&self, n: usize, q: f64) -> Complex64 {
        let ell = self.length_scale;
        let x = (q - self.params.mean_q) / ell;
        let amp = hermite::hermite_function(n, x) / ell.sqrt();
        Complex64::from_polar(1.0, self.params.mean_p * q / self.params.hbar) * amp
    }

    /// Mixture position density `Σ wₙ |ψₙ(q)|²`.
    pub fn position_density(&self, q: f64, scratch: &mut Vec<f64>) -> f64 {
        scratch.resize(self.weights.len(), 0.0);
        let ell = self.length_scale;
        hermite::hermite_functions((q - self.params.mean_q) / ell, scratch);
        self.weights.iter().zip(scratch.iter()).map(|(w, f)| w * f * f).sum::<f64>() / ell
    }

    /// Half-width in units of `ℓ` beyond which every retained eigenfunction
    /// is negligible.
    pub fn envelope_half_width(&self) -> f64 {
        (2.0 * self.n_max() as f64 + 1.0).sqrt() + 7.0
    }
}
