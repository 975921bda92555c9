//! Quantum packet on a position grid.
//!
//! The mixed state is kept as its spectral decomposition: one wavefunction
//! per retained eigenvector, each carrying a fixed geometric weight. Unitary
//! evolution leaves the weights alone, so every branch is propagated on its
//! own with a Strang split-operator step
//!
//! ```text
//! e^{-iV dt/2ħ} · F⁻¹ e^{-ip² dt/2μħ} F · e^{-iV dt/2ħ}
//! ```
//!
//! and observables are weight-averaged. The FFT makes the grid periodic;
//! probability reaching the outer bands of either the position or the
//! momentum grid is monitored and aborts the run instead of wrapping around.

use std::f64::consts::PI;
use std::io::{self, Read, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::classical::{leapfrog, Splitting};
use crate::error::{require_positive, Error, Result};
use crate::hermite;
use crate::packets::{PacketParams, PhasePoint, QuantumSpectral};
use crate::potentials::PolynomialPotential;
use crate::trajectory::{validate_times, PacketState, SolverMeta, Trajectory, TrajectoryKind};

pub const MIN_GRID_POINTS: usize = 256;
pub const MAX_GRID_POINTS: usize = 1 << 22;
/// Packet half-width, in standard deviations, the grid must hold.
pub const COVERAGE_SIGMAS: f64 = 8.0;
/// Branch normalization tolerance at construction.
pub const BRANCH_NORM_TOL: f64 = 1e-8;

/// Largest branch storage `build_state` will allocate.
pub const MAX_STATE_BYTES: usize = 1 << 31;

/// Uniform periodic grid `q_i = q_min + i·dq`, `i < n_points`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub q_min: f64,
    pub q_max: f64,
    pub n_points: usize,
    pub dq: f64,
}

impl GridSpec {
    pub fn new(q_min: f64, q_max: f64, n_points: usize) -> Result<Self> {
        if !(q_min.is_finite() && q_max.is_finite() && q_max > q_min) {
            return Err(Error::InvalidParameter {
                name: "grid",
                reason: format!("bounds must be finite with q_max > q_min, got [{q_min}, {q_max}]"),
            });
        }
        if !n_points.is_power_of_two() || n_points < MIN_GRID_POINTS {
            return Err(Error::InvalidParameter {
                name: "grid_points",
                reason: format!("must be a power of two >= {MIN_GRID_POINTS}, got {n_points}"),
            });
        }
        Ok(Self { q_min, q_max, n_points, dq: (q_max - q_min) / n_points as f64 })
    }

    pub fn position(&self, i: usize) -> f64 {
        self.q_min + i as f64 * self.dq
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.position(i)).collect()
    }

    /// Momentum of each FFT bin, in FFT order.
    pub fn momenta(&self, hbar: f64) -> Vec<f64> {
        let n = self.n_points as i64;
        let dk = 2.0 * PI * hbar / (n as f64 * self.dq);
        (0..n).map(|j| if j < n / 2 { j } else { j - n } as f64 * dk).collect()
    }

    /// Largest representable momentum `πħ/dq`.
    pub fn p_max(&self, hbar: f64) -> f64 {
        PI * hbar / self.dq
    }

    /// Grid spans `Q ± 8ΔQ` and resolves momenta up to `|P| + 8ΔP`.
    pub fn check_coverage(&self, params: &PacketParams) -> Result<()> {
        let lo = params.mean_q - COVERAGE_SIGMAS * params.dq;
        let hi = params.mean_q + COVERAGE_SIGMAS * params.dq;
        if lo < self.q_min || hi > self.q_max {
            return Err(Error::Coverage(format!(
                "grid [{}, {}] does not span Q ± {COVERAGE_SIGMAS}ΔQ = [{lo}, {hi}]",
                self.q_min, self.q_max
            )));
        }
        let p_need = params.mean_p.abs() + COVERAGE_SIGMAS * params.dp;
        if p_need > self.p_max(params.hbar) {
            return Err(Error::Coverage(format!(
                "dq = {} resolves |p| <= {}, packet needs {p_need}",
                self.dq,
                self.p_max(params.hbar)
            )));
        }
        Ok(())
    }

    /// Grid that holds every retained eigenfunction at `t = 0` and the
    /// bulk of the packet for the whole run `[0, t_max]`.
    ///
    /// The `8σ` phase-space ellipse of the packet is pushed through the
    /// classical flow; its position and momentum extents, together with the
    /// initial eigenfunction envelope and a margin that keeps the monitored
    /// edge bands empty, fix the bounds and spacing.
    pub fn for_evolution(params: &PacketParams, potential: &PolynomialPotential, t_max: f64, tol: f64) -> Result<Self> {
        let spectral = QuantumSpectral::new(params, tol)?;
        let envelope = spectral.envelope_half_width();
        let ell = spectral.length_scale;
        let rq = COVERAGE_SIGMAS * params.dq;
        let rp = COVERAGE_SIGMAS * params.dp;
        let (mut q_lo, mut q_hi, mut p_abs) = flow_extents(params, potential, rq, rp, t_max)?;
        q_lo = q_lo.min(params.mean_q - ell * envelope);
        q_hi = q_hi.max(params.mean_q + ell * envelope);
        p_abs = p_abs.max(params.mean_p.abs() + params.hbar / ell * envelope);
        Self::fitting(q_lo, q_hi, p_abs, params.hbar)
    }

    /// Smallest power-of-two grid holding `[q_lo, q_hi]` and `|p| <= p_abs`
    /// inside its unmonitored interior.
    pub fn fitting(q_lo: f64, q_hi: f64, p_abs: f64, hbar: f64) -> Result<Self> {
        let span = q_hi - q_lo;
        let margin = 0.1 * span;
        let (lo, hi) = (q_lo - margin, q_hi + margin);
        let needed = ((hi - lo) * 1.25 * p_abs / (PI * hbar)).ceil();
        if !(needed <= MAX_GRID_POINTS as f64) {
            return Err(Error::Coverage(format!("grid would need {needed} points (cap {MAX_GRID_POINTS})")));
        }
        let n = (needed as usize).next_power_of_two().max(MIN_GRID_POINTS);
        Self::new(lo, hi, n)
    }
}

fn flow_extents(
    params: &PacketParams,
    potential: &PolynomialPotential,
    rq: f64,
    rp: f64,
    t_max: f64,
) -> Result<(f64, f64, f64)> {
    const RIM: usize = 96;
    let mut pts: Vec<PhasePoint> = (0..RIM)
        .map(|k| {
            let th = 2.0 * PI * k as f64 / RIM as f64;
            PhasePoint { q: params.mean_q + rq * th.cos(), p: params.mean_p + rp * th.sin() }
        })
        .chain(std::iter::once(PhasePoint { q: params.mean_q, p: params.mean_p }))
        .collect();
    let mut q_lo = params.mean_q - rq;
    let mut q_hi = params.mean_q + rq;
    let mut p_abs = params.mean_p.abs() + rp;
    if t_max > 0.0 {
        let checkpoints = 400;
        let h_target = (potential.characteristic_time(params) / 200.0).min(t_max / checkpoints as f64);
        let steps = ((t_max / checkpoints as f64) / h_target).ceil().max(1.0) as usize;
        let h = t_max / (checkpoints * steps) as f64;
        for _ in 0..checkpoints {
            for pt in pts.iter_mut() {
                *pt = leapfrog(potential, *pt, h, steps, Splitting::PositionVerlet);
                if !(pt.q.is_finite() && pt.p.is_finite()) {
                    return Err(Error::Coverage("packet envelope escapes to infinity".into()));
                }
                q_lo = q_lo.min(pt.q);
                q_hi = q_hi.max(pt.q);
                p_abs = p_abs.max(pt.p.abs());
            }
        }
    }
    Ok((q_lo, q_hi, p_abs))
}

/// Weighted pure branches sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedStateGrid {
    pub grid: GridSpec,
    pub weights: Vec<f64>,
    pub branches: Vec<Vec<Complex64>>,
    pub hbar: f64,
}

/// Per-branch moments and edge populations.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BranchStats {
    pub norm: f64,
    pub mean_q: f64,
    pub var_q: f64,
    pub mean_p: f64,
    pub var_p: f64,
    /// Fraction of the branch in the outer position bands.
    pub edge_q: f64,
    /// Fraction of the branch in the outer momentum bands.
    pub edge_p: f64,
}

/// Fraction of the grid, at each end, that the leakage monitor watches.
pub const EDGE_FRACTION: f64 = 1.0 / 32.0;

/// Builds the grid representation of the quantum packet.
///
/// Branch `n` is the `n`-th Hermite function of width `ℓ = √(ħΔQ/ΔP)`
/// centred on `Q` and boosted by `e^{iPq/ħ}`.
pub fn build_state(params: &PacketParams, grid: &GridSpec, tol: f64) -> Result<MixedStateGrid> {
    let spectral = QuantumSpectral::new(params, tol)?;
    grid.check_coverage(params)?;
    let n_branches = spectral.weights.len();
    let bytes = n_branches.saturating_mul(grid.n_points).saturating_mul(std::mem::size_of::<Complex64>());
    if bytes > MAX_STATE_BYTES {
        return Err(Error::Coverage(format!(
            "{n_branches} branches on {} points need {:.1} GiB, above the {} GiB limit",
            grid.n_points,
            bytes as f64 / (1u64 << 30) as f64,
            MAX_STATE_BYTES >> 30
        )));
    }
    let ell = spectral.length_scale;
    let amp = 1.0 / ell.sqrt();
    let mut branches = vec![vec![Complex64::default(); grid.n_points]; n_branches];
    let mut buf = vec![0.0; n_branches];
    for i in 0..grid.n_points {
        let q = grid.position(i);
        hermite::hermite_functions((q - params.mean_q) / ell, &mut buf);
        let phase = Complex64::from_polar(amp, params.mean_p * q / params.hbar);
        for (b, f) in branches.iter_mut().zip(&buf) {
            b[i] = phase * f;
        }
    }
    let state = MixedStateGrid { grid: *grid, weights: spectral.weights, branches, hbar: params.hbar };
    for (n, b) in state.branches.iter().enumerate() {
        let norm = b.iter().map(|z| z.norm_sqr()).sum::<f64>() * grid.dq;
        if (norm - 1.0).abs() > BRANCH_NORM_TOL {
            return Err(Error::Coverage(format!("eigenfunction {n} has grid norm {norm}; widen the grid")));
        }
    }
    Ok(state)
}

impl MixedStateGrid {
    /// `Σ wₙ ‖ψₙ‖²`.
    pub fn trace(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.branches)
            .map(|(w, b)| w * b.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.dq)
            .sum()
    }

    fn plan(&self) -> Arc<dyn Fft<f64>> {
        FftPlanner::new().plan_fft_forward(self.grid.n_points)
    }

    pub fn branch_stats(&self) -> Vec<BranchStats> {
        let fft = self.plan();
        let q = self.grid.positions();
        let p = self.grid.momenta(self.hbar);
        let n = self.grid.n_points;
        let band = ((n as f64 * EDGE_FRACTION) as usize).max(1);
        self.branches
            .par_iter()
            .map(|psi| {
                let dens: Vec<f64> = psi.iter().map(|z| z.norm_sqr()).collect();
                let norm_sum: f64 = dens.iter().sum();
                let mean_q = dens.iter().zip(&q).map(|(d, x)| d * x).sum::<f64>() / norm_sum;
                let var_q = dens.iter().zip(&q).map(|(d, x)| d * (x - mean_q).powi(2)).sum::<f64>() / norm_sum;
                let edge_q = (dens[..band].iter().sum::<f64>() + dens[n - band..].iter().sum::<f64>()) / norm_sum;

                let mut spec = psi.clone();
                let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
                fft.process_with_scratch(&mut spec, &mut scratch);
                let pd: Vec<f64> = spec.iter().map(|z| z.norm_sqr()).collect();
                let p_sum: f64 = pd.iter().sum();
                let mean_p = pd.iter().zip(&p).map(|(d, k)| d * k).sum::<f64>() / p_sum;
                let var_p = pd.iter().zip(&p).map(|(d, k)| d * (k - mean_p).powi(2)).sum::<f64>() / p_sum;
                let edge_p = pd[n / 2 - band..n / 2 + band].iter().sum::<f64>() / p_sum;
                BranchStats { norm: norm_sum * self.grid.dq, mean_q, var_q, mean_p, var_p, edge_q, edge_p }
            })
            .collect()
    }

    /// `(Q, P, ΔQ, ΔP)` of the mixture, using the law of total variance
    /// over branches.
    pub fn observables(&self) -> PacketState {
        mixture_state(&self.weights, &self.branch_stats())
    }

    /// Weighted probability found in the monitored edge bands.
    pub fn leakage(&self) -> f64 {
        leakage_of(&self.weights, &self.branch_stats())
    }

    /// Normalized mixture position density on the grid.
    pub fn position_density(&self) -> Vec<f64> {
        let mut rho = vec![0.0; self.grid.n_points];
        for (w, b) in self.weights.iter().zip(&self.branches) {
            for (r, z) in rho.iter_mut().zip(b) {
                *r += w * z.norm_sqr();
            }
        }
        let total = rho.iter().sum::<f64>() * self.grid.dq;
        rho.iter_mut().for_each(|r| *r /= total);
        rho
    }

    /// `⟨qᵏ⟩` by grid quadrature, with the contribution of the monitored
    /// edge bands as truncation estimate.
    pub fn polynomial_moment_with_tail(&self, k: u32) -> Result<(f64, f64)> {
        if k > 12 {
            return Err(Error::InvalidParameter { name: "k", reason: format!("moment order {k} exceeds 12") });
        }
        let rho = self.position_density();
        let n = self.grid.n_points;
        let band = ((n as f64 * EDGE_FRACTION) as usize).max(1);
        let term = |i: usize| rho[i] * self.grid.position(i).powi(k as i32) * self.grid.dq;
        let value: f64 = (0..n).map(term).sum();
        let tail: f64 = (0..band).chain(n - band..n).map(term).sum();
        Ok((value, tail.abs()))
    }

    /// `⟨qᵏ⟩`; errors when the edge contribution exceeds `1e-8` of it.
    pub fn quantum_polynomial_moment(&self, k: u32) -> Result<f64> {
        let (value, tail) = self.polynomial_moment_with_tail(k)?;
        let limit = 1e-8 * value.abs().max(f64::MIN_POSITIVE);
        if tail > limit {
            return Err(Error::TailTruncation { estimate: tail, limit });
        }
        Ok(value)
    }

    /// Writes `n_points` (u64), `q_min` (f64), `dq` (f64), then `|ψ|²` of
    /// every branch as f64, all little-endian.
    pub fn write_density_dump<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(&(self.grid.n_points as u64).to_le_bytes())?;
        w.write_all(&self.grid.q_min.to_le_bytes())?;
        w.write_all(&self.grid.dq.to_le_bytes())?;
        for b in &self.branches {
            for z in b {
                w.write_all(&z.norm_sqr().to_le_bytes())?;
            }
        }
        Ok(())
    }
}

fn mixture_state(weights: &[f64], stats: &[BranchStats]) -> PacketState {
    let total: f64 = weights.iter().zip(stats).map(|(w, s)| w * s.norm).sum();
    let avg = |f: &dyn Fn(&BranchStats) -> f64| {
        weights.iter().zip(stats).map(|(w, s)| w * s.norm * f(s)).sum::<f64>() / total
    };
    let q = avg(&|s| s.mean_q);
    let p = avg(&|s| s.mean_p);
    let var_q = avg(&|s| s.var_q + (s.mean_q - q).powi(2));
    let var_p = avg(&|s| s.var_p + (s.mean_p - p).powi(2));
    PacketState { q, p, dq: var_q.sqrt(), dp: var_p.sqrt() }
}

fn leakage_of(weights: &[f64], stats: &[BranchStats]) -> f64 {
    let total: f64 = weights.iter().zip(stats).map(|(w, s)| w * s.norm).sum();
    weights.iter().zip(stats).map(|(w, s)| w * s.norm * (s.edge_q + s.edge_p)).sum::<f64>() / total
}

/// Contents of a density dump.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityDump {
    pub n_points: usize,
    pub q_min: f64,
    pub dq: f64,
    pub branches: Vec<Vec<f64>>,
}

pub fn read_density_dump<R: Read>(mut r: R) -> io::Result<DensityDump> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let bad = |msg: &str| io::Error::new(io::ErrorKind::InvalidData, msg.to_string());
    if bytes.len() < 24 {
        return Err(bad("density dump shorter than its header"));
    }
    let word = |i: usize| <[u8; 8]>::try_from(&bytes[i..i + 8]).unwrap();
    let n_points = u64::from_le_bytes(word(0)) as usize;
    let q_min = f64::from_le_bytes(word(8));
    let dq = f64::from_le_bytes(word(16));
    let body = bytes.len() - 24;
    if n_points == 0 || body % (8 * n_points) != 0 {
        return Err(bad("density dump body is not a whole number of branches"));
    }
    let values: Vec<f64> = (0..body / 8).map(|k| f64::from_le_bytes(word(24 + 8 * k))).collect();
    let branches = values.chunks(n_points).map(|c| c.to_vec()).collect();
    Ok(DensityDump { n_points, q_min, dq, branches })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantumSettings {
    pub dt: f64,
    /// Largest tolerated weighted probability in the edge bands.
    pub leakage_limit: f64,
}

impl QuantumSettings {
    pub fn with_dt(dt: f64) -> Self {
        Self { dt, leakage_limit: 1e-6 }
    }

    /// `dt = T_char / 2000`.
    pub fn default_for(params: &PacketParams, potential: &PolynomialPotential) -> Self {
        Self::with_dt(potential.characteristic_time(params) / 2000.0)
    }
}

#[derive(Debug, Clone)]
pub struct QuantumEngine {
    potential: PolynomialPotential,
    settings: QuantumSettings,
}

impl QuantumEngine {
    pub fn new(potential: PolynomialPotential, settings: QuantumSettings) -> Result<Self> {
        require_positive("dt", settings.dt)?;
        require_positive("leakage_limit", settings.leakage_limit)?;
        Ok(Self { potential, settings })
    }

    pub fn settings(&self) -> &QuantumSettings {
        &self.settings
    }

    /// Propagates `state` from `t = 0` through the requested times, leaving
    /// it at the last one.
    pub fn evolve(&self, state: &mut MixedStateGrid, times: &[f64]) -> Result<Trajectory> {
        validate_times(times)?;
        let grid = state.grid;
        let hbar = state.hbar;
        let n = grid.n_points;
        let q = grid.positions();
        let v: Vec<f64> = q.iter().map(|&x| self.potential.value(x)).collect();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter { name: "V", reason: "potential not finite on the grid".into() });
        }
        let p2: Vec<f64> = grid.momenta(hbar).iter().map(|k| k * k).collect();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let inv_n = 1.0 / n as f64;
        let mass = self.potential.mass();

        let mut states = Vec::with_capacity(times.len());
        let mut now = 0.0;
        for &t in times {
            let span = t - now;
            if span > 0.0 {
                let steps = (span / self.settings.dt - 1e-9).ceil().max(1.0) as usize;
                let h = span / steps as f64;
                let half_kick: Vec<Complex64> =
                    v.iter().map(|&x| Complex64::from_polar(1.0, -x * h / (2.0 * hbar))).collect();
                let full_kick: Vec<Complex64> = half_kick.iter().map(|z| z * z).collect();
                let drift: Vec<Complex64> =
                    p2.iter().map(|&k2| Complex64::from_polar(inv_n, -k2 * h / (2.0 * mass * hbar))).collect();
                state.branches.par_iter_mut().for_each(|psi| {
                    let mut scratch = vec![
                        Complex64::default();
                        forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len())
                    ];
                    mul_assign(psi, &half_kick);
                    for s in 0..steps {
                        forward.process_with_scratch(psi, &mut scratch);
                        mul_assign(psi, &drift);
                        inverse.process_with_scratch(psi, &mut scratch);
                        mul_assign(psi, if s + 1 == steps { &half_kick } else { &full_kick });
                    }
                });
                now = t;
            }
            let stats = state.branch_stats();
            let leak = leakage_of(&state.weights, &stats);
            if !(leak <= self.settings.leakage_limit) {
                return Err(Error::Leakage { leak, limit: self.settings.leakage_limit, time: t });
            }
            states.push(mixture_state(&state.weights, &stats));
        }
        Ok(Trajectory {
            kind: TrajectoryKind::Quantum,
            times: times.to_vec(),
            states,
            std_errors: None,
            meta: SolverMeta {
                scheme: "strang-split-fft".into(),
                dt: Some(self.settings.dt),
                grid_points: Some(n),
                ..Default::default()
            },
        })
    }
}

#[inline]
fn mul_assign(a: &mut [Complex64], b: &[Complex64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x *= y;
    }
}

/// Evolves a copy of `state` under `potential`.
pub fn evolve_quantum(
    state: &MixedStateGrid,
    potential: &PolynomialPotential,
    times: &[f64],
    dt: f64,
) -> Result<Trajectory> {
    let engine = QuantumEngine::new(potential.clone(), QuantumSettings::with_dt(dt))?;
    engine.evolve(&mut state.clone(), times)
}
