//! Maximum-entropy distribution on a phase-space grid with prescribed first
//! and second moments of `q` and `p`.
//!
//! The discrete problem is solved through its Lagrange dual: minimize the
//! convex function `ln Z(λ) + λ·m` over four multipliers, where
//! `Z(λ) = Σ exp(−λ₁q − λ₂q² − λ₃p − λ₄p²)` runs over grid cells. Newton
//! steps are taken in standardized features `(q−Q)/ΔQ` etc. and converted
//! back at the end.

use nalgebra::{Matrix4, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{require_finite, require_positive, Error, Result};
use crate::packets::PacketParams;

/// Uniform rectangular grid; values live at cell midpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub q_min: f64,
    pub q_max: f64,
    pub nq: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub np: usize,
}

impl PhaseGrid {
    pub fn new(q_min: f64, q_max: f64, nq: usize, p_min: f64, p_max: f64, np: usize) -> Result<Self> {
        if !(q_max > q_min && p_max > p_min) || nq < 2 || np < 2 {
            return Err(Error::InvalidParameter {
                name: "grid",
                reason: "need q_max > q_min, p_max > p_min and at least 2 cells per axis".into(),
            });
        }
        Ok(Self { q_min, q_max, nq, p_min, p_max, np })
    }

    pub fn cell_q(&self) -> f64 {
        (self.q_max - self.q_min) / self.nq as f64
    }

    pub fn cell_p(&self) -> f64 {
        (self.p_max - self.p_min) / self.np as f64
    }

    pub fn q(&self, i: usize) -> f64 {
        self.q_min + (i as f64 + 0.5) * self.cell_q()
    }

    pub fn p(&self, j: usize) -> f64 {
        self.p_min + (j as f64 + 0.5) * self.cell_p()
    }

    pub fn len(&self) -> usize {
        self.nq * self.np
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Targets `⟨q⟩, ⟨q²⟩, ⟨p⟩, ⟨p²⟩` on a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentConstraints {
    pub mean_q: f64,
    pub second_q: f64,
    pub mean_p: f64,
    pub second_p: f64,
    pub grid: PhaseGrid,
    pub v: f64,
}

/// Half-width of the default grid in standard deviations.
pub const GRID_SIGMAS: f64 = 8.0;

impl MomentConstraints {
    /// Constraints of a packet on an `nq × np` grid spanning `±8σ`.
    pub fn from_params(params: &PacketParams, nq: usize, np: usize) -> Result<Self> {
        params.validate()?;
        let grid = PhaseGrid::new(
            params.mean_q - GRID_SIGMAS * params.dq,
            params.mean_q + GRID_SIGMAS * params.dq,
            nq,
            params.mean_p - GRID_SIGMAS * params.dp,
            params.mean_p + GRID_SIGMAS * params.dp,
            np,
        )?;
        Ok(Self {
            mean_q: params.mean_q,
            second_q: params.dq * params.dq + params.mean_q * params.mean_q,
            mean_p: params.mean_p,
            second_p: params.dp * params.dp + params.mean_p * params.mean_p,
            grid,
            v: params.v,
        })
    }

    pub fn var_q(&self) -> f64 {
        self.second_q - self.mean_q * self.mean_q
    }

    pub fn var_p(&self) -> f64 {
        self.second_p - self.mean_p * self.mean_p
    }

    pub fn validate(&self) -> Result<()> {
        for (name, x) in [("Q", self.mean_q), ("<q^2>", self.second_q), ("P", self.mean_p), ("<p^2>", self.second_p)] {
            require_finite(name, x)?;
        }
        require_positive("v", self.v)?;
        if !(self.var_q() > 0.0) {
            return Err(Error::Infeasible(format!("<q^2> - <q>^2 = {} is not positive", self.var_q())));
        }
        if !(self.var_p() > 0.0) {
            return Err(Error::Infeasible(format!("<p^2> - <p>^2 = {} is not positive", self.var_p())));
        }
        let (sq, sp) = (self.var_q().sqrt(), self.var_p().sqrt());
        let g = &self.grid;
        let covers = |lo: f64, hi: f64, m: f64, s: f64| {
            let slack = 1e-9 * s;
            lo <= m - GRID_SIGMAS * s + slack && hi >= m + GRID_SIGMAS * s - slack
        };
        if !covers(g.q_min, g.q_max, self.mean_q, sq) || !covers(g.p_min, g.p_max, self.mean_p, sp) {
            return Err(Error::InvalidParameter {
                name: "grid",
                reason: format!("grid must cover {GRID_SIGMAS} standard deviations each way"),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxEntSolution {
    pub constraints: MomentConstraints,
    /// `λ₁ … λ₄` of `exp(−λ₁q − λ₂q² − λ₃p − λ₄p²)`.
    pub multipliers: [f64; 4],
    /// Cell probabilities, `q`-major (`i·np + j`), summing to one.
    pub probabilities: Vec<f64>,
    /// Achieved minus target for `⟨q⟩, ⟨q²⟩, ⟨p⟩, ⟨p²⟩`.
    pub residuals: [f64; 4],
    pub iterations: usize,
    /// Newton decrement `√(gᵀH⁻¹g)` at each iterate.
    pub decrements: Vec<f64>,
    /// Step length accepted at each iteration.
    pub step_lengths: Vec<f64>,
}

/// Standardized features of cell `(i, j)`.
struct Features {
    fq: Vec<f64>,
    fp: Vec<f64>,
    nq: usize,
    np: usize,
}

impl Features {
    fn new(c: &MomentConstraints) -> Self {
        let (sq, sp) = (c.var_q().sqrt(), c.var_p().sqrt());
        let fq = (0..c.grid.nq).map(|i| (c.grid.q(i) - c.mean_q) / sq).collect();
        let fp = (0..c.grid.np).map(|j| (c.grid.p(j) - c.mean_p) / sp).collect();
        Self { fq, fp, nq: c.grid.nq, np: c.grid.np }
    }

    fn exponent(&self, lam: &Vector4<f64>, i: usize, j: usize) -> f64 {
        let (x, y) = (self.fq[i], self.fp[j]);
        -(lam[0] * x + lam[1] * x * x + lam[2] * y + lam[3] * y * y)
    }

    fn vector(&self, i: usize, j: usize) -> Vector4<f64> {
        let (x, y) = (self.fq[i], self.fp[j]);
        Vector4::new(x, x * x, y, y * y)
    }

    /// `(ln Z, E[f], Cov[f])` by log-sum-exp.
    fn moments(&self, lam: &Vector4<f64>) -> (f64, Vector4<f64>, Matrix4<f64>) {
        let mut shift = f64::NEG_INFINITY;
        for i in 0..self.nq {
            for j in 0..self.np {
                shift = shift.max(self.exponent(lam, i, j));
            }
        }
        let mut z = 0.0;
        let mut first = Vector4::zeros();
        let mut second = Matrix4::zeros();
        for i in 0..self.nq {
            for j in 0..self.np {
                let w = (self.exponent(lam, i, j) - shift).exp();
                let f = self.vector(i, j);
                z += w;
                first += w * f;
                second += w * f * f.transpose();
            }
        }
        let mean = first / z;
        let cov = second / z - mean * mean.transpose();
        (z.ln() + shift, mean, cov)
    }

    fn log_partition(&self, lam: &Vector4<f64>) -> f64 {
        self.moments(lam).0
    }

    fn distribution(&self, lam: &Vector4<f64>) -> Vec<f64> {
        let ln_z = self.log_partition(lam);
        let mut out = Vec::with_capacity(self.nq * self.np);
        for i in 0..self.nq {
            for j in 0..self.np {
                out.push((self.exponent(lam, i, j) - ln_z).exp());
            }
        }
        out
    }
}

/// Converts standardized-feature moments to residuals in original units.
fn residuals_from(c: &MomentConstraints, mean_f: &Vector4<f64>) -> [f64; 4] {
    let (sq, sp) = (c.var_q().sqrt(), c.var_p().sqrt());
    let eq = c.mean_q + sq * mean_f[0];
    let eq2 = c.mean_q * c.mean_q + 2.0 * c.mean_q * sq * mean_f[0] + sq * sq * mean_f[1];
    let ep = c.mean_p + sp * mean_f[2];
    let ep2 = c.mean_p * c.mean_p + 2.0 * c.mean_p * sp * mean_f[2] + sp * sp * mean_f[3];
    [eq - c.mean_q, eq2 - c.second_q, ep - c.mean_p, ep2 - c.second_p]
}

/// Multipliers of raw `(q, q², p, p²)` from standardized ones.
fn unstandardize(c: &MomentConstraints, lam: &Vector4<f64>) -> [f64; 4] {
    let (sq, sp) = (c.var_q().sqrt(), c.var_p().sqrt());
    [
        lam[0] / sq - 2.0 * lam[1] * c.mean_q / (sq * sq),
        lam[1] / (sq * sq),
        lam[2] / sp - 2.0 * lam[3] * c.mean_p / (sp * sp),
        lam[3] / (sp * sp),
    ]
}

/// Damped Newton on the dual, started from the closed-form multipliers
/// perturbed by 50%.
///
/// Stops once every residual is below `tol` (scaled by the matching target
/// variance for second moments); hitting `max_iter` is an error.
pub fn solve_dual(constraints: &MomentConstraints, tol: f64, max_iter: usize) -> Result<MaxEntSolution> {
    constraints.validate()?;
    require_positive("tol", tol)?;
    let feats = Features::new(constraints);
    // standardized targets are (0, 1, 0, 1); the Gaussian answer is (0, ½, 0, ½)
    let target = Vector4::new(0.0, 1.0, 0.0, 1.0);
    let mut lam = Vector4::new(0.25, 0.75, -0.25, 0.75);
    let dual = |l: &Vector4<f64>| feats.log_partition(l) + l.dot(&target);
    let scale = [constraints.var_q().sqrt(), constraints.var_q(), constraints.var_p().sqrt(), constraints.var_p()];
    let converged = |r: &[f64; 4]| r.iter().zip(&scale).all(|(x, s)| x.abs() <= tol * s);

    let mut decrements = Vec::new();
    let mut step_lengths = Vec::new();
    let mut iterations = 0;
    loop {
        let (ln_z, mean, cov) = feats.moments(&lam);
        let residuals = residuals_from(constraints, &mean);
        let grad = target - mean;
        let chol =
            cov.cholesky().ok_or_else(|| Error::Infeasible("moment covariance is singular on this grid".into()))?;
        let step = -chol.solve(&grad);
        decrements.push((-grad.dot(&step)).max(0.0).sqrt());
        if converged(&residuals) {
            let multipliers = unstandardize(constraints, &lam);
            return Ok(MaxEntSolution {
                constraints: *constraints,
                multipliers,
                probabilities: feats.distribution(&lam),
                residuals,
                iterations,
                decrements,
                step_lengths,
            });
        }
        if iterations >= max_iter {
            let worst = residuals.iter().zip(&scale).map(|(x, s)| x.abs() / s).fold(0.0, f64::max);
            return Err(Error::NoConvergence { iterations, residual: worst });
        }
        let g0 = ln_z + lam.dot(&target);
        let slope = grad.dot(&step);
        // inside the quadratic region the dual decrease drops below the
        // rounding of ln Z, so full steps are taken without a line search
        let mut t = 1.0;
        if decrements.last().is_some_and(|&d| d > 1e-6) {
            while t > 1e-12 && !(dual(&(lam + t * step)) <= g0 + 0.25 * t * slope) {
                t *= 0.5;
            }
        }
        lam += t * step;
        step_lengths.push(t);
        iterations += 1;
    }
}

impl MaxEntSolution {
    /// True when the Newton decrement never grows after the first step that
    /// needed damping (or after the first step if none did), ignoring values
    /// already at rounding level.
    pub fn decrements_monotone(&self) -> bool {
        let start = self.step_lengths.iter().position(|&t| t < 1.0).map_or(1, |k| k + 1);
        let d = &self.decrements[start.min(self.decrements.len())..];
        d.windows(2).all(|w| w[1] <= w[0] || w[1] < 1e-12)
    }

    /// `−Σ pᵢ ln(pᵢ v / (dq dp))`, the grid estimate of `−∫ρ ln ρ dq dp/v`.
    pub fn entropy(&self) -> f64 {
        let g = &self.constraints.grid;
        discrete_entropy(&self.probabilities) + (g.cell_q() * g.cell_p() / self.constraints.v).ln()
    }

    /// Means and variances of the recovered distribution.
    pub fn recovered(&self) -> (f64, f64, f64, f64) {
        let g = &self.constraints.grid;
        let (mut mq, mut mq2, mut mp, mut mp2) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..g.nq {
            let q = g.q(i);
            for j in 0..g.np {
                let p = g.p(j);
                let w = self.probabilities[i * g.np + j];
                mq += w * q;
                mq2 += w * q * q;
                mp += w * p;
                mp2 += w * p * p;
            }
        }
        (mq, mq2 - mq * mq, mp, mp2 - mp * mp)
    }
}

/// `−Σ pᵢ ln pᵢ` over positive entries.
pub fn discrete_entropy(probabilities: &[f64]) -> f64 {
    -probabilities.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

/// Closed-form packet density times cell area over `v`, per grid cell.
pub fn analytic_cell_masses(grid: &PhaseGrid, params: &PacketParams) -> Vec<f64> {
    let area = grid.cell_q() * grid.cell_p() / params.v;
    let mut out = Vec::with_capacity(grid.len());
    for i in 0..grid.nq {
        for j in 0..grid.np {
            out.push(params.classical_density(grid.q(i), grid.p(j)) * area);
        }
    }
    out
}

/// `Σ |ρ_numeric − ρ_analytic| dq dp / v` over the solution grid.
pub fn l1_distance_to_analytic(solution: &MaxEntSolution, params: &PacketParams) -> f64 {
    l1_distance(&solution.probabilities, &analytic_cell_masses(&solution.constraints.grid, params))
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Outcome of comparing the solution against feasible perturbations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WitnessReport {
    pub trials: usize,
    /// Trials whose entropy came out strictly lower.
    pub lower: usize,
    /// Smallest entropy deficit seen.
    pub min_gap: f64,
    /// Largest constraint violation introduced by any perturbation.
    pub max_violation: f64,
}

impl WitnessReport {
    pub fn passed(&self) -> bool {
        self.lower == self.trials
    }
}

/// Perturbs the solution `trials` times along random directions that keep
/// all four moments and the normalization, stay nonnegative, and checks
/// that each perturbed distribution has lower entropy.
pub fn maximality_witness(solution: &MaxEntSolution, trials: usize, seed: u64) -> WitnessReport {
    let c = &solution.constraints;
    let feats = Features::new(c);
    let rho = &solution.probabilities;
    let n = rho.len();
    // basis {1, f₁, …, f₄} orthonormalized in the ρ-weighted inner product
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(5);
    for k in 0..5 {
        let mut b: Vec<f64> = (0..n)
            .map(|idx| {
                let (i, j) = (idx / feats.np, idx % feats.np);
                if k == 0 {
                    1.0
                } else {
                    feats.vector(i, j)[k - 1]
                }
            })
            .collect();
        for prev in &basis {
            let dot = weighted_dot(rho, &b, prev);
            b.iter_mut().zip(prev).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = weighted_dot(rho, &b, &b).sqrt();
        b.iter_mut().for_each(|x| *x /= norm);
        basis.push(b);
    }

    let base = discrete_entropy(rho);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = WitnessReport { trials, lower: 0, min_gap: f64::INFINITY, max_violation: 0.0 };
    for _ in 0..trials {
        // smooth random direction: a few random plane waves in the
        // standardized coordinates plus cell-level noise
        let waves: Vec<[f64; 4]> = (0..8)
            .map(|_| {
                let mut w = [0.0; 4];
                w.iter_mut().for_each(|x| *x = StandardNormal.sample(&mut rng));
                w
            })
            .collect();
        let mut z: Vec<f64> = (0..n)
            .map(|idx| {
                let (x, y) = (feats.fq[idx / feats.np], feats.fp[idx % feats.np]);
                let smooth: f64 = waves.iter().map(|[a, kq, kp, ph]| a * (kq * x + kp * y + 3.0 * ph).cos()).sum();
                let noise: f64 = StandardNormal.sample(&mut rng);
                smooth + 0.3 * noise
            })
            .collect();
        for b in &basis {
            let dot = weighted_dot(rho, &z, b);
            z.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let worst = z.iter().fold(0.0f64, |m, x| m.max(-x));
        let eps = 0.5 / worst.max(1.0);
        let perturbed: Vec<f64> = rho.iter().zip(&z).map(|(r, x)| r * (1.0 + eps * x)).collect();
        let violation = (0..5).map(|k| weighted_dot(rho, &z, &basis[k]).abs() * eps).fold(0.0f64, f64::max);
        report.max_violation = report.max_violation.max(violation);
        let gap = base - discrete_entropy(&perturbed);
        if gap > 0.0 {
            report.lower += 1;
        }
        report.min_gap = report.min_gap.min(gap);
    }
    report
}

fn weighted_dot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn standard(n: usize) -> (PacketParams, MaxEntSolution) {
        let pk = PacketParams::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let c = MomentConstraints::from_params(&pk, n, n).unwrap();
        (pk, solve_dual(&c, 1e-12, 100).unwrap())
    }

    #[test]
    fn standard_multipliers() {
        let (_, sol) = standard(128);
        let [l1, l2, l3, l4] = sol.multipliers;
        assert!(l1.abs() < 1e-6 && l3.abs() < 1e-6);
        assert!((l2 - 0.5).abs() < 1e-6 && (l4 - 0.5).abs() < 1e-6);
        assert!(sol.iterations > 1);
        assert!(sol.decrements_monotone(), "{:?}", sol.decrements);
    }

    #[test]
    fn shifted_and_stretched_targets() {
        let pk = PacketParams::new(2.0, -1.0, 0.5, 3.0).unwrap();
        let c = MomentConstraints::from_params(&pk, 96, 96).unwrap();
        let sol = solve_dual(&c, 1e-12, 100).unwrap();
        let [l1, l2, l3, l4] = sol.multipliers;
        // exponent −(q−Q)²/2ΔQ² expands to −q²/2ΔQ² + qQ/ΔQ² − …
        assert!((l2 - 2.0).abs() < 1e-6);
        assert!((l1 + 2.0 / 0.25).abs() < 1e-6);
        assert!((l4 - 1.0 / 18.0).abs() < 1e-8);
        assert!((l3 - 1.0 / 9.0).abs() < 1e-8);
    }

    #[test]
    fn translation_equivariance() {
        let base = PacketParams::new(0.3, 0.1, 1.2, 0.8).unwrap();
        for c in [-5.0, 0.75, 13.0] {
            let pk = PacketParams::new(0.3 + c, 0.1, 1.2, 0.8).unwrap();
            let a = solve_dual(&MomentConstraints::from_params(&base, 64, 64).unwrap(), 1e-12, 100).unwrap();
            let b = solve_dual(&MomentConstraints::from_params(&pk, 64, 64).unwrap(), 1e-12, 100).unwrap();
            assert!((b.recovered().0 - a.recovered().0 - c).abs() < 1e-10);
        }
    }

    #[test]
    fn infeasible_targets() {
        let pk = PacketParams::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let mut c = MomentConstraints::from_params(&pk, 32, 32).unwrap();
        c.second_q = 0.0;
        assert!(matches!(solve_dual(&c, 1e-10, 50), Err(Error::Infeasible(_))));
        let mut c = MomentConstraints::from_params(&pk, 32, 32).unwrap();
        c.second_p = -1.0;
        assert!(matches!(solve_dual(&c, 1e-10, 50), Err(Error::Infeasible(_))));
        let mut c = MomentConstraints::from_params(&pk, 32, 32).unwrap();
        c.grid.q_max = 4.0;
        assert!(solve_dual(&c, 1e-10, 50).is_err());
    }

    #[test]
    fn iteration_cap_is_an_error() {
        let pk = PacketParams::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let c = MomentConstraints::from_params(&pk, 32, 32).unwrap();
        assert!(matches!(solve_dual(&c, 1e-14, 1), Err(Error::NoConvergence { .. })));
    }

    #[test]
    fn analytic_against_itself() {
        let (pk, sol) = standard(32);
        let m = analytic_cell_masses(&sol.constraints.grid, &pk);
        assert_eq!(l1_distance(&m, &m), 0.0);
    }

    #[test]
    fn entropy_matches_closed_form() {
        let (pk, sol) = standard(128);
        assert!((sol.entropy() - pk.classical_entropy()).abs() < 1e-9);
    }

    #[test]
    fn coarse_grids_refine_monotonically() {
        // the midpoint rule is spectrally accurate for a Gaussian, so the
        // discretization error is only visible on very coarse grids
        let pk = PacketParams::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let dists: Vec<f64> = [10, 12, 14, 16]
            .iter()
            .map(|&n| {
                let sol = solve_dual(&MomentConstraints::from_params(&pk, n, n).unwrap(), 1e-12, 100).unwrap();
                l1_distance_to_analytic(&sol, &pk)
            })
            .collect();
        assert!(dists.windows(2).all(|w| w[1] < w[0]), "{dists:?}");
        assert!(dists[0] > 1e-4);
    }

    #[test]
    fn witness_passes() {
        let (_, sol) = standard(48);
        let rep = maximality_witness(&sol, 20, 5);
        assert!(rep.passed(), "{rep:?}");
        assert!(rep.max_violation < 1e-12);
    }

    #[test]
    fn witness_rejects_non_maximal_distribution() {
        let (_, mut sol) = standard(48);
        // tilt the solution along a moment-preserving direction: cos(q) is
        // even, so it keeps ⟨q⟩ and ⟨p⟩; subtract its projection on 1 and q²
        let g = sol.constraints.grid;
        let mut z: Vec<f64> = (0..g.len()).map(|k| (3.0 * g.q(k / g.np)).cos()).collect();
        let rho = sol.probabilities.clone();
        let f2: Vec<f64> = (0..g.len()).map(|k| g.q(k / g.np).powi(2)).collect();
        let one = vec![1.0; g.len()];
        let a = [
            [weighted_dot(&rho, &one, &one), weighted_dot(&rho, &one, &f2)],
            [weighted_dot(&rho, &f2, &one), weighted_dot(&rho, &f2, &f2)],
        ];
        let b = [weighted_dot(&rho, &z, &one), weighted_dot(&rho, &z, &f2)];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let c0 = (b[0] * a[1][1] - b[1] * a[0][1]) / det;
        let c1 = (a[0][0] * b[1] - a[1][0] * b[0]) / det;
        z.iter_mut().zip(&f2).for_each(|(x, q2)| *x -= c0 + c1 * q2);
        sol.probabilities = rho.iter().zip(&z).map(|(r, x)| r * (1.0 + 0.3 * x)).collect();
        let rep = maximality_witness(&sol, 40, 1);
        assert!(!rep.passed(), "{rep:?}");
    }
}
