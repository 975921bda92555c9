//! Classical packet evolution: an ensemble drawn from the Gaussian packet is
//! pushed through Hamilton's equations with a fixed-step leapfrog and the
//! four moment coordinates are read off the ensemble.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{require_positive, Error, Result};
use crate::hermite;
use crate::packets::{PacketParams, PhasePoint};
use crate::potentials::PolynomialPotential;
use crate::trajectory::{validate_times, PacketState, SolverMeta, Trajectory, TrajectoryKind};

/// Minimum Monte Carlo ensemble size accepted by [`evolve_classical`].
pub const MIN_SAMPLES: usize = 1000;

/// Ordering of the two half-flows in one leapfrog step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Splitting {
    /// drift ½ – kick – drift ½
    #[default]
    PositionVerlet,
    /// kick ½ – drift – kick ½, the same ordering as the quantum Strang step
    VelocityVerlet,
}

impl Splitting {
    pub fn name(&self) -> &'static str {
        match self {
            Splitting::PositionVerlet => "position-verlet",
            Splitting::VelocityVerlet => "velocity-verlet",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalSettings {
    pub dt: f64,
    pub splitting: Splitting,
    /// Any sample with `|q|` beyond this aborts the run.
    pub escape_bound: f64,
    /// Largest tolerated relative per-sample energy change.
    pub drift_bound: f64,
}

impl ClassicalSettings {
    pub fn with_dt(dt: f64) -> Self {
        Self { dt, splitting: Splitting::default(), escape_bound: f64::INFINITY, drift_bound: 1e-3 }
    }

    /// `dt = T_char / 1000`.
    pub fn default_for(params: &PacketParams, potential: &PolynomialPotential) -> Self {
        Self::with_dt(potential.characteristic_time(params) / 1000.0)
    }
}

/// How the initial ensemble is realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ensemble {
    /// `n` i.i.d. draws, equal weights.
    MonteCarlo { n: usize, seed: u64 },
    /// Tensor Gauss–Hermite nodes of the given order per axis; only
    /// deterministic, for cross-checks that need more than `1/√n` accuracy.
    GaussHermite { order: usize },
}

/// Points with probability weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedEnsemble {
    pub points: Vec<PhasePoint>,
    /// `None` means uniform weights.
    pub weights: Option<Vec<f64>>,
}

impl WeightedEnsemble {
    pub fn realize(params: &PacketParams, ensemble: Ensemble) -> Self {
        match ensemble {
            Ensemble::MonteCarlo { n, seed } => Self { points: params.sample_classical(n, seed), weights: None },
            Ensemble::GaussHermite { order } => {
                let (x, w) = hermite::gauss_hermite(order);
                let sq = std::f64::consts::SQRT_2;
                let mut points = Vec::with_capacity(order * order);
                let mut weights = Vec::with_capacity(order * order);
                for (xi, wi) in x.iter().zip(&w) {
                    for (xj, wj) in x.iter().zip(&w) {
                        points.push(PhasePoint {
                            q: params.mean_q + sq * params.dq * xi,
                            p: params.mean_p + sq * params.dp * xj,
                        });
                        weights.push(wi * wj / PI);
                    }
                }
                Self { points, weights: Some(weights) }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Moments and, for uniform weights, their standard errors.
    pub fn moments(&self) -> (PacketState, Option<PacketState>) {
        let n = self.points.len() as f64;
        let weight = |i: usize| self.weights.as_ref().map_or(1.0 / n, |w| w[i]);
        let (mut mq, mut mp) = (0.0, 0.0);
        for (i, pt) in self.points.iter().enumerate() {
            mq += weight(i) * pt.q;
            mp += weight(i) * pt.p;
        }
        let (mut vq, mut vp, mut m4q, mut m4p) = (0.0, 0.0, 0.0, 0.0);
        for (i, pt) in self.points.iter().enumerate() {
            let (a, b) = (pt.q - mq, pt.p - mp);
            let w = weight(i);
            vq += w * a * a;
            vp += w * b * b;
            m4q += w * a.powi(4);
            m4p += w * b.powi(4);
        }
        let state = PacketState { q: mq, p: mp, dq: vq.sqrt(), dp: vp.sqrt() };
        let errors = self.weights.is_none().then(|| PacketState {
            q: (vq / n).sqrt(),
            p: (vp / n).sqrt(),
            dq: ((m4q - vq * vq).max(0.0) / (4.0 * vq * n)).sqrt(),
            dp: ((m4p - vp * vp).max(0.0) / (4.0 * vp * n)).sqrt(),
        });
        (state, errors)
    }
}

/// Advances one point by `steps` leapfrog steps of size `h`.
#[inline]
pub fn leapfrog(
    potential: &PolynomialPotential,
    mut pt: PhasePoint,
    h: f64,
    steps: usize,
    splitting: Splitting,
) -> PhasePoint {
    let inv_mass = 1.0 / potential.mass();
    match splitting {
        Splitting::PositionVerlet => {
            let half_drift = 0.5 * h * inv_mass;
            for _ in 0..steps {
                pt.q += pt.p * half_drift;
                pt.p += potential.force(pt.q) * h;
                pt.q += pt.p * half_drift;
            }
        }
        Splitting::VelocityVerlet => {
            let drift = h * inv_mass;
            let mut f = potential.force(pt.q);
            for _ in 0..steps {
                pt.p += 0.5 * h * f;
                pt.q += pt.p * drift;
                f = potential.force(pt.q);
                pt.p += 0.5 * h * f;
            }
        }
    }
    pt
}

/// Largest relative per-sample energy change between two ensembles.
///
/// Each change is measured against `max(|E_i|, ⟨|E|⟩)` so samples sitting
/// near zero energy do not dominate.
pub fn ensemble_energy_drift(potential: &PolynomialPotential, before: &[PhasePoint], after: &[PhasePoint]) -> f64 {
    assert_eq!(before.len(), after.len(), "ensembles must have the same size");
    if before.is_empty() {
        return 0.0;
    }
    let e0: Vec<f64> = before.iter().map(|pt| potential.energy(pt.q, pt.p)).collect();
    let scale = e0.iter().map(|e| e.abs()).sum::<f64>() / e0.len() as f64;
    e0.iter()
        .zip(after)
        .map(|(e, pt)| {
            let denom = e.abs().max(scale);
            let de = (potential.energy(pt.q, pt.p) - e).abs();
            if !de.is_finite() {
                f64::INFINITY
            } else if denom > 0.0 {
                de / denom
            } else {
                de
            }
        })
        .fold(0.0, f64::max)
}

/// Integrates an ensemble and records moments at the requested times.
#[derive(Debug, Clone)]
pub struct ClassicalEngine {
    potential: PolynomialPotential,
    settings: ClassicalSettings,
}

impl ClassicalEngine {
    pub fn new(potential: PolynomialPotential, settings: ClassicalSettings) -> Result<Self> {
        require_positive("dt", settings.dt)?;
        require_positive("drift_bound", settings.drift_bound)?;
        if !(settings.escape_bound > 0.0) {
            return Err(Error::InvalidParameter { name: "escape_bound", reason: "must be > 0".into() });
        }
        Ok(Self { potential, settings })
    }

    pub fn settings(&self) -> &ClassicalSettings {
        &self.settings
    }

    pub fn evolve(&self, params: &PacketParams, ensemble: Ensemble, times: &[f64]) -> Result<Trajectory> {
        params.validate()?;
        let mut members = WeightedEnsemble::realize(params, ensemble);
        let mut traj = self.evolve_ensemble(&mut members, times)?;
        match ensemble {
            Ensemble::MonteCarlo { n, seed } => {
                traj.meta.samples = Some(n);
                traj.meta.seed = Some(seed);
            }
            Ensemble::GaussHermite { order } => {
                traj.meta.samples = Some(order * order);
                traj.meta.scheme.push_str("+gauss-hermite");
            }
        }
        Ok(traj)
    }

    /// Moves `ensemble` in place to the last requested time.
    pub fn evolve_ensemble(&self, ensemble: &mut WeightedEnsemble, times: &[f64]) -> Result<Trajectory> {
        validate_times(times)?;
        if ensemble.is_empty() {
            return Err(Error::InvalidParameter { name: "n_samples", reason: "empty ensemble".into() });
        }
        let initial = ensemble.points.clone();
        let mut states = Vec::with_capacity(times.len());
        let mut errors = Vec::with_capacity(times.len());
        let mut now = 0.0;
        for &t in times {
            let span = t - now;
            if span > 0.0 {
                let steps = (span / self.settings.dt - 1e-9).ceil().max(1.0) as usize;
                let h = span / steps as f64;
                let (pot, split) = (&self.potential, self.settings.splitting);
                ensemble.points.par_iter_mut().for_each(|pt| *pt = leapfrog(pot, *pt, h, steps, split));
                now = t;
                self.check(&initial, &ensemble.points, t)?;
            }
            let (state, err) = ensemble.moments();
            states.push(state);
            if let Some(e) = err {
                errors.push(e);
            }
        }
        Ok(Trajectory {
            kind: TrajectoryKind::Classical,
            times: times.to_vec(),
            states,
            std_errors: ensemble.weights.is_none().then_some(errors),
            meta: SolverMeta {
                scheme: self.settings.splitting.name().into(),
                dt: Some(self.settings.dt),
                samples: Some(ensemble.len()),
                ..Default::default()
            },
        })
    }

    fn check(&self, initial: &[PhasePoint], current: &[PhasePoint], time: f64) -> Result<()> {
        let bound = self.settings.escape_bound;
        if let Some(index) = current.iter().position(|pt| !(pt.q.abs() <= bound) || !pt.p.is_finite()) {
            return Err(Error::Escape { index, bound, time });
        }
        let drift = ensemble_energy_drift(&self.potential, initial, current);
        if !(drift <= self.settings.drift_bound) {
            return Err(Error::EnergyDrift { drift, bound: self.settings.drift_bound, time });
        }
        Ok(())
    }
}

/// Monte Carlo evolution of the classical packet with `n` samples.
pub fn evolve_classical(
    params: &PacketParams,
    potential: &PolynomialPotential,
    times: &[f64],
    dt: f64,
    n: usize,
    seed: u64,
) -> Result<Trajectory> {
    if n < MIN_SAMPLES {
        return Err(Error::InvalidParameter {
            name: "n_samples",
            reason: format!("need at least {MIN_SAMPLES} samples, got {n}"),
        });
    }
    let mut settings = ClassicalSettings::with_dt(dt);
    settings.escape_bound = f64::INFINITY;
    ClassicalEngine::new(potential.clone(), settings)?.evolve(params, Ensemble::MonteCarlo { n, seed }, times)
}
