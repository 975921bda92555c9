//! Drivers that run the engines side by side: the quadratic coincidence
//! check, the large-spread scan under a cubic potential, and the sixth
//! moment comparison.

use serde::Serialize;
use serde_json::json;

use crate::classical::{ClassicalEngine, ClassicalSettings, Ensemble, Splitting};
use crate::error::{Error, Result};
use crate::packets::{PacketParams, QuantumSpectral};
use crate::potentials::{exact_trajectory, PolynomialPotential};
use crate::quantum::{build_state, GridSpec, QuantumEngine, QuantumSettings};
use crate::trajectory::{num, PacketState, Trajectory, COMPONENT_NAMES};

/// Componentwise `max_t |a − b| / max(|b(t)|, max_t |b|)`.
///
/// Normalizing by the component's largest magnitude keeps zero crossings of
/// an oscillating mean from inflating the relative error.
pub fn relative_deviation(a: &Trajectory, b: &Trajectory) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (c, slot) in out.iter_mut().enumerate() {
        let xs = a.component(c);
        let ys = b.component(c);
        let peak = ys.iter().fold(0.0f64, |m, y| m.max(y.abs()));
        *slot = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| {
                let d = (x - y).abs();
                if peak > 0.0 {
                    d / y.abs().max(peak)
                } else {
                    d
                }
            })
            .fold(0.0, f64::max);
    }
    out
}

/// Componentwise `max_t |a − b| / σ(t)` with `σ` the standard errors of `a`.
pub fn standardized_deviation(a: &Trajectory, b: &Trajectory) -> Option<[f64; 4]> {
    let errs = a.std_errors.as_ref()?;
    let mut out = [0.0f64; 4];
    for ((sa, sb), e) in a.states.iter().zip(&b.states).zip(errs) {
        let (x, y, s) = (sa.as_array(), sb.as_array(), e.as_array());
        for c in 0..4 {
            let d = (x[c] - y[c]).abs();
            let z = if s[c] > 0.0 {
                d / s[c]
            } else if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            out[c] = out[c].max(z);
        }
    }
    Some(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoincidenceSettings {
    /// Defaults to `T_char / 2000`.
    pub quantum_dt: Option<f64>,
    /// Defaults to `T_char / 1000`.
    pub classical_dt: Option<f64>,
    pub n_samples: usize,
    pub seed: u64,
    pub spectrum_tol: f64,
}

impl Default for CoincidenceSettings {
    fn default() -> Self {
        Self { quantum_dt: None, classical_dt: None, n_samples: 100_000, seed: 1, spectrum_tol: 1e-12 }
    }
}

#[derive(Debug, Clone)]
pub struct CoincidenceReport {
    pub nu: f64,
    pub exact: Trajectory,
    pub quantum: Trajectory,
    pub classical: Trajectory,
    /// Relative deviation of the quantum engine from the closed form.
    pub quantum_deviation: [f64; 4],
    /// Largest deviation of the classical engine in standard errors.
    pub classical_sigmas: [f64; 4],
}

impl CoincidenceReport {
    pub fn quantum_within(&self, tol: f64) -> bool {
        self.quantum_deviation.iter().all(|d| *d <= tol)
    }

    pub fn classical_within(&self, sigmas: f64) -> bool {
        self.classical_sigmas.iter().all(|d| *d <= sigmas)
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "nu": self.nu,
            "quantum_deviation": named(&self.quantum_deviation),
            "classical_sigmas": named(&self.classical_sigmas),
            "exact": self.exact.to_json(json!({})),
            "quantum": self.quantum.to_json(json!({})),
            "classical": self.classical.to_json(json!({})),
        })
    }
}

fn named(v: &[f64; 4]) -> serde_json::Value {
    COMPONENT_NAMES.iter().zip(v).map(|(k, x)| (k.to_string(), json!(x))).collect::<serde_json::Map<_, _>>().into()
}

/// Runs the closed form and both engines for a potential of degree ≤ 2.
pub fn quadratic_coincidence(
    params: &PacketParams,
    potential: &PolynomialPotential,
    times: &[f64],
    settings: &CoincidenceSettings,
) -> Result<CoincidenceReport> {
    if potential.degree() > 2 {
        return Err(Error::NotQuadratic(potential.degree()));
    }
    let exact = exact_trajectory(params, potential, times)?;
    let t_max = times.last().copied().unwrap_or(0.0);

    let q_settings = match settings.quantum_dt {
        Some(dt) => QuantumSettings::with_dt(dt),
        None => QuantumSettings::default_for(params, potential),
    };
    let grid = GridSpec::for_evolution(params, potential, t_max, settings.spectrum_tol)?;
    let mut state = build_state(params, &grid, settings.spectrum_tol)?;
    let quantum = QuantumEngine::new(potential.clone(), q_settings)?.evolve(&mut state, times)?;

    let c_settings = match settings.classical_dt {
        Some(dt) => ClassicalSettings::with_dt(dt),
        None => ClassicalSettings::default_for(params, potential),
    };
    let classical = ClassicalEngine::new(potential.clone(), c_settings)?.evolve(
        params,
        Ensemble::MonteCarlo { n: settings.n_samples, seed: settings.seed },
        times,
    )?;

    Ok(CoincidenceReport {
        nu: params.nu(),
        quantum_deviation: relative_deviation(&quantum, &exact),
        classical_sigmas: standardized_deviation(&classical, &exact).expect("Monte Carlo run has errors"),
        exact,
        quantum,
        classical,
    })
}

/// Numerical knobs of [`limit_scan`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScanSettings {
    /// Shared step of both engines; the classical side uses the
    /// kick–drift–kick ordering of the quantum Strang step so that their
    /// splitting errors cancel in the difference.
    pub dt: f64,
    /// Gauss–Hermite nodes per axis for the classical ensemble.
    pub gh_order: usize,
    pub spectrum_tol: f64,
    /// Relative floor added to every error estimate for rounding.
    pub rounding_floor: f64,
}

impl Default for ScanSettings {
    fn default() -> Self {
        Self { dt: 0.025, gh_order: 12, spectrum_tol: 1e-14, rounding_floor: 1e-13 }
    }
}

impl ScanSettings {
    /// Halved step, finer grid, more nodes and a smaller spectral tail.
    fn refined(&self) -> Self {
        Self {
            dt: self.dt / 2.0,
            gh_order: self.gh_order + self.gh_order / 2,
            spectrum_tol: self.spectrum_tol * 1e-2,
            rounding_floor: self.rounding_floor,
        }
    }
}

/// One scale at one probe time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanPoint {
    pub scale: f64,
    pub nu: f64,
    pub time: f64,
    pub quantum: PacketState,
    pub classical: PacketState,
    /// `|X_q − X_c| / |X_c|` per component.
    pub relative: [f64; 4],
    /// `|X_q − X_c|` over the classical spread of the same kind
    /// (`ΔQ_c` for `Q` and `ΔQ`, `ΔP_c` for `P` and `ΔP`).
    pub spread_normalized: [f64; 4],
    /// Estimated absolute solver error of `X_q − X_c`.
    pub error: [f64; 4],
    pub grid_points: usize,
    pub branches: usize,
}

impl ScanPoint {
    pub fn difference(&self) -> [f64; 4] {
        let (a, b) = (self.quantum.as_array(), self.classical.as_array());
        [a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]]
    }

    /// A difference counts only when it is at least three times its error.
    pub fn significant(&self, component: usize) -> bool {
        self.difference()[component].abs() >= 3.0 * self.error[component]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitScanReport {
    pub potential: Vec<f64>,
    pub mass: f64,
    pub base: PacketParams,
    pub scales: Vec<f64>,
    pub probe_times: Vec<f64>,
    pub points: Vec<ScanPoint>,
    /// Scales whose runs were aborted, with the diagnostic.
    pub failures: Vec<(f64, String)>,
}

impl LimitScanReport {
    /// Points at one probe time, in scale order.
    pub fn at_time(&self, time: f64) -> Vec<&ScanPoint> {
        self.points.iter().filter(|p| p.time == time).collect()
    }

    /// Spread-normalized difference of `component` strictly decreasing in
    /// the scale at every probe time, with no aborted scale.
    pub fn monotone_decrease(&self, component: usize) -> bool {
        self.failures.is_empty()
            && self.probe_times.iter().all(|&t| {
                let pts = self.at_time(t);
                pts.len() == self.scales.len()
                    && pts.windows(2).all(|w| w[1].spread_normalized[component] < w[0].spread_normalized[component])
            })
    }

    pub fn all_significant(&self, component: usize) -> bool {
        !self.points.is_empty() && self.points.iter().all(|p| p.significant(component))
    }

    pub fn any_significant(&self) -> bool {
        self.points.iter().any(|p| (0..4).any(|c| p.significant(c)))
    }

    pub const CSV_HEADER: &'static str = "s,nu,t,Q_q,P_q,dQ_q,dP_q,Q_c,P_c,dQ_c,dP_c,\
rel_Q,rel_P,rel_dQ,rel_dP,norm_Q,norm_P,norm_dQ,norm_dP,err_Q,err_P,err_dQ,err_dP,\
sig_Q,sig_P,sig_dQ,sig_dP,grid_points,branches";

    pub fn csv_rows(&self) -> Vec<String> {
        self.points
            .iter()
            .map(|p| {
                let mut cells = vec![num(p.scale), num(p.nu), num(p.time)];
                let groups = [p.quantum.as_array(), p.classical.as_array(), p.relative, p.spread_normalized, p.error];
                cells.extend(groups.iter().flatten().map(|x| num(*x)));
                cells.extend((0..4).map(|c| u8::from(p.significant(c)).to_string()));
                cells.push(p.grid_points.to_string());
                cells.push(p.branches.to_string());
                cells.join(",")
            })
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        v["monotone_Q"] = json!(self.monotone_decrease(0));
        v["all_significant_Q"] = json!(self.all_significant(0));
        v["any_significant"] = json!(self.any_significant());
        v
    }
}

/// Both engines at one scale.
fn scale_run(
    params: &PacketParams,
    potential: &PolynomialPotential,
    times: &[f64],
    settings: &ScanSettings,
    grid_factor: usize,
) -> Result<ScaleRun> {
    let t_max = times.last().copied().unwrap_or(0.0);
    let base_grid = GridSpec::for_evolution(params, potential, t_max, settings.spectrum_tol)?;
    let grid = GridSpec::new(base_grid.q_min, base_grid.q_max, base_grid.n_points * grid_factor)?;
    let mut state = build_state(params, &grid, settings.spectrum_tol)?;
    let branches = state.branches.len();
    let mut q_settings = QuantumSettings::with_dt(settings.dt);
    q_settings.leakage_limit = 1e-6;
    let quantum = QuantumEngine::new(potential.clone(), q_settings)?.evolve(&mut state, times)?;
    let leak = state.leakage();

    let c_settings = ClassicalSettings {
        dt: settings.dt,
        splitting: Splitting::VelocityVerlet,
        escape_bound: f64::INFINITY,
        drift_bound: f64::MAX,
    };
    let classical = ClassicalEngine::new(potential.clone(), c_settings)?.evolve(
        params,
        Ensemble::GaussHermite { order: settings.gh_order },
        times,
    )?;
    Ok(ScaleRun { quantum: quantum.states, classical: classical.states, grid, branches, leak })
}

struct ScaleRun {
    quantum: Vec<PacketState>,
    classical: Vec<PacketState>,
    grid: GridSpec,
    branches: usize,
    /// Edge-band probability at the last probe time.
    leak: f64,
}

/// Scales both spreads of `base` by each `s` and compares the engines at
/// the probe times.
///
/// Every scale is run twice, the second time with [`ScanSettings::refined`]
/// numerics; the refined values are reported and the change between the
/// two runs, plus a rounding floor, is the error estimate. A failing scale
/// is recorded in `failures` and the scan continues.
pub fn limit_scan(
    base: &PacketParams,
    potential: &PolynomialPotential,
    probe_times: &[f64],
    scales: &[f64],
    settings: &ScanSettings,
) -> Result<LimitScanReport> {
    if scales.is_empty() || scales.windows(2).any(|w| !(w[1] > w[0])) || scales[0] <= 0.0 {
        return Err(Error::InvalidParameter { name: "scales", reason: "must be positive and ascending".into() });
    }
    if probe_times.is_empty() || probe_times.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::InvalidParameter { name: "probe_times", reason: "must be positive".into() });
    }
    let mut times = probe_times.to_vec();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut report = LimitScanReport {
        potential: potential.coeffs().to_vec(),
        mass: potential.mass(),
        base: *base,
        scales: scales.to_vec(),
        probe_times: times.clone(),
        points: Vec::new(),
        failures: Vec::new(),
    };
    let fine_settings = settings.refined();
    for &s in scales {
        let params = base.scaled_spreads(s)?;
        let runs = scale_run(&params, potential, &times, settings, 1)
            .and_then(|coarse| scale_run(&params, potential, &times, &fine_settings, 2).map(|fine| (coarse, fine)));
        let (coarse, fine) = match runs {
            Ok(r) => r,
            Err(e) if e.is_numerical() || matches!(e, Error::Coverage(_)) => {
                report.failures.push((s, e.to_string()));
                continue;
            }
            Err(e) => return Err(e),
        };
        // probability wrapped around the periodic grid shifts moments by at
        // most its mass times the distance it can travel
        let leak = coarse.leak.max(fine.leak);
        let q_reach = fine.grid.q_min.abs().max(fine.grid.q_max.abs());
        let p_reach = fine.grid.p_max(params.hbar);
        for (k, &t) in times.iter().enumerate() {
            let (q, c) = (fine.quantum[k].as_array(), fine.classical[k].as_array());
            let (q0, c0) = (coarse.quantum[k].as_array(), coarse.classical[k].as_array());
            let spread = [c[2], c[3], c[2], c[3]];
            let reach = [q_reach, p_reach, q_reach * q_reach / c[2], p_reach * p_reach / c[3]];
            let mut relative = [0.0; 4];
            let mut spread_normalized = [0.0; 4];
            let mut error = [0.0; 4];
            for i in 0..4 {
                let d = q[i] - c[i];
                relative[i] = d.abs() / c[i].abs();
                spread_normalized[i] = d.abs() / spread[i];
                let floor = settings.rounding_floor * (c[i].abs() + spread[i]);
                error[i] = (d - (q0[i] - c0[i])).abs() + floor + leak * reach[i];
            }
            report.points.push(ScanPoint {
                scale: s,
                nu: params.nu(),
                time: t,
                quantum: fine.quantum[k],
                classical: fine.classical[k],
                relative,
                spread_normalized,
                error,
                grid_points: fine.grid.n_points,
                branches: fine.branches,
            });
        }
    }
    Ok(report)
}

/// Earliest time at which any of `n` Monte Carlo samples leaves
/// `|q| ≤ bound`, integrating up to `t_max`; `None` when none does.
pub fn pilot_escape_time(
    params: &PacketParams,
    potential: &PolynomialPotential,
    n: usize,
    seed: u64,
    bound: f64,
    t_max: f64,
) -> Result<Option<f64>> {
    let dt = potential.characteristic_time(params) / 1000.0;
    let steps = (t_max / dt).ceil() as usize;
    let h = t_max / steps as f64;
    let mut pts = params.sample_classical(n, seed);
    for k in 1..=steps {
        for pt in pts.iter_mut() {
            *pt = crate::classical::leapfrog(potential, *pt, h, 1, Splitting::PositionVerlet);
        }
        if pts.iter().any(|pt| !(pt.q.abs() <= bound)) {
            return Ok(Some(k as f64 * h));
        }
    }
    Ok(None)
}

/// `⟨q⁶⟩` three ways for a packet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SixthMomentRecord {
    pub mean_q: f64,
    pub dq: f64,
    pub nu: f64,
    /// Gaussian closed form `Q⁶ + 15Q⁴ΔQ² + 45Q²ΔQ⁴ + 15ΔQ⁶`.
    pub classical: f64,
    /// Classical value plus `9ΔQ⁶/ν − 3ΔQ⁶/ν³`.
    pub corrected: f64,
    /// Quadrature of the quantum position density.
    pub quadrature: f64,
    /// Truncation estimate of the quadrature.
    pub quadrature_error: f64,
}

impl SixthMomentRecord {
    pub fn quadrature_vs_classical(&self) -> f64 {
        (self.quadrature - self.classical) / self.classical
    }

    pub fn quadrature_vs_corrected(&self) -> f64 {
        (self.quadrature - self.corrected) / self.corrected
    }

    pub const CSV_HEADER: &'static str =
        "Q,dQ,nu,classical,corrected,quadrature,quadrature_error,rel_quadrature_vs_classical,rel_quadrature_vs_corrected";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            num(self.mean_q),
            num(self.dq),
            num(self.nu),
            num(self.classical),
            num(self.corrected),
            num(self.quadrature),
            num(self.quadrature_error),
            num(self.quadrature_vs_classical()),
            num(self.quadrature_vs_corrected())
        )
    }
}

/// Compares the classical `⟨q⁶⟩`, the corrected formula and a direct
/// quadrature of `Σ wₙ |ψₙ(q)|²`.
pub fn cubic_moment_check(params: &PacketParams) -> Result<SixthMomentRecord> {
    let nu = params.nu();
    let spectral = QuantumSpectral::new(params, 1e-15)?;
    let (q0, s) = (params.mean_q, params.dq);
    // trapezoid rule on ±14ΔQ; spectrally accurate for this smooth density
    let half = 14.0 * s;
    let n = 4096;
    let h = 2.0 * half / n as f64;
    let mut scratch = Vec::new();
    let mut total = 0.0;
    let mut sixth = 0.0;
    let mut edge = 0.0;
    for i in 0..=n {
        let q = q0 - half + i as f64 * h;
        let w = if i == 0 || i == n { 0.5 } else { 1.0 } * h;
        let rho = spectral.position_density(q, &mut scratch);
        total += w * rho;
        sixth += w * rho * q.powi(6);
        if i < n / 28 || i > n - n / 28 {
            edge += w * rho * q.powi(6);
        }
    }
    let quadrature = sixth / total;
    // the renormalized quadrature misses the discarded spectral tail; bound
    // it with ⟨ξ²⟩ = n+½, ⟨ξ⁴⟩ = ¾(2n²+2n+1), ⟨ξ⁶⟩ = ⅝(4n³+6n²+8n+3)
    let ell2 = spectral.length_scale.powi(2);
    let state_moment = |n: f64| {
        let x2 = ell2 * (n + 0.5);
        let x4 = ell2 * ell2 * 0.75 * (2.0 * n * n + 2.0 * n + 1.0);
        let x6 = ell2.powi(3) * 0.625 * (4.0 * n.powi(3) + 6.0 * n * n + 8.0 * n + 3.0);
        q0.powi(6) + 15.0 * q0.powi(4) * x2 + 15.0 * q0 * q0 * x4 + x6
    };
    let mut tail = 0.0;
    let mut n = spectral.weights.len();
    let mut w = (1.0 - spectral.ratio) * spectral.ratio.powi(n as i32);
    while w > 0.0 {
        let term = w * (state_moment(n as f64) - quadrature);
        tail += term;
        if term.abs() <= 1e-17 * tail.abs() {
            break;
        }
        n += 1;
        w *= spectral.ratio;
    }
    let classical = params.classical_raw_moment_q(6);
    let d6 = s.powi(6);
    Ok(SixthMomentRecord {
        mean_q: q0,
        dq: s,
        nu,
        classical,
        corrected: classical + 9.0 * d6 / nu - 3.0 * d6 / nu.powi(3),
        quadrature,
        quadrature_error: edge.abs() / total + tail.abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::uniform_times;

    #[test]
    fn relative_deviation_uses_component_peak() {
        let pk = PacketParams::new(1.0, 0.0, 1.0, 1.0).unwrap();
        let pot = PolynomialPotential::harmonic(1.0, 1.0).unwrap();
        let times = uniform_times(6.0, 60);
        let a = exact_trajectory(&pk, &pot, &times).unwrap();
        let mut b = a.clone();
        assert_eq!(relative_deviation(&a, &b), [0.0; 4]);
        for s in b.states.iter_mut() {
            s.q += 1e-3;
        }
        let d = relative_deviation(&b, &a);
        assert!((d[0] - 1e-3).abs() < 1e-12, "{d:?}");
        assert_eq!(d[1], 0.0);
    }

    #[test]
    fn coincidence_rejects_cubic() {
        let pk = PacketParams::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let pot = PolynomialPotential::cubic(1.0, 1.0).unwrap();
        let err = quadratic_coincidence(&pk, &pot, &[0.0, 1.0], &CoincidenceSettings::default()).unwrap_err();
        assert_eq!(err, Error::NotQuadratic(3));
    }

    #[test]
    fn coincidence_small_run() {
        let pk = PacketParams::new(1.0, 0.5, 1.0, 1.0).unwrap();
        let pot = PolynomialPotential::harmonic(1.0, 1.0).unwrap();
        let settings = CoincidenceSettings { n_samples: 4000, ..Default::default() };
        let rep = quadratic_coincidence(&pk, &pot, &uniform_times(2.0, 4), &settings).unwrap();
        assert!(rep.quantum_within(1e-6), "{:?}", rep.quantum_deviation);
        assert!(rep.classical_within(5.0), "{:?}", rep.classical_sigmas);
        // t = 0 row
        let (e, q) = (rep.exact.states[0], rep.quantum.states[0]);
        for (x, y) in e.as_array().iter().zip(q.as_array()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn sixth_moment_record() {
        let rec = cubic_moment_check(&PacketParams::new(0.0, 0.0, 1.0, 1.0).unwrap()).unwrap();
        assert_eq!(rec.classical, 15.0);
        assert!((rec.corrected - 19.125).abs() < 1e-12);
        assert!((rec.quadrature - 15.0).abs() < 1e-8, "{rec:?}");
        let shifted = cubic_moment_check(&PacketParams::new(1.0, 0.0, 1.0, 1.0).unwrap()).unwrap();
        assert_eq!(shifted.classical, 76.0);
        assert!((shifted.quadrature - 76.0).abs() < 1e-8);
        // the estimate accounts for the actual shortfall
        for r in [rec, shifted] {
            assert!((r.quadrature - r.classical).abs() <= 2.0 * r.quadrature_error + 1e-13 * r.classical, "{r:?}");
        }
    }

    #[test]
    fn sixth_moment_at_large_nu() {
        let rec = cubic_moment_check(&PacketParams::new(0.0, 0.0, 1.0, 500.0).unwrap()).unwrap();
        assert!((rec.nu - 1000.0).abs() < 1e-9);
        assert!(rec.quadrature_vs_classical().abs() < 1e-2);
        assert!(rec.quadrature_vs_corrected().abs() < 1e-2);
    }

    #[test]
    fn scan_rejects_bad_scales() {
        let pk = PacketParams::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let pot = PolynomialPotential::harmonic(1.0, 1.0).unwrap();
        let st = ScanSettings::default();
        assert!(limit_scan(&pk, &pot, &[0.5], &[2.0, 1.0], &st).is_err());
        assert!(limit_scan(&pk, &pot, &[0.0], &[1.0], &st).is_err());
    }

    #[test]
    fn quadratic_scan_shows_nothing() {
        let pk = PacketParams::new(0.5, 0.0, 0.7, 0.75).unwrap();
        let pot = PolynomialPotential::harmonic(1.0, 1.0).unwrap();
        let st = ScanSettings { dt: 0.02, gh_order: 8, ..Default::default() };
        let rep = limit_scan(&pk, &pot, &[0.6], &[1.0, 2.0], &st).unwrap();
        assert!(rep.failures.is_empty(), "{:?}", rep.failures);
        assert!(!rep.any_significant(), "{:#?}", rep.points);
    }

    #[test]
    fn pilot_escape() {
        let pk = PacketParams::new(0.0, 0.0, 2.0, 2.0).unwrap();
        let cubic = PolynomialPotential::cubic(0.3, 1.0).unwrap();
        let t = pilot_escape_time(&pk, &cubic, 1000, 3, 1e3, 20.0).unwrap();
        assert!(t.is_some_and(|t| t > 0.0 && t < 20.0));
        let harmonic = PolynomialPotential::harmonic(1.0, 1.0).unwrap();
        assert_eq!(pilot_escape_time(&pk, &harmonic, 1000, 3, 1e3, 5.0).unwrap(), None);
    }
}
