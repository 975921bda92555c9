//! One function per subcommand. Each reads every value it needs before
//! computing, so configuration errors surface before any work is done.

use std::f64::consts::PI;
use std::path::PathBuf;

use mepack_core::experiments::{
    cubic_moment_check, limit_scan, pilot_escape_time, quadratic_coincidence, CoincidenceSettings, LimitScanReport,
    ScanSettings, SixthMomentRecord,
};
use mepack_core::maxent::{l1_distance_to_analytic, maximality_witness, solve_dual};
use mepack_core::packets::{exponent_coefficient, quantum_entropy, DEFAULT_SPECTRUM_TOL};
use mepack_core::potentials::exact_trajectory;
use mepack_core::quantum::build_state;
use mepack_core::rod::{lambda_from_energy, loglog_slope, scan_n, RodSummary};
use mepack_core::trajectory::{num, uniform_times};
use mepack_core::{
    ClassicalEngine, ClassicalSettings, Ensemble, GridSpec, MomentConstraints, PacketParams, PolynomialPotential,
    PotentialClass, QuantumEngine, QuantumSettings, QuantumSpectral, RodSpec, Trajectory,
};
use serde_json::json;

use crate::config::RunConfig;
use crate::output::{csv_preamble, emit, json_bytes, write_atomic};
use crate::CliError;

pub fn dispatch(cfg: &RunConfig) -> Result<(), CliError> {
    match cfg.command {
        "packet" => packet(cfg),
        "evolve" => evolve(cfg),
        "coincide" => coincide(cfg),
        "maxent" => maxent(cfg),
        "rod" => rod(cfg),
        "scan" => scan(cfg),
        "moments" => moments(cfg),
        other => unreachable!("unknown subcommand {other}"),
    }
}

/// Where and how to write the main artifact.
struct Output {
    path: Option<PathBuf>,
    json: bool,
}

fn output(cfg: &RunConfig, default_format: &str) -> Result<Output, CliError> {
    let format = cfg.choice("format", &["csv", "json"], default_format)?;
    Ok(Output { path: cfg.path("out"), json: format == "json" })
}

impl Output {
    fn write(&self, bytes: &[u8]) -> Result<(), CliError> {
        emit(self.path.as_deref(), bytes)
    }
}

/// One CSV row.
fn join(cells: &[f64]) -> String {
    let mut row = cells.iter().map(|x| num(*x)).collect::<Vec<_>>().join(",");
    row.push('\n');
    row
}

fn params(cfg: &RunConfig) -> Result<PacketParams, CliError> {
    let q = cfg.required("Q")?;
    let p = cfg.required("P")?;
    let dq = cfg.required("dQ")?;
    let dp = cfg.required("dP")?;
    finish_params(cfg, PacketParams::new(q, p, dq, dp)?)
}

fn finish_params(cfg: &RunConfig, base: PacketParams) -> Result<PacketParams, CliError> {
    let hbar = cfg.or("hbar", 1.0)?;
    let mut pk = base.with_hbar(hbar)?;
    if cfg.has("v") {
        pk = pk.with_volume(cfg.or("v", 2.0 * PI * hbar)?)?;
    }
    Ok(pk)
}

fn potential(cfg: &RunConfig) -> Result<PolynomialPotential, CliError> {
    let coeffs = cfg.required_list("V")?;
    let mu = cfg.or("mu", 1.0)?;
    Ok(PolynomialPotential::new(coeffs, mu)?)
}

fn packet(cfg: &RunConfig) -> Result<(), CliError> {
    let pk = params(cfg)?;
    let tol = cfg.or("tol", DEFAULT_SPECTRUM_TOL)?;
    let out = output(cfg, "json")?;
    let spec = QuantumSpectral::new(&pk, tol)?;
    let nu = pk.nu();
    let coefficient = if nu > 1.0 { exponent_coefficient(nu) } else { f64::INFINITY };
    let s_q = quantum_entropy(&pk)?;
    let s_c = pk.classical_entropy();
    if out.json {
        let v = json!({
            "meta": cfg.echo_json(),
            "nu": nu,
            "classical_entropy": s_c,
            "quantum_entropy": s_q,
            "exponent_coefficient": if coefficient.is_finite() { json!(coefficient) } else { json!(null) },
            "spectrum": {
                "ratio": spec.ratio,
                "n_max": spec.n_max(),
                "trace": spec.trace(),
                "purity": spec.purity(),
                "length_scale": spec.length_scale,
            },
        });
        out.write(&json_bytes(&v))
    } else {
        let mut s = csv_preamble(
            "nu [-], S_classical [-], S_quantum [-], exponent_coefficient [-], ratio [-], n_max [-], trace [-], \
             purity [-], length_scale [length]",
            &cfg.echo(),
        );
        s.push_str("nu,S_classical,S_quantum,exponent_coefficient,ratio,n_max,trace,purity,length_scale\n");
        let cells = [
            nu,
            s_c,
            s_q,
            coefficient,
            spec.ratio,
            spec.n_max() as f64,
            spec.trace(),
            spec.purity(),
            spec.length_scale,
        ];
        s.push_str(&join(&cells));
        out.write(s.as_bytes())
    }
}

fn write_trajectory(cfg: &RunConfig, out: &Output, traj: &Trajectory) -> Result<(), CliError> {
    if out.json {
        out.write(&json_bytes(&traj.to_json(cfg.echo_json())))
    } else {
        let mut buf = Vec::new();
        traj.write_csv(&mut buf, &cfg.echo())?;
        out.write(&buf)
    }
}

fn evolve(cfg: &RunConfig) -> Result<(), CliError> {
    let pk = params(cfg)?;
    let pot = potential(cfg)?;
    let engine = cfg.choice("engine", &["quantum", "classical", "exact"], "quantum")?;
    let t_max: f64 = cfg.required("t-max")?;
    let n_times: usize = cfg.or("n-times", 100)?;
    if n_times == 0 {
        return Err(CliError::Config("`n-times` must be at least 1".into()));
    }
    let times = uniform_times(t_max, n_times);
    let out = output(cfg, "csv")?;
    let traj = match engine.as_str() {
        "exact" => exact_trajectory(&pk, &pot, &times)?,
        "classical" => {
            let mut settings = ClassicalSettings::default_for(&pk, &pot);
            settings.dt = cfg.or("dt", settings.dt)?;
            if let Some(b) = cfg.optional("escape-bound")? {
                settings.escape_bound = b;
            }
            settings.drift_bound = cfg.or("drift-bound", settings.drift_bound)?;
            let n = cfg.or("n-samples", 100_000usize)?;
            let seed = cfg.or("seed", 1u64)?;
            ClassicalEngine::new(pot, settings)?.evolve(&pk, Ensemble::MonteCarlo { n, seed }, &times)?
        }
        _ => {
            let tol = cfg.or("tol", DEFAULT_SPECTRUM_TOL)?;
            let mut settings = QuantumSettings::default_for(&pk, &pot);
            settings.dt = cfg.or("dt", settings.dt)?;
            settings.leakage_limit = cfg.or("leakage-limit", settings.leakage_limit)?;
            let explicit = (cfg.optional::<f64>("q-min")?, cfg.optional::<f64>("q-max")?, cfg.optional("grid-points")?);
            let dump = cfg.path("dump");
            let grid = match explicit {
                (None, None, None) => GridSpec::for_evolution(&pk, &pot, t_max, tol)?,
                (Some(lo), Some(hi), Some(n)) => GridSpec::new(lo, hi, n)?,
                _ => return Err(CliError::Config("`q-min`, `q-max` and `grid-points` must be given together".into())),
            };
            let mut state = build_state(&pk, &grid, tol)?;
            let traj = QuantumEngine::new(pot, settings)?.evolve(&mut state, &times)?;
            if let Some(path) = dump {
                let mut buf = Vec::new();
                state.write_density_dump(&mut buf)?;
                write_atomic(&path, &buf)?;
            }
            traj
        }
    };
    write_trajectory(cfg, &out, &traj)
}

fn coincide(cfg: &RunConfig) -> Result<(), CliError> {
    let pk = params(cfg)?;
    let pot = potential(cfg)?;
    let t_max: f64 = cfg.required("t-max")?;
    let n_times: usize = cfg.or("n-times", 200)?;
    if n_times == 0 {
        return Err(CliError::Config("`n-times` must be at least 1".into()));
    }
    let settings = CoincidenceSettings {
        quantum_dt: cfg.optional("quantum-dt")?,
        classical_dt: cfg.optional("classical-dt")?,
        n_samples: cfg.or("n-samples", 100_000)?,
        seed: cfg.or("seed", 1)?,
        spectrum_tol: cfg.or("tol", 1e-12)?,
    };
    let rel_tol = cfg.or("rel-tol", 1e-6)?;
    let sigmas = cfg.or("sigmas", 5.0)?;
    let out = output(cfg, "csv")?;
    let rep = quadratic_coincidence(&pk, &pot, &uniform_times(t_max, n_times), &settings)?;
    let quantum_ok = rep.quantum_within(rel_tol);
    let classical_ok = rep.classical_within(sigmas);
    if out.json {
        let mut v = rep.to_json();
        v["meta"] = cfg.echo_json();
        v["quantum_pass"] = json!(quantum_ok);
        v["classical_pass"] = json!(classical_ok);
        out.write(&json_bytes(&v))?;
    } else {
        let mut s = csv_preamble(
            "t [time], Q/P/dQ/dP [length/momentum] for exact (_x), quantum (_q) and classical (_c), \
             classical standard errors (se_)",
            &cfg.echo(),
        );
        s.push_str(&format!(
            "# quantum_deviation={:?} quantum_pass={quantum_ok} classical_sigmas={:?} classical_pass={classical_ok}\n",
            rep.quantum_deviation, rep.classical_sigmas
        ));
        s.push_str("t,Q_x,P_x,dQ_x,dP_x,Q_q,P_q,dQ_q,dP_q,Q_c,P_c,dQ_c,dP_c,se_Q,se_P,se_dQ,se_dP\n");
        let errs = rep.classical.std_errors.as_ref().expect("Monte Carlo run has errors");
        for (i, (t, err)) in rep.exact.times.iter().zip(errs).enumerate() {
            let mut cells = vec![num(*t)];
            for a in [&rep.exact.states[i], &rep.quantum.states[i], &rep.classical.states[i], err] {
                cells.extend(a.as_array().iter().map(|x| num(*x)));
            }
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        out.write(s.as_bytes())?;
    }
    if quantum_ok && classical_ok {
        Ok(())
    } else {
        Err(CliError::Numerical(format!(
            "engines disagree with the closed form: quantum {:?} (tol {rel_tol}), classical {:?} SE (tol {sigmas})",
            rep.quantum_deviation, rep.classical_sigmas
        )))
    }
}

fn maxent(cfg: &RunConfig) -> Result<(), CliError> {
    let pk = params(cfg)?;
    let nq = cfg.or("nq", 512usize)?;
    let np = cfg.or("np", 512usize)?;
    let tol = cfg.or("tol", 1e-10)?;
    let max_iter = cfg.or("max-iter", 100usize)?;
    let trials = cfg.or("trials", 100usize)?;
    let seed = cfg.or("seed", 1u64)?;
    let out = output(cfg, "json")?;
    let c = MomentConstraints::from_params(&pk, nq, np)?;
    let sol = solve_dual(&c, tol, max_iter)?;
    let l1 = l1_distance_to_analytic(&sol, &pk);
    let witness = maximality_witness(&sol, trials, seed);
    let [l1q, l2q, l1p, l2p] = sol.multipliers;
    if out.json {
        let v = json!({
            "meta": cfg.echo_json(),
            "multipliers": { "lambda1": l1q, "lambda2": l2q, "lambda3": l1p, "lambda4": l2p },
            "closed_form": { "lambda2": 1.0 / (2.0 * pk.dq * pk.dq), "lambda4": 1.0 / (2.0 * pk.dp * pk.dp) },
            "residuals": sol.residuals,
            "iterations": sol.iterations,
            "newton_decrements": sol.decrements,
            "l1_distance": l1,
            "entropy": sol.entropy(),
            "closed_form_entropy": pk.classical_entropy(),
            "witness": { "trials": witness.trials, "lower": witness.lower, "min_gap": witness.min_gap,
                         "max_violation": witness.max_violation, "passed": witness.passed() },
        });
        out.write(&json_bytes(&v))?;
    } else {
        let mut s = csv_preamble(
            "lambda1 [1/length], lambda2 [1/length^2], lambda3 [1/momentum], lambda4 [1/momentum^2], \
             l1_distance [-], entropy [-], iterations [-], witness_lower [-], witness_trials [-]",
            &cfg.echo(),
        );
        s.push_str("lambda1,lambda2,lambda3,lambda4,l1_distance,entropy,iterations,witness_lower,witness_trials\n");
        let cells =
            [l1q, l2q, l1p, l2p, l1, sol.entropy(), sol.iterations as f64, witness.lower as f64, witness.trials as f64];
        s.push_str(&join(&cells));
        out.write(s.as_bytes())?;
    }
    if witness.passed() {
        Ok(())
    } else {
        Err(CliError::Numerical(format!(
            "maximality witness: only {} of {} perturbations lowered the entropy",
            witness.lower, witness.trials
        )))
    }
}

const ROD_COLUMNS: &str = "N [-], mu [mass], kappa [force/length]^(1/2), xi [length], lambda [1/energy], \
omega_min [1/time], omega_max [1/time], M [mass], E [energy], E0 [energy], T [temperature], L [length], \
var_L [length^2], relvar_L [-], var_E [energy^2], relvar_E [-]";

fn rod(cfg: &RunConfig) -> Result<(), CliError> {
    let n = cfg.required::<usize>("N")?;
    let mu = cfg.or("mu", 1.0)?;
    let kappa = cfg.or("kappa", 1.0)?;
    let xi = cfg.or("xi", 1.0)?;
    let hbar = cfg.or("hbar", 1.0)?;
    let kb = cfg.or("kB", 1.0)?;
    let lam: Option<f64> = cfg.optional("lambda")?;
    let energy: Option<f64> = cfg.optional("energy")?;
    let ns = cfg.list("scan-n")?;
    let out = output(cfg, "csv")?;
    let mut spec = RodSpec::new(n, mu, kappa, xi, 1.0)?.with_hbar(hbar)?;
    spec.k_boltzmann = kb;
    spec.validate()?;
    spec = match (lam, energy) {
        (Some(l), None) => spec.with_lambda(l)?,
        (None, Some(e)) => spec.with_lambda(lambda_from_energy(&spec, e)?)?,
        (None, None) => return Err(CliError::Config("missing required key `lambda` (or `energy`)".into())),
        (Some(_), Some(_)) => return Err(CliError::Config("give only one of `lambda` and `energy`".into())),
    };
    let rows = match &ns {
        None => vec![RodSummary::of(&spec)],
        Some(list) => {
            let counts = list
                .iter()
                .map(|&x| {
                    if x >= 1.0 && x.fract() == 0.0 {
                        Ok(x as usize)
                    } else {
                        Err(CliError::Config(format!("`scan-n` entries must be positive integers, got {x}")))
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            scan_n(&spec, &counts)?
        }
    };
    let slopes = (rows.len() >= 2).then(|| {
        let x: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
        let l: Vec<f64> = rows.iter().map(|r| r.length_rel_variance).collect();
        let e: Vec<f64> = rows.iter().map(|r| r.energy_rel_variance).collect();
        (loglog_slope(&x, &l), loglog_slope(&x, &e))
    });
    if out.json {
        let mut v = json!({ "meta": cfg.echo_json(), "rows": rows });
        if let Some((sl, se)) = slopes {
            v["slope_relvar_L"] = json!(sl);
            v["slope_relvar_E"] = json!(se);
        }
        out.write(&json_bytes(&v))
    } else {
        let mut s = csv_preamble(ROD_COLUMNS, &cfg.echo());
        if let Some((sl, se)) = slopes {
            s.push_str(&format!("# slope_relvar_L={sl} slope_relvar_E={se}\n"));
        }
        s.push_str(RodSummary::CSV_HEADER);
        s.push('\n');
        for r in &rows {
            s.push_str(&r.csv_row());
            s.push('\n');
        }
        out.write(s.as_bytes())
    }
}

/// Unit of a scan column, from its name.
fn scan_unit(col: &str) -> &'static str {
    let (head, tail) = col.split_once('_').unwrap_or((col, ""));
    // err_ carries its component's unit; rel_, norm_ and sig_ are ratios
    let quantity = if head == "err" { tail } else { head };
    match quantity {
        "t" => "time",
        "Q" | "dQ" => "length",
        "P" | "dP" => "momentum",
        _ => "-",
    }
}

fn scan_columns() -> String {
    LimitScanReport::CSV_HEADER.split(',').map(|c| format!("{c} [{}]", scan_unit(c))).collect::<Vec<_>>().join(", ")
}

fn scan(cfg: &RunConfig) -> Result<(), CliError> {
    let base = PacketParams::new(cfg.or("Q", 0.0)?, cfg.or("P", 0.0)?, cfg.or("dQ", 0.5)?, cfg.or("dP", 1.0)?)?;
    let base = finish_params(cfg, base)?;
    let pot = potential(cfg)?;
    let scales = cfg.list("scales")?.unwrap_or_else(|| vec![1.0, 2.0, 4.0, 8.0]);
    let probe: Option<Vec<f64>> = cfg.list("probe-times")?;
    let settings = ScanSettings {
        dt: cfg.or("dt", ScanSettings::default().dt)?,
        gh_order: cfg.or("gh-order", ScanSettings::default().gh_order)?,
        spectrum_tol: cfg.or("tol", ScanSettings::default().spectrum_tol)?,
        ..ScanSettings::default()
    };
    let bound = cfg.or("escape-bound", 1000.0)?;
    let pilot_n = cfg.or("pilot-samples", 1000usize)?;
    let pilot_t = cfg.or("pilot-t-max", 20.0)?;
    let seed = cfg.or("seed", 1u64)?;
    let summary_path = cfg.path("summary").or_else(|| cfg.path("out").map(|p| p.with_extension("json")));
    let out = output(cfg, "csv")?;
    if out.json {
        return Err(CliError::Config("`scan` writes CSV plus a JSON summary; `format` must be csv".into()));
    }
    let widest = base.scaled_spreads(scales.iter().copied().fold(f64::MIN, f64::max))?;
    let t_esc = pilot_escape_time(&widest, &pot, pilot_n, seed, bound, pilot_t)?;
    let probe_times = match probe {
        Some(p) => p,
        None => vec![0.5 * t_esc.unwrap_or(pilot_t)],
    };
    if let Some(t) = t_esc {
        if let Some(late) = probe_times.iter().find(|&&p| p > 0.5 * t) {
            eprintln!("mepack: warning: probe time {late} exceeds half the pilot escape time {t}");
        }
    }
    let rep = limit_scan(&base, &pot, &probe_times, &scales, &settings)?;
    let control = pot.class() != PotentialClass::Higher;

    let mut s = csv_preamble(&scan_columns(), &cfg.echo());
    s.push_str(&format!(
        "# pilot_escape_time={} probe_times={}\n",
        t_esc.map_or("none".to_string(), |t| t.to_string()),
        probe_times.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(";")
    ));
    for (scale, msg) in &rep.failures {
        s.push_str(&format!("# failed s={scale}: {msg}\n"));
    }
    s.push_str(LimitScanReport::CSV_HEADER);
    s.push('\n');
    for row in rep.csv_rows() {
        s.push_str(&row);
        s.push('\n');
    }
    out.write(s.as_bytes())?;

    let mut summary = rep.to_json();
    summary["meta"] = cfg.echo_json();
    summary["pilot_escape_time"] = json!(t_esc);
    summary["quadratic_control"] = json!(control);
    summary["control_pass"] = json!(!control || !rep.any_significant());
    summary["diagnostics_pass"] = json!(rep.failures.is_empty());
    if let Some(p) = &summary_path {
        write_atomic(p, &json_bytes(&summary))?;
    }

    if !rep.failures.is_empty() {
        let (s, msg) = &rep.failures[0];
        return Err(CliError::Numerical(format!("{} scale(s) failed; first at s={s}: {msg}", rep.failures.len())));
    }
    if control && rep.any_significant() {
        return Err(CliError::Numerical("quadratic potential shows a significant engine difference".into()));
    }
    Ok(())
}

fn moments(cfg: &RunConfig) -> Result<(), CliError> {
    let q = cfg.required("Q")?;
    let dq = cfg.required("dQ")?;
    let dp = cfg.required("dP")?;
    let hbar = cfg.or("hbar", 1.0)?;
    let out = output(cfg, "csv")?;
    let pk = PacketParams::new(q, 0.0, dq, dp)?.with_hbar(hbar)?;
    let rec = cubic_moment_check(&pk)?;
    if out.json {
        let mut v = serde_json::to_value(rec).expect("record serializes");
        v["meta"] = cfg.echo_json();
        v["rel_quadrature_vs_classical"] = json!(rec.quadrature_vs_classical());
        v["rel_quadrature_vs_corrected"] = json!(rec.quadrature_vs_corrected());
        out.write(&json_bytes(&v))
    } else {
        let mut s = csv_preamble(
            "Q [length], dQ [length], nu [-], classical/corrected/quadrature/quadrature_error [length^6], \
             relative differences [-]",
            &cfg.echo(),
        );
        s.push_str(SixthMomentRecord::CSV_HEADER);
        s.push('\n');
        s.push_str(&rec.csv_row());
        s.push('\n');
        out.write(s.as_bytes())
    }
}
