//! Key/value run configuration: an optional `key = value` file overlaid by
//! command-line flags, with typed, key-naming accessors.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mepack_core::trajectory::num;

use crate::CliError;

/// One configurable key of a subcommand.
pub struct Key {
    pub name: &'static str,
    pub help: &'static str,
}

const fn key(name: &'static str, help: &'static str) -> Key {
    Key { name, help }
}

const OUTPUT: [Key; 2] = [key("out", "output path; stdout when absent"), key("format", "csv or json")];

const PACKET: [Key; 6] = [
    key("Q", "position average [length]"),
    key("P", "momentum average [momentum]"),
    key("dQ", "position spread ΔQ > 0 [length]"),
    key("dP", "momentum spread ΔP > 0 [momentum]"),
    key("hbar", "reduced Planck constant [action] (default 1)"),
    key("v", "phase-space volume unit [action] (default 2π·hbar)"),
];

const POTENTIAL: [Key; 2] =
    [key("V", "power-series coefficients V0,V1,V2,... [energy/length^k]"), key("mu", "mass (default 1)")];

pub struct Command {
    pub name: &'static str,
    pub about: &'static str,
    pub groups: &'static [&'static [Key]],
}

pub const COMMANDS: [Command; 7] = [
    Command {
        name: "packet",
        about: "Describe a packet: fuzziness, entropies, spectrum",
        groups: &[&PACKET, &[key("tol", "spectral tail tolerance (default 1e-10)")], &OUTPUT],
    },
    Command {
        name: "evolve",
        about: "Evolve a packet with one engine and write its trajectory",
        groups: &[
            &PACKET,
            &POTENTIAL,
            &[
                key("engine", "quantum, classical or exact (default quantum)"),
                key("t-max", "final time [time]"),
                key("n-times", "number of output intervals (default 100)"),
                key("dt", "time step (default T_char/2000 quantum, T_char/1000 classical)"),
                key("tol", "spectral tail tolerance (default 1e-10)"),
                key("grid-points", "quantum grid size, power of two (default automatic)"),
                key("q-min", "quantum grid lower edge (default automatic)"),
                key("q-max", "quantum grid upper edge (default automatic)"),
                key("leakage-limit", "edge-band probability abort level (default 1e-6)"),
                key("n-samples", "classical ensemble size (default 100000)"),
                key("seed", "classical sampling seed (default 1)"),
                key("escape-bound", "classical |q| abort level (default none)"),
                key("drift-bound", "classical relative energy drift abort level (default 1e-3)"),
                key("dump", "path for a binary |psi|^2 dump of the final quantum state"),
            ],
            &OUTPUT,
        ],
    },
    Command {
        name: "coincide",
        about: "Compare closed form, quantum and classical runs in a quadratic potential",
        groups: &[
            &PACKET,
            &POTENTIAL,
            &[
                key("t-max", "final time [time]"),
                key("n-times", "number of output intervals (default 200)"),
                key("quantum-dt", "quantum step (default T_char/2000)"),
                key("classical-dt", "classical step (default T_char/1000)"),
                key("n-samples", "classical ensemble size (default 100000)"),
                key("seed", "classical sampling seed (default 1)"),
                key("tol", "spectral tail tolerance (default 1e-12)"),
                key("rel-tol", "quantum relative tolerance (default 1e-6)"),
                key("sigmas", "classical tolerance in standard errors (default 5)"),
            ],
            &OUTPUT,
        ],
    },
    Command {
        name: "maxent",
        about: "Solve the maximum-entropy dual on a phase-space grid",
        groups: &[
            &PACKET,
            &[
                key("nq", "grid cells along q (default 512)"),
                key("np", "grid cells along p (default 512)"),
                key("tol", "residual tolerance (default 1e-10)"),
                key("max-iter", "Newton iteration cap (default 100)"),
                key("trials", "maximality witness perturbations (default 100)"),
                key("seed", "witness seed (default 1)"),
            ],
            &OUTPUT,
        ],
    },
    Command {
        name: "rod",
        about: "Thermodynamics of the harmonic chain",
        groups: &[
            &[
                key("N", "number of phonon modes (links)"),
                key("mu", "bead mass (default 1)"),
                key("kappa", "spring constant (default 1)"),
                key("xi", "equilibrium spacing (default 1)"),
                key("lambda", "inverse temperature multiplier"),
                key("energy", "internal energy; alternative to lambda"),
                key("hbar", "reduced Planck constant (default 1)"),
                key("kB", "Boltzmann constant (default 1)"),
                key("scan-n", "comma-separated mode counts for a scaling table"),
            ],
            &OUTPUT,
        ],
    },
    Command {
        name: "scan",
        about: "Quantum-classical differences at growing spreads",
        groups: &[
            &[
                key("Q", "base position average (default 0)"),
                key("P", "base momentum average (default 0)"),
                key("dQ", "base position spread (default 0.5)"),
                key("dP", "base momentum spread (default 1)"),
                key("hbar", "reduced Planck constant (default 1)"),
            ],
            &POTENTIAL,
            &[
                key("scales", "spread multipliers, ascending (default 1,2,4,8)"),
                key("probe-times", "comparison times (default half the pilot escape time)"),
                key("dt", "shared step of both engines (default 0.025)"),
                key("gh-order", "Gauss-Hermite nodes per axis (default 12)"),
                key("tol", "spectral tail tolerance (default 1e-14)"),
                key("escape-bound", "pilot |q| escape level (default 1000)"),
                key("pilot-samples", "pilot ensemble size (default 1000)"),
                key("pilot-t-max", "pilot horizon (default 20)"),
                key("seed", "pilot seed (default 1)"),
                key("summary", "JSON summary path (default: out with .json extension)"),
            ],
            &OUTPUT,
        ],
    },
    Command {
        name: "moments",
        about: "Sixth position moment: classical, corrected and quadrature values",
        groups: &[
            &[
                key("Q", "position average [length]"),
                key("dQ", "position spread [length]"),
                key("dP", "momentum spread [momentum]"),
                key("hbar", "reduced Planck constant (default 1)"),
            ],
            &OUTPUT,
        ],
    },
];

impl Command {
    pub fn keys(&self) -> impl Iterator<Item = &Key> {
        self.groups.iter().flat_map(|g| g.iter())
    }

    pub fn find(name: &str) -> Option<&'static Command> {
        COMMANDS.iter().find(|c| c.name == name)
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_file(text: &str, source: &Path, command: &Command) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::Config(format!("{}:{}: expected `key = value`, got `{line}`", source.display(), n + 1))
        })?;
        let (k, v) = (k.trim(), v.trim());
        if !command.keys().any(|key| key.name == k) {
            return Err(CliError::Config(format!(
                "{}:{}: unknown key `{k}` for `{}`",
                source.display(),
                n + 1,
                command.name
            )));
        }
        out.insert(k.to_string(), v.to_string());
    }
    Ok(out)
}

/// Resolved values plus a record of every value the run consumed, defaults
/// included, for the metadata echo.
pub struct RunConfig {
    pub command: &'static str,
    values: BTreeMap<String, String>,
    used: RefCell<BTreeMap<String, String>>,
}

impl RunConfig {
    pub fn new(command: &'static str, file: BTreeMap<String, String>, flags: BTreeMap<String, String>) -> Self {
        let mut values = file;
        values.extend(flags);
        Self { command, values, used: RefCell::new(BTreeMap::new()) }
    }

    fn record(&self, key: &str, value: impl Display) {
        let mut text = value.to_string();
        if text.contains(['.', 'e', 'E']) {
            if let Ok(x) = text.parse::<f64>() {
                text = num(x);
            }
        }
        self.used.borrow_mut().insert(key.to_string(), text);
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        self.values
            .get(key)
            .map(|raw| {
                raw.parse::<T>().map_err(|e| CliError::Config(format!("invalid value `{raw}` for `{key}`: {e}")))
            })
            .transpose()
    }

    pub fn required<T: FromStr + Display>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        let v = self.parse(key)?.ok_or_else(|| CliError::Config(format!("missing required key `{key}`")))?;
        self.record(key, &v);
        Ok(v)
    }

    pub fn or<T: FromStr + Display>(&self, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        let v = self.parse(key)?.unwrap_or(default);
        self.record(key, &v);
        Ok(v)
    }

    pub fn optional<T: FromStr + Display>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        let v = self.parse::<T>(key)?;
        if let Some(x) = &v {
            self.record(key, x);
        }
        Ok(v)
    }

    /// Output location; not echoed.
    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.values.get(key).map(PathBuf::from)
    }

    pub fn list(&self, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        let Some(raw) = self.values.get(key) else { return Ok(None) };
        let parsed = raw
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Config(format!("invalid list `{raw}` for `{key}`: {e}")))?;
        if parsed.is_empty() {
            return Err(CliError::Config(format!("empty list for `{key}`")));
        }
        self.record(key, raw);
        Ok(Some(parsed))
    }

    pub fn required_list(&self, key: &str) -> Result<Vec<f64>, CliError> {
        self.list(key)?.ok_or_else(|| CliError::Config(format!("missing required key `{key}`")))
    }

    /// `one of` choice with a default.
    pub fn choice(&self, key: &str, options: &[&str], default: &str) -> Result<String, CliError> {
        let v: String = self.or(key, default.to_string())?;
        if options.contains(&v.as_str()) {
            Ok(v)
        } else {
            Err(CliError::Config(format!("`{key}` must be one of {}, got `{v}`", options.join(", "))))
        }
    }

    /// Metadata lines: artifact version, command, consumed configuration.
    pub fn echo(&self) -> Vec<String> {
        let mut lines = vec![format!("mepack {}", mepack_core::VERSION), format!("command={}", self.command)];
        lines.extend(self.used.borrow().iter().map(|(k, v)| format!("{k}={v}")));
        lines
    }

    pub fn echo_json(&self) -> serde_json::Value {
        serde_json::json!({
            "version": mepack_core::VERSION,
            "command": self.command,
            "config": self.used.borrow().clone(),
        })
    }
}
