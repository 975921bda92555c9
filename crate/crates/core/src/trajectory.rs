//! Moment trajectories `(Q(t), P(t), ΔQ(t), ΔP(t))` and their CSV/JSON forms.

use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

/// The four tracked coordinates of a fuzzy state.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PacketState {
    pub q: f64,
    pub p: f64,
    pub dq: f64,
    pub dp: f64,
}

impl PacketState {
    pub fn as_array(&self) -> [f64; 4] {
        [self.q, self.p, self.dq, self.dp]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self { q: a[0], p: a[1], dq: a[2], dp: a[3] }
    }
}

pub const COMPONENT_NAMES: [&str; 4] = ["Q", "P", "dQ", "dP"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryKind {
    Classical,
    Quantum,
    Exact,
}

impl fmt::Display for TrajectoryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrajectoryKind::Classical => "classical",
            TrajectoryKind::Quantum => "quantum",
            TrajectoryKind::Exact => "exact",
        })
    }
}

/// Solver settings that produced a trajectory.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SolverMeta {
    pub scheme: String,
    pub dt: Option<f64>,
    pub samples: Option<usize>,
    pub grid_points: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub kind: TrajectoryKind,
    pub times: Vec<f64>,
    pub states: Vec<PacketState>,
    /// Statistical standard errors per time, when the solver has them.
    pub std_errors: Option<Vec<PacketState>>,
    pub meta: SolverMeta,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn component(&self, c: usize) -> Vec<f64> {
        self.states.iter().map(|s| s.as_array()[c]).collect()
    }

    pub fn final_state(&self) -> Option<PacketState> {
        self.states.last().copied()
    }

    /// CSV with a `#` column/unit line, `#`-prefixed metadata lines, a
    /// header row and one row per time. Floats use shortest round-trip formatting,
    /// so identical trajectories give identical bytes.
    pub fn write_csv<W: Write>(&self, mut w: W, metadata: &[String]) -> io::Result<()> {
        let with_err = self.std_errors.is_some();
        if with_err {
            writeln!(
                w,
                "# columns: t [time], Q [length], P [momentum], dQ [length], dP [momentum], \
                 se_Q [length], se_P [momentum], se_dQ [length], se_dP [momentum]"
            )?;
        } else {
            writeln!(w, "# columns: t [time], Q [length], P [momentum], dQ [length], dP [momentum]")?;
        }
        for line in metadata {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "# kind={} scheme={}", self.kind, self.meta.scheme)?;
        if with_err {
            writeln!(w, "t,Q,P,dQ,dP,se_Q,se_P,se_dQ,se_dP")?;
        } else {
            writeln!(w, "t,Q,P,dQ,dP")?;
        }
        for (i, (t, s)) in self.times.iter().zip(&self.states).enumerate() {
            write!(w, "{},{}", num(*t), row(s))?;
            if let Some(errs) = &self.std_errors {
                let e = errs[i];
                write!(w, ",{}", row(&e))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// JSON object `{ "meta": {...}, "kind", "t", "Q", "P", "dQ", "dP" }`.
    pub fn to_json(&self, extra_meta: serde_json::Value) -> serde_json::Value {
        let mut meta = serde_json::to_value(&self.meta).expect("meta serializes");
        if let (Some(m), serde_json::Value::Object(extra)) = (meta.as_object_mut(), extra_meta) {
            m.extend(extra);
        }
        let mut obj = serde_json::json!({
            "meta": meta,
            "kind": self.kind,
            "t": self.times,
            "Q": self.component(0),
            "P": self.component(1),
            "dQ": self.component(2),
            "dP": self.component(3),
        });
        if let Some(errs) = &self.std_errors {
            let col = |c: usize| errs.iter().map(|e| e.as_array()[c]).collect::<Vec<_>>();
            obj["se_Q"] = col(0).into();
            obj["se_P"] = col(1).into();
            obj["se_dQ"] = col(2).into();
            obj["se_dP"] = col(3).into();
        }
        obj
    }
}

/// Shortest round-trip text of `x`, in exponent form when that is shorter.
pub fn num(x: f64) -> String {
    let plain = x.to_string();
    let exp = format!("{x:e}");
    if exp.len() < plain.len() {
        exp
    } else {
        plain
    }
}

fn row(s: &PacketState) -> String {
    s.as_array().iter().map(|x| num(*x)).collect::<Vec<_>>().join(",")
}

/// Checks that a requested time grid is finite, non-negative and ascending.
pub(crate) fn validate_times(times: &[f64]) -> crate::Result<()> {
    if times.is_empty() {
        return Err(crate::Error::InvalidParameter { name: "times", reason: "empty time grid".into() });
    }
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(crate::Error::InvalidParameter {
            name: "times",
            reason: "times must be finite and non-negative".into(),
        });
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(crate::Error::InvalidParameter { name: "times", reason: "times must be ascending".into() });
    }
    Ok(())
}

/// `n + 1` evenly spaced times on `[0, t_max]`.
pub fn uniform_times(t_max: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| t_max * i as f64 / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Trajectory {
        Trajectory {
            kind: TrajectoryKind::Exact,
            times: vec![0.0, 0.5],
            states: vec![
                PacketState { q: 1.0, p: 0.0, dq: 1.0, dp: 1.0 },
                PacketState { q: 0.875, p: -0.5, dq: 1.0, dp: 1.0 },
            ],
            std_errors: None,
            meta: SolverMeta { scheme: "closed-form".into(), ..Default::default() },
        }
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        sample().write_csv(&mut buf, &["mepack test".into()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert!(lines[0].starts_with("# columns: t [time]"));
        assert_eq!(lines[1], "# mepack test");
        assert_eq!(lines[3], "t,Q,P,dQ,dP");
        assert_eq!(lines[5], "0.5,0.875,-0.5,1,1");
    }

    #[test]
    fn json_has_meta_block() {
        let j = sample().to_json(serde_json::json!({"version": "x"}));
        assert_eq!(j["meta"]["scheme"], "closed-form");
        assert_eq!(j["meta"]["version"], "x");
        assert_eq!(j["kind"], "exact");
        assert_eq!(j["Q"][1], 0.875);
    }

    #[test]
    fn time_grid_validation() {
        assert!(validate_times(&[0.0, 1.0, 1.0, 2.0]).is_ok());
        assert!(validate_times(&[0.0, 2.0, 1.0]).is_err());
        assert!(validate_times(&[]).is_err());
        assert_eq!(uniform_times(2.0, 4), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
    }
}
