use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use eqsdp::framework1::Schedule;
use eqsdp::io::InstanceFile;
use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct InstanceSummary {
    pub kind: String,
    pub dims: Vec<usize>,
    pub digest: String,
}

impl InstanceSummary {
    pub fn of(file: &InstanceFile) -> Self {
        Self {
            kind: file.kind.name().to_string(),
            dims: file.dims.clone(),
            digest: file.digest(),
        }
    }
}

/// The update schedule, reproducible from `(delta, width, dimension)` alone.
#[derive(Clone, Debug, Serialize)]
pub struct Parameters {
    pub delta: f64,
    pub width: f64,
    pub epsilon: f64,
    pub rounds: u64,
    pub dimension: usize,
}

impl From<&Schedule> for Parameters {
    fn from(s: &Schedule) -> Self {
        Self {
            delta: s.delta,
            width: s.width,
            epsilon: s.epsilon,
            rounds: s.rounds,
            dimension: s.dimension,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeSummary {
    pub phase: String,
    pub guess: f64,
    pub verdict: String,
    pub value: f64,
    pub witness_objective: f64,
    pub rounds_executed: usize,
    pub parameters: Parameters,
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleComparison {
    pub method: String,
    pub solver_value: f64,
    pub oracle_value: f64,
    pub oracle_gap: f64,
    /// Absent for sign comparisons.
    pub difference: Option<f64>,
    pub tolerance: Option<f64>,
    pub agrees: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Phase {
    pub name: String,
    pub millis: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Timings {
    pub wall_millis: f64,
    pub phases: Vec<Phase>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub command: String,
    pub instance: InstanceSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parameters: Option<Parameters>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rounds_executed: Option<usize>,
    pub values: BTreeMap<String, f64>,
    pub verdict: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub probes: Vec<ProbeSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub oracle: Vec<OracleComparison>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

impl RunReport {
    pub fn new(command: &str, instance: InstanceSummary) -> Self {
        Self {
            command: command.to_string(),
            instance,
            parameters: None,
            rounds_executed: None,
            values: BTreeMap::new(),
            verdict: String::new(),
            probes: Vec::new(),
            oracle: Vec::new(),
            timings: None,
        }
    }

    pub fn value(&mut self, name: &str, v: f64) {
        self.values.insert(name.to_string(), v);
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let mut rows: Vec<(String, String)> = vec![
            ("command".into(), self.command.clone()),
            ("kind".into(), self.instance.kind.clone()),
            ("dims".into(), join(&self.instance.dims)),
            ("digest".into(), self.instance.digest.clone()),
        ];
        if let Some(p) = &self.parameters {
            rows.push(("delta".into(), p.delta.to_string()));
            rows.push(("width".into(), p.width.to_string()));
            rows.push(("epsilon".into(), p.epsilon.to_string()));
            rows.push(("rounds".into(), p.rounds.to_string()));
            rows.push(("dimension".into(), p.dimension.to_string()));
        }
        if let Some(r) = self.rounds_executed {
            rows.push(("rounds_executed".into(), r.to_string()));
        }
        for (k, v) in &self.values {
            rows.push((k.clone(), number(*v)));
        }
        for (i, p) in self.probes.iter().enumerate() {
            rows.push((
                format!("probe[{i}]"),
                format!(
                    "{} guess {} {} value {} witness {} rounds {}",
                    p.phase, p.guess, p.verdict, p.value, p.witness_objective, p.parameters.rounds
                ),
            ));
        }
        for o in &self.oracle {
            rows.push((
                format!("oracle.{}", o.method),
                match (o.difference, o.tolerance) {
                    (Some(d), Some(t)) => format!(
                        "{} vs solver {} (diff {}, tolerance {}) {}",
                        number(o.oracle_value),
                        number(o.solver_value),
                        number(d),
                        number(t),
                        agreement(o.agrees)
                    ),
                    _ => format!(
                        "{} vs solver {} {}",
                        number(o.oracle_value),
                        number(o.solver_value),
                        agreement(o.agrees)
                    ),
                },
            ));
        }
        rows.push(("verdict".into(), self.verdict.clone()));
        if let Some(t) = &self.timings {
            rows.push(("wall_ms".into(), format!("{:.3}", t.wall_millis)));
            for p in &t.phases {
                rows.push((format!("time.{}", p.name), format!("{:.3}", p.millis)));
            }
        }
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v}");
        }
        out
    }
}

fn number(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-4 || v.abs() >= 1e9) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

fn agreement(agrees: bool) -> &'static str {
    if agrees {
        "agrees"
    } else {
        "DISAGREES"
    }
}

fn join(dims: &[usize]) -> String {
    dims.iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Named phase timer; nothing is recorded in deterministic mode.
pub struct Clock {
    start: Instant,
    phases: Vec<(String, Duration)>,
    enabled: bool,
}

impl Clock {
    pub fn new(enabled: bool) -> Self {
        Self {
            start: Instant::now(),
            phases: Vec::new(),
            enabled,
        }
    }

    pub fn time<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.phases.push((name.to_string(), t.elapsed()));
        out
    }

    pub fn finish(self) -> Option<Timings> {
        self.enabled.then(|| Timings {
            wall_millis: self.start.elapsed().as_secs_f64() * 1e3,
            phases: self
                .phases
                .into_iter()
                .map(|(name, d)| Phase {
                    name,
                    millis: d.as_secs_f64() * 1e3,
                })
                .collect(),
        })
    }
}
