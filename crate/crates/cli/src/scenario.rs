//! Scenario documents: parsing, defaults, validation and canonical form.

use std::fmt;

use parfee::model::validate_system;
use parfee::simulate::OrderingPolicy;
use parfee::{QueueSpec, SystemSpec, Violation};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const DEFAULT_HORIZON: f64 = 1e5;
pub const DEFAULT_REPLICATIONS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub capacity: f64,
    pub queues: Vec<QueueSpec>,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<OrderingPolicy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// Filled with 10% of the horizon when absent.
    #[serde(default)]
    pub warmup: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replications")]
    pub replications: usize,
}

fn default_horizon() -> f64 {
    DEFAULT_HORIZON
}

fn default_replications() -> usize {
    DEFAULT_REPLICATIONS
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            horizon: DEFAULT_HORIZON,
            warmup: None,
            seed: 0,
            replications: DEFAULT_REPLICATIONS,
        }
    }
}

impl SimSection {
    pub fn warmup(&self) -> f64 {
        self.warmup.unwrap_or(0.1 * self.horizon)
    }
}

/// One-parameter sweep: `steps` evenly spaced values from `from` to `to`
/// (inclusive) written at the document path `path`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub path: String,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

impl SweepSection {
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.from];
        }
        (0..self.steps)
            .map(|k| self.from + (self.to - self.from) * k as f64 / (self.steps - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioError {
    /// Not valid JSON.
    Malformed(String),
    /// Valid JSON that does not fit the schema.
    Schema { path: String, message: String },
    /// Values outside their domains.
    Invalid(Vec<Violation>),
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioError::Malformed(m) => write!(f, "malformed scenario: {m}"),
            ScenarioError::Schema { path, message } => {
                write!(f, "schema error at {path}: {message}")
            }
            ScenarioError::Invalid(vs) => {
                write!(f, "invalid scenario:")?;
                for v in vs {
                    write!(f, "\n  {v}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ScenarioError {}

fn violation(path: &str, message: impl Into<String>) -> Violation {
    Violation {
        path: path.to_string(),
        message: message.into(),
    }
}

impl Scenario {
    pub fn system(&self) -> SystemSpec {
        SystemSpec::new(self.queues.clone(), self.capacity)
    }

    /// Pretty JSON with every default spelled out.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialises") + "\n"
    }

    /// SHA-256 of the compact canonical JSON, hex encoded.
    pub fn hash(&self) -> String {
        let compact = serde_json::to_string(self).expect("scenario serialises");
        hex::encode(Sha256::digest(compact.as_bytes()))
    }

    fn fill_defaults(&mut self) {
        if self.sim.warmup.is_none() {
            self.sim.warmup = Some(0.1 * self.sim.horizon);
        }
    }

    fn violations(&self) -> Vec<Violation> {
        let mut out = validate_system(&self.system());
        let sim = &self.sim;
        if !(sim.horizon > 0.0 && sim.horizon.is_finite()) {
            out.push(violation("sim.horizon", "horizon must be positive"));
        }
        let warmup = sim.warmup();
        if !(warmup >= 0.0 && warmup < sim.horizon) {
            out.push(violation("sim.warmup", "warmup must lie in [0, horizon)"));
        }
        if sim.replications == 0 {
            out.push(violation(
                "sim.replications",
                "replications must be at least 1",
            ));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.steps == 0 {
                out.push(violation("sweep.steps", "steps must be at least 1"));
            }
            if !(sweep.from.is_finite() && sweep.to.is_finite()) {
                out.push(violation("sweep", "from and to must be finite"));
            }
            let mut doc = serde_json::to_value(self).expect("scenario serialises");
            if lookup_mut(&mut doc, &sweep.path).is_none() {
                out.push(violation(
                    "sweep.path",
                    format!("no numeric field at `{}`", sweep.path),
                ));
            }
        }
        out
    }

    /// Copy of the scenario with the number at `path` replaced by `value`,
    /// re-validated.
    pub fn with_value_at(&self, path: &str, value: f64) -> Result<Scenario, ScenarioError> {
        let mut doc = serde_json::to_value(self).expect("scenario serialises");
        let slot = lookup_mut(&mut doc, path).ok_or_else(|| ScenarioError::Schema {
            path: path.to_string(),
            message: "no numeric field here".into(),
        })?;
        *slot = serde_json::Value::from(value);
        let mut s: Scenario = serde_json::from_value(doc).map_err(|e| ScenarioError::Schema {
            path: path.to_string(),
            message: e.to_string(),
        })?;
        s.fill_defaults();
        let violations = s.violations();
        if violations.is_empty() {
            Ok(s)
        } else {
            Err(ScenarioError::Invalid(violations))
        }
    }
}

/// Resolves paths like `capacity` or `queues[0].demand.max_value` to a
/// numeric leaf.
fn lookup_mut<'a>(doc: &'a mut serde_json::Value, path: &str) -> Option<&'a mut serde_json::Value> {
    let mut node = doc;
    for part in path.split('.') {
        let (key, indices) = match part.find('[') {
            Some(at) => (&part[..at], &part[at..]),
            None => (part, ""),
        };
        if !key.is_empty() {
            node = node.get_mut(key)?;
        }
        for raw in indices.split('[').filter(|s| !s.is_empty()) {
            let index: usize = raw.strip_suffix(']')?.parse().ok()?;
            node = node.get_mut(index)?;
        }
    }
    node.is_number().then_some(node)
}

/// Parses, fills defaults and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if inner.is_syntax() || inner.is_eof() {
            ScenarioError::Malformed(inner.to_string())
        } else {
            ScenarioError::Schema {
                path,
                message: inner.to_string(),
            }
        }
    })?;
    scenario.fill_defaults();
    let violations = scenario.violations();
    if violations.is_empty() {
        Ok(scenario)
    } else {
        Err(ScenarioError::Invalid(violations))
    }
}
