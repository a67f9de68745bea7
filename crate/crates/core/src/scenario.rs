//! Uniform dispatch over the four simulators.

use alloc::collections::BTreeMap;
use alloc::string::String;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evidence::{run_evidence_method, EvidenceMethod, EvidenceParams};
use crate::feature::{run_feature_method, FeatureMethod, FeatureParams};
use crate::openset::{run_openset_method, OpenSetMethod, OpenSetParams};
use crate::routine::{run_routine_method, RoutineMethod, RoutineParams};

/// Metric name → value for one (method, round) cell.
pub type MetricMap = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioId {
    Feature,
    Openset,
    Routine,
    Evidence,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("unknown scenario `{0}` (expected feature, openset, routine or evidence)")]
    UnknownScenario(String),
    #[error("scenario `{scenario}` has no method `{method}`")]
    UnknownMethod { scenario: &'static str, method: String },
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 4] = [
        ScenarioId::Feature,
        ScenarioId::Openset,
        ScenarioId::Routine,
        ScenarioId::Evidence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioId::Feature => "feature",
            ScenarioId::Openset => "openset",
            ScenarioId::Routine => "routine",
            ScenarioId::Evidence => "evidence",
        }
    }

    pub fn parse(s: &str) -> Result<Self, ScenarioError> {
        ScenarioId::ALL
            .iter()
            .copied()
            .find(|id| id.name() == s)
            .ok_or_else(|| ScenarioError::UnknownScenario(s.into()))
    }

    /// Method keys in table row order.
    pub fn methods(self) -> &'static [&'static str] {
        match self {
            ScenarioId::Feature => &["fixed", "random", "proposed"],
            ScenarioId::Openset => &["closed_set", "open_set_only", "random", "proposed"],
            ScenarioId::Routine => &["fixed", "random", "rl_like", "proposed"],
            ScenarioId::Evidence => &["no_improvement", "memory_only", "proposed"],
        }
    }

    pub fn method_label(self, key: &str) -> Option<&'static str> {
        let labels: &[&str] = match self {
            ScenarioId::Feature => &["Fixed feature", "Random expansion", "Proposed"],
            ScenarioId::Openset => &["Closed-set", "Open-set only", "Random expansion", "Proposed"],
            ScenarioId::Routine => &["Fixed routine", "Random search", "RL-like", "Proposed"],
            ScenarioId::Evidence => &["No improvement", "Memory-only", "Proposed"],
        };
        self.methods().iter().position(|m| *m == key).map(|i| labels[i])
    }

    /// Every recorded metric key; a record is complete iff it has all of
    /// them. Table columns come first, in order.
    pub fn metrics(self) -> &'static [&'static str] {
        match self {
            ScenarioId::Feature => &["acc", "disc", "false", "steps", "cost"],
            ScenarioId::Openset => &["unk", "new", "false", "model", "forget"],
            ScenarioId::Routine => &["succ", "len", "time", "comp", "fail"],
            ScenarioId::Evidence => &["useful", "cost", "repeat", "think", "scope"],
        }
    }

    /// Metric keys shown as table columns, in column order. The feature
    /// evidence cost is recorded and charted but not tabulated.
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            ScenarioId::Feature => &self.metrics()[..4],
            _ => self.metrics(),
        }
    }

    /// Column headings parallel to [`ScenarioId::columns`].
    pub fn column_labels(self) -> &'static [&'static str] {
        match self {
            ScenarioId::Feature => &["Acc.", "Disc.", "False", "Steps"],
            ScenarioId::Openset => &["Unk.", "New", "False", "Model", "Forget"],
            ScenarioId::Routine => &["Succ.", "Len.", "Time", "Comp.", "Fail"],
            ScenarioId::Evidence => &["Useful", "Cost", "Repeat", "Think", "Scope"],
        }
    }

    /// Short heading of any recorded metric.
    pub fn metric_label(self, key: &str) -> Option<&'static str> {
        if self == ScenarioId::Feature && key == "cost" {
            return Some("Cost");
        }
        self.columns().iter().position(|k| *k == key).map(|i| self.column_labels()[i])
    }
}

impl core::fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// Parameter overrides for every scenario; omitted fields keep defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    pub feature: FeatureParams,
    pub openset: OpenSetParams,
    pub routine: RoutineParams,
    pub evidence: EvidenceParams,
}

fn pick<M: Copy>(all: &[M], keys: &[&str], method: &str) -> Option<M> {
    keys.iter().position(|k| *k == method).map(|i| all[i])
}

/// Runs one cell. The result depends only on the arguments.
pub fn run_method(
    scenario: ScenarioId,
    method: &str,
    params: &ScenarioParams,
    seed: u64,
) -> Result<MetricMap, ScenarioError> {
    let unknown = || ScenarioError::UnknownMethod {
        scenario: scenario.name(),
        method: method.into(),
    };
    let keys = scenario.methods();
    Ok(match scenario {
        ScenarioId::Feature => {
            let m = pick(&FeatureMethod::ALL, keys, method).ok_or_else(unknown)?;
            run_feature_method(m, &params.feature, seed).metrics()
        }
        ScenarioId::Openset => {
            let m = pick(&OpenSetMethod::ALL, keys, method).ok_or_else(unknown)?;
            run_openset_method(m, &params.openset, seed).metrics()
        }
        ScenarioId::Routine => {
            let m = pick(&RoutineMethod::ALL, keys, method).ok_or_else(unknown)?;
            run_routine_method(m, &params.routine, seed).metrics()
        }
        ScenarioId::Evidence => {
            let m = pick(&EvidenceMethod::ALL, keys, method).ok_or_else(unknown)?;
            run_evidence_method(m, &params.evidence, seed).metrics()
        }
    })
}
