//! Experiment configuration and its TOML file form.
//!
//! ```toml
//! scenario = "routine"
//! methods = ["fixed", "proposed"]   # optional, defaults to every method
//! rounds = 30
//! base_seed = 7
//! out = "routine.ndjson"
//!
//! [overrides.routine]
//! k_verify = 5
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use uptodate_core::scenario::ScenarioParams;
use uptodate_core::ScenarioId;

use crate::error::HarnessError;

pub const DEFAULT_ROUNDS: u32 = 30;
pub const DEFAULT_BASE_SEED: u64 = 7;
pub const DEFAULT_OUT: &str = "results.ndjson";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: ScenarioId,
    pub methods: Vec<String>,
    pub rounds: u32,
    pub base_seed: u64,
    pub overrides: ScenarioParams,
    pub out: PathBuf,
}

impl ExperimentConfig {
    /// Every method of `scenario`, default rounds, seed and parameters.
    pub fn new(scenario: ScenarioId, out: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            scenario,
            methods: scenario.methods().iter().map(|m| (*m).to_owned()).collect(),
            rounds: DEFAULT_ROUNDS,
            base_seed: DEFAULT_BASE_SEED,
            overrides: ScenarioParams::default(),
            out: out.into(),
        }
    }

    /// Seed of round `round_index`: `base_seed + round_index`, wrapping.
    pub fn seed_for(&self, round_index: u32) -> u64 {
        self.base_seed.wrapping_add(u64::from(round_index))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.rounds == 0 {
            return Err(HarnessError::InvalidExperiment("rounds must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(HarnessError::InvalidExperiment("method list is empty".into()));
        }
        let known = self.scenario.methods();
        for (i, m) in self.methods.iter().enumerate() {
            if !known.contains(&m.as_str()) {
                return Err(HarnessError::InvalidExperiment(format!(
                    "scenario `{}` has no method `{m}` (expected one of {})",
                    self.scenario,
                    known.join(", ")
                )));
            }
            if self.methods[..i].contains(m) {
                return Err(HarnessError::InvalidExperiment(format!("method `{m}` listed twice")));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self, HarnessError> {
        let file = ConfigFile::from_toml_str(text, origin)?;
        let scenario = file.scenario.ok_or_else(|| HarnessError::Config {
            path: origin.to_path_buf(),
            message: "missing key `scenario`".into(),
        })?;
        let cfg = file.resolve(ExperimentConfig::new(scenario, DEFAULT_OUT));
        cfg.validate()?;
        Ok(cfg)
    }
}

/// The on-disk document. Every key is optional so command-line flags can
/// fill or override it; unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub scenario: Option<ScenarioId>,
    pub methods: Option<Vec<String>>,
    pub rounds: Option<u32>,
    pub base_seed: Option<u64>,
    #[serde(default)]
    pub overrides: ScenarioParams,
    pub out: Option<PathBuf>,
}

impl ConfigFile {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config {
            path: origin.to_path_buf(),
            message: e.to_string().trim_end().to_owned(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text, path)
    }

    /// Fills `base` with whatever this file sets.
    pub fn resolve(self, mut base: ExperimentConfig) -> ExperimentConfig {
        if let Some(m) = self.methods {
            base.methods = m;
        }
        if let Some(r) = self.rounds {
            base.rounds = r;
        }
        if let Some(s) = self.base_seed {
            base.base_seed = s;
        }
        if let Some(o) = self.out {
            base.out = o;
        }
        base.overrides = self.overrides;
        base
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig, HarnessError> {
        ExperimentConfig::from_toml_str(text, Path::new("exp.toml"))
    }

    #[test]
    fn minimal_document_takes_defaults() {
        let cfg = parse("scenario = \"openset\"").unwrap();
        assert_eq!(cfg.rounds, 30);
        assert_eq!(cfg.base_seed, 7);
        assert_eq!(cfg.methods.len(), 4);
        assert_eq!(cfg.out, PathBuf::from("results.ndjson"));
    }

    #[test]
    fn nested_overrides_reach_scenario_params() {
        let cfg = parse(
            "scenario = \"routine\"\nrounds = 3\nmethods = [\"proposed\"]\n\
             [overrides.routine]\nk_verify = 9\n",
        )
        .unwrap();
        assert_eq!(cfg.overrides.routine.k_verify, 9);
        assert_eq!(cfg.methods, vec!["proposed".to_owned()]);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = parse("scenario = \"routine\"\nroundz = 3\n").unwrap_err();
        assert!(err.to_string().contains("roundz"), "{err}");
        let err = parse("scenario = \"routine\"\n[overrides.routine]\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn invalid_experiments_are_rejected() {
        assert!(parse("scenario = \"routine\"\nrounds = 0").is_err());
        assert!(parse("scenario = \"routine\"\nmethods = []").is_err());
        assert!(parse("scenario = \"routine\"\nmethods = [\"closed_set\"]").is_err());
        assert!(parse("scenario = \"routine\"\nmethods = [\"fixed\", \"fixed\"]").is_err());
        assert!(parse("rounds = 2").is_err());
        assert!(parse("scenario = \"weather\"").is_err());
    }

    #[test]
    fn seeds_follow_base_plus_round() {
        let mut cfg = ExperimentConfig::new(ScenarioId::Feature, "x");
        cfg.base_seed = 100;
        assert_eq!(cfg.seed_for(0), 100);
        assert_eq!(cfg.seed_for(29), 129);
        cfg.base_seed = u64::MAX;
        assert_eq!(cfg.seed_for(1), 0);
    }
}
