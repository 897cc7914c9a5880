//! Scenario files and the built-in scenarios.

use std::fmt;
use std::path::Path;

use ringphs::model::ModelParams;
use ringphs::sde::SimConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug)]
pub enum ConfigError {
    Io(std::io::Error),
    /// TOML syntax or schema error; the message carries line and key.
    Parse(String),
    /// A value out of range; `field` is the dotted path.
    Validation { field: String, reason: String },
    UnknownScenario(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Io(e) => write!(f, "cannot read config: {e}"),
            Self::Parse(msg) => write!(f, "config parse error: {msg}"),
            Self::Validation { field, reason } => write!(f, "invalid config value {field}: {reason}"),
            Self::UnknownScenario(name) => {
                write!(f, "unknown scenario {name:?} (built-ins: {})", BUILTIN_NAMES.join(", "))
            }
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Artifact {
    Trajectory,
    Stats,
    Acf,
    Histograms,
    AnalyticMoments,
    LimitDistribution,
    ValidationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub n_agents: usize,
    pub ring_length: f64,
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
}

fn default_kappa() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub n_steps: u64,
    #[serde(default)]
    pub seed: u64,
    /// Trajectory rows are written every `thinning` steps.
    #[serde(default = "default_thinning")]
    pub thinning: u64,
    /// Observable series (ACF, time averages) are sampled every `series_every` steps.
    #[serde(default = "default_series_every")]
    pub series_every: u64,
    /// Independent replicas for ensemble checks.
    #[serde(default = "default_replicas")]
    pub replicas: u32,
}

fn default_dt() -> f64 {
    1e-3
}

fn default_thinning() -> u64 {
    1000
}

fn default_series_every() -> u64 {
    10
}

fn default_replicas() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsSection {
    #[serde(default)]
    pub artifacts: Vec<Artifact>,
}

impl Default for OutputsSection {
    fn default() -> Self {
        Self {
            artifacts: vec![Artifact::ValidationReport],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub model: ModelSection,
    pub sim: SimSection,
    #[serde(default)]
    pub outputs: OutputsSection,
}

pub const BUILTIN_NAMES: [&str; 3] = ["s1", "s2", "s3"];

impl Scenario {
    /// s1: overdamped (alpha = 0.1); s2: alpha = 1; s3: quartic potential.
    pub fn builtin(name: &str) -> Option<Self> {
        let (alpha, kappa) = match name {
            "s1" => (0.1, 2.0),
            "s2" => (1.0, 2.0),
            "s3" => (1.0, 4.0),
            _ => return None,
        };
        Some(Self {
            name: name.to_string(),
            model: ModelSection {
                n_agents: 20,
                ring_length: 501.0,
                alpha,
                beta: 1.0,
                sigma: 1.0,
                kappa,
            },
            sim: SimSection {
                dt: 1e-3,
                n_steps: 2_000_000,
                seed: 1,
                thinning: 1000,
                series_every: 10,
                replicas: 16,
            },
            outputs: OutputsSection {
                artifacts: vec![
                    Artifact::Trajectory,
                    Artifact::Stats,
                    Artifact::Acf,
                    Artifact::Histograms,
                    Artifact::AnalyticMoments,
                    Artifact::LimitDistribution,
                    Artifact::ValidationReport,
                ],
            },
        })
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(ConfigError::Io)?;
        Self::from_toml(&text)
    }

    /// A built-in name, or otherwise a path to a TOML file.
    pub fn resolve(name_or_path: &str) -> Result<Self, ConfigError> {
        if let Some(s) = Self::builtin(name_or_path) {
            return Ok(s);
        }
        if Path::new(name_or_path).is_file() {
            return Self::load(name_or_path);
        }
        Err(ConfigError::UnknownScenario(name_or_path.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.params()?;
        self.sim_config(0)?;
        let bad = |field: &str, reason: &str| {
            Err(ConfigError::Validation {
                field: field.to_string(),
                reason: reason.to_string(),
            })
        };
        if self.sim.series_every < 1 {
            return bad("sim.series_every", "must be >= 1");
        }
        if self.sim.replicas < 1 {
            return bad("sim.replicas", "must be >= 1");
        }
        Ok(())
    }

    pub fn params(&self) -> Result<ModelParams, ConfigError> {
        let m = &self.model;
        ModelParams::new(m.n_agents, m.ring_length, m.alpha, m.beta, m.sigma, m.kappa).map_err(|e| match e {
            ringphs::Error::InvalidParameter { field, reason } => ConfigError::Validation {
                field: format!("model.{field}"),
                reason,
            },
            other => ConfigError::Validation {
                field: "model".into(),
                reason: other.to_string(),
            },
        })
    }

    pub fn sim_config(&self, replica: u32) -> Result<SimConfig, ConfigError> {
        let config = SimConfig::new(self.sim.dt, self.sim.n_steps, self.sim.seed)
            .with_thinning(self.sim.thinning)
            .with_replica(replica);
        let params = self.params()?;
        config.validate(&params).map_err(|e| match e {
            ringphs::Error::InvalidParameter { field, reason } => ConfigError::Validation {
                field: format!("sim.{field}"),
                reason,
            },
            other => ConfigError::Validation {
                field: "sim".into(),
                reason: other.to_string(),
            },
        })?;
        Ok(config)
    }

    pub fn wants(&self, artifact: Artifact) -> bool {
        self.outputs.artifacts.contains(&artifact)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_carry_the_reference_parameters() {
        for name in BUILTIN_NAMES {
            let s = Scenario::builtin(name).unwrap();
            let p = s.params().unwrap();
            assert_eq!((p.n_agents, p.ring_length, p.beta, p.sigma), (20, 501.0, 1.0, 1.0));
            assert_eq!(s.sim.dt, 1e-3);
        }
        let s1 = Scenario::builtin("s1").unwrap().params().unwrap();
        assert_eq!((s1.alpha, s1.kappa), (0.1, 2.0));
        let s3 = Scenario::builtin("s3").unwrap().params().unwrap();
        assert_eq!((s3.alpha, s3.kappa), (1.0, 4.0));
        assert!(Scenario::builtin("s4").is_none());
    }

    #[test]
    fn toml_round_trip() {
        for name in BUILTIN_NAMES {
            let s = Scenario::builtin(name).unwrap();
            assert_eq!(Scenario::from_toml(&s.to_toml()).unwrap(), s);
        }
    }
}
