use std::fmt;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    FvSim,
    NbbmSim,
    NbrwSim,
    BbmMckean,
    KppSolve,
    CondevSolve,
    DrSolve,
    DrrwSolve,
    QsdEval,
    LevyAnalyze,
    ChainQsd,
    CorrespondenceReport,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::FvSim => "fv-sim",
            Command::NbbmSim => "nbbm-sim",
            Command::NbrwSim => "nbrw-sim",
            Command::BbmMckean => "bbm-mckean",
            Command::KppSolve => "kpp-solve",
            Command::CondevSolve => "condev-solve",
            Command::DrSolve => "dr-solve",
            Command::DrrwSolve => "drrw-solve",
            Command::QsdEval => "qsd-eval",
            Command::LevyAnalyze => "levy-analyze",
            Command::ChainQsd => "chain-qsd",
            Command::CorrespondenceReport => "correspondence-report",
        }
    }

    /// Commands that draw random numbers.
    pub fn is_simulation(&self) -> bool {
        matches!(
            self,
            Command::FvSim | Command::NbbmSim | Command::NbrwSim | Command::BbmMckean | Command::CorrespondenceReport
        )
    }
}

/// One experiment: a command, its seed and a command-specific `[params]`
/// table. Unknown keys are rejected at both levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "schema_default")]
    pub schema_version: u32,
    pub command: Command,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub params: toml::Table,
}

fn schema_default() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Deserialize)]
struct ManifestEcho {
    config: serde_json::Value,
}

impl ExperimentConfig {
    /// Parses TOML, or a JSON manifest (by extension) whose `config` field
    /// holds the original document.
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let cfg: Self = if path.extension().is_some_and(|e| e == "json") {
            let echo: ManifestEcho =
                serde_json::from_str(text).map_err(|e| ConfigError(format!("manifest: {e}")))?;
            serde_json::from_value(echo.config).map_err(|e| ConfigError(format!("manifest config: {e}")))?
        } else {
            toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?
        };
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(ConfigError(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn params<T: DeserializeOwned>(&self) -> Result<T, ConfigError> {
        toml::Value::Table(self.params.clone())
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError(format!("[params] for {}: {}", self.command.name(), e.message())))
    }
}
