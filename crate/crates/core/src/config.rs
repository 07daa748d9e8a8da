//! The experiment configuration document (JSON).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::agents::{AgentSpec, TaskSpec};
use crate::backends::BackendConfig;
use crate::error::{Error, Result};
use crate::orchestrator::RunConfig;
use crate::twin::TwinParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub twin: TwinParams,
    pub agents: AgentsSection,
    pub backends: BTreeMap<String, BackendConfig>,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentsSection {
    pub operator: AgentSpec,
    pub operator_task: TaskSpec,
    #[serde(default)]
    pub validator: Option<AgentSpec>,
    #[serde(default)]
    pub reprompter: Option<AgentSpec>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub log: Option<PathBuf>,
    #[serde(default)]
    pub transcript: Option<PathBuf>,
    #[serde(default)]
    pub report: Option<PathBuf>,
}

fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let key = if path == "." {
            "<root>".to_string()
        } else {
            path
        };
        Error::config(key, e.into_inner().to_string())
    })
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

impl ConfigFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = parse_json(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read(path)?)
    }

    pub fn operator_backend(&self) -> Result<&BackendConfig> {
        let name = &self.agents.operator.backend;
        self.backends.get(name).ok_or_else(|| {
            Error::config(
                "agents.operator.backend",
                format!("no backend named {name:?}"),
            )
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.twin.validate()?;
        self.run.validate()?;
        self.agents.operator_task.validate().map_err(|e| {
            Error::config("agents.operator_task.description_template", e.to_string())
        })?;
        let mut names = BTreeMap::new();
        let agents = [
            ("operator", Some(&self.agents.operator)),
            ("validator", self.agents.validator.as_ref()),
            ("reprompter", self.agents.reprompter.as_ref()),
        ];
        for (slot, agent) in agents {
            let Some(agent) = agent else { continue };
            if agent.name.is_empty() {
                return Err(Error::config(
                    format!("agents.{slot}.name"),
                    "must not be empty",
                ));
            }
            if let Some(other) = names.insert(agent.name.clone(), slot) {
                return Err(Error::config(
                    format!("agents.{slot}.name"),
                    format!("{:?} already used by agents.{other}", agent.name),
                ));
            }
            if !self.backends.contains_key(&agent.backend) {
                return Err(Error::config(
                    format!("agents.{slot}.backend"),
                    format!("no backend named {:?}", agent.backend),
                ));
            }
        }
        for (name, backend) in &self.backends {
            backend.validate(&format!("backends.{name}"))?;
        }
        Ok(())
    }
}

/// Reads a standalone twin parameter file.
pub fn load_twin_params(path: &Path) -> Result<TwinParams> {
    twin_params_from_json(&read(path)?)
}

pub fn twin_params_from_json(text: &str) -> Result<TwinParams> {
    let params: TwinParams = parse_json(text).map_err(|e| match e {
        Error::Config { key, message } => Error::config(format!("twin.{key}"), message),
        other => other,
    })?;
    params.validate()?;
    Ok(params)
}
