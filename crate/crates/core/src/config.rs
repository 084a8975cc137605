//! Run configuration and client construction.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::coverage::DEFAULT_STEP_BUDGET;
use crate::llm::{BrokenClient, HttpClient, LlmClient, LlmConfig, LlmError, OracleClient, Recorder, ReplayClient};
use crate::prompt::{PromptMode, DEFAULT_TOKEN_BUDGET};
use crate::select::DEFAULT_MAX_SELECTED;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClientSpec {
    Live,
    Replay(PathBuf),
    Oracle,
    Broken,
}

impl fmt::Display for ClientSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClientSpec::Live => f.write_str("live"),
            ClientSpec::Replay(dir) => write!(f, "replay:{}", dir.display()),
            ClientSpec::Oracle => f.write_str("scripted:oracle"),
            ClientSpec::Broken => f.write_str("scripted:broken"),
        }
    }
}

impl FromStr for ClientSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(ClientSpec::Live),
            "scripted:oracle" => Ok(ClientSpec::Oracle),
            "scripted:broken" => Ok(ClientSpec::Broken),
            _ => match s.strip_prefix("replay:") {
                Some(dir) if !dir.is_empty() => Ok(ClientSpec::Replay(dir.into())),
                _ => Err(format!(
                    "unknown client `{s}` (expected live, replay:<dir>, scripted:oracle or scripted:broken)"
                )),
            },
        }
    }
}

impl Serialize for ClientSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ClientSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: PromptMode,
    pub client: ClientSpec,
    pub llm: LlmConfig,
    pub max_selected: u32,
    pub no_increase_limit: usize,
    pub repair_attempts: usize,
    /// Client calls allowed per iteration, generation and repair together.
    pub max_calls_per_iteration: usize,
    pub step_budget: u64,
    pub token_budget: usize,
    pub trace_dir: Option<PathBuf>,
    pub history: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: PromptMode::Full,
            client: ClientSpec::Live,
            llm: LlmConfig::default(),
            max_selected: DEFAULT_MAX_SELECTED,
            no_increase_limit: 3,
            repair_attempts: 3,
            max_calls_per_iteration: 32,
            step_budget: DEFAULT_STEP_BUDGET,
            token_budget: DEFAULT_TOKEN_BUDGET,
            trace_dir: None,
            history: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("max_selected", self.max_selected as u64),
            ("no_increase_limit", self.no_increase_limit as u64),
            ("max_calls_per_iteration", self.max_calls_per_iteration as u64),
            ("step_budget", self.step_budget),
            ("token_budget", self.token_budget as u64),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(format!("{name} must be positive"));
        }
        self.llm.validate()
    }

    /// The configured client, recording into `trace_dir` when set.
    pub fn build_client(&self) -> Result<Box<dyn LlmClient>, LlmError> {
        let client: Box<dyn LlmClient> = match &self.client {
            ClientSpec::Live => {
                let http = HttpClient::new(self.llm.clone())?;
                match &self.trace_dir {
                    Some(dir) => Box::new(http.with_wire_log(dir.join("wire"))),
                    None => Box::new(http),
                }
            }
            ClientSpec::Replay(dir) => Box::new(
                ReplayClient::load(dir).map_err(|e| LlmError::Transport(format!("{}: {e}", dir.display())))?,
            ),
            ClientSpec::Oracle => Box::new(OracleClient::new()),
            ClientSpec::Broken => Box::new(BrokenClient),
        };
        match &self.trace_dir {
            Some(dir) => Ok(Box::new(
                Recorder::new(client, dir).map_err(|e| LlmError::Transport(format!("{}: {e}", dir.display())))?,
            )),
            None => Ok(client),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!((c.max_selected, c.no_increase_limit, c.repair_attempts), (3, 3, 3));
        assert_eq!(c.max_calls_per_iteration, 32);
        c.validate().unwrap();
    }

    #[test]
    fn client_spec_round_trip() {
        for s in ["live", "replay:traces/run1", "scripted:oracle", "scripted:broken"] {
            let spec: ClientSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert!("replay:".parse::<ClientSpec>().is_err());
        assert!("gpt".parse::<ClientSpec>().is_err());
    }

    #[test]
    fn json_config_overrides_defaults() {
        let c: RunConfig =
            serde_json::from_str(r#"{"mode": "iterative_cov", "client": "scripted:broken", "llm": {"model": "x"}}"#)
                .unwrap();
        assert_eq!(c.mode, PromptMode::IterativeCov);
        assert_eq!(c.client, ClientSpec::Broken);
        assert_eq!(c.llm.model, "x");
        assert_eq!(c.llm.max_tokens, 4096);
        let bad: RunConfig = serde_json::from_str(r#"{"no_increase_limit": 0}"#).unwrap();
        assert!(bad.validate().is_err());
    }
}
