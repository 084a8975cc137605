//! Recording prompt/reply exchanges and replaying them offline.

use std::collections::{HashMap, VecDeque};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{LlmClient, LlmError};
use crate::prompt::prompt_hash;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Reply(String),
    Error(LlmError),
}

/// One recorded call, stored as `<seq>-<hash prefix>.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub seq: usize,
    pub prompt_hash: String,
    pub prompt: String,
    pub outcome: Outcome,
}

/// Wraps a client and writes each exchange to a trace directory.
pub struct Recorder<C> {
    inner: C,
    dir: PathBuf,
    seq: Mutex<usize>,
}

impl<C: LlmClient> Recorder<C> {
    pub fn new(inner: C, dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let existing = fs::read_dir(&dir)?.filter(|e| e.as_ref().is_ok_and(|e| is_exchange(&e.path()))).count();
        Ok(Recorder { inner, dir, seq: Mutex::new(existing) })
    }
}

fn is_exchange(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "json")
        && path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.as_bytes()[0].is_ascii_digit())
}

impl<C: LlmClient> LlmClient for Recorder<C> {
    fn generate(&self, prompt: &str) -> Result<String, LlmError> {
        let result = self.inner.generate(prompt);
        let mut seq = self.seq.lock().expect("recorder lock");
        let hash = prompt_hash(prompt);
        let exchange = Exchange {
            seq: *seq,
            prompt_hash: hash.clone(),
            prompt: prompt.to_string(),
            outcome: match &result {
                Ok(text) => Outcome::Reply(text.clone()),
                Err(e) => Outcome::Error(e.clone()),
            },
        };
        let path = self.dir.join(format!("{:04}-{}.json", *seq, &hash[..12]));
        let mut text = serde_json::to_string_pretty(&exchange).expect("exchange serialises");
        text.push('\n');
        if let Err(e) = fs::write(&path, text) {
            log::warn!("could not write trace {}: {e}", path.display());
        }
        *seq += 1;
        result
    }
}

/// Answers prompts from a recorded trace directory. Repeated prompts get
/// their recorded replies in order; unknown prompts are a transport error.
pub struct ReplayClient {
    fixtures: Mutex<HashMap<String, VecDeque<Outcome>>>,
}

impl ReplayClient {
    pub fn load(dir: &Path) -> io::Result<Self> {
        let mut paths: Vec<PathBuf> =
            fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| is_exchange(p)).collect();
        paths.sort();
        let mut exchanges = Vec::new();
        for path in paths {
            let text = fs::read_to_string(&path)?;
            let ex: Exchange = serde_json::from_str(&text)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))?;
            exchanges.push(ex);
        }
        Ok(Self::from_exchanges(exchanges))
    }

    pub fn from_exchanges(mut exchanges: Vec<Exchange>) -> Self {
        exchanges.sort_by_key(|e| e.seq);
        let mut fixtures: HashMap<String, VecDeque<Outcome>> = HashMap::new();
        for ex in exchanges {
            fixtures.entry(ex.prompt_hash).or_default().push_back(ex.outcome);
        }
        ReplayClient { fixtures: Mutex::new(fixtures) }
    }
}

impl LlmClient for ReplayClient {
    fn generate(&self, prompt: &str) -> Result<String, LlmError> {
        let hash = prompt_hash(prompt);
        let mut fixtures = self.fixtures.lock().expect("replay lock");
        match fixtures.get_mut(&hash).and_then(VecDeque::pop_front) {
            Some(Outcome::Reply(text)) => Ok(text),
            Some(Outcome::Error(e)) => Err(e),
            None => Err(LlmError::Transport(format!("no fixture for prompt {hash}"))),
        }
    }
}
