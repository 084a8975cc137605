//! Coverage-guided path selection.
//!
//! Each approximated path is scored by how much uncovered code it runs
//! through: missed or partial lines on the path plus missed branch outcomes
//! the path takes. Paths with a positive score that have been handed out
//! fewer than `max_selected` times are candidates; per method the highest
//! scoring candidate is exploited and the least selected one explored.

use std::cell::Cell;
use std::collections::BTreeMap;
use std::io;
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use crate::coverage::{parse_coverage_report, run_tests_with_coverage, CoverageError, CoverageReport, Missed};
use crate::minilang::SourceUnit;
use crate::paths::{MethodPaths, Path};

pub const DEFAULT_MAX_SELECTED: u32 = 3;

/// How often each path has been selected, per method. Keys are path keys.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PathHistory {
    counts: BTreeMap<String, BTreeMap<String, u32>>,
}

impl PathHistory {
    pub fn count(&self, method: &str, key: &str) -> u32 {
        self.counts.get(method).and_then(|m| m.get(key)).copied().unwrap_or(0)
    }

    fn bump(&mut self, method: &str, key: &str) {
        *self.counts.entry(method.to_string()).or_default().entry(key.to_string()).or_default() += 1;
    }

    pub fn max_count(&self) -> u32 {
        self.counts.values().flat_map(|m| m.values()).copied().max().unwrap_or(0)
    }

    pub fn load(path: &FsPath) -> io::Result<Self> {
        match std::fs::read_to_string(path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(e),
        }
    }

    pub fn save(&self, path: &FsPath) -> io::Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("history serialises");
        text.push('\n');
        std::fs::write(path, text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reason {
    Exploit,
    Explore,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectedPath {
    pub path: Path,
    /// Discovery index of the path within its method.
    pub index: usize,
    pub reason: Reason,
    pub missed_score: usize,
    /// Selection count before this selection.
    pub prior_count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodSelection {
    pub method: String,
    pub paths: Vec<SelectedPath>,
}

/// Methods without candidates are absent.
pub type SelectedPaths = Vec<MethodSelection>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub index: usize,
    pub missed_score: usize,
    pub selected_count: u32,
}

pub fn missed_score(method: &MethodPaths, path: &Path, missed: &Missed) -> usize {
    let lines = path.lines(&method.cfg).into_iter().filter(|l| missed.lines.contains(l)).count();
    let branches = path.branch_outcomes(&method.cfg).into_iter().filter(|b| missed.branches.contains(b)).count();
    lines + branches
}

/// Candidates of one method in discovery order.
pub fn candidates(method: &MethodPaths, missed: &Missed, history: &PathHistory, max_selected: u32) -> Vec<Candidate> {
    method
        .paths
        .iter()
        .enumerate()
        .filter_map(|(index, path)| {
            let missed_score = missed_score(method, path, missed);
            let selected_count = history.count(&method.method, &path.key);
            (missed_score > 0 && selected_count < max_selected).then_some(Candidate {
                index,
                missed_score,
                selected_count,
            })
        })
        .collect()
}

/// Exploit and explore picks over `cands`; first occurrence wins ties.
/// Returns `None` for an empty list.
pub fn pick(cands: &[Candidate]) -> Option<(usize, usize)> {
    let mut exploit = cands.first()?;
    let mut explore = exploit;
    for c in &cands[1..] {
        if c.missed_score > exploit.missed_score {
            exploit = c;
        }
        if c.selected_count < explore.selected_count {
            explore = c;
        }
    }
    Some((exploit.index, explore.index))
}

thread_local! {
    static SELECT_CALLS: Cell<usize> = const { Cell::new(0) };
}

/// Number of selection calls made on the current thread.
pub fn select_call_count() -> usize {
    SELECT_CALLS.with(Cell::get)
}

/// Selection from an existing coverage report.
pub fn select_from_report(
    src: &SourceUnit,
    report: &CoverageReport,
    method_dict: &[MethodPaths],
    history: &mut PathHistory,
    max_selected: u32,
) -> Result<SelectedPaths, CoverageError> {
    SELECT_CALLS.with(|c| c.set(c.get() + 1));
    let missed = parse_coverage_report(report, src)?;
    let mut out = Vec::new();
    for method in method_dict {
        let cands = candidates(method, &missed, history, max_selected);
        let Some((exploit, explore)) = pick(&cands) else { continue };
        let mut chosen = vec![(exploit, Reason::Exploit)];
        if explore != exploit {
            chosen.push((explore, Reason::Explore));
        }
        let paths = chosen
            .into_iter()
            .map(|(index, reason)| {
                let cand = cands.iter().find(|c| c.index == index).expect("picked from candidates");
                let path = method.paths[index].clone();
                history.bump(&method.method, &path.key);
                SelectedPath { path, index, reason, missed_score: cand.missed_score, prior_count: cand.selected_count }
            })
            .collect();
        out.push(MethodSelection { method: method.method.clone(), paths });
    }
    Ok(out)
}

/// Runs the test file for coverage, then selects paths.
pub fn select_paths(
    src: &SourceUnit,
    tests: &SourceUnit,
    method_dict: &[MethodPaths],
    history: &mut PathHistory,
    max_selected: u32,
    step_budget: u64,
) -> SelectedPaths {
    let (_, report) = run_tests_with_coverage(tests, src, step_budget);
    select_from_report(src, &report, method_dict, history, max_selected).expect("report built for this source")
}
