//! Running test files under the instrumented interpreter and summarising
//! line and branch coverage of the source file.

mod interp;

pub use interp::{Fault, Hits, Machine, Program, Value, DEFAULT_STEP_BUDGET};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::minilang::{link, parse, walk_stmts, CompileError, Line, Role, SourceUnit};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoverageError {
    #[error("coverage report is for `{report}` but the source file is `{source_file}`")]
    FileMismatch { report: String, source_file: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Covered,
    Partial,
    Missed,
    NonExecutable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineStatus {
    pub line: Line,
    pub status: Status,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    True,
    False,
}

impl Outcome {
    pub fn as_bool(self) -> bool {
        self == Outcome::True
    }

    pub fn from_bool(b: bool) -> Self {
        if b {
            Outcome::True
        } else {
            Outcome::False
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchRecord {
    pub line: Line,
    pub outcome: Outcome,
    pub hit: bool,
}

/// Per-line statuses and per-outcome flags for one source file.
///
/// Serialises to `{"file", "lines", "branches"}` with lines ascending and
/// branches by line, `true` before `false`. Only executable lines appear.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub file: String,
    pub lines: Vec<LineStatus>,
    pub branches: Vec<BranchRecord>,
}

impl CoverageReport {
    fn count(&self, status: Status) -> usize {
        self.lines.iter().filter(|l| l.status == status).count()
    }

    /// covered / (covered + partial + missed), as a percentage.
    /// 100 when the file has no executable lines.
    pub fn line_coverage_pct(&self) -> f64 {
        let covered = self.count(Status::Covered);
        let total = covered + self.count(Status::Partial) + self.count(Status::Missed);
        if total == 0 {
            100.0
        } else {
            100.0 * covered as f64 / total as f64
        }
    }

    /// Hit outcomes / all outcomes. 100 when the file has no branches.
    pub fn branch_coverage_pct(&self) -> f64 {
        if self.branches.is_empty() {
            return 100.0;
        }
        let hit = self.branches.iter().filter(|b| b.hit).count();
        100.0 * hit as f64 / self.branches.len() as f64
    }

    /// Scalar used by the generation loop: mean of line and branch
    /// percentages, or line percentage alone when there are no branches.
    pub fn combined_pct(&self) -> f64 {
        if self.branches.is_empty() {
            self.line_coverage_pct()
        } else {
            (self.line_coverage_pct() + self.branch_coverage_pct()) / 2.0
        }
    }

    pub fn is_full(&self) -> bool {
        self.line_coverage_pct() >= 100.0 && self.branch_coverage_pct() >= 100.0
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serialises");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn status_of(&self, line: Line) -> Status {
        self.lines.iter().find(|l| l.line == line).map_or(Status::NonExecutable, |l| l.status)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    FailAssertion,
    FailRuntime,
    FailCompile,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestRunResult {
    pub test_name: String,
    pub verdict: Verdict,
    pub error_message: String,
}

impl TestRunResult {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Every statement line of the file, including branch conditions.
pub fn executable_lines(src: &SourceUnit) -> BTreeSet<Line> {
    let mut lines = BTreeSet::new();
    for f in &src.functions {
        walk_stmts(&f.body, &mut |s| {
            lines.insert(s.line);
        });
    }
    lines
}

pub fn branch_lines(src: &SourceUnit) -> BTreeSet<Line> {
    let mut lines = BTreeSet::new();
    for f in &src.functions {
        walk_stmts(&f.body, &mut |s| {
            if s.kind.is_branch() {
                lines.insert(s.line);
            }
        });
    }
    lines
}

pub fn build_report(src: &SourceUnit, hits: &Hits) -> CoverageReport {
    let branchy = branch_lines(src);
    let lines = executable_lines(src)
        .into_iter()
        .map(|line| {
            let executed = hits.lines.contains(&line);
            let status = if !executed {
                Status::Missed
            } else if branchy.contains(&line)
                && !(hits.branches.contains(&(line, true)) && hits.branches.contains(&(line, false)))
            {
                Status::Partial
            } else {
                Status::Covered
            };
            LineStatus { line, status }
        })
        .collect();
    let branches = branchy
        .into_iter()
        .flat_map(|line| {
            [true, false].map(|outcome| BranchRecord {
                line,
                outcome: Outcome::from_bool(outcome),
                hit: hits.branches.contains(&(line, outcome)),
            })
        })
        .collect();
    CoverageReport { file: src.path.clone(), lines, branches }
}

fn compile_failure(name: &str, err: &CompileError, file: &str) -> TestRunResult {
    TestRunResult {
        test_name: name.to_string(),
        verdict: Verdict::FailCompile,
        error_message: format!("{file}:{}: compilation error: {err}", err.line()),
    }
}

/// Runs one test function in a fresh machine.
fn run_one(program: &Program, name: &str, budget: u64) -> (TestRunResult, Hits) {
    let mut machine = program.machine(budget);
    let outcome = machine.call(name, Vec::new());
    let (verdict, error_message) = match outcome {
        Ok(_) => (Verdict::Pass, String::new()),
        Err(fault @ Fault::Assertion { .. }) => (Verdict::FailAssertion, format!("{name}: {fault}")),
        Err(fault @ Fault::Runtime { .. }) => (Verdict::FailRuntime, format!("{name}: {fault}")),
    };
    (TestRunResult { test_name: name.to_string(), verdict, error_message }, machine.hits)
}

/// Executes every `test_*` function of `tests` (each in isolation) and
/// reports the union of source coverage over all executed tests. Results
/// are ordered by test name.
pub fn run_tests_with_coverage(tests: &SourceUnit, src: &SourceUnit, budget: u64) -> (Vec<TestRunResult>, CoverageReport) {
    run_filtered(tests, src, budget, |_| true)
}

/// Like [`run_tests_with_coverage`], restricted to tests accepted by `keep`.
pub fn run_filtered(
    tests: &SourceUnit,
    src: &SourceUnit,
    budget: u64,
    keep: impl Fn(&str) -> bool,
) -> (Vec<TestRunResult>, CoverageReport) {
    let mut names: Vec<&str> = tests.tests().map(|f| f.name.as_str()).filter(|n| keep(n)).collect();
    names.sort_unstable();
    if let Err(err) = link(src, tests) {
        let results = names.iter().map(|n| compile_failure(n, &err, &tests.path)).collect();
        return (results, build_report(src, &Hits::default()));
    }
    let program = Program::new(src, Some(tests));
    let mut hits = Hits::default();
    let mut results = Vec::with_capacity(names.len());
    for name in names {
        let (result, test_hits) = run_one(&program, name, budget);
        hits.merge(&test_hits);
        results.push(result);
    }
    (results, build_report(src, &hits))
}

/// Parses `text` as a test file and runs it. A file that does not parse
/// yields a single `fail_compile` result and an all-missed report.
pub fn run_test_text(path: &str, text: &str, src: &SourceUnit, budget: u64) -> (Vec<TestRunResult>, CoverageReport) {
    match parse(path, text, Role::Test) {
        Ok(unit) => run_tests_with_coverage(&unit, src, budget),
        Err(err) => (vec![compile_failure(path, &err, path)], build_report(src, &Hits::default())),
    }
}

/// Missed statements and missed branch outcomes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Missed {
    /// Lines whose status is missed or partial.
    pub lines: BTreeSet<Line>,
    pub branches: BTreeSet<(Line, bool)>,
}

pub fn parse_coverage_report(report: &CoverageReport, src: &SourceUnit) -> Result<Missed, CoverageError> {
    if report.file != src.path {
        return Err(CoverageError::FileMismatch { report: report.file.clone(), source_file: src.path.clone() });
    }
    Ok(Missed {
        lines: report
            .lines
            .iter()
            .filter(|l| matches!(l.status, Status::Missed | Status::Partial))
            .map(|l| l.line)
            .collect(),
        branches: report.branches.iter().filter(|b| !b.hit).map(|b| (b.line, b.outcome.as_bool())).collect(),
    })
}

/// Change of the combined scalar, in percentage points.
pub fn coverage_delta(old: &CoverageReport, new: &CoverageReport) -> Result<f64, CoverageError> {
    if old.file != new.file {
        return Err(CoverageError::FileMismatch { report: new.file.clone(), source_file: old.file.clone() });
    }
    Ok(new.combined_pct() - old.combined_pct())
}
