//! The generate, validate, repair loop for one source file.

use std::fs;
use std::path::{Path as FsPath, PathBuf};

use log::{debug, info};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cfg::{build_method_cfg, cyclomatic_complexity};
use crate::config::RunConfig;
use crate::coverage::{parse_coverage_report, run_filtered, run_tests_with_coverage, CoverageReport, Verdict};
use crate::llm::{extract_tests, GeneratedTest, LlmClient, LlmError};
use crate::minilang::{identify_muts, link, parse, CompileError, Role, SourceUnit};
use crate::paths::{approximate, MethodDict, PathError};
use crate::prompt::{
    build_prompt, build_repair_prompt, prompt_hash, FailedTest, Guidance, PromptInput, PromptMode, TEST_DEPENDENCIES,
};
use crate::select::{select_from_report, PathHistory, Reason};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    Compile { path: String, source: CompileError },
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Auth(LlmError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl RunError {
    /// Machine-readable diagnostic.
    pub fn to_json(&self) -> serde_json::Value {
        let kind = match self {
            RunError::Compile { source: CompileError::Syntax(_), .. } => "syntax_error",
            RunError::Compile { source: CompileError::Type(_), .. } => "type_error",
            RunError::Io(_) => "io_error",
            RunError::Path(_) => "path_error",
            RunError::Auth(_) => "auth_error",
            RunError::Config(_) => "config_error",
        };
        let mut v = serde_json::json!({"error": kind, "message": self.to_string()});
        if let RunError::Compile { path, source } = self {
            v["file"] = path.clone().into();
            v["line"] = source.line().into();
        }
        v
    }
}

fn io_err(path: &FsPath, e: std::io::Error) -> RunError {
    RunError::Io(format!("{}: {e}", path.display()))
}

/// Source file plus the test file being grown.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub source: SourceUnit,
    /// Where the test file is written; `None` keeps it in memory.
    pub test_path: Option<PathBuf>,
    pub test_text: String,
    /// The test file did not exist and was created from the skeleton.
    pub created: bool,
}

pub fn skeleton(source_path: &str) -> String {
    let name = FsPath::new(source_path).file_name().map_or(source_path.into(), |n| n.to_string_lossy());
    format!("// Tests for {name}\n")
}

/// Default test file location: `<stem>_test.ml0` next to the source.
pub fn default_test_path(src_path: &FsPath) -> PathBuf {
    let stem = src_path.file_stem().map_or("source".into(), |s| s.to_string_lossy());
    src_path.with_file_name(format!("{stem}_test.ml0"))
}

/// Builds inputs from text already in memory.
pub fn prepare_text(
    src_path: &str,
    src_text: &str,
    test_path: Option<PathBuf>,
    test_text: Option<String>,
) -> Result<Prepared, RunError> {
    let source = parse(src_path, src_text, Role::Source)
        .map_err(|source| RunError::Compile { path: src_path.to_string(), source })?;
    let created = test_text.is_none();
    let test_text = test_text.unwrap_or_else(|| skeleton(src_path));
    let label = test_label(&test_path);
    let tests = parse(label.clone(), &test_text, Role::Test)
        .map_err(|source| RunError::Compile { path: label.clone(), source })?;
    link(&source, &tests).map_err(|source| RunError::Compile { path: label, source })?;
    Ok(Prepared { source, test_path, test_text, created })
}

/// Reads the source and, when present, the test file; otherwise writes a
/// skeleton test file.
pub fn prepare(src_path: &FsPath, test_path: Option<&FsPath>) -> Result<Prepared, RunError> {
    let src_text = fs::read_to_string(src_path).map_err(|e| io_err(src_path, e))?;
    let test_path = test_path.map_or_else(|| default_test_path(src_path), FsPath::to_path_buf);
    let test_text = match fs::read_to_string(&test_path) {
        Ok(text) => Some(text),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(io_err(&test_path, e)),
    };
    let prepared = prepare_text(&src_path.to_string_lossy(), &src_text, Some(test_path), test_text)?;
    if prepared.created {
        prepared.persist()?;
    }
    Ok(prepared)
}

fn test_label(path: &Option<PathBuf>) -> String {
    path.as_ref().map_or_else(|| "tests.ml0".into(), |p| p.to_string_lossy().into_owned())
}

impl Prepared {
    pub fn test_label(&self) -> String {
        test_label(&self.test_path)
    }

    pub fn test_unit(&self) -> SourceUnit {
        parse(self.test_label(), &self.test_text, Role::Test).expect("test file only ever holds parsed tests")
    }

    pub fn persist(&self) -> Result<(), RunError> {
        match &self.test_path {
            Some(path) => fs::write(path, &self.test_text).map_err(|e| io_err(path, e)),
            None => Ok(()),
        }
    }

    pub fn coverage(&self, step_budget: u64) -> (Vec<crate::coverage::TestRunResult>, CoverageReport) {
        run_tests_with_coverage(&self.test_unit(), &self.source, step_budget)
    }

    fn with_test(&self, source: &str) -> String {
        let mut text = self.test_text.clone();
        if !text.is_empty() && !text.ends_with('\n') {
            text.push('\n');
        }
        text.push('\n');
        text.push_str(source.trim_end());
        text.push('\n');
        text
    }

    /// Appends `test`, runs it alone and keeps it only if it passes.
    fn try_add(&mut self, test: &GeneratedTest, step_budget: u64) -> Result<(), String> {
        let unit = self.test_unit();
        if unit.function(&test.name).is_some() || self.source.function(&test.name).is_some() {
            return Err(format!("{}: compilation error: name clash, `{}` is already defined", self.test_label(), test.name));
        }
        let candidate = self.with_test(&test.source);
        let label = self.test_label();
        let unit = match parse(label.clone(), &candidate, Role::Test) {
            Ok(unit) => unit,
            Err(e) => return Err(format!("{label}:{}: compilation error: {e}", e.line())),
        };
        let (results, _) = run_filtered(&unit, &self.source, step_budget, |n| n == test.name);
        match results.into_iter().next() {
            Some(r) if r.verdict == Verdict::Pass => {
                self.test_text = candidate;
                Ok(())
            }
            Some(r) => Err(r.error_message),
            None => Err(format!("{label}: `{}` is not a test function", test.name)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum StopReason {
    MaxIter,
    FullCoverage,
    Plateau,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectedSummary {
    pub method: String,
    pub path: String,
    pub reason: Reason,
    pub missed_score: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    /// `cold_start`, `paths`, `uncovered` or `open`.
    pub strategy: String,
    pub prompt_hash: Option<String>,
    pub coverage_before: f64,
    pub coverage_after: f64,
    pub selected: Vec<SelectedSummary>,
    pub generated: usize,
    pub passed: usize,
    pub repaired: usize,
    pub abandoned: usize,
    pub client_calls: usize,
    pub suite_size: usize,
    pub suite_passing: usize,
    pub diagnostics: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub source: String,
    pub test_file: String,
    pub mode: PromptMode,
    pub max_cyc: usize,
    pub initial_coverage: f64,
    pub iterations: Vec<IterationRecord>,
    pub stop_reason: StopReason,
    pub final_coverage: CoverageReport,
    pub line_coverage: f64,
    pub branch_coverage: f64,
    pub failed_feedback: Vec<FailedTest>,
    /// Every prompt sent, in order.
    #[serde(skip)]
    pub prompts: Vec<String>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serialises");
        text.push('\n');
        text
    }

    pub fn summary_table(&self) -> String {
        let mut out = format!("{} ({}, maxCYC {})\n", self.source, self.mode, self.max_cyc);
        out.push_str("iter  strategy    before   after  gen  pass  rep  drop\n");
        for r in &self.iterations {
            out.push_str(&format!(
                "{:>4}  {:<10} {:>6.1}  {:>6.1}  {:>3}  {:>4}  {:>3}  {:>4}\n",
                r.iter, r.strategy, r.coverage_before, r.coverage_after, r.generated, r.passed, r.repaired, r.abandoned
            ));
        }
        out.push_str(&format!(
            "stop: {:?}  line {:.1}%  branch {:.1}%\n",
            self.stop_reason, self.line_coverage, self.branch_coverage
        ));
        out
    }
}

/// Largest cyclomatic complexity over the methods under test.
pub fn max_cyc(src: &SourceUnit) -> usize {
    identify_muts(src).into_iter().map(|f| cyclomatic_complexity(&build_method_cfg(f))).max().unwrap_or(0)
}

struct Budget {
    calls: usize,
    cap: usize,
}

impl Budget {
    fn take(&mut self) -> bool {
        if self.calls < self.cap {
            self.calls += 1;
            true
        } else {
            false
        }
    }
}

/// Outcome of one call; authentication failures end the run.
fn call(client: &dyn LlmClient, prompt: &str, prompts: &mut Vec<String>) -> Result<Result<String, LlmError>, RunError> {
    prompts.push(prompt.to_string());
    match client.generate(prompt) {
        Err(e @ LlmError::Auth(_)) => Err(RunError::Auth(e)),
        other => Ok(other),
    }
}

#[derive(Debug, Default)]
struct Validation {
    passed: usize,
    to_repair: Vec<FailedTest>,
}

/// Adds tests one by one in order; failures are queued for repair.
fn validate_tests(prepared: &mut Prepared, tests: &[GeneratedTest], step_budget: u64) -> Validation {
    let mut out = Validation::default();
    for test in tests {
        match prepared.try_add(test, step_budget) {
            Ok(()) => out.passed += 1,
            Err(error) => {
                debug!("{} failed: {error}", test.name);
                out.to_repair.push(FailedTest { name: test.name.clone(), source: test.source.clone(), error });
            }
        }
    }
    out
}

struct Repair {
    repaired: usize,
    feedback: Vec<FailedTest>,
}

fn repair_and_validate(
    prepared: &mut Prepared,
    to_repair: Vec<FailedTest>,
    config: &RunConfig,
    client: &dyn LlmClient,
    budget: &mut Budget,
    prompts: &mut Vec<String>,
) -> Result<Repair, RunError> {
    let mut repaired = 0;
    let mut feedback = Vec::new();
    for mut failed in to_repair {
        let mut fixed = false;
        for attempt in 1..=config.repair_attempts {
            if !budget.take() {
                break;
            }
            let prompt = build_repair_prompt(&prepared.source, &prepared.test_text, TEST_DEPENDENCIES, &failed);
            let text = prompt.rendered_text();
            let reply = match call(client, &text, prompts)? {
                Ok(reply) => reply,
                Err(e) => {
                    failed.error = e.to_string();
                    continue;
                }
            };
            let extraction = extract_tests(&reply, &prompt_hash(&text));
            let Some(candidate) = extraction.tests.into_iter().next() else {
                failed.error = format!("repair attempt {attempt} returned no test function");
                continue;
            };
            match prepared.try_add(&candidate, config.step_budget) {
                Ok(()) => {
                    fixed = true;
                    break;
                }
                Err(error) => {
                    failed = FailedTest { name: candidate.name, source: candidate.source, error };
                }
            }
        }
        if fixed {
            repaired += 1;
        } else {
            feedback.push(failed);
        }
    }
    Ok(Repair { repaired, feedback })
}

/// Runs the loop until full coverage, a plateau or the iteration limit.
/// The test file is persisted after every iteration.
pub fn run(
    prepared: &mut Prepared,
    config: &RunConfig,
    client: &dyn LlmClient,
    history: &mut PathHistory,
) -> Result<RunReport, RunError> {
    config.validate().map_err(RunError::Config)?;
    let mode = config.mode;
    let src = prepared.source.clone();
    let max_cyc = max_cyc(&src);
    let max_iter = if mode == PromptMode::Baseline { max_cyc.min(1) } else { max_cyc };
    let method_dict: MethodDict = if mode.uses_paths() { approximate(&src)? } else { Vec::new() };

    let (_, mut report) = prepared.coverage(config.step_budget);
    let initial_coverage = report.combined_pct();
    let mut cur = initial_coverage;
    let mut iterations = Vec::new();
    let mut prompts = Vec::new();
    let mut feedback: Vec<FailedTest> = Vec::new();
    let mut no_increase = 0;

    let stop_reason = loop {
        if report.is_full() {
            break StopReason::FullCoverage;
        }
        if no_increase >= config.no_increase_limit {
            break StopReason::Plateau;
        }
        if iterations.len() >= max_iter {
            break StopReason::MaxIter;
        }
        let iter = iterations.len() + 1;
        let mut record = IterationRecord {
            iter,
            strategy: String::new(),
            prompt_hash: None,
            coverage_before: cur,
            coverage_after: cur,
            selected: Vec::new(),
            generated: 0,
            passed: 0,
            repaired: 0,
            abandoned: 0,
            client_calls: 0,
            suite_size: 0,
            suite_passing: 0,
            diagnostics: Vec::new(),
            error: None,
        };

        let cold = cur == 0.0;
        let selected = if !cold && mode == PromptMode::Full {
            select_from_report(&src, &report, &method_dict, history, config.max_selected).expect("own report")
        } else {
            Vec::new()
        };
        let missed = parse_coverage_report(&report, &src).expect("own report");
        let guidance = match mode {
            _ if cold => Guidance::Open,
            PromptMode::Full if !selected.is_empty() => Guidance::Paths(&selected),
            PromptMode::IterativeCov => Guidance::Uncovered(&missed),
            _ => Guidance::Open,
        };
        record.strategy = match guidance {
            _ if cold => "cold_start",
            Guidance::Paths(_) => "paths",
            Guidance::Uncovered(_) => "uncovered",
            Guidance::Open => "open",
        }
        .into();
        record.selected = selected
            .iter()
            .flat_map(|m| {
                m.paths.iter().map(|p| SelectedSummary {
                    method: m.method.clone(),
                    path: p.path.key.clone(),
                    reason: p.reason,
                    missed_score: p.missed_score,
                })
            })
            .collect();

        let input = PromptInput {
            mode,
            source: &src,
            test_text: &prepared.test_text,
            test_deps: TEST_DEPENDENCIES,
            guidance,
            method_dict: &method_dict,
            failed: &feedback,
            token_budget: config.token_budget,
        };
        let mut budget = Budget { calls: 0, cap: config.max_calls_per_iteration };
        let generated = match build_prompt(&input) {
            Err(e) => Err(e.to_string()),
            Ok(prompt) => {
                let text = prompt.rendered_text();
                let hash = prompt_hash(&text);
                record.prompt_hash = Some(hash.clone());
                budget.take();
                match call(client, &text, &mut prompts)? {
                    Ok(reply) => Ok(extract_tests(&reply, &hash)),
                    Err(e) => Err(e.to_string()),
                }
            }
        };

        match generated {
            Err(error) => {
                info!("iteration {iter}: {error}");
                record.error = Some(error);
            }
            Ok(extraction) => {
                record.generated = extraction.tests.len();
                record.diagnostics = extraction.diagnostics;
                let validation = validate_tests(prepared, &extraction.tests, config.step_budget);
                record.passed = validation.passed;
                if mode == PromptMode::Baseline {
                    record.abandoned = validation.to_repair.len();
                    feedback = validation.to_repair;
                } else {
                    let repair =
                        repair_and_validate(prepared, validation.to_repair, config, client, &mut budget, &mut prompts)?;
                    record.repaired = repair.repaired;
                    record.abandoned = repair.feedback.len();
                    feedback = repair.feedback;
                }
            }
        }
        record.client_calls = budget.calls;
        prepared.persist()?;

        let (results, new_report) = prepared.coverage(config.step_budget);
        record.suite_size = results.len();
        record.suite_passing = results.iter().filter(|r| r.passed()).count();
        let new = new_report.combined_pct();
        if new > cur {
            no_increase = 0;
        } else {
            no_increase += 1;
        }
        record.coverage_after = new;
        info!("iteration {iter}: coverage {cur:.2} -> {new:.2}");
        cur = new;
        report = new_report;
        iterations.push(record);
    };

    Ok(RunReport {
        source: src.path.clone(),
        test_file: prepared.test_label(),
        mode,
        max_cyc,
        initial_coverage,
        iterations,
        stop_reason,
        line_coverage: report.line_coverage_pct(),
        branch_coverage: report.branch_coverage_pct(),
        final_coverage: report,
        failed_feedback: feedback,
        prompts,
    })
}
