//! Prompt assembly for test generation and repair.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cfg::MethodCfg;
use crate::coverage::Missed;
use crate::minilang::{identify_muts, parse, Role, SourceUnit};
use crate::paths::Path;
use crate::select::{MethodSelection, Reason};

pub const DEFAULT_TOKEN_BUDGET: usize = 100_000;
pub const MAX_FAILED_FEEDBACK: usize = 5;

/// Stands in for the dependency list of a build tool.
pub const TEST_DEPENDENCIES: &str = "\
minilang-interpreter:0.1
Tests are top-level functions named `test_<something>` with no parameters and no return type.
Check results with `assert(<bool expression>);`. Source functions are called directly by name.";

pub const SOURCE_HEADING: &str = "Source File";
pub const TEST_HEADING: &str = "Test File";
pub const DEPS_HEADING: &str = "Third-party dependencies for test generation";
pub const FAILED_HEADING: &str = "Failed Tests";
pub const MUT_HEADING: &str = "Methods Under Test";
pub const UNCOVERED_HEADING: &str = "Uncovered Lines and Branches";
pub const REPAIR_HEADING: &str = "Test To Repair";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    Baseline,
    IterativeBasic,
    IterativeCov,
    Full,
}

impl PromptMode {
    pub const ALL: [PromptMode; 4] =
        [PromptMode::Baseline, PromptMode::IterativeBasic, PromptMode::IterativeCov, PromptMode::Full];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptMode::Baseline => "baseline",
            PromptMode::IterativeBasic => "iterative_basic",
            PromptMode::IterativeCov => "iterative_cov",
            PromptMode::Full => "full",
        }
    }

    /// Whether the mode consults path analysis.
    pub fn uses_paths(self) -> bool {
        self == PromptMode::Full
    }
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PromptMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode `{s}` (expected baseline, iterative_basic, iterative_cov or full)"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub heading: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub sections: Vec<Section>,
}

impl Prompt {
    pub fn rendered_text(&self) -> String {
        let parts: Vec<String> = self.sections.iter().map(|s| format!("## {}\n{}", s.heading, s.body)).collect();
        let mut text = parts.join("\n\n");
        text.push('\n');
        text
    }

    pub fn section(&self, heading: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.heading == heading)
    }

    pub fn headings(&self) -> Vec<&str> {
        self.sections.iter().map(|s| s.heading.as_str()).collect()
    }
}

pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

/// Hex sha256 of a prompt text; keys replay fixtures.
pub fn prompt_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[error("prompt needs about {estimated} tokens, budget is {budget}")]
pub struct PromptTooLarge {
    pub estimated: usize,
    pub budget: usize,
}

/// A generated test that could not be kept, with its last error.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedTest {
    pub name: String,
    pub source: String,
    pub error: String,
}

/// What the generation prompt should steer towards.
#[derive(Debug, Clone, Copy)]
pub enum Guidance<'a> {
    /// No analysis: one generic directive per method under test.
    Open,
    Paths(&'a [MethodSelection]),
    Uncovered(&'a Missed),
}

/// Renders a path as the statements it runs, one per source line, with
/// branch conditions annotated by the outcome taken.
pub fn render_path(path: &Path, cfg: &MethodCfg, unit: &SourceUnit) -> String {
    let mut rows: Vec<(u32, Option<bool>)> = Vec::new();
    for (i, &node_id) in path.node_ids.iter().enumerate() {
        let node = cfg.node(node_id);
        let outcome = path.edge_ids.get(i).and_then(|&e| cfg.edges[e].label.outcome());
        for &line in &node.lines {
            let annotation = if line == node.span.0 { outcome } else { None };
            match rows.last_mut() {
                Some(last) if last.0 == line && (last.1.is_none() || annotation.is_none()) => {
                    last.1 = annotation.or(last.1)
                }
                _ => rows.push((line, annotation)),
            }
        }
    }
    let lines: Vec<String> = rows
        .into_iter()
        .map(|(line, outcome)| {
            let text = statement_text(unit.line_text(line).unwrap_or(""));
            match outcome {
                Some(true) => format!("{line} {text} is True"),
                Some(false) => format!("{line} {text} is False"),
                None => format!("{line} {text}"),
            }
        })
        .collect();
    lines.join("\n")
}

/// Source line without surrounding whitespace and block braces.
fn statement_text(line: &str) -> &str {
    let t = line.trim();
    let t = t.strip_prefix('}').unwrap_or(t).trim_start();
    t.strip_suffix('{').unwrap_or(t).trim_end()
}

fn fenced(text: &str) -> String {
    let body = text.trim_end_matches('\n');
    format!("```\n{body}\n```")
}

fn source_section(src: &SourceUnit) -> Section {
    Section {
        heading: SOURCE_HEADING.into(),
        body: format!("Here is the source file that you will be writing tests against.\n{}", fenced(&src.numbered())),
    }
}

fn test_section(test_text: &str) -> Section {
    Section {
        heading: TEST_HEADING.into(),
        body: format!("Here is the file that contains the existing tests.\n{}", fenced(test_text)),
    }
}

fn deps_section(deps: &str) -> Section {
    Section {
        heading: DEPS_HEADING.into(),
        body: format!("Please use the following dependencies to generate tests\n{deps}"),
    }
}

fn failed_section(failed: &[FailedTest]) -> Option<Section> {
    if failed.is_empty() {
        return None;
    }
    let recent = &failed[failed.len().saturating_sub(MAX_FAILED_FEEDBACK)..];
    let mut body = String::from("These tests from the previous attempt failed. Do not generate them again as they are.");
    for f in recent {
        body.push_str(&format!("\n{}\nError: {}", fenced(&f.source), f.error));
    }
    Some(Section { heading: FAILED_HEADING.into(), body })
}

fn open_directives(src: &SourceUnit) -> String {
    let lines: Vec<String> = identify_muts(src).iter().map(|f| format!("Please generate test for {}", f.name)).collect();
    if lines.is_empty() {
        "Please generate tests for the public functions of the source file".into()
    } else {
        lines.join("\n")
    }
}

fn path_directives(src: &SourceUnit, selected: &[MethodSelection], dict: &[crate::paths::MethodPaths]) -> String {
    let mut blocks = Vec::new();
    for sel in selected {
        let Some(method) = dict.iter().find(|m| m.method == sel.method) else { continue };
        for p in &sel.paths {
            blocks.push(format!(
                "Please generate test for {} to cover the path\n{}",
                sel.method,
                render_path(&p.path, &method.cfg, src)
            ));
        }
    }
    blocks.join("\n\n")
}

fn uncovered_body(missed: &Missed) -> String {
    let lines: Vec<String> = missed.lines.iter().map(u32::to_string).collect();
    let branches: Vec<String> =
        missed.branches.iter().map(|(l, b)| format!("{l}:{}", if *b { "true" } else { "false" })).collect();
    format!(
        "Please generate tests that execute the uncovered lines and branch outcomes of the source file.\n\
         Uncovered lines: {}\nUncovered branch outcomes (line:outcome): {}",
        if lines.is_empty() { "none".into() } else { lines.join(", ") },
        if branches.is_empty() { "none".into() } else { branches.join(", ") },
    )
}

/// Everything a generation prompt is built from.
#[derive(Debug, Clone, Copy)]
pub struct PromptInput<'a> {
    pub mode: PromptMode,
    pub source: &'a SourceUnit,
    pub test_text: &'a str,
    pub test_deps: &'a str,
    /// Ignored by modes that do not use it.
    pub guidance: Guidance<'a>,
    pub method_dict: &'a [crate::paths::MethodPaths],
    pub failed: &'a [FailedTest],
    pub token_budget: usize,
}

fn assemble(input: &PromptInput, guidance: Guidance, test_text: &str) -> Prompt {
    let mut sections = vec![source_section(input.source), test_section(test_text), deps_section(input.test_deps)];
    if input.mode != PromptMode::Baseline {
        sections.extend(failed_section(input.failed));
    }
    let guidance = match (input.mode, guidance) {
        (PromptMode::Full, g @ Guidance::Paths(sel)) if !sel.is_empty() => g,
        (PromptMode::IterativeCov, g @ Guidance::Uncovered(_)) => g,
        _ => Guidance::Open,
    };
    sections.push(match guidance {
        Guidance::Uncovered(missed) => Section { heading: UNCOVERED_HEADING.into(), body: uncovered_body(missed) },
        Guidance::Paths(sel) => {
            Section { heading: MUT_HEADING.into(), body: path_directives(input.source, sel, input.method_dict) }
        }
        Guidance::Open => Section { heading: MUT_HEADING.into(), body: open_directives(input.source) },
    });
    Prompt { sections }
}

fn drop_reason(sel: &[MethodSelection], reason: Reason) -> Option<Vec<MethodSelection>> {
    if !sel.iter().any(|m| m.paths.iter().any(|p| p.reason == reason)) {
        return None;
    }
    let out = sel
        .iter()
        .map(|m| MethodSelection {
            method: m.method.clone(),
            paths: m.paths.iter().filter(|p| p.reason != reason).cloned().collect(),
        })
        .filter(|m| !m.paths.is_empty())
        .collect();
    Some(out)
}

/// Test file text with the first `n` test functions replaced by a note.
fn without_oldest(test_text: &str, n: usize) -> Option<String> {
    let unit = parse("tests", test_text, Role::Test).ok()?;
    let funcs = &unit.functions;
    if n == 0 || n > funcs.len() {
        return None;
    }
    let mut keep = vec![true; unit.lines.len()];
    for f in &funcs[..n] {
        for l in f.span.0..=f.span.1 {
            keep[(l - 1) as usize] = false;
        }
    }
    let mut out = format!("// {n} older test(s) omitted\n");
    for (line, k) in unit.lines.iter().zip(keep) {
        if k {
            out.push_str(line);
            out.push('\n');
        }
    }
    Some(out)
}

/// Builds the generation prompt, shrinking it to fit the token budget by
/// dropping explore paths, then exploit paths, then the oldest tests.
pub fn build_prompt(input: &PromptInput) -> Result<Prompt, PromptTooLarge> {
    let fits = |p: &Prompt| estimate_tokens(&p.rendered_text()) <= input.token_budget;
    let mut prompt = assemble(input, input.guidance, input.test_text);
    if fits(&prompt) {
        return Ok(prompt);
    }
    let mut trimmed: Option<Vec<MethodSelection>> = None;
    if let (PromptMode::Full, Guidance::Paths(sel)) = (input.mode, input.guidance) {
        for reason in [Reason::Explore, Reason::Exploit] {
            let current = trimmed.as_deref().unwrap_or(sel);
            if let Some(smaller) = drop_reason(current, reason) {
                prompt = assemble(input, Guidance::Paths(&smaller), input.test_text);
                trimmed = Some(smaller);
                if fits(&prompt) {
                    return Ok(prompt);
                }
            }
        }
    }
    let guidance = match &trimmed {
        Some(sel) => Guidance::Paths(sel),
        None => input.guidance,
    };
    let mut n = 1;
    while let Some(shorter) = without_oldest(input.test_text, n) {
        prompt = assemble(input, guidance, &shorter);
        if fits(&prompt) {
            return Ok(prompt);
        }
        n += 1;
    }
    Err(PromptTooLarge { estimated: estimate_tokens(&prompt.rendered_text()), budget: input.token_budget })
}

/// Prompt asking for a fixed version of one failing test.
pub fn build_repair_prompt(source: &SourceUnit, test_text: &str, test_deps: &str, failed: &FailedTest) -> Prompt {
    let body = format!(
        "The following test fails. Please fix it so that it compiles and passes, keeping the name `{}`.\n{}\nError: {}",
        failed.name,
        fenced(&failed.source),
        failed.error
    );
    Prompt {
        sections: vec![
            source_section(source),
            test_section(test_text),
            deps_section(test_deps),
            Section { heading: REPAIR_HEADING.into(), body },
        ],
    }
}
