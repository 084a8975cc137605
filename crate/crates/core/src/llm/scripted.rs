//! Deterministic stand-ins for a model.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::sync::{Arc, Mutex};

use super::{LlmClient, LlmError};
use crate::coverage::{Program, Value};
use crate::minilang::{identify_muts, parse, Function, FunctionKind, Line, Role, SourceUnit, Type};
use crate::prompt::{MUT_HEADING, REPAIR_HEADING, SOURCE_HEADING, TEST_HEADING, UNCOVERED_HEADING};

/// Always answers with prose that contains no code.
#[derive(Debug, Default)]
pub struct BrokenClient;

impl LlmClient for BrokenClient {
    fn generate(&self, _prompt: &str) -> Result<String, LlmError> {
        Ok("I'm sorry, but I can't write tests for this code right now.".into())
    }
}

/// Returns canned replies in order, whatever the prompt.
#[derive(Debug, Default)]
pub struct SequenceClient {
    replies: Mutex<VecDeque<String>>,
    prompts: Mutex<Vec<String>>,
}

impl SequenceClient {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        SequenceClient { replies: Mutex::new(replies.into_iter().map(Into::into).collect()), prompts: Mutex::default() }
    }

    /// Prompts received so far.
    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().expect("lock").clone()
    }
}

impl LlmClient for SequenceClient {
    fn generate(&self, prompt: &str) -> Result<String, LlmError> {
        self.prompts.lock().expect("lock").push(prompt.to_string());
        self.replies.lock().expect("lock").pop_front().ok_or_else(|| LlmError::Transport("script exhausted".into()))
    }
}

/// Writes correct tests by running the source on a fixed input domain and
/// picking inputs whose branch decisions match each requested path.
#[derive(Default)]
pub struct OracleClient {
    runs: Mutex<HashMap<(String, String), Arc<Vec<Run>>>>,
}

struct Run {
    setup: Vec<(String, Value)>,
    args: Vec<Value>,
    result: Option<Value>,
    checks: Vec<(String, Value)>,
    trace: Vec<(Line, bool)>,
    lines: BTreeSet<Line>,
    branches: BTreeSet<(Line, bool)>,
}

const MAX_INPUTS: usize = 20_000;
const STEP_BUDGET: u64 = 20_000;
const MAX_PER_METHOD: usize = 3;

fn domain(ty: Type) -> Vec<Value> {
    match ty {
        Type::Int => (-3..=16).chain([100, 150]).map(Value::Int).collect(),
        Type::Bool => vec![Value::Bool(false), Value::Bool(true)],
        Type::String => ["", "a", "b", "ab", "ba", "!", "@", "a@", "a!", "!@", "ae", "xyz", "hello"]
            .into_iter()
            .map(|s| Value::Str(s.into()))
            .collect(),
    }
}

fn inputs(params: &[Type]) -> Vec<Vec<Value>> {
    let mut out: Vec<Vec<Value>> = vec![Vec::new()];
    for &ty in params {
        let values = domain(ty);
        out = out
            .into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |v| {
                    let mut next = prefix.clone();
                    next.push(v.clone());
                    next
                })
            })
            .take(MAX_INPUTS)
            .collect();
    }
    out
}

/// Text of the first fenced block in the section with the given heading.
fn section_block<'a>(prompt: &'a str, heading: &str) -> Option<&'a str> {
    let start = prompt.find(&format!("## {heading}\n"))?;
    let rest = &prompt[start..];
    let open = rest.find("```")?;
    let body = &rest[open..];
    let body = &body[body.find('\n')? + 1..];
    let close = body.find("\n```").unwrap_or(body.len());
    Some(&body[..close])
}

fn section_body<'a>(prompt: &'a str, heading: &str) -> Option<&'a str> {
    let start = prompt.find(&format!("## {heading}\n"))? + heading.len() + 4;
    let rest = &prompt[start..];
    let end = rest.find("\n## ").unwrap_or(rest.len());
    Some(&rest[..end])
}

fn strip_numbers(numbered: &str) -> String {
    let mut out = String::new();
    for line in numbered.lines() {
        let t = line.trim_start();
        let digits = t.len() - t.trim_start_matches(|c: char| c.is_ascii_digit()).len();
        let rest = &t[digits..];
        out.push_str(rest.strip_prefix(' ').unwrap_or(rest));
        out.push('\n');
    }
    out
}

fn existing_test_names(prompt: &str) -> HashSet<String> {
    let Some(block) = section_block(prompt, TEST_HEADING) else { return HashSet::new() };
    block
        .split("func")
        .skip(1)
        .filter_map(|rest| {
            let name: String = rest.trim_start().chars().take_while(|c| c.is_alphanumeric() || *c == '_').collect();
            name.starts_with("test_").then_some(name)
        })
        .collect()
}

enum Goal {
    /// Match these decisions.
    Path(Vec<(Line, bool)>),
    /// Cover as much of the method as possible.
    Broad,
}

fn parse_directives(body: &str) -> Vec<(String, Goal)> {
    let mut out: Vec<(String, Goal)> = Vec::new();
    for line in body.lines() {
        if let Some(rest) = line.strip_prefix("Please generate test for ") {
            match rest.strip_suffix(" to cover the path") {
                Some(method) => out.push((method.to_string(), Goal::Path(Vec::new()))),
                None => out.push((rest.trim().to_string(), Goal::Broad)),
            }
            continue;
        }
        let Some((_, Goal::Path(decisions))) = out.last_mut() else { continue };
        let outcome = if line.ends_with(" is True") {
            true
        } else if line.ends_with(" is False") {
            false
        } else {
            continue;
        };
        if let Some(n) = line.split(' ').next().and_then(|n| n.parse().ok()) {
            decisions.push((n, outcome));
        }
    }
    out
}

fn parse_uncovered(body: &str) -> (BTreeSet<Line>, BTreeSet<(Line, bool)>) {
    let mut lines = BTreeSet::new();
    let mut branches = BTreeSet::new();
    for line in body.lines() {
        if let Some(rest) = line.strip_prefix("Uncovered lines: ") {
            lines.extend(rest.split(", ").filter_map(|n| n.parse::<Line>().ok()));
        } else if let Some((_, rest)) = line.split_once("): ") {
            for item in rest.split(", ") {
                if let Some((l, o)) = item.split_once(':') {
                    if let Ok(l) = l.parse() {
                        branches.insert((l, o == "true"));
                    }
                }
            }
        }
    }
    (lines, branches)
}

struct Emitter {
    used: HashSet<String>,
    tests: Vec<String>,
}

impl Emitter {
    fn emit(&mut self, method: &str, run: &Run) {
        let name = (1..).map(|k| format!("test_{method}_{k}")).find(|n| !self.used.contains(n)).expect("unbounded");
        self.used.insert(name.clone());
        let mut body: Vec<String> = run.setup.iter().map(|(f, v)| format!("    {f}({});", v.literal())).collect();
        let args: Vec<String> = run.args.iter().map(Value::literal).collect();
        let call = format!("{method}({})", args.join(", "));
        body.push(match &run.result {
            Some(v) => format!("    assert({call} == {});", v.literal()),
            None => format!("    {call};"),
        });
        body.extend(run.checks.iter().map(|(g, v)| format!("    assert({g}() == {});", v.literal())));
        self.tests.push(format!("func {name}() {{\n{}\n}}", body.join("\n")));
    }
}

impl OracleClient {
    pub fn new() -> Self {
        Self::default()
    }

    /// Every input for `method` that runs without a fault. Setters put the
    /// globals in a chosen state first and getters are read afterwards.
    fn runs(&self, src: &SourceUnit, method: &str) -> Arc<Vec<Run>> {
        let key = (src.text.clone(), method.to_string());
        if let Some(runs) = self.runs.lock().expect("lock").get(&key) {
            return runs.clone();
        }
        let setters: Vec<&Function> = src.functions.iter().filter(|f| f.kind == FunctionKind::Setter).collect();
        let getters: Vec<&Function> = src.functions.iter().filter(|f| f.kind == FunctionKind::Getter).collect();
        let mut runs = Vec::new();
        if let Some(f) = src.function(method) {
            let program = Program::new(src, None);
            let types: Vec<Type> = setters.iter().map(|s| s.params[0].ty).chain(f.params.iter().map(|p| p.ty)).collect();
            'inputs: for mut args in inputs(&types) {
                let mut machine = program.machine(STEP_BUDGET);
                let rest = args.split_off(setters.len());
                let mut setup = Vec::new();
                for (setter, value) in setters.iter().zip(args) {
                    if machine.call(&setter.name, vec![value.clone()]).is_err() {
                        continue 'inputs;
                    }
                    setup.push((setter.name.clone(), value));
                }
                machine.trace.clear();
                let Ok(result) = machine.call(method, rest.clone()) else { continue };
                let trace = std::mem::take(&mut machine.trace);
                let mut checks = Vec::new();
                for getter in &getters {
                    match machine.call(&getter.name, Vec::new()) {
                        Ok(Some(v)) => checks.push((getter.name.clone(), v)),
                        _ => continue 'inputs,
                    }
                }
                runs.push(Run {
                    setup,
                    args: rest,
                    result,
                    checks,
                    trace,
                    lines: machine.hits.lines,
                    branches: machine.hits.branches,
                });
            }
        }
        let runs = Arc::new(runs);
        self.runs.lock().expect("lock").insert(key, runs.clone());
        runs
    }

    fn answer(&self, prompt: &str) -> String {
        if prompt.contains(&format!("## {REPAIR_HEADING}\n")) {
            return "I could not find a fix for this test.".into();
        }
        let Some(numbered) = section_block(prompt, SOURCE_HEADING) else {
            return "There is no source file in this request.".into();
        };
        let Ok(src) = parse("source", &strip_numbers(numbered), Role::Source) else {
            return "The source file does not parse.".into();
        };
        let mut out = Emitter { used: existing_test_names(prompt), tests: Vec::new() };

        if let Some(body) = section_body(prompt, UNCOVERED_HEADING) {
            let (mut lines, mut branches) = parse_uncovered(body);
            for f in identify_muts(&src) {
                let runs = self.runs(&src, &f.name);
                for _ in 0..MAX_PER_METHOD {
                    let gain = |r: &Run| {
                        r.lines.intersection(&lines).count() + r.branches.intersection(&branches).count()
                    };
                    let Some(best) = best_by(&runs, gain).filter(|r| gain(r) > 0) else { break };
                    lines.retain(|l| !best.lines.contains(l));
                    branches.retain(|b| !best.branches.contains(b));
                    out.emit(&f.name, best);
                }
            }
        } else if let Some(body) = section_body(prompt, MUT_HEADING) {
            for (method, goal) in parse_directives(body) {
                let runs = self.runs(&src, &method);
                let pick = match &goal {
                    Goal::Path(want) => runs.iter().find(|r| &r.trace == want).or_else(|| {
                        let want: HashSet<&(Line, bool)> = want.iter().collect();
                        best_by(&runs, |r| r.trace.iter().collect::<HashSet<_>>().intersection(&want).count())
                    }),
                    Goal::Broad => best_by(&runs, |r| r.lines.len() + r.branches.len()),
                };
                if let Some(run) = pick {
                    out.emit(&method, run);
                }
            }
        }
        if out.tests.is_empty() {
            return "I have no further tests to suggest.".into();
        }
        format!("```minilang\n{}\n```\n", out.tests.join("\n\n"))
    }
}

/// First run with the highest score.
fn best_by<'r>(runs: &'r [Run], score: impl Fn(&Run) -> usize) -> Option<&'r Run> {
    let mut best: Option<(&Run, usize)> = None;
    for r in runs {
        let s = score(r);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((r, s));
        }
    }
    best.map(|(r, _)| r)
}

impl LlmClient for OracleClient {
    fn generate(&self, prompt: &str) -> Result<String, LlmError> {
        Ok(self.answer(prompt))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::coverage::{run_tests_with_coverage, DEFAULT_STEP_BUDGET};
    use crate::llm::extract_tests;
    use crate::paths::approximate;
    use crate::prompt::{build_prompt, Guidance, PromptInput, PromptMode, DEFAULT_TOKEN_BUDGET, TEST_DEPENDENCIES};
    use crate::select::{select_paths, PathHistory};

    fn prompt_for(src: &SourceUnit, tests: &str, guidance: Guidance, dict: &[crate::paths::MethodPaths]) -> String {
        build_prompt(&PromptInput {
            mode: PromptMode::Full,
            source: src,
            test_text: tests,
            test_deps: TEST_DEPENDENCIES,
            guidance,
            method_dict: dict,
            failed: &[],
            token_budget: DEFAULT_TOKEN_BUDGET,
        })
        .unwrap()
        .rendered_text()
    }

    #[test]
    fn strips_line_numbers() {
        let src = corpus::parse_pattern();
        assert_eq!(strip_numbers(&src.numbered()).trim_end(), src.text.trim_end());
    }

    #[test]
    fn oracle_tests_follow_requested_paths() {
        let src = corpus::parse_pattern();
        let tests = corpus::parse_pattern_tests();
        let dict = approximate(&src).unwrap();
        let sel = select_paths(&src, &tests, &dict, &mut PathHistory::default(), 3, DEFAULT_STEP_BUDGET);
        let reply = OracleClient::new().generate(&prompt_for(&src, &tests.text, Guidance::Paths(&sel), &dict)).unwrap();
        let ex = extract_tests(&reply, "h");
        assert_eq!(ex.tests.len(), 2, "{reply}");
        let all = format!("{}\n{}", tests.text, ex.tests.iter().map(|t| t.source.as_str()).collect::<Vec<_>>().join("\n"));
        let unit = parse("t.ml0", &all, Role::Test).unwrap();
        let (results, report) = run_tests_with_coverage(&unit, &src, DEFAULT_STEP_BUDGET);
        assert!(results.iter().all(|r| r.passed()), "{results:?}");
        let (_, before) = run_tests_with_coverage(&tests, &src, DEFAULT_STEP_BUDGET);
        assert!(report.combined_pct() > before.combined_pct());
    }

    #[test]
    fn cold_start_emits_one_test_per_method() {
        let src = parse("s.ml0", corpus::FILES.iter().find(|(n, _)| *n == "abs_max.ml0").unwrap().1, Role::Source).unwrap();
        let reply = OracleClient::new().generate(&prompt_for(&src, "", Guidance::Open, &[])).unwrap();
        let names: Vec<String> = extract_tests(&reply, "h").tests.into_iter().map(|t| t.name).collect();
        assert_eq!(names, ["test_absolute_1", "test_maximum_1"]);
    }

    #[test]
    fn globals_are_set_up_and_checked() {
        let text = corpus::FILES.iter().find(|(n, _)| *n == "bank.ml0").unwrap().1;
        let src = parse("s.ml0", text, Role::Source).unwrap();
        let reply = OracleClient::new().generate(&prompt_for(&src, "", Guidance::Open, &[])).unwrap();
        assert!(reply.contains("    setBalance("), "{reply}");
        assert!(reply.contains("    assert(getBalance() == "), "{reply}");
    }

    #[test]
    fn names_avoid_existing_tests() {
        let src = parse("s.ml0", "pub func f() -> int {\n return 1;\n}", Role::Source).unwrap();
        let existing = "func test_f_1() {\n    assert(f() == 1);\n}\n";
        let reply = OracleClient::new().generate(&prompt_for(&src, existing, Guidance::Open, &[])).unwrap();
        assert!(reply.contains("func test_f_2()"), "{reply}");
    }

    #[test]
    fn sequence_and_broken() {
        let seq = SequenceClient::new(["a"]);
        assert_eq!(seq.generate("x").unwrap(), "a");
        assert!(seq.generate("y").is_err());
        assert_eq!(seq.prompts(), ["x", "y"]);
        assert!(extract_tests(&BrokenClient.generate("p").unwrap(), "h").tests.is_empty());
    }
}
