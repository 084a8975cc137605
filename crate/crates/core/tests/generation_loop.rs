use pathgen_core::config::RunConfig;
use pathgen_core::corpus;
use pathgen_core::llm::{BrokenClient, LlmClient, OracleClient, SequenceClient};
use pathgen_core::orchestrator::{prepare_text, run, Prepared, RunReport, StopReason};
use pathgen_core::prompt::{PromptMode, FAILED_HEADING};
use pathgen_core::select::PathHistory;

fn fresh(name: &str, text: &str) -> Prepared {
    prepare_text(name, text, None, None).unwrap()
}

fn go(p: &mut Prepared, mode: PromptMode, client: &dyn LlmClient) -> RunReport {
    let config = RunConfig { mode, ..RunConfig::default() };
    run(p, &config, client, &mut PathHistory::default()).unwrap()
}

fn assert_monotone(report: &RunReport) {
    let mut size = 0;
    let mut cov = report.initial_coverage;
    for r in &report.iterations {
        assert_eq!(r.suite_passing, r.suite_size, "{}: failing test kept", report.source);
        assert!(r.suite_size >= size);
        assert!(r.coverage_after >= cov);
        size = r.suite_size;
        cov = r.coverage_after;
    }
}

#[test]
fn oracle_converges_on_every_corpus_file() {
    for (name, text) in corpus::FILES {
        let mut p = fresh(name, text);
        let report = go(&mut p, PromptMode::Full, &OracleClient::new());
        assert_eq!(report.stop_reason, StopReason::FullCoverage, "{}", report.summary_table());
        assert_eq!((report.line_coverage, report.branch_coverage), (100.0, 100.0));
        assert!(report.iterations.len() <= report.max_cyc);
        assert_eq!(report.iterations[0].strategy, "cold_start");
        assert_monotone(&report);
    }
}

#[test]
fn coverage_mode_also_converges() {
    for (name, text) in corpus::FILES {
        let mut p = fresh(name, text);
        let report = go(&mut p, PromptMode::IterativeCov, &OracleClient::new());
        assert_monotone(&report);
        assert!(report.iterations.iter().skip(1).all(|r| r.strategy == "uncovered"));
    }
}

#[test]
fn broken_client_plateaus_without_touching_the_file() {
    let mut p = fresh("p.ml0", corpus::PARSE_PATTERN);
    let before = p.test_text.clone();
    let report = go(&mut p, PromptMode::Full, &BrokenClient);
    assert_eq!(report.stop_reason, StopReason::Plateau);
    assert_eq!(report.iterations.len(), 3);
    assert_eq!(p.test_text, before);
}

const COMPILE_ERROR: &str = "```\nfunc test_r() {\n    assert(parsePatern(\"a\") == 101);\n}\n```";
const RUNTIME_ERROR: &str = "```\nfunc test_r() {\n    assert(parsePattern(\"a\") / 0 == 1);\n}\n```";
const FIXED: &str = "```\nfunc test_r() {\n    assert(parsePattern(\"a\") == 101);\n}\n```";

#[test]
fn repair_fixes_compile_then_runtime_error() {
    let mut p = fresh("p.ml0", corpus::PARSE_PATTERN);
    let client = SequenceClient::new([COMPILE_ERROR, RUNTIME_ERROR, FIXED]);
    let report = go(&mut p, PromptMode::Full, &client);
    let first = &report.iterations[0];
    assert_eq!((first.generated, first.passed, first.repaired, first.abandoned), (1, 0, 1, 0));
    assert!(p.test_text.contains("func test_r()"));
    let prompts = client.prompts();
    assert!(prompts[1].contains("compilation error"), "{}", prompts[1]);
    assert!(prompts[2].contains("runtime error: division by zero"), "{}", prompts[2]);
    // the next generation prompt carries no failure feedback
    assert!(!prompts[3].contains(FAILED_HEADING));
}

#[test]
fn repair_budget_exhausted_becomes_feedback() {
    let mut p = fresh("p.ml0", corpus::PARSE_PATTERN);
    let client = SequenceClient::new([COMPILE_ERROR, COMPILE_ERROR, RUNTIME_ERROR, RUNTIME_ERROR]);
    let report = go(&mut p, PromptMode::Full, &client);
    let first = &report.iterations[0];
    assert_eq!((first.repaired, first.abandoned), (0, 1));
    assert_eq!(report.failed_feedback.len(), 1);
    assert!(report.failed_feedback[0].error.contains("division by zero"));
    assert!(!p.test_text.contains("test_r"));
    let prompts = client.prompts();
    assert_eq!(prompts.len(), 4 + 2, "one generation and three repairs, then two more flat iterations");
    assert!(prompts[4].contains(FAILED_HEADING));
}
