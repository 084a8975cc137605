//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines come out in order and unbuffered.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode, Output};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};

use pathgen_core::cfg::{build_file_cfg, cyclomatic_complexity};
use pathgen_core::config::RunConfig;
use pathgen_core::corpus;
use pathgen_core::coverage::{build_report, executable_lines, parse_coverage_report, run_tests_with_coverage, Hits};
use pathgen_core::coverage::DEFAULT_STEP_BUDGET;
use pathgen_core::llm::{LlmClient, OracleClient, SequenceClient};
use pathgen_core::minilang::{parse, Role};
use pathgen_core::orchestrator::{prepare_text, run};
use pathgen_core::paths::{approximate, explore_call_count, explore_paths};
use pathgen_core::prompt::{PromptMode, FAILED_HEADING};
use pathgen_core::select::{missed_score, pick, select_call_count, select_from_report, Candidate, PathHistory};
use pathgen_core::synth::{program, SynthConfig};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

const EMPTY_PATTERN_PATH: [usize; 6] = [0, 1, 2, 10, 12, 13];
const BANG_PATTERN_PATH: [usize; 12] = [0, 1, 2, 3, 4, 6, 7, 9, 2, 10, 12, 13];
const MAX_SELECTED: u32 = 3;
const API_KEY: &str = "sk-acceptance-0123456789";

fn pathgen(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pathgen"))
        .current_dir(dir)
        .args(args)
        .env("PANTA_API_KEY", API_KEY)
        .output()
        .expect("pathgen runs")
}

fn stdout_json(out: &Output) -> Result<Value, String> {
    if !out.status.success() {
        return Err(format!("exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)));
    }
    serde_json::from_slice(&out.stdout).map_err(|e| format!("bad JSON on stdout: {e}"))
}

fn corpus_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for (name, text) in corpus::FILES {
        fs::write(dir.path().join(name), text).unwrap();
    }
    dir
}

fn reference_graph() -> Check {
    let started = Instant::now();
    let unit = corpus::parse_pattern();
    let file = build_file_cfg(&unit);
    let cfg = file.method("parsePattern").ok_or("parsePattern missing")?;
    let counts = cfg.internal_counts();
    let cyc = cyclomatic_complexity(cfg);
    ensure!(counts == (12, 15), "nodes/edges {counts:?}");
    ensure!(cyc == 5, "cyc {cyc}");

    let dir = corpus_dir();
    let v = stdout_json(&pathgen(dir.path(), &["analyze", "parse_pattern.ml0"]))?;
    let m = &v["methods"][0];
    ensure!(m["cyc"] == 5 && m["nodes"] == 12 && m["edges"] == 15, "analyze reported {m}");
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(format!("CYC 5 from 12 nodes / 15 edges in {elapsed:.2?}"))
}

fn path_count() -> Check {
    let started = Instant::now();
    let unit = corpus::parse_pattern();
    let cfg = build_file_cfg(&unit).method("parsePattern").cloned().ok_or("parsePattern missing")?;
    let paths = explore_paths(&cfg).map_err(|e| e.to_string())?;
    ensure!(paths.len() == 5, "{} paths", paths.len());
    let ids: Vec<&[usize]> = paths.iter().map(|p| p.node_ids.as_slice()).collect();
    ensure!(ids.contains(&&EMPTY_PATTERN_PATH[..]), "upper path missing");
    ensure!(ids.contains(&&BANG_PATTERN_PATH[..]), "lower path missing");
    let union: BTreeSet<usize> = paths.iter().flat_map(|p| p.edge_ids.iter().copied()).collect();
    ensure!(union.len() == cfg.edges.len(), "{} of {} edges covered", union.len(), cfg.edges.len());
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(format!("5 paths, both reference paths present, {} edges covered", union.len()))
}

fn missed_scores() -> Check {
    let src = corpus::parse_pattern();
    let dict = approximate(&src).map_err(|e| e.to_string())?;
    let method = &dict[0];
    let (_, report) = run_tests_with_coverage(&corpus::parse_pattern_tests(), &src, DEFAULT_STEP_BUDGET);
    let missed = parse_coverage_report(&report, &src).map_err(|e| e.to_string())?;
    let score = |ids: &[usize]| {
        method.paths.iter().find(|p| p.node_ids == ids).map(|p| missed_score(method, p, &missed))
    };
    let (upper, lower) = (score(&EMPTY_PATTERN_PATH), score(&BANG_PATTERN_PATH));
    ensure!(upper == Some(2) && lower == Some(5), "scores {upper:?} and {lower:?}");
    Ok("scores 2 and 5".into())
}

fn path_properties() -> Check {
    let started = Instant::now();
    let programs = 250;
    for seed in 0..programs {
        let text = program(seed, SynthConfig::default());
        let unit = parse("p.ml0", &text, Role::Source).map_err(|e| format!("seed {seed}: {e}"))?;
        let first = approximate(&unit).map_err(|e| e.to_string())?;
        let second = approximate(&unit).map_err(|e| e.to_string())?;
        ensure!(first == second, "seed {seed}: nondeterministic");
        for m in &first {
            let cyc = cyclomatic_complexity(&m.cfg);
            ensure!(m.paths.len() <= cyc, "seed {seed} {}: {} paths > CYC {cyc}", m.method, m.paths.len());
            let mut seen = BTreeSet::new();
            for p in &m.paths {
                let before = seen.len();
                seen.extend(p.edge_ids.iter().copied());
                ensure!(seen.len() > before, "seed {seed} {}: path {} adds no edge", m.method, p.key);
            }
            ensure!(seen.len() == m.cfg.edges.len(), "seed {seed} {}: edges uncovered", m.method);
        }
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    Ok(format!("{programs} programs in {elapsed:.2?}"))
}

fn rescan(cands: &[Candidate]) -> Option<(usize, usize)> {
    let best = cands.iter().map(|c| c.missed_score).max()?;
    let fewest = cands.iter().map(|c| c.selected_count).min()?;
    let exploit = cands.iter().find(|c| c.missed_score == best)?.index;
    let explore = cands.iter().find(|c| c.selected_count == fewest)?.index;
    Some((exploit, explore))
}

fn selection_laws() -> Check {
    let started = Instant::now();
    let mut rng = StdRng::seed_from_u64(2024);
    for round in 0..1000 {
        let n = rng.gen_range(0..12);
        let cands: Vec<Candidate> = (0..n)
            .map(|i| Candidate {
                index: i,
                missed_score: rng.gen_range(1..6),
                selected_count: rng.gen_range(0..MAX_SELECTED),
            })
            .collect();
        ensure!(pick(&cands) == rescan(&cands), "set {round}: {cands:?}");
    }
    let mut selections = 0;
    for seed in 0..20 {
        let unit = parse("p.ml0", &program(seed, SynthConfig::default()), Role::Source).map_err(|e| e.to_string())?;
        let dict = approximate(&unit).map_err(|e| e.to_string())?;
        let lines: Vec<u32> = executable_lines(&unit).into_iter().collect();
        let mut history = PathHistory::default();
        for _ in 0..10 {
            let mut hits = Hits::default();
            for &l in &lines {
                if rng.gen_bool(0.5) {
                    hits.lines.insert(l);
                    hits.branches.insert((l, rng.gen_bool(0.5)));
                }
            }
            let report = build_report(&unit, &hits);
            select_from_report(&unit, &report, &dict, &mut history, MAX_SELECTED).map_err(|e| e.to_string())?;
            selections += 1;
            ensure!(history.max_count() <= MAX_SELECTED, "seed {seed}: count {}", history.max_count());
        }
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!("1000 sets match the rescan, {selections} selections within the cap, {elapsed:.2?}"))
}

fn convergence() -> Check {
    let started = Instant::now();
    let dir = corpus_dir();
    let mut args = vec!["generate", "--client", "scripted:oracle", "--json", "--jobs", "4"];
    args.extend(corpus::FILES.iter().map(|(name, _)| *name));
    let reports = stdout_json(&pathgen(dir.path(), &args))?;
    let reports = reports.as_array().ok_or("expected an array of reports")?;
    ensure!(reports.len() == 10, "{} reports", reports.len());
    for r in reports {
        let name = &r["source"];
        ensure!(r["stop_reason"] == "fullCoverage", "{name}: stop {}", r["stop_reason"]);
        ensure!(r["line_coverage"] == 100.0 && r["branch_coverage"] == 100.0, "{name}: not fully covered");
        let iters = r["iterations"].as_array().ok_or("iterations missing")?;
        ensure!(iters.len() as u64 <= r["max_cyc"].as_u64().unwrap_or(0), "{name}: {} iterations", iters.len());
        let (mut cov, mut size) = (r["initial_coverage"].as_f64().unwrap_or(0.0), 0);
        for it in iters {
            let after = it["coverage_after"].as_f64().unwrap_or(-1.0);
            let now = it["suite_size"].as_u64().unwrap_or(0);
            ensure!(after >= cov && now >= size, "{name}: regression at iteration {}", it["iter"]);
            ensure!(it["suite_passing"] == it["suite_size"], "{name}: failing test retained");
            cov = after;
            size = now;
        }
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!("10 files at 100% line and branch coverage in {elapsed:.2?}"))
}

fn plateau() -> Check {
    let started = Instant::now();
    let dir = corpus_dir();
    fs::write(dir.path().join("parse_pattern_test.ml0"), corpus::PARSE_PATTERN_TESTS).unwrap();
    let r = stdout_json(&pathgen(
        dir.path(),
        &["generate", "parse_pattern.ml0", "--client", "scripted:broken", "--json"],
    ))?;
    ensure!(r["stop_reason"] == "plateau", "stop {}", r["stop_reason"]);
    let n = r["iterations"].as_array().map_or(0, Vec::len);
    ensure!(n == 3, "{n} iterations");
    let after = fs::read_to_string(dir.path().join("parse_pattern_test.ml0")).unwrap();
    ensure!(after == corpus::PARSE_PATTERN_TESTS, "test file changed");
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!("plateau after 3 flat iterations, test file unchanged, {elapsed:.2?}"))
}

const COMPILE_ERROR: &str = "```\nfunc test_r() {\n    assert(parsePatern(\"a\") == 101);\n}\n```";
const RUNTIME_ERROR: &str = "```\nfunc test_r() {\n    assert(parsePattern(\"a\") / 0 == 1);\n}\n```";
const FIXED: &str = "```\nfunc test_r() {\n    assert(parsePattern(\"a\") == 101);\n}\n```";

fn repair() -> Check {
    let run_with = |replies: &[&str]| {
        let mut p = prepare_text("p.ml0", corpus::PARSE_PATTERN, None, None).unwrap();
        let client = SequenceClient::new(replies.iter().copied());
        let report = run(&mut p, &RunConfig::default(), &client, &mut PathHistory::default()).unwrap();
        (p, report, client.prompts())
    };

    let (p, report, prompts) = run_with(&[COMPILE_ERROR, RUNTIME_ERROR, FIXED]);
    let first = &report.iterations[0];
    ensure!(first.repaired == 1 && first.abandoned == 0, "first fixture: {first:?}");
    ensure!(p.test_text.contains("func test_r()"), "repaired test not retained");
    ensure!(prompts[1].contains("compilation error"), "first repair lacks the compile error");
    ensure!(prompts[2].contains("division by zero"), "second repair lacks the runtime error");
    ensure!(report.failed_feedback.is_empty(), "feedback not empty");

    let (p, report, prompts) = run_with(&[COMPILE_ERROR, COMPILE_ERROR, RUNTIME_ERROR, RUNTIME_ERROR]);
    let first = &report.iterations[0];
    ensure!(first.repaired == 0 && first.abandoned == 1, "second fixture: {first:?}");
    ensure!(report.failed_feedback.len() == 1, "{} feedback entries", report.failed_feedback.len());
    ensure!(!p.test_text.contains("test_r"), "failed test retained");
    ensure!(prompts.get(4).is_some_and(|t| t.contains(FAILED_HEADING)), "next prompt lacks the failure");
    Ok("two-step repair retained; exhausted repair lands in feedback".into())
}

fn mode_isolation() -> Check {
    let go = |mode: PromptMode| {
        let mut p = prepare_text("p.ml0", corpus::PARSE_PATTERN, None, None).unwrap();
        let config = RunConfig { mode, ..RunConfig::default() };
        let (explore, select) = (explore_call_count(), select_call_count());
        let report = run(&mut p, &config, &OracleClient::new(), &mut PathHistory::default()).unwrap();
        (report, explore_call_count() - explore, select_call_count() - select)
    };

    for mode in [PromptMode::Baseline, PromptMode::IterativeBasic] {
        let (_, explore, select) = go(mode);
        ensure!(explore == 0 && select == 0, "{mode}: {explore} explore and {select} select calls");
    }
    let (_, explore, select) = go(PromptMode::Full);
    ensure!(explore > 0 && select > 0, "full mode made no path calls, counters are not wired");

    let (report, explore, select) = go(PromptMode::IterativeCov);
    ensure!(explore == 0 && select == 0, "iterative_cov: {explore} explore and {select} select calls");
    let later = &report.prompts[1..];
    ensure!(!later.is_empty(), "iterative_cov sent a single prompt");
    for text in later {
        ensure!(text.contains("Uncovered lines: "), "uncovered lines missing");
        ensure!(!text.contains("to cover the path"), "path directive present");
        ensure!(!text.contains(" is True") && !text.contains(" is False"), "path rendering present");
    }
    Ok("no path calls in baseline or iterative_basic; iterative_cov prompts list uncovered lines only".into())
}

/// OpenAI-shaped endpoint answering every request with the oracle's reply.
fn mock_endpoint() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let oracle = Arc::new(OracleClient::new());
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap_or(0);
                }
            }
            let mut buf = vec![0; len];
            if reader.read_exact(&mut buf).is_err() {
                continue;
            }
            let request: Value = serde_json::from_slice(&buf).unwrap_or_default();
            let prompt = request["messages"].as_array().and_then(|m| m.last()).map_or("", |m| {
                m["content"].as_str().unwrap_or("")
            });
            let reply = oracle.generate(prompt).unwrap_or_default();
            let body = json!({"choices": [{"message": {"role": "assistant", "content": reply}}]}).to_string();
            let mut stream = stream;
            let _ = write!(
                stream,
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
        }
    });
    url
}

fn files_in(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .flatten()
        .filter(|e| e.path().is_file())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
        .collect();
    out.sort();
    out
}

fn replay_determinism() -> Check {
    let url = mock_endpoint();
    let live = corpus_dir();
    let replay = corpus_dir();
    let trace = live.path().join("trace");
    let generate = |dir: &Path, client: &str| {
        pathgen(
            dir,
            &[
                "generate",
                "classify.ml0",
                "--client",
                client,
                "--endpoint",
                &url,
                "--trace-dir",
                "trace",
                "--dump-prompt",
                "first.txt",
                "--json",
            ],
        )
    };

    let recorded = generate(live.path(), "live");
    let recorded_report = stdout_json(&recorded)?;
    ensure!(recorded_report["iterations"].as_array().map_or(0, Vec::len) > 1, "live run too short to be useful");
    let replay_arg = format!("replay:{}", trace.display());
    let replayed = generate(replay.path(), &replay_arg);
    stdout_json(&replayed)?;

    ensure!(recorded.stdout == replayed.stdout, "reports differ");
    let test_file = |dir: &Path| fs::read(dir.join("classify_test.ml0")).unwrap();
    ensure!(test_file(live.path()) == test_file(replay.path()), "final test files differ");
    ensure!(fs::read(live.path().join("first.txt")).unwrap() == fs::read(replay.path().join("first.txt")).unwrap(),
        "first prompts differ");
    let exchanges = files_in(&trace);
    ensure!(exchanges == files_in(&replay.path().join("trace")), "recorded prompts or replies differ");

    let wire = files_in(&trace.join("wire"));
    ensure!(!wire.is_empty(), "no wire log written");
    let leaked = exchanges
        .iter()
        .chain(wire.iter())
        .any(|(_, bytes)| String::from_utf8_lossy(bytes).contains(API_KEY));
    ensure!(!leaked, "API key written to the trace");
    Ok(format!("{} exchanges replayed byte-identically", exchanges.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("reference graph complexity", reference_graph),
        ("reference path count and edge coverage", path_count),
        ("reference missed scores", missed_scores),
        ("path properties on random programs", path_properties),
        ("selection laws", selection_laws),
        ("offline convergence on the corpus", convergence),
        ("plateau stop", plateau),
        ("repair semantics", repair),
        ("ablation mode isolation", mode_isolation),
        ("replay determinism", replay_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
