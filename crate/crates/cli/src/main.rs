use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;

use pathgen_core::cfg::build_method_cfg;
use pathgen_core::config::{ClientSpec, RunConfig};
use pathgen_core::coverage::CoverageReport;
use pathgen_core::minilang::{identify_muts, parse, Role};
use pathgen_core::orchestrator::{self, prepare, Prepared, RunError, RunReport};
use pathgen_core::paths::approximate;
use pathgen_core::prompt::{build_prompt, Guidance, PromptInput, PromptMode, TEST_DEPENDENCIES};
use pathgen_core::select::{select_from_report, PathHistory};

#[derive(Parser)]
#[command(name = "pathgen", version, about = "Path-guided test generation for MiniLang")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Control flow graphs, complexity and approximated paths.
    Analyze {
        src: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Run a test file and report coverage of the source file.
    Cover {
        src: PathBuf,
        test: PathBuf,
        /// Print the JSON report instead of a summary.
        #[arg(long)]
        json: bool,
    },
    /// Select paths for the next generation round.
    Select(SelectArgs),
    /// Run the generation loop.
    Generate(GenerateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Dot,
}

#[derive(Args)]
struct SelectArgs {
    src: PathBuf,
    #[arg(long, required_unless_present = "coverage")]
    test: Option<PathBuf>,
    /// Coverage report from `cover --json`, instead of running the tests.
    #[arg(long, conflicts_with = "dump_prompt")]
    coverage: Option<PathBuf>,
    /// Selection history; read and updated in place.
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    max_selected: u32,
    /// Write the generation prompt built from this selection.
    #[arg(long, requires = "test")]
    dump_prompt: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(required = true)]
    sources: Vec<PathBuf>,
    /// Test file (single source only); defaults to <stem>_test.ml0.
    #[arg(long)]
    test: Option<PathBuf>,
    /// JSON run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<PromptMode>,
    /// live, replay:<dir>, scripted:oracle or scripted:broken.
    #[arg(long)]
    client: Option<ClientSpec>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    max_selected: Option<u32>,
    #[arg(long)]
    no_increase_limit: Option<usize>,
    #[arg(long)]
    repair_attempts: Option<usize>,
    /// Write the first prompt sent (single source only).
    #[arg(long)]
    dump_prompt: Option<PathBuf>,
    /// Record every prompt and reply here.
    #[arg(long)]
    trace_dir: Option<PathBuf>,
    #[arg(long)]
    history: Option<PathBuf>,
    /// Print run reports as JSON.
    #[arg(long)]
    json: bool,
    /// Files processed in parallel.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

/// Domain failure, reported as JSON on stderr with exit code 1.
struct Failure(serde_json::Value);

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        Failure(e.to_json())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure(json!({"error": "error", "message": format!("{e:#}")}))
    }
}

fn fail(kind: &str, message: impl Into<String>) -> Failure {
    Failure(json!({"error": kind, "message": message.into()}))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Analyze { src, format } => analyze(&src, format),
        Command::Cover { src, test, json } => cover(&src, &test, json),
        Command::Select(args) => select(&args),
        Command::Generate(args) => generate(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(diag)) => {
            eprintln!("{diag}");
            ExitCode::from(1)
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| fail("io_error", format!("{}: {e}", path.display())))
}

fn load_source(path: &Path) -> Result<pathgen_core::minilang::SourceUnit, Failure> {
    let text = read(path)?;
    let label = path.to_string_lossy().into_owned();
    parse(label.clone(), &text, Role::Source).map_err(|source| RunError::Compile { path: label, source }.into())
}

/// Writes to stdout; a closed pipe is not an error.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
}

fn print_json(value: &impl serde::Serialize) {
    emit(&(serde_json::to_string_pretty(value).expect("serialisable") + "\n"));
}

fn analyze(src: &Path, format: Format) -> Result<(), Failure> {
    let unit = load_source(src)?;
    let dict = approximate(&unit).map_err(RunError::from)?;
    match format {
        Format::Dot => {
            for f in identify_muts(&unit) {
                emit(&build_method_cfg(f).to_dot());
            }
        }
        Format::Json => {
            let methods: Vec<_> = dict
                .iter()
                .map(|m| {
                    let (nodes, edges) = m.cfg.internal_counts();
                    let mut v = m.to_json();
                    v["nodes"] = nodes.into();
                    v["edges"] = edges.into();
                    v["path_keys"] = m.paths.iter().map(|p| p.key.clone()).collect::<Vec<_>>().into();
                    v
                })
                .collect();
            print_json(&json!({"file": unit.path, "methods": methods}));
        }
    }
    Ok(())
}

fn cover(src: &Path, test: &Path, as_json: bool) -> Result<(), Failure> {
    let prepared = prepare(src, Some(test))?;
    if prepared.created {
        return Err(fail("io_error", format!("{}: no such test file", test.display())));
    }
    let (results, report) = prepared.coverage(RunConfig::default().step_budget);
    if as_json {
        emit(&report.to_json());
    } else {
        let mut text = String::new();
        for r in &results {
            let detail = if r.passed() { String::new() } else { format!("  {}", r.error_message) };
            text += &format!("{:<32} {:?}{detail}\n", r.test_name, r.verdict);
        }
        text += &format!(
            "line {:.1}%  branch {:.1}%  combined {:.1}%\n",
            report.line_coverage_pct(),
            report.branch_coverage_pct(),
            report.combined_pct()
        );
        emit(&text);
    }
    Ok(())
}

fn load_history(path: Option<&Path>) -> Result<PathHistory, Failure> {
    match path {
        Some(p) => PathHistory::load(p).map_err(|e| fail("io_error", format!("{}: {e}", p.display()))),
        None => Ok(PathHistory::default()),
    }
}

fn save_history(path: Option<&Path>, history: &PathHistory) -> Result<(), Failure> {
    match path {
        Some(p) => history.save(p).map_err(|e| fail("io_error", format!("{}: {e}", p.display()))),
        None => Ok(()),
    }
}

fn select(args: &SelectArgs) -> Result<(), Failure> {
    let (source, prepared, report) = match (&args.test, &args.coverage) {
        (_, Some(cov)) => {
            let source = load_source(&args.src)?;
            let report = CoverageReport::from_json(&read(cov)?)
                .map_err(|e| fail("invalid_report", format!("{}: {e}", cov.display())))?;
            (source, None, report)
        }
        (Some(test), None) => {
            let prepared = prepare(&args.src, Some(test))?;
            let (_, report) = prepared.coverage(RunConfig::default().step_budget);
            (prepared.source.clone(), Some(prepared), report)
        }
        (None, None) => unreachable!("clap requires --test or --coverage"),
    };
    let dict = approximate(&source).map_err(RunError::from)?;
    let mut history = load_history(args.history.as_deref())?;
    let cold = report.combined_pct() == 0.0;
    let selected = if cold {
        Vec::new()
    } else {
        select_from_report(&source, &report, &dict, &mut history, args.max_selected)
            .map_err(|e| fail("invalid_report", e.to_string()))?
    };
    save_history(args.history.as_deref(), &history)?;
    if let (Some(out), Some(prepared)) = (&args.dump_prompt, &prepared) {
        let guidance = if cold { Guidance::Open } else { Guidance::Paths(&selected) };
        let prompt = build_prompt(&PromptInput {
            mode: PromptMode::Full,
            source: &source,
            test_text: &prepared.test_text,
            test_deps: TEST_DEPENDENCIES,
            guidance,
            method_dict: &dict,
            failed: &[],
            token_budget: RunConfig::default().token_budget,
        })
        .map_err(|e| fail("prompt_too_large", e.to_string()))?;
        fs::write(out, prompt.rendered_text()).map_err(|e| fail("io_error", format!("{}: {e}", out.display())))?;
    }
    print_json(&selected);
    Ok(())
}

fn run_config(args: &GenerateArgs) -> Result<RunConfig, Failure> {
    let mut config = match &args.config {
        Some(path) => serde_json::from_str(&read(path)?)
            .map_err(|e| fail("config_error", format!("{}: {e}", path.display())))?,
        None => RunConfig::default(),
    };
    if let Some(m) = args.mode {
        config.mode = m;
    }
    if let Some(c) = &args.client {
        config.client = c.clone();
    }
    if let Some(e) = &args.endpoint {
        config.llm.endpoint_url = e.clone();
    }
    if let Some(m) = &args.model {
        config.llm.model = m.clone();
    }
    if let Some(n) = args.max_selected {
        config.max_selected = n;
    }
    if let Some(n) = args.no_increase_limit {
        config.no_increase_limit = n;
    }
    if let Some(n) = args.repair_attempts {
        config.repair_attempts = n;
    }
    if args.trace_dir.is_some() {
        config.trace_dir = args.trace_dir.clone();
    }
    if args.history.is_some() {
        config.history = args.history.clone();
    }
    config.validate().map_err(|e| fail("config_error", e))?;
    Ok(config)
}

/// With several sources, trace, replay and history locations are
/// directories holding one entry per source stem.
fn per_file(config: &RunConfig, src: &Path, several: bool) -> RunConfig {
    if !several {
        return config.clone();
    }
    let stem = src.file_stem().map_or_else(|| "source".into(), |s| s.to_string_lossy().into_owned());
    let mut c = config.clone();
    c.trace_dir = config.trace_dir.as_ref().map(|d| d.join(&stem));
    c.history = config.history.as_ref().map(|d| d.join(format!("{stem}.json")));
    if let ClientSpec::Replay(dir) = &config.client {
        c.client = ClientSpec::Replay(dir.join(&stem));
    }
    c
}

fn generate_one(src: &Path, test: Option<&Path>, config: &RunConfig) -> Result<RunReport, Failure> {
    let mut prepared: Prepared = prepare(src, test)?;
    let client = config.build_client().map_err(|e| fail("client_error", e.to_string()))?;
    let mut history = load_history(config.history.as_deref())?;
    let report = orchestrator::run(&mut prepared, config, client.as_ref(), &mut history)?;
    save_history(config.history.as_deref(), &history)?;
    Ok(report)
}

fn generate(args: &GenerateArgs) -> Result<(), Failure> {
    let several = args.sources.len() > 1;
    if several && (args.test.is_some() || args.dump_prompt.is_some()) {
        return Err(fail("usage_error", "--test and --dump-prompt take a single source file"));
    }
    let config = run_config(args)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.max(1))
        .build()
        .context("starting worker threads")?;
    let results: Vec<Result<RunReport, Failure>> = pool.install(|| {
        args.sources
            .par_iter()
            .map(|src| generate_one(src, args.test.as_deref(), &per_file(&config, src, several)))
            .collect()
    });
    let mut reports = Vec::new();
    for r in results {
        reports.push(r?);
    }
    if let Some(out) = &args.dump_prompt {
        let first = reports[0].prompts.first().cloned().unwrap_or_default();
        fs::write(out, first).map_err(|e| fail("io_error", format!("{}: {e}", out.display())))?;
    }
    if args.json {
        if several {
            print_json(&reports);
        } else {
            emit(&reports[0].to_json());
        }
    } else {
        for r in &reports {
            emit(&r.summary_table());
        }
    }
    Ok(())
}
