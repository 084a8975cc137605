use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};

use pathgen_bench::{deep, programs};
use pathgen_core::cfg::build_file_cfg;
use pathgen_core::corpus;
use pathgen_core::coverage::{run_tests_with_coverage, DEFAULT_STEP_BUDGET};
use pathgen_core::llm::OracleClient;
use pathgen_core::orchestrator::{prepare_text, run};
use pathgen_core::config::RunConfig;
use pathgen_core::paths::approximate;
use pathgen_core::select::PathHistory;
use pathgen_core::synth::{program, SynthConfig};

fn analysis(c: &mut Criterion) {
    let small = programs(50, SynthConfig::default());
    let large = programs(20, deep());

    c.bench_function("synth_50_programs", |b| {
        b.iter(|| (0..50).map(|s| program(black_box(s), SynthConfig::default()).len()).sum::<usize>())
    });
    c.bench_function("cfg_50_programs", |b| b.iter(|| small.iter().map(build_file_cfg).count()));
    c.bench_function("paths_50_programs", |b| b.iter(|| small.iter().map(|u| approximate(u).unwrap()).count()));
    c.bench_function("paths_20_deep_programs", |b| b.iter(|| large.iter().map(|u| approximate(u).unwrap()).count()));

    let src = corpus::parse_pattern();
    let tests = corpus::parse_pattern_tests();
    c.bench_function("coverage_parse_pattern", |b| {
        b.iter(|| run_tests_with_coverage(black_box(&tests), &src, DEFAULT_STEP_BUDGET))
    });
}

fn generation(c: &mut Criterion) {
    c.bench_function("oracle_loop_corpus", |b| {
        b.iter_batched(
            || corpus::FILES.iter().map(|(n, t)| prepare_text(n, t, None, None).unwrap()).collect::<Vec<_>>(),
            |mut files| {
                let client = OracleClient::new();
                for p in &mut files {
                    run(p, &RunConfig::default(), &client, &mut PathHistory::default()).unwrap();
                }
            },
            BatchSize::LargeInput,
        )
    });
}

criterion_group!(benches, analysis, generation);
criterion_main!(benches);
