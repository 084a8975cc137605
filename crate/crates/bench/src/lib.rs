//! Shared inputs for the benchmarks under `benches/`.

use pathgen_core::minilang::{parse, Role, SourceUnit};
use pathgen_core::synth::{program, SynthConfig};

/// Parsed synthetic programs for seeds `0..count`.
pub fn programs(count: u64, cfg: SynthConfig) -> Vec<SourceUnit> {
    (0..count)
        .map(|seed| parse(format!("s{seed}.ml0"), &program(seed, cfg), Role::Source).expect("synthetic program checks"))
        .collect()
}

/// A deeper configuration than the default, for the larger benchmark inputs.
pub fn deep() -> SynthConfig {
    SynthConfig { functions: 4, max_depth: 4, max_block: 3 }
}
