//! Bundled MiniLang sample programs used by tests, benches and the CLI demo.

use crate::minilang::{parse, Role, SourceUnit};

pub const PARSE_PATTERN: &str = include_str!("../corpus/parse_pattern.ml0");

/// Suite that leaves line 12 missed and lines 11 and 17 partial.
pub const PARSE_PATTERN_TESTS: &str = include_str!("../corpus/parse_pattern_test.ml0");

/// (file name, source) for every bundled subject program.
pub const FILES: &[(&str, &str)] = &[
    ("parse_pattern.ml0", PARSE_PATTERN),
    ("classify.ml0", include_str!("../corpus/classify.ml0")),
    ("abs_max.ml0", include_str!("../corpus/abs_max.ml0")),
    ("count_vowels.ml0", include_str!("../corpus/count_vowels.ml0")),
    ("fizzbuzz.ml0", include_str!("../corpus/fizzbuzz.ml0")),
    ("gcd.ml0", include_str!("../corpus/gcd.ml0")),
    ("triangle.ml0", include_str!("../corpus/triangle.ml0")),
    ("strings.ml0", include_str!("../corpus/strings.ml0")),
    ("bank.ml0", include_str!("../corpus/bank.ml0")),
    ("search.ml0", include_str!("../corpus/search.ml0")),
];

pub fn parse_pattern() -> SourceUnit {
    parse("parse_pattern.ml0", PARSE_PATTERN, Role::Source).expect("bundled corpus parses")
}

pub fn parse_pattern_tests() -> SourceUnit {
    parse("parse_pattern_test.ml0", PARSE_PATTERN_TESTS, Role::Test).expect("bundled corpus parses")
}
