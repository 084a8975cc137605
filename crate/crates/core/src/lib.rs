//! Coverage-guided, path-directed test generation for MiniLang programs.

pub mod cfg;
pub mod config;
pub mod corpus;
pub mod coverage;
pub mod llm;
pub mod minilang;
pub mod orchestrator;
pub mod paths;
pub mod prompt;
pub mod select;
pub mod synth;
