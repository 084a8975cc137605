//! MiniLang: a small, brace-delimited, statically typed language used as
//! the subject language for analysis and test generation.
//!
//! Source files hold the functions under test; test files hold `test_*`
//! functions made of `assert` statements. Both share one flat namespace
//! when executed, so a test file is checked against its source file with
//! [`link`].

mod ast;
mod check;
mod lexer;
mod parser;
mod pretty;

pub use ast::*;
pub use pretty::{pretty_expr, pretty_function, pretty_unit, quote};

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[error("syntax error at line {line}: {message}")]
pub struct SyntaxError {
    pub line: Line,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[error("type error at line {line}: {message}")]
pub struct TypeError {
    pub line: Line,
    pub message: String,
}

/// Any failure that keeps a file from compiling.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CompileError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error(transparent)]
    Type(#[from] TypeError),
}

impl CompileError {
    pub fn line(&self) -> Line {
        match self {
            CompileError::Syntax(e) => e.line,
            CompileError::Type(e) => e.line,
        }
    }
}

/// Parses and checks a MiniLang file.
///
/// Test files are checked leniently: calls to functions that are not
/// defined in the file itself are assumed to resolve against the source
/// file later (see [`link`]).
pub fn parse(path: impl Into<String>, text: &str, role: Role) -> Result<SourceUnit, CompileError> {
    let items = parser::parse_items(text)?;
    let mut unit = SourceUnit {
        path: path.into(),
        role,
        text: text.to_string(),
        lines: text.lines().map(str::to_string).collect(),
        globals: items.globals,
        functions: items.functions,
    };
    classify(&mut unit);
    check::check_unit(&unit, None)?;
    Ok(unit)
}

/// Checks a test file against the source file it exercises.
pub fn link(source: &SourceUnit, tests: &SourceUnit) -> Result<(), CompileError> {
    check::check_unit(tests, Some(source))?;
    Ok(())
}

fn classify(unit: &mut SourceUnit) {
    let globals: Vec<String> = unit.globals.iter().map(|g| g.name.clone()).collect();
    let is_global = |name: &str| globals.iter().any(|g| g == name);
    for f in &mut unit.functions {
        f.kind = if unit.role == Role::Test && f.name.starts_with("test_") {
            FunctionKind::Test
        } else if is_getter(f, &is_global) {
            FunctionKind::Getter
        } else if is_setter(f, &is_global) {
            FunctionKind::Setter
        } else {
            FunctionKind::Regular
        };
    }
}

/// `func name() -> T { return global; }`
fn is_getter(f: &Function, is_global: &dyn Fn(&str) -> bool) -> bool {
    if !f.params.is_empty() || f.ret.is_none() || f.body.len() != 1 {
        return false;
    }
    matches!(
        &f.body[0].kind,
        StmtKind::Return(Some(Expr { kind: ExprKind::Var(v), .. })) if is_global(v)
    )
}

/// `func name(p: T) { global = p; }`
fn is_setter(f: &Function, is_global: &dyn Fn(&str) -> bool) -> bool {
    if f.params.len() != 1 || f.ret.is_some() || f.body.len() != 1 {
        return false;
    }
    match &f.body[0].kind {
        StmtKind::Assign { name, value: Expr { kind: ExprKind::Var(v), .. } } => {
            is_global(name) && *v == f.params[0].name
        }
        _ => false,
    }
}

/// Public, non-helper functions in source order.
pub fn identify_muts(unit: &SourceUnit) -> Vec<&Function> {
    unit.functions
        .iter()
        .filter(|f| f.visibility == Visibility::Public && f.kind == FunctionKind::Regular)
        .collect()
}
