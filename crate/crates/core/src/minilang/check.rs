//! Static checks: name resolution, typing, definite return, reachability.

use std::collections::{HashMap, HashSet};

use super::ast::*;
use super::TypeError;

/// Result type of an expression while checking. `Unknown` only arises from
/// calls to functions that live in another file (lenient test-file mode).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ty {
    Known(Type),
    Void,
    Unknown,
}

impl Ty {
    fn show(self) -> String {
        match self {
            Ty::Known(t) => t.to_string(),
            Ty::Void => "void".to_string(),
            Ty::Unknown => "unknown".to_string(),
        }
    }

    fn compatible(self, want: Type) -> bool {
        matches!(self, Ty::Unknown) || self == Ty::Known(want)
    }
}

fn err<T>(line: Line, message: impl Into<String>) -> Result<T, TypeError> {
    Err(TypeError { line, message: message.into() })
}

/// Signatures and globals visible to the unit being checked.
struct Env<'a> {
    functions: HashMap<&'a str, Signature>,
    globals: HashMap<&'a str, Type>,
    /// Unresolved calls are tolerated (test file checked without its source).
    lenient: bool,
}

pub(crate) fn check_unit(unit: &SourceUnit, externals: Option<&SourceUnit>) -> Result<(), TypeError> {
    let mut env = Env { functions: HashMap::new(), globals: HashMap::new(), lenient: false };
    match externals {
        Some(ext) => {
            for f in &ext.functions {
                env.functions.insert(&f.name, f.signature());
            }
            for g in &ext.globals {
                env.globals.insert(&g.name, g.ty);
            }
        }
        None => env.lenient = unit.role == Role::Test,
    }
    let external_names: HashSet<&str> = env.functions.keys().copied().collect();
    let external_globals: HashSet<&str> = env.globals.keys().copied().collect();

    for g in &unit.globals {
        if external_globals.contains(g.name.as_str()) || env.globals.insert(&g.name, g.ty).is_some() {
            return err(g.line, format!("duplicate global `{}`", g.name));
        }
    }
    for f in &unit.functions {
        if f.name == "len" {
            return err(f.span.0, "`len` is a builtin and cannot be redefined");
        }
        if external_names.contains(f.name.as_str()) || env.functions.insert(&f.name, f.signature()).is_some() {
            return err(f.span.0, format!("duplicate function `{}`", f.name));
        }
    }
    for g in &unit.globals {
        check_const(&g.init)?;
        let ty = expr_ty(&env, &Scopes::default(), &g.init)?;
        if !ty.compatible(g.ty) {
            return err(g.line, format!("global `{}` declared {} but initialised with {}", g.name, g.ty, ty.show()));
        }
    }

    let mut branch_lines = HashSet::new();
    for f in &unit.functions {
        if f.kind == FunctionKind::Test && (!f.params.is_empty() || f.ret.is_some()) {
            return err(f.span.0, format!("test `{}` must take no parameters and return nothing", f.name));
        }
        check_function(&env, f, &mut branch_lines)?;
    }
    Ok(())
}

fn check_const(expr: &Expr) -> Result<(), TypeError> {
    match &expr.kind {
        ExprKind::Int(_) | ExprKind::Bool(_) | ExprKind::Str(_) => Ok(()),
        ExprKind::Unary(_, e) | ExprKind::Length(e) => check_const(e),
        ExprKind::Binary(_, a, b) | ExprKind::Index(a, b) => {
            check_const(a)?;
            check_const(b)
        }
        ExprKind::Var(_) | ExprKind::Call { .. } => err(expr.line, "global initializer must be a constant expression"),
    }
}

#[derive(Default)]
struct Scopes {
    frames: Vec<HashMap<String, Type>>,
}

impl Scopes {
    fn lookup(&self, name: &str) -> Option<Type> {
        self.frames.iter().rev().find_map(|f| f.get(name).copied())
    }

    fn declare(&mut self, name: &str, ty: Type, line: Line) -> Result<(), TypeError> {
        let frame = self.frames.last_mut().expect("scope open");
        if frame.insert(name.to_string(), ty).is_some() {
            return err(line, format!("variable `{name}` already declared in this scope"));
        }
        Ok(())
    }
}

fn check_function(env: &Env, f: &Function, branch_lines: &mut HashSet<Line>) -> Result<(), TypeError> {
    let mut scopes = Scopes::default();
    scopes.frames.push(HashMap::new());
    for p in &f.params {
        scopes.declare(&p.name, p.ty, f.span.0)?;
    }
    let mut ctx = FnCtx { env, ret: f.ret, branch_lines };
    ctx.block(&mut scopes, &f.body)?;
    if f.ret.is_some() && !terminates(&f.body) {
        return err(f.span.1, format!("function `{}` may finish without returning a value", f.name));
    }
    Ok(())
}

/// True when control cannot fall through the end of `stmts`.
pub(crate) fn terminates(stmts: &[Stmt]) -> bool {
    match stmts.last().map(|s| &s.kind) {
        Some(StmtKind::Return(_)) => true,
        Some(StmtKind::If { then_body, else_body: Some(else_body), .. }) => {
            terminates(then_body) && terminates(else_body)
        }
        _ => false,
    }
}

fn stmt_terminates(stmt: &Stmt) -> bool {
    terminates(std::slice::from_ref(stmt))
}

struct FnCtx<'e, 'a> {
    env: &'e Env<'a>,
    ret: Option<Type>,
    branch_lines: &'e mut HashSet<Line>,
}

impl FnCtx<'_, '_> {
    fn block(&mut self, scopes: &mut Scopes, stmts: &[Stmt]) -> Result<(), TypeError> {
        scopes.frames.push(HashMap::new());
        for (i, stmt) in stmts.iter().enumerate() {
            if i > 0 && stmt_terminates(&stmts[i - 1]) {
                return err(stmt.line, "unreachable statement");
            }
            self.stmt(scopes, stmt)?;
        }
        scopes.frames.pop();
        Ok(())
    }

    fn branch_line(&mut self, line: Line) -> Result<(), TypeError> {
        if !self.branch_lines.insert(line) {
            return err(line, "at most one branch condition is allowed per line");
        }
        Ok(())
    }

    fn cond(&self, scopes: &Scopes, cond: &Expr, line: Line, what: &str) -> Result<(), TypeError> {
        let ty = expr_ty(self.env, scopes, cond)?;
        if !ty.compatible(Type::Bool) {
            return err(line, format!("{what} condition must be bool, found {}", ty.show()));
        }
        Ok(())
    }

    fn stmt(&mut self, scopes: &mut Scopes, stmt: &Stmt) -> Result<(), TypeError> {
        let line = stmt.line;
        match &stmt.kind {
            StmtKind::VarDecl { name, ty, init } => {
                let got = expr_ty(self.env, scopes, init)?;
                if !got.compatible(*ty) {
                    return err(line, format!("`{name}` declared {ty} but initialised with {}", got.show()));
                }
                scopes.declare(name, *ty, line)
            }
            StmtKind::Assign { name, value } => {
                let Some(ty) = scopes.lookup(name).or_else(|| self.env.globals.get(name.as_str()).copied()) else {
                    return err(line, format!("assignment to undeclared variable `{name}`"));
                };
                let got = expr_ty(self.env, scopes, value)?;
                if !got.compatible(ty) {
                    return err(line, format!("cannot assign {} to `{name}` of type {ty}", got.show()));
                }
                Ok(())
            }
            StmtKind::If { cond, then_body, else_body } => {
                self.branch_line(line)?;
                self.cond(scopes, cond, line, "if")?;
                self.block(scopes, then_body)?;
                if let Some(else_body) = else_body {
                    self.block(scopes, else_body)?;
                }
                Ok(())
            }
            StmtKind::While { cond, body } => {
                self.branch_line(line)?;
                self.cond(scopes, cond, line, "while")?;
                self.block(scopes, body)
            }
            StmtKind::For { init, cond, step, body } => {
                self.branch_line(line)?;
                scopes.frames.push(HashMap::new());
                self.stmt(scopes, init)?;
                self.cond(scopes, cond, line, "for")?;
                self.stmt(scopes, step)?;
                self.block(scopes, body)?;
                scopes.frames.pop();
                Ok(())
            }
            StmtKind::Return(value) => match (value, self.ret) {
                (None, None) => Ok(()),
                (Some(_), None) => err(line, "void function cannot return a value"),
                (None, Some(want)) => err(line, format!("missing return value of type {want}")),
                (Some(v), Some(want)) => {
                    let got = expr_ty(self.env, scopes, v)?;
                    if !got.compatible(want) {
                        return err(line, format!("return type mismatch: expected {want}, found {}", got.show()));
                    }
                    Ok(())
                }
            },
            StmtKind::Call(expr) => call_ty(self.env, scopes, expr).map(|_| ()),
            StmtKind::Assert(cond) => self.cond(scopes, cond, line, "assert"),
        }
    }
}

fn call_ty(env: &Env, scopes: &Scopes, expr: &Expr) -> Result<Ty, TypeError> {
    let ExprKind::Call { name, args } = &expr.kind else {
        return expr_ty(env, scopes, expr);
    };
    let arg_tys = args.iter().map(|a| expr_ty(env, scopes, a)).collect::<Result<Vec<_>, _>>()?;
    let Some(sig) = env.functions.get(name.as_str()) else {
        if env.lenient {
            return Ok(Ty::Unknown);
        }
        return err(expr.line, format!("call to undefined function `{name}`"));
    };
    if sig.params.len() != args.len() {
        return err(
            expr.line,
            format!("`{name}` expects {} argument(s), found {}", sig.params.len(), args.len()),
        );
    }
    for (i, (want, got)) in sig.params.iter().zip(&arg_tys).enumerate() {
        if !got.compatible(*want) {
            return err(expr.line, format!("argument {} of `{name}` must be {want}, found {}", i + 1, got.show()));
        }
    }
    Ok(sig.ret.map_or(Ty::Void, Ty::Known))
}

fn expr_ty(env: &Env, scopes: &Scopes, expr: &Expr) -> Result<Ty, TypeError> {
    let line = expr.line;
    let value = |e: &Expr| -> Result<Ty, TypeError> {
        let ty = expr_ty(env, scopes, e)?;
        if ty == Ty::Void {
            return err(e.line, "void function call used as a value");
        }
        Ok(ty)
    };
    Ok(match &expr.kind {
        ExprKind::Int(_) => Ty::Known(Type::Int),
        ExprKind::Bool(_) => Ty::Known(Type::Bool),
        ExprKind::Str(_) => Ty::Known(Type::String),
        ExprKind::Var(name) => match scopes.lookup(name).or_else(|| env.globals.get(name.as_str()).copied()) {
            Some(ty) => Ty::Known(ty),
            None => return err(line, format!("undeclared variable `{name}`")),
        },
        ExprKind::Unary(op, operand) => {
            let ty = value(operand)?;
            let want = match op {
                UnaryOp::Not => Type::Bool,
                UnaryOp::Neg => Type::Int,
            };
            if !ty.compatible(want) {
                return err(line, format!("operand must be {want}, found {}", ty.show()));
            }
            Ty::Known(want)
        }
        ExprKind::Binary(op, lhs, rhs) => {
            let (a, b) = (value(lhs)?, value(rhs)?);
            match op {
                BinaryOp::Add => match (a, b) {
                    (Ty::Known(Type::String), _) | (_, Ty::Known(Type::String)) => {
                        if !a.compatible(Type::String) || !b.compatible(Type::String) {
                            return err(line, "`+` needs two ints or two strings");
                        }
                        Ty::Known(Type::String)
                    }
                    _ => {
                        if !a.compatible(Type::Int) || !b.compatible(Type::Int) {
                            return err(line, "`+` needs two ints or two strings");
                        }
                        if a == Ty::Unknown && b == Ty::Unknown {
                            Ty::Unknown
                        } else {
                            Ty::Known(Type::Int)
                        }
                    }
                },
                BinaryOp::Sub | BinaryOp::Mul | BinaryOp::Div | BinaryOp::Rem => {
                    if !a.compatible(Type::Int) || !b.compatible(Type::Int) {
                        return err(line, format!("`{}` needs int operands", op.symbol()));
                    }
                    Ty::Known(Type::Int)
                }
                BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => {
                    if !a.compatible(Type::Int) || !b.compatible(Type::Int) {
                        return err(line, format!("`{}` needs int operands", op.symbol()));
                    }
                    Ty::Known(Type::Bool)
                }
                BinaryOp::Eq | BinaryOp::Ne => {
                    if let (Ty::Known(x), Ty::Known(y)) = (a, b) {
                        if x != y {
                            return err(line, format!("cannot compare {x} with {y}"));
                        }
                    }
                    Ty::Known(Type::Bool)
                }
                BinaryOp::And | BinaryOp::Or => {
                    if !a.compatible(Type::Bool) || !b.compatible(Type::Bool) {
                        return err(line, format!("`{}` needs bool operands", op.symbol()));
                    }
                    Ty::Known(Type::Bool)
                }
            }
        }
        ExprKind::Call { .. } => call_ty(env, scopes, expr)?,
        ExprKind::Index(base, index) => {
            if !value(base)?.compatible(Type::String) {
                return err(line, "only strings can be indexed");
            }
            if !value(index)?.compatible(Type::Int) {
                return err(line, "string index must be int");
            }
            Ty::Known(Type::String)
        }
        ExprKind::Length(base) => {
            if !value(base)?.compatible(Type::String) {
                return err(line, "`len` takes a string");
            }
            Ty::Known(Type::Int)
        }
    })
}
