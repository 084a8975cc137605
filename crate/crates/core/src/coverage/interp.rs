//! Tree-walking MiniLang interpreter with line and branch-outcome probes.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use crate::minilang::*;

pub const DEFAULT_STEP_BUDGET: u64 = 1_000_000;
const MAX_CALL_DEPTH: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Int(i64),
    Bool(bool),
    Str(String),
}

impl Value {
    /// MiniLang literal syntax for the value.
    pub fn literal(&self) -> String {
        match self {
            Value::Int(v) if *v < 0 => format!("-{}", v.unsigned_abs()),
            Value::Int(v) => v.to_string(),
            Value::Bool(b) => b.to_string(),
            Value::Str(s) => pretty_quote(s),
        }
    }
}

fn pretty_quote(s: &str) -> String {
    crate::minilang::quote(s)
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.literal())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fault {
    Assertion { file: String, line: Line, message: String },
    Runtime { file: String, line: Line, message: String },
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fault::Assertion { file, line, message } => write!(f, "{file}:{line}: assertion failed: {message}"),
            Fault::Runtime { file, line, message } => write!(f, "{file}:{line}: runtime error: {message}"),
        }
    }
}

/// Lines executed and branch outcomes taken in the source file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Hits {
    pub lines: BTreeSet<Line>,
    pub branches: BTreeSet<(Line, bool)>,
}

impl Hits {
    pub fn merge(&mut self, other: &Hits) {
        self.lines.extend(other.lines.iter().copied());
        self.branches.extend(other.branches.iter().copied());
    }
}

/// Source file plus (optionally) its test file, sharing one namespace.
pub struct Program<'a> {
    source: &'a SourceUnit,
    functions: HashMap<&'a str, (&'a Function, &'a SourceUnit)>,
    globals: Vec<&'a Global>,
}

impl<'a> Program<'a> {
    /// Callers must have linked `tests` against `source` first.
    pub fn new(source: &'a SourceUnit, tests: Option<&'a SourceUnit>) -> Self {
        let mut functions = HashMap::new();
        let mut globals = Vec::new();
        for unit in std::iter::once(source).chain(tests) {
            for f in &unit.functions {
                functions.insert(f.name.as_str(), (f, unit));
            }
            globals.extend(unit.globals.iter());
        }
        Program { source, functions, globals }
    }

    pub fn source(&self) -> &'a SourceUnit {
        self.source
    }

    pub fn machine(&self, budget: u64) -> Machine<'_, 'a> {
        Machine::new(self, budget)
    }
}

enum Flow {
    Next,
    Return(Option<Value>),
}

struct Frame<'a> {
    unit: &'a SourceUnit,
    scopes: Vec<HashMap<String, Value>>,
}

/// One isolated execution context: fresh globals, own step counter.
pub struct Machine<'p, 'a> {
    program: &'p Program<'a>,
    globals: HashMap<String, Value>,
    steps: u64,
    budget: u64,
    depth: usize,
    pub hits: Hits,
    /// Branch decisions taken directly in the outermost called function.
    pub trace: Vec<(Line, bool)>,
}

type Exec<T> = Result<T, Fault>;

impl<'p, 'a> Machine<'p, 'a> {
    fn new(program: &'p Program<'a>, budget: u64) -> Self {
        let mut machine = Machine {
            program,
            globals: HashMap::new(),
            steps: 0,
            budget,
            depth: 0,
            hits: Hits::default(),
            trace: Vec::new(),
        };
        for g in &program.globals {
            // constant initialisers checked statically; failures leave the global unset
            let mut frame = Frame { unit: program.source, scopes: vec![HashMap::new()] };
            if let Ok(v) = machine.eval(&mut frame, &g.init) {
                machine.globals.insert(g.name.clone(), v);
            }
        }
        machine
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn call(&mut self, name: &str, args: Vec<Value>) -> Exec<Option<Value>> {
        self.invoke(name, args, 0)
    }

    fn is_source(&self, frame: &Frame) -> bool {
        std::ptr::eq(frame.unit, self.program.source)
    }

    fn runtime(&self, frame: &Frame, line: Line, message: impl Into<String>) -> Fault {
        Fault::Runtime { file: frame.unit.path.clone(), line, message: message.into() }
    }

    fn tick(&mut self, frame: &Frame, line: Line) -> Exec<()> {
        self.steps += 1;
        if self.steps > self.budget {
            return Err(self.runtime(frame, line, format!("step budget of {} exceeded", self.budget)));
        }
        if self.is_source(frame) {
            self.hits.lines.insert(line);
        }
        Ok(())
    }

    fn decide(&mut self, frame: &Frame, line: Line, outcome: bool) {
        if self.is_source(frame) {
            self.hits.branches.insert((line, outcome));
        }
        if self.depth == 1 {
            self.trace.push((line, outcome));
        }
    }

    fn invoke(&mut self, name: &str, args: Vec<Value>, line: Line) -> Exec<Option<Value>> {
        let Some(&(function, unit)) = self.program.functions.get(name) else {
            return Err(Fault::Runtime {
                file: self.program.source.path.clone(),
                line,
                message: format!("undefined function `{name}`"),
            });
        };
        if args.len() != function.params.len() {
            return Err(Fault::Runtime {
                file: unit.path.clone(),
                line: function.span.0,
                message: format!("`{name}` expects {} argument(s), got {}", function.params.len(), args.len()),
            });
        }
        if self.depth >= MAX_CALL_DEPTH {
            return Err(Fault::Runtime {
                file: unit.path.clone(),
                line: function.span.0,
                message: format!("call depth exceeded {MAX_CALL_DEPTH}"),
            });
        }
        let params: HashMap<String, Value> =
            function.params.iter().map(|p| p.name.clone()).zip(args).collect();
        let mut frame = Frame { unit, scopes: vec![params] };
        self.depth += 1;
        let result = self.block(&mut frame, &function.body);
        self.depth -= 1;
        match result? {
            Flow::Return(v) => Ok(v),
            Flow::Next => Ok(None),
        }
    }

    fn block(&mut self, frame: &mut Frame<'a>, stmts: &[Stmt]) -> Exec<Flow> {
        frame.scopes.push(HashMap::new());
        let mut flow = Flow::Next;
        for stmt in stmts {
            match self.stmt(frame, stmt) {
                Ok(Flow::Next) => {}
                Ok(ret) => {
                    flow = ret;
                    break;
                }
                Err(e) => {
                    frame.scopes.pop();
                    return Err(e);
                }
            }
        }
        frame.scopes.pop();
        Ok(flow)
    }

    fn cond(&mut self, frame: &mut Frame<'a>, line: Line, cond: &Expr) -> Exec<bool> {
        self.tick(frame, line)?;
        let taken = self.truth(frame, cond)?;
        self.decide(frame, line, taken);
        Ok(taken)
    }

    fn stmt(&mut self, frame: &mut Frame<'a>, stmt: &Stmt) -> Exec<Flow> {
        let line = stmt.line;
        match &stmt.kind {
            StmtKind::VarDecl { name, init, .. } => {
                self.tick(frame, line)?;
                let v = self.eval(frame, init)?;
                frame.scopes.last_mut().expect("scope").insert(name.clone(), v);
            }
            StmtKind::Assign { name, value } => {
                self.tick(frame, line)?;
                let v = self.eval(frame, value)?;
                if let Some(slot) = frame.scopes.iter_mut().rev().find_map(|s| s.get_mut(name)) {
                    *slot = v;
                } else {
                    self.globals.insert(name.clone(), v);
                }
            }
            StmtKind::Call(expr) => {
                self.tick(frame, line)?;
                self.eval_call(frame, expr)?;
            }
            StmtKind::Assert(cond) => {
                self.tick(frame, line)?;
                if !self.truth(frame, cond)? {
                    return Err(Fault::Assertion {
                        file: frame.unit.path.clone(),
                        line,
                        message: pretty_expr(cond),
                    });
                }
            }
            StmtKind::Return(value) => {
                self.tick(frame, line)?;
                let v = match value {
                    Some(e) => Some(self.eval(frame, e)?),
                    None => None,
                };
                return Ok(Flow::Return(v));
            }
            StmtKind::If { cond, then_body, else_body } => {
                if self.cond(frame, line, cond)? {
                    return self.block(frame, then_body);
                } else if let Some(else_body) = else_body {
                    return self.block(frame, else_body);
                }
            }
            StmtKind::While { cond, body } => {
                while self.cond(frame, line, cond)? {
                    if let Flow::Return(v) = self.block(frame, body)? {
                        return Ok(Flow::Return(v));
                    }
                }
            }
            StmtKind::For { init, cond, step, body } => {
                frame.scopes.push(HashMap::new());
                let result = self.for_loop(frame, line, init, cond, step, body);
                frame.scopes.pop();
                return result;
            }
        }
        Ok(Flow::Next)
    }

    fn for_loop(
        &mut self,
        frame: &mut Frame<'a>,
        line: Line,
        init: &Stmt,
        cond: &Expr,
        step: &Stmt,
        body: &[Stmt],
    ) -> Exec<Flow> {
        self.stmt(frame, init)?;
        while self.cond(frame, line, cond)? {
            if let Flow::Return(v) = self.block(frame, body)? {
                return Ok(Flow::Return(v));
            }
            self.stmt(frame, step)?;
        }
        Ok(Flow::Next)
    }

    fn truth(&mut self, frame: &mut Frame<'a>, expr: &Expr) -> Exec<bool> {
        match self.eval(frame, expr)? {
            Value::Bool(b) => Ok(b),
            other => Err(self.runtime(frame, expr.line, format!("expected bool, found {other}"))),
        }
    }

    fn int(&mut self, frame: &mut Frame<'a>, expr: &Expr) -> Exec<i64> {
        match self.eval(frame, expr)? {
            Value::Int(v) => Ok(v),
            other => Err(self.runtime(frame, expr.line, format!("expected int, found {other}"))),
        }
    }

    fn string(&mut self, frame: &mut Frame<'a>, expr: &Expr) -> Exec<String> {
        match self.eval(frame, expr)? {
            Value::Str(s) => Ok(s),
            other => Err(self.runtime(frame, expr.line, format!("expected string, found {other}"))),
        }
    }

    fn eval_call(&mut self, frame: &mut Frame<'a>, expr: &Expr) -> Exec<Option<Value>> {
        let ExprKind::Call { name, args } = &expr.kind else { unreachable!("call statement") };
        let mut values = Vec::with_capacity(args.len());
        for a in args {
            values.push(self.eval(frame, a)?);
        }
        self.invoke(name, values, expr.line)
    }

    fn eval(&mut self, frame: &mut Frame<'a>, expr: &Expr) -> Exec<Value> {
        let line = expr.line;
        Ok(match &expr.kind {
            ExprKind::Int(v) => Value::Int(*v),
            ExprKind::Bool(b) => Value::Bool(*b),
            ExprKind::Str(s) => Value::Str(s.clone()),
            ExprKind::Var(name) => {
                let local = frame.scopes.iter().rev().find_map(|s| s.get(name));
                match local.or_else(|| self.globals.get(name)) {
                    Some(v) => v.clone(),
                    None => return Err(self.runtime(frame, line, format!("undefined variable `{name}`"))),
                }
            }
            ExprKind::Unary(UnaryOp::Not, e) => Value::Bool(!self.truth(frame, e)?),
            ExprKind::Unary(UnaryOp::Neg, e) => {
                let v = self.int(frame, e)?;
                Value::Int(v.checked_neg().ok_or_else(|| self.runtime(frame, line, "integer overflow"))?)
            }
            ExprKind::Binary(BinaryOp::And, a, b) => Value::Bool(self.truth(frame, a)? && self.truth(frame, b)?),
            ExprKind::Binary(BinaryOp::Or, a, b) => Value::Bool(self.truth(frame, a)? || self.truth(frame, b)?),
            ExprKind::Binary(op, a, b) => {
                let (x, y) = (self.eval(frame, a)?, self.eval(frame, b)?);
                self.binary(frame, line, *op, x, y)?
            }
            ExprKind::Call { .. } => match self.eval_call(frame, expr)? {
                Some(v) => v,
                None => return Err(self.runtime(frame, line, "void function used as a value")),
            },
            ExprKind::Index(base, index) => {
                let s = self.string(frame, base)?;
                let i = self.int(frame, index)?;
                let ch = usize::try_from(i).ok().and_then(|i| s.chars().nth(i));
                match ch {
                    Some(c) => Value::Str(c.to_string()),
                    None => {
                        let len = s.chars().count();
                        return Err(self.runtime(frame, line, format!("index {i} out of bounds for length {len}")));
                    }
                }
            }
            ExprKind::Length(base) => {
                let s = self.string(frame, base)?;
                Value::Int(s.chars().count() as i64)
            }
        })
    }

    fn binary(&self, frame: &Frame, line: Line, op: BinaryOp, x: Value, y: Value) -> Exec<Value> {
        use Value::*;
        let overflow = || self.runtime(frame, line, "integer overflow");
        Ok(match (op, x, y) {
            (BinaryOp::Add, Str(a), Str(b)) => Str(a + &b),
            (BinaryOp::Add, Int(a), Int(b)) => Int(a.checked_add(b).ok_or_else(overflow)?),
            (BinaryOp::Sub, Int(a), Int(b)) => Int(a.checked_sub(b).ok_or_else(overflow)?),
            (BinaryOp::Mul, Int(a), Int(b)) => Int(a.checked_mul(b).ok_or_else(overflow)?),
            (BinaryOp::Div | BinaryOp::Rem, Int(_), Int(0)) => {
                return Err(self.runtime(frame, line, "division by zero"))
            }
            (BinaryOp::Div, Int(a), Int(b)) => Int(a.checked_div(b).ok_or_else(overflow)?),
            (BinaryOp::Rem, Int(a), Int(b)) => Int(a.checked_rem(b).ok_or_else(overflow)?),
            (BinaryOp::Lt, Int(a), Int(b)) => Bool(a < b),
            (BinaryOp::Le, Int(a), Int(b)) => Bool(a <= b),
            (BinaryOp::Gt, Int(a), Int(b)) => Bool(a > b),
            (BinaryOp::Ge, Int(a), Int(b)) => Bool(a >= b),
            (BinaryOp::Eq, a, b) => Bool(a == b),
            (BinaryOp::Ne, a, b) => Bool(a != b),
            (op, a, b) => {
                return Err(self.runtime(frame, line, format!("bad operands for `{}`: {a}, {b}", op.symbol())))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;

    fn run(src: &str, name: &str, args: Vec<Value>) -> (Exec<Option<Value>>, Hits) {
        let unit = parse("s.ml0", src, Role::Source).unwrap();
        let program = Program::new(&unit, None);
        let mut m = program.machine(DEFAULT_STEP_BUDGET);
        let r = m.call(name, args);
        (r, m.hits)
    }

    #[test]
    fn parse_pattern_values() {
        let unit = corpus::parse_pattern();
        let program = Program::new(&unit, None);
        for (input, want) in [("", 0), ("a@", 101), ("!", 0), ("ab", 102), ("@", 0)] {
            let mut m = program.machine(DEFAULT_STEP_BUDGET);
            let got = m.call("parsePattern", vec![Value::Str(input.into())]).unwrap();
            assert_eq!(got, Some(Value::Int(want)), "input {input:?}");
        }
    }

    #[test]
    fn decision_trace_of_top_level_call() {
        let unit = corpus::parse_pattern();
        let program = Program::new(&unit, None);
        let mut m = program.machine(DEFAULT_STEP_BUDGET);
        m.call("parsePattern", vec![Value::Str("!".into())]).unwrap();
        assert_eq!(m.trace, [(6, true), (8, false), (11, true), (6, false), (17, false)]);
    }

    #[test]
    fn division_by_zero_is_runtime_fault() {
        let (r, _) = run("func f(a: int) -> int {\n return 10 / a;\n}", "f", vec![Value::Int(0)]);
        assert!(matches!(r, Err(Fault::Runtime { line: 2, .. })));
    }

    #[test]
    fn infinite_loop_hits_budget() {
        let unit = parse("s.ml0", "func f() {\n while (true) {\n }\n}", Role::Source).unwrap();
        let program = Program::new(&unit, None);
        let mut m = program.machine(1_000);
        let err = m.call("f", vec![]).unwrap_err();
        assert!(err.to_string().contains("step budget"));
    }

    #[test]
    fn runaway_recursion_is_caught() {
        let (r, _) = run("func f(n: int) -> int {\n return f(n + 1);\n}", "f", vec![Value::Int(0)]);
        assert!(r.unwrap_err().to_string().contains("call depth"));
    }

    #[test]
    fn records_both_outcomes() {
        let src = "func f(a: int) -> int {\n var r: int = 0;\n if (a > 0) {\n r = 1;\n }\n return r;\n}";
        let unit = parse("s.ml0", src, Role::Source).unwrap();
        let program = Program::new(&unit, None);
        let mut hits = Hits::default();
        for a in [1, -1] {
            let mut m = program.machine(DEFAULT_STEP_BUDGET);
            m.call("f", vec![Value::Int(a)]).unwrap();
            hits.merge(&m.hits);
        }
        assert_eq!(hits.lines.iter().copied().collect::<Vec<_>>(), [2, 3, 4, 6]);
        assert_eq!(hits.branches.len(), 2);
    }

    #[test]
    fn string_index_bounds() {
        let (r, _) = run("func f(s: string) -> string {\n return s[3];\n}", "f", vec![Value::Str("ab".into())]);
        assert!(r.unwrap_err().to_string().contains("out of bounds"));
    }

    #[test]
    fn literal_round_trips_negative_and_strings() {
        assert_eq!(Value::Int(-3).literal(), "-3");
        assert_eq!(Value::Str("a\"b".into()).literal(), "\"a\\\"b\"");
    }
}
