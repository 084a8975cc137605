use super::ast::*;

pub fn pretty_unit(unit: &SourceUnit) -> String {
    let mut out = String::new();
    for g in &unit.globals {
        out.push_str(&format!("var {}: {} = {};\n", g.name, g.ty, pretty_expr(&g.init)));
    }
    for (i, f) in unit.functions.iter().enumerate() {
        if i > 0 || !unit.globals.is_empty() {
            out.push('\n');
        }
        out.push_str(&pretty_function(f));
    }
    out
}

pub fn pretty_function(f: &Function) -> String {
    let mut out = String::new();
    if f.visibility == Visibility::Public {
        out.push_str("pub ");
    }
    let params: Vec<String> = f.params.iter().map(|p| format!("{}: {}", p.name, p.ty)).collect();
    out.push_str(&format!("func {}({})", f.name, params.join(", ")));
    if let Some(ret) = f.ret {
        out.push_str(&format!(" -> {ret}"));
    }
    out.push_str(" {\n");
    block(&mut out, &f.body, 1);
    out.push_str("}\n");
    out
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("    ");
    }
}

fn block(out: &mut String, stmts: &[Stmt], depth: usize) {
    for stmt in stmts {
        indent(out, depth);
        match &stmt.kind {
            StmtKind::If { .. } => if_chain(out, stmt, depth),
            StmtKind::While { cond, body } => {
                out.push_str(&format!("while ({}) {{\n", pretty_expr(cond)));
                block(out, body, depth + 1);
                indent(out, depth);
                out.push_str("}\n");
            }
            StmtKind::For { init, cond, step, body } => {
                out.push_str(&format!(
                    "for ({}; {}; {}) {{\n",
                    simple(init),
                    pretty_expr(cond),
                    simple(step)
                ));
                block(out, body, depth + 1);
                indent(out, depth);
                out.push_str("}\n");
            }
            _ => {
                out.push_str(&simple(stmt));
                out.push_str(";\n");
            }
        }
    }
}

fn if_chain(out: &mut String, stmt: &Stmt, depth: usize) {
    let StmtKind::If { cond, then_body, else_body } = &stmt.kind else { unreachable!() };
    out.push_str(&format!("if ({}) {{\n", pretty_expr(cond)));
    block(out, then_body, depth + 1);
    indent(out, depth);
    match else_body {
        None => out.push_str("}\n"),
        Some(body) if body.len() == 1 && matches!(body[0].kind, StmtKind::If { .. }) => {
            out.push_str("} else ");
            if_chain(out, &body[0], depth);
        }
        Some(body) => {
            out.push_str("} else {\n");
            block(out, body, depth + 1);
            indent(out, depth);
            out.push_str("}\n");
        }
    }
}

fn simple(stmt: &Stmt) -> String {
    match &stmt.kind {
        StmtKind::VarDecl { name, ty, init } => format!("var {name}: {ty} = {}", pretty_expr(init)),
        StmtKind::Assign { name, value } => format!("{name} = {}", pretty_expr(value)),
        StmtKind::Return(None) => "return".to_string(),
        StmtKind::Return(Some(v)) => format!("return {}", pretty_expr(v)),
        StmtKind::Call(e) => pretty_expr(e),
        StmtKind::Assert(e) => format!("assert({})", pretty_expr(e)),
        StmtKind::If { .. } | StmtKind::While { .. } | StmtKind::For { .. } => {
            unreachable!("compound statement in simple position")
        }
    }
}

pub fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

pub fn pretty_expr(expr: &Expr) -> String {
    match &expr.kind {
        ExprKind::Int(v) => v.to_string(),
        ExprKind::Bool(b) => b.to_string(),
        ExprKind::Str(s) => quote(s),
        ExprKind::Var(name) => name.clone(),
        ExprKind::Unary(op, operand) => {
            let sym = match op {
                UnaryOp::Not => "!",
                UnaryOp::Neg => "-",
            };
            match operand.kind {
                ExprKind::Binary(..) => format!("{sym}({})", pretty_expr(operand)),
                _ => format!("{sym}{}", pretty_expr(operand)),
            }
        }
        ExprKind::Binary(op, lhs, rhs) => {
            let prec = op.precedence();
            let side = |e: &Expr, strict: bool| match &e.kind {
                ExprKind::Binary(inner, ..)
                    if inner.precedence() < prec || (strict && inner.precedence() == prec) =>
                {
                    format!("({})", pretty_expr(e))
                }
                _ => pretty_expr(e),
            };
            format!("{} {} {}", side(lhs, false), op.symbol(), side(rhs, true))
        }
        ExprKind::Call { name, args } => {
            let args: Vec<String> = args.iter().map(pretty_expr).collect();
            format!("{name}({})", args.join(", "))
        }
        ExprKind::Index(base, index) => match base.kind {
            ExprKind::Binary(..) | ExprKind::Unary(..) => {
                format!("({})[{}]", pretty_expr(base), pretty_expr(index))
            }
            _ => format!("{}[{}]", pretty_expr(base), pretty_expr(index)),
        },
        ExprKind::Length(base) => format!("len({})", pretty_expr(base)),
    }
}
