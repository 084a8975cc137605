use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::SyntaxError;

#[derive(Debug)]
pub(crate) struct ParsedItems {
    pub globals: Vec<Global>,
    pub functions: Vec<Function>,
}

pub(crate) fn parse_items(text: &str) -> Result<ParsedItems, SyntaxError> {
    let tokens = tokenize(text)?;
    let mut parser = Parser { tokens, pos: 0 };
    parser.items()
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, SyntaxError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        let idx = (self.pos + offset).min(self.tokens.len() - 1);
        &self.tokens[idx].tok
    }

    fn line(&self) -> Line {
        self.tokens[self.pos].line
    }

    fn bump(&mut self) -> Token {
        let tok = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        tok
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn error<T>(&self, message: impl Into<String>) -> PResult<T> {
        Err(SyntaxError { line: self.line(), message: message.into() })
    }

    fn expect(&mut self, tok: Tok, context: &str) -> PResult<Token> {
        if *self.peek() == tok {
            Ok(self.bump())
        } else {
            let found = self.peek().describe();
            self.error(format!("expected {} {context}, found {found}", tok.describe()))
        }
    }

    fn ident(&mut self, context: &str) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.bump();
                Ok(name)
            }
            other => self.error(format!("expected identifier {context}, found {}", other.describe())),
        }
    }

    fn ty(&mut self) -> PResult<Type> {
        let ty = match self.peek() {
            Tok::TyInt => Type::Int,
            Tok::TyBool => Type::Bool,
            Tok::TyString => Type::String,
            other => return self.error(format!("expected type, found {}", other.describe())),
        };
        self.bump();
        Ok(ty)
    }

    fn items(&mut self) -> PResult<ParsedItems> {
        let mut globals = Vec::new();
        let mut functions = Vec::new();
        loop {
            match self.peek() {
                Tok::Eof => break,
                Tok::Var => {
                    let line = self.line();
                    self.bump();
                    let name = self.ident("after `var`")?;
                    self.expect(Tok::Colon, "after variable name")?;
                    let ty = self.ty()?;
                    self.expect(Tok::Assign, "in global declaration")?;
                    let init = self.expr()?;
                    self.expect(Tok::Semi, "after global declaration")?;
                    globals.push(Global { name, ty, init, line });
                }
                Tok::Pub | Tok::Func => functions.push(self.function()?),
                other => {
                    return self.error(format!(
                        "expected `func`, `pub` or `var` at top level, found {}",
                        other.describe()
                    ))
                }
            }
        }
        Ok(ParsedItems { globals, functions })
    }

    fn function(&mut self) -> PResult<Function> {
        let start = self.line();
        let visibility = if self.eat(&Tok::Pub) { Visibility::Public } else { Visibility::Private };
        self.expect(Tok::Func, "to start a function")?;
        let name = self.ident("for function name")?;
        self.expect(Tok::LParen, "after function name")?;
        let mut params = Vec::new();
        if !self.eat(&Tok::RParen) {
            loop {
                let pname = self.ident("for parameter")?;
                self.expect(Tok::Colon, "after parameter name")?;
                let ty = self.ty()?;
                params.push(Param { name: pname, ty });
                if self.eat(&Tok::RParen) {
                    break;
                }
                self.expect(Tok::Comma, "between parameters")?;
            }
        }
        let ret = if self.eat(&Tok::Arrow) { Some(self.ty()?) } else { None };
        let (body, end) = self.block()?;
        Ok(Function {
            name,
            params,
            ret,
            visibility,
            kind: FunctionKind::Regular,
            body,
            span: (start, end),
        })
    }

    /// Returns the statements and the line of the closing brace.
    fn block(&mut self) -> PResult<(Vec<Stmt>, Line)> {
        self.expect(Tok::LBrace, "to open a block")?;
        let mut stmts = Vec::new();
        loop {
            if *self.peek() == Tok::RBrace {
                let end = self.bump().line;
                return Ok((stmts, end));
            }
            if *self.peek() == Tok::Eof {
                return self.error("unclosed block, expected `}`");
            }
            stmts.push(self.stmt()?);
        }
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let line = self.line();
        let kind = match self.peek() {
            Tok::If => return self.if_stmt(),
            Tok::While => {
                self.bump();
                self.expect(Tok::LParen, "after `while`")?;
                let cond = self.expr()?;
                self.expect(Tok::RParen, "after loop condition")?;
                let (body, _) = self.block()?;
                StmtKind::While { cond, body }
            }
            Tok::For => {
                self.bump();
                self.expect(Tok::LParen, "after `for`")?;
                let init = self.simple_stmt()?;
                self.expect(Tok::Semi, "after for-loop initializer")?;
                let cond = self.expr()?;
                self.expect(Tok::Semi, "after for-loop condition")?;
                let step = self.simple_stmt()?;
                self.expect(Tok::RParen, "after for-loop step")?;
                let (body, _) = self.block()?;
                StmtKind::For { init: Box::new(init), cond, step: Box::new(step), body }
            }
            Tok::Return => {
                self.bump();
                let value = if *self.peek() == Tok::Semi { None } else { Some(self.expr()?) };
                self.expect(Tok::Semi, "after return")?;
                StmtKind::Return(value)
            }
            Tok::Assert => {
                self.bump();
                self.expect(Tok::LParen, "after `assert`")?;
                let cond = self.expr()?;
                self.expect(Tok::RParen, "after assertion")?;
                self.expect(Tok::Semi, "after assertion")?;
                StmtKind::Assert(cond)
            }
            _ => {
                let stmt = self.simple_stmt()?;
                self.expect(Tok::Semi, "after statement")?;
                return Ok(stmt);
            }
        };
        Ok(Stmt { line, kind })
    }

    /// `var` declaration, assignment or call; no trailing `;`.
    fn simple_stmt(&mut self) -> PResult<Stmt> {
        let line = self.line();
        if self.eat(&Tok::Var) {
            let name = self.ident("after `var`")?;
            self.expect(Tok::Colon, "after variable name")?;
            let ty = self.ty()?;
            self.expect(Tok::Assign, "in variable declaration")?;
            let init = self.expr()?;
            return Ok(Stmt { line, kind: StmtKind::VarDecl { name, ty, init } });
        }
        if matches!(self.peek(), Tok::Ident(_)) && *self.peek_at(1) == Tok::Assign {
            let name = self.ident("")?;
            self.bump();
            let value = self.expr()?;
            return Ok(Stmt { line, kind: StmtKind::Assign { name, value } });
        }
        let expr = self.expr()?;
        match expr.kind {
            ExprKind::Call { .. } => Ok(Stmt { line, kind: StmtKind::Call(expr) }),
            _ => Err(SyntaxError { line, message: "expression statement must be a function call".into() }),
        }
    }

    fn if_stmt(&mut self) -> PResult<Stmt> {
        let line = self.line();
        self.expect(Tok::If, "")?;
        self.expect(Tok::LParen, "after `if`")?;
        let cond = self.expr()?;
        self.expect(Tok::RParen, "after condition")?;
        let (then_body, _) = self.block()?;
        let else_body = if self.eat(&Tok::Else) {
            if *self.peek() == Tok::If {
                Some(vec![self.if_stmt()?])
            } else {
                Some(self.block()?.0)
            }
        } else {
            None
        };
        Ok(Stmt { line, kind: StmtKind::If { cond, then_body, else_body } })
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.binary(1)
    }

    fn binary_op(&self) -> Option<BinaryOp> {
        Some(match self.peek() {
            Tok::OrOr => BinaryOp::Or,
            Tok::AndAnd => BinaryOp::And,
            Tok::EqEq => BinaryOp::Eq,
            Tok::NotEq => BinaryOp::Ne,
            Tok::Lt => BinaryOp::Lt,
            Tok::Le => BinaryOp::Le,
            Tok::Gt => BinaryOp::Gt,
            Tok::Ge => BinaryOp::Ge,
            Tok::Plus => BinaryOp::Add,
            Tok::Minus => BinaryOp::Sub,
            Tok::Star => BinaryOp::Mul,
            Tok::Slash => BinaryOp::Div,
            Tok::Percent => BinaryOp::Rem,
            _ => return None,
        })
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binary_op() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.bump();
            let rhs = self.binary(prec + 1)?;
            lhs = Expr { line: lhs.line, kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)) };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let line = self.line();
        let op = match self.peek() {
            Tok::Bang => UnaryOp::Not,
            Tok::Minus => UnaryOp::Neg,
            _ => return self.postfix(),
        };
        self.bump();
        let operand = self.unary()?;
        Ok(Expr { line, kind: ExprKind::Unary(op, Box::new(operand)) })
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut expr = self.primary()?;
        while self.eat(&Tok::LBracket) {
            let index = self.expr()?;
            self.expect(Tok::RBracket, "after index")?;
            expr = Expr { line: expr.line, kind: ExprKind::Index(Box::new(expr), Box::new(index)) };
        }
        Ok(expr)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let line = self.line();
        let kind = match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                ExprKind::Int(v)
            }
            Tok::Str(s) => {
                self.bump();
                ExprKind::Str(s)
            }
            Tok::True => {
                self.bump();
                ExprKind::Bool(true)
            }
            Tok::False => {
                self.bump();
                ExprKind::Bool(false)
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                self.expect(Tok::RParen, "to close parenthesis")?;
                return Ok(inner);
            }
            Tok::Ident(name) => {
                self.bump();
                if self.eat(&Tok::LParen) {
                    let mut args = Vec::new();
                    if !self.eat(&Tok::RParen) {
                        loop {
                            args.push(self.expr()?);
                            if self.eat(&Tok::RParen) {
                                break;
                            }
                            self.expect(Tok::Comma, "between arguments")?;
                        }
                    }
                    if name == "len" && args.len() == 1 {
                        ExprKind::Length(Box::new(args.pop().expect("one argument")))
                    } else {
                        ExprKind::Call { name, args }
                    }
                } else {
                    ExprKind::Var(name)
                }
            }
            other => return self.error(format!("expected expression, found {}", other.describe())),
        };
        Ok(Expr { line, kind })
    }
}
