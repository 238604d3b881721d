//! The modeling language.
//!
//! ```text
//! problem rate
//! param N0 = 0.001
//! param G = [1, 1, 1, 1, 1]
//! var p[5] continuous in [0, 10]
//! maximize sum(log2(1 + p[i] * G[i] / N0), i, 1, 5)
//! subject to
//!   sum(p[i], i, 1, 5) <= 10
//!   p[i] * G[i] >= N0 * (2 ^ 5 - 1) for i in 1..5
//! ```
//!
//! Indexed families are expanded to scalars named `p_1 .. p_n` while
//! parsing. A constraint ends at the end of its line unless the line ends
//! with an operator.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use super::{is_identifier, Direction, ModelError, Problem, VarDecl, VarKind};
use crate::expr::{Assignment, Expr};

const MAX_DEPTH: usize = 200;
const MAX_FAMILY: i64 = 100_000;
const MAX_NODES: usize = 2_000_000;
const DEFAULT_NAME: &str = "model";

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    Le,
    Ge,
    EqEq,
    Lt,
    Gt,
    Assign,
    DotDot,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Num(v) => format!("number {v}"),
            Tok::Eof => "end of input".into(),
            other => format!("`{}`", other.symbol()),
        }
    }

    fn symbol(&self) -> &'static str {
        match self {
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::Comma => ",",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Caret => "^",
            Tok::Le => "<=",
            Tok::Ge => ">=",
            Tok::EqEq => "==",
            Tok::Lt => "<",
            Tok::Gt => ">",
            Tok::Assign => "=",
            Tok::DotDot => "..",
            _ => "",
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn syntax(line: usize, col: usize, expected: &str, found: String) -> ModelError {
    ModelError::Syntax {
        line,
        col,
        expected: expected.to_string(),
        found,
    }
}

fn lex(src: &str) -> Result<Vec<Token>, ModelError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let push = |out: &mut Vec<Token>, tok| {
            out.push(Token {
                tok,
                line: tl,
                col: tc,
            })
        };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            push(&mut out, Tok::Ident(chars[start..i].iter().collect()));
            continue;
        }
        let next = chars.get(i + 1).copied();
        if c.is_ascii_digit() || (c == '.' && next.is_some_and(|n| n.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i < chars.len() && chars[i] == '.' && chars.get(i + 1) != Some(&'.') {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text: String = chars[start..i].iter().collect();
            col += i - start;
            let v: f64 = text
                .parse()
                .map_err(|_| syntax(tl, tc, "number", format!("`{text}`")))?;
            if !v.is_finite() {
                return Err(syntax(tl, tc, "finite number", format!("`{text}`")));
            }
            push(&mut out, Tok::Num(v));
            continue;
        }
        let two = match (c, next) {
            ('<', Some('=')) => Some(Tok::Le),
            ('>', Some('=')) => Some(Tok::Ge),
            ('=', Some('=')) => Some(Tok::EqEq),
            ('.', Some('.')) => Some(Tok::DotDot),
            _ => None,
        };
        if let Some(tok) = two {
            push(&mut out, tok);
            i += 2;
            col += 2;
            continue;
        }
        let tok = match c {
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '[' => Tok::LBracket,
            ']' => Tok::RBracket,
            ',' => Tok::Comma,
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            '^' => Tok::Caret,
            '<' => Tok::Lt,
            '>' => Tok::Gt,
            '=' => Tok::Assign,
            other => return Err(syntax(tl, tc, "a token", format!("`{other}`"))),
        };
        push(&mut out, tok);
        i += 1;
        col += 1;
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

#[derive(Debug, Clone)]
struct Raw {
    kind: RawKind,
    line: usize,
    col: usize,
}

#[derive(Debug, Clone)]
enum RawKind {
    Num(f64),
    Name(String),
    Index(String, Box<Raw>),
    Call(String, Vec<Raw>),
    Add(Vec<Raw>),
    Mul(Vec<Raw>),
    Div(Box<Raw>, Box<Raw>),
    Pow(Box<Raw>, Box<Raw>),
    Neg(Box<Raw>),
}

#[derive(Debug)]
enum Bound {
    NegInf,
    PosInf,
    Value(Raw),
}

#[derive(Debug)]
enum Stmt {
    Var {
        name: String,
        len: Option<Raw>,
        kind: VarKind,
        bounds: Option<(Bound, Bound)>,
        line: usize,
        col: usize,
    },
    Param {
        name: String,
        value: Option<Vec<Raw>>,
        array: bool,
        line: usize,
        col: usize,
    },
    Objective {
        direction: Direction,
        expr: Raw,
        line: usize,
        col: usize,
    },
    Constraint {
        lhs: Raw,
        op: Tok,
        rhs: Raw,
        range: Option<(String, Raw, Raw)>,
        line: usize,
        col: usize,
    },
}

const STATEMENT_KEYWORDS: &[&str] = &["var", "param", "minimize", "maximize", "subject", "problem"];

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    depth: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &str) -> ModelError {
        let t = self.peek();
        syntax(t.line, t.col, expected, t.tok.describe())
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    fn at_statement_start(&self) -> bool {
        match &self.peek().tok {
            Tok::Eof => true,
            Tok::Ident(s) => STATEMENT_KEYWORDS.contains(&s.as_str()),
            _ => false,
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<Token, ModelError> {
        if self.peek().tok == tok {
            Ok(self.bump())
        } else {
            Err(self.error(&format!("`{}`", tok.symbol())))
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<Token, ModelError> {
        if self.at_keyword(kw) {
            Ok(self.bump())
        } else {
            Err(self.error(&format!("`{kw}`")))
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, usize, usize), ModelError> {
        match &self.peek().tok {
            Tok::Ident(s) if is_identifier(s) => {
                let t = self.bump();
                match t.tok {
                    Tok::Ident(s) => Ok((s, t.line, t.col)),
                    _ => unreachable!(),
                }
            }
            _ => Err(self.error(what)),
        }
    }

    fn program(&mut self) -> Result<(String, Vec<Stmt>), ModelError> {
        let mut name = DEFAULT_NAME.to_string();
        if self.at_keyword("problem") {
            self.bump();
            name = self.ident("problem name")?.0;
        }
        let mut stmts = Vec::new();
        loop {
            let t = self.peek().clone();
            match &t.tok {
                Tok::Eof => break,
                Tok::Ident(kw) if kw == "var" => {
                    self.bump();
                    stmts.push(self.var_decl(t.line, t.col)?);
                }
                Tok::Ident(kw) if kw == "param" => {
                    self.bump();
                    stmts.push(self.param_decl(t.line, t.col)?);
                }
                Tok::Ident(kw) if kw == "minimize" || kw == "maximize" => {
                    self.bump();
                    let direction = if kw == "minimize" {
                        Direction::Minimize
                    } else {
                        Direction::Maximize
                    };
                    let expr = self.expr(false)?;
                    stmts.push(Stmt::Objective {
                        direction,
                        expr,
                        line: t.line,
                        col: t.col,
                    });
                }
                Tok::Ident(kw) if kw == "subject" => {
                    self.bump();
                    self.expect_keyword("to")?;
                    if self.at_statement_start() {
                        return Err(self.error("constraint"));
                    }
                    while !self.at_statement_start() {
                        stmts.push(self.constraint()?);
                    }
                }
                _ => {
                    return Err(self.error("`var`, `param`, `minimize`, `maximize` or `subject to`"))
                }
            }
        }
        Ok((name, stmts))
    }

    fn var_decl(&mut self, line: usize, col: usize) -> Result<Stmt, ModelError> {
        let (name, ..) = self.ident("variable name")?;
        let mut len = None;
        if self.peek().tok == Tok::LBracket {
            self.bump();
            len = Some(self.expr(false)?);
            self.expect(Tok::RBracket)?;
        }
        let mut kind = VarKind::Continuous;
        if let Tok::Ident(s) = &self.peek().tok {
            if let Ok(k) = s.parse::<VarKind>() {
                kind = k;
                self.bump();
            }
        }
        let mut bounds = None;
        if self.at_keyword("in") {
            self.bump();
            self.expect(Tok::LBracket)?;
            let lo = self.bound()?;
            self.expect(Tok::Comma)?;
            let hi = self.bound()?;
            self.expect(Tok::RBracket)?;
            bounds = Some((lo, hi));
        }
        Ok(Stmt::Var {
            name,
            len,
            kind,
            bounds,
            line,
            col,
        })
    }

    fn bound(&mut self) -> Result<Bound, ModelError> {
        if self.at_keyword("inf") {
            self.bump();
            return Ok(Bound::PosInf);
        }
        if self.peek().tok == Tok::Minus && matches!(self.peek_at(1), Tok::Ident(s) if s == "inf") {
            self.bump();
            self.bump();
            return Ok(Bound::NegInf);
        }
        Ok(Bound::Value(self.expr(false)?))
    }

    fn param_decl(&mut self, line: usize, col: usize) -> Result<Stmt, ModelError> {
        let (name, ..) = self.ident("parameter name")?;
        if self.peek().tok != Tok::Assign {
            return Ok(Stmt::Param {
                name,
                value: None,
                array: false,
                line,
                col,
            });
        }
        self.bump();
        if self.peek().tok == Tok::LBracket {
            self.bump();
            let mut items = vec![self.expr(false)?];
            while self.peek().tok == Tok::Comma {
                self.bump();
                items.push(self.expr(false)?);
            }
            self.expect(Tok::RBracket)?;
            Ok(Stmt::Param {
                name,
                value: Some(items),
                array: true,
                line,
                col,
            })
        } else {
            Ok(Stmt::Param {
                name,
                value: Some(vec![self.expr(false)?]),
                array: false,
                line,
                col,
            })
        }
    }

    fn constraint(&mut self) -> Result<Stmt, ModelError> {
        let start = self.peek().clone();
        let lhs = self.expr(false)?;
        let op_tok = self.peek().clone();
        let op = match op_tok.tok {
            Tok::Le | Tok::Ge | Tok::EqEq => self.bump().tok,
            Tok::Lt | Tok::Gt => {
                return Err(ModelError::StrictInequality {
                    line: op_tok.line,
                    col: op_tok.col,
                })
            }
            _ => return Err(self.error("`<=`, `>=` or `==`")),
        };
        let rhs = self.expr(true)?;
        let mut range = None;
        if self.at_keyword("for") {
            self.bump();
            let (idx, ..) = self.ident("index name")?;
            self.expect_keyword("in")?;
            let lo = self.expr(false)?;
            self.expect(Tok::DotDot)?;
            let hi = self.expr(true)?;
            range = Some((idx, lo, hi));
        }
        Ok(Stmt::Constraint {
            lhs,
            op,
            rhs,
            range,
            line: start.line,
            col: start.col,
        })
    }

    fn enter(&mut self) -> Result<(), ModelError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(self.error("shallower nesting"));
        }
        Ok(())
    }

    /// `line_end` stops the additive loop at an operator that starts a new
    /// line, which is how consecutive constraints are separated.
    fn expr(&mut self, line_end: bool) -> Result<Raw, ModelError> {
        self.enter()?;
        let first = self.term()?;
        let (line, col) = (first.line, first.col);
        let mut terms = vec![first];
        loop {
            let t = self.peek().clone();
            if !matches!(t.tok, Tok::Plus | Tok::Minus) {
                break;
            }
            let prev_line = self.toks[self.pos.saturating_sub(1)].line;
            if line_end && t.line > prev_line {
                break;
            }
            self.bump();
            let rhs = self.term()?;
            terms.push(if t.tok == Tok::Minus {
                Raw {
                    line: t.line,
                    col: t.col,
                    kind: RawKind::Neg(Box::new(rhs)),
                }
            } else {
                rhs
            });
        }
        let acc = if terms.len() == 1 {
            terms.pop().unwrap()
        } else {
            Raw {
                line,
                col,
                kind: RawKind::Add(terms),
            }
        };
        self.depth -= 1;
        Ok(acc)
    }

    fn term(&mut self) -> Result<Raw, ModelError> {
        let first = self.unary()?;
        let (line, col) = (first.line, first.col);
        let mut acc = first;
        let mut open_mul = false;
        loop {
            match self.peek().tok {
                Tok::Star => {
                    self.bump();
                    let rhs = self.unary()?;
                    acc = match acc.kind {
                        RawKind::Mul(mut xs) if open_mul => {
                            xs.push(rhs);
                            Raw {
                                line,
                                col,
                                kind: RawKind::Mul(xs),
                            }
                        }
                        _ => Raw {
                            line,
                            col,
                            kind: RawKind::Mul(vec![acc, rhs]),
                        },
                    };
                    open_mul = true;
                }
                Tok::Slash => {
                    self.bump();
                    let rhs = self.unary()?;
                    acc = Raw {
                        line,
                        col,
                        kind: RawKind::Div(Box::new(acc), Box::new(rhs)),
                    };
                    open_mul = false;
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Raw, ModelError> {
        let t = self.peek().clone();
        if t.tok != Tok::Minus {
            return self.power();
        }
        self.bump();
        if let Tok::Num(v) = self.peek().tok {
            if *self.peek_at(1) != Tok::Caret {
                self.bump();
                return Ok(Raw {
                    line: t.line,
                    col: t.col,
                    kind: RawKind::Num(-v),
                });
            }
        }
        self.enter()?;
        let inner = self.unary()?;
        self.depth -= 1;
        Ok(Raw {
            line: t.line,
            col: t.col,
            kind: RawKind::Neg(Box::new(inner)),
        })
    }

    fn power(&mut self) -> Result<Raw, ModelError> {
        let base = self.atom()?;
        if self.peek().tok != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        self.enter()?;
        let exp = self.unary()?;
        self.depth -= 1;
        Ok(Raw {
            line: base.line,
            col: base.col,
            kind: RawKind::Pow(Box::new(base), Box::new(exp)),
        })
    }

    fn atom(&mut self) -> Result<Raw, ModelError> {
        let t = self.peek().clone();
        let at = |kind| Raw {
            kind,
            line: t.line,
            col: t.col,
        };
        match &t.tok {
            Tok::Num(v) => {
                self.bump();
                Ok(at(RawKind::Num(*v)))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr(false)?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name)
                if matches!(
                    name.as_str(),
                    "log" | "log2" | "exp" | "abs" | "sqrt" | "sum"
                ) =>
            {
                let name = name.clone();
                self.bump();
                self.expect(Tok::LParen)?;
                let mut args = vec![self.expr(false)?];
                while self.peek().tok == Tok::Comma {
                    self.bump();
                    args.push(self.expr(false)?);
                }
                self.expect(Tok::RParen)?;
                Ok(at(RawKind::Call(name, args)))
            }
            Tok::Ident(name) if is_identifier(name) => {
                let name = name.clone();
                self.bump();
                if self.peek().tok == Tok::LBracket {
                    self.bump();
                    let idx = self.expr(false)?;
                    self.expect(Tok::RBracket)?;
                    Ok(at(RawKind::Index(name, Box::new(idx))))
                } else {
                    Ok(at(RawKind::Name(name)))
                }
            }
            _ => Err(self.error("expression")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Sym {
    Var,
    Param,
    VarFamily(i64),
    ParamFamily(i64),
}

struct Elaborator {
    symbols: HashMap<String, Sym>,
    params: BTreeMap<String, Option<f64>>,
    binds: Vec<(String, i64)>,
    nodes: usize,
}

fn invalid(line: usize, col: usize, detail: impl Into<String>) -> ModelError {
    ModelError::Invalid {
        line,
        col,
        detail: detail.into(),
    }
}

fn member(name: &str, k: i64) -> String {
    format!("{name}_{k}")
}

impl Elaborator {
    fn declare(&mut self, name: &str, sym: Sym, line: usize, col: usize) -> Result<(), ModelError> {
        if self.symbols.contains_key(name) {
            return Err(ModelError::DuplicateDeclaration {
                name: name.to_string(),
                line,
                col,
            });
        }
        self.symbols.insert(name.to_string(), sym);
        Ok(())
    }

    fn param_env(&self) -> Assignment {
        self.params
            .iter()
            .filter_map(|(k, v)| v.map(|v| (k.clone(), v)))
            .collect()
    }

    /// Value of a variable-free expression.
    fn constant(&mut self, raw: &Raw, what: &str) -> Result<f64, ModelError> {
        let e = self.expr(raw)?;
        if !e.free_vars().is_empty() {
            return Err(invalid(
                raw.line,
                raw.col,
                format!("{what} must not depend on variables"),
            ));
        }
        e.evaluate(&self.param_env())
            .map_err(|err| invalid(raw.line, raw.col, format!("{what}: {err}")))
    }

    fn integer(&mut self, raw: &Raw, what: &str) -> Result<i64, ModelError> {
        let v = self.constant(raw, what)?;
        if v.fract() != 0.0 || v.abs() > 1e9 {
            return Err(invalid(
                raw.line,
                raw.col,
                format!("{what} must be an integer, got {v}"),
            ));
        }
        Ok(v as i64)
    }

    fn lookup(&self, name: &str, line: usize, col: usize) -> Result<Sym, ModelError> {
        self.symbols
            .get(name)
            .copied()
            .ok_or_else(|| ModelError::UndeclaredSymbol {
                name: name.to_string(),
                line,
                col,
            })
    }

    fn expr(&mut self, raw: &Raw) -> Result<Expr, ModelError> {
        self.nodes += 1;
        if self.nodes > MAX_NODES {
            return Err(invalid(
                raw.line,
                raw.col,
                "model expands to too many nodes",
            ));
        }
        let (line, col) = (raw.line, raw.col);
        Ok(match &raw.kind {
            RawKind::Num(v) => Expr::Const(*v),
            RawKind::Name(name) => {
                if let Some((_, k)) = self.binds.iter().rev().find(|(n, _)| n == name) {
                    return Ok(Expr::Const(*k as f64));
                }
                match self.lookup(name, line, col)? {
                    Sym::Var => Expr::Var(name.clone()),
                    Sym::Param => Expr::Param(name.clone()),
                    Sym::VarFamily(_) | Sym::ParamFamily(_) => {
                        return Err(invalid(
                            line,
                            col,
                            format!("`{name}` is indexed; write `{name}[i]`"),
                        ))
                    }
                }
            }
            RawKind::Index(name, idx) => {
                let sym = self.lookup(name, line, col)?;
                let k = self.integer(idx, "index")?;
                match sym {
                    Sym::VarFamily(n) | Sym::ParamFamily(n) if (1..=n).contains(&k) => {
                        if matches!(sym, Sym::VarFamily(_)) {
                            Expr::Var(member(name, k))
                        } else {
                            Expr::Param(member(name, k))
                        }
                    }
                    Sym::VarFamily(n) | Sym::ParamFamily(n) => {
                        return Err(invalid(
                            line,
                            col,
                            format!("index {k} outside 1..{n} for `{name}`"),
                        ))
                    }
                    _ => return Err(invalid(line, col, format!("`{name}` is not indexed"))),
                }
            }
            RawKind::Call(f, args) => {
                if f == "sum" {
                    return self.sum(args, line, col);
                }
                if args.len() != 1 {
                    return Err(invalid(line, col, format!("`{f}` takes one argument")));
                }
                let a = self.expr(&args[0])?;
                match f.as_str() {
                    "log" => a.log(),
                    "log2" => a.log2(),
                    "exp" => a.exp(),
                    "abs" => a.abs(),
                    _ => a.sqrt(),
                }
            }
            RawKind::Add(xs) => {
                Expr::Add(xs.iter().map(|x| self.expr(x)).collect::<Result<_, _>>()?)
            }
            RawKind::Mul(xs) => {
                Expr::Mul(xs.iter().map(|x| self.expr(x)).collect::<Result<_, _>>()?)
            }
            RawKind::Div(n, d) => {
                let n = self.expr(n)?;
                let d = self.expr(d)?;
                Expr::checked_div(n, d)
                    .ok_or_else(|| invalid(line, col, "division by the constant 0"))?
            }
            RawKind::Pow(b, p) => {
                let b = self.expr(b)?;
                let p = self.constant(p, "exponent")?;
                b.pow(p)
            }
            RawKind::Neg(c) => -self.expr(c)?,
        })
    }

    fn sum(&mut self, args: &[Raw], line: usize, col: usize) -> Result<Expr, ModelError> {
        let [body, idx, lo, hi] = args else {
            return Err(invalid(line, col, "sum takes (expression, index, lo, hi)"));
        };
        let RawKind::Name(idx) = &idx.kind else {
            return Err(invalid(idx.line, idx.col, "sum index must be a name"));
        };
        let (lo, hi) = self.range(idx, lo, hi, line, col)?;
        let mut terms = Vec::new();
        for k in lo..=hi {
            self.binds.push((idx.clone(), k));
            let t = self.expr(body);
            self.binds.pop();
            terms.push(t?);
        }
        Ok(Expr::sum(terms))
    }

    fn range(
        &mut self,
        idx: &str,
        lo: &Raw,
        hi: &Raw,
        line: usize,
        col: usize,
    ) -> Result<(i64, i64), ModelError> {
        if self.symbols.contains_key(idx) {
            return Err(invalid(
                line,
                col,
                format!("index `{idx}` shadows a declaration"),
            ));
        }
        let lo = self.integer(lo, "range start")?;
        let hi = self.integer(hi, "range end")?;
        if hi - lo >= MAX_FAMILY {
            return Err(invalid(line, col, "range too long"));
        }
        Ok((lo, hi))
    }
}

fn difference(a: Expr, b: Expr) -> Expr {
    if b == Expr::Const(0.0) {
        a
    } else if a == Expr::Const(0.0) {
        -b
    } else {
        a - b
    }
}

/// Parse modeling-language source into a [`Problem`].
pub fn parse_problem(src: &str) -> Result<Problem, ModelError> {
    let toks = lex(src)?;
    let mut parser = Parser {
        toks,
        pos: 0,
        depth: 0,
    };
    let (name, stmts) = parser.program()?;

    let mut el = Elaborator {
        symbols: HashMap::new(),
        params: BTreeMap::new(),
        binds: Vec::new(),
        nodes: 0,
    };
    let mut variables = Vec::new();
    let mut objective = None;
    let mut ineq = Vec::new();
    let mut eq = Vec::new();

    for stmt in &stmts {
        match stmt {
            Stmt::Param {
                name,
                value,
                array,
                line,
                col,
            } => {
                let values = match value {
                    None => None,
                    Some(items) => Some(
                        items
                            .iter()
                            .map(|r| el.constant(r, "parameter value"))
                            .collect::<Result<Vec<_>, _>>()?,
                    ),
                };
                if *array {
                    let values = values.unwrap_or_default();
                    el.declare(name, Sym::ParamFamily(values.len() as i64), *line, *col)?;
                    for (k, v) in values.into_iter().enumerate() {
                        let m = member(name, k as i64 + 1);
                        el.declare(&m, Sym::Param, *line, *col)?;
                        el.params.insert(m, Some(v));
                    }
                } else {
                    el.declare(name, Sym::Param, *line, *col)?;
                    el.params.insert(name.clone(), values.map(|v| v[0]));
                }
            }
            Stmt::Var {
                name,
                len,
                kind,
                bounds,
                line,
                col,
            } => {
                let (lb, ub) = match bounds {
                    None if *kind == VarKind::Binary => (0.0, 1.0),
                    None => (f64::NEG_INFINITY, f64::INFINITY),
                    Some((lo, hi)) => {
                        let mut value = |b: &Bound| -> Result<f64, ModelError> {
                            match b {
                                Bound::NegInf => Ok(f64::NEG_INFINITY),
                                Bound::PosInf => Ok(f64::INFINITY),
                                Bound::Value(r) => el.constant(r, "bound"),
                            }
                        };
                        (value(lo)?, value(hi)?)
                    }
                };
                let names = match len {
                    None => {
                        el.declare(name, Sym::Var, *line, *col)?;
                        vec![name.clone()]
                    }
                    Some(len) => {
                        let n = el.integer(len, "family length")?;
                        if !(1..=MAX_FAMILY).contains(&n) {
                            return Err(invalid(
                                *line,
                                *col,
                                format!("family length {n} out of range"),
                            ));
                        }
                        el.declare(name, Sym::VarFamily(n), *line, *col)?;
                        (1..=n).map(|k| member(name, k)).collect()
                    }
                };
                for n in names {
                    if !is_identifier(&n) {
                        return Err(invalid(*line, *col, format!("`{n}` is not a valid name")));
                    }
                    if n != *name {
                        el.declare(&n, Sym::Var, *line, *col)?;
                    }
                    variables.push(VarDecl::new(n, *kind, lb, ub)?);
                }
                if variables.len() > MAX_FAMILY as usize * 2 {
                    return Err(invalid(*line, *col, "too many variables"));
                }
            }
            Stmt::Objective {
                direction,
                expr,
                line,
                col,
            } => {
                if objective.is_some() {
                    return Err(syntax(
                        *line,
                        *col,
                        "a single objective",
                        "a second objective".into(),
                    ));
                }
                objective = Some((*direction, el.expr(expr)?));
            }
            Stmt::Constraint {
                lhs,
                op,
                rhs,
                range,
                line,
                col,
            } => {
                let ks: Vec<Option<(String, i64)>> = match range {
                    None => vec![None],
                    Some((idx, lo, hi)) => {
                        let (lo, hi) = el.range(idx, lo, hi, *line, *col)?;
                        (lo..=hi).map(|k| Some((idx.clone(), k))).collect()
                    }
                };
                for k in ks {
                    let pushed = k.is_some();
                    if let Some(b) = k {
                        el.binds.push(b);
                    }
                    let sides = el.expr(lhs).and_then(|l| Ok((l, el.expr(rhs)?)));
                    if pushed {
                        el.binds.pop();
                    }
                    let (l, r) = sides?;
                    match op {
                        Tok::Le => ineq.push(difference(l, r)),
                        Tok::Ge => ineq.push(difference(r, l)),
                        _ => eq.push(difference(l, r)),
                    }
                }
            }
        }
    }

    let Some((direction, objective)) = objective else {
        let t = parser.peek();
        return Err(syntax(
            t.line,
            t.col,
            "`minimize` or `maximize`",
            t.tok.describe(),
        ));
    };
    let pb = Problem {
        name,
        direction,
        objective,
        ineq,
        eq,
        variables,
        params: el.params,
    };
    pb.validate()?;
    Ok(pb)
}

fn fmt_bound(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

/// Render a problem as modeling-language source; [`parse_problem`] reads it
/// back to an equal problem.
pub fn emit_dsl(pb: &Problem) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "problem {}", pb.name);
    for (k, v) in &pb.params {
        match v {
            Some(v) => {
                let _ = writeln!(out, "param {k} = {v}");
            }
            None => {
                let _ = writeln!(out, "param {k}");
            }
        }
    }
    for v in &pb.variables {
        let _ = write!(out, "var {} {}", v.name, v.kind.as_str());
        let default = match v.kind {
            VarKind::Binary => (0.0, 1.0),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        };
        if (v.lb, v.ub) != default {
            let _ = write!(out, " in [{}, {}]", fmt_bound(v.lb), fmt_bound(v.ub));
        }
        out.push('\n');
    }
    let _ = writeln!(out, "{} {}", pb.direction.as_str(), pb.objective);
    if !pb.ineq.is_empty() || !pb.eq.is_empty() {
        out.push_str("subject to\n");
        for g in &pb.ineq {
            let _ = writeln!(out, "  {g} <= 0");
        }
        for h in &pb.eq {
            let _ = writeln!(out, "  {h} == 0");
        }
    }
    out
}
