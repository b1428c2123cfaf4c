//! Expression language for dependent variables.
//!
//! A dependent column is a pure, total expression over the path variables,
//! the file variables sampled before it, and the per-row noise term `error`.
//!
//! ```text
//! expr    := or
//! or      := and ("or" and)*
//! and     := not ("and" not)*
//! not     := "not" not | cmp
//! cmp     := sum (("<" | "<=" | ">" | ">=" | "==" | "!=") sum)?
//! sum     := product (("+" | "-") product)*
//! product := unary (("*" | "/") unary)*
//! unary   := "-" unary | atom
//! atom    := number | string | name | name "(" args ")"
//!          | "if" expr "then" expr "else" expr
//!          | "lookup" "(" expr "," "{" entries "}" ["," expr] ")"
//!          | "(" expr ")"
//! ```
//!
//! Functions: `exp log sqrt pow abs min max floor clamp parse_number`.
//! `log`, `sqrt`, division and fractional `pow` require a guarded operand,
//! e.g. `log(max(1e-9, x))`.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Name of the injected noise term.
pub const ERROR_TERM: &str = "error";

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Str(String),
    Var(String),
    Neg(Box<Expr>),
    Not(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
    Call(String, Vec<Expr>),
    Lookup {
        key: Box<Expr>,
        entries: Vec<(String, Expr)>,
        default: Option<Box<Expr>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "and",
            BinOp::Or => "or",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 2,
            BinOp::And => 3,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne => 5,
            BinOp::Add | BinOp::Sub => 6,
            BinOp::Mul | BinOp::Div => 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("expression parse error at byte {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

// ---------------------------------------------------------------- lexing

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Str(String),
    Ident(String),
    Sym(&'static str),
}

fn lex(src: &str) -> Result<Vec<(usize, Token)>, ParseError> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    let err = |offset, message: &str| ParseError {
        offset,
        message: message.to_string(),
    };
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let value: f64 = text.parse().map_err(|_| err(start, "malformed number"))?;
            tokens.push((start, Token::Num(value)));
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            tokens.push((start, Token::Ident(src[start..i].to_string())));
            continue;
        }
        if c == b'"' {
            let mut out = String::new();
            i += 1;
            loop {
                let Some(ch) = src[i..].chars().next() else {
                    return Err(err(start, "unterminated string"));
                };
                i += ch.len_utf8();
                match ch {
                    '"' => break,
                    '\\' => {
                        let Some(esc) = src[i..].chars().next() else {
                            return Err(err(start, "unterminated string"));
                        };
                        i += esc.len_utf8();
                        match esc {
                            '"' => out.push('"'),
                            '\\' => out.push('\\'),
                            'n' => out.push('\n'),
                            't' => out.push('\t'),
                            _ => return Err(err(i, "unknown escape")),
                        }
                    }
                    other => out.push(other),
                }
            }
            tokens.push((start, Token::Str(out)));
            continue;
        }
        let two = src.get(i..i + 2).unwrap_or("");
        let sym = match two {
            "<=" => Some("<="),
            ">=" => Some(">="),
            "==" => Some("=="),
            "!=" => Some("!="),
            _ => None,
        };
        if let Some(s) = sym {
            tokens.push((start, Token::Sym(s)));
            i += 2;
            continue;
        }
        let sym = match c {
            b'+' => "+",
            b'-' => "-",
            b'*' => "*",
            b'/' => "/",
            b'<' => "<",
            b'>' => ">",
            b'(' => "(",
            b')' => ")",
            b'{' => "{",
            b'}' => "}",
            b',' => ",",
            b':' => ":",
            _ => return Err(err(start, "unexpected character")),
        };
        tokens.push((start, Token::Sym(sym)));
        i += 1;
    }
    Ok(tokens)
}

// ---------------------------------------------------------------- parsing

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |(o, _)| *o)
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn eat_sym(&mut self, sym: &str) -> bool {
        if matches!(self.peek(), Some(Token::Sym(s)) if *s == sym) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, sym: &str) -> Result<(), ParseError> {
        if self.eat_sym(sym) {
            Ok(())
        } else {
            self.error(format!("expected '{sym}'"))
        }
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if matches!(self.peek(), Some(Token::Ident(s)) if s == kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.or()
    }

    fn or(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.and()?;
        while self.eat_keyword("or") {
            let rhs = self.and()?;
            lhs = Expr::Binary(BinOp::Or, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.not()?;
        while self.eat_keyword("and") {
            let rhs = self.not()?;
            lhs = Expr::Binary(BinOp::And, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn not(&mut self) -> Result<Expr, ParseError> {
        if self.eat_keyword("not") {
            return Ok(Expr::Not(Box::new(self.not()?)));
        }
        self.cmp()
    }

    fn cmp(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.sum()?;
        let op = match self.peek() {
            Some(Token::Sym("<")) => BinOp::Lt,
            Some(Token::Sym("<=")) => BinOp::Le,
            Some(Token::Sym(">")) => BinOp::Gt,
            Some(Token::Sym(">=")) => BinOp::Ge,
            Some(Token::Sym("==")) => BinOp::Eq,
            Some(Token::Sym("!=")) => BinOp::Ne,
            _ => return Ok(lhs),
        };
        self.pos += 1;
        let rhs = self.sum()?;
        Ok(Expr::Binary(op, Box::new(lhs), Box::new(rhs)))
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.product()?;
        loop {
            let op = if self.eat_sym("+") {
                BinOp::Add
            } else if self.eat_sym("-") {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.product()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn product(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat_sym("*") {
                BinOp::Mul
            } else if self.eat_sym("/") {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat_sym("-") {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let Some(token) = self.peek().cloned() else {
            return self.error("unexpected end of expression");
        };
        match token {
            Token::Num(x) => {
                self.pos += 1;
                Ok(Expr::Num(x))
            }
            Token::Str(s) => {
                self.pos += 1;
                Ok(Expr::Str(s))
            }
            Token::Sym("(") => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect_sym(")")?;
                Ok(inner)
            }
            Token::Ident(name) => {
                self.pos += 1;
                match name.as_str() {
                    "if" => {
                        let cond = self.expr()?;
                        if !self.eat_keyword("then") {
                            return self.error("expected 'then'");
                        }
                        let then = self.expr()?;
                        if !self.eat_keyword("else") {
                            return self.error("expected 'else'");
                        }
                        let otherwise = self.expr()?;
                        Ok(Expr::If(Box::new(cond), Box::new(then), Box::new(otherwise)))
                    }
                    "then" | "else" | "and" | "or" | "not" => self.error(format!("unexpected keyword '{name}'")),
                    "lookup" if matches!(self.peek(), Some(Token::Sym("("))) => self.lookup(),
                    _ if self.eat_sym("(") => {
                        let mut args = Vec::new();
                        if !self.eat_sym(")") {
                            loop {
                                args.push(self.expr()?);
                                if self.eat_sym(")") {
                                    break;
                                }
                                self.expect_sym(",")?;
                            }
                        }
                        Ok(Expr::Call(name, args))
                    }
                    _ => Ok(Expr::Var(name)),
                }
            }
            Token::Sym(s) => self.error(format!("unexpected '{s}'")),
        }
    }

    fn lookup(&mut self) -> Result<Expr, ParseError> {
        self.expect_sym("(")?;
        let key = self.expr()?;
        self.expect_sym(",")?;
        self.expect_sym("{")?;
        let mut entries = Vec::new();
        if !self.eat_sym("}") {
            loop {
                let Some(Token::Str(k)) = self.peek().cloned() else {
                    return self.error("lookup keys must be string literals");
                };
                self.pos += 1;
                self.expect_sym(":")?;
                entries.push((k, self.expr()?));
                if self.eat_sym("}") {
                    break;
                }
                self.expect_sym(",")?;
            }
        }
        let default = if self.eat_sym(",") {
            Some(Box::new(self.expr()?))
        } else {
            None
        };
        self.expect_sym(")")?;
        Ok(Expr::Lookup {
            key: Box::new(key),
            entries,
            default,
        })
    }
}

pub fn parse(src: &str) -> Result<Expr, ParseError> {
    let tokens = lex(src)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        end: src.len(),
    };
    let expr = parser.expr()?;
    if parser.pos != parser.tokens.len() {
        return parser.error("trailing input");
    }
    Ok(expr)
}

// ---------------------------------------------------------------- printing

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(self, f, 0)
    }
}

fn write_expr(e: &Expr, f: &mut fmt::Formatter<'_>, parent: u8) -> fmt::Result {
    match e {
        Expr::Num(x) => {
            if *x < 0.0 {
                write!(f, "({})", crate::value::format_real(*x))
            } else {
                f.write_str(&format_number_literal(*x))
            }
        }
        Expr::Str(s) => write!(f, "{}", quote(s)),
        Expr::Var(v) => f.write_str(v),
        Expr::Neg(inner) => {
            f.write_str("-")?;
            write_expr(inner, f, 8)
        }
        Expr::Not(inner) => {
            if parent > 4 {
                f.write_str("(")?;
            }
            f.write_str("not ")?;
            write_expr(inner, f, 4)?;
            if parent > 4 {
                f.write_str(")")?;
            }
            Ok(())
        }
        Expr::Binary(op, l, r) => {
            let p = op.precedence();
            let wrap = p <= parent;
            if wrap {
                f.write_str("(")?;
            }
            // Comparisons do not chain, so both sides bind tighter.
            let left_ctx = if p == 5 { p } else { p - 1 };
            write_expr(l, f, left_ctx)?;
            write!(f, " {} ", op.symbol())?;
            write_expr(r, f, p)?;
            if wrap {
                f.write_str(")")?;
            }
            Ok(())
        }
        Expr::If(c, a, b) => {
            // Parenthesize unless the `if` is the whole expression.
            let wrap = parent > 0;
            if wrap {
                f.write_str("(")?;
            }
            f.write_str("if ")?;
            write_expr(c, f, 0)?;
            f.write_str(" then ")?;
            write_expr(a, f, 0)?;
            f.write_str(" else ")?;
            write_expr(b, f, 0)?;
            if wrap {
                f.write_str(")")?;
            }
            Ok(())
        }
        Expr::Call(name, args) => {
            write!(f, "{name}(")?;
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write_expr(a, f, 0)?;
            }
            f.write_str(")")
        }
        Expr::Lookup { key, entries, default } => {
            f.write_str("lookup(")?;
            write_expr(key, f, 0)?;
            f.write_str(", {")?;
            for (i, (k, v)) in entries.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{}: ", quote(k))?;
                write_expr(v, f, 0)?;
            }
            f.write_str("}")?;
            if let Some(d) = default {
                f.write_str(", ")?;
                write_expr(d, f, 0)?;
            }
            f.write_str(")")
        }
    }
}

fn format_number_literal(x: f64) -> String {
    // Debug output (e.g. "1e-9", "0.5") is accepted by the lexer.
    format!("{x:?}")
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for ch in s.chars() {
        match ch {
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

// ---------------------------------------------------------------- validation

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarType {
    Num,
    Str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ty {
    Num,
    Str,
    Bool,
    /// Already reported; suppresses cascading violations.
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    UnknownReference,
    UnknownFunction,
    Arity,
    Type,
    MissingDefault,
    UnguardedDomain,
    NonNumericResult,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let label = match self.kind {
            ViolationKind::UnknownReference => "unknown reference",
            ViolationKind::UnknownFunction => "unknown function",
            ViolationKind::Arity => "wrong number of arguments",
            ViolationKind::Type => "type error",
            ViolationKind::MissingDefault => "lookup without default",
            ViolationKind::UnguardedDomain => "unguarded domain",
            ViolationKind::NonNumericResult => "non-numeric result",
        };
        write!(f, "{label}: {}", self.detail)
    }
}

fn function_arity(name: &str) -> Option<(usize, usize)> {
    Some(match name {
        "exp" | "log" | "sqrt" | "abs" | "floor" | "parse_number" => (1, 1),
        "pow" => (2, 2),
        "clamp" => (3, 3),
        "min" | "max" => (2, usize::MAX),
        _ => return None,
    })
}

fn literal(e: &Expr) -> Option<f64> {
    match e {
        Expr::Num(x) => Some(*x),
        Expr::Neg(inner) => literal(inner).map(|x| -x),
        _ => None,
    }
}

/// Operand is provably > 0 (`strict`) or >= 0.
fn guarded(e: &Expr, strict: bool) -> bool {
    if let Some(x) = literal(e) {
        return if strict { x > 0.0 } else { x >= 0.0 };
    }
    match e {
        Expr::Call(name, args) => match name.as_str() {
            "exp" => true,
            "abs" | "sqrt" => !strict,
            "max" => args.iter().any(|a| guarded(a, strict)),
            "clamp" => args.get(1).is_some_and(|lo| guarded(lo, strict)),
            _ => false,
        },
        _ => false,
    }
}

/// Checks closure over `declared` (plus `error`), typing, lookup defaults and
/// guarded domains. The expression must produce a number.
pub fn validate_expr(expr: &Expr, declared: &HashMap<String, VarType>) -> Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    let ty = check(expr, declared, &mut violations);
    if !matches!(ty, Ty::Num | Ty::Unknown) {
        violations.push(Violation {
            kind: ViolationKind::NonNumericResult,
            detail: format!("expression evaluates to {ty:?}"),
        });
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

fn check(e: &Expr, declared: &HashMap<String, VarType>, out: &mut Vec<Violation>) -> Ty {
    let mut push = |kind, detail: String| out.push(Violation { kind, detail });
    match e {
        Expr::Num(_) => Ty::Num,
        Expr::Str(_) => Ty::Str,
        Expr::Var(name) if name == ERROR_TERM => Ty::Num,
        Expr::Var(name) => match declared.get(name) {
            Some(VarType::Num) => Ty::Num,
            Some(VarType::Str) => Ty::Str,
            None => {
                push(ViolationKind::UnknownReference, name.clone());
                Ty::Unknown
            }
        },
        Expr::Neg(inner) => expect(inner, Ty::Num, "negation", declared, out),
        Expr::Not(inner) => {
            expect(inner, Ty::Bool, "not", declared, out);
            Ty::Bool
        }
        Expr::Binary(op, l, r) => match op {
            BinOp::Add | BinOp::Sub | BinOp::Mul => {
                expect(l, Ty::Num, op.symbol(), declared, out);
                expect(r, Ty::Num, op.symbol(), declared, out);
                Ty::Num
            }
            BinOp::Div => {
                expect(l, Ty::Num, "/", declared, out);
                expect(r, Ty::Num, "/", declared, out);
                if !guarded(r, true) && !literal(r).is_some_and(|x| x != 0.0) {
                    out.push(Violation {
                        kind: ViolationKind::UnguardedDomain,
                        detail: format!("divisor `{r}` is not provably nonzero"),
                    });
                }
                Ty::Num
            }
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                expect(l, Ty::Num, op.symbol(), declared, out);
                expect(r, Ty::Num, op.symbol(), declared, out);
                Ty::Bool
            }
            BinOp::Eq | BinOp::Ne => {
                let lt = check(l, declared, out);
                let rt = check(r, declared, out);
                if lt != rt && lt != Ty::Unknown && rt != Ty::Unknown {
                    out.push(Violation {
                        kind: ViolationKind::Type,
                        detail: format!("cannot compare {lt:?} with {rt:?}"),
                    });
                }
                Ty::Bool
            }
            BinOp::And | BinOp::Or => {
                expect(l, Ty::Bool, op.symbol(), declared, out);
                expect(r, Ty::Bool, op.symbol(), declared, out);
                Ty::Bool
            }
        },
        Expr::If(c, a, b) => {
            expect(c, Ty::Bool, "if condition", declared, out);
            let at = check(a, declared, out);
            let bt = check(b, declared, out);
            match (at, bt) {
                (Ty::Unknown, t) | (t, Ty::Unknown) => t,
                (x, y) if x == y => x,
                (x, y) => {
                    out.push(Violation {
                        kind: ViolationKind::Type,
                        detail: format!("if branches disagree: {x:?} vs {y:?}"),
                    });
                    Ty::Unknown
                }
            }
        }
        Expr::Lookup { key, entries, default } => {
            let kt = check(key, declared, out);
            if kt != Ty::Str && kt != Ty::Unknown {
                out.push(Violation {
                    kind: ViolationKind::Type,
                    detail: format!("lookup key must be a string, found {kt:?}"),
                });
            }
            let mut result = Ty::Unknown;
            let values = entries.iter().map(|(_, v)| v).chain(default.as_deref());
            for v in values {
                let t = check(v, declared, out);
                if result == Ty::Unknown {
                    result = t;
                } else if t != Ty::Unknown && t != result {
                    out.push(Violation {
                        kind: ViolationKind::Type,
                        detail: format!("lookup values mix {result:?} and {t:?}"),
                    });
                }
            }
            if default.is_none() {
                out.push(Violation {
                    kind: ViolationKind::MissingDefault,
                    detail: format!("lookup over `{key}` has no default"),
                });
            }
            result
        }
        Expr::Call(name, args) => {
            let Some((lo, hi)) = function_arity(name) else {
                push(ViolationKind::UnknownFunction, name.clone());
                for a in args {
                    check(a, declared, out);
                }
                return Ty::Unknown;
            };
            if args.len() < lo || args.len() > hi {
                push(ViolationKind::Arity, format!("{name} takes {lo}..{hi} arguments, got {}", args.len()));
            }
            if name == "parse_number" {
                for a in args {
                    expect(a, Ty::Str, name, declared, out);
                }
                return Ty::Num;
            }
            for a in args {
                expect(a, Ty::Num, name, declared, out);
            }
            let unguarded = |detail: String| Violation {
                kind: ViolationKind::UnguardedDomain,
                detail,
            };
            match name.as_str() {
                "log" if args.first().is_some_and(|a| !guarded(a, true)) => {
                    out.push(unguarded(format!("log argument `{}` is not provably positive", args[0])));
                }
                "sqrt" if args.first().is_some_and(|a| !guarded(a, false)) => {
                    out.push(unguarded(format!("sqrt argument `{}` is not provably non-negative", args[0])));
                }
                "pow" if args.len() == 2 => {
                    let ok = match literal(&args[1]) {
                        Some(k) if k.fract() == 0.0 => k >= 0.0 || guarded(&args[0], true),
                        Some(k) if k > 0.0 => guarded(&args[0], false),
                        _ => guarded(&args[0], true),
                    };
                    if !ok {
                        out.push(unguarded(format!("pow base `{}` is not guarded for its exponent", args[0])));
                    }
                }
                _ => {}
            }
            Ty::Num
        }
    }
}

fn expect(e: &Expr, want: Ty, ctx: &str, declared: &HashMap<String, VarType>, out: &mut Vec<Violation>) -> Ty {
    let got = check(e, declared, out);
    if got != want && got != Ty::Unknown {
        out.push(Violation {
            kind: ViolationKind::Type,
            detail: format!("{ctx} expects {want:?}, found {got:?} in `{e}`"),
        });
    }
    want
}

/// Variable names referenced by the expression (excluding `error`), in first
/// occurrence order.
pub fn references(e: &Expr) -> Vec<String> {
    fn walk(e: &Expr, out: &mut Vec<String>) {
        match e {
            Expr::Var(v) if v != ERROR_TERM => {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
            Expr::Num(_) | Expr::Str(_) | Expr::Var(_) => {}
            Expr::Neg(x) | Expr::Not(x) => walk(x, out),
            Expr::Binary(_, a, b) => {
                walk(a, out);
                walk(b, out);
            }
            Expr::If(a, b, c) => {
                walk(a, out);
                walk(b, out);
                walk(c, out);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| walk(a, out)),
            Expr::Lookup { key, entries, default } => {
                walk(key, out);
                entries.iter().for_each(|(_, v)| walk(v, out));
                if let Some(d) = default {
                    walk(d, out);
                }
            }
        }
    }
    let mut out = Vec::new();
    walk(e, &mut out);
    out
}

// ---------------------------------------------------------------- evaluation

#[derive(Debug, Clone, PartialEq, Error)]
#[error("expression evaluation failed: {0}")]
pub struct ExprEvalError(pub String);

/// A variable binding during evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Binding<'a> {
    Num(f64),
    Str(&'a str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Val<'a> {
    Num(f64),
    Str(&'a str),
    Bool(bool),
}

/// Extract the first numeric run (`[+-]?digits[.digits]`) of a string.
pub fn parse_number(s: &str) -> Option<f64> {
    let bytes = s.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let digit_at = |k: usize| bytes.get(k).is_some_and(u8::is_ascii_digit);
        let signed = (bytes[i] == b'-' || bytes[i] == b'+') && digit_at(i + 1);
        if digit_at(i) || signed {
            let start = i;
            if signed {
                i += 1;
            }
            while digit_at(i) {
                i += 1;
            }
            if bytes.get(i) == Some(&b'.') && digit_at(i + 1) {
                i += 1;
                while digit_at(i) {
                    i += 1;
                }
            }
            return s[start..i].parse().ok();
        }
        i += 1;
    }
    None
}

/// Compiled expression with variable references resolved to slots.
#[derive(Debug, Clone)]
pub struct CompiledExpr {
    root: Node,
}

#[derive(Debug, Clone)]
enum Node {
    Num(f64),
    Str(String),
    Slot(usize),
    Error,
    Neg(Box<Node>),
    Not(Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    If(Box<Node>, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
    Lookup(Box<Node>, Vec<(String, Node)>, Box<Node>),
}

#[derive(Debug, Clone, Copy)]
enum Func {
    Exp,
    Log,
    Sqrt,
    Pow,
    Abs,
    Min,
    Max,
    Floor,
    Clamp,
    ParseNumber,
}

impl CompiledExpr {
    /// Resolve names against `slots`; fails on names that were not declared
    /// or constructs the validator would reject.
    pub fn compile(expr: &Expr, slots: &[&str]) -> Result<Self, ExprEvalError> {
        Ok(Self {
            root: compile_node(expr, slots)?,
        })
    }

    pub fn eval(&self, env: &[Binding<'_>], error: f64) -> Result<f64, ExprEvalError> {
        match eval_node(&self.root, env, error)? {
            Val::Num(x) if x.is_finite() => Ok(x),
            Val::Num(x) => Err(ExprEvalError(format!("non-finite result {x}"))),
            other => Err(ExprEvalError(format!("non-numeric result {other:?}"))),
        }
    }
}

fn compile_node(e: &Expr, slots: &[&str]) -> Result<Node, ExprEvalError> {
    let sub = |x: &Expr| compile_node(x, slots).map(Box::new);
    Ok(match e {
        Expr::Num(x) => Node::Num(*x),
        Expr::Str(s) => Node::Str(s.clone()),
        Expr::Var(v) if v == ERROR_TERM => Node::Error,
        Expr::Var(v) => Node::Slot(
            slots
                .iter()
                .position(|s| s == v)
                .ok_or_else(|| ExprEvalError(format!("unbound variable {v}")))?,
        ),
        Expr::Neg(x) => Node::Neg(sub(x)?),
        Expr::Not(x) => Node::Not(sub(x)?),
        Expr::Binary(op, a, b) => Node::Binary(*op, sub(a)?, sub(b)?),
        Expr::If(c, a, b) => Node::If(sub(c)?, sub(a)?, sub(b)?),
        Expr::Call(name, args) => {
            let f = match name.as_str() {
                "exp" => Func::Exp,
                "log" => Func::Log,
                "sqrt" => Func::Sqrt,
                "pow" => Func::Pow,
                "abs" => Func::Abs,
                "min" => Func::Min,
                "max" => Func::Max,
                "floor" => Func::Floor,
                "clamp" => Func::Clamp,
                "parse_number" => Func::ParseNumber,
                other => return Err(ExprEvalError(format!("unknown function {other}"))),
            };
            let args = args.iter().map(|a| compile_node(a, slots)).collect::<Result<_, _>>()?;
            Node::Call(f, args)
        }
        Expr::Lookup { key, entries, default } => {
            let default = default
                .as_deref()
                .ok_or_else(|| ExprEvalError("lookup without default".into()))?;
            let entries = entries
                .iter()
                .map(|(k, v)| Ok((k.clone(), compile_node(v, slots)?)))
                .collect::<Result<_, ExprEvalError>>()?;
            Node::Lookup(sub(key)?, entries, sub(default)?)
        }
    })
}

fn num(v: Val<'_>) -> Result<f64, ExprEvalError> {
    match v {
        Val::Num(x) => Ok(x),
        other => Err(ExprEvalError(format!("expected number, found {other:?}"))),
    }
}

fn boolean(v: Val<'_>) -> Result<bool, ExprEvalError> {
    match v {
        Val::Bool(b) => Ok(b),
        other => Err(ExprEvalError(format!("expected boolean, found {other:?}"))),
    }
}

fn eval_node<'a>(n: &'a Node, env: &[Binding<'a>], error: f64) -> Result<Val<'a>, ExprEvalError> {
    Ok(match n {
        Node::Num(x) => Val::Num(*x),
        Node::Str(s) => Val::Str(s),
        Node::Error => Val::Num(error),
        Node::Slot(i) => match env.get(*i) {
            Some(Binding::Num(x)) => Val::Num(*x),
            Some(Binding::Str(s)) => Val::Str(s),
            None => return Err(ExprEvalError(format!("slot {i} unbound"))),
        },
        Node::Neg(x) => Val::Num(-num(eval_node(x, env, error)?)?),
        Node::Not(x) => Val::Bool(!boolean(eval_node(x, env, error)?)?),
        Node::Binary(op, a, b) => {
            if matches!(op, BinOp::And | BinOp::Or) {
                let l = boolean(eval_node(a, env, error)?)?;
                return Ok(match (op, l) {
                    (BinOp::And, false) => Val::Bool(false),
                    (BinOp::Or, true) => Val::Bool(true),
                    _ => Val::Bool(boolean(eval_node(b, env, error)?)?),
                });
            }
            let l = eval_node(a, env, error)?;
            let r = eval_node(b, env, error)?;
            match op {
                BinOp::Eq | BinOp::Ne => {
                    let same = match (l, r) {
                        (Val::Num(x), Val::Num(y)) => x == y,
                        (Val::Str(x), Val::Str(y)) => x == y,
                        (Val::Bool(x), Val::Bool(y)) => x == y,
                        _ => return Err(ExprEvalError("comparison of mixed types".into())),
                    };
                    Val::Bool(if *op == BinOp::Eq { same } else { !same })
                }
                _ => {
                    let (x, y) = (num(l)?, num(r)?);
                    match op {
                        BinOp::Add => Val::Num(x + y),
                        BinOp::Sub => Val::Num(x - y),
                        BinOp::Mul => Val::Num(x * y),
                        BinOp::Div => {
                            if y == 0.0 {
                                return Err(ExprEvalError("division by zero".into()));
                            }
                            Val::Num(x / y)
                        }
                        BinOp::Lt => Val::Bool(x < y),
                        BinOp::Le => Val::Bool(x <= y),
                        BinOp::Gt => Val::Bool(x > y),
                        BinOp::Ge => Val::Bool(x >= y),
                        _ => unreachable!(),
                    }
                }
            }
        }
        Node::If(c, a, b) => {
            if boolean(eval_node(c, env, error)?)? {
                eval_node(a, env, error)?
            } else {
                eval_node(b, env, error)?
            }
        }
        Node::Lookup(key, entries, default) => {
            let k = match eval_node(key, env, error)? {
                Val::Str(s) => s,
                other => return Err(ExprEvalError(format!("lookup key {other:?} is not a string"))),
            };
            match entries.iter().find(|(ek, _)| ek == k) {
                Some((_, v)) => eval_node(v, env, error)?,
                None => eval_node(default, env, error)?,
            }
        }
        Node::Call(f, args) => {
            if let Func::ParseNumber = f {
                let s = match eval_node(&args[0], env, error)? {
                    Val::Str(s) => s,
                    other => return Err(ExprEvalError(format!("parse_number of {other:?}"))),
                };
                let x = parse_number(s).ok_or_else(|| ExprEvalError(format!("no number in {s:?}")))?;
                return Ok(Val::Num(x));
            }
            let xs = args
                .iter()
                .map(|a| eval_node(a, env, error).and_then(num))
                .collect::<Result<Vec<f64>, _>>()?;
            let domain = |ok: bool, what: &str| {
                if ok {
                    Ok(())
                } else {
                    Err(ExprEvalError(format!("{what} outside its domain: {xs:?}")))
                }
            };
            let y = match f {
                Func::Exp => xs[0].exp(),
                Func::Log => {
                    domain(xs[0] > 0.0, "log")?;
                    xs[0].ln()
                }
                Func::Sqrt => {
                    domain(xs[0] >= 0.0, "sqrt")?;
                    xs[0].sqrt()
                }
                Func::Pow => xs[0].powf(xs[1]),
                Func::Abs => xs[0].abs(),
                Func::Min => xs.iter().copied().fold(f64::INFINITY, f64::min),
                Func::Max => xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                Func::Floor => xs[0].floor(),
                Func::Clamp => {
                    domain(xs[1] <= xs[2], "clamp")?;
                    xs[0].max(xs[1]).min(xs[2])
                }
                Func::ParseNumber => unreachable!(),
            };
            if !y.is_finite() {
                return Err(ExprEvalError(format!("non-finite value from {f:?}{xs:?}")));
            }
            Val::Num(y)
        }
    })
}

// ---------------------------------------------------------------- wrapper

/// A parsed dependent-variable expression that serializes as its source text.
#[derive(Debug, Clone, PartialEq)]
pub struct DependentExpr {
    source: String,
    ast: Expr,
}

impl DependentExpr {
    pub fn parse(source: &str) -> Result<Self, ParseError> {
        Ok(Self {
            source: source.to_string(),
            ast: parse(source)?,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn ast(&self) -> &Expr {
        &self.ast
    }

    pub fn validate(&self, declared: &HashMap<String, VarType>) -> Result<(), Vec<Violation>> {
        validate_expr(&self.ast, declared)
    }
}

impl Serialize for DependentExpr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for DependentExpr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let source = String::deserialize(d)?;
        DependentExpr::parse(&source).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn decl(pairs: &[(&str, VarType)]) -> HashMap<String, VarType> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn eval_with(src: &str, names: &[&str], env: &[Binding<'_>], error: f64) -> Result<f64, ExprEvalError> {
        let e = parse(src).unwrap();
        CompiledExpr::compile(&e, names)?.eval(env, error)
    }

    #[test]
    fn unknown_reference_reported() {
        let e = parse("2 * tempX + error").unwrap();
        let v = validate_expr(&e, &decl(&[("temp", VarType::Num)])).unwrap_err();
        assert_eq!(v[0].kind, ViolationKind::UnknownReference);
        assert_eq!(v[0].to_string(), "unknown reference: tempX");
    }

    #[test]
    fn clamp_with_error_ok() {
        let e = parse("clamp(0.8*f + error, 0.0, 2.0)").unwrap();
        assert!(validate_expr(&e, &decl(&[("f", VarType::Num)])).is_ok());
    }

    #[test]
    fn glucose_consumption_transcription() {
        // The glucose consumption rate function from repository #118,
        // transcribed construct by construct.
        let src = r#"
            clamp(
              0.8
              * lookup(gphase, {"early": 1.5, "mid": 1.0, "late": 0.3}, 1.0)
              * clamp(1.0 + 0.1 * (parse_number(temp) - 25)
                      * (1 - exp(-0.05 * pow(parse_number(temp) - 30, 2))), 0.5, 2.0)
              * (0.005 * lookup(glucose_conc, {"50 g/L": 50, "100 g/L": 100, "200 g/L": 200}, 100))
              * lookup(oxygen_level, {"anaerobic": 1.0, "microaerobic": 1.1, "aerated": 1.2}, 1.0)
              * clamp(1.0 + 0.2 * (parse_number(pH) - 4.0) - 0.1 * pow(parse_number(pH) - 5.0, 2), 0.5, 1.5)
              * lookup(gtype, {"knockout": 0.7, "overexpression": 1.3, "promoter_swap": 1.0}, 1.0)
              * clamp(1.0 - (tpt / 48) * 0.5, 0.0, 1.0)
              + error,
              0.0, 2.0)
        "#;
        let e = parse(src).unwrap();
        let declared = decl(&[
            ("gphase", VarType::Str),
            ("gtype", VarType::Str),
            ("date", VarType::Str),
            ("tpt", VarType::Num),
            ("seq_number", VarType::Num),
            ("pH", VarType::Str),
            ("temp", VarType::Str),
            ("glucose_conc", VarType::Str),
            ("oxygen_level", VarType::Str),
        ]);
        validate_expr(&e, &declared).unwrap();

        let names = ["gphase", "gtype", "tpt", "pH", "temp", "glucose_conc", "oxygen_level"];
        let env = [
            Binding::Str("early"),
            Binding::Str("knockout"),
            Binding::Num(0.0),
            Binding::Str("4.0"),
            Binding::Str("35°C"),
            Binding::Str("100 g/L"),
            Binding::Str("aerated"),
        ];
        let got = eval_with(src, &names, &env, 0.0).unwrap();
        // Same computation written out directly.
        let temp_deg: f64 = 35.0;
        let temp_effect = (1.0 + 0.1 * (temp_deg - 25.0) * (1.0 - (-0.05 * (temp_deg - 30.0).powi(2)).exp()))
            .clamp(0.5, 2.0);
        let ph: f64 = 4.0;
        let ph_effect = (1.0 + 0.2 * (ph - 4.0) - 0.1 * (ph - 5.0).powi(2)).clamp(0.5, 1.5);
        let base = 0.8 * 1.5 * temp_effect * (0.005 * 100.0) * 1.2 * ph_effect * 0.7 * 1.0;
        assert!((got - base.clamp(0.0, 2.0)).abs() < 1e-12, "{got} vs {base}");
    }

    #[test]
    fn missing_default_and_guards() {
        let d = decl(&[("x", VarType::Num), ("k", VarType::Str)]);
        let kinds = |src: &str| -> Vec<ViolationKind> {
            validate_expr(&parse(src).unwrap(), &d)
                .err()
                .unwrap_or_default()
                .into_iter()
                .map(|v| v.kind)
                .collect()
        };
        assert_eq!(kinds(r#"lookup(k, {"a": 1})"#), vec![ViolationKind::MissingDefault]);
        assert_eq!(kinds("log(x)"), vec![ViolationKind::UnguardedDomain]);
        assert!(kinds("log(max(1e-9, x))").is_empty());
        assert_eq!(kinds("sqrt(x - 1)"), vec![ViolationKind::UnguardedDomain]);
        assert!(kinds("sqrt(abs(x))").is_empty());
        assert_eq!(kinds("1 / x"), vec![ViolationKind::UnguardedDomain]);
        assert!(kinds("x / 48").is_empty());
        assert!(kinds("pow(x, 2)").is_empty());
        assert_eq!(kinds("pow(x, 0.5)"), vec![ViolationKind::UnguardedDomain]);
        assert_eq!(kinds("k + 1"), vec![ViolationKind::Type]);
        assert_eq!(kinds("x > 1"), vec![ViolationKind::NonNumericResult]);
        assert_eq!(kinds("frobnicate(x)"), vec![ViolationKind::UnknownFunction]);
        assert!(kinds(r#"if k == "a" and x > 2 then x else 0 - x"#).is_empty());
    }

    #[test]
    fn parse_number_examples() {
        assert_eq!(parse_number("35°C"), Some(35.0));
        assert_eq!(parse_number("ns=0.05"), Some(0.05));
        assert_eq!(parse_number("-4.5 units"), Some(-4.5));
        assert_eq!(parse_number("pH"), None);
        assert_eq!(parse_number("a-b 7"), Some(7.0));
    }

    #[test]
    fn runtime_domain_errors() {
        let err = eval_with("1 / x", &["x"], &[Binding::Num(0.0)], 0.0);
        assert!(err.is_err());
        let err = eval_with("exp(x)", &["x"], &[Binding::Num(1e6)], 0.0);
        assert!(err.is_err());
    }

    #[test]
    fn display_round_trips_examples() {
        for src in [
            "clamp(0.8 * f + error, 0.0, 2.0)",
            "-(a - b) * 2",
            "a - (b - c)",
            "a / (b * c)",
            r#"if k == "x" then 1 else 2"#,
            r#"1 + (if k == "x" then 1 else 2)"#,
            "not (a < b) or a >= 1e-9",
            r#"lookup(k, {"a b": 1.5, "c\"d": -2}, 0)"#,
        ] {
            let e = parse(src).unwrap();
            let printed = e.to_string();
            assert_eq!(parse(&printed).unwrap(), e, "{src} -> {printed}");
        }
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0.0f64..1000.0).prop_map(Expr::Num),
            "[a-c]".prop_map(Expr::Var),
            "[a-z ]{0,4}".prop_map(Expr::Str),
        ];
        leaf.prop_recursive(4, 32, 3, |inner| {
            let ops = prop_oneof![
                Just(BinOp::Add),
                Just(BinOp::Sub),
                Just(BinOp::Mul),
                Just(BinOp::Div),
                Just(BinOp::Lt),
                Just(BinOp::Eq),
                Just(BinOp::And),
                Just(BinOp::Or),
            ];
            prop_oneof![
                (ops, inner.clone(), inner.clone()).prop_map(|(op, a, b)| Expr::Binary(op, Box::new(a), Box::new(b))),
                inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
                inner.clone().prop_map(|a| Expr::Not(Box::new(a))),
                (inner.clone(), inner.clone(), inner.clone())
                    .prop_map(|(a, b, c)| Expr::If(Box::new(a), Box::new(b), Box::new(c))),
                prop::collection::vec(inner.clone(), 1..3).prop_map(|args| Expr::Call("max".into(), args)),
                (inner.clone(), inner.clone(), inner)
                    .prop_map(|(k, v, d)| Expr::Lookup {
                        key: Box::new(k),
                        entries: vec![("x".into(), v)],
                        default: Some(Box::new(d)),
                    }),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(e in arb_expr()) {
            let printed = e.to_string();
            prop_assert_eq!(parse(&printed).unwrap(), e);
        }
    }
}
