//! Arithmetic expressions for problem files.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?          right associative, constant exponent
//! atom    := number | name | func '(' expr ')' | '(' expr ')'
//! func    := sin | cos | exp | sqrt
//! ```

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("undeclared variable `{name}` at byte {offset}")]
    Undeclared { name: String, offset: usize },
    #[error("empty expression")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{kind} at byte {offset}")]
pub struct EvalError {
    pub kind: EvalErrorKind,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalErrorKind {
    #[error("division by zero")]
    DivisionByZero,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("expected {expected} variable values, got {got}")]
    Arity { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Sqrt,
}

impl UnaryOp {
    fn from_name(name: &str) -> Option<Self> {
        match name {
            "sin" => Some(Self::Sin),
            "cos" => Some(Self::Cos),
            "exp" => Some(Self::Exp),
            "sqrt" => Some(Self::Sqrt),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Self::Neg => "-",
            Self::Sin => "sin",
            Self::Cos => "cos",
            Self::Exp => "exp",
            Self::Sqrt => "sqrt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    fn symbol(self) -> char {
        match self {
            Self::Add => '+',
            Self::Sub => '-',
            Self::Mul => '*',
            Self::Div => '/',
            Self::Pow => '^',
        }
    }
}

#[derive(Debug, Clone)]
pub enum Node {
    Const(f64),
    Var { slot: usize, name: String },
    Unary(UnaryOp, Box<Located>),
    Binary(BinaryOp, Box<Located>, Box<Located>),
}

/// A node tagged with the byte offset it was parsed from. Offsets are
/// ignored by equality.
#[derive(Debug, Clone)]
pub struct Located {
    pub node: Node,
    pub offset: usize,
}

impl PartialEq for Located {
    fn eq(&self, other: &Self) -> bool {
        self.node == other.node
    }
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Node::Const(a), Node::Const(b)) => a.to_bits() == b.to_bits(),
            (Node::Var { slot: a, name: n }, Node::Var { slot: b, name: m }) => a == b && n == m,
            (Node::Unary(o, a), Node::Unary(p, b)) => o == p && a == b,
            (Node::Binary(o, a1, a2), Node::Binary(p, b1, b2)) => o == p && a1 == b1 && a2 == b2,
            _ => false,
        }
    }
}

impl Located {
    fn is_constant(&self) -> bool {
        match &self.node {
            Node::Const(_) => true,
            Node::Var { .. } => false,
            Node::Unary(_, a) => a.is_constant(),
            Node::Binary(_, a, b) => a.is_constant() && b.is_constant(),
        }
    }

    fn eval(&self, vars: &[f64]) -> Result<f64, EvalError> {
        let fail = |kind| EvalError {
            kind,
            offset: self.offset,
        };
        let v = match &self.node {
            Node::Const(c) => *c,
            Node::Var { slot, .. } => vars[*slot],
            Node::Unary(op, a) => {
                let x = a.eval(vars)?;
                match op {
                    UnaryOp::Neg => -x,
                    UnaryOp::Sin => x.sin(),
                    UnaryOp::Cos => x.cos(),
                    UnaryOp::Exp => x.exp(),
                    UnaryOp::Sqrt => {
                        if x < 0.0 {
                            return Err(fail(EvalErrorKind::Domain(format!(
                                "sqrt of negative value {x}"
                            ))));
                        }
                        x.sqrt()
                    }
                }
            }
            Node::Binary(op, a, b) => {
                let x = a.eval(vars)?;
                let y = b.eval(vars)?;
                match op {
                    BinaryOp::Add => x + y,
                    BinaryOp::Sub => x - y,
                    BinaryOp::Mul => x * y,
                    BinaryOp::Div => {
                        if y == 0.0 {
                            return Err(fail(EvalErrorKind::DivisionByZero));
                        }
                        x / y
                    }
                    BinaryOp::Pow => {
                        if x == 0.0 && y < 0.0 {
                            return Err(fail(EvalErrorKind::DivisionByZero));
                        }
                        if y.fract() == 0.0 && y.abs() <= i32::MAX as f64 {
                            x.powi(y as i32)
                        } else {
                            x.powf(y)
                        }
                    }
                }
            }
        };
        if !v.is_finite() {
            return Err(fail(EvalErrorKind::Domain(format!("non-finite result {v}"))));
        }
        Ok(v)
    }
}

impl fmt::Display for Located {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.node {
            Node::Const(c) => write!(f, "{c}"),
            Node::Var { name, .. } => f.write_str(name),
            Node::Unary(UnaryOp::Neg, a) => write!(f, "(-{a})"),
            Node::Unary(op, a) => write!(f, "{}({a})", op.name()),
            Node::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
        }
    }
}

/// A parsed expression over an ordered list of declared variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    root: Located,
    vars: Vec<String>,
}

impl Expression {
    pub fn root(&self) -> &Located {
        &self.root
    }

    pub fn variables(&self) -> &[String] {
        &self.vars
    }

    pub fn is_constant(&self) -> bool {
        self.root.is_constant()
    }

    /// Evaluates with values given in the declared variable order.
    pub fn eval_slots(&self, values: &[f64]) -> Result<f64, EvalError> {
        if values.len() != self.vars.len() {
            return Err(EvalError {
                kind: EvalErrorKind::Arity {
                    expected: self.vars.len(),
                    got: values.len(),
                },
                offset: 0,
            });
        }
        self.root.eval(values)
    }

    /// Evaluates with named bindings. Only variables that occur in the
    /// expression need to be bound.
    pub fn evaluate(&self, bindings: &HashMap<String, f64>) -> Result<f64, EvalError> {
        let mut slots = vec![f64::NAN; self.vars.len()];
        let mut missing = None;
        self.visit_vars(&self.root, &mut |slot, name, offset| {
            match bindings.get(name) {
                Some(v) => slots[slot] = *v,
                None if missing.is_none() => missing = Some((name.to_string(), offset)),
                None => {}
            }
        });
        if let Some((name, offset)) = missing {
            return Err(EvalError {
                kind: EvalErrorKind::Unbound(name),
                offset,
            });
        }
        self.root.eval(&slots)
    }

    fn visit_vars(&self, n: &Located, f: &mut impl FnMut(usize, &str, usize)) {
        match &n.node {
            Node::Const(_) => {}
            Node::Var { slot, name } => f(*slot, name, n.offset),
            Node::Unary(_, a) => self.visit_vars(a, f),
            Node::Binary(_, a, b) => {
                self.visit_vars(a, f);
                self.visit_vars(b, f);
            }
        }
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}

/// Variable names for a problem with `n` states, `r` controls, `s` reduced
/// base coordinates and a `d`-dimensional coalgebra: `x1..xn, u1..ur,
/// z1..zs, mu1..mud`, in that order.
pub fn declared_vars(n: usize, r: usize, s: usize, d: usize) -> Vec<String> {
    fn block(prefix: &'static str, len: usize) -> impl Iterator<Item = String> {
        (1..=len).map(move |i| format!("{prefix}{i}"))
    }
    block("x", n)
        .chain(block("u", r))
        .chain(block("z", s))
        .chain(block("mu", d))
        .collect()
}

pub fn parse(src: &str, declared: &[String]) -> Result<Expression, ParseError> {
    let tokens = lex(src)?;
    if tokens.is_empty() {
        return Err(ParseError::Empty);
    }
    let mut p = Parser {
        tokens,
        pos: 0,
        declared,
        end: src.len(),
    };
    let root = p.expr()?;
    if let Some(t) = p.peek() {
        return Err(ParseError::Syntax {
            offset: t.offset,
            message: format!("unexpected {}", t.tok.describe()),
        });
    }
    Ok(Expression {
        root,
        vars: declared.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Op(c) => format!("operator `{c}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    offset: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                out.push(Token {
                    tok: Tok::Op(c as char),
                    offset: start,
                });
                i += 1;
            }
            b'(' => {
                out.push(Token {
                    tok: Tok::LParen,
                    offset: start,
                });
                i += 1;
            }
            b')' => {
                out.push(Token {
                    tok: Tok::RParen,
                    offset: start,
                });
                i += 1;
            }
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text = &src[start..i];
                let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
                    offset: start,
                    message: format!("malformed number `{text}`"),
                })?;
                if !value.is_finite() {
                    return Err(ParseError::Syntax {
                        offset: start,
                        message: format!("number `{text}` out of range"),
                    });
                }
                out.push(Token {
                    tok: Tok::Num(value),
                    offset: start,
                });
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push(Token {
                    tok: Tok::Ident(src[start..i].to_string()),
                    offset: start,
                });
            }
            _ => {
                let ch = src[start..].chars().next().unwrap_or('?');
                return Err(ParseError::Syntax {
                    offset: start,
                    message: format!("unexpected character `{ch}`"),
                });
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    declared: &'a [String],
    end: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn peek_op(&self, ops: &[char]) -> Option<(char, usize)> {
        match self.peek() {
            Some(Token {
                tok: Tok::Op(c),
                offset,
            }) if ops.contains(c) => Some((*c, *offset)),
            _ => None,
        }
    }

    fn eof_error(&self, what: &str) -> ParseError {
        ParseError::Syntax {
            offset: self.end,
            message: format!("unexpected end of input, expected {what}"),
        }
    }

    fn expr(&mut self) -> Result<Located, ParseError> {
        let mut lhs = self.term()?;
        while let Some((c, offset)) = self.peek_op(&['+', '-']) {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if c == '+' { BinaryOp::Add } else { BinaryOp::Sub };
            lhs = Located {
                node: Node::Binary(op, Box::new(lhs), Box::new(rhs)),
                offset,
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Located, ParseError> {
        let mut lhs = self.unary()?;
        while let Some((c, offset)) = self.peek_op(&['*', '/']) {
            self.pos += 1;
            let rhs = self.unary()?;
            let op = if c == '*' { BinaryOp::Mul } else { BinaryOp::Div };
            lhs = Located {
                node: Node::Binary(op, Box::new(lhs), Box::new(rhs)),
                offset,
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Located, ParseError> {
        if let Some((_, offset)) = self.peek_op(&['-']) {
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(Located {
                node: Node::Unary(UnaryOp::Neg, Box::new(inner)),
                offset,
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Located, ParseError> {
        let base = self.atom()?;
        if let Some((_, offset)) = self.peek_op(&['^']) {
            self.pos += 1;
            let exponent = self.unary()?;
            if !exponent.is_constant() {
                return Err(ParseError::Syntax {
                    offset: exponent.offset,
                    message: "exponent must be a constant".into(),
                });
            }
            return Ok(Located {
                node: Node::Binary(BinaryOp::Pow, Box::new(base), Box::new(exponent)),
                offset,
            });
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Located, ParseError> {
        let t = self.next().ok_or_else(|| self.eof_error("a value"))?;
        match t.tok {
            Tok::Num(v) => Ok(Located {
                node: Node::Const(v),
                offset: t.offset,
            }),
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect_rparen(t.offset)?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                let is_call = matches!(self.peek(), Some(Token { tok: Tok::LParen, .. }));
                if is_call {
                    let op = UnaryOp::from_name(&name).ok_or_else(|| ParseError::Syntax {
                        offset: t.offset,
                        message: format!("unknown function `{name}`"),
                    })?;
                    let open = self.next().expect("peeked");
                    let arg = self.expr()?;
                    self.expect_rparen(open.offset)?;
                    return Ok(Located {
                        node: Node::Unary(op, Box::new(arg)),
                        offset: t.offset,
                    });
                }
                match self.declared.iter().position(|d| *d == name) {
                    Some(slot) => Ok(Located {
                        node: Node::Var { slot, name },
                        offset: t.offset,
                    }),
                    None => Err(ParseError::Undeclared {
                        name,
                        offset: t.offset,
                    }),
                }
            }
            other => Err(ParseError::Syntax {
                offset: t.offset,
                message: format!("unexpected {}", other.describe()),
            }),
        }
    }

    fn expect_rparen(&mut self, open: usize) -> Result<(), ParseError> {
        match self.next() {
            Some(Token {
                tok: Tok::RParen, ..
            }) => Ok(()),
            Some(t) => Err(ParseError::Syntax {
                offset: t.offset,
                message: format!("expected `)` to close `(` at byte {open}, found {}", t.tok.describe()),
            }),
            None => Err(self.eof_error("`)`")),
        }
    }
}
