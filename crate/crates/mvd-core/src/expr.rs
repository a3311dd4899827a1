//! Scalar expression language for the vital rates and initial data, so
//! problems can be defined in a config file instead of recompiled.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! expr   := term (("+" | "-") term)*
//! term   := factor (("*" | "/") factor)*
//! factor := ("-")? atom ("^" factor)?
//! atom   := number | name | name "(" expr ")" | "(" expr ")"
//! ```
//!
//! Numbers are decimal with an optional exponent part. `e` and `pi` are
//! predefined constants unless the caller lists them as variables.
//!
//! Precedence notes: `^` is right-associative, and **unary minus binds
//! tighter than `^`**: `-x^2` parses as `(-x)^2`, not `-(x^2)`.
//! Parenthesize when the other reading is wanted. A negative base with a
//! non-integer exponent evaluates to NaN, which checked evaluation
//! reports as an error.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ExprError {
    #[error("parse error at byte {offset}: expected {expected}")]
    Parse { offset: usize, expected: String },
    #[error("unknown variable {name:?} at byte {offset}")]
    UnknownVariable { name: String, offset: usize },
    #[error("unknown function {name:?} at byte {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("no binding supplied for variable {name:?}")]
    MissingBinding { name: String },
    #[error("expression evaluated to a non-finite value")]
    NonFiniteResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Sin,
    Cos,
    Abs,
}

impl Func {
    fn by_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    fn name(&self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Abs => "abs",
        }
    }

    fn apply(&self, x: f64) -> f64 {
        match self {
            Func::Exp => x.exp(),
            Func::Log => x.ln(),
            Func::Sqrt => x.sqrt(),
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Abs => x.abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Constant(f64),
    Variable(String),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// Immutable parsed expression.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprAst {
    root: Node,
}

impl ExprAst {
    /// Names of the variables actually referenced.
    pub fn variables(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        collect_vars(&self.root, &mut out);
        out
    }

    /// Plain IEEE evaluation; the result may be non-finite.
    pub fn eval(&self, bindings: &[(&str, f64)]) -> Result<f64, ExprError> {
        eval_node(&self.root, bindings)
    }

    /// Evaluation that reports non-finite results instead of returning them.
    pub fn eval_checked(&self, bindings: &[(&str, f64)]) -> Result<f64, ExprError> {
        let v = eval_node(&self.root, bindings)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExprError::NonFiniteResult)
        }
    }

    /// Fully parenthesized text form; re-parsing it reproduces an
    /// expression that evaluates identically.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        print_node(&self.root, &mut out);
        out
    }
}

fn collect_vars<'a>(node: &'a Node, out: &mut BTreeSet<&'a str>) {
    match node {
        Node::Constant(_) => {}
        Node::Variable(name) => {
            out.insert(name.as_str());
        }
        Node::Neg(a) | Node::Call(_, a) => collect_vars(a, out),
        Node::Bin(_, a, b) => {
            collect_vars(a, out);
            collect_vars(b, out);
        }
    }
}

fn eval_node(node: &Node, bindings: &[(&str, f64)]) -> Result<f64, ExprError> {
    Ok(match node {
        Node::Constant(c) => *c,
        Node::Variable(name) => bindings
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| ExprError::MissingBinding { name: name.clone() })?,
        Node::Neg(a) => -eval_node(a, bindings)?,
        Node::Bin(op, a, b) => {
            let a = eval_node(a, bindings)?;
            let b = eval_node(b, bindings)?;
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => a / b,
                BinOp::Pow => a.powf(b),
            }
        }
        Node::Call(f, a) => f.apply(eval_node(a, bindings)?),
    })
}

fn print_node(node: &Node, out: &mut String) {
    match node {
        Node::Constant(c) => {
            if *c < 0.0 || c.is_sign_negative() {
                let _ = write!(out, "({c})");
            } else {
                let _ = write!(out, "{c}");
            }
        }
        Node::Variable(name) => out.push_str(name),
        Node::Neg(a) => {
            out.push_str("(-");
            print_node(a, out);
            out.push(')');
        }
        Node::Bin(op, a, b) => {
            let sym = match op {
                BinOp::Add => '+',
                BinOp::Sub => '-',
                BinOp::Mul => '*',
                BinOp::Div => '/',
                BinOp::Pow => '^',
            };
            out.push('(');
            print_node(a, out);
            let _ = write!(out, " {sym} ");
            print_node(b, out);
            out.push(')');
        }
        Node::Call(f, a) => {
            out.push_str(f.name());
            out.push('(');
            print_node(a, out);
            out.push(')');
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Name(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Eof,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(Tok, usize)>, ExprError> {
        let mut lx = Lexer {
            src: src.as_bytes(),
            pos: 0,
        };
        let mut out = Vec::new();
        loop {
            let (tok, at) = lx.next_token()?;
            let end = tok == Tok::Eof;
            out.push((tok, at));
            if end {
                return Ok(out);
            }
        }
    }

    fn next_token(&mut self) -> Result<(Tok, usize), ExprError> {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let at = self.pos;
        if self.pos >= self.src.len() {
            return Ok((Tok::Eof, at));
        }
        let c = self.src[self.pos];
        let tok = match c {
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'0'..=b'9' => return Ok((self.number()?, at)),
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos])
                    .expect("ascii slice")
                    .to_string();
                return Ok((Tok::Name(name), at));
            }
            _ => {
                return Err(ExprError::Parse {
                    offset: at,
                    expected: "a number, name, operator, or parenthesis".into(),
                })
            }
        };
        self.pos += 1;
        Ok((tok, at))
    }

    fn number(&mut self) -> Result<Tok, ExprError> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos < self.src.len() && self.src[self.pos] == b'.' {
            self.pos += 1;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
        }
        // Exponent marker only counts when digits follow; otherwise a
        // trailing `e` is the constant.
        if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
            let mut probe = self.pos + 1;
            if probe < self.src.len() && matches!(self.src[probe], b'+' | b'-') {
                probe += 1;
            }
            if probe < self.src.len() && self.src[probe].is_ascii_digit() {
                self.pos = probe;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii slice");
        text.parse::<f64>()
            .map(Tok::Num)
            .map_err(|_| ExprError::Parse {
                offset: start,
                expected: "a valid number".into(),
            })
    }
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    idx: usize,
    allowed: &'a [&'a str],
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.idx].0
    }

    fn offset(&self) -> usize {
        self.toks[self.idx].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.idx].0.clone();
        if self.idx + 1 < self.toks.len() {
            self.idx += 1;
        }
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.factor()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    // The optional sign applies to the base before `^`, so -x^2 = (-x)^2.
    fn factor(&mut self) -> Result<Node, ExprError> {
        let negate = self.eat(&Tok::Minus);
        let mut base = self.atom()?;
        if negate {
            base = Node::Neg(Box::new(base));
        }
        if self.eat(&Tok::Caret) {
            let exponent = self.factor()?;
            base = Node::Bin(BinOp::Pow, Box::new(base), Box::new(exponent));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        let at = self.offset();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Node::Constant(v))
            }
            Tok::Name(name) => {
                self.bump();
                if self.eat(&Tok::LParen) {
                    let func = Func::by_name(&name)
                        .ok_or(ExprError::UnknownFunction { name, offset: at })?;
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    Ok(Node::Call(func, Box::new(arg)))
                } else if self.allowed.contains(&name.as_str()) {
                    Ok(Node::Variable(name))
                } else {
                    match name.as_str() {
                        "e" => Ok(Node::Constant(std::f64::consts::E)),
                        "pi" => Ok(Node::Constant(std::f64::consts::PI)),
                        _ => Err(ExprError::UnknownVariable { name, offset: at }),
                    }
                }
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            _ => Err(ExprError::Parse {
                offset: at,
                expected: "a number, name, or parenthesized expression".into(),
            }),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ExprError> {
        if self.eat(&Tok::RParen) {
            Ok(())
        } else {
            Err(ExprError::Parse {
                offset: self.offset(),
                expected: "closing parenthesis".into(),
            })
        }
    }
}

/// Parses `text` against the declared variable set. Names outside the set
/// resolve to the constants `e`/`pi` or fail; listing `e` or `pi` as a
/// variable shadows the constant.
pub fn parse(text: &str, allowed_vars: &[&str]) -> Result<ExprAst, ExprError> {
    if text.trim().is_empty() {
        return Err(ExprError::Parse {
            offset: 0,
            expected: "a nonempty expression".into(),
        });
    }
    let toks = Lexer::tokens(text)?;
    let mut parser = Parser {
        toks,
        idx: 0,
        allowed: allowed_vars,
    };
    let root = parser.expr()?;
    if *parser.peek() != Tok::Eof {
        return Err(ExprError::Parse {
            offset: parser.offset(),
            expected: "an operator or end of input".into(),
        });
    }
    Ok(ExprAst { root })
}
