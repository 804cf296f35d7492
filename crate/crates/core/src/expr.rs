//! Parser and evaluator for closed-form rate expressions.
//!
//! The accepted grammar is deliberately small: float literals, the variables
//! `a` (age) and `x` (position), the operators `+ - * / ^` (with `^`
//! right-associative), unary minus, parentheses, and the functions `exp`,
//! `sqrt`, `abs`, `min`, `max`. That is enough to express every rate family
//! the solvers are tested against (plateaus via `min`/`max`, cusps via
//! `sqrt(abs(x))`, polynomial gaps) while keeping evaluation allocation-free.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::SpectraError;
use crate::math;
use crate::Result;

/// Parsed expression; keeps its source text for lossless round-trips.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Expr {
    source: String,
    #[serde(skip)]
    root: Node,
}

#[derive(Debug, Clone, Default)]
enum Node {
    #[default]
    Age,
    Position,
    Constant(f64),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Exp(Box<Node>),
    Sqrt(Box<Node>),
    Abs(Box<Node>),
    Min(Box<Node>, Box<Node>),
    Max(Box<Node>, Box<Node>),
}

impl Expr {
    /// Parse `source`; reports the byte offset of the first offending token.
    pub fn parse(source: &str) -> Result<Self> {
        let tokens = lex(source)?;
        let mut parser = Parser { tokens, pos: 0 };
        let root = parser.parse_expr(0)?;
        match parser.peek() {
            Token::End => Ok(Expr {
                source: source.to_string(),
                root,
            }),
            tok => Err(parse_err(
                parser.offset(),
                format!("unexpected trailing token {tok:?}"),
            )),
        }
    }

    /// Evaluate at age `a`, position `x`.
    #[inline]
    pub fn eval(&self, a: f64, x: f64) -> f64 {
        eval_node(&self.root, a, x)
    }

    /// Original source text.
    pub fn source(&self) -> &str {
        &self.source
    }

    /// `true` when the expression never reads the age variable.
    pub fn is_age_independent(&self) -> bool {
        !uses(&self.root, true)
    }

    /// `true` when the expression never reads the position variable.
    pub fn is_position_independent(&self) -> bool {
        !uses(&self.root, false)
    }
}

fn uses(node: &Node, age: bool) -> bool {
    match node {
        Node::Age => age,
        Node::Position => !age,
        Node::Constant(_) => false,
        Node::Neg(n) | Node::Exp(n) | Node::Sqrt(n) | Node::Abs(n) => uses(n, age),
        Node::Add(l, r)
        | Node::Sub(l, r)
        | Node::Mul(l, r)
        | Node::Div(l, r)
        | Node::Pow(l, r)
        | Node::Min(l, r)
        | Node::Max(l, r) => uses(l, age) || uses(r, age),
    }
}

fn eval_node(node: &Node, a: f64, x: f64) -> f64 {
    match node {
        Node::Age => a,
        Node::Position => x,
        Node::Constant(c) => *c,
        Node::Neg(n) => -eval_node(n, a, x),
        Node::Add(l, r) => eval_node(l, a, x) + eval_node(r, a, x),
        Node::Sub(l, r) => eval_node(l, a, x) - eval_node(r, a, x),
        Node::Mul(l, r) => eval_node(l, a, x) * eval_node(r, a, x),
        Node::Div(l, r) => eval_node(l, a, x) / eval_node(r, a, x),
        Node::Pow(l, r) => {
            let base = eval_node(l, a, x);
            let exponent = eval_node(r, a, x);
            // Integer powers stay exact and fast; fractional go through libm.
            if math::fract(exponent) == 0.0 && math::abs(exponent) <= 64.0 {
                let mut acc = 1.0;
                for _ in 0..(math::abs(exponent) as u32) {
                    acc *= base;
                }
                if exponent < 0.0 {
                    1.0 / acc
                } else {
                    acc
                }
            } else {
                math::powf(base, exponent)
            }
        }
        Node::Exp(n) => math::exp(eval_node(n, a, x)),
        Node::Sqrt(n) => math::sqrt(eval_node(n, a, x)),
        Node::Abs(n) => math::abs(eval_node(n, a, x)),
        Node::Min(l, r) => math::min(eval_node(l, a, x), eval_node(r, a, x)),
        Node::Max(l, r) => math::max(eval_node(l, a, x), eval_node(r, a, x)),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    End,
}

fn parse_err(position: usize, message: String) -> SpectraError {
    SpectraError::Parse { position, message }
}

fn lex(source: &str) -> Result<Vec<(Token, usize)>> {
    let bytes = source.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                tokens.push((Token::Plus, i));
                i += 1;
            }
            '-' => {
                tokens.push((Token::Minus, i));
                i += 1;
            }
            '*' => {
                tokens.push((Token::Star, i));
                i += 1;
            }
            '/' => {
                tokens.push((Token::Slash, i));
                i += 1;
            }
            '^' => {
                tokens.push((Token::Caret, i));
                i += 1;
            }
            '(' => {
                tokens.push((Token::LParen, i));
                i += 1;
            }
            ')' => {
                tokens.push((Token::RParen, i));
                i += 1;
            }
            ',' => {
                tokens.push((Token::Comma, i));
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && matches!(bytes[i] as char, '0'..='9' | '.') {
                    i += 1;
                }
                // Exponent part: e / E, optional sign.
                if i < bytes.len() && matches!(bytes[i] as char, 'e' | 'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && matches!(bytes[j] as char, '+' | '-') {
                        j += 1;
                    }
                    if j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &source[start..i];
                let value: f64 = text
                    .parse()
                    .map_err(|_| parse_err(start, format!("bad number literal `{text}`")))?;
                tokens.push((Token::Number(value), start));
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len()
                    && matches!(bytes[i] as char, 'a'..='z' | 'A'..='Z' | '0'..='9' | '_')
                {
                    i += 1;
                }
                tokens.push((Token::Ident(source[start..i].to_string()), start));
            }
            other => {
                return Err(parse_err(i, format!("unexpected character `{other}`")));
            }
        }
    }
    tokens.push((Token::End, source.len()));
    Ok(tokens)
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos].0
    }

    fn offset(&self) -> usize {
        self.tokens[self.pos].1
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].0.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Token, what: &str) -> Result<()> {
        if *self.peek() == want {
            self.advance();
            Ok(())
        } else {
            Err(parse_err(
                self.offset(),
                format!("expected {what}, found {:?}", self.peek()),
            ))
        }
    }

    /// Pratt loop. `min_bp` is the minimum binding power the caller accepts.
    fn parse_expr(&mut self, min_bp: u8) -> Result<Node> {
        let mut lhs = self.parse_prefix()?;
        loop {
            let (l_bp, r_bp) = match self.peek() {
                Token::Plus | Token::Minus => (1, 2),
                Token::Star | Token::Slash => (3, 4),
                // Right-associative: left power above its right power.
                Token::Caret => (8, 7),
                _ => break,
            };
            if l_bp < min_bp {
                break;
            }
            let op = self.advance();
            let rhs = self.parse_expr(r_bp)?;
            lhs = match op {
                Token::Plus => Node::Add(Box::new(lhs), Box::new(rhs)),
                Token::Minus => Node::Sub(Box::new(lhs), Box::new(rhs)),
                Token::Star => Node::Mul(Box::new(lhs), Box::new(rhs)),
                Token::Slash => Node::Div(Box::new(lhs), Box::new(rhs)),
                Token::Caret => Node::Pow(Box::new(lhs), Box::new(rhs)),
                _ => unreachable!(),
            };
        }
        Ok(lhs)
    }

    fn parse_prefix(&mut self) -> Result<Node> {
        let offset = self.offset();
        match self.advance() {
            Token::Number(v) => Ok(Node::Constant(v)),
            Token::Minus => {
                // Unary minus binds tighter than * but looser than ^,
                // so `-x^2` reads as `-(x^2)`.
                let operand = self.parse_expr(6)?;
                Ok(Node::Neg(Box::new(operand)))
            }
            Token::LParen => {
                let inner = self.parse_expr(0)?;
                self.expect(Token::RParen, "closing parenthesis")?;
                Ok(inner)
            }
            Token::Ident(name) => match name.as_str() {
                "a" => Ok(Node::Age),
                "x" => Ok(Node::Position),
                "exp" | "sqrt" | "abs" => {
                    self.expect(Token::LParen, "`(` after function name")?;
                    let arg = self.parse_expr(0)?;
                    self.expect(Token::RParen, "closing parenthesis")?;
                    Ok(match name.as_str() {
                        "exp" => Node::Exp(Box::new(arg)),
                        "sqrt" => Node::Sqrt(Box::new(arg)),
                        _ => Node::Abs(Box::new(arg)),
                    })
                }
                "min" | "max" => {
                    self.expect(Token::LParen, "`(` after function name")?;
                    let first = self.parse_expr(0)?;
                    self.expect(Token::Comma, "`,` between arguments")?;
                    let second = self.parse_expr(0)?;
                    self.expect(Token::RParen, "closing parenthesis")?;
                    Ok(if name == "min" {
                        Node::Min(Box::new(first), Box::new(second))
                    } else {
                        Node::Max(Box::new(first), Box::new(second))
                    })
                }
                other => Err(parse_err(
                    offset,
                    format!("unknown identifier `{other}` (variables are `a` and `x`)"),
                )),
            },
            tok => Err(parse_err(offset, format!("unexpected token {tok:?}"))),
        }
    }
}
