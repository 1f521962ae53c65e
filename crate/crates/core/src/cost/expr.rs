//! A small arithmetic expression language for custom cost cells.
//!
//! Expressions are built from decimal literals, the outcome variables
//! `y[k][j]` (margin `k`, coordinate `j`, both 1-based), parentheses, unary
//! minus, and the binary operators `+ - * / ^`. `^` is exponentiation,
//! binds tightest, and associates to the right; unary minus binds between
//! `^` and `*`, so `-y[1][1]^2` parses as `-(y[1][1]^2)`.
//!
//! Example: `(y[1][1] - y[2][1])^2 / 2`.

use crate::error::{Error, Result};

/// A parsed cost expression. Keeps the source text for display and
/// serialization; two expressions compare equal when their sources match.
#[derive(Debug, Clone)]
pub struct CostExpr {
    source: String,
    root: Node,
}

impl PartialEq for CostExpr {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

#[derive(Debug, Clone)]
enum Node {
    Const(f64),
    /// 0-based margin and coordinate.
    Var { margin: usize, coord: usize },
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
}

impl CostExpr {
    /// Parse an expression. Variable indices are validated against margin
    /// count and outcome dimension later, via [`CostExpr::check_indices`].
    pub fn parse(source: &str) -> Result<Self> {
        let tokens = tokenize(source)?;
        let mut p = Parser { tokens, pos: 0 };
        let root = p.parse_expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Expr(format!(
                "unexpected trailing input at offset {}",
                p.tokens[p.pos].offset
            )));
        }
        Ok(CostExpr {
            source: source.to_string(),
            root,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Verify every `y[k][j]` reference fits a system with `num_margins`
    /// margins of dimension `dim`.
    pub fn check_indices(&self, num_margins: usize, dim: usize) -> Result<()> {
        fn walk(node: &Node, num_margins: usize, dim: usize) -> Result<()> {
            match node {
                Node::Const(_) => Ok(()),
                Node::Var { margin, coord } => {
                    if *margin >= num_margins {
                        return Err(Error::Expr(format!(
                            "variable y[{}][{}] exceeds margin count {num_margins}",
                            margin + 1,
                            coord + 1
                        )));
                    }
                    if *coord >= dim {
                        return Err(Error::Expr(format!(
                            "variable y[{}][{}] exceeds outcome dimension {dim}",
                            margin + 1,
                            coord + 1
                        )));
                    }
                    Ok(())
                }
                Node::Neg(a) => walk(a, num_margins, dim),
                Node::Add(a, b)
                | Node::Sub(a, b)
                | Node::Mul(a, b)
                | Node::Div(a, b)
                | Node::Pow(a, b) => {
                    walk(a, num_margins, dim)?;
                    walk(b, num_margins, dim)
                }
            }
        }
        walk(&self.root, num_margins, dim)
    }

    /// Evaluate at one support-point tuple (`points[k]` is margin `k`'s
    /// outcome vector).
    pub fn eval(&self, points: &[&[f64]]) -> f64 {
        fn eval_node(node: &Node, points: &[&[f64]]) -> f64 {
            match node {
                Node::Const(v) => *v,
                Node::Var { margin, coord } => points[*margin][*coord],
                Node::Neg(a) => -eval_node(a, points),
                Node::Add(a, b) => eval_node(a, points) + eval_node(b, points),
                Node::Sub(a, b) => eval_node(a, points) - eval_node(b, points),
                Node::Mul(a, b) => eval_node(a, points) * eval_node(b, points),
                Node::Div(a, b) => eval_node(a, points) / eval_node(b, points),
                Node::Pow(a, b) => eval_node(a, points).powf(eval_node(b, points)),
            }
        }
        eval_node(&self.root, points)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Number(f64),
    Var { margin: usize, coord: usize },
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    offset: usize,
}

fn tokenize(source: &str) -> Result<Vec<Token>> {
    let bytes = source.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' | '-' | '*' | '/' | '^' | '(' | ')' => {
                let kind = match c {
                    '+' => TokenKind::Plus,
                    '-' => TokenKind::Minus,
                    '*' => TokenKind::Star,
                    '/' => TokenKind::Slash,
                    '^' => TokenKind::Caret,
                    '(' => TokenKind::LParen,
                    _ => TokenKind::RParen,
                };
                tokens.push(Token { kind, offset: i });
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && matches!(bytes[i] as char, '0'..='9' | '.') {
                    i += 1;
                }
                // Exponent suffix like 1e-3.
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
                let value: f64 = text.parse().map_err(|_| {
                    Error::Expr(format!("invalid number '{text}' at offset {start}"))
                })?;
                tokens.push(Token {
                    kind: TokenKind::Number(value),
                    offset: start,
                });
            }
            'y' => {
                let start = i;
                i += 1;
                let margin = parse_bracketed_index(source, bytes, &mut i, start)?;
                let coord = parse_bracketed_index(source, bytes, &mut i, start)?;
                if margin == 0 || coord == 0 {
                    return Err(Error::Expr(format!(
                        "variable indices are 1-based at offset {start}"
                    )));
                }
                tokens.push(Token {
                    kind: TokenKind::Var {
                        margin: margin - 1,
                        coord: coord - 1,
                    },
                    offset: start,
                });
            }
            _ => {
                return Err(Error::Expr(format!(
                    "unexpected character '{c}' at offset {i}"
                )));
            }
        }
    }
    Ok(tokens)
}

fn parse_bracketed_index(
    source: &str,
    bytes: &[u8],
    i: &mut usize,
    var_start: usize,
) -> Result<usize> {
    if *i >= bytes.len() || bytes[*i] as char != '[' {
        return Err(Error::Expr(format!(
            "expected '[' in variable at offset {var_start} (syntax: y[k][j])"
        )));
    }
    *i += 1;
    let digit_start = *i;
    while *i < bytes.len() && (bytes[*i] as char).is_ascii_digit() {
        *i += 1;
    }
    if *i == digit_start {
        return Err(Error::Expr(format!(
            "expected an index in variable at offset {var_start}"
        )));
    }
    let value: usize = source[digit_start..*i]
        .parse()
        .map_err(|_| Error::Expr(format!("index too large at offset {digit_start}")))?;
    if *i >= bytes.len() || bytes[*i] as char != ']' {
        return Err(Error::Expr(format!(
            "expected ']' in variable at offset {var_start}"
        )));
    }
    *i += 1;
    Ok(value)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&TokenKind> {
        self.tokens.get(self.pos).map(|t| &t.kind)
    }

    fn bump(&mut self) -> Option<TokenKind> {
        let t = self.tokens.get(self.pos).map(|t| t.kind.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn parse_expr(&mut self) -> Result<Node> {
        let mut lhs = self.parse_term()?;
        loop {
            match self.peek() {
                Some(TokenKind::Plus) => {
                    self.bump();
                    lhs = Node::Add(Box::new(lhs), Box::new(self.parse_term()?));
                }
                Some(TokenKind::Minus) => {
                    self.bump();
                    lhs = Node::Sub(Box::new(lhs), Box::new(self.parse_term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn parse_term(&mut self) -> Result<Node> {
        let mut lhs = self.parse_unary()?;
        loop {
            match self.peek() {
                Some(TokenKind::Star) => {
                    self.bump();
                    lhs = Node::Mul(Box::new(lhs), Box::new(self.parse_unary()?));
                }
                Some(TokenKind::Slash) => {
                    self.bump();
                    lhs = Node::Div(Box::new(lhs), Box::new(self.parse_unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn parse_unary(&mut self) -> Result<Node> {
        if matches!(self.peek(), Some(TokenKind::Minus)) {
            self.bump();
            return Ok(Node::Neg(Box::new(self.parse_unary()?)));
        }
        self.parse_power()
    }

    fn parse_power(&mut self) -> Result<Node> {
        let base = self.parse_atom()?;
        if matches!(self.peek(), Some(TokenKind::Caret)) {
            self.bump();
            // Right-associative: the exponent may itself be a unary/power.
            let exponent = self.parse_unary()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn parse_atom(&mut self) -> Result<Node> {
        match self.bump() {
            Some(TokenKind::Number(v)) => Ok(Node::Const(v)),
            Some(TokenKind::Var { margin, coord }) => Ok(Node::Var { margin, coord }),
            Some(TokenKind::LParen) => {
                let inner = self.parse_expr()?;
                match self.bump() {
                    Some(TokenKind::RParen) => Ok(inner),
                    _ => Err(Error::Expr("missing closing parenthesis".into())),
                }
            }
            other => Err(Error::Expr(format!(
                "expected a number, variable, or '(', got {other:?}"
            ))),
        }
    }
}
