//! Row filter expressions for grid post-processing.
//!
//! Grammar (keywords are case-sensitive, `&&`/`||`/`!` are accepted too):
//!
//! ```text
//! expr    := and ("or" and)*
//! and     := unary ("and" unary)*
//! unary   := "not" unary | "(" expr ")" | compare
//! compare := operand ("==" | "!=" | "<" | "<=" | ">" | ">=") operand
//! operand := identifier | number | "string" | 'string' | true | false
//! ```
//!
//! Identifiers name factors or the `iteration` column.

use std::cmp::Ordering;
use std::fmt;

use super::{FactorSpec, RowView};
use crate::error::{Error, Result};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Num(f64, Option<i64>),
    Str(String),
    Op(CmpOp),
    And,
    Or,
    Not,
    LParen,
    RParen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    fn holds(self, ord: Ordering) -> bool {
        match self {
            CmpOp::Eq => ord == Ordering::Equal,
            CmpOp::Ne => ord != Ordering::Equal,
            CmpOp::Lt => ord == Ordering::Less,
            CmpOp::Le => ord != Ordering::Greater,
            CmpOp::Gt => ord == Ordering::Greater,
            CmpOp::Ge => ord != Ordering::Less,
        }
    }

    fn is_equality(self) -> bool {
        matches!(self, CmpOp::Eq | CmpOp::Ne)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Operand {
    Name(String),
    Lit(Value),
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Or(Box<Node>, Box<Node>),
    And(Box<Node>, Box<Node>),
    Not(Box<Node>),
    Cmp(Operand, CmpOp, Operand),
}

/// A parsed filter predicate over factor values.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterExpr {
    source: String,
    root: Node,
}

impl fmt::Display for FilterExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let err = |msg: String| Error::Filter(format!("{msg} in `{src}`"));
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let next = chars.get(i + 1).copied();
        match c {
            c if c.is_whitespace() => i += 1,
            '(' => {
                out.push(Token::LParen);
                i += 1;
            }
            ')' => {
                out.push(Token::RParen);
                i += 1;
            }
            '&' if next == Some('&') => {
                out.push(Token::And);
                i += 2;
            }
            '|' if next == Some('|') => {
                out.push(Token::Or);
                i += 2;
            }
            '=' | '!' | '<' | '>' => {
                let (op, width) = match (c, next) {
                    ('=', Some('=')) => (Some(CmpOp::Eq), 2),
                    ('=', _) => (Some(CmpOp::Eq), 1),
                    ('!', Some('=')) => (Some(CmpOp::Ne), 2),
                    ('!', _) => (None, 1),
                    ('<', Some('=')) => (Some(CmpOp::Le), 2),
                    ('<', _) => (Some(CmpOp::Lt), 1),
                    ('>', Some('=')) => (Some(CmpOp::Ge), 2),
                    _ => (Some(CmpOp::Gt), 1),
                };
                out.push(op.map_or(Token::Not, Token::Op));
                i += width;
            }
            '"' | '\'' => {
                let end = chars[i + 1..]
                    .iter()
                    .position(|&d| d == c)
                    .ok_or_else(|| err("unterminated string".into()))?;
                out.push(Token::Str(chars[i + 1..i + 1 + end].iter().collect()));
                i += end + 2;
            }
            c if c.is_ascii_digit() || c == '.' || c == '-' || c == '+' => {
                let start = i;
                i += 1;
                while i < chars.len()
                    && (chars[i].is_ascii_alphanumeric()
                        || chars[i] == '.'
                        || ((chars[i] == '-' || chars[i] == '+')
                            && matches!(chars[i - 1], 'e' | 'E')))
                {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                let int = text.parse::<i64>().ok();
                let num = text
                    .parse::<f64>()
                    .map_err(|_| err(format!("bad number `{text}`")))?;
                out.push(Token::Num(num, int));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                out.push(match word.as_str() {
                    "and" => Token::And,
                    "or" => Token::Or,
                    "not" => Token::Not,
                    _ => Token::Ident(word),
                });
            }
            other => return Err(err(format!("unexpected character `{other}`"))),
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    src: &'a str,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Filter(format!("{msg} at token {} in `{}`", self.pos + 1, self.src))
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.and()?;
        while self.peek() == Some(&Token::Or) {
            self.pos += 1;
            lhs = Node::Or(Box::new(lhs), Box::new(self.and()?));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while self.peek() == Some(&Token::And) {
            self.pos += 1;
            lhs = Node::And(Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        match self.peek() {
            Some(Token::Not) => {
                self.pos += 1;
                Ok(Node::Not(Box::new(self.unary()?)))
            }
            Some(Token::LParen) => {
                self.pos += 1;
                let inner = self.expr()?;
                match self.bump() {
                    Some(Token::RParen) => Ok(inner),
                    _ => Err(self.err("expected `)`")),
                }
            }
            _ => {
                let lhs = self.operand()?;
                let op = match self.bump() {
                    Some(Token::Op(op)) => op,
                    _ => return Err(self.err("expected comparison operator")),
                };
                let rhs = self.operand()?;
                Ok(Node::Cmp(lhs, op, rhs))
            }
        }
    }

    fn operand(&mut self) -> Result<Operand> {
        match self.bump() {
            Some(Token::Ident(name)) => Ok(match name.as_str() {
                "true" => Operand::Lit(Value::Bool(true)),
                "false" => Operand::Lit(Value::Bool(false)),
                _ => Operand::Name(name),
            }),
            Some(Token::Num(_, Some(i))) => Ok(Operand::Lit(Value::Int(i))),
            Some(Token::Num(x, None)) => Ok(Operand::Lit(Value::Real(x))),
            Some(Token::Str(s)) => Ok(Operand::Lit(Value::Text(s))),
            _ => Err(self.err("expected a factor name or literal")),
        }
    }
}

fn compare(a: &Value, b: &Value, op: CmpOp) -> Result<bool> {
    let ord = match (a, b) {
        (Value::Int(x), Value::Int(y)) => x.cmp(y),
        (Value::Text(x), Value::Text(y)) => x.cmp(y),
        (Value::Bool(x), Value::Bool(y)) if op.is_equality() => x.cmp(y),
        (x, y) => match (x.as_f64(), y.as_f64()) {
            (Some(x), Some(y)) => x.total_cmp(&y),
            _ => {
                return Err(Error::Filter(format!(
                    "cannot compare {x:?} with {y:?} using {op:?}"
                )))
            }
        },
    };
    Ok(op.holds(ord))
}

impl FilterExpr {
    pub fn parse(src: &str) -> Result<Self> {
        let mut p = Parser {
            tokens: tokenize(src)?,
            pos: 0,
            src,
        };
        if p.tokens.is_empty() {
            return Err(Error::Filter("empty expression".into()));
        }
        let root = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(Self {
            source: src.to_owned(),
            root,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Fails if the expression names something other than a factor or `iteration`.
    pub fn check(&self, factors: &[FactorSpec]) -> Result<()> {
        fn walk(node: &Node, factors: &[FactorSpec]) -> Result<()> {
            match node {
                Node::Or(a, b) | Node::And(a, b) => {
                    walk(a, factors)?;
                    walk(b, factors)
                }
                Node::Not(a) => walk(a, factors),
                Node::Cmp(l, _, r) => {
                    for operand in [l, r] {
                        if let Operand::Name(n) = operand {
                            if n != "iteration" && !factors.iter().any(|f| f.name() == n) {
                                return Err(Error::UnknownFactor(n.clone()));
                            }
                        }
                    }
                    Ok(())
                }
            }
        }
        walk(&self.root, factors)
    }

    pub fn eval(&self, row: &RowView<'_>) -> Result<bool> {
        fn operand(o: &Operand, row: &RowView<'_>) -> Result<Value> {
            match o {
                Operand::Lit(v) => Ok(v.clone()),
                Operand::Name(n) if n == "iteration" => Ok(Value::Int(row.iteration() as i64)),
                Operand::Name(n) => row.get(n).cloned(),
            }
        }
        fn walk(node: &Node, row: &RowView<'_>) -> Result<bool> {
            Ok(match node {
                Node::Or(a, b) => walk(a, row)? || walk(b, row)?,
                Node::And(a, b) => walk(a, row)? && walk(b, row)?,
                Node::Not(a) => !walk(a, row)?,
                Node::Cmp(l, op, r) => compare(&operand(l, row)?, &operand(r, row)?, *op)?,
            })
        }
        walk(&self.root, row)
    }
}
