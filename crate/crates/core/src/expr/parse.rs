//! Recursive-descent parser for the expression grammar.
//!
//! ```text
//! expr   := xor ( "|" xor )* ;
//! xor    := and ( "^" and )* ;
//! and    := sum ( "&" sum )* ;
//! sum    := term ( ("+"|"-") term )* ;
//! term   := unary ( "*" unary )* ;
//! unary  := ("-"|"~") unary | atom ;
//! atom   := IDENT | NUMBER | "(" expr ")" ;
//! ```
//!
//! Rule patterns additionally accept `?ident` atoms.

use std::fmt;

use thiserror::Error;

use super::{BitWidth, Expr, Name, Op};

/// Maximum nesting of parentheses and prefix operators.
pub(crate) const MAX_NESTING: usize = 256;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("syntax error at column {column}: {message}")]
pub struct ParseError {
    /// 1-based character column.
    pub column: usize,
    pub message: String,
}

impl ParseError {
    fn new(column: usize, message: impl Into<String>) -> Self {
        ParseError {
            column,
            message: message.into(),
        }
    }
}

/// Parse tree shared by expressions and rule patterns. Constants are kept
/// modulo `2^64` until a width is known.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum Tree {
    Var(Name),
    Hole(Name),
    Const(u64),
    Op(Op, Vec<Tree>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Token {
    Ident(String),
    Hole(String),
    Number(u64),
    Sym(char),
    Eof,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Ident(s) => write!(f, "identifier `{s}`"),
            Token::Hole(s) => write!(f, "pattern variable `?{s}`"),
            Token::Number(n) => write!(f, "number `{n}`"),
            Token::Sym(c) => write!(f, "`{c}`"),
            Token::Eof => f.write_str("end of input"),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(Token, usize)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let column = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            tokens.push((Token::Ident(chars[start..i].iter().collect()), column));
        } else if c == '?' {
            i += 1;
            let start = i;
            if i < chars.len() && (chars[i].is_ascii_alphabetic() || chars[i] == '_') {
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
            }
            if start == i {
                return Err(ParseError::new(column, "expected identifier after `?`"));
            }
            tokens.push((Token::Hole(chars[start..i].iter().collect()), column));
        } else if c.is_ascii_digit() {
            let hex = c == '0' && matches!(chars.get(i + 1), Some('x') | Some('X'));
            let mut value: u64 = 0;
            if hex {
                i += 2;
                let start = i;
                while i < chars.len() && chars[i].is_ascii_hexdigit() {
                    value = (value << 4) | u64::from(chars[i].to_digit(16).unwrap());
                    i += 1;
                }
                if start == i {
                    return Err(ParseError::new(column, "expected hex digits after `0x`"));
                }
            } else {
                while i < chars.len() && chars[i].is_ascii_digit() {
                    value = value
                        .wrapping_mul(10)
                        .wrapping_add(u64::from(chars[i].to_digit(10).unwrap()));
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                return Err(ParseError::new(i + 1, format!("unexpected `{}` in number", chars[i])));
            }
            tokens.push((Token::Number(value), column));
        } else if "+-*&|^~()".contains(c) {
            tokens.push((Token::Sym(c), column));
            i += 1;
        } else {
            return Err(ParseError::new(column, format!("unexpected character `{c}`")));
        }
    }
    tokens.push((Token::Eof, chars.len() + 1));
    Ok(tokens)
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
    depth: usize,
    allow_holes: bool,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos].0
    }

    fn column(&self) -> usize {
        self.tokens[self.pos].1
    }

    fn bump(&mut self) -> Token {
        let tok = self.tokens[self.pos].0.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        tok
    }

    fn eat(&mut self, sym: char) -> bool {
        if *self.peek() == Token::Sym(sym) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_NESTING {
            Err(ParseError::new(self.column(), "expression nested too deeply"))
        } else {
            Ok(())
        }
    }

    /// One left-associative precedence level.
    fn level(
        &mut self,
        ops: &[(char, Op)],
        next: fn(&mut Self) -> Result<Tree, ParseError>,
    ) -> Result<Tree, ParseError> {
        let mut lhs = next(self)?;
        'outer: loop {
            for &(sym, op) in ops {
                if self.eat(sym) {
                    let rhs = next(self)?;
                    lhs = Tree::Op(op, vec![lhs, rhs]);
                    continue 'outer;
                }
            }
            return Ok(lhs);
        }
    }

    fn expr(&mut self) -> Result<Tree, ParseError> {
        self.level(&[('|', Op::Or)], Self::xor)
    }

    fn xor(&mut self) -> Result<Tree, ParseError> {
        self.level(&[('^', Op::Xor)], Self::and)
    }

    fn and(&mut self) -> Result<Tree, ParseError> {
        self.level(&[('&', Op::And)], Self::sum)
    }

    fn sum(&mut self) -> Result<Tree, ParseError> {
        self.level(&[('+', Op::Add), ('-', Op::Sub)], Self::term)
    }

    fn term(&mut self) -> Result<Tree, ParseError> {
        self.level(&[('*', Op::Mul)], Self::unary)
    }

    fn unary(&mut self) -> Result<Tree, ParseError> {
        let op = match self.peek() {
            Token::Sym('-') => Op::Neg,
            Token::Sym('~') => Op::Not,
            _ => return self.atom(),
        };
        self.bump();
        self.enter()?;
        let arg = self.unary()?;
        self.depth -= 1;
        Ok(Tree::Op(op, vec![arg]))
    }

    fn atom(&mut self) -> Result<Tree, ParseError> {
        let column = self.column();
        match self.bump() {
            Token::Ident(name) => Ok(Tree::Var(Name::from(name))),
            Token::Number(v) => Ok(Tree::Const(v)),
            Token::Hole(name) if self.allow_holes => Ok(Tree::Hole(Name::from(name))),
            Token::Hole(name) => Err(ParseError::new(
                column,
                format!("pattern variable `?{name}` is only allowed in rules"),
            )),
            Token::Sym('(') => {
                self.enter()?;
                let inner = self.expr()?;
                self.depth -= 1;
                if !self.eat(')') {
                    return Err(ParseError::new(
                        self.column(),
                        format!("expected `)`, found {}", self.peek()),
                    ));
                }
                Ok(inner)
            }
            other => Err(ParseError::new(column, format!("expected operand, found {other}"))),
        }
    }
}

pub(crate) fn parse_tree(text: &str, allow_holes: bool) -> Result<Tree, ParseError> {
    let tokens = lex(text)?;
    if tokens.len() == 1 {
        return Err(ParseError::new(1, "empty expression"));
    }
    let mut parser = Parser {
        tokens,
        pos: 0,
        depth: 0,
        allow_holes,
    };
    let tree = parser.expr()?;
    if *parser.peek() != Token::Eof {
        return Err(ParseError::new(
            parser.column(),
            format!("unexpected {}", parser.peek()),
        ));
    }
    Ok(tree)
}

fn to_expr(tree: Tree, width: BitWidth) -> Expr {
    match tree {
        Tree::Var(name) => Expr::Var(name),
        Tree::Const(v) => Expr::Const(width.reduce(v)),
        Tree::Op(op, children) => {
            Expr::Op(op, children.into_iter().map(|c| to_expr(c, width)).collect())
        }
        Tree::Hole(_) => unreachable!("holes rejected by the parser"),
    }
}

/// Parses an expression; constants are reduced modulo `2^width`.
pub fn parse(text: &str, width: BitWidth) -> Result<Expr, ParseError> {
    parse_tree(text, false).map(|t| to_expr(t, width))
}
