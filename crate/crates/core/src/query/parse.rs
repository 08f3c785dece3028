use std::fmt;

use super::ast::{Primitive, QueryExpr, Unary};

/// Nesting limit; deeper input is rejected rather than risking the stack.
pub const MAX_NESTING: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    UnknownName(String),
    Arity {
        name: String,
        expected: &'static str,
        found: usize,
    },
    UnbalancedParens,
    ExpectedName,
    UnexpectedChar(char),
    TooDeep,
}

/// Parse failure; `offset` counts characters, not bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub offset: usize,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ParseErrorKind::UnknownName(n) => write!(f, "unknown query name '{n}'")?,
            ParseErrorKind::Arity {
                name,
                expected,
                found,
            } => write!(f, "{name} expects {expected} argument(s), found {found}")?,
            ParseErrorKind::UnbalancedParens => f.write_str("unbalanced parentheses")?,
            ParseErrorKind::ExpectedName => f.write_str("expected a query name")?,
            ParseErrorKind::UnexpectedChar(c) => write!(f, "unexpected character '{c}'")?,
            ParseErrorKind::TooDeep => write!(f, "query nested deeper than {MAX_NESTING}")?,
        }
        write!(f, " at offset {}", self.offset)
    }
}

impl std::error::Error for ParseError {}

pub fn parse(text: &str) -> Result<QueryExpr, ParseError> {
    let mut p = Parser {
        chars: text.chars().collect(),
        pos: 0,
    };
    p.skip_spaces();
    let q = p.query(0)?;
    p.skip_spaces();
    match p.peek() {
        None => Ok(q),
        Some(')') => Err(p.error(ParseErrorKind::UnbalancedParens)),
        Some(c) => Err(p.error(ParseErrorKind::UnexpectedChar(c))),
    }
}

enum Kind {
    Primitive(Primitive),
    InstanceOf,
    Unary(Unary),
    And,
    Or,
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn error(&self, kind: ParseErrorKind) -> ParseError {
        ParseError {
            kind,
            offset: self.pos,
        }
    }

    fn skip_spaces(&mut self) -> bool {
        let start = self.pos;
        while self.peek() == Some(' ') {
            self.pos += 1;
        }
        self.pos > start
    }

    fn query(&mut self, depth: usize) -> Result<QueryExpr, ParseError> {
        if depth > MAX_NESTING {
            return Err(self.error(ParseErrorKind::TooDeep));
        }
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_alphanumeric()) {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(match self.peek() {
                Some(')') => self.error(ParseErrorKind::UnbalancedParens),
                None => self.error(ParseErrorKind::ExpectedName),
                Some('(') => self.error(ParseErrorKind::ExpectedName),
                Some(c) => self.error(ParseErrorKind::UnexpectedChar(c)),
            });
        }
        let name: String = self.chars[start..self.pos].iter().collect();
        let kind = match name.as_str() {
            "InstanceOf" => Kind::InstanceOf,
            "And" => Kind::And,
            "Or" => Kind::Or,
            n => match (Primitive::from_name(n), Unary::from_name(n)) {
                (Some(p), _) => Kind::Primitive(p),
                (_, Some(u)) => Kind::Unary(u),
                _ => {
                    return Err(ParseError {
                        kind: ParseErrorKind::UnknownName(name),
                        offset: start,
                    })
                }
            },
        };
        match self.peek() {
            Some('(') => {}
            None => return Err(self.error(ParseErrorKind::UnbalancedParens)),
            Some(c) => return Err(self.error(ParseErrorKind::UnexpectedChar(c))),
        }
        let open = self.pos;
        self.pos += 1;

        if let Kind::InstanceOf = kind {
            return self.instance_of(name, start, open);
        }

        let args = self.args(depth, open)?;
        let arity = |expected: &'static str| {
            Err(ParseError {
                kind: ParseErrorKind::Arity {
                    name: name.clone(),
                    expected,
                    found: args.len(),
                },
                offset: start,
            })
        };
        match kind {
            Kind::Primitive(p) if args.is_empty() => Ok(QueryExpr::Primitive(p)),
            Kind::Primitive(_) => arity("0"),
            Kind::Unary(u) if args.len() == 1 => Ok(QueryExpr::unary(
                u,
                args.into_iter().next().expect("one argument"),
            )),
            Kind::Unary(_) => arity("1"),
            Kind::And | Kind::Or if args.is_empty() => arity("at least 1"),
            Kind::And => Ok(QueryExpr::And(args)),
            Kind::Or => Ok(QueryExpr::Or(args)),
            Kind::InstanceOf => unreachable!("handled above"),
        }
    }

    fn args(&mut self, depth: usize, open: usize) -> Result<Vec<QueryExpr>, ParseError> {
        let mut args = Vec::new();
        loop {
            let spaced = self.skip_spaces();
            match self.peek() {
                None => {
                    return Err(ParseError {
                        kind: ParseErrorKind::UnbalancedParens,
                        offset: open,
                    })
                }
                Some(')') => {
                    self.pos += 1;
                    return Ok(args);
                }
                Some(c) if !args.is_empty() && !spaced => {
                    return Err(self.error(ParseErrorKind::UnexpectedChar(c)))
                }
                Some(_) => args.push(self.query(depth + 1)?),
            }
        }
    }

    fn instance_of(
        &mut self,
        name: String,
        start: usize,
        open: usize,
    ) -> Result<QueryExpr, ParseError> {
        let mut parts = Vec::new();
        loop {
            self.skip_spaces();
            let token_start = self.pos;
            while self
                .peek()
                .is_some_and(|c| !matches!(c, ' ' | '(' | ')' | '/'))
            {
                self.pos += 1;
            }
            if self.pos > token_start {
                parts.push(self.chars[token_start..self.pos].iter().collect::<String>());
                continue;
            }
            match self.peek() {
                None => {
                    return Err(ParseError {
                        kind: ParseErrorKind::UnbalancedParens,
                        offset: open,
                    })
                }
                Some(')') => {
                    self.pos += 1;
                    break;
                }
                Some(c) => return Err(self.error(ParseErrorKind::UnexpectedChar(c))),
            }
        }
        if parts.len() != 1 {
            return Err(ParseError {
                kind: ParseErrorKind::Arity {
                    name,
                    expected: "1",
                    found: parts.len(),
                },
                offset: start,
            });
        }
        Ok(QueryExpr::InstanceOf(parts.pop().expect("one part")))
    }
}
