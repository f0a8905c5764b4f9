//! Boolean predicate language used by card `apply_when` and `cheap_probe`.
//!
//! Grammar (NOT binds tighter than AND, AND tighter than OR, both binary
//! operators left-associative):
//!
//! ```text
//! expr    := and ( "OR" and )*
//! and     := unary ( "AND" unary )*
//! unary   := "NOT" unary | primary
//! primary := "(" expr ")" | atom
//! atom    := field ":" value
//! field   := "contains" | "matches" | "kind" | "mime"
//! value   := '"' chars '"' | bare-word
//! ```

use std::fmt;
use std::sync::Arc;

use regex::Regex;

use crate::router::TaskContext;

/// A compiled `matches:` pattern. Equality is by source text.
#[derive(Clone)]
pub struct Pattern {
    source: String,
    compiled: Arc<Regex>,
}

impl Pattern {
    pub fn new(source: &str) -> Result<Self, regex::Error> {
        let compiled = Regex::new(source)?;
        Ok(Self {
            source: source.to_string(),
            compiled: Arc::new(compiled),
        })
    }

    pub fn as_str(&self) -> &str {
        &self.source
    }

    pub fn is_match(&self, text: &str) -> bool {
        self.compiled.is_match(text)
    }
}

impl PartialEq for Pattern {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

impl Eq for Pattern {}

impl fmt::Debug for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Pattern({:?})", self.source)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Atom {
    Contains(String),
    Matches(Pattern),
    Kind(String),
    Mime(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PredicateExpr {
    Atom(Atom),
    Not(Box<PredicateExpr>),
    And(Box<PredicateExpr>, Box<PredicateExpr>),
    Or(Box<PredicateExpr>, Box<PredicateExpr>),
}

impl PredicateExpr {
    pub fn contains(s: impl Into<String>) -> Self {
        PredicateExpr::Atom(Atom::Contains(s.into()))
    }

    pub fn kind(s: impl Into<String>) -> Self {
        PredicateExpr::Atom(Atom::Kind(s.into()))
    }

    pub fn mime(s: impl Into<String>) -> Self {
        PredicateExpr::Atom(Atom::Mime(s.into()))
    }

    pub fn matches(pattern: &str) -> Result<Self, regex::Error> {
        Ok(PredicateExpr::Atom(Atom::Matches(Pattern::new(pattern)?)))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(e: PredicateExpr) -> Self {
        PredicateExpr::Not(Box::new(e))
    }

    pub fn and(l: PredicateExpr, r: PredicateExpr) -> Self {
        PredicateExpr::And(Box::new(l), Box::new(r))
    }

    pub fn or(l: PredicateExpr, r: PredicateExpr) -> Self {
        PredicateExpr::Or(Box::new(l), Box::new(r))
    }

    pub fn depth(&self) -> usize {
        match self {
            PredicateExpr::Atom(_) => 1,
            PredicateExpr::Not(e) => 1 + e.depth(),
            PredicateExpr::And(l, r) | PredicateExpr::Or(l, r) => 1 + l.depth().max(r.depth()),
        }
    }

    /// Evaluates the predicate against a task. Total and pure.
    pub fn eval(&self, ctx: &TaskContext) -> bool {
        match self {
            PredicateExpr::Atom(atom) => eval_atom(atom, ctx),
            PredicateExpr::Not(e) => !e.eval(ctx),
            PredicateExpr::And(l, r) => l.eval(ctx) && r.eval(ctx),
            PredicateExpr::Or(l, r) => l.eval(ctx) || r.eval(ctx),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            PredicateExpr::Or(..) => 1,
            PredicateExpr::And(..) => 2,
            PredicateExpr::Not(_) => 3,
            PredicateExpr::Atom(_) => 4,
        }
    }
}

fn eval_atom(atom: &Atom, ctx: &TaskContext) -> bool {
    match atom {
        Atom::Contains(needle) => ctx
            .prompt
            .to_lowercase()
            .contains(&needle.to_lowercase()),
        Atom::Matches(p) => p.is_match(&ctx.prompt),
        Atom::Kind(tag) => ctx.kind_tags.contains(tag),
        Atom::Mime(tag) => ctx.attachments.iter().any(|a| &a.mime_tag == tag),
    }
}

pub fn eval_predicate(expr: &PredicateExpr, ctx: &TaskContext) -> bool {
    expr.eval(ctx)
}

fn write_quoted(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str("\"")?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("\"")
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (field, value) = match self {
            Atom::Contains(s) => ("contains", s.as_str()),
            Atom::Matches(p) => ("matches", p.as_str()),
            Atom::Kind(s) => ("kind", s.as_str()),
            Atom::Mime(s) => ("mime", s.as_str()),
        };
        write!(f, "{field}:")?;
        write_quoted(f, value)
    }
}

impl fmt::Display for PredicateExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Left operands may share the parent's precedence (left-assoc);
        // right operands must bind strictly tighter.
        fn child(
            f: &mut fmt::Formatter<'_>,
            e: &PredicateExpr,
            min_prec: u8,
        ) -> fmt::Result {
            if e.precedence() < min_prec {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            PredicateExpr::Atom(a) => write!(f, "{a}"),
            PredicateExpr::Not(e) => {
                f.write_str("NOT ")?;
                child(f, e, 3)
            }
            PredicateExpr::And(l, r) => {
                child(f, l, 2)?;
                f.write_str(" AND ")?;
                child(f, r, 3)
            }
            PredicateExpr::Or(l, r) => {
                child(f, l, 1)?;
                f.write_str(" OR ")?;
                child(f, r, 2)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    UnterminatedString,
    InvalidRegex(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{}", self.describe())]
pub struct ParseError {
    /// 0-based byte offset into the source text.
    pub offset: usize,
    pub expected: Vec<&'static str>,
    pub kind: ParseErrorKind,
}

impl ParseError {
    fn describe(&self) -> String {
        match &self.kind {
            ParseErrorKind::Syntax => format!(
                "syntax error at byte {}: expected one of {}",
                self.offset,
                self.expected.join(", ")
            ),
            ParseErrorKind::UnterminatedString => {
                format!("unterminated string literal starting at byte {}", self.offset)
            }
            ParseErrorKind::InvalidRegex(msg) => {
                format!("invalid regex at byte {}: {msg}", self.offset)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    LParen,
    RParen,
    And,
    Or,
    Not,
    Colon,
    Word(String),
    Str(String),
    Eof,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.' | b'/' | b'+' | b'*' | b'@')
}

impl<'a> Lexer<'a> {
    fn next(&mut self) -> Result<(Tok, usize), ParseError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&b) = bytes.get(self.pos) else {
            return Ok((Tok::Eof, start));
        };
        let tok = match b {
            b'(' => {
                self.pos += 1;
                Tok::LParen
            }
            b')' => {
                self.pos += 1;
                Tok::RParen
            }
            b':' => {
                self.pos += 1;
                Tok::Colon
            }
            b'"' => {
                self.pos += 1;
                let mut out = String::new();
                loop {
                    let rest = &self.src[self.pos..];
                    let Some(c) = rest.chars().next() else {
                        return Err(ParseError {
                            offset: start,
                            expected: vec!["'\"'"],
                            kind: ParseErrorKind::UnterminatedString,
                        });
                    };
                    self.pos += c.len_utf8();
                    match c {
                        '"' => break,
                        '\\' => {
                            let Some(esc) = self.src[self.pos..].chars().next() else {
                                return Err(ParseError {
                                    offset: start,
                                    expected: vec!["'\"'"],
                                    kind: ParseErrorKind::UnterminatedString,
                                });
                            };
                            self.pos += esc.len_utf8();
                            out.push(esc);
                        }
                        c => out.push(c),
                    }
                }
                Tok::Str(out)
            }
            b if is_word_byte(b) => {
                while self.pos < bytes.len() && is_word_byte(bytes[self.pos]) {
                    self.pos += 1;
                }
                match &self.src[start..self.pos] {
                    "AND" => Tok::And,
                    "OR" => Tok::Or,
                    "NOT" => Tok::Not,
                    w => Tok::Word(w.to_string()),
                }
            }
            _ => {
                return Err(ParseError {
                    offset: start,
                    expected: vec!["atom", "'('", "'NOT'"],
                    kind: ParseErrorKind::Syntax,
                })
            }
        };
        Ok((tok, start))
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    tok: Tok,
    at: usize,
}

const ATOM_START: [&str; 6] = ["contains", "matches", "kind", "mime", "'('", "'NOT'"];

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Result<Self, ParseError> {
        let mut lexer = Lexer { src, pos: 0 };
        let (tok, at) = lexer.next()?;
        Ok(Self { lexer, tok, at })
    }

    fn bump(&mut self) -> Result<(), ParseError> {
        let (tok, at) = self.lexer.next()?;
        self.tok = tok;
        self.at = at;
        Ok(())
    }

    fn err(&self, expected: &[&'static str]) -> ParseError {
        ParseError {
            offset: self.at,
            expected: expected.to_vec(),
            kind: ParseErrorKind::Syntax,
        }
    }

    fn expr(&mut self) -> Result<PredicateExpr, ParseError> {
        let mut lhs = self.and()?;
        while self.tok == Tok::Or {
            self.bump()?;
            let rhs = self.and()?;
            lhs = PredicateExpr::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<PredicateExpr, ParseError> {
        let mut lhs = self.unary()?;
        while self.tok == Tok::And {
            self.bump()?;
            let rhs = self.unary()?;
            lhs = PredicateExpr::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<PredicateExpr, ParseError> {
        if self.tok == Tok::Not {
            self.bump()?;
            return Ok(PredicateExpr::not(self.unary()?));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<PredicateExpr, ParseError> {
        match self.tok.clone() {
            Tok::LParen => {
                self.bump()?;
                let inner = self.expr()?;
                if self.tok != Tok::RParen {
                    return Err(self.err(&["')'", "'AND'", "'OR'"]));
                }
                self.bump()?;
                Ok(inner)
            }
            Tok::Word(field) => {
                let field_at = self.at;
                if !matches!(field.as_str(), "contains" | "matches" | "kind" | "mime") {
                    return Err(ParseError {
                        offset: field_at,
                        expected: ATOM_START.to_vec(),
                        kind: ParseErrorKind::Syntax,
                    });
                }
                self.bump()?;
                if self.tok != Tok::Colon {
                    return Err(self.err(&["':'"]));
                }
                self.bump()?;
                let value_at = self.at;
                let value = match self.tok.clone() {
                    Tok::Str(s) | Tok::Word(s) => s,
                    _ => return Err(self.err(&["string", "word"])),
                };
                self.bump()?;
                let atom = match field.as_str() {
                    "contains" => Atom::Contains(value),
                    "kind" => Atom::Kind(value),
                    "mime" => Atom::Mime(value),
                    _ => Atom::Matches(Pattern::new(&value).map_err(|e| ParseError {
                        offset: value_at,
                        expected: vec!["valid regex"],
                        kind: ParseErrorKind::InvalidRegex(e.to_string()),
                    })?),
                };
                Ok(PredicateExpr::Atom(atom))
            }
            _ => Err(self.err(&ATOM_START)),
        }
    }
}

/// Parses predicate text into an expression tree.
pub fn parse_predicate(text: &str) -> Result<PredicateExpr, ParseError> {
    let mut p = Parser::new(text)?;
    let e = p.expr()?;
    if p.tok != Tok::Eof {
        return Err(p.err(&["'AND'", "'OR'", "end of input"]));
    }
    Ok(e)
}

impl std::str::FromStr for PredicateExpr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_predicate(s)
    }
}
