//! Line-oriented tokenizer for `.nst` files.

use num_bigint::BigInt;
use num_traits::Zero;

use super::{Diagnostic, DslErrorKind};
use crate::Rational;

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum Tok {
    Word(String),
    Quoted(String),
    Punct(char),
}

#[derive(Clone, Debug)]
pub(crate) struct Spanned {
    pub tok: Tok,
    pub col: usize,
}

const PUNCT: &[char] = &['(', ')', '[', ']', ':', '|', '/'];

pub(crate) fn is_bare(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| !c.is_whitespace() && !PUNCT.contains(&c) && c != '"' && c != '#' && c != '\\')
}

/// Quotes a symbol unless it can be written bare.
pub(crate) fn quote(s: &str) -> String {
    if is_bare(s) {
        return s.to_string();
    }
    let mut out = String::from("\"");
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

pub(crate) fn tokenize(line_no: usize, text: &str) -> Result<Vec<Spanned>, Diagnostic> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c == '#' {
            break;
        } else if PUNCT.contains(&c) {
            out.push(Spanned { tok: Tok::Punct(c), col });
            i += 1;
        } else if c == '"' {
            let mut s = String::new();
            i += 1;
            loop {
                match chars.get(i) {
                    None => {
                        return Err(Diagnostic::new(line_no, col, DslErrorKind::SyntaxError, "unterminated string"))
                    }
                    Some('"') => {
                        i += 1;
                        break;
                    }
                    Some('\\') => {
                        match chars.get(i + 1) {
                            Some(&e) if e == '"' || e == '\\' => s.push(e),
                            _ => {
                                return Err(Diagnostic::new(
                                    line_no,
                                    i + 1,
                                    DslErrorKind::SyntaxError,
                                    "bad escape in string",
                                ))
                            }
                        }
                        i += 2;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                    }
                }
            }
            out.push(Spanned { tok: Tok::Quoted(s), col });
        } else if c == '\\' {
            return Err(Diagnostic::new(line_no, col, DslErrorKind::SyntaxError, "stray backslash"));
        } else {
            let start = i;
            while i < chars.len() && is_bare(&chars[i].to_string()) {
                i += 1;
            }
            out.push(Spanned { tok: Tok::Word(chars[start..i].iter().collect()), col });
        }
    }
    Ok(out)
}

/// Cursor over one line's tokens.
pub(crate) struct Cursor {
    pub line: usize,
    toks: Vec<Spanned>,
    pos: usize,
    end_col: usize,
}

impl Cursor {
    pub fn new(line: usize, toks: Vec<Spanned>, len: usize) -> Self {
        Cursor { line, toks, pos: 0, end_col: len + 1 }
    }

    pub fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |t| t.col)
    }

    pub fn err(&self, kind: DslErrorKind, msg: impl Into<String>) -> Diagnostic {
        Diagnostic::new(self.line, self.col(), kind, msg)
    }

    pub fn err_at(&self, col: usize, kind: DslErrorKind, msg: impl Into<String>) -> Diagnostic {
        Diagnostic::new(self.line, col, kind, msg)
    }

    pub fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    pub fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k).map(|t| &t.tok)
    }

    pub fn remaining(&self) -> usize {
        self.toks.len() - self.pos
    }

    pub fn at_punct(&self, c: char) -> bool {
        self.peek() == Some(&Tok::Punct(c))
    }

    pub fn punct(&mut self, c: char) -> Result<(), Diagnostic> {
        if self.at_punct(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(DslErrorKind::SyntaxError, format!("expected '{c}'")))
        }
    }

    /// A bare word or a quoted string, with its column.
    pub fn symbol(&mut self) -> Result<(String, usize), Diagnostic> {
        let col = self.col();
        match self.peek() {
            Some(Tok::Word(w)) | Some(Tok::Quoted(w)) => {
                let w = w.clone();
                self.pos += 1;
                Ok((w, col))
            }
            _ => Err(self.err(DslErrorKind::SyntaxError, "expected a symbol")),
        }
    }

    pub fn keyword(&mut self) -> Result<(String, usize), Diagnostic> {
        let col = self.col();
        match self.peek() {
            Some(Tok::Word(w)) => {
                let w = w.clone();
                self.pos += 1;
                Ok((w, col))
            }
            _ => Err(self.err(DslErrorKind::SyntaxError, "expected a keyword")),
        }
    }

    pub fn index(&mut self) -> Result<(usize, usize), Diagnostic> {
        let col = self.col();
        match self.peek() {
            Some(Tok::Word(w)) if w.bytes().all(|b| b.is_ascii_digit()) => {
                let v = w.parse().map_err(|_| self.err(DslErrorKind::SyntaxError, "integer out of range"))?;
                self.pos += 1;
                Ok((v, col))
            }
            _ => Err(self.err(DslErrorKind::SyntaxError, "expected a non-negative integer")),
        }
    }

    /// `p`, `-p` or `p/q` with q nonzero.
    pub fn rational(&mut self) -> Result<Rational, Diagnostic> {
        let col = self.col();
        let numer = match self.peek() {
            Some(Tok::Word(w)) => parse_int(w).ok_or_else(|| self.err(DslErrorKind::SyntaxError, "expected a rational"))?,
            _ => return Err(self.err(DslErrorKind::SyntaxError, "expected a rational")),
        };
        self.pos += 1;
        if !self.at_punct('/') {
            return Ok(Rational::from_integer(numer));
        }
        self.pos += 1;
        let dcol = self.col();
        let denom = match self.peek() {
            Some(Tok::Word(w)) if !w.starts_with('-') => {
                parse_int(w).ok_or_else(|| self.err(DslErrorKind::SyntaxError, "expected a denominator"))?
            }
            _ => return Err(self.err(DslErrorKind::SyntaxError, "expected a denominator")),
        };
        self.pos += 1;
        if denom.is_zero() {
            return Err(self.err_at(dcol.max(col), DslErrorKind::ZeroDenominator, "zero denominator"));
        }
        Ok(Rational::new(numer, denom))
    }

    pub fn end(&self) -> Result<(), Diagnostic> {
        if self.pos < self.toks.len() {
            Err(self.err(DslErrorKind::SyntaxError, "unexpected trailing input"))
        } else {
            Ok(())
        }
    }
}

fn parse_int(w: &str) -> Option<BigInt> {
    let digits = w.strip_prefix('-').unwrap_or(w);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    w.parse().ok()
}

/// Writes a rational in reduced form: integer or `p/q`.
pub(crate) fn fmt_rational(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}
