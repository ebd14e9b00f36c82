//! The `.nst` text format: parser with located diagnostics and a canonical serializer.
//!
//! A document starts with `nst 1` and `kind <intrinsic|policy|nested|static-reduced>`,
//! followed by one statement per line. Tables are fully enumerated; symbols
//! containing punctuation (such as `"1/2"`) are quoted.

mod intrinsic;
mod lexer;
mod nested;
mod policy;
mod reduced;

use std::fmt;

use thiserror::Error;

pub use nested::{ComponentDoc, DecompositionDoc};
pub use policy::PolicyDoc;

use crate::model::{validate, IntrinsicModel, ModelSpec, ValidationReport};
use crate::reduction::ReducedStaticModel;
pub(crate) use lexer::fmt_rational;
use lexer::{tokenize, Cursor};

pub const FORMAT_VERSION: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DslErrorKind {
    SyntaxError,
    ZeroDenominator,
    DuplicateRow,
    UnknownSymbol,
    UnknownSection,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub col: usize,
    pub kind: DslErrorKind,
    pub message: String,
}

impl Diagnostic {
    pub(crate) fn new(line: usize, col: usize, kind: DslErrorKind, message: impl Into<String>) -> Self {
        Diagnostic { line, col, kind, message: message.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {:?}: {}", self.line, self.col, self.kind, self.message)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub struct DslError {
    pub diagnostics: Vec<Diagnostic>,
}

impl fmt::Display for DslError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.diagnostics.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{0}")]
    Parse(#[from] DslError),
    #[error("{0}")]
    Invalid(#[from] ValidationReport),
    #[error("expected a {expected} document, found {found}")]
    WrongKind { expected: &'static str, found: &'static str },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Document {
    Intrinsic(ModelSpec),
    Policy(PolicyDoc),
    Nested(DecompositionDoc),
    StaticReduced(ReducedStaticModel),
}

impl Document {
    pub fn kind(&self) -> &'static str {
        match self {
            Document::Intrinsic(_) => "intrinsic",
            Document::Policy(_) => "policy",
            Document::Nested(_) => "nested",
            Document::StaticReduced(_) => "static-reduced",
        }
    }
}

/// Non-empty lines after comment stripping, tokenized.
pub(crate) struct Lines {
    pub lines: Vec<Cursor>,
    pub errors: Vec<Diagnostic>,
}

fn lex(text: &str) -> Lines {
    let mut lines = Vec::new();
    let mut errors = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        match tokenize(i + 1, raw) {
            Ok(t) if t.is_empty() => {}
            Ok(t) => lines.push(Cursor::new(i + 1, t, raw.chars().count())),
            Err(d) => errors.push(d),
        }
    }
    Lines { lines, errors }
}

fn header(lines: &mut std::vec::IntoIter<Cursor>) -> Result<String, Diagnostic> {
    let mut first = lines
        .next()
        .ok_or_else(|| Diagnostic::new(1, 1, DslErrorKind::SyntaxError, "empty document"))?;
    let (kw, col) = first.keyword()?;
    if kw != "nst" {
        return Err(first.err_at(col, DslErrorKind::SyntaxError, "document must start with 'nst <version>'"));
    }
    let (v, vcol) = first.index()?;
    if v != FORMAT_VERSION {
        return Err(first.err_at(vcol, DslErrorKind::SyntaxError, format!("unsupported format version {v}")));
    }
    first.end()?;
    let mut second = lines
        .next()
        .ok_or_else(|| Diagnostic::new(first.line, 1, DslErrorKind::SyntaxError, "missing 'kind' line"))?;
    let (kw, col) = second.keyword()?;
    if kw != "kind" {
        return Err(second.err_at(col, DslErrorKind::SyntaxError, "expected 'kind <document kind>'"));
    }
    let (k, _) = second.keyword()?;
    second.end()?;
    Ok(k)
}

pub fn parse(text: &str) -> Result<Document, DslError> {
    let Lines { lines, mut errors } = lex(text);
    if let Some(e) = errors.first() {
        // a line that does not tokenize usually derails the rest
        return Err(DslError { diagnostics: vec![e.clone()] });
    }
    let mut it = lines.into_iter();
    let kind = header(&mut it).map_err(|d| DslError { diagnostics: vec![d] })?;
    let rest: Vec<Cursor> = it.collect();
    let doc = match kind.as_str() {
        "intrinsic" => intrinsic::parse(rest, &mut errors).map(Document::Intrinsic),
        "policy" => policy::parse(rest, &mut errors).map(Document::Policy),
        "nested" => nested::parse(rest, &mut errors).map(Document::Nested),
        "static-reduced" => reduced::parse(rest, &mut errors).map(Document::StaticReduced),
        other => {
            errors.push(Diagnostic::new(2, 6, DslErrorKind::UnknownSection, format!("unknown document kind {other}")));
            None
        }
    };
    match doc {
        Some(d) if errors.is_empty() => Ok(d),
        _ => Err(DslError { diagnostics: errors }),
    }
}

/// Splits a stream of concatenated documents at each `nst` header line.
pub fn split_documents(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for line in text.lines() {
        let starts = line.split_whitespace().next() == Some("nst");
        if starts || out.is_empty() {
            out.push(String::new());
        }
        let cur = out.last_mut().expect("pushed");
        cur.push_str(line);
        cur.push('\n');
    }
    out.retain(|d| d.lines().any(|l| !l.trim().is_empty()));
    out
}

pub fn serialize(doc: &Document) -> String {
    let mut out = format!("nst {FORMAT_VERSION}\nkind {}\n", doc.kind());
    match doc {
        Document::Intrinsic(m) => intrinsic::write(m, &mut out),
        Document::Policy(p) => policy::write(p, &mut out),
        Document::Nested(n) => nested::write(n, &mut out),
        Document::StaticReduced(r) => reduced::write(r, &mut out),
    }
    out
}

pub fn parse_model(text: &str) -> Result<IntrinsicModel, LoadError> {
    match parse(text)? {
        Document::Intrinsic(spec) => Ok(validate(&spec)?),
        other => Err(LoadError::WrongKind { expected: "intrinsic", found: other.kind() }),
    }
}

pub fn serialize_model(model: &IntrinsicModel) -> String {
    serialize(&Document::Intrinsic(model.to_spec()))
}

pub fn parse_reduced(text: &str) -> Result<ReducedStaticModel, LoadError> {
    match parse(text)? {
        Document::StaticReduced(r) => Ok(r),
        other => Err(LoadError::WrongKind { expected: "static-reduced", found: other.kind() }),
    }
}

pub fn parse_policy(text: &str) -> Result<PolicyDoc, LoadError> {
    match parse(text)? {
        Document::Policy(p) => Ok(p),
        other => Err(LoadError::WrongKind { expected: "policy", found: other.kind() }),
    }
}

pub fn parse_decomposition(text: &str) -> Result<DecompositionDoc, LoadError> {
    match parse(text)? {
        Document::Nested(p) => Ok(p),
        other => Err(LoadError::WrongKind { expected: "nested", found: other.kind() }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn fixtures_round_trip() {
        for text in [fixtures::EXAMPLE5, fixtures::EXAMPLE1, fixtures::EXAMPLE2] {
            let doc = parse(text).unwrap();
            let out = serialize(&doc);
            assert_eq!(parse(&out).unwrap(), doc);
            assert_eq!(serialize(&parse(&out).unwrap()), out);
        }
    }

    #[test]
    fn shuffled_rows_serialize_identically() {
        let text = fixtures::EXAMPLE5;
        let lines: Vec<&str> = text.lines().collect();
        let (head, rows): (Vec<&str>, Vec<&str>) = lines.iter().partition(|l| !l.starts_with("prior"));
        let mut rows = rows;
        rows.reverse();
        let shuffled = head.iter().chain(rows.iter()).copied().collect::<Vec<_>>().join("\n");
        assert_eq!(serialize(&parse(&shuffled).unwrap()), serialize(&parse(text).unwrap()));
    }

    #[test]
    fn zero_denominator() {
        let text = fixtures::EXAMPLE2.replacen("prior 0 : 1/2", "prior 0 : 1/0", 1);
        let err = parse(&text).unwrap_err();
        assert_eq!(err.diagnostics[0].kind, DslErrorKind::ZeroDenominator);
        let line = text.lines().nth(err.diagnostics[0].line - 1).unwrap();
        assert!(line.contains("1/0"));
    }

    #[test]
    fn bad_prior_is_a_validation_error_not_a_parse_error() {
        let text = fixtures::EXAMPLE5.replacen(": 1/32", ": 1/31", 1);
        assert!(parse(&text).is_ok());
        assert!(matches!(parse_model(&text), Err(LoadError::Invalid(_))));
    }

    #[test]
    fn duplicate_and_unknown() {
        let dup = format!("{}prior 0 : 1/2\n", fixtures::EXAMPLE2);
        let err = parse(&dup).unwrap_err();
        assert_eq!(err.diagnostics[0].kind, DslErrorKind::DuplicateRow);
        let unk = fixtures::EXAMPLE2.replacen("prior 1 : 1/2", "prior 7 : 1/2", 1);
        let err = parse(&unk).unwrap_err();
        assert_eq!(err.diagnostics[0].kind, DslErrorKind::UnknownSymbol);
        assert_eq!(err.diagnostics[0].col, 7);
        let sec = format!("{}colour blue\n", fixtures::EXAMPLE2);
        assert_eq!(parse(&sec).unwrap_err().diagnostics[0].kind, DslErrorKind::UnknownSection);
    }

    #[test]
    fn printed_generating_family_of_dm1_is_finer_than_its_measurement() {
        // {ω_s + ω_0 = 1} is listed as its own event; with it the family has
        // five atoms while η^1 takes only three values
        let text = fixtures::EXAMPLE5.replacen(
            "event 1 b (ws w1 u2)",
            "event 1 c (w0 ws)\nevent 1 c 0 1\nevent 1 c 1 0\nevent 1 b (ws w1 u2)",
            1,
        );
        match parse_model(&text) {
            Err(LoadError::Invalid(r)) => assert!(r.has(crate::model::DiagnosticKind::FieldMismatch)),
            other => panic!("expected a field mismatch, got {other:?}"),
        }
    }

    #[test]
    fn split_stream() {
        let both = format!("{}{}", fixtures::EXAMPLE1, fixtures::EXAMPLE2);
        let docs = split_documents(&both);
        assert_eq!(docs.len(), 2);
        assert!(parse_model(&docs[1]).is_ok());
    }
}
