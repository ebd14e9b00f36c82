use std::collections::BTreeMap;

use super::lexer::{quote, Cursor};
use super::{Diagnostic, DslErrorKind};

/// Per-DM decomposition y^i = (y^{↓i}, h_i(g_i(ω), u^{↓i})), written symbolically.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ComponentDoc {
    /// 0-based DMs whose measurements and actions DM i sees, ascending.
    pub below: Vec<usize>,
    /// Signal names g_i reads.
    pub g_args: Vec<String>,
    pub g_rows: BTreeMap<Vec<String>, String>,
    /// (g symbol, actions of `below` in order) → ŷ symbol.
    pub h_rows: BTreeMap<(String, Vec<String>), String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct DecompositionDoc {
    pub components: BTreeMap<usize, ComponentDoc>,
}

fn dm(c: &mut Cursor) -> Result<usize, Diagnostic> {
    let (k, col) = c.index()?;
    if k == 0 {
        return Err(c.err_at(col, DslErrorKind::UnknownSymbol, "DMs are numbered from 1"));
    }
    Ok(k - 1)
}

fn statement(doc: &mut DecompositionDoc, c: &mut Cursor) -> Result<(), Diagnostic> {
    let (kw, kcol) = c.keyword()?;
    match kw.as_str() {
        "below" => {
            let d = dm(c)?;
            c.punct(':')?;
            let mut below = Vec::new();
            while c.remaining() > 0 {
                below.push(dm(c)?);
            }
            below.sort_unstable();
            below.dedup();
            if doc.components.contains_key(&d) {
                return Err(c.err_at(kcol, DslErrorKind::DuplicateRow, "component declared twice"));
            }
            doc.components.insert(d, ComponentDoc { below, ..Default::default() });
        }
        "g" | "h" => {
            let dcol = c.col();
            let d = dm(c)?;
            let comp = doc
                .components
                .get_mut(&d)
                .ok_or_else(|| c.err_at(dcol, DslErrorKind::UnknownSymbol, format!("no 'below' line for DM {}", d + 1)))?;
            if kw == "g" && c.at_punct('(') {
                c.punct('(')?;
                if !comp.g_args.is_empty() {
                    return Err(c.err_at(kcol, DslErrorKind::DuplicateRow, "g arguments declared twice"));
                }
                while !c.at_punct(')') {
                    comp.g_args.push(c.symbol()?.0);
                }
                c.punct(')')?;
            } else if kw == "g" {
                let mut key = Vec::new();
                for _ in 0..comp.g_args.len() {
                    key.push(c.symbol()?.0);
                }
                c.punct(':')?;
                let v = c.symbol()?.0;
                if comp.g_rows.insert(key, v).is_some() {
                    return Err(c.err_at(kcol, DslErrorKind::DuplicateRow, "duplicate g row"));
                }
            } else {
                let g = c.symbol()?.0;
                let mut us = Vec::new();
                for _ in 0..comp.below.len() {
                    us.push(c.symbol()?.0);
                }
                c.punct(':')?;
                let v = c.symbol()?.0;
                if comp.h_rows.insert((g, us), v).is_some() {
                    return Err(c.err_at(kcol, DslErrorKind::DuplicateRow, "duplicate h row"));
                }
            }
        }
        other => return Err(c.err_at(kcol, DslErrorKind::UnknownSection, format!("unknown statement {other}"))),
    }
    c.end()
}

pub(super) fn parse(lines: Vec<Cursor>, errors: &mut Vec<Diagnostic>) -> Option<DecompositionDoc> {
    let mut doc = DecompositionDoc::default();
    for mut c in lines {
        if let Err(d) = statement(&mut doc, &mut c) {
            errors.push(d);
        }
    }
    Some(doc)
}

fn join(parts: &[String]) -> String {
    parts.iter().map(|s| quote(s)).collect::<Vec<_>>().join(" ")
}

pub(super) fn write(doc: &DecompositionDoc, out: &mut String) {
    for (d, comp) in &doc.components {
        let k = d + 1;
        let below: Vec<String> = comp.below.iter().map(|b| (b + 1).to_string()).collect();
        out.push_str(&format!("below {k} :{}\n", below.iter().map(|b| format!(" {b}")).collect::<String>()));
        out.push_str(&format!("g {k} ({})\n", join(&comp.g_args)));
        for (key, v) in &comp.g_rows {
            let lead = if key.is_empty() { String::new() } else { format!(" {}", join(key)) };
            out.push_str(&format!("g {k}{lead} : {}\n", quote(v)));
        }
        for ((g, us), v) in &comp.h_rows {
            let tail = if us.is_empty() { String::new() } else { format!(" {}", join(us)) };
            out.push_str(&format!("h {k} {}{tail} : {}\n", quote(g), quote(v)));
        }
    }
}
