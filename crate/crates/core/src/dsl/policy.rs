use std::collections::BTreeMap;

use super::lexer::{quote, Cursor};
use super::{Diagnostic, DslErrorKind};
use crate::model::{IntrinsicModel, ModelError, PolicyProfile};

/// A policy written symbolically: `policy <dm> <measurement> : <action>`.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct PolicyDoc {
    /// Keyed by (0-based DM, measurement symbol).
    pub rows: BTreeMap<(usize, String), String>,
}

impl PolicyDoc {
    pub fn from_profile(model: &IntrinsicModel, policy: &PolicyProfile) -> Self {
        let mut rows = BTreeMap::new();
        for (i, t) in policy.tables.iter().enumerate() {
            let d = model.dm(i);
            for (y, &a) in t.iter().enumerate() {
                rows.insert((i, d.measurements.symbol(y).to_string()), d.actions.symbol(a).to_string());
            }
        }
        PolicyDoc { rows }
    }

    pub fn resolve(&self, model: &IntrinsicModel) -> Result<PolicyProfile, ModelError> {
        let mut tables = Vec::new();
        for (i, d) in model.dms().iter().enumerate() {
            let mut t = Vec::new();
            for y in d.measurements.symbols() {
                let a = self
                    .rows
                    .get(&(i, y.clone()))
                    .ok_or_else(|| ModelError::PolicyShape(format!("no action for DM {} at {y:?}", i + 1)))?;
                t.push(
                    d.actions
                        .index_of(a)
                        .ok_or_else(|| ModelError::PolicyShape(format!("{a:?} is not an action of DM {}", i + 1)))?,
                );
            }
            tables.push(t);
        }
        for (i, y) in self.rows.keys() {
            if *i >= model.n_dms() || model.dm(*i).measurements.index_of(y).is_none() {
                return Err(ModelError::PolicyShape(format!("DM {} has no measurement {y:?}", i + 1)));
            }
        }
        Ok(PolicyProfile { tables })
    }
}

pub(super) fn parse(lines: Vec<Cursor>, errors: &mut Vec<Diagnostic>) -> Option<PolicyDoc> {
    let mut doc = PolicyDoc::default();
    for mut c in lines {
        let r = (|| {
            let (kw, kcol) = c.keyword()?;
            if kw != "policy" {
                return Err(c.err_at(kcol, DslErrorKind::UnknownSection, format!("unknown statement {kw}")));
            }
            let (k, col) = c.index()?;
            if k == 0 {
                return Err(c.err_at(col, DslErrorKind::UnknownSymbol, "DMs are numbered from 1"));
            }
            let (y, _) = c.symbol()?;
            c.punct(':')?;
            let (a, _) = c.symbol()?;
            c.end()?;
            if doc.rows.insert((k - 1, y), a).is_some() {
                return Err(c.err_at(kcol, DslErrorKind::DuplicateRow, "duplicate policy row"));
            }
            Ok(())
        })();
        if let Err(d) = r {
            errors.push(d);
        }
    }
    Some(doc)
}

pub(super) fn write(p: &PolicyDoc, out: &mut String) {
    for ((i, y), a) in &p.rows {
        out.push_str(&format!("policy {} {} : {}\n", i + 1, quote(y), quote(a)));
    }
}
