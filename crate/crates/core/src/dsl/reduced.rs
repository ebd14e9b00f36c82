//! `kind static-reduced`: a reduced static team with its reference measures,
//! kernels, densities and reduced cost written out symbolically.
//!
//! ```text
//! mode policy-independent            # or policy-parameterized
//! dms 2
//! signal w0 cost 0 1                 # context signals only
//! actions 1 0 1
//! measurements 1 a b
//! policy 1 a : 0                     # parameterized mode only
//! stage-order 1 2                    # parameterized mode only
//! prior 0 : 1/2                      # nonzero entries
//! reference 1 a : 1/2
//! sigma 1 2                          # realized orderings
//! okernel 0 [1 a 0] : 2 1            # ctx, history, then DM and probability
//! density 0 [1 a 0] : 2 b 3/2        # ctx, history, then DM, symbol, density
//! rcost 0 | a b | 1 0 : 3            # ctx | measurements | actions, nonzero entries
//! ```

use std::collections::{BTreeMap, BTreeSet};

use num_traits::Zero;

use super::lexer::{fmt_rational, quote, Cursor};
use super::{Diagnostic, DslErrorKind};
use crate::model::{Alphabet, PolicyProfile, Signal, SignalRole};
use crate::reduction::{ReducedStaticModel, ReductionMode, StaticDm, Step};
use crate::Rational;

#[derive(Default)]
struct Header {
    parameterized: Option<bool>,
    n: Option<usize>,
    signals: Vec<Signal>,
    actions: BTreeMap<usize, Alphabet>,
    measurements: BTreeMap<usize, Alphabet>,
}

fn unknown(c: &Cursor, col: usize, msg: impl Into<String>) -> Diagnostic {
    c.err_at(col, DslErrorKind::UnknownSymbol, msg)
}

fn dm(c: &mut Cursor, n: usize) -> Result<usize, Diagnostic> {
    let (k, col) = c.index()?;
    if k == 0 || k > n {
        return Err(unknown(c, col, format!("no DM {k}")));
    }
    Ok(k - 1)
}

fn alphabet(c: &mut Cursor) -> Result<Alphabet, Diagnostic> {
    let col = c.col();
    let mut syms = Vec::new();
    while c.remaining() > 0 {
        syms.push(c.symbol()?.0);
    }
    Alphabet::new(syms).map_err(|e| c.err_at(col, DslErrorKind::SyntaxError, e.to_string()))
}

fn header_line(h: &mut Header, c: &mut Cursor) -> Result<(), Diagnostic> {
    let (kw, kcol) = c.keyword()?;
    match kw.as_str() {
        "mode" => {
            let (m, col) = c.keyword()?;
            h.parameterized = Some(match m.as_str() {
                "policy-independent" => false,
                "policy-parameterized" => true,
                _ => return Err(unknown(c, col, format!("unknown mode {m}"))),
            });
        }
        "dms" => h.n = Some(c.index()?.0),
        "signal" => {
            let (name, _) = c.symbol()?;
            let (role, col) = c.keyword()?;
            let role = SignalRole::parse(&role).ok_or_else(|| unknown(c, col, format!("unknown role {role}")))?;
            let alphabet = alphabet(c)?;
            h.signals.push(Signal { name, role, alphabet });
        }
        "actions" | "measurements" => {
            let n = h.n.ok_or_else(|| c.err_at(kcol, DslErrorKind::SyntaxError, "'dms' must come first"))?;
            let d = dm(c, n)?;
            let a = alphabet(c)?;
            let map = if kw == "actions" { &mut h.actions } else { &mut h.measurements };
            if map.insert(d, a).is_some() {
                return Err(c.err_at(kcol, DslErrorKind::DuplicateRow, format!("{kw} of DM {} declared twice", d + 1)));
            }
        }
        _ => unreachable!("filtered by caller"),
    }
    c.end()
}

struct Body<'a> {
    dms: &'a [StaticDm],
    context: &'a [Signal],
}

impl Body<'_> {
    fn lookup(&self, c: &Cursor, a: &Alphabet, s: &str, col: usize) -> Result<usize, Diagnostic> {
        a.index_of(s).ok_or_else(|| unknown(c, col, format!("unknown symbol {s:?}")))
    }

    fn context(&self, c: &mut Cursor) -> Result<usize, Diagnostic> {
        let mut idx = 0;
        for s in self.context {
            let (v, col) = c.symbol()?;
            idx = idx * s.alphabet.len() + self.lookup(c, &s.alphabet, &v, col)?;
        }
        Ok(idx)
    }

    fn measurement(&self, c: &mut Cursor, d: usize) -> Result<usize, Diagnostic> {
        let (v, col) = c.symbol()?;
        self.lookup(c, &self.dms[d].measurements, &v, col)
    }

    fn action(&self, c: &mut Cursor, d: usize) -> Result<usize, Diagnostic> {
        let (v, col) = c.symbol()?;
        self.lookup(c, &self.dms[d].actions, &v, col)
    }

    fn history(&self, c: &mut Cursor) -> Result<Vec<Step>, Diagnostic> {
        let mut h = Vec::new();
        while c.at_punct('[') {
            c.punct('[')?;
            let d = dm(c, self.dms.len())?;
            let y = self.measurement(c, d)?;
            let u = self.action(c, d)?;
            c.punct(']')?;
            h.push((d, y, u));
        }
        Ok(h)
    }

    fn tuple(&self, c: &mut Cursor, measurements: bool) -> Result<usize, Diagnostic> {
        let mut idx = 0;
        for (d, s) in self.dms.iter().enumerate() {
            let (len, v) = if measurements {
                (s.measurements.len(), self.measurement(c, d)?)
            } else {
                (s.actions.len(), self.action(c, d)?)
            };
            idx = idx * len + v;
        }
        Ok(idx)
    }
}

pub(super) fn parse(lines: Vec<Cursor>, errors: &mut Vec<Diagnostic>) -> Option<ReducedStaticModel> {
    const HEADER: &[&str] = &["mode", "dms", "signal", "actions", "measurements"];
    let mut h = Header::default();
    let mut body = Vec::new();
    let last_line = lines.last().map_or(3, |c| c.line);
    for mut c in lines {
        let is_header = matches!(c.peek(), Some(super::lexer::Tok::Word(w)) if HEADER.contains(&w.as_str()));
        if is_header {
            if let Err(d) = header_line(&mut h, &mut c) {
                errors.push(d);
            }
        } else {
            body.push(c);
        }
    }
    let missing = |what: &str| Diagnostic::new(last_line, 1, DslErrorKind::SyntaxError, format!("missing {what}"));
    let (Some(parameterized), Some(n)) = (h.parameterized, h.n) else {
        errors.push(missing("'mode' or 'dms' line"));
        return None;
    };
    let mut dms = Vec::with_capacity(n);
    for d in 0..n {
        match (h.actions.remove(&d), h.measurements.remove(&d)) {
            (Some(actions), Some(measurements)) => dms.push(StaticDm { actions, measurements }),
            _ => {
                errors.push(missing(&format!("alphabets of DM {}", d + 1)));
                return None;
            }
        }
    }
    let b = Body { dms: &dms, context: &h.signals };
    let n_ctx: usize = h.signals.iter().map(|s| s.alphabet.len()).product();
    let n_y: usize = dms.iter().map(|d| d.measurements.len()).product();
    let n_u: usize = dms.iter().map(|d| d.actions.len()).product();

    let mut policy: Vec<Vec<Option<usize>>> = dms.iter().map(|d| vec![None; d.measurements.len()]).collect();
    let mut stage_order: Option<Vec<usize>> = None;
    let mut prior = vec![Rational::zero(); n_ctx];
    let mut reference: Vec<Vec<Option<Rational>>> = dms.iter().map(|d| vec![None; d.measurements.len()]).collect();
    let mut orderings = BTreeSet::new();
    let mut order_kernel: BTreeMap<(usize, Vec<Step>), Vec<Rational>> = BTreeMap::new();
    let mut densities: BTreeMap<(usize, Vec<Step>, usize), Vec<Rational>> = BTreeMap::new();
    let mut cost = vec![Rational::zero(); n_ctx * n_y * n_u];
    let mut seen_prior = BTreeSet::new();
    let mut seen_cost = BTreeSet::new();

    for mut c in body {
        let r = (|| {
            let (kw, kcol) = c.keyword()?;
            let dup = |c: &Cursor| c.err_at(kcol, DslErrorKind::DuplicateRow, format!("duplicate {kw} row"));
            match kw.as_str() {
                "policy" => {
                    if !parameterized {
                        return Err(c.err_at(kcol, DslErrorKind::UnknownSection, "policy rows need policy-parameterized mode"));
                    }
                    let d = dm(&mut c, n)?;
                    let y = b.measurement(&mut c, d)?;
                    c.punct(':')?;
                    let a = b.action(&mut c, d)?;
                    if policy[d][y].replace(a).is_some() {
                        return Err(dup(&c));
                    }
                }
                "stage-order" => {
                    if !parameterized {
                        return Err(c.err_at(kcol, DslErrorKind::UnknownSection, "stage-order needs policy-parameterized mode"));
                    }
                    let mut s = Vec::new();
                    while c.remaining() > 0 {
                        s.push(dm(&mut c, n)?);
                    }
                    if stage_order.replace(s).is_some() {
                        return Err(dup(&c));
                    }
                }
                "prior" => {
                    let ctx = b.context(&mut c)?;
                    c.punct(':')?;
                    prior[ctx] = c.rational()?;
                    if !seen_prior.insert(ctx) {
                        return Err(dup(&c));
                    }
                }
                "reference" => {
                    let d = dm(&mut c, n)?;
                    let y = b.measurement(&mut c, d)?;
                    c.punct(':')?;
                    if reference[d][y].replace(c.rational()?).is_some() {
                        return Err(dup(&c));
                    }
                }
                "sigma" => {
                    let mut s = Vec::new();
                    while c.remaining() > 0 {
                        s.push(dm(&mut c, n)?);
                    }
                    if !orderings.insert(s) {
                        return Err(dup(&c));
                    }
                }
                "okernel" => {
                    let ctx = b.context(&mut c)?;
                    let hist = b.history(&mut c)?;
                    c.punct(':')?;
                    let d = dm(&mut c, n)?;
                    let p = c.rational()?;
                    let row = order_kernel.entry((ctx, hist)).or_insert_with(|| vec![Rational::zero(); n]);
                    if !row[d].is_zero() {
                        return Err(dup(&c));
                    }
                    row[d] = p;
                }
                "density" => {
                    let ctx = b.context(&mut c)?;
                    let hist = b.history(&mut c)?;
                    c.punct(':')?;
                    let d = dm(&mut c, n)?;
                    let y = b.measurement(&mut c, d)?;
                    let f = c.rational()?;
                    let row = densities
                        .entry((ctx, hist, d))
                        .or_insert_with(|| vec![Rational::zero(); dms[d].measurements.len()]);
                    if !row[y].is_zero() {
                        return Err(dup(&c));
                    }
                    row[y] = f;
                }
                "rcost" => {
                    let ctx = b.context(&mut c)?;
                    c.punct('|')?;
                    let y = b.tuple(&mut c, true)?;
                    c.punct('|')?;
                    let u = b.tuple(&mut c, false)?;
                    c.punct(':')?;
                    let idx = (ctx * n_y + y) * n_u + u;
                    cost[idx] = c.rational()?;
                    if !seen_cost.insert(idx) {
                        return Err(dup(&c));
                    }
                }
                other => {
                    return Err(c.err_at(kcol, DslErrorKind::UnknownSection, format!("unknown statement {other}")))
                }
            }
            c.end()
        })();
        if let Err(d) = r {
            errors.push(d);
        }
    }

    let reference: Option<Vec<Vec<Rational>>> =
        reference.into_iter().map(|row| row.into_iter().collect::<Option<Vec<_>>>()).collect();
    let Some(reference) = reference else {
        errors.push(missing("reference rows"));
        return None;
    };
    let mode = if parameterized {
        let tables: Option<Vec<Vec<usize>>> =
            policy.into_iter().map(|t| t.into_iter().collect::<Option<Vec<_>>>()).collect();
        match (tables, stage_order) {
            (Some(tables), Some(stage_order)) => {
                ReductionMode::PolicyParameterized { policy: PolicyProfile { tables }, stage_order }
            }
            _ => {
                errors.push(missing("policy rows or stage-order"));
                return None;
            }
        }
    } else {
        ReductionMode::PolicyIndependent
    };
    Some(ReducedStaticModel {
        mode,
        context: h.signals,
        dms,
        prior,
        reference,
        order_kernel,
        densities,
        orderings,
        cost,
    })
}

fn syms(a: &Alphabet) -> String {
    a.symbols().iter().map(|s| format!(" {}", quote(s))).collect()
}

fn ctx_syms(r: &ReducedStaticModel, ctx: usize) -> String {
    r.context_space()
        .decode(ctx)
        .iter()
        .zip(&r.context)
        .map(|(&v, s)| format!(" {}", quote(s.alphabet.symbol(v))))
        .collect()
}

fn history(r: &ReducedStaticModel, h: &[Step]) -> String {
    h.iter()
        .map(|&(d, y, u)| {
            format!(
                " [{} {} {}]",
                d + 1,
                quote(r.dms[d].measurements.symbol(y)),
                quote(r.dms[d].actions.symbol(u))
            )
        })
        .collect()
}

pub(super) fn write(r: &ReducedStaticModel, out: &mut String) {
    let mode = if r.is_policy_parameterized() { "policy-parameterized" } else { "policy-independent" };
    out.push_str(&format!("mode {mode}\ndms {}\n", r.n_dms()));
    for s in &r.context {
        out.push_str(&format!("signal {} {}{}\n", quote(&s.name), s.role.as_str(), syms(&s.alphabet)));
    }
    for (i, d) in r.dms.iter().enumerate() {
        out.push_str(&format!("actions {}{}\n", i + 1, syms(&d.actions)));
        out.push_str(&format!("measurements {}{}\n", i + 1, syms(&d.measurements)));
    }
    if let ReductionMode::PolicyParameterized { policy, stage_order } = &r.mode {
        for (i, t) in policy.tables.iter().enumerate() {
            for (y, &a) in t.iter().enumerate() {
                let d = &r.dms[i];
                out.push_str(&format!("policy {} {} : {}\n", i + 1, quote(d.measurements.symbol(y)), quote(d.actions.symbol(a))));
            }
        }
        let s: String = stage_order.iter().map(|d| format!(" {}", d + 1)).collect();
        out.push_str(&format!("stage-order{s}\n"));
    }
    for (ctx, p) in r.prior.iter().enumerate() {
        if !p.is_zero() {
            out.push_str(&format!("prior{} : {}\n", ctx_syms(r, ctx), fmt_rational(p)));
        }
    }
    for (i, q) in r.reference.iter().enumerate() {
        for (y, v) in q.iter().enumerate() {
            out.push_str(&format!("reference {} {} : {}\n", i + 1, quote(r.dms[i].measurements.symbol(y)), fmt_rational(v)));
        }
    }
    for s in &r.orderings {
        let s: String = s.iter().map(|d| format!(" {}", d + 1)).collect();
        out.push_str(&format!("sigma{s}\n"));
    }
    for ((ctx, h), row) in &r.order_kernel {
        for (d, p) in row.iter().enumerate() {
            if !p.is_zero() {
                out.push_str(&format!("okernel{}{} : {} {}\n", ctx_syms(r, *ctx), history(r, h), d + 1, fmt_rational(p)));
            }
        }
    }
    for ((ctx, h, d), row) in &r.densities {
        for (y, f) in row.iter().enumerate() {
            if !f.is_zero() {
                out.push_str(&format!(
                    "density{}{} : {} {} {}\n",
                    ctx_syms(r, *ctx),
                    history(r, h),
                    d + 1,
                    quote(r.dms[*d].measurements.symbol(y)),
                    fmt_rational(f)
                ));
            }
        }
    }
    let ys = r.measurement_space();
    let us = r.action_space();
    for (idx, v) in r.cost.iter().enumerate() {
        if v.is_zero() {
            continue;
        }
        let u = idx % us.len();
        let y = (idx / us.len()) % ys.len();
        let ctx = idx / (us.len() * ys.len());
        let yv: String = ys
            .decode(y)
            .iter()
            .enumerate()
            .map(|(i, &s)| format!(" {}", quote(r.dms[i].measurements.symbol(s))))
            .collect();
        let uv: String =
            us.decode(u).iter().enumerate().map(|(i, &a)| format!(" {}", quote(r.dms[i].actions.symbol(a)))).collect();
        out.push_str(&format!("rcost{} |{yv} |{uv} : {}\n", ctx_syms(r, ctx), fmt_rational(v)));
    }
}

#[cfg(test)]
mod tests {
    use crate::dsl::{parse, parse_reduced, serialize, Document, DslErrorKind};
    use crate::fixtures;
    use crate::reduction::{sm_reduce, static_reduce, ReferenceKind};

    #[test]
    fn chance_ordered_reduction_round_trips_and_still_verifies() {
        let m = fixtures::example5();
        let r = static_reduce(&m, m.ordering().unwrap(), ReferenceKind::Uniform).unwrap();
        let text = serialize(&Document::StaticReduced(r.clone()));
        let back = parse_reduced(&text).unwrap();
        assert_eq!(back, r);
        assert_eq!(serialize(&Document::StaticReduced(back.clone())), text);
        for idx in (0..512).step_by(7) {
            let g = m.policy_space().policy_at(idx);
            assert_eq!(back.expected_cost(&g).unwrap(), m.expected_cost(&g).unwrap());
        }
    }

    #[test]
    fn parameterized_round_trip() {
        let m = fixtures::example5();
        let g = m.policy_space().policy_at(77);
        let r = sm_reduce(&m, &g, Some(vec![1, 0, 2]), ReferenceKind::Dyadic).unwrap();
        let text = serialize(&Document::StaticReduced(r.clone()));
        assert!(text.contains("stage-order 2 1 3"));
        assert_eq!(parse_reduced(&text).unwrap(), r);
    }

    #[test]
    fn bad_symbols_are_located() {
        let m = fixtures::example5();
        let r = static_reduce(&m, m.ordering().unwrap(), ReferenceKind::Uniform).unwrap();
        let text = serialize(&Document::StaticReduced(r));
        let bad = text.replacen("reference 1 0 :", "reference 1 9 :", 1);
        let err = parse(&bad).unwrap_err();
        let d = &err.diagnostics[0];
        assert_eq!(d.kind, DslErrorKind::UnknownSymbol);
        assert!(bad.lines().nth(d.line - 1).unwrap().starts_with("reference 1 9"));
    }
}
