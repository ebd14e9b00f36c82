use std::collections::{BTreeMap, BTreeSet};

use super::lexer::{fmt_rational, quote, Cursor, Tok};
use super::{Diagnostic, DslErrorKind};
use crate::model::{Alphabet, Arg, DmSpec, EventSpec, ModelSpec, Signal, SignalRole, TableSpec};
use crate::ordering::{OrderingSpec, TreeKey};
use crate::Rational;

#[derive(Default)]
struct DmPartial {
    actions: Option<Alphabet>,
    measurements: Option<Alphabet>,
    obs: Option<TableSpec<usize>>,
    events: BTreeMap<String, EventSpec>,
}

enum OrderingPartial {
    Flat(BTreeMap<Vec<usize>, Vec<usize>>),
    Tree(Vec<usize>, BTreeMap<TreeKey, usize>),
}

#[derive(Default)]
struct Builder {
    dms_line: usize,
    signals: Vec<Signal>,
    dms: Vec<DmPartial>,
    prior: BTreeMap<Vec<usize>, Rational>,
    cost: Option<TableSpec<Rational>>,
    ordering: Option<OrderingPartial>,
}

type R<T> = Result<T, Diagnostic>;

impl Builder {
    fn dm(&mut self, c: &mut Cursor) -> R<usize> {
        let (k, col) = c.index()?;
        if k == 0 || k > self.dms.len() {
            return Err(c.err_at(col, DslErrorKind::UnknownSymbol, format!("no DM {k}")));
        }
        Ok(k - 1)
    }

    fn arg_named(&self, name: &str) -> Option<Arg> {
        if let Some(j) = self.signals.iter().position(|s| s.name == name) {
            return Some(Arg::Signal(j));
        }
        let k: usize = name.strip_prefix('u')?.parse().ok()?;
        (k >= 1 && k <= self.dms.len()).then(|| Arg::Action(k - 1))
    }

    fn arg_list(&self, c: &mut Cursor) -> R<Vec<Arg>> {
        c.punct('(')?;
        let mut args = Vec::new();
        while !c.at_punct(')') {
            let (name, col) = c.symbol()?;
            let a = self
                .arg_named(&name)
                .ok_or_else(|| c.err_at(col, DslErrorKind::UnknownSymbol, format!("unknown argument {name}")))?;
            if args.contains(&a) {
                return Err(c.err_at(col, DslErrorKind::SyntaxError, format!("argument {name} repeated")));
            }
            args.push(a);
        }
        c.punct(')')?;
        Ok(args)
    }

    fn alphabet_of(&self, a: Arg, c: &Cursor) -> R<&Alphabet> {
        match a {
            Arg::Signal(j) => Ok(&self.signals[j].alphabet),
            Arg::Action(j) => self.dms[j]
                .actions
                .as_ref()
                .ok_or_else(|| c.err(DslErrorKind::SyntaxError, format!("actions of DM {} not yet declared", j + 1))),
        }
    }

    fn values(&self, c: &mut Cursor, args: &[Arg]) -> R<Vec<usize>> {
        let mut out = Vec::with_capacity(args.len());
        for &a in args {
            let (s, col) = c.symbol()?;
            let alpha = self.alphabet_of(a, c)?;
            out.push(
                alpha
                    .index_of(&s)
                    .ok_or_else(|| c.err_at(col, DslErrorKind::UnknownSymbol, format!("{s:?} is not a symbol of its argument")))?,
            );
        }
        Ok(out)
    }

    fn alphabet(c: &mut Cursor) -> R<Alphabet> {
        let col = c.col();
        let mut syms = Vec::new();
        while c.remaining() > 0 {
            syms.push(c.symbol()?.0);
        }
        Alphabet::new(syms).map_err(|e| c.err_at(col, DslErrorKind::SyntaxError, e.to_string()))
    }

    fn statement(&mut self, c: &mut Cursor) -> R<()> {
        let (kw, kcol) = c.keyword()?;
        if kw != "dms" && kw != "signal" && self.dms.is_empty() {
            return Err(c.err_at(kcol, DslErrorKind::SyntaxError, "'dms N' must come before this statement"));
        }
        match kw.as_str() {
            "dms" => {
                if !self.dms.is_empty() {
                    return Err(c.err_at(kcol, DslErrorKind::DuplicateRow, "'dms' declared twice"));
                }
                let (n, col) = c.index()?;
                if n == 0 {
                    return Err(c.err_at(col, DslErrorKind::SyntaxError, "need at least one DM"));
                }
                self.dms_line = c.line;
                self.dms = (0..n).map(|_| DmPartial::default()).collect();
            }
            "signal" => {
                let (name, col) = c.symbol()?;
                if self.signals.iter().any(|s| s.name == name) {
                    return Err(c.err_at(col, DslErrorKind::DuplicateRow, format!("signal {name} declared twice")));
                }
                let (role, rcol) = c.keyword()?;
                let role = SignalRole::parse(&role)
                    .ok_or_else(|| c.err_at(rcol, DslErrorKind::UnknownSymbol, "role must be cost, order or noise"))?;
                let alphabet = Self::alphabet(c)?;
                self.signals.push(Signal { name, role, alphabet });
            }
            "actions" | "measurements" => {
                let d = self.dm(c)?;
                let a = Self::alphabet(c)?;
                let slot = if kw == "actions" { &mut self.dms[d].actions } else { &mut self.dms[d].measurements };
                if slot.is_some() {
                    return Err(c.err_at(kcol, DslErrorKind::DuplicateRow, format!("{kw} of DM {} declared twice", d + 1)));
                }
                *slot = Some(a);
            }
            "obs" => {
                let d = self.dm(c)?;
                if c.at_punct('(') {
                    let args = self.arg_list(c)?;
                    if self.dms[d].obs.is_some() {
                        return Err(c.err_at(kcol, DslErrorKind::DuplicateRow, "observation arguments declared twice"));
                    }
                    self.dms[d].obs = Some(TableSpec { args, rows: BTreeMap::new() });
                } else {
                    let args = match &self.dms[d].obs {
                        Some(t) => t.args.clone(),
                        None => return Err(c.err(DslErrorKind::SyntaxError, "observation row before its argument list")),
                    };
                    let key = self.values(c, &args)?;
                    c.punct(':')?;
                    let (s, col) = c.symbol()?;
                    let y = self.dms[d]
                        .measurements
                        .as_ref()
                        .ok_or_else(|| c.err_at(col, DslErrorKind::SyntaxError, "measurements not yet declared"))?
                        .index_of(&s)
                        .ok_or_else(|| c.err_at(col, DslErrorKind::UnknownSymbol, format!("{s:?} is not a measurement symbol")))?;
                    let t = self.dms[d].obs.as_mut().expect("checked");
                    if t.rows.insert(key, y).is_some() {
                        return Err(c.err_at(kcol, DslErrorKind::DuplicateRow, "duplicate observation row"));
                    }
                }
            }
            "event" => {
                let d = self.dm(c)?;
                let (label, _) = c.symbol()?;
                if c.at_punct('(') {
                    let args = self.arg_list(c)?;
                    if self.dms[d].events.contains_key(&label) {
                        return Err(c.err_at(kcol, DslErrorKind::DuplicateRow, format!("event {label} declared twice")));
                    }
                    self.dms[d].events.insert(label.clone(), EventSpec { label, args, members: BTreeSet::new() });
                } else {
                    let args = match self.dms[d].events.get(&label) {
                        Some(e) => e.args.clone(),
                        None => return Err(c.err(DslErrorKind::UnknownSymbol, format!("event {label} not declared"))),
                    };
                    let key = self.values(c, &args)?;
                    if !self.dms[d].events.get_mut(&label).expect("checked").members.insert(key) {
                        return Err(c.err_at(kcol, DslErrorKind::DuplicateRow, "duplicate event member"));
                    }
                }
            }
            "prior" => {
                let args: Vec<Arg> = (0..self.signals.len()).map(Arg::Signal).collect();
                let key = self.values(c, &args)?;
                c.punct(':')?;
                let p = c.rational()?;
                if self.prior.insert(key, p).is_some() {
                    return Err(c.err_at(kcol, DslErrorKind::DuplicateRow, "duplicate prior row"));
                }
            }
            "cost" => {
                if c.at_punct('(') {
                    if self.cost.is_some() {
                        return Err(c.err_at(kcol, DslErrorKind::DuplicateRow, "cost arguments declared twice"));
                    }
                    let args = self.arg_list(c)?;
                    self.cost = Some(TableSpec { args, rows: BTreeMap::new() });
                } else {
                    let args = match &self.cost {
                        Some(t) => t.args.clone(),
                        None => return Err(c.err(DslErrorKind::SyntaxError, "cost row before its argument list")),
                    };
                    let key = self.values(c, &args)?;
                    c.punct(':')?;
                    let v = c.rational()?;
                    if self.cost.as_mut().expect("checked").rows.insert(key, v).is_some() {
                        return Err(c.err_at(kcol, DslErrorKind::DuplicateRow, "duplicate cost row"));
                    }
                }
            }
            "ordering" => self.ordering_statement(c, kcol)?,
            other => return Err(c.err_at(kcol, DslErrorKind::UnknownSection, format!("unknown statement {other}"))),
        }
        c.end()
    }

    fn ordering_statement(&mut self, c: &mut Cursor, kcol: usize) -> R<()> {
        let is_word = |t: Option<&Tok>, w: &str| matches!(t, Some(Tok::Word(x)) if x == w);
        if is_word(c.peek(), "tree") && c.peek_at(1) == Some(&Tok::Punct('(')) {
            c.keyword()?;
            if self.ordering.is_some() {
                return Err(c.err_at(kcol, DslErrorKind::DuplicateRow, "ordering declared twice"));
            }
            let args = self.arg_list(c)?;
            let mut sig = Vec::new();
            for a in args {
                match a {
                    Arg::Signal(j) => sig.push(j),
                    Arg::Action(_) => return Err(c.err(DslErrorKind::SyntaxError, "tree arguments must be signals")),
                }
            }
            self.ordering = Some(OrderingPartial::Tree(sig, BTreeMap::new()));
            return Ok(());
        }
        if is_word(c.peek(), "flat") && c.remaining() == 1 {
            c.keyword()?;
            if self.ordering.is_some() {
                return Err(c.err_at(kcol, DslErrorKind::DuplicateRow, "ordering declared twice"));
            }
            self.ordering = Some(OrderingPartial::Flat(BTreeMap::new()));
            return Ok(());
        }
        let n = self.dms.len();
        match self.ordering.take() {
            None => Err(c.err(DslErrorKind::SyntaxError, "ordering row before 'ordering tree (...)' or 'ordering flat'")),
            Some(OrderingPartial::Tree(args, mut nodes)) => {
                let res = (|| {
                    let sargs: Vec<Arg> = args.iter().map(|&j| Arg::Signal(j)).collect();
                    let signals = self.values(c, &sargs)?;
                    c.punct('[')?;
                    let mut prefix = Vec::new();
                    while c.at_punct('(') {
                        c.punct('(')?;
                        let d = self.dm(c)?;
                        let a = self.values(c, &[Arg::Action(d)])?[0];
                        c.punct(')')?;
                        prefix.push((d, a));
                    }
                    c.punct(']')?;
                    c.punct(':')?;
                    let d = self.dm(c)?;
                    if nodes.insert(TreeKey { signals, prefix }, d).is_some() {
                        return Err(c.err_at(kcol, DslErrorKind::DuplicateRow, "duplicate ordering row"));
                    }
                    Ok(())
                })();
                self.ordering = Some(OrderingPartial::Tree(args, nodes));
                res
            }
            Some(OrderingPartial::Flat(mut rows)) => {
                let res = (|| {
                    let mut args: Vec<Arg> = (0..self.signals.len()).map(Arg::Signal).collect();
                    args.extend((0..n).map(Arg::Action));
                    let key = self.values(c, &args)?;
                    c.punct(':')?;
                    let mut perm = Vec::new();
                    while c.remaining() > 0 {
                        perm.push(self.dm(c)?);
                    }
                    if rows.insert(key, perm).is_some() {
                        return Err(c.err_at(kcol, DslErrorKind::DuplicateRow, "duplicate ordering row"));
                    }
                    Ok(())
                })();
                self.ordering = Some(OrderingPartial::Flat(rows));
                res
            }
        }
    }

    fn finish(self, errors: &mut Vec<Diagnostic>) -> Option<ModelSpec> {
        let line = self.dms_line.max(1);
        if self.dms.is_empty() {
            errors.push(Diagnostic::new(line, 1, DslErrorKind::SyntaxError, "missing 'dms N'"));
            return None;
        }
        let mut dms = Vec::new();
        for (i, d) in self.dms.into_iter().enumerate() {
            match (d.actions, d.measurements, d.obs) {
                (Some(actions), Some(measurements), Some(observation)) => dms.push(DmSpec {
                    actions,
                    measurements,
                    observation,
                    events: d.events.into_values().collect(),
                }),
                _ => errors.push(Diagnostic::new(
                    line,
                    1,
                    DslErrorKind::SyntaxError,
                    format!("DM {} needs actions, measurements and an obs table", i + 1),
                )),
            }
        }
        let cost = match self.cost {
            Some(c) => c,
            None => {
                errors.push(Diagnostic::new(line, 1, DslErrorKind::SyntaxError, "missing cost table"));
                return None;
            }
        };
        let ordering = self.ordering.map(|o| match o {
            OrderingPartial::Flat(rows) => OrderingSpec::Flat(rows),
            OrderingPartial::Tree(args, nodes) => OrderingSpec::Tree { args, nodes },
        });
        Some(ModelSpec { signals: self.signals, dms, prior: self.prior, cost, ordering })
    }
}

pub(super) fn parse(lines: Vec<Cursor>, errors: &mut Vec<Diagnostic>) -> Option<ModelSpec> {
    let mut b = Builder::default();
    for mut c in lines {
        if let Err(d) = b.statement(&mut c) {
            errors.push(d);
        }
    }
    b.finish(errors)
}

fn arg_name(m: &ModelSpec, a: Arg) -> String {
    match a {
        Arg::Signal(j) => quote(&m.signals[j].name),
        Arg::Action(j) => format!("u{}", j + 1),
    }
}

fn arg_alpha(m: &ModelSpec, a: Arg) -> &Alphabet {
    match a {
        Arg::Signal(j) => &m.signals[j].alphabet,
        Arg::Action(j) => &m.dms[j].actions,
    }
}

fn row(m: &ModelSpec, args: &[Arg], key: &[usize]) -> String {
    args.iter()
        .zip(key)
        .map(|(&a, &v)| quote(arg_alpha(m, a).symbol(v)))
        .collect::<Vec<_>>()
        .join(" ")
}

fn args_decl(m: &ModelSpec, args: &[Arg]) -> String {
    format!("({})", args.iter().map(|&a| arg_name(m, a)).collect::<Vec<_>>().join(" "))
}

fn alpha_line(a: &Alphabet) -> String {
    a.symbols().iter().map(|s| quote(s)).collect::<Vec<_>>().join(" ")
}

fn push_row(out: &mut String, parts: &[&str]) {
    let line = parts.iter().filter(|p| !p.is_empty()).copied().collect::<Vec<_>>().join(" ");
    out.push_str(&line);
    out.push('\n');
}

pub(super) fn write(m: &ModelSpec, out: &mut String) {
    out.push_str(&format!("dms {}\n", m.dms.len()));
    for s in &m.signals {
        out.push_str(&format!("signal {} {} {}\n", quote(&s.name), s.role.as_str(), alpha_line(&s.alphabet)));
    }
    for (i, d) in m.dms.iter().enumerate() {
        let k = i + 1;
        out.push_str(&format!("actions {k} {}\n", alpha_line(&d.actions)));
        out.push_str(&format!("measurements {k} {}\n", alpha_line(&d.measurements)));
    }
    for (i, d) in m.dms.iter().enumerate() {
        let k = i + 1;
        let t = &d.observation;
        out.push_str(&format!("obs {k} {}\n", args_decl(m, &t.args)));
        for (key, &y) in &t.rows {
            let r = row(m, &t.args, key);
            let y = d.measurements.symbols().get(y).map_or_else(|| y.to_string(), |s| quote(s));
            push_row(out, &["obs", &k.to_string(), &r, ":", &y]);
        }
        for e in &d.events {
            out.push_str(&format!("event {k} {} {}\n", quote(&e.label), args_decl(m, &e.args)));
            for key in &e.members {
                let r = row(m, &e.args, key);
                push_row(out, &["event", &k.to_string(), &quote(&e.label), &r]);
            }
        }
    }
    let sargs: Vec<Arg> = (0..m.signals.len()).map(Arg::Signal).collect();
    for (key, p) in &m.prior {
        let r = row(m, &sargs, key);
        push_row(out, &["prior", &r, ":", &fmt_rational(p)]);
    }
    out.push_str(&format!("cost {}\n", args_decl(m, &m.cost.args)));
    for (key, v) in &m.cost.rows {
        let r = row(m, &m.cost.args, key);
        push_row(out, &["cost", &r, ":", &fmt_rational(v)]);
    }
    match &m.ordering {
        None => {}
        Some(OrderingSpec::Tree { args, nodes }) => {
            let targs: Vec<Arg> = args.iter().map(|&j| Arg::Signal(j)).collect();
            out.push_str(&format!("ordering tree {}\n", args_decl(m, &targs)));
            for (key, &d) in nodes {
                let r = row(m, &targs, &key.signals);
                let prefix = key
                    .prefix
                    .iter()
                    .map(|&(dm, a)| format!("({} {})", dm + 1, quote(m.dms[dm].actions.symbol(a))))
                    .collect::<Vec<_>>()
                    .join(" ");
                push_row(out, &["ordering", &r, &format!("[{prefix}]"), ":", &(d + 1).to_string()]);
            }
        }
        Some(OrderingSpec::Flat(rows)) => {
            out.push_str("ordering flat\n");
            let mut args: Vec<Arg> = (0..m.signals.len()).map(Arg::Signal).collect();
            args.extend((0..m.dms.len()).map(Arg::Action));
            for (key, perm) in rows {
                let r = row(m, &args, key);
                let p = perm.iter().map(|d| (d + 1).to_string()).collect::<Vec<_>>().join(" ");
                push_row(out, &["ordering", &r, ":", &p]);
            }
        }
    }
}
