//! Finite intrinsic models, deterministic policies and the closed-loop solution map.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::{Arc, OnceLock};

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::ordering::{OrderingFunction, OrderingSpec};
use crate::sigma::{Coordinate, GroundSet, PartitionField};
use crate::Rational;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("closed loop has {solutions} solutions at signal tuple {omega:?}")]
    NotSolvable { omega: Vec<usize>, solutions: usize },
    #[error("policy does not fit the model: {0}")]
    PolicyShape(String),
    #[error("invalid alphabet: {0}")]
    BadAlphabet(String),
}

/// Finite ordered set of symbols.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Alphabet(Vec<String>);

impl Alphabet {
    pub fn new<S: Into<String>>(symbols: impl IntoIterator<Item = S>) -> Result<Self, ModelError> {
        let symbols: Vec<String> = symbols.into_iter().map(Into::into).collect();
        if symbols.is_empty() {
            return Err(ModelError::BadAlphabet("empty alphabet".into()));
        }
        let mut seen = BTreeSet::new();
        for s in &symbols {
            if !seen.insert(s) {
                return Err(ModelError::BadAlphabet(format!("duplicate symbol {s:?}")));
            }
        }
        Ok(Alphabet(symbols))
    }

    /// Symbols "0", "1", ..., "n-1".
    pub fn range(n: usize) -> Self {
        Alphabet((0..n.max(1)).map(|i| i.to_string()).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn symbol(&self, i: usize) -> &str {
        &self.0[i]
    }

    pub fn symbols(&self) -> &[String] {
        &self.0
    }

    pub fn index_of(&self, s: &str) -> Option<usize> {
        self.0.iter().position(|x| x == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SignalRole {
    /// Enters the cost (ω_0).
    Cost,
    /// Drives the ordering (ω_{s_0}).
    Order,
    Noise,
}

impl SignalRole {
    pub fn as_str(self) -> &'static str {
        match self {
            SignalRole::Cost => "cost",
            SignalRole::Order => "order",
            SignalRole::Noise => "noise",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cost" => Some(SignalRole::Cost),
            "order" => Some(SignalRole::Order),
            "noise" => Some(SignalRole::Noise),
            _ => None,
        }
    }

    /// Cost and order coordinates form the context that survives static reduction.
    pub fn is_context(self) -> bool {
        self != SignalRole::Noise
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Signal {
    pub name: String,
    pub role: SignalRole,
    pub alphabet: Alphabet,
}

/// Argument of a table: a signal coordinate or a DM's action (both 0-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Arg {
    Signal(usize),
    Action(usize),
}

/// Mixed-radix indexing with the first digit most significant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MixedRadix {
    sizes: Vec<usize>,
    len: usize,
}

impl MixedRadix {
    pub fn new(sizes: Vec<usize>) -> Self {
        let len = sizes.iter().product();
        MixedRadix { sizes, len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn index(&self, digits: &[usize]) -> usize {
        digits.iter().zip(&self.sizes).fold(0, |acc, (d, s)| acc * s + d)
    }

    pub fn decode(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.sizes.len()];
        for (o, s) in out.iter_mut().zip(&self.sizes).rev() {
            *o = index % s;
            index /= s;
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.len).map(|i| self.decode(i))
    }
}

/// A table declared over an argument list, with its rows before validation.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct TableSpec<T> {
    pub args: Vec<Arg>,
    pub rows: BTreeMap<Vec<usize>, T>,
}

/// Dense validated table over its declared arguments.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Table<T> {
    args: Vec<Arg>,
    radix: MixedRadix,
    values: Vec<T>,
}

impl<T> Table<T> {
    pub fn args(&self) -> &[Arg] {
        &self.args
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn radix(&self) -> &MixedRadix {
        &self.radix
    }

    pub fn row_index(&self, omega: &[usize], u: &[usize]) -> usize {
        self.args.iter().zip(self.radix.sizes()).fold(0, |acc, (a, s)| {
            let v = match *a {
                Arg::Signal(j) => omega[j],
                Arg::Action(j) => u[j],
            };
            acc * s + v
        })
    }

    pub fn get(&self, omega: &[usize], u: &[usize]) -> &T {
        &self.values[self.row_index(omega, u)]
    }

    pub fn depends_on_action(&self, dm: usize) -> bool {
        self.args.contains(&Arg::Action(dm))
    }
}

impl<T: Clone> Table<T> {
    fn to_spec(&self) -> TableSpec<T> {
        TableSpec {
            args: self.args.clone(),
            rows: self
                .radix
                .iter()
                .zip(&self.values)
                .map(|(k, v)| (k, v.clone()))
                .collect(),
        }
    }
}

/// Explicit generating family for an information field, kept to cross-check η.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventSpec {
    pub label: String,
    pub args: Vec<Arg>,
    pub members: BTreeSet<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DmSpec {
    pub actions: Alphabet,
    pub measurements: Alphabet,
    pub observation: TableSpec<usize>,
    pub events: Vec<EventSpec>,
}

/// A model as written, before validation. The prior is sparse.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelSpec {
    pub signals: Vec<Signal>,
    pub dms: Vec<DmSpec>,
    pub prior: BTreeMap<Vec<usize>, Rational>,
    pub cost: TableSpec<Rational>,
    pub ordering: Option<OrderingSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiagnosticKind {
    NormalizationError,
    NegativeWeight,
    MissingEntry,
    OutOfRange,
    BadArgument,
    DuplicateName,
    NegativeCost,
    InvalidOrdering,
    FieldMismatch,
    Empty,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub struct ValidationReport {
    pub diagnostics: Vec<Diagnostic>,
}

impl ValidationReport {
    pub fn has(&self, kind: DiagnosticKind) -> bool {
        self.diagnostics.iter().any(|d| d.kind == kind)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.diagnostics.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{:?}: {}", d.kind, d.message)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecisionMaker {
    pub actions: Alphabet,
    pub measurements: Alphabet,
    pub observation: Table<usize>,
    pub events: Vec<EventSpec>,
}

/// Validated finite intrinsic model.
#[derive(Debug)]
pub struct IntrinsicModel {
    signals: Vec<Signal>,
    dms: Vec<DecisionMaker>,
    prior: Vec<Rational>,
    cost: Table<Rational>,
    ordering: Option<OrderingFunction>,
    omega_space: MixedRadix,
    action_space: MixedRadix,
    obs_cache: OnceLock<Vec<u32>>,
    fields: OnceLock<(Arc<GroundSet>, Vec<PartitionField>)>,
}

impl Clone for IntrinsicModel {
    fn clone(&self) -> Self {
        IntrinsicModel {
            signals: self.signals.clone(),
            dms: self.dms.clone(),
            prior: self.prior.clone(),
            cost: self.cost.clone(),
            ordering: self.ordering.clone(),
            omega_space: self.omega_space.clone(),
            action_space: self.action_space.clone(),
            obs_cache: OnceLock::new(),
            fields: OnceLock::new(),
        }
    }
}

impl PartialEq for IntrinsicModel {
    fn eq(&self, other: &Self) -> bool {
        self.signals == other.signals
            && self.dms == other.dms
            && self.prior == other.prior
            && self.cost == other.cost
            && self.ordering == other.ordering
    }
}

fn arg_name(signals: &[Signal], a: Arg) -> String {
    match a {
        Arg::Signal(j) => signals.get(j).map_or(format!("signal#{j}"), |s| s.name.clone()),
        Arg::Action(j) => format!("u{}", j + 1),
    }
}

struct Checker<'a> {
    signals: &'a [Signal],
    dms: &'a [DmSpec],
    out: Vec<Diagnostic>,
}

impl Checker<'_> {
    fn push(&mut self, kind: DiagnosticKind, message: String) {
        self.out.push(Diagnostic { kind, message });
    }

    fn arg_size(&self, a: Arg) -> Option<usize> {
        match a {
            Arg::Signal(j) => self.signals.get(j).map(|s| s.alphabet.len()),
            Arg::Action(j) => self.dms.get(j).map(|d| d.actions.len()),
        }
    }

    fn radix(&mut self, what: &str, args: &[Arg]) -> Option<MixedRadix> {
        let mut sizes = Vec::new();
        let mut ok = true;
        for (i, &a) in args.iter().enumerate() {
            if args[..i].contains(&a) {
                self.push(DiagnosticKind::BadArgument, format!("{what}: argument {} repeated", arg_name(self.signals, a)));
                ok = false;
            }
            match self.arg_size(a) {
                Some(s) => sizes.push(s),
                None => {
                    self.push(DiagnosticKind::BadArgument, format!("{what}: unknown argument {a:?}"));
                    ok = false;
                }
            }
        }
        ok.then(|| MixedRadix::new(sizes))
    }

    fn dense<T: Clone>(&mut self, what: &str, spec: &TableSpec<T>) -> Option<Table<T>> {
        let radix = self.radix(what, &spec.args)?;
        let mut values = Vec::with_capacity(radix.len());
        let mut ok = true;
        for key in radix.iter() {
            match spec.rows.get(&key) {
                Some(v) => values.push(v.clone()),
                None => {
                    self.push(DiagnosticKind::MissingEntry, format!("{what}: row {key:?} is missing"));
                    ok = false;
                }
            }
        }
        for key in spec.rows.keys() {
            if key.len() != radix.sizes().len() || key.iter().zip(radix.sizes()).any(|(v, s)| v >= s) {
                self.push(DiagnosticKind::OutOfRange, format!("{what}: row {key:?} is outside the argument ranges"));
                ok = false;
            }
        }
        ok.then(|| Table { args: spec.args.clone(), radix, values })
    }
}

/// Checks every invariant and returns the dense model or one diagnostic per violation.
pub fn validate(spec: &ModelSpec) -> Result<IntrinsicModel, ValidationReport> {
    let mut ck = Checker { signals: &spec.signals, dms: &spec.dms, out: Vec::new() };
    if spec.dms.is_empty() {
        ck.push(DiagnosticKind::Empty, "model has no decision makers".into());
    }
    let mut names = BTreeSet::new();
    for s in &spec.signals {
        if !names.insert(s.name.as_str()) {
            ck.push(DiagnosticKind::DuplicateName, format!("signal {} declared twice", s.name));
        }
        let reserved = s.name.strip_prefix('u').is_some_and(|r| !r.is_empty() && r.bytes().all(|b| b.is_ascii_digit()));
        if reserved {
            ck.push(DiagnosticKind::DuplicateName, format!("signal name {} clashes with an action name", s.name));
        }
    }
    let omega_space = MixedRadix::new(spec.signals.iter().map(|s| s.alphabet.len()).collect());
    let action_space = MixedRadix::new(spec.dms.iter().map(|d| d.actions.len()).collect());

    // prior
    let mut prior = vec![Rational::zero(); omega_space.len()];
    let mut total = Rational::zero();
    for (key, w) in &spec.prior {
        if key.len() != omega_space.sizes().len() || key.iter().zip(omega_space.sizes()).any(|(v, s)| v >= s) {
            ck.push(DiagnosticKind::OutOfRange, format!("prior row {key:?} is outside the signal ranges"));
            continue;
        }
        if w.is_negative() {
            ck.push(DiagnosticKind::NegativeWeight, format!("prior row {key:?} has weight {w}"));
        }
        total += w;
        prior[omega_space.index(key)] = w.clone();
    }
    if !total.is_one() {
        ck.push(DiagnosticKind::NormalizationError, format!("prior sums to {total}, not 1"));
    }

    // measurements
    let mut dms = Vec::new();
    for (i, d) in spec.dms.iter().enumerate() {
        let what = format!("obs {}", i + 1);
        if let Some(t) = ck.dense(&what, &d.observation) {
            for (key, &v) in d.observation.rows.iter() {
                if v >= d.measurements.len() {
                    ck.push(DiagnosticKind::OutOfRange, format!("{what}: row {key:?} maps outside the measurement alphabet"));
                }
            }
            if t.values.iter().all(|&v| v < d.measurements.len()) {
                dms.push(DecisionMaker {
                    actions: d.actions.clone(),
                    measurements: d.measurements.clone(),
                    observation: t,
                    events: d.events.clone(),
                });
            }
        }
    }

    // cost
    for &a in &spec.cost.args {
        if let Arg::Signal(j) = a {
            if spec.signals.get(j).is_some_and(|s| !s.role.is_context()) {
                ck.push(
                    DiagnosticKind::BadArgument,
                    format!("cost depends on noise signal {}", spec.signals[j].name),
                );
            }
        }
    }
    let cost = ck.dense("cost", &spec.cost);
    for (key, v) in spec.cost.rows.iter() {
        if v.is_negative() {
            ck.push(DiagnosticKind::NegativeCost, format!("cost row {key:?} is {v}"));
        }
    }

    let mut ordering = None;
    if let Some(o) = &spec.ordering {
        match OrderingFunction::from_spec(o, &spec.signals, &omega_space, &action_space) {
            Ok(f) => ordering = Some(f),
            Err(msgs) => {
                for m in msgs {
                    ck.push(DiagnosticKind::InvalidOrdering, m);
                }
            }
        }
    }

    if !ck.out.is_empty() || dms.len() != spec.dms.len() {
        return Err(ValidationReport { diagnostics: ck.out });
    }
    let model = IntrinsicModel {
        signals: spec.signals.clone(),
        dms,
        prior,
        cost: cost.expect("cost validated"),
        ordering,
        omega_space,
        action_space,
        obs_cache: OnceLock::new(),
        fields: OnceLock::new(),
    };

    // explicit information-field families must agree with η
    let mut out = Vec::new();
    for (i, d) in model.dms.iter().enumerate() {
        if d.events.is_empty() {
            continue;
        }
        let ground = model.ground();
        let mut family = Vec::new();
        for ev in &d.events {
            let mut bad = false;
            for &a in &ev.args {
                let ok = match a {
                    Arg::Signal(j) => j < model.signals.len(),
                    Arg::Action(j) => j < model.n_dms(),
                };
                bad |= !ok;
            }
            if bad {
                out.push(Diagnostic {
                    kind: DiagnosticKind::BadArgument,
                    message: format!("event {} of DM {} has an unknown argument", ev.label, i + 1),
                });
                continue;
            }
            let members: Vec<bool> = ground
                .elements()
                .iter()
                .map(|e| {
                    let key: Vec<usize> = ev
                        .args
                        .iter()
                        .map(|a| match *a {
                            Arg::Signal(j) => e[j],
                            Arg::Action(j) => e[model.signals.len() + j],
                        })
                        .collect();
                    ev.members.contains(&key)
                })
                .collect();
            family.push(members);
        }
        let generated = PartitionField::generated_by(ground, &family).expect("family sized to ground");
        if &generated != model.information_field(i) {
            out.push(Diagnostic {
                kind: DiagnosticKind::FieldMismatch,
                message: format!(
                    "events of DM {} generate {} atoms but the measurement map induces {}",
                    i + 1,
                    generated.n_atoms(),
                    model.information_field(i).n_atoms()
                ),
            });
        }
    }
    if out.is_empty() {
        Ok(model)
    } else {
        Err(ValidationReport { diagnostics: out })
    }
}

impl IntrinsicModel {
    pub fn n_dms(&self) -> usize {
        self.dms.len()
    }

    pub fn signals(&self) -> &[Signal] {
        &self.signals
    }

    pub fn dms(&self) -> &[DecisionMaker] {
        &self.dms
    }

    pub fn dm(&self, i: usize) -> &DecisionMaker {
        &self.dms[i]
    }

    pub fn prior(&self) -> &[Rational] {
        &self.prior
    }

    pub fn cost_table(&self) -> &Table<Rational> {
        &self.cost
    }

    pub fn ordering(&self) -> Option<&OrderingFunction> {
        self.ordering.as_ref()
    }

    pub fn with_ordering(mut self, ordering: Option<OrderingFunction>) -> Self {
        self.ordering = ordering;
        self
    }

    pub fn omega_space(&self) -> &MixedRadix {
        &self.omega_space
    }

    pub fn action_space(&self) -> &MixedRadix {
        &self.action_space
    }

    /// Indices of signal tuples with positive prior mass.
    pub fn support(&self) -> Vec<usize> {
        (0..self.prior.len()).filter(|&w| !self.prior[w].is_zero()).collect()
    }

    /// Signal tuples in the requested scope.
    pub fn scope(&self, scope: Scope) -> Vec<usize> {
        match scope {
            Scope::Support => self.support(),
            Scope::All => (0..self.omega_space.len()).collect(),
        }
    }

    pub fn context_signals(&self) -> Vec<usize> {
        (0..self.signals.len()).filter(|&j| self.signals[j].role.is_context()).collect()
    }

    pub fn signal_index(&self, name: &str) -> Option<usize> {
        self.signals.iter().position(|s| s.name == name)
    }

    pub fn eta(&self, dm: usize, omega: &[usize], u: &[usize]) -> usize {
        *self.dms[dm].observation.get(omega, u)
    }

    pub fn cost(&self, omega: &[usize], u: &[usize]) -> &Rational {
        self.cost.get(omega, u)
    }

    fn obs_cache(&self) -> &[u32] {
        self.obs_cache.get_or_init(|| {
            let n = self.n_dms();
            let mut out = Vec::with_capacity(self.omega_space.len() * self.action_space.len() * n);
            for w in self.omega_space.iter() {
                for u in self.action_space.iter() {
                    for i in 0..n {
                        out.push(self.eta(i, &w, &u) as u32);
                    }
                }
            }
            out
        })
    }

    /// η^i by signal and joint-action index, from a precomputed table.
    pub fn eta_at(&self, dm: usize, omega: usize, u: usize) -> usize {
        let n = self.n_dms();
        self.obs_cache()[(omega * self.action_space.len() + u) * n + dm] as usize
    }

    /// Ground set Ω × ∏U with coordinates named after the signals and u1..uN.
    pub fn ground(&self) -> &Arc<GroundSet> {
        &self.fields().0
    }

    /// 𝒥^i = σ(η^i) over Ω × ∏U.
    pub fn information_field(&self, dm: usize) -> &PartitionField {
        &self.fields().1[dm]
    }

    fn fields(&self) -> &(Arc<GroundSet>, Vec<PartitionField>) {
        self.fields.get_or_init(|| {
            let mut coords: Vec<Coordinate> = self
                .signals
                .iter()
                .map(|s| Coordinate::new(s.name.clone(), s.alphabet.len()))
                .collect();
            coords.extend(self.dms.iter().enumerate().map(|(i, d)| Coordinate::new(format!("u{}", i + 1), d.actions.len())));
            let ground = Arc::new(GroundSet::product(coords));
            let nu = self.action_space.len();
            let fields = (0..self.n_dms())
                .map(|i| {
                    PartitionField::from_map(&ground, |e, _| Some(self.eta_at(i, e / nu, e % nu)))
                        .expect("total map")
                })
                .collect();
            (ground, fields)
        })
    }

    /// Ground index of (ω, u) given by their indices.
    pub fn ground_index(&self, omega: usize, u: usize) -> usize {
        omega * self.action_space.len() + u
    }

    pub fn to_spec(&self) -> ModelSpec {
        ModelSpec {
            signals: self.signals.clone(),
            dms: self
                .dms
                .iter()
                .map(|d| DmSpec {
                    actions: d.actions.clone(),
                    measurements: d.measurements.clone(),
                    observation: d.observation.to_spec(),
                    events: d.events.clone(),
                })
                .collect(),
            prior: self
                .omega_space
                .iter()
                .zip(&self.prior)
                .filter(|(_, p)| !p.is_zero())
                .map(|(k, p)| (k, p.clone()))
                .collect(),
            cost: self.cost.to_spec(),
            ordering: self.ordering.as_ref().map(|o| o.to_spec()),
        }
    }

    /// Fixed points of u^i = γ^i(η^i(ω, u)) as joint-action indices, ascending.
    pub fn solve_closed_loop(&self, policy: &PolicyProfile, omega: usize) -> Vec<usize> {
        let n = self.n_dms();
        let mut out = Vec::new();
        'u: for ui in 0..self.action_space.len() {
            let u = self.action_space.decode(ui);
            for i in 0..n {
                if policy.tables[i][self.eta_at(i, omega, ui)] != u[i] {
                    continue 'u;
                }
            }
            out.push(ui);
        }
        out
    }

    /// J(γ) over the prior support.
    pub fn expected_cost(&self, policy: &PolicyProfile) -> Result<Rational, ModelError> {
        policy.check_shape(self)?;
        let mut total = Rational::zero();
        for w in self.support() {
            let sol = self.solve_closed_loop(policy, w);
            if sol.len() != 1 {
                return Err(ModelError::NotSolvable { omega: self.omega_space.decode(w), solutions: sol.len() });
            }
            let omega = self.omega_space.decode(w);
            let u = self.action_space.decode(sol[0]);
            total += &self.prior[w] * self.cost(&omega, &u);
        }
        Ok(total)
    }

    /// Space of deterministic policy profiles.
    pub fn policy_space(&self) -> PolicySpace {
        PolicySpace::new(
            self.dms.iter().map(|d| d.actions.len()).collect(),
            self.dms.iter().map(|d| d.measurements.len()).collect(),
        )
    }
}

/// Which signal tuples a property quantifies over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Scope {
    /// Positive prior mass only.
    #[default]
    Support,
    /// Every signal tuple (strict mode).
    All,
}

/// γ: one action table per DM, indexed by measurement symbol.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PolicyProfile {
    pub tables: Vec<Vec<usize>>,
}

impl PolicyProfile {
    pub fn constant(model: &IntrinsicModel, action: usize) -> Self {
        PolicyProfile {
            tables: model.dms().iter().map(|d| vec![action.min(d.actions.len() - 1); d.measurements.len()]).collect(),
        }
    }

    pub fn check_shape(&self, model: &IntrinsicModel) -> Result<(), ModelError> {
        if self.tables.len() != model.n_dms() {
            return Err(ModelError::PolicyShape(format!("{} tables for {} DMs", self.tables.len(), model.n_dms())));
        }
        for (i, (t, d)) in self.tables.iter().zip(model.dms()).enumerate() {
            if t.len() != d.measurements.len() || t.iter().any(|&a| a >= d.actions.len()) {
                return Err(ModelError::PolicyShape(format!("table of DM {} does not map its alphabet", i + 1)));
            }
        }
        Ok(())
    }
}

/// Mixed-radix enumeration of Γ. DM 1 is most significant and, within a DM,
/// measurement symbol 0 is most significant, so index order is the
/// lexicographic order of the flattened tables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolicySpace {
    actions: Vec<usize>,
    measurements: Vec<usize>,
}

impl PolicySpace {
    pub fn new(actions: Vec<usize>, measurements: Vec<usize>) -> Self {
        PolicySpace { actions, measurements }
    }

    /// |Γ|, or None when it does not fit in u128.
    pub fn size(&self) -> Option<u128> {
        let mut n: u128 = 1;
        for (a, m) in self.actions.iter().zip(&self.measurements) {
            for _ in 0..*m {
                n = n.checked_mul(*a as u128)?;
            }
        }
        Some(n)
    }

    pub fn shape(&self) -> (&[usize], &[usize]) {
        (&self.actions, &self.measurements)
    }

    pub fn policy_at(&self, mut index: u128) -> PolicyProfile {
        let mut tables: Vec<Vec<usize>> = self.measurements.iter().map(|&m| vec![0; m]).collect();
        for (i, t) in tables.iter_mut().enumerate().rev() {
            let a = self.actions[i] as u128;
            for slot in t.iter_mut().rev() {
                *slot = (index % a) as usize;
                index /= a;
            }
        }
        PolicyProfile { tables }
    }

    pub fn index_of(&self, policy: &PolicyProfile) -> u128 {
        let mut idx: u128 = 0;
        for (i, t) in policy.tables.iter().enumerate() {
            for &v in t {
                idx = idx * self.actions[i] as u128 + v as u128;
            }
        }
        idx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n.into(), d.into())
    }

    #[test]
    fn chance_ordered_fixture_validates() {
        let m = fixtures::example5();
        assert_eq!(m.n_dms(), 3);
        assert_eq!(m.support().len(), 32);
        assert_eq!(m.policy_space().size(), Some(512));
    }

    #[test]
    fn prior_short_of_one_is_a_normalization_error() {
        let mut spec = fixtures::example5().to_spec();
        let first = spec.prior.keys().next().unwrap().clone();
        spec.prior.remove(&first);
        let err = validate(&spec).unwrap_err();
        assert!(err.has(DiagnosticKind::NormalizationError), "{err}");
    }

    #[test]
    fn missing_observation_row() {
        let mut spec = fixtures::example5().to_spec();
        let first = spec.dms[0].observation.rows.keys().next().unwrap().clone();
        spec.dms[0].observation.rows.remove(&first);
        let err = validate(&spec).unwrap_err();
        assert!(err.has(DiagnosticKind::MissingEntry));
        assert!(err.to_string().contains("obs 1"));
    }

    #[test]
    fn one_diagnostic_per_violation() {
        let mut spec = fixtures::example5().to_spec();
        spec.prior.values_mut().for_each(|p| *p = r(1, 31));
        let k = spec.cost.rows.keys().next().unwrap().clone();
        spec.cost.rows.insert(k, r(-1, 1));
        let err = validate(&spec).unwrap_err();
        assert!(err.has(DiagnosticKind::NormalizationError));
        assert!(err.has(DiagnosticKind::NegativeCost));
    }

    #[test]
    fn cost_may_not_read_noise() {
        let mut spec = fixtures::example5().to_spec();
        let w1 = spec.signals.iter().position(|s| s.name == "w1").unwrap();
        let mut rows = BTreeMap::new();
        for v in 0..2 {
            rows.insert(vec![v], Rational::zero());
        }
        spec.cost = TableSpec { args: vec![Arg::Signal(w1)], rows };
        assert!(validate(&spec).unwrap_err().has(DiagnosticKind::BadArgument));
    }

    #[test]
    fn example2_copy_policy_has_two_fixed_points() {
        let m = fixtures::example2();
        let copy = fixtures::example2_copy_policy(&m);
        let sol = m.solve_closed_loop(&copy, 0);
        let tuples: Vec<Vec<usize>> = sol.iter().map(|&u| m.action_space().decode(u)).collect();
        assert_eq!(tuples, vec![vec![0, 0], vec![1, 1]]);
        assert!(matches!(m.expected_cost(&copy), Err(ModelError::NotSolvable { .. })));
    }

    #[test]
    fn single_dm_reading_omega_is_always_solvable() {
        let m = fixtures::single_dm_identity();
        for idx in 0..m.policy_space().size().unwrap() {
            let g = m.policy_space().policy_at(idx);
            for w in 0..m.omega_space().len() {
                assert_eq!(m.solve_closed_loop(&g, w).len(), 1);
            }
        }
    }

    #[test]
    fn chance_ordered_zero_policy() {
        let m = fixtures::example5();
        let zero = PolicyProfile::constant(&m, 0);
        for w in 0..32 {
            assert_eq!(m.solve_closed_loop(&zero, w), vec![0]);
        }
        assert_eq!(m.expected_cost(&zero).unwrap(), r(1, 2));
    }

    #[test]
    fn zero_cost_table_gives_zero() {
        let mut spec = fixtures::example5().to_spec();
        spec.cost.rows.values_mut().for_each(|v| *v = Rational::zero());
        let m = validate(&spec).unwrap();
        let size = m.policy_space().size().unwrap();
        for idx in (0..size).step_by(37) {
            assert!(m.expected_cost(&m.policy_space().policy_at(idx)).unwrap().is_zero());
        }
    }

    #[test]
    fn policy_index_round_trip() {
        let space = PolicySpace::new(vec![2, 3], vec![3, 2]);
        assert_eq!(space.size(), Some(8 * 9));
        for idx in 0..72 {
            assert_eq!(space.index_of(&space.policy_at(idx)), idx);
        }
        assert_eq!(space.policy_at(1).tables, vec![vec![0, 0, 0], vec![0, 1]]);
        assert_eq!(space.policy_at(9).tables, vec![vec![0, 0, 1], vec![0, 0]]);
    }

    #[test]
    fn relabeling_measurements_preserves_cost() {
        // reverse the measurement alphabet of DM 1 and relabel the policy
        let m = fixtures::example5();
        let mut spec = m.to_spec();
        let k = spec.dms[0].measurements.len();
        let syms: Vec<String> = spec.dms[0].measurements.symbols().iter().rev().cloned().collect();
        spec.dms[0].measurements = Alphabet::new(syms).unwrap();
        spec.dms[0].observation.rows.values_mut().for_each(|v| *v = k - 1 - *v);
        spec.dms[0].events.clear();
        let m2 = validate(&spec).unwrap();
        for idx in (0..512).step_by(7) {
            let g = m.policy_space().policy_at(idx);
            let mut g2 = g.clone();
            g2.tables[0].reverse();
            assert_eq!(m.expected_cost(&g).unwrap(), m2.expected_cost(&g2).unwrap());
        }
    }
}
