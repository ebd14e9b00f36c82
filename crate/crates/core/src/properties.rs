//! Deciders for the information-structure properties and the implication audit.
//!
//! All checks quantify over signal tuples in a [`Scope`] (the prior support by
//! default) and over every joint action. Two facts keep the searches small:
//!
//! * whether DM i's measurement is settled by a set of fixed actions can only
//!   become "yes" as more actions get fixed, so picking the lowest-indexed
//!   eligible DM never closes off an ordering that would have succeeded;
//! * at a fixed ω a policy matters only through its values on the symbols
//!   that η can produce at that ω, so policy searches run per ω.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{IntrinsicModel, PolicyProfile, Scope, SignalRole};
use crate::ordering::{FlatOrdering, OrderingFunction, OrderingTree, TreeKey};
use crate::sigma::PartitionField;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PropertyError {
    #[error("the model declares no ordering function")]
    MissingOrdering,
    #[error("the ordering is not causal for this model")]
    RequiresCausality,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Property {
    Sm,
    Df,
    Ci,
    C,
    Rcs,
}

impl Property {
    pub fn name(self) -> &'static str {
        match self {
            Property::Sm => "SM",
            Property::Df => "DF",
            Property::Ci => "CI",
            Property::C => "C",
            Property::Rcs => "RCS",
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Witness {
    None,
    Ordering(OrderingFunction),
    /// Under `policy` the closed loop at ω has the listed solutions (not exactly one).
    ClosedLoop { policy: PolicyProfile, omega: usize, solutions: Vec<usize> },
    /// Under `policy` the forward construction at ω stalls after `acted` (dm, action) pairs.
    Deadlock { policy: PolicyProfile, omega: usize, acted: Vec<(usize, usize)> },
    /// At outcome (ω, u) no DM outside `acted` has a measurement settled by the acted DMs.
    Outcome { omega: usize, u: usize, acted: Vec<usize> },
    /// Membership in the prefix event differs between two outcomes that agree on
    /// ω and the earlier actions. Pairs are (ω index, u index).
    Prefix { prefix: Vec<usize>, inside: (usize, usize), outside: (usize, usize) },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PropertyReport {
    pub property: Property,
    pub verdict: bool,
    pub witness: Witness,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CheckOptions {
    pub scope: Scope,
}

/// Precomputed joint actions, reused by the pointwise searches.
struct Actions {
    tuples: Vec<Vec<usize>>,
}

impl Actions {
    fn new(model: &IntrinsicModel) -> Self {
        Actions { tuples: model.action_space().iter().collect() }
    }

    /// Ground indices of (ω, u') over all u' agreeing with `fixed`.
    fn completions(&self, model: &IntrinsicModel, omega: usize, fixed: &[(usize, usize)]) -> Vec<usize> {
        self.tuples
            .iter()
            .enumerate()
            .filter(|(_, u)| fixed.iter().all(|&(d, a)| u[d] == a))
            .map(|(ui, _)| model.ground_index(omega, ui))
            .collect()
    }
}

/// True iff η^i at ω is settled by the fixed actions: the completions lie in
/// one atom of 𝒥^i.
fn settled(model: &IntrinsicModel, acts: &Actions, dm: usize, omega: usize, fixed: &[(usize, usize)]) -> bool {
    model.information_field(dm).constant_on(&acts.completions(model, omega, fixed))
}

// ---------------------------------------------------------------- SM

/// The first pair of joint actions a < b at which two fixed points can
/// coexist without contradicting `fixed`: no DM sees the same symbol at both
/// while acting differently, and no required entry clashes with a fixed one.
fn double_fixed_point(
    model: &IntrinsicModel,
    acts: &Actions,
    omega: usize,
    fixed: &BTreeMap<(usize, usize), usize>,
) -> Option<Vec<((usize, usize), usize)>> {
    let n = model.n_dms();
    let nu = model.action_space().len();
    let obs: Vec<Vec<usize>> = (0..nu).map(|u| (0..n).map(|i| model.eta_at(i, omega, u)).collect()).collect();
    for a in 0..nu {
        'b: for b in a + 1..nu {
            let mut need = Vec::with_capacity(2 * n);
            for i in 0..n {
                if obs[a][i] == obs[b][i] && acts.tuples[a][i] != acts.tuples[b][i] {
                    continue 'b;
                }
                need.push(((i, obs[a][i]), acts.tuples[a][i]));
                need.push(((i, obs[b][i]), acts.tuples[b][i]));
            }
            if need.iter().all(|(k, v)| fixed.get(k).is_none_or(|f| f == v)) {
                return Some(need);
            }
        }
    }
    None
}

pub fn check_sm(model: &IntrinsicModel, opts: CheckOptions) -> PropertyReport {
    let n = model.n_dms();
    let nu = model.action_space().len();
    let acts = Actions::new(model);
    let scope = model.scope(opts.scope);
    for (k, &w) in scope.iter().enumerate() {
        let obs: Vec<Vec<usize>> = (0..nu).map(|u| (0..n).map(|i| model.eta_at(i, w, u)).collect()).collect();
        if let Some(need) = double_fixed_point(model, &acts, w, &BTreeMap::new()) {
            // extend greedily so the witness has several solutions wherever it can
            let mut fixed: BTreeMap<(usize, usize), usize> = need.into_iter().collect();
            for &w2 in &scope[k + 1..] {
                if let Some(more) = double_fixed_point(model, &acts, w2, &fixed) {
                    fixed.extend(more);
                }
            }
            let mut policy = PolicyProfile::constant(model, 0);
            for ((i, y), a) in fixed {
                policy.tables[i][y] = a;
            }
            let solutions = model.solve_closed_loop(&policy, w);
            return PropertyReport {
                property: Property::Sm,
                verdict: false,
                witness: Witness::ClosedLoop { policy, omega: w, solutions },
            };
        }
        if let Some(policy) = policy_without_fixed_point(model, &acts, &obs) {
            let solutions = model.solve_closed_loop(&policy, w);
            return PropertyReport {
                property: Property::Sm,
                verdict: false,
                witness: Witness::ClosedLoop { policy, omega: w, solutions },
            };
        }
    }
    PropertyReport { property: Property::Sm, verdict: true, witness: Witness::None }
}

/// Backtracking over the policy values on the symbols visible at one ω,
/// looking for an assignment under which no joint action is a fixed point.
fn policy_without_fixed_point(model: &IntrinsicModel, acts: &Actions, obs: &[Vec<usize>]) -> Option<PolicyProfile> {
    let n = model.n_dms();
    let mut vars: Vec<(usize, usize)> = Vec::new();
    for i in 0..n {
        let mut ys: Vec<usize> = obs.iter().map(|o| o[i]).collect();
        ys.sort_unstable();
        ys.dedup();
        vars.extend(ys.into_iter().map(|y| (i, y)));
    }
    let var_of: HashMap<(usize, usize), usize> = vars.iter().enumerate().map(|(k, &v)| (v, k)).collect();
    // for each joint action, the variable index each DM's condition reads
    let reads: Vec<Vec<usize>> = obs.iter().map(|o| (0..n).map(|i| var_of[&(i, o[i])]).collect()).collect();
    let mut assign: Vec<Option<usize>> = vec![None; vars.len()];

    fn confirmed(reads: &[Vec<usize>], acts: &Actions, assign: &[Option<usize>]) -> bool {
        reads.iter().zip(&acts.tuples).any(|(r, u)| r.iter().enumerate().all(|(i, &v)| assign[v] == Some(u[i])))
    }

    fn search(
        k: usize,
        vars: &[(usize, usize)],
        sizes: &[usize],
        reads: &[Vec<usize>],
        acts: &Actions,
        assign: &mut Vec<Option<usize>>,
    ) -> bool {
        if confirmed(reads, acts, assign) {
            return false;
        }
        if k == vars.len() {
            return true;
        }
        for a in 0..sizes[vars[k].0] {
            assign[k] = Some(a);
            if search(k + 1, vars, sizes, reads, acts, assign) {
                return true;
            }
        }
        assign[k] = None;
        false
    }

    let sizes: Vec<usize> = model.dms().iter().map(|d| d.actions.len()).collect();
    if !search(0, &vars, &sizes, &reads, acts, &mut assign) {
        return None;
    }
    let mut policy = PolicyProfile::constant(model, 0);
    for (k, &(i, y)) in vars.iter().enumerate() {
        policy.tables[i][y] = assign[k].expect("complete assignment");
    }
    Some(policy)
}

// ---------------------------------------------------------------- DF

/// Forward construction under a fixed policy: repeatedly let the
/// lowest-indexed DM whose measurement is settled act. Returns the acted
/// pairs and whether every DM acted.
pub fn forward_under_policy(model: &IntrinsicModel, policy: &PolicyProfile, omega: usize) -> (Vec<(usize, usize)>, bool) {
    let acts = Actions::new(model);
    let n = model.n_dms();
    let mut fixed: Vec<(usize, usize)> = Vec::new();
    while fixed.len() < n {
        let next = (0..n).find(|&i| !fixed.iter().any(|f| f.0 == i) && settled(model, &acts, i, omega, &fixed));
        match next {
            None => return (fixed, false),
            Some(i) => {
                let ui = acts.completions(model, omega, &fixed)[0] % model.action_space().len();
                let y = model.eta_at(i, omega, ui);
                fixed.push((i, policy.tables[i][y]));
            }
        }
    }
    (fixed, true)
}

pub fn check_df(model: &IntrinsicModel, opts: CheckOptions) -> PropertyReport {
    let acts = Actions::new(model);
    for w in model.scope(opts.scope) {
        let mut partial: Vec<BTreeMap<usize, usize>> = vec![BTreeMap::new(); model.n_dms()];
        if let Some(acted) = df_search(model, &acts, w, &mut Vec::new(), &mut partial) {
            let mut policy = PolicyProfile::constant(model, 0);
            for (i, t) in partial.iter().enumerate() {
                for (&y, &a) in t {
                    policy.tables[i][y] = a;
                }
            }
            return PropertyReport {
                property: Property::Df,
                verdict: false,
                witness: Witness::Deadlock { policy, omega: w, acted },
            };
        }
    }
    PropertyReport { property: Property::Df, verdict: true, witness: Witness::None }
}

/// Explores every policy's forward run at ω, branching only on policy values
/// the run actually reads. Returns the stalled prefix if some policy deadlocks;
/// `partial` then holds the policy values that produce it.
fn df_search(
    model: &IntrinsicModel,
    acts: &Actions,
    omega: usize,
    fixed: &mut Vec<(usize, usize)>,
    partial: &mut Vec<BTreeMap<usize, usize>>,
) -> Option<Vec<(usize, usize)>> {
    let n = model.n_dms();
    if fixed.len() == n {
        return None;
    }
    let i = (0..n).find(|&i| !fixed.iter().any(|f| f.0 == i) && settled(model, acts, i, omega, fixed));
    let Some(i) = i else { return Some(fixed.clone()) };
    let ui = acts.completions(model, omega, fixed)[0] % model.action_space().len();
    let y = model.eta_at(i, omega, ui);
    let choices: Vec<usize> = match partial[i].get(&y) {
        Some(&a) => vec![a],
        None => (0..model.dm(i).actions.len()).collect(),
    };
    let fresh = !partial[i].contains_key(&y);
    for a in choices {
        if fresh {
            partial[i].insert(y, a);
        }
        fixed.push((i, a));
        let r = df_search(model, acts, omega, fixed, partial);
        fixed.pop();
        if r.is_some() {
            return r;
        }
    }
    if fresh {
        partial[i].remove(&y);
    }
    None
}

// ---------------------------------------------------------------- CI

/// Greedy pointwise ordering at (ω, u): at each step the lowest-indexed DM
/// whose information is settled by the earlier actions. Err carries the
/// DMs that did act before the construction stalled.
pub fn pointwise_order(model: &IntrinsicModel, omega: usize, u: usize) -> Result<Vec<usize>, Vec<usize>> {
    let acts = Actions::new(model);
    pointwise_with(model, &acts, omega, u)
}

fn pointwise_with(model: &IntrinsicModel, acts: &Actions, omega: usize, u: usize) -> Result<Vec<usize>, Vec<usize>> {
    let n = model.n_dms();
    let ut = &acts.tuples[u];
    let mut order = Vec::with_capacity(n);
    let mut fixed = Vec::with_capacity(n);
    while order.len() < n {
        match (0..n).find(|&i| !order.contains(&i) && settled(model, acts, i, omega, &fixed)) {
            Some(i) => {
                order.push(i);
                fixed.push((i, ut[i]));
            }
            None => return Err(order),
        }
    }
    Ok(order)
}

pub fn check_ci(model: &IntrinsicModel, opts: CheckOptions) -> PropertyReport {
    let acts = Actions::new(model);
    let nu = model.action_space().len();
    let n = model.n_dms();
    let in_scope: Vec<bool> = {
        let mut v = vec![false; model.omega_space().len()];
        for w in model.scope(opts.scope) {
            v[w] = true;
        }
        v
    };
    let mut perms = Vec::with_capacity(model.omega_space().len() * nu);
    for w in 0..model.omega_space().len() {
        for u in 0..nu {
            match pointwise_with(model, &acts, w, u) {
                Ok(p) => perms.push(p),
                Err(acted) if in_scope[w] => {
                    return PropertyReport {
                        property: Property::Ci,
                        verdict: false,
                        witness: Witness::Outcome { omega: w, u, acted },
                    }
                }
                Err(_) => perms.push((0..n).collect()),
            }
        }
    }
    let flat = FlatOrdering::new(model.omega_space().clone(), model.action_space().clone(), perms);
    PropertyReport { property: Property::Ci, verdict: true, witness: Witness::Ordering(OrderingFunction::Flat(flat)) }
}

/// Checks the pointwise condition for a given ordering at every in-scope outcome.
pub fn ordering_is_implementable(model: &IntrinsicModel, psi: &OrderingFunction, scope: Scope) -> bool {
    let acts = Actions::new(model);
    let nu = model.action_space().len();
    model.scope(scope).into_iter().all(|w| {
        (0..nu).all(|u| {
            let s = psi.order(w, u);
            let mut fixed = Vec::new();
            s.iter().all(|&i| {
                let ok = settled(model, &acts, i, w, &fixed);
                fixed.push((i, acts.tuples[u][i]));
                ok
            })
        })
    })
}

// ---------------------------------------------------------------- C

/// Searches for a causal tree ψ_k(ω_D, u^{s_1}..u^{s_{k-1}}) over the smallest
/// set D of signal coordinates, trying ordering coordinates first.
pub fn check_c(model: &IntrinsicModel, opts: CheckOptions) -> PropertyReport {
    let acts = Actions::new(model);
    let scope = model.scope(opts.scope);
    let mut coords: Vec<usize> = (0..model.signals().len()).collect();
    let rank = |r: SignalRole| match r {
        SignalRole::Order => 0,
        SignalRole::Cost => 1,
        SignalRole::Noise => 2,
    };
    coords.sort_by_key(|&j| (rank(model.signals()[j].role), j));
    for size in 0..=coords.len() {
        for subset in combinations(&coords, size) {
            let mut args = subset.clone();
            args.sort_unstable();
            if let Some(tree) = causal_tree(model, &acts, &scope, &args) {
                return PropertyReport {
                    property: Property::C,
                    verdict: true,
                    witness: Witness::Ordering(OrderingFunction::Tree(tree)),
                };
            }
        }
    }
    // no causal tree even on the full signal tuple; report a pointwise obstruction
    let witness = match check_ci(model, opts).witness {
        w @ Witness::Outcome { .. } => w,
        _ => Witness::None,
    };
    PropertyReport { property: Property::C, verdict: false, witness }
}

fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for (i, &x) in items.iter().enumerate() {
        for mut rest in combinations(&items[i + 1..], k - 1) {
            rest.insert(0, x);
            out.push(rest);
        }
    }
    out
}

fn causal_tree(model: &IntrinsicModel, acts: &Actions, scope: &[usize], args: &[usize]) -> Option<OrderingTree> {
    let arg_space = crate::model::MixedRadix::new(args.iter().map(|&j| model.signals()[j].alphabet.len()).collect());
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); arg_space.len()];
    for &w in scope {
        let digits = model.omega_space().decode(w);
        let key: Vec<usize> = args.iter().map(|&j| digits[j]).collect();
        groups[arg_space.index(&key)].push(w);
    }
    let mut nodes = BTreeMap::new();
    for (v, group) in groups.iter().enumerate() {
        let mut memo: HashMap<Vec<(usize, usize)>, Option<usize>> = HashMap::new();
        if !feasible(model, acts, group, &mut Vec::new(), &mut memo) {
            return None;
        }
        let signals = arg_space.decode(v);
        collect_nodes(model, &signals, &mut Vec::new(), &memo, &mut nodes);
    }
    Some(OrderingTree::new(model.omega_space().clone(), model.action_space().clone(), args.to_vec(), nodes))
}

/// AND-OR search: some DM is settled for every ω of the group, and every
/// action it may take leads to a feasible node.
fn feasible(
    model: &IntrinsicModel,
    acts: &Actions,
    group: &[usize],
    prefix: &mut Vec<(usize, usize)>,
    memo: &mut HashMap<Vec<(usize, usize)>, Option<usize>>,
) -> bool {
    let n = model.n_dms();
    if prefix.len() == n {
        return true;
    }
    if let Some(r) = memo.get(prefix.as_slice()) {
        return r.is_some();
    }
    let mut choice = None;
    for i in 0..n {
        if prefix.iter().any(|p| p.0 == i) {
            continue;
        }
        if !group.iter().all(|&w| settled(model, acts, i, w, prefix)) {
            continue;
        }
        let ok = (0..model.dm(i).actions.len()).all(|a| {
            prefix.push((i, a));
            let r = feasible(model, acts, group, prefix, memo);
            prefix.pop();
            r
        });
        if ok {
            choice = Some(i);
            break;
        }
    }
    memo.insert(prefix.clone(), choice);
    choice.is_some()
}

fn collect_nodes(
    model: &IntrinsicModel,
    signals: &[usize],
    prefix: &mut Vec<(usize, usize)>,
    memo: &HashMap<Vec<(usize, usize)>, Option<usize>>,
    nodes: &mut BTreeMap<TreeKey, usize>,
) {
    if prefix.len() == model.n_dms() {
        return;
    }
    let dm = memo[prefix.as_slice()].expect("feasible node");
    nodes.insert(TreeKey { signals: signals.to_vec(), prefix: prefix.clone() }, dm);
    for a in 0..model.dm(dm).actions.len() {
        prefix.push((dm, a));
        collect_nodes(model, signals, prefix, memo, nodes);
        prefix.pop();
    }
}

/// Whether ψ is causal for the model: the prefix events are determined by ω
/// and earlier actions, and each acting DM's measurement is settled on its
/// prefix event by those actions.
pub fn is_causal_ordering(model: &IntrinsicModel, psi: &OrderingFunction, scope: Scope) -> bool {
    if !check_rcs(model, psi, CheckOptions { scope }).verdict {
        return false;
    }
    let acts = Actions::new(model);
    let nu = model.action_space().len();
    let flat = psi.to_flat();
    for w in model.scope(scope) {
        for u in 0..nu {
            let s = flat.perm(w, u);
            for k in 0..s.len() {
                let subset: Vec<usize> = (0..nu)
                    .filter(|&v| {
                        s[..k].iter().all(|&d| acts.tuples[v][d] == acts.tuples[u][d]) && flat.perm(w, v)[..=k] == s[..=k]
                    })
                    .map(|v| model.ground_index(w, v))
                    .collect();
                if !model.information_field(s[k]).constant_on(&subset) {
                    return false;
                }
            }
        }
    }
    true
}

// ---------------------------------------------------------------- RCS

pub fn check_rcs(model: &IntrinsicModel, psi: &OrderingFunction, opts: CheckOptions) -> PropertyReport {
    let n = model.n_dms();
    let nu = model.action_space().len();
    let ground = model.ground();
    let flat = psi.to_flat();
    let subset: Vec<usize> = model
        .scope(opts.scope)
        .into_iter()
        .flat_map(|w| (0..nu).map(move |u| w * nu + u))
        .collect();
    let mut prefixes: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..n {
        let mut next = Vec::new();
        for p in &prefixes {
            for i in 0..n {
                if !p.contains(&i) {
                    let mut q = p.clone();
                    q.push(i);
                    next.push(q);
                }
            }
        }
        for s in &next {
            let k = s.len();
            let earlier = &s[..k - 1];
            let member: Vec<bool> = (0..ground.len()).map(|e| flat.perm(e / nu, e % nu)[..k] == s[..]).collect();
            let event = PartitionField::from_values(ground, &member).expect("sized to ground");
            let cylinder = PartitionField::from_map(ground, |_, el| {
                let (omega, u) = el.split_at(model.signals().len());
                crate::sigma::project(earlier, omega, u).ok()
            })
            .expect("valid prefix");
            if !event.is_coarser_on(&cylinder, &subset).expect("same ground") {
                let witness = rcs_witness(&cylinder, &member, &subset, nu, s);
                return PropertyReport { property: Property::Rcs, verdict: false, witness };
            }
        }
        prefixes = next;
    }
    PropertyReport { property: Property::Rcs, verdict: true, witness: Witness::None }
}

fn rcs_witness(cylinder: &PartitionField, member: &[bool], subset: &[usize], nu: usize, s: &[usize]) -> Witness {
    let mut first: HashMap<usize, (Option<usize>, Option<usize>)> = HashMap::new();
    for &e in subset {
        let slot = first.entry(cylinder.atom_of(e)).or_default();
        if member[e] {
            slot.0.get_or_insert(e);
        } else {
            slot.1.get_or_insert(e);
        }
        if let (Some(a), Some(b)) = *slot {
            return Witness::Prefix { prefix: s.to_vec(), inside: (a / nu, a % nu), outside: (b / nu, b % nu) };
        }
    }
    Witness::None
}

/// RCS of the model's declared ordering.
pub fn check_rcs_declared(model: &IntrinsicModel, opts: CheckOptions) -> Result<PropertyReport, PropertyError> {
    let psi = model.ordering().ok_or(PropertyError::MissingOrdering)?;
    Ok(check_rcs(model, psi, opts))
}

// ---------------------------------------------------------------- classification

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InfoStructure {
    Classical,
    PartiallyNested,
    Nonclassical,
}

impl InfoStructure {
    pub fn name(self) -> &'static str {
        match self {
            InfoStructure::Classical => "classical",
            InfoStructure::PartiallyNested => "partially_nested",
            InfoStructure::Nonclassical => "nonclassical",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Classification {
    pub class: InfoStructure,
    /// Stage pairs (k, i), k < i, where the earlier stage's information is not
    /// contained in the later one's, flagged with whether stage k affects stage i.
    pub uncontained: Vec<(usize, usize, bool)>,
}

/// Classifies the imaginary stage measurements Y_k = (s_k, η^{s_k}) under a causal ψ.
pub fn classify(model: &IntrinsicModel, psi: &OrderingFunction, opts: CheckOptions) -> Result<Classification, PropertyError> {
    if !is_causal_ordering(model, psi, opts.scope) {
        return Err(PropertyError::RequiresCausality);
    }
    let n = model.n_dms();
    let nu = model.action_space().len();
    let ground = model.ground();
    let flat = psi.to_flat();
    let acts = Actions::new(model);
    let scope = model.scope(opts.scope);
    let subset: Vec<usize> = scope.iter().flat_map(|&w| (0..nu).map(move |u| w * nu + u)).collect();
    let stage = |k: usize, w: usize, u: usize| {
        let d = flat.perm(w, u)[k];
        (d, model.eta_at(d, w, u))
    };
    let fields: Vec<PartitionField> = (0..n)
        .map(|k| PartitionField::from_map(ground, |e, _| Some(stage(k, e / nu, e % nu))).expect("total"))
        .collect();
    let mut uncontained = Vec::new();
    for i in 0..n {
        for k in 0..i {
            if fields[k].is_coarser_on(&fields[i], &subset).expect("same ground") {
                continue;
            }
            let affects = scope.iter().any(|&w| {
                (0..nu).any(|u| {
                    let d = flat.perm(w, u)[k];
                    (0..model.dm(d).actions.len()).any(|a| {
                        let mut t = acts.tuples[u].clone();
                        t[d] = a;
                        let v = model.action_space().index(&t);
                        stage(i, w, u) != stage(i, w, v)
                    })
                })
            });
            uncontained.push((k, i, affects));
        }
    }
    let class = if uncontained.is_empty() {
        InfoStructure::Classical
    } else if uncontained.iter().all(|x| !x.2) {
        InfoStructure::PartiallyNested
    } else {
        InfoStructure::Nonclassical
    };
    Ok(Classification { class, uncontained })
}

// ---------------------------------------------------------------- audit

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub model: usize,
    pub rule: &'static str,
    pub reports: Vec<PropertyReport>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Verdicts {
    pub sm: PropertyReport,
    pub df: PropertyReport,
    pub ci: PropertyReport,
    pub c: PropertyReport,
}

pub fn all_verdicts(model: &IntrinsicModel, opts: CheckOptions) -> Verdicts {
    Verdicts {
        sm: check_sm(model, opts),
        df: check_df(model, opts),
        ci: check_ci(model, opts),
        c: check_c(model, opts),
    }
}

fn violations_of(index: usize, v: &Verdicts) -> Vec<Violation> {
    let rules: [(&'static str, bool, &PropertyReport, &PropertyReport); 4] = [
        ("C => CI", v.c.verdict && !v.ci.verdict, &v.c, &v.ci),
        ("CI => DF", v.ci.verdict && !v.df.verdict, &v.ci, &v.df),
        ("DF => CI", v.df.verdict && !v.ci.verdict, &v.df, &v.ci),
        ("DF => SM", v.df.verdict && !v.sm.verdict, &v.df, &v.sm),
    ];
    rules
        .into_iter()
        .filter(|r| r.1)
        .map(|(rule, _, a, b)| Violation { model: index, rule, reports: vec![a.clone(), b.clone()] })
        .collect()
}

/// Checks C ⇒ CI ⇔ DF ⇒ SM on every model; an empty list means no violation.
pub fn audit_implications(models: &[IntrinsicModel], opts: CheckOptions) -> Vec<Violation> {
    let verdicts: Vec<Verdicts> = models.par_iter().map(|m| all_verdicts(m, opts)).collect();
    verdicts.iter().enumerate().flat_map(|(i, v)| violations_of(i, v)).collect()
}

/// Replays a report's witness through the matching checker.
pub fn replay(model: &IntrinsicModel, report: &PropertyReport, opts: CheckOptions) -> bool {
    match (&report.witness, report.property, report.verdict) {
        (Witness::Ordering(psi), Property::C, true) => {
            check_rcs(model, psi, opts).verdict && is_causal_ordering(model, psi, opts.scope)
        }
        (Witness::Ordering(psi), Property::Ci, true) => ordering_is_implementable(model, psi, opts.scope),
        (Witness::ClosedLoop { policy, omega, .. }, Property::Sm, false) => model.solve_closed_loop(policy, *omega).len() != 1,
        (Witness::Deadlock { policy, omega, acted }, Property::Df, false) => {
            let (run, done) = forward_under_policy(model, policy, *omega);
            !done && &run == acted
        }
        (Witness::Outcome { omega, u, .. }, Property::Ci | Property::C, false) => pointwise_order(model, *omega, *u).is_err(),
        (Witness::Prefix { inside, outside, prefix }, Property::Rcs, false) => {
            let psi = model.ordering();
            psi.is_some_and(|p| {
                let k = prefix.len();
                p.order(inside.0, inside.1)[..k] == prefix[..] && p.order(outside.0, outside.1)[..k] != prefix[..]
            })
        }
        (Witness::None, _, true) => true,
        _ => false,
    }
}
