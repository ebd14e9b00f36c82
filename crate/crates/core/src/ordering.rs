//! Ordering functions ψ: flat tables over outcomes, or causal trees.

use std::collections::BTreeMap;

use crate::model::{MixedRadix, Signal};

/// Node of a causal tree: the values of the tree's signal arguments and the
/// realized prefix of (dm, action) pairs, all 0-based.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TreeKey {
    pub signals: Vec<usize>,
    pub prefix: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OrderingSpec {
    /// Key is the signal digits followed by the action digits.
    Flat(BTreeMap<Vec<usize>, Vec<usize>>),
    Tree { args: Vec<usize>, nodes: BTreeMap<TreeKey, usize> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlatOrdering {
    omega_space: MixedRadix,
    action_space: MixedRadix,
    perms: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrderingTree {
    omega_space: MixedRadix,
    action_space: MixedRadix,
    args: Vec<usize>,
    nodes: BTreeMap<TreeKey, usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OrderingFunction {
    Flat(FlatOrdering),
    Tree(OrderingTree),
}

impl FlatOrdering {
    /// Builds from a permutation per ground index (ω index × |U| + u index).
    pub fn new(omega_space: MixedRadix, action_space: MixedRadix, perms: Vec<Vec<usize>>) -> Self {
        assert_eq!(perms.len(), omega_space.len() * action_space.len());
        FlatOrdering { omega_space, action_space, perms }
    }

    pub fn perm(&self, omega: usize, u: usize) -> &[usize] {
        &self.perms[omega * self.action_space.len() + u]
    }
}

impl OrderingTree {
    pub fn new(
        omega_space: MixedRadix,
        action_space: MixedRadix,
        args: Vec<usize>,
        nodes: BTreeMap<TreeKey, usize>,
    ) -> Self {
        OrderingTree { omega_space, action_space, args, nodes }
    }

    pub fn args(&self) -> &[usize] {
        &self.args
    }

    pub fn nodes(&self) -> &BTreeMap<TreeKey, usize> {
        &self.nodes
    }

    fn key_signals(&self, omega: &[usize]) -> Vec<usize> {
        self.args.iter().map(|&j| omega[j]).collect()
    }
}

fn is_permutation(p: &[usize], n: usize) -> bool {
    let mut seen = vec![false; n];
    p.len() == n && p.iter().all(|&i| i < n && !std::mem::replace(&mut seen[i], true))
}

impl OrderingFunction {
    /// Validates a written ordering against the model's spaces.
    pub fn from_spec(
        spec: &OrderingSpec,
        signals: &[Signal],
        omega_space: &MixedRadix,
        action_space: &MixedRadix,
    ) -> Result<Self, Vec<String>> {
        let n = action_space.sizes().len();
        let mut errs = Vec::new();
        match spec {
            OrderingSpec::Flat(rows) => {
                let mut perms = Vec::with_capacity(omega_space.len() * action_space.len());
                for w in omega_space.iter() {
                    for u in action_space.iter() {
                        let mut key = w.clone();
                        key.extend(&u);
                        match rows.get(&key) {
                            Some(p) if is_permutation(p, n) => perms.push(p.clone()),
                            Some(p) => errs.push(format!("ordering row {key:?} value {p:?} is not a permutation")),
                            None => errs.push(format!("ordering row {key:?} is missing")),
                        }
                    }
                }
                if rows.len() > perms.len() + errs.len() {
                    errs.push("ordering has rows outside the outcome space".into());
                }
                if errs.is_empty() {
                    return Ok(OrderingFunction::Flat(FlatOrdering::new(
                        omega_space.clone(),
                        action_space.clone(),
                        perms,
                    )));
                }
            }
            OrderingSpec::Tree { args, nodes } => {
                for (i, &a) in args.iter().enumerate() {
                    if a >= signals.len() || args[..i].contains(&a) {
                        errs.push(format!("ordering argument {a} is invalid"));
                    }
                }
                if errs.is_empty() {
                    let arg_space = MixedRadix::new(args.iter().map(|&a| signals[a].alphabet.len()).collect());
                    let mut reached = 0usize;
                    for sv in arg_space.iter() {
                        walk_tree(&sv, &mut Vec::new(), nodes, action_space, n, &mut reached, &mut errs);
                    }
                    if reached != nodes.len() && errs.is_empty() {
                        errs.push(format!("ordering has {} unreachable rows", nodes.len() - reached));
                    }
                }
                if errs.is_empty() {
                    return Ok(OrderingFunction::Tree(OrderingTree::new(
                        omega_space.clone(),
                        action_space.clone(),
                        args.clone(),
                        nodes.clone(),
                    )));
                }
            }
        }
        Err(errs)
    }

    pub fn to_spec(&self) -> OrderingSpec {
        match self {
            OrderingFunction::Flat(f) => {
                let mut rows = BTreeMap::new();
                for (wi, w) in f.omega_space.iter().enumerate() {
                    for (ui, u) in f.action_space.iter().enumerate() {
                        let mut key = w.clone();
                        key.extend(u);
                        rows.insert(key, f.perm(wi, ui).to_vec());
                    }
                }
                OrderingSpec::Flat(rows)
            }
            OrderingFunction::Tree(t) => OrderingSpec::Tree { args: t.args.clone(), nodes: t.nodes.clone() },
        }
    }

    fn spaces(&self) -> (&MixedRadix, &MixedRadix) {
        match self {
            OrderingFunction::Flat(f) => (&f.omega_space, &f.action_space),
            OrderingFunction::Tree(t) => (&t.omega_space, &t.action_space),
        }
    }

    pub fn n_dms(&self) -> usize {
        self.spaces().1.sizes().len()
    }

    /// ψ(ω, u) as a permutation of 0-based DM indices.
    pub fn order(&self, omega: usize, u: usize) -> Vec<usize> {
        match self {
            OrderingFunction::Flat(f) => f.perm(omega, u).to_vec(),
            OrderingFunction::Tree(t) => {
                let w = t.omega_space.decode(omega);
                let uu = t.action_space.decode(u);
                let mut key = TreeKey { signals: t.key_signals(&w), prefix: Vec::new() };
                let mut out = Vec::new();
                while let Some(&dm) = t.nodes.get(&key) {
                    out.push(dm);
                    key.prefix.push((dm, uu[dm]));
                }
                out
            }
        }
    }

    /// The flat table induced by this ordering.
    pub fn to_flat(&self) -> FlatOrdering {
        match self {
            OrderingFunction::Flat(f) => f.clone(),
            OrderingFunction::Tree(t) => {
                let mut perms = Vec::with_capacity(t.omega_space.len() * t.action_space.len());
                for w in 0..t.omega_space.len() {
                    for u in 0..t.action_space.len() {
                        perms.push(self.order(w, u));
                    }
                }
                FlatOrdering::new(t.omega_space.clone(), t.action_space.clone(), perms)
            }
        }
    }

    /// The DM acting after `prefix` at ω, or None when the prefix does not
    /// determine it (some completion of the unfixed actions disagrees).
    pub fn next(&self, omega: usize, prefix: &[(usize, usize)]) -> Option<usize> {
        match self {
            OrderingFunction::Tree(t) => {
                let w = t.omega_space.decode(omega);
                t.nodes.get(&TreeKey { signals: t.key_signals(&w), prefix: prefix.to_vec() }).copied()
            }
            OrderingFunction::Flat(f) => {
                let k = prefix.len();
                let mut found = None;
                for ui in 0..f.action_space.len() {
                    let u = f.action_space.decode(ui);
                    if prefix.iter().any(|&(d, a)| u[d] != a) {
                        continue;
                    }
                    let p = f.perm(omega, ui);
                    if p[..k].iter().zip(prefix).any(|(a, b)| *a != b.0) {
                        return None;
                    }
                    match found {
                        None => found = Some(p[k]),
                        Some(x) if x != p[k] => return None,
                        _ => {}
                    }
                }
                found
            }
        }
    }
}

fn walk_tree(
    sv: &[usize],
    prefix: &mut Vec<(usize, usize)>,
    nodes: &BTreeMap<TreeKey, usize>,
    action_space: &MixedRadix,
    n: usize,
    reached: &mut usize,
    errs: &mut Vec<String>,
) {
    if prefix.len() == n || errs.len() > 20 {
        return;
    }
    let key = TreeKey { signals: sv.to_vec(), prefix: prefix.clone() };
    match nodes.get(&key) {
        None => errs.push(format!("ordering node {sv:?} {prefix:?} is missing")),
        Some(&dm) if dm >= n || prefix.iter().any(|p| p.0 == dm) => {
            errs.push(format!("ordering node {sv:?} {prefix:?} reuses or exceeds DM index {}", dm + 1))
        }
        Some(&dm) => {
            *reached += 1;
            for a in 0..action_space.sizes()[dm] {
                prefix.push((dm, a));
                walk_tree(sv, prefix, nodes, action_space, n, reached, errs);
                prefix.pop();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn chance_ordered_tree_orders() {
        let m = fixtures::example5();
        let psi = m.ordering().unwrap();
        let ws = m.signal_index("ws").unwrap();
        let mut w = vec![0; 5];
        w[ws] = 0;
        let wi = m.omega_space().index(&w);
        // ws = 0: DM 1 first; after u1 = 1 the order is 1, 3, 2
        assert_eq!(psi.next(wi, &[]), Some(0));
        assert_eq!(psi.order(wi, m.action_space().index(&[1, 0, 0])), vec![0, 2, 1]);
        assert_eq!(psi.order(wi, m.action_space().index(&[0, 0, 0])), vec![0, 1, 2]);
        w[ws] = 1;
        let wi = m.omega_space().index(&w);
        assert_eq!(psi.order(wi, 0), vec![1, 0, 2]);
    }

    #[test]
    fn flat_and_tree_agree() {
        let m = fixtures::example5();
        let psi = m.ordering().unwrap();
        let flat = OrderingFunction::Flat(psi.to_flat());
        for w in 0..32 {
            for u in 0..8 {
                assert_eq!(psi.order(w, u), flat.order(w, u));
            }
            let first = psi.next(w, &[]);
            assert_eq!(flat.next(w, &[]), first);
            let d = first.unwrap();
            for a in 0..2 {
                assert_eq!(flat.next(w, &[(d, a)]), psi.next(w, &[(d, a)]));
            }
        }
    }

    #[test]
    fn flat_next_detects_dependence_on_later_actions() {
        // two DMs; the first mover depends on u2
        let ws = MixedRadix::new(vec![1]);
        let us = MixedRadix::new(vec![2, 2]);
        let perms = us.iter().map(|u| if u[1] == 0 { vec![0, 1] } else { vec![1, 0] }).collect();
        let f = OrderingFunction::Flat(FlatOrdering::new(ws, us, perms));
        assert_eq!(f.next(0, &[]), None);
    }

    #[test]
    fn tree_validation() {
        let m = fixtures::example5();
        let spec = m.ordering().unwrap().to_spec();
        let OrderingSpec::Tree { args, mut nodes } = spec else { panic!() };
        let key = nodes.keys().next().unwrap().clone();
        let mut bad = nodes.clone();
        bad.remove(&key);
        let spec = OrderingSpec::Tree { args: args.clone(), nodes: bad };
        assert!(OrderingFunction::from_spec(&spec, m.signals(), m.omega_space(), m.action_space()).is_err());
        // a branch reusing an index
        let deep = nodes.keys().find(|k| k.prefix.len() == 1).unwrap().clone();
        let first = deep.prefix[0].0;
        nodes.insert(deep, first);
        let spec = OrderingSpec::Tree { args, nodes };
        assert!(OrderingFunction::from_spec(&spec, m.signals(), m.omega_space(), m.action_space()).is_err());
    }
}
