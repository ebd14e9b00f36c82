//! Static reduction of a partially nested model through invertible
//! measurement decompositions y^i = (y^{↓i}, h_i(g_i(ω), u^{↓i})). The cost is
//! left unchanged; the policies are carried across by explicit maps.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ci_to_c::CERTIFICATE_BUDGET;
use super::ReductionError;
use crate::dsl::DecompositionDoc;
use crate::model::{validate, Alphabet, Arg, DmSpec, IntrinsicModel, PolicyProfile, TableSpec};
use crate::ordering::OrderingFunction;
use crate::properties::{classify, CheckOptions, InfoStructure};
use crate::sigma::PartitionField;

#[derive(Clone, Debug)]
pub struct NestedReduction {
    /// Same signals, prior and cost; DM i observes (g_j(ω)) for j in its closure.
    pub static_model: IntrinsicModel,
    /// DM i together with everything below it, ascending.
    pub closure: Vec<Vec<usize>>,
    pub below: Vec<Vec<usize>>,
    /// g_i per signal-tuple index.
    g: Vec<Vec<usize>>,
    /// h_i keyed by (g value, actions of `below[i]`).
    h: Vec<HashMap<(usize, Vec<usize>), usize>>,
    h_inverse: Vec<HashMap<(usize, Vec<usize>), usize>>,
    /// Static symbol index per closure tuple, and a signal tuple realizing it.
    static_symbols: Vec<BTreeMap<Vec<usize>, usize>>,
    static_rep: Vec<Vec<usize>>,
    /// Ground index of an outcome realizing each dynamic symbol, if any.
    dynamic_rep: Vec<Vec<Option<usize>>>,
    dynamic: IntrinsicModel,
    pub certified: usize,
    pub exhaustive: bool,
}

fn bad(msg: impl Into<String>) -> ReductionError {
    ReductionError::BadDecomposition(msg.into())
}

pub fn nested_reduce(
    model: &IntrinsicModel,
    psi: &OrderingFunction,
    doc: &DecompositionDoc,
    seed: u64,
) -> Result<NestedReduction, ReductionError> {
    let class = classify(model, psi, CheckOptions::default()).map_err(|_| ReductionError::NotCausal)?;
    if class.class == InfoStructure::Nonclassical {
        return Err(ReductionError::NotPartiallyNested);
    }
    let n = model.n_dms();
    let nw = model.omega_space().len();
    let nu = model.action_space().len();

    let mut below = Vec::with_capacity(n);
    let mut g = Vec::with_capacity(n);
    let mut h = Vec::with_capacity(n);
    let mut h_inverse = Vec::with_capacity(n);
    for i in 0..n {
        let comp = doc.components.get(&i).ok_or_else(|| bad(format!("no component for DM {}", i + 1)))?;
        if comp.below.iter().any(|&j| j >= n || j == i) {
            return Err(bad(format!("DM {} lists an invalid DM below it", i + 1)));
        }
        below.push(comp.below.clone());

        let args: Vec<usize> = comp
            .g_args
            .iter()
            .map(|name| model.signal_index(name).ok_or_else(|| bad(format!("g {} reads unknown signal {name}", i + 1))))
            .collect::<Result<_, _>>()?;
        let mut g_symbols: Vec<String> = Vec::new();
        let mut gi = Vec::with_capacity(nw);
        for w in 0..nw {
            let digits = model.omega_space().decode(w);
            let key: Vec<String> =
                args.iter().map(|&j| model.signals()[j].alphabet.symbol(digits[j]).to_string()).collect();
            let v = comp.g_rows.get(&key).ok_or_else(|| bad(format!("g {} has no row {key:?}", i + 1)))?;
            let idx = match g_symbols.iter().position(|s| s == v) {
                Some(p) => p,
                None => {
                    g_symbols.push(v.clone());
                    g_symbols.len() - 1
                }
            };
            gi.push(idx);
        }

        let mut hi = HashMap::new();
        let mut inv = HashMap::new();
        let mut out_symbols: Vec<String> = Vec::new();
        let below_space = crate::model::MixedRadix::new(comp.below.iter().map(|&j| model.dm(j).actions.len()).collect());
        for ub in below_space.iter() {
            let ub_names: Vec<String> =
                comp.below.iter().zip(&ub).map(|(&j, &a)| model.dm(j).actions.symbol(a).to_string()).collect();
            for (gv, gs) in g_symbols.iter().enumerate() {
                let v = comp
                    .h_rows
                    .get(&(gs.clone(), ub_names.clone()))
                    .ok_or_else(|| bad(format!("h {} has no row for {gs:?} {ub_names:?}", i + 1)))?;
                let idx = match out_symbols.iter().position(|s| s == v) {
                    Some(p) => p,
                    None => {
                        out_symbols.push(v.clone());
                        out_symbols.len() - 1
                    }
                };
                hi.insert((gv, ub.clone()), idx);
                if inv.insert((idx, ub.clone()), gv).is_some() {
                    return Err(ReductionError::NotInvertible { dm: i, actions: ub });
                }
            }
        }
        g.push(gi);
        h.push(hi);
        h_inverse.push(inv);
    }

    // ↓ must be acyclic; closures follow
    let mut closure: Vec<Vec<usize>> = vec![Vec::new(); n];
    fn close(i: usize, below: &[Vec<usize>], stack: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) -> Result<(), ReductionError> {
        if !out[i].is_empty() {
            return Ok(());
        }
        if stack.contains(&i) {
            return Err(bad(format!("the below relation has a cycle through DM {}", i + 1)));
        }
        stack.push(i);
        let mut set = vec![i];
        for &j in &below[i] {
            close(j, below, stack, out)?;
            set.extend(out[j].iter().copied());
        }
        stack.pop();
        set.sort_unstable();
        set.dedup();
        out[i] = set;
        Ok(())
    }
    for i in 0..n {
        close(i, &below, &mut Vec::new(), &mut closure)?;
    }

    // σ(η^i) = σ(η^j : j ↓ i) ∨ σ(h_i(g_i, u^{↓i}))
    let ground = model.ground();
    for i in 0..n {
        let hf = PartitionField::from_map(ground, |e, _| {
            let (w, u) = (e / nu, e % nu);
            let ut = model.action_space().decode(u);
            let ub: Vec<usize> = below[i].iter().map(|&j| ut[j]).collect();
            Some(h[i][&(g[i][w], ub)])
        })
        .expect("total");
        let mut joined = hf;
        for &j in &below[i] {
            joined = joined.join(model.information_field(j)).expect("same ground");
        }
        if &joined != model.information_field(i) {
            return Err(bad(format!("measurement of DM {} does not match its decomposition", i + 1)));
        }
    }

    // static measurements
    let mut static_symbols = Vec::with_capacity(n);
    let mut static_rep = Vec::with_capacity(n);
    let mut dms = Vec::with_capacity(n);
    let spec = model.to_spec();
    for i in 0..n {
        let mut symbols: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        for w in 0..nw {
            let t: Vec<usize> = closure[i].iter().map(|&j| g[j][w]).collect();
            symbols.entry(t).or_insert(0);
        }
        let mut reps = vec![0; symbols.len()];
        for (k, v) in symbols.values_mut().enumerate() {
            *v = k;
        }
        for w in (0..nw).rev() {
            let t: Vec<usize> = closure[i].iter().map(|&j| g[j][w]).collect();
            reps[symbols[&t]] = w;
        }
        let names: Vec<String> =
            symbols.keys().map(|t| t.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(".")).collect();
        let rows = (0..nw)
            .map(|w| {
                let t: Vec<usize> = closure[i].iter().map(|&j| g[j][w]).collect();
                (model.omega_space().decode(w), symbols[&t])
            })
            .collect();
        dms.push(DmSpec {
            actions: spec.dms[i].actions.clone(),
            measurements: Alphabet::new(names).map_err(|e| bad(e.to_string()))?,
            observation: TableSpec { args: (0..model.signals().len()).map(Arg::Signal).collect(), rows },
            events: Vec::new(),
        });
        static_symbols.push(symbols);
        static_rep.push(reps);
    }
    let static_spec = crate::model::ModelSpec { dms, ordering: None, ..spec };
    let static_model = validate(&static_spec).map_err(|e| bad(e.to_string()))?;

    let mut dynamic_rep = Vec::with_capacity(n);
    for i in 0..n {
        let mut reps = vec![None; model.dm(i).measurements.len()];
        for e in 0..nw * nu {
            let y = model.eta_at(i, e / nu, e % nu);
            reps[y].get_or_insert(e);
        }
        dynamic_rep.push(reps);
    }

    let mut red = NestedReduction {
        static_model,
        closure,
        below,
        g,
        h,
        h_inverse,
        static_symbols,
        static_rep,
        dynamic_rep,
        dynamic: model.clone(),
        certified: 0,
        exhaustive: false,
    };
    red.certify(seed)?;
    Ok(red)
}

impl NestedReduction {
    /// Dynamic measurement of DM i and its closure's actions under γ^D, when
    /// the closure's g values are `gvals` (aligned with `closure[i]`).
    fn encode(&self, i: usize, gvals: &[usize], dynamic: &PolicyProfile) -> usize {
        let n = self.dynamic.n_dms();
        let mut u = vec![0; n];
        for (pos, &j) in self.closure[i].iter().enumerate() {
            if j == i {
                continue;
            }
            let sub: Vec<usize> = self.closure[j]
                .iter()
                .map(|k| gvals[self.closure[i].iter().position(|x| x == k).expect("closure is nested")])
                .collect();
            let y = self.encode(j, &sub, dynamic);
            u[j] = dynamic.tables[j][y];
            let _ = pos;
        }
        let w = self.static_rep[i][self.static_symbols[i][gvals]];
        self.dynamic.eta_at(i, w, self.dynamic.action_space().index(&u))
    }

    /// g values over `closure[i]` recovered from DM i's dynamic measurement.
    fn decode(&self, i: usize, y: usize, dynamic: &PolicyProfile) -> Option<Vec<usize>> {
        let nu = self.dynamic.action_space().len();
        let e = self.dynamic_rep[i][y]?;
        let (w, u) = (e / nu, e % nu);
        let ut = self.dynamic.action_space().decode(u);
        let ub_rep: Vec<usize> = self.below[i].iter().map(|&j| ut[j]).collect();
        let hat = self.h[i][&(self.g[i][w], ub_rep)];
        let mut out: BTreeMap<usize, usize> = BTreeMap::new();
        let mut ub = Vec::with_capacity(self.below[i].len());
        for &j in &self.below[i] {
            let yj = self.dynamic.eta_at(j, w, u);
            for (k, v) in self.closure[j].iter().zip(self.decode(j, yj, dynamic)?) {
                out.insert(*k, v);
            }
            ub.push(dynamic.tables[j][yj]);
        }
        out.insert(i, self.h_inverse[i][&(hat, ub)]);
        Some(self.closure[i].iter().map(|k| out[k]).collect())
    }

    /// γ^S = γ^D ∘ F: the static policy producing the same actions.
    pub fn to_static(&self, dynamic: &PolicyProfile) -> PolicyProfile {
        let tables = (0..self.dynamic.n_dms())
            .map(|i| self.static_symbols[i].keys().map(|t| dynamic.tables[i][self.encode(i, t, dynamic)]).collect())
            .collect();
        PolicyProfile { tables }
    }

    /// γ^D = γ^S ∘ F⁻¹. Dynamic symbols that no outcome produces map to action 0.
    pub fn to_dynamic(&self, stat: &PolicyProfile) -> PolicyProfile {
        let n = self.dynamic.n_dms();
        let mut tables: Vec<Vec<usize>> = (0..n).map(|i| vec![0; self.dynamic.dm(i).measurements.len()]).collect();
        // fill DMs after everything below them
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| self.closure[i].len());
        for &i in &order {
            let partial = PolicyProfile { tables: tables.clone() };
            for y in 0..tables[i].len() {
                if let Some(t) = self.decode(i, y, &partial) {
                    if let Some(&s) = self.static_symbols[i].get(&t) {
                        tables[i][y] = stat.tables[i][s];
                    }
                }
            }
        }
        PolicyProfile { tables }
    }

    /// Zeroes the entries of γ^D at symbols no outcome produces.
    pub fn canonical_dynamic(&self, dynamic: &PolicyProfile) -> PolicyProfile {
        let mut p = dynamic.clone();
        for (i, t) in p.tables.iter_mut().enumerate() {
            for (y, a) in t.iter_mut().enumerate() {
                if self.dynamic_rep[i][y].is_none() {
                    *a = 0;
                }
            }
        }
        p
    }

    /// Actions agree at every supported ω, and the policy maps invert each other.
    pub fn check_policy(&self, dynamic: &PolicyProfile) -> Result<(), ReductionError> {
        let stat = self.to_static(dynamic);
        for w in self.dynamic.support() {
            let ud = self.dynamic.solve_closed_loop(dynamic, w);
            let us = self.static_model.solve_closed_loop(&stat, w);
            if ud.len() != 1 || ud != us {
                return Err(ReductionError::CertificateFailed(format!("actions differ at signal tuple {w}")));
            }
        }
        if self.to_dynamic(&stat) != self.canonical_dynamic(dynamic) {
            return Err(ReductionError::CertificateFailed("policy maps are not mutually inverse".into()));
        }
        if self.to_static(&self.to_dynamic(&stat)) != stat {
            return Err(ReductionError::CertificateFailed("policy maps are not mutually inverse".into()));
        }
        Ok(())
    }

    fn certify(&mut self, seed: u64) -> Result<(), ReductionError> {
        let space = self.dynamic.policy_space();
        let exhaustive = space.size().is_some_and(|s| s <= CERTIFICATE_BUDGET);
        let policies: Vec<PolicyProfile> = if exhaustive {
            (0..space.size().expect("bounded")).map(|i| space.policy_at(i)).collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..1000)
                .map(|_| PolicyProfile {
                    tables: self
                        .dynamic
                        .dms()
                        .iter()
                        .map(|d| (0..d.measurements.len()).map(|_| rng.gen_range(0..d.actions.len())).collect())
                        .collect(),
                })
                .collect()
        };
        for p in &policies {
            self.check_policy(p)?;
        }
        self.certified = policies.len();
        self.exhaustive = exhaustive;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn group_chain_reduces() {
        for m in 2..=3 {
            let (model, doc) = fixtures::nested_chain(m);
            let psi = model.ordering().unwrap();
            let red = nested_reduce(&model, psi, &doc, 0).unwrap();
            assert_eq!(red.exhaustive, m == 2);
            assert_eq!(red.closure, vec![vec![0], vec![0, 1]]);
            // cost unchanged: values agree policy by policy
            for idx in 0..model.policy_space().size().unwrap() {
                let g = model.policy_space().policy_at(idx);
                let s = red.to_static(&g);
                assert_eq!(model.expected_cost(&g).unwrap(), red.static_model.expected_cost(&s).unwrap());
            }
        }
    }

    #[test]
    fn constant_h_is_not_invertible() {
        let (model, mut doc) = fixtures::nested_chain(2);
        for v in doc.components.get_mut(&1).unwrap().h_rows.values_mut() {
            *v = "0".into();
        }
        let err = nested_reduce(&model, model.ordering().unwrap(), &doc, 0).unwrap_err();
        assert!(matches!(err, ReductionError::NotInvertible { dm: 1, .. }));
    }

    #[test]
    fn nonclassical_model_is_refused() {
        let m = fixtures::example5();
        let err = nested_reduce(&m, m.ordering().unwrap(), &DecompositionDoc::default(), 0).unwrap_err();
        assert_eq!(err, ReductionError::NotPartiallyNested);
    }

    #[test]
    fn action_free_h_keeps_the_measurements() {
        let (model, doc) = fixtures::nested_static_pair(2);
        let red = nested_reduce(&model, model.ordering().unwrap(), &doc, 0).unwrap();
        for idx in 0..model.policy_space().size().unwrap() {
            let g = model.policy_space().policy_at(idx);
            assert_eq!(red.to_static(&g), g);
        }
    }
}
