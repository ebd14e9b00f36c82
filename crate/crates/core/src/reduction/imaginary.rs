//! The imaginary sequential model: stage k is whoever acts k-th, its
//! measurement is the tagged pair (DM, symbol), and the kernels condition the
//! prior on the realized history.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{context_of, ctx_prior, ReductionError, Step};
use crate::model::{IntrinsicModel, MixedRadix, PolicyProfile, Scope};
use crate::ordering::OrderingFunction;
use crate::properties::is_causal_ordering;
use crate::Rational;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImaginaryModel {
    /// Cost and order signal indices, in declaration order.
    pub context: Vec<usize>,
    pub context_space: MixedRadix,
    pub context_prior: Vec<Rational>,
    /// P(s_k = i | ctx, history), one entry per DM. Only histories of positive
    /// probability have rows.
    pub order_kernel: BTreeMap<(usize, Vec<Step>), Vec<Rational>>,
    /// P(y^{s_k} = y | ctx, history, s_k), one entry per symbol of DM s_k.
    pub measurement_kernel: BTreeMap<(usize, Vec<Step>, usize), Vec<Rational>>,
    pub orderings: BTreeSet<Vec<usize>>,
}

impl ImaginaryModel {
    /// The stage measurement alphabet, a disjoint union of the DMs' alphabets.
    pub fn stage_alphabet(&self, model: &IntrinsicModel) -> Vec<(usize, usize)> {
        (0..model.n_dms())
            .flat_map(|i| (0..model.dm(i).measurements.len()).map(move |y| (i, y)))
            .collect()
    }

    /// True when the realized ordering never varies with chance or actions.
    pub fn deterministic_order(&self) -> bool {
        self.orderings.len() == 1
    }
}

fn prefix_actions(model: &IntrinsicModel, history: &[Step]) -> usize {
    let mut u = vec![0; model.n_dms()];
    for &(d, _, a) in history {
        u[d] = a;
    }
    model.action_space().index(&u)
}

fn normalize(masses: Vec<Rational>, total: &Rational) -> Vec<Rational> {
    masses.into_iter().map(|m| m / total).collect()
}

/// Builds the policy-free kernels: the prior conditioned on the signal tuples
/// consistent with the history. Under a causal ψ this set does not depend on
/// the policy, which [`certify_policy_independence`] checks.
pub fn build_imaginary(model: &IntrinsicModel, psi: &OrderingFunction) -> Result<ImaginaryModel, ReductionError> {
    if !is_causal_ordering(model, psi, Scope::Support) {
        return Err(ReductionError::NotCausal);
    }
    let context = model.context_signals();
    let (context_space, context_prior) = ctx_prior(model, &context);
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); context_space.len()];
    for w in model.support() {
        groups[context_space.index(&context_of(model, &context, w))].push(w);
    }
    let mut im = ImaginaryModel {
        context,
        context_space,
        context_prior,
        order_kernel: BTreeMap::new(),
        measurement_kernel: BTreeMap::new(),
        orderings: BTreeSet::new(),
    };
    for (ctx, group) in groups.iter().enumerate() {
        if !group.is_empty() {
            expand(model, psi, ctx, group, &mut Vec::new(), &mut im)?;
        }
    }
    Ok(im)
}

fn expand(
    model: &IntrinsicModel,
    psi: &OrderingFunction,
    ctx: usize,
    consistent: &[usize],
    history: &mut Vec<Step>,
    im: &mut ImaginaryModel,
) -> Result<(), ReductionError> {
    let n = model.n_dms();
    if history.len() == n {
        im.orderings.insert(history.iter().map(|s| s.0).collect());
        return Ok(());
    }
    let prefix: Vec<(usize, usize)> = history.iter().map(|&(d, _, a)| (d, a)).collect();
    let total: Rational = consistent.iter().map(|&w| &model.prior()[w]).sum();
    let mut by_dm: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &w in consistent {
        let d = psi.next(w, &prefix).ok_or(ReductionError::NotCausal)?;
        by_dm[d].push(w);
    }
    let masses: Vec<Rational> = by_dm.iter().map(|g| g.iter().map(|&w| &model.prior()[w]).sum()).collect();
    im.order_kernel.insert((ctx, history.clone()), normalize(masses.clone(), &total));
    let u = prefix_actions(model, history);
    for d in 0..n {
        if by_dm[d].is_empty() {
            continue;
        }
        let ny = model.dm(d).measurements.len();
        let mut by_y: Vec<Vec<usize>> = vec![Vec::new(); ny];
        for &w in &by_dm[d] {
            by_y[model.eta_at(d, w, u)].push(w);
        }
        let ymass: Vec<Rational> = by_y.iter().map(|g| g.iter().map(|&w| &model.prior()[w]).sum()).collect();
        im.measurement_kernel.insert((ctx, history.clone(), d), normalize(ymass, &masses[d]));
        for (y, g) in by_y.iter().enumerate() {
            if g.is_empty() {
                continue;
            }
            for a in 0..model.dm(d).actions.len() {
                history.push((d, y, a));
                expand(model, psi, ctx, g, history, im)?;
                history.pop();
            }
        }
    }
    Ok(())
}

type Tally = BTreeMap<(usize, Vec<Step>), Vec<Rational>>;
type MeasTally = BTreeMap<(usize, Vec<Step>, usize), Vec<Rational>>;

/// Kernels obtained by conditioning the joint law of (ω, closed-loop path)
/// under one fixed policy. Rows exist only for histories the policy realizes.
pub fn kernels_under_policy(
    model: &IntrinsicModel,
    psi: &OrderingFunction,
    im: &ImaginaryModel,
    policy: &PolicyProfile,
) -> Result<(Tally, MeasTally), ReductionError> {
    let n = model.n_dms();
    let mut order: Tally = BTreeMap::new();
    let mut meas: MeasTally = BTreeMap::new();
    for w in model.support() {
        let sol = model.solve_closed_loop(policy, w);
        if sol.len() != 1 {
            return Err(ReductionError::NotSolvable(format!("{} solutions at signal tuple {w}", sol.len())));
        }
        let u = sol[0];
        let ut = model.action_space().decode(u);
        let ctx = im.context_space.index(&context_of(model, &im.context, w));
        let s = psi.order(w, u);
        let p = &model.prior()[w];
        let mut history = Vec::new();
        for &d in &s {
            let y = model.eta_at(d, w, u);
            order.entry((ctx, history.clone())).or_insert_with(|| vec![Rational::zero(); n])[d] += p;
            meas.entry((ctx, history.clone(), d))
                .or_insert_with(|| vec![Rational::zero(); model.dm(d).measurements.len()])[y] += p;
            history.push((d, y, ut[d]));
        }
    }
    for row in order.values_mut().chain(meas.values_mut()) {
        let total: Rational = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= &total);
    }
    Ok((order, meas))
}

/// Recomputes the kernels under `extra + 2` seeded random policies and
/// requires each realized row to equal the policy-free row exactly.
pub fn certify_policy_independence(
    model: &IntrinsicModel,
    psi: &OrderingFunction,
    im: &ImaginaryModel,
    extra: usize,
    seed: u64,
) -> Result<usize, ReductionError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut policies: BTreeSet<PolicyProfile> = BTreeSet::new();
    let wanted = extra + 2;
    let distinct_max = model.policy_space().size().unwrap_or(u128::MAX);
    let mut tries = 0;
    while (policies.len() as u128) < (wanted as u128).min(distinct_max) && tries < 1000 {
        tries += 1;
        let tables = model
            .dms()
            .iter()
            .map(|d| (0..d.measurements.len()).map(|_| rng.gen_range(0..d.actions.len())).collect())
            .collect();
        policies.insert(PolicyProfile { tables });
    }
    for policy in &policies {
        let (order, meas) = kernels_under_policy(model, psi, im, policy)?;
        for (key, row) in &order {
            if im.order_kernel.get(key) != Some(row) {
                return Err(ReductionError::PolicyDependenceDetected { context: key.0, history: key.1.clone() });
            }
        }
        for (key, row) in &meas {
            if im.measurement_kernel.get(key) != Some(row) {
                return Err(ReductionError::PolicyDependenceDetected { context: key.0, history: key.1.clone() });
            }
        }
    }
    Ok(policies.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use num_traits::One;

    fn half() -> Rational {
        Rational::new(1.into(), 2.into())
    }

    fn ctx_index(m: &IntrinsicModel, im: &ImaginaryModel, w0: usize, ws: usize) -> usize {
        let mut v = vec![0; im.context.len()];
        for (k, &j) in im.context.iter().enumerate() {
            v[k] = if m.signals()[j].name == "w0" { w0 } else { ws };
        }
        im.context_space.index(&v)
    }

    #[test]
    fn chance_ordered_kernels() {
        let m = fixtures::example5();
        let psi = m.ordering().unwrap();
        let im = build_imaginary(&m, psi).unwrap();
        assert!(!im.deterministic_order());
        // ω_{s0} = 1, ω_0 = 1: stage 1 is DM 2 and its measurement is forced to 1
        let ctx = ctx_index(&m, &im, 1, 1);
        let row = &im.order_kernel[&(ctx, vec![])];
        assert!(row[1].is_one());
        let y = &im.measurement_kernel[&(ctx, vec![], 1)];
        let one = m.dm(1).measurements.index_of("1").unwrap();
        assert!(y[one].is_one());
        // ω_{s0} = 1, u2 = 1: DM 1 sees y = 0 with probability P(ω_1 = 1) = 1/2
        for w0 in 0..2 {
            let ctx = ctx_index(&m, &im, w0, 1);
            let sym = m.dm(1).measurements.index_of(if w0 == 1 { "1" } else { "1/2" }).unwrap();
            let h = vec![(1, sym, 1)];
            let row = &im.measurement_kernel[&(ctx, h, 0)];
            let zero = m.dm(0).measurements.index_of("0").unwrap();
            assert_eq!(row[zero], half());
        }
    }

    #[test]
    fn kernels_do_not_depend_on_the_policy() {
        let m = fixtures::example5();
        let psi = m.ordering().unwrap();
        let im = build_imaginary(&m, psi).unwrap();
        assert!(certify_policy_independence(&m, psi, &im, 3, 7).unwrap() >= 3);
    }

    #[test]
    fn rows_are_stochastic() {
        let m = fixtures::example5();
        let im = build_imaginary(&m, m.ordering().unwrap()).unwrap();
        for row in im.order_kernel.values().chain(im.measurement_kernel.values()) {
            assert!(row.iter().sum::<Rational>().is_one());
        }
    }

    #[test]
    fn noiseless_models_have_unit_rows() {
        let m = fixtures::single_dm_identity();
        let c = crate::properties::check_c(&m, Default::default());
        let crate::properties::Witness::Ordering(psi) = c.witness else { panic!() };
        let im = build_imaginary(&m, &psi).unwrap();
        for row in im.measurement_kernel.values() {
            assert!(row.iter().all(|p| p.is_zero() || p.is_one()));
        }
    }

    #[test]
    fn non_causal_ordering_is_refused() {
        let m = fixtures::example1();
        let psi = OrderingFunction::Flat(crate::ordering::FlatOrdering::new(
            m.omega_space().clone(),
            m.action_space().clone(),
            vec![vec![0, 1, 2]; 16],
        ));
        assert_eq!(build_imaginary(&m, &psi), Err(ReductionError::NotCausal));
    }
}
