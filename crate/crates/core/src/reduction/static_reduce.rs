//! Change of measure to a static team, policy-free under a causal ordering
//! and parameterized by the policy otherwise.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::Zero;

use super::{
    build_imaginary, context_of, cost_on_context, ctx_prior, reference_measure, static_dms, ImaginaryModel,
    ReducedStaticModel, ReductionError, ReductionMode, ReferenceKind, Step,
};
use crate::model::{IntrinsicModel, PolicyProfile, Scope};
use crate::ordering::OrderingFunction;
use crate::properties::{check_sm, CheckOptions};
use crate::Rational;

fn density_row(kernel: &[Rational], q: &[Rational]) -> Vec<Rational> {
    kernel
        .iter()
        .zip(q)
        .map(|(p, q)| if q.is_zero() { Rational::zero() } else { p / q })
        .collect()
}

/// Policy-independent static reduction along a causal ψ.
///
/// The reduced cost sums, over every ordering the history can realize, the
/// product of next-actor probabilities and densities f = P/Q along the path,
/// times the original cost at the path's actions.
pub fn static_reduce(
    model: &IntrinsicModel,
    psi: &OrderingFunction,
    kind: ReferenceKind,
) -> Result<ReducedStaticModel, ReductionError> {
    let im = build_imaginary(model, psi)?;
    let reference = (0..model.n_dms()).map(|i| reference_measure(kind, model, i)).collect::<Result<Vec<_>, _>>()?;
    let densities: BTreeMap<_, _> = im
        .measurement_kernel
        .iter()
        .map(|(k, row)| (k.clone(), density_row(row, &reference[k.2])))
        .collect();
    let mut out = ReducedStaticModel {
        mode: ReductionMode::PolicyIndependent,
        context: im.context.iter().map(|&j| model.signals()[j].clone()).collect(),
        dms: static_dms(model),
        prior: im.context_prior.clone(),
        reference,
        order_kernel: im.order_kernel.clone(),
        densities,
        orderings: im.orderings.clone(),
        cost: Vec::new(),
    };
    let ys = out.measurement_space();
    let us = out.action_space();
    out.cost = vec![Rational::zero(); im.context_space.len() * ys.len() * us.len()];
    for ctx in 0..im.context_space.len() {
        if im.context_prior[ctx].is_zero() {
            continue;
        }
        let digits = im.context_space.decode(ctx);
        let mut walk = PathWalk { model, im: &im, out: &mut out, ctx, digits: &digits };
        walk.run(&mut Vec::new(), Rational::from_integer(1.into()));
    }
    Ok(out)
}

struct PathWalk<'a> {
    model: &'a IntrinsicModel,
    im: &'a ImaginaryModel,
    out: &'a mut ReducedStaticModel,
    ctx: usize,
    digits: &'a [usize],
}

impl PathWalk<'_> {
    fn run(&mut self, history: &mut Vec<Step>, weight: Rational) {
        let n = self.model.n_dms();
        if history.len() == n {
            let mut y = vec![0; n];
            let mut u = vec![0; n];
            for &(d, yy, a) in history.iter() {
                y[d] = yy;
                u[d] = a;
            }
            let c = cost_on_context(self.model, &self.im.context, self.digits, &u);
            let idx = self.out.cost_index(self.ctx, self.out.measurement_space().index(&y), self.out.action_space().index(&u));
            self.out.cost[idx] += weight * c;
            return;
        }
        let key = (self.ctx, history.clone());
        let order = self.im.order_kernel[&key].clone();
        for (d, pd) in order.iter().enumerate() {
            if pd.is_zero() {
                continue;
            }
            let f = self.out.densities[&(self.ctx, history.clone(), d)].clone();
            for (yy, fy) in f.iter().enumerate() {
                if fy.is_zero() {
                    continue;
                }
                let w = &weight * pd * fy;
                for a in 0..self.model.dm(d).actions.len() {
                    history.push((d, yy, a));
                    self.run(history, w.clone());
                    history.pop();
                }
            }
        }
    }
}

/// Static reduction that holds for one policy: stages follow `stage_order`
/// (DMs 1..N by default) and the densities come from the joint law of
/// (ω, M^γ(ω)). Requires the closed loop to be solvable.
pub fn sm_reduce(
    model: &IntrinsicModel,
    policy: &PolicyProfile,
    stage_order: Option<Vec<usize>>,
    kind: ReferenceKind,
) -> Result<ReducedStaticModel, ReductionError> {
    policy.check_shape(model).map_err(|e| ReductionError::PolicyShape(e.to_string()))?;
    let sm = check_sm(model, CheckOptions { scope: Scope::Support });
    if !sm.verdict {
        return Err(ReductionError::NotSolvable("some policy has no unique closed-loop solution".into()));
    }
    let n = model.n_dms();
    let order = stage_order.unwrap_or_else(|| (0..n).collect());
    let mut sorted = order.clone();
    sorted.sort_unstable();
    if sorted != (0..n).collect::<Vec<_>>() {
        return Err(ReductionError::PolicyShape(format!("stage order {order:?} is not a permutation")));
    }
    let context = model.context_signals();
    let (cspace, cprior) = ctx_prior(model, &context);
    let reference = (0..n).map(|i| reference_measure(kind, model, i)).collect::<Result<Vec<_>, _>>()?;

    // conditional laws of each stage's measurement given the earlier stages
    let mut tallies: BTreeMap<(usize, Vec<Step>, usize), Vec<Rational>> = BTreeMap::new();
    for w in model.support() {
        let sol = model.solve_closed_loop(policy, w);
        let u = sol[0];
        let ut = model.action_space().decode(u);
        let ctx = cspace.index(&context_of(model, &context, w));
        let mut history = Vec::new();
        for &d in &order {
            let y = model.eta_at(d, w, u);
            tallies
                .entry((ctx, history.clone(), d))
                .or_insert_with(|| vec![Rational::zero(); model.dm(d).measurements.len()])[y] += &model.prior()[w];
            history.push((d, y, ut[d]));
        }
    }
    let densities: BTreeMap<_, _> = tallies
        .into_iter()
        .map(|(k, row)| {
            let total: Rational = row.iter().sum();
            let kernel: Vec<Rational> = row.into_iter().map(|m| m / &total).collect();
            let f = density_row(&kernel, &reference[k.2]);
            (k, f)
        })
        .collect();

    let mut out = ReducedStaticModel {
        mode: ReductionMode::PolicyParameterized { policy: policy.clone(), stage_order: order.clone() },
        context: context.iter().map(|&j| model.signals()[j].clone()).collect(),
        dms: static_dms(model),
        prior: cprior,
        reference,
        order_kernel: BTreeMap::new(),
        densities,
        orderings: BTreeSet::from([order.clone()]),
        cost: Vec::new(),
    };
    let ys = out.measurement_space();
    let us = out.action_space();
    out.cost = vec![Rational::zero(); cspace.len() * ys.len() * us.len()];
    for ctx in 0..cspace.len() {
        if out.prior[ctx].is_zero() {
            continue;
        }
        let digits = cspace.decode(ctx);
        for (yi, y) in ys.iter().enumerate() {
            for (ui, u) in us.iter().enumerate() {
                // ∏_k f_k over the stages; zero once a conditioning history has no mass
                let mut weight = Rational::from_integer(1.into());
                let mut history = Vec::with_capacity(n);
                for &d in &order {
                    match out.densities.get(&(ctx, history.clone(), d)) {
                        Some(f) if !f[y[d]].is_zero() => weight *= &f[y[d]],
                        _ => {
                            weight = Rational::zero();
                            break;
                        }
                    }
                    history.push((d, y[d], u[d]));
                }
                if !weight.is_zero() {
                    let idx = out.cost_index(ctx, yi, ui);
                    out.cost[idx] = weight * cost_on_context(model, &context, &digits, &u);
                }
            }
        }
    }
    Ok(out)
}
