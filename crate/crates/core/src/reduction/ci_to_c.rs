//! A causal model with the same closed-loop law as a causally implementable one.
//!
//! The imaginary kernels of the original model are realized by inverse
//! sampling from a single auxiliary coordinate `xi` on [0, 1): the unit
//! interval is split by the next-actor law, each piece by the measurement
//! law, and the piece reached is split again for the next stage. The cells
//! of `xi` are the common refinement of every split point over every action
//! path, so each cell behaves like one point.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{build_imaginary, context_of, ImaginaryModel, ReductionError, Step};
use crate::dsl::fmt_rational;
use crate::model::{validate, Alphabet, Arg, DmSpec, IntrinsicModel, ModelSpec, PolicyProfile, Signal, SignalRole, TableSpec};
use crate::ordering::{OrderingFunction, OrderingSpec, TreeKey};
use crate::properties::{check_ci, CheckOptions, Witness};
use crate::Rational;

/// Original signal tuples that no policy can tell apart: same context, and
/// the same ordering and measurements at every joint action.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EquivalenceClass {
    pub context: usize,
    pub members: Vec<usize>,
    pub mass: Rational,
}

#[derive(Clone, Debug)]
pub struct CausalRealization {
    /// Signals are the context signals followed by `xi`; the ordering is causal.
    pub model: IntrinsicModel,
    /// The pointwise ordering of the original model the kernels were taken along.
    pub source_ordering: OrderingFunction,
    /// Left endpoints of the `xi` cells.
    pub cells: Vec<Rational>,
    pub classes: Vec<EquivalenceClass>,
    /// Policies whose closed-loop law was compared, and whether that was all of Γ.
    pub certified: usize,
    pub exhaustive: bool,
}

/// Certificates enumerate Γ up to this size and sample 1000 policies beyond it.
pub const CERTIFICATE_BUDGET: u128 = 4096;

struct Chain<'a> {
    im: &'a ImaginaryModel,
    n: usize,
    actions: Vec<usize>,
}

impl Chain<'_> {
    /// Path reached by x ∈ [0, 1) when DM d plays `act(d, y)`.
    fn path(&self, ctx: usize, x: &Rational, mut act: impl FnMut(usize, usize) -> usize) -> Vec<Step> {
        let mut lo = Rational::zero();
        let mut len = Rational::one();
        let mut history: Vec<Step> = Vec::with_capacity(self.n);
        while history.len() < self.n {
            let order = &self.im.order_kernel[&(ctx, history.clone())];
            let (d, dlo, dlen) = locate(order, x, lo, len);
            let meas = &self.im.measurement_kernel[&(ctx, history.clone(), d)];
            let (y, ylo, ylen) = locate(meas, x, dlo, dlen);
            lo = ylo;
            len = ylen;
            history.push((d, y, act(d, y)));
        }
        history
    }

    fn breakpoints(&self, ctx: usize, history: &mut Vec<Step>, lo: Rational, len: Rational, out: &mut BTreeSet<Rational>) {
        if history.len() == self.n {
            return;
        }
        let order = &self.im.order_kernel[&(ctx, history.clone())];
        let mut dlo = lo;
        for (d, pd) in order.iter().enumerate() {
            if pd.is_zero() {
                continue;
            }
            let dlen = &len * pd;
            let meas = self.im.measurement_kernel[&(ctx, history.clone(), d)].clone();
            let mut ylo = dlo.clone();
            for (y, py) in meas.iter().enumerate() {
                if py.is_zero() {
                    continue;
                }
                let ylen = &dlen * py;
                out.insert(ylo.clone());
                for a in 0..self.actions[d] {
                    history.push((d, y, a));
                    self.breakpoints(ctx, history, ylo.clone(), ylen.clone(), out);
                    history.pop();
                }
                ylo += ylen;
            }
            dlo += dlen;
        }
    }
}

/// Finds the piece of [lo, lo + len) containing x when split by `weights`.
fn locate(weights: &[Rational], x: &Rational, mut lo: Rational, len: Rational) -> (usize, Rational, Rational) {
    let mut last = None;
    for (i, w) in weights.iter().enumerate() {
        if w.is_zero() {
            continue;
        }
        let piece = &len * w;
        if x < &(&lo + &piece) {
            return (i, lo, piece);
        }
        last = Some((i, lo.clone(), piece.clone()));
        lo += piece;
    }
    last.expect("row with positive mass")
}

pub fn ci_to_c_equivalent(model: &IntrinsicModel, seed: u64) -> Result<CausalRealization, ReductionError> {
    let ci = check_ci(model, CheckOptions::default());
    let Witness::Ordering(psi) = ci.witness else { return Err(ReductionError::NotCI) };
    if !ci.verdict {
        return Err(ReductionError::NotCI);
    }
    let im = build_imaginary(model, &psi)?;
    let n = model.n_dms();
    let chain = Chain { im: &im, n, actions: model.dms().iter().map(|d| d.actions.len()).collect() };

    let mut points = BTreeSet::new();
    points.insert(Rational::zero());
    for ctx in 0..im.context_space.len() {
        if !im.context_prior[ctx].is_zero() {
            chain.breakpoints(ctx, &mut Vec::new(), Rational::zero(), Rational::one(), &mut points);
        }
    }
    let cells: Vec<Rational> = points.into_iter().collect();
    let lengths: Vec<Rational> = (0..cells.len())
        .map(|j| cells.get(j + 1).cloned().unwrap_or_else(Rational::one) - &cells[j])
        .collect();

    let c = im.context.len();
    let mut signals: Vec<Signal> = im.context.iter().map(|&j| model.signals()[j].clone()).collect();
    let xi_symbols: Vec<String> = cells.iter().map(fmt_rational).collect();
    signals.push(Signal {
        name: "xi".into(),
        role: SignalRole::Noise,
        alphabet: Alphabet::new(xi_symbols).map_err(|e| ReductionError::CertificateFailed(e.to_string()))?,
    });

    let mut prior = BTreeMap::new();
    for ctx in 0..im.context_space.len() {
        if im.context_prior[ctx].is_zero() {
            continue;
        }
        let mut key = im.context_space.decode(ctx);
        key.push(0);
        for (j, len) in lengths.iter().enumerate() {
            key[c] = j;
            prior.insert(key.clone(), &im.context_prior[ctx] * len);
        }
    }

    // η'_i reads the context, xi and every other DM's action
    let mut dms = Vec::with_capacity(n);
    for i in 0..n {
        let mut args: Vec<Arg> = (0..=c).map(Arg::Signal).collect();
        args.extend((0..n).filter(|&j| j != i).map(Arg::Action));
        let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let mut rows = BTreeMap::new();
        for ctx in 0..im.context_space.len() {
            let cd = im.context_space.decode(ctx);
            for (j, x) in cells.iter().enumerate() {
                for u in model.action_space().iter() {
                    if u[i] != 0 {
                        continue;
                    }
                    let y = if im.context_prior[ctx].is_zero() {
                        0
                    } else {
                        let path = chain.path(ctx, x, |d, _| u[d]);
                        path.iter().find(|s| s.0 == i).expect("every DM acts").1
                    };
                    let mut key = cd.clone();
                    key.push(j);
                    key.extend(others.iter().map(|&o| u[o]));
                    rows.insert(key, y);
                }
            }
        }
        let d = model.dm(i);
        dms.push(DmSpec {
            actions: d.actions.clone(),
            measurements: d.measurements.clone(),
            observation: TableSpec { args, rows },
            events: Vec::new(),
        });
    }

    let cost_spec = model.to_spec().cost;
    let remap = |a: Arg| match a {
        Arg::Signal(j) => Arg::Signal(im.context.iter().position(|&k| k == j).expect("cost reads context only")),
        other => other,
    };
    let cost = TableSpec { args: cost_spec.args.iter().copied().map(remap).collect(), rows: cost_spec.rows };

    // causal tree over (context, xi)
    let mut nodes = BTreeMap::new();
    for ctx in 0..im.context_space.len() {
        let cd = im.context_space.decode(ctx);
        for (j, x) in cells.iter().enumerate() {
            let mut sig = cd.clone();
            sig.push(j);
            for u in model.action_space().iter() {
                let order: Vec<usize> = if im.context_prior[ctx].is_zero() {
                    (0..n).collect()
                } else {
                    chain.path(ctx, x, |d, _| u[d]).iter().map(|s| s.0).collect()
                };
                let mut prefix = Vec::new();
                for &d in &order {
                    nodes.insert(TreeKey { signals: sig.clone(), prefix: prefix.clone() }, d);
                    prefix.push((d, u[d]));
                }
            }
        }
    }
    let spec = ModelSpec {
        signals,
        dms,
        prior,
        cost,
        ordering: Some(OrderingSpec::Tree { args: (0..=c).collect(), nodes }),
    };
    let realized = validate(&spec).map_err(|e| ReductionError::CertificateFailed(e.to_string()))?;

    let classes = equivalence_classes(model, &psi, &im);
    let (certified, exhaustive) = certify_laws(model, &realized, &im, seed)?;
    Ok(CausalRealization { model: realized, source_ordering: psi, cells, classes, certified, exhaustive })
}

fn equivalence_classes(model: &IntrinsicModel, psi: &OrderingFunction, im: &ImaginaryModel) -> Vec<EquivalenceClass> {
    let nu = model.action_space().len();
    let mut groups: BTreeMap<(usize, Vec<(Vec<usize>, Vec<usize>)>), Vec<usize>> = BTreeMap::new();
    for w in model.support() {
        let ctx = im.context_space.index(&context_of(model, &im.context, w));
        let sig = (0..nu)
            .map(|u| (psi.order(w, u), (0..model.n_dms()).map(|i| model.eta_at(i, w, u)).collect()))
            .collect();
        groups.entry((ctx, sig)).or_default().push(w);
    }
    groups
        .into_iter()
        .map(|((context, _), members)| {
            let mass = members.iter().map(|&w| &model.prior()[w]).sum();
            EquivalenceClass { context, members, mass }
        })
        .collect()
}

type Law = BTreeMap<(Vec<usize>, Vec<usize>, Vec<usize>), Rational>;

/// Law of (context, measurements, actions) under γ via the fixed point.
pub(crate) fn closed_loop_law(model: &IntrinsicModel, ctx_signals: &[usize], policy: &PolicyProfile) -> Result<Law, ReductionError> {
    let mut law = Law::new();
    for w in model.support() {
        let sol = model.solve_closed_loop(policy, w);
        if sol.len() != 1 {
            return Err(ReductionError::NotSolvable(format!("{} solutions at signal tuple {w}", sol.len())));
        }
        let y = (0..model.n_dms()).map(|i| model.eta_at(i, w, sol[0])).collect();
        let key = (context_of(model, ctx_signals, w), y, model.action_space().decode(sol[0]));
        *law.entry(key).or_insert_with(Rational::zero) += &model.prior()[w];
    }
    Ok(law)
}

/// Law of the realized model, computed forward along its causal tree.
fn forward_law(realized: &IntrinsicModel, policy: &PolicyProfile) -> Law {
    let psi = realized.ordering().expect("realization carries its ordering");
    let n = realized.n_dms();
    let c = realized.signals().len() - 1;
    let ctx_signals: Vec<usize> = (0..c).collect();
    let mut law = Law::new();
    for w in realized.support() {
        let mut u = vec![0; n];
        let mut y = vec![0; n];
        let mut prefix = Vec::with_capacity(n);
        for _ in 0..n {
            let d = psi.next(w, &prefix).expect("complete tree");
            let yy = realized.eta_at(d, w, realized.action_space().index(&u));
            y[d] = yy;
            u[d] = policy.tables[d][yy];
            prefix.push((d, u[d]));
        }
        let key = (context_of(realized, &ctx_signals, w), y, u);
        *law.entry(key).or_insert_with(Rational::zero) += &realized.prior()[w];
    }
    law
}

fn certify_laws(
    model: &IntrinsicModel,
    realized: &IntrinsicModel,
    im: &ImaginaryModel,
    seed: u64,
) -> Result<(usize, bool), ReductionError> {
    let space = model.policy_space();
    let policies: Vec<PolicyProfile> = match space.size() {
        Some(s) if s <= CERTIFICATE_BUDGET => (0..s).map(|i| space.policy_at(i)).collect(),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..1000)
                .map(|_| PolicyProfile {
                    tables: model
                        .dms()
                        .iter()
                        .map(|d| (0..d.measurements.len()).map(|_| rng.gen_range(0..d.actions.len())).collect())
                        .collect(),
                })
                .collect()
        }
    };
    let exhaustive = space.size().is_some_and(|s| s <= CERTIFICATE_BUDGET);
    for p in &policies {
        let a = closed_loop_law(model, &im.context, p)?;
        let b = forward_law(realized, p);
        if a != b {
            return Err(ReductionError::CertificateFailed(format!("closed-loop laws differ under {:?}", p.tables)));
        }
    }
    Ok((policies.len(), exhaustive))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::properties::check_c;

    #[test]
    fn chance_ordered_realization_is_causal_and_equivalent() {
        let m = fixtures::example5();
        let r = ci_to_c_equivalent(&m, 1).unwrap();
        assert!(r.exhaustive);
        assert_eq!(r.certified, 512);
        assert!(check_c(&r.model, CheckOptions::default()).verdict);
        for idx in (0..512).step_by(17) {
            let g = m.policy_space().policy_at(idx);
            assert_eq!(m.expected_cost(&g).unwrap(), r.model.expected_cost(&g).unwrap());
        }
        let total: Rational = r.classes.iter().map(|c| c.mass.clone()).sum();
        assert!(total.is_one());
    }

    #[test]
    fn deadlocked_model_is_refused() {
        assert!(matches!(ci_to_c_equivalent(&fixtures::example1(), 1), Err(ReductionError::NotCI)));
    }

    #[test]
    fn cells_partition_the_unit_interval() {
        let r = ci_to_c_equivalent(&fixtures::single_dm_identity(), 1).unwrap();
        assert_eq!(r.cells[0], Rational::zero());
        assert!(r.cells.windows(2).all(|w| w[0] < w[1]));
        let mass: Rational = r.model.prior().iter().sum();
        assert!(mass.is_one());
    }
}
