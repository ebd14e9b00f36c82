//! Sequential decoupling: a simulator DM 0 guesses the joint action from ω,
//! the original DMs react to the guess, and the payoff only counts when the
//! guess matches what they actually did.

use std::collections::BTreeMap;

use num_traits::{Signed, Zero};

use super::ReductionError;
use crate::model::{validate, Alphabet, Arg, DmSpec, IntrinsicModel, MixedRadix, ModelSpec, PolicyProfile, TableSpec};
use crate::ordering::OrderingSpec;
use crate::properties::{check_ci, CheckOptions};
use crate::Rational;

/// The payoff V(ω, u) that the decoupled problem maximizes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Payoff {
    /// V = c_max − c. Nonnegative, so a wrong simulation can never beat a right one.
    #[default]
    Complement,
    /// V = −c. A wrong simulation earns 0, which beats every positive cost:
    /// the optima generally differ.
    NegCost,
}

#[derive(Clone, Debug)]
pub struct DecoupledModel {
    pub original: IntrinsicModel,
    pub payoff: Payoff,
    /// Largest entry of the original cost table.
    pub c_max: Rational,
    /// N+1 DMs: DM 1 is the simulator, DM k+1 is original DM k. Its cost is
    /// K − V(ω, u)·1{û = u} with K = c_max for the complement payoff and 0
    /// for the negated cost, so minimizing it maximizes the payoff.
    pub model: IntrinsicModel,
}

pub fn decouple(model: &IntrinsicModel, payoff: Payoff) -> Result<DecoupledModel, ReductionError> {
    if !check_ci(model, CheckOptions::default()).verdict {
        return Err(ReductionError::NotCI);
    }
    let c_max = model.cost_table().values().iter().max().cloned().unwrap_or_else(Rational::zero);
    let n = model.n_dms();
    let ns = model.signals().len();
    let us = model.action_space();
    let omega_names: Vec<String> = model
        .omega_space()
        .iter()
        .map(|w| w.iter().enumerate().map(|(j, &v)| model.signals()[j].alphabet.symbol(v)).collect::<Vec<_>>().join("."))
        .collect();
    let joint_names: Vec<String> = us
        .iter()
        .map(|u| u.iter().enumerate().map(|(i, &a)| model.dm(i).actions.symbol(a)).collect::<Vec<_>>().join("."))
        .collect();
    let bad = |e: &dyn std::fmt::Display| ReductionError::BadDecomposition(e.to_string());

    let all_signals: Vec<Arg> = (0..ns).map(Arg::Signal).collect();
    let mut dms = vec![DmSpec {
        actions: Alphabet::new(joint_names).map_err(|e| bad(&e))?,
        measurements: Alphabet::new(omega_names).map_err(|e| bad(&e))?,
        observation: TableSpec {
            args: all_signals.clone(),
            rows: model.omega_space().iter().enumerate().map(|(k, w)| (w, k)).collect(),
        },
        events: Vec::new(),
    }];
    for (i, d) in model.dms().iter().enumerate() {
        let sig_args: Vec<usize> = d
            .observation
            .args()
            .iter()
            .filter_map(|a| if let Arg::Signal(j) = a { Some(*j) } else { None })
            .collect();
        let reads_actions = (0..n).any(|j| d.observation.depends_on_action(j));
        let mut sizes: Vec<usize> = sig_args.iter().map(|&j| model.signals()[j].alphabet.len()).collect();
        if reads_actions {
            sizes.push(us.len());
        }
        let mut rows = BTreeMap::new();
        for key in MixedRadix::new(sizes).iter() {
            let mut w = vec![0; ns];
            for (&j, &v) in sig_args.iter().zip(&key) {
                w[j] = v;
            }
            let u = if reads_actions { us.decode(key[sig_args.len()]) } else { vec![0; n] };
            rows.insert(key, model.eta(i, &w, &u));
        }
        let mut args: Vec<Arg> = sig_args.iter().map(|&j| Arg::Signal(j)).collect();
        if reads_actions {
            args.push(Arg::Action(0));
        }
        dms.push(DmSpec {
            actions: d.actions.clone(),
            measurements: d.measurements.clone(),
            observation: TableSpec { args, rows },
            events: Vec::new(),
        });
    }

    let k = match payoff {
        Payoff::Complement => c_max.clone(),
        Payoff::NegCost => Rational::zero(),
    };
    // the cost reads only cost and order signals
    let ctx = model.context_signals();
    let ctx_space = MixedRadix::new(ctx.iter().map(|&j| model.signals()[j].alphabet.len()).collect());
    let mut cost_rows = BTreeMap::new();
    for cv in ctx_space.iter() {
        let mut w = vec![0; ns];
        for (&j, &v) in ctx.iter().zip(&cv) {
            w[j] = v;
        }
        for (hat, _) in us.iter().enumerate() {
            for (ui, u) in us.iter().enumerate() {
                let v = if hat == ui { value(payoff, &c_max, model.cost(&w, &u)) } else { Rational::zero() };
                let mut key = cv.clone();
                key.push(hat);
                key.extend(&u);
                cost_rows.insert(key, &k - v);
            }
        }
    }
    let mut cost_args: Vec<Arg> = ctx.iter().map(|&j| Arg::Signal(j)).collect();
    cost_args.extend((0..=n).map(Arg::Action));
    let spec = ModelSpec {
        signals: model.signals().to_vec(),
        dms,
        prior: model.to_spec().prior,
        cost: TableSpec { args: cost_args, rows: cost_rows },
        ordering: Some(OrderingSpec::Flat(
            MixedRadix::new(
                model
                    .signals()
                    .iter()
                    .map(|s| s.alphabet.len())
                    .chain(std::iter::once(us.len()))
                    .chain(us.sizes().iter().copied())
                    .collect(),
            )
            .iter()
            .map(|key| (key, (0..=n).collect()))
            .collect(),
        )),
    };
    let decoupled = validate(&spec).map_err(|e| bad(&e))?;
    Ok(DecoupledModel { original: model.clone(), payoff, c_max, model: decoupled })
}

fn value(payoff: Payoff, c_max: &Rational, c: &Rational) -> Rational {
    match payoff {
        Payoff::Complement => c_max - c,
        Payoff::NegCost => -c,
    }
}

impl DecoupledModel {
    pub fn payoff_at(&self, omega: usize, u: usize) -> Rational {
        let w = self.original.omega_space().decode(omega);
        let ut = self.original.action_space().decode(u);
        value(self.payoff, &self.c_max, self.original.cost(&w, &ut))
    }

    /// Actions of the original DMs when they react to the guess `hat` at ω.
    pub fn react(&self, policy: &PolicyProfile, omega: usize, hat: usize) -> usize {
        let u: Vec<usize> =
            (0..self.original.n_dms()).map(|i| policy.tables[i][self.original.eta_at(i, omega, hat)]).collect();
        self.original.action_space().index(&u)
    }

    /// E[V(ω, u)·1{û = u}] where θ gives û per supported ω (in support order).
    pub fn expected_payoff(&self, theta: &[usize], policy: &PolicyProfile) -> Rational {
        self.original
            .support()
            .iter()
            .zip(theta)
            .map(|(&w, &hat)| {
                if self.react(policy, w, hat) == hat {
                    &self.original.prior()[w] * self.payoff_at(w, hat)
                } else {
                    Rational::zero()
                }
            })
            .sum()
    }

    /// max_γ E[V(ω, M^γ(ω))] on the original model.
    pub fn original_optimum(&self) -> Rational {
        let space = self.original.policy_space();
        let size = space.size().expect("finite policy space");
        (0..size)
            .map(|idx| {
                let g = space.policy_at(idx);
                self.original
                    .support()
                    .iter()
                    .map(|&w| {
                        let sol = self.original.solve_closed_loop(&g, w);
                        &self.original.prior()[w] * self.payoff_at(w, sol[0])
                    })
                    .sum::<Rational>()
            })
            .max()
            .expect("nonempty policy space")
    }

    /// max over (θ, γ) of the decoupled payoff. For fixed γ the best θ is
    /// chosen separately at each ω, so only γ is enumerated.
    pub fn decoupled_optimum(&self) -> Rational {
        let space = self.original.policy_space();
        let size = space.size().expect("finite policy space");
        let nu = self.original.action_space().len();
        (0..size)
            .map(|idx| {
                let g = space.policy_at(idx);
                self.original
                    .support()
                    .iter()
                    .map(|&w| {
                        let best = (0..nu)
                            .map(|hat| if self.react(&g, w, hat) == hat { self.payoff_at(w, hat) } else { Rational::zero() })
                            .max()
                            .expect("nonempty action space");
                        &self.original.prior()[w] * best
                    })
                    .sum::<Rational>()
            })
            .max()
            .expect("nonempty policy space")
    }

    /// Joint enumeration over θ (restricted to the support) and γ. None if
    /// the product of the two space sizes exceeds `budget`.
    pub fn brute_force_optimum(&self, budget: u128) -> Option<Rational> {
        let support = self.original.support();
        let nu = self.original.action_space().len() as u128;
        let thetas = nu.checked_pow(support.len() as u32)?;
        let space = self.original.policy_space();
        let size = space.size()?;
        if thetas.checked_mul(size)? > budget {
            return None;
        }
        let theta_space = MixedRadix::new(vec![nu as usize; support.len()]);
        let mut best: Option<Rational> = None;
        for idx in 0..size {
            let g = space.policy_at(idx);
            for theta in theta_space.iter() {
                let v = self.expected_payoff(&theta, &g);
                if best.as_ref().is_none_or(|b| &v > b) {
                    best = Some(v);
                }
            }
        }
        best
    }

    /// True when every payoff is nonnegative, which is what makes the
    /// indicator harmless.
    pub fn payoff_is_nonnegative(&self) -> bool {
        let nu = self.original.action_space().len();
        self.original.support().iter().all(|&w| (0..nu).all(|u| !self.payoff_at(w, u).is_negative()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::optimize::{enumerate_optimal, Budget};

    #[test]
    fn chance_ordered_optima_agree() {
        let m = fixtures::example5();
        let d = decouple(&m, Payoff::Complement).unwrap();
        assert_eq!(d.c_max, Rational::from_integer(4.into()));
        let orig = d.original_optimum();
        // c_max − J* with J* = 1/2
        assert_eq!(orig, Rational::new(7.into(), 2.into()));
        assert_eq!(d.decoupled_optimum(), orig);
    }

    #[test]
    fn negated_cost_lets_wrong_simulations_win() {
        let m = fixtures::example5();
        let d = decouple(&m, Payoff::NegCost).unwrap();
        assert!(!d.payoff_is_nonnegative());
        assert_eq!(d.original_optimum(), Rational::new((-1).into(), 2.into()));
        assert_eq!(d.decoupled_optimum(), Rational::zero());
    }

    #[test]
    fn single_dm_brute_force_matches() {
        let m = fixtures::single_dm_identity();
        let d = decouple(&m, Payoff::Complement).unwrap();
        assert_eq!(d.model.n_dms(), 2);
        let bf = d.brute_force_optimum(1 << 20).unwrap();
        assert_eq!(bf, d.original_optimum());
        assert_eq!(bf, d.decoupled_optimum());
        // minimizing the decoupled cost gives K − optimum
        let opt = enumerate_optimal(&d.model, Budget::default()).unwrap();
        assert_eq!(opt.value, &d.c_max - bf);
    }

    #[test]
    fn wrong_constant_simulation_earns_nothing() {
        let m = fixtures::single_dm_identity();
        let d = decouple(&m, Payoff::Complement).unwrap();
        let space = m.policy_space();
        for idx in 0..space.size().unwrap() {
            let g = space.policy_at(idx);
            for hat in 0..2 {
                let wrong = m.support().iter().all(|&w| m.solve_closed_loop(&g, w)[0] != hat);
                if wrong {
                    assert!(d.expected_payoff(&[hat, hat], &g).is_zero());
                }
            }
        }
    }

    #[test]
    fn deadlocking_model_is_refused() {
        assert!(matches!(decouple(&fixtures::example1(), Payoff::Complement), Err(ReductionError::NotCI)));
    }
}
