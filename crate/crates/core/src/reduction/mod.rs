//! Constructions on top of a checked model: the imaginary sequential model,
//! static reductions with and without a policy parameter, the causal
//! realization of a causally implementable model, the partially nested
//! reduction and the simulator decoupling.

mod ci_to_c;
mod decouple;
mod imaginary;
mod nested;
mod static_reduce;

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, Zero};
use thiserror::Error;

use crate::model::{Alphabet, IntrinsicModel, MixedRadix, PolicyProfile, PolicySpace, Signal};
use crate::Rational;

pub use ci_to_c::{ci_to_c_equivalent, CausalRealization, EquivalenceClass};
pub use decouple::{decouple, DecoupledModel, Payoff};
pub use imaginary::{build_imaginary, certify_policy_independence, ImaginaryModel};
pub use nested::{nested_reduce, NestedReduction};
pub use static_reduce::{sm_reduce, static_reduce};

/// One realized imaginary stage: (DM, measurement, action), all 0-based.
pub type Step = (usize, usize, usize);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReductionError {
    #[error("the ordering is not causal for this model")]
    NotCausal,
    #[error("the model is not causally implementable")]
    NotCI,
    #[error("the model is not solvable: {0}")]
    NotSolvable(String),
    #[error("stage kernels depend on the policy at context {context} after {history:?}")]
    PolicyDependenceDetected { context: usize, history: Vec<Step> },
    #[error("marginal reference needs DM {0}'s measurement to ignore all actions")]
    ReferenceUnavailable(usize),
    #[error("h of DM {dm} is not invertible for actions {actions:?} of the DMs below it")]
    NotInvertible { dm: usize, actions: Vec<usize> },
    #[error("the information structure is not partially nested")]
    NotPartiallyNested,
    #[error("invalid decomposition: {0}")]
    BadDecomposition(String),
    #[error("policy does not fit the reduced model: {0}")]
    PolicyShape(String),
    #[error("certificate failed: {0}")]
    CertificateFailed(String),
}

/// How the per-DM reference measure on measurement symbols is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ReferenceKind {
    #[default]
    Uniform,
    /// Q(m_j) = 2^{-j} for symbols j = 1..n-1 (1-based), the remaining mass on the last.
    Dyadic,
    /// The marginal law of the measurement; only for measurements that ignore actions.
    Marginal,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReductionMode {
    PolicyIndependent,
    /// Densities and cost were built from the joint law under `policy`, with
    /// stages taken in `stage_order`.
    PolicyParameterized { policy: PolicyProfile, stage_order: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StaticDm {
    pub actions: Alphabet,
    pub measurements: Alphabet,
}

/// A static team: context signals with a prior, and per-DM exogenous
/// measurements drawn independently from the reference measures. The
/// expected cost of γ is Σ P(ctx) Σ_y ∏ Q_i(y^i) 𝐜(ctx, y, γ(y)).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReducedStaticModel {
    pub mode: ReductionMode,
    pub context: Vec<Signal>,
    pub dms: Vec<StaticDm>,
    /// Dense over the context space.
    pub prior: Vec<Rational>,
    /// Q_i per DM, dense over its measurement alphabet.
    pub reference: Vec<Vec<Rational>>,
    /// Next-actor probabilities per DM, keyed by context index and history.
    pub order_kernel: BTreeMap<(usize, Vec<Step>), Vec<Rational>>,
    /// Densities f = P/Q per measurement symbol, keyed by context, history and acting DM.
    pub densities: BTreeMap<(usize, Vec<Step>, usize), Vec<Rational>>,
    /// Realized orderings s; σ_s sends stage k to DM s[k].
    pub orderings: BTreeSet<Vec<usize>>,
    /// Dense over (context, measurement tuple, action tuple), both tuples by DM.
    pub cost: Vec<Rational>,
}

impl ReducedStaticModel {
    pub fn n_dms(&self) -> usize {
        self.dms.len()
    }

    pub fn context_space(&self) -> MixedRadix {
        MixedRadix::new(self.context.iter().map(|s| s.alphabet.len()).collect())
    }

    pub fn measurement_space(&self) -> MixedRadix {
        MixedRadix::new(self.dms.iter().map(|d| d.measurements.len()).collect())
    }

    pub fn action_space(&self) -> MixedRadix {
        MixedRadix::new(self.dms.iter().map(|d| d.actions.len()).collect())
    }

    pub fn cost_index(&self, ctx: usize, y: usize, u: usize) -> usize {
        (ctx * self.measurement_space().len() + y) * self.action_space().len() + u
    }

    pub fn policy_space(&self) -> PolicySpace {
        PolicySpace::new(
            self.dms.iter().map(|d| d.actions.len()).collect(),
            self.dms.iter().map(|d| d.measurements.len()).collect(),
        )
    }

    pub fn is_policy_parameterized(&self) -> bool {
        matches!(self.mode, ReductionMode::PolicyParameterized { .. })
    }

    /// ∏_i Q_i(y^i) for every measurement tuple.
    pub fn reference_products(&self) -> Vec<Rational> {
        self.measurement_space()
            .iter()
            .map(|y| y.iter().enumerate().map(|(i, &v)| self.reference[i][v].clone()).product())
            .collect()
    }

    pub fn check_policy(&self, policy: &PolicyProfile) -> Result<(), ReductionError> {
        if policy.tables.len() != self.n_dms() {
            return Err(ReductionError::PolicyShape(format!("{} tables for {} DMs", policy.tables.len(), self.n_dms())));
        }
        for (i, (t, d)) in policy.tables.iter().zip(&self.dms).enumerate() {
            if t.len() != d.measurements.len() || t.iter().any(|&a| a >= d.actions.len()) {
                return Err(ReductionError::PolicyShape(format!("table of DM {} does not map its alphabet", i + 1)));
            }
        }
        Ok(())
    }

    /// J_static(γ).
    pub fn expected_cost(&self, policy: &PolicyProfile) -> Result<Rational, ReductionError> {
        self.check_policy(policy)?;
        Ok(self.expected_cost_with(policy, &self.reference_products()))
    }

    /// J_static(γ) given precomputed reference products.
    pub fn expected_cost_with(&self, policy: &PolicyProfile, q: &[Rational]) -> Rational {
        let ys = self.measurement_space();
        let us = self.action_space();
        let mut total = Rational::zero();
        for (ctx, p) in self.prior.iter().enumerate() {
            if p.is_zero() {
                continue;
            }
            let mut inner = Rational::zero();
            for (yi, y) in ys.iter().enumerate() {
                if q[yi].is_zero() {
                    continue;
                }
                let u: Vec<usize> = y.iter().enumerate().map(|(i, &v)| policy.tables[i][v]).collect();
                let c = &self.cost[(ctx * ys.len() + yi) * us.len() + us.index(&u)];
                if !c.is_zero() {
                    inner += &q[yi] * c;
                }
            }
            total += p * inner;
        }
        total
    }
}

pub(crate) fn reference_measure(kind: ReferenceKind, model: &IntrinsicModel, dm: usize) -> Result<Vec<Rational>, ReductionError> {
    let n = model.dm(dm).measurements.len();
    match kind {
        ReferenceKind::Uniform => Ok(vec![Rational::new(1.into(), n.into()); n]),
        ReferenceKind::Dyadic => {
            let mut q = Vec::with_capacity(n);
            let mut left = Rational::one();
            for _ in 0..n - 1 {
                left /= Rational::from_integer(2.into());
                q.push(left.clone());
            }
            q.push(left);
            Ok(q)
        }
        ReferenceKind::Marginal => {
            if (0..model.n_dms()).any(|j| model.dm(dm).observation.depends_on_action(j)) {
                return Err(ReductionError::ReferenceUnavailable(dm));
            }
            let mut q = vec![Rational::zero(); n];
            for w in model.support() {
                q[model.eta_at(dm, w, 0)] += &model.prior()[w];
            }
            Ok(q)
        }
    }
}

/// Context digits (cost and order signals, in declaration order) of ω.
pub(crate) fn context_of(model: &IntrinsicModel, ctx_signals: &[usize], omega: usize) -> Vec<usize> {
    let digits = model.omega_space().decode(omega);
    ctx_signals.iter().map(|&j| digits[j]).collect()
}

/// c(ctx, u): the cost reads only context signals, so noise digits are irrelevant.
pub(crate) fn cost_on_context(model: &IntrinsicModel, ctx_signals: &[usize], ctx: &[usize], u: &[usize]) -> Rational {
    let mut omega = vec![0; model.signals().len()];
    for (&j, &v) in ctx_signals.iter().zip(ctx) {
        omega[j] = v;
    }
    model.cost(&omega, u).clone()
}

pub(crate) fn static_dms(model: &IntrinsicModel) -> Vec<StaticDm> {
    model
        .dms()
        .iter()
        .map(|d| StaticDm { actions: d.actions.clone(), measurements: d.measurements.clone() })
        .collect()
}

pub(crate) fn ctx_prior(model: &IntrinsicModel, ctx_signals: &[usize]) -> (MixedRadix, Vec<Rational>) {
    let space = MixedRadix::new(ctx_signals.iter().map(|&j| model.signals()[j].alphabet.len()).collect());
    let mut prior = vec![Rational::zero(); space.len()];
    for w in model.support() {
        prior[space.index(&context_of(model, ctx_signals, w))] += &model.prior()[w];
    }
    (space, prior)
}
