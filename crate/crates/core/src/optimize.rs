//! Exhaustive team-optimal policy search and dynamic/static comparison.

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{IntrinsicModel, PolicyProfile, PolicySpace};
use crate::reduction::ReducedStaticModel;
use crate::Rational;

pub const DEFAULT_BUDGET: u128 = 10_000_000;
pub const BUDGET_ENV: &str = "NSTEAMS_BUDGET";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OptimizeError {
    #[error("policy space has {size} profiles, over the budget of {budget}")]
    BudgetExceeded { size: String, budget: u128 },
    #[error("the model is not solvable: {0}")]
    NotSolvable(String),
    #[error("the two models have different policy spaces")]
    ModelMismatch,
    #[error("argmin comparison does not apply to a policy-parameterized reduction")]
    NotApplicable,
}

/// Maximum number of policy evaluations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Budget(pub u128);

impl Default for Budget {
    /// 10^7, or `NSTEAMS_BUDGET` when set to an integer.
    fn default() -> Self {
        Budget(std::env::var(BUDGET_ENV).ok().and_then(|v| v.trim().parse().ok()).unwrap_or(DEFAULT_BUDGET))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OptimizationResult {
    pub value: Rational,
    /// Every optimal profile, in canonical (index) order.
    pub argmin: Vec<PolicyProfile>,
    pub evaluated: u128,
}

impl OptimizationResult {
    /// The lexicographically least optimal profile.
    pub fn representative(&self) -> &PolicyProfile {
        &self.argmin[0]
    }
}

fn checked_size(space: &PolicySpace, budget: Budget) -> Result<u64, OptimizeError> {
    match space.size() {
        Some(s) if s <= budget.0 && s <= u64::MAX as u128 => Ok(s as u64),
        Some(s) => Err(OptimizeError::BudgetExceeded { size: s.to_string(), budget: budget.0 }),
        None => Err(OptimizeError::BudgetExceeded { size: "more than 2^128".into(), budget: budget.0 }),
    }
}

struct Best {
    value: Option<Rational>,
    indices: Vec<u64>,
}

impl Best {
    fn push(mut self, idx: u64, v: Rational) -> Self {
        match &self.value {
            Some(b) if &v > b => {}
            Some(b) if &v == b => self.indices.push(idx),
            _ => {
                self.value = Some(v);
                self.indices = vec![idx];
            }
        }
        self
    }

    /// `self` covers lower indices than `other`, so concatenation keeps order.
    fn merge(self, other: Best) -> Best {
        match (&self.value, &other.value) {
            (None, _) => other,
            (_, None) => self,
            (Some(a), Some(b)) if a < b => self,
            (Some(a), Some(b)) if a > b => other,
            _ => Best { value: self.value, indices: [self.indices, other.indices].concat() },
        }
    }
}

fn search<F>(space: &PolicySpace, budget: Budget, eval: F) -> Result<OptimizationResult, OptimizeError>
where
    F: Fn(&PolicyProfile) -> Result<Rational, OptimizeError> + Sync,
{
    let size = checked_size(space, budget)?;
    let best = (0..size)
        .into_par_iter()
        .try_fold(
            || Best { value: None, indices: Vec::new() },
            |acc, idx| Ok::<_, OptimizeError>(acc.push(idx, eval(&space.policy_at(idx as u128))?)),
        )
        .try_reduce(|| Best { value: None, indices: Vec::new() }, |a, b| Ok(a.merge(b)))?;
    Ok(OptimizationResult {
        value: best.value.expect("policy spaces are nonempty"),
        argmin: best.indices.into_iter().map(|i| space.policy_at(i as u128)).collect(),
        evaluated: size as u128,
    })
}

pub fn enumerate_optimal(model: &IntrinsicModel, budget: Budget) -> Result<OptimizationResult, OptimizeError> {
    search(&model.policy_space(), budget, |g| {
        model.expected_cost(g).map_err(|e| OptimizeError::NotSolvable(e.to_string()))
    })
}

pub fn enumerate_optimal_static(model: &ReducedStaticModel, budget: Budget) -> Result<OptimizationResult, OptimizeError> {
    let q = model.reference_products();
    search(&model.policy_space(), budget, |g| Ok(model.expected_cost_with(g, &q)))
}

/// J(γ) for every profile, in index order.
pub fn policy_values(model: &IntrinsicModel, budget: Budget) -> Result<Vec<Rational>, OptimizeError> {
    let space = model.policy_space();
    let size = checked_size(&space, budget)?;
    (0..size)
        .into_par_iter()
        .map(|i| model.expected_cost(&space.policy_at(i as u128)).map_err(|e| OptimizeError::NotSolvable(e.to_string())))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolicyDiff {
    pub policy: PolicyProfile,
    pub dynamic: Rational,
    pub reduced: Rational,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArgminComparison {
    /// Equal optimal values and identical argmin sets.
    pub verdict: bool,
    pub dynamic: OptimizationResult,
    pub reduced: OptimizationResult,
    /// Profiles whose two values differ, in index order.
    pub diff: Vec<PolicyDiff>,
}

pub fn compare_argmin(
    dynamic: &IntrinsicModel,
    reduced: &ReducedStaticModel,
    budget: Budget,
) -> Result<ArgminComparison, OptimizeError> {
    if reduced.is_policy_parameterized() {
        return Err(OptimizeError::NotApplicable);
    }
    let space = dynamic.policy_space();
    if space.shape() != reduced.policy_space().shape() {
        return Err(OptimizeError::ModelMismatch);
    }
    let size = checked_size(&space, budget)?;
    let q = reduced.reference_products();
    let diff: Vec<PolicyDiff> = (0..size)
        .into_par_iter()
        .map(|i| {
            let g = space.policy_at(i as u128);
            let d = dynamic.expected_cost(&g).map_err(|e| OptimizeError::NotSolvable(e.to_string()))?;
            let r = reduced.expected_cost_with(&g, &q);
            Ok((d != r).then_some(PolicyDiff { policy: g, dynamic: d, reduced: r }))
        })
        .collect::<Result<Vec<_>, OptimizeError>>()?
        .into_iter()
        .flatten()
        .collect();
    let d = enumerate_optimal(dynamic, budget)?;
    let r = enumerate_optimal_static(reduced, budget)?;
    let verdict = d.value == r.value && d.argmin == r.argmin;
    Ok(ArgminComparison { verdict, dynamic: d, reduced: r, diff })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::generate::swap_first_two_dms;
    use crate::reduction::{sm_reduce, static_reduce, ReferenceKind};
    use num_traits::{One, Zero};

    /// Independent oracle: a plain loop over every profile and every signal
    /// tuple, solving each closed loop by brute force over the action tuples.
    fn brute_force(model: &IntrinsicModel) -> (Rational, Vec<u128>) {
        let space = model.policy_space();
        let mut best: Option<(Rational, Vec<u128>)> = None;
        for idx in 0..space.size().unwrap() {
            let g = space.policy_at(idx);
            let mut j = Rational::zero();
            for w in 0..model.omega_space().len() {
                let wd = model.omega_space().decode(w);
                let fixed: Vec<Vec<usize>> = model
                    .action_space()
                    .iter()
                    .filter(|u| (0..model.n_dms()).all(|i| g.tables[i][model.eta(i, &wd, u)] == u[i]))
                    .collect();
                assert_eq!(fixed.len(), 1);
                j += &model.prior()[w] * model.cost(&wd, &fixed[0]);
            }
            match &mut best {
                Some((b, set)) if *b == j => set.push(idx),
                Some((b, _)) if *b < j => {}
                _ => best = Some((j, vec![idx])),
            }
        }
        best.unwrap()
    }

    #[test]
    fn chance_ordered_optimum_against_brute_force() {
        let m = fixtures::example5();
        let (j, set) = brute_force(&m);
        assert_eq!(j, Rational::new(1.into(), 2.into()));
        assert!(set.contains(&0));
        let r = enumerate_optimal(&m, Budget(DEFAULT_BUDGET)).unwrap();
        assert_eq!(r.value, j);
        assert_eq!(r.argmin.iter().map(|g| m.policy_space().index_of(g)).collect::<Vec<_>>(), set);
        assert_eq!(r.representative(), &PolicyProfile::constant(&m, 0));
    }

    #[test]
    fn identity_is_the_unique_optimum() {
        let m = fixtures::single_dm_identity();
        let r = enumerate_optimal(&m, Budget(100)).unwrap();
        assert!(r.value.is_zero());
        assert_eq!(r.argmin, vec![PolicyProfile { tables: vec![vec![0, 1]] }]);
    }

    #[test]
    fn zero_cost_makes_everything_optimal() {
        let m = fixtures::example5();
        let mut spec = m.to_spec();
        spec.cost.rows.values_mut().for_each(|v| *v = Rational::zero());
        let z = crate::model::validate(&spec).unwrap();
        let r = enumerate_optimal(&z, Budget(1000)).unwrap();
        assert_eq!(r.argmin.len(), 512);
    }

    #[test]
    fn budget_is_enforced() {
        let m = fixtures::example5();
        assert!(matches!(enumerate_optimal(&m, Budget(511)), Err(OptimizeError::BudgetExceeded { .. })));
    }

    #[test]
    fn unsolvable_model_is_reported() {
        assert!(matches!(
            enumerate_optimal(&fixtures::example2(), Budget(1000)),
            Err(OptimizeError::NotSolvable(_))
        ));
    }

    #[test]
    fn static_reduction_preserves_the_argmin() {
        let m = fixtures::example5();
        let r = static_reduce(&m, m.ordering().unwrap(), ReferenceKind::Uniform).unwrap();
        let c = compare_argmin(&m, &r, Budget(DEFAULT_BUDGET)).unwrap();
        assert!(c.verdict);
        assert!(c.diff.is_empty());
    }

    #[test]
    fn corrupted_cost_shows_up_in_the_diff() {
        let m = fixtures::example5();
        let mut r = static_reduce(&m, m.ordering().unwrap(), ReferenceKind::Uniform).unwrap();
        let k = r.cost.iter().position(|c| !c.is_zero()).unwrap();
        r.cost[k] += Rational::one();
        let c = compare_argmin(&m, &r, Budget(DEFAULT_BUDGET)).unwrap();
        assert!(!c.diff.is_empty());
    }

    #[test]
    fn parameterized_reductions_are_not_compared() {
        let m = fixtures::example5();
        let g = PolicyProfile::constant(&m, 0);
        let r = sm_reduce(&m, &g, None, ReferenceKind::Uniform).unwrap();
        assert_eq!(compare_argmin(&m, &r, Budget(DEFAULT_BUDGET)), Err(OptimizeError::NotApplicable));
    }

    #[test]
    fn mismatched_shapes_are_refused() {
        let m = fixtures::example5();
        let other = fixtures::single_dm_identity();
        let c = crate::properties::check_c(&other, Default::default());
        let crate::properties::Witness::Ordering(psi) = c.witness else { panic!() };
        let r = static_reduce(&other, &psi, ReferenceKind::Uniform).unwrap();
        assert_eq!(compare_argmin(&m, &r, Budget(DEFAULT_BUDGET)), Err(OptimizeError::ModelMismatch));
    }

    #[test]
    fn relabeling_dms_relabels_the_argmin() {
        let m = fixtures::example5();
        let s = swap_first_two_dms(&m);
        let a = enumerate_optimal(&m, Budget(DEFAULT_BUDGET)).unwrap();
        let b = enumerate_optimal(&s, Budget(DEFAULT_BUDGET)).unwrap();
        assert_eq!(a.value, b.value);
        let mut swapped: Vec<PolicyProfile> = a
            .argmin
            .iter()
            .map(|g| {
                let mut t = g.tables.clone();
                t.swap(0, 1);
                PolicyProfile { tables: t }
            })
            .collect();
        swapped.sort_by_key(|g| s.policy_space().index_of(g));
        assert_eq!(swapped, b.argmin);
    }
}
