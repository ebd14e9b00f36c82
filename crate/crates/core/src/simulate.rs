//! Forward realization of closed-loop paths under an ordering function, and
//! seeded Monte-Carlo estimation of the expected cost.
//!
//! Sampling is reproducible across platforms: samples are split into chunks
//! of [`CHUNK`]; chunk c draws from `ChaCha8Rng::seed_from_u64(seed)` on
//! stream c. Each draw is an integer r uniform on [0, D), where D is the least
//! common denominator of the prior, and maps to the first signal tuple (in
//! canonical order) whose cumulative weight exceeds r.

use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{IntrinsicModel, PolicyProfile};
use crate::ordering::OrderingFunction;
use crate::Rational;

pub const CHUNK: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimulateError {
    #[error("sample count must be positive")]
    EmptySample,
    #[error("path at signal tuple {omega} did not complete ({status:?})")]
    DeadlockEncountered { omega: usize, status: PathStatus },
    #[error("prior denominators exceed 128 bits")]
    PriorTooFine,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PathStatus {
    Completed,
    /// No DM that has not acted yet has its measurement settled by the prefix.
    Deadlock,
    /// The ordering named no DM, or one whose measurement is not yet settled.
    Ambiguous,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathTrace {
    pub omega: usize,
    /// (DM, measurement, action) per stage, in acting order.
    pub stages: Vec<(usize, usize, usize)>,
    pub status: PathStatus,
    /// Set only on completed paths.
    pub cost: Option<Rational>,
}

impl PathTrace {
    pub fn ordering(&self) -> Vec<usize> {
        self.stages.iter().map(|s| s.0).collect()
    }

    /// Action index of a completed path.
    pub fn action_index(&self, model: &IntrinsicModel) -> Option<usize> {
        if self.status != PathStatus::Completed {
            return None;
        }
        let mut u = vec![0; model.n_dms()];
        for &(d, _, a) in &self.stages {
            u[d] = a;
        }
        Some(model.action_space().index(&u))
    }
}

/// η^dm at ω if it is the same for every completion of the fixed actions.
fn settled(model: &IntrinsicModel, dm: usize, omega: usize, fixed: &[Option<usize>]) -> Option<usize> {
    let mut seen = None;
    for (ui, u) in model.action_space().iter().enumerate() {
        if fixed.iter().zip(&u).any(|(f, &a)| f.is_some_and(|f| f != a)) {
            continue;
        }
        let y = model.eta_at(dm, omega, ui);
        match seen {
            None => seen = Some(y),
            Some(s) if s != y => return None,
            _ => {}
        }
    }
    seen
}

pub fn realize_path(model: &IntrinsicModel, psi: &OrderingFunction, policy: &PolicyProfile, omega: usize) -> PathTrace {
    let n = model.n_dms();
    let mut fixed: Vec<Option<usize>> = vec![None; n];
    let mut prefix: Vec<(usize, usize)> = Vec::with_capacity(n);
    let mut stages = Vec::with_capacity(n);
    let stop = |stages, status| PathTrace { omega, stages, status, cost: None };
    while stages.len() < n {
        let pending = |fixed: &[Option<usize>]| {
            (0..n).any(|i| fixed[i].is_none() && settled(model, i, omega, fixed).is_some())
        };
        let Some(d) = psi.next(omega, &prefix).filter(|&d| fixed[d].is_none()) else {
            let status = if pending(&fixed) { PathStatus::Ambiguous } else { PathStatus::Deadlock };
            return stop(stages, status);
        };
        let Some(y) = settled(model, d, omega, &fixed) else {
            let status = if pending(&fixed) { PathStatus::Ambiguous } else { PathStatus::Deadlock };
            return stop(stages, status);
        };
        let a = policy.tables[d][y];
        fixed[d] = Some(a);
        prefix.push((d, a));
        stages.push((d, y, a));
    }
    let u: Vec<usize> = fixed.iter().map(|a| a.expect("all acted")).collect();
    let cost = model.cost(&model.omega_space().decode(omega), &u).clone();
    PathTrace { omega, stages, status: PathStatus::Completed, cost: Some(cost) }
}

/// Σ_ω P(ω)·c along the realized path, over the whole support.
pub fn full_sweep(model: &IntrinsicModel, psi: &OrderingFunction, policy: &PolicyProfile) -> Result<Rational, SimulateError> {
    let mut total = Rational::zero();
    for w in model.support() {
        let t = realize_path(model, psi, policy, w);
        match t.cost {
            Some(c) => total += &model.prior()[w] * c,
            None => return Err(SimulateError::DeadlockEncountered { omega: w, status: t.status }),
        }
    }
    Ok(total)
}

/// Integer weights over the common denominator, as cumulative bounds.
fn cumulative(model: &IntrinsicModel) -> Result<(u128, Vec<u128>), SimulateError> {
    let d = model.prior().iter().fold(num_bigint::BigInt::from(1), |acc, p| acc.lcm(p.denom()));
    let d128 = d.to_u128().ok_or(SimulateError::PriorTooFine)?;
    let mut acc = 0u128;
    let mut bounds = Vec::with_capacity(model.prior().len());
    for p in model.prior() {
        acc += (p.numer() * (&d / p.denom())).to_u128().ok_or(SimulateError::PriorTooFine)?;
        bounds.push(acc);
    }
    Ok((d128, bounds))
}

/// The first `n` sampled signal tuples for `seed`.
pub fn sample_omegas(model: &IntrinsicModel, n: usize, seed: u64) -> Result<Vec<usize>, SimulateError> {
    let (d, bounds) = cumulative(model)?;
    let chunks = n.div_ceil(CHUNK);
    let out: Vec<Vec<usize>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let len = CHUNK.min(n - c * CHUNK);
            (0..len)
                .map(|_| {
                    let r: u128 = rng.gen_range(0..d);
                    bounds.partition_point(|&b| b <= r)
                })
                .collect()
        })
        .collect();
    Ok(out.concat())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Estimate {
    pub samples: usize,
    /// Exact sample mean.
    pub mean: Rational,
    /// Sample standard error of the mean.
    pub std_error: f64,
}

impl Estimate {
    pub fn mean_f64(&self) -> f64 {
        self.mean.to_f64().unwrap_or(f64::NAN)
    }
}

pub fn monte_carlo(
    model: &IntrinsicModel,
    psi: &OrderingFunction,
    policy: &PolicyProfile,
    n: usize,
    seed: u64,
) -> Result<Estimate, SimulateError> {
    if n == 0 {
        return Err(SimulateError::EmptySample);
    }
    let omegas = sample_omegas(model, n, seed)?;
    let mut counts = vec![0u64; model.omega_space().len()];
    for &w in &omegas {
        counts[w] += 1;
    }
    let mut sum = Rational::zero();
    let mut sum_sq = Rational::zero();
    for (w, &k) in counts.iter().enumerate() {
        if k == 0 {
            continue;
        }
        let t = realize_path(model, psi, policy, w);
        let c = t.cost.ok_or(SimulateError::DeadlockEncountered { omega: w, status: t.status })?;
        let k = Rational::from_integer(k.into());
        sum_sq += &k * &c * &c;
        sum += k * c;
    }
    let nr = Rational::from_integer(n.into());
    let mean = &sum / &nr;
    let std_error = if n > 1 {
        let var = (sum_sq - &nr * &mean * &mean) / Rational::from_integer((n - 1).into());
        (var.to_f64().unwrap_or(0.0).max(0.0) / n as f64).sqrt()
    } else {
        0.0
    };
    Ok(Estimate { samples: n, mean, std_error })
}

/// One line per stage: sample, stage, DM (1-based), measurement, action.
pub fn trace_tsv(model: &IntrinsicModel, traces: &[PathTrace]) -> String {
    let mut out = String::from("sample\tstage\tdm\ty\tu\n");
    for (s, t) in traces.iter().enumerate() {
        for (k, &(d, y, a)) in t.stages.iter().enumerate() {
            let dm = model.dm(d);
            out.push_str(&format!("{s}\t{}\t{}\t{}\t{}\n", k + 1, d + 1, dm.measurements.symbol(y), dm.actions.symbol(a)));
        }
        if t.status != PathStatus::Completed {
            out.push_str(&format!("{s}\t{}\t-\t{:?}\t-\n", t.stages.len() + 1, t.status));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::ordering::FlatOrdering;

    fn ws(m: &IntrinsicModel, w: usize) -> usize {
        m.omega_space().decode(w)[m.signal_index("ws").unwrap()]
    }

    #[test]
    fn chance_ordered_orderings() {
        let m = fixtures::example5();
        let psi = m.ordering().unwrap();
        for w in 0..32 {
            if ws(&m, w) != 0 {
                continue;
            }
            // u1 = 1 under the constant-one policy: DM 3 then DM 2
            let t = realize_path(&m, psi, &PolicyProfile::constant(&m, 1), w);
            assert_eq!(t.status, PathStatus::Completed);
            assert_eq!(t.ordering(), vec![0, 2, 1]);
            let t = realize_path(&m, psi, &PolicyProfile::constant(&m, 0), w);
            assert_eq!(t.ordering()[0], 0);
        }
    }

    #[test]
    fn forward_paths_match_the_fixed_point() {
        let m = fixtures::example5();
        let psi = m.ordering().unwrap();
        for idx in 0..512 {
            let g = m.policy_space().policy_at(idx);
            for w in 0..32 {
                let t = realize_path(&m, psi, &g, w);
                assert_eq!(vec![t.action_index(&m).unwrap()], m.solve_closed_loop(&g, w));
            }
            assert_eq!(full_sweep(&m, psi, &g).unwrap(), m.expected_cost(&g).unwrap());
        }
    }

    #[test]
    fn non_causal_ordering_is_ambiguous() {
        let m = fixtures::example5();
        // DM 3 first everywhere: its measurement needs u1 and u2
        let psi = OrderingFunction::Flat(FlatOrdering::new(
            m.omega_space().clone(),
            m.action_space().clone(),
            vec![vec![2, 0, 1]; 32 * 8],
        ));
        let w = (0..32).find(|&w| ws(&m, w) == 0).unwrap();
        let t = realize_path(&m, &psi, &PolicyProfile::constant(&m, 0), w);
        assert_eq!(t.status, PathStatus::Ambiguous);
        assert!(t.stages.is_empty());
    }

    #[test]
    fn deadlocked_model() {
        let m = fixtures::example1();
        let psi = OrderingFunction::Flat(FlatOrdering::new(
            m.omega_space().clone(),
            m.action_space().clone(),
            vec![vec![0, 1, 2]; m.omega_space().len() * m.action_space().len()],
        ));
        let g = PolicyProfile::constant(&m, 0);
        let stuck = m.support().into_iter().map(|w| realize_path(&m, &psi, &g, w)).find(|t| t.status != PathStatus::Completed);
        assert_eq!(stuck.unwrap().status, PathStatus::Deadlock);
        assert!(matches!(monte_carlo(&m, &psi, &g, 1000, 1), Err(SimulateError::DeadlockEncountered { .. })));
    }

    #[test]
    fn sampling_is_reproducible_and_close() {
        let m = fixtures::example5();
        let psi = m.ordering().unwrap();
        let g = PolicyProfile::constant(&m, 0);
        let a = monte_carlo(&m, psi, &g, 20_000, 9).unwrap();
        let b = monte_carlo(&m, psi, &g, 20_000, 9).unwrap();
        assert_eq!(a, b);
        let exact = m.expected_cost(&g).unwrap().to_f64().unwrap();
        assert!((a.mean_f64() - exact).abs() <= 3.0 * a.std_error);
        assert_eq!(sample_omegas(&m, 5000, 9).unwrap()[..100], sample_omegas(&m, 100, 9).unwrap()[..]);
    }

    #[test]
    fn constant_cost_has_no_spread() {
        let m = fixtures::example5();
        let mut spec = m.to_spec();
        spec.cost.rows.values_mut().for_each(|v| *v = Rational::from_integer(3.into()));
        let k = crate::model::validate(&spec).unwrap();
        let e = monte_carlo(&k, k.ordering().unwrap(), &PolicyProfile::constant(&k, 1), 500, 2).unwrap();
        assert_eq!(e.mean, Rational::from_integer(3.into()));
        assert_eq!(e.std_error, 0.0);
    }

    #[test]
    fn empty_sample() {
        let m = fixtures::example5();
        let g = PolicyProfile::constant(&m, 0);
        assert_eq!(monte_carlo(&m, m.ordering().unwrap(), &g, 0, 0), Err(SimulateError::EmptySample));
    }

    #[test]
    fn trace_lines() {
        let m = fixtures::example5();
        let t = realize_path(&m, m.ordering().unwrap(), &PolicyProfile::constant(&m, 0), 0);
        let tsv = trace_tsv(&m, &[t]);
        assert_eq!(tsv.lines().count(), 4);
        assert!(tsv.lines().nth(1).unwrap().starts_with("0\t1\t"));
    }
}
