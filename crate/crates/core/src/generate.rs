//! Seeded random intrinsic models for audits and property tests.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{validate, Alphabet, Arg, DmSpec, IntrinsicModel, MixedRadix, ModelSpec, Signal, SignalRole, TableSpec};
use crate::Rational;

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub max_dms: usize,
    /// Largest action, measurement and signal alphabet.
    pub max_alphabet: usize,
    /// Bound on |Ω|.
    pub max_outcomes: usize,
    pub max_prior_weight: u32,
    pub max_cost: u32,
    /// Chance that a measurement reads a given other DM's action.
    pub action_arg_prob: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig { max_dms: 3, max_alphabet: 3, max_outcomes: 27, max_prior_weight: 4, max_cost: 5, action_arg_prob: 0.5 }
    }
}

/// `count` models drawn from a ChaCha8 stream seeded with `seed`.
pub fn generate_models(cfg: &GeneratorConfig, seed: u64, count: usize) -> Vec<IntrinsicModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| generate_one(cfg, &mut rng)).collect()
}

fn alphabet_size(rng: &mut ChaCha8Rng, lo: usize, cfg: &GeneratorConfig) -> usize {
    rng.gen_range(lo..=cfg.max_alphabet.max(lo))
}

pub fn generate_one(cfg: &GeneratorConfig, rng: &mut ChaCha8Rng) -> IntrinsicModel {
    let n = rng.gen_range(1..=cfg.max_dms.max(1));
    let mut signals = Vec::new();
    let mut outcomes = 1;
    let mut push = |name: &str, role: SignalRole, rng: &mut ChaCha8Rng, signals: &mut Vec<Signal>| {
        let room = cfg.max_outcomes / outcomes;
        if room < 2 {
            return;
        }
        let size = alphabet_size(rng, 2, cfg).min(room);
        outcomes *= size;
        signals.push(Signal { name: name.into(), role, alphabet: Alphabet::range(size) });
    };
    push("w0", SignalRole::Cost, rng, &mut signals);
    if rng.gen_bool(0.5) {
        push("ws", SignalRole::Order, rng, &mut signals);
    }
    if rng.gen_bool(0.5) {
        push("v", SignalRole::Noise, rng, &mut signals);
    }
    let actions: Vec<usize> = (0..n).map(|_| alphabet_size(rng, 2, cfg)).collect();

    let mut dms = Vec::with_capacity(n);
    for i in 0..n {
        let ny = alphabet_size(rng, 1, cfg);
        let mut args: Vec<Arg> = (0..signals.len()).filter(|_| rng.gen_bool(0.5)).map(Arg::Signal).collect();
        args.extend((0..n).filter(|&j| j != i && rng.gen_bool(cfg.action_arg_prob)).map(Arg::Action));
        let sizes = arg_sizes(&args, &signals, &actions);
        let rows = MixedRadix::new(sizes).iter().map(|k| (k, rng.gen_range(0..ny))).collect();
        dms.push(DmSpec {
            actions: Alphabet::range(actions[i]),
            measurements: Alphabet::range(ny),
            observation: TableSpec { args, rows },
            events: Vec::new(),
        });
    }

    let omega = MixedRadix::new(signals.iter().map(|s| s.alphabet.len()).collect());
    let mut weights: Vec<u32> = (0..omega.len()).map(|_| rng.gen_range(0..=cfg.max_prior_weight)).collect();
    if weights.iter().all(|&w| w == 0) {
        let k = rng.gen_range(0..weights.len());
        weights[k] = 1;
    }
    let total: u32 = weights.iter().sum();
    let prior: BTreeMap<Vec<usize>, Rational> = omega
        .iter()
        .zip(&weights)
        .filter(|(_, &w)| w > 0)
        .map(|(k, &w)| (k, Rational::new(w.into(), total.into())))
        .collect();

    let mut cost_args: Vec<Arg> =
        signals.iter().enumerate().filter(|(_, s)| s.role.is_context()).map(|(j, _)| Arg::Signal(j)).collect();
    cost_args.extend((0..n).map(Arg::Action));
    let sizes = arg_sizes(&cost_args, &signals, &actions);
    let cost = MixedRadix::new(sizes)
        .iter()
        .map(|k| (k, Rational::from_integer(rng.gen_range(0..=cfg.max_cost).into())))
        .collect();

    validate(&ModelSpec { signals, dms, prior, cost: TableSpec { args: cost_args, rows: cost }, ordering: None })
        .expect("generated models are valid")
}

fn arg_sizes(args: &[Arg], signals: &[Signal], actions: &[usize]) -> Vec<usize> {
    args.iter()
        .map(|a| match *a {
            Arg::Signal(j) => signals[j].alphabet.len(),
            Arg::Action(j) => actions[j],
        })
        .collect()
}

/// The same model with DMs 1 and 2 exchanged. Any declared ordering is dropped.
pub fn swap_first_two_dms(model: &IntrinsicModel) -> IntrinsicModel {
    let mut spec = model.to_spec();
    if spec.dms.len() < 2 {
        return model.clone().with_ordering(None);
    }
    let swap = |args: &mut Vec<Arg>| {
        for a in args.iter_mut() {
            *a = match *a {
                Arg::Action(0) => Arg::Action(1),
                Arg::Action(1) => Arg::Action(0),
                other => other,
            };
        }
    };
    spec.dms.swap(0, 1);
    for d in &mut spec.dms {
        swap(&mut d.observation.args);
        for e in &mut d.events {
            swap(&mut e.args);
        }
    }
    swap(&mut spec.cost.args);
    spec.ordering = None;
    validate(&spec).expect("relabeling keeps validity")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_within_bounds() {
        let cfg = GeneratorConfig::default();
        let a = generate_models(&cfg, 11, 40);
        let b = generate_models(&cfg, 11, 40);
        assert_eq!(a, b);
        for m in &a {
            assert!((1..=3).contains(&m.n_dms()));
            assert!(m.omega_space().len() <= 27);
            assert!(m.dms().iter().all(|d| d.actions.len() <= 3 && d.measurements.len() <= 3));
            assert!(!m.support().is_empty());
        }
    }

    #[test]
    fn swapping_twice_is_the_identity() {
        for m in generate_models(&GeneratorConfig::default(), 3, 20) {
            assert_eq!(swap_first_two_dms(&swap_first_two_dms(&m)), m);
        }
    }
}
