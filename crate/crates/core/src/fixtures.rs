//! The three reference models shipped with the crate, plus small helpers.

use std::collections::BTreeMap;

use crate::dsl::{parse_model, ComponentDoc, DecompositionDoc};
use crate::model::{
    validate, Alphabet, Arg, DmSpec, IntrinsicModel, MixedRadix, ModelSpec, PolicyProfile, Signal, SignalRole, TableSpec,
};
use crate::ordering::OrderingSpec;
use crate::Rational;

/// Three DMs whose order depends on an exogenous bit (causal, nonclassical).
pub const EXAMPLE5: &str = include_str!("../fixtures/example5.nst");
/// Three DMs in a cycle of mutual dependence: deadlocks.
pub const EXAMPLE1: &str = include_str!("../fixtures/example1.nst");
/// Two DMs that each see the other's action: not solvable.
pub const EXAMPLE2: &str = include_str!("../fixtures/example2.nst");

pub fn example5() -> IntrinsicModel {
    parse_model(EXAMPLE5).expect("shipped fixture")
}

pub fn example1() -> IntrinsicModel {
    parse_model(EXAMPLE1).expect("shipped fixture")
}

pub fn example2() -> IntrinsicModel {
    parse_model(EXAMPLE2).expect("shipped fixture")
}

/// γ^1(ω, u^2) = u^2 and γ^2(ω, u^1) = u^1.
pub fn example2_copy_policy(model: &IntrinsicModel) -> PolicyProfile {
    let tables = model
        .dms()
        .iter()
        .map(|d| d.measurements.symbols().iter().map(|s| usize::from(s.ends_with('1'))).collect())
        .collect();
    PolicyProfile { tables }
}

/// One DM observing a uniform bit, with cost (u - ω)².
pub fn single_dm_identity() -> IntrinsicModel {
    let half = Rational::new(1.into(), 2.into());
    let mut obs = BTreeMap::new();
    let mut cost = BTreeMap::new();
    let mut prior = BTreeMap::new();
    for w in 0..2 {
        obs.insert(vec![w], w);
        prior.insert(vec![w], half.clone());
        for u in 0..2 {
            cost.insert(vec![w, u], Rational::from_integer(i64::from(w != u).into()));
        }
    }
    validate(&ModelSpec {
        signals: vec![Signal { name: "w".into(), role: SignalRole::Cost, alphabet: Alphabet::range(2) }],
        dms: vec![DmSpec {
            actions: Alphabet::range(2),
            measurements: Alphabet::range(2),
            observation: TableSpec { args: vec![Arg::Signal(0)], rows: obs },
            events: Vec::new(),
        }],
        prior,
        cost: TableSpec { args: vec![Arg::Signal(0), Arg::Action(0)], rows: cost },
        ordering: None,
    })
    .expect("valid")
}

/// DM 1 sees a noise bit v independent of the cost bit w; cost (u − w)².
pub fn noise_observer() -> IntrinsicModel {
    let quarter = Rational::new(1.into(), 4.into());
    let mut prior = BTreeMap::new();
    let mut cost = BTreeMap::new();
    for w in 0..2 {
        for v in 0..2 {
            prior.insert(vec![w, v], quarter.clone());
        }
        for u in 0..2 {
            cost.insert(vec![w, u], Rational::from_integer(i64::from(w != u).into()));
        }
    }
    validate(&ModelSpec {
        signals: vec![
            Signal { name: "w".into(), role: SignalRole::Cost, alphabet: Alphabet::range(2) },
            Signal { name: "v".into(), role: SignalRole::Noise, alphabet: Alphabet::range(2) },
        ],
        dms: vec![DmSpec {
            actions: Alphabet::range(2),
            measurements: Alphabet::range(2),
            observation: TableSpec { args: vec![Arg::Signal(1)], rows: (0..2).map(|v| (vec![v], v)).collect() },
            events: Vec::new(),
        }],
        prior,
        cost: TableSpec { args: vec![Arg::Signal(0), Arg::Action(0)], rows: cost },
        ordering: None,
    })
    .expect("valid")
}

fn flat_order(signals: &[Signal], actions: &[usize], perm: Vec<usize>) -> OrderingSpec {
    let radix = MixedRadix::new(signals.iter().map(|s| s.alphabet.len()).chain(actions.iter().copied()).collect());
    OrderingSpec::Flat(radix.iter().map(|k| (k, perm.clone())).collect())
}

/// Two DMs over Z_m: DM 1 sees ω_1, DM 2 sees (ω_1, ω_2 + u^1 mod m). The
/// decomposition has g_1 = ω_1, g_2 = ω_2 and h_2(g, u^1) = g + u^1.
pub fn nested_chain(m: usize) -> (IntrinsicModel, DecompositionDoc) {
    nested_pair(m, true)
}

/// As [`nested_chain`] but DM 2 sees (ω_1, ω_2) and h_2 ignores u^1.
pub fn nested_static_pair(m: usize) -> (IntrinsicModel, DecompositionDoc) {
    nested_pair(m, false)
}

fn nested_pair(m: usize, shifted: bool) -> (IntrinsicModel, DecompositionDoc) {
    let signals = vec![
        Signal { name: "w1".into(), role: SignalRole::Cost, alphabet: Alphabet::range(m) },
        Signal { name: "w2".into(), role: SignalRole::Cost, alphabet: Alphabet::range(m) },
    ];
    let pair_names: Vec<String> = (0..m * m).map(|k| format!("{}.{}", k / m, k % m)).collect();
    let shift = |g: usize, u: usize| if shifted { (g + u) % m } else { g };
    let mut obs1 = BTreeMap::new();
    let mut obs2 = BTreeMap::new();
    let mut prior = BTreeMap::new();
    let mut cost = BTreeMap::new();
    let p = Rational::new(1.into(), ((m * m) as i64).into());
    for w1 in 0..m {
        obs1.insert(vec![w1], w1);
        for w2 in 0..m {
            prior.insert(vec![w1, w2], p.clone());
            for u1 in 0..m {
                obs2.insert(vec![w1, w2, u1], w1 * m + shift(w2, u1));
                for u2 in 0..m {
                    let c = i64::from(u1 != w1) + i64::from(u2 != (w1 + w2) % m);
                    cost.insert(vec![w1, w2, u1, u2], Rational::from_integer(c.into()));
                }
            }
        }
    }
    let model = validate(&ModelSpec {
        ordering: Some(flat_order(&signals, &[m, m], vec![0, 1])),
        signals,
        dms: vec![
            DmSpec {
                actions: Alphabet::range(m),
                measurements: Alphabet::range(m),
                observation: TableSpec { args: vec![Arg::Signal(0)], rows: obs1 },
                events: Vec::new(),
            },
            DmSpec {
                actions: Alphabet::range(m),
                measurements: Alphabet::new(pair_names).expect("distinct"),
                observation: TableSpec { args: vec![Arg::Signal(0), Arg::Signal(1), Arg::Action(0)], rows: obs2 },
                events: Vec::new(),
            },
        ],
        prior,
        cost: TableSpec { args: vec![Arg::Signal(0), Arg::Signal(1), Arg::Action(0), Arg::Action(1)], rows: cost },
    })
    .expect("valid");

    let sym = |k: usize| k.to_string();
    let mut doc = DecompositionDoc::default();
    doc.components.insert(
        0,
        ComponentDoc {
            below: vec![],
            g_args: vec!["w1".into()],
            g_rows: (0..m).map(|v| (vec![sym(v)], sym(v))).collect(),
            h_rows: (0..m).map(|v| ((sym(v), vec![]), sym(v))).collect(),
        },
    );
    let mut h_rows = BTreeMap::new();
    for g in 0..m {
        for u in 0..m {
            h_rows.insert((sym(g), vec![sym(u)]), sym(shift(g, u)));
        }
    }
    doc.components.insert(
        1,
        ComponentDoc {
            below: vec![0],
            g_args: vec!["w2".into()],
            g_rows: (0..m).map(|v| (vec![sym(v)], sym(v))).collect(),
            h_rows,
        },
    );
    (model, doc)
}
