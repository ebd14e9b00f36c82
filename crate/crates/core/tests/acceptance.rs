//! One PASS/FAIL line per acceptance criterion. Exits nonzero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use nsteams::dsl::{parse, parse_model, parse_reduced, serialize, serialize_model, DslErrorKind, LoadError};
use nsteams::fixtures;
use nsteams::generate::{generate_models, GeneratorConfig};
use nsteams::optimize::{compare_argmin, enumerate_optimal, enumerate_optimal_static, Budget};
use nsteams::properties::{
    all_verdicts, audit_implications, check_c, check_ci, check_df, check_sm, replay, CheckOptions, Witness,
};
use nsteams::reduction::{
    build_imaginary, certify_policy_independence, ci_to_c_equivalent, decouple, nested_reduce, static_reduce, Payoff,
    ReferenceKind,
};
use nsteams::simulate::{full_sweep, monte_carlo, realize_path, PathStatus};
use nsteams::{IntrinsicModel, OrderingFunction, PolicyProfile, Rational};
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const CORPUS_SEED: u64 = 20_240_601;
const CORPUS_SIZE: usize = 500;

type Outcome = Result<String, String>;

fn opts() -> CheckOptions {
    CheckOptions::default()
}

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

struct Corpus {
    models: Vec<IntrinsicModel>,
    causal: Vec<(usize, OrderingFunction)>,
}

impl Corpus {
    fn new() -> Self {
        let models = generate_models(&GeneratorConfig::default(), CORPUS_SEED, CORPUS_SIZE);
        let causal = models
            .iter()
            .enumerate()
            .filter_map(|(i, m)| match check_c(m, opts()).witness {
                Witness::Ordering(psi) => Some((i, psi)),
                _ => None,
            })
            .collect();
        Corpus { models, causal }
    }
}

/// The chance-ordered fixture and the causal corpus models, labelled by corpus index.
fn causal_models(corpus: &Corpus) -> Vec<(String, IntrinsicModel, OrderingFunction)> {
    let m = fixtures::example5();
    let psi = m.ordering().unwrap().clone();
    let mut all = vec![("example 5".to_string(), m, psi)];
    all.extend(corpus.causal.iter().map(|(i, p)| (format!("corpus {i}"), corpus.models[*i].clone(), p.clone())));
    all
}

/// Every profile when |Γ| ≤ cap, else `cap` seeded draws.
fn profiles(model: &IntrinsicModel, cap: u128, seed: u64) -> (Vec<PolicyProfile>, bool) {
    let space = model.policy_space();
    match space.size() {
        Some(size) if size <= cap => ((0..size).map(|i| space.policy_at(i)).collect(), true),
        size => {
            let size = size.unwrap_or(u128::MAX);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            ((0..cap).map(|_| space.policy_at(rng.gen_range(0..size))).collect(), false)
        }
    }
}

fn c1(corpus: &Corpus) -> Outcome {
    let mut models = vec![fixtures::example1(), fixtures::example2(), fixtures::example5()];
    models.extend(corpus.models.iter().cloned());
    let start = Instant::now();
    let violations = audit_implications(&models, opts());
    let secs = start.elapsed().as_secs_f64();
    ensure(violations.is_empty(), format!("{} violations, first {:?}", violations.len(), violations.first()))?;
    ensure(secs <= 120.0, format!("audit took {secs:.1}s"))?;
    let mut counts = [0usize; 4];
    for m in &models {
        let v = all_verdicts(m, opts());
        for (k, r) in [&v.sm, &v.df, &v.ci, &v.c].into_iter().enumerate() {
            counts[k] += usize::from(r.verdict);
        }
    }
    Ok(format!("{} models, 0 violations in {secs:.1}s (SM {} DF {} CI {} C {})", models.len(), counts[0], counts[1], counts[2], counts[3]))
}

fn c2() -> Outcome {
    let m1 = fixtures::example1();
    let df = check_df(&m1, opts());
    ensure(!df.verdict && matches!(df.witness, Witness::Deadlock { .. }) && replay(&m1, &df, opts()), "example 1 is not reported as deadlocked")?;

    let m2 = fixtures::example2();
    let sm = check_sm(&m2, opts());
    match &sm.witness {
        Witness::ClosedLoop { policy, omega, solutions } => {
            ensure(!sm.verdict, "example 2 reported solvable")?;
            ensure(*omega == 0, format!("witness at ω = {omega}"))?;
            ensure(policy == &fixtures::example2_copy_policy(&m2), format!("witness policy {policy:?}"))?;
            ensure(solutions.len() != 1, "witness has a unique solution")?;
        }
        w => return Err(format!("example 2 witness {w:?}")),
    }

    let m5 = fixtures::example5();
    let c = check_c(&m5, opts());
    match &c.witness {
        Witness::Ordering(psi) => ensure(c.verdict && Some(psi) == m5.ordering() && replay(&m5, &c, opts()), "ordering witness differs")?,
        w => return Err(format!("example 5 witness {w:?}")),
    }
    Ok("example 1: This system has a deadlock; example 2: This system is not solvable (ω = 0, copy policy); example 5: C with the declared ψ".into())
}

fn c3(corpus: &Corpus) -> Outcome {
    let m = fixtures::example5();
    let r = static_reduce(&m, m.ordering().unwrap(), ReferenceKind::Uniform).map_err(|e| e.to_string())?;
    let (all, _) = profiles(&m, 512, 0);
    ensure(all.len() == 512, "example 5 does not have 512 profiles")?;
    for g in &all {
        ensure(r.expected_cost(g).unwrap() == m.expected_cost(g).unwrap(), format!("example 5 differs at {g:?}"))?;
    }
    let mut checked = 0;
    let mut policies = 0;
    for (i, psi) in &corpus.causal {
        let model = &corpus.models[*i];
        let r = static_reduce(model, psi, ReferenceKind::Uniform).map_err(|e| format!("model {i}: {e}"))?;
        let (gs, _) = profiles(model, 1000, *i as u64);
        for g in &gs {
            ensure(r.expected_cost(g).unwrap() == model.expected_cost(g).unwrap(), format!("model {i} differs at {g:?}"))?;
        }
        checked += 1;
        policies += gs.len();
    }
    ensure(checked >= 50, format!("only {checked} causal models"))?;
    Ok(format!("512/512 on example 5; {checked} causal models, {policies} profiles, all exact"))
}

/// Independent oracle: every profile, every signal tuple, closed loop solved
/// by scanning all action tuples.
fn brute_force_optimum(model: &IntrinsicModel) -> (Rational, Vec<u128>) {
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

fn c4() -> Outcome {
    let m = fixtures::example5();
    let (j, set) = brute_force_optimum(&m);
    ensure(j == Rational::new(1.into(), 2.into()), format!("oracle J* = {j}"))?;
    ensure(set.contains(&0), "γ ≡ 0 not optimal in the oracle")?;
    let r = static_reduce(&m, m.ordering().unwrap(), ReferenceKind::Uniform).map_err(|e| e.to_string())?;
    let dynamic = enumerate_optimal(&m, Budget::default()).map_err(|e| e.to_string())?;
    let reduced = enumerate_optimal_static(&r, Budget::default()).map_err(|e| e.to_string())?;
    ensure(dynamic.value == j && reduced.value == j, "J* differs from the oracle")?;
    ensure(dynamic.argmin == reduced.argmin, "argmin sets differ")?;
    let space = m.policy_space();
    let idx: Vec<u128> = dynamic.argmin.iter().map(|g| space.index_of(g)).collect();
    ensure(idx == set, "argmin differs from the oracle")?;
    ensure(dynamic.representative() == &PolicyProfile::constant(&m, 0), "representative is not γ ≡ 0")?;
    let cmp = compare_argmin(&m, &r, Budget::default()).map_err(|e| e.to_string())?;
    ensure(cmp.verdict && cmp.diff.is_empty(), "compare_argmin disagrees")?;
    Ok(format!("J* = 1/2, |argmin| = {}, γ ≡ 0 included, matches brute force", set.len()))
}

fn c5(corpus: &Corpus) -> Outcome {
    let mut models = 0;
    let mut strict = 0;
    let mut policies = 0;
    for (i, m) in corpus.models.iter().enumerate() {
        if !check_ci(m, opts()).verdict {
            continue;
        }
        let real = ci_to_c_equivalent(m, i as u64).map_err(|e| format!("model {i}: {e}"))?;
        ensure(check_c(&real.model, opts()).verdict, format!("model {i}: realization is not causal"))?;
        let (gs, _) = profiles(m, 4096, i as u64);
        let (gs, _) = if gs.len() as u128 >= 4096 { profiles(m, 1000, i as u64) } else { (gs, true) };
        for g in &gs {
            ensure(real.model.expected_cost(g).unwrap() == m.expected_cost(g).unwrap(), format!("model {i} differs at {g:?}"))?;
        }
        models += 1;
        policies += gs.len();
        strict += usize::from(!check_c(m, opts()).verdict);
    }
    ensure(models > 0, "no CI models in the corpus")?;
    Ok(format!("{models} CI models ({strict} not C), {policies} profiles, all exact"))
}

fn c6(corpus: &Corpus) -> Outcome {
    let mut fewest = usize::MAX;
    let all = causal_models(corpus);
    for (k, m, psi) in &all {
        let im = build_imaginary(m, psi).map_err(|e| format!("model {k}: {e}"))?;
        let n = certify_policy_independence(m, psi, &im, 1, corpus.models.len() as u64 + 1).map_err(|e| format!("model {k}: {e}"))?;
        let distinct = m.policy_space().size().unwrap_or(u128::MAX);
        ensure(n >= 3 || (n as u128) == distinct, format!("model {k}: only {n} policies"))?;
        fewest = fewest.min(n);
    }
    Ok(format!("{} causal models, kernels identical under {fewest} or more policies each (fewer only when Γ is smaller)", all.len()))
}

fn c7() -> Outcome {
    let mut lines = Vec::new();
    for (name, (m, doc)) in [
        ("chain Z2", fixtures::nested_chain(2)),
        ("chain Z3", fixtures::nested_chain(3)),
        ("static Z2", fixtures::nested_static_pair(2)),
        ("static Z3", fixtures::nested_static_pair(3)),
    ] {
        let psi = m.ordering().unwrap().clone();
        let red = nested_reduce(&m, &psi, &doc, 7).map_err(|e| format!("{name}: {e}"))?;
        let space = m.policy_space();
        let size = space.size().unwrap();
        let support = m.support();
        (0..size).into_par_iter().try_for_each(|idx| {
            let g = space.policy_at(idx);
            let s = red.to_static(&g);
            for &w in &support {
                ensure(m.solve_closed_loop(&g, w) == red.static_model.solve_closed_loop(&s, w), format!("{name}: actions differ at policy {idx}, ω {w}"))?;
            }
            ensure(red.to_dynamic(&s) == red.canonical_dynamic(&g), format!("{name}: round trip fails at {idx}"))?;
            ensure(red.to_static(&red.to_dynamic(&s)) == s, format!("{name}: static round trip fails at {idx}"))
        })?;
        let sspace = red.static_model.policy_space();
        for idx in 0..sspace.size().unwrap() {
            let s = sspace.policy_at(idx);
            ensure(red.to_static(&red.to_dynamic(&s)) == s, format!("{name}: static policy {idx} not recovered"))?;
        }
        lines.push(format!("{name} {size}"));
    }
    Ok(format!("agreement on the support for every policy: {}", lines.join(", ")))
}

fn c8(corpus: &Corpus) -> Outcome {
    let mut candidates = vec![fixtures::single_dm_identity(), fixtures::noise_observer()];
    candidates.extend(corpus.models.iter().cloned());
    let mut done = 0;
    let mut skipped = 0;
    for (k, m) in candidates.iter().enumerate() {
        if m.support().len() > 4 || m.action_space().len() > 8 || !check_ci(m, opts()).verdict {
            continue;
        }
        let d = decouple(m, Payoff::Complement).map_err(|e| format!("model {k}: {e}"))?;
        let Some(bf) = d.brute_force_optimum(1 << 21) else {
            skipped += 1;
            continue;
        };
        let orig = d.original_optimum();
        ensure(bf == orig && d.decoupled_optimum() == orig, format!("model {k}: original {orig}, decoupled {bf}"))?;
        done += 1;
    }
    ensure(done >= 10, format!("only {done} decoupling fixtures"))?;
    Ok(format!("{done} models equal by exhaustion over θ and γ ({skipped} above the enumeration budget)"))
}

fn c9() -> Outcome {
    let m = fixtures::example5();
    let psi = m.ordering().unwrap();
    let (all, _) = profiles(&m, 512, 0);
    for g in &all {
        ensure(full_sweep(&m, psi, g).map_err(|e| e.to_string())? == m.expected_cost(g).unwrap(), format!("sweep differs at {g:?}"))?;
    }
    let g = PolicyProfile::constant(&m, 1);
    let exact = m.expected_cost(&g).unwrap().to_f64().unwrap();
    let est = monte_carlo(&m, psi, &g, 100_000, 42).map_err(|e| e.to_string())?;
    let z = (est.mean_f64() - exact).abs() / est.std_error;
    ensure(z <= 3.0, format!("estimate {} vs {exact}: {z:.2} SE", est.mean_f64()))?;
    Ok(format!("full sweep exact on 512 profiles; n = 1e5 estimate {:.4} ± {:.4} vs J = {exact} ({z:.2} SE)", est.mean_f64(), est.std_error))
}

fn c10(corpus: &Corpus) -> Outcome {
    let all = causal_models(corpus);
    let mut pairs = 0u64;
    for (k, m, psi) in &all {
        let space = m.policy_space();
        for idx in 0..space.size().unwrap() {
            let g = space.policy_at(idx);
            for w in m.support() {
                let t = realize_path(m, psi, &g, w);
                ensure(t.status == PathStatus::Completed, format!("model {k}: path {:?} at policy {idx}, ω {w}", t.status))?;
                ensure(t.action_index(m).map(|u| vec![u]) == Some(m.solve_closed_loop(&g, w)), format!("model {k}: differs at policy {idx}, ω {w}"))?;
                pairs += 1;
            }
        }
    }
    Ok(format!("{} causal models, {pairs} (γ, ω) pairs, all equal", all.len()))
}

struct Mutation {
    text: String,
    line: usize,
    kind: Option<DslErrorKind>,
}

/// Deterministic single-line damage with the line it lands on (1-based).
fn mutations(text: &str, rng: &mut ChaCha8Rng) -> Vec<Mutation> {
    let lines: Vec<&str> = text.lines().collect();
    let rows: Vec<usize> = lines.iter().enumerate().filter(|(_, l)| l.starts_with("prior ")).map(|(i, _)| i).collect();
    let pick = rows[rng.gen_range(0..rows.len())];
    let with = |i: usize, new: String| {
        let mut v: Vec<String> = lines.iter().map(|s| s.to_string()).collect();
        v[i] = new;
        v.join("\n") + "\n"
    };
    let row = lines[pick];
    let (head, _) = row.split_once(':').unwrap();
    let mut toks: Vec<&str> = head.split_whitespace().collect();
    toks[1] = "zz";
    let mut out = vec![
        Mutation { text: with(pick, format!("{}: 1/0", head)), line: pick + 1, kind: Some(DslErrorKind::ZeroDenominator) },
        Mutation { text: with(pick, format!("{} : 1/2", toks.join(" "))), line: pick + 1, kind: Some(DslErrorKind::UnknownSymbol) },
        Mutation { text: format!("{text}{row}\n"), line: lines.len() + 1, kind: Some(DslErrorKind::DuplicateRow) },
        Mutation { text: with(pick, format!("colour {row}")), line: pick + 1, kind: Some(DslErrorKind::UnknownSection) },
        Mutation { text: with(pick, head.trim_end().to_string()), line: pick + 1, kind: None },
    ];
    let cut = rng.gen_range(2..lines.len());
    out.push(Mutation { text: with(cut, format!("{} (", lines[cut])), line: cut + 1, kind: None });
    out
}

fn c11(corpus: &Corpus) -> Outcome {
    let mut texts: Vec<String> = vec![fixtures::EXAMPLE1.into(), fixtures::EXAMPLE2.into(), fixtures::EXAMPLE5.into()];
    texts.extend(corpus.models.iter().map(serialize_model));
    let mut docs = 0;
    for (k, t) in texts.iter().enumerate() {
        let once = serialize(&parse(t).map_err(|e| format!("text {k}: {e}"))?);
        let twice = serialize(&parse(&once).map_err(|e| format!("text {k}: {e}"))?);
        ensure(once == twice, format!("text {k}: serialization is not idempotent"))?;
        let m = parse_model(t).map_err(|e| format!("text {k}: {e}"))?;
        ensure(parse_model(&serialize_model(&m)).map_err(|e| e.to_string())? == m, format!("text {k}: model changes"))?;
        docs += 1;
    }
    let m = fixtures::example5();
    let r = static_reduce(&m, m.ordering().unwrap(), ReferenceKind::Uniform).map_err(|e| e.to_string())?;
    let rt = serialize(&nsteams::dsl::Document::StaticReduced(r.clone()));
    ensure(serialize(&parse(&rt).map_err(|e| e.to_string())?) == rt, "reduced document is not idempotent")?;
    ensure(parse_reduced(&rt).map_err(|e| e.to_string())? == r, "reduced model changes")?;
    docs += 1;

    let mut rng = ChaCha8Rng::seed_from_u64(CORPUS_SEED);
    let mut located = 0;
    for (k, t) in texts.iter().enumerate() {
        for mu in mutations(t, &mut rng) {
            let diags = match parse_model(&mu.text) {
                Err(LoadError::Parse(e)) => e.diagnostics,
                other => return Err(format!("text {k}: mutation at line {} gave {:?}", mu.line, other.map(|_| ()))),
            };
            let d = &diags[0];
            ensure(d.line == mu.line && d.col >= 1, format!("text {k}: diagnostic {d} for damage at line {}", mu.line))?;
            if let Some(kind) = mu.kind {
                ensure(d.kind == kind, format!("text {k}: {d}, expected {kind:?}"))?;
            }
            located += 1;
        }
    }
    Ok(format!("{docs} documents idempotent; {located} mutations, every diagnostic on the damaged line"))
}

fn main() -> ExitCode {
    let corpus = Corpus::new();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("implication-chain audit", Box::new(|| c1(&corpus))),
        ("fixture verdicts", Box::new(c2)),
        ("value condition", Box::new(|| c3(&corpus))),
        ("argmin preservation", Box::new(c4)),
        ("CI to C construction", Box::new(|| c5(&corpus))),
        ("policy-independence certificate", Box::new(|| c6(&corpus))),
        ("partially nested reduction", Box::new(c7)),
        ("decoupling", Box::new(|| c8(&corpus))),
        ("simulation consistency", Box::new(c9)),
        ("forward/fixed-point equivalence", Box::new(|| c10(&corpus))),
        ("DSL round-trip", Box::new(|| c11(&corpus))),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS {:>2} {name}: {msg} [{secs:.1}s]", k + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {msg} [{secs:.1}s]", k + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
