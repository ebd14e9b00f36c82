//! Command-line adapter over the `nsteams` library.
//!
//! `run` never exits the process: it returns the exit code together with a
//! human report and, where one exists, a JSON report with sorted keys.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nsteams::dsl::{
    parse_decomposition, parse_model, parse_policy, parse_reduced, serialize, serialize_model, Document, LoadError,
    PolicyDoc,
};
use nsteams::generate::{generate_models, GeneratorConfig};
use nsteams::optimize::{compare_argmin, enumerate_optimal, Budget, OptimizeError};
use nsteams::properties::{
    check_c, check_ci, check_df, check_rcs_declared, check_sm, classify, CheckOptions, PropertyError, PropertyReport,
    Witness,
};
use nsteams::reduction::{
    build_imaginary, certify_policy_independence, decouple, nested_reduce, sm_reduce, static_reduce, Payoff,
    ReducedStaticModel, ReductionError, ReferenceKind,
};
use nsteams::simulate::{monte_carlo, realize_path, sample_omegas, trace_tsv};
use nsteams::{IntrinsicModel, OrderingFunction, PolicyProfile, Rational, Scope};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

/// Profiles checked exhaustively below this count, sampled above it.
const CERTIFY_EXHAUSTIVE: u128 = 4096;
const CERTIFY_SAMPLES: u128 = 1000;

#[derive(Clone, Debug, PartialEq)]
pub struct CommandOutcome {
    /// 0 ok, 1 property false or verification failed, 2 usage or parse error.
    pub code: u8,
    pub human: String,
    pub machine: Option<Value>,
    /// `--json` was given: print `machine` instead of `human`.
    pub json: bool,
}

#[derive(Parser, Debug)]
#[command(name = "nsteams", version, about = "Exact analysis of finite non-sequential stochastic teams")]
struct Cli {
    /// Print the machine-readable report instead of the human one.
    #[arg(long, global = true)]
    json: bool,
    /// Worker threads for enumeration and certificates (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decide information-structure properties.
    Check {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = PropertyArg::All)]
        property: PropertyArg,
        #[arg(long, value_enum, default_value_t = ScopeArg::Support)]
        scope: ScopeArg,
    },
    /// Build a reduced model and certify it.
    Reduce(ReduceArgs),
    /// Enumerate optimal policies, and compare with a static reduction.
    Optimize {
        file: PathBuf,
        #[arg(long)]
        reduced: Option<PathBuf>,
    },
    /// Sample the realized-ordering process.
    Simulate {
        file: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write one TSV line per stage of every sampled path.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Check J_dynamic(γ) = J_static(γ) over every profile.
    Verify { dynamic: PathBuf, reduced: PathBuf },
    /// Write a batch of random models.
    Generate {
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        max_dms: usize,
        #[arg(long, default_value_t = 3)]
        max_alphabet: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct ReduceArgs {
    file: PathBuf,
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// Policy file; required by `--mode sm`.
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Decomposition file; required by `--mode nested`.
    #[arg(long)]
    decomposition: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReferenceArg::Uniform)]
    reference: ReferenceArg,
    /// 1-based DMs in stage order, for `--mode sm`.
    #[arg(long, num_args = 1.., value_delimiter = ' ')]
    stage_order: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value_t = PayoffArg::Complement)]
    payoff: PayoffArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PropertyArg {
    Sm,
    Df,
    Ci,
    C,
    Rcs,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ScopeArg {
    Support,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    PolicyFree,
    Sm,
    Nested,
    Decouple,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ReferenceArg {
    Uniform,
    Dyadic,
    Marginal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PayoffArg {
    Complement,
    NegCost,
}

/// Failures that are not a verdict: bad input, budgets, I/O.
struct Usage(anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for Usage {
    fn from(e: E) -> Self {
        Usage(e.into())
    }
}

type Res = Result<CommandOutcome, Usage>;

fn outcome(ok: bool, human: String, machine: Value) -> CommandOutcome {
    CommandOutcome { code: if ok { 0 } else { 1 }, human, machine: Some(machine), json: false }
}

pub fn run<I, T>(argv: I) -> CommandOutcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            return CommandOutcome { code, human: e.render().to_string(), machine: None, json: false };
        }
    };
    if let Some(n) = cli.jobs {
        // fails only if a pool already exists, which keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let result = match cli.command {
        Command::Check { file, property, scope } => check(&file, property, scope),
        Command::Reduce(args) => reduce(&args),
        Command::Optimize { file, reduced } => optimize(&file, reduced.as_deref()),
        Command::Simulate { file, policy, samples, seed, trace } => simulate(&file, &policy, samples, seed, trace.as_deref()),
        Command::Verify { dynamic, reduced } => verify(&dynamic, &reduced),
        Command::Generate { count, seed, max_dms, max_alphabet, output } => generate(count, seed, max_dms, max_alphabet, output.as_deref()),
    };
    match result {
        Ok(mut out) => {
            out.json = cli.json;
            out
        }
        Err(Usage(e)) => CommandOutcome { code: 2, human: format!("error: {e:#}\n"), machine: None, json: false },
    }
}

// ---------------------------------------------------------------- input

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn located(path: &Path, e: LoadError) -> anyhow::Error {
    match e {
        LoadError::Parse(d) => {
            let lines: Vec<String> = d.diagnostics.iter().map(|x| format!("{}:{x}", path.display())).collect();
            anyhow!(lines.join("\n"))
        }
        other => anyhow!("{}: {other}", path.display()),
    }
}

pub fn load_model(path: &Path) -> anyhow::Result<IntrinsicModel> {
    parse_model(&read(path)?).map_err(|e| located(path, e))
}

fn load_policy(path: &Path, model: &IntrinsicModel) -> anyhow::Result<PolicyProfile> {
    let doc = parse_policy(&read(path)?).map_err(|e| located(path, e))?;
    doc.resolve(model).map_err(|e| anyhow!("{}: {e}", path.display()))
}

fn write_or_inline(output: Option<&Path>, doc: &str, human: &mut String, machine: &mut Value) -> anyhow::Result<()> {
    match output {
        Some(p) => fs::write(p, doc).with_context(|| format!("cannot write {}", p.display())),
        None => {
            machine["document"] = json!(doc);
            // summary lines follow as comments, so stdout stays a valid document
            let summary = std::mem::take(human);
            human.push_str(doc);
            for l in summary.lines() {
                human.push_str(&format!("# {l}\n"));
            }
            Ok(())
        }
    }
}

// ---------------------------------------------------------------- rendering

fn omega_text(model: &IntrinsicModel, w: usize) -> String {
    let digits = model.omega_space().decode(w);
    model.signals().iter().zip(digits).map(|(s, d)| format!("{}={}", s.name, s.alphabet.symbol(d))).collect::<Vec<_>>().join(" ")
}

fn actions_text(model: &IntrinsicModel, u: usize) -> String {
    let digits = model.action_space().decode(u);
    digits.iter().enumerate().map(|(i, &a)| format!("u{}={}", i + 1, model.dm(i).actions.symbol(a))).collect::<Vec<_>>().join(" ")
}

fn pairs_text(model: &IntrinsicModel, acted: &[(usize, usize)]) -> Vec<String> {
    acted.iter().map(|&(d, a)| format!("u{}={}", d + 1, model.dm(d).actions.symbol(a))).collect()
}

pub fn policy_text(model: &IntrinsicModel, policy: &PolicyProfile) -> String {
    serialize(&Document::Policy(PolicyDoc::from_profile(model, policy)))
}

/// The `ordering` lines of the model with ψ declared.
pub fn ordering_text(model: &IntrinsicModel, psi: &OrderingFunction) -> String {
    let text = serialize_model(&model.clone().with_ordering(Some(psi.clone())));
    text.lines().filter(|l| l.starts_with("ordering")).map(|l| format!("{l}\n")).collect()
}

fn witness_json(model: &IntrinsicModel, w: &Witness) -> Value {
    match w {
        Witness::None => Value::Null,
        Witness::Ordering(psi) => json!({ "kind": "ordering", "ordering": ordering_text(model, psi) }),
        Witness::ClosedLoop { policy, omega, solutions } => json!({
            "kind": "closed-loop",
            "omega": omega,
            "signals": omega_text(model, *omega),
            "policy": policy_text(model, policy),
            "solutions": solutions.iter().map(|&u| actions_text(model, u)).collect::<Vec<_>>(),
        }),
        Witness::Deadlock { policy, omega, acted } => json!({
            "kind": "deadlock",
            "omega": omega,
            "signals": omega_text(model, *omega),
            "policy": policy_text(model, policy),
            "acted": pairs_text(model, acted),
        }),
        Witness::Outcome { omega, u, acted } => json!({
            "kind": "outcome",
            "omega": omega,
            "signals": omega_text(model, *omega),
            "actions": actions_text(model, *u),
            "acted": acted.iter().map(|d| d + 1).collect::<Vec<_>>(),
        }),
        Witness::Prefix { prefix, inside, outside } => json!({
            "kind": "prefix",
            "prefix": prefix.iter().map(|d| d + 1).collect::<Vec<_>>(),
            "inside": format!("{} {}", omega_text(model, inside.0), actions_text(model, inside.1)),
            "outside": format!("{} {}", omega_text(model, outside.0), actions_text(model, outside.1)),
        }),
    }
}

fn witness_human(model: &IntrinsicModel, w: &Witness) -> String {
    match w {
        Witness::None => String::new(),
        Witness::Ordering(OrderingFunction::Flat(_)) => {
            format!("  pointwise ordering over {} outcomes (full table with --json)\n", model.omega_space().len() * model.action_space().len())
        }
        Witness::Ordering(psi) => ordering_text(model, psi).lines().map(|l| format!("  {l}\n")).collect(),
        Witness::ClosedLoop { policy, omega, solutions } => {
            let sols: Vec<String> = solutions.iter().map(|&u| format!("({})", actions_text(model, u))).collect();
            let sols = if sols.is_empty() { "none".to_string() } else { sols.join(", ") };
            format!(
                "  at {} the closed loop has solutions {sols} under\n{}",
                omega_text(model, *omega),
                indent(&policy_text(model, policy))
            )
        }
        Witness::Deadlock { policy, omega, acted } => format!(
            "  at {} the forward construction stops after [{}] under\n{}",
            omega_text(model, *omega),
            pairs_text(model, acted).join(", "),
            indent(&policy_text(model, policy))
        ),
        Witness::Outcome { omega, u, acted } => format!(
            "  at {} {} no DM outside {:?} is settled\n",
            omega_text(model, *omega),
            actions_text(model, *u),
            acted.iter().map(|d| d + 1).collect::<Vec<_>>()
        ),
        Witness::Prefix { prefix, inside, outside } => format!(
            "  prefix {:?} holds at {} {} but not at {} {}\n",
            prefix.iter().map(|d| d + 1).collect::<Vec<_>>(),
            omega_text(model, inside.0),
            actions_text(model, inside.1),
            omega_text(model, outside.0),
            actions_text(model, outside.1)
        ),
    }
}

fn indent(s: &str) -> String {
    s.lines().map(|l| format!("    {l}\n")).collect()
}

/// The note printed beside the fixture-style failures.
fn gloss(r: &PropertyReport) -> Option<&'static str> {
    match (&r.witness, r.verdict) {
        (Witness::Deadlock { .. }, false) => Some("This system has a deadlock"),
        (Witness::ClosedLoop { .. }, false) => Some("This system is not solvable"),
        _ => None,
    }
}

pub fn report_json(model: &IntrinsicModel, r: &PropertyReport) -> Value {
    json!({ "property": r.property.name(), "verdict": r.verdict, "witness": witness_json(model, &r.witness) })
}

fn report_human(model: &IntrinsicModel, r: &PropertyReport) -> String {
    let mut s = format!("{}: {}", r.property.name(), r.verdict);
    if let Some(g) = gloss(r) {
        s.push_str(&format!(" ({g})"));
    }
    s.push('\n');
    s + &witness_human(model, &r.witness)
}

// ---------------------------------------------------------------- commands

/// Declared ordering if there is one, else the witness of C.
fn causal_ordering(model: &IntrinsicModel) -> Option<OrderingFunction> {
    if let Some(p) = model.ordering() {
        return Some(p.clone());
    }
    match check_c(model, CheckOptions::default()).witness {
        Witness::Ordering(p) => Some(p),
        _ => None,
    }
}

/// The reports `check` produces, in the order it prints them.
pub fn property_reports(model: &IntrinsicModel, which: &str, scope: Scope) -> Result<Vec<PropertyReport>, PropertyError> {
    let opts = CheckOptions { scope };
    let mut out = Vec::new();
    let all = which == "all";
    if all || which == "sm" {
        out.push(check_sm(model, opts));
    }
    if all || which == "df" {
        out.push(check_df(model, opts));
    }
    if all || which == "ci" {
        out.push(check_ci(model, opts));
    }
    if all || which == "c" {
        out.push(check_c(model, opts));
    }
    if which == "rcs" || (all && model.ordering().is_some()) {
        out.push(check_rcs_declared(model, opts)?);
    }
    Ok(out)
}

fn check(file: &Path, property: PropertyArg, scope: ScopeArg) -> Res {
    let model = load_model(file)?;
    let scope = match scope {
        ScopeArg::Support => Scope::Support,
        ScopeArg::All => Scope::All,
    };
    let which = format!("{property:?}").to_lowercase();
    let reports = property_reports(&model, &which, scope).map_err(|e| anyhow!("{}: {e}", file.display()))?;
    let mut human = String::new();
    let mut extra = serde_json::Map::new();
    for r in &reports {
        human.push_str(&report_human(&model, r));
        if let (nsteams::properties::Property::C, Witness::Ordering(psi)) = (r.property, &r.witness) {
            if let Ok(cl) = classify(&model, psi, CheckOptions { scope }) {
                human.push_str(&format!("information structure: {}\n", cl.class.name()));
                extra.insert("structure".into(), json!(cl.class.name()));
            }
        }
    }
    let ok = reports.iter().all(|r| r.verdict);
    let mut machine = json!({
        "file": file.display().to_string(),
        "scope": format!("{scope:?}").to_lowercase(),
        "reports": reports.iter().map(|r| report_json(&model, r)).collect::<Vec<_>>(),
    });
    machine.as_object_mut().expect("object").extend(extra);
    Ok(outcome(ok, human, machine))
}

/// Every profile up to the exhaustive bound, else seeded samples.
fn certificate_profiles(sizes: (&[usize], &[usize]), seed: u64) -> (Vec<u128>, bool) {
    let space = nsteams::model::PolicySpace::new(sizes.0.to_vec(), sizes.1.to_vec());
    match space.size() {
        Some(n) if n <= CERTIFY_EXHAUSTIVE => ((0..n).collect(), true),
        n => {
            let n = n.unwrap_or(u128::MAX);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            ((0..CERTIFY_SAMPLES).map(|_| rng.gen_range(0..n)).collect(), false)
        }
    }
}

/// Profiles (by index) where the two values differ, and how many were compared.
fn value_mismatches(model: &IntrinsicModel, reduced: &ReducedStaticModel, idx: &[u128]) -> Vec<u128> {
    let space = model.policy_space();
    let q = reduced.reference_products();
    idx.par_iter()
        .filter(|&&i| {
            let g = space.policy_at(i);
            model.expected_cost(&g).ok() != Some(reduced.expected_cost_with(&g, &q))
        })
        .copied()
        .collect()
}

fn reduction_failure(e: ReductionError) -> Res {
    let human = format!("reduction refused: {e}\n");
    Ok(outcome(false, human, json!({ "error": e.to_string() })))
}

fn reduce(a: &ReduceArgs) -> Res {
    let model = load_model(&a.file)?;
    let kind = match a.reference {
        ReferenceArg::Uniform => ReferenceKind::Uniform,
        ReferenceArg::Dyadic => ReferenceKind::Dyadic,
        ReferenceArg::Marginal => ReferenceKind::Marginal,
    };
    let mut human = String::new();
    let (doc, ok, mut machine) = match a.mode {
        ModeArg::PolicyFree => {
            let Some(psi) = causal_ordering(&model) else {
                return reduction_failure(ReductionError::NotCausal);
            };
            let reduced = match static_reduce(&model, &psi, kind) {
                Ok(r) => r,
                Err(e) => return reduction_failure(e),
            };
            let im = build_imaginary(&model, &psi).map_err(|e| anyhow!("{e}"))?;
            let kernels = certify_policy_independence(&model, &psi, &im, 3, a.seed);
            let space = model.policy_space();
            let (idx, exhaustive) = certificate_profiles(space.shape(), a.seed);
            let bad = value_mismatches(&model, &reduced, &idx);
            let kernel_ok = kernels.is_ok();
            match &kernels {
                Ok(n) => human.push_str(&format!("kernels identical under {n} policies\n")),
                Err(e) => human.push_str(&format!("kernel certificate failed: {e}\n")),
            }
            human.push_str(&format!(
                "value condition: {}/{} {} profiles equal\n",
                idx.len() - bad.len(),
                idx.len(),
                if exhaustive { "(all)" } else { "sampled" }
            ));
            let machine = json!({
                "mode": "policy-free",
                "kernel_policies": kernels.as_ref().ok(),
                "checked": idx.len(),
                "exhaustive": exhaustive,
                "mismatches": bad.len(),
            });
            (serialize(&Document::StaticReduced(reduced)), kernel_ok && bad.is_empty(), machine)
        }
        ModeArg::Sm => {
            let path = a.policy.as_deref().ok_or_else(|| anyhow!("--mode sm needs --policy"))?;
            let policy = load_policy(path, &model)?;
            let order = a.stage_order.as_ref().map(|v| v.iter().map(|d| d.saturating_sub(1)).collect());
            let reduced = match sm_reduce(&model, &policy, order, kind) {
                Ok(r) => r,
                Err(e @ ReductionError::PolicyShape(_)) => return Err(anyhow!("{e}").into()),
                Err(e) => return reduction_failure(e),
            };
            let dynamic = model.expected_cost(&policy).map_err(|e| anyhow!("{e}"))?;
            let stat = reduced.expected_cost(&policy).map_err(|e| anyhow!("{e}"))?;
            let ok = dynamic == stat;
            human.push_str(&format!("J(γ) = {dynamic} dynamic, {stat} reduced\n"));
            let machine = json!({ "mode": "sm", "dynamic": dynamic.to_string(), "reduced": stat.to_string(), "equal": ok });
            (serialize(&Document::StaticReduced(reduced)), ok, machine)
        }
        ModeArg::Nested => {
            let path = a.decomposition.as_deref().ok_or_else(|| anyhow!("--mode nested needs --decomposition"))?;
            let doc = parse_decomposition(&read(path)?).map_err(|e| located(path, e))?;
            let Some(psi) = causal_ordering(&model) else {
                return reduction_failure(ReductionError::NotCausal);
            };
            let red = match nested_reduce(&model, &psi, &doc, a.seed) {
                Ok(r) => r,
                Err(e @ ReductionError::BadDecomposition(_)) => return Err(anyhow!("{}: {e}", path.display()).into()),
                Err(e) => return reduction_failure(e),
            };
            human.push_str(&format!(
                "actions agree on the support for {} policies{}\n",
                red.certified,
                if red.exhaustive { " (all)" } else { " (sampled)" }
            ));
            let machine = json!({ "mode": "nested", "certified": red.certified, "exhaustive": red.exhaustive });
            (serialize_model(&red.static_model), true, machine)
        }
        ModeArg::Decouple => {
            let payoff = match a.payoff {
                PayoffArg::Complement => Payoff::Complement,
                PayoffArg::NegCost => Payoff::NegCost,
            };
            let d = match decouple(&model, payoff) {
                Ok(d) => d,
                Err(e) => return reduction_failure(e),
            };
            let orig = d.original_optimum();
            let dec = d.decoupled_optimum();
            let ok = orig == dec;
            human.push_str(&format!("optimal payoff {orig} original, {dec} decoupled\n"));
            let machine = json!({
                "mode": "decouple",
                "c_max": d.c_max.to_string(),
                "original_optimum": orig.to_string(),
                "decoupled_optimum": dec.to_string(),
                "equal": ok,
            });
            (serialize_model(&d.model), ok, machine)
        }
    };
    write_or_inline(a.output.as_deref(), &doc, &mut human, &mut machine)?;
    Ok(outcome(ok, human, machine))
}

fn budget_error(e: OptimizeError) -> Res {
    match e {
        OptimizeError::NotSolvable(_) | OptimizeError::NotApplicable => {
            Ok(outcome(false, format!("{e}\n"), json!({ "error": e.to_string() })))
        }
        other => Err(anyhow!("{other}").into()),
    }
}

fn optimize(file: &Path, reduced: Option<&Path>) -> Res {
    let model = load_model(file)?;
    let budget = Budget::default();
    let Some(path) = reduced else {
        let r = match enumerate_optimal(&model, budget) {
            Ok(r) => r,
            Err(e) => return budget_error(e),
        };
        let human = format!(
            "J* = {}\noptimal profiles: {} of {}\nrepresentative:\n{}",
            r.value,
            r.argmin.len(),
            r.evaluated,
            indent(&policy_text(&model, r.representative()))
        );
        let machine = json!({
            "value": r.value.to_string(),
            "argmin_size": r.argmin.len(),
            "evaluated": r.evaluated.to_string(),
            "representative": policy_text(&model, r.representative()),
        });
        return Ok(outcome(true, human, machine));
    };
    let red = parse_reduced(&read(path)?).map_err(|e| located(path, e))?;
    let cmp = match compare_argmin(&model, &red, budget) {
        Ok(c) => c,
        Err(OptimizeError::ModelMismatch) => return Err(anyhow!("{} and {} have different policy spaces", file.display(), path.display()).into()),
        Err(e) => return budget_error(e),
    };
    let mut human = format!(
        "J* = {} dynamic, {} reduced\nargmin sets {} ({} and {} profiles)\n",
        cmp.dynamic.value,
        cmp.reduced.value,
        if cmp.verdict { "identical" } else { "differ" },
        cmp.dynamic.argmin.len(),
        cmp.reduced.argmin.len()
    );
    for d in cmp.diff.iter().take(5) {
        human.push_str(&format!("  differs: {} vs {} at\n{}", d.dynamic, d.reduced, indent(&policy_text(&model, &d.policy))));
    }
    let machine = json!({
        "value": cmp.dynamic.value.to_string(),
        "reduced_value": cmp.reduced.value.to_string(),
        "argmin_size": cmp.dynamic.argmin.len(),
        "identical": cmp.verdict,
        "differing_profiles": cmp.diff.len(),
        "representative": policy_text(&model, cmp.dynamic.representative()),
    });
    Ok(outcome(cmp.verdict, human, machine))
}

fn simulate(file: &Path, policy: &Path, samples: usize, seed: u64, trace: Option<&Path>) -> Res {
    let model = load_model(file)?;
    let policy = load_policy(policy, &model)?;
    let Some(psi) = causal_ordering(&model) else {
        return Ok(outcome(false, "no causal ordering: paths cannot be realized\n".into(), json!({ "error": "not causal" })));
    };
    let est = match monte_carlo(&model, &psi, &policy, samples, seed) {
        Ok(e) => e,
        Err(e @ nsteams::simulate::SimulateError::DeadlockEncountered { .. }) => {
            return Ok(outcome(false, format!("{e}\n"), json!({ "error": e.to_string() })));
        }
        Err(e) => return Err(anyhow!("{e}").into()),
    };
    let exact = model.expected_cost(&policy).ok();
    if let Some(p) = trace {
        let omegas = sample_omegas(&model, samples, seed).map_err(|e| anyhow!("{e}"))?;
        let traces: Vec<_> = omegas.iter().map(|&w| realize_path(&model, &psi, &policy, w)).collect();
        fs::write(p, trace_tsv(&model, &traces)).with_context(|| format!("cannot write {}", p.display()))?;
    }
    let mut human = format!("J^ = {:.6} ± {:.6} (n = {}, seed = {seed})\n", est.mean_f64(), est.std_error, est.samples);
    if let Some(j) = &exact {
        human.push_str(&format!("J = {j}\n"));
    }
    let machine = json!({
        "samples": est.samples,
        "seed": seed,
        "mean": est.mean.to_string(),
        "std_error": est.std_error,
        "exact": exact.as_ref().map(Rational::to_string),
    });
    Ok(outcome(true, human, machine))
}

fn verify(dynamic: &Path, reduced: &Path) -> Res {
    let model = load_model(dynamic)?;
    let red = parse_reduced(&read(reduced)?).map_err(|e| located(reduced, e))?;
    let space = model.policy_space();
    if space.shape() != red.policy_space().shape() {
        return Err(anyhow!("{} and {} have different policy spaces", dynamic.display(), reduced.display()).into());
    }
    let idx: Vec<u128> = match &red.mode {
        nsteams::reduction::ReductionMode::PolicyParameterized { policy, .. } => vec![space.index_of(policy)],
        nsteams::reduction::ReductionMode::PolicyIndependent => {
            let size = space.size().filter(|&n| n <= Budget::default().0).ok_or_else(|| {
                anyhow!("policy space is over the budget; raise {}", nsteams::optimize::BUDGET_ENV)
            })?;
            (0..size).collect()
        }
    };
    let bad = value_mismatches(&model, &red, &idx);
    let equal = idx.len() - bad.len();
    let mut human = format!("{equal}/{} policies equal\n", idx.len());
    for &i in bad.iter().take(5) {
        human.push_str(&format!("  differs at\n{}", indent(&policy_text(&model, &space.policy_at(i)))));
    }
    let machine = json!({ "checked": idx.len(), "equal": equal, "mismatches": bad.iter().map(u128::to_string).collect::<Vec<_>>() });
    Ok(outcome(bad.is_empty(), human, machine))
}

fn generate(count: usize, seed: u64, max_dms: usize, max_alphabet: usize, output: Option<&Path>) -> Res {
    let cfg = GeneratorConfig { max_dms, max_alphabet, ..GeneratorConfig::default() };
    let text: String = generate_models(&cfg, seed, count).iter().map(serialize_model).collect();
    let machine = json!({ "count": count, "seed": seed });
    match output {
        Some(p) => {
            fs::write(p, &text).with_context(|| format!("cannot write {}", p.display()))?;
            Ok(outcome(true, format!("{count} models written to {}\n", p.display()), machine))
        }
        None => Ok(outcome(true, text, machine)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nsteams::fixtures;

    #[test]
    fn machine_reports_reparse_with_sorted_keys() {
        for model in [fixtures::example1(), fixtures::example2(), fixtures::example5()] {
            for r in property_reports(&model, "all", Scope::Support).unwrap() {
                let v = report_json(&model, &r);
                let text = v.to_string();
                assert_eq!(serde_json::from_str::<Value>(&text).unwrap(), v);
                let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
                assert!(keys.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }

    #[test]
    fn symbols_are_rendered_by_name() {
        let m = fixtures::example2();
        assert_eq!(omega_text(&m, 0), "w=0");
        assert_eq!(actions_text(&m, 3), "u1=1 u2=1");
        assert_eq!(pairs_text(&m, &[(1, 0)]), vec!["u2=0"]);
        let p = policy_text(&m, &fixtures::example2_copy_policy(&m));
        assert!(p.contains("policy 1 01 : 1"));
    }

    #[test]
    fn missing_ordering_is_a_usage_error() {
        let dir = std::env::temp_dir().join(format!("nsteams-cli-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let p = dir.join("e1.nst");
        fs::write(&p, fixtures::EXAMPLE1).unwrap();
        let out = run(["nsteams", "check", p.to_str().unwrap(), "--property", "rcs"]);
        assert_eq!(out.code, 2);
        assert!(out.human.contains("no ordering"));
        fs::remove_dir_all(dir).unwrap();
    }
}
