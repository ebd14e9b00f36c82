//! Three browser operations over a pasted model. Each takes the model text
//! and returns a plain-text report; errors come back as text too.

use std::fmt::Write;

use nsteams::dsl::parse_model;
use nsteams::fixtures;
use nsteams::optimize::{compare_argmin, enumerate_optimal, Budget};
use nsteams::properties::{all_verdicts, check_c, classify, CheckOptions, PropertyReport, Witness};
use nsteams::reduction::{static_reduce, ReferenceKind};
use nsteams::{IntrinsicModel, OrderingFunction};
use wasm_bindgen::prelude::*;

/// Browsers get a smaller enumeration budget than the command line.
const BUDGET: u128 = 200_000;

fn load(text: &str) -> Result<IntrinsicModel, String> {
    parse_model(text).map_err(|e| format!("error:\n{e}"))
}

fn causal_ordering(model: &IntrinsicModel) -> Option<OrderingFunction> {
    model.ordering().cloned().or_else(|| match check_c(model, CheckOptions::default()).witness {
        Witness::Ordering(p) => Some(p),
        _ => None,
    })
}

fn line(out: &mut String, r: &PropertyReport) {
    let note = match (&r.witness, r.verdict) {
        (Witness::Deadlock { omega, .. }, false) => format!("  deadlock at signal tuple {omega}"),
        (Witness::ClosedLoop { omega, solutions, .. }, false) => {
            format!("  {} closed-loop solutions at signal tuple {omega}", solutions.len())
        }
        (Witness::Outcome { omega, .. }, false) => format!("  no DM can act first at signal tuple {omega}"),
        _ => String::new(),
    };
    let _ = writeln!(out, "{:<3} {}{note}", r.property.name(), r.verdict);
}

/// The shipped example with this name (`example1`, `example2`, `example5`).
#[wasm_bindgen]
pub fn fixture(name: &str) -> String {
    match name {
        "example1" => fixtures::EXAMPLE1,
        "example2" => fixtures::EXAMPLE2,
        _ => fixtures::EXAMPLE5,
    }
    .to_string()
}

/// SM, DF, CI and C verdicts, plus the information structure when causal.
#[wasm_bindgen]
pub fn check_properties(text: &str) -> String {
    let model = match load(text) {
        Ok(m) => m,
        Err(e) => return e,
    };
    let v = all_verdicts(&model, CheckOptions::default());
    let mut out = String::new();
    for r in [&v.sm, &v.df, &v.ci, &v.c] {
        line(&mut out, r);
    }
    if let Witness::Ordering(psi) = &v.c.witness {
        if let Ok(cl) = classify(&model, psi, CheckOptions::default()) {
            let _ = writeln!(out, "information structure: {}", cl.class.name());
        }
    }
    out
}

/// Policy-independent static reduction, then J_dynamic = J_static over every profile.
#[wasm_bindgen]
pub fn reduce_and_verify(text: &str) -> String {
    let model = match load(text) {
        Ok(m) => m,
        Err(e) => return e,
    };
    let Some(psi) = causal_ordering(&model) else {
        return "not causal: no policy-independent reduction\n".into();
    };
    let reduced = match static_reduce(&model, &psi, ReferenceKind::Uniform) {
        Ok(r) => r,
        Err(e) => return format!("reduction refused: {e}\n"),
    };
    let space = model.policy_space();
    let Some(size) = space.size().filter(|&n| n <= BUDGET) else {
        return "policy space too large to verify in the browser\n".into();
    };
    let q = reduced.reference_products();
    let equal = (0..size)
        .filter(|&i| {
            let g = space.policy_at(i);
            model.expected_cost(&g).ok() == Some(reduced.expected_cost_with(&g, &q))
        })
        .count();
    let cells = reduced.cost.iter().filter(|c| !num_is_zero(c)).count();
    format!("static model: {} DMs, {cells} nonzero cost cells\nvalue condition: {equal}/{size} policies equal\n", reduced.n_dms())
}

fn num_is_zero(x: &nsteams::Rational) -> bool {
    *x.numer() == 0.into()
}

/// Optimal value and argmin, compared against the static reduction when causal.
#[wasm_bindgen]
pub fn optimize(text: &str) -> String {
    let model = match load(text) {
        Ok(m) => m,
        Err(e) => return e,
    };
    let r = match enumerate_optimal(&model, Budget(BUDGET)) {
        Ok(r) => r,
        Err(e) => return format!("{e}\n"),
    };
    let mut out = format!("J* = {}\noptimal profiles: {} of {}\nrepresentative:\n", r.value, r.argmin.len(), r.evaluated);
    for (i, t) in r.representative().tables.iter().enumerate() {
        let d = model.dm(i);
        let rows: Vec<String> =
            t.iter().enumerate().map(|(y, &a)| format!("{} -> {}", d.measurements.symbol(y), d.actions.symbol(a))).collect();
        let _ = writeln!(out, "  DM {}: {}", i + 1, rows.join(", "));
    }
    if let Some(psi) = causal_ordering(&model) {
        if let Ok(c) = static_reduce(&model, &psi, ReferenceKind::Uniform).map_err(|e| e.to_string()).and_then(|s| {
            compare_argmin(&model, &s, Budget(BUDGET)).map_err(|e| e.to_string())
        }) {
            let _ = writeln!(out, "static reduction: argmin {}", if c.verdict { "identical" } else { "differs" });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_through_the_page_operations() {
        let c = check_properties(&fixture("example5"));
        assert!(c.contains("C   true") && c.contains("nonclassical"), "{c}");
        assert!(check_properties(&fixture("example1")).contains("DF  false  deadlock"));
        assert!(reduce_and_verify(&fixture("example5")).contains("512/512 policies equal"));
        let o = optimize(&fixture("example5"));
        assert!(o.starts_with("J* = 1/2\n") && o.contains("argmin identical"), "{o}");
        assert!(check_properties("nst 1\nkind bogus\n").starts_with("error:"));
    }
}
