use std::path::{Path, PathBuf};
use std::process::Command;

use nsteams::dsl::{serialize, serialize_model, split_documents, parse_model, Document};
use nsteams::fixtures;
use nsteams::properties::check_c;
use nsteams::{PolicyProfile, Scope};
use nsteams_cli::{policy_text, property_reports, report_json, run};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Runs the built binary: (exit code, stdout, stderr).
fn bin(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_nsteams")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stdout).unwrap(), String::from_utf8(out.stderr).unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn causal_model_prints_its_ordering() {
    let (code, out, _) = bin(&["check", s(&fixture("example5.nst")), "--property", "c"]);
    assert_eq!(code, 0);
    assert!(out.starts_with("C: true\n"));
    let declared: Vec<&str> = fixtures::EXAMPLE5.lines().filter(|l| l.starts_with("ordering")).collect();
    let printed: Vec<&str> = out.lines().map(str::trim).filter(|l| l.starts_with("ordering")).collect();
    assert_eq!(printed, declared);
    assert!(out.contains("information structure: nonclassical"));
}

#[test]
fn deadlock_exits_with_one() {
    let (code, out, _) = bin(&["check", s(&fixture("example1.nst")), "--property", "df"]);
    assert_eq!(code, 1);
    assert!(out.contains("DF: false (This system has a deadlock)"), "{out}");
}

#[test]
fn unsolvable_exits_with_one() {
    let (code, out, _) = bin(&["check", s(&fixture("example2.nst")), "--property", "sm"]);
    assert_eq!(code, 1);
    assert!(out.contains("SM: false (This system is not solvable)"), "{out}");
    assert!(out.contains("solutions (u1=0 u2=0), (u1=1 u2=1)"), "{out}");
}

#[test]
fn binary_reports_match_the_library_and_the_golden_files() {
    for name in ["example1", "example2", "example5"] {
        let path = fixture(&format!("{name}.nst"));
        let (code, out, _) = bin(&["check", s(&path), "--property", "all", "--json"]);
        let lib = run(["nsteams", "check", s(&path), "--property", "all", "--json"]);
        assert_eq!(i32::from(lib.code), code);
        let printed: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(Some(&printed), lib.machine.as_ref());

        let model = parse_model(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let direct: Vec<_> = property_reports(&model, "all", Scope::Support).unwrap().iter().map(|r| report_json(&model, r)).collect();
        assert_eq!(printed["reports"], serde_json::Value::Array(direct));

        let (_, human, _) = bin(&["check", s(&path)]);
        let expected = std::fs::read_to_string(golden(&format!("check_{name}.txt"))).unwrap();
        assert_eq!(human, expected, "{name}");
    }
}

#[test]
fn reduce_then_verify_and_optimize() {
    let dir = tempfile::tempdir().unwrap();
    let stat = dir.path().join("example5.static.nst");
    let (code, out, err) = bin(&["reduce", s(&fixture("example5.nst")), "--mode", "policy-free", "-o", s(&stat)]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("512/512 (all) profiles equal"), "{out}");

    let (code, out, _) = bin(&["verify", s(&fixture("example5.nst")), s(&stat)]);
    assert_eq!(code, 0);
    assert_eq!(out, "512/512 policies equal\n");

    let (code, out, _) = bin(&["optimize", s(&fixture("example5.nst")), "--reduced", s(&stat), "--json"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["value"], "1/2");
    assert_eq!(v["identical"], true);

    // damage one cost row of the reduced model
    let text = std::fs::read_to_string(&stat).unwrap();
    let row = text.lines().find(|l| l.starts_with("rcost") && !l.ends_with(": 0")).unwrap();
    let head = row.rsplit_once(':').unwrap().0;
    let bad = dir.path().join("bad.nst");
    std::fs::write(&bad, text.replacen(row, &format!("{head}: 1000"), 1)).unwrap();
    let (code, out, _) = bin(&["verify", s(&fixture("example5.nst")), s(&bad)]);
    assert_eq!(code, 1);
    assert!(!out.starts_with("512/512"));
}

#[test]
fn inline_reduction_is_still_a_document() {
    let (code, out, _) = bin(&["reduce", s(&fixture("example5.nst")), "--mode", "policy-free", "--reference", "dyadic"]);
    assert_eq!(code, 0);
    let r = nsteams::dsl::parse_reduced(&out).unwrap();
    assert_eq!(r.n_dms(), 3);
    assert!(out.contains("# value condition"));
}

#[test]
fn policy_dependent_reduction_needs_a_policy() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = bin(&["reduce", s(&fixture("example1.nst")), "--mode", "sm"]);
    assert_eq!(code, 2);
    assert!(err.contains("--policy"));

    let m = fixtures::example1();
    let pol = dir.path().join("zero.nst");
    std::fs::write(&pol, policy_text(&m, &PolicyProfile::constant(&m, 0))).unwrap();
    let (code, out, _) = bin(&["reduce", s(&fixture("example1.nst")), "--mode", "sm", "--policy", s(&pol), "--json"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["equal"], true);
    let r = nsteams::dsl::parse_reduced(v["document"].as_str().unwrap()).unwrap();
    assert!(r.is_policy_parameterized());
    let (code, out, _) = bin(&["reduce", s(&fixture("example1.nst")), "--mode", "policy-free"]);
    assert_eq!(code, 1);
    assert!(out.contains("not causal"), "{out}");
}

#[test]
fn nested_and_decouple_modes() {
    let dir = tempfile::tempdir().unwrap();
    let (m, doc) = fixtures::nested_chain(2);
    let mp = dir.path().join("chain.nst");
    let dp = dir.path().join("chain.dec.nst");
    std::fs::write(&mp, serialize_model(&m)).unwrap();
    std::fs::write(&dp, serialize(&Document::Nested(doc))).unwrap();
    let out_path = dir.path().join("chain.static.nst");
    let (code, out, err) = bin(&["reduce", s(&mp), "--mode", "nested", "--decomposition", s(&dp), "-o", s(&out_path)]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("64 policies (all)"), "{out}");
    let stat = parse_model(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert!(check_c(&stat, Default::default()).verdict);

    let ip = dir.path().join("identity.nst");
    std::fs::write(&ip, serialize_model(&fixtures::single_dm_identity())).unwrap();
    let (code, out, _) = bin(&["reduce", s(&ip), "--mode", "decouple", "--json", "-o", s(&dir.path().join("d.nst"))]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["original_optimum"], v["decoupled_optimum"]);
}

#[test]
fn simulate_is_reproducible_and_writes_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let m = fixtures::example5();
    let pol = dir.path().join("one.nst");
    std::fs::write(&pol, policy_text(&m, &PolicyProfile::constant(&m, 1))).unwrap();
    let trace = dir.path().join("trace.tsv");
    let model = fixture("example5.nst");
    let args = ["simulate", s(&model), "--policy", s(&pol), "--samples", "2000", "--seed", "9", "--json"];
    let (code, a, _) = bin(&args);
    assert_eq!(code, 0);
    assert_eq!(bin(&args).1, a);
    let v: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(v["exact"], "7/2");
    let (code, _, _) = bin(&["simulate", s(&fixture("example5.nst")), "--policy", s(&pol), "--samples", "10", "--trace", s(&trace)]);
    assert_eq!(code, 0);
    let t = std::fs::read_to_string(&trace).unwrap();
    assert!(t.starts_with("sample\tstage\tdm\ty\tu\n"));
    assert_eq!(t.lines().count(), 1 + 10 * 3);
}

#[test]
fn generated_batches_parse_back() {
    let (code, out, _) = bin(&["generate", "--count", "7", "--seed", "3"]);
    assert_eq!(code, 0);
    let docs = split_documents(&out);
    assert_eq!(docs.len(), 7);
    for d in docs {
        parse_model(&d).unwrap();
    }
    assert_eq!(bin(&["generate", "--count", "7", "--seed", "3"]).1, out);
}

#[test]
fn usage_and_parse_errors_exit_with_two() {
    assert_eq!(bin(&["reduce", s(&fixture("example5.nst"))]).0, 2);
    assert_eq!(bin(&["frobnicate"]).0, 2);
    assert_eq!(bin(&["check", "/nonexistent.nst"]).0, 2);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.nst");
    std::fs::write(&bad, fixtures::EXAMPLE2.replacen("prior 0 : 1/2", "prior 0 : 1/0", 1)).unwrap();
    let (code, _, err) = bin(&["check", s(&bad)]);
    assert_eq!(code, 2);
    assert!(err.contains("bad.nst:") && err.contains("ZeroDenominator"), "{err}");
}

#[test]
fn budget_comes_from_the_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_nsteams"))
        .args(["optimize", s(&fixture("example5.nst"))])
        .env("NSTEAMS_BUDGET", "100")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("budget of 100"));
    let (code, out, _) = bin(&["optimize", s(&fixture("example5.nst")), "--jobs", "2"]);
    assert_eq!(code, 0);
    assert!(out.starts_with("J* = 1/2\n"));
}
