use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;
use seqmech::cli::{run, SCHEMA_VERSION};
use seqmech::fixtures;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn seqmech(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("seqmech").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn json(args: &[&str]) -> (i32, Value) {
    let (code, out, err) = seqmech(args);
    let doc: Value = serde_json::from_str(&out).unwrap_or_else(|e| panic!("{e}: {out} / {err}"));
    assert_eq!(doc["schema_version"], SCHEMA_VERSION);
    (code, doc)
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn check_constant_environment_holds_for_every_notion() {
    let env = fixture("env-const.json");
    let (code, doc) = json(&["check", path_str(&env), "--json"]);
    assert_eq!(code, 0);
    let verdicts = doc["verdicts"].as_array().unwrap();
    assert_eq!(verdicts.len(), 5);
    assert!(verdicts.iter().all(|v| v["implementable"] == true));
}

#[test]
fn check_xor_osp_is_negative() {
    let env = fixture("env-xor.json");
    let (code, out, _) = seqmech(&["check", path_str(&env), "--notion", "osp"]);
    assert_eq!(code, 1);
    assert!(out.contains("not implementable"), "{out}");
    let (code, doc) = json(&["check", path_str(&env), "--notion", "osp", "--json"]);
    assert_eq!(code, 1);
    assert_eq!(doc["verdicts"][0]["refutation"]["kind"], "fixed_point");
}

#[test]
fn check_spa_reports_two_rounds() {
    let env = fixture("env-spa.json");
    let (code, out, _) = seqmech(&["check", path_str(&env), "--notion", "osp", "--trace"]);
    assert_eq!(code, 0);
    assert!(out.contains("N=2"), "{out}");
}

#[test]
fn pbe_without_prior_is_an_input_error() {
    let env = fixture("env-spa.json");
    let (code, _, err) = seqmech(&["check", path_str(&env), "--notion", "pbe"]);
    assert_eq!(code, 2);
    assert!(err.to_lowercase().contains("prior"), "{err}");
    let (code, doc) = json(&["check", path_str(&env), "--json"]);
    assert_eq!(code, 0);
    assert_eq!(doc["skipped"][0]["notion"], "PBE");
}

#[test]
fn bad_inputs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("broken.json");
    fs::write(&broken, "{ not json").unwrap();
    assert_eq!(seqmech(&["check", path_str(&broken)]).0, 2);
    assert_eq!(seqmech(&["check", "/nonexistent/env.json"]).0, 2);
    assert_eq!(seqmech(&["check", path_str(&fixture("env-spa.json")), "--bogus"]).0, 2);
    assert_eq!(seqmech(&["check", path_str(&fixture("env-spa.json")), "--notion", "nash"]).0, 2);
    assert_eq!(seqmech(&["oracle", "--notion", "osp"]).0, 2);
}

#[test]
fn synthesize_then_verify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let game = dir.path().join("spa-osp.json");
    let env = fixture("env-spa.json");
    let (code, _, err) = seqmech(&["synthesize", path_str(&env), "--notion", "osp", "--out", path_str(&game)]);
    assert_eq!(code, 0, "{err}");
    let (code, doc) = json(&["verify", path_str(&env), "--game", path_str(&game), "--notion", "osp", "--json"]);
    assert_eq!(code, 0);
    assert_eq!(doc["holds"], true);
    assert_eq!(doc["gspc"]["perfect_recall"], true);
    let (code, _, _) = seqmech(&["verify", path_str(&env), "--game", path_str(&game), "--notion", "sp"]);
    assert_eq!(code, 0);
}

#[test]
fn direct_game_fails_obvious_dominance() {
    let dir = tempfile::tempdir().unwrap();
    let game = dir.path().join("spa-sp.json");
    let env = fixture("env-spa.json");
    assert_eq!(seqmech(&["synthesize", path_str(&env), "--notion", "sp", "--out", path_str(&game)]).0, 0);
    let (code, doc) = json(&["verify", path_str(&env), "--game", path_str(&game), "--notion", "osp", "--json"]);
    assert_eq!(code, 1);
    assert_eq!(doc["definitional"]["holds"], false);
}

#[test]
fn synthesize_refuses_xor() {
    let env = fixture("env-xor.json");
    let (code, _, err) = seqmech(&["synthesize", path_str(&env), "--notion", "osp"]);
    assert_eq!(code, 1, "{err}");
}

#[test]
fn oracle_agrees_on_fixture_and_seed() {
    let (code, doc) = json(&["oracle", path_str(&fixture("env-spa.json")), "--notion", "osp", "--json"]);
    assert_eq!(code, 0);
    assert_eq!(doc["result"], "found");
    assert_eq!(doc["agree"], true);
    assert_eq!(doc["witness_verified"], true);
    let (code, doc) = json(&["oracle", "--seed", "7", "--notion", "sosp", "--json"]);
    assert_eq!(code, if doc["result"] == "found" { 0 } else { 1 });
    assert_eq!(doc["agree"], true);
    assert!(doc["environment"].is_object());
}

#[test]
fn oracle_limit_exceeded_exits_two() {
    let (code, doc) = json(&["oracle", path_str(&fixture("env-spa.json")), "--notion", "osp", "--limit", "2", "--json"]);
    assert_eq!(code, 2);
    assert_eq!(doc["result"], "limit-exceeded");
}

#[test]
fn explain_lists_rho_rows() {
    let env = fixture("env-spa.json");
    let (code, doc) = json(&["explain", path_str(&env), "--notion", "osp", "--json", "--trace"]);
    assert_eq!(code, 0);
    let rows = doc["rho"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    let tempted: Vec<&Value> = rows.iter().filter(|r| r["rho"] == 0).collect();
    assert_eq!(tempted.len(), 1);
    assert_eq!((&tempted[0]["player"], &tempted[0]["type"], &tempted[0]["mimic"]), (&Value::from("1"), &Value::from("3"), &Value::from("1")));
    assert!(doc["traces"].as_array().is_some_and(|t| !t.is_empty()));
}

#[test]
fn fixtures_on_disk_match_embedded_copies() {
    assert_eq!(fs::read_to_string(fixture("env-const.json")).unwrap(), fixtures::ENV_CONST);
    assert_eq!(fs::read_to_string(fixture("env-spa.json")).unwrap(), fixtures::ENV_SPA);
    assert_eq!(fs::read_to_string(fixture("env-xor.json")).unwrap(), fixtures::ENV_XOR);
}
