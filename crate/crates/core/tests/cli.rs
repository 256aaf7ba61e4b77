use std::fs;
use std::path::Path;
use std::process::Command;

use medchain::cli::{run, EXIT_DENIED, EXIT_FAILURE, EXIT_INTEGRITY, EXIT_MALFORMED, EXIT_OK};

struct Out {
    code: i32,
    out: String,
    err: String,
}

fn cli(home: &Path, args: &[&str]) -> Out {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let h = home.to_str().unwrap();
    let argv = ["medchain", "--home", h].into_iter().chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    Out {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn ok(home: &Path, args: &[&str]) -> String {
    let o = cli(home, args);
    assert_eq!(o.code, EXIT_OK, "{args:?}: {}", o.err);
    o.out
}

fn state_digest(home: &Path) -> String {
    let out = ok(home, &["--format", "lines", "status"]);
    out.lines().find_map(|l| l.strip_prefix("state ")).unwrap().to_string()
}

/// alice (patient) and bob (staff) registered, key shared, `bp` granted, one record stored.
fn setup(home: &Path) -> (std::path::PathBuf, String) {
    ok(home, &["--seed", "1", "register", "--role", "patient", "--id", "alice"]);
    ok(home, &["--seed", "2", "register", "--role", "staff", "--id", "bob", "--profile", "cardiology"]);
    ok(home, &["--seed", "3", "share", "alice", "bob"]);
    ok(home, &["grant", "alice", "bob", "bp"]);
    let rec = home.join("rec.txt");
    fs::write(&rec, "systolic 121 diastolic 79").unwrap();
    let put = ok(home, &["--format", "lines", "--seed", "4", "put", "alice", "bp", rec.to_str().unwrap()]);
    let digest = put.lines().find_map(|l| l.strip_prefix("digest ")).unwrap().to_string();
    (rec, digest)
}

#[test]
fn share_grant_put_get_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let home = dir.path();
    let (_, digest) = setup(home);
    assert_eq!(ok(home, &["get", "bob", "alice", "bp"]), "systolic 121 diastolic 79");
    let dest = home.join("copy.txt");
    ok(home, &["get", "bob", "alice", "bp", &digest, "--output", dest.to_str().unwrap()]);
    assert_eq!(fs::read_to_string(dest).unwrap(), "systolic 121 diastolic 79");
    assert!(home.join("envelopes/alice-bob.env").exists());
}

#[test]
fn duplicate_registration_fails() {
    let dir = tempfile::tempdir().unwrap();
    let home = dir.path();
    ok(home, &["register", "--role", "patient", "--id", "alice"]);
    let again = cli(home, &["register", "--role", "patient", "--id", "alice"]);
    assert_eq!(again.code, EXIT_FAILURE);
    assert!(again.err.contains("already registered"));
}

#[test]
fn keygen_then_register_keeps_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let home = dir.path();
    let k = ok(home, &["--format", "lines", "keygen", "--role", "staff", "--id", "bob"]);
    let r = ok(home, &["--format", "lines", "register", "--role", "staff", "--id", "bob"]);
    let addr = |s: &str| s.lines().find_map(|l| l.strip_prefix("address ")).unwrap().to_string();
    assert_eq!(addr(&k), addr(&r));
    assert_eq!(cli(home, &["register", "--role", "patient", "--id", "carol"]).code, EXIT_OK);
    ok(home, &["keygen", "--role", "patient", "--id", "dave"]);
    assert_eq!(cli(home, &["register", "--role", "staff", "--id", "dave"]).code, EXIT_MALFORMED);
}

#[test]
fn grant_signed_by_staff_is_refused_without_state_change() {
    let dir = tempfile::tempdir().unwrap();
    let home = dir.path();
    setup(home);
    let before = state_digest(home);
    let o = cli(home, &["grant", "alice", "bob", "bp", "notes", "--signer", "bob"]);
    assert_eq!(o.code, EXIT_DENIED);
    assert!(o.out.contains("s=0"));
    assert_eq!(state_digest(home), before);
}

#[test]
fn revoke_then_get_is_denied() {
    let dir = tempfile::tempdir().unwrap();
    let home = dir.path();
    setup(home);
    ok(home, &["revoke", "alice", "bob"]);
    let before = state_digest(home);
    let o = cli(home, &["get", "bob", "alice", "bp"]);
    assert_eq!(o.code, EXIT_DENIED, "{}", o.err);
    assert!(o.out.is_empty());
    assert_eq!(state_digest(home), before);
    assert_eq!(ok(home, &["get", "alice", "alice", "bp"]), "systolic 121 diastolic 79");
}

#[test]
fn ungranted_type_is_denied() {
    let dir = tempfile::tempdir().unwrap();
    let home = dir.path();
    setup(home);
    assert_eq!(cli(home, &["get", "bob", "alice", "genome"]).code, EXIT_DENIED);
}

#[test]
fn tampered_store_raises_alarm() {
    let dir = tempfile::tempdir().unwrap();
    let home = dir.path();
    let (_, digest) = setup(home);
    let mut touched = 0;
    for entry in fs::read_dir(home.join("store")).unwrap() {
        let path = entry.unwrap().path();
        let mut bytes = fs::read(&path).unwrap();
        bytes[0] ^= 1;
        fs::write(&path, bytes).unwrap();
        touched += 1;
    }
    assert!(touched > 0);
    let o = cli(home, &["get", "bob", "alice", "bp", &digest]);
    assert_eq!(o.code, EXIT_INTEGRITY, "{}", o.err);
    assert!(o.out.is_empty());
}

#[test]
fn audit_lists_policy_and_data_events_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let home = dir.path();
    setup(home);
    ok(home, &["get", "bob", "alice", "bp"]);
    ok(home, &["revoke", "alice", "bob"]);
    let text = ok(home, &["audit", "alice"]);
    let labels: Vec<&str> = text.lines().map(|l| l.split_whitespace().nth(1).unwrap()).collect();
    assert_eq!(labels, ["grant", "write", "read", "revoke"]);
    let lines = ok(home, &["--format", "lines", "audit", "alice"]);
    let heights: Vec<u64> = lines.lines().map(|l| l.split(' ').nth(1).unwrap().parse().unwrap()).collect();
    assert!(heights.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(cli(home, &["audit", "nobody"]).code, EXIT_MALFORMED);
}

#[test]
fn binary_reports_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_medchain");
    let status = Command::new(bin).arg("--home").arg(dir.path()).arg("status").output().unwrap().status;
    assert_eq!(status.code(), Some(EXIT_OK));
    let status = Command::new(bin).arg("nonsense").output().unwrap().status;
    assert_eq!(status.code(), Some(EXIT_MALFORMED));
}

#[test]
fn run_scenario_reports_and_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let home = dir.path();
    let trace = home.join("trace.txt");
    let out = ok(home, &["--format", "lines", "--out", trace.to_str().unwrap(), "run-scenario", "storage"]);
    assert!(out.lines().any(|l| l == "result PASS"));
    assert!(fs::read_to_string(trace).unwrap().lines().count() > 10);
    let bad = home.join("bad.scn");
    fs::write(&bad, "seed = 1\n[script]\nregister a patient\nexpect height == 9\n").unwrap();
    assert_eq!(cli(home, &["run-scenario", bad.to_str().unwrap()]).code, EXIT_FAILURE);
}
