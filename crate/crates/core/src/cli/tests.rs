use super::*;

fn run_str(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(std::iter::once("medchain").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8_lossy(&out).into_owned(), String::from_utf8_lossy(&err).into_owned())
}

#[test]
fn help_is_success_and_bad_usage_is_malformed() {
    assert_eq!(run_str(&["--help"]).0, EXIT_OK);
    assert_eq!(run_str(&["frobnicate"]).0, EXIT_MALFORMED);
    assert_eq!(run_str(&["register", "--role", "doctor", "--id", "x"]).0, EXIT_MALFORMED);
}

#[test]
fn ids_are_plain_file_names() {
    let dir = tempfile::tempdir().unwrap();
    let home = Home::open(dir.path(), None).unwrap();
    assert!(home.key_path("alice").is_ok());
    assert!(home.key_path("dr.bob-2").is_ok());
    for bad in ["", "../x", ".hidden", "a/b", "sp ace"] {
        assert_eq!(home.key_path(bad).unwrap_err().code, EXIT_MALFORMED, "{bad}");
    }
}

#[test]
fn keygen_refuses_to_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    let h = dir.path().to_str().unwrap();
    let args = ["--home", h, "keygen", "--role", "staff", "--id", "carol"];
    assert_eq!(run_str(&args).0, EXIT_OK);
    assert_eq!(run_str(&args).0, EXIT_FAILURE);
    let mut forced = args.to_vec();
    forced.push("--force");
    assert_eq!(run_str(&forced).0, EXIT_OK);
}

#[test]
fn unknown_scenario_is_malformed() {
    let (code, _, err) = run_str(&["run-scenario", "no-such-thing"]);
    assert_eq!(code, EXIT_MALFORMED);
    assert!(err.contains("no-such-thing"));
}
