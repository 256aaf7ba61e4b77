use super::*;

#[test]
fn parses_header_and_script() {
    let sc = Scenario::parse(
        "name = t\nreplicas = 7\n[script]\nregister alice patient\nregister bob staff \"general practice\"\n\
         grant alice bob \"blood pressure\" lab\nexpect outcome ok\nexpect height >= 2\n",
    )
    .unwrap();
    assert_eq!(sc.name, "t");
    assert_eq!(sc.config.replicas, 7);
    assert_eq!(sc.steps.len(), 5);
    assert_eq!(
        sc.steps[2].action,
        Action::Grant {
            signer: "alice".into(),
            patient: "alice".into(),
            staff: "bob".into(),
            types: vec!["blood pressure".into(), "lab".into()],
        }
    );
    assert_eq!(sc.steps[2].line, 6);
}

#[test]
fn rejects_unknown_actor_and_metric() {
    let e = Scenario::parse("[script]\ngrant alice bob lab\n").unwrap_err();
    assert_eq!(e.line(), 2);
    assert!(Scenario::parse("[script]\nexpect colour == 1\n").is_err());
    assert!(Scenario::parse("[script]\nregister a patient\nregister a staff\n").is_err());
    assert!(Scenario::parse("replicas = 5\n[script]\n").is_err());
}

#[test]
fn every_bundled_scenario_parses() {
    for b in BUNDLED {
        Scenario::parse(b.source).unwrap_or_else(|e| panic!("{}: {e}", b.file));
    }
    assert!(bundled("dos").is_some());
    assert!(bundled("storage.scn").is_some());
}

#[test]
fn grant_read_revoke_flow() {
    let sc = Scenario::parse(
        "seed = 3\n[script]\nregister alice patient\nregister drbob staff cardiology\nshare alice drbob\n\
         grant alice drbob temperature\nwrite alice drbob temperature \"36.9 C evening\"\n\
         read drbob alice temperature\nexpect outcome ok\nread drbob alice pulse\nexpect outcome denied\n\
         grant-as drbob alice drbob pulse\nexpect outcome rejected\nrevoke alice drbob\n\
         read drbob alice temperature\nexpect outcome denied\nexpect privacy_leaks == 0\n\
         expect replay_mismatches == 0\n",
    )
    .unwrap();
    let report = run_scenario(&sc).unwrap();
    assert!(report.passed(), "{}", report.render_text());
    let again = run_scenario(&sc).unwrap();
    assert_eq!(report.render_text(), again.render_text());
}
