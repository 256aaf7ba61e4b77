mod common;

use common::oracle::{
    key_pool, mismatches, revocation_violations, run_system, script_strategy, Body, Verdict,
};
use medchain::ledger::{check_block, replay, Block};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn state_machine_matches_reference(script in script_strategy(), seed in any::<u64>()) {
        let keys = key_pool(1);
        let run = run_system(&script, &keys, false, &mut ChaCha20Rng::seed_from_u64(seed));
        let bad = mismatches(&run);
        prop_assert!(bad.is_empty(), "first mismatch {:?} in {:?}", bad[0], script.ops[..=bad[0].0.min(script.ops.len() - 1)].to_vec());
    }

    #[test]
    fn revoked_staff_never_read(script in script_strategy(), seed in any::<u64>()) {
        let run = run_system(&script, &key_pool(1), false, &mut ChaCha20Rng::seed_from_u64(seed));
        prop_assert_eq!(revocation_violations(&run).1, 0);
    }

    #[test]
    fn rejected_transactions_leave_state_unchanged(script in script_strategy(), seed in any::<u64>()) {
        let run = run_system(&script, &key_pool(1), false, &mut ChaCha20Rng::seed_from_u64(seed));
        let mut state = medchain::ledger::LedgerState::genesis();
        for (tx, v) in run.txs.iter().zip(&run.verdicts) {
            let before = state.digest();
            let r = state.apply(tx);
            prop_assert_eq!(r.is_ok(), *v == Verdict::Accepted);
            if r.is_err() {
                prop_assert_eq!(state.digest(), before);
            }
        }
    }
}

proptest! {
    // Block validation checks signatures, so these scripts are signed for real.
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn blocks_of_accepted_transactions_replay_to_same_state(script in script_strategy(), seed in any::<u64>(), per_block in 1usize..16) {
        let run = run_system(&script, &key_pool(1), true, &mut ChaCha20Rng::seed_from_u64(seed));
        let accepted: Vec<_> = run.txs.iter().zip(&run.verdicts).filter(|(_, v)| **v == Verdict::Accepted).map(|(t, _)| t.clone()).collect();
        let mut chain = vec![Block::genesis()];
        let mut state = medchain::ledger::LedgerState::genesis();
        for (i, batch) in accepted.chunks(per_block).enumerate() {
            let block = Block::next(chain.last().unwrap(), i as u64 + 1, 0, batch.to_vec());
            state = check_block(chain.last().unwrap(), &block, &state).unwrap();
            chain.push(block);
        }
        prop_assert_eq!(replay(&chain).unwrap().digest(), state.digest());
    }
}

#[test]
fn signed_scripts_verify_and_match() {
    let keys = key_pool(2);
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    for _ in 0..5 {
        let script = common::oracle::random_script(&mut rng);
        let run = run_system(&script, &keys, true, &mut rng);
        assert_eq!(run.bad_signatures, 0);
        assert!(mismatches(&run).is_empty());
    }
}

#[test]
fn generator_reaches_every_verdict() {
    let keys = key_pool(1);
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let mut seen = std::collections::BTreeSet::new();
    let mut revoked_reads = 0;
    for _ in 0..300 {
        let run = run_system(&common::oracle::random_script(&mut rng), &keys, false, &mut rng);
        revoked_reads += revocation_violations(&run).0;
        for (e, v) in run.entries.iter().zip(&run.verdicts) {
            let kind = match e.body {
                Body::Register(_) => "register",
                Body::Grant { .. } => "grant",
                Body::Write { .. } => "write",
                Body::Read { .. } => "read",
            };
            seen.insert(format!("{kind}:{v:?}"));
        }
    }
    for want in [
        "register:Accepted",
        "register:AlreadyRegistered",
        "grant:Accepted",
        "grant:NotPolicyOwner",
        "grant:InvalidParty",
        "grant:Stale",
        "write:Accepted",
        "write:WriteByNonOwner",
        "write:Denied",
        "read:Accepted",
        "read:Denied",
        "read:NotIndexed",
        "read:UnknownSender",
    ] {
        assert!(seen.contains(want), "never produced {want}; saw {seen:?}");
    }
    assert!(revoked_reads > 100, "{revoked_reads}");
}
