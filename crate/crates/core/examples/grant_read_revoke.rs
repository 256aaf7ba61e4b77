//! Access control on the ledger state machine, without networking.
//!
//! Each accepted transaction goes into its own block; replaying the chain
//! reproduces the live state digest.
//!
//! ```bash
//! cargo run --example grant_read_revoke
//! ```

use medchain::crypto::Digest;
use medchain::identity::{join_patient, join_staff, open_envelope, share_sym_key, Actor};
use medchain::ledger::{audit_trail, check_block, replay, AccessPayload, Block, LedgerState, Payload, Policy, Transaction};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

struct Ledger {
    chain: Vec<Block>,
    state: LedgerState,
}

impl Ledger {
    fn submit(&mut self, label: &str, tx: Transaction) -> bool {
        if let Err(why) = self.state.evaluate(&tx) {
            println!("{label:<28} rejected: {why}");
            return false;
        }
        let tip = self.chain.last().unwrap();
        let block = Block::next(tip, tip.header.timestamp + 1, 0, vec![tx.clone()]);
        self.state = check_block(tip, &block, &self.state).expect("valid block");
        self.chain.push(block);
        println!("{label:<28} committed at height {}", self.state.height());
        true
    }
}

fn main() {
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let mut ledger = Ledger {
        chain: vec![Block::genesis()],
        state: LedgerState::genesis(),
    };
    let (mut alice, reg) = join_patient("alice", &mut rng);
    ledger.submit("register alice", reg);
    let (mut bob, reg) = join_staff("bob", "cardiology", &mut rng);
    ledger.submit("register bob", reg);

    let env = share_sym_key(&mut alice, bob.public_key(), ledger.state.directory(), &mut rng).unwrap();
    open_envelope(&mut bob, &env).unwrap();

    ledger.submit("alice grants bob bp", alice.grant(bob.public_key(), ["bp"]));
    let write = alice.write_record(&bob.public_key(), "bp", b"128/82", &mut rng).unwrap();
    ledger.submit("alice writes bp", write);
    let digest: Digest = *ledger.state.indexed_digests(&alice.public_key(), "bp").unwrap().iter().next().unwrap();

    ledger.submit("bob reads bp", bob.read_tx(alice.public_key(), "bp", digest));
    ledger.submit("bob reads notes", bob.read_tx(alice.public_key(), "notes", digest));
    let forged = Payload::Access(AccessPayload::from_policy(Policy::new(
        alice.public_key(),
        bob.public_key(),
        ["notes"],
    )));
    ledger.submit("bob grants himself notes", bob.sign_tx(forged));
    ledger.submit("alice revokes bob", alice.revoke(bob.public_key()));
    ledger.submit("bob reads bp again", bob.read_tx(alice.public_key(), "bp", digest));

    println!("\naudit trail for alice:");
    for ev in audit_trail(&ledger.state, &alice.public_key()) {
        println!("  {}.{} {}", ev.height, ev.index, ev.action.label());
    }

    let replayed = replay(&ledger.chain).unwrap();
    println!("\nlive state   {}", ledger.state.digest());
    println!("replay state {}", replayed.digest());
}
