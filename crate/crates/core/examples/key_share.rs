//! A patient seals a fresh record key for a staff member.
//!
//! The envelope travels off-ledger; only the addressed staff member can
//! open it.
//!
//! ```bash
//! cargo run --example key_share
//! ```

use medchain::identity::{join_patient, join_staff, open_envelope, share_sym_key, unseal, Actor};
use medchain::ledger::LedgerState;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn main() {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let (mut alice, reg_a) = join_patient("alice", &mut rng);
    let (mut bob, reg_b) = join_staff("bob", "cardiology", &mut rng);
    let (eve, reg_e) = join_staff("eve", "radiology", &mut rng);

    let mut state = LedgerState::genesis();
    for tx in [&reg_a, &reg_b, &reg_e] {
        state.apply(tx).expect("registration");
    }

    let env = share_sym_key(&mut alice, bob.public_key(), state.directory(), &mut rng).unwrap();
    println!("envelope: {} bytes", env.to_wire().len());

    println!("eve unseals: {:?}", unseal(&eve.keys.private, &env).map(|_| ()));
    let key = open_envelope(&mut bob, &env).unwrap();
    println!("bob unseals: key matches = {}", Some(&key) == alice.shared_keys.get(&bob.public_key()));

    let own = alice.public_key();
    let refused = share_sym_key(&mut alice, own, state.directory(), &mut rng);
    println!("sharing with a non-staff key: {:?}", refused.map(|_| ()));
}
