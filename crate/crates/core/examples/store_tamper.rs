//! Content-addressed off-chain storage with replication and verify-on-read.
//!
//! ```bash
//! cargo run --example store_tamper
//! ```

use medchain::crypto::{encrypt, gen_sym_key};
use medchain::store::{ContentStore, Holder};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn main() {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let key = gen_sym_key(&mut rng);
    let mut store = ContentStore::with_nodes(["s0", "s1", "s2", "s3", "s4"]);

    let c = encrypt(&key, b"mri report: no acute findings", b"imaging", &mut rng);
    let addr = store.put(&c);
    let placed = store.replicate(&addr, 2).unwrap();
    println!("stored {} locally and on nodes {:?}", addr.short(), placed.holders);

    store.tamper(&addr, Holder::Local, 0, 0x01).unwrap();
    let report = store.read(&addr);
    println!(
        "after tampering the local copy: ok={} served_by={:?} tamper detected={}",
        report.result.is_ok(),
        report.served_by,
        report.tamper_detected()
    );

    for n in placed.holders {
        store.tamper(&addr, Holder::Node(n), 3, 0x80).unwrap();
    }
    let report = store.read(&addr);
    match report.result {
        Ok(_) => println!("unexpectedly served a copy"),
        Err(e) => println!("every copy tampered: {e}"),
    }
}
