//! The same replicas on OS threads with channels and a wall clock, instead
//! of the deterministic simulator.
//!
//! ```bash
//! cargo run --release --example threaded_cluster
//! ```

use std::time::Duration;

use medchain::identity::join_patient;
use medchain::sim::{run_threaded, SimConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn main() {
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let txs: Vec<_> = (0..100).map(|i| join_patient(&format!("p{i}"), &mut rng).1).collect();
    let out = run_threaded(&SimConfig::default(), txs, Duration::from_secs(60));
    println!("complete: {} in {:?}", out.complete, out.elapsed);
    for (i, chain) in out.chains.iter().enumerate() {
        let txs: usize = chain.iter().map(|b| b.txs.len()).sum();
        println!("r{i}: height {} with {txs} transactions, tip {}", chain.len() - 1, chain.last().unwrap().hash().short());
    }
}
