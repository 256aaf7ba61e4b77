//! Seven replicas (tolerating two faults) order transactions while the
//! primary equivocates and, later, a second replica crashes.
//!
//! ```bash
//! cargo run --example pbft_consensus
//! ```

use medchain::consensus::Behavior;
use medchain::identity::join_patient;
use medchain::sim::{Fault, SimConfig, Simulation, SubmitOutcome, TxStatus};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn main() {
    let mut config = SimConfig {
        seed: 5,
        replicas: 7,
        ..SimConfig::default()
    };
    config.byzantine.insert(0, Behavior::Equivocate);
    let mut sim = Simulation::new(config).unwrap();
    sim.add_client("clinic");
    let mut rng = ChaCha20Rng::seed_from_u64(5);

    let mut pending = Vec::new();
    for i in 0..6 {
        let (_, tx) = join_patient(&format!("p{i}"), &mut rng);
        if let SubmitOutcome::Accepted(h) = sim.submit("clinic", tx) {
            pending.push(h);
        }
        if i == 3 {
            sim.inject_fault(Fault::Crash(2)).unwrap();
            println!("tick {:>4}: crashed r2", sim.now());
        }
        sim.run_for(5);
    }
    let done = sim.run_until(|s| pending.iter().all(|h| s.tx(h).is_some_and(|r| r.is_resolved())), 5_000);
    println!("all resolved: {}", done.reached());
    let top = sim.max_honest_height();
    sim.run_until(|s| s.min_honest_height() >= top, 1_000);

    for h in &pending {
        if let Some(TxStatus::Committed { height, tick }) = sim.tx(h).map(|r| &r.status) {
            println!("  {} committed at height {height}, tick {tick}", h.short());
        }
    }
    for r in sim.replicas() {
        println!(
            "r{} view {} height {} tip {} {:?}",
            r.id(),
            r.view(),
            r.height(),
            r.tip().hash().short(),
            r.behavior()
        );
    }
    let m = sim.metrics();
    println!(
        "view changes started {}, misbehaving messages dropped {}, safety violations {}",
        m.view_changes_started, m.misbehavior, m.safety_violations
    );
}
