//! An authorised client floods the network at 100x the rate limit while an
//! honest client keeps submitting.
//!
//! ```bash
//! cargo run --example dos_flood
//! ```

use medchain::identity::join_patient;
use medchain::sim::{Fault, SimConfig, Simulation, SubmitOutcome};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn mean_latency(flood: bool) -> (f64, Simulation) {
    let mut sim = Simulation::new(SimConfig {
        seed: 21,
        ..SimConfig::default()
    })
    .unwrap();
    sim.add_client("alice");
    sim.add_client("mallory");
    if flood {
        sim.inject_fault(Fault::Flood {
            node: "mallory".into(),
            multiplier: 100,
            duration: 400,
        })
        .unwrap();
    }
    let mut rng = ChaCha20Rng::seed_from_u64(21);
    let mut mine = Vec::new();
    for i in 0..8 {
        let (_, tx) = join_patient(&format!("a{i}"), &mut rng);
        if let SubmitOutcome::Accepted(h) = sim.submit("alice", tx) {
            mine.push(h);
        }
        sim.run_for(40);
    }
    sim.run_until(|s| mine.iter().all(|h| s.tx(h).is_some_and(|r| r.is_resolved())), 5_000);
    let lat: Vec<u64> = mine.iter().filter_map(|h| sim.tx(h).and_then(|r| r.latency())).collect();
    (lat.iter().sum::<u64>() as f64 / lat.len().max(1) as f64, sim)
}

fn main() {
    let (base, _) = mean_latency(false);
    let (flooded, sim) = mean_latency(true);
    println!("honest mean latency: {base:.1} ticks quiet, {flooded:.1} ticks under flood");
    println!("ratio {:.2}", flooded / base);
    println!(
        "flood submissions refused {}, most accepted from one sender in a window {} (limit {})",
        sim.metrics().rate_limited,
        sim.limiter().max_window_accepts(),
        sim.limiter().limit()
    );
}
