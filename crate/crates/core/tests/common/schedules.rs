//! Seeded adversarial schedules over the simulator.

use medchain::consensus::Behavior;
use medchain::identity::join_patient;
use medchain::sim::{Fault, SimConfig, Simulation, SubmitOutcome, TxStatus};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Lossy links and a partition that eventually heals.
    Adversarial,
    /// Arbitrary bounded delays, no loss: the period after stabilisation.
    Synchronous,
}

#[derive(Debug, Clone)]
pub enum Event {
    Fault(Fault),
    Submit(u32),
}

#[derive(Debug, Clone)]
pub struct Schedule {
    pub seed: u64,
    pub config: SimConfig,
    /// Sorted by tick.
    pub events: Vec<(u64, Event)>,
    pub crashed: Vec<u32>,
}

impl Schedule {
    pub fn faulty(&self) -> usize {
        self.config.byzantine.len() + self.crashed.len()
    }

    pub fn describe(&self) -> String {
        format!(
            "seed {} n={} byzantine={:?} crashed={:?} delay={}..{} drop={:.2}",
            self.seed,
            self.config.replicas,
            self.config.byzantine,
            self.crashed,
            self.config.delay_min,
            self.config.delay_max,
            self.config.drop_rate
        )
    }
}

pub fn generate(seed: u64, n: usize, mode: Mode) -> Schedule {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5c4e_d01e);
    let f = (n - 1) / 3;
    let mut config = SimConfig {
        seed,
        replicas: n,
        delay_min: 1,
        delay_max: rng.gen_range(1..=8),
        view_timeout: rng.gen_range(20..=60),
        max_ticks: 30_000,
        ..SimConfig::default()
    };
    let mut ids: Vec<u32> = (0..n as u32).collect();
    ids.shuffle(&mut rng);
    let faulty = rng.gen_range(0..=f);
    let mut byz = Vec::new();
    if faulty > 0 && rng.gen_bool(0.5) {
        // The first primary equivocates.
        ids.retain(|&i| i != 0);
        config.byzantine.insert(0, Behavior::Equivocate);
        byz.push(0);
    }
    let mut events = Vec::new();
    let mut crashed = Vec::new();
    while byz.len() + crashed.len() < faulty {
        let id = ids.pop().unwrap();
        match rng.gen_range(0..4) {
            0 => drop(config.byzantine.insert(id, Behavior::Equivocate)),
            1 => drop(config.byzantine.insert(id, Behavior::Mute)),
            2 => drop(config.byzantine.insert(id, Behavior::Delay(rng.gen_range(5..=80)))),
            _ => {
                events.push((rng.gen_range(0..200), Event::Fault(Fault::Crash(id))));
                crashed.push(id);
                continue;
            }
        }
        byz.push(id);
    }
    if mode == Mode::Adversarial {
        if rng.gen_bool(0.5) {
            config.drop_rate = rng.gen_range(0.0..0.1);
        }
        if rng.gen_bool(0.5) {
            let mut all: Vec<u32> = (0..n as u32).collect();
            all.shuffle(&mut rng);
            let cut = rng.gen_range(1..n);
            let start = rng.gen_range(0..150);
            let groups = vec![all[..cut].to_vec(), all[cut..].to_vec()];
            events.push((start, Event::Fault(Fault::Partition(groups))));
            events.push((start + rng.gen_range(20..=200), Event::Fault(Fault::Heal)));
        }
    }
    for i in 0..rng.gen_range(1..=6) {
        events.push((rng.gen_range(0..150), Event::Submit(i)));
    }
    events.sort_by_key(|(t, _)| *t);
    Schedule {
        seed,
        config,
        events,
        crashed,
    }
}

#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub submitted: usize,
    pub committed: usize,
    /// Heights at which two honest replicas hold different blocks.
    pub forks: usize,
    pub safety_violations: u64,
    pub max_views_to_commit: u64,
    pub ticks: u64,
}

pub fn run(schedule: &Schedule) -> Outcome {
    let mut sim = Simulation::new(schedule.config.clone()).expect("valid schedule config");
    sim.add_client("client");
    let mut rng = ChaCha20Rng::seed_from_u64(schedule.seed);
    let mut hashes = Vec::new();
    for (tick, event) in &schedule.events {
        if *tick > sim.now() {
            sim.run_for(tick - sim.now());
        }
        match event {
            Event::Fault(f) => sim.inject_fault(f.clone()).expect("known target"),
            Event::Submit(i) => {
                let (_, tx) = join_patient(&format!("p{}-{i}", schedule.seed), &mut rng);
                if let SubmitOutcome::Accepted(h) = sim.submit("client", tx) {
                    hashes.push(h);
                }
            }
        }
    }
    let max = schedule.config.max_ticks;
    sim.run_until(|s| hashes.iter().all(|h| s.tx(h).is_some_and(|r| r.is_resolved())), max);
    let top = sim.max_honest_height();
    sim.run_until(|s| s.min_honest_height() >= top, 2_000);

    let mut out = Outcome {
        submitted: hashes.len(),
        safety_violations: sim.metrics().safety_violations,
        ticks: sim.now(),
        ..Outcome::default()
    };
    for h in &hashes {
        let r = sim.tx(h).unwrap();
        if matches!(r.status, TxStatus::Committed { .. }) {
            out.committed += 1;
            out.max_views_to_commit = out.max_views_to_commit.max(r.views_to_commit.unwrap_or(0));
        }
    }
    let honest: Vec<_> = sim.honest_ids().map(|i| sim.replica(i).chain().to_vec()).collect();
    let tallest = honest.iter().map(Vec::len).max().unwrap_or(0);
    for h in 0..tallest {
        let mut seen = honest.iter().filter_map(|c| c.get(h)).map(|b| b.hash());
        let first = seen.next();
        if seen.any(|x| Some(x) != first) {
            out.forks += 1;
        }
    }
    out
}
