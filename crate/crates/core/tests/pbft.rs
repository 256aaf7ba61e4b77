mod common;

use std::collections::VecDeque;

use common::schedules::{generate, run, Mode};
use medchain::consensus::{ConsensusMessage, MessageKind, Replica, ReplicaConfig, ReplicaSet, Target};
use medchain::crypto::{Digest, SigningKeyPair};
use medchain::identity::join_patient;
use medchain::ledger::{Block, Transaction};
use medchain::sim::replica_keys;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

struct Cluster {
    keys: Vec<SigningKeyPair>,
    set: ReplicaSet,
    replicas: Vec<Replica>,
}

impl Cluster {
    fn new(n: usize) -> Cluster {
        let keys = replica_keys(11, n);
        let set = ReplicaSet::new(keys.iter().map(|k| k.public).collect()).unwrap();
        let replicas = (0..n as u32).map(|i| fresh(&keys, &set, i)).collect();
        Cluster { keys, set, replicas }
    }
}

fn fresh(keys: &[SigningKeyPair], set: &ReplicaSet, id: u32) -> Replica {
    Replica::new(id, set.clone(), keys[id as usize].private.clone(), ReplicaConfig::default())
}

fn one_tx() -> Transaction {
    join_patient("perm", &mut ChaCha20Rng::seed_from_u64(5)).1
}

/// Honest run with FIFO delivery; returns the committed block and every
/// message each replica received, in arrival order.
fn harvest(n: usize) -> (Block, Vec<Vec<ConsensusMessage>>) {
    let mut c = Cluster::new(n);
    let tx = one_tx();
    let mut queue = VecDeque::new();
    let mut inbox = vec![Vec::new(); n];
    let push = |queue: &mut VecDeque<(u32, ConsensusMessage)>, from: u32, out: Vec<medchain::consensus::Outgoing>| {
        for o in out {
            match o.to {
                Target::All => (0..n as u32).filter(|&r| r != from).for_each(|r| queue.push_back((r, o.msg.clone()))),
                Target::One(r) => queue.push_back((r, o.msg)),
            }
        }
    };
    for r in &mut c.replicas {
        assert!(r.submit_tx(tx.clone(), 0).outgoing.is_empty());
    }
    let step = c.replicas[0].propose(0);
    push(&mut queue, 0, step.outgoing);
    while let Some((to, msg)) = queue.pop_front() {
        inbox[to as usize].push(msg.clone());
        let step = c.replicas[to as usize].on_message(msg, 1);
        assert!(step.dropped.is_empty());
        push(&mut queue, to, step.outgoing);
    }
    let block = c.replicas[0].chain()[1].clone();
    assert!(c.replicas.iter().all(|r| r.chain().len() == 2 && r.chain()[1] == block));
    (block, inbox)
}

/// Lexicographic successor; false once the last ordering was reached.
fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).unwrap();
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Feeds `inbox` to a fresh replica in every possible order. Each order must
/// commit exactly `expected`, exactly once, with nothing flagged.
fn all_orders_commit(id: u32, inbox: &[ConsensusMessage], expected: Digest) -> usize {
    let c = Cluster::new(4);
    let tx = one_tx();
    let mut order: Vec<usize> = (0..inbox.len()).collect();
    let mut count = 0;
    loop {
        let mut r = fresh(&c.keys, &c.set, id);
        r.submit_tx(tx.clone(), 0);
        if id == 0 {
            let step = r.propose(0);
            assert_eq!(step.outgoing[0].msg.block_digest(), expected);
        }
        let mut commits = Vec::new();
        for (t, &i) in order.iter().enumerate() {
            let step = r.on_message(inbox[i].clone(), t as u64 + 1);
            assert!(step.dropped.is_empty(), "order {order:?}: {:?}", step.dropped);
            commits.extend(step.committed.iter().map(Block::hash));
        }
        assert_eq!(commits, vec![expected], "order {order:?}");
        assert_eq!(r.height(), 1);
        count += 1;
        if !next_permutation(&mut order) {
            return count;
        }
    }
}

#[test]
fn every_delivery_order_commits_the_same_block_at_a_backup() {
    let (block, inbox) = harvest(4);
    let kinds: Vec<_> = inbox[1].iter().map(ConsensusMessage::kind).collect();
    assert_eq!(kinds.iter().filter(|k| **k == MessageKind::PrePrepare).count(), 1);
    // the primary's own prepare is included
    assert_eq!(kinds.iter().filter(|k| **k == MessageKind::Prepare).count(), 3);
    assert_eq!(kinds.iter().filter(|k| **k == MessageKind::Commit).count(), 3);
    assert_eq!(all_orders_commit(1, &inbox[1], block.hash()), 5040);
}

#[test]
fn every_delivery_order_commits_the_same_block_at_the_primary() {
    let (block, inbox) = harvest(4);
    assert_eq!(inbox[0].len(), 6, "{:?}", inbox[0].iter().map(ConsensusMessage::kind).collect::<Vec<_>>());
    assert_eq!(all_orders_commit(0, &inbox[0], block.hash()), 720);
}

#[test]
fn permutation_helper_enumerates_all_orders() {
    let mut p = vec![0, 1, 2, 3];
    let mut n = 1;
    while next_permutation(&mut p) {
        n += 1;
    }
    assert_eq!((n, p), (24, vec![3, 2, 1, 0]));
}

#[test]
fn adversarial_schedules_never_fork() {
    for (n, count) in [(4, 40), (7, 12), (10, 4)] {
        for seed in 0..count {
            let s = generate(1_000 + seed, n, Mode::Adversarial);
            assert!(s.faulty() <= (n - 1) / 3);
            let o = run(&s);
            assert_eq!((o.forks, o.safety_violations), (0, 0), "{}", s.describe());
            assert_eq!(o.committed, o.submitted, "{}: {o:?}", s.describe());
        }
    }
}

#[test]
fn synchronous_schedules_commit_within_n_view_changes() {
    for (n, count) in [(4, 30), (7, 10), (10, 4)] {
        for seed in 0..count {
            let s = generate(2_000 + seed, n, Mode::Synchronous);
            let o = run(&s);
            assert_eq!(o.committed, o.submitted, "{}: {o:?}", s.describe());
            assert!(o.max_views_to_commit <= n as u64, "{}: {o:?}", s.describe());
        }
    }
}

#[test]
fn schedules_are_reproducible() {
    let s = generate(77, 7, Mode::Adversarial);
    let (a, b) = (run(&s), run(&s));
    assert_eq!((a.committed, a.ticks, a.max_views_to_commit), (b.committed, b.ticks, b.max_views_to_commit));
}

#[test]
fn lossy_schedules_with_a_crash_still_commit() {
    // Both once stalled: lost client copies, and a replica stranded one view ahead.
    for seed in [3, 123] {
        let s = generate(seed, 4, Mode::Adversarial);
        let o = run(&s);
        assert_eq!(o.committed, o.submitted, "{}: {o:?}", s.describe());
        assert_eq!(o.forks, 0);
    }
}
