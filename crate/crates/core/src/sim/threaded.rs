use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use super::{replica_keys, SimConfig};
use crate::consensus::{ConsensusMessage, Replica, ReplicaConfig, ReplicaSet, Step, Target};
use crate::ledger::{Block, Transaction};

enum Inbound {
    Tx(Transaction),
    Consensus(ConsensusMessage),
}

#[derive(Debug)]
pub struct ThreadedOutcome {
    pub chains: Vec<Vec<Block>>,
    pub elapsed: Duration,
    /// Every replica committed every submitted transaction before the deadline.
    pub complete: bool,
}

/// Runs one OS thread per replica over channels, with a millisecond wall
/// clock as the tick source. Not deterministic; meant for stress runs.
pub fn run_threaded(config: &SimConfig, txs: Vec<Transaction>, timeout: Duration) -> ThreadedOutcome {
    let keys = replica_keys(config.seed, config.replicas);
    let set = ReplicaSet::new(keys.iter().map(|k| k.public).collect()).expect("3f+1 replicas");
    let (senders, receivers): (Vec<Sender<Inbound>>, Vec<Receiver<Inbound>>) =
        (0..config.replicas).map(|_| channel()).unzip();
    let stop = Arc::new(AtomicBool::new(false));
    let committed: Arc<Vec<AtomicUsize>> = Arc::new((0..config.replicas).map(|_| AtomicUsize::new(0)).collect());
    let start = Instant::now();

    let handles: Vec<_> = receivers
        .into_iter()
        .enumerate()
        .map(|(i, rx)| {
            let rc = ReplicaConfig {
                view_timeout: config.view_timeout,
                behavior: config.byzantine.get(&(i as u32)).copied().unwrap_or_default(),
                ..ReplicaConfig::default()
            };
            let mut replica = Replica::new(i as u32, set.clone(), keys[i].private.clone(), rc);
            let peers = senders.clone();
            let stop = Arc::clone(&stop);
            let committed = Arc::clone(&committed);
            thread::spawn(move || {
                let route = |step: Step| {
                    for out in step.outgoing {
                        match out.to {
                            Target::All => {
                                for (j, p) in peers.iter().enumerate() {
                                    if j != i {
                                        let _ = p.send(Inbound::Consensus(out.msg.clone()));
                                    }
                                }
                            }
                            Target::One(j) => {
                                let _ = peers[j as usize].send(Inbound::Consensus(out.msg));
                            }
                        }
                    }
                    step.committed.iter().map(|b| b.txs.len()).sum::<usize>()
                };
                while !stop.load(Ordering::Relaxed) {
                    let now = start.elapsed().as_millis() as u64 + 1;
                    let step = match rx.recv_timeout(Duration::from_millis(1)) {
                        Ok(Inbound::Tx(tx)) => replica.submit_tx(tx, now),
                        Ok(Inbound::Consensus(m)) => replica.on_message(m, now),
                        Err(RecvTimeoutError::Timeout) => replica.tick(now),
                        Err(RecvTimeoutError::Disconnected) => break,
                    };
                    let n = route(step) + route(replica.tick(now));
                    committed[i].fetch_add(n, Ordering::Relaxed);
                }
                replica.chain().to_vec()
            })
        })
        .collect();

    let total = txs.len();
    for tx in txs {
        for s in &senders {
            let _ = s.send(Inbound::Tx(tx.clone()));
        }
    }
    let complete = loop {
        if committed.iter().all(|c| c.load(Ordering::Relaxed) >= total) {
            break true;
        }
        if start.elapsed() >= timeout {
            break false;
        }
        thread::sleep(Duration::from_millis(2));
    };
    stop.store(true, Ordering::Relaxed);
    drop(senders);
    let chains = handles.into_iter().map(|h| h.join().expect("replica thread")).collect();
    ThreadedOutcome {
        chains,
        elapsed: start.elapsed(),
        complete,
    }
}
