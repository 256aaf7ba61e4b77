//! Deterministic discrete-event network for replicas, clients and storage
//! nodes.
//!
//! Time is a logical tick counter. Each tick first delivers every event due
//! at or before it, in `(tick, insertion sequence)` order, then ticks every
//! live replica in id order. All randomness (link delays, drops, fault
//! parameters) comes from ChaCha streams seeded by [`SimConfig::seed`], so
//! equal seeds and configurations give byte-identical traces.

mod config;
mod fault;
mod limiter;
mod threaded;
mod trace;

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::consensus::{
    Behavior, CommitCert, ConsensusMessage, MessageBody, Outgoing, Replica, ReplicaConfig,
    ReplicaSet, Step, Target,
};
use crate::crypto::{gen_sig_keypair, hash_parts, Digest, SigningKeyPair};
use crate::identity::Role;
use crate::ledger::{
    compute_tx_root, Block, DataContent, Payload, RegisterPayload, Transaction, TxRejection,
};
use crate::store::{ContentStore, Holder, StoreError};

pub use config::{ConfigError, SimConfig, CONFIG_KEYS};
pub use fault::{parse_replica, Fault};
pub use limiter::RateLimiter;
pub use threaded::{run_threaded, ThreadedOutcome};
pub use trace::{Trace, TraceRecord};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("unknown fault target `{0}`")]
    UnknownTarget(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NetMessage {
    Consensus(ConsensusMessage),
    Tx(Transaction),
}

impl NetMessage {
    pub fn kind_name(&self) -> &'static str {
        match self {
            NetMessage::Consensus(m) => m.kind().name(),
            NetMessage::Tx(_) => "tx",
        }
    }

    pub fn digest(&self) -> Digest {
        match self {
            NetMessage::Consensus(m) => m.digest(),
            NetMessage::Tx(t) => t.hash(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Replica(u32),
    Client,
    Storage(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SendOutcome {
    Scheduled { deliver_at: u64 },
    Dropped,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubmitOutcome {
    Accepted(Digest),
    RateLimited,
    NotInRoster,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TxStatus {
    Pending,
    Committed { height: u64, tick: u64 },
    Rejected(TxRejection),
}

#[derive(Debug, Clone)]
pub struct TxRecord {
    pub hash: Digest,
    pub sender: String,
    pub tx: Transaction,
    pub submitted_at: u64,
    pub view_at_submit: u64,
    pub status: TxStatus,
    /// Views advanced between submission and first honest commit.
    pub views_to_commit: Option<u64>,
    /// Generated by a flood fault rather than a scripted actor.
    pub flood: bool,
    rejected_by: BTreeSet<u32>,
    resends: u32,
}

impl TxRecord {
    pub fn latency(&self) -> Option<u64> {
        match self.status {
            TxStatus::Committed { tick, .. } => Some(tick - self.submitted_at),
            _ => None,
        }
    }

    pub fn is_resolved(&self) -> bool {
        self.status != TxStatus::Pending
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Metrics {
    pub sent: u64,
    pub delivered: u64,
    pub dropped_link: u64,
    pub dropped_partition: u64,
    pub dropped_crashed: u64,
    pub roster_rejections: u64,
    pub rate_limited: u64,
    /// Messages dropped by replicas (bad signature, stale view, ...).
    pub misbehavior: u64,
    /// Blocks refused by honest replicas.
    pub rejected_blocks: u64,
    pub view_changes_started: u64,
    pub safety_violations: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunOutcome {
    Reached(u64),
    Timeout(u64),
}

impl RunOutcome {
    pub fn reached(self) -> bool {
        matches!(self, RunOutcome::Reached(_))
    }
}

#[derive(Debug, Clone)]
struct Envelope {
    from: String,
    to: String,
    msg: NetMessage,
}

#[derive(Debug, Clone)]
struct Flood {
    node: String,
    per_tick: u32,
    until: u64,
    counter: u64,
}

pub fn replica_name(id: u32) -> String {
    format!("r{id}")
}

pub fn storage_name(i: usize) -> String {
    format!("s{i}")
}

/// Deterministic replica keys for a seed.
pub fn replica_keys(seed: u64, n: usize) -> Vec<SigningKeyPair> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n).map(|_| gen_sig_keypair(&mut rng)).collect()
}

pub struct Simulation {
    config: SimConfig,
    set: ReplicaSet,
    keys: Vec<SigningKeyPair>,
    replicas: Vec<Replica>,
    roster: BTreeMap<String, NodeKind>,
    crashed: BTreeSet<u32>,
    partition: Option<Vec<Vec<u32>>>,
    now: u64,
    seq: u64,
    queue: BTreeMap<(u64, u64), Envelope>,
    net_rng: ChaCha20Rng,
    fault_rng: ChaCha20Rng,
    limiter: RateLimiter,
    store: ContentStore,
    trace: Trace,
    metrics: Metrics,
    txs: BTreeMap<Digest, TxRecord>,
    tx_order: Vec<Digest>,
    decided: BTreeMap<u64, Digest>,
    floods: Vec<Flood>,
    last_write: Option<Digest>,
    /// (tick, tx) at which a client re-sends a request that has not resolved.
    resend_at: BTreeSet<(u64, Digest)>,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self, SimError> {
        Self::resume(config, Vec::new(), None)
    }

    /// Starts every replica from `chain` (validated by replay) and the
    /// clock from its tip. `store` replaces the empty default store.
    pub fn resume(config: SimConfig, chain: Vec<Block>, store: Option<ContentStore>) -> Result<Self, SimError> {
        config.validate().map_err(SimError::Config)?;
        let keys = replica_keys(config.seed, config.replicas);
        let set = ReplicaSet::new(keys.iter().map(|k| k.public).collect())
            .map_err(|e| SimError::Config(e.to_string()))?;
        let replicas = keys
            .iter()
            .enumerate()
            .map(|(i, k)| {
                let behavior = config.byzantine.get(&(i as u32)).copied().unwrap_or_default();
                let rc = ReplicaConfig {
                    view_timeout: config.view_timeout,
                    behavior,
                    ..ReplicaConfig::default()
                };
                Replica::restore(i as u32, set.clone(), k.private.clone(), rc, chain.clone())
                    .map_err(|e| SimError::Config(format!("stored chain: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let now = chain.last().map_or(0, |b| b.header.timestamp);
        let mut roster = BTreeMap::new();
        for i in 0..config.replicas as u32 {
            roster.insert(replica_name(i), NodeKind::Replica(i));
        }
        for i in 0..config.storage_nodes {
            roster.insert(storage_name(i), NodeKind::Storage(i));
        }
        let store = store.unwrap_or_else(|| ContentStore::with_nodes((0..config.storage_nodes).map(storage_name)));
        Ok(Simulation {
            limiter: RateLimiter::new(config.rate_limit, config.window),
            net_rng: ChaCha20Rng::seed_from_u64(config.seed ^ 0x6e65_7477_6f72_6b21),
            fault_rng: ChaCha20Rng::seed_from_u64(config.seed ^ 0x6661_756c_7473_2121),
            config,
            set,
            keys,
            replicas,
            roster,
            crashed: BTreeSet::new(),
            partition: None,
            now,
            seq: 0,
            queue: BTreeMap::new(),
            store,
            trace: Trace::default(),
            metrics: Metrics::default(),
            txs: BTreeMap::new(),
            tx_order: Vec::new(),
            decided: BTreeMap::new(),
            floods: Vec::new(),
            last_write: None,
            resend_at: BTreeSet::new(),
        })
    }

    // ---- accessors ----

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn replica_set(&self) -> &ReplicaSet {
        &self.set
    }

    pub fn replicas(&self) -> &[Replica] {
        &self.replicas
    }

    pub fn replica(&self, id: u32) -> &Replica {
        &self.replicas[id as usize]
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn metrics(&self) -> &Metrics {
        &self.metrics
    }

    pub fn limiter(&self) -> &RateLimiter {
        &self.limiter
    }

    pub fn store(&self) -> &ContentStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ContentStore {
        &mut self.store
    }

    pub fn last_write(&self) -> Option<Digest> {
        self.last_write
    }

    pub fn is_crashed(&self, id: u32) -> bool {
        self.crashed.contains(&id)
    }

    pub fn is_honest(&self, id: u32) -> bool {
        self.config.is_honest(id)
    }

    pub fn honest_ids(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.replicas.len() as u32).filter(|&i| self.is_honest(i))
    }

    pub fn honest_live_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.honest_ids().filter(|i| !self.crashed.contains(i))
    }

    /// Highest view any honest replica has reached.
    pub fn max_honest_view(&self) -> u64 {
        self.honest_ids()
            .map(|i| self.replicas[i as usize].view())
            .max()
            .unwrap_or(0)
    }

    /// Lowest committed height among live honest replicas.
    pub fn min_honest_height(&self) -> u64 {
        self.honest_live_ids()
            .map(|i| self.replicas[i as usize].height())
            .min()
            .unwrap_or(0)
    }

    pub fn max_honest_height(&self) -> u64 {
        self.honest_ids()
            .map(|i| self.replicas[i as usize].height())
            .max()
            .unwrap_or(0)
    }

    /// The longest chain held by an honest replica.
    pub fn honest_chain(&self) -> &[Block] {
        self.honest_ids()
            .map(|i| self.replicas[i as usize].chain())
            .max_by_key(|c| c.len())
            .unwrap_or(&[])
    }

    /// The honest replica holding [`Self::honest_chain`].
    pub fn leading_replica(&self) -> Option<&Replica> {
        self.honest_ids()
            .map(|i| &self.replicas[i as usize])
            .max_by_key(|r| (r.height(), std::cmp::Reverse(r.id())))
    }

    pub fn tx(&self, hash: &Digest) -> Option<&TxRecord> {
        self.txs.get(hash)
    }

    /// Submitted transactions in submission order.
    pub fn txs(&self) -> impl Iterator<Item = &TxRecord> {
        self.tx_order.iter().map(|h| &self.txs[h])
    }

    pub fn in_roster(&self, name: &str) -> bool {
        self.roster.contains_key(name)
    }

    pub fn add_client(&mut self, name: &str) {
        self.roster.entry(name.to_string()).or_insert(NodeKind::Client);
    }

    // ---- network ----

    fn partitioned(&self, from: &str, to: &str) -> bool {
        let Some(groups) = &self.partition else {
            return false;
        };
        let (Some(NodeKind::Replica(a)), Some(NodeKind::Replica(b))) =
            (self.roster.get(from), self.roster.get(to))
        else {
            return false;
        };
        let group_of = |r: &u32| groups.iter().position(|g| g.contains(r));
        group_of(a) != group_of(b)
    }

    /// Schedules `msg` unless a node is outside the roster or the link drops it.
    pub fn send(&mut self, from: &str, to: &str, msg: NetMessage) -> SendOutcome {
        let digest = msg.digest();
        let kind = msg.kind_name();
        if !self.roster.contains_key(from) || !self.roster.contains_key(to) {
            self.metrics.roster_rejections += 1;
            self.trace.push(self.now, from, to, "reject.roster", digest);
            return SendOutcome::Rejected;
        }
        if self.partitioned(from, to) {
            self.metrics.dropped_partition += 1;
            self.trace.push(self.now, from, to, "drop.partition", digest);
            return SendOutcome::Dropped;
        }
        if self.config.drop_rate > 0.0 && self.net_rng.gen_bool(self.config.drop_rate) {
            self.metrics.dropped_link += 1;
            self.trace.push(self.now, from, to, format!("drop.{kind}"), digest);
            return SendOutcome::Dropped;
        }
        let mut delay = self.net_rng.gen_range(self.config.delay_min..=self.config.delay_max);
        if let Some(NodeKind::Replica(id)) = self.roster.get(from) {
            if let Some(Behavior::Delay(extra)) = self.config.byzantine.get(id) {
                delay += extra;
            }
        }
        let deliver_at = self.now + delay.max(1);
        self.metrics.sent += 1;
        self.trace.push(self.now, from, to, format!("send.{kind}"), digest);
        self.queue.insert(
            (deliver_at, self.seq),
            Envelope {
                from: from.to_string(),
                to: to.to_string(),
                msg,
            },
        );
        self.seq += 1;
        SendOutcome::Scheduled { deliver_at }
    }

    /// A client submits a transaction; it is broadcast to every replica.
    pub fn submit(&mut self, client: &str, tx: Transaction) -> SubmitOutcome {
        self.submit_inner(client, tx, false)
    }

    fn submit_inner(&mut self, client: &str, tx: Transaction, flood: bool) -> SubmitOutcome {
        let h = tx.hash();
        if !self.roster.contains_key(client) {
            self.metrics.roster_rejections += 1;
            self.trace.push(self.now, client, "*", "reject.roster", h);
            return SubmitOutcome::NotInRoster;
        }
        if !self.limiter.admit(client, self.now) {
            self.metrics.rate_limited += 1;
            self.trace.push(self.now, client, "*", "ratelimit.submit-tx", h);
            return SubmitOutcome::RateLimited;
        }
        if !self.txs.contains_key(&h) {
            self.txs.insert(
                h,
                TxRecord {
                    hash: h,
                    sender: client.to_string(),
                    tx: tx.clone(),
                    submitted_at: self.now,
                    view_at_submit: self.max_honest_view(),
                    status: TxStatus::Pending,
                    views_to_commit: None,
                    flood,
                    rejected_by: BTreeSet::new(),
                    resends: 0,
                },
            );
            self.tx_order.push(h);
            if !flood {
                self.resend_at.insert((self.now + self.resend_interval(0), h));
            }
        }
        for r in 0..self.replicas.len() as u32 {
            self.send(client, &replica_name(r), NetMessage::Tx(tx.clone()));
        }
        SubmitOutcome::Accepted(h)
    }

    // ---- time ----

    /// Advances one tick.
    pub fn step(&mut self) {
        self.now += 1;
        self.run_floods();
        self.run_resends();
        while let Some(entry) = self.queue.first_entry() {
            if entry.key().0 > self.now {
                break;
            }
            let env = entry.remove();
            self.deliver(env);
        }
        for id in 0..self.replicas.len() as u32 {
            if !self.crashed.contains(&id) {
                let step = self.replicas[id as usize].tick(self.now);
                self.handle_step(id, step);
            }
        }
    }

    /// Steps until `cond` holds or `max_ticks` more ticks have passed.
    pub fn run_until(&mut self, mut cond: impl FnMut(&Simulation) -> bool, max_ticks: u64) -> RunOutcome {
        let deadline = self.now + max_ticks;
        loop {
            if cond(self) {
                return RunOutcome::Reached(self.now);
            }
            if self.now >= deadline {
                return RunOutcome::Timeout(self.now);
            }
            self.step();
        }
    }

    pub fn run_for(&mut self, ticks: u64) {
        for _ in 0..ticks {
            self.step();
        }
    }

    fn deliver(&mut self, env: Envelope) {
        let kind = env.msg.kind_name();
        let digest = env.msg.digest();
        let Some(&NodeKind::Replica(id)) = self.roster.get(&env.to) else {
            self.metrics.delivered += 1;
            self.trace.push(self.now, &env.from, &env.to, format!("deliver.{kind}"), digest);
            return;
        };
        if self.crashed.contains(&id) {
            self.metrics.dropped_crashed += 1;
            self.trace.push(self.now, &env.from, &env.to, "drop.crashed", digest);
            return;
        }
        self.metrics.delivered += 1;
        self.trace.push(self.now, &env.from, &env.to, format!("deliver.{kind}"), digest);
        let step = match env.msg {
            NetMessage::Consensus(m) => self.replicas[id as usize].on_message(m, self.now),
            NetMessage::Tx(t) => self.replicas[id as usize].submit_tx(t, self.now),
        };
        self.handle_step(id, step);
    }

    fn route(&mut self, from: u32, out: Outgoing) {
        let name = replica_name(from);
        match out.to {
            Target::All => {
                for r in (0..self.replicas.len() as u32).filter(|&r| r != from) {
                    self.send(&name, &replica_name(r), NetMessage::Consensus(out.msg.clone()));
                }
            }
            Target::One(r) => {
                self.send(&name, &replica_name(r), NetMessage::Consensus(out.msg));
            }
        }
    }

    fn handle_step(&mut self, id: u32, step: Step) {
        let name = replica_name(id);
        for out in step.outgoing {
            self.route(id, out);
        }
        for (h, reason) in step.rejected_txs {
            self.note_rejection(id, h, reason);
        }
        let honest = self.is_honest(id);
        for m in &step.dropped {
            self.metrics.misbehavior += 1;
            if honest && m.is_block_rejection() {
                self.metrics.rejected_blocks += 1;
                self.trace.push(self.now, &name, "-", "reject.block", Digest::ZERO);
            }
        }
        for v in step.view_changes_started {
            self.metrics.view_changes_started += 1;
            self.trace.push(self.now, &name, "-", format!("view-change.{v}"), Digest::ZERO);
        }
        for v in step.views_installed {
            self.trace.push(self.now, &name, "-", format!("new-view.{v}"), Digest::ZERO);
        }
        for block in step.committed {
            self.trace.push(self.now, &name, "-", "commit.block", block.hash());
            if honest {
                self.on_honest_commit(&block);
            }
        }
    }

    fn note_rejection(&mut self, id: u32, h: Digest, reason: TxRejection) {
        if !self.is_honest(id) {
            return;
        }
        let live: BTreeSet<u32> = self.honest_live_ids().collect();
        let now = self.now;
        let Some(rec) = self.txs.get_mut(&h) else {
            return;
        };
        if rec.status != TxStatus::Pending {
            return;
        }
        rec.rejected_by.insert(id);
        if live.is_subset(&rec.rejected_by) {
            rec.status = TxStatus::Rejected(reason);
            let sender = rec.sender.clone();
            self.trace.push(now, &replica_name(id), &sender, "reject.tx", h);
        }
    }

    fn on_honest_commit(&mut self, block: &Block) {
        let h = block.height();
        let digest = block.hash();
        match self.decided.get(&h) {
            Some(d) if *d != digest => {
                self.metrics.safety_violations += 1;
                return;
            }
            Some(_) => return,
            None => {
                self.decided.insert(h, digest);
            }
        }
        let view = self.max_honest_view();
        for tx in &block.txs {
            if let Some(rec) = self.txs.get_mut(&tx.hash()) {
                rec.status = TxStatus::Committed {
                    height: h,
                    tick: self.now,
                };
                rec.views_to_commit = Some(view.saturating_sub(rec.view_at_submit));
            }
            if let Payload::Data(d) = &tx.payload {
                if let DataContent::Write(c) = &d.content {
                    let key = self.store.put(c);
                    self.trace.push(self.now, "ledger", "ds", "store.put", key);
                    self.last_write = Some(key);
                    if self.config.replication > 0 {
                        if let Ok(report) = self.store.replicate(&key, self.config.replication) {
                            for i in report.holders {
                                self.trace.push(self.now, "ds", &storage_name(i), "store.replicate", key);
                            }
                        }
                    }
                }
            }
        }
    }

    // ---- faults ----

    fn check_replica(&self, id: u32) -> Result<(), SimError> {
        if (id as usize) < self.replicas.len() {
            Ok(())
        } else {
            Err(SimError::UnknownTarget(replica_name(id)))
        }
    }

    pub fn inject_fault(&mut self, fault: Fault) -> Result<(), SimError> {
        let now = self.now;
        match fault {
            Fault::Crash(id) => {
                self.check_replica(id)?;
                self.crashed.insert(id);
                self.trace.push(now, &replica_name(id), "-", "fault.crash", Digest::ZERO);
            }
            Fault::Recover(id) => {
                self.check_replica(id)?;
                self.crashed.remove(&id);
                self.trace.push(now, &replica_name(id), "-", "fault.recover", Digest::ZERO);
            }
            Fault::Partition(groups) => {
                for &id in groups.iter().flatten() {
                    self.check_replica(id)?;
                }
                self.partition = Some(groups);
                self.trace.push(now, "-", "-", "fault.partition", Digest::ZERO);
            }
            Fault::Heal => {
                self.partition = None;
                self.trace.push(now, "-", "-", "fault.heal", Digest::ZERO);
            }
            Fault::TamperStore { key, holder } => {
                let key = key
                    .or(self.last_write)
                    .ok_or_else(|| SimError::UnknownTarget("store entry".into()))?;
                for h in self.holders_for(&key, holder) {
                    let index = self.fault_rng.gen_range(0..usize::MAX);
                    let mask = self.fault_rng.gen_range(1..=u8::MAX);
                    self.store.tamper(&key, h, index, mask)?;
                    self.trace.push(now, "-", &holder_name(h), "fault.tamper-store", key);
                }
            }
            Fault::LoseStore { key, holder } => {
                let key = key
                    .or(self.last_write)
                    .ok_or_else(|| SimError::UnknownTarget("store entry".into()))?;
                for h in self.holders_for(&key, holder) {
                    self.store.lose(&key, h)?;
                    self.trace.push(now, "-", &holder_name(h), "fault.lose-store", key);
                }
            }
            Fault::Flood {
                node,
                multiplier,
                duration,
            } => {
                if !self.roster.contains_key(&node) {
                    return Err(SimError::UnknownTarget(node));
                }
                let per_window = self.config.rate_limit as u64 * multiplier as u64;
                let per_tick = per_window.div_ceil(self.config.window).max(1) as u32;
                self.trace.push(now, &node, "*", "fault.flood", Digest::ZERO);
                self.floods.push(Flood {
                    node,
                    per_tick,
                    until: now + duration,
                    counter: 0,
                });
            }
            Fault::ServeAlteredBlock { from, height } => {
                self.check_replica(from)?;
                let r = &self.replicas[from as usize];
                let h = height.unwrap_or(r.height());
                if h == 0 || h > r.height() {
                    return Err(SimError::UnknownTarget(format!("block {h} at {}", replica_name(from))));
                }
                let original = r.chain()[h as usize].clone();
                let cert = r.commit_cert(h).cloned().unwrap_or(CommitCert { commits: vec![] });
                let altered = mutate_block(&original, &mut self.fault_rng);
                let view = r.view();
                let msg = ConsensusMessage::signed(
                    view,
                    h,
                    from,
                    MessageBody::BlockResponse { block: altered, cert },
                    &self.keys[from as usize].private,
                );
                self.trace.push(now, &replica_name(from), "*", "fault.serve-altered-block", original.hash());
                self.broadcast_from(from, msg);
            }
            Fault::FalseLedger { from, length } => self.false_ledger(&from, length)?,
            Fault::ForgeBlock { from } => {
                self.check_replica(from)?;
                let r = &self.replicas[from as usize];
                let forged = forged_transaction(&mut self.fault_rng);
                let ts = now.max(r.tip().header.timestamp);
                let block = Block::next(r.tip(), ts, from, vec![forged]);
                let msg = ConsensusMessage::signed(
                    r.view(),
                    r.next_height(),
                    from,
                    MessageBody::PrePrepare(block.clone()),
                    &self.keys[from as usize].private,
                );
                self.trace.push(now, &replica_name(from), "*", "fault.forge-block", block.hash());
                self.broadcast_from(from, msg);
            }
            Fault::Outsiders { count } => self.outsiders(count),
        }
        Ok(())
    }

    fn holders_for(&self, key: &Digest, holder: Option<Holder>) -> Vec<Holder> {
        match holder {
            Some(h) => vec![h],
            None => std::iter::once(Holder::Local)
                .chain(self.store.holders(key).iter().map(|&i| Holder::Node(i)))
                .collect(),
        }
    }

    fn broadcast_from(&mut self, from: u32, msg: ConsensusMessage) {
        let name = replica_name(from);
        for r in (0..self.replicas.len() as u32).filter(|&r| r != from) {
            self.send(&name, &replica_name(r), NetMessage::Consensus(msg.clone()));
        }
    }

    /// Fabricated blocks from genesis past the honest height, each with a
    /// commit certificate signed by keys outside the replica set.
    fn false_ledger(&mut self, from: &str, length: u64) -> Result<(), SimError> {
        let signer = match self.roster.get(from) {
            Some(NodeKind::Replica(id)) => Some(*id),
            Some(_) => None,
            None => {
                // not in the roster: the network refuses it outright
                let msg = NetMessage::Tx(forged_transaction(&mut self.fault_rng));
                for r in 0..self.replicas.len() as u32 {
                    self.send(from, &replica_name(r), msg.clone());
                }
                return Ok(());
            }
        };
        let fakes: Vec<SigningKeyPair> = (0..self.set.n()).map(|_| gen_sig_keypair(&mut self.fault_rng)).collect();
        let outsider_key = gen_sig_keypair(&mut self.fault_rng);
        let total = self.max_honest_height() + length.max(1);
        let mut tip = Block::genesis();
        let mut msgs = Vec::new();
        for h in 1..=total {
            let (_, tx) = crate::identity::join_patient(&format!("ghost{h}"), &mut self.fault_rng);
            let block = Block::next(&tip, self.now + h, 0, vec![tx]);
            let d = block.hash();
            let commits = (0..self.set.quorum() as u32)
                .map(|i| {
                    let key = match signer {
                        Some(id) if id == i => &self.keys[id as usize].private,
                        _ => &fakes[i as usize].private,
                    };
                    ConsensusMessage::signed(0, h, i, MessageBody::Commit(d), key)
                })
                .collect();
            let cert = CommitCert { commits };
            let (sender, key) = match signer {
                Some(id) => (id, &self.keys[id as usize].private),
                None => (0, &outsider_key.private),
            };
            msgs.push(ConsensusMessage::signed(
                0,
                h,
                sender,
                MessageBody::BlockResponse { block: block.clone(), cert },
                key,
            ));
            tip = block;
        }
        self.trace.push(self.now, from, "*", "fault.false-ledger", tip.hash());
        for msg in msgs {
            for r in 0..self.replicas.len() as u32 {
                if Some(r) != signer {
                    self.send(from, &replica_name(r), NetMessage::Consensus(msg.clone()));
                }
            }
        }
        Ok(())
    }

    /// Nodes outside the replica set try to submit transactions and to vote.
    /// Their submissions stop at the roster; their votes reach replicas over
    /// a compromised link and stop at signature checks.
    fn outsiders(&mut self, count: usize) {
        let n = self.replicas.len() as u32;
        for i in 0..count {
            let name = format!("x{i}");
            let key = gen_sig_keypair(&mut self.fault_rng);
            let tx = forged_transaction(&mut self.fault_rng);
            self.submit_inner(&name, tx.clone(), false);
            let target = self.replicas[0].next_height();
            let tip = self.replicas[0].tip().clone();
            let block = Block::next(&tip, self.now, i as u32 % n, vec![tx]);
            let d = block.hash();
            let view = self.max_honest_view();
            let forged = [
                ConsensusMessage::signed(view, target, self.set.primary(view), MessageBody::PrePrepare(block), &key.private),
                ConsensusMessage::signed(view, target, i as u32 % n, MessageBody::Prepare(d), &key.private),
                ConsensusMessage::signed(view, target, i as u32 % n, MessageBody::Commit(d), &key.private),
                ConsensusMessage::signed(view, target, n + i as u32, MessageBody::Commit(d), &key.private),
            ];
            self.trace.push(self.now, &name, "*", "fault.outsider", d);
            for msg in forged {
                for r in 0..n {
                    let to = replica_name(r);
                    let msg = NetMessage::Consensus(msg.clone());
                    let digest = msg.digest();
                    let kind = msg.kind_name();
                    let delay = self.net_rng.gen_range(self.config.delay_min..=self.config.delay_max);
                    self.trace.push(self.now, &name, &to, format!("send.{kind}"), digest);
                    self.metrics.sent += 1;
                    self.queue.insert(
                        (self.now + delay, self.seq),
                        Envelope {
                            from: name.clone(),
                            to,
                            msg,
                        },
                    );
                    self.seq += 1;
                }
            }
        }
    }

    fn run_floods(&mut self) {
        let now = self.now;
        let mut floods = std::mem::take(&mut self.floods);
        floods.retain(|f| now < f.until);
        for flood in &mut floods {
            for _ in 0..flood.per_tick {
                flood.counter += 1;
                let marker = hash_parts(&[flood.node.as_bytes(), &flood.counter.to_be_bytes()]);
                if !self.limiter.admit(&flood.node, now) {
                    self.metrics.rate_limited += 1;
                    self.trace.push(now, &flood.node, "*", "ratelimit.submit-tx", marker);
                    continue;
                }
                let keys = gen_sig_keypair(&mut self.fault_rng);
                let tx = Transaction::new_signed(
                    &keys,
                    1,
                    Payload::Register(RegisterPayload {
                        role: Role::Patient,
                        profile: String::new(),
                    }),
                );
                // admitted above; bypass a second count
                self.record_and_broadcast(&flood.node.clone(), tx, true);
            }
        }
        self.floods = floods;
    }

    fn resend_interval(&self, attempt: u32) -> u64 {
        (2 * self.config.view_timeout.max(1)) << attempt.min(4)
    }

    /// Clients re-send unresolved requests to every replica with doubling
    /// intervals. Re-sends bypass the rate limiter: the request was already
    /// admitted once.
    fn run_resends(&mut self) {
        while let Some(&(at, h)) = self.resend_at.first() {
            if at > self.now {
                break;
            }
            self.resend_at.pop_first();
            let Some(rec) = self.txs.get_mut(&h) else { continue };
            if rec.is_resolved() {
                continue;
            }
            rec.resends += 1;
            let (attempt, client, tx) = (rec.resends, rec.sender.clone(), rec.tx.clone());
            if !self.roster.contains_key(&client) {
                continue;
            }
            for r in 0..self.replicas.len() as u32 {
                self.send(&client, &replica_name(r), NetMessage::Tx(tx.clone()));
            }
            self.resend_at.insert((self.now + self.resend_interval(attempt), h));
        }
    }

    fn record_and_broadcast(&mut self, client: &str, tx: Transaction, flood: bool) {
        let h = tx.hash();
        self.txs.insert(
            h,
            TxRecord {
                hash: h,
                sender: client.to_string(),
                tx: tx.clone(),
                submitted_at: self.now,
                view_at_submit: self.max_honest_view(),
                status: TxStatus::Pending,
                views_to_commit: None,
                flood,
                rejected_by: BTreeSet::new(),
                resends: 0,
            },
        );
        self.tx_order.push(h);
        for r in 0..self.replicas.len() as u32 {
            self.send(client, &replica_name(r), NetMessage::Tx(tx.clone()));
        }
    }
}

fn holder_name(h: Holder) -> String {
    match h {
        Holder::Local => "ds".into(),
        Holder::Node(i) => storage_name(i),
    }
}

/// A registration whose signature was made with a different key.
pub fn forged_transaction<R: Rng + rand::CryptoRng>(rng: &mut R) -> Transaction {
    let claimed = gen_sig_keypair(rng);
    let attacker = gen_sig_keypair(rng);
    let mut tx = Transaction::new_signed(
        &attacker,
        1,
        Payload::Register(RegisterPayload {
            role: Role::Staff,
            profile: "forged".into(),
        }),
    );
    tx.sender = claimed.public;
    tx
}

/// One random modification of a block. The result always differs from the
/// input.
pub fn mutate_block<R: Rng>(block: &Block, rng: &mut R) -> Block {
    let mut b = block.clone();
    let choices = if b.txs.is_empty() { 3 } else { 7 };
    match rng.gen_range(0..choices) {
        0 => b.header.timestamp = b.header.timestamp.wrapping_add(rng.gen_range(1..1000)),
        1 => {
            let mut prev = *b.header.prev_hash.as_bytes();
            prev[rng.gen_range(0..32)] ^= rng.gen_range(1..=u8::MAX);
            b.header.prev_hash = Digest::from_bytes(prev);
        }
        2 => b.header.proposer = b.header.proposer.wrapping_add(rng.gen_range(1..100)),
        3 => {
            let i = rng.gen_range(0..b.txs.len());
            let mut sig = b.txs[i].signature.to_bytes();
            sig[rng.gen_range(0..sig.len())] ^= rng.gen_range(1..=u8::MAX);
            b.txs[i].signature = crate::crypto::Signature::from_bytes(&sig).expect("64 bytes");
        }
        4 => {
            let i = rng.gen_range(0..b.txs.len());
            b.txs[i].seq = b.txs[i].seq.wrapping_add(rng.gen_range(1..1000));
        }
        5 => {
            // drop a transaction and make the header consistent again
            let i = rng.gen_range(0..b.txs.len());
            b.txs.remove(i);
            b.header.tx_root = compute_tx_root(&b.txs);
        }
        _ => {
            let i = rng.gen_range(0..b.txs.len());
            mutate_payload(&mut b.txs[i].payload, rng);
        }
    }
    if b == *block {
        b.header.timestamp = b.header.timestamp.wrapping_add(1);
    }
    b
}

fn mutate_payload<R: Rng>(payload: &mut Payload, rng: &mut R) {
    match payload {
        Payload::Register(r) => r.profile.push('!'),
        Payload::Access(a) => {
            a.policy.allowed_types.insert(format!("injected-{}", rng.gen::<u16>()));
        }
        Payload::Data(d) => match &mut d.content {
            DataContent::Write(c) => {
                if c.body.is_empty() {
                    c.auth_tag[0] ^= 1;
                } else {
                    let i = rng.gen_range(0..c.body.len());
                    c.body[i] ^= rng.gen_range(1..=u8::MAX);
                }
            }
            DataContent::Read(digest) => {
                let mut bytes = *digest.as_bytes();
                bytes[0] ^= 1;
                *digest = Digest::from_bytes(bytes);
            }
        },
    }
}
