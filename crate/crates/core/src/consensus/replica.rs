use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::mem;

use crate::crypto::{hash_parts, Digest, PrivateKey};
use crate::ledger::{check_block, replay, Block, BlockError, LedgerState, ReplayError, Transaction, TxRejection};

use super::message::{
    plan_new_view, valid_view_change, CommitCert, ConsensusMessage, MessageBody, MessageKind,
    NewViewInfo, PreparedCert, ViewChangeInfo,
};
use super::{Behavior, ReplicaConfig, ReplicaSet};

const MAX_PARKED: usize = 512;
const MAX_BACKOFF_SHIFT: u32 = 6;
const VERIFIED_CACHE_CAP: usize = 1 << 16;
const MAX_SYNC_ATTEMPTS: u32 = 8;
const OWN_VC_KEPT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// Every other replica.
    All,
    One(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outgoing {
    pub to: Target,
    pub msg: ConsensusMessage,
}

/// Why an incoming message was dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Misbehavior {
    UnknownSender(u32),
    BadSignature { from: u32, kind: MessageKind },
    NotPrimary { from: u32, kind: MessageKind },
    StaleView { from: u32, kind: MessageKind },
    ConflictingPrePrepare { from: u32, view: u64, seq: u64 },
    InvalidBlock { from: u32, reason: BlockError },
    InvalidCertificate { from: u32 },
    AlteredBlock { from: u32, height: u64 },
    InvalidViewChange { from: u32 },
    InvalidNewView { from: u32 },
}

impl Misbehavior {
    /// A block was offered and refused.
    pub fn is_block_rejection(&self) -> bool {
        matches!(
            self,
            Misbehavior::InvalidBlock { .. }
                | Misbehavior::AlteredBlock { .. }
                | Misbehavior::InvalidCertificate { .. }
        )
    }
}

/// Everything one call into a replica produced.
#[derive(Debug, Default)]
pub struct Step {
    pub outgoing: Vec<Outgoing>,
    pub committed: Vec<Block>,
    pub rejected_txs: Vec<(Digest, TxRejection)>,
    pub dropped: Vec<Misbehavior>,
    /// Views installed during this step.
    pub views_installed: Vec<u64>,
    /// Views this replica started changing to.
    pub view_changes_started: Vec<u64>,
}

type VoteKey = (u64, u64, Digest); // (seq, view, digest)

pub struct Replica {
    id: u32,
    set: ReplicaSet,
    key: PrivateKey,
    config: ReplicaConfig,
    now: u64,

    view: u64,
    in_view_change: bool,
    vc_deadline: u64,
    vc_attempts: u32,
    last_progress: u64,
    work_since: Option<u64>,

    chain: Vec<Block>,
    certs: Vec<Option<CommitCert>>,
    state: LedgerState,

    pool: Vec<(Digest, Transaction)>,
    pool_hashes: HashSet<Digest>,

    blocks: HashMap<Digest, Block>,
    accepted: BTreeMap<(u64, u64), Digest>,
    prepares: BTreeMap<VoteKey, BTreeMap<u32, ConsensusMessage>>,
    commits: BTreeMap<VoteKey, BTreeMap<u32, ConsensusMessage>>,
    voted_prepare: BTreeSet<(u64, u64)>,
    voted_commit: BTreeSet<(u64, u64)>,
    prepared: Option<PreparedCert>,
    parked: Vec<ConsensusMessage>,

    view_changes: BTreeMap<u64, BTreeMap<u32, ConsensusMessage>>,
    vc_views: BTreeMap<u32, u64>,
    /// Our own recent view-change messages, re-sent to peers still in those views.
    own_vcs: BTreeMap<u64, ConsensusMessage>,
    vc_replied: BTreeMap<u32, u64>,
    last_new_view: Option<ConsensusMessage>,

    sync_target: u64,
    sync_attempts: u32,
    last_sync_request: Option<u64>,

    verified: HashSet<Digest>,
    variants: HashMap<Digest, [Digest; 3]>,
    misbehavior: u64,
}

impl Replica {
    pub fn new(id: u32, set: ReplicaSet, key: PrivateKey, config: ReplicaConfig) -> Self {
        assert!((id as usize) < set.n(), "replica id outside the set");
        Replica {
            id,
            set,
            key,
            config,
            now: 0,
            view: 0,
            in_view_change: false,
            vc_deadline: 0,
            vc_attempts: 0,
            last_progress: 0,
            work_since: None,
            chain: vec![Block::genesis()],
            certs: vec![None],
            state: LedgerState::genesis(),
            pool: Vec::new(),
            pool_hashes: HashSet::new(),
            blocks: HashMap::new(),
            accepted: BTreeMap::new(),
            prepares: BTreeMap::new(),
            commits: BTreeMap::new(),
            voted_prepare: BTreeSet::new(),
            voted_commit: BTreeSet::new(),
            prepared: None,
            parked: Vec::new(),
            view_changes: BTreeMap::new(),
            vc_views: BTreeMap::new(),
            own_vcs: BTreeMap::new(),
            vc_replied: BTreeMap::new(),
            last_new_view: None,
            sync_target: 0,
            sync_attempts: 0,
            last_sync_request: None,
            verified: HashSet::new(),
            variants: HashMap::new(),
            misbehavior: 0,
        }
    }

    /// Resumes from a previously committed chain. Commit certificates are
    /// not persisted, so restored heights cannot be served to peers.
    pub fn restore(
        id: u32,
        set: ReplicaSet,
        key: PrivateKey,
        config: ReplicaConfig,
        chain: Vec<Block>,
    ) -> Result<Self, ReplayError> {
        let state = replay(&chain)?;
        let mut r = Replica::new(id, set, key, config);
        if chain.is_empty() {
            return Ok(r);
        }
        r.now = chain.last().map_or(0, |b| b.header.timestamp);
        r.last_progress = r.now;
        r.certs = vec![None; chain.len()];
        r.chain = chain;
        r.state = state;
        Ok(r)
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn view(&self) -> u64 {
        self.view
    }

    pub fn in_view_change(&self) -> bool {
        self.in_view_change
    }

    pub fn is_primary(&self) -> bool {
        self.set.primary(self.view) == self.id
    }

    pub fn replica_set(&self) -> &ReplicaSet {
        &self.set
    }

    pub fn config(&self) -> &ReplicaConfig {
        &self.config
    }

    pub fn behavior(&self) -> Behavior {
        self.config.behavior
    }

    /// Height of the last committed block.
    pub fn height(&self) -> u64 {
        self.chain.len() as u64 - 1
    }

    pub fn next_height(&self) -> u64 {
        self.chain.len() as u64
    }

    pub fn tip(&self) -> &Block {
        self.chain.last().expect("chain starts at genesis")
    }

    pub fn chain(&self) -> &[Block] {
        &self.chain
    }

    pub fn state(&self) -> &LedgerState {
        &self.state
    }

    pub fn commit_cert(&self, height: u64) -> Option<&CommitCert> {
        self.certs.get(height as usize).and_then(Option::as_ref)
    }

    pub fn pool_len(&self) -> usize {
        self.pool.len()
    }

    pub fn pool_contains(&self, tx_hash: &Digest) -> bool {
        self.pool_hashes.contains(tx_hash)
    }

    /// Dropped incoming messages so far.
    pub fn misbehavior_count(&self) -> u64 {
        self.misbehavior
    }

    fn pending_work(&self) -> bool {
        !self.pool.is_empty() || self.accepted.contains_key(&(self.next_height(), self.view))
    }

    fn current_timeout(&self) -> u64 {
        self.config.view_timeout.max(1) << self.vc_attempts.min(MAX_BACKOFF_SHIFT)
    }

    // ---- entry points ----

    /// A client transaction arrives. Admitted if its signature verifies and
    /// it applies to the current committed state.
    pub fn submit_tx(&mut self, tx: Transaction, now: u64) -> Step {
        self.now = now;
        let mut step = Step::default();
        let h = tx.hash();
        if self.pool_hashes.contains(&h) {
            return step;
        }
        if !tx.verify_signature() {
            step.rejected_txs.push((h, TxRejection::BadSignature));
            return step;
        }
        if let Err(reason) = self.state.evaluate(&tx) {
            step.rejected_txs.push((h, reason));
            return step;
        }
        self.pool_hashes.insert(h);
        self.pool.push((h, tx));
        self.work_since.get_or_insert(now);
        step
    }

    pub fn on_message(&mut self, msg: ConsensusMessage, now: u64) -> Step {
        self.now = now;
        let mut step = Step::default();
        if msg.sender == self.id {
            return step;
        }
        if self.set.key(msg.sender).is_none() {
            self.drop_msg(&mut step, Misbehavior::UnknownSender(msg.sender));
            return step;
        }
        if !self.verify_cached(&msg) {
            let m = Misbehavior::BadSignature {
                from: msg.sender,
                kind: msg.kind(),
            };
            self.drop_msg(&mut step, m);
            return step;
        }
        self.dispatch(msg, true, &mut step);
        self.advance(&mut step);
        step
    }

    /// Advances logical time: view timers, sync retries, proposals.
    pub fn tick(&mut self, now: u64) -> Step {
        self.now = now;
        let mut step = Step::default();
        if self.in_view_change {
            if self.pending_work() && now >= self.vc_deadline {
                // Move on only once a quorum has joined this view; otherwise
                // the message may have been lost, so say it again.
                let joined = self.view_changes.get(&self.view).map_or(0, BTreeMap::len);
                if joined >= self.set.quorum() {
                    self.start_view_change(self.view + 1, &mut step);
                } else {
                    self.vc_deadline = now + self.current_timeout();
                    self.broadcast_view_change(&mut step);
                }
            }
        } else if let Some(since) = self.work_since {
            if now >= since.max(self.last_progress) + self.current_timeout() {
                self.start_view_change(self.view + 1, &mut step);
            }
        }
        if self.sync_target >= self.next_height() {
            if self.sync_attempts >= MAX_SYNC_ATTEMPTS {
                // unanswered claims of a longer chain are forgotten
                self.sync_target = 0;
                self.sync_attempts = 0;
            } else if self.request_sync(Target::All, &mut step) {
                self.sync_attempts += 1;
            }
        }
        self.maybe_propose(&mut step);
        self.advance(&mut step);
        step
    }

    /// Primary only: proposes a block from the pool. No-op otherwise.
    pub fn propose(&mut self, now: u64) -> Step {
        self.now = now;
        let mut step = Step::default();
        self.maybe_propose(&mut step);
        self.advance(&mut step);
        step
    }

    /// Starts a view change if work is pending; no-op with nothing pending.
    pub fn on_timeout(&mut self, now: u64) -> Step {
        self.now = now;
        let mut step = Step::default();
        if self.pending_work() {
            self.start_view_change(self.view + 1, &mut step);
        }
        self.advance(&mut step);
        step
    }

    // ---- plumbing ----

    fn drop_msg(&mut self, step: &mut Step, m: Misbehavior) {
        self.misbehavior += 1;
        step.dropped.push(m);
    }

    fn verify_cached(&mut self, msg: &ConsensusMessage) -> bool {
        let d = msg.digest();
        if self.verified.contains(&d) {
            return true;
        }
        if !msg.verify(&self.set) {
            return false;
        }
        if self.verified.len() >= VERIFIED_CACHE_CAP {
            self.verified.clear();
        }
        self.verified.insert(d);
        true
    }

    fn sign(&self, view: u64, seq: u64, body: MessageBody) -> ConsensusMessage {
        ConsensusMessage::signed(view, seq, self.id, body, &self.key)
    }

    fn send(&mut self, step: &mut Step, to: Target, view: u64, seq: u64, body: MessageBody) {
        match self.config.behavior {
            Behavior::Mute => {}
            Behavior::Equivocate
                if to == Target::All
                    && matches!(
                        body,
                        MessageBody::PrePrepare(_) | MessageBody::Prepare(_) | MessageBody::Commit(_)
                    ) =>
            {
                let me = self.id;
                for r in (0..self.set.n() as u32).filter(|&r| r != me) {
                    let variant = self.equivocal(&body, view, r);
                    let msg = self.sign(view, seq, variant);
                    step.outgoing.push(Outgoing {
                        to: Target::One(r),
                        msg,
                    });
                }
            }
            _ => {
                let msg = self.sign(view, seq, body);
                step.outgoing.push(Outgoing { to, msg });
            }
        }
    }

    /// Peers are split three ways; group 0 sees the real message.
    fn equivocal(&mut self, body: &MessageBody, view: u64, recipient: u32) -> MessageBody {
        let group = ((recipient as u64 + view) % 3) as usize;
        if group == 0 {
            return body.clone();
        }
        match body {
            MessageBody::PrePrepare(b) => {
                let variant = |k: u64| {
                    Block::new(
                        b.height(),
                        b.header.prev_hash,
                        b.header.timestamp + k,
                        b.header.proposer,
                        b.txs.clone(),
                    )
                };
                let real = b.hash();
                self.variants
                    .entry(real)
                    .or_insert_with(|| [real, variant(1).hash(), variant(2).hash()]);
                MessageBody::PrePrepare(variant(group as u64))
            }
            MessageBody::Prepare(d) => MessageBody::Prepare(self.variant_digest(d, group)),
            MessageBody::Commit(d) => MessageBody::Commit(self.variant_digest(d, group)),
            other => other.clone(),
        }
    }

    fn variant_digest(&self, d: &Digest, group: usize) -> Digest {
        match self.variants.get(d) {
            Some(v) => v[group],
            None => hash_parts(&[d.as_bytes(), &[group as u8]]),
        }
    }

    fn park(&mut self, msg: ConsensusMessage) {
        if self.parked.len() >= MAX_PARKED {
            self.parked.remove(0);
        }
        self.parked.push(msg);
    }

    fn unpark(&mut self, step: &mut Step) {
        for msg in mem::take(&mut self.parked) {
            self.dispatch(msg, false, step);
        }
    }

    fn dispatch(&mut self, msg: ConsensusMessage, fresh: bool, step: &mut Step) {
        match msg.kind() {
            MessageKind::PrePrepare => self.on_preprepare(msg, fresh, step),
            MessageKind::Prepare | MessageKind::Commit => self.on_vote(msg, step),
            MessageKind::ViewChange => self.on_view_change(msg, step),
            MessageKind::NewView => self.on_new_view(msg, fresh, step),
            MessageKind::BlockRequest => self.on_block_request(msg, step),
            MessageKind::BlockResponse => self.on_block_response(msg, step),
        }
    }

    // ---- normal case ----

    fn maybe_propose(&mut self, step: &mut Step) {
        if self.in_view_change || !self.is_primary() || self.config.behavior == Behavior::Mute {
            return;
        }
        let seq = self.next_height();
        if self.accepted.contains_key(&(seq, self.view)) || self.pool.is_empty() {
            return;
        }
        let mut scratch = self.state.clone();
        let txs: Vec<Transaction> = self
            .pool
            .iter()
            .filter(|(_, tx)| scratch.apply(tx).is_ok())
            .take(self.config.max_block_txs)
            .map(|(_, tx)| tx.clone())
            .collect();
        if txs.is_empty() {
            return;
        }
        let timestamp = self.now.max(self.tip().header.timestamp);
        let block = Block::next(self.tip(), timestamp, self.id, txs);
        self.send(step, Target::All, self.view, seq, MessageBody::PrePrepare(block.clone()));
        self.accept_preprepare(self.view, self.id, block, step);
    }

    fn on_preprepare(&mut self, msg: ConsensusMessage, fresh: bool, step: &mut Step) {
        let kind = msg.kind();
        if msg.sender != self.set.primary(msg.view) {
            self.drop_msg(step, Misbehavior::NotPrimary { from: msg.sender, kind });
            return;
        }
        if msg.view < self.view {
            if fresh {
                self.drop_msg(step, Misbehavior::StaleView { from: msg.sender, kind });
            }
            return;
        }
        if msg.seq > self.next_height() {
            self.note_height(msg.seq - 1, msg.sender, step);
        }
        if msg.view > self.view || self.in_view_change || msg.seq > self.next_height() {
            self.park(msg);
            return;
        }
        if msg.seq < self.next_height() {
            return;
        }
        let MessageBody::PrePrepare(block) = msg.body else {
            unreachable!()
        };
        self.accept_preprepare(msg.view, msg.sender, block, step);
    }

    fn accept_preprepare(&mut self, view: u64, from: u32, block: Block, step: &mut Step) -> bool {
        let seq = self.next_height();
        let digest = block.hash();
        if let Some(prev) = self.accepted.get(&(seq, view)) {
            if *prev != digest {
                self.drop_msg(step, Misbehavior::ConflictingPrePrepare { from, view, seq });
                return false;
            }
            return true;
        }
        if let Err(reason) = check_block(self.tip(), &block, &self.state) {
            self.drop_msg(step, Misbehavior::InvalidBlock { from, reason });
            return false;
        }
        self.accepted.insert((seq, view), digest);
        self.blocks.insert(digest, block);
        self.work_since.get_or_insert(self.now);
        if self.voted_prepare.insert((seq, view)) {
            let own = self.sign(view, seq, MessageBody::Prepare(digest));
            self.prepares.entry((seq, view, digest)).or_default().insert(self.id, own);
            self.send(step, Target::All, view, seq, MessageBody::Prepare(digest));
        }
        true
    }

    fn on_vote(&mut self, msg: ConsensusMessage, step: &mut Step) {
        let (digest, is_commit) = match &msg.body {
            MessageBody::Prepare(d) => (*d, false),
            MessageBody::Commit(d) => (*d, true),
            _ => unreachable!(),
        };
        if msg.seq < self.next_height() || (!is_commit && msg.view < self.view) {
            return;
        }
        if msg.seq > self.next_height() {
            self.note_height(msg.seq - 1, msg.sender, step);
        }
        let log = if is_commit {
            &mut self.commits
        } else {
            &mut self.prepares
        };
        log.entry((msg.seq, msg.view, digest))
            .or_default()
            .insert(msg.sender, msg);
    }

    /// Sends Commit once prepared, and commits while a quorum of Commits
    /// names a known block at the next height.
    fn advance(&mut self, step: &mut Step) {
        loop {
            self.vote_commit(step);
            let Some((block, cert)) = self.ready_commit() else {
                break;
            };
            if !self.commit(block, cert, step) {
                break;
            }
        }
    }

    fn vote_commit(&mut self, step: &mut Step) {
        if self.in_view_change {
            return;
        }
        let (seq, view) = (self.next_height(), self.view);
        let Some(&digest) = self.accepted.get(&(seq, view)) else {
            return;
        };
        if self.voted_commit.contains(&(seq, view)) {
            return;
        }
        let Some(votes) = self.prepares.get(&(seq, view, digest)) else {
            return;
        };
        if votes.len() < self.set.quorum() {
            return;
        }
        let prepares: Vec<ConsensusMessage> = votes.values().take(self.set.quorum()).cloned().collect();
        self.voted_commit.insert((seq, view));
        let higher = self.prepared.as_ref().is_none_or(|p| p.view < view);
        if higher {
            self.prepared = Some(PreparedCert {
                view,
                block: self.blocks[&digest].clone(),
                prepares,
            });
        }
        let own = self.sign(view, seq, MessageBody::Commit(digest));
        self.commits.entry((seq, view, digest)).or_default().insert(self.id, own);
        self.send(step, Target::All, view, seq, MessageBody::Commit(digest));
    }

    fn ready_commit(&self) -> Option<(Block, CommitCert)> {
        let seq = self.next_height();
        let lo = (seq, 0, Digest::ZERO);
        let hi = (seq, u64::MAX, Digest::from_bytes([0xff; 32]));
        self.commits
            .range(lo..=hi)
            .find(|((_, _, d), votes)| votes.len() >= self.set.quorum() && self.blocks.contains_key(d))
            .map(|((_, _, d), votes)| {
                let cert = CommitCert {
                    commits: votes.values().take(self.set.quorum()).cloned().collect(),
                };
                (self.blocks[d].clone(), cert)
            })
    }

    fn commit(&mut self, block: Block, cert: CommitCert, step: &mut Step) -> bool {
        let digest = block.hash();
        let next = match check_block(self.tip(), &block, &self.state) {
            Ok(next) => next,
            Err(reason) => {
                self.blocks.remove(&digest);
                self.drop_msg(step, Misbehavior::InvalidBlock { from: self.id, reason });
                return false;
            }
        };
        self.state = next;
        self.chain.push(block.clone());
        self.certs.push(Some(cert));

        let included: HashSet<Digest> = block.txs.iter().map(Transaction::hash).collect();
        let mut kept = Vec::with_capacity(self.pool.len());
        for (h, tx) in mem::take(&mut self.pool) {
            if included.contains(&h) {
                self.pool_hashes.remove(&h);
                continue;
            }
            match self.state.evaluate(&tx) {
                Ok(_) => kept.push((h, tx)),
                Err(reason) => {
                    self.pool_hashes.remove(&h);
                    step.rejected_txs.push((h, reason));
                }
            }
        }
        self.pool = kept;

        self.last_progress = self.now;
        self.vc_attempts = 0;
        self.sync_attempts = 0;
        self.prepared = None;
        self.work_since = (!self.pool.is_empty()).then_some(self.now);

        let next_seq = self.next_height();
        self.accepted = self.accepted.split_off(&(next_seq, 0));
        self.prepares = self.prepares.split_off(&(next_seq, 0, Digest::ZERO));
        self.commits = self.commits.split_off(&(next_seq, 0, Digest::ZERO));
        self.voted_prepare = self.voted_prepare.split_off(&(next_seq, 0));
        self.voted_commit = self.voted_commit.split_off(&(next_seq, 0));
        self.blocks.retain(|_, b| b.height() >= next_seq);
        self.variants.retain(|d, _| self.blocks.contains_key(d));

        step.committed.push(block);
        self.unpark(step);
        self.try_new_view(step);
        true
    }

    // ---- catch-up ----

    /// Someone is known to have committed `height`.
    fn note_height(&mut self, height: u64, from: u32, step: &mut Step) {
        if height < self.next_height() {
            return;
        }
        self.sync_target = self.sync_target.max(height);
        self.request_sync(Target::One(from), step);
    }

    fn request_sync(&mut self, to: Target, step: &mut Step) -> bool {
        let interval = (self.config.view_timeout / 4).max(1);
        if self.last_sync_request.is_some_and(|t| self.now < t + interval) {
            return false;
        }
        self.last_sync_request = Some(self.now);
        self.send(step, to, self.view, self.next_height(), MessageBody::BlockRequest);
        true
    }

    fn serve_block(&mut self, to: u32, height: u64, step: &mut Step) {
        if height == 0 || height >= self.next_height() {
            return;
        }
        let Some(cert) = self.certs[height as usize].clone() else {
            return;
        };
        let block = self.chain[height as usize].clone();
        self.send(
            step,
            Target::One(to),
            self.view,
            height,
            MessageBody::BlockResponse { block, cert },
        );
    }

    fn on_block_request(&mut self, msg: ConsensusMessage, step: &mut Step) {
        self.serve_block(msg.sender, msg.seq, step);
    }

    fn on_block_response(&mut self, msg: ConsensusMessage, step: &mut Step) {
        let from = msg.sender;
        let MessageBody::BlockResponse { block, cert } = msg.body else {
            unreachable!()
        };
        let height = block.height();
        if height != msg.seq || height == 0 {
            self.drop_msg(step, Misbehavior::InvalidCertificate { from });
            return;
        }
        if height < self.next_height() {
            if self.chain[height as usize] != block {
                self.drop_msg(step, Misbehavior::AlteredBlock { from, height });
            }
            return;
        }
        if !cert.verify(&self.set, height, &block.hash()) {
            self.drop_msg(step, Misbehavior::InvalidCertificate { from });
            return;
        }
        if height > self.next_height() {
            self.note_height(height, from, step);
            return;
        }
        if let Err(reason) = check_block(self.tip(), &block, &self.state) {
            self.drop_msg(step, Misbehavior::InvalidBlock { from, reason });
            return;
        }
        self.commit(block, cert, step);
        if self.sync_target >= self.next_height() {
            self.last_sync_request = None;
            self.request_sync(Target::One(from), step);
        }
    }

    // ---- view change ----

    fn start_view_change(&mut self, view: u64, step: &mut Step) {
        debug_assert!(view > self.view || (view == self.view && !self.in_view_change));
        self.view = view;
        self.in_view_change = true;
        self.vc_attempts += 1;
        self.vc_deadline = self.now + self.current_timeout();
        self.vc_views.insert(self.id, view);
        step.view_changes_started.push(view);
        self.broadcast_view_change(step);
        self.try_new_view(step);
    }

    /// Signs and broadcasts a view change for the current view from the
    /// current committed and prepared state.
    fn broadcast_view_change(&mut self, step: &mut Step) {
        let (view, seq) = (self.view, self.next_height());
        let info = ViewChangeInfo {
            committed: self.certs.last().cloned().flatten(),
            prepared: self.prepared.clone(),
        };
        let own = self.sign(view, seq, MessageBody::ViewChange(info.clone()));
        self.view_changes.entry(view).or_default().insert(self.id, own.clone());
        self.own_vcs.insert(view, own);
        while self.own_vcs.len() > OWN_VC_KEPT {
            self.own_vcs.pop_first();
        }
        self.send(step, Target::All, view, seq, MessageBody::ViewChange(info));
    }

    /// A peer is changing to a view we have already passed through: hand it
    /// our view change for that view, at most once per timeout per peer.
    fn help_lagging(&mut self, to: u32, view: u64, step: &mut Step) {
        if self.config.behavior == Behavior::Mute {
            return;
        }
        let Some(own) = self.own_vcs.get(&view).cloned() else {
            return;
        };
        let interval = self.config.view_timeout.max(1);
        if self.vc_replied.get(&to).is_some_and(|&t| self.now < t + interval) {
            return;
        }
        self.vc_replied.insert(to, self.now);
        step.outgoing.push(Outgoing {
            to: Target::One(to),
            msg: own,
        });
    }

    fn install_view(&mut self, view: u64, step: &mut Step) {
        self.view = view;
        self.in_view_change = false;
        self.last_progress = self.now;
        self.view_changes = self.view_changes.split_off(&view);
        step.views_installed.push(view);
    }

    fn on_view_change(&mut self, msg: ConsensusMessage, step: &mut Step) {
        let from = msg.sender;
        if !valid_view_change(&self.set, &msg) {
            self.drop_msg(step, Misbehavior::InvalidViewChange { from });
            return;
        }
        if msg.seq < self.next_height() {
            self.serve_block(from, msg.seq, step);
        } else if msg.seq > self.next_height() {
            self.note_height(msg.seq - 1, from, step);
        }
        let v = msg.view;
        if v <= self.view && !self.in_view_change && self.is_primary() {
            if let Some(nv) = self.last_new_view.clone() {
                if self.config.behavior != Behavior::Mute {
                    step.outgoing.push(Outgoing {
                        to: Target::One(from),
                        msg: nv,
                    });
                }
            }
        }
        if v < self.view || (v == self.view && !self.in_view_change) {
            self.help_lagging(from, v, step);
        }
        if v < self.view {
            return;
        }
        self.view_changes.entry(v).or_default().insert(from, msg);
        let seen = self.vc_views.entry(from).or_insert(v);
        *seen = (*seen).max(v);

        let mut higher: Vec<u64> = self
            .vc_views
            .values()
            .copied()
            .filter(|&w| w > self.view)
            .collect();
        if higher.len() > self.set.f() {
            higher.sort_unstable_by(|a, b| b.cmp(a));
            let target = higher[self.set.f()];
            self.start_view_change(target, step);
        }
        self.try_new_view(step);
    }

    fn try_new_view(&mut self, step: &mut Step) {
        if !self.in_view_change || self.set.primary(self.view) != self.id {
            return;
        }
        let view = self.view;
        let Some(vcs) = self.view_changes.get(&view) else {
            return;
        };
        if vcs.len() < self.set.quorum() {
            return;
        }
        let proofs: Vec<ConsensusMessage> = vcs.values().cloned().collect();
        let Some(plan) = plan_new_view(&self.set, view, &proofs) else {
            return;
        };
        if plan.open_height > self.next_height() {
            self.note_height(plan.open_height - 1, plan.claimant, step);
            return;
        }
        let info = NewViewInfo {
            proofs,
            block: plan.block.clone(),
        };
        let nv = self.sign(view, plan.open_height, MessageBody::NewView(info.clone()));
        self.last_new_view = Some(nv);
        self.send(step, Target::All, view, plan.open_height, MessageBody::NewView(info));
        self.install_view(view, step);
        if let Some(block) = plan.block {
            if block.height() == self.next_height() {
                self.accept_preprepare(view, self.id, block, step);
            }
        }
        self.unpark(step);
        self.maybe_propose(step);
    }

    fn on_new_view(&mut self, msg: ConsensusMessage, fresh: bool, step: &mut Step) {
        let from = msg.sender;
        let v = msg.view;
        if from != self.set.primary(v) {
            self.drop_msg(step, Misbehavior::NotPrimary { from, kind: MessageKind::NewView });
            return;
        }
        if v < self.view || (v == self.view && !self.in_view_change) {
            return;
        }
        let MessageBody::NewView(info) = &msg.body else {
            unreachable!()
        };
        let plan = plan_new_view(&self.set, v, &info.proofs);
        let Some(plan) = plan.filter(|p| p.open_height == msg.seq && p.block == info.block) else {
            if fresh {
                self.drop_msg(step, Misbehavior::InvalidNewView { from });
            }
            return;
        };
        if plan.open_height > self.next_height() {
            self.note_height(plan.open_height - 1, plan.claimant, step);
            self.park(msg);
            return;
        }
        if let Some(block) = &plan.block {
            let h = block.height() as usize;
            if h < self.chain.len() && self.chain[h] != *block {
                self.drop_msg(step, Misbehavior::InvalidNewView { from });
                return;
            }
        }
        self.install_view(v, step);
        if let Some(block) = plan.block {
            if block.height() == self.next_height() {
                self.accept_preprepare(v, from, block, step);
            }
        }
        self.unpark(step);
    }
}
