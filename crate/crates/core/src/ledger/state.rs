use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::crypto::{hash, Digest, PublicKey};
use crate::encoding::{Canonical, Encoder};
use crate::identity::{entry_for, KeyDirectory, Role};

use super::block::Block;
use super::tx::{AccessPayload, DataContent, Payload, Transaction};

/// Why a transaction cannot be applied at the current state.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TxRejection {
    #[error("signature does not verify")]
    BadSignature,
    #[error("sequence number {got} is not above {last}")]
    StaleSeq { last: u64, got: u64 },
    #[error("sender is not registered")]
    UnknownSender,
    #[error("sender key is already registered")]
    AlreadyRegistered,
    #[error("malformed payload: {0}")]
    Malformed(&'static str),
    #[error("only the patient may set their own access policy")]
    NotPolicyOwner,
    #[error("policy names an unregistered or wrong-role party")]
    InvalidParty,
    #[error("requester has no permission for this data type")]
    PolicyDenied,
    #[error("only the patient may write their records")]
    WriteByNonOwner,
    #[error("digest is not indexed for this patient and data type")]
    NotIndexed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TxEffect {
    Registered(Role),
    PolicySet { revocation: bool },
    Written(Digest),
    ReadAuthorized(Digest),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyRecord {
    pub height: u64,
    pub payload: AccessPayload,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuditAction {
    Grant { staff: PublicKey, types: BTreeSet<String> },
    Revoke { staff: PublicKey },
    Write { data_type: String, digest: Digest },
    Read { data_type: String, digest: Digest },
}

impl AuditAction {
    pub fn label(&self) -> &'static str {
        match self {
            AuditAction::Grant { .. } => "grant",
            AuditAction::Revoke { .. } => "revoke",
            AuditAction::Write { .. } => "write",
            AuditAction::Read { .. } => "read",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditEvent {
    pub height: u64,
    pub index: u32,
    pub actor: PublicKey,
    pub patient: PublicKey,
    pub action: AuditAction,
}

/// On-chain memory: key directory, append-only policy log, data-pointer
/// index and per-sender sequence counters. A deterministic fold over the
/// committed chain.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LedgerState {
    height: u64,
    cursor: u32,
    directory: KeyDirectory,
    policy_log: Vec<PolicyRecord>,
    /// `hash(pk)` of either party → positions in `policy_log`.
    policy_index: BTreeMap<Digest, Vec<usize>>,
    data_index: BTreeMap<(PublicKey, String), BTreeSet<Digest>>,
    seq_tracker: BTreeMap<PublicKey, u64>,
    events: Vec<AuditEvent>,
}

impl LedgerState {
    /// State after the genesis block.
    pub fn genesis() -> Self {
        Self::default()
    }

    /// Height of the last block folded in.
    pub fn height(&self) -> u64 {
        self.height
    }

    pub fn directory(&self) -> &KeyDirectory {
        &self.directory
    }

    pub fn policy_log(&self) -> &[PolicyRecord] {
        &self.policy_log
    }

    /// Policies naming `pk` as patient or staff, oldest first.
    pub fn policies_for(&self, pk: &PublicKey) -> impl Iterator<Item = &PolicyRecord> {
        self.policy_index
            .get(&pk.address())
            .into_iter()
            .flatten()
            .map(|&i| &self.policy_log[i])
    }

    pub fn last_seq(&self, sender: &PublicKey) -> u64 {
        self.seq_tracker.get(sender).copied().unwrap_or(0)
    }

    pub fn indexed_digests(&self, patient: &PublicKey, data_type: &str) -> Option<&BTreeSet<Digest>> {
        self.data_index.get(&(*patient, data_type.to_string()))
    }

    /// Every digest referenced on chain.
    pub fn all_digests(&self) -> impl Iterator<Item = &Digest> {
        self.data_index.values().flatten()
    }

    pub fn events(&self) -> &[AuditEvent] {
        &self.events
    }

    /// Most recent accepted policy from `patient` to `staff`.
    pub fn latest_policy(&self, patient: &PublicKey, staff: &PublicKey) -> Option<&AccessPayload> {
        let positions = self.policy_index.get(&staff.address())?;
        positions
            .iter()
            .rev()
            .map(|&i| &self.policy_log[i].payload)
            .find(|p| p.patient == *patient && p.staff == *staff)
    }

    /// The patient always may; anyone else needs `data_type` in the latest
    /// policy the patient issued to them.
    pub fn policy_check(&self, requester: &PublicKey, data_type: &str, patient: &PublicKey) -> bool {
        if requester == patient {
            return self.directory.role_of(patient) == Some(Role::Patient);
        }
        self.latest_policy(patient, requester)
            .is_some_and(|p| p.policy.allows(data_type))
    }

    /// What applying `tx` would do, without touching state. Signatures are
    /// the caller's concern.
    pub fn evaluate(&self, tx: &Transaction) -> Result<TxEffect, TxRejection> {
        let last = self.last_seq(&tx.sender);
        if tx.seq <= last {
            return Err(TxRejection::StaleSeq { last, got: tx.seq });
        }
        if let Payload::Register(reg) = &tx.payload {
            if self.directory.contains(&tx.sender) {
                return Err(TxRejection::AlreadyRegistered);
            }
            return Ok(TxEffect::Registered(reg.role));
        }
        if !self.directory.contains(&tx.sender) {
            return Err(TxRejection::UnknownSender);
        }
        match &tx.payload {
            Payload::Register(_) => unreachable!("handled above"),
            Payload::Access(a) => {
                if !a.is_consistent() {
                    return Err(TxRejection::Malformed("policy parties differ from payload"));
                }
                if tx.sender != a.patient {
                    return Err(TxRejection::NotPolicyOwner);
                }
                if self.directory.role_of(&a.patient) != Some(Role::Patient)
                    || self.directory.role_of(&a.staff) != Some(Role::Staff)
                {
                    return Err(TxRejection::InvalidParty);
                }
                Ok(TxEffect::PolicySet {
                    revocation: a.policy.is_revocation(),
                })
            }
            Payload::Data(d) => {
                if d.data_type.is_empty() {
                    return Err(TxRejection::Malformed("empty data type"));
                }
                if !self.policy_check(&tx.sender, &d.data_type, &d.patient) {
                    return Err(TxRejection::PolicyDenied);
                }
                match &d.content {
                    DataContent::Write(c) => {
                        if tx.sender != d.patient {
                            return Err(TxRejection::WriteByNonOwner);
                        }
                        Ok(TxEffect::Written(c.digest()))
                    }
                    DataContent::Read(digest) => {
                        let indexed = self
                            .indexed_digests(&d.patient, &d.data_type)
                            .is_some_and(|s| s.contains(digest));
                        if !indexed {
                            return Err(TxRejection::NotIndexed);
                        }
                        Ok(TxEffect::ReadAuthorized(*digest))
                    }
                }
            }
        }
    }

    /// Applies `tx` if `evaluate` accepts it; otherwise leaves state untouched.
    pub fn apply(&mut self, tx: &Transaction) -> Result<TxEffect, TxRejection> {
        let effect = self.evaluate(tx)?;
        let (height, index) = (self.height, self.cursor);
        self.cursor += 1;
        self.seq_tracker.insert(tx.sender, tx.seq);
        let event = |patient: PublicKey, action: AuditAction| AuditEvent {
            height,
            index,
            actor: tx.sender,
            patient,
            action,
        };
        match &tx.payload {
            Payload::Register(_) => {
                let entry = entry_for(tx).expect("register payload");
                self.directory
                    .register(entry)
                    .expect("evaluate checked uniqueness");
            }
            Payload::Access(a) => {
                let pos = self.policy_log.len();
                self.policy_log.push(PolicyRecord {
                    height,
                    payload: a.clone(),
                });
                self.policy_index.entry(a.patient.address()).or_default().push(pos);
                self.policy_index.entry(a.staff.address()).or_default().push(pos);
                let action = if a.policy.is_revocation() {
                    AuditAction::Revoke { staff: a.staff }
                } else {
                    AuditAction::Grant {
                        staff: a.staff,
                        types: a.policy.allowed_types.clone(),
                    }
                };
                self.events.push(event(a.patient, action));
            }
            Payload::Data(d) => {
                let digest = match &effect {
                    TxEffect::Written(dg) | TxEffect::ReadAuthorized(dg) => *dg,
                    _ => unreachable!("data effects carry a digest"),
                };
                let action = match &d.content {
                    DataContent::Write(_) => {
                        self.data_index
                            .entry((d.patient, d.data_type.clone()))
                            .or_default()
                            .insert(digest);
                        AuditAction::Write {
                            data_type: d.data_type.clone(),
                            digest,
                        }
                    }
                    DataContent::Read(_) => AuditAction::Read {
                        data_type: d.data_type.clone(),
                        digest,
                    },
                };
                self.events.push(event(d.patient, action));
            }
        }
        Ok(effect)
    }

    /// Folds a block in. All-or-nothing: on rejection `self` is unchanged.
    pub fn apply_block(&mut self, block: &Block) -> Result<Vec<TxEffect>, (usize, TxRejection)> {
        let mut next = self.clone();
        next.height = block.height();
        next.cursor = 0;
        let mut effects = Vec::with_capacity(block.txs.len());
        for (i, tx) in block.txs.iter().enumerate() {
            effects.push(next.apply(tx).map_err(|e| (i, e))?);
        }
        *self = next;
        Ok(effects)
    }

    /// Events touching `patient`, in chain order.
    pub fn audit_trail(&self, patient: &PublicKey) -> Vec<AuditEvent> {
        self.events
            .iter()
            .filter(|e| e.patient == *patient)
            .cloned()
            .collect()
    }

    /// Hash over the canonical state encoding, maps in sorted key order.
    pub fn digest(&self) -> Digest {
        hash(&self.canonical_bytes())
    }
}

fn encode_access(enc: &mut Encoder, a: &AccessPayload) {
    enc.raw(a.patient.as_bytes())
        .raw(a.staff.as_bytes())
        .raw(a.policy.grantor.as_bytes())
        .raw(a.policy.grantee.as_bytes())
        .u32(a.policy.allowed_types.len() as u32);
    for t in &a.policy.allowed_types {
        enc.str(t);
    }
}

impl Canonical for LedgerState {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.u64(self.height).u32(self.directory.len() as u32);
        for (addr, entry) in self.directory.iter() {
            enc.raw(addr.as_bytes())
                .u8(entry.role.tag())
                .raw(entry.public.as_bytes());
            match &entry.profile {
                Some(p) => enc.u8(1).str(p),
                None => enc.u8(0),
            };
        }
        enc.u32(self.policy_log.len() as u32);
        for rec in &self.policy_log {
            enc.u64(rec.height);
            encode_access(enc, &rec.payload);
        }
        enc.u32(self.data_index.len() as u32);
        for ((pk, data_type), digests) in &self.data_index {
            enc.raw(pk.as_bytes()).str(data_type).u32(digests.len() as u32);
            for d in digests {
                enc.raw(d.as_bytes());
            }
        }
        enc.u32(self.seq_tracker.len() as u32);
        for (pk, seq) in &self.seq_tracker {
            enc.raw(pk.as_bytes()).u64(*seq);
        }
        enc.u32(self.events.len() as u32);
        for e in &self.events {
            enc.u64(e.height)
                .u32(e.index)
                .raw(e.actor.as_bytes())
                .raw(e.patient.as_bytes());
            match &e.action {
                AuditAction::Grant { staff, types } => {
                    enc.u8(0).raw(staff.as_bytes()).u32(types.len() as u32);
                    for t in types {
                        enc.str(t);
                    }
                }
                AuditAction::Revoke { staff } => {
                    enc.u8(1).raw(staff.as_bytes());
                }
                AuditAction::Write { data_type, digest } => {
                    enc.u8(2).str(data_type).raw(digest.as_bytes());
                }
                AuditAction::Read { data_type, digest } => {
                    enc.u8(3).str(data_type).raw(digest.as_bytes());
                }
            }
        }
    }
}
