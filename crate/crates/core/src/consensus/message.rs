use std::collections::BTreeSet;
use std::fmt;

use crate::crypto::{hash, sign, verify, Digest, PrivateKey, Signature, SIGNATURE_LEN};
use crate::encoding::{Canonical, DecodeError, Decoder, Encoder};
use crate::ledger::Block;

use super::ReplicaSet;

pub const CONSENSUS_DOMAIN: &[u8] = b"medchain.pbft.v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MessageKind {
    PrePrepare,
    Prepare,
    Commit,
    ViewChange,
    NewView,
    BlockRequest,
    BlockResponse,
}

impl MessageKind {
    pub const ALL: [MessageKind; 7] = [
        MessageKind::PrePrepare,
        MessageKind::Prepare,
        MessageKind::Commit,
        MessageKind::ViewChange,
        MessageKind::NewView,
        MessageKind::BlockRequest,
        MessageKind::BlockResponse,
    ];

    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(tag as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            MessageKind::PrePrepare => "pre-prepare",
            MessageKind::Prepare => "prepare",
            MessageKind::Commit => "commit",
            MessageKind::ViewChange => "view-change",
            MessageKind::NewView => "new-view",
            MessageKind::BlockRequest => "block-request",
            MessageKind::BlockResponse => "block-response",
        }
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// 2f+1 Commit messages from one view for the same (height, digest).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitCert {
    pub commits: Vec<ConsensusMessage>,
}

impl CommitCert {
    pub fn digest(&self) -> Option<Digest> {
        self.commits.first().map(ConsensusMessage::block_digest)
    }

    pub fn verify(&self, set: &ReplicaSet, seq: u64, digest: &Digest) -> bool {
        let Some(first) = self.commits.first() else {
            return false;
        };
        let view = first.view;
        quorum_of(set, &self.commits, |m| {
            m.view == view && m.seq == seq && matches!(&m.body, MessageBody::Commit(d) if d == digest)
        })
    }
}

/// A block plus 2f+1 Prepares for it in one view.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreparedCert {
    pub view: u64,
    pub block: Block,
    pub prepares: Vec<ConsensusMessage>,
}

impl PreparedCert {
    pub fn verify(&self, set: &ReplicaSet) -> bool {
        let digest = self.block.hash();
        let seq = self.block.height();
        quorum_of(set, &self.prepares, |m| {
            m.view == self.view && m.seq == seq && matches!(&m.body, MessageBody::Prepare(d) if *d == digest)
        })
    }
}

fn quorum_of(set: &ReplicaSet, msgs: &[ConsensusMessage], pred: impl Fn(&ConsensusMessage) -> bool) -> bool {
    let mut senders = BTreeSet::new();
    for m in msgs {
        if !pred(m) || !m.verify(set) || !senders.insert(m.sender) {
            return false;
        }
    }
    senders.len() >= set.quorum()
}

/// `seq` of the enclosing message is the sender's next height.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewChangeInfo {
    /// Certificate for height `seq - 1`; absent only when `seq == 1`.
    pub committed: Option<CommitCert>,
    /// Highest-view prepared certificate at height `seq`.
    pub prepared: Option<PreparedCert>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewViewInfo {
    pub proofs: Vec<ConsensusMessage>,
    /// Re-proposal for the first open height, if any replica prepared one.
    pub block: Option<Block>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MessageBody {
    PrePrepare(Block),
    Prepare(Digest),
    Commit(Digest),
    ViewChange(ViewChangeInfo),
    NewView(NewViewInfo),
    BlockRequest,
    BlockResponse { block: Block, cert: CommitCert },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsensusMessage {
    pub view: u64,
    pub seq: u64,
    pub sender: u32,
    pub body: MessageBody,
    pub signature: Signature,
}

impl ConsensusMessage {
    pub fn signed(view: u64, seq: u64, sender: u32, body: MessageBody, key: &PrivateKey) -> Self {
        let mut msg = ConsensusMessage {
            view,
            seq,
            sender,
            body,
            signature: Signature::EMPTY,
        };
        msg.signature = sign(key, &msg.signing_bytes()).expect("replica key is valid");
        msg
    }

    pub fn kind(&self) -> MessageKind {
        match &self.body {
            MessageBody::PrePrepare(_) => MessageKind::PrePrepare,
            MessageBody::Prepare(_) => MessageKind::Prepare,
            MessageBody::Commit(_) => MessageKind::Commit,
            MessageBody::ViewChange(_) => MessageKind::ViewChange,
            MessageBody::NewView(_) => MessageKind::NewView,
            MessageBody::BlockRequest => MessageKind::BlockRequest,
            MessageBody::BlockResponse { .. } => MessageKind::BlockResponse,
        }
    }

    /// The block this message is about, or zero when it names none.
    pub fn block_digest(&self) -> Digest {
        match &self.body {
            MessageBody::PrePrepare(b) | MessageBody::BlockResponse { block: b, .. } => b.hash(),
            MessageBody::Prepare(d) | MessageBody::Commit(d) => *d,
            MessageBody::ViewChange(vc) => vc.prepared.as_ref().map_or(Digest::ZERO, |p| p.block.hash()),
            MessageBody::NewView(nv) => nv.block.as_ref().map_or(Digest::ZERO, Block::hash),
            MessageBody::BlockRequest => Digest::ZERO,
        }
    }

    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.raw(CONSENSUS_DOMAIN);
        self.encode_unsigned(&mut enc);
        enc.finish()
    }

    /// Sender is in the replica set and the signature verifies under its key.
    pub fn verify(&self, set: &ReplicaSet) -> bool {
        set.key(self.sender)
            .is_some_and(|pk| verify(pk, &self.signing_bytes(), &self.signature))
    }

    /// Hash of the full signed encoding.
    pub fn digest(&self) -> Digest {
        hash(&self.canonical_bytes())
    }

    fn encode_unsigned(&self, enc: &mut Encoder) {
        enc.u8(self.kind().tag())
            .u64(self.view)
            .u64(self.seq)
            .u32(self.sender);
        match &self.body {
            MessageBody::PrePrepare(b) => {
                enc.bytes(&b.canonical_bytes());
            }
            MessageBody::Prepare(d) | MessageBody::Commit(d) => {
                enc.raw(d.as_bytes());
            }
            MessageBody::ViewChange(vc) => {
                match &vc.committed {
                    Some(c) => encode_commit_cert(enc.u8(1), c),
                    None => {
                        enc.u8(0);
                    }
                }
                match &vc.prepared {
                    Some(p) => {
                        enc.u8(1).u64(p.view).bytes(&p.block.canonical_bytes());
                        encode_messages(enc, &p.prepares);
                    }
                    None => {
                        enc.u8(0);
                    }
                }
            }
            MessageBody::NewView(nv) => {
                encode_messages(enc, &nv.proofs);
                match &nv.block {
                    Some(b) => enc.u8(1).bytes(&b.canonical_bytes()),
                    None => enc.u8(0),
                };
            }
            MessageBody::BlockRequest => {}
            MessageBody::BlockResponse { block, cert } => {
                enc.bytes(&block.canonical_bytes());
                encode_commit_cert(enc, cert);
            }
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut d = Decoder::new(bytes);
        let msg = Self::decode_from(&mut d)?;
        d.finish()?;
        Ok(msg)
    }

    fn decode_from(d: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let tag = d.u8()?;
        let kind = MessageKind::from_tag(tag).ok_or(DecodeError::InvalidTag {
            what: "message kind",
            tag,
        })?;
        let view = d.u64()?;
        let seq = d.u64()?;
        let sender = d.u32()?;
        let body = match kind {
            MessageKind::PrePrepare => MessageBody::PrePrepare(Block::decode(d.bytes()?)?),
            MessageKind::Prepare => MessageBody::Prepare(Digest::from_bytes(d.fixed()?)),
            MessageKind::Commit => MessageBody::Commit(Digest::from_bytes(d.fixed()?)),
            MessageKind::ViewChange => {
                let committed = match d.u8()? {
                    0 => None,
                    1 => Some(decode_commit_cert(d)?),
                    t => return Err(DecodeError::InvalidTag { what: "option", tag: t }),
                };
                let prepared = match d.u8()? {
                    0 => None,
                    1 => {
                        let view = d.u64()?;
                        let block = Block::decode(d.bytes()?)?;
                        let prepares = decode_messages(d)?;
                        Some(PreparedCert { view, block, prepares })
                    }
                    t => return Err(DecodeError::InvalidTag { what: "option", tag: t }),
                };
                MessageBody::ViewChange(ViewChangeInfo { committed, prepared })
            }
            MessageKind::NewView => {
                let proofs = decode_messages(d)?;
                let block = match d.u8()? {
                    0 => None,
                    1 => Some(Block::decode(d.bytes()?)?),
                    t => return Err(DecodeError::InvalidTag { what: "option", tag: t }),
                };
                MessageBody::NewView(NewViewInfo { proofs, block })
            }
            MessageKind::BlockRequest => MessageBody::BlockRequest,
            MessageKind::BlockResponse => {
                let block = Block::decode(d.bytes()?)?;
                let cert = decode_commit_cert(d)?;
                MessageBody::BlockResponse { block, cert }
            }
        };
        let signature = Signature::from_bytes(&d.fixed::<SIGNATURE_LEN>()?)
            .map_err(|_| DecodeError::Invalid("signature"))?;
        Ok(ConsensusMessage {
            view,
            seq,
            sender,
            body,
            signature,
        })
    }
}

impl Canonical for ConsensusMessage {
    fn encode_to(&self, enc: &mut Encoder) {
        self.encode_unsigned(enc);
        enc.raw(&self.signature.to_bytes());
    }
}

fn encode_messages(enc: &mut Encoder, msgs: &[ConsensusMessage]) {
    enc.u32(msgs.len() as u32);
    for m in msgs {
        enc.bytes(&m.canonical_bytes());
    }
}

fn decode_messages(d: &mut Decoder<'_>) -> Result<Vec<ConsensusMessage>, DecodeError> {
    let n = d.u32()?;
    (0..n).map(|_| ConsensusMessage::decode(d.bytes()?)).collect()
}

fn encode_commit_cert(enc: &mut Encoder, cert: &CommitCert) {
    encode_messages(enc, &cert.commits);
}

fn decode_commit_cert(d: &mut Decoder<'_>) -> Result<CommitCert, DecodeError> {
    Ok(CommitCert {
        commits: decode_messages(d)?,
    })
}

/// Outcome of checking a NewView's proofs: the first open height and the
/// block that must be re-proposed there.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewViewPlan {
    pub open_height: u64,
    pub block: Option<Block>,
    /// A replica whose proof claims `open_height`; it can serve missing blocks.
    pub claimant: u32,
}

pub fn valid_view_change(set: &ReplicaSet, msg: &ConsensusMessage) -> bool {
    let MessageBody::ViewChange(vc) = &msg.body else {
        return false;
    };
    if msg.seq == 0 || !msg.verify(set) {
        return false;
    }
    let committed_ok = match (&vc.committed, msg.seq) {
        (None, 1) => true,
        (Some(c), h) if h >= 2 => c.digest().is_some_and(|d| c.verify(set, h - 1, &d)),
        _ => false,
    };
    let prepared_ok = vc
        .prepared
        .as_ref()
        .is_none_or(|p| p.block.height() == msg.seq && p.view < msg.view && p.verify(set));
    committed_ok && prepared_ok
}

/// Deterministic selection over a quorum of ViewChanges for `view`: the
/// highest claimed next height, and the highest-view prepared block there.
pub fn plan_new_view(set: &ReplicaSet, view: u64, proofs: &[ConsensusMessage]) -> Option<NewViewPlan> {
    let mut senders = BTreeSet::new();
    for m in proofs {
        if m.view != view || !senders.insert(m.sender) || !valid_view_change(set, m) {
            return None;
        }
    }
    if senders.len() < set.quorum() {
        return None;
    }
    let top = proofs.iter().max_by_key(|m| (m.seq, std::cmp::Reverse(m.sender)))?;
    let open_height = top.seq;
    let block = proofs
        .iter()
        .filter(|m| m.seq == open_height)
        .filter_map(|m| match &m.body {
            MessageBody::ViewChange(vc) => vc.prepared.as_ref(),
            _ => None,
        })
        .max_by(|a, b| a.view.cmp(&b.view).then_with(|| b.block.hash().cmp(&a.block.hash())))
        .map(|p| p.block.clone());
    Some(NewViewPlan {
        open_height,
        block,
        claimant: top.sender,
    })
}
