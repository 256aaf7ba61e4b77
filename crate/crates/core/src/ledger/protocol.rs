//! The transaction procedures run by every ledger node: access-policy
//! updates, permission checks and data reads/writes, plus block validation
//! and chain replay.

use thiserror::Error;

use crate::crypto::{Ciphertext, Digest, PublicKey};
use crate::store::{ContentStore, StoreError};

use super::block::{compute_tx_root, Block, MAX_BLOCK_TXS};
use super::state::{AuditEvent, LedgerState, TxEffect, TxRejection};
use super::tx::{DataContent, Payload, Transaction, TxKind};

/// Status `s`: 1 when the policy was appended, 0 otherwise (state unchanged).
pub fn apply_access_tx(state: &mut LedgerState, tx: &Transaction) -> u8 {
    if tx.kind() != TxKind::Access {
        return 0;
    }
    match state.apply(tx) {
        Ok(_) => 1,
        Err(_) => 0,
    }
}

pub fn policy_check(
    state: &LedgerState,
    requester: &PublicKey,
    data_type: &str,
    target_patient: &PublicKey,
) -> bool {
    state.policy_check(requester, data_type, target_patient)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataOutcome {
    Written(Digest),
    Read(Ciphertext),
    /// The empty result; carries the reason for diagnostics.
    Empty(TxRejection),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    /// The ledger points at `digest` but the store cannot produce verified bytes.
    #[error("integrity alarm for {digest}: {cause}")]
    IntegrityAlarm { digest: Digest, cause: StoreError },
}

/// Resolves an authorized read against the store.
pub fn fetch_record(store: &ContentStore, digest: &Digest) -> Result<Ciphertext, LedgerError> {
    store.get(digest).map_err(|cause| LedgerError::IntegrityAlarm {
        digest: *digest,
        cause,
    })
}

/// Permission gate first; a write indexes `H(C)` and stores `C`, a read
/// returns the stored ciphertext for an indexed digest.
pub fn apply_data_tx(
    state: &mut LedgerState,
    tx: &Transaction,
    store: &mut ContentStore,
) -> Result<DataOutcome, LedgerError> {
    let Payload::Data(data) = &tx.payload else {
        return Ok(DataOutcome::Empty(TxRejection::Malformed("not a data transaction")));
    };
    match state.apply(tx) {
        Err(reason) => Ok(DataOutcome::Empty(reason)),
        Ok(TxEffect::Written(digest)) => {
            let DataContent::Write(c) = &data.content else {
                unreachable!("write effect implies write content")
            };
            let key = store.put(c);
            debug_assert_eq!(key, digest);
            Ok(DataOutcome::Written(digest))
        }
        Ok(TxEffect::ReadAuthorized(digest)) => fetch_record(store, &digest).map(DataOutcome::Read),
        Ok(other) => unreachable!("data transaction produced {other:?}"),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BlockError {
    #[error("expected height {expected}, got {got}")]
    Height { expected: u64, got: u64 },
    #[error("prev_hash does not match the tip")]
    PrevHash,
    #[error("tx_root does not match the transactions")]
    TxRoot,
    #[error("{0} transactions exceed the block cap")]
    TooManyTxs(usize),
    #[error("timestamp goes backwards")]
    Timestamp,
    #[error("transaction {index} has an invalid signature")]
    Signature { index: usize },
    #[error("transaction {index} rejected: {reason}")]
    Rejected { index: usize, reason: TxRejection },
}

/// Full check of `candidate` as successor of `tip`; returns the post-state.
pub fn check_block(tip: &Block, candidate: &Block, state: &LedgerState) -> Result<LedgerState, BlockError> {
    let h = &candidate.header;
    if h.height != tip.height() + 1 {
        return Err(BlockError::Height {
            expected: tip.height() + 1,
            got: h.height,
        });
    }
    if h.prev_hash != tip.hash() {
        return Err(BlockError::PrevHash);
    }
    if candidate.txs.len() > MAX_BLOCK_TXS {
        return Err(BlockError::TooManyTxs(candidate.txs.len()));
    }
    if h.tx_root != compute_tx_root(&candidate.txs) {
        return Err(BlockError::TxRoot);
    }
    if h.timestamp < tip.header.timestamp {
        return Err(BlockError::Timestamp);
    }
    if let Some(index) = candidate.txs.iter().position(|tx| !tx.verify_signature()) {
        return Err(BlockError::Signature { index });
    }
    let mut next = state.clone();
    next.apply_block(candidate)
        .map_err(|(index, reason)| BlockError::Rejected { index, reason })?;
    Ok(next)
}

pub fn validate_block(tip: &Block, candidate: &Block, state: &LedgerState) -> bool {
    check_block(tip, candidate, state).is_ok()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("block 0 is not the genesis block")]
    Genesis,
    #[error("invalid block at height {height}: {reason}")]
    Invalid { height: u64, reason: BlockError },
}

impl ReplayError {
    pub fn height(&self) -> u64 {
        match self {
            ReplayError::Genesis => 0,
            ReplayError::Invalid { height, .. } => *height,
        }
    }
}

/// Rebuilds ledger state from a chain starting at genesis.
pub fn replay(chain: &[Block]) -> Result<LedgerState, ReplayError> {
    let mut state = LedgerState::genesis();
    let Some((first, rest)) = chain.split_first() else {
        return Ok(state);
    };
    if *first != Block::genesis() {
        return Err(ReplayError::Genesis);
    }
    let mut tip = first;
    for (i, block) in rest.iter().enumerate() {
        state = check_block(tip, block, &state).map_err(|reason| ReplayError::Invalid {
            height: i as u64 + 1,
            reason,
        })?;
        tip = block;
    }
    Ok(state)
}

pub fn audit_trail(state: &LedgerState, patient: &PublicKey) -> Vec<AuditEvent> {
    state.audit_trail(patient)
}
