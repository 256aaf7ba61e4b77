//! The replicated ledger: transactions, blocks, the state they fold into,
//! and the procedures that validate and apply them.

mod block;
mod chain;
mod protocol;
mod state;
mod tx;

pub use block::{compute_tx_root, Block, BlockHeader, MAX_BLOCK_TXS};
pub use chain::{decode_chain, encode_chain, read_chain_file, write_chain_file, ChainFileError};
pub use protocol::{
    apply_access_tx, apply_data_tx, audit_trail, check_block, fetch_record, policy_check, replay,
    validate_block, BlockError, DataOutcome, LedgerError, ReplayError,
};
pub use state::{AuditAction, AuditEvent, LedgerState, PolicyRecord, TxEffect, TxRejection};
pub use tx::{
    canonical_encode, AccessPayload, DataContent, DataPayload, Payload, Policy, ReadWrite,
    RegisterPayload, Transaction, TxKind,
};
