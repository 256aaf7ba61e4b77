//! Permissioned ledger for patient-controlled health records.
//!
//! Records are encrypted client-side and kept in a content-addressed
//! off-chain store; the replicated ledger holds identities, access policies
//! and ciphertext digests. Replicas agree on blocks with PBFT, exercised over
//! a deterministic network simulator.

pub mod cli;
pub mod consensus;
pub mod crypto;
pub mod encoding;
pub mod identity;
pub mod ledger;
pub mod scenario;
pub mod sim;
pub mod store;
