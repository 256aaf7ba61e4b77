//! PBFT ordering of transactions into blocks.
//!
//! Each [`Replica`] is a deterministic state machine driven by
//! [`Replica::on_message`], [`Replica::submit_tx`] and [`Replica::tick`].
//! Every call returns a [`Step`] with the messages to send and any blocks
//! committed. Slots are decided one at a time and the slot number equals
//! the block height. There is no checkpointing; phase logs are pruned once
//! a height commits.

mod message;
mod replica;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::crypto::{CryptoError, PublicKey};

pub use message::{
    plan_new_view, valid_view_change, CommitCert, ConsensusMessage, MessageBody, MessageKind,
    NewViewInfo, NewViewPlan, PreparedCert, ViewChangeInfo, CONSENSUS_DOMAIN,
};
pub use replica::{Misbehavior, Outgoing, Replica, Step, Target};

pub const DEFAULT_VIEW_TIMEOUT: u64 = 50;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConsensusError {
    #[error("replica count {0} is not of the form 3f+1")]
    ReplicaCount(usize),
    #[error("replica config line {line}: {reason}")]
    Config { line: usize, reason: String },
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

/// The fixed validator set from the genesis configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplicaSet {
    keys: Vec<PublicKey>,
}

impl ReplicaSet {
    pub fn new(keys: Vec<PublicKey>) -> Result<Self, ConsensusError> {
        if keys.is_empty() || keys.len() % 3 != 1 {
            return Err(ConsensusError::ReplicaCount(keys.len()));
        }
        Ok(ReplicaSet { keys })
    }

    pub fn n(&self) -> usize {
        self.keys.len()
    }

    pub fn f(&self) -> usize {
        (self.keys.len() - 1) / 3
    }

    pub fn quorum(&self) -> usize {
        2 * self.f() + 1
    }

    pub fn primary(&self, view: u64) -> u32 {
        (view % self.keys.len() as u64) as u32
    }

    pub fn key(&self, id: u32) -> Option<&PublicKey> {
        self.keys.get(id as usize)
    }

    pub fn keys(&self) -> &[PublicKey] {
        &self.keys
    }

    pub fn index_of(&self, pk: &PublicKey) -> Option<u32> {
        self.keys.iter().position(|k| k == pk).map(|i| i as u32)
    }

    /// One `replica <id> <pubkey-hex>` line per member.
    pub fn to_config(&self) -> String {
        self.keys
            .iter()
            .enumerate()
            .map(|(i, k)| format!("replica {i} {}\n", k.to_hex()))
            .collect()
    }

    pub fn from_config(text: &str) -> Result<Self, ConsensusError> {
        let mut keys = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: &str| ConsensusError::Config {
                line: lineno + 1,
                reason: reason.to_string(),
            };
            let parts: Vec<&str> = line.split_whitespace().collect();
            let [tag, id, key] = parts[..] else {
                return Err(err("expected `replica <id> <pubkey>`"));
            };
            if tag != "replica" || id.parse::<usize>().ok() != Some(keys.len()) {
                return Err(err("replica ids must be listed in order from 0"));
            }
            keys.push(PublicKey::from_hex(key).map_err(|e| err(&e.to_string()))?);
        }
        Self::new(keys)
    }
}

/// Fault behaviors a replica can be configured with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Behavior {
    #[default]
    Honest,
    /// Sends different blocks and votes to different peers.
    Equivocate,
    /// Receives but never sends.
    Mute,
    /// Honest, but every outgoing message is held back by this many ticks.
    Delay(u64),
}

impl Behavior {
    pub fn is_honest(self) -> bool {
        matches!(self, Behavior::Honest)
    }
}

impl fmt::Display for Behavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Behavior::Honest => f.write_str("honest"),
            Behavior::Equivocate => f.write_str("equivocate"),
            Behavior::Mute => f.write_str("mute"),
            Behavior::Delay(t) => write!(f, "delay={t}"),
        }
    }
}

impl FromStr for Behavior {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "honest" => Ok(Behavior::Honest),
            "equivocate" => Ok(Behavior::Equivocate),
            "mute" => Ok(Behavior::Mute),
            "delay" => Ok(Behavior::Delay(DEFAULT_VIEW_TIMEOUT)),
            other => match other.strip_prefix("delay=") {
                Some(t) => t
                    .parse()
                    .map(Behavior::Delay)
                    .map_err(|_| format!("bad delay in `{other}`")),
                None => Err(format!("unknown behavior `{other}`")),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplicaConfig {
    /// Ticks of pending work without a commit before a view change.
    pub view_timeout: u64,
    pub max_block_txs: usize,
    pub behavior: Behavior,
}

impl Default for ReplicaConfig {
    fn default() -> Self {
        ReplicaConfig {
            view_timeout: DEFAULT_VIEW_TIMEOUT,
            max_block_txs: crate::ledger::MAX_BLOCK_TXS,
            behavior: Behavior::Honest,
        }
    }
}
