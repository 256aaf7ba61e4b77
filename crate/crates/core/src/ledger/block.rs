use crate::crypto::{hash, Digest, Hasher};
use crate::encoding::{Canonical, DecodeError, Decoder, Encoder};

use super::tx::{canonical_encode, Transaction};

/// Upper bound on transactions per block.
pub const MAX_BLOCK_TXS: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockHeader {
    pub height: u64,
    pub prev_hash: Digest,
    pub tx_root: Digest,
    /// Logical tick at which the block was proposed.
    pub timestamp: u64,
    pub proposer: u32,
}

impl Canonical for BlockHeader {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.u64(self.height)
            .raw(self.prev_hash.as_bytes())
            .raw(self.tx_root.as_bytes())
            .u64(self.timestamp)
            .u32(self.proposer);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub header: BlockHeader,
    pub txs: Vec<Transaction>,
}

/// Hash of the concatenated canonical transaction encodings.
pub fn compute_tx_root(txs: &[Transaction]) -> Digest {
    let mut h = Hasher::new();
    for tx in txs {
        h.update(&canonical_encode(tx));
    }
    h.finish()
}

impl Block {
    pub fn genesis() -> Block {
        Block::new(0, Digest::ZERO, 0, 0, Vec::new())
    }

    pub fn new(height: u64, prev_hash: Digest, timestamp: u64, proposer: u32, txs: Vec<Transaction>) -> Block {
        Block {
            header: BlockHeader {
                height,
                prev_hash,
                tx_root: compute_tx_root(&txs),
                timestamp,
                proposer,
            },
            txs,
        }
    }

    /// Successor of `tip` carrying `txs`.
    pub fn next(tip: &Block, timestamp: u64, proposer: u32, txs: Vec<Transaction>) -> Block {
        Block::new(tip.height() + 1, tip.hash(), timestamp, proposer, txs)
    }

    pub fn height(&self) -> u64 {
        self.header.height
    }

    /// Hash of the canonical header encoding.
    pub fn hash(&self) -> Digest {
        hash(&self.header.canonical_bytes())
    }

    pub fn decode(bytes: &[u8]) -> Result<Block, DecodeError> {
        let mut d = Decoder::new(bytes);
        let header = BlockHeader {
            height: d.u64()?,
            prev_hash: Digest::from_bytes(d.fixed()?),
            tx_root: Digest::from_bytes(d.fixed()?),
            timestamp: d.u64()?,
            proposer: d.u32()?,
        };
        let count = d.u32()? as usize;
        let mut txs = Vec::with_capacity(count.min(MAX_BLOCK_TXS));
        for _ in 0..count {
            txs.push(Transaction::decode(d.bytes()?)?);
        }
        d.finish()?;
        Ok(Block { header, txs })
    }
}

impl Canonical for Block {
    fn encode_to(&self, enc: &mut Encoder) {
        self.header.encode_to(enc);
        enc.u32(self.txs.len() as u32);
        for tx in &self.txs {
            enc.bytes(&canonical_encode(tx));
        }
    }
}
