//! Chain persistence: each block as a 4-byte big-endian length followed by
//! its canonical encoding.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::encoding::{Canonical, DecodeError, Decoder, Encoder};

use super::block::Block;

#[derive(Debug, Error)]
pub enum ChainFileError {
    #[error("chain file i/o: {0}")]
    Io(#[from] io::Error),
    #[error("block {index} in chain file: {source}")]
    Decode { index: usize, source: DecodeError },
}

pub fn encode_chain(blocks: &[Block]) -> Vec<u8> {
    let mut enc = Encoder::new();
    for b in blocks {
        enc.bytes(&b.canonical_bytes());
    }
    enc.finish()
}

pub fn decode_chain(bytes: &[u8]) -> Result<Vec<Block>, ChainFileError> {
    let mut d = Decoder::new(bytes);
    let mut blocks = Vec::new();
    while d.remaining() > 0 {
        let index = blocks.len();
        let raw = d
            .bytes()
            .map_err(|source| ChainFileError::Decode { index, source })?;
        blocks.push(Block::decode(raw).map_err(|source| ChainFileError::Decode { index, source })?);
    }
    Ok(blocks)
}

pub fn write_chain_file(path: &Path, blocks: &[Block]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, encode_chain(blocks))?;
    fs::rename(tmp, path)
}

/// A missing file reads as an empty chain.
pub fn read_chain_file(path: &Path) -> Result<Vec<Block>, ChainFileError> {
    match fs::read(path) {
        Ok(bytes) => decode_chain(&bytes),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(e.into()),
    }
}
