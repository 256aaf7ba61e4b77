//! Content-addressed off-chain storage for encrypted records.
//!
//! Every entry lives under the hash of its ciphertext wire bytes. Reads
//! re-hash what they find, so a modified entry surfaces as
//! [`StoreError::Tampered`] and never as silently wrong bytes. Entries may be
//! copied onto simulated storage nodes; reads fall back across copies and
//! report which holders failed verification.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;
use std::sync::{Arc, RwLock};

use thiserror::Error;

use crate::crypto::{hash, hash_parts, Ciphertext, Digest};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("no entry for {0}")]
    Missing(Digest),
    #[error("tamper alarm: stored bytes for {0} do not hash to their key")]
    Tampered(Digest),
    #[error("replication factor {requested} exceeds {nodes} storage nodes")]
    ReplicationFactor { requested: usize, nodes: usize },
    #[error("unknown storage node {0}")]
    UnknownNode(usize),
}

/// Where a copy of an entry lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Holder {
    /// The store's own copy, written by `put`.
    Local,
    Node(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlacementReport {
    pub key: Digest,
    pub holders: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadReport {
    pub result: Result<Ciphertext, StoreError>,
    pub served_by: Option<Holder>,
    /// Holders whose copy was absent or failed verification before a good copy was found.
    pub bad_holders: Vec<(Holder, StoreError)>,
}

impl ReadReport {
    pub fn tamper_detected(&self) -> bool {
        matches!(self.result, Err(StoreError::Tampered(_)))
            || self
                .bad_holders
                .iter()
                .any(|(_, e)| matches!(e, StoreError::Tampered(_)))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StorageNode {
    pub id: String,
    entries: BTreeMap<Digest, Vec<u8>>,
}

impl StorageNode {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn holds(&self, key: &Digest) -> bool {
        self.entries.contains_key(key)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ContentStore {
    entries: BTreeMap<Digest, Vec<u8>>,
    nodes: Vec<StorageNode>,
    placements: BTreeMap<Digest, Vec<usize>>,
}

fn check(key: &Digest, bytes: Option<&Vec<u8>>) -> Result<Ciphertext, StoreError> {
    let bytes = bytes.ok_or(StoreError::Missing(*key))?;
    if hash(bytes) != *key {
        return Err(StoreError::Tampered(*key));
    }
    Ciphertext::from_wire(bytes).map_err(|_| StoreError::Tampered(*key))
}

impl ContentStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_nodes<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ContentStore {
            nodes: ids
                .into_iter()
                .map(|id| StorageNode {
                    id: id.into(),
                    entries: BTreeMap::new(),
                })
                .collect(),
            ..Self::default()
        }
    }

    /// Idempotent: identical content maps to the same key and one entry.
    pub fn put(&mut self, c: &Ciphertext) -> Digest {
        let wire = c.to_wire();
        let key = hash(&wire);
        self.entries.entry(key).or_insert(wire);
        key
    }

    pub fn get(&self, key: &Digest) -> Result<Ciphertext, StoreError> {
        self.read(key).result
    }

    /// Verifies every copy and serves the first intact one: local copy first,
    /// then replicas in placement order. Bad copies are reported even when an
    /// intact one was found.
    pub fn read(&self, key: &Digest) -> ReadReport {
        let mut bad = Vec::new();
        let mut served = None;
        let mut candidates = vec![Holder::Local];
        if let Some(p) = self.placements.get(key) {
            candidates.extend(p.iter().map(|&i| Holder::Node(i)));
        }
        for holder in candidates {
            match check(key, self.raw(key, holder)) {
                Ok(c) => {
                    served.get_or_insert((c, holder));
                }
                Err(e) => bad.push((holder, e)),
            }
        }
        if let Some((c, holder)) = served {
            return ReadReport {
                result: Ok(c),
                served_by: Some(holder),
                bad_holders: bad,
            };
        }
        let tampered = bad.iter().any(|(_, e)| matches!(e, StoreError::Tampered(_)));
        ReadReport {
            result: Err(if tampered {
                StoreError::Tampered(*key)
            } else {
                StoreError::Missing(*key)
            }),
            served_by: None,
            bad_holders: bad,
        }
    }

    /// Rendezvous ordering of storage nodes for `key`: highest `hash(key ‖ node_id)` first.
    pub fn placement(&self, key: &Digest, k: usize) -> Vec<usize> {
        let mut ranked: Vec<(Digest, usize)> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (hash_parts(&[key.as_bytes(), n.id.as_bytes()]), i))
            .collect();
        ranked.sort_by(|a, b| b.cmp(a));
        ranked.into_iter().take(k).map(|(_, i)| i).collect()
    }

    /// Copies a verified entry onto `k` storage nodes.
    pub fn replicate(&mut self, key: &Digest, k: usize) -> Result<PlacementReport, StoreError> {
        if k > self.nodes.len() {
            return Err(StoreError::ReplicationFactor {
                requested: k,
                nodes: self.nodes.len(),
            });
        }
        let c = self.get(key)?;
        let wire = c.to_wire();
        let holders = self.placement(key, k);
        for &i in &holders {
            self.nodes[i].entries.insert(*key, wire.clone());
        }
        self.placements.insert(*key, holders.clone());
        Ok(PlacementReport { key: *key, holders })
    }

    pub fn holders(&self, key: &Digest) -> &[usize] {
        self.placements.get(key).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn contains(&self, key: &Digest) -> bool {
        self.entries.contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &Digest> {
        self.entries.keys()
    }

    pub fn nodes(&self) -> &[StorageNode] {
        &self.nodes
    }

    pub fn raw(&self, key: &Digest, holder: Holder) -> Option<&Vec<u8>> {
        match holder {
            Holder::Local => self.entries.get(key),
            Holder::Node(i) => self.nodes.get(i).and_then(|n| n.entries.get(key)),
        }
    }

    fn raw_mut(&mut self, key: &Digest, holder: Holder) -> Result<&mut Vec<u8>, StoreError> {
        match holder {
            Holder::Local => self.entries.get_mut(key),
            Holder::Node(i) => self
                .nodes
                .get_mut(i)
                .ok_or(StoreError::UnknownNode(i))?
                .entries
                .get_mut(key),
        }
        .ok_or(StoreError::Missing(*key))
    }

    /// Fault hook: XORs `mask` into the byte at `index % len` of one copy.
    pub fn tamper(&mut self, key: &Digest, holder: Holder, index: usize, mask: u8) -> Result<(), StoreError> {
        let bytes = self.raw_mut(key, holder)?;
        if bytes.is_empty() {
            bytes.push(mask);
        } else {
            let i = index % bytes.len();
            bytes[i] ^= mask.max(1);
        }
        Ok(())
    }

    /// Fault hook: replaces one copy wholesale.
    pub fn overwrite(&mut self, key: &Digest, holder: Holder, bytes: Vec<u8>) -> Result<(), StoreError> {
        *self.raw_mut(key, holder)? = bytes;
        Ok(())
    }

    /// Fault hook: drops one copy.
    pub fn lose(&mut self, key: &Digest, holder: Holder) -> Result<(), StoreError> {
        let removed = match holder {
            Holder::Local => self.entries.remove(key),
            Holder::Node(i) => self
                .nodes
                .get_mut(i)
                .ok_or(StoreError::UnknownNode(i))?
                .entries
                .remove(key),
        };
        removed.map(|_| ()).ok_or(StoreError::Missing(*key))
    }

    /// Local copies as raw wire bytes, one file per entry named by lowercase hex digest.
    pub fn save_dir(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        for (key, bytes) in &self.entries {
            fs::write(dir.join(key.to_hex()), bytes)?;
        }
        Ok(())
    }

    /// Loads whatever is on disk; verification happens on read.
    pub fn load_dir(dir: &Path) -> io::Result<Self> {
        let mut store = ContentStore::new();
        if !dir.exists() {
            return Ok(store);
        }
        for entry in fs::read_dir(dir)? {
            let entry = entry?;
            let name = entry.file_name();
            let Some(key) = name.to_str().and_then(|n| Digest::from_hex(n).ok()) else {
                continue;
            };
            store.entries.insert(key, fs::read(entry.path())?);
        }
        Ok(store)
    }
}

/// A store shared between threads. Racing puts of identical content are benign.
#[derive(Debug, Clone, Default)]
pub struct SharedContentStore(Arc<RwLock<ContentStore>>);

impl SharedContentStore {
    pub fn new(store: ContentStore) -> Self {
        SharedContentStore(Arc::new(RwLock::new(store)))
    }

    pub fn put(&self, c: &Ciphertext) -> Digest {
        self.0.write().expect("store lock poisoned").put(c)
    }

    pub fn get(&self, key: &Digest) -> Result<Ciphertext, StoreError> {
        self.0.read().expect("store lock poisoned").get(key)
    }

    pub fn len(&self) -> usize {
        self.0.read().expect("store lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{encrypt_with_nonce, SymmetricKey};

    fn ct(tag: u8) -> Ciphertext {
        encrypt_with_nonce(&SymmetricKey::from_bytes([tag; 32]), [tag; 12], &[tag; 20], b"t")
    }

    fn five_nodes() -> ContentStore {
        ContentStore::with_nodes((0..5).map(|i| format!("s{i}")))
    }

    #[test]
    fn put_get_round_trip_and_idempotence() {
        let mut s = ContentStore::new();
        let k = s.put(&ct(1));
        assert_eq!(k, ct(1).digest());
        assert_eq!(s.get(&k).unwrap(), ct(1));
        assert_eq!(s.put(&ct(1)), k);
        assert_eq!(s.len(), 1);
        assert_ne!(s.put(&ct(2)), k);
    }

    #[test]
    fn missing_and_tampered_are_distinct() {
        let mut s = ContentStore::new();
        let k = s.put(&ct(1));
        assert_eq!(s.get(&ct(2).digest()), Err(StoreError::Missing(ct(2).digest())));
        s.tamper(&k, Holder::Local, 5, 0x01).unwrap();
        assert_eq!(s.get(&k), Err(StoreError::Tampered(k)));
    }

    #[test]
    fn truncated_entry_is_tampered_not_garbage() {
        let mut s = ContentStore::new();
        let k = s.put(&ct(1));
        s.overwrite(&k, Holder::Local, vec![1, 2, 3]).unwrap();
        assert_eq!(s.get(&k), Err(StoreError::Tampered(k)));
    }

    #[test]
    fn replicate_places_on_k_distinct_nodes() {
        let mut s = five_nodes();
        let k = s.put(&ct(3));
        let report = s.replicate(&k, 3).unwrap();
        assert_eq!(report.holders.len(), 3);
        let mut sorted = report.holders.clone();
        sorted.dedup();
        assert_eq!(sorted.len(), 3);
        assert_eq!(s.nodes().iter().filter(|n| n.holds(&k)).count(), 3);
        // deterministic placement
        assert_eq!(five_nodes().placement(&k, 3), report.holders);
    }

    #[test]
    fn replication_factor_bounded_by_nodes() {
        let mut s = five_nodes();
        let k = s.put(&ct(3));
        assert_eq!(
            s.replicate(&k, 6),
            Err(StoreError::ReplicationFactor {
                requested: 6,
                nodes: 5
            })
        );
    }

    #[test]
    fn read_falls_back_and_reports_bad_holder() {
        let mut s = five_nodes();
        let k = s.put(&ct(4));
        let holders = s.replicate(&k, 3).unwrap().holders;
        s.tamper(&k, Holder::Local, 0, 0x80).unwrap();
        s.tamper(&k, Holder::Node(holders[0]), 3, 0x80).unwrap();
        let r = s.read(&k);
        assert_eq!(r.result, Ok(ct(4)));
        assert_eq!(r.served_by, Some(Holder::Node(holders[1])));
        assert_eq!(
            r.bad_holders,
            vec![
                (Holder::Local, StoreError::Tampered(k)),
                (Holder::Node(holders[0]), StoreError::Tampered(k))
            ]
        );
        assert!(r.tamper_detected());
    }

    #[test]
    fn bad_replica_behind_good_local_copy_is_reported() {
        let mut s = five_nodes();
        let k = s.put(&ct(6));
        let holders = s.replicate(&k, 2).unwrap().holders;
        s.overwrite(&k, Holder::Node(holders[1]), vec![1, 2, 3]).unwrap();
        let r = s.read(&k);
        assert_eq!((r.result.clone(), r.served_by), (Ok(ct(6)), Some(Holder::Local)));
        assert_eq!(r.bad_holders, vec![(Holder::Node(holders[1]), StoreError::Tampered(k))]);
        assert!(r.tamper_detected());
    }

    #[test]
    fn sole_holder_lost_surfaces_missing() {
        let mut s = five_nodes();
        let k = s.put(&ct(5));
        let h = s.replicate(&k, 1).unwrap().holders[0];
        s.lose(&k, Holder::Local).unwrap();
        s.lose(&k, Holder::Node(h)).unwrap();
        assert_eq!(s.get(&k), Err(StoreError::Missing(k)));
    }

    #[test]
    fn disk_layout_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = ContentStore::new();
        let k = s.put(&ct(6));
        s.save_dir(dir.path()).unwrap();
        let on_disk = fs::read(dir.path().join(k.to_hex())).unwrap();
        assert_eq!(on_disk, ct(6).to_wire());
        assert_eq!(ContentStore::load_dir(dir.path()).unwrap().get(&k).unwrap(), ct(6));
    }

    #[test]
    fn concurrent_puts_are_benign() {
        let shared = SharedContentStore::default();
        let handles: Vec<_> = (0..8)
            .map(|i| {
                let s = shared.clone();
                std::thread::spawn(move || s.put(&ct((i % 2) as u8)))
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(shared.len(), 2);
        assert_eq!(shared.get(&ct(1).digest()).unwrap(), ct(1));
    }
}
