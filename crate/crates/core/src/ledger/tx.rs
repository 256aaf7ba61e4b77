use std::collections::BTreeSet;

use crate::crypto::{
    hash, Ciphertext, Digest, PublicKey, Signature, SigningKeyPair, PUBLIC_KEY_LEN, SIGNATURE_LEN,
};
use crate::encoding::{Canonical, DecodeError, Decoder, Encoder};
use crate::identity::Role;

const TX_DOMAIN: &[u8] = b"medchain.tx.v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TxKind {
    Register,
    Access,
    Data,
}

impl TxKind {
    pub fn tag(self) -> u8 {
        match self {
            TxKind::Register => 0,
            TxKind::Access => 1,
            TxKind::Data => 2,
        }
    }
}

/// What a patient lets one staff member read. The empty set revokes everything.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Policy {
    pub grantor: PublicKey,
    pub grantee: PublicKey,
    pub allowed_types: BTreeSet<String>,
}

impl Policy {
    pub fn new<I, S>(grantor: PublicKey, grantee: PublicKey, types: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Policy {
            grantor,
            grantee,
            allowed_types: types.into_iter().map(Into::into).collect(),
        }
    }

    pub fn allows(&self, data_type: &str) -> bool {
        self.allowed_types.contains(data_type)
    }

    pub fn is_revocation(&self) -> bool {
        self.allowed_types.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RegisterPayload {
    pub role: Role,
    pub profile: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AccessPayload {
    pub patient: PublicKey,
    pub staff: PublicKey,
    pub policy: Policy,
}

impl AccessPayload {
    pub fn from_policy(policy: Policy) -> Self {
        AccessPayload {
            patient: policy.grantor,
            staff: policy.grantee,
            policy,
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.patient == self.policy.grantor && self.staff == self.policy.grantee
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadWrite {
    Write = 0,
    Read = 1,
}

/// A write carries the ciphertext itself; a read names the digest it wants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataContent {
    Write(Ciphertext),
    Read(Digest),
}

/// `patient` names whose records are addressed; readers other than the
/// patient resolve access through the policy that patient granted them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataPayload {
    pub patient: PublicKey,
    pub data_type: String,
    pub content: DataContent,
}

impl DataPayload {
    pub fn rw(&self) -> ReadWrite {
        match self.content {
            DataContent::Write(_) => ReadWrite::Write,
            DataContent::Read(_) => ReadWrite::Read,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    Register(RegisterPayload),
    Access(AccessPayload),
    Data(DataPayload),
}

impl Payload {
    pub fn kind(&self) -> TxKind {
        match self {
            Payload::Register(_) => TxKind::Register,
            Payload::Access(_) => TxKind::Access,
            Payload::Data(_) => TxKind::Data,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub sender: PublicKey,
    pub seq: u64,
    pub payload: Payload,
    pub signature: Signature,
}

impl Transaction {
    pub fn new_signed(keys: &SigningKeyPair, seq: u64, payload: Payload) -> Self {
        let mut tx = Transaction {
            sender: keys.public,
            seq,
            payload,
            signature: Signature::EMPTY,
        };
        tx.signature = keys.sign(&tx.signing_bytes());
        tx
    }

    pub fn kind(&self) -> TxKind {
        self.payload.kind()
    }

    /// Domain tag followed by the unsigned body (kind, sender, seq, payload).
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.raw(TX_DOMAIN);
        self.encode_body(&mut enc);
        enc.finish()
    }

    pub fn verify_signature(&self) -> bool {
        crate::crypto::verify(&self.sender, &self.signing_bytes(), &self.signature)
    }

    pub fn hash(&self) -> Digest {
        hash(&canonical_encode(self))
    }

    fn encode_body(&self, enc: &mut Encoder) {
        enc.u8(self.kind().tag())
            .raw(self.sender.as_bytes())
            .u64(self.seq);
        match &self.payload {
            Payload::Register(r) => {
                enc.u8(r.role.tag()).str(&r.profile);
            }
            Payload::Access(a) => {
                enc.raw(a.patient.as_bytes())
                    .raw(a.staff.as_bytes())
                    .raw(a.policy.grantor.as_bytes())
                    .raw(a.policy.grantee.as_bytes())
                    .u32(a.policy.allowed_types.len() as u32);
                for t in &a.policy.allowed_types {
                    enc.str(t);
                }
            }
            Payload::Data(d) => {
                enc.raw(d.patient.as_bytes())
                    .str(&d.data_type)
                    .u8(d.rw() as u8);
                match &d.content {
                    DataContent::Write(c) => enc.bytes(&c.to_wire()),
                    DataContent::Read(digest) => enc.raw(digest.as_bytes()),
                };
            }
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut d = Decoder::new(bytes);
        let tx = Self::decode_from(&mut d)?;
        d.finish()?;
        Ok(tx)
    }

    pub fn decode_from(d: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let kind = d.u8()?;
        let sender = read_pk(d)?;
        let seq = d.u64()?;
        let payload = match kind {
            0 => {
                let tag = d.u8()?;
                let role = Role::from_tag(tag).ok_or(DecodeError::InvalidTag { what: "role", tag })?;
                Payload::Register(RegisterPayload {
                    role,
                    profile: d.string()?,
                })
            }
            1 => {
                let patient = read_pk(d)?;
                let staff = read_pk(d)?;
                let grantor = read_pk(d)?;
                let grantee = read_pk(d)?;
                let count = d.u32()?;
                let mut allowed_types = BTreeSet::new();
                let mut prev: Option<String> = None;
                for _ in 0..count {
                    let t = d.string()?;
                    if prev.as_ref().is_some_and(|p| *p >= t) {
                        return Err(DecodeError::Invalid("policy set order"));
                    }
                    prev = Some(t.clone());
                    allowed_types.insert(t);
                }
                Payload::Access(AccessPayload {
                    patient,
                    staff,
                    policy: Policy {
                        grantor,
                        grantee,
                        allowed_types,
                    },
                })
            }
            2 => {
                let patient = read_pk(d)?;
                let data_type = d.string()?;
                let content = match d.u8()? {
                    0 => DataContent::Write(
                        Ciphertext::from_wire(d.bytes()?)
                            .map_err(|_| DecodeError::Invalid("ciphertext"))?,
                    ),
                    1 => DataContent::Read(Digest::from_bytes(d.fixed()?)),
                    tag => return Err(DecodeError::InvalidTag { what: "rw", tag }),
                };
                Payload::Data(DataPayload {
                    patient,
                    data_type,
                    content,
                })
            }
            tag => return Err(DecodeError::InvalidTag { what: "tx kind", tag }),
        };
        let sig: [u8; SIGNATURE_LEN] = d.fixed()?;
        Ok(Transaction {
            sender,
            seq,
            payload,
            signature: Signature::from_bytes(&sig).expect("64 bytes"),
        })
    }
}

fn read_pk(d: &mut Decoder<'_>) -> Result<PublicKey, DecodeError> {
    let raw: [u8; PUBLIC_KEY_LEN] = d.fixed()?;
    Ok(PublicKey::from_bytes_unchecked(raw))
}

impl Canonical for Transaction {
    fn encode_to(&self, enc: &mut Encoder) {
        self.encode_body(enc);
        enc.raw(&self.signature.to_bytes());
    }
}

/// Body followed by the signature. Deterministic and injective.
pub fn canonical_encode(tx: &Transaction) -> Vec<u8> {
    tx.canonical_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{encrypt_with_nonce, gen_sig_keypair, SymmetricKey};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn keys(seed: u64) -> SigningKeyPair {
        gen_sig_keypair(&mut ChaCha20Rng::seed_from_u64(seed))
    }

    #[test]
    fn set_order_does_not_affect_encoding() {
        let (p, m) = (keys(1), keys(2));
        let a = Policy::new(p.public, m.public, ["blood pressure", "body temperature"]);
        let b = Policy::new(p.public, m.public, ["body temperature", "blood pressure"]);
        let ta = Transaction::new_signed(&p, 1, Payload::Access(AccessPayload::from_policy(a)));
        let tb = Transaction::new_signed(&p, 1, Payload::Access(AccessPayload::from_policy(b)));
        assert_eq!(canonical_encode(&ta), canonical_encode(&tb));
        assert_eq!(canonical_encode(&ta), canonical_encode(&ta));
    }

    #[test]
    fn decode_round_trips_all_kinds() {
        let (p, m) = (keys(3), keys(4));
        let c = encrypt_with_nonce(&SymmetricKey::from_bytes([9; 32]), [1; 12], b"x", b"t");
        let payloads = vec![
            Payload::Register(RegisterPayload {
                role: Role::Staff,
                profile: "cardiology".into(),
            }),
            Payload::Access(AccessPayload::from_policy(Policy::new(
                p.public,
                m.public,
                ["a", "b"],
            ))),
            Payload::Data(DataPayload {
                patient: p.public,
                data_type: "t".into(),
                content: DataContent::Write(c.clone()),
            }),
            Payload::Data(DataPayload {
                patient: p.public,
                data_type: "t".into(),
                content: DataContent::Read(c.digest()),
            }),
        ];
        for (i, payload) in payloads.into_iter().enumerate() {
            let tx = Transaction::new_signed(&p, i as u64 + 1, payload);
            let back = Transaction::decode(&canonical_encode(&tx)).unwrap();
            assert_eq!(back, tx);
            assert!(back.verify_signature());
        }
    }

    #[test]
    fn unsorted_policy_set_is_not_canonical() {
        let (p, m) = (keys(5), keys(6));
        let tx = Transaction::new_signed(
            &p,
            1,
            Payload::Access(AccessPayload::from_policy(Policy::new(
                p.public,
                m.public,
                ["a", "b"],
            ))),
        );
        let mut bytes = canonical_encode(&tx);
        // swap the two one-byte labels in place
        let pos_a = bytes.len() - 64 - 10;
        bytes.swap(pos_a + 4, pos_a + 9);
        assert_eq!(
            Transaction::decode(&bytes),
            Err(DecodeError::Invalid("policy set order"))
        );
    }

    #[test]
    fn signature_covers_every_field() {
        let p = keys(7);
        let mut tx = Transaction::new_signed(
            &p,
            4,
            Payload::Register(RegisterPayload {
                role: Role::Patient,
                profile: String::new(),
            }),
        );
        assert!(tx.verify_signature());
        tx.seq = 5;
        assert!(!tx.verify_signature());
    }
}
