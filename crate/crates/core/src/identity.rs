//! Joining the network: key generation for patients and medical staff, the
//! append-only key directory, and sealed symmetric-key sharing between a
//! patient and a staff member.

use std::collections::BTreeMap;
use std::fmt;

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::crypto::{
    self, decrypt, ecdh, encrypt, gen_sig_keypair, gen_sym_key, hash_parts, Ciphertext,
    CryptoError, Digest, PrivateKey, PublicKey, SigningKeyPair, SymmetricKey,
};
use crate::ledger::{
    AccessPayload, DataContent, DataPayload, Payload, Policy, RegisterPayload, Transaction,
};

const ENVELOPE_DOMAIN: &[u8] = b"medchain.envelope.v1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdentityError {
    #[error("public key {0} is already registered")]
    AlreadyRegistered(String),
    #[error("recipient is not a registered staff member")]
    NotRegisteredStaff,
    #[error("envelope is addressed to a different key")]
    WrongRecipient,
    #[error("cannot unseal envelope: {0}")]
    Unseal(CryptoError),
    #[error("no symmetric key shared with this counterpart")]
    NoSharedKey,
    #[error("transaction is not a registration record")]
    NotRegistration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Patient,
    Staff,
}

impl Role {
    pub fn tag(self) -> u8 {
        match self {
            Role::Patient => 0,
            Role::Staff => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Role> {
        match tag {
            0 => Some(Role::Patient),
            1 => Some(Role::Staff),
            _ => None,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Patient => "patient",
            Role::Staff => "staff",
        })
    }
}

impl std::str::FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "patient" => Ok(Role::Patient),
            "staff" => Ok(Role::Staff),
            other => Err(format!("unknown role `{other}` (expected patient|staff)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectoryEntry {
    pub role: Role,
    pub public: PublicKey,
    pub profile: Option<String>,
}

/// Registered public keys, indexed by `hash(pk)`. Append-only.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyDirectory {
    entries: BTreeMap<Digest, DirectoryEntry>,
}

impl KeyDirectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, entry: DirectoryEntry) -> Result<(), IdentityError> {
        let address = entry.public.address();
        if self.entries.contains_key(&address) {
            return Err(IdentityError::AlreadyRegistered(address.to_hex()));
        }
        self.entries.insert(address, entry);
        Ok(())
    }

    /// Rebuilds a directory from registration records in ledger order.
    pub fn from_records<'a>(
        records: impl IntoIterator<Item = &'a Transaction>,
    ) -> Result<Self, IdentityError> {
        let mut dir = KeyDirectory::new();
        for tx in records {
            dir.register(entry_for(tx).ok_or(IdentityError::NotRegistration)?)?;
        }
        Ok(dir)
    }

    pub fn lookup(&self, address: &Digest) -> Option<&DirectoryEntry> {
        self.entries.get(address)
    }

    pub fn get(&self, pk: &PublicKey) -> Option<&DirectoryEntry> {
        self.entries.get(&pk.address())
    }

    pub fn role_of(&self, pk: &PublicKey) -> Option<Role> {
        self.get(pk).map(|e| e.role)
    }

    pub fn contains(&self, pk: &PublicKey) -> bool {
        self.entries.contains_key(&pk.address())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in address order.
    pub fn iter(&self) -> impl Iterator<Item = (&Digest, &DirectoryEntry)> {
        self.entries.iter()
    }
}

/// The directory entry a registration transaction would create.
pub fn entry_for(tx: &Transaction) -> Option<DirectoryEntry> {
    match &tx.payload {
        Payload::Register(reg) => Some(DirectoryEntry {
            role: reg.role,
            public: tx.sender,
            profile: match reg.role {
                Role::Patient => None,
                Role::Staff => Some(reg.profile.clone()),
            },
        }),
        _ => None,
    }
}

/// Anything that signs ledger transactions with a per-sender sequence counter.
pub trait Actor {
    fn keys(&self) -> &SigningKeyPair;
    fn seq_counter(&mut self) -> &mut u64;

    fn public_key(&self) -> PublicKey {
        self.keys().public
    }

    fn sign_tx(&mut self, payload: Payload) -> Transaction {
        let counter = self.seq_counter();
        *counter += 1;
        let seq = *counter;
        Transaction::new_signed(self.keys(), seq, payload)
    }

    fn read_tx(&mut self, patient: PublicKey, data_type: &str, digest: Digest) -> Transaction {
        self.sign_tx(Payload::Data(DataPayload {
            patient,
            data_type: data_type.to_string(),
            content: DataContent::Read(digest),
        }))
    }
}

#[derive(Debug, Clone)]
pub struct PatientIdentity {
    pub patient_id: String,
    pub keys: SigningKeyPair,
    pub shared_keys: BTreeMap<PublicKey, SymmetricKey>,
    pub last_seq: u64,
}

impl Actor for PatientIdentity {
    fn keys(&self) -> &SigningKeyPair {
        &self.keys
    }
    fn seq_counter(&mut self) -> &mut u64 {
        &mut self.last_seq
    }
}

impl PatientIdentity {
    pub fn grant<I, S>(&mut self, staff: PublicKey, types: I) -> Transaction
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let policy = Policy::new(self.keys.public, staff, types);
        self.sign_tx(Payload::Access(AccessPayload::from_policy(policy)))
    }

    /// Empty-set policy: withdraws every permission previously granted to `staff`.
    pub fn revoke(&mut self, staff: PublicKey) -> Transaction {
        self.grant(staff, Vec::<String>::new())
    }

    /// Encrypts `plaintext` under the key shared with `staff`, binding the
    /// data-type label as associated data, and wraps it in a write transaction.
    pub fn write_record<R: RngCore + CryptoRng>(
        &mut self,
        staff: &PublicKey,
        data_type: &str,
        plaintext: &[u8],
        rng: &mut R,
    ) -> Result<Transaction, IdentityError> {
        let key = self.shared_keys.get(staff).ok_or(IdentityError::NoSharedKey)?;
        let c = encrypt(key, plaintext, data_type.as_bytes(), rng);
        let patient = self.keys.public;
        Ok(self.sign_tx(Payload::Data(DataPayload {
            patient,
            data_type: data_type.to_string(),
            content: DataContent::Write(c),
        })))
    }

    /// Tries every shared key; a record is readable by its owner whichever staff key sealed it.
    pub fn decrypt_record(&self, c: &Ciphertext, data_type: &str) -> Result<Vec<u8>, CryptoError> {
        self.shared_keys
            .values()
            .find_map(|k| decrypt(k, c, data_type.as_bytes()).ok())
            .ok_or(CryptoError::Authentication)
    }
}

#[derive(Debug, Clone)]
pub struct StaffIdentity {
    pub staff_id: String,
    pub keys: SigningKeyPair,
    pub received_keys: BTreeMap<PublicKey, SymmetricKey>,
    pub profile: String,
    pub last_seq: u64,
}

impl Actor for StaffIdentity {
    fn keys(&self) -> &SigningKeyPair {
        &self.keys
    }
    fn seq_counter(&mut self) -> &mut u64 {
        &mut self.last_seq
    }
}

impl StaffIdentity {
    pub fn decrypt_record(
        &self,
        patient: &PublicKey,
        c: &Ciphertext,
        data_type: &str,
    ) -> Result<Vec<u8>, IdentityError> {
        let key = self.received_keys.get(patient).ok_or(IdentityError::NoSharedKey)?;
        decrypt(key, c, data_type.as_bytes()).map_err(IdentityError::Unseal)
    }
}

/// Generates a patient keypair and the registration record announcing it.
pub fn join_patient<R: RngCore + CryptoRng>(
    patient_id: &str,
    rng: &mut R,
) -> (PatientIdentity, Transaction) {
    let mut id = PatientIdentity {
        patient_id: patient_id.to_string(),
        keys: gen_sig_keypair(rng),
        shared_keys: BTreeMap::new(),
        last_seq: 0,
    };
    let tx = id.sign_tx(Payload::Register(RegisterPayload {
        role: Role::Patient,
        profile: String::new(),
    }));
    (id, tx)
}

pub fn join_staff<R: RngCore + CryptoRng>(
    staff_id: &str,
    profile: &str,
    rng: &mut R,
) -> (StaffIdentity, Transaction) {
    let mut id = StaffIdentity {
        staff_id: staff_id.to_string(),
        keys: gen_sig_keypair(rng),
        received_keys: BTreeMap::new(),
        profile: profile.to_string(),
        last_seq: 0,
    };
    let tx = id.sign_tx(Payload::Register(RegisterPayload {
        role: Role::Staff,
        profile: profile.to_string(),
    }));
    (id, tx)
}

/// A symmetric key sealed for one recipient under an ephemeral ECDH key.
/// Travels off-ledger.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecureEnvelope {
    pub sender: PublicKey,
    pub recipient: PublicKey,
    pub ephemeral_public: PublicKey,
    pub sealed_key: Ciphertext,
}

impl SecureEnvelope {
    /// Wire form used for tracing: sender ‖ recipient ‖ ephemeral ‖ sealed key.
    pub fn to_wire(&self) -> Vec<u8> {
        let mut out = envelope_ad(&self.sender, &self.recipient);
        out.extend_from_slice(self.ephemeral_public.as_bytes());
        out.extend_from_slice(&self.sealed_key.to_wire());
        out
    }
}

fn envelope_ad(sender: &PublicKey, recipient: &PublicKey) -> Vec<u8> {
    [sender.as_bytes().as_slice(), recipient.as_bytes()].concat()
}

fn wrapping_key(shared_x: &[u8; 32], env_ephemeral: &PublicKey, recipient: &PublicKey) -> SymmetricKey {
    let d = hash_parts(&[
        ENVELOPE_DOMAIN,
        shared_x,
        env_ephemeral.as_bytes(),
        recipient.as_bytes(),
    ]);
    SymmetricKey::from_bytes(*d.as_bytes())
}

/// Generates a fresh key for (patient, staff), replacing any earlier one, and
/// seals it for the staff member.
pub fn share_sym_key<R: RngCore + CryptoRng>(
    patient: &mut PatientIdentity,
    staff_pk: PublicKey,
    directory: &KeyDirectory,
    rng: &mut R,
) -> Result<SecureEnvelope, IdentityError> {
    if directory.role_of(&staff_pk) != Some(Role::Staff) {
        return Err(IdentityError::NotRegisteredStaff);
    }
    let key = gen_sym_key(rng);
    let ephemeral = gen_sig_keypair(rng);
    let shared = ecdh(&ephemeral.private, &staff_pk).map_err(IdentityError::Unseal)?;
    let wrap = wrapping_key(&shared, &ephemeral.public, &staff_pk);
    let sender = patient.keys.public;
    let sealed_key = encrypt(&wrap, key.as_bytes(), &envelope_ad(&sender, &staff_pk), rng);
    patient.shared_keys.insert(staff_pk, key);
    Ok(SecureEnvelope {
        sender,
        recipient: staff_pk,
        ephemeral_public: ephemeral.public,
        sealed_key,
    })
}

/// Unseals with an arbitrary private key; fails authentication unless it
/// belongs to the recipient.
pub fn unseal(private: &PrivateKey, env: &SecureEnvelope) -> Result<SymmetricKey, IdentityError> {
    let shared = ecdh(private, &env.ephemeral_public).map_err(IdentityError::Unseal)?;
    let wrap = wrapping_key(&shared, &env.ephemeral_public, &env.recipient);
    let raw =
        decrypt(&wrap, &env.sealed_key, &envelope_ad(&env.sender, &env.recipient)).map_err(IdentityError::Unseal)?;
    SymmetricKey::from_slice(&raw).map_err(IdentityError::Unseal)
}

/// Staff side of the key share. State is only touched on success.
pub fn open_envelope(
    staff: &mut StaffIdentity,
    env: &SecureEnvelope,
) -> Result<SymmetricKey, IdentityError> {
    if env.recipient != staff.keys.public {
        return Err(IdentityError::WrongRecipient);
    }
    let key = unseal(&staff.keys.private, env)?;
    staff.received_keys.insert(env.sender, key.clone());
    Ok(key)
}

/// Address string printed for an actor: hex of `hash(pk)`.
pub fn address_hex(pk: &PublicKey) -> String {
    crypto::hash(pk.as_bytes()).to_hex()
}
