//! Hashing, authenticated encryption and secp256k1 signatures.
//!
//! Everything here is deterministic given its inputs: randomness enters only
//! through caller-supplied RNGs, and signatures use RFC 6979 nonces so that a
//! ledger built from fixed seeds is byte-reproducible.

use std::fmt;

use aes_gcm::aead::AeadInPlace;
use aes_gcm::{Aes256Gcm, KeyInit, Nonce, Tag};
use k256::ecdsa::signature::{Signer, Verifier};
use k256::ecdsa::{Signature as EcdsaSignature, SigningKey, VerifyingKey};
use rand::{CryptoRng, RngCore};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

pub const DIGEST_LEN: usize = 32;
pub const SYMMETRIC_KEY_LEN: usize = 32;
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;
pub const PUBLIC_KEY_LEN: usize = 33;
pub const PRIVATE_KEY_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("authentication failed: wrong key or modified ciphertext")]
    Authentication,
    #[error("invalid private scalar")]
    InvalidPrivateKey,
    #[error("invalid public key encoding")]
    InvalidPublicKey,
    #[error("invalid signature encoding")]
    InvalidSignature,
    #[error("expected {expected} bytes, got {actual}")]
    Length { expected: usize, actual: usize },
    #[error("invalid hex: {0}")]
    Hex(String),
}

fn fixed<const N: usize>(bytes: &[u8]) -> Result<[u8; N], CryptoError> {
    bytes.try_into().map_err(|_| CryptoError::Length {
        expected: N,
        actual: bytes.len(),
    })
}

fn fixed_hex<const N: usize>(s: &str) -> Result<[u8; N], CryptoError> {
    let raw = hex::decode(s).map_err(|e| CryptoError::Hex(e.to_string()))?;
    fixed(&raw)
}

/// A SHA-256 output.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Digest([u8; DIGEST_LEN]);

impl Digest {
    pub const ZERO: Digest = Digest([0; DIGEST_LEN]);

    pub const fn from_bytes(bytes: [u8; DIGEST_LEN]) -> Self {
        Digest(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        fixed(bytes).map(Digest)
    }

    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        fixed_hex(s).map(Digest)
    }

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    /// Lowercase, unprefixed, 64 characters.
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn short(&self) -> String {
        hex::encode(&self.0[..4])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.short())
    }
}

pub fn hash(data: &[u8]) -> Digest {
    Digest(Sha256::digest(data).into())
}

/// Hash of the concatenation of `parts`.
pub fn hash_parts(parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    Digest(h.finalize().into())
}

/// Incremental SHA-256.
#[derive(Clone, Default)]
pub struct Hasher(Sha256);

impl Hasher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, data: &[u8]) -> &mut Self {
        self.0.update(data);
        self
    }

    pub fn finish(self) -> Digest {
        Digest(self.0.finalize().into())
    }
}

/// 256-bit AES key. Never serialized into ledger state.
#[derive(Clone, PartialEq, Eq)]
pub struct SymmetricKey([u8; SYMMETRIC_KEY_LEN]);

impl SymmetricKey {
    pub fn from_bytes(bytes: [u8; SYMMETRIC_KEY_LEN]) -> Self {
        SymmetricKey(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        fixed(bytes).map(SymmetricKey)
    }

    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        fixed_hex(s).map(SymmetricKey)
    }

    pub fn as_bytes(&self) -> &[u8; SYMMETRIC_KEY_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SymmetricKey(..)")
    }
}

pub fn gen_sym_key<R: RngCore + CryptoRng>(rng: &mut R) -> SymmetricKey {
    let mut k = [0u8; SYMMETRIC_KEY_LEN];
    rng.fill_bytes(&mut k);
    SymmetricKey(k)
}

/// AES-256-GCM output. Wire layout is `nonce ‖ body ‖ tag`.
#[derive(Clone, PartialEq, Eq)]
pub struct Ciphertext {
    pub nonce: [u8; NONCE_LEN],
    pub body: Vec<u8>,
    pub auth_tag: [u8; TAG_LEN],
}

impl Ciphertext {
    pub fn to_wire(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(NONCE_LEN + self.body.len() + TAG_LEN);
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&self.body);
        out.extend_from_slice(&self.auth_tag);
        out
    }

    pub fn from_wire(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() < NONCE_LEN + TAG_LEN {
            return Err(CryptoError::Length {
                expected: NONCE_LEN + TAG_LEN,
                actual: bytes.len(),
            });
        }
        let (nonce, rest) = bytes.split_at(NONCE_LEN);
        let (body, tag) = rest.split_at(rest.len() - TAG_LEN);
        Ok(Ciphertext {
            nonce: fixed(nonce)?,
            body: body.to_vec(),
            auth_tag: fixed(tag)?,
        })
    }

    pub fn wire_len(&self) -> usize {
        NONCE_LEN + self.body.len() + TAG_LEN
    }

    /// Content address: hash of the wire bytes.
    pub fn digest(&self) -> Digest {
        hash_parts(&[&self.nonce, &self.body, &self.auth_tag])
    }
}

impl fmt::Debug for Ciphertext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Ciphertext({} bytes, {:?})", self.wire_len(), self.digest())
    }
}

/// Encrypts under a fresh random nonce drawn from `rng`.
pub fn encrypt<R: RngCore + CryptoRng>(
    key: &SymmetricKey,
    plaintext: &[u8],
    associated_data: &[u8],
    rng: &mut R,
) -> Ciphertext {
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    encrypt_with_nonce(key, nonce, plaintext, associated_data)
}

/// Caller guarantees `nonce` is never reused under `key`.
pub fn encrypt_with_nonce(
    key: &SymmetricKey,
    nonce: [u8; NONCE_LEN],
    plaintext: &[u8],
    associated_data: &[u8],
) -> Ciphertext {
    let cipher = Aes256Gcm::new(key.0.as_ref().into());
    let mut body = plaintext.to_vec();
    let tag = cipher
        .encrypt_in_place_detached(Nonce::from_slice(&nonce), associated_data, &mut body)
        .expect("AES-GCM accepts any plaintext below 64 GiB");
    Ciphertext {
        nonce,
        body,
        auth_tag: tag.into(),
    }
}

pub fn decrypt(
    key: &SymmetricKey,
    c: &Ciphertext,
    associated_data: &[u8],
) -> Result<Vec<u8>, CryptoError> {
    let cipher = Aes256Gcm::new(key.0.as_ref().into());
    let mut body = c.body.clone();
    cipher
        .decrypt_in_place_detached(
            Nonce::from_slice(&c.nonce),
            associated_data,
            &mut body,
            Tag::from_slice(&c.auth_tag),
        )
        .map_err(|_| CryptoError::Authentication)?;
    Ok(body)
}

/// Compressed SEC1 secp256k1 point. Doubles as an actor's address.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PublicKey([u8; PUBLIC_KEY_LEN]);

impl PublicKey {
    /// Accepts only encodings of valid curve points.
    pub fn from_bytes(bytes: [u8; PUBLIC_KEY_LEN]) -> Result<Self, CryptoError> {
        VerifyingKey::from_sec1_bytes(&bytes).map_err(|_| CryptoError::InvalidPublicKey)?;
        Ok(PublicKey(bytes))
    }

    /// No curve check; `verify` rejects invalid points later.
    pub fn from_bytes_unchecked(bytes: [u8; PUBLIC_KEY_LEN]) -> Self {
        PublicKey(bytes)
    }

    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        Self::from_bytes(fixed_hex(s)?)
    }

    pub fn as_bytes(&self) -> &[u8; PUBLIC_KEY_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn is_valid(&self) -> bool {
        VerifyingKey::from_sec1_bytes(&self.0).is_ok()
    }

    /// `hash(pk)`, the key under which directory and policy lookups are indexed.
    pub fn address(&self) -> Digest {
        hash(&self.0)
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", hex::encode(&self.0[..5]))
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct PrivateKey([u8; PRIVATE_KEY_LEN]);

impl PrivateKey {
    pub fn from_bytes(bytes: [u8; PRIVATE_KEY_LEN]) -> Self {
        PrivateKey(bytes)
    }

    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        fixed_hex(s).map(PrivateKey)
    }

    pub fn as_bytes(&self) -> &[u8; PRIVATE_KEY_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PrivateKey(..)")
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SigningKeyPair {
    pub public: PublicKey,
    pub private: PrivateKey,
}

impl SigningKeyPair {
    pub fn from_private(private: PrivateKey) -> Result<Self, CryptoError> {
        let sk = signing_key(&private)?;
        Ok(SigningKeyPair {
            public: public_of(&sk),
            private,
        })
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        sign(&self.private, message).expect("keypair holds a valid scalar")
    }
}

fn signing_key(private: &PrivateKey) -> Result<SigningKey, CryptoError> {
    SigningKey::from_slice(&private.0).map_err(|_| CryptoError::InvalidPrivateKey)
}

fn public_of(sk: &SigningKey) -> PublicKey {
    let point = sk.verifying_key().to_encoded_point(true);
    PublicKey(fixed(point.as_bytes()).expect("compressed point is 33 bytes"))
}

pub fn gen_sig_keypair<R: RngCore + CryptoRng>(rng: &mut R) -> SigningKeyPair {
    let sk = SigningKey::random(rng);
    SigningKeyPair {
        public: public_of(&sk),
        private: PrivateKey(sk.to_bytes().into()),
    }
}

/// ECDSA signature with `s` in the lower half of the group order.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature {
    pub r: [u8; 32],
    pub s: [u8; 32],
}

impl Signature {
    pub const EMPTY: Signature = Signature {
        r: [0; 32],
        s: [0; 32],
    };

    pub fn to_bytes(&self) -> [u8; SIGNATURE_LEN] {
        let mut out = [0u8; SIGNATURE_LEN];
        out[..32].copy_from_slice(&self.r);
        out[32..].copy_from_slice(&self.s);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let raw: [u8; SIGNATURE_LEN] = fixed(bytes)?;
        Ok(Signature {
            r: fixed(&raw[..32])?,
            s: fixed(&raw[32..])?,
        })
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_bytes())
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}..)", hex::encode(&self.r[..4]))
    }
}

/// Signs SHA-256(message) with an RFC 6979 deterministic nonce.
pub fn sign(private: &PrivateKey, message: &[u8]) -> Result<Signature, CryptoError> {
    let sk = signing_key(private)?;
    let sig: EcdsaSignature = sk.sign(message);
    let sig = sig.normalize_s().unwrap_or(sig);
    let (r, s) = sig.split_bytes();
    Ok(Signature {
        r: r.into(),
        s: s.into(),
    })
}

/// Never panics: malformed keys or signatures, and high-s encodings, yield `false`.
pub fn verify(public: &PublicKey, message: &[u8], sig: &Signature) -> bool {
    let Ok(vk) = VerifyingKey::from_sec1_bytes(&public.0) else {
        return false;
    };
    let Ok(parsed) = EcdsaSignature::from_scalars(sig.r, sig.s) else {
        return false;
    };
    if parsed.normalize_s().is_some() {
        return false;
    }
    vk.verify(message, &parsed).is_ok()
}

/// x-coordinate of `private · public`.
pub fn ecdh(private: &PrivateKey, public: &PublicKey) -> Result<[u8; 32], CryptoError> {
    let secret =
        k256::SecretKey::from_slice(&private.0).map_err(|_| CryptoError::InvalidPrivateKey)?;
    let point =
        k256::PublicKey::from_sec1_bytes(&public.0).map_err(|_| CryptoError::InvalidPublicKey)?;
    let shared = k256::ecdh::diffie_hellman(secret.to_nonzero_scalar(), point.as_affine());
    Ok((*shared.raw_secret_bytes()).into())
}
