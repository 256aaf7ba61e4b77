//! Published known-answer vectors.

/// (message, SHA-256 hex). NIST FIPS 180-2 examples; the last is one million `a`.
pub fn sha256_vectors() -> Vec<(Vec<u8>, &'static str)> {
    vec![
        (b"".to_vec(), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"),
        (b"abc".to_vec(), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"),
        (
            b"abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq".to_vec(),
            "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1",
        ),
        (
            b"abcdefghbcdefghicdefghijdefghijkefghijklfghijklmghijklmnhijklmnoijklmnopjklmnopqklmnopqrlmnopqrsmnopqrstnopqrstu".to_vec(),
            "cf5b16a778af8380036ce59e7b0492370b249b11e8f07a51afac45037afee9d1",
        ),
        (vec![b'a'; 1_000_000], "cdc76e5c9914fb9281a1c7e284d73e67f1809a48a497200e046d39ccc7112cd0"),
    ]
}

pub struct GcmVector {
    pub name: &'static str,
    pub key: &'static str,
    pub iv: &'static str,
    pub plaintext: &'static str,
    pub aad: &'static str,
    pub ciphertext: &'static str,
    pub tag: &'static str,
}

const GCM_KEY: &str = "feffe9928665731c6d6a8f9467308308feffe9928665731c6d6a8f9467308308";
const GCM_PT: &str = "d9313225f88406e5a55909c5aff5269a86a7a9531534f7da2e4c303d8a318a721c3c0c95956809532fcf0e2449a6b525b16aedf5aa0de657ba637b391aafd255";

/// AES-256-GCM test cases 13-16 from the GCM specification (McGrew and Viega).
pub fn gcm_vectors() -> Vec<GcmVector> {
    vec![
        GcmVector {
            name: "gcm-13",
            key: "0000000000000000000000000000000000000000000000000000000000000000",
            iv: "000000000000000000000000",
            plaintext: "",
            aad: "",
            ciphertext: "",
            tag: "530f8afbc74536b9a963b4f1c4cb738b",
        },
        GcmVector {
            name: "gcm-14",
            key: "0000000000000000000000000000000000000000000000000000000000000000",
            iv: "000000000000000000000000",
            plaintext: "00000000000000000000000000000000",
            aad: "",
            ciphertext: "cea7403d4d606b6e074ec5d3baf39d18",
            tag: "d0d1c8a799996bf0265b98b5d48ab919",
        },
        GcmVector {
            name: "gcm-15",
            key: GCM_KEY,
            iv: "cafebabefacedbaddecaf888",
            plaintext: GCM_PT,
            aad: "",
            ciphertext: "522dc1f099567d07f47f37a32a84427d643a8cdcbfe5c0c97598a2bd2555d1aa8cb08e48590dbb3da7b08b1056828838c5f61e6393ba7a0abcc9f662898015ad",
            tag: "b094dac5d93471bdec1a502270e3cc6c",
        },
        GcmVector {
            name: "gcm-16",
            key: GCM_KEY,
            iv: "cafebabefacedbaddecaf888",
            plaintext: "d9313225f88406e5a55909c5aff5269a86a7a9531534f7da2e4c303d8a318a721c3c0c95956809532fcf0e2449a6b525b16aedf5aa0de657ba637b39",
            aad: "feedfacedeadbeeffeedfacedeadbeefabaddad2",
            ciphertext: "522dc1f099567d07f47f37a32a84427d643a8cdcbfe5c0c97598a2bd2555d1aa8cb08e48590dbb3da7b08b1056828838c5f61e6393ba7a0abcc9f662",
            tag: "76fc6ece0f4e1768cddf8853bb2d551b",
        },
    ]
}

pub struct EcdsaVector {
    pub private: &'static str,
    pub public: &'static str,
    pub message: &'static str,
    pub r: &'static str,
    pub s: &'static str,
}

/// secp256k1, SHA-256, RFC 6979 nonces, low-s form.
pub fn ecdsa_vectors() -> Vec<EcdsaVector> {
    vec![
        EcdsaVector {
            private: "0000000000000000000000000000000000000000000000000000000000000001",
            public: "0279be667ef9dcbbac55a06295ce870b07029bfcdb2dce28d959f2815b16f81798",
            message: "Satoshi Nakamoto",
            r: "934b1ea10a4b3c1757e2b0c017d0b6143ce3c9a7e6a4a49860d7a6ab210ee3d8",
            s: "2442ce9d2b916064108014783e923ec36b49743e2ffa1c4496f01a512aafd9e5",
        },
        EcdsaVector {
            private: "0000000000000000000000000000000000000000000000000000000000000001",
            public: "0279be667ef9dcbbac55a06295ce870b07029bfcdb2dce28d959f2815b16f81798",
            message: "All those moments will be lost in time, like tears in rain. Time to die...",
            r: "8600dbd41e348fe5c9465ab92d23e3db8b98b873beecd930736488696438cb6b",
            s: "547fe64427496db33bf66019dacbf0039c04199abb0122918601db38a72cfc21",
        },
        EcdsaVector {
            private: "fffffffffffffffffffffffffffffffebaaedce6af48a03bbfd25e8cd0364140",
            public: "0379be667ef9dcbbac55a06295ce870b07029bfcdb2dce28d959f2815b16f81798",
            message: "Satoshi Nakamoto",
            r: "fd567d121db66e382991534ada77a6bd3106f0a1098c231e47993447cd6af2d0",
            s: "6b39cd0eb1bc8603e159ef5c20a5c8ad685a45b06ce9bebed3f153d10d93bed5",
        },
        EcdsaVector {
            private: "f8b8af8ce3c7cca5e300d33939540c10d45ce001b8f252bfbc57ba0342904181",
            public: "0292df7b245b81aa637ab4e867c8d511008f79161a97d64f2ac709600352f7acbc",
            message: "Alan Turing",
            r: "7063ae83e7f62bbb171798131b4a0564b956930092b33b07b395615d9ec7e15c",
            s: "58dfcc1e00a35e1572f366ffe34ba0fc47db1e7189759b9fb233c5b05ab388ea",
        },
        EcdsaVector {
            private: "e91671c46231f833a6406ccbea0e3e392c76c167bac1cb013f6f1013980455c2",
            public: "03567b7512001f3cc4dcb8b8096c046fff571ab07adb2126cd42908f2ff1ca424a",
            message: "There is a computer disease that anybody who works with computers knows about. It's a very serious disease and it interferes completely with the work. The trouble with computers is that you 'play' with them!",
            r: "b552edd27580141f3b2a5463048cb7cd3e047b97c9f98076c32dbdf85a68718b",
            s: "279fa72dd19bfae05577e06c7c0c1900c371fcd5893f7e1d56a37d30174671f6",
        },
    ]
}

/// Runs every vector against the library; returns the names that failed.
pub fn run_all() -> Vec<String> {
    use medchain::crypto::{
        decrypt, encrypt_with_nonce, hash, sign, verify, Ciphertext, PrivateKey, SigningKeyPair,
        SymmetricKey,
    };
    let mut failed = Vec::new();
    for (i, (msg, want)) in sha256_vectors().iter().enumerate() {
        if hash(msg).to_hex() != *want {
            failed.push(format!("sha256-{i}"));
        }
    }
    for v in gcm_vectors() {
        let key = SymmetricKey::from_hex(v.key).unwrap();
        let iv: [u8; 12] = hex::decode(v.iv).unwrap().try_into().unwrap();
        let pt = hex::decode(v.plaintext).unwrap();
        let aad = hex::decode(v.aad).unwrap();
        let c = encrypt_with_nonce(&key, iv, &pt, &aad);
        let mut ok = hex::encode(&c.body) == v.ciphertext && hex::encode(c.auth_tag) == v.tag;
        let wire = [iv.to_vec(), hex::decode(v.ciphertext).unwrap(), hex::decode(v.tag).unwrap()].concat();
        ok &= Ciphertext::from_wire(&wire).ok().and_then(|c| decrypt(&key, &c, &aad).ok()) == Some(pt);
        if !ok {
            failed.push(v.name.to_string());
        }
    }
    for (i, v) in ecdsa_vectors().iter().enumerate() {
        let private = PrivateKey::from_hex(v.private).unwrap();
        let kp = SigningKeyPair::from_private(private.clone()).unwrap();
        let sig = sign(&private, v.message.as_bytes()).unwrap();
        let ok = kp.public.to_hex() == v.public
            && hex::encode(sig.r) == v.r
            && hex::encode(sig.s) == v.s
            && verify(&kp.public, v.message.as_bytes(), &sig);
        if !ok {
            failed.push(format!("ecdsa-{i}"));
        }
    }
    failed
}
