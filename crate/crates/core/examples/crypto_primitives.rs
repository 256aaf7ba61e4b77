//! Hashing, authenticated encryption, signatures and ECDH.
//!
//! ```bash
//! cargo run --example crypto_primitives
//! ```

use medchain::crypto::{decrypt, ecdh, encrypt, gen_sig_keypair, gen_sym_key, hash, sign, verify};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn main() {
    let mut rng = ChaCha20Rng::seed_from_u64(2024);

    println!("sha256(\"abc\") = {}", hash(b"abc"));

    let key = gen_sym_key(&mut rng);
    let c = encrypt(&key, b"hba1c 5.4%", b"lab", &mut rng);
    println!("ciphertext {} bytes on the wire, content address {}", c.wire_len(), c.digest().short());
    let plain = decrypt(&key, &c, b"lab").expect("right key and label");
    println!("decrypts to {:?}", String::from_utf8_lossy(&plain));
    println!("wrong label rejected: {}", decrypt(&key, &c, b"notes").is_err());

    let alice = gen_sig_keypair(&mut rng);
    let sig = sign(&alice.private, b"grant bp").unwrap();
    println!("signature {}…", &sig.to_hex()[..32]);
    println!("verifies: {}", verify(&alice.public, b"grant bp", &sig));
    println!("altered message verifies: {}", verify(&alice.public, b"grant all", &sig));

    let bob = gen_sig_keypair(&mut rng);
    let ab = ecdh(&alice.private, &bob.public).unwrap();
    let ba = ecdh(&bob.private, &alice.public).unwrap();
    println!("ECDH agrees: {}", ab == ba);
}
