use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::crypto::{PrivateKey, PublicKey, SigningKeyPair, SymmetricKey};
use crate::identity::{Actor, PatientIdentity, Role, StaffIdentity};

/// A local identity as stored in `keys/<id>.key`.
///
/// ```text
/// id = alice
/// role = patient
/// private = <64 hex>
/// seq = 3
/// profile =
/// shared <staff pk hex> <key hex>       # patient side
/// received <patient pk hex> <key hex>   # staff side
/// ```
#[derive(Debug, Clone)]
pub enum Identity {
    Patient(PatientIdentity),
    Staff(StaffIdentity),
}

impl Identity {
    pub fn role(&self) -> Role {
        match self {
            Identity::Patient(_) => Role::Patient,
            Identity::Staff(_) => Role::Staff,
        }
    }

    pub fn id(&self) -> &str {
        match self {
            Identity::Patient(p) => &p.patient_id,
            Identity::Staff(s) => &s.staff_id,
        }
    }

    pub fn actor(&mut self) -> &mut dyn Actor {
        match self {
            Identity::Patient(p) => p,
            Identity::Staff(s) => s,
        }
    }

    pub fn public_key(&self) -> PublicKey {
        match self {
            Identity::Patient(p) => p.keys.public,
            Identity::Staff(s) => s.keys.public,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let (keys, seq, profile) = match self {
            Identity::Patient(p) => (&p.keys, p.last_seq, ""),
            Identity::Staff(s) => (&s.keys, s.last_seq, s.profile.as_str()),
        };
        let _ = writeln!(out, "id = {}", self.id());
        let _ = writeln!(out, "role = {}", self.role());
        let _ = writeln!(out, "private = {}", keys.private.to_hex());
        let _ = writeln!(out, "seq = {seq}");
        let _ = writeln!(out, "profile = {profile}");
        match self {
            Identity::Patient(p) => {
                for (pk, k) in &p.shared_keys {
                    let _ = writeln!(out, "shared {} {}", pk.to_hex(), k.to_hex());
                }
            }
            Identity::Staff(s) => {
                for (pk, k) in &s.received_keys {
                    let _ = writeln!(out, "received {} {}", pk.to_hex(), k.to_hex());
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Identity, String> {
        let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
        let mut keys: Vec<(PublicKey, SymmetricKey)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = |what: &str| format!("line {}: {what}", i + 1);
            if let Some(rest) = line.strip_prefix("shared ").or_else(|| line.strip_prefix("received ")) {
                let (pk, k) = rest.split_once(' ').ok_or_else(|| bad("expected `<pk> <key>`"))?;
                let pk = PublicKey::from_hex(pk.trim()).map_err(|_| bad("bad public key"))?;
                let k = SymmetricKey::from_hex(k.trim()).map_err(|_| bad("bad symmetric key"))?;
                keys.push((pk, k));
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| bad("expected `key = value`"))?;
            fields.insert(k.trim(), v.trim());
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| format!("missing `{k}`"));
        let id = get("id")?.to_string();
        let role: Role = get("role")?.parse()?;
        let private = PrivateKey::from_hex(get("private")?).map_err(|e| e.to_string())?;
        let keys_pair = SigningKeyPair::from_private(private).map_err(|e| e.to_string())?;
        let last_seq: u64 = get("seq")?.parse().map_err(|_| "bad `seq`".to_string())?;
        let profile = fields.get("profile").copied().unwrap_or("").to_string();
        Ok(match role {
            Role::Patient => Identity::Patient(PatientIdentity {
                patient_id: id,
                keys: keys_pair,
                shared_keys: keys.into_iter().collect(),
                last_seq,
            }),
            Role::Staff => Identity::Staff(StaffIdentity {
                staff_id: id,
                keys: keys_pair,
                received_keys: keys.into_iter().collect(),
                profile,
                last_seq,
            }),
        })
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    use super::*;
    use crate::crypto::gen_sym_key;
    use crate::identity::{join_patient, join_staff};

    #[test]
    fn round_trips() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let (mut p, _) = join_patient("alice", &mut rng);
        let (mut s, _) = join_staff("bob", "cardiology", &mut rng);
        let k = gen_sym_key(&mut rng);
        p.shared_keys.insert(s.keys.public, k.clone());
        s.received_keys.insert(p.keys.public, k);
        p.last_seq = 4;
        for id in [Identity::Patient(p), Identity::Staff(s)] {
            let back = Identity::from_text(&id.to_text()).unwrap();
            assert_eq!(back.to_text(), id.to_text());
        }
        assert!(Identity::from_text("id = x\nrole = patient\n").is_err());
    }
}
