//! Random access-control scripts, a brute-force reference evaluator, and a
//! driver that feeds the same script to [`LedgerState`].
//!
//! The reference keeps nothing but the log: every decision rescans all
//! earlier entries.

use std::collections::BTreeSet;

use medchain::crypto::{encrypt, hash, Digest, Signature, SigningKeyPair, SymmetricKey};
use medchain::identity::Role;
use medchain::ledger::{
    AccessPayload, DataContent, DataPayload, LedgerState, Payload, Policy, RegisterPayload, Transaction,
    TxRejection,
};
use proptest::prelude::*;
use rand::{Rng, RngCore};

pub const TYPES: [&str; 6] = ["bp", "glucose", "ecg", "lab", "imaging", "notes"];
pub const MAX_ACTORS: usize = 10;
pub const MAX_OPS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Population {
    pub patients: usize,
    pub staff: usize,
    pub types: usize,
}

impl Population {
    pub fn actors(&self) -> usize {
        self.patients + self.staff
    }

    pub fn role(&self, actor: usize) -> Role {
        if actor < self.patients {
            Role::Patient
        } else {
            Role::Staff
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadTarget {
    /// The n-th earlier write for the same patient and type (mod count).
    Matching(usize),
    /// The n-th earlier write of any kind (mod count).
    AnyWrite(usize),
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Op {
    Register { actor: usize },
    /// Bit i of `types` selects `TYPES[i]`; zero revokes.
    Grant { signer: usize, patient: usize, staff: usize, types: u8 },
    Write { signer: usize, patient: usize, ty: usize },
    Read { reader: usize, patient: usize, ty: usize, target: ReadTarget },
    /// Resubmits an earlier transaction unchanged.
    Replay { back: usize },
}

#[derive(Debug, Clone)]
pub struct Script {
    pub pop: Population,
    pub ops: Vec<Op>,
}

/// Maps six raw bytes to an operation, biased towards well-formed requests.
pub fn decode_op(b: [u8; 6], pop: Population) -> Op {
    let n = pop.actors();
    let patient = if b[3] % 10 < 9 { b[3] as usize % pop.patients } else { b[3] as usize % n };
    let ty = b[5] as usize % pop.types;
    match b[0] % 100 {
        0..=4 => Op::Register { actor: b[1] as usize % n },
        5..=29 => Op::Grant {
            signer: if b[1] % 5 == 0 { b[2] as usize % n } else { patient },
            patient,
            staff: if b[4] % 10 < 9 { pop.patients + b[4] as usize % pop.staff } else { b[4] as usize % n },
            types: if b[5] % 10 < 3 { 0 } else { (b[2] ^ b[5]) & ((1u8 << pop.types) - 1) },
        },
        30..=49 => Op::Write {
            signer: if b[1] % 6 == 0 { b[2] as usize % n } else { patient },
            patient,
            ty,
        },
        50..=94 => Op::Read {
            reader: if b[1] % 10 < 7 { pop.patients + b[2] as usize % pop.staff } else { b[2] as usize % n },
            patient,
            ty,
            target: match b[4] % 4 {
                0 => ReadTarget::Unknown,
                3 => ReadTarget::AnyWrite(b[2] as usize),
                _ => ReadTarget::Matching(b[1] as usize),
            },
        },
        _ => Op::Replay { back: b[1] as usize },
    }
}

/// `prereg` bit i registers actor i before the random operations.
pub fn build_script(pop: Population, prereg: u16, raw: &[[u8; 6]]) -> Script {
    let mut ops: Vec<Op> = (0..pop.actors())
        .filter(|i| prereg >> i & 1 == 1)
        .map(|actor| Op::Register { actor })
        .collect();
    let room = MAX_OPS.saturating_sub(ops.len());
    ops.extend(raw.iter().take(room).map(|b| decode_op(*b, pop)));
    Script { pop, ops }
}

pub fn random_script<R: Rng>(rng: &mut R) -> Script {
    let pop = Population {
        patients: rng.gen_range(1..=5),
        staff: rng.gen_range(1..=5),
        types: rng.gen_range(1..=6),
    };
    // Mostly registered up front; some actors join later or never.
    let prereg = rng.gen::<u16>() | rng.gen::<u16>();
    let len = rng.gen_range(1..=MAX_OPS);
    let raw: Vec<[u8; 6]> = (0..len).map(|_| rng.gen()).collect();
    build_script(pop, prereg, &raw)
}

pub fn script_strategy() -> impl Strategy<Value = Script> {
    (1..=5usize, 1..=5usize, 1..=6usize, any::<u16>(), prop::collection::vec(any::<[u8; 6]>(), 1..MAX_OPS)).prop_map(
        |(patients, staff, types, prereg, raw)| {
            build_script(Population { patients, staff, types }, prereg, &raw)
        },
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Accepted,
    Stale,
    AlreadyRegistered,
    UnknownSender,
    NotPolicyOwner,
    InvalidParty,
    Denied,
    WriteByNonOwner,
    NotIndexed,
    Other(String),
}

impl From<&Result<medchain::ledger::TxEffect, TxRejection>> for Verdict {
    fn from(r: &Result<medchain::ledger::TxEffect, TxRejection>) -> Self {
        match r {
            Ok(_) => Verdict::Accepted,
            Err(TxRejection::StaleSeq { .. }) => Verdict::Stale,
            Err(TxRejection::AlreadyRegistered) => Verdict::AlreadyRegistered,
            Err(TxRejection::UnknownSender) => Verdict::UnknownSender,
            Err(TxRejection::NotPolicyOwner) => Verdict::NotPolicyOwner,
            Err(TxRejection::InvalidParty) => Verdict::InvalidParty,
            Err(TxRejection::PolicyDenied) => Verdict::Denied,
            Err(TxRejection::WriteByNonOwner) => Verdict::WriteByNonOwner,
            Err(TxRejection::NotIndexed) => Verdict::NotIndexed,
            Err(other) => Verdict::Other(other.to_string()),
        }
    }
}

/// A transaction as the reference sees it: actor indices, type indices,
/// and writes named by their position in the script.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Body {
    Register(Role),
    Grant { patient: usize, staff: usize, types: BTreeSet<usize> },
    Write { patient: usize, ty: usize, id: usize },
    Read { patient: usize, ty: usize, target: Option<usize> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub sender: usize,
    pub seq: u64,
    pub body: Body,
}

/// Decides `e` from the log of earlier entries and their decisions.
pub fn reference_verdict(log: &[(Entry, Verdict)], e: &Entry) -> Verdict {
    let accepted = || log.iter().filter(|(_, v)| *v == Verdict::Accepted).map(|(x, _)| x);
    let last_seq = accepted().filter(|x| x.sender == e.sender).map(|x| x.seq).max().unwrap_or(0);
    if e.seq <= last_seq {
        return Verdict::Stale;
    }
    let role_of = |a: usize| {
        accepted().find_map(|x| match x.body {
            Body::Register(r) if x.sender == a => Some(r),
            _ => None,
        })
    };
    if let Body::Register(_) = e.body {
        return if role_of(e.sender).is_some() {
            Verdict::AlreadyRegistered
        } else {
            Verdict::Accepted
        };
    }
    if role_of(e.sender).is_none() {
        return Verdict::UnknownSender;
    }
    let may_access = |requester: usize, patient: usize, ty: usize| {
        if requester == patient {
            return role_of(patient) == Some(Role::Patient);
        }
        let mut latest = None;
        for x in accepted() {
            if let Body::Grant { patient: p, staff: s, types } = &x.body {
                if *p == patient && *s == requester {
                    latest = Some(types);
                }
            }
        }
        latest.is_some_and(|t| t.contains(&ty))
    };
    match &e.body {
        Body::Register(_) => unreachable!(),
        Body::Grant { patient, staff, .. } => {
            if e.sender != *patient {
                Verdict::NotPolicyOwner
            } else if role_of(*patient) != Some(Role::Patient) || role_of(*staff) != Some(Role::Staff) {
                Verdict::InvalidParty
            } else {
                Verdict::Accepted
            }
        }
        Body::Write { patient, ty, .. } => {
            if !may_access(e.sender, *patient, *ty) {
                Verdict::Denied
            } else if e.sender != *patient {
                Verdict::WriteByNonOwner
            } else {
                Verdict::Accepted
            }
        }
        Body::Read { patient, ty, target } => {
            if !may_access(e.sender, *patient, *ty) {
                return Verdict::Denied;
            }
            let indexed = target.is_some_and(|id| {
                accepted().any(|x| {
                    matches!(x.body, Body::Write { patient: p, ty: t, id: w } if w == id && p == *patient && t == *ty)
                })
            });
            if indexed {
                Verdict::Accepted
            } else {
                Verdict::NotIndexed
            }
        }
    }
}

/// Every script entry with the system's verdict for it.
pub struct SystemRun {
    pub entries: Vec<Entry>,
    pub verdicts: Vec<Verdict>,
    pub txs: Vec<Transaction>,
    pub bad_signatures: usize,
    pub state: LedgerState,
}

/// Feeds `script` to a fresh [`LedgerState`]. With `sign` every transaction
/// carries a real signature, which is also verified.
pub fn run_system<R: RngCore + rand::CryptoRng>(
    script: &Script,
    keys: &[SigningKeyPair],
    sign: bool,
    rng: &mut R,
) -> SystemRun {
    let pop = script.pop;
    assert!(keys.len() >= pop.actors());
    let record_key = SymmetricKey::from_bytes([7; 32]);
    let mut seqs = vec![0u64; pop.actors()];
    let mut state = LedgerState::genesis();
    let mut run = SystemRun {
        entries: Vec::new(),
        verdicts: Vec::new(),
        txs: Vec::new(),
        bad_signatures: 0,
        state: LedgerState::genesis(),
    };
    // (patient, ty, id, digest) for every write produced so far.
    let mut writes: Vec<(usize, usize, usize, Digest)> = Vec::new();
    for (i, op) in script.ops.iter().enumerate() {
        let mut issue = |sender: usize, payload: Payload| {
            seqs[sender] += 1;
            let seq = seqs[sender];
            let tx = if sign {
                Transaction::new_signed(&keys[sender], seq, payload)
            } else {
                Transaction {
                    sender: keys[sender].public,
                    seq,
                    payload,
                    signature: Signature::EMPTY,
                }
            };
            (sender, seq, tx)
        };
        let (sender, seq, tx, body) = match *op {
            Op::Register { actor } => {
                let role = pop.role(actor);
                let (s, q, tx) = issue(actor, Payload::Register(RegisterPayload { role, profile: String::new() }));
                (s, q, tx, Body::Register(role))
            }
            Op::Grant { signer, patient, staff, types } => {
                let set: BTreeSet<usize> = (0..pop.types).filter(|t| types >> t & 1 == 1).collect();
                let policy = Policy::new(keys[patient].public, keys[staff].public, set.iter().map(|&t| TYPES[t]));
                let (s, q, tx) = issue(signer, Payload::Access(AccessPayload::from_policy(policy)));
                (s, q, tx, Body::Grant { patient, staff, types: set })
            }
            Op::Write { signer, patient, ty } => {
                let mut record = [0u8; 16];
                rng.fill_bytes(&mut record);
                let c = encrypt(&record_key, &record, TYPES[ty].as_bytes(), rng);
                writes.push((patient, ty, i, c.digest()));
                let payload = Payload::Data(DataPayload {
                    patient: keys[patient].public,
                    data_type: TYPES[ty].to_string(),
                    content: DataContent::Write(c),
                });
                let (s, q, tx) = issue(signer, payload);
                (s, q, tx, Body::Write { patient, ty, id: i })
            }
            Op::Read { reader, patient, ty, target } => {
                let chosen = match target {
                    ReadTarget::Matching(k) => {
                        let m: Vec<_> = writes.iter().filter(|w| w.0 == patient && w.1 == ty).collect();
                        (!m.is_empty()).then(|| m[k % m.len()])
                    }
                    ReadTarget::AnyWrite(k) => (!writes.is_empty()).then(|| &writes[k % writes.len()]),
                    ReadTarget::Unknown => None,
                };
                let (digest, id) = match chosen {
                    Some(w) => (w.3, Some(w.2)),
                    None => (hash(&rng.gen::<[u8; 16]>()), None),
                };
                let payload = Payload::Data(DataPayload {
                    patient: keys[patient].public,
                    data_type: TYPES[ty].to_string(),
                    content: DataContent::Read(digest),
                });
                let (s, q, tx) = issue(reader, payload);
                (s, q, tx, Body::Read { patient, ty, target: id })
            }
            Op::Replay { back } => {
                if run.txs.is_empty() {
                    continue;
                }
                let k = run.txs.len() - 1 - back % run.txs.len();
                let e = run.entries[k].clone();
                (e.sender, e.seq, run.txs[k].clone(), e.body)
            }
        };
        if sign && !tx.verify_signature() {
            run.bad_signatures += 1;
        }
        let verdict = Verdict::from(&state.apply(&tx));
        run.entries.push(Entry { sender, seq, body });
        run.verdicts.push(verdict);
        run.txs.push(tx);
    }
    run.state = state;
    run
}

/// Indices where the system and the reference disagree.
pub fn mismatches(run: &SystemRun) -> Vec<(usize, Verdict, Verdict)> {
    let mut log: Vec<(Entry, Verdict)> = Vec::with_capacity(run.entries.len());
    let mut out = Vec::new();
    for (i, e) in run.entries.iter().enumerate() {
        let want = reference_verdict(&log, e);
        if want != run.verdicts[i] {
            out.push((i, run.verdicts[i].clone(), want.clone()));
        }
        log.push((e.clone(), want));
    }
    out
}

/// Staff reads granted after an accepted empty-set policy and before any
/// later non-empty one. Returns (reads checked, reads wrongly accepted).
pub fn revocation_violations(run: &SystemRun) -> (usize, usize) {
    let mut revoked: BTreeSet<(usize, usize)> = BTreeSet::new();
    let (mut checked, mut violations) = (0, 0);
    for (e, v) in run.entries.iter().zip(&run.verdicts) {
        match &e.body {
            Body::Grant { patient, staff, types } if *v == Verdict::Accepted => {
                if types.is_empty() {
                    revoked.insert((*patient, *staff));
                } else {
                    revoked.remove(&(*patient, *staff));
                }
            }
            Body::Read { patient, .. } if revoked.contains(&(*patient, e.sender)) => {
                checked += 1;
                if *v == Verdict::Accepted {
                    violations += 1;
                }
            }
            _ => {}
        }
    }
    (checked, violations)
}

pub fn key_pool(seed: u64) -> Vec<SigningKeyPair> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    (0..MAX_ACTORS).map(|_| medchain::crypto::gen_sig_keypair(&mut rng)).collect()
}
