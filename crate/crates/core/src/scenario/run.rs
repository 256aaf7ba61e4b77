use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::privacy::{privacy_scan, Artifact};
use super::{Action, Outcome, Scenario, ScenarioError};
use crate::crypto::{gen_sig_keypair, Digest, PublicKey};
use crate::identity::{
    join_patient, join_staff, open_envelope, share_sym_key, Actor, PatientIdentity, Role, StaffIdentity,
};
use crate::ledger::{
    encode_chain, replay, AccessPayload, DataContent, Payload, Policy, RegisterPayload, Transaction, TxRejection,
};
use crate::sim::{replica_keys, Fault, Simulation, SubmitOutcome, Trace, TxStatus};
use crate::store::Holder;

/// Metric names accepted by `expect`.
pub const METRICS: &[&str] = &[
    "ticks",
    "height",
    "view_changes",
    "committed_txs",
    "rejected_txs",
    "honest_committed_pct",
    "mean_latency",
    "latency_ratio",
    "rate_limited",
    "max_window_accepts",
    "roster_rejections",
    "rejected_blocks",
    "misbehavior",
    "safety_violations",
    "replay_mismatches",
    "privacy_leaks",
    "tamper_reports",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub line: usize,
    pub text: String,
    pub passed: bool,
    pub actual: String,
}

#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub name: String,
    pub seed: u64,
    pub checks: Vec<Check>,
    /// `(line, action, outcome)` for every action that has one.
    pub outcomes: Vec<(usize, String, Outcome)>,
    pub metrics: Vec<(&'static str, f64)>,
    pub trace: Trace,
    pub state_digest: Digest,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "scenario {} (seed {})", self.name, self.seed);
        for (line, text, outcome) in &self.outcomes {
            let _ = writeln!(out, "  {line:>4}  {text:<56} {outcome}");
        }
        let _ = writeln!(out, "checks");
        for c in &self.checks {
            let verdict = if c.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(out, "  {:>4}  {:<56} {verdict} ({})", c.line, c.text, c.actual);
        }
        let _ = writeln!(out, "metrics");
        for (name, v) in &self.metrics {
            let _ = writeln!(out, "  {name:<22} {}", fmt_num(*v));
        }
        let _ = writeln!(out, "trace {} records, hash {}", self.trace.len(), self.trace.hash());
        let _ = writeln!(out, "state {}", self.state_digest);
        let passed = self.checks.iter().filter(|c| c.passed).count();
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "result {verdict} ({passed}/{} checks)", self.checks.len());
        out
    }

    /// One record per line: `outcome`, `check`, `metric`, `trace`, `result`.
    pub fn render_lines(&self) -> String {
        let mut out = String::new();
        for (line, text, outcome) in &self.outcomes {
            let _ = writeln!(out, "outcome {line} {outcome} {text}");
        }
        for c in &self.checks {
            let verdict = if c.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(out, "check {} {verdict} {} {}", c.line, c.actual, c.text);
        }
        for (name, v) in &self.metrics {
            let _ = writeln!(out, "metric {name} {}", fmt_num(*v));
        }
        let _ = writeln!(out, "trace {} {}", self.trace.len(), self.trace.hash());
        let _ = writeln!(out, "state {}", self.state_digest);
        let _ = writeln!(out, "result {}", if self.passed() { "PASS" } else { "FAIL" });
        out
    }
}

fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:.3}")
    }
}

pub fn run_scenario(sc: &Scenario) -> Result<ScenarioReport, ScenarioError> {
    run_scenario_with(sc, &mut |_| {})
}

/// Runs `sc`, calling `progress` once per action.
pub fn run_scenario_with(sc: &Scenario, progress: &mut dyn FnMut(&str)) -> Result<ScenarioReport, ScenarioError> {
    let mut r = Runner::new(sc, false)?;
    r.run(progress)?;
    Ok(r.report())
}

enum Who {
    Patient,
    Staff,
}

struct Runner<'a> {
    sc: &'a Scenario,
    sim: Simulation,
    rng: ChaCha20Rng,
    patients: BTreeMap<String, PatientIdentity>,
    staff: BTreeMap<String, StaffIdentity>,
    last: Option<Outcome>,
    writes: BTreeMap<(String, String), Digest>,
    plaintexts: Vec<Vec<u8>>,
    tamper_reports: u64,
    checks: Vec<Check>,
    outcomes: Vec<(usize, String, Outcome)>,
    skip_floods: bool,
    baseline_latency: Option<f64>,
}

impl<'a> Runner<'a> {
    fn new(sc: &'a Scenario, skip_floods: bool) -> Result<Self, ScenarioError> {
        let sim = Simulation::new(sc.config.clone()).map_err(|e| ScenarioError::Parse {
            line: 0,
            reason: e.to_string(),
        })?;
        Ok(Runner {
            sc,
            sim,
            rng: ChaCha20Rng::seed_from_u64(sc.config.seed ^ 0x6163_746f_7273_2121),
            patients: BTreeMap::new(),
            staff: BTreeMap::new(),
            last: None,
            writes: BTreeMap::new(),
            plaintexts: Vec::new(),
            tamper_reports: 0,
            checks: Vec::new(),
            outcomes: Vec::new(),
            skip_floods,
            baseline_latency: None,
        })
    }

    fn run(&mut self, progress: &mut dyn FnMut(&str)) -> Result<(), ScenarioError> {
        for step in &self.sc.steps {
            let err = |reason: String| ScenarioError::Script { line: step.line, reason };
            let outcome = match &step.action {
                Action::Register { id, role, profile } => Some(self.register(id, *role, profile)),
                Action::Client { id } => {
                    self.sim.add_client(id);
                    None
                }
                Action::Share { patient, staff } => Some(self.share(patient, staff).map_err(err)?),
                Action::Grant {
                    signer,
                    patient,
                    staff,
                    types,
                } => {
                    let tx = self.grant_tx(signer, patient, staff, types).map_err(err)?;
                    Some(self.submit_wait(signer, tx))
                }
                Action::Revoke { patient, staff } => {
                    let tx = self.grant_tx(patient, patient, staff, &[]).map_err(err)?;
                    Some(self.submit_wait(patient, tx))
                }
                Action::Write {
                    patient,
                    staff,
                    data_type,
                    text,
                } => Some(self.write(patient, staff, data_type, text).map_err(err)?),
                Action::Read {
                    reader,
                    patient,
                    data_type,
                } => Some(self.read(reader, patient, data_type).map_err(err)?),
                Action::Load { client, count, every } => Some(self.load(client, *count, *every)),
                Action::Fault(f) => {
                    if !(self.skip_floods && matches!(f, Fault::Flood { .. })) {
                        self.sim.inject_fault(f.clone()).map_err(|e| err(e.to_string()))?;
                    }
                    None
                }
                Action::Wait(t) => {
                    self.sim.run_for(*t);
                    None
                }
                Action::ExpectOutcome(want) => {
                    if !self.skip_floods {
                        let actual = self.last.map_or("none".to_string(), |o| o.to_string());
                        self.checks.push(Check {
                            line: step.line,
                            text: step.text.clone(),
                            passed: self.last == Some(*want),
                            actual,
                        });
                    }
                    None
                }
                Action::Expect { metric, op, value } => {
                    if !self.skip_floods {
                        let v = self.metric(metric);
                        self.checks.push(Check {
                            line: step.line,
                            text: step.text.clone(),
                            passed: op.holds(v, *value),
                            actual: fmt_num(v),
                        });
                    }
                    None
                }
            };
            if let Some(o) = outcome {
                self.last = Some(o);
                self.outcomes.push((step.line, step.text.clone(), o));
                progress(&format!("[tick {}] {} -> {o}", self.sim.now(), step.text));
            } else {
                progress(&format!("[tick {}] {}", self.sim.now(), step.text));
            }
        }
        Ok(())
    }

    fn report(&mut self) -> ScenarioReport {
        let has_flood = self
            .sc
            .steps
            .iter()
            .any(|s| matches!(s.action, Action::Fault(Fault::Flood { .. })));
        let metrics = super::METRICS
            .iter()
            .filter(|m| **m != "latency_ratio" || has_flood)
            .map(|m| (*m, self.metric(m)))
            .collect();
        let state_digest = self
            .sim
            .leading_replica()
            .map_or(Digest::ZERO, |r| r.state().digest());
        ScenarioReport {
            name: self.sc.name.clone(),
            seed: self.sc.config.seed,
            checks: std::mem::take(&mut self.checks),
            outcomes: std::mem::take(&mut self.outcomes),
            metrics,
            trace: self.sim.trace().clone(),
            state_digest,
        }
    }

    // ---- actions ----

    fn who(&self, id: &str) -> Result<Who, String> {
        if self.patients.contains_key(id) {
            Ok(Who::Patient)
        } else if self.staff.contains_key(id) {
            Ok(Who::Staff)
        } else {
            Err(format!("`{id}` has no ledger identity"))
        }
    }

    fn public_key(&self, id: &str) -> Result<PublicKey, String> {
        Ok(match self.who(id)? {
            Who::Patient => self.patients[id].public_key(),
            Who::Staff => self.staff[id].public_key(),
        })
    }

    fn sign(&mut self, id: &str, payload: Payload) -> Result<Transaction, String> {
        Ok(match self.who(id)? {
            Who::Patient => self.patients.get_mut(id).expect("checked").sign_tx(payload),
            Who::Staff => self.staff.get_mut(id).expect("checked").sign_tx(payload),
        })
    }

    fn register(&mut self, id: &str, role: Role, profile: &str) -> Outcome {
        let tx = match role {
            Role::Patient => {
                let (p, tx) = join_patient(id, &mut self.rng);
                self.patients.insert(id.to_string(), p);
                tx
            }
            Role::Staff => {
                let (s, tx) = join_staff(id, profile, &mut self.rng);
                self.staff.insert(id.to_string(), s);
                tx
            }
        };
        self.sim.add_client(id);
        self.submit_wait(id, tx)
    }

    fn share(&mut self, patient: &str, staff: &str) -> Result<Outcome, String> {
        let staff_pk = self.public_key(staff)?;
        let Some(leader) = self.sim.leading_replica() else {
            return Ok(Outcome::Rejected);
        };
        let directory = leader.state().directory().clone();
        let p = self
            .patients
            .get_mut(patient)
            .ok_or_else(|| format!("`{patient}` is not a patient"))?;
        let Ok(env) = share_sym_key(p, staff_pk, &directory, &mut self.rng) else {
            return Ok(Outcome::Rejected);
        };
        let s = self.staff.get_mut(staff).ok_or_else(|| format!("`{staff}` is not staff"))?;
        Ok(match open_envelope(s, &env) {
            Ok(_) => Outcome::Ok,
            Err(_) => Outcome::Rejected,
        })
    }

    fn grant_tx(&mut self, signer: &str, patient: &str, staff: &str, types: &[String]) -> Result<Transaction, String> {
        let policy = Policy::new(self.public_key(patient)?, self.public_key(staff)?, types.iter().cloned());
        self.sign(signer, Payload::Access(AccessPayload::from_policy(policy)))
    }

    fn write(&mut self, patient: &str, staff: &str, data_type: &str, text: &str) -> Result<Outcome, String> {
        let staff_pk = self.public_key(staff)?;
        let p = self
            .patients
            .get_mut(patient)
            .ok_or_else(|| format!("`{patient}` is not a patient"))?;
        let Ok(tx) = p.write_record(&staff_pk, data_type, text.as_bytes(), &mut self.rng) else {
            return Ok(Outcome::Rejected);
        };
        let digest = match &tx.payload {
            Payload::Data(d) => match &d.content {
                DataContent::Write(c) => c.digest(),
                DataContent::Read(_) => unreachable!("write_record builds a write"),
            },
            _ => unreachable!("write_record builds a data transaction"),
        };
        self.plaintexts.push(text.as_bytes().to_vec());
        let outcome = self.submit_wait(patient, tx);
        if outcome == Outcome::Ok {
            self.writes.insert((patient.to_string(), data_type.to_string()), digest);
        }
        Ok(outcome)
    }

    fn read(&mut self, reader: &str, patient: &str, data_type: &str) -> Result<Outcome, String> {
        let patient_pk = self.public_key(patient)?;
        let digest = self
            .writes
            .get(&(patient.to_string(), data_type.to_string()))
            .copied()
            .unwrap_or(Digest::ZERO);
        let who = self.who(reader)?;
        let tx = match who {
            Who::Patient => self.patients.get_mut(reader).expect("checked").read_tx(patient_pk, data_type, digest),
            Who::Staff => self.staff.get_mut(reader).expect("checked").read_tx(patient_pk, data_type, digest),
        };
        let outcome = self.submit_wait(reader, tx);
        if outcome != Outcome::Ok {
            return Ok(outcome);
        }
        let report = self.sim.store().read(&digest);
        if !report.bad_holders.is_empty() {
            self.tamper_reports += 1;
        }
        let c = match report.result {
            Ok(c) => c,
            Err(_) => return Ok(Outcome::Alarm),
        };
        let plain = match who {
            Who::Patient => self.patients[reader].decrypt_record(&c, data_type).ok(),
            Who::Staff => self.staff[reader].decrypt_record(&patient_pk, &c, data_type).ok(),
        };
        Ok(match plain {
            None => Outcome::Rejected,
            Some(_) if !report.bad_holders.is_empty() => Outcome::Recovered,
            Some(_) => Outcome::Ok,
        })
    }

    fn load(&mut self, client: &str, count: u32, every: u64) -> Outcome {
        let mut hashes = Vec::new();
        let mut limited = false;
        for _ in 0..count {
            let keys = gen_sig_keypair(&mut self.rng);
            let tx = Transaction::new_signed(
                &keys,
                1,
                Payload::Register(RegisterPayload {
                    role: Role::Patient,
                    profile: String::new(),
                }),
            );
            match self.sim.submit(client, tx) {
                SubmitOutcome::Accepted(h) => hashes.push(h),
                _ => limited = true,
            }
            self.sim.run_for(every);
        }
        let done = self.sim.run_until(
            |s| hashes.iter().all(|h| s.tx(h).is_some_and(|r| r.is_resolved())),
            self.sc.config.max_ticks,
        );
        let top = self.sim.max_honest_height();
        self.settle(top);
        if !done.reached() {
            Outcome::Timeout
        } else if limited {
            Outcome::RateLimited
        } else if hashes
            .iter()
            .all(|h| matches!(self.sim.tx(h).map(|r| &r.status), Some(TxStatus::Committed { .. })))
        {
            Outcome::Ok
        } else {
            Outcome::Rejected
        }
    }

    fn submit_wait(&mut self, client: &str, tx: Transaction) -> Outcome {
        let h = match self.sim.submit(client, tx) {
            SubmitOutcome::Accepted(h) => h,
            SubmitOutcome::RateLimited => return Outcome::RateLimited,
            SubmitOutcome::NotInRoster => return Outcome::Rejected,
        };
        let done = self
            .sim
            .run_until(|s| s.tx(&h).is_some_and(|r| r.is_resolved()), self.sc.config.max_ticks);
        if !done.reached() {
            return Outcome::Timeout;
        }
        match self.sim.tx(&h).expect("recorded").status.clone() {
            TxStatus::Committed { height, .. } => {
                self.settle(height);
                Outcome::Ok
            }
            TxStatus::Rejected(TxRejection::PolicyDenied | TxRejection::NotIndexed) => Outcome::Denied,
            TxStatus::Rejected(_) => Outcome::Rejected,
            TxStatus::Pending => Outcome::Timeout,
        }
    }

    /// Lets lagging honest replicas reach `height` before the next action.
    fn settle(&mut self, height: u64) {
        self.sim.run_until(|s| s.min_honest_height() >= height, self.sc.config.max_ticks);
    }

    // ---- metrics ----

    fn mean_latency(&self) -> f64 {
        let lat: Vec<u64> = self.sim.txs().filter(|r| !r.flood).filter_map(|r| r.latency()).collect();
        if lat.is_empty() {
            0.0
        } else {
            lat.iter().sum::<u64>() as f64 / lat.len() as f64
        }
    }

    fn metric(&mut self, name: &str) -> f64 {
        let sim = &self.sim;
        let m = sim.metrics();
        match name {
            "ticks" => sim.now() as f64,
            "height" => sim.min_honest_height() as f64,
            "view_changes" => sim.max_honest_view() as f64,
            "committed_txs" => sim
                .txs()
                .filter(|r| !r.flood && matches!(r.status, TxStatus::Committed { .. }))
                .count() as f64,
            "rejected_txs" => sim.txs().filter(|r| matches!(r.status, TxStatus::Rejected(_))).count() as f64,
            "honest_committed_pct" => {
                // correctly rejected transactions are not counted against
                let (mut ok, mut total) = (0u64, 0u64);
                for r in sim.txs().filter(|r| !r.flood) {
                    match r.status {
                        TxStatus::Committed { .. } => {
                            ok += 1;
                            total += 1;
                        }
                        TxStatus::Pending => total += 1,
                        TxStatus::Rejected(_) => {}
                    }
                }
                if total == 0 {
                    100.0
                } else {
                    100.0 * ok as f64 / total as f64
                }
            }
            "mean_latency" => self.mean_latency(),
            "latency_ratio" => {
                let base = match self.baseline_latency {
                    Some(b) => b,
                    None => {
                        let b = self.baseline();
                        self.baseline_latency = Some(b);
                        b
                    }
                };
                let cur = self.mean_latency();
                if base == 0.0 {
                    if cur == 0.0 {
                        1.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    cur / base
                }
            }
            "rate_limited" => m.rate_limited as f64,
            "max_window_accepts" => sim.limiter().max_window_accepts() as f64,
            "roster_rejections" => m.roster_rejections as f64,
            "rejected_blocks" => m.rejected_blocks as f64,
            "misbehavior" => m.misbehavior as f64,
            "safety_violations" => m.safety_violations as f64,
            "replay_mismatches" => sim
                .honest_ids()
                .filter(|&i| {
                    let r = sim.replica(i);
                    replay(r.chain()).map_or(true, |s| s.digest() != r.state().digest())
                })
                .count() as f64,
            "privacy_leaks" => self.privacy_leaks() as f64,
            "tamper_reports" => self.tamper_reports as f64,
            other => unreachable!("metric `{other}` validated at parse time"),
        }
    }

    /// Mean honest latency of the same script with floods removed.
    fn baseline(&self) -> f64 {
        let Ok(mut r) = Runner::new(self.sc, true) else {
            return 0.0;
        };
        if r.run(&mut |_| {}).is_err() {
            return 0.0;
        }
        r.mean_latency()
    }

    fn privacy_leaks(&self) -> usize {
        let mut artifacts = Vec::new();
        for i in self.sim.honest_ids() {
            artifacts.push(Artifact {
                name: format!("chain r{i}"),
                bytes: encode_chain(self.sim.replica(i).chain()),
            });
        }
        artifacts.push(Artifact {
            name: "trace".into(),
            bytes: self.sim.trace().to_lines().into_bytes(),
        });
        let store = self.sim.store();
        for key in store.keys() {
            let holders = std::iter::once(Holder::Local).chain(store.holders(key).iter().map(|&i| Holder::Node(i)));
            for h in holders {
                if let Some(bytes) = store.raw(key, h) {
                    artifacts.push(Artifact {
                        name: format!("store {key} {h:?}"),
                        bytes: bytes.clone(),
                    });
                }
            }
        }
        privacy_scan(&artifacts, &self.secrets()).len()
    }

    fn secrets(&self) -> Vec<Vec<u8>> {
        let mut keys: Vec<Vec<u8>> = Vec::new();
        for p in self.patients.values() {
            keys.push(p.keys.private.as_bytes().to_vec());
            keys.extend(p.shared_keys.values().map(|k| k.as_bytes().to_vec()));
        }
        for s in self.staff.values() {
            keys.push(s.keys.private.as_bytes().to_vec());
            keys.extend(s.received_keys.values().map(|k| k.as_bytes().to_vec()));
        }
        for k in replica_keys(self.sc.config.seed, self.sc.config.replicas) {
            keys.push(k.private.as_bytes().to_vec());
        }
        let hexes: Vec<Vec<u8>> = keys.iter().map(|k| hex::encode(k).into_bytes()).collect();
        let mut out = self.plaintexts.clone();
        out.extend(keys);
        out.extend(hexes);
        out
    }
}
