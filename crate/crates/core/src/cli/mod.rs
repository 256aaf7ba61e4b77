//! The `medchain` command line.
//!
//! Every ledger command opens a session over the simulator, resumed from the
//! chain and store kept under `--home`, submits one transaction, runs until
//! it resolves, and persists the result.
//!
//! Home layout:
//!
//! ```text
//! <home>/network.cfg        simulator settings (key = value)
//! <home>/chain.bin          committed blocks
//! <home>/store/<hex>        ciphertexts by content address
//! <home>/keys/<id>.key      identities, mode 0600
//! <home>/envelopes/<patient>-<staff>.env   sealed key shares, hex
//! ```

mod keyfile;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::crypto::{Digest, PublicKey};
use crate::identity::{address_hex, join_patient, join_staff, open_envelope, share_sym_key, Role};
use crate::ledger::{
    audit_trail, fetch_record, read_chain_file, write_chain_file, AccessPayload, AuditAction, AuditEvent, Block,
    DataContent, LedgerState, Payload, Policy, Transaction, TxRejection,
};
use crate::scenario::{attack_suite, bundled, run_scenario_with, Scenario};
use crate::sim::{SimConfig, Simulation, SubmitOutcome, TxStatus};
use crate::store::ContentStore;

pub use keyfile::Identity;

pub const EXIT_OK: i32 = 0;
/// Anything outside the taxonomy below: I/O, an id that already exists, a failed scenario expectation.
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_DENIED: i32 = 2;
pub const EXIT_INTEGRITY: i32 = 3;
pub const EXIT_TIMEOUT: i32 = 4;
pub const EXIT_MALFORMED: i32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Lines,
}

#[derive(Debug, Parser)]
#[command(name = "medchain", version, about = "Patient-controlled health records on a replicated ledger")]
pub struct Cli {
    /// Directory holding keys, chain, store and network settings.
    #[arg(long, global = true, default_value = ".medchain")]
    pub home: PathBuf,
    /// Seed for key generation, encryption nonces and scenario runs.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Simulator settings file (key = value).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write the message trace here.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create a key file without registering it.
    Keygen {
        #[arg(long, value_parser = parse_role)]
        role: Role,
        #[arg(long)]
        id: String,
        #[arg(long, default_value = "")]
        profile: String,
        #[arg(long)]
        force: bool,
    },
    /// Register an identity on the ledger, creating its key if needed.
    Register {
        #[arg(long, value_parser = parse_role)]
        role: Role,
        #[arg(long)]
        id: String,
        #[arg(long, default_value = "")]
        profile: String,
        /// Replace an existing key with a fresh one.
        #[arg(long)]
        force: bool,
    },
    /// Seal a fresh record key from a patient to a staff member.
    Share { patient: String, staff: String },
    /// Set the data types `staff` may read; no types revokes.
    Grant {
        patient: String,
        staff: String,
        types: Vec<String>,
        /// Sign with this identity instead of the patient's.
        #[arg(long)]
        signer: Option<String>,
    },
    /// Withdraw every permission granted to `staff`.
    Revoke {
        patient: String,
        staff: String,
        #[arg(long)]
        signer: Option<String>,
    },
    /// Encrypt a file and record it under a data type.
    Put {
        patient: String,
        data_type: String,
        file: PathBuf,
        /// Staff member whose shared key encrypts the record.
        #[arg(long = "for")]
        staff: Option<String>,
    },
    /// Request and decrypt a record.
    Get {
        actor: String,
        patient: String,
        data_type: String,
        /// Record digest; defaults to the latest write of that type.
        digest: Option<String>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Chronological policy and data events for a patient.
    Audit { patient: String },
    /// Chain height, tip and state digest.
    Status,
    /// Run a scenario file or a bundled scenario by name.
    RunScenario { file: String },
    /// Run the bundled attack scenarios and print the resilience matrix.
    AttackSuite,
}

fn parse_role(s: &str) -> Result<Role, String> {
    s.parse()
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::new(EXIT_FAILURE, e.to_string())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_MALFORMED } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match execute(&cli, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

pub fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> CliResult {
    match &cli.command {
        Command::RunScenario { file } => return run_scenario_cmd(cli, file, out, err),
        Command::AttackSuite => return attack_suite_cmd(cli, out, err),
        _ => {}
    }
    let home = Home::open(&cli.home, cli.config.as_deref())?;
    let mut rng = match cli.seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s),
        None => ChaCha20Rng::seed_from_u64(rand::thread_rng().gen()),
    };
    match &cli.command {
        Command::Keygen {
            role,
            id,
            profile,
            force,
        } => {
            home.check_new_id(id, *force)?;
            let identity = fresh_identity(*role, id, profile, &mut rng).0;
            home.save_identity(&identity)?;
            let pk = identity.public_key();
            emit(cli, out, &format!("key {id} ({role}) address {}", address_hex(&pk)), &[
                ("id", id.clone()),
                ("address", address_hex(&pk)),
            ])?;
        }
        Command::Register {
            role,
            id,
            profile,
            force,
        } => {
            let mut session = Session::open(&home)?;
            let existing = if *force { None } else { home.try_identity(id)? };
            let (mut identity, tx) = match existing {
                Some(mut ident) => {
                    if session.state().directory().contains(&ident.public_key()) {
                        return Err(CliError::new(EXIT_FAILURE, format!("`{id}` is already registered")));
                    }
                    if ident.role() != *role {
                        return Err(CliError::new(
                            EXIT_MALFORMED,
                            format!("key file for `{id}` has role {}", ident.role()),
                        ));
                    }
                    let tx = ident.actor().sign_tx(Payload::Register(crate::ledger::RegisterPayload {
                        role: *role,
                        profile: profile.clone(),
                    }));
                    (ident, tx)
                }
                None => fresh_identity(*role, id, profile, &mut rng),
            };
            let height = session.commit(id, tx);
            home.save_identity(&identity)?;
            let height = height?;
            session.save(&home, cli)?;
            let pk = identity.actor().public_key();
            emit(
                cli,
                out,
                &format!("registered {id} ({role}) address {} at height {height}", address_hex(&pk)),
                &[("address", address_hex(&pk)), ("height", height.to_string())],
            )?;
        }
        Command::Share { patient, staff } => {
            let session = Session::open(&home)?;
            let mut p = home.identity(patient)?;
            let mut s = home.identity(staff)?;
            let (Identity::Patient(pi), Identity::Staff(si)) = (&mut p, &mut s) else {
                return Err(CliError::new(EXIT_MALFORMED, "share goes from a patient to a staff member"));
            };
            let env = share_sym_key(pi, si.keys.public, session.state().directory(), &mut rng)
                .map_err(|e| CliError::new(EXIT_DENIED, e.to_string()))?;
            let dir = home.root.join("envelopes");
            fs::create_dir_all(&dir)?;
            let path = dir.join(format!("{patient}-{staff}.env"));
            fs::write(&path, hex::encode(env.to_wire()))?;
            open_envelope(si, &env).map_err(|e| CliError::new(EXIT_INTEGRITY, e.to_string()))?;
            home.save_identity(&p)?;
            home.save_identity(&s)?;
            emit(cli, out, &format!("shared key {patient} -> {staff} ({})", path.display()), &[(
                "envelope",
                path.display().to_string(),
            )])?;
        }
        Command::Grant {
            patient,
            staff,
            types,
            signer,
        } => grant_cmd(cli, &home, patient, staff, types, signer.as_deref(), out)?,
        Command::Revoke { patient, staff, signer } => {
            grant_cmd(cli, &home, patient, staff, &[], signer.as_deref(), out)?
        }
        Command::Put {
            patient,
            data_type,
            file,
            staff,
        } => {
            let mut session = Session::open(&home)?;
            let plaintext = fs::read(file)?;
            let mut p = home.identity(patient)?;
            let Identity::Patient(pi) = &mut p else {
                return Err(CliError::new(EXIT_MALFORMED, format!("`{patient}` is not a patient")));
            };
            let staff_pk = match staff {
                Some(s) => home.identity(s)?.public_key(),
                None => {
                    let mut keys = pi.shared_keys.keys();
                    match (keys.next(), keys.next()) {
                        (Some(pk), None) => *pk,
                        _ => {
                            return Err(CliError::new(
                                EXIT_MALFORMED,
                                "choose the encrypting staff key with --for",
                            ))
                        }
                    }
                }
            };
            let tx = pi
                .write_record(&staff_pk, data_type, &plaintext, &mut rng)
                .map_err(|e| CliError::new(EXIT_DENIED, e.to_string()))?;
            let digest = match &tx.payload {
                Payload::Data(d) => match &d.content {
                    DataContent::Write(c) => c.digest(),
                    DataContent::Read(d) => *d,
                },
                _ => Digest::ZERO,
            };
            let height = session.commit(patient, tx);
            home.save_identity(&p)?;
            let height = height?;
            session.save(&home, cli)?;
            emit(cli, out, &format!("stored {digest} at height {height}"), &[
                ("digest", digest.to_hex()),
                ("height", height.to_string()),
            ])?;
        }
        Command::Get {
            actor,
            patient,
            data_type,
            digest,
            output,
        } => {
            let mut session = Session::open(&home)?;
            let mut reader = home.identity(actor)?;
            let patient_pk = home.identity(patient)?.public_key();
            if let Identity::Staff(s) = &reader {
                if !s.received_keys.contains_key(&patient_pk) {
                    return Err(CliError::new(EXIT_DENIED, format!("{actor} holds no key shared by {patient}")));
                }
            }
            let digest = match digest {
                Some(h) => Digest::from_hex(h).map_err(|_| CliError::new(EXIT_MALFORMED, "bad digest"))?,
                None => latest_write(session.state(), &patient_pk, data_type).unwrap_or(Digest::ZERO),
            };
            let tx = reader.actor().read_tx(patient_pk, data_type, digest);
            let committed = session.commit(actor, tx);
            home.save_identity(&reader)?;
            committed?;
            session.save(&home, cli)?;
            let c = fetch_record(session.sim.store(), &digest).map_err(|e| CliError::new(EXIT_INTEGRITY, e.to_string()))?;
            let plain = match &reader {
                Identity::Patient(p) => p.decrypt_record(&c, data_type).map_err(|e| e.to_string()),
                Identity::Staff(s) => s.decrypt_record(&patient_pk, &c, data_type).map_err(|e| e.to_string()),
            }
            .map_err(|e| CliError::new(EXIT_INTEGRITY, format!("record does not decrypt: {e}")))?;
            match output {
                Some(path) => {
                    fs::write(path, &plain)?;
                    emit(cli, out, &format!("wrote {} bytes to {}", plain.len(), path.display()), &[(
                        "bytes",
                        plain.len().to_string(),
                    )])?;
                }
                None => out.write_all(&plain)?,
            }
        }
        Command::Audit { patient } => {
            let session = Session::open(&home)?;
            let pk = home.identity(patient)?.public_key();
            if !session.state().directory().contains(&pk) {
                return Err(CliError::new(EXIT_MALFORMED, format!("`{patient}` is not registered")));
            }
            let names = home.names()?;
            for ev in audit_trail(session.state(), &pk) {
                writeln!(out, "{}", render_event(&ev, &names, cli.format))?;
            }
        }
        Command::Status => {
            let session = Session::open(&home)?;
            let st = session.state();
            let tip = session.sim.honest_chain().last().map(Block::hash).unwrap_or(Digest::ZERO);
            emit(
                cli,
                out,
                &format!(
                    "height {} tip {} state {} identities {}",
                    st.height(),
                    tip,
                    st.digest(),
                    st.directory().len()
                ),
                &[
                    ("height", st.height().to_string()),
                    ("tip", tip.to_hex()),
                    ("state", st.digest().to_hex()),
                    ("identities", st.directory().len().to_string()),
                ],
            )?;
        }
        Command::RunScenario { .. } | Command::AttackSuite => unreachable!("handled above"),
    }
    let _ = err;
    Ok(())
}

fn emit(cli: &Cli, out: &mut dyn Write, text: &str, lines: &[(&str, String)]) -> io::Result<()> {
    match cli.format {
        Format::Text => writeln!(out, "{text}"),
        Format::Lines => {
            for (k, v) in lines {
                writeln!(out, "{k} {v}")?;
            }
            Ok(())
        }
    }
}

fn fresh_identity(role: Role, id: &str, profile: &str, rng: &mut ChaCha20Rng) -> (Identity, Transaction) {
    match role {
        Role::Patient => {
            let (p, tx) = join_patient(id, rng);
            (Identity::Patient(p), tx)
        }
        Role::Staff => {
            let (s, tx) = join_staff(id, profile, rng);
            (Identity::Staff(s), tx)
        }
    }
}

fn grant_cmd(
    cli: &Cli,
    home: &Home,
    patient: &str,
    staff: &str,
    types: &[String],
    signer: Option<&str>,
    out: &mut dyn Write,
) -> CliResult {
    let mut session = Session::open(home)?;
    let patient_pk = home.identity(patient)?.public_key();
    let staff_pk = home.identity(staff)?.public_key();
    let signer = signer.unwrap_or(patient);
    let mut ident = home.identity(signer)?;
    let policy = Policy::new(patient_pk, staff_pk, types.iter().cloned());
    let tx = ident.actor().sign_tx(Payload::Access(AccessPayload::from_policy(policy)));
    let result = session.commit(signer, tx);
    home.save_identity(&ident)?;
    match result {
        Ok(height) => {
            session.save(home, cli)?;
            let what = if types.is_empty() { "revoked" } else { "granted" };
            emit(cli, out, &format!("{what} {patient} -> {staff}: s=1 at height {height}"), &[
                ("status", "1".into()),
                ("height", height.to_string()),
            ])?;
            Ok(())
        }
        Err(e) if e.code == EXIT_DENIED => {
            emit(cli, out, "s=0", &[("status", "0".into())])?;
            Err(e)
        }
        Err(e) => Err(e),
    }
}

fn latest_write(state: &LedgerState, patient: &PublicKey, data_type: &str) -> Option<Digest> {
    state.events().iter().rev().find_map(|ev| match &ev.action {
        AuditAction::Write { data_type: t, digest } if ev.patient == *patient && t == data_type => Some(*digest),
        _ => None,
    })
}

fn render_event(ev: &AuditEvent, names: &[(PublicKey, String)], format: Format) -> String {
    let name = |pk: &PublicKey| {
        names
            .iter()
            .find(|(k, _)| k == pk)
            .map_or_else(|| address_hex(pk)[..16].to_string(), |(_, n)| n.clone())
    };
    let detail = match &ev.action {
        AuditAction::Grant { staff, types } => {
            let t: Vec<&str> = types.iter().map(String::as_str).collect();
            format!("staff={} types={}", name(staff), t.join(","))
        }
        AuditAction::Revoke { staff } => format!("staff={}", name(staff)),
        AuditAction::Write { data_type, digest } | AuditAction::Read { data_type, digest } => {
            format!("type={data_type} digest={digest}")
        }
    };
    match format {
        Format::Text => format!(
            "{:>6}.{:<3} {:<7} by {:<12} {detail}",
            ev.height,
            ev.index,
            ev.action.label(),
            name(&ev.actor)
        ),
        Format::Lines => format!(
            "event {} {} {} {} {detail}",
            ev.height,
            ev.index,
            ev.action.label(),
            ev.actor.to_hex()
        ),
    }
}

// ---- scenarios ----

fn load_scenario(cli: &Cli, file: &str) -> CliResult<Scenario> {
    let text = if Path::new(file).exists() {
        fs::read_to_string(file)?
    } else if let Some(b) = bundled(file) {
        b.source.to_string()
    } else {
        return Err(CliError::new(EXIT_MALFORMED, format!("no scenario file or bundled scenario `{file}`")));
    };
    let mut sc = Scenario::parse(&text).map_err(|e| CliError::new(EXIT_MALFORMED, format!("{file}: {e}")))?;
    if let Some(path) = &cli.config {
        let overlay = fs::read_to_string(path)?;
        sc.config
            .apply_text(&overlay)
            .map_err(|e| CliError::new(EXIT_MALFORMED, format!("{}: {e}", path.display())))?;
        sc.config.validate().map_err(|e| CliError::new(EXIT_MALFORMED, e))?;
    }
    if let Some(seed) = cli.seed {
        sc.config.seed = seed;
    }
    Ok(sc)
}

fn run_scenario_cmd(cli: &Cli, file: &str, out: &mut dyn Write, err: &mut dyn Write) -> CliResult {
    let sc = load_scenario(cli, file)?;
    let report = run_scenario_with(&sc, &mut |line| {
        let _ = writeln!(err, "{line}");
    })
    .map_err(|e| CliError::new(EXIT_MALFORMED, e.to_string()))?;
    if let Some(path) = &cli.out {
        fs::write(path, report.trace.to_lines())?;
    }
    match cli.format {
        Format::Text => out.write_all(report.render_text().as_bytes())?,
        Format::Lines => out.write_all(report.render_lines().as_bytes())?,
    }
    if report.passed() {
        Ok(())
    } else {
        let failed: Vec<String> = report.failures().map(|c| format!("line {}: {} (got {})", c.line, c.text, c.actual)).collect();
        Err(CliError::new(EXIT_FAILURE, format!("failed expectations:\n  {}", failed.join("\n  "))))
    }
}

fn attack_suite_cmd(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> CliResult {
    let suite = attack_suite(cli.seed, &mut |line| {
        if line.starts_with("running") {
            let _ = writeln!(err, "{line}");
        }
    })
    .map_err(|e| CliError::new(EXIT_MALFORMED, e.to_string()))?;
    if let Some(path) = &cli.out {
        let mut all = String::new();
        for row in &suite.rows {
            all.push_str(&row.report.trace.to_lines());
        }
        fs::write(path, all)?;
    }
    match cli.format {
        Format::Text => out.write_all(suite.render_text().as_bytes())?,
        Format::Lines => out.write_all(suite.render_lines().as_bytes())?,
    }
    if suite.passed() {
        Ok(())
    } else {
        Err(CliError::new(EXIT_FAILURE, "at least one attack scenario failed"))
    }
}

// ---- home directory ----

struct Home {
    root: PathBuf,
    config: SimConfig,
}

impl Home {
    fn open(root: &Path, config: Option<&Path>) -> CliResult<Home> {
        fs::create_dir_all(root.join("keys"))?;
        let cfg_path = root.join("network.cfg");
        let config = match config {
            Some(p) => {
                let text = fs::read_to_string(p)?;
                let cfg =
                    SimConfig::parse(&text).map_err(|e| CliError::new(EXIT_MALFORMED, format!("{}: {e}", p.display())))?;
                if !cfg_path.exists() {
                    fs::write(&cfg_path, cfg.to_text())?;
                }
                cfg
            }
            None if cfg_path.exists() => {
                let text = fs::read_to_string(&cfg_path)?;
                SimConfig::parse(&text).map_err(|e| CliError::new(EXIT_MALFORMED, format!("network.cfg: {e}")))?
            }
            None => {
                let cfg = SimConfig::default();
                fs::write(&cfg_path, cfg.to_text())?;
                cfg
            }
        };
        Ok(Home {
            root: root.to_path_buf(),
            config,
        })
    }

    fn key_path(&self, id: &str) -> CliResult<PathBuf> {
        if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.') || id.starts_with('.') {
            return Err(CliError::new(EXIT_MALFORMED, format!("`{id}` is not a valid id")));
        }
        Ok(self.root.join("keys").join(format!("{id}.key")))
    }

    fn check_new_id(&self, id: &str, force: bool) -> CliResult {
        if self.key_path(id)?.exists() && !force {
            return Err(CliError::new(EXIT_FAILURE, format!("`{id}` already exists (use --force to replace it)")));
        }
        Ok(())
    }

    fn try_identity(&self, id: &str) -> CliResult<Option<Identity>> {
        let path = self.key_path(id)?;
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path)?;
        Identity::from_text(&text)
            .map(Some)
            .map_err(|e| CliError::new(EXIT_MALFORMED, format!("{}: {e}", path.display())))
    }

    fn identity(&self, id: &str) -> CliResult<Identity> {
        self.try_identity(id)?
            .ok_or_else(|| CliError::new(EXIT_MALFORMED, format!("unknown identity `{id}`")))
    }

    fn save_identity(&self, ident: &Identity) -> CliResult {
        let path = self.key_path(ident.id())?;
        write_private(&path, ident.to_text().as_bytes())?;
        Ok(())
    }

    /// `(public key, id)` for every local key file, for readable output.
    fn names(&self) -> CliResult<Vec<(PublicKey, String)>> {
        let mut out = Vec::new();
        for entry in fs::read_dir(self.root.join("keys"))? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "key") {
                if let Ok(ident) = Identity::from_text(&fs::read_to_string(&path)?) {
                    out.push((ident.public_key(), ident.id().to_string()));
                }
            }
        }
        out.sort_by(|a, b| a.1.cmp(&b.1));
        Ok(out)
    }
}

#[cfg(unix)]
fn write_private(path: &Path, bytes: &[u8]) -> io::Result<()> {
    use std::os::unix::fs::{OpenOptionsExt, PermissionsExt};
    let tmp = path.with_extension("key.tmp");
    let mut f = fs::OpenOptions::new()
        .write(true)
        .create(true)
        .truncate(true)
        .mode(0o600)
        .open(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::set_permissions(&tmp, fs::Permissions::from_mode(0o600))?;
    fs::rename(tmp, path)
}

#[cfg(not(unix))]
fn write_private(path: &Path, bytes: &[u8]) -> io::Result<()> {
    fs::write(path, bytes)
}

struct Session {
    sim: Simulation,
    start_height: u64,
}

impl Session {
    fn open(home: &Home) -> CliResult<Session> {
        let chain = read_chain_file(&home.root.join("chain.bin"))
            .map_err(|e| CliError::new(EXIT_INTEGRITY, format!("chain.bin: {e}")))?;
        let store = ContentStore::load_dir(&home.root.join("store"))?;
        let sim = Simulation::resume(home.config.clone(), chain, Some(store))
            .map_err(|e| CliError::new(EXIT_INTEGRITY, e.to_string()))?;
        let start_height = sim.max_honest_height();
        Ok(Session { sim, start_height })
    }

    fn state(&self) -> &LedgerState {
        self.sim.leading_replica().map(|r| r.state()).expect("at least one honest replica")
    }

    /// Submits `tx` from `client` and runs until it resolves.
    fn commit(&mut self, client: &str, tx: Transaction) -> CliResult<u64> {
        let sim = &mut self.sim;
        sim.add_client(client);
        let h = match sim.submit(client, tx) {
            SubmitOutcome::Accepted(h) => h,
            SubmitOutcome::RateLimited => return Err(CliError::new(EXIT_TIMEOUT, "rate limited")),
            SubmitOutcome::NotInRoster => return Err(CliError::new(EXIT_DENIED, "sender not in roster")),
        };
        let max = sim.config().max_ticks;
        let done = sim.run_until(|s| s.tx(&h).is_some_and(|r| r.is_resolved()), max);
        if !done.reached() {
            return Err(CliError::new(EXIT_TIMEOUT, format!("no commit within {max} ticks")));
        }
        match sim.tx(&h).expect("recorded").status.clone() {
            TxStatus::Committed { height, .. } => {
                sim.run_until(|s| s.min_honest_height() >= height, max);
                Ok(height)
            }
            TxStatus::Rejected(reason) => {
                let msg = match reason {
                    TxRejection::PolicyDenied => "denied: no policy grants this data type".to_string(),
                    other => format!("rejected: {other}"),
                };
                Err(CliError::new(EXIT_DENIED, msg))
            }
            TxStatus::Pending => Err(CliError::new(EXIT_TIMEOUT, "transaction still pending")),
        }
    }

    fn save(&self, home: &Home, cli: &Cli) -> CliResult {
        if self.sim.max_honest_height() > self.start_height {
            write_chain_file(&home.root.join("chain.bin"), self.sim.honest_chain())?;
        }
        self.sim.store().save_dir(&home.root.join("store"))?;
        if let Some(path) = &cli.out {
            fs::write(path, self.sim.trace().to_lines())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
