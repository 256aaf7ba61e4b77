use std::fmt::Write as _;

use super::run::{run_scenario_with, ScenarioReport};
use super::{Scenario, ScenarioError};

pub struct Bundled {
    pub file: &'static str,
    /// Attack-matrix row this scenario stands for, if any.
    pub attack: Option<&'static str>,
    pub mitigation: &'static str,
    /// Metrics shown in the matrix.
    pub highlights: &'static [&'static str],
    pub source: &'static str,
}

pub const BUNDLED: &[Bundled] = &[
    Bundled {
        file: "dos.scn",
        attack: Some("Denial of service"),
        mitigation: "per-node rate limit",
        highlights: &["rate_limited", "max_window_accepts", "latency_ratio"],
        source: include_str!("../../scenarios/dos.scn"),
    },
    Bundled {
        file: "modification.scn",
        attack: Some("Ledger modification"),
        mitigation: "hash chain + commit certificates",
        highlights: &["rejected_blocks", "safety_violations"],
        source: include_str!("../../scenarios/modification.scn"),
    },
    Bundled {
        file: "public_modification.scn",
        attack: Some("False longest ledger"),
        mitigation: "PBFT quorum certificates, roster",
        highlights: &["rejected_blocks", "roster_rejections", "height"],
        source: include_str!("../../scenarios/public_modification.scn"),
    },
    Bundled {
        file: "storage.scn",
        attack: Some("Off-chain storage"),
        mitigation: "content addressing, verify on read",
        highlights: &["tamper_reports", "privacy_leaks"],
        source: include_str!("../../scenarios/storage.scn"),
    },
    Bundled {
        file: "appending.scn",
        attack: Some("Appending fake transactions"),
        mitigation: "signature check on every transaction",
        highlights: &["rejected_blocks", "height"],
        source: include_str!("../../scenarios/appending.scn"),
    },
    Bundled {
        file: "fifty_one.scn",
        attack: Some("Majority of outside miners"),
        mitigation: "permissioned replica set",
        highlights: &["misbehavior", "height"],
        source: include_str!("../../scenarios/fifty_one.scn"),
    },
    Bundled {
        file: "ddos.scn",
        attack: Some("Distributed denial of service"),
        mitigation: "rate limit + roster check",
        highlights: &["roster_rejections", "rate_limited", "latency_ratio"],
        source: include_str!("../../scenarios/ddos.scn"),
    },
    Bundled {
        file: "byzantine_primary.scn",
        attack: None,
        mitigation: "view change",
        highlights: &["view_changes", "safety_violations"],
        source: include_str!("../../scenarios/byzantine_primary.scn"),
    },
];

/// Looks up a bundled scenario by file name, with or without `.scn`.
pub fn bundled(name: &str) -> Option<&'static Bundled> {
    let name = name.strip_suffix(".scn").unwrap_or(name);
    BUNDLED.iter().find(|b| b.file.strip_suffix(".scn") == Some(name))
}

pub struct SuiteRow {
    pub attack: &'static str,
    pub file: &'static str,
    pub mitigation: &'static str,
    pub highlights: &'static [&'static str],
    pub report: ScenarioReport,
}

pub struct SuiteReport {
    pub rows: Vec<SuiteRow>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.report.passed())
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<30} {:<24} {:<38} {:<6} metrics",
            "attack", "scenario", "mitigation", "result"
        );
        for r in &self.rows {
            let verdict = if r.report.passed() { "PASS" } else { "FAIL" };
            let _ = writeln!(
                out,
                "{:<30} {:<24} {:<38} {:<6} {}",
                r.attack,
                r.file,
                r.mitigation,
                verdict,
                highlights(r)
            );
        }
        let passed = self.rows.iter().filter(|r| r.report.passed()).count();
        let _ = writeln!(out, "{passed}/{} attacks resisted", self.rows.len());
        out
    }

    pub fn render_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let verdict = if r.report.passed() { "PASS" } else { "FAIL" };
            let _ = writeln!(out, "row {} {verdict} {} {}", r.file, highlights(r), r.attack);
        }
        let _ = writeln!(out, "result {}", if self.passed() { "PASS" } else { "FAIL" });
        out
    }
}

fn highlights(r: &SuiteRow) -> String {
    r.highlights
        .iter()
        .filter_map(|m| r.report.metric(m).map(|v| format!("{m}={}", trim(v))))
        .collect::<Vec<_>>()
        .join(" ")
}

fn trim(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{}", v as i64)
    } else {
        format!("{v:.2}")
    }
}

/// Runs one bundled scenario per attack row. `seed` overrides each file's seed.
pub fn attack_suite(seed: Option<u64>, progress: &mut dyn FnMut(&str)) -> Result<SuiteReport, ScenarioError> {
    let mut rows = Vec::new();
    for b in BUNDLED {
        let Some(attack) = b.attack else { continue };
        let mut sc = Scenario::parse(b.source)?;
        if let Some(s) = seed {
            sc.config.seed = s;
        }
        progress(&format!("running {}", b.file));
        let report = run_scenario_with(&sc, progress)?;
        rows.push(SuiteRow {
            attack,
            file: b.file,
            mitigation: b.mitigation,
            highlights: b.highlights,
            report,
        });
    }
    Ok(SuiteReport { rows })
}
