use std::collections::BTreeMap;
use std::fmt;

use crate::crypto::{Digest, Hasher};

/// One line of the message trace: `tick from to kind digest`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub tick: u64,
    pub from: String,
    pub to: String,
    pub kind: String,
    pub digest: Digest,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {}",
            self.tick, self.from, self.to, self.kind, self.digest
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    records: Vec<TraceRecord>,
}

impl Trace {
    pub fn push(&mut self, tick: u64, from: &str, to: &str, kind: impl Into<String>, digest: Digest) {
        self.records.push(TraceRecord {
            tick,
            from: from.to_string(),
            to: to.to_string(),
            kind: kind.into(),
            digest,
        });
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn count_kind(&self, kind: &str) -> usize {
        self.records.iter().filter(|r| r.kind == kind).count()
    }

    /// Line-delimited text form.
    pub fn to_lines(&self) -> String {
        let mut out = String::with_capacity(self.records.len() * 96);
        for r in &self.records {
            out.push_str(&r.to_string());
            out.push('\n');
        }
        out
    }

    pub fn hash(&self) -> Digest {
        let mut h = Hasher::new();
        for r in &self.records {
            h.update(r.to_string().as_bytes()).update(b"\n");
        }
        h.finish()
    }

    /// Every `deliver.*` record is matched by an earlier `send.*` record
    /// with the same endpoints and digest.
    pub fn conservation_holds(&self) -> bool {
        let mut in_flight: BTreeMap<(&str, &str, &str, Digest), i64> = BTreeMap::new();
        for r in &self.records {
            if let Some(kind) = r.kind.strip_prefix("send.") {
                *in_flight.entry((&r.from, &r.to, kind, r.digest)).or_default() += 1;
            } else if let Some(kind) = r.kind.strip_prefix("deliver.") {
                let slot = in_flight.entry((&r.from, &r.to, kind, r.digest)).or_default();
                *slot -= 1;
                if *slot < 0 {
                    return false;
                }
            }
        }
        true
    }
}
