//! Scripted scenarios over the simulator.
//!
//! A scenario file has a header of `key = value` lines (`name` plus any
//! [`SimConfig`] key) followed by a `[script]` section with one action per
//! line. Arguments are whitespace separated; double quotes group words.
//!
//! ```text
//! name = grant-read
//! replicas = 4
//! seed = 7
//!
//! [script]
//! register alice patient
//! register drbob staff cardiology
//! share alice drbob
//! grant alice drbob "blood pressure"
//! write alice drbob "blood pressure" "systolic 121 diastolic 79"
//! read drbob alice "blood pressure"
//! expect outcome ok
//! revoke alice drbob
//! read drbob alice "blood pressure"
//! expect outcome denied
//! expect safety_violations == 0
//! ```
//!
//! Actions:
//!
//! | action | effect |
//! |---|---|
//! | `register <id> patient\|staff [profile]` | new identity, joins the roster, submits its registration |
//! | `client <id>` | roster entry with no ledger identity |
//! | `share <patient> <staff>` | off-ledger key share |
//! | `grant <patient> <staff> <type>...` | access policy; no types revokes |
//! | `grant-as <signer> <patient> <staff> <type>...` | policy for `patient` signed by someone else |
//! | `revoke <patient> <staff>` | empty-set policy |
//! | `write <patient> <staff> <type> <text>` | encrypts under the key shared with `staff` |
//! | `read <reader> <patient> <type>` | read request for the latest write of that type, then fetch and decrypt |
//! | `load <client> <count> <every>` | `count` fresh registrations, one every `every` ticks |
//! | `fault <fault...>` | see [`Fault::parse`] |
//! | `wait <ticks>` | advance time |
//! | `expect outcome <o>` | outcome of the previous action: ok, denied, alarm, recovered, rejected, timeout, rate-limited |
//! | `expect <metric> <op> <number>` | op is one of `== != < <= > >=` |
//!
//! Every transaction action blocks until the transaction commits, is
//! rejected by every live honest replica, or `max_ticks` pass.

mod privacy;
mod run;
mod suite;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::identity::Role;
use crate::sim::{Fault, SimConfig};

pub use privacy::{privacy_scan, Artifact};
pub use run::{run_scenario, run_scenario_with, Check, ScenarioReport, METRICS};
pub use suite::{attack_suite, bundled, Bundled, SuiteReport, SuiteRow, BUNDLED};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: {reason}")]
    Script { line: usize, reason: String },
}

impl ScenarioError {
    pub fn line(&self) -> usize {
        match self {
            ScenarioError::Parse { line, .. } | ScenarioError::Script { line, .. } => *line,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    Denied,
    Alarm,
    /// The read returned intact bytes, but at least one copy was bad.
    Recovered,
    Rejected,
    Timeout,
    RateLimited,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Ok => "ok",
            Outcome::Denied => "denied",
            Outcome::Alarm => "alarm",
            Outcome::Recovered => "recovered",
            Outcome::Rejected => "rejected",
            Outcome::Timeout => "timeout",
            Outcome::RateLimited => "rate-limited",
        })
    }
}

impl FromStr for Outcome {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "ok" => Outcome::Ok,
            "denied" => Outcome::Denied,
            "alarm" => Outcome::Alarm,
            "recovered" => Outcome::Recovered,
            "rejected" => Outcome::Rejected,
            "timeout" => Outcome::Timeout,
            "rate-limited" => Outcome::RateLimited,
            other => return Err(format!("unknown outcome `{other}`")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Op {
    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Op::Eq => lhs == rhs,
            Op::Ne => lhs != rhs,
            Op::Lt => lhs < rhs,
            Op::Le => lhs <= rhs,
            Op::Gt => lhs > rhs,
            Op::Ge => lhs >= rhs,
        }
    }
}

impl FromStr for Op {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "==" => Op::Eq,
            "!=" => Op::Ne,
            "<" => Op::Lt,
            "<=" => Op::Le,
            ">" => Op::Gt,
            ">=" => Op::Ge,
            other => return Err(format!("unknown comparison `{other}`")),
        })
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Op::Eq => "==",
            Op::Ne => "!=",
            Op::Lt => "<",
            Op::Le => "<=",
            Op::Gt => ">",
            Op::Ge => ">=",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Register { id: String, role: Role, profile: String },
    Client { id: String },
    Share { patient: String, staff: String },
    Grant { signer: String, patient: String, staff: String, types: Vec<String> },
    Revoke { patient: String, staff: String },
    Write { patient: String, staff: String, data_type: String, text: String },
    Read { reader: String, patient: String, data_type: String },
    Load { client: String, count: u32, every: u64 },
    Fault(Fault),
    Wait(u64),
    ExpectOutcome(Outcome),
    Expect { metric: String, op: Op, value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub line: usize,
    pub text: String,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub config: SimConfig,
    pub steps: Vec<Step>,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let mut name = String::from("unnamed");
        let mut config = SimConfig::default();
        let mut steps = Vec::new();
        let mut in_script = false;
        let mut known: Vec<String> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let perr = |reason: String| ScenarioError::Parse { line, reason };
            if trimmed == "[script]" {
                config.validate().map_err(perr)?;
                in_script = true;
                continue;
            }
            if !in_script {
                let (k, v) = trimmed
                    .split_once('=')
                    .ok_or_else(|| perr(format!("expected `key = value`, got `{trimmed}`")))?;
                let v = v.split('#').next().unwrap_or("").trim();
                match k.trim() {
                    "name" => name = v.to_string(),
                    key => config.set(key, v).map_err(perr)?,
                }
                continue;
            }
            let words = shlex::split(trimmed).ok_or_else(|| perr("unbalanced quotes".into()))?;
            let action = parse_action(&words).map_err(perr)?;
            check_actors(&action, &mut known).map_err(perr)?;
            steps.push(Step {
                line,
                text: trimmed.to_string(),
                action,
            });
        }
        if !in_script {
            config.validate().map_err(|reason| ScenarioError::Parse { line: 0, reason })?;
        }
        Ok(Scenario { name, config, steps })
    }
}

/// Actions may only name actors registered on an earlier line.
fn check_actors(action: &Action, known: &mut Vec<String>) -> Result<(), String> {
    let need = |id: &String| {
        if known.contains(id) {
            Ok(())
        } else {
            Err(format!("`{id}` is not registered before this line"))
        }
    };
    match action {
        Action::Register { id, .. } | Action::Client { id } => {
            if known.contains(id) {
                return Err(format!("`{id}` is already registered"));
            }
            known.push(id.clone());
        }
        Action::Share { patient, staff } | Action::Revoke { patient, staff } | Action::Write { patient, staff, .. } => {
            need(patient)?;
            need(staff)?;
        }
        Action::Grant { signer, patient, staff, .. } => {
            need(signer)?;
            need(patient)?;
            need(staff)?;
        }
        Action::Read { reader, patient, .. } => {
            need(reader)?;
            need(patient)?;
        }
        Action::Load { client, .. } => need(client)?,
        Action::Fault(Fault::Flood { node, .. }) => need(node)?,
        _ => {}
    }
    Ok(())
}

fn parse_action(words: &[String]) -> Result<Action, String> {
    let w: Vec<&str> = words.iter().map(String::as_str).collect();
    let s = |x: &str| x.to_string();
    let num = |x: &str| -> Result<u64, String> { x.parse().map_err(|_| format!("`{x}` is not a number")) };
    Ok(match w.as_slice() {
        ["register", id, role, rest @ ..] if rest.len() <= 1 => Action::Register {
            id: s(id),
            role: role.parse().map_err(|e| format!("{e}"))?,
            profile: rest.first().map(|p| s(p)).unwrap_or_default(),
        },
        ["client", id] => Action::Client { id: s(id) },
        ["share", p, m] => Action::Share {
            patient: s(p),
            staff: s(m),
        },
        ["grant", p, m, types @ ..] => Action::Grant {
            signer: s(p),
            patient: s(p),
            staff: s(m),
            types: types.iter().map(|t| s(t)).collect(),
        },
        ["grant-as", signer, p, m, types @ ..] => Action::Grant {
            signer: s(signer),
            patient: s(p),
            staff: s(m),
            types: types.iter().map(|t| s(t)).collect(),
        },
        ["revoke", p, m] => Action::Revoke {
            patient: s(p),
            staff: s(m),
        },
        ["write", p, m, t, text] => Action::Write {
            patient: s(p),
            staff: s(m),
            data_type: s(t),
            text: s(text),
        },
        ["read", r, p, t] => Action::Read {
            reader: s(r),
            patient: s(p),
            data_type: s(t),
        },
        ["load", c, count, every] => Action::Load {
            client: s(c),
            count: num(count)? as u32,
            every: num(every)?.max(1),
        },
        ["fault", rest @ ..] => Action::Fault(Fault::parse(rest)?),
        ["wait", t] => Action::Wait(num(t)?),
        ["expect", "outcome", o] => Action::ExpectOutcome(o.parse()?),
        ["expect", metric, op, value] => {
            if !METRICS.contains(metric) {
                return Err(format!("unknown metric `{metric}`"));
            }
            Action::Expect {
                metric: s(metric),
                op: op.parse()?,
                value: value.parse().map_err(|_| format!("`{value}` is not a number"))?,
            }
        }
        [] => return Err("empty action".into()),
        [verb, ..] => return Err(format!("unrecognised action `{verb}`")),
    })
}

#[cfg(test)]
mod tests;
