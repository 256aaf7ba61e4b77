use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::consensus::{Behavior, DEFAULT_VIEW_TIMEOUT};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {reason}")]
pub struct ConfigError {
    pub line: usize,
    pub reason: String,
}

/// Simulation parameters. Text form is one `key = value` per line.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub replicas: usize,
    pub delay_min: u64,
    pub delay_max: u64,
    pub drop_rate: f64,
    /// Transactions accepted per sender per window.
    pub rate_limit: u32,
    pub window: u64,
    pub view_timeout: u64,
    pub storage_nodes: usize,
    pub replication: usize,
    pub byzantine: BTreeMap<u32, Behavior>,
    pub max_ticks: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 1,
            replicas: 4,
            delay_min: 1,
            delay_max: 3,
            drop_rate: 0.0,
            rate_limit: 10,
            window: 100,
            view_timeout: DEFAULT_VIEW_TIMEOUT,
            storage_nodes: 0,
            replication: 0,
            byzantine: BTreeMap::new(),
            max_ticks: 20_000,
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "seed",
    "replicas",
    "delay",
    "drop_rate",
    "rate_limit",
    "window",
    "view_timeout",
    "storage_nodes",
    "replication",
    "byzantine",
    "max_ticks",
];

impl SimConfig {
    pub fn f(&self) -> usize {
        self.replicas.saturating_sub(1) / 3
    }

    pub fn is_honest(&self, replica: u32) -> bool {
        !self.byzantine.contains_key(&replica)
    }

    /// Sets one key. Used by the scenario parser too.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("`{key}` expects a number, got `{v}`"))
        }
        match key {
            "seed" => self.seed = num(key, value)?,
            "replicas" => self.replicas = num(key, value)?,
            "delay" => {
                let (lo, hi) = match value.split_once("..") {
                    Some((a, b)) => (num(key, a.trim())?, num(key, b.trim())?),
                    None => {
                        let v = num(key, value)?;
                        (v, v)
                    }
                };
                if lo == 0 || lo > hi {
                    return Err(format!("`delay` needs 1 <= min <= max, got `{value}`"));
                }
                self.delay_min = lo;
                self.delay_max = hi;
            }
            "drop_rate" => {
                let p: f64 = num(key, value)?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(format!("`drop_rate` must be within [0, 1], got `{value}`"));
                }
                self.drop_rate = p;
            }
            "rate_limit" => self.rate_limit = num(key, value)?,
            "window" => {
                self.window = num(key, value)?;
                if self.window == 0 {
                    return Err("`window` must be positive".into());
                }
            }
            "view_timeout" => self.view_timeout = num(key, value)?,
            "storage_nodes" => self.storage_nodes = num(key, value)?,
            "replication" => self.replication = num(key, value)?,
            "max_ticks" => self.max_ticks = num(key, value)?,
            "byzantine" => {
                self.byzantine.clear();
                for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    let (node, behavior) = item
                        .split_once(':')
                        .ok_or_else(|| format!("byzantine entry `{item}` should be `rN:behavior`"))?;
                    let id: u32 = node
                        .strip_prefix('r')
                        .and_then(|n| n.parse().ok())
                        .ok_or_else(|| format!("`{node}` is not a replica name"))?;
                    self.byzantine.insert(id, behavior.parse()?);
                }
            }
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.replicas == 0 || self.replicas % 3 != 1 {
            return Err(format!("replicas = {} is not of the form 3f+1", self.replicas));
        }
        if let Some(id) = self.byzantine.keys().find(|&&id| id as usize >= self.replicas) {
            return Err(format!("byzantine replica r{id} does not exist"));
        }
        if self.replication > self.storage_nodes {
            return Err(format!(
                "replication {} exceeds {} storage nodes",
                self.replication, self.storage_nodes
            ));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = SimConfig::default();
        cfg.apply_text(text)?;
        cfg.validate().map_err(|reason| ConfigError { line: 0, reason })?;
        Ok(cfg)
    }

    /// Applies `key = value` lines over the current values without validating.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| ConfigError { line: i + 1, reason };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            self.set(k.trim(), v.trim()).map_err(err)?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "replicas = {}", self.replicas);
        let _ = writeln!(out, "delay = {}..{}", self.delay_min, self.delay_max);
        let _ = writeln!(out, "drop_rate = {}", self.drop_rate);
        let _ = writeln!(out, "rate_limit = {}", self.rate_limit);
        let _ = writeln!(out, "window = {}", self.window);
        let _ = writeln!(out, "view_timeout = {}", self.view_timeout);
        let _ = writeln!(out, "storage_nodes = {}", self.storage_nodes);
        let _ = writeln!(out, "replication = {}", self.replication);
        let byz: Vec<String> = self
            .byzantine
            .iter()
            .map(|(id, b)| match b {
                Behavior::Delay(t) => format!("r{id}:delay={t}"),
                other => format!("r{id}:{other}"),
            })
            .collect();
        let _ = writeln!(out, "byzantine = {}", byz.join(","));
        let _ = writeln!(out, "max_ticks = {}", self.max_ticks);
        out
    }
}
