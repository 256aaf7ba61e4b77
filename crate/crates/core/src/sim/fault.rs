use crate::crypto::Digest;
use crate::store::Holder;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fault {
    Crash(u32),
    Recover(u32),
    /// Replica groups that can only talk within themselves.
    Partition(Vec<Vec<u32>>),
    Heal,
    /// Flip a byte of a stored entry. `key: None` targets the latest write;
    /// `holder: None` hits every copy.
    TamperStore { key: Option<Digest>, holder: Option<Holder> },
    LoseStore { key: Option<Digest>, holder: Option<Holder> },
    /// Scripted sender submitting `multiplier` times the rate limit.
    Flood { node: String, multiplier: u32, duration: u64 },
    /// A replica hands peers a modified copy of a committed block.
    ServeAlteredBlock { from: u32, height: Option<u64> },
    /// A node advertises a longer chain of fabricated blocks.
    FalseLedger { from: String, length: u64 },
    /// A replica proposes a block carrying a forged transaction.
    ForgeBlock { from: u32 },
    /// Nodes outside the replica set vote and propose.
    Outsiders { count: usize },
}

pub fn parse_replica(s: &str) -> Result<u32, String> {
    s.strip_prefix('r')
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| format!("`{s}` is not a replica name"))
}

fn parse_holder(s: &str) -> Result<Option<Holder>, String> {
    match s {
        "all" => return Ok(None),
        "local" => return Ok(Some(Holder::Local)),
        _ => {}
    }
    s.strip_prefix('s')
        .and_then(|n| n.parse().ok())
        .map(|n| Some(Holder::Node(n)))
        .ok_or_else(|| format!("`{s}` is not a store holder (all, local or sN)"))
}

fn parse_key(s: Option<&&str>) -> Result<Option<Digest>, String> {
    match s {
        None | Some(&"last") => Ok(None),
        Some(hex) => Digest::from_hex(hex)
            .map(Some)
            .map_err(|_| format!("`{hex}` is not a digest")),
    }
}

impl Fault {
    /// Parses the words after `fault` in a scenario script.
    pub fn parse(words: &[&str]) -> Result<Fault, String> {
        let num = |s: &str| -> Result<u64, String> { s.parse().map_err(|_| format!("`{s}` is not a number")) };
        match words {
            ["crash", r] => Ok(Fault::Crash(parse_replica(r)?)),
            ["recover", r] => Ok(Fault::Recover(parse_replica(r)?)),
            ["partition", spec] => {
                let groups = spec
                    .split('|')
                    .map(|g| g.split(',').map(|r| parse_replica(r.trim())).collect::<Result<Vec<_>, _>>())
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Fault::Partition(groups))
            }
            ["heal"] => Ok(Fault::Heal),
            ["tamper-store", holder, rest @ ..] if rest.len() <= 1 => Ok(Fault::TamperStore {
                holder: parse_holder(holder)?,
                key: parse_key(rest.first())?,
            }),
            ["lose-store", holder, rest @ ..] if rest.len() <= 1 => Ok(Fault::LoseStore {
                holder: parse_holder(holder)?,
                key: parse_key(rest.first())?,
            }),
            ["flood", node, mult, duration] => {
                let multiplier = mult.trim_end_matches('x');
                Ok(Fault::Flood {
                    node: node.to_string(),
                    multiplier: num(multiplier)? as u32,
                    duration: num(duration)?,
                })
            }
            ["serve-altered-block", r, rest @ ..] if rest.len() <= 1 => Ok(Fault::ServeAlteredBlock {
                from: parse_replica(r)?,
                height: rest.first().map(|h| num(h)).transpose()?,
            }),
            ["false-ledger", node, length] => Ok(Fault::FalseLedger {
                from: node.to_string(),
                length: num(length)?,
            }),
            ["forge-block", r] => Ok(Fault::ForgeBlock { from: parse_replica(r)? }),
            ["outsiders", count] => Ok(Fault::Outsiders {
                count: num(count)? as usize,
            }),
            _ => Err(format!("unrecognised fault `{}`", words.join(" "))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_form() {
        let cases: &[(&str, Fault)] = &[
            ("crash r0", Fault::Crash(0)),
            ("partition r0,r1|r2,r3", Fault::Partition(vec![vec![0, 1], vec![2, 3]])),
            ("heal", Fault::Heal),
            ("tamper-store s2", Fault::TamperStore { key: None, holder: Some(Holder::Node(2)) }),
            ("tamper-store all", Fault::TamperStore { key: None, holder: None }),
            ("lose-store local last", Fault::LoseStore { key: None, holder: Some(Holder::Local) }),
            (
                "flood mallory 100x 300",
                Fault::Flood { node: "mallory".into(), multiplier: 100, duration: 300 },
            ),
            ("serve-altered-block r3 1", Fault::ServeAlteredBlock { from: 3, height: Some(1) }),
            ("false-ledger r2 5", Fault::FalseLedger { from: "r2".into(), length: 5 }),
            ("forge-block r0", Fault::ForgeBlock { from: 0 }),
            ("outsiders 5", Fault::Outsiders { count: 5 }),
        ];
        for (text, want) in cases {
            let words: Vec<&str> = text.split_whitespace().collect();
            assert_eq!(&Fault::parse(&words).unwrap(), want, "{text}");
        }
        assert!(Fault::parse(&["crash", "x1"]).is_err());
        assert!(Fault::parse(&["explode"]).is_err());
    }
}
