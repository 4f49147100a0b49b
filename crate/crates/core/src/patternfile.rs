//! Text format for mined patterns, one per line in external ids:
//!
//! ```text
//! 1 2 #SUP: 5
//! 1 2 #UTIL: 11
//! 1 ==> 2 #SUP: 5 #CONF: 0.8333333333333334
//! ```

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::dataset::{ExternalId, TransactionDatabase};
use crate::environment::{Pattern, ScoredPattern};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExternalPattern {
    Itemset(Vec<ExternalId>),
    Rule {
        antecedent: Vec<ExternalId>,
        consequent: ExternalId,
    },
}

pub fn to_external(db: &TransactionDatabase, pattern: &Pattern) -> ExternalPattern {
    let ext = |items: &[u32]| {
        let mut v: Vec<ExternalId> = items.iter().map(|&i| db.external_id(i)).collect();
        v.sort_unstable();
        v
    };
    match pattern {
        Pattern::Itemset(items) => ExternalPattern::Itemset(ext(items)),
        Pattern::Rule { antecedent, consequent } => ExternalPattern::Rule {
            antecedent: ext(antecedent),
            consequent: db.external_id(*consequent),
        },
    }
}

fn join(items: &[ExternalId]) -> String {
    items.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ")
}

/// Renders `patterns` sorted by their external ids.
pub fn format_patterns(db: &TransactionDatabase, patterns: &[ScoredPattern]) -> String {
    let mut lines: Vec<(ExternalPattern, String)> = patterns
        .iter()
        .map(|sp| {
            let ext = to_external(db, &sp.pattern);
            let mut line = match &ext {
                ExternalPattern::Itemset(items) => join(items),
                ExternalPattern::Rule { antecedent, consequent } => format!("{} ==> {consequent}", join(antecedent)),
            };
            match (sp.score.utility, sp.score.confidence) {
                (Some(u), _) => {
                    let _ = write!(line, " #UTIL: {u}");
                }
                (None, Some(c)) => {
                    let _ = write!(line, " #SUP: {} #CONF: {c}", sp.score.support);
                }
                (None, None) => {
                    let _ = write!(line, " #SUP: {}", sp.score.support);
                }
            }
            (ext, line)
        })
        .collect();
    lines.sort();
    let mut out = String::new();
    for (_, line) in lines {
        out.push_str(&line);
        out.push('\n');
    }
    out
}

fn parse_ids(s: &str, line: usize) -> Result<Vec<ExternalId>> {
    let mut ids: Vec<ExternalId> = s
        .split_whitespace()
        .map(|t| {
            t.parse().map_err(|_| Error::Parse {
                line,
                message: format!("bad item '{t}'"),
            })
        })
        .collect::<Result<_>>()?;
    ids.sort_unstable();
    Ok(ids)
}

/// Reads the patterns of a file written by [`format_patterns`]; annotations
/// are ignored.
pub fn parse_patterns(text: &str) -> Result<BTreeSet<ExternalPattern>> {
    let mut out = BTreeSet::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let pattern = match body.split_once("==>") {
            Some((a, c)) => {
                let consequent = parse_ids(c, line)?;
                if consequent.len() != 1 {
                    return Err(Error::Parse {
                        line,
                        message: "rule consequent must be one item".into(),
                    });
                }
                ExternalPattern::Rule {
                    antecedent: parse_ids(a, line)?,
                    consequent: consequent[0],
                }
            }
            None => ExternalPattern::Itemset(parse_ids(body, line)?),
        };
        out.insert(pattern);
    }
    Ok(out)
}

/// Percentage of `reference` present in `found`, truncated to one decimal.
/// An empty reference counts as fully covered.
pub fn coverage_percent(found: &BTreeSet<ExternalPattern>, reference: &BTreeSet<ExternalPattern>) -> f64 {
    if reference.is_empty() {
        return 100.0;
    }
    let hit = reference.intersection(found).count() as u64;
    (hit * 1000 / reference.len() as u64) as f64 / 10.0
}
