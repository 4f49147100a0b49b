//! Exhaustive miners used as ground truth.
//!
//! Only itemsets that occur in at least one transaction are reported, so a
//! threshold of zero means "every existing itemset".

use std::collections::{HashMap, HashSet};

use crate::bitset::TidSet;
use crate::dataset::{ItemId, TransactionDatabase};
use crate::environment::{Pattern, PatternScore, ScoredPattern};
use crate::error::{Error, Result};

/// Default bound on candidates (FI/AR) or utility lists (HUI) examined.
pub const DEFAULT_CANDIDATE_CAP: usize = 20_000_000;

/// All itemsets with support at least `min_sup`, found level by level with
/// downward-closure pruning.
pub fn mine_fi_exhaustive(db: &TransactionDatabase, min_sup: u64) -> Result<Vec<ScoredPattern>> {
    mine_fi_capped(db, min_sup, DEFAULT_CANDIDATE_CAP)
}

pub fn mine_fi_capped(db: &TransactionDatabase, min_sup: u64, cap: usize) -> Result<Vec<ScoredPattern>> {
    let mut out: Vec<ScoredPattern> = frequent_itemsets(db, min_sup, cap)?
        .into_iter()
        .map(|(items, support)| ScoredPattern {
            pattern: Pattern::Itemset(items),
            score: PatternScore {
                support,
                utility: None,
                confidence: None,
            },
        })
        .collect();
    out.sort_by(|a, b| a.pattern.cmp(&b.pattern));
    Ok(out)
}

fn frequent_itemsets(db: &TransactionDatabase, min_sup: u64, cap: usize) -> Result<Vec<(Vec<ItemId>, usize)>> {
    let min_sup = min_sup.max(1) as usize;
    let tidsets = &db.index().tidsets;
    let mut level: Vec<(Vec<ItemId>, TidSet)> = (0..db.item_count() as ItemId)
        .filter(|&i| tidsets[i as usize].count() >= min_sup)
        .map(|i| (vec![i], tidsets[i as usize].clone()))
        .collect();
    let mut examined = db.item_count();
    let mut found = Vec::new();

    while !level.is_empty() {
        let known: HashSet<&[ItemId]> = level.iter().map(|(items, _)| items.as_slice()).collect();
        let mut next = Vec::new();
        let mut start = 0;
        while start < level.len() {
            let k = level[start].0.len();
            let prefix = &level[start].0[..k - 1];
            let mut end = start + 1;
            while end < level.len() && &level[end].0[..k - 1] == prefix {
                end += 1;
            }
            for a in start..end {
                for b in a + 1..end {
                    let mut candidate = level[a].0.clone();
                    candidate.push(*level[b].0.last().unwrap());
                    let closed = (0..k - 1).all(|skip| {
                        let subset: Vec<ItemId> = candidate
                            .iter()
                            .enumerate()
                            .filter(|&(p, _)| p != skip)
                            .map(|(_, &i)| i)
                            .collect();
                        known.contains(subset.as_slice())
                    });
                    if !closed {
                        continue;
                    }
                    examined += 1;
                    if examined > cap {
                        return Err(Error::CandidateCap { cap });
                    }
                    let tids = level[a].1.intersection(&level[b].1);
                    if tids.count() >= min_sup {
                        next.push((candidate, tids));
                    }
                }
            }
            start = end;
        }
        found.extend(level.drain(..).map(|(items, tids)| (items, tids.count())));
        level = next;
    }
    Ok(found)
}

/// All rules `X \ {c} -> c` with `sup(X) >= min_sup` and confidence at least
/// `min_conf`, for frequent `X` with at least two items.
pub fn mine_ar_exhaustive(db: &TransactionDatabase, min_sup: u64, min_conf: f64) -> Result<Vec<ScoredPattern>> {
    mine_ar_capped(db, min_sup, min_conf, DEFAULT_CANDIDATE_CAP)
}

pub fn mine_ar_capped(db: &TransactionDatabase, min_sup: u64, min_conf: f64, cap: usize) -> Result<Vec<ScoredPattern>> {
    let frequent = frequent_itemsets(db, min_sup, cap)?;
    let support: HashMap<&[ItemId], usize> = frequent.iter().map(|(i, s)| (i.as_slice(), *s)).collect();
    let mut out = Vec::new();
    for (items, sup) in &frequent {
        if items.len() < 2 {
            continue;
        }
        for (pos, &consequent) in items.iter().enumerate() {
            let mut antecedent = items.clone();
            antecedent.remove(pos);
            let base = support[antecedent.as_slice()];
            let conf = *sup as f64 / base as f64;
            if conf >= min_conf {
                out.push(ScoredPattern {
                    pattern: Pattern::Rule { antecedent, consequent },
                    score: PatternScore {
                        support: *sup,
                        utility: None,
                        confidence: Some(conf),
                    },
                });
            }
        }
    }
    out.sort_by(|a, b| a.pattern.cmp(&b.pattern));
    Ok(out)
}

struct UtilityList {
    item: ItemId,
    /// `(tid, utility of the itemset, remaining utility after its last item)`
    entries: Vec<(u32, u64, u64)>,
    sum_iutil: u64,
    sum_rutil: u64,
}

impl UtilityList {
    fn new(item: ItemId, entries: Vec<(u32, u64, u64)>) -> Self {
        let sum_iutil = entries.iter().map(|e| e.1).sum();
        let sum_rutil = entries.iter().map(|e| e.2).sum();
        UtilityList {
            item,
            entries,
            sum_iutil,
            sum_rutil,
        }
    }
}

/// All itemsets with utility at least `min_util`: TWU-filtered items in
/// ascending TWU order, then depth-first search over utility lists pruned by
/// the remaining-utility bound.
pub fn mine_hui_exhaustive(db: &TransactionDatabase, min_util: u64) -> Result<Vec<ScoredPattern>> {
    mine_hui_capped(db, min_util, DEFAULT_CANDIDATE_CAP)
}

pub fn mine_hui_capped(db: &TransactionDatabase, min_util: u64, cap: usize) -> Result<Vec<ScoredPattern>> {
    let tus = db.transaction_utilities().ok_or(Error::NotUtilityDatabase)?;
    let m = db.item_count();
    let mut twu = vec![0u64; m];
    for (n, row) in db.transactions().iter().enumerate() {
        for &i in row {
            twu[i as usize] += tus[n];
        }
    }
    let mut order: Vec<ItemId> = (0..m as ItemId).filter(|&i| twu[i as usize] >= min_util).collect();
    order.sort_by_key(|&i| (twu[i as usize], i));
    let mut rank = vec![usize::MAX; m];
    for (r, &i) in order.iter().enumerate() {
        rank[i as usize] = r;
    }

    let mut entries: Vec<Vec<(u32, u64, u64)>> = vec![Vec::new(); order.len()];
    for n in 0..db.len() {
        let utils = db.transaction_item_utilities(n).expect("utility database");
        let mut row: Vec<(usize, u64)> = db
            .transaction(n)
            .iter()
            .zip(utils)
            .filter(|(&i, _)| rank[i as usize] != usize::MAX)
            .map(|(&i, &u)| (rank[i as usize], u))
            .collect();
        row.sort_unstable();
        let mut remaining: u64 = row.iter().map(|r| r.1).sum();
        for (r, u) in row {
            remaining -= u;
            entries[r].push((n as u32, u, remaining));
        }
    }
    let lists: Vec<UtilityList> = order
        .iter()
        .zip(entries)
        .map(|(&i, e)| UtilityList::new(i, e))
        .collect();

    let mut search = HuiSearch {
        min_util,
        cap,
        built: lists.len(),
        out: Vec::new(),
    };
    search.run(&mut Vec::new(), None, &lists)?;
    let mut out = search.out;
    out.sort_by(|a, b| a.pattern.cmp(&b.pattern));
    Ok(out)
}

struct HuiSearch {
    min_util: u64,
    cap: usize,
    built: usize,
    out: Vec<ScoredPattern>,
}

impl HuiSearch {
    fn run(&mut self, prefix: &mut Vec<ItemId>, parent: Option<&UtilityList>, lists: &[UtilityList]) -> Result<()> {
        for (idx, x) in lists.iter().enumerate() {
            if x.entries.is_empty() {
                continue;
            }
            prefix.push(x.item);
            if x.sum_iutil >= self.min_util {
                let mut items = prefix.clone();
                items.sort_unstable();
                self.out.push(ScoredPattern {
                    pattern: Pattern::Itemset(items),
                    score: PatternScore {
                        support: x.entries.len(),
                        utility: Some(x.sum_iutil),
                        confidence: None,
                    },
                });
            }
            if x.sum_iutil + x.sum_rutil >= self.min_util {
                let mut extensions = Vec::new();
                for y in &lists[idx + 1..] {
                    self.built += 1;
                    if self.built > self.cap {
                        return Err(Error::CandidateCap { cap: self.cap });
                    }
                    let joined = construct(parent, x, y);
                    if !joined.entries.is_empty() {
                        extensions.push(joined);
                    }
                }
                self.run(prefix, Some(x), &extensions)?;
            }
            prefix.pop();
        }
        Ok(())
    }
}

/// Utility list of `P ∪ {x, y}` from those of `P ∪ {x}` and `P ∪ {y}`.
fn construct(parent: Option<&UtilityList>, px: &UtilityList, py: &UtilityList) -> UtilityList {
    let mut entries = Vec::new();
    let (mut j, mut k) = (0, 0);
    for &(tid, iu, _) in &px.entries {
        while j < py.entries.len() && py.entries[j].0 < tid {
            j += 1;
        }
        if j == py.entries.len() {
            break;
        }
        let (ty, iuy, ruy) = py.entries[j];
        if ty != tid {
            continue;
        }
        let shared = match parent {
            Some(p) => {
                while p.entries[k].0 < tid {
                    k += 1;
                }
                p.entries[k].1
            }
            None => 0,
        };
        entries.push((tid, iu + iuy - shared, ruy));
    }
    UtilityList::new(py.item, entries)
}
