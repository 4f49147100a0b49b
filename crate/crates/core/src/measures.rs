//! Interestingness measures and normalisation factors.
//!
//! All database scans go through here. Queries intersect per-item tid bitmaps
//! instead of rescanning transactions.

use serde::{Deserialize, Serialize};

use crate::bitset::TidSet;
use crate::dataset::{ItemId, TransactionDatabase};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Hui,
    Fi,
    Ar,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hui" => Ok(Task::Hui),
            "fi" => Ok(Task::Fi),
            "ar" => Ok(Task::Ar),
            other => Err(Error::Config(format!("unknown task '{other}'"))),
        }
    }
}

/// Normalisation factor of the confidence half of an AR state.
pub const CONFIDENCE_NORMALIZATION: f64 = 1.0;

/// Task, thresholds and normalisation factor for one mining run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureConfig {
    pub task: Task,
    /// Absolute support count (FI, AR) or absolute utility (HUI).
    pub threshold: u64,
    /// Minimum confidence in `[0, 1]`; AR only.
    pub min_conf: Option<f64>,
    pub z: f64,
}

impl MeasureConfig {
    pub fn new(db: &TransactionDatabase, task: Task, threshold: u64, min_conf: Option<f64>) -> Result<Self> {
        match (task, min_conf) {
            (Task::Ar, None) => return Err(Error::Config("association rules need a confidence threshold".into())),
            (Task::Ar, Some(c)) if !(0.0..=1.0).contains(&c) => {
                return Err(Error::Config(format!("confidence threshold {c} outside [0, 1]")))
            }
            (Task::Hui | Task::Fi, Some(_)) => {
                return Err(Error::Config("confidence threshold only applies to association rules".into()))
            }
            _ => {}
        }
        if task == Task::Hui && !db.is_utility() {
            return Err(Error::NotUtilityDatabase);
        }
        let z = normalization_factor(db, task);
        if z <= 0.0 {
            return Err(Error::Config("normalisation factor must be positive".into()));
        }
        Ok(MeasureConfig {
            task,
            threshold,
            min_conf,
            z,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Confidence {
    pub value: f64,
    /// Set when the antecedent never occurs; `value` is then 0.
    pub zero_support: bool,
}

fn check_itemset(db: &TransactionDatabase, items: &[ItemId]) -> Result<()> {
    if items.is_empty() {
        return Err(Error::InvalidItemset("empty itemset".into()));
    }
    if let Some(&bad) = items.iter().find(|&&i| i as usize >= db.item_count()) {
        return Err(Error::InvalidItemset(format!("item {bad} out of range")));
    }
    Ok(())
}

/// Transactions containing every item of `items`; all transactions for the empty set.
pub(crate) fn tidset_of(db: &TransactionDatabase, items: &[ItemId]) -> TidSet {
    let tidsets = &db.index().tidsets;
    match items.split_first() {
        None => TidSet::full(db.len()),
        Some((&first, rest)) => {
            let mut acc = tidsets[first as usize].clone();
            for &i in rest {
                acc.intersect_with(&tidsets[i as usize]);
            }
            acc
        }
    }
}

/// Utility of `items` summed over the transactions in `tids`, which must be a
/// subset of the transactions containing all of `items`.
pub(crate) fn utility_over(db: &TransactionDatabase, items: &[ItemId], tids: &TidSet) -> u64 {
    let occurrences = db.index().occurrences.as_ref().expect("utility database");
    let mut total = 0;
    for &i in items {
        for &(tid, u) in &occurrences[i as usize] {
            if tids.contains(tid as usize) {
                total += u;
            }
        }
    }
    total
}

pub fn support(db: &TransactionDatabase, items: &[ItemId]) -> Result<usize> {
    check_itemset(db, items)?;
    Ok(tidset_of(db, items).count())
}

pub fn exists_in(db: &TransactionDatabase, items: &[ItemId]) -> Result<bool> {
    check_itemset(db, items)?;
    Ok(!tidset_of(db, items).is_empty())
}

/// Sum over transactions containing `items` of the occurrence utilities of `items`.
pub fn utility(db: &TransactionDatabase, items: &[ItemId]) -> Result<u64> {
    if !db.is_utility() {
        return Err(Error::NotUtilityDatabase);
    }
    check_itemset(db, items)?;
    Ok(utility_over(db, items, &tidset_of(db, items)))
}

/// `support(antecedent ∪ {consequent}) / support(antecedent)`.
pub fn confidence(db: &TransactionDatabase, antecedent: &[ItemId], consequent: ItemId) -> Result<Confidence> {
    check_itemset(db, antecedent)?;
    check_itemset(db, &[consequent])?;
    if antecedent.contains(&consequent) {
        return Err(Error::InvalidItemset("consequent overlaps antecedent".into()));
    }
    let base = tidset_of(db, antecedent);
    let base_support = base.count();
    if base_support == 0 {
        return Ok(Confidence {
            value: 0.0,
            zero_support: true,
        });
    }
    let joint = base.intersection_count(&db.index().tidsets[consequent as usize]);
    Ok(Confidence {
        value: joint as f64 / base_support as f64,
        zero_support: false,
    })
}

/// `N` for FI and the support half of AR; total transaction utility for HUI.
pub fn normalization_factor(db: &TransactionDatabase, task: Task) -> f64 {
    match task {
        Task::Fi | Task::Ar => db.len() as f64,
        Task::Hui => db.total_utility().unwrap_or(0) as f64,
    }
}
