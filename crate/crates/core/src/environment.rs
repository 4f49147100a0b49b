//! The mining environment: an itemset encoded as an `M`-bit vector, edited one
//! bit per step, scored against the target pattern type.

use std::collections::HashSet;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bitset::TidSet;
use crate::dataset::{ItemId, TransactionDatabase};
use crate::error::{Error, Result};
use crate::measures::{self, tidset_of, utility_over, MeasureConfig, Task, CONFIDENCE_NORMALIZATION};

/// Resampling cap for random bit-vector initialisation.
pub const INIT_RETRY_CAP: usize = 10_000;

/// Reward for a pattern extracted for the first time in the current episode.
pub const EXTRACTION_REWARD: i32 = 100;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ItemsetBits(Vec<bool>);

impl ItemsetBits {
    pub fn new(bits: Vec<bool>) -> Self {
        ItemsetBits(bits)
    }

    pub fn empty(m: usize) -> Self {
        ItemsetBits(vec![false; m])
    }

    pub fn from_items(m: usize, items: &[ItemId]) -> Self {
        let mut bits = vec![false; m];
        for &i in items {
            bits[i as usize] = true;
        }
        ItemsetBits(bits)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, m: usize) -> bool {
        self.0[m]
    }

    pub fn flip(&mut self, m: usize) {
        self.0[m] = !self.0[m];
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    /// The induced itemset, ascending.
    pub fn items(&self) -> Vec<ItemId> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i as ItemId)
            .collect()
    }
}

/// One of the `M + 1` actions: flip one item's inclusion, or redraw the bit-vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    Flip(usize),
    Reinitialize,
}

impl Action {
    pub fn from_index(index: usize, item_count: usize) -> Self {
        if index == item_count {
            Action::Reinitialize
        } else {
            Action::Flip(index)
        }
    }

    pub fn index(self, item_count: usize) -> usize {
        match self {
            Action::Flip(m) => m,
            Action::Reinitialize => item_count,
        }
    }
}

/// An extracted pattern in internal ids.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pattern {
    Itemset(Vec<ItemId>),
    Rule { antecedent: Vec<ItemId>, consequent: ItemId },
}

impl Pattern {
    /// All items of the pattern, ascending.
    pub fn items(&self) -> Vec<ItemId> {
        match self {
            Pattern::Itemset(items) => items.clone(),
            Pattern::Rule { antecedent, consequent } => {
                let mut all = antecedent.clone();
                all.push(*consequent);
                all.sort_unstable();
                all
            }
        }
    }

    /// Re-scores the pattern against the database.
    pub fn score(&self, db: &TransactionDatabase, task: Task) -> Result<PatternScore> {
        let items = self.items();
        let support = measures::support(db, &items)?;
        let utility = match task {
            Task::Hui => Some(measures::utility(db, &items)?),
            _ => None,
        };
        let confidence = match self {
            Pattern::Rule { antecedent, consequent } => Some(measures::confidence(db, antecedent, *consequent)?.value),
            Pattern::Itemset(_) => None,
        };
        Ok(PatternScore {
            support,
            utility,
            confidence,
        })
    }

    /// Whether a score satisfies the thresholds of `cfg`.
    pub fn meets(score: &PatternScore, cfg: &MeasureConfig) -> bool {
        match cfg.task {
            Task::Hui => score.utility.unwrap_or(0) >= cfg.threshold,
            Task::Fi => score.support as u64 >= cfg.threshold,
            Task::Ar => {
                score.support as u64 >= cfg.threshold
                    && score.confidence.unwrap_or(0.0) >= cfg.min_conf.unwrap_or(f64::INFINITY)
            }
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pattern::Itemset(items) => write!(f, "{items:?}"),
            Pattern::Rule { antecedent, consequent } => write!(f, "{antecedent:?} ==> {consequent}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternScore {
    pub support: usize,
    pub utility: Option<u64>,
    pub confidence: Option<f64>,
}

/// A pattern with its measures, as produced by miners.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredPattern {
    pub pattern: Pattern,
    pub score: PatternScore,
}

/// Environment state fed to the agent: one value per item (`2M` for AR, support
/// half first).
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    pub values: Vec<f64>,
    pub item_count: usize,
}

impl StateVector {
    /// The per-item values the Fusion agent and state baselines act on.
    pub fn item_values(&self) -> &[f64] {
        &self.values[..self.item_count]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub next_bits: ItemsetBits,
    pub reward: i32,
    /// Set whenever the resulting pattern meets the target thresholds.
    pub extracted: Option<Pattern>,
    pub measure_value: f64,
}

/// Draws bits independently with `P(bit m) = freq_m / N` until the itemset is
/// nonempty and occurs in the database.
pub fn random_initialize<R: Rng + ?Sized>(db: &TransactionDatabase, rng: &mut R) -> Result<ItemsetBits> {
    let n = db.len() as f64;
    let probabilities: Vec<f64> = db.item_frequencies().into_iter().map(|f| f as f64 / n).collect();
    draw_existing(db, &probabilities, rng)
}

fn draw_existing<R: Rng + ?Sized>(db: &TransactionDatabase, probabilities: &[f64], rng: &mut R) -> Result<ItemsetBits> {
    for _ in 0..INIT_RETRY_CAP {
        let bits: Vec<bool> = probabilities.iter().map(|&p| rng.random::<f64>() < p).collect();
        let bits = ItemsetBits(bits);
        let items = bits.items();
        if !items.is_empty() && !tidset_of(db, &items).is_empty() {
            return Ok(bits);
        }
    }
    Err(Error::InitExhausted {
        attempts: INIT_RETRY_CAP,
    })
}

pub fn apply_action<R: Rng + ?Sized>(
    bits: &ItemsetBits,
    action: Action,
    db: &TransactionDatabase,
    rng: &mut R,
) -> Result<ItemsetBits> {
    match action {
        Action::Flip(m) => {
            let mut next = bits.clone();
            next.flip(m);
            Ok(next)
        }
        Action::Reinitialize => random_initialize(db, rng),
    }
}

/// Reward bracket of `phi` against `xi`; `None` means the threshold is met.
fn bracket(phi: u64, xi: u64) -> Option<i32> {
    let (phi, xi) = (phi as u128, xi as u128);
    if 4 * phi < xi {
        Some(0)
    } else if 2 * phi < xi {
        Some(1)
    } else if 4 * phi < 3 * xi {
        Some(2)
    } else if phi < xi {
        Some(3)
    } else {
        None
    }
}

fn outcome(next: &ItemsetBits, reward: i32, extracted: Option<Pattern>, measure_value: f64) -> StepOutcome {
    StepOutcome {
        next_bits: next.clone(),
        reward,
        extracted,
        measure_value,
    }
}

/// Scores the transition `prev -> next`.
///
/// `episode_extracted` holds patterns already rewarded with 100 in the current
/// episode and is updated in place.
pub fn compute_reward(
    prev: &ItemsetBits,
    next: &ItemsetBits,
    action: Action,
    db: &TransactionDatabase,
    cfg: &MeasureConfig,
    episode_extracted: &mut HashSet<Pattern>,
) -> StepOutcome {
    let next_items = next.items();
    if next_items.is_empty() {
        return outcome(next, -1, None, 0.0);
    }
    let next_tids = tidset_of(db, &next_items);
    if next_tids.is_empty() {
        return outcome(next, -1, None, 0.0);
    }

    let rule_parts = match (cfg.task, action) {
        (Task::Ar, Action::Flip(m)) => {
            let added = next.get(m);
            let antecedent: Vec<ItemId> = if added { prev.items() } else { next_items.clone() };
            if antecedent.is_empty() {
                return outcome(next, -1, None, 0.0);
            }
            Some((antecedent, m as ItemId, added))
        }
        _ => None,
    };

    let phi = match (cfg.task, &rule_parts) {
        (Task::Hui, _) => utility_over(db, &next_items, &next_tids),
        (_, Some((_, _, false))) => tidset_of(db, &prev.items()).count() as u64,
        _ => next_tids.count() as u64,
    };
    if let Some(reward) = bracket(phi, cfg.threshold) {
        return outcome(next, reward, None, phi as f64);
    }

    let pattern = match (cfg.task, rule_parts) {
        (Task::Ar, Some((antecedent, consequent, _))) => {
            let antecedent_support = tidset_of(db, &antecedent).count();
            let conf = phi as f64 / antecedent_support as f64;
            if conf < cfg.min_conf.unwrap_or(f64::INFINITY) {
                return outcome(next, 4, None, phi as f64);
            }
            Pattern::Rule { antecedent, consequent }
        }
        // a redrawn bit-vector forms no rule
        (Task::Ar, None) => return outcome(next, 4, None, phi as f64),
        _ => Pattern::Itemset(next_items),
    };
    let reward = if episode_extracted.insert(pattern.clone()) {
        EXTRACTION_REWARD
    } else {
        4
    };
    outcome(next, reward, Some(pattern), phi as f64)
}

/// Intersections leaving out each member of `items` in turn.
fn leave_one_out(db: &TransactionDatabase, items: &[ItemId]) -> Vec<TidSet> {
    let tidsets = &db.index().tidsets;
    let k = items.len();
    let mut prefix = Vec::with_capacity(k + 1);
    prefix.push(TidSet::full(db.len()));
    for &i in items {
        let next = prefix.last().unwrap().intersection(&tidsets[i as usize]);
        prefix.push(next);
    }
    let mut out = vec![TidSet::empty(db.len()); k];
    let mut suffix = TidSet::full(db.len());
    for j in (0..k).rev() {
        out[j] = prefix[j].intersection(&suffix);
        suffix.intersect_with(&tidsets[items[j] as usize]);
    }
    out
}

/// One-flip-ahead state: for each item `m`, `ln(phi(X') / Z + 1)` where `X'`
/// is the current itemset with `m`'s inclusion flipped. Empty or absent `X'`
/// contributes 0. AR states append, per item, `ln(confidence + 1)` of the rule
/// formed by the flip.
pub fn compute_state(bits: &ItemsetBits, db: &TransactionDatabase, cfg: &MeasureConfig) -> StateVector {
    let m_count = bits.len();
    let items = bits.items();
    let base = tidset_of(db, &items);
    let without = leave_one_out(db, &items);
    let tidsets = &db.index().tidsets;
    let width = if cfg.task == Task::Ar { 2 * m_count } else { m_count };
    let mut values = vec![0.0; width];
    let mut member = 0;

    for m in 0..m_count {
        let included = bits.get(m);
        let member_pos = member;
        if included {
            member += 1;
        }
        match cfg.task {
            Task::Hui | Task::Fi => {
                if included && items.len() == 1 {
                    continue;
                }
                let (flipped_items, tids): (Vec<ItemId>, TidSet) = if included {
                    let mut rest = items.clone();
                    rest.remove(member_pos);
                    (rest, without[member_pos].clone())
                } else {
                    let mut more = items.clone();
                    more.push(m as ItemId);
                    (more, base.intersection(&tidsets[m]))
                };
                let phi = match cfg.task {
                    Task::Hui => utility_over(db, &flipped_items, &tids) as f64,
                    _ => tids.count() as f64,
                };
                values[m] = (phi / cfg.z + 1.0).ln();
            }
            Task::Ar => {
                let (joint, antecedent) = if included {
                    if items.len() == 1 {
                        continue;
                    }
                    (base.count(), without[member_pos].count())
                } else {
                    if items.is_empty() {
                        continue;
                    }
                    (base.intersection_count(&tidsets[m]), base.count())
                };
                let conf = if antecedent > 0 {
                    joint as f64 / antecedent as f64
                } else {
                    0.0
                };
                values[m] = (joint as f64 / cfg.z + 1.0).ln();
                values[m_count + m] = (conf / CONFIDENCE_NORMALIZATION + 1.0).ln();
            }
        }
    }
    StateVector {
        values,
        item_count: m_count,
    }
}

/// Appends a reinitialisation entry worth 2% of the mean per-item value.
pub fn extend_state(state: &StateVector) -> Vec<f64> {
    let items = state.item_values();
    let mean = if items.is_empty() {
        0.0
    } else {
        items.iter().sum::<f64>() / items.len() as f64
    };
    let mut out = items.to_vec();
    out.push(0.02 * mean);
    out
}

/// Owns the per-episode bookkeeping for one run over one database.
pub struct Environment<'a> {
    db: &'a TransactionDatabase,
    cfg: MeasureConfig,
    probabilities: Vec<f64>,
    episode_extracted: HashSet<Pattern>,
}

impl<'a> Environment<'a> {
    pub fn new(db: &'a TransactionDatabase, cfg: MeasureConfig) -> Self {
        let n = db.len() as f64;
        let probabilities = db.item_frequencies().into_iter().map(|f| f as f64 / n).collect();
        Environment {
            db,
            cfg,
            probabilities,
            episode_extracted: HashSet::new(),
        }
    }

    pub fn config(&self) -> &MeasureConfig {
        &self.cfg
    }

    pub fn item_count(&self) -> usize {
        self.db.item_count()
    }

    pub fn action_count(&self) -> usize {
        self.db.item_count() + 1
    }

    pub fn state_width(&self) -> usize {
        match self.cfg.task {
            Task::Ar => 2 * self.db.item_count(),
            _ => self.db.item_count(),
        }
    }

    /// Starts a new episode from a random bit-vector.
    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<ItemsetBits> {
        self.episode_extracted.clear();
        draw_existing(self.db, &self.probabilities, rng)
    }

    pub fn step<R: Rng + ?Sized>(&mut self, bits: &ItemsetBits, action: Action, rng: &mut R) -> Result<StepOutcome> {
        let next = match action {
            Action::Flip(m) => {
                let mut next = bits.clone();
                next.flip(m);
                next
            }
            Action::Reinitialize => draw_existing(self.db, &self.probabilities, rng)?,
        };
        Ok(compute_reward(bits, &next, action, self.db, &self.cfg, &mut self.episode_extracted))
    }

    pub fn state(&self, bits: &ItemsetBits) -> StateVector {
        compute_state(bits, self.db, &self.cfg)
    }
}
