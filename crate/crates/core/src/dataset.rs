//! Transaction databases in the SPMF plain and utility text formats.
//!
//! External item ids are remapped to dense zero-based internal ids in order of
//! first occurrence. Every database carries a vertical index (one tid bitmap
//! per item, plus per-item occurrence utilities in utility mode) built once at
//! construction; the measures module answers support and utility queries from
//! it.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use crate::bitset::TidSet;
use crate::error::{Error, Result};
use crate::measures::Task;

/// Dense internal item id in `[0, M)`.
pub type ItemId = u32;
/// Item id as written in the source file.
pub type ExternalId = u64;

#[derive(Clone, Debug)]
pub struct TransactionDatabase {
    transactions: Vec<Vec<ItemId>>,
    occurrence_utilities: Option<Vec<Vec<u64>>>,
    transaction_utilities: Option<Vec<u64>>,
    external_ids: Vec<ExternalId>,
    index: ItemIndex,
}

#[derive(Clone, Debug)]
pub(crate) struct ItemIndex {
    pub tidsets: Vec<TidSet>,
    /// Per item: `(tid, occurrence utility)` sorted by tid. Utility mode only.
    pub occurrences: Option<Vec<Vec<(u32, u64)>>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetStats {
    pub n: usize,
    pub m: usize,
    pub avg_transaction_len: f64,
    /// Support count per external item id.
    pub item_frequencies: BTreeMap<ExternalId, usize>,
    pub total_utility: Option<u64>,
}

impl TransactionDatabase {
    /// Builds a plain (FI/AR) database. Duplicate items inside a row are dropped;
    /// empty rows are rejected.
    pub fn from_transactions(rows: Vec<Vec<ExternalId>>) -> Result<Self> {
        let mut builder = Builder::default();
        for (line, row) in rows.into_iter().enumerate() {
            if row.is_empty() {
                return Err(Error::Parse {
                    line: line + 1,
                    message: "empty transaction".into(),
                });
            }
            builder.push(row.into_iter().map(|i| (i, 0)).collect(), line + 1, false)?;
        }
        builder.finish(false)
    }

    /// Builds a utility (HUI) database from `(item, occurrence utility)` rows.
    pub fn from_utility_transactions(rows: Vec<Vec<(ExternalId, u64)>>) -> Result<Self> {
        let mut builder = Builder::default();
        for (line, row) in rows.into_iter().enumerate() {
            if row.is_empty() {
                return Err(Error::Parse {
                    line: line + 1,
                    message: "empty transaction".into(),
                });
            }
            builder.push(row, line + 1, true)?;
        }
        builder.finish(true)
    }

    pub fn parse_plain(text: &str) -> Result<Self> {
        let mut builder = Builder::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let Some(content) = content_of(raw) else {
                continue;
            };
            let row = content
                .split_whitespace()
                .map(|tok| parse_number(tok, line))
                .collect::<Result<Vec<_>>>()?;
            builder.push(row.into_iter().map(|i| (i, 0)).collect(), line, false)?;
        }
        builder.finish(false)
    }

    /// Parses `i1 i2 … : TU : u1 u2 …` lines. Each `u` is the occurrence utility
    /// (unit profit times quantity) of the matching item.
    pub fn parse_utility(text: &str) -> Result<Self> {
        let mut builder = Builder::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let Some(content) = content_of(raw) else {
                continue;
            };
            let sections: Vec<&str> = content.split(':').collect();
            if sections.len() != 3 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected 3 ':'-separated sections, found {}", sections.len()),
                });
            }
            let items = sections[0]
                .split_whitespace()
                .map(|t| parse_number(t, line))
                .collect::<Result<Vec<_>>>()?;
            let tu = parse_number(sections[1].trim(), line)?;
            let utils = sections[2]
                .split_whitespace()
                .map(|t| parse_number(t, line))
                .collect::<Result<Vec<_>>>()?;
            if items.len() != utils.len() {
                return Err(Error::Parse {
                    line,
                    message: format!("{} items but {} utilities", items.len(), utils.len()),
                });
            }
            let sum: u64 = utils.iter().sum();
            if sum != tu {
                return Err(Error::Parse {
                    line,
                    message: format!("transaction utility {tu} differs from item utility sum {sum}"),
                });
            }
            builder.push(items.into_iter().zip(utils).collect(), line, true)?;
        }
        builder.finish(true)
    }

    pub fn load_plain(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_plain(&read(path.as_ref())?)
    }

    pub fn load_utility(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_utility(&read(path.as_ref())?)
    }

    /// Serialises back to the format the database was loaded from.
    pub fn to_spmf_string(&self) -> String {
        let mut out = String::new();
        for (n, row) in self.transactions.iter().enumerate() {
            let items: Vec<String> = row.iter().map(|&i| self.external_ids[i as usize].to_string()).collect();
            out.push_str(&items.join(" "));
            if let (Some(utils), Some(tus)) = (&self.occurrence_utilities, &self.transaction_utilities) {
                let us: Vec<String> = utils[n].iter().map(u64::to_string).collect();
                out.push_str(&format!(":{}:{}", tus[n], us.join(" ")));
            }
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.transactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transactions.is_empty()
    }

    pub fn item_count(&self) -> usize {
        self.external_ids.len()
    }

    pub fn is_utility(&self) -> bool {
        self.occurrence_utilities.is_some()
    }

    pub fn transactions(&self) -> &[Vec<ItemId>] {
        &self.transactions
    }

    pub fn transaction(&self, n: usize) -> &[ItemId] {
        &self.transactions[n]
    }

    /// Occurrence utilities aligned with `transaction(n)`.
    pub fn transaction_item_utilities(&self, n: usize) -> Option<&[u64]> {
        self.occurrence_utilities.as_ref().map(|u| u[n].as_slice())
    }

    pub fn transaction_utilities(&self) -> Option<&[u64]> {
        self.transaction_utilities.as_deref()
    }

    pub fn total_utility(&self) -> Option<u64> {
        self.transaction_utilities.as_ref().map(|t| t.iter().sum())
    }

    pub fn external_id(&self, item: ItemId) -> ExternalId {
        self.external_ids[item as usize]
    }

    pub fn external_ids(&self) -> &[ExternalId] {
        &self.external_ids
    }

    pub fn internal_id(&self, external: ExternalId) -> Option<ItemId> {
        self.external_ids.iter().position(|&e| e == external).map(|p| p as ItemId)
    }

    pub fn item_frequency(&self, item: ItemId) -> usize {
        self.index.tidsets[item as usize].count()
    }

    pub fn item_frequencies(&self) -> Vec<usize> {
        self.index.tidsets.iter().map(TidSet::count).collect()
    }

    pub(crate) fn index(&self) -> &ItemIndex {
        &self.index
    }

    pub fn stats(&self) -> DatasetStats {
        let n = self.len();
        let total_len: usize = self.transactions.iter().map(Vec::len).sum();
        DatasetStats {
            n,
            m: self.item_count(),
            avg_transaction_len: total_len as f64 / n as f64,
            item_frequencies: (0..self.item_count())
                .map(|i| (self.external_ids[i], self.item_frequency(i as ItemId)))
                .collect(),
            total_utility: self.total_utility(),
        }
    }

    /// Rebuilds a database from a subset of this one's transactions, keeping
    /// external ids. Item order follows first occurrence in the subset.
    fn rebuild<F>(&self, rows: impl Iterator<Item = usize>, keep: F) -> Result<Self>
    where
        F: Fn(ItemId) -> bool,
    {
        let utility = self.is_utility();
        let mut builder = Builder::default();
        for n in rows {
            let row: Vec<(ExternalId, u64)> = self.transactions[n]
                .iter()
                .enumerate()
                .filter(|(_, &i)| keep(i))
                .map(|(pos, &i)| {
                    let u = self.occurrence_utilities.as_ref().map_or(0, |u| u[n][pos]);
                    (self.external_ids[i as usize], u)
                })
                .collect();
            if row.is_empty() {
                continue;
            }
            builder.push(row, n + 1, utility)?;
        }
        builder.finish(utility)
    }
}

/// Removes items that cannot belong to any pattern of `task` at `threshold`
/// (absolute support count for FI/AR, absolute utility for HUI).
///
/// FI/AR drop items with support below the threshold. HUI drops items whose
/// transaction-weighted utilisation is below it, recomputing transaction
/// utilities over the surviving items and repeating until nothing changes.
/// Returns the pruned database and, for each new internal id, the id it had in
/// `db`.
pub fn prune_items(
    db: &TransactionDatabase,
    task: Task,
    threshold: u64,
) -> Result<(TransactionDatabase, Vec<ItemId>)> {
    let mut current = db.clone();
    loop {
        let keep: Vec<bool> = match task {
            Task::Fi | Task::Ar => current
                .item_frequencies()
                .into_iter()
                .map(|f| f as u64 >= threshold)
                .collect(),
            Task::Hui => {
                let tus = current.transaction_utilities.as_ref().ok_or(Error::NotUtilityDatabase)?;
                let mut twu = vec![0u64; current.item_count()];
                for (n, row) in current.transactions.iter().enumerate() {
                    for &i in row {
                        twu[i as usize] += tus[n];
                    }
                }
                twu.into_iter().map(|t| t >= threshold).collect()
            }
        };
        if keep.iter().all(|&k| k) {
            break;
        }
        if !keep.iter().any(|&k| k) {
            return Err(Error::NoCandidates { threshold });
        }
        current = current.rebuild(0..current.len(), |i| keep[i as usize])?;
    }
    let remap = current
        .external_ids
        .iter()
        .map(|&e| db.internal_id(e).expect("pruned item comes from the source database"))
        .collect();
    Ok((current, remap))
}

/// Splits into the first `floor(0.6 N)` transactions and the remainder. Each
/// partition derives its own item vocabulary; external ids are preserved.
pub fn split_source_target(db: &TransactionDatabase) -> Result<(TransactionDatabase, TransactionDatabase)> {
    let n = db.len();
    if n < 2 {
        return Err(Error::Config("source/target split needs at least 2 transactions".into()));
    }
    let cut = n * 3 / 5;
    let source = db.rebuild(0..cut, |_| true)?;
    let target = db.rebuild(cut..n, |_| true)?;
    Ok((source, target))
}

/// Converts a percentage threshold into absolute units: `ceil(pct / 100 * base)`.
///
/// A relative tolerance absorbs binary rounding of the product so that, e.g.,
/// 80% of 3196 yields 2557 and 50% of 8416 yields exactly 4208.
pub fn absolute_threshold(percent: f64, base: u64) -> u64 {
    let raw = percent / 100.0 * base as f64;
    let nudged = raw - raw.abs() * 1e-12;
    nudged.ceil().max(0.0) as u64
}

#[derive(Default)]
struct Builder {
    lookup: HashMap<ExternalId, ItemId>,
    external_ids: Vec<ExternalId>,
    rows: Vec<Vec<(ItemId, u64)>>,
}

impl Builder {
    fn push(&mut self, row: Vec<(ExternalId, u64)>, line: usize, utility: bool) -> Result<()> {
        if row.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty transaction".into(),
            });
        }
        let mut mapped: Vec<(ItemId, u64)> = Vec::with_capacity(row.len());
        for (ext, u) in row {
            let id = *self.lookup.entry(ext).or_insert_with(|| {
                self.external_ids.push(ext);
                (self.external_ids.len() - 1) as ItemId
            });
            mapped.push((id, u));
        }
        mapped.sort_unstable_by_key(|&(i, _)| i);
        let before = mapped.len();
        mapped.dedup_by_key(|&mut (i, _)| i);
        if utility && mapped.len() != before {
            return Err(Error::Parse {
                line,
                message: "item repeated within a utility transaction".into(),
            });
        }
        self.rows.push(mapped);
        Ok(())
    }

    fn finish(self, utility: bool) -> Result<TransactionDatabase> {
        if self.rows.is_empty() {
            return Err(Error::EmptyDatabase);
        }
        let n = self.rows.len();
        let m = self.external_ids.len();
        let mut tidsets = vec![TidSet::empty(n); m];
        let mut occurrences = vec![Vec::new(); m];
        let mut transactions = Vec::with_capacity(n);
        let mut occ_utils = Vec::with_capacity(n);
        let mut tus = Vec::with_capacity(n);
        for (tid, row) in self.rows.into_iter().enumerate() {
            for &(i, u) in &row {
                tidsets[i as usize].insert(tid);
                if utility {
                    occurrences[i as usize].push((tid as u32, u));
                }
            }
            tus.push(row.iter().map(|&(_, u)| u).sum());
            occ_utils.push(row.iter().map(|&(_, u)| u).collect());
            transactions.push(row.into_iter().map(|(i, _)| i).collect());
        }
        Ok(TransactionDatabase {
            transactions,
            occurrence_utilities: utility.then_some(occ_utils),
            transaction_utilities: utility.then_some(tus),
            external_ids: self.external_ids,
            index: ItemIndex {
                tidsets,
                occurrences: utility.then_some(occurrences),
            },
        })
    }
}

fn content_of(raw: &str) -> Option<&str> {
    let line = raw.trim_end_matches('\r').trim();
    // SPMF metadata lines start with '#', '%' or '@'
    if line.is_empty() || line.starts_with(['#', '%', '@']) {
        None
    } else {
        Some(line)
    }
}

fn parse_number(tok: &str, line: usize) -> Result<u64> {
    tok.parse().map_err(|_| Error::Parse {
        line,
        message: format!("'{tok}' is not a non-negative integer"),
    })
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
