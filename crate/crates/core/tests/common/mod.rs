#![allow(dead_code)]

use gimrl::{ItemId, TransactionDatabase};
use proptest::prelude::*;

/// Rows of `(external id, occurrence utility)`; items drawn from `1..=m`.
pub fn utility_rows(max_items: usize, max_rows: usize) -> impl Strategy<Value = Vec<Vec<(u64, u64)>>> {
    (1..=max_items).prop_flat_map(move |m| {
        let row = proptest::collection::btree_map(1..=m as u64, 1u64..=10, 1..=m).prop_map(|r| r.into_iter().collect());
        proptest::collection::vec(row, 1..=max_rows)
    })
}

pub fn itemsets(m: usize) -> impl Iterator<Item = Vec<ItemId>> {
    (1u32..(1 << m)).map(move |mask| (0..m as ItemId).filter(|i| mask & (1 << i) != 0).collect())
}

pub fn contains(row: &[ItemId], items: &[ItemId]) -> bool {
    items.iter().all(|i| row.contains(i))
}

pub fn brute_support(db: &TransactionDatabase, items: &[ItemId]) -> usize {
    db.transactions().iter().filter(|t| contains(t, items)).count()
}

pub fn brute_utility(db: &TransactionDatabase, items: &[ItemId]) -> u64 {
    let mut total = 0;
    for n in 0..db.len() {
        let row = db.transaction(n);
        if !contains(row, items) {
            continue;
        }
        let utils = db.transaction_item_utilities(n).unwrap();
        for (pos, i) in row.iter().enumerate() {
            if items.contains(i) {
                total += utils[pos];
            }
        }
    }
    total
}

pub fn ids(db: &TransactionDatabase, external: &[u64]) -> Vec<ItemId> {
    external.iter().map(|&e| db.internal_id(e).unwrap()).collect()
}
