//! Seeded synthetic utility databases for desk-scale experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{ExternalId, TransactionDatabase};
use crate::error::Result;

/// A correlated block of high-profit items, a set of frequent low-profit
/// items, and a tail of rare mid-profit items.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub transactions: usize,
    /// Unit profits of the correlated block.
    pub block_profits: Vec<u64>,
    /// Chance a transaction draws the block at all.
    pub block_rate: f64,
    /// Chance each block member is kept once the block is drawn.
    pub block_keep: f64,
    pub frequent_count: usize,
    pub frequent_rate: f64,
    pub rare_profits: Vec<u64>,
    pub rare_rate: f64,
    pub max_quantity: u64,
}

impl Default for SyntheticSpec {
    /// 200 transactions over 12 items.
    fn default() -> Self {
        SyntheticSpec {
            transactions: 200,
            block_profits: vec![10, 9, 8, 7, 6, 5],
            block_rate: 0.3,
            block_keep: 0.9,
            frequent_count: 6,
            frequent_rate: 0.5,
            rare_profits: Vec::new(),
            rare_rate: 0.0,
            max_quantity: 4,
        }
    }
}

impl SyntheticSpec {
    pub fn item_count(&self) -> usize {
        self.block_profits.len() + self.frequent_count + self.rare_profits.len()
    }

    /// Utility database with external ids `1..=item_count`, block first.
    pub fn generate(&self, seed: u64) -> Result<TransactionDatabase> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let block = self.block_profits.len();
        let mut rows = Vec::with_capacity(self.transactions);
        for _ in 0..self.transactions {
            let mut row: Vec<(ExternalId, u64)> = Vec::new();
            let qty = |rng: &mut ChaCha8Rng| rng.random_range(1..=self.max_quantity);
            if rng.random::<f64>() < self.block_rate {
                for (j, &p) in self.block_profits.iter().enumerate() {
                    if rng.random::<f64>() < self.block_keep {
                        row.push((j as ExternalId + 1, p * qty(&mut rng)));
                    }
                }
            }
            for j in 0..self.frequent_count {
                if rng.random::<f64>() < self.frequent_rate {
                    row.push(((block + j) as ExternalId + 1, qty(&mut rng)));
                }
            }
            for (j, &p) in self.rare_profits.iter().enumerate() {
                if rng.random::<f64>() < self.rare_rate {
                    row.push(((block + self.frequent_count + j) as ExternalId + 1, p * qty(&mut rng)));
                }
            }
            if row.is_empty() {
                row.push((block as ExternalId + 1, 1));
            }
            rows.push(row);
        }
        TransactionDatabase::from_utility_transactions(rows)
    }
}

/// The default 200 x 12 database.
pub fn desk_database(seed: u64) -> Result<TransactionDatabase> {
    SyntheticSpec::default().generate(seed)
}
