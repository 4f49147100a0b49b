//! Small checked-in databases.

use crate::dataset::TransactionDatabase;

/// Seven transactions over items 1..=5 in which `sup({2}) = 6`,
/// `sup({1,2}) = 5`, `sup({1,2,3}) = 2`, `sup({2,3,5}) = 1` and `{2,3,4}` never
/// occurs.
pub const FIG2_TEXT: &str = include_str!("../../../data/fig2.txt");

pub fn fig2() -> TransactionDatabase {
    TransactionDatabase::parse_plain(FIG2_TEXT).expect("fixture parses")
}
