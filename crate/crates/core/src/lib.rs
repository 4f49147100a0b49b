//! Itemset mining driven by a deep Q-network agent.
//!
//! An agent edits an itemset one item at a time and is rewarded for reaching
//! high-utility itemsets, frequent itemsets or association rules. Exhaustive
//! miners in [`oracle`] provide ground truth.

mod bitset;

pub mod agent;
pub mod dataset;
pub mod environment;
pub mod error;
pub mod fixtures;
pub mod measures;
pub mod neuralnet;
pub mod oracle;
pub mod patternfile;
pub mod synthetic;
pub mod trainer;
pub mod transfer;

pub use dataset::{ExternalId, ItemId, TransactionDatabase};
pub use environment::{Action, ItemsetBits, Pattern, PatternScore, ScoredPattern, StateVector, StepOutcome};
pub use error::{Error, Result};
pub use measures::{MeasureConfig, Task};
pub use neuralnet::{NetworkSpec, QNetwork};
pub use trainer::{AgentKind, MiningResult, RunConfig, Threshold};
