//! Coalition structures, their merge history, and the merge/split protocol.

mod enumerate;
mod ledger;
mod log;
mod protocol;
mod structure;

pub use enumerate::{candidate_coalitions, enumerate_partitions, Partitions};
pub use ledger::{redistribute, MergeTree};
pub use log::{DecisionLog, DecisionRecord, PassKind};
pub use protocol::{
    evaluate_merge, evaluate_split, merge_pass, split_pass, Negotiation, PassOutcome,
    ProtocolMode, SplitCandidates,
};
pub(crate) use protocol::share_ratio;
pub use structure::{CoalitionId, CoalitionStructure, DEFAULT_MAX_BLOCK};
