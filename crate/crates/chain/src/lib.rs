//! Consensus state machine, chain verification and agent-based campaigns.

pub mod agents;
pub mod block;
pub mod error;
pub mod hashing;
pub mod params;
pub mod round;
pub mod verify;

pub use block::{Block, BlockHeader, BlockRecord, Chain, Payout, Provenance, SlashReason, Transaction};
pub use error::{ChainError, Result};
pub use hashing::{hash_to_permutation, Canonical, Digest};
pub use params::{Estimator, ParameterSet};
pub use round::{announce_block, Phase, Round};
