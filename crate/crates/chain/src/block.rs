//! Blocks, records and the JSON-lines chain file.

use std::io::{BufRead, Write};

use bspow_core::binning::BinnedDistribution;
use bspow_core::Permutation;
use serde::{Deserialize, Serialize};

use crate::error::{ChainError, Result};
use crate::hashing::{Canonical, Digest, Encoder};
use crate::params::ParameterSet;

/// An opaque transaction payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    #[serde(with = "hex_bytes")]
    pub payload: Vec<u8>,
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        hex::decode(String::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

/// Hash over the ordered, length-prefixed transaction payloads.
pub fn tx_root(txs: &[Transaction]) -> Digest {
    let mut e = Encoder::new();
    e.u64(txs.len() as u64);
    for tx in txs {
        e.bytes(&tx.payload);
    }
    e.digest_of()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockHeader {
    pub height: u64,
    pub timestamp: u64,
    pub prev_header_hash: Digest,
    pub prev_record_hash: Digest,
    pub tx_root: Digest,
    pub pm_hash: Digest,
}

impl Canonical for BlockHeader {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.height)
            .u64(self.timestamp)
            .digest(&self.prev_header_hash)
            .digest(&self.prev_record_hash)
            .digest(&self.tx_root)
            .digest(&self.pm_hash);
    }
}

/// What a block appends to the chain once its round settles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub pi: Permutation,
    pub pi_mb: Permutation,
    pub pi_sb: Permutation,
    pub beacon_mb: Digest,
    pub beacon_sb: Digest,
    pub p_hat_mb: BinnedDistribution,
    pub mu_net: f64,
}

impl Canonical for BlockRecord {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.pi)
            .put(&self.pi_mb)
            .put(&self.pi_sb)
            .digest(&self.beacon_mb)
            .digest(&self.beacon_sb)
            .put(&self.p_hat_mb)
            .f64(self.mu_net);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlashReason {
    RevealMismatch,
    NoReveal,
    Validation,
}

/// Settlement of one participant. Amounts are signed token units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Payout {
    pub miner: String,
    pub samples: u64,
    pub validated: bool,
    pub winner: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slashed: Option<SlashReason>,
    pub reward: i64,
    pub penalty: i64,
}

impl Payout {
    pub fn delta(&self) -> i64 {
        self.reward - self.penalty
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub desk_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub header: BlockHeader,
    pub transactions: Vec<Transaction>,
    pub params: ParameterSet,
    pub record: BlockRecord,
    pub payouts: Vec<Payout>,
    pub provenance: Provenance,
}

impl Block {
    pub fn header_hash(&self) -> Digest {
        self.header.canonical_hash()
    }

    pub fn record_hash(&self) -> Digest {
        self.record.canonical_hash()
    }

    pub fn minted(&self) -> i64 {
        self.payouts.iter().map(|p| p.reward).sum()
    }

    pub fn burned(&self) -> i64 {
        self.payouts.iter().map(|p| p.penalty).sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub blocks: Vec<Block>,
}

impl Chain {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn tip(&self) -> Option<&Block> {
        self.blocks.last()
    }

    /// `(height, prev_header_hash, prev_record_hash)` for the next block.
    pub fn next_link(&self) -> (u64, Digest, Digest) {
        match self.tip() {
            None => (0, Digest::ZERO, Digest::ZERO),
            Some(b) => (b.header.height + 1, b.header_hash(), b.record_hash()),
        }
    }

    pub fn used_beacons(&self) -> impl Iterator<Item = Digest> + '_ {
        self.blocks.iter().flat_map(|b| [b.record.beacon_mb, b.record.beacon_sb])
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for b in &self.blocks {
            serde_json::to_writer(&mut w, b)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_jsonl(&mut out).expect("writing to memory");
        out
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut blocks = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let b: Block =
                serde_json::from_str(&line).map_err(|e| ChainError::Malformed(format!("line {}: {e}", i + 1)))?;
            blocks.push(b);
        }
        if blocks.is_empty() {
            return Err(ChainError::Malformed("no blocks".into()));
        }
        Ok(Chain { blocks })
    }
}
