//! Independent re-verification of a stored chain.

use std::collections::BTreeSet;

use bspow_core::binning::{exact_mode_binned, pbp, state_bins, tv_distance, ModeBinning};
use bspow_core::economics::RewardMode;
use bspow_core::rng;
use bspow_core::sampler::{exact_distribution, permuted_input, Sampler};
use bspow_core::StateSpace;
use serde::{Deserialize, Serialize};

use crate::block::{tx_root, Block, Chain};
use crate::error::{ChainError, Result};
use crate::hashing::{hash_to_permutation, tags, Canonical, Digest};
use crate::params::matrix_ref;
use crate::round::block_lottery;

/// Samples drawn per block when re-estimating `μ_net` with the simulated
/// device.
pub const ORACLE_SAMPLES: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyMode {
    /// Hash links, permutations, `P̂` and payouts.
    Classical,
    /// Classical checks plus fresh sampling of `μ_net`.
    QuantumOracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockVerdict {
    pub height: u64,
    pub ok: bool,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub mode: VerifyMode,
    pub blocks: Vec<BlockVerdict>,
}

impl VerifyReport {
    pub fn all_ok(&self) -> bool {
        self.blocks.iter().all(|b| b.ok)
    }

    /// Indices (positions in the chain) of flagged blocks.
    pub fn flagged(&self) -> Vec<usize> {
        self.blocks.iter().enumerate().filter(|(_, b)| !b.ok).map(|(i, _)| i).collect()
    }
}

pub fn verify_chain(chain: &Chain, mode: VerifyMode) -> Result<VerifyReport> {
    if chain.is_empty() {
        return Err(ChainError::Malformed("no blocks".into()));
    }
    let mut seen_beacons = BTreeSet::new();
    let mut verdicts: Vec<BlockVerdict> = Vec::with_capacity(chain.len());
    for (i, block) in chain.blocks.iter().enumerate() {
        let mut reasons = Vec::new();
        let parent = i.checked_sub(1).map(|p| &chain.blocks[p]);
        check_links(block, parent, i as u64, &mut reasons);
        for beacon in [block.record.beacon_mb, block.record.beacon_sb] {
            if !seen_beacons.insert(beacon) {
                reasons.push(format!("beacon {beacon} reused"));
            }
        }
        if let Err(e) = check_content(block, mode, &mut reasons) {
            reasons.push(format!("recomputation failed: {e}"));
        }
        if let Some(prev) = verdicts.last() {
            if !prev.ok {
                reasons.push(format!("ancestor block {} flagged", prev.height));
            }
        }
        verdicts.push(BlockVerdict { height: block.header.height, ok: reasons.is_empty(), reasons });
    }
    Ok(VerifyReport { mode, blocks: verdicts })
}

fn check_links(block: &Block, parent: Option<&Block>, position: u64, reasons: &mut Vec<String>) {
    let h = &block.header;
    if h.height != position {
        reasons.push(format!("height {} at position {position}", h.height));
    }
    let (prev_header, prev_record) = match parent {
        None => (Digest::ZERO, Digest::ZERO),
        Some(p) => {
            if h.timestamp < p.header.timestamp {
                reasons.push("timestamp precedes parent".into());
            }
            (p.header_hash(), p.record_hash())
        }
    };
    if h.prev_header_hash != prev_header {
        reasons.push("prev_header_hash does not match parent".into());
    }
    if h.prev_record_hash != prev_record {
        reasons.push("prev_record_hash does not match parent record".into());
    }
    if h.tx_root != tx_root(&block.transactions) {
        reasons.push("tx_root does not match transactions".into());
    }
    if h.pm_hash != block.params.canonical_hash() {
        reasons.push("pm_hash does not match parameters".into());
    }
}

fn check_content(block: &Block, mode: VerifyMode, reasons: &mut Vec<String>) -> Result<()> {
    let pm = &block.params;
    let rec = &block.record;
    pm.validate()?;
    let u = pm.interferometer()?;
    if matrix_ref(&u) != pm.u_ref {
        reasons.push("u_ref does not match the interferometer".into());
    }
    let m = pm.modes as usize;
    let states = pm.state_count()?;
    let pi = hash_to_permutation(&block.header_hash(), m, tags::INPUT);
    if rec.pi != pi {
        reasons.push("input permutation does not follow from the header".into());
    }
    let pi_mb = hash_to_permutation(&rec.beacon_mb, m, tags::MODE_BINS);
    if rec.pi_mb != pi_mb {
        reasons.push("mode-binning permutation does not follow from its beacon".into());
    }
    let pi_sb = hash_to_permutation(&rec.beacon_sb, states, tags::STATE_BINS);
    if rec.pi_sb != pi_sb {
        reasons.push("state-binning permutation does not follow from its beacon".into());
    }

    let input = permuted_input(&pi, pm.photons)?;
    let b = ModeBinning::from_permutation(&pi_mb, pm.d_mb as usize)?;
    let exact = exact_mode_binned(&u, &input, &b)?;
    if exact.labels != rec.p_hat_mb.labels || exact.probs.len() != rec.p_hat_mb.probs.len() {
        reasons.push("stored P̂ has the wrong support".into());
    } else {
        let tv = tv_distance(&exact.probs, &rec.p_hat_mb.probs)?;
        if tv > 2.0 * pm.beta {
            reasons.push(format!("stored P̂ is {tv:.4} from the exact distribution (limit {})", 2.0 * pm.beta));
        }
    }

    let floor = 1.0 / f64::from(pm.d_sb);
    if !(rec.mu_net >= floor - 1e-12 && rec.mu_net <= 1.0) {
        reasons.push(format!("mu_net {} outside [1/d_sb, 1]", rec.mu_net));
    }
    check_payouts(block, reasons);

    if mode == VerifyMode::QuantumOracle {
        let sampler = Sampler::new(exact_distribution(&u, &input)?)?;
        let seed = rng::derive(u64::from_le_bytes(block.header_hash().0[..8].try_into().expect("8")), "oracle", 0);
        let samples = sampler.sample(ORACLE_SAMPLES, 1.0, &mut rng::stream(seed))?.samples;
        let sb = state_bins(&pi_sb, states, pm.d_sb as usize)?;
        let space = StateSpace::new(m, pm.photons)?;
        let mu = pbp(&samples, &sb, &space)?.mu;
        if (mu - rec.mu_net).abs() > pm.epsilon {
            reasons.push(format!(
                "resampled mu {mu:.4} differs from mu_net {:.4} by more than {}",
                rec.mu_net, pm.epsilon
            ));
        }
    }
    Ok(())
}

fn check_payouts(block: &Block, reasons: &mut Vec<String>) {
    let pm = &block.params;
    let r = pm.reward as i64;
    let mut seen = BTreeSet::new();
    for p in &block.payouts {
        if !seen.insert(&p.miner) {
            reasons.push(format!("{} paid twice", p.miner));
        }
        let expected_penalty = if p.slashed.is_some() { pm.stake as i64 } else { 0 };
        if p.penalty != expected_penalty {
            reasons.push(format!("{} penalty {} != {expected_penalty}", p.miner, p.penalty));
        }
        if p.winner && (!p.validated || p.slashed.is_some()) {
            reasons.push(format!("{} won without passing validation", p.miner));
        }
    }
    let winners: Vec<_> = block.payouts.iter().filter(|p| p.winner).collect();
    if winners.is_empty() {
        reasons.push("block without winners".into());
        return;
    }
    match pm.reward_mode {
        RewardMode::Split => {
            for p in &block.payouts {
                let expected = if p.winner { p.samples as i64 * r } else { 0 };
                if p.reward != expected {
                    reasons.push(format!("{} reward {} != {expected}", p.miner, p.reward));
                }
            }
        }
        RewardMode::Block => {
            let total: i64 = winners.iter().map(|p| p.samples as i64 * r).sum();
            let chosen = &winners[block_lottery(&block.record.beacon_sb, winners.len())].miner;
            for p in &block.payouts {
                let expected = if &p.miner == chosen { total } else { 0 };
                if p.reward != expected {
                    reasons.push(format!("{} reward {} != {expected}", p.miner, p.reward));
                }
            }
        }
    }
}
