//! The per-block protocol state machine.
//!
//! `announce_block` → commits → `close_commits` → reveals → `close_reveals`
//! → `validate` → `determine_success` → `settle` → `append_record`.

use std::collections::{BTreeMap, BTreeSet};

use bspow_core::binning::{
    estimated_mode_binned, exact_mode_binned, state_bin_counts, state_bins, validation_distance, AccuracyParams,
    BinnedDistribution, ModeBinning, PeakBin,
};
use bspow_core::economics::RewardMode;
use bspow_core::rng;
use bspow_core::sampler::permuted_input;
use bspow_core::{ComplexMatrix, InputSpec, OccupationVector, Permutation, StateSpace};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::block::{tx_root, Block, BlockHeader, BlockRecord, Chain, Payout, Provenance, SlashReason, Transaction};
use crate::error::{ChainError, Result};
use crate::hashing::{hash_to_permutation, tags, Canonical, Digest, Encoder};
use crate::params::{matrix_ref, Estimator, ParameterSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Committing,
    Revealing,
    Validating,
    Settling,
    Recorded,
}

pub type Nonce = [u8; 32];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Commitment {
    pub digest: Digest,
    pub miner_id: String,
    pub commit_time: u64,
}

/// `SHA-256(canonical(sample) ‖ commit_time ‖ nonce)`.
pub fn commitment_digest(sample: &OccupationVector, commit_time: u64, nonce: &Nonce) -> Digest {
    let mut e = Encoder::new();
    e.put(sample).u64(commit_time).bytes(nonce);
    e.digest_of()
}

/// Digests for a whole sample set committed at one time.
pub fn commit_samples(samples: &[OccupationVector], commit_time: u64, nonces: &[Nonce]) -> Vec<Digest> {
    samples.iter().zip(nonces).map(|(s, n)| commitment_digest(s, commit_time, n)).collect()
}

/// A uniformly random beacon value.
pub fn seeded_beacon(seed: u64) -> Digest {
    let mut bytes = [0u8; 32];
    rng::stream(seed).fill(&mut bytes);
    Digest(bytes)
}

fn digest_seed(d: &Digest) -> u64 {
    u64::from_le_bytes(d.0[..8].try_into().expect("8 bytes"))
}

/// Index of the single paid winner in block mode, drawn from the state
/// beacon so verifiers can reproduce it.
pub fn block_lottery(beacon_sb: &Digest, winners: usize) -> usize {
    rng::stream(rng::derive(digest_seed(beacon_sb), "block-winner", 0)).random_range(0..winners)
}

/// Reference distribution for a binning, as the validator computes it.
pub fn reference_distribution(
    pm: &ParameterSet,
    u: &ComplexMatrix,
    input: &InputSpec,
    b: &ModeBinning,
    beacon_mb: &Digest,
    estimator: Estimator,
) -> Result<BinnedDistribution> {
    Ok(match estimator {
        Estimator::Exact => exact_mode_binned(u, input, b)?,
        Estimator::Gurvits => {
            let acc = AccuracyParams::for_validation(
                pm.beta,
                pm.epsilon,
                pm.gamma,
                pm.confidence,
                pm.photons,
                b.bin_count(),
            )?;
            estimated_mode_binned(u, input, b, &acc, rng::derive(digest_seed(beacon_mb), "p-hat", 0))?
        }
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
struct MinerState {
    commitments: Vec<Commitment>,
    samples: Option<Vec<OccupationVector>>,
    revealed: bool,
    slashed: Option<SlashReason>,
    validated: bool,
    tv: Option<f64>,
    mu: Option<f64>,
    winner: bool,
}

/// Per-miner outcome visible after the round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinerOutcome {
    pub committed: u64,
    pub revealed: bool,
    pub validated: bool,
    pub slashed: Option<SlashReason>,
    pub tv: Option<f64>,
    pub mu: Option<f64>,
    pub winner: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Success {
    /// No miner passed validation; stakes of non-slashed miners are returned
    /// and no block is appended.
    pub aborted: bool,
    pub mu_net: Option<f64>,
    pub winners: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Round {
    phase: Phase,
    pm: ParameterSet,
    u: ComplexMatrix,
    header: BlockHeader,
    transactions: Vec<Transaction>,
    pi: Permutation,
    input: InputSpec,
    miners: BTreeMap<String, MinerState>,
    used_beacons: BTreeSet<Digest>,
    beacon_mb: Option<Digest>,
    beacon_sb: Option<Digest>,
    pi_mb: Option<Permutation>,
    pi_sb: Option<Permutation>,
    p_hat: Option<BinnedDistribution>,
    success: Option<Success>,
    payouts: Option<Vec<Payout>>,
}

/// Builds the header on top of the chain tip, derives the input permutation
/// from its hash and stakes every participant.
pub fn announce_block(
    chain: &Chain,
    transactions: Vec<Transaction>,
    pm: ParameterSet,
    timestamp: u64,
    participants: &[String],
) -> Result<Round> {
    pm.validate()?;
    let u = pm.interferometer()?;
    if matrix_ref(&u) != pm.u_ref {
        return Err(ChainError::Config("u_ref does not match the interferometer seed".into()));
    }
    if let Some(tip) = chain.tip() {
        if timestamp < tip.header.timestamp {
            return Err(ChainError::Protocol(format!(
                "timestamp {timestamp} precedes the tip's {}",
                tip.header.timestamp
            )));
        }
    }
    let (height, prev_header_hash, prev_record_hash) = chain.next_link();
    let header = BlockHeader {
        height,
        timestamp,
        prev_header_hash,
        prev_record_hash,
        tx_root: tx_root(&transactions),
        pm_hash: pm.canonical_hash(),
    };
    let pi = hash_to_permutation(&header.canonical_hash(), pm.modes as usize, tags::INPUT);
    let input = permuted_input(&pi, pm.photons)?;
    let mut miners = BTreeMap::new();
    for id in participants {
        if miners.insert(id.clone(), MinerState::default()).is_some() {
            return Err(ChainError::Protocol(format!("duplicate participant {id}")));
        }
    }
    Ok(Round {
        phase: Phase::Committing,
        pm,
        u,
        header,
        transactions,
        pi,
        input,
        miners,
        used_beacons: chain.used_beacons().collect(),
        beacon_mb: None,
        beacon_sb: None,
        pi_mb: None,
        pi_sb: None,
        p_hat: None,
        success: None,
        payouts: None,
    })
}

impl Round {
    fn expect(&self, phase: Phase) -> Result<()> {
        if self.phase != phase {
            return Err(ChainError::Phase { expected: phase, found: self.phase });
        }
        Ok(())
    }

    fn miner_mut(&mut self, id: &str) -> Result<&mut MinerState> {
        self.miners.get_mut(id).ok_or_else(|| ChainError::Protocol(format!("{id} is not a staked participant")))
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn params(&self) -> &ParameterSet {
        &self.pm
    }

    pub fn interferometer(&self) -> &ComplexMatrix {
        &self.u
    }

    pub fn header(&self) -> &BlockHeader {
        &self.header
    }

    /// Input-mode permutation derived from the header.
    pub fn pi(&self) -> &Permutation {
        &self.pi
    }

    pub fn input(&self) -> &InputSpec {
        &self.input
    }

    pub fn participants(&self) -> impl Iterator<Item = &str> {
        self.miners.keys().map(String::as_str)
    }

    pub fn reference(&self) -> Option<&BinnedDistribution> {
        self.p_hat.as_ref()
    }

    pub fn success(&self) -> Option<&Success> {
        self.success.as_ref()
    }

    pub fn payouts(&self) -> Option<&[Payout]> {
        self.payouts.as_deref()
    }

    pub fn outcome(&self, id: &str) -> Option<MinerOutcome> {
        self.miners.get(id).map(|m| MinerOutcome {
            committed: m.commitments.len() as u64,
            revealed: m.revealed,
            validated: m.validated,
            slashed: m.slashed,
            tv: m.tv,
            mu: m.mu,
            winner: m.winner,
        })
    }

    /// Records a miner's digests. Commits at or after `T_mine` are rejected.
    pub fn commit(&mut self, miner: &str, digests: Vec<Digest>, time: u64) -> Result<()> {
        self.expect(Phase::Committing)?;
        if time >= self.pm.t_mine {
            return Err(ChainError::Protocol(format!("commit at {time} is not before T_mine = {}", self.pm.t_mine)));
        }
        if digests.is_empty() {
            return Err(ChainError::Protocol(format!("{miner} committed no samples")));
        }
        let m = self.miner_mut(miner)?;
        if !m.commitments.is_empty() {
            return Err(ChainError::Protocol(format!("{miner} already committed")));
        }
        m.commitments = digests
            .into_iter()
            .map(|digest| Commitment { digest, miner_id: miner.to_string(), commit_time: time })
            .collect();
        Ok(())
    }

    pub fn close_commits(&mut self) -> Result<()> {
        self.expect(Phase::Committing)?;
        self.phase = Phase::Revealing;
        Ok(())
    }

    /// Checks every revealed sample against its commitment; any mismatch
    /// slashes the miner.
    pub fn reveal(&mut self, miner: &str, samples: Vec<OccupationVector>, nonces: &[Nonce]) -> Result<()> {
        self.expect(Phase::Revealing)?;
        let (modes, photons) = (self.pm.modes as usize, self.pm.photons);
        let m = self.miner_mut(miner)?;
        if m.commitments.is_empty() {
            return Err(ChainError::Protocol(format!("{miner} revealed without committing")));
        }
        if m.revealed {
            return Err(ChainError::Protocol(format!("{miner} already revealed")));
        }
        m.revealed = true;
        let matches = samples.len() == m.commitments.len()
            && nonces.len() == samples.len()
            && m.commitments
                .iter()
                .zip(&samples)
                .zip(nonces)
                .all(|((c, s), n)| commitment_digest(s, c.commit_time, n) == c.digest);
        if !matches {
            m.slashed = Some(SlashReason::RevealMismatch);
        } else if samples.iter().any(|s| s.modes() != modes || s.weight() != photons) {
            m.slashed = Some(SlashReason::Validation);
        } else {
            m.samples = Some(samples);
        }
        Ok(())
    }

    /// Miners that committed but never revealed are slashed.
    pub fn close_reveals(&mut self) -> Result<()> {
        self.expect(Phase::Revealing)?;
        for m in self.miners.values_mut() {
            if !m.commitments.is_empty() && !m.revealed {
                m.slashed = Some(SlashReason::NoReveal);
            }
        }
        self.phase = Phase::Validating;
        Ok(())
    }

    fn consume_beacon(&mut self, beacon: Digest) -> Result<()> {
        if !self.used_beacons.insert(beacon) {
            return Err(ChainError::Protocol(format!("beacon {beacon} was already used")));
        }
        Ok(())
    }

    /// Derives the mode binning from the beacon, computes `P̂` and slashes
    /// every miner whose samples are at TV distance `≥ 2β` from it.
    pub fn validate(&mut self, beacon_mb: Digest) -> Result<()> {
        self.expect(Phase::Validating)?;
        self.consume_beacon(beacon_mb)?;
        let pi_mb = hash_to_permutation(&beacon_mb, self.pm.modes as usize, tags::MODE_BINS);
        let b = ModeBinning::from_permutation(&pi_mb, self.pm.d_mb as usize)?;
        let p_hat = reference_distribution(&self.pm, &self.u, &self.input, &b, &beacon_mb, self.pm.estimator)?;
        let threshold = 2.0 * self.pm.beta;
        for m in self.miners.values_mut() {
            let Some(samples) = m.samples.as_ref().filter(|_| m.slashed.is_none()) else {
                continue;
            };
            let tv = validation_distance(samples, &b, &p_hat, self.pm.comparison)?;
            m.tv = Some(tv);
            if tv >= threshold {
                m.slashed = Some(SlashReason::Validation);
            } else {
                m.validated = true;
            }
        }
        self.beacon_mb = Some(beacon_mb);
        self.pi_mb = Some(pi_mb);
        self.p_hat = Some(p_hat);
        self.phase = Phase::Settling;
        Ok(())
    }

    /// Peak bin probabilities under the beacon's state binning; winners are
    /// validated miners with `|μᵢ − μ_net| ≤ ε`.
    pub fn determine_success(&mut self, beacon_sb: Digest) -> Result<&Success> {
        self.expect(Phase::Settling)?;
        if self.success.is_some() {
            return Err(ChainError::Protocol("success already determined".into()));
        }
        self.consume_beacon(beacon_sb)?;
        let states = self.pm.state_count()?;
        let pi_sb = hash_to_permutation(&beacon_sb, states, tags::STATE_BINS);
        self.beacon_sb = Some(beacon_sb);
        let validated: Vec<String> =
            self.miners.iter().filter(|(_, m)| m.validated).map(|(id, _)| id.clone()).collect();
        if validated.is_empty() {
            self.pi_sb = Some(pi_sb);
            return Ok(self.success.insert(Success { aborted: true, mu_net: None, winners: Vec::new() }));
        }
        let sb = state_bins(&pi_sb, states, self.pm.d_sb as usize)?;
        let space = StateSpace::new(self.pm.modes as usize, self.pm.photons)?;
        let mut pooled = vec![0u64; sb.bin_count()];
        let mut per_miner = Vec::with_capacity(validated.len());
        for id in &validated {
            let samples = self.miners[id].samples.as_ref().expect("validated miners revealed");
            let counts = state_bin_counts(samples, &sb, &space)?;
            for (p, c) in pooled.iter_mut().zip(&counts) {
                *p += c;
            }
            per_miner.push(PeakBin::from_counts(counts)?.mu);
        }
        let mu_net = PeakBin::from_counts(pooled)?.mu;
        let mut winners = Vec::new();
        for (id, mu) in validated.iter().zip(per_miner) {
            let m = self.miners.get_mut(id).expect("known miner");
            m.mu = Some(mu);
            if (mu - mu_net).abs() <= self.pm.epsilon {
                m.winner = true;
                winners.push(id.clone());
            }
        }
        self.pi_sb = Some(pi_sb);
        Ok(self.success.insert(Success { aborted: false, mu_net: Some(mu_net), winners }))
    }

    /// Pays winners, returns stakes of honest non-winners and burns the
    /// stakes of slashed miners.
    pub fn settle(&mut self) -> Result<&[Payout]> {
        self.expect(Phase::Settling)?;
        let success =
            self.success.clone().ok_or_else(|| ChainError::Protocol("settle before success determination".into()))?;
        let r = self.pm.reward as i64;
        let stake = self.pm.stake as i64;
        let lottery = match (self.pm.reward_mode, success.winners.len()) {
            (RewardMode::Block, w) if w > 0 => {
                let beacon = self.beacon_sb.expect("beacon set with success");
                let total: i64 = success.winners.iter().map(|id| self.miners[id].commitments.len() as i64 * r).sum();
                Some((success.winners[block_lottery(&beacon, w)].clone(), total))
            }
            _ => None,
        };
        let payouts: Vec<Payout> = self
            .miners
            .iter()
            .map(|(id, m)| {
                let samples = m.commitments.len() as u64;
                let reward = if !m.winner {
                    0
                } else {
                    match &lottery {
                        Some((chosen, total)) => {
                            if chosen == id {
                                *total
                            } else {
                                0
                            }
                        }
                        None => samples as i64 * r,
                    }
                };
                Payout {
                    miner: id.clone(),
                    samples,
                    validated: m.validated,
                    winner: m.winner,
                    slashed: m.slashed,
                    reward,
                    penalty: if m.slashed.is_some() { stake } else { 0 },
                }
            })
            .collect();
        let minted: i64 = payouts.iter().map(|p| p.reward).sum();
        let burned: i64 = payouts.iter().map(|p| p.penalty).sum();
        let net: i64 = payouts.iter().map(Payout::delta).sum();
        debug_assert_eq!(net, minted - burned);
        self.phase = Phase::Recorded;
        Ok(self.payouts.insert(payouts))
    }

    /// Appends the block, or nothing for an aborted round. The chain tip must
    /// be the one the round was announced on.
    pub fn append_record(&self, chain: &mut Chain, provenance: Provenance) -> Result<Option<Block>> {
        self.expect(Phase::Recorded)?;
        let (height, prev, _) = chain.next_link();
        if height != self.header.height || prev != self.header.prev_header_hash {
            return Err(ChainError::Protocol("chain tip moved since announcement".into()));
        }
        let success = self.success.as_ref().expect("recorded rounds have an outcome");
        if success.aborted {
            return Ok(None);
        }
        let block = Block {
            header: self.header.clone(),
            transactions: self.transactions.clone(),
            params: self.pm.clone(),
            record: BlockRecord {
                pi: self.pi.clone(),
                pi_mb: self.pi_mb.clone().expect("validated"),
                pi_sb: self.pi_sb.clone().expect("success determined"),
                beacon_mb: self.beacon_mb.expect("validated"),
                beacon_sb: self.beacon_sb.expect("success determined"),
                p_hat_mb: self.p_hat.clone().expect("validated"),
                mu_net: success.mu_net.expect("not aborted"),
            },
            payouts: self.payouts.clone().expect("settled"),
            provenance,
        };
        chain.blocks.push(block.clone());
        Ok(Some(block))
    }
}
