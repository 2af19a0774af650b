//! Strategy-driven miners and multi-block campaigns.

use std::collections::BTreeMap;

use bspow_core::binning::Comparison;
use bspow_core::economics::{classical_rate, quantum_rate, EconomicsConfig, HardwareProfile, RewardMode};
use bspow_core::rng;
use bspow_core::sampler::{exact_distribution, permuted_input, Sampler};
use bspow_core::{OccupationVector, Permutation, StateSpace};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::block::{Chain, Provenance, SlashReason, Transaction};
use crate::error::{ChainError, Result};
use crate::hashing::{hash_to_permutation, sha256, Digest};
use crate::params::{matrix_ref, Estimator, ParameterSet};
use crate::round::{announce_block, commit_samples, seeded_beacon, Nonce, Round};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    HonestQuantum,
    /// Same samples as the quantum device, billed at the classical cost.
    HonestClassical,
    /// Uniformly random weight-N occupation vectors at no cost.
    CheatUniform,
    /// Device samples for a stale input permutation.
    CheatCopycat,
    Abstain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinerProfile {
    pub id: String,
    pub strategy: Strategy,
    /// Samples per round; defaults to the desk-scaled honest budget.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_budget: Option<u64>,
    /// Cost per sample; defaults by strategy from the economics config.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Protocol parameters as written in a config; derived fields are filled in
/// by [`CampaignConfig::parameter_set`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub photons: u32,
    pub modes: u32,
    pub d_mb: u32,
    pub d_sb: u32,
    pub interferometer_seed: u64,
    pub epsilon: f64,
    pub beta: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    #[serde(default)]
    pub comparison: Comparison,
    #[serde(default)]
    pub estimator: Estimator,
    /// Overrides the computed commit window (simulated seconds).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_mine: Option<u64>,
}

fn default_gamma() -> f64 {
    1e-4
}

fn default_confidence() -> f64 {
    0.99
}

fn default_scale() -> f64 {
    1e-4
}

fn default_multiplier() -> f64 {
    10.0
}

fn default_blocks() -> u64 {
    5
}

fn default_txs() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub network: NetworkConfig,
    #[serde(default)]
    pub hw: HardwareProfile,
    #[serde(default)]
    pub econ: EconomicsConfig,
    pub profiles: Vec<MinerProfile>,
    /// Fraction of the full-scale sample requirement simulated.
    #[serde(default = "default_scale")]
    pub desk_scale: f64,
    /// Honest budget as a multiple of the desk-scaled requirement.
    #[serde(default = "default_multiplier")]
    pub honest_budget_multiplier: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_blocks")]
    pub blocks: u64,
    #[serde(default = "default_txs")]
    pub transactions_per_block: usize,
    /// Reject reward/penalty combinations outside the equilibrium bounds.
    #[serde(default)]
    pub check_economics: bool,
}

impl CampaignConfig {
    /// Hash of the config's JSON form, recorded in every output.
    pub fn config_hash(&self) -> Digest {
        sha256(&serde_json::to_vec(self).expect("config serializes"))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.desk_scale > 0.0 && self.desk_scale <= 1.0) {
            return Err(ChainError::Config(format!("desk_scale must lie in (0,1], got {}", self.desk_scale)));
        }
        if !(self.honest_budget_multiplier > 0.0) {
            return Err(ChainError::Config("honest_budget_multiplier must be positive".into()));
        }
        self.hw.validate()?;
        self.econ.validate()?;
        for (name, v) in [("reward", self.econ.reward), ("penalty", self.econ.penalty)] {
            if v.fract() != 0.0 {
                return Err(ChainError::Config(format!("{name} must be a whole number of tokens, got {v}")));
            }
        }
        let mut ids = std::collections::BTreeSet::new();
        for p in &self.profiles {
            if !ids.insert(&p.id) {
                return Err(ChainError::Config(format!("duplicate miner id {}", p.id)));
            }
            if p.cost_factor.is_some_and(|k| !(k >= 0.0)) {
                return Err(ChainError::Config(format!("{}: cost factor must be non-negative", p.id)));
            }
        }
        let pm = self.parameter_set()?;
        if self.check_economics {
            pm.check_economics(self.econ.honest_cost())?;
        }
        Ok(())
    }

    /// Desk-scaled honest sample budget.
    pub fn default_budget(&self) -> Result<u64> {
        let pm = self.base_parameters()?;
        let scaled = (pm.mode_samples()? as f64 * self.desk_scale).ceil();
        Ok((scaled * self.honest_budget_multiplier).ceil().max(1.0) as u64)
    }

    fn base_parameters(&self) -> Result<ParameterSet> {
        let n = &self.network;
        let u = bspow_core::linalg::haar_unitary(n.modes as usize, n.interferometer_seed)?;
        Ok(ParameterSet {
            photons: n.photons,
            modes: n.modes,
            d_mb: n.d_mb,
            d_sb: n.d_sb,
            interferometer_seed: n.interferometer_seed,
            u_ref: matrix_ref(&u),
            t_mine: 1,
            epsilon: n.epsilon,
            beta: n.beta,
            gamma: n.gamma,
            confidence: n.confidence,
            reward: self.econ.reward as u64,
            penalty: self.econ.penalty as u64,
            stake: 0,
            comparison: n.comparison,
            estimator: n.estimator,
            reward_mode: self.econ.reward_mode,
        })
    }

    /// Full parameter set: `T_mine` from the desk-scaled sample counts and
    /// the quantum rate (at least one second), stake = `P ×` honest budget.
    pub fn parameter_set(&self) -> Result<ParameterSet> {
        let mut pm = self.base_parameters()?;
        pm.validate()?;
        pm.t_mine = match self.network.t_mine {
            Some(t) => t,
            None => pm.mining_time_seconds(&self.hw, self.desk_scale)?.ceil().max(1.0) as u64,
        };
        pm.stake = pm.penalty * self.default_budget()?;
        pm.validate()?;
        Ok(pm)
    }

    pub fn budget_of(&self, p: &MinerProfile) -> Result<u64> {
        match (p.strategy, p.sample_budget) {
            (Strategy::Abstain, _) => Ok(0),
            (_, Some(n)) => Ok(n),
            (_, None) => self.default_budget(),
        }
    }

    pub fn cost_of(&self, p: &MinerProfile) -> f64 {
        p.cost_factor.unwrap_or(match p.strategy {
            Strategy::HonestQuantum => self.econ.honest_cost(),
            Strategy::HonestClassical => self.econ.k_classical,
            Strategy::CheatUniform | Strategy::CheatCopycat | Strategy::Abstain => 0.0,
        })
    }
}

/// What a miner sees when it acts.
pub struct RoundView<'a> {
    pub round: &'a Round,
    pub sampler: &'a Sampler,
    pub space: &'a StateSpace,
    /// Input permutation of an earlier block, for copycats.
    pub stale_pi: &'a Permutation,
    pub hw: &'a HardwareProfile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Submission {
    pub samples: Vec<OccupationVector>,
    pub nonces: Vec<Nonce>,
    /// Simulated seconds after the round opened.
    pub time: u64,
}

/// Produces a strategy's sample set, nonces and commit time.
pub fn act<R: Rng>(strategy: Strategy, budget: u64, view: &RoundView<'_>, rng: &mut R) -> Result<Submission> {
    let pm = view.round.params();
    let n = budget as usize;
    let samples: Vec<OccupationVector> = match strategy {
        Strategy::Abstain => Vec::new(),
        Strategy::HonestQuantum | Strategy::HonestClassical => (0..n).map(|_| view.sampler.draw(rng).clone()).collect(),
        Strategy::CheatUniform => {
            (0..n).map(|_| view.space.state(rng.random_range(0..view.space.len())).clone()).collect()
        }
        Strategy::CheatCopycat => {
            let stale = permuted_input(view.stale_pi, pm.photons)?;
            let sampler = Sampler::new(exact_distribution(view.round.interferometer(), &stale)?)?;
            (0..n).map(|_| sampler.draw(rng).clone()).collect()
        }
    };
    let nonces: Vec<Nonce> = (0..samples.len())
        .map(|_| {
            let mut b = [0u8; 32];
            rng.fill(&mut b);
            b
        })
        .collect();
    let rate = match strategy {
        Strategy::HonestQuantum => quantum_rate(view.hw, pm.photons, pm.modes),
        Strategy::HonestClassical => classical_rate(view.hw.classical.a_tilde_at(pm.photons), pm.photons),
        _ => f64::INFINITY,
    };
    let time = (budget as f64 / rate).floor() as u64;
    Ok(Submission { samples, nonces, time })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinerReport {
    pub id: String,
    pub strategy: Strategy,
    pub committed: u64,
    pub validated: bool,
    pub slashed: Option<SlashReason>,
    pub winner: bool,
    pub tv: Option<f64>,
    pub mu: Option<f64>,
    pub reward: i64,
    pub penalty: i64,
    pub cost: i64,
    pub utility: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: u64,
    /// Height of the appended block; `None` when the round aborted.
    pub height: Option<u64>,
    pub aborted: bool,
    pub mu_net: Option<f64>,
    pub slash_count: usize,
    pub miners: Vec<MinerReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignResult {
    pub reports: Vec<RoundReport>,
    pub chain: Chain,
    /// Net utility per miner over the campaign.
    pub ledger: BTreeMap<String, i64>,
}

/// Drives rounds one at a time on a growing chain.
pub struct Campaign {
    config: CampaignConfig,
    pm: ParameterSet,
    provenance: Provenance,
    chain: Chain,
    ledger: BTreeMap<String, i64>,
    reports: Vec<RoundReport>,
    stale_pi: Option<Permutation>,
    round: u64,
}

impl Campaign {
    pub fn new(config: CampaignConfig) -> Result<Self> {
        config.validate()?;
        let pm = config.parameter_set()?;
        let provenance = Provenance { config_hash: config.config_hash().to_hex(), desk_scale: config.desk_scale };
        let ledger = config.profiles.iter().map(|p| (p.id.clone(), 0)).collect();
        Ok(Campaign {
            config,
            pm,
            provenance,
            chain: Chain::new(),
            ledger,
            reports: Vec::new(),
            stale_pi: None,
            round: 0,
        })
    }

    pub fn params(&self) -> &ParameterSet {
        &self.pm
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    fn seed(&self, tag: &str, index: u64) -> u64 {
        rng::derive(rng::derive(self.config.seed, "round", self.round), tag, index)
    }

    fn transactions(&self) -> Vec<Transaction> {
        (0..self.config.transactions_per_block)
            .map(|t| {
                let mut s = rng::stream(self.seed("tx", t as u64));
                let mut payload = vec![0u8; 32];
                s.fill(&mut payload[..]);
                Transaction { payload }
            })
            .collect()
    }

    /// Runs one full round and returns its report.
    pub fn step(&mut self) -> Result<&RoundReport> {
        let cfg = &self.config;
        let participants: Vec<String> =
            cfg.profiles.iter().filter(|p| p.strategy != Strategy::Abstain).map(|p| p.id.clone()).collect();
        let timestamp = self.chain.tip().map_or(0, |b| b.header.timestamp + self.pm.t_mine);
        let mut round = announce_block(&self.chain, self.transactions(), self.pm.clone(), timestamp, &participants)?;

        let sampler = Sampler::new(exact_distribution(round.interferometer(), round.input())?)?;
        let space = StateSpace::new(self.pm.modes as usize, self.pm.photons)?;
        let stale_pi = self.stale_pi.clone().unwrap_or_else(|| {
            let d = sha256(&self.seed("stale", 0).to_le_bytes());
            hash_to_permutation(&d, self.pm.modes as usize, "stale")
        });

        let mut submissions = BTreeMap::new();
        let mut costs = BTreeMap::new();
        for (i, p) in cfg.profiles.iter().enumerate() {
            let miner_seed = p.seed.unwrap_or_else(|| rng::derive(cfg.seed, "miner", i as u64));
            let mut stream = rng::stream(rng::derive(miner_seed, "round", self.round));
            let view = RoundView { round: &round, sampler: &sampler, space: &space, stale_pi: &stale_pi, hw: &cfg.hw };
            let budget = cfg.budget_of(p)?;
            let sub = act(p.strategy, budget, &view, &mut stream)?;
            costs.insert(p.id.clone(), (cfg.cost_of(p) * sub.samples.len() as f64).round() as i64);
            if sub.samples.is_empty() {
                continue;
            }
            let digests = commit_samples(&sub.samples, sub.time, &sub.nonces);
            match round.commit(&p.id, digests, sub.time) {
                Ok(()) => {
                    submissions.insert(p.id.clone(), sub);
                }
                Err(ChainError::Protocol(msg)) => log::info!("round {}: {} commit rejected: {msg}", self.round, p.id),
                Err(e) => return Err(e),
            }
        }
        round.close_commits()?;
        for (id, sub) in submissions {
            round.reveal(&id, sub.samples, &sub.nonces)?;
        }
        round.close_reveals()?;
        round.validate(seeded_beacon(self.seed("beacon-mb", 0)))?;
        round.determine_success(seeded_beacon(self.seed("beacon-sb", 0)))?;
        round.settle()?;
        let appended = round.append_record(&mut self.chain, self.provenance.clone())?;

        let success = round.success().expect("determined").clone();
        let payouts = round.payouts().expect("settled");
        let mut miners = Vec::with_capacity(cfg.profiles.len());
        for p in &cfg.profiles {
            let cost = costs.get(&p.id).copied().unwrap_or(0);
            let paid = payouts.iter().find(|x| x.miner == p.id);
            let outcome = round.outcome(&p.id);
            let (reward, penalty) = paid.map_or((0, 0), |x| (x.reward, x.penalty));
            let utility = reward - cost - penalty;
            *self.ledger.get_mut(&p.id).expect("known miner") += utility;
            miners.push(MinerReport {
                id: p.id.clone(),
                strategy: p.strategy,
                committed: outcome.as_ref().map_or(0, |o| o.committed),
                validated: outcome.as_ref().is_some_and(|o| o.validated),
                slashed: outcome.as_ref().and_then(|o| o.slashed),
                winner: outcome.as_ref().is_some_and(|o| o.winner),
                tv: outcome.as_ref().and_then(|o| o.tv),
                mu: outcome.as_ref().and_then(|o| o.mu),
                reward,
                penalty,
                cost,
                utility,
            });
        }
        self.stale_pi = Some(round.pi().clone());
        self.reports.push(RoundReport {
            round: self.round,
            height: appended.map(|b| b.header.height),
            aborted: success.aborted,
            mu_net: success.mu_net,
            slash_count: miners.iter().filter(|m| m.slashed.is_some()).count(),
            miners,
        });
        self.round += 1;
        Ok(self.reports.last().expect("just pushed"))
    }

    pub fn finish(self) -> CampaignResult {
        CampaignResult { reports: self.reports, chain: self.chain, ledger: self.ledger }
    }
}

/// Runs `blocks` rounds deterministically from the config's seed.
pub fn run_campaign(config: &CampaignConfig, blocks: u64) -> Result<CampaignResult> {
    let mut c = Campaign::new(config.clone())?;
    for _ in 0..blocks {
        c.step()?;
    }
    Ok(c.finish())
}

/// The desk-scale example network: M=6, N=2, three honest miners, one
/// uniform cheater and one abstainer.
pub fn example_config() -> CampaignConfig {
    let profile = |id: &str, strategy| MinerProfile {
        id: id.into(),
        strategy,
        sample_budget: None,
        cost_factor: None,
        seed: None,
    };
    CampaignConfig {
        network: NetworkConfig {
            photons: 2,
            modes: 6,
            d_mb: 3,
            d_sb: 7,
            interferometer_seed: 2024,
            epsilon: 0.05,
            beta: 0.05,
            gamma: default_gamma(),
            confidence: default_confidence(),
            comparison: Comparison::CountVector,
            estimator: Estimator::Gurvits,
            t_mine: None,
        },
        hw: HardwareProfile::default(),
        econ: EconomicsConfig { reward_mode: RewardMode::Split, ..EconomicsConfig::default() },
        profiles: vec![
            profile("alice", Strategy::HonestQuantum),
            profile("bob", Strategy::HonestQuantum),
            profile("carol", Strategy::HonestQuantum),
            profile("mallory", Strategy::CheatUniform),
            profile("oscar", Strategy::Abstain),
        ],
        desk_scale: default_scale(),
        honest_budget_multiplier: default_multiplier(),
        seed: 42,
        blocks: default_blocks(),
        transactions_per_block: default_txs(),
        check_economics: true,
    }
}
