//! Network-wide parameters fixed for a block.

use bspow_core::binning::{required_samples_mode, required_samples_state, Comparison, StateSampleRule};
use bspow_core::economics::{mining_time, quantum_rate, HardwareProfile, RewardMode};
use bspow_core::linalg::haar_unitary;
use bspow_core::sampler::state_count;
use bspow_core::ComplexMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ChainError, Result};
use crate::hashing::{Canonical, Digest, Encoder};

/// How the validator obtains the reference mode-binned distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Gurvits estimates of the characteristic function (classical verifier).
    #[default]
    Gurvits,
    /// Exact permanents (desk-scale oracle).
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    pub photons: u32,
    pub modes: u32,
    pub d_mb: u32,
    pub d_sb: u32,
    /// Seed of the Haar-random interferometer.
    pub interferometer_seed: u64,
    /// Hash of the interferometer matrix.
    pub u_ref: Digest,
    /// Commit window in simulated seconds.
    pub t_mine: u64,
    pub epsilon: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Per-permanent confidence of the Gurvits estimates.
    pub confidence: f64,
    /// Reward per winning sample, in token units.
    pub reward: u64,
    /// Penalty per sample, in token units.
    pub penalty: u64,
    /// Stake locked by every participant.
    pub stake: u64,
    #[serde(default)]
    pub comparison: Comparison,
    #[serde(default)]
    pub estimator: Estimator,
    #[serde(default)]
    pub reward_mode: RewardMode,
}

/// Hash of an interferometer matrix over its canonical JSON form.
pub fn matrix_ref(u: &ComplexMatrix) -> Digest {
    crate::hashing::sha256(&serde_json::to_vec(u).expect("matrix serializes"))
}

impl ParameterSet {
    pub fn interferometer(&self) -> Result<ComplexMatrix> {
        Ok(haar_unitary(self.modes as usize, self.interferometer_seed)?)
    }

    pub fn state_count(&self) -> Result<usize> {
        let n = state_count(self.modes as usize, self.photons)
            .ok_or_else(|| ChainError::Config("state count overflows".into()))?;
        usize::try_from(n).map_err(|_| ChainError::Config("state count overflows".into()))
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(ChainError::Config(m));
        if self.photons == 0 || self.photons > self.modes {
            return err(format!("need 1 <= N <= M, got N={} M={}", self.photons, self.modes));
        }
        if self.d_mb == 0 || !self.modes.is_multiple_of(self.d_mb) {
            return err(format!("d_mb = {} must divide M = {}", self.d_mb, self.modes));
        }
        let states = self.state_count()?;
        if self.d_sb == 0 || states % self.d_sb as usize != 0 {
            return err(format!("d_sb = {} must divide the state count {states}", self.d_sb));
        }
        for (name, v) in [("epsilon", self.epsilon), ("gamma", self.gamma), ("confidence", self.confidence)] {
            if !(v > 0.0 && v < 1.0) {
                return err(format!("{name} must lie in (0,1), got {v}"));
            }
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return err(format!("beta must lie in (0,1], got {}", self.beta));
        }
        if self.t_mine == 0 {
            return err("t_mine must be positive".into());
        }
        Ok(())
    }

    /// Checks `R/3 < P < R` and `2k < R` for a per-sample honest cost `k`.
    pub fn check_economics(&self, k: f64) -> Result<()> {
        let (r, p) = (self.reward as f64, self.penalty as f64);
        if !(p > r / 3.0 && p < r) {
            return Err(ChainError::Config(format!("penalty {p} outside (R/3, R) for R = {r}")));
        }
        if !(2.0 * k < r) {
            return Err(ChainError::Config(format!("reward {r} not above 2k = {}", 2.0 * k)));
        }
        Ok(())
    }

    /// The state-binned sample count: the bootstrap rule when its validity
    /// condition holds, Hoeffding otherwise.
    pub fn state_samples(&self) -> Result<u64> {
        let d = self.d_sb as usize;
        match required_samples_state(d, self.epsilon, self.gamma, StateSampleRule::Bootstrap) {
            Ok(n) => Ok(n),
            Err(bspow_core::Error::Validity(_)) => {
                Ok(required_samples_state(d, self.epsilon, self.gamma, StateSampleRule::Hoeffding)?)
            }
            Err(e) => Err(e.into()),
        }
    }

    pub fn mode_samples(&self) -> Result<u64> {
        Ok(required_samples_mode(self.photons, self.d_mb as usize, self.beta.min(0.999_999))?)
    }

    /// `max(N_mb, N_sb)·scale / R_q` in seconds.
    pub fn mining_time_seconds(&self, hw: &HardwareProfile, scale: f64) -> Result<f64> {
        let r_q = quantum_rate(hw, self.photons, self.modes);
        let scaled = |n: u64| (n as f64 * scale).ceil() as u64;
        Ok(mining_time(scaled(self.mode_samples()?), scaled(self.state_samples()?), r_q)?)
    }
}

impl Canonical for ParameterSet {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(u64::from(self.photons))
            .u64(u64::from(self.modes))
            .u64(u64::from(self.d_mb))
            .u64(u64::from(self.d_sb))
            .u64(self.interferometer_seed)
            .digest(&self.u_ref)
            .u64(self.t_mine)
            .f64(self.epsilon)
            .f64(self.beta)
            .f64(self.gamma)
            .f64(self.confidence)
            .u64(self.reward)
            .u64(self.penalty)
            .u64(self.stake)
            .str(match self.comparison {
                Comparison::CountVector => "count_vector",
                Comparison::PhotonFraction => "photon_fraction",
            })
            .str(match self.estimator {
                Estimator::Gurvits => "gurvits",
                Estimator::Exact => "exact",
            })
            .str(match self.reward_mode {
                RewardMode::Split => "split",
                RewardMode::Block => "block",
            });
    }
}
