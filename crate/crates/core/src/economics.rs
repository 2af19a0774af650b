//! Incentive mathematics and hardware rate/energy models.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mining time quoted for N=25, d=3, β=0.1; our formula does not reproduce it.
pub const REFERENCE_T_MINE_SECONDS: f64 = 81.6;

/// Efficiency components with `η_f = η_g·η_c·η_d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Efficiencies {
    pub eta_g: f64,
    pub eta_c: f64,
    pub eta_d: f64,
}

/// A classical simulator: seconds per elementary operation and power draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicalMachine {
    pub a_tilde: f64,
    /// When set, the effective scale is `N·a_tilde`.
    #[serde(default)]
    pub per_photon: bool,
    pub power: f64,
}

impl ClassicalMachine {
    pub fn single_core() -> Self {
        ClassicalMachine { a_tilde: 10f64.powf(-9.2), per_photon: false, power: 100.0 }
    }

    pub fn supercomputer() -> Self {
        ClassicalMachine { a_tilde: 1.99e-15, per_photon: true, power: 24e6 }
    }

    pub fn a_tilde_at(&self, photons: u32) -> f64 {
        if self.per_photon {
            self.a_tilde * f64::from(photons)
        } else {
            self.a_tilde
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardwareProfile {
    /// Single-photon source rate in Hz.
    pub r0: f64,
    pub eta_f: f64,
    /// Per-mode transmission.
    pub eta_t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<Efficiencies>,
    /// Quantum device power in watts.
    pub power_q: f64,
    pub classical: ClassicalMachine,
    pub supercomputer: ClassicalMachine,
}

impl Default for HardwareProfile {
    fn default() -> Self {
        HardwareProfile {
            r0: 1e8,
            eta_f: 0.9,
            eta_t: 0.9999,
            components: None,
            power_q: 1500.0,
            classical: ClassicalMachine::single_core(),
            supercomputer: ClassicalMachine::supercomputer(),
        }
    }
}

impl HardwareProfile {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eta_f", self.eta_f), ("eta_t", self.eta_t)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0,1], got {v}")));
            }
        }
        if let Some(c) = self.components {
            for (name, v) in [("eta_g", c.eta_g), ("eta_c", c.eta_c), ("eta_d", c.eta_d)] {
                if !(v > 0.0 && v <= 1.0) {
                    return Err(Error::Config(format!("{name} must lie in (0,1], got {v}")));
                }
            }
            let product = c.eta_g * c.eta_c * c.eta_d;
            if (product - self.eta_f).abs() > 1e-12 {
                return Err(Error::Config(format!("eta_f = {} but eta_g·eta_c·eta_d = {product}", self.eta_f)));
            }
        }
        for (name, v) in [
            ("r0", self.r0),
            ("power_q", self.power_q),
            ("classical.a_tilde", self.classical.a_tilde),
            ("classical.power", self.classical.power),
            ("supercomputer.a_tilde", self.supercomputer.a_tilde),
            ("supercomputer.power", self.supercomputer.power),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// `R_q = (η_f·η_t^M)^N·R_0 / (N·e)`.
pub fn quantum_rate(hw: &HardwareProfile, photons: u32, modes: u32) -> f64 {
    let per_photon = hw.eta_f * hw.eta_t.powf(f64::from(modes));
    per_photon.powf(f64::from(photons)) * hw.r0 / (f64::from(photons) * E)
}

/// `R_c = 1 / (ã·2·N·2^N)`.
pub fn classical_rate(a_tilde: f64, photons: u32) -> f64 {
    1.0 / (a_tilde * 2.0 * f64::from(photons) * 2f64.powf(f64::from(photons)))
}

pub fn energy_per_sample(power_watts: f64, rate_hz: f64) -> Result<f64> {
    if !(rate_hz > 0.0) {
        return Err(Error::Parameter(format!("rate must be positive, got {rate_hz}")));
    }
    Ok(power_watts / rate_hz)
}

/// `R_q / R_c` against the single-core machine.
pub fn speedup(hw: &HardwareProfile, photons: u32, modes: u32) -> f64 {
    quantum_rate(hw, photons, modes) / classical_rate(hw.classical.a_tilde_at(photons), photons)
}

/// Rates and energies at one photon number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerfRow {
    pub n: u32,
    pub m: u32,
    pub r_q: f64,
    pub r_c_single: f64,
    pub r_c_super: f64,
    pub speedup_single: f64,
    pub speedup_super: f64,
    pub e_q: f64,
    pub e_c_single: f64,
    pub e_c_super: f64,
    /// Classical energy per sample over quantum energy per sample.
    pub ratio_single: f64,
    pub ratio_super: f64,
}

pub fn perf_row(hw: &HardwareProfile, photons: u32, modes: u32) -> Result<PerfRow> {
    let r_q = quantum_rate(hw, photons, modes);
    let r_c_single = classical_rate(hw.classical.a_tilde_at(photons), photons);
    let r_c_super = classical_rate(hw.supercomputer.a_tilde_at(photons), photons);
    let e_q = energy_per_sample(hw.power_q, r_q)?;
    let e_c_single = energy_per_sample(hw.classical.power, r_c_single)?;
    let e_c_super = energy_per_sample(hw.supercomputer.power, r_c_super)?;
    Ok(PerfRow {
        n: photons,
        m: modes,
        r_q,
        r_c_single,
        r_c_super,
        speedup_single: r_q / r_c_single,
        speedup_super: r_q / r_c_super,
        e_q,
        e_c_single,
        e_c_super,
        ratio_single: e_c_single / e_q,
        ratio_super: e_c_super / e_q,
    })
}

/// One row per photon number with `M = N²`.
pub fn perf_table(hw: &HardwareProfile, photons: std::ops::RangeInclusive<u32>) -> Result<Vec<PerfRow>> {
    photons.map(|n| perf_row(hw, n, n * n)).collect()
}

/// Smallest photon number (with `M = N²`) at which the quantum device
/// outpaces the single-core machine.
pub fn speedup_crossover(hw: &HardwareProfile, photons: std::ops::RangeInclusive<u32>) -> Option<u32> {
    photons.into_iter().find(|&n| speedup(hw, n, n * n) >= 1.0)
}

/// `T_mine = max(N_mb, N_sb) / R_q`.
pub fn mining_time(samples_mb: u64, samples_sb: u64, r_q: f64) -> Result<f64> {
    if !(r_q > 0.0) {
        return Err(Error::Parameter(format!("rate must be positive, got {r_q}")));
    }
    Ok(samples_mb.max(samples_sb) as f64 / r_q)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Every winner is paid for its own samples.
    #[default]
    Split,
    /// One uniformly chosen winner takes the whole block reward.
    Block,
}

/// Per-sample cost `k_variable + k_fixed/τ`, with `τ` the samples produced
/// over the hardware lifetime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostComponents {
    pub k_fixed: f64,
    pub k_variable: f64,
    pub tau: f64,
}

impl CostComponents {
    pub fn per_sample(&self) -> Result<f64> {
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        Ok(self.k_variable + self.k_fixed / self.tau)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EconomicsConfig {
    /// Reward per sample.
    pub reward: f64,
    /// Penalty per sample.
    pub penalty: f64,
    /// Honest quantum cost per sample.
    pub k: f64,
    pub k_classical: f64,
    pub p_honest: f64,
    pub p_cheat: f64,
    #[serde(default)]
    pub reward_mode: RewardMode,
    /// Risk-aversion coefficient, used in block mode.
    #[serde(default)]
    pub risk_aversion: f64,
    /// Winner-set size for the block-mode lottery.
    #[serde(default = "one")]
    pub block_winners: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_components: Option<CostComponents>,
    #[serde(default = "yes")]
    pub check_assumptions: bool,
}

fn one() -> u32 {
    1
}

fn yes() -> bool {
    true
}

impl Default for EconomicsConfig {
    fn default() -> Self {
        EconomicsConfig {
            reward: 10.0,
            penalty: 5.0,
            k: 1.0,
            k_classical: 100.0,
            p_honest: 0.9,
            p_cheat: 0.1,
            reward_mode: RewardMode::Split,
            risk_aversion: 0.0,
            block_winners: 1,
            cost_components: None,
            check_assumptions: true,
        }
    }
}

impl EconomicsConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("reward", self.reward),
            ("penalty", self.penalty),
            ("k", self.k),
            ("k_classical", self.k_classical),
            ("risk_aversion", self.risk_aversion),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        for (name, v) in [("p_honest", self.p_honest), ("p_cheat", self.p_cheat)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0,1], got {v}")));
            }
        }
        if self.block_winners == 0 {
            return Err(Error::Config("block_winners must be at least 1".into()));
        }
        if let Some(c) = self.cost_components {
            c.per_sample()?;
        }
        Ok(())
    }

    /// Honest cost per sample, from the components when given.
    pub fn honest_cost(&self) -> f64 {
        self.cost_components.and_then(|c| c.per_sample().ok()).unwrap_or(self.k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Utilities {
    pub honest: f64,
    pub cheat: f64,
    pub classical: f64,
    pub nothing: f64,
}

/// Payout variance of one winner under the block lottery:
/// `(w·n·R)²·(p/w)·(1 − p/w)`.
pub fn block_variance(econ: &EconomicsConfig, n: f64, p: f64) -> f64 {
    let w = f64::from(econ.block_winners);
    let q = p / w;
    (w * n * econ.reward).powi(2) * q * (1.0 - q)
}

/// Expected utilities for `n` samples:
/// `u = n(p·R − cost − (1−p)·P)`, less `A·σ²` in block mode.
pub fn utilities(econ: &EconomicsConfig, n: f64) -> Utilities {
    let (r, pen) = (econ.reward, econ.penalty);
    let base = |p: f64, cost: f64| n * (p * r - cost - (1.0 - p) * pen);
    let risk = |p: f64| match econ.reward_mode {
        RewardMode::Split => 0.0,
        RewardMode::Block => econ.risk_aversion * block_variance(econ, n, p),
    };
    Utilities {
        honest: base(econ.p_honest, econ.honest_cost()) - risk(econ.p_honest),
        cheat: base(econ.p_cheat, 0.0) - risk(econ.p_cheat),
        classical: base(econ.p_honest, econ.k_classical) - risk(econ.p_honest),
        nothing: 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    /// `(2k, k_classical)`.
    pub reward_range: (f64, f64),
    /// `(R/3, R)`.
    pub penalty_range: (f64, f64),
    pub feasible: bool,
}

pub fn bounds(econ: &EconomicsConfig) -> Bounds {
    let k = econ.honest_cost();
    Bounds {
        reward_range: (2.0 * k, econ.k_classical),
        penalty_range: (econ.reward / 3.0, econ.reward),
        feasible: 2.0 * k < econ.k_classical,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashVerdict {
    pub passed: bool,
    pub bounds: Bounds,
    /// Utilities per sample.
    pub per_sample: Utilities,
    /// Two-sided penalty window `(p_c·R/(1−p_c), (p_h·R − k)/(1−p_h))`.
    pub penalty_window: (f64, f64),
    pub reasons: Vec<String>,
}

/// Checks the configured values against every equilibrium condition and
/// reports each violated one.
pub fn nash_check(econ: &EconomicsConfig) -> NashVerdict {
    let b = bounds(econ);
    let u = utilities(econ, 1.0);
    let k = econ.honest_cost();
    let (r, pen, ph, pc) = (econ.reward, econ.penalty, econ.p_honest, econ.p_cheat);
    let window = (pc * r / (1.0 - pc), (ph * r - k) / (1.0 - ph));
    let mut reasons = Vec::new();
    if !b.feasible {
        reasons.push(format!("infeasible: 2k = {} >= k_classical = {}", 2.0 * k, econ.k_classical));
    }
    if r <= b.reward_range.0 {
        reasons.push(format!("reward {r} not above 2k = {}", b.reward_range.0));
    }
    if r >= econ.k_classical {
        reasons.push(format!("classical not excluded: reward {r} >= k_classical {}", econ.k_classical));
    }
    if !(pen > b.penalty_range.0 && pen < b.penalty_range.1) {
        reasons.push(format!("penalty {pen} outside (R/3, R) = ({}, {})", b.penalty_range.0, b.penalty_range.1));
    }
    if !(pen > window.0 && pen < window.1) {
        reasons.push(format!("penalty {pen} outside window ({}, {})", window.0, window.1));
    }
    if econ.check_assumptions {
        if !(ph > 0.75 && ph < 1.0) {
            reasons.push(format!("p_honest {ph} outside (0.75, 1)"));
        }
        if !(pc > 0.0 && pc < 0.25) {
            reasons.push(format!("p_cheat {pc} outside (0, 0.25)"));
        }
    }
    if u.honest <= 0.0 {
        reasons.push(format!("honest utility {} not positive", u.honest));
    }
    if u.cheat >= 0.0 {
        reasons.push(format!("cheating utility {} not negative", u.cheat));
    }
    if u.classical >= 0.0 {
        reasons.push(format!("classical not excluded: utility {}", u.classical));
    }
    NashVerdict { passed: reasons.is_empty(), bounds: b, per_sample: u, penalty_window: window, reasons }
}

/// Largest per-sample cheating utility over `p_c ∈ (0, 0.25)`.
pub fn worst_case_cheat(econ: &EconomicsConfig, steps: usize) -> f64 {
    (1..steps)
        .map(|i| {
            let mut e = *econ;
            e.p_cheat = 0.25 * i as f64 / steps as f64;
            utilities(&e, 1.0).cheat
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Without a penalty a cheater can inflate its sample count to
/// `n·p_h/p_c` for free and out-earn an honest miner with `n` samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoPenaltyOutcome {
    pub honest_samples: f64,
    pub cheat_samples: f64,
    pub u_honest: f64,
    pub u_cheat: f64,
}

pub fn no_penalty_counterexample(econ: &EconomicsConfig, n: f64) -> Result<NoPenaltyOutcome> {
    if !(econ.p_cheat > 0.0) {
        return Err(Error::Parameter("p_cheat must be positive".into()));
    }
    let mut e = *econ;
    e.penalty = 0.0;
    let cheat_samples = n * econ.p_honest / econ.p_cheat;
    Ok(NoPenaltyOutcome {
        honest_samples: n,
        cheat_samples,
        u_honest: utilities(&e, n).honest,
        u_cheat: utilities(&e, cheat_samples).cheat,
    })
}

/// Nearest-rank `m`-th lower percentile; `m = 0` is the minimum.
pub fn heterogeneous_k(costs: &[f64], m: f64) -> Result<f64> {
    if costs.is_empty() {
        return Err(Error::Empty("cost list"));
    }
    if !(0.0..=100.0).contains(&m) {
        return Err(Error::Parameter(format!("percentile must lie in [0,100], got {m}")));
    }
    let mut sorted = costs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((m / 100.0) * sorted.len() as f64).ceil() as usize;
    Ok(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// Interior grid point `i` of `steps` in the open interval `(lo, hi)`.
pub fn interior(lo: f64, hi: f64, i: usize, steps: usize) -> f64 {
    lo + (hi - lo) * (i as f64 + 1.0) / (steps as f64 + 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub cases: usize,
    pub failures: Vec<String>,
}

/// Exhaustive check of `u_honest > 0 > u_cheat` and `u_classical < 0` over
/// an `rp_steps`² grid of `(R, P)` inside the bounds and a `p_steps`² grid of
/// `(p_h, p_c)` inside the assumption bands.
pub fn nash_grid(k: f64, k_classical: f64, rp_steps: usize, p_steps: usize) -> Result<GridReport> {
    if !(2.0 * k < k_classical) {
        return Err(Error::Config(format!("infeasible: 2k = {} >= k_classical = {k_classical}", 2.0 * k)));
    }
    let mut cases = 0;
    let mut failures = Vec::new();
    for i in 0..rp_steps {
        let r = interior(2.0 * k, k_classical, i, rp_steps);
        for j in 0..rp_steps {
            let pen = interior(r / 3.0, r, j, rp_steps);
            for a in 0..p_steps {
                let ph = interior(0.75, 1.0, a, p_steps);
                for c in 0..p_steps {
                    let pc = interior(0.0, 0.25, c, p_steps);
                    let econ = EconomicsConfig {
                        reward: r,
                        penalty: pen,
                        k,
                        k_classical,
                        p_honest: ph,
                        p_cheat: pc,
                        ..EconomicsConfig::default()
                    };
                    let u = utilities(&econ, 1.0);
                    cases += 1;
                    if !(u.honest > 0.0 && u.cheat < 0.0 && u.classical < 0.0) {
                        failures.push(format!("R={r} P={pen} p_h={ph} p_c={pc}: {u:?}"));
                    }
                }
            }
        }
    }
    Ok(GridReport { cases, failures })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn rate_formulas() {
        let hw = HardwareProfile { eta_f: 1.0, eta_t: 1.0, ..HardwareProfile::default() };
        assert!(rel(quantum_rate(&hw, 1, 1), 1e8 / E) < 1e-14);
        assert!(rel(classical_rate(2.0, 1), 1.0 / 8.0) < 1e-14);
        let hw = HardwareProfile::default();
        assert!(quantum_rate(&hw, 10, 625) > quantum_rate(&hw, 11, 625));
    }

    #[test]
    fn golden_rates_at_25() {
        let hw = HardwareProfile::default();
        let row = perf_row(&hw, 25, 625).unwrap();
        assert!(rel(row.r_q, 22141.6) < 1e-5, "{}", row.r_q);
        assert!(rel(row.r_c_single, 0.94467) < 1e-4, "{}", row.r_c_single);
        assert!(rel(row.r_c_super, 11980.8) < 1e-4, "{}", row.r_c_super);
        assert!(rel(row.e_q, 6.77e-2) < 0.01);
        assert!(rel(row.ratio_single, 1563.0) < 0.02);
        assert!(rel(row.ratio_super, 29569.0) < 0.02);
    }

    #[test]
    fn mining_time_scaling() {
        assert_eq!(mining_time(100, 100, 100.0).unwrap(), 1.0);
        assert_eq!(mining_time(200, 100, 100.0).unwrap(), 2.0);
        assert!(mining_time(1, 1, 0.0).is_err());
    }

    #[test]
    fn utility_examples() {
        let econ = EconomicsConfig {
            reward: 1.0,
            penalty: 0.5,
            k: 0.1,
            p_honest: 0.9,
            p_cheat: 0.1,
            ..EconomicsConfig::default()
        };
        let u = utilities(&econ, 1.0);
        assert!((u.honest - 0.75).abs() < 1e-12);
        assert!((u.cheat + 0.35).abs() < 1e-12);
        let zero = utilities(&econ, 0.0);
        assert_eq!((zero.honest, zero.cheat, zero.classical, zero.nothing), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn block_mode_subtracts_variance() {
        let split = EconomicsConfig::default();
        let block = EconomicsConfig { reward_mode: RewardMode::Block, risk_aversion: 0.01, block_winners: 2, ..split };
        let var = block_variance(&block, 3.0, 0.9);
        assert!((var - (60.0f64).powi(2) * 0.45 * 0.55).abs() < 1e-9);
        let diff = utilities(&split, 3.0).honest - utilities(&block, 3.0).honest;
        assert!((diff - 0.01 * var).abs() < 1e-9);
    }

    #[test]
    fn nash_examples() {
        let v = nash_check(&EconomicsConfig::default());
        assert!(v.passed, "{:?}", v.reasons);

        let classical = EconomicsConfig { reward: 100.0, penalty: 50.0, ..EconomicsConfig::default() };
        let v = nash_check(&classical);
        assert!(!v.passed);
        assert!(v.reasons.iter().any(|r| r.contains("classical not excluded")));

        let low_penalty = EconomicsConfig { penalty: 2.5, p_cheat: 0.24, ..EconomicsConfig::default() };
        assert!(!nash_check(&low_penalty).passed);
        assert!(worst_case_cheat(&low_penalty, 1000) > -0.1);
    }

    #[test]
    fn infeasible_bounds() {
        let econ = EconomicsConfig { k: 60.0, ..EconomicsConfig::default() };
        let b = bounds(&econ);
        assert!(!b.feasible);
        assert!(nash_check(&econ).reasons.iter().any(|r| r.starts_with("infeasible")));
    }

    #[test]
    fn no_penalty_cheater_wins() {
        let econ = EconomicsConfig { reward: 1.0, k: 0.1, ..EconomicsConfig::default() };
        let out = no_penalty_counterexample(&econ, 100.0).unwrap();
        assert!((out.cheat_samples - 900.0).abs() < 1e-9);
        assert!(out.u_cheat > out.u_honest);
        assert!((out.u_cheat - out.u_honest - 100.0 * 0.1).abs() < 1e-9);
    }

    #[test]
    fn percentile_examples() {
        assert_eq!(heterogeneous_k(&[3.0, 1.0, 2.0], 0.0).unwrap(), 1.0);
        let costs: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(heterogeneous_k(&costs, 25.0).unwrap(), 25.0);
        assert_eq!(heterogeneous_k(&[7.0], 90.0).unwrap(), 7.0);
        assert!(heterogeneous_k(&[], 10.0).is_err());
    }

    #[test]
    fn cost_components() {
        let c = CostComponents { k_fixed: 1000.0, k_variable: 0.5, tau: 2000.0 };
        assert_eq!(c.per_sample().unwrap(), 1.0);
    }

    #[test]
    fn efficiency_product_checked() {
        let mut hw = HardwareProfile {
            components: Some(Efficiencies { eta_g: 0.9, eta_c: 1.0, eta_d: 1.0 }),
            ..HardwareProfile::default()
        };
        hw.validate().unwrap();
        hw.eta_f = 0.8;
        assert!(hw.validate().is_err());
    }
}
