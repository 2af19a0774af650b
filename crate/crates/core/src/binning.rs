//! Coarse-grained views of the boson-sampling output.
//!
//! Mode binning groups the M output modes into `d` equal bins; the
//! distribution of binned photon counts `n ∈ Z_{N+1}^d` is the inverse DFT of
//! a characteristic function that is itself a single N×N permanent per grid
//! point, so it can be computed exactly or estimated with Gurvits' sampler.
//! State binning groups whole output states into `d` equal bins through a
//! secret permutation; its peak bin probability has no known efficient
//! classical estimator.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::combin::binomial;
use crate::error::{Error, Result};
use crate::linalg::{permanent_exact, permanent_gurvits, ComplexMatrix, EstimatorConfig};
use crate::perm::Permutation;
use crate::rng;
use crate::sampler::{
    enumerate_states, InputSpec, OccupationVector, OutputDistribution, StateSpace, DEFAULT_STATE_CAP,
};

/// Leading constant of the mode-binned sample-count formula (2¹⁴).
pub const MODE_SAMPLE_CONSTANT: f64 = 16384.0;

/// Partition of the output modes into equal-sized bins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeBinning {
    modes: usize,
    bins: Vec<Vec<usize>>,
    #[serde(skip)]
    bin_of: Vec<usize>,
}

impl ModeBinning {
    /// Bin `j` holds `{π(k)}` for `k ∈ [j·M/d, (j+1)·M/d)`.
    pub fn from_permutation(pi: &Permutation, d: usize) -> Result<Self> {
        let m = pi.len();
        if d == 0 || !m.is_multiple_of(d) {
            return Err(Error::Parameter(format!("bin count {d} must divide M = {m}")));
        }
        let size = m / d;
        let bins = (0..d).map(|j| pi.as_slice()[j * size..(j + 1) * size].to_vec()).collect();
        Self::from_bins(m, bins)
    }

    /// Consecutive modes per bin.
    pub fn contiguous(modes: usize, d: usize) -> Result<Self> {
        Self::from_permutation(&Permutation::identity(modes), d)
    }

    pub fn from_bins(modes: usize, bins: Vec<Vec<usize>>) -> Result<Self> {
        if bins.is_empty() {
            return Err(Error::Parameter("at least one bin required".into()));
        }
        let size = bins[0].len();
        if bins.iter().any(|b| b.len() != size) {
            return Err(Error::Parameter("mode bins must have equal size".into()));
        }
        let mut bin_of = vec![usize::MAX; modes];
        for (j, bin) in bins.iter().enumerate() {
            for &k in bin {
                if k >= modes || bin_of[k] != usize::MAX {
                    return Err(Error::Parameter(format!("mode {k} missing, repeated or out of range")));
                }
                bin_of[k] = j;
            }
        }
        if bin_of.contains(&usize::MAX) {
            return Err(Error::Parameter("mode bins must cover every mode".into()));
        }
        Ok(ModeBinning { modes, bins, bin_of })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn bin_count(&self) -> usize {
        self.bins.len()
    }

    pub fn bins(&self) -> &[Vec<usize>] {
        &self.bins
    }

    pub fn bin_of(&self, mode: usize) -> usize {
        self.bin_of[mode]
    }
}

/// Photons per bin.
pub fn binned_counts(y: &OccupationVector, b: &ModeBinning) -> Result<Vec<u32>> {
    if y.modes() != b.modes {
        return Err(Error::dim(b.modes, y.modes()));
    }
    let mut n = vec![0u32; b.bin_count()];
    for (mode, &c) in y.counts().iter().enumerate() {
        n[b.bin_of[mode]] += c;
    }
    Ok(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinnedKind {
    /// Distribution over binned count vectors.
    Mode,
    /// Per-bin photon fractions of a sample set.
    ModeFraction,
    /// Distribution over state bins.
    State,
}

/// A distribution (or fraction vector) over labelled bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedDistribution {
    pub kind: BinnedKind,
    pub labels: Vec<Vec<u32>>,
    pub probs: Vec<f64>,
    /// Negative mass removed before renormalization.
    pub clamped_mass: f64,
}

impl BinnedDistribution {
    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Mean photon fraction per bin, `f_j = Σ_n (n_j/N)·P(n)`, for a
    /// count-vector distribution.
    pub fn expected_fractions(&self) -> Result<Vec<f64>> {
        if self.kind != BinnedKind::Mode {
            return Err(Error::Parameter("photon fractions need a count-vector distribution".into()));
        }
        let d = self.labels.first().map_or(0, Vec::len);
        let mut f = vec![0.0; d];
        for (n, p) in self.labels.iter().zip(&self.probs) {
            let total: u32 = n.iter().sum();
            if total == 0 {
                continue;
            }
            for (fj, &nj) in f.iter_mut().zip(n) {
                *fj += p * f64::from(nj) / f64::from(total);
            }
        }
        Ok(f)
    }

    pub(crate) fn clamp_and_normalize(kind: BinnedKind, labels: Vec<Vec<u32>>, raw: Vec<f64>) -> Self {
        let clamped_mass: f64 = raw.iter().filter(|&&p| p < 0.0).map(|p| -p).sum();
        let mut probs: Vec<f64> = raw.into_iter().map(|p| p.max(0.0)).collect();
        let total: f64 = probs.iter().sum();
        if clamped_mass > 0.0 && total > 0.0 {
            for p in probs.iter_mut() {
                *p /= total;
            }
        }
        BinnedDistribution { kind, labels, probs, clamped_mass }
    }
}

/// How a characteristic-function value is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CharMode {
    Exact,
    Gurvits(EstimatorConfig),
}

fn check_setup(u: &ComplexMatrix, input: &InputSpec, b: &ModeBinning) -> Result<()> {
    if !u.is_square() || u.rows() != input.modes || b.modes != input.modes {
        return Err(Error::dim(
            format!("M = {} for interferometer, input and binning", input.modes),
            format!("U {}x{}, binning over {}", u.rows(), u.cols(), b.modes),
        ));
    }
    Ok(())
}

/// `V_N(s)`: rows and columns of `U·D(s)·U†` at the input photon modes, where
/// `D(s)` puts phase `e^{i s_j}` on every mode of bin `j` and
/// `s = 2πc/(N+1)`.
pub fn phase_submatrix(u: &ComplexMatrix, input: &InputSpec, b: &ModeBinning, c: &[u32]) -> Result<ComplexMatrix> {
    check_setup(u, input, b)?;
    if c.len() != b.bin_count() {
        return Err(Error::dim(b.bin_count(), c.len()));
    }
    let grid = f64::from(input.photons() + 1);
    let phases: Vec<Complex64> =
        (0..input.modes).map(|k| Complex64::from_polar(1.0, 2.0 * PI * f64::from(c[b.bin_of[k]]) / grid)).collect();
    let x = &input.photon_modes;
    let n = x.len();
    Ok(ComplexMatrix::from_fn(n, n, |a, bb| {
        let (ra, rb) = (u.row(x[a]), u.row(x[bb]));
        (0..input.modes).map(|k| ra[k] * phases[k] * rb[k].conj()).sum()
    }))
}

/// `χ(2πc/(N+1)) = Per(V_N)`, exactly or by Gurvits estimation.
pub fn char_function(
    u: &ComplexMatrix,
    input: &InputSpec,
    b: &ModeBinning,
    c: &[u32],
    mode: CharMode,
) -> Result<Complex64> {
    let v = phase_submatrix(u, input, b, c)?;
    match mode {
        CharMode::Exact => permanent_exact(&v),
        CharMode::Gurvits(cfg) => Ok(permanent_gurvits(&v, &cfg)?.estimate),
    }
}

/// Every `c ∈ Z_{base}^d`, lexicographic.
pub fn dft_grid(base: u32, d: usize) -> Vec<Vec<u32>> {
    let total = (base as usize).pow(d as u32);
    (0..total)
        .map(|mut idx| {
            let mut c = vec![0u32; d];
            for slot in c.iter_mut().rev() {
                *slot = (idx % base as usize) as u32;
                idx /= base as usize;
            }
            c
        })
        .collect()
}

/// `(1/G) Σ_c χ(c) e^{−2πi c·n/(N+1)}` for each label `n`.
pub(crate) fn inverse_dft(grid: &[Vec<u32>], chi: &[Complex64], labels: &[Vec<u32>], base: u32) -> Vec<f64> {
    let g = grid.len() as f64;
    let base = f64::from(base);
    labels
        .iter()
        .map(|n| {
            let s: Complex64 = grid
                .iter()
                .zip(chi)
                .map(|(c, &x)| {
                    let dot: u32 = c.iter().zip(n).map(|(a, b)| a * b).sum();
                    x * Complex64::from_polar(1.0, -2.0 * PI * f64::from(dot) / base)
                })
                .sum();
            s.re / g
        })
        .collect()
}

fn grid_size(base: u32, d: usize, cap: u128) -> Result<()> {
    let g = (base as u128).checked_pow(d as u32).unwrap_or(u128::MAX);
    if g > cap {
        return Err(Error::Capacity { what: "characteristic-function grid", needed: g, cap });
    }
    Ok(())
}

/// Exact mode-binned distribution over weight-N count vectors (labels in
/// lexicographic order), via the characteristic-function DFT.
pub fn exact_mode_binned(u: &ComplexMatrix, input: &InputSpec, b: &ModeBinning) -> Result<BinnedDistribution> {
    mode_binned_with(u, input, b, |_, _| Ok(CharMode::Exact))
}

fn mode_binned_with(
    u: &ComplexMatrix,
    input: &InputSpec,
    b: &ModeBinning,
    mut mode_for: impl FnMut(usize, &[u32]) -> Result<CharMode>,
) -> Result<BinnedDistribution> {
    check_setup(u, input, b)?;
    let n = input.photons();
    let d = b.bin_count();
    grid_size(n + 1, d, DEFAULT_STATE_CAP)?;
    let grid = dft_grid(n + 1, d);
    let chi = grid
        .iter()
        .enumerate()
        .map(|(i, c)| char_function(u, input, b, c, mode_for(i, c)?))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<Vec<u32>> = enumerate_states(d, n)?.into_iter().map(|s| s.0).collect();
    let raw = inverse_dft(&grid, &chi, &labels, n + 1);
    Ok(BinnedDistribution::clamp_and_normalize(BinnedKind::Mode, labels, raw))
}

/// Accuracy targets for validation and success determination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyParams {
    /// Validation TV tolerance β.
    pub beta: f64,
    /// Peak-bin accuracy ε.
    pub epsilon: f64,
    /// Confidence complement γ.
    pub gamma: f64,
    /// Additive error δ for each permanent estimate.
    pub delta: f64,
    /// Per-permanent confidence p.
    pub confidence: f64,
}

impl AccuracyParams {
    /// Parameters with δ set to its cap `β/(N+1)^{d/2}`.
    pub fn for_validation(
        beta: f64,
        epsilon: f64,
        gamma: f64,
        confidence: f64,
        photons: u32,
        d: usize,
    ) -> Result<Self> {
        let acc = AccuracyParams { beta, epsilon, gamma, delta: delta_cap(beta, photons, d), confidence };
        acc.validate(photons, d)?;
        Ok(acc)
    }

    pub fn validate(&self, photons: u32, d: usize) -> Result<()> {
        for (name, v) in [
            ("beta", self.beta),
            ("epsilon", self.epsilon),
            ("gamma", self.gamma),
            ("delta", self.delta),
            ("confidence", self.confidence),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0,1), got {v}")));
            }
        }
        let cap = delta_cap(self.beta, photons, d);
        if self.delta > cap * (1.0 + 1e-12) {
            return Err(Error::Config(format!("delta {} exceeds beta/(N+1)^(d/2) = {cap}", self.delta)));
        }
        Ok(())
    }
}

/// `β / (N+1)^{d/2}`.
pub fn delta_cap(beta: f64, photons: u32, d: usize) -> f64 {
    beta / f64::from(photons + 1).powf(d as f64 / 2.0)
}

/// Gurvits-estimated mode-binned distribution `P̂`. Each grid point gets its
/// own sub-stream derived from `seed`; negative entries are clamped and the
/// removed mass is reported.
pub fn estimated_mode_binned(
    u: &ComplexMatrix,
    input: &InputSpec,
    b: &ModeBinning,
    acc: &AccuracyParams,
    seed: u64,
) -> Result<BinnedDistribution> {
    acc.validate(input.photons(), b.bin_count())?;
    mode_binned_with(u, input, b, |i, _| {
        Ok(CharMode::Gurvits(EstimatorConfig::new(acc.delta, acc.confidence, rng::derive(seed, "chi", i as u64))?))
    })
}

/// Brute-force marginal of a full output distribution onto mode bins.
pub fn marginal_mode_binned(dist: &OutputDistribution, b: &ModeBinning) -> Result<BinnedDistribution> {
    let n = dist.states.first().ok_or(Error::Empty("distribution"))?.weight();
    let labels: Vec<Vec<u32>> = enumerate_states(b.bin_count(), n)?.into_iter().map(|s| s.0).collect();
    let mut probs = vec![0.0; labels.len()];
    for (y, p) in dist.states.iter().zip(&dist.probs) {
        let counts = binned_counts(y, b)?;
        let k = labels.binary_search(&counts).expect("weight-N label");
        probs[k] += p;
    }
    Ok(BinnedDistribution { kind: BinnedKind::Mode, labels, probs, clamped_mass: 0.0 })
}

/// Per-bin photon fractions `m_j / (N·|s|)` of a sample set.
pub fn empirical_mode_binned(samples: &[OccupationVector], b: &ModeBinning) -> Result<BinnedDistribution> {
    let first = samples.first().ok_or(Error::Empty("sample set"))?;
    let n = first.weight();
    let mut m = vec![0u64; b.bin_count()];
    for s in samples {
        if s.weight() != n {
            return Err(Error::PhotonNumber { expected: n, found: s.weight() });
        }
        for (j, c) in binned_counts(s, b)?.into_iter().enumerate() {
            m[j] += u64::from(c);
        }
    }
    let denom = f64::from(n) * samples.len() as f64;
    Ok(BinnedDistribution {
        kind: BinnedKind::ModeFraction,
        labels: (0..b.bin_count() as u32).map(|j| vec![j]).collect(),
        probs: m.into_iter().map(|x| x as f64 / denom).collect(),
        clamped_mass: 0.0,
    })
}

/// Histogram of binned count vectors over a sample set, on the same labels as
/// [`exact_mode_binned`].
pub fn empirical_count_distribution(samples: &[OccupationVector], b: &ModeBinning) -> Result<BinnedDistribution> {
    let first = samples.first().ok_or(Error::Empty("sample set"))?;
    let n = first.weight();
    let labels: Vec<Vec<u32>> = enumerate_states(b.bin_count(), n)?.into_iter().map(|s| s.0).collect();
    let mut hist = vec![0u64; labels.len()];
    for s in samples {
        if s.weight() != n {
            return Err(Error::PhotonNumber { expected: n, found: s.weight() });
        }
        let counts = binned_counts(s, b)?;
        let k = labels.binary_search(&counts).expect("weight-N label");
        hist[k] += 1;
    }
    let total = samples.len() as f64;
    Ok(BinnedDistribution {
        kind: BinnedKind::Mode,
        labels,
        probs: hist.into_iter().map(|h| h as f64 / total).collect(),
        clamped_mass: 0.0,
    })
}

/// `½ Σ |Pᵢ − Qᵢ|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::dim(p.len(), q.len()));
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// What a miner's samples are compared against during validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// Empirical count-vector histogram vs `P̂` over count vectors.
    #[default]
    CountVector,
    /// Per-bin photon fractions vs the expected fractions of `P̂`.
    PhotonFraction,
}

/// TV distance between a sample set and the reference mode-binned
/// distribution under the chosen comparison.
pub fn validation_distance(
    samples: &[OccupationVector],
    b: &ModeBinning,
    reference: &BinnedDistribution,
    comparison: Comparison,
) -> Result<f64> {
    match comparison {
        Comparison::CountVector => {
            let emp = empirical_count_distribution(samples, b)?;
            if emp.labels != reference.labels {
                return Err(Error::dim("matching count-vector labels", "different label sets"));
            }
            tv_distance(&emp.probs, &reference.probs)
        }
        Comparison::PhotonFraction => {
            let emp = empirical_mode_binned(samples, b)?;
            tv_distance(&emp.probs, &reference.expected_fractions()?)
        }
    }
}

/// Equal-sized bins over the lexicographic state list, arranged by a
/// permutation of state indices: bin `j` holds `{Y_{π(k)}}` for
/// `k ∈ [j·|Y|/d, (j+1)·|Y|/d)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateBinning {
    state_count: usize,
    bins: usize,
    perm: Permutation,
    bin_of_state: Vec<usize>,
}

pub fn state_bins(pi: &Permutation, state_count: usize, d: usize) -> Result<StateBinning> {
    if pi.len() != state_count {
        return Err(Error::dim(state_count, pi.len()));
    }
    if d == 0 || !state_count.is_multiple_of(d) {
        return Err(Error::Parameter(format!("bin count {d} must divide the state count {state_count}")));
    }
    let size = state_count / d;
    let mut bin_of_state = vec![0; state_count];
    for k in 0..state_count {
        bin_of_state[pi.apply(k)] = k / size;
    }
    Ok(StateBinning { state_count, bins: d, perm: pi.clone(), bin_of_state })
}

impl StateBinning {
    pub fn bin_count(&self) -> usize {
        self.bins
    }

    pub fn state_count(&self) -> usize {
        self.state_count
    }

    pub fn permutation(&self) -> &Permutation {
        &self.perm
    }

    pub fn bin_of_state(&self, k: usize) -> usize {
        self.bin_of_state[k]
    }

    /// Exact bin probabilities from a full output distribution.
    pub fn aggregate(&self, dist: &OutputDistribution) -> Result<BinnedDistribution> {
        if dist.probs.len() != self.state_count {
            return Err(Error::dim(self.state_count, dist.probs.len()));
        }
        let mut probs = vec![0.0; self.bins];
        for (k, p) in dist.probs.iter().enumerate() {
            probs[self.bin_of_state[k]] += p;
        }
        Ok(BinnedDistribution {
            kind: BinnedKind::State,
            labels: (0..self.bins as u32).map(|j| vec![j]).collect(),
            probs,
            clamped_mass: 0.0,
        })
    }
}

/// Peak bin of a state-binned histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakBin {
    pub mu: f64,
    pub argmax_bin: usize,
    pub counts: Vec<u64>,
}

impl PeakBin {
    /// Peak of explicit bin counts; ties go to the smallest bin index.
    pub fn from_counts(counts: Vec<u64>) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::Empty("state-binned sample set"));
        }
        let (argmax_bin, &max) =
            counts.iter().enumerate().fold((0, &counts[0]), |best, cur| if cur.1 > best.1 { cur } else { best });
        Ok(PeakBin { mu: max as f64 / total as f64, argmax_bin, counts })
    }
}

/// Bin counts `h_j` of a sample set under a state binning.
pub fn state_bin_counts(samples: &[OccupationVector], sb: &StateBinning, space: &StateSpace) -> Result<Vec<u64>> {
    if space.len() != sb.state_count {
        return Err(Error::dim(sb.state_count, space.len()));
    }
    let mut counts = vec![0u64; sb.bins];
    for s in samples {
        counts[sb.bin_of_state[space.index_of(s)?]] += 1;
    }
    Ok(counts)
}

/// Peak bin probability `μ = max_j h_j / |samples|`.
pub fn pbp(samples: &[OccupationVector], sb: &StateBinning, space: &StateSpace) -> Result<PeakBin> {
    if samples.is_empty() {
        return Err(Error::Empty("sample set"));
    }
    PeakBin::from_counts(state_bin_counts(samples, sb, space)?)
}

/// Exact peak bin probability of a full distribution.
pub fn true_pbp(dist: &OutputDistribution, sb: &StateBinning) -> Result<(f64, usize)> {
    let agg = sb.aggregate(dist)?;
    let (k, p) =
        agg.probs.iter().enumerate().fold((0, agg.probs[0]), |best, (k, &p)| if p > best.1 { (k, p) } else { best });
    Ok((p, k))
}

/// `⌈2¹⁴·sqrt(binom(N+d−1, N))/β²⌉`.
pub fn required_samples_mode(photons: u32, d: usize, beta: f64) -> Result<u64> {
    required_samples_mode_with(photons, d, beta, MODE_SAMPLE_CONSTANT)
}

/// Mode-binned sample count with an explicit leading constant.
pub fn required_samples_mode_with(photons: u32, d: usize, beta: f64, constant: f64) -> Result<u64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Parameter(format!("beta must lie in (0,1), got {beta}")));
    }
    if d == 0 {
        return Err(Error::Parameter("need at least one mode bin".into()));
    }
    let support = binomial(u64::from(photons) + d as u64 - 1, u64::from(photons))
        .ok_or_else(|| Error::Parameter("binomial overflow".into()))? as f64;
    Ok((constant * support.sqrt() / (beta * beta)).ceil() as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateSampleRule {
    /// `12d/ε²·ln(2/γ)`.
    Hoeffding,
    /// `1.8×10⁵·d^{7/2}`, valid when `2d·ε^{0.8} ≤ 0.1` (γ = 10⁻⁴).
    Bootstrap,
}

pub fn required_samples_state(d: usize, epsilon: f64, gamma: f64, rule: StateSampleRule) -> Result<u64> {
    if d == 0 {
        return Err(Error::Parameter("need at least one state bin".into()));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Parameter(format!("epsilon must lie in (0,1), got {epsilon}")));
    }
    let d = d as f64;
    match rule {
        StateSampleRule::Hoeffding => {
            if !(gamma > 0.0 && gamma < 1.0) {
                return Err(Error::Parameter(format!("gamma must lie in (0,1), got {gamma}")));
            }
            Ok((12.0 * d / (epsilon * epsilon) * (2.0 / gamma).ln()).ceil() as u64)
        }
        StateSampleRule::Bootstrap => {
            let lhs = 2.0 * d * epsilon.powf(0.8);
            if lhs > 0.1 {
                return Err(Error::Validity(format!("bootstrap count needs 2·d_sb·ε^0.8 <= 0.1, got {lhs:.4}")));
            }
            Ok((1.8e5 * d.powf(3.5)).ceil() as u64)
        }
    }
}
