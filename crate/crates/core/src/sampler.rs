//! Exact Fock-state boson sampling at desk scale.
//!
//! The full output distribution over all weight-N occupation vectors is built
//! from permanents of interferometer submatrices, then sampled by inverse CDF.
//! Rows of `U` index input modes and columns index output modes, so a single
//! photon entering mode `i` leaves in mode `j` with probability `|U_ij|²`.
//!
//! Mode indices are zero-based throughout.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::combin::{binomial, factorial};
use crate::error::{Error, Result};
use crate::linalg::{permanent_exact, ComplexMatrix};
use crate::perm::Permutation;
use crate::rng;

/// Default cap on the number of enumerated output states.
pub const DEFAULT_STATE_CAP: u128 = 2_000_000;

/// Photon counts per mode.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OccupationVector(pub Vec<u32>);

impl OccupationVector {
    pub fn weight(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn modes(&self) -> usize {
        self.0.len()
    }

    pub fn counts(&self) -> &[u32] {
        &self.0
    }

    /// Mode indices with repetition: mode `i` appears `counts[i]` times.
    pub fn expanded_modes(&self) -> Vec<usize> {
        self.0.iter().enumerate().flat_map(|(i, &c)| std::iter::repeat_n(i, c as usize)).collect()
    }
}

impl From<Vec<u32>> for OccupationVector {
    fn from(v: Vec<u32>) -> Self {
        OccupationVector(v)
    }
}

/// Number of weight-N occupation vectors over M modes, `binom(M+N−1, N)`.
pub fn state_count(modes: usize, photons: u32) -> Option<u128> {
    if modes == 0 {
        return Some(u128::from(photons == 0));
    }
    binomial(modes as u64 + photons as u64 - 1, photons as u64)
}

/// All weight-N vectors of length M in lexicographic order, within the
/// default capacity cap.
pub fn enumerate_states(modes: usize, photons: u32) -> Result<Vec<OccupationVector>> {
    enumerate_states_capped(modes, photons, DEFAULT_STATE_CAP)
}

pub fn enumerate_states_capped(modes: usize, photons: u32, cap: u128) -> Result<Vec<OccupationVector>> {
    if modes == 0 {
        return Err(Error::dim("M >= 1", 0));
    }
    let count = state_count(modes, photons).unwrap_or(u128::MAX);
    if count > cap {
        return Err(Error::Capacity { what: "output state count", needed: count, cap });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut cur = vec![0u32; modes];
    fill_states(&mut cur, 0, photons, &mut out);
    Ok(out)
}

fn fill_states(cur: &mut [u32], pos: usize, left: u32, out: &mut Vec<OccupationVector>) {
    if pos == cur.len() - 1 {
        cur[pos] = left;
        out.push(OccupationVector(cur.to_vec()));
        return;
    }
    for c in 0..=left {
        cur[pos] = c;
        fill_states(cur, pos + 1, left - c, out);
    }
    cur[pos] = 0;
}

/// The lexicographically ordered state list with a reverse lookup.
#[derive(Debug, Clone)]
pub struct StateSpace {
    modes: usize,
    photons: u32,
    states: Vec<OccupationVector>,
    index: HashMap<OccupationVector, usize>,
}

impl StateSpace {
    pub fn new(modes: usize, photons: u32) -> Result<Self> {
        Self::with_cap(modes, photons, DEFAULT_STATE_CAP)
    }

    pub fn with_cap(modes: usize, photons: u32, cap: u128) -> Result<Self> {
        let states = enumerate_states_capped(modes, photons, cap)?;
        let index = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        Ok(StateSpace { modes, photons, states, index })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn photons(&self) -> u32 {
        self.photons
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[OccupationVector] {
        &self.states
    }

    pub fn state(&self, k: usize) -> &OccupationVector {
        &self.states[k]
    }

    /// Position of `y` in the lexicographic order.
    pub fn index_of(&self, y: &OccupationVector) -> Result<usize> {
        if y.modes() != self.modes {
            return Err(Error::dim(self.modes, y.modes()));
        }
        self.index.get(y).copied().ok_or(Error::PhotonNumber { expected: self.photons, found: y.weight() })
    }
}

/// Single photons in the listed modes, vacuum elsewhere.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSpec {
    pub modes: usize,
    pub photon_modes: Vec<usize>,
}

impl InputSpec {
    pub fn new(modes: usize, mut photon_modes: Vec<usize>) -> Result<Self> {
        photon_modes.sort_unstable();
        let n = photon_modes.len();
        if n == 0 || n > modes {
            return Err(Error::Parameter(format!("need 1 <= N <= M, got N={n}, M={modes}")));
        }
        if photon_modes.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Parameter("input photon modes must be distinct".into()));
        }
        if let Some(&bad) = photon_modes.iter().find(|&&i| i >= modes) {
            return Err(Error::Parameter(format!("input mode {bad} out of range 0..{modes}")));
        }
        Ok(InputSpec { modes, photon_modes })
    }

    pub fn photons(&self) -> u32 {
        self.photon_modes.len() as u32
    }

    pub fn occupation(&self) -> OccupationVector {
        let mut v = vec![0; self.modes];
        for &i in &self.photon_modes {
            v[i] = 1;
        }
        OccupationVector(v)
    }
}

/// Input modes `{Π(0), …, Π(N−1)}`, sorted.
pub fn permuted_input(pi: &Permutation, photons: u32) -> Result<InputSpec> {
    let n = photons as usize;
    if n > pi.len() {
        return Err(Error::Parameter(format!("cannot place {n} photons in {} modes", pi.len())));
    }
    InputSpec::new(pi.len(), pi.as_slice()[..n].to_vec())
}

fn check_interferometer(u: &ComplexMatrix, input: &InputSpec) -> Result<()> {
    if !u.is_square() || u.rows() != input.modes {
        return Err(Error::dim(format!("{0}x{0} interferometer", input.modes), format!("{}x{}", u.rows(), u.cols())));
    }
    Ok(())
}

/// `Per(U_{X,Y}) / sqrt(∏ xᵢ! yᵢ!)`.
pub fn output_amplitude(u: &ComplexMatrix, input: &InputSpec, y: &OccupationVector) -> Result<Complex64> {
    check_interferometer(u, input)?;
    if y.modes() != input.modes {
        return Err(Error::dim(input.modes, y.modes()));
    }
    if y.weight() != input.photons() {
        return Err(Error::PhotonNumber { expected: input.photons(), found: y.weight() });
    }
    Ok(amplitude_unchecked(u, &input.photon_modes, y))
}

fn amplitude_unchecked(u: &ComplexMatrix, rows: &[usize], y: &OccupationVector) -> Complex64 {
    let cols = y.expanded_modes();
    let sub = u.select(rows, &cols).expect("indices validated");
    let per = permanent_exact(&sub).expect("square submatrix");
    let norm: f64 = y.counts().iter().map(|&c| factorial(c)).product();
    per / norm.sqrt()
}

/// Output states in lexicographic order with their probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputDistribution {
    pub states: Vec<OccupationVector>,
    pub probs: Vec<f64>,
}

impl OutputDistribution {
    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Probabilities weighted by the post-selection success rate `η^N`.
    pub fn lossy_weights(&self, eta: f64) -> Vec<f64> {
        let n = self.states.first().map_or(0, |s| s.weight());
        let f = eta.powi(n as i32);
        self.probs.iter().map(|p| p * f).collect()
    }
}

pub fn exact_distribution(u: &ComplexMatrix, input: &InputSpec) -> Result<OutputDistribution> {
    exact_distribution_capped(u, input, DEFAULT_STATE_CAP)
}

pub fn exact_distribution_capped(u: &ComplexMatrix, input: &InputSpec, cap: u128) -> Result<OutputDistribution> {
    check_interferometer(u, input)?;
    let n = input.photons();
    if (input.modes as u64) < (n as u64).pow(2) {
        log::warn!("M = {} is below N² = {}; collision outcomes carry significant weight", input.modes, n * n);
    }
    let states = enumerate_states_capped(input.modes, n, cap)?;
    let probs = states.iter().map(|y| amplitude_unchecked(u, &input.photon_modes, y).norm_sqr()).collect();
    Ok(OutputDistribution { states, probs })
}

/// Inverse-CDF sampler over a fixed distribution.
#[derive(Debug, Clone)]
pub struct Sampler {
    dist: OutputDistribution,
    cdf: Vec<f64>,
}

impl Sampler {
    pub fn new(dist: OutputDistribution) -> Result<Self> {
        if dist.states.is_empty() || dist.states.len() != dist.probs.len() {
            return Err(Error::Empty("distribution"));
        }
        if dist.probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::Parameter("probabilities must be finite and non-negative".into()));
        }
        let mut acc = 0.0;
        let cdf: Vec<f64> = dist
            .probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        if acc <= 0.0 {
            return Err(Error::Parameter("distribution has zero mass".into()));
        }
        Ok(Sampler { dist, cdf })
    }

    pub fn distribution(&self) -> &OutputDistribution {
        &self.dist
    }

    /// Index of one drawn state.
    pub fn draw_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cdf.last().expect("non-empty");
        let u = rng.random::<f64>() * total;
        let k = self.cdf.partition_point(|&c| c <= u);
        // Trailing zero-probability states can only be hit by round-off.
        k.min(self.cdf.len() - 1)
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> &OccupationVector {
        &self.dist.states[self.draw_index(rng)]
    }

    /// `count` post-selected samples under uniform per-photon transmission
    /// `eta`: each attempt survives with probability `η^N`, failures are
    /// discarded and counted.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, eta: f64, rng: &mut R) -> Result<SampleBatch> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::Parameter(format!("transmission must lie in (0,1], got {eta}")));
        }
        let n = self.dist.states[0].weight();
        let success = eta.powi(n as i32);
        let mut samples = Vec::with_capacity(count);
        let mut discarded = 0u64;
        while samples.len() < count {
            if eta < 1.0 && rng.random::<f64>() >= success {
                discarded += 1;
                continue;
            }
            samples.push(self.draw(rng).clone());
        }
        Ok(SampleBatch { samples, discarded })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub samples: Vec<OccupationVector>,
    /// Attempts lost to photon loss before `samples.len()` successes.
    pub discarded: u64,
}

impl SampleBatch {
    pub fn attempts(&self) -> u64 {
        self.samples.len() as u64 + self.discarded
    }
}

/// Draw `count` successful samples from the exact output distribution.
pub fn sample(u: &ComplexMatrix, input: &InputSpec, count: usize, seed: u64, eta: f64) -> Result<SampleBatch> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::Parameter(format!("transmission must lie in (0,1], got {eta}")));
    }
    let sampler = Sampler::new(exact_distribution(u, input)?)?;
    sampler.sample(count, eta, &mut rng::stream(seed))
}

#[derive(Serialize, Deserialize)]
struct SampleLine {
    y: OccupationVector,
}

/// One `{"y":[...]}` object per line.
pub fn write_samples_jsonl<W: Write>(mut w: W, samples: &[OccupationVector]) -> std::io::Result<()> {
    for s in samples {
        serde_json::to_writer(&mut w, &SampleLine { y: s.clone() })?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_samples_jsonl<R: BufRead>(r: R) -> std::io::Result<Vec<OccupationVector>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: SampleLine = serde_json::from_str(&line)?;
        out.push(parsed.y);
    }
    Ok(out)
}
