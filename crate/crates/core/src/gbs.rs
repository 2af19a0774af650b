//! Gaussian boson sampling: squeezed-vacuum inputs, Hafnian outcome
//! probabilities and the determinant characteristic function.
//!
//! Quadrature ordering is `(a_1..a_M, a_1†..a_M†)`, so every 2M×2M matrix is
//! a 2×2 block of M×M blocks.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::binning::{dft_grid, inverse_dft, BinnedDistribution, BinnedKind, ModeBinning};
use crate::combin::factorial;
use crate::error::{Error, Result};
use crate::linalg::{det_and_inverse, hafnian_exact, ComplexMatrix};
use crate::rng;
use crate::sampler::{enumerate_states, OccupationVector, OutputDistribution, Sampler, DEFAULT_STATE_CAP};

/// Largest total photon number for which outcome probabilities are computed.
pub const GBS_HAFNIAN_CAP: u32 = 12;

/// Steps along the straight path from `c = 0` used to follow the square-root
/// branch of the characteristic function.
pub const BRANCH_STEPS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbsSetup {
    pub u: ComplexMatrix,
    /// Squeezing parameter per input mode (zero for vacuum inputs).
    pub squeezing: Vec<f64>,
}

impl GbsSetup {
    pub fn new(u: ComplexMatrix, squeezing: Vec<f64>) -> Result<Self> {
        if !u.is_square() || u.rows() != squeezing.len() {
            return Err(Error::dim(
                format!("{0}x{0} interferometer", squeezing.len()),
                format!("{}x{}", u.rows(), u.cols()),
            ));
        }
        if squeezing.iter().any(|r| !r.is_finite()) {
            return Err(Error::Parameter("squeezing parameters must be finite".into()));
        }
        Ok(GbsSetup { u, squeezing })
    }

    /// First `squeezed` modes share `r = asinh(sqrt(2·N_target/squeezed))`,
    /// so the mean photon number is `2·N_target`.
    pub fn calibrated(u: ComplexMatrix, squeezed: usize, n_target: f64) -> Result<Self> {
        if squeezed == 0 || squeezed > u.rows() {
            return Err(Error::Parameter(format!("squeezed mode count {squeezed} must lie in 1..={}", u.rows())));
        }
        let r = calibrated_squeezing(n_target, squeezed);
        let mut squeezing = vec![0.0; u.rows()];
        squeezing[..squeezed].fill(r);
        Self::new(u, squeezing)
    }

    pub fn modes(&self) -> usize {
        self.squeezing.len()
    }

    pub fn mean_photons(&self) -> f64 {
        self.squeezing.iter().map(|r| r.sinh().powi(2)).sum()
    }
}

pub fn calibrated_squeezing(n_target: f64, squeezed: usize) -> f64 {
    (2.0 * n_target / squeezed as f64).sqrt().asinh()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbsState {
    pub sigma: ComplexMatrix,
    pub sigma_q: ComplexMatrix,
    pub b: ComplexMatrix,
    sigma_q_inv: ComplexMatrix,
    det_sigma_q: f64,
}

fn blocks(m: usize, tl: &ComplexMatrix, tr: &ComplexMatrix, bl: &ComplexMatrix, br: &ComplexMatrix) -> ComplexMatrix {
    ComplexMatrix::from_fn(2 * m, 2 * m, |i, j| match (i < m, j < m) {
        (true, true) => tl[(i, j)],
        (true, false) => tr[(i, j - m)],
        (false, true) => bl[(i - m, j)],
        (false, false) => br[(i - m, j - m)],
    })
}

/// `σ = ½·W·SS†·W†` with `W = U ⊕ U*`, `σ_Q = σ + I/2` and
/// `B = U·diag(tanh r)·Uᵀ`.
pub fn build_gbs_state(setup: &GbsSetup) -> Result<GbsState> {
    let m = setup.modes();
    let u = &setup.u;
    if !u.is_square() || u.rows() != m {
        return Err(Error::dim(m, u.rows()));
    }
    let zero = ComplexMatrix::zeros(m, m);
    let diag = |f: fn(f64) -> f64| {
        ComplexMatrix::diagonal(&setup.squeezing.iter().map(|&r| Complex64::new(f(r), 0.0)).collect::<Vec<_>>())
    };
    let ch = diag(|r| (2.0 * r).cosh());
    let sh = diag(|r| (2.0 * r).sinh());
    let w = blocks(m, u, &zero, &zero, &u.conj());
    let ss = blocks(m, &ch, &sh, &sh, &ch);
    let sigma = w.matmul(&ss)?.matmul(&w.adjoint())?.scale(Complex64::new(0.5, 0.0));
    let sigma_q = sigma.add(&ComplexMatrix::identity(2 * m).scale(Complex64::new(0.5, 0.0)))?;
    let b = u.matmul(&diag(f64::tanh))?.matmul(&u.transpose())?;
    let lu = det_and_inverse(&sigma_q)?;
    Ok(GbsState { sigma, sigma_q, b, sigma_q_inv: lu.inverse, det_sigma_q: lu.det.re })
}

impl GbsState {
    pub fn modes(&self) -> usize {
        self.b.rows()
    }

    pub fn det_sigma_q(&self) -> f64 {
        self.det_sigma_q
    }

    /// Vacuum probability `det(σ_Q)^{-1/2}`.
    pub fn vacuum_probability(&self) -> f64 {
        self.det_sigma_q.sqrt().recip()
    }
}

/// `Pr(Y) = |Haf(B_Y)|² / (∏ yᵢ! · sqrt(det σ_Q))`, where `B_Y` repeats row
/// and column `i` `yᵢ` times.
pub fn gbs_probability(state: &GbsState, y: &OccupationVector) -> Result<f64> {
    if y.modes() != state.modes() {
        return Err(Error::dim(state.modes(), y.modes()));
    }
    let total = y.weight();
    if total % 2 == 1 {
        return Ok(0.0);
    }
    if total > GBS_HAFNIAN_CAP {
        return Err(Error::Capacity {
            what: "GBS outcome photons",
            needed: u128::from(total),
            cap: u128::from(GBS_HAFNIAN_CAP),
        });
    }
    let idx = y.expanded_modes();
    let haf = if idx.is_empty() { Complex64::new(1.0, 0.0) } else { hafnian_exact(&state.b.select(&idx, &idx)?)? };
    let norm: f64 = y.counts().iter().map(|&c| factorial(c)).product();
    Ok(haf.norm_sqr() / (norm * state.det_sigma_q.sqrt()))
}

/// `det(σ_Q)·det(I − Z(I − σ_Q⁻¹))` for per-mode phase angles.
fn char_radicand(state: &GbsState, angles: &[f64]) -> Result<Complex64> {
    let m = state.modes();
    let z: Vec<Complex64> = (0..2 * m).map(|i| Complex64::from_polar(1.0, angles[i % m])).collect();
    let a = ComplexMatrix::from_fn(2 * m, 2 * m, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        let inner = Complex64::new(delta, 0.0) - state.sigma_q_inv[(i, j)];
        Complex64::new(delta, 0.0) - z[i] * inner
    });
    Ok(det_and_inverse(&a)?.det * state.det_sigma_q)
}

/// `χ(c) = E[∏ zₖ^{nₖ}]` with `zₖ = e^{2πi cₖ/(N+1)}`, evaluated as
/// `det(σ_Q)^{-1/2}·det(I − Z(I − σ_Q⁻¹))^{-1/2}`. The square-root branch
/// is followed continuously from `c = 0`, where `χ = 1`.
pub fn gbs_char_function(state: &GbsState, c: &[u32], grid: u32) -> Result<Complex64> {
    let m = state.modes();
    if c.len() != m {
        return Err(Error::dim(m, c.len()));
    }
    let theta: Vec<f64> = c.iter().map(|&ck| 2.0 * PI * f64::from(ck) / f64::from(grid + 1)).collect();
    if theta.iter().all(|&t| t == 0.0) {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let mut root = Complex64::new(1.0, 0.0);
    let mut angles = vec![0.0; m];
    for step in 1..=BRANCH_STEPS {
        let t = step as f64 / BRANCH_STEPS as f64;
        for (a, th) in angles.iter_mut().zip(&theta) {
            *a = t * th;
        }
        let s = char_radicand(state, &angles)?.sqrt();
        root = if (s - root).norm() <= (-s - root).norm() { s } else { -s };
    }
    Ok(root.inv())
}

/// Binned characteristic function: every mode of bin `k` uses `c̃ₖ`.
pub fn gbs_binned_char_function(state: &GbsState, b: &ModeBinning, c_tilde: &[u32], grid: u32) -> Result<Complex64> {
    if b.modes() != state.modes() {
        return Err(Error::dim(state.modes(), b.modes()));
    }
    if c_tilde.len() != b.bin_count() {
        return Err(Error::dim(b.bin_count(), c_tilde.len()));
    }
    let c: Vec<u32> = (0..state.modes()).map(|k| c_tilde[b.bin_of(k)]).collect();
    gbs_char_function(state, &c, grid)
}

/// Binned photon-count distribution on `Z_{N+1}^d` by inverse DFT. Counts
/// above `N` fold modulo `N+1`; the result is faithful only when the mass
/// above `N` is negligible.
pub fn gbs_mode_binned(state: &GbsState, b: &ModeBinning, grid: u32) -> Result<BinnedDistribution> {
    let d = b.bin_count();
    let size = u128::from(grid + 1).checked_pow(d as u32).unwrap_or(u128::MAX);
    if size > DEFAULT_STATE_CAP {
        return Err(Error::Capacity { what: "characteristic-function grid", needed: size, cap: DEFAULT_STATE_CAP });
    }
    let points = dft_grid(grid + 1, d);
    let chi = points.iter().map(|c| gbs_binned_char_function(state, b, c, grid)).collect::<Result<Vec<_>>>()?;
    let raw = inverse_dft(&points, &chi, &points, grid + 1);
    Ok(BinnedDistribution::clamp_and_normalize(BinnedKind::Mode, points, raw))
}

/// Every outcome with at most `max_photons` photons in total, with its
/// probability; the probabilities sum to the captured mass (below one).
pub fn gbs_truncated_distribution(state: &GbsState, max_photons: u32) -> Result<OutputDistribution> {
    let mut states = Vec::new();
    let mut probs = Vec::new();
    for total in (0..=max_photons).step_by(2) {
        for y in enumerate_states(state.modes(), total)? {
            probs.push(gbs_probability(state, &y)?);
            states.push(y);
        }
    }
    Ok(OutputDistribution { states, probs })
}

/// Seeded samples from the truncated distribution, renormalized.
pub fn gbs_sample(state: &GbsState, max_photons: u32, count: usize, seed: u64) -> Result<Vec<OccupationVector>> {
    let sampler = Sampler::new(gbs_truncated_distribution(state, max_photons)?)?;
    let mut stream = rng::stream(seed);
    Ok((0..count).map(|_| sampler.draw(&mut stream).clone()).collect())
}
