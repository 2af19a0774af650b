//! Dense complex linear algebra: permanents, hafnians, Haar-random unitaries
//! and LU-based determinants.

use std::ops::{Index, IndexMut, Mul};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Largest matrix dimension accepted by [`hafnian_exact`]; the subset table
/// holds `2^n` entries.
pub const HAFNIAN_MAX_DIM: usize = 20;

/// Symmetry tolerance for hafnian inputs.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Condition-number estimate above which [`det_and_inverse`] refuses.
pub const CONDITION_CUTOFF: f64 = 1e12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Row-major dense complex matrix.
///
/// Serializes as `{"rows":r,"cols":c,"re":[...],"im":[...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixJson", into = "MatrixJson")]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    rows: usize,
    cols: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl From<ComplexMatrix> for MatrixJson {
    fn from(m: ComplexMatrix) -> Self {
        MatrixJson {
            rows: m.rows,
            cols: m.cols,
            re: m.data.iter().map(|z| z.re).collect(),
            im: m.data.iter().map(|z| z.im).collect(),
        }
    }
}

impl TryFrom<MatrixJson> for ComplexMatrix {
    type Error = Error;

    fn try_from(j: MatrixJson) -> Result<Self> {
        if j.re.len() != j.im.len() {
            return Err(Error::dim(format!("{} imaginary parts", j.re.len()), j.im.len()));
        }
        let data = j.re.into_iter().zip(j.im).map(|(re, im)| Complex64::new(re, im)).collect();
        ComplexMatrix::from_vec(j.rows, j.cols, data)
    }
}

impl ComplexMatrix {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::dim("positive dimensions", format!("{rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::dim(rows * cols, data.len()));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Parameter("matrix entries must be finite".into()));
        }
        Ok(ComplexMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::dim("rows of equal length", "ragged rows"));
        }
        Self::from_vec(r, c, rows.concat())
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let rows: Vec<Vec<Complex64>> =
            rows.iter().map(|r| r.iter().map(|&x| Complex64::new(x, 0.0)).collect()).collect();
        Self::from_rows(&rows)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        ComplexMatrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |_, _| ZERO)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { ONE } else { ZERO })
    }

    pub fn diagonal(diag: &[Complex64]) -> Self {
        let n = diag.len();
        Self::from_fn(n, n, |i, j| if i == j { diag[i] } else { ZERO })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| self[(i, j)].conj())
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| self[(i, j)] * s)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        Ok(Self::from_fn(self.rows, self.cols, |i, j| self[(i, j)] + other[(i, j)]))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        Ok(Self::from_fn(self.rows, self.cols, |i, j| self[(i, j)] - other[(i, j)]))
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::dim(format!("inner dimension {}", self.cols), other.rows));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == ZERO {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    /// Submatrix built from the listed rows and columns. Indices may repeat,
    /// which is how occupation numbers above one enter permanents and hafnians.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Result<Self> {
        if rows.is_empty() || cols.is_empty() {
            return Err(Error::dim("non-empty selection", "empty"));
        }
        if let Some(&r) = rows.iter().find(|&&r| r >= self.rows) {
            return Err(Error::dim(format!("row < {}", self.rows), r));
        }
        if let Some(&c) = cols.iter().find(|&&c| c >= self.cols) {
            return Err(Error::dim(format!("column < {}", self.cols), c));
        }
        Ok(Self::from_fn(rows.len(), cols.len(), |i, j| self[(rows[i], cols[j])]))
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
    }

    /// Deviation of `A†A` from the identity, max over entries.
    pub fn unitarity_defect(&self) -> f64 {
        let g = self.adjoint().matmul(self).expect("square product");
        g.max_abs_diff(&Self::identity(self.cols)).expect("same shape")
    }

    /// Largest singular value, by power iteration on `A†A`.
    pub fn spectral_norm(&self) -> f64 {
        let g = self.adjoint().matmul(self).expect("A†A");
        let n = g.rows;
        let mut v = vec![ONE; n];
        let mut lambda = 0.0;
        for _ in 0..500 {
            let w: Vec<Complex64> = (0..n).map(|i| (0..n).map(|j| g[(i, j)] * v[j]).sum()).collect();
            let norm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            v = w.into_iter().map(|z| z / norm).collect();
            if (norm - lambda).abs() <= 1e-15 * norm {
                lambda = norm;
                break;
            }
            lambda = norm;
        }
        lambda.sqrt()
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::dim(format!("{}x{}", self.rows, self.cols), format!("{}x{}", other.rows, other.cols)));
        }
        Ok(())
    }

    fn require_square(&self) -> Result<usize> {
        if !self.is_square() {
            return Err(Error::dim("square matrix", format!("{}x{}", self.rows, self.cols)));
        }
        Ok(self.rows)
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs).expect("matrix product dimensions")
    }
}

/// Vector of ±1 entries used by the Glynn estimator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignVector(Vec<i8>);

impl SignVector {
    pub fn new(signs: Vec<i8>) -> Result<Self> {
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::Parameter("sign vector entries must be ±1".into()));
        }
        Ok(SignVector(signs))
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        SignVector((0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect())
    }

    /// The `index`-th vector in binary order: bit k set means entry k is −1.
    pub fn from_bits(n: usize, index: u64) -> Self {
        SignVector((0..n).map(|k| if index >> k & 1 == 1 { -1 } else { 1 }).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }
}

/// Exact permanent, Glynn's formula with Gray-code ordering of the sign
/// vectors (the Balasubramanian–Bax–Franklin–Glynn scheme), O(n·2ⁿ).
///
/// The first sign is pinned to +1; each Gray-code step flips one sign and
/// updates the column sums in O(n).
pub fn permanent_exact(a: &ComplexMatrix) -> Result<Complex64> {
    let n = a.require_square()?;
    if n == 1 {
        return Ok(a[(0, 0)]);
    }
    if n > 40 {
        return Err(Error::Capacity { what: "permanent dimension", needed: n as u128, cap: 40 });
    }
    // col_sum[j] = Σ_i δ_i a_ij, starting from δ = (1, ..., 1).
    let mut col_sum: Vec<Complex64> = (0..n).map(|j| (0..n).map(|i| a[(i, j)]).sum()).collect();
    let mut delta = vec![1i8; n];
    let mut sign = 1.0;
    let mut total: Complex64 = col_sum.iter().product();
    let steps: u64 = 1 << (n - 1);
    for k in 1..steps {
        // Gray code: flip sign of row 1 + trailing_zeros(k).
        let row = k.trailing_zeros() as usize + 1;
        let f = if delta[row] == 1 { -2.0 } else { 2.0 };
        delta[row] = -delta[row];
        for (j, s) in col_sum.iter_mut().enumerate() {
            *s += a[(row, j)] * f;
        }
        sign = -sign;
        let prod: Complex64 = col_sum.iter().product();
        total += prod * sign;
    }
    Ok(total / steps as f64)
}

/// Glynn estimator `x₁⋯xₙ · ∏ⱼ (Σₖ A_jk xₖ)`; its mean over uniform sign
/// vectors is `Per(A)` and its modulus is at most `‖A‖ⁿ`.
pub fn glynn_estimator(a: &ComplexMatrix, x: &SignVector) -> Result<Complex64> {
    let n = a.require_square()?;
    if x.len() != n {
        return Err(Error::dim(n, x.len()));
    }
    Ok(glynn_term(a, x.as_slice()))
}

fn glynn_term(a: &ComplexMatrix, x: &[i8]) -> Complex64 {
    let n = x.len();
    let mut prod = ONE;
    for j in 0..n {
        let row = a.row(j);
        let mut s = ZERO;
        for k in 0..n {
            if x[k] == 1 {
                s += row[k];
            } else {
                s -= row[k];
            }
        }
        prod *= s;
    }
    if x.iter().filter(|&&s| s == -1).count() % 2 == 1 {
        -prod
    } else {
        prod
    }
}

/// Settings for the randomized permanent estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Additive error target δ.
    pub delta: f64,
    /// Probability p that the error bound holds.
    pub confidence: f64,
    pub seed: u64,
}

impl EstimatorConfig {
    pub fn new(delta: f64, confidence: f64, seed: u64) -> Result<Self> {
        let cfg = EstimatorConfig { delta, confidence, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta must lie in (0,1), got {}", self.delta)));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::Config(format!("confidence must lie in (0,1), got {}", self.confidence)));
        }
        Ok(())
    }

    /// `m = ⌈(2/δ²)·ln(2/(1−p))⌉`, at least one.
    pub fn sample_count(&self) -> u64 {
        let m = (2.0 / (self.delta * self.delta)) * (2.0 / (1.0 - self.confidence)).ln();
        (m.ceil() as u64).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GurvitsEstimate {
    pub estimate: Complex64,
    pub samples: u64,
}

/// Gurvits' additive permanent approximation: the mean Glynn estimator over
/// `m` seeded random sign vectors. For `‖A‖ ≤ 1` the error is below δ with
/// probability at least p.
pub fn permanent_gurvits(a: &ComplexMatrix, cfg: &EstimatorConfig) -> Result<GurvitsEstimate> {
    cfg.validate()?;
    let n = a.require_square()?;
    let m = cfg.sample_count();
    let mut rng = rng::stream(cfg.seed);
    let mut x = vec![1i8; n];
    let mut acc = ZERO;
    for _ in 0..m {
        for s in x.iter_mut() {
            *s = if rng.random::<bool>() { 1 } else { -1 };
        }
        acc += glynn_term(a, &x);
    }
    Ok(GurvitsEstimate { estimate: acc / m as f64, samples: m })
}

/// Exact hafnian: sum over perfect matchings of the product of matched
/// entries. Dynamic programming over subsets of still-unmatched indices,
/// O(n²·2ⁿ) time; odd dimension gives zero.
pub fn hafnian_exact(b: &ComplexMatrix) -> Result<Complex64> {
    let n = b.require_square()?;
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            dev = dev.max((b[(i, j)] - b[(j, i)]).norm());
        }
    }
    if dev > SYMMETRY_TOL {
        return Err(Error::Asymmetric { deviation: dev });
    }
    hafnian_unchecked(b, n)
}

pub(crate) fn hafnian_unchecked(b: &ComplexMatrix, n: usize) -> Result<Complex64> {
    if n % 2 == 1 {
        return Ok(ZERO);
    }
    if n > HAFNIAN_MAX_DIM {
        return Err(Error::Capacity { what: "hafnian dimension", needed: n as u128, cap: HAFNIAN_MAX_DIM as u128 });
    }
    // table[mask] = hafnian of the principal submatrix on the set bits of mask.
    // Only even-popcount masks are meaningful.
    let size = 1usize << n;
    let mut table = vec![ZERO; size];
    table[0] = ONE;
    for mask in 1..size {
        if mask.count_ones() % 2 == 1 {
            continue;
        }
        let low = mask.trailing_zeros() as usize;
        let rest = mask & !(1 << low);
        let mut acc = ZERO;
        let mut bits = rest;
        while bits != 0 {
            let j = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            acc += b[(low, j)] * table[rest & !(1 << j)];
        }
        table[mask] = acc;
    }
    Ok(table[size - 1])
}

/// Haar-random M×M unitary from a seeded complex Gaussian matrix.
///
/// Columns are orthonormalized by modified Gram–Schmidt with one round of
/// re-orthogonalization. Gram–Schmidt leaves the triangular factor with a
/// real positive diagonal, which is the phase normalization that makes the
/// resulting Q Haar-distributed.
pub fn haar_unitary(m: usize, seed: u64) -> Result<ComplexMatrix> {
    if m == 0 {
        return Err(Error::dim("M >= 1", 0));
    }
    let mut rng = rng::stream(seed);
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let mut cols: Vec<Vec<Complex64>> = (0..m)
        .map(|_| {
            (0..m)
                .map(|_| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    Complex64::new(re * scale, im * scale)
                })
                .collect()
        })
        .collect();
    for j in 0..m {
        for _pass in 0..2 {
            for k in 0..j {
                let (done, todo) = cols.split_at_mut(j);
                let q = &done[k];
                let v = &mut todo[0];
                let proj: Complex64 = q.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= proj * qi;
                }
            }
        }
        let norm = cols[j].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for z in cols[j].iter_mut() {
            *z /= norm;
        }
    }
    Ok(ComplexMatrix::from_fn(m, m, |i, j| cols[j][i]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LuResult {
    pub det: Complex64,
    pub inverse: ComplexMatrix,
}

/// Determinant and inverse by LU factorization with partial pivoting.
/// Refuses when the 1-norm condition estimate exceeds [`CONDITION_CUTOFF`].
pub fn det_and_inverse(a: &ComplexMatrix) -> Result<LuResult> {
    let n = a.require_square()?;
    let mut lu = a.clone();
    let mut piv: Vec<usize> = (0..n).collect();
    let mut det = ONE;
    for k in 0..n {
        let p = (k..n).max_by(|&x, &y| lu[(x, k)].norm().total_cmp(&lu[(y, k)].norm())).expect("non-empty range");
        if lu[(p, k)].norm() == 0.0 {
            return Err(Error::Singular { condition: f64::INFINITY });
        }
        if p != k {
            for j in 0..n {
                let t = lu[(k, j)];
                lu[(k, j)] = lu[(p, j)];
                lu[(p, j)] = t;
            }
            piv.swap(k, p);
            det = -det;
        }
        let pivot = lu[(k, k)];
        det *= pivot;
        for i in k + 1..n {
            let f = lu[(i, k)] / pivot;
            lu[(i, k)] = f;
            for j in k + 1..n {
                let u = lu[(k, j)];
                lu[(i, j)] -= f * u;
            }
        }
    }

    let mut inv = ComplexMatrix::zeros(n, n);
    for col in 0..n {
        // Solve L U x = P e_col.
        let mut x: Vec<Complex64> = (0..n).map(|i| if piv[i] == col { ONE } else { ZERO }).collect();
        for i in 0..n {
            for k in 0..i {
                let l = lu[(i, k)];
                x[i] = x[i] - l * x[k];
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                let u = lu[(i, k)];
                x[i] = x[i] - u * x[k];
            }
            x[i] /= lu[(i, i)];
        }
        for i in 0..n {
            inv[(i, col)] = x[i];
        }
    }

    let condition = one_norm(a) * one_norm(&inv);
    if !condition.is_finite() || condition > CONDITION_CUTOFF {
        return Err(Error::Singular { condition });
    }
    Ok(LuResult { det, inverse: inv })
}

fn one_norm(a: &ComplexMatrix) -> f64 {
    (0..a.cols()).map(|j| (0..a.rows()).map(|i| a[(i, j)].norm()).sum::<f64>()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(n: usize, seed: u64) -> ComplexMatrix {
        let mut r = rng::stream(seed);
        ComplexMatrix::from_fn(n, n, |_, _| c(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)))
    }

    /// Naive Σ over all permutations of ∏ a_{i,σ(i)}.
    fn permanent_naive(a: &ComplexMatrix) -> Complex64 {
        fn rec(a: &ComplexMatrix, row: usize, used: &mut [bool]) -> Complex64 {
            let n = a.rows();
            if row == n {
                return ONE;
            }
            let mut s = ZERO;
            for j in 0..n {
                if !used[j] {
                    used[j] = true;
                    s += a[(row, j)] * rec(a, row + 1, used);
                    used[j] = false;
                }
            }
            s
        }
        rec(a, 0, &mut vec![false; a.rows()])
    }

    #[test]
    fn permanent_small_identities() {
        assert_eq!(permanent_exact(&ComplexMatrix::identity(2)).unwrap(), ONE);
        let ones = |n| ComplexMatrix::from_fn(n, n, |_, _| ONE);
        assert!((permanent_exact(&ones(2)).unwrap() - 2.0).norm() < 1e-12);
        let mut fact = 1.0;
        for n in 1..=8 {
            fact *= n as f64;
            let p = permanent_exact(&ones(n)).unwrap();
            assert!((p - fact).norm() < 1e-9 * fact, "n={n}: {p}");
        }
    }

    #[test]
    fn permanent_matches_permutation_sum() {
        for seed in 0..20 {
            let a = random_matrix(4, seed);
            let exact = permanent_exact(&a).unwrap();
            let naive = permanent_naive(&a);
            assert!((exact - naive).norm() <= 1e-10 * naive.norm().max(1.0));
        }
    }

    #[test]
    fn permanent_rejects_non_square() {
        let a = ComplexMatrix::zeros(2, 3);
        assert!(matches!(permanent_exact(&a), Err(Error::Dimension { .. })));
    }

    #[test]
    fn glynn_identity_cases() {
        let id = ComplexMatrix::identity(2);
        let x = SignVector::new(vec![1, 1]).unwrap();
        assert_eq!(glynn_estimator(&id, &x).unwrap(), ONE);
        let x = SignVector::new(vec![1, -1]).unwrap();
        assert_eq!(glynn_estimator(&id, &x).unwrap(), ONE);
        assert!(glynn_estimator(&id, &SignVector::new(vec![1]).unwrap()).is_err());
        assert!(SignVector::new(vec![1, 0]).is_err());
    }

    #[test]
    fn glynn_exhaustive_mean_is_permanent() {
        let a = random_matrix(3, 11);
        let mean: Complex64 =
            (0..8u64).map(|b| glynn_estimator(&a, &SignVector::from_bits(3, b)).unwrap()).sum::<Complex64>() / 8.0;
        assert!((mean - permanent_naive(&a)).norm() < 1e-10);
    }

    #[test]
    fn gurvits_sample_count_formula() {
        let cfg = EstimatorConfig::new(0.1, 0.99, 0).unwrap();
        // 200·ln(200) = 1059.66...
        assert_eq!(cfg.sample_count(), 1060);
        assert!(EstimatorConfig::new(0.0, 0.99, 0).is_err());
        assert!(EstimatorConfig::new(0.1, 1.0, 0).is_err());
        assert!(EstimatorConfig::new(0.1, 0.0, 0).is_err());
    }

    #[test]
    fn gurvits_degenerate_scalar() {
        let a = ComplexMatrix::from_real_rows(&[vec![0.5]]).unwrap();
        let cfg = EstimatorConfig::new(0.2, 0.9, 3).unwrap();
        assert_eq!(permanent_gurvits(&a, &cfg).unwrap().estimate, c(0.5, 0.0));
    }

    #[test]
    fn gurvits_identity_concentrates() {
        let id = ComplexMatrix::identity(3);
        let mut hits = 0;
        for seed in 0..100 {
            let cfg = EstimatorConfig::new(0.05, 0.99, seed).unwrap();
            let est = permanent_gurvits(&id, &cfg).unwrap().estimate;
            if (est - ONE).norm() <= 0.05 {
                hits += 1;
            }
        }
        assert!(hits >= 99, "{hits}/100");
    }

    /// Haf(B) = (1 / (2^k k!)) Σ_σ ∏ B_{σ(2i), σ(2i+1)} over all permutations.
    fn hafnian_by_permutations(b: &ComplexMatrix) -> Complex64 {
        let n = b.rows();
        let k = n / 2;
        let mut idx: Vec<usize> = (0..n).collect();
        let mut total = ZERO;
        heap_permutations(&mut idx, n, &mut |p| {
            let mut prod = ONE;
            for i in 0..k {
                prod *= b[(p[2 * i], p[2 * i + 1])];
            }
            total += prod;
        });
        let norm = (1..=k).map(|i| i as f64).product::<f64>() * 2f64.powi(k as i32);
        total / norm
    }

    fn heap_permutations(a: &mut [usize], k: usize, f: &mut impl FnMut(&[usize])) {
        if k <= 1 {
            f(a);
            return;
        }
        for i in 0..k - 1 {
            heap_permutations(a, k - 1, f);
            if k.is_multiple_of(2) {
                a.swap(i, k - 1);
            } else {
                a.swap(0, k - 1);
            }
        }
        heap_permutations(a, k - 1, f);
    }

    fn random_symmetric(n: usize, seed: u64) -> ComplexMatrix {
        let a = random_matrix(n, seed);
        ComplexMatrix::from_fn(n, n, |i, j| (a[(i, j)] + a[(j, i)]) * 0.5)
    }

    #[test]
    fn hafnian_small_cases() {
        let (a, b, cc) = (c(1.5, 0.2), c(-0.7, 1.1), c(0.3, -2.0));
        let m = ComplexMatrix::from_rows(&[vec![a, b], vec![b, cc]]).unwrap();
        assert!((hafnian_exact(&m).unwrap() - b).norm() < 1e-15);

        let s = random_symmetric(4, 5);
        let expected = s[(0, 1)] * s[(2, 3)] + s[(0, 2)] * s[(1, 3)] + s[(0, 3)] * s[(1, 2)];
        assert!((hafnian_exact(&s).unwrap() - expected).norm() < 1e-12);

        assert_eq!(hafnian_exact(&random_symmetric(3, 1)).unwrap(), ZERO);
    }

    #[test]
    fn hafnian_matches_permutation_oracle() {
        for seed in 0..5 {
            let s = random_symmetric(6, 100 + seed);
            let h = hafnian_exact(&s).unwrap();
            let oracle = hafnian_by_permutations(&s);
            assert!((h - oracle).norm() < 1e-10, "{h} vs {oracle}");
        }
    }

    #[test]
    fn hafnian_of_all_ones_is_double_factorial() {
        let mut dfact = 1.0;
        for k in 1..=3 {
            dfact *= (2 * k - 1) as f64;
            let n = 2 * k;
            let ones = ComplexMatrix::from_fn(n, n, |_, _| ONE);
            assert!((hafnian_exact(&ones).unwrap() - dfact).norm() < 1e-12);
        }
    }

    #[test]
    fn hafnian_rejects_asymmetric() {
        let m = ComplexMatrix::from_real_rows(&[vec![0.0, 1.0], vec![2.0, 0.0]]).unwrap();
        assert!(matches!(hafnian_exact(&m), Err(Error::Asymmetric { .. })));
    }

    #[test]
    fn haar_unitary_properties() {
        let u1 = haar_unitary(1, 4).unwrap();
        assert!((u1[(0, 0)].norm() - 1.0).abs() < 1e-12);
        let u = haar_unitary(8, 42).unwrap();
        assert!(u.unitarity_defect() < 1e-12);
        for j in 0..8 {
            let norm: f64 = (0..8).map(|i| u[(i, j)].norm_sqr()).sum();
            assert!((norm - 1.0).abs() < 1e-12);
        }
        assert_eq!(u, haar_unitary(8, 42).unwrap());
        assert_ne!(u, haar_unitary(8, 43).unwrap());
        assert!(haar_unitary(0, 1).is_err());
    }

    fn det_cofactor(a: &ComplexMatrix) -> Complex64 {
        let n = a.rows();
        if n == 1 {
            return a[(0, 0)];
        }
        let mut total = ZERO;
        for j in 0..n {
            let rows: Vec<usize> = (1..n).collect();
            let cols: Vec<usize> = (0..n).filter(|&k| k != j).collect();
            let minor = a.select(&rows, &cols).unwrap();
            let term = a[(0, j)] * det_cofactor(&minor);
            total += if j % 2 == 0 { term } else { -term };
        }
        total
    }

    #[test]
    fn lu_determinant_and_inverse() {
        let r = det_and_inverse(&ComplexMatrix::identity(4)).unwrap();
        assert_eq!(r.det, ONE);
        assert_eq!(r.inverse, ComplexMatrix::identity(4));

        let d = ComplexMatrix::diagonal(&[c(2.0, 0.0), c(3.0, 0.0)]);
        assert!((det_and_inverse(&d).unwrap().det - 6.0).norm() < 1e-14);

        let a = random_matrix(5, 77);
        let r = det_and_inverse(&a).unwrap();
        assert!((r.det - det_cofactor(&a)).norm() < 1e-9);
        let prod = &a * &r.inverse;
        assert!(prod.max_abs_diff(&ComplexMatrix::identity(5)).unwrap() < 1e-9);
    }

    #[test]
    fn lu_rejects_singular() {
        let s = ComplexMatrix::from_real_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(det_and_inverse(&s), Err(Error::Singular { .. })));
        let near = ComplexMatrix::from_real_rows(&[vec![1.0, 1.0], vec![1.0, 1.0 + 1e-14]]).unwrap();
        assert!(matches!(det_and_inverse(&near), Err(Error::Singular { .. })));
    }

    #[test]
    fn matrix_json_roundtrip_shape() {
        let m = ComplexMatrix::from_rows(&[vec![c(1.0, 2.0), c(3.0, -4.0)]]).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"{"rows":1,"cols":2,"re":[1.0,3.0],"im":[2.0,-4.0]}"#);
        let back: ComplexMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<ComplexMatrix>(r#"{"rows":2,"cols":2,"re":[1.0],"im":[1.0]}"#).is_err());
    }
}
