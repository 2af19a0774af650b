use bspow_core::binning::{
    char_function, empirical_mode_binned, estimated_mode_binned, exact_mode_binned, marginal_mode_binned, state_bins,
    true_pbp, tv_distance, AccuracyParams, CharMode, ModeBinning,
};
use bspow_core::gbs::{
    build_gbs_state, gbs_char_function, gbs_mode_binned, gbs_probability, gbs_truncated_distribution, GbsSetup,
};
use bspow_core::linalg::{
    glynn_estimator, haar_unitary, hafnian_exact, permanent_exact, permanent_gurvits, EstimatorConfig,
};
use bspow_core::sampler::{enumerate_states, exact_distribution, permuted_input, sample};
use bspow_core::{rng, Complex64, ComplexMatrix, InputSpec, OccupationVector, Permutation, SignVector};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn random_matrix(n: usize, seed: u64) -> ComplexMatrix {
    let mut r = rng::stream(seed);
    ComplexMatrix::from_fn(n, n, |_, _| Complex64::new(r.random::<f64>() * 2.0 - 1.0, r.random::<f64>() * 2.0 - 1.0))
}

fn random_perm(n: usize, r: &mut impl Rng) -> Permutation {
    let mut v: Vec<usize> = (0..n).collect();
    v.shuffle(r);
    Permutation::new(v).unwrap()
}

fn naive_permanent(a: &ComplexMatrix) -> Complex64 {
    fn rec(a: &ComplexMatrix, row: usize, used: &mut Vec<bool>) -> Complex64 {
        if row == a.rows() {
            return Complex64::new(1.0, 0.0);
        }
        let mut s = Complex64::new(0.0, 0.0);
        for j in 0..a.cols() {
            if !used[j] {
                used[j] = true;
                s += a[(row, j)] * rec(a, row + 1, used);
                used[j] = false;
            }
        }
        s
    }
    rec(a, 0, &mut vec![false; a.cols()])
}

#[test]
fn permanent_invariant_under_row_and_column_permutations() {
    let mut r = rng::stream(11);
    for case in 0..100u64 {
        let n = 1 + (case as usize % 5);
        let a = random_matrix(n, case);
        let (p, q) = (random_perm(n, &mut r), random_perm(n, &mut r));
        let paq = ComplexMatrix::from_fn(n, n, |i, j| a[(p.apply(i), q.apply(j))]);
        let (x, y) = (permanent_exact(&a).unwrap(), permanent_exact(&paq).unwrap());
        assert!((x - y).norm() <= 1e-10 * x.norm().max(1.0));
        assert!((x - naive_permanent(&a)).norm() <= 1e-10 * x.norm().max(1.0));
    }
}

#[test]
fn glynn_bounded_for_unitary() {
    for seed in 0..20 {
        let u = haar_unitary(5, seed).unwrap();
        for bits in 0..32 {
            let g = glynn_estimator(&u, &SignVector::from_bits(5, bits)).unwrap();
            assert!(g.norm() <= 1.0 + 1e-12);
        }
    }
}

#[test]
fn glynn_mean_is_permanent() {
    for n in 1..=4usize {
        let a = random_matrix(n, 100 + n as u64);
        let total: Complex64 = (0..1u64 << n).map(|b| glynn_estimator(&a, &SignVector::from_bits(n, b)).unwrap()).sum();
        let mean = total / (1u64 << n) as f64;
        assert!((mean - permanent_exact(&a).unwrap()).norm() < 1e-10);
    }
}

#[test]
fn gurvits_identity_within_delta() {
    let id = ComplexMatrix::identity(3);
    let hits = (0..100)
        .filter(|&s| {
            let cfg = EstimatorConfig::new(0.05, 0.99, s).unwrap();
            (permanent_gurvits(&id, &cfg).unwrap().estimate - 1.0).norm() <= 0.05
        })
        .count();
    assert!(hits >= 99, "{hits}");
}

fn recursive_hafnian(b: &ComplexMatrix, idx: &[usize]) -> Complex64 {
    if idx.is_empty() {
        return Complex64::new(1.0, 0.0);
    }
    let first = idx[0];
    let mut s = Complex64::new(0.0, 0.0);
    for k in 1..idx.len() {
        let rest: Vec<usize> = idx[1..].iter().enumerate().filter(|&(j, _)| j + 1 != k).map(|(_, &v)| v).collect();
        s += b[(first, idx[k])] * recursive_hafnian(b, &rest);
    }
    s
}

#[test]
fn hafnian_matches_recursive_expansion() {
    for seed in 0..10 {
        let a = random_matrix(6, 500 + seed);
        let sym = a.add(&a.transpose()).unwrap();
        let idx: Vec<usize> = (0..6).collect();
        assert!((hafnian_exact(&sym).unwrap() - recursive_hafnian(&sym, &idx)).norm() < 1e-10);
    }
}

#[test]
fn hafnian_of_all_ones_is_double_factorial() {
    for (k, expected) in [(1usize, 1.0), (2, 3.0), (3, 15.0)] {
        let ones = ComplexMatrix::from_fn(2 * k, 2 * k, |_, _| Complex64::new(1.0, 0.0));
        assert!((hafnian_exact(&ones).unwrap() - expected).norm() < 1e-12);
    }
}

#[test]
fn haar_is_unitary_and_seeded() {
    for m in 1..=8 {
        let u = haar_unitary(m, 3).unwrap();
        assert!(u.unitarity_defect() < 1e-12);
        assert_eq!(u, haar_unitary(m, 3).unwrap());
    }
}

#[test]
fn distributions_are_normalized() {
    let mut r = rng::stream(2);
    for seed in 0..200u64 {
        let m = r.random_range(2..=8usize);
        let n = r.random_range(1..=3u32.min(m as u32));
        let u = haar_unitary(m, seed).unwrap();
        let input = permuted_input(&random_perm(m, &mut r), n).unwrap();
        let d = exact_distribution(&u, &input).unwrap();
        assert!((d.total() - 1.0).abs() < 1e-10);
    }
}

#[test]
fn output_relabeling_permutes_distribution() {
    let u = haar_unitary(5, 77).unwrap();
    let input = InputSpec::new(5, vec![0, 2, 3]).unwrap();
    let pi = Permutation::new(vec![3, 0, 4, 1, 2]).unwrap();
    // column k of the relabeled interferometer is column pi(k) of U
    let v = ComplexMatrix::from_fn(5, 5, |i, k| u[(i, pi.apply(k))]);
    let du = exact_distribution(&u, &input).unwrap();
    let dv = exact_distribution(&v, &input).unwrap();
    for (y, p) in dv.states.iter().zip(&dv.probs) {
        let mut moved = vec![0; 5];
        for k in 0..5 {
            moved[pi.apply(k)] = y.0[k];
        }
        let k = du.states.iter().position(|s| s.0 == moved).unwrap();
        // summation order inside the permanent changes, so only round-off differs
        assert!((p - du.probs[k]).abs() <= 1e-14 * p.max(1e-300));
    }
}

#[test]
fn single_photon_is_row_moduli() {
    let u = haar_unitary(6, 4).unwrap();
    let d = exact_distribution(&u, &InputSpec::new(6, vec![2]).unwrap()).unwrap();
    // lexicographic order puts the photon in the last mode first
    for (y, p) in d.states.iter().zip(&d.probs) {
        let j = y.0.iter().position(|&c| c == 1).unwrap();
        assert!((p - u[(2, j)].norm_sqr()).abs() < 1e-15);
    }
}

#[test]
fn sampler_passes_chi_square() {
    let u = haar_unitary(6, 8).unwrap();
    let input = InputSpec::new(6, vec![1, 4]).unwrap();
    let dist = exact_distribution(&u, &input).unwrap();
    let n = 100_000usize;
    let batch = sample(&u, &input, n, 99, 1.0).unwrap();
    let mut counts = vec![0u64; dist.states.len()];
    for s in &batch.samples {
        counts[dist.states.iter().position(|y| y == s).unwrap()] += 1;
    }
    // pool cells with expectation below 5 into one
    let (mut chi2, mut cells, mut pooled_obs, mut pooled_exp) = (0.0, 0usize, 0.0, 0.0);
    for (c, p) in counts.iter().zip(&dist.probs) {
        let e = p * n as f64;
        if e < 5.0 {
            pooled_obs += *c as f64;
            pooled_exp += e;
        } else {
            chi2 += (*c as f64 - e).powi(2) / e;
            cells += 1;
        }
    }
    if pooled_exp > 0.0 {
        chi2 += (pooled_obs - pooled_exp).powi(2) / pooled_exp;
        cells += 1;
    }
    // 0.999 quantiles for 14..20 degrees of freedom
    let quantile = [36.1233, 37.6973, 39.2524, 40.7902, 42.3124, 43.8202, 45.3147];
    let dof = cells - 1;
    assert!((14..=20).contains(&dof), "dof {dof}");
    assert!(chi2 < quantile[dof - 14], "chi2 {chi2} at dof {dof}");
    let emp: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
    assert!(tv_distance(&emp, &dist.probs).unwrap() <= 0.05);
}

#[test]
fn lossy_discard_ratio() {
    let u = haar_unitary(4, 1).unwrap();
    let input = InputSpec::new(4, vec![0, 1]).unwrap();
    let batch = sample(&u, &input, 25_000, 5, 0.5).unwrap();
    let attempts = batch.attempts() as f64;
    let ratio = batch.discarded as f64 / attempts;
    let sigma = (0.75 * 0.25 / attempts).sqrt();
    assert!((ratio - 0.75).abs() <= 3.0 * sigma, "{ratio}");
    assert_eq!(sample(&u, &input, 100, 5, 1.0).unwrap().discarded, 0);
}

#[test]
fn fifteen_distinct_inputs() {
    let mut seen = std::collections::BTreeSet::new();
    let mut r = rng::stream(1);
    for _ in 0..2000 {
        seen.insert(permuted_input(&random_perm(6, &mut r), 2).unwrap().photon_modes);
    }
    assert_eq!(seen.len(), 15);
}

#[test]
fn dft_matches_marginalization_across_cases() {
    let mut r = rng::stream(4);
    let mut checked = 0;
    for seed in 0..60u64 {
        let m = [2usize, 3, 4, 6, 8, 9][seed as usize % 6];
        let divisors: Vec<usize> = (1..=3).filter(|d| m.is_multiple_of(*d)).collect();
        let d = divisors[r.random_range(0..divisors.len())];
        let n = r.random_range(1..=3u32.min(m as u32));
        let u = haar_unitary(m, seed).unwrap();
        let input = permuted_input(&random_perm(m, &mut r), n).unwrap();
        let b = ModeBinning::from_permutation(&random_perm(m, &mut r), d).unwrap();
        let dft = exact_mode_binned(&u, &input, &b).unwrap();
        let marg = marginal_mode_binned(&exact_distribution(&u, &input).unwrap(), &b).unwrap();
        for (x, y) in dft.probs.iter().zip(&marg.probs) {
            assert!((x - y).abs() <= 1e-9);
        }
        for c in bspow_core::binning::dft_grid(n + 1, d) {
            let chi = char_function(&u, &input, &b, &c, CharMode::Exact).unwrap();
            assert!(chi.norm() <= 1.0 + 1e-12);
            // χ(c) = Σ_n P(n) e^{i s·n}
            let series: Complex64 = marg
                .labels
                .iter()
                .zip(&marg.probs)
                .map(|(l, p)| {
                    let dot: u32 = l.iter().zip(&c).map(|(a, b)| a * b).sum();
                    Complex64::from_polar(*p, 2.0 * std::f64::consts::PI * f64::from(dot) / f64::from(n + 1))
                })
                .sum();
            assert!((chi - series).norm() < 1e-9);
        }
        checked += 1;
    }
    assert_eq!(checked, 60);
}

#[test]
fn gurvits_mode_binned_within_beta() {
    let u = haar_unitary(6, 31).unwrap();
    let input = InputSpec::new(6, vec![0, 3]).unwrap();
    let b = ModeBinning::contiguous(6, 2).unwrap();
    let exact = exact_mode_binned(&u, &input, &b).unwrap();
    let acc = AccuracyParams::for_validation(0.1, 0.05, 1e-3, 0.99, 2, 2).unwrap();
    assert!((acc.delta - 0.1 / 3.0).abs() < 1e-15);
    let good = (0..100)
        .filter(|&s| {
            let est = estimated_mode_binned(&u, &input, &b, &acc, s).unwrap();
            tv_distance(&est.probs, &exact.probs).unwrap() <= 0.1
        })
        .count();
    assert!(good >= 95, "{good}");
}

#[test]
fn empirical_fractions_converge() {
    let u = haar_unitary(6, 12).unwrap();
    let input = InputSpec::new(6, vec![2, 5]).unwrap();
    let b = ModeBinning::contiguous(6, 3).unwrap();
    let expected = exact_mode_binned(&u, &input, &b).unwrap().expected_fractions().unwrap();
    let samples = sample(&u, &input, 100_000, 3, 1.0).unwrap().samples;
    let emp = empirical_mode_binned(&samples, &b).unwrap();
    assert!((emp.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(tv_distance(&emp.probs, &expected).unwrap() <= 0.01);
}

#[test]
fn state_binned_peak_matches_brute_force() {
    let u = haar_unitary(6, 17).unwrap();
    let input = InputSpec::new(6, vec![0, 1]).unwrap();
    let dist = exact_distribution(&u, &input).unwrap();
    let mut r = rng::stream(6);
    for _ in 0..20 {
        let pi = random_perm(21, &mut r);
        let sb = state_bins(&pi, 21, 7).unwrap();
        let (mu, arg) = true_pbp(&dist, &sb).unwrap();
        let sums: Vec<f64> = (0..7).map(|j| (0..3).map(|k| dist.probs[pi.apply(3 * j + k)]).sum()).collect();
        let best = sums.iter().cloned().fold(f64::MIN, f64::max);
        assert!((mu - best).abs() < 1e-15);
        assert!((sums[arg] - best).abs() < 1e-15);
        assert!(mu >= 1.0 / 7.0);
    }
}

#[test]
fn gbs_two_mode_char_function_matches_truncation() {
    let u = haar_unitary(2, 5).unwrap();
    let st = build_gbs_state(&GbsSetup::new(u, vec![0.25, 0.15]).unwrap()).unwrap();
    let trunc = gbs_truncated_distribution(&st, 8).unwrap();
    let grid = 4u32;
    for c in bspow_core::binning::dft_grid(grid + 1, 2) {
        let series: Complex64 = trunc
            .states
            .iter()
            .zip(&trunc.probs)
            .map(|(y, p)| {
                let dot: u32 = y.0.iter().zip(&c).map(|(a, b)| a * b).sum();
                Complex64::from_polar(*p, 2.0 * std::f64::consts::PI * f64::from(dot) / f64::from(grid + 1))
            })
            .sum();
        let chi = gbs_char_function(&st, &c, grid).unwrap();
        assert!((chi - series).norm() < 1e-4, "{c:?}: {chi} vs {series}");
    }
}

#[test]
fn gbs_weak_squeezing_normalizes() {
    let u = haar_unitary(3, 6).unwrap();
    let r = 0.2f64.sqrt().asinh();
    let st = build_gbs_state(&GbsSetup::new(u, vec![r, r * 0.5, 0.0]).unwrap()).unwrap();
    let total: f64 = gbs_truncated_distribution(&st, 8).unwrap().probs.iter().sum();
    assert!((total - 1.0).abs() < 1e-3, "{total}");
}

#[test]
fn gbs_probability_covariant_under_mode_relabeling() {
    let u = haar_unitary(4, 9).unwrap();
    let setup = GbsSetup::new(u.clone(), vec![0.3, 0.2, 0.1, 0.0]).unwrap();
    let st = build_gbs_state(&setup).unwrap();
    let pi = Permutation::new(vec![2, 0, 3, 1]).unwrap();
    // rows of U are output modes here; relabel them
    let v = ComplexMatrix::from_fn(4, 4, |i, j| u[(pi.apply(i), j)]);
    let sv = build_gbs_state(&GbsSetup::new(v, setup.squeezing.clone()).unwrap()).unwrap();
    for y in enumerate_states(4, 4).unwrap() {
        let moved = OccupationVector((0..4).map(|i| y.0[pi.apply(i)]).collect());
        let (a, b) = (gbs_probability(&st, &y).unwrap(), gbs_probability(&sv, &moved).unwrap());
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn gbs_single_mode_binned_folds_mod_grid() {
    let st = build_gbs_state(&GbsSetup::new(ComplexMatrix::identity(1), vec![0.3]).unwrap()).unwrap();
    let b = ModeBinning::contiguous(1, 1).unwrap();
    let binned = gbs_mode_binned(&st, &b, 4).unwrap();
    let trunc = gbs_truncated_distribution(&st, 12).unwrap();
    let mut folded = [0.0; 5];
    for (y, p) in trunc.states.iter().zip(&trunc.probs) {
        folded[(y.0[0] % 5) as usize] += p;
    }
    for (x, y) in binned.probs.iter().zip(folded) {
        assert!((x - y).abs() < 1e-4);
    }
}

#[test]
fn gbs_two_mode_binned_is_real_and_nonnegative() {
    let u = haar_unitary(2, 13).unwrap();
    let st = build_gbs_state(&GbsSetup::new(u, vec![0.2, 0.2]).unwrap()).unwrap();
    let b = ModeBinning::contiguous(2, 2).unwrap();
    let binned = gbs_mode_binned(&st, &b, 4).unwrap();
    assert!(binned.clamped_mass < 1e-6);
    assert!((binned.total() - 1.0).abs() < 1e-9);
    let vacuum = build_gbs_state(&GbsSetup::new(ComplexMatrix::identity(2), vec![0.0; 2]).unwrap()).unwrap();
    let v = gbs_mode_binned(&vacuum, &b, 4).unwrap();
    assert!((v.probs[0] - 1.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn tv_is_a_metric(a in prop::collection::vec(0.0f64..1.0, 5), b in prop::collection::vec(0.0f64..1.0, 5), c in prop::collection::vec(0.0f64..1.0, 5)) {
        let norm = |v: Vec<f64>| { let s: f64 = v.iter().sum::<f64>() + 1e-9; v.into_iter().map(|x| (x + 1e-9 / 5.0) / s).collect::<Vec<_>>() };
        let (p, q, r) = (norm(a), norm(b), norm(c));
        let pq = tv_distance(&p, &q).unwrap();
        prop_assert!((pq - tv_distance(&q, &p).unwrap()).abs() < 1e-12);
        prop_assert!(pq <= tv_distance(&p, &r).unwrap() + tv_distance(&r, &q).unwrap() + 1e-12);
        prop_assert!(tv_distance(&p, &p).unwrap().abs() < 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&pq));
    }

    #[test]
    fn binned_counts_conserve_photons(counts in prop::collection::vec(0u32..4, 6), seed in any::<u64>()) {
        let mut r = rng::stream(seed);
        let b = ModeBinning::from_permutation(&random_perm(6, &mut r), 3).unwrap();
        let y = OccupationVector(counts);
        let n = bspow_core::binning::binned_counts(&y, &b).unwrap();
        prop_assert_eq!(n.iter().sum::<u32>(), y.weight());
    }
}
