//! Paired permutation tests over a shared sign cache.
//!
//! A paired permutation of systems `i` and `j` swaps their scores on a random
//! subset of segments. With one ±1 sign per segment the permuted mean
//! difference is `Σ_s sign_s (x_i[s] - x_j[s]) / S`, which splits into a term
//! that depends on `i` alone and one that depends on `j` alone. Sharing the
//! same signs across every pair lets us project each system once (linear in
//! the number of systems) and compare projections pairwise.
//!
//! Internally each projection is stored as the *swapped mass*
//! `m_i[b] = Σ_{s : sign_bs = -1} x_i[s]`, so that
//! `proj_i[b] = total_i - 2 m_i[b]` and
//! `d_b > δ  ⇔  m_j[b] > m_i[b]`. Comparing swapped masses directly keeps
//! exact ties exact: two systems that agree on every swapped segment produce
//! bit-identical sums.

use std::cmp::Ordering;

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::Serialize;

use crate::data::ScoreMatrix;
use crate::error::{Error, Result};
use crate::rng::{keyed_rng, TAG_NAIVE, TAG_SIGNS};
use crate::scalar::Score;

/// Default number of random permutations.
pub const DEFAULT_PERMUTATIONS: usize = 1000;

/// Largest segment count accepted by [`exact_pairwise_p_value`].
pub const MAX_EXACT_SEGMENTS: usize = 24;

/// `(B + 1) x S` cache of ±1 paired-permutation signs.
///
/// Row 0 is the all-`+1` identity (the observed assignment); rows `1..=B` are
/// random. Bit `s` of a row is set when segment `s` is swapped (sign `-1`).
/// Cell `(b, s)` depends only on `(seed, b, s)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignMatrix {
    seed: u64,
    permutations: usize,
    segments: usize,
    words_per_row: usize,
    bits: Vec<u64>,
}

impl SignMatrix {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of random rows, `B`.
    pub fn permutations(&self) -> usize {
        self.permutations
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    /// `B + 1`, including the identity row.
    pub fn rows(&self) -> usize {
        self.permutations + 1
    }

    /// Sign of segment `s` in row `b`, as `+1` or `-1`.
    pub fn sign(&self, b: usize, s: usize) -> i8 {
        let w = self.bits[b * self.words_per_row + s / 64];
        if (w >> (s % 64)) & 1 == 1 {
            -1
        } else {
            1
        }
    }

    pub fn row_signs(&self, b: usize) -> Vec<i8> {
        (0..self.segments).map(|s| self.sign(b, s)).collect()
    }

    fn swapped_words(&self, b: usize) -> &[u64] {
        &self.bits[b * self.words_per_row..(b + 1) * self.words_per_row]
    }
}

/// Builds the shared sign cache for `segments` segments and `permutations`
/// random rows.
pub fn generate_sign_matrix(seed: u64, permutations: usize, segments: usize) -> Result<SignMatrix> {
    if permutations == 0 || segments == 0 {
        return Err(Error::InvalidArgument(format!(
            "sign matrix needs B >= 1 and S >= 1, got B = {permutations}, S = {segments}"
        )));
    }
    let words_per_row = segments.div_ceil(64);
    let tail_mask = match segments % 64 {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    };
    let mut bits = vec![0u64; (permutations + 1) * words_per_row];
    bits.par_chunks_mut(words_per_row)
        .enumerate()
        .skip(1)
        .for_each(|(row, words)| {
            // ChaCha is itself counter based: (key, stream, word position)
            // pins every output word, hence every cell.
            let mut rng = keyed_rng(seed, &[TAG_SIGNS]);
            rng.set_stream(row as u64);
            for w in words.iter_mut() {
                *w = rng.next_u64();
            }
            words[words_per_row - 1] &= tail_mask;
        });
    Ok(SignMatrix {
        seed,
        permutations,
        segments,
        words_per_row,
        bits,
    })
}

/// Per-system projections of a score matrix onto every row of a
/// [`SignMatrix`].
#[derive(Debug, Clone, PartialEq)]
pub struct SystemProjection<T> {
    systems: usize,
    segments: usize,
    rows: usize,
    totals: Vec<T>,
    // systems x rows, swapped mass per (system, row)
    swapped: Vec<T>,
}

impl<T: Score> SystemProjection<T> {
    pub fn n_systems(&self) -> usize {
        self.systems
    }

    pub fn n_segments(&self) -> usize {
        self.segments
    }

    /// Number of random permutations, `B`.
    pub fn permutations(&self) -> usize {
        self.rows - 1
    }

    /// `Σ_s sign[b][s] · scores[i][s]`.
    pub fn proj(&self, system: usize, b: usize) -> T {
        let m = self.swapped(system, b);
        self.totals[system] - (m + m)
    }

    /// Sum of system `i`'s scores over the segments swapped in row `b`.
    pub fn swapped(&self, system: usize, b: usize) -> T {
        self.swapped[system * self.rows + b]
    }

    fn swapped_row(&self, system: usize) -> &[T] {
        &self.swapped[system * self.rows..(system + 1) * self.rows]
    }

    /// Permuted paired mean difference `(proj_i[b] - proj_j[b]) / S`.
    pub fn mean_difference(&self, i: usize, j: usize, b: usize) -> T {
        let s = T::from_usize(self.segments).expect("segment count fits the score type");
        (self.proj(i, b) - self.proj(j, b)) / s
    }
}

/// Projects every system of `m` onto every row of `signs`.
pub fn project_systems<T: Score>(
    m: &ScoreMatrix<T>,
    signs: &SignMatrix,
) -> Result<SystemProjection<T>> {
    if signs.segments() != m.n_segments() {
        return Err(Error::DimensionMismatch(format!(
            "sign matrix has {} segments, score matrix has {}",
            signs.segments(),
            m.n_segments()
        )));
    }
    let rows = signs.rows();
    let per_system: Vec<(T, Vec<T>)> = (0..m.n_systems())
        .into_par_iter()
        .map(|i| {
            let x = m.row(i);
            let total = x.iter().fold(T::zero(), |acc, &v| acc + v);
            let swapped = (0..rows)
                .map(|b| swapped_sum(x, signs.swapped_words(b)))
                .collect();
            (total, swapped)
        })
        .collect();
    let mut totals = Vec::with_capacity(m.n_systems());
    let mut swapped = Vec::with_capacity(m.n_systems() * rows);
    for (t, s) in per_system {
        totals.push(t);
        swapped.extend(s);
    }
    Ok(SystemProjection {
        systems: m.n_systems(),
        segments: m.n_segments(),
        rows,
        totals,
        swapped,
    })
}

// Ascending segment order; every caller sums in this order so equal inputs
// give equal outputs.
#[inline]
fn swapped_sum<T: Score>(x: &[T], words: &[u64]) -> T {
    let mut acc = T::zero();
    for (k, &word) in words.iter().enumerate() {
        let mut w = word;
        let base = k * 64;
        while w != 0 {
            acc = acc + x[base + w.trailing_zeros() as usize];
            w &= w - 1;
        }
    }
    acc
}

/// `N x N` one-tailed p-values; `p[i][j]` is the p-value for "system `i` is
/// better than system `j`". Diagonal is `0.5`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PValueMatrix {
    n: usize,
    p: Vec<f64>,
}

impl PValueMatrix {
    /// Builds a matrix from the strict upper triangle, row by row
    /// (`(0,1), (0,2), ..., (1,2), ...`). The lower triangle is `1 - p`.
    pub fn from_upper(n: usize, upper: &[f64]) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 systems, got {n}"
            )));
        }
        if upper.len() != n * (n - 1) / 2 {
            return Err(Error::DimensionMismatch(format!(
                "{} upper-triangle values for {n} systems",
                upper.len()
            )));
        }
        if let Some(bad) = upper.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidArgument(format!(
                "p-value {bad} outside [0, 1]"
            )));
        }
        let mut p = vec![0.5; n * n];
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                p[i * n + j] = upper[k];
                p[j * n + i] = 1.0 - upper[k];
                k += 1;
            }
        }
        Ok(Self { n, p })
    }

    pub fn n_systems(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.n + j]
    }

    /// Upper-triangle values in row order.
    pub fn upper(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n * (self.n - 1) / 2);
        for i in 0..self.n {
            for j in i + 1..self.n {
                out.push(self.get(i, j));
            }
        }
        out
    }

    /// Restriction to a subset of systems, in the given order.
    pub fn submatrix(&self, systems: &[usize]) -> Self {
        let n = systems.len();
        let mut p = vec![0.5; n * n];
        for (a, &i) in systems.iter().enumerate() {
            for (b, &j) in systems.iter().enumerate() {
                if a != b {
                    p[a * n + b] = self.get(i, j);
                }
            }
        }
        Self { n, p }
    }
}

/// Mid-p value for system `i` of `a` against system `j` of `b` over the
/// random rows of a shared cache. Both projections must come from the same
/// [`SignMatrix`].
pub fn cross_p_value<T: Score>(
    a: &SystemProjection<T>,
    i: usize,
    b: &SystemProjection<T>,
    j: usize,
) -> f64 {
    let half_units = half_unit_count(&a.swapped_row(i)[1..], &b.swapped_row(j)[1..]);
    half_units as f64 / (2 * a.permutations()) as f64
}

// 2·#{d_b > δ} + #{d_b = δ}, with d_b > δ  ⇔  m_j > m_i.
#[inline]
fn half_unit_count<T: Score>(mi: &[T], mj: &[T]) -> u64 {
    mi.iter()
        .zip(mj)
        .map(|(a, b)| match b.partial_cmp(a) {
            Some(Ordering::Greater) => 2,
            Some(Ordering::Equal) => 1,
            _ => 0,
        })
        .sum()
}

/// All pairwise p-values from one projection.
///
/// `p[i][j] = (#{b : d_b > δ} + ½ #{b : d_b = δ}) / B` and
/// `p[j][i] = 1 - p[i][j]`.
pub fn pairwise_p_values<T: Score>(proj: &SystemProjection<T>) -> PValueMatrix {
    let n = proj.n_systems();
    let upper: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| (i + 1..n).map(move |j| cross_p_value(proj, i, proj, j)))
        .collect();
    PValueMatrix::from_upper(n, &upper).expect("counts give p-values in [0, 1]")
}

/// Convenience wrapper: project then compare.
pub fn p_value_matrix<T: Score>(m: &ScoreMatrix<T>, signs: &SignMatrix) -> Result<PValueMatrix> {
    Ok(pairwise_p_values(&project_systems(m, signs)?))
}

fn check_pair<T: Score>(m: &ScoreMatrix<T>, i: usize, j: usize) -> Result<()> {
    let n = m.n_systems();
    if i >= n || j >= n {
        return Err(Error::InvalidArgument(format!(
            "system index out of range: ({i}, {j}) with {n} systems"
        )));
    }
    Ok(())
}

/// Exact mid-p value over all `2^S` sign patterns (the identity included).
/// Validation oracle for the Monte Carlo engine.
pub fn exact_pairwise_p_value<T: Score>(m: &ScoreMatrix<T>, i: usize, j: usize) -> Result<f64> {
    check_pair(m, i, j)?;
    let s = m.n_segments();
    if s > MAX_EXACT_SEGMENTS {
        return Err(Error::InvalidArgument(format!(
            "exact enumeration supports at most {MAX_EXACT_SEGMENTS} segments, got {s}"
        )));
    }
    if i == j {
        return Ok(0.5);
    }
    let (xi, xj) = (m.row(i), m.row(j));
    let patterns = 1u64 << s;
    let half_units: u64 = (0..patterns)
        .into_par_iter()
        .map(|pattern| {
            let words = [pattern];
            let mi = swapped_sum(xi, &words);
            let mj = swapped_sum(xj, &words);
            match mj.partial_cmp(&mi) {
                Some(Ordering::Greater) => 2,
                Some(Ordering::Equal) => 1,
                _ => 0,
            }
        })
        .sum();
    Ok(half_units as f64 / (2 * patterns) as f64)
}

/// Reference paired permutation test without any sharing: draws `B` fresh
/// permutations for this pair alone, one random bit per segment.
pub fn naive_pair_p_value<T: Score>(
    m: &ScoreMatrix<T>,
    i: usize,
    j: usize,
    seed: u64,
    permutations: usize,
) -> Result<f64> {
    check_pair(m, i, j)?;
    if permutations == 0 {
        return Err(Error::InvalidArgument("B must be at least 1".into()));
    }
    if i == j {
        return Ok(0.5);
    }
    let (xi, xj) = (m.row(i), m.row(j));
    let mut rng = keyed_rng(seed, &[TAG_NAIVE, i as u64, j as u64]);
    let mut half_units = 0u64;
    for _ in 0..permutations {
        let (mut mi, mut mj) = (T::zero(), T::zero());
        for (&a, &b) in xi.iter().zip(xj) {
            if rng.random::<bool>() {
                mi = mi + a;
                mj = mj + b;
            }
        }
        half_units += match mj.partial_cmp(&mi) {
            Some(Ordering::Greater) => 2,
            Some(Ordering::Equal) => 1,
            _ => 0,
        };
    }
    Ok(half_units as f64 / (2 * permutations) as f64)
}

/// Full matrix from [`naive_pair_p_value`], one independent stream per pair.
/// Sequential on purpose: it is the benchmark baseline.
pub fn naive_p_value_matrix<T: Score>(
    m: &ScoreMatrix<T>,
    seed: u64,
    permutations: usize,
) -> Result<PValueMatrix> {
    let n = m.n_systems();
    let mut upper = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            upper.push(naive_pair_p_value(m, i, j, seed, permutations)?);
        }
    }
    PValueMatrix::from_upper(n, &upper)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;
    use rand::SeedableRng;

    fn random_matrix(seed: u64, n: usize, s: usize) -> ScoreMatrix<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        ScoreMatrix::from_rows(
            (0..n)
                .map(|_| (0..s).map(|_| rng.random::<f64>()).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn sign_matrix_is_deterministic() {
        let a = generate_sign_matrix(7, 2, 3).unwrap();
        let b = generate_sign_matrix(7, 2, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(
            generate_sign_matrix(7, 64, 100).unwrap(),
            generate_sign_matrix(8, 64, 100).unwrap()
        );
    }

    #[test]
    fn identity_row_is_all_plus() {
        for (seed, b, s) in [(0, 1, 1), (5, 10, 64), (9, 3, 130)] {
            let sm = generate_sign_matrix(seed, b, s).unwrap();
            assert!(sm.row_signs(0).iter().all(|&x| x == 1));
            for row in 1..sm.rows() {
                assert!(sm.row_signs(row).iter().all(|&x| x == 1 || x == -1));
            }
        }
    }

    #[test]
    fn cells_do_not_depend_on_shape() {
        // Same (seed, row, column) gives the same cell whatever B and S are.
        let small = generate_sign_matrix(3, 5, 70).unwrap();
        let big = generate_sign_matrix(3, 9, 200).unwrap();
        for b in 0..small.rows() {
            for s in 0..70 {
                assert_eq!(small.sign(b, s), big.sign(b, s));
            }
        }
    }

    #[test]
    fn sign_fraction_is_balanced() {
        // 4σ of a Binomial(10000, 1/2) fraction is 0.02.
        let sm = generate_sign_matrix(12345, 10_000, 1).unwrap();
        let plus = (1..sm.rows()).filter(|&b| sm.sign(b, 0) == 1).count();
        let frac = plus as f64 / 10_000.0;
        assert!((frac - 0.5).abs() <= 0.02, "fraction of +1 = {frac}");
    }

    #[test]
    fn rejects_empty_shapes() {
        assert!(generate_sign_matrix(0, 0, 3).is_err());
        assert!(generate_sign_matrix(0, 3, 0).is_err());
    }

    #[test]
    fn hand_projection() {
        let m = ScoreMatrix::from_rows(vec![vec![1.0, 2.0], vec![0.0, 0.0]]).unwrap();
        // find a random row with signs [+1, -1]
        let sm = generate_sign_matrix(1, 64, 2).unwrap();
        let b = (1..sm.rows())
            .find(|&b| sm.row_signs(b) == vec![1, -1])
            .unwrap();
        let proj = project_systems(&m, &sm).unwrap();
        assert_eq!(proj.proj(0, b), -1.0);
        assert_eq!(proj.proj(0, 0), 3.0);
    }

    #[test]
    fn projection_matches_naive_paired_swap() {
        let m = random_matrix(4, 5, 37);
        let sm = generate_sign_matrix(2, 50, 37).unwrap();
        let proj = project_systems(&m, &sm).unwrap();
        for b in 0..sm.rows() {
            let signs = sm.row_signs(b);
            for i in 0..5 {
                for j in 0..5 {
                    // swap where sign is -1, then take the mean difference
                    let direct: f64 = (0..37)
                        .map(|s| {
                            let (a, c) = if signs[s] == 1 {
                                (m.get(i, s), m.get(j, s))
                            } else {
                                (m.get(j, s), m.get(i, s))
                            };
                            a - c
                        })
                        .sum::<f64>()
                        / 37.0;
                    let got = proj.mean_difference(i, j, b);
                    assert!((got - direct).abs() < 1e-12, "{got} vs {direct}");
                }
            }
        }
    }

    #[test]
    fn identity_row_gives_means() {
        let m = random_matrix(8, 3, 20);
        let sm = generate_sign_matrix(0, 4, 20).unwrap();
        let proj = project_systems(&m, &sm).unwrap();
        for (i, mean) in m.system_means().iter().enumerate() {
            assert!((proj.proj(i, 0) / 20.0 - mean).abs() < 1e-14);
        }
    }

    #[test]
    fn projection_is_linear_exactly_for_rationals() {
        let r = |n: i64| Ratio::from_integer(n);
        let m = ScoreMatrix::from_rows(vec![
            vec![r(1), r(-4), r(7), r(2)],
            vec![r(3), r(0), r(-2), r(5)],
        ])
        .unwrap();
        let sm = generate_sign_matrix(6, 20, 4).unwrap();
        let (a, c) = (Ratio::new(7, 3), Ratio::new(-5, 2));
        let base = project_systems(&m, &sm).unwrap();
        let moved = project_systems(&m.affine(a, c), &sm).unwrap();
        for b in 0..sm.rows() {
            let rowsum: i64 = sm.row_signs(b).iter().map(|&x| x as i64).sum();
            for i in 0..2 {
                assert_eq!(moved.proj(i, b), a * base.proj(i, b) + c * r(rowsum));
            }
        }
    }

    #[test]
    fn dimension_mismatch() {
        let m = random_matrix(1, 2, 5);
        let sm = generate_sign_matrix(0, 4, 6).unwrap();
        assert!(matches!(
            project_systems(&m, &sm),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn identical_rows_give_one_half() {
        let m = ScoreMatrix::from_rows(vec![vec![0.3, 0.9, 0.1], vec![0.3, 0.9, 0.1]]).unwrap();
        let sm = generate_sign_matrix(0, 1000, 3).unwrap();
        let p = p_value_matrix(&m, &sm).unwrap();
        assert_eq!(p.get(0, 1), 0.5);
        assert_eq!(p.get(1, 0), 0.5);
        assert_eq!(exact_pairwise_p_value(&m, 0, 1).unwrap(), 0.5);
        assert_eq!(naive_pair_p_value(&m, 0, 1, 3, 100).unwrap(), 0.5);
    }

    #[test]
    fn exact_single_segment() {
        let m = ScoreMatrix::from_rows(vec![vec![1.0], vec![0.0]]).unwrap();
        assert_eq!(exact_pairwise_p_value(&m, 0, 1).unwrap(), 0.25);
        assert_eq!(exact_pairwise_p_value(&m, 1, 0).unwrap(), 0.75);
    }

    #[test]
    fn exact_rejects_large_s() {
        let m = random_matrix(0, 2, MAX_EXACT_SEGMENTS + 1);
        assert!(exact_pairwise_p_value(&m, 0, 1).is_err());
    }

    #[test]
    fn one_percent_tail() {
        // Only the all-swapped pattern of a 7-segment pair reaches the
        // observed gap, so the lower tail carries 1/128 of the mass.
        let m = ScoreMatrix::from_rows(vec![vec![1.0; 7], vec![0.0; 7]]).unwrap();
        let p_better = exact_pairwise_p_value(&m, 0, 1).unwrap();
        let p_worse = exact_pairwise_p_value(&m, 1, 0).unwrap();
        assert_eq!(p_better, 0.5 / 128.0);
        assert_eq!(p_worse, 1.0 - 0.5 / 128.0);
    }

    #[test]
    fn antisymmetry_is_exact() {
        let m = random_matrix(21, 8, 40);
        let sm = generate_sign_matrix(2, 333, 40).unwrap();
        let p = p_value_matrix(&m, &sm).unwrap();
        for i in 0..8 {
            assert_eq!(p.get(i, i), 0.5);
            for j in 0..8 {
                if i != j {
                    assert_eq!(p.get(i, j) + p.get(j, i), 1.0);
                }
            }
        }
    }

    #[test]
    fn shifting_a_system_up_lowers_its_p_values() {
        let m = random_matrix(5, 4, 30);
        let sm = generate_sign_matrix(9, 500, 30).unwrap();
        let before = p_value_matrix(&m, &sm).unwrap();
        let mut rows: Vec<Vec<f64>> = (0..4).map(|i| m.row(i).to_vec()).collect();
        rows[2].iter_mut().for_each(|x| *x += 0.05);
        let after = p_value_matrix(&ScoreMatrix::from_rows(rows).unwrap(), &sm).unwrap();
        for j in [0, 1, 3] {
            assert!(after.get(2, j) <= before.get(2, j));
        }
    }

    #[test]
    fn naive_agrees_with_cached() {
        let m = random_matrix(77, 3, 25);
        let b = 20_000;
        let sm = generate_sign_matrix(1, b, 25).unwrap();
        let cached = p_value_matrix(&m, &sm).unwrap();
        let tol = 2.0 * 3.0 * (0.25 / b as f64).sqrt();
        for i in 0..3 {
            for j in 0..3 {
                let naive = naive_pair_p_value(&m, i, j, 4, b).unwrap();
                assert!((naive - cached.get(i, j)).abs() <= tol);
            }
        }
    }

    #[test]
    fn from_upper_validates() {
        assert!(PValueMatrix::from_upper(3, &[0.1, 0.2]).is_err());
        assert!(PValueMatrix::from_upper(2, &[1.2]).is_err());
        let p = PValueMatrix::from_upper(3, &[0.1, 0.2, 0.9]).unwrap();
        assert_eq!(p.upper(), vec![0.1, 0.2, 0.9]);
        let sub = p.submatrix(&[2, 0]);
        assert_eq!(sub.get(0, 1), p.get(2, 0));
    }
}
