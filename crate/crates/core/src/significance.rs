//! Metric-vs-metric significance (PERM-INPUTS) and greedy significance
//! clusters.
//!
//! To compare metrics A and B, each resample independently swaps A's and B's
//! full score vectors for every system with probability ½ and recomputes both
//! meta-scores. Swapping a system's scores swaps its projection row, so the
//! p-value of a pair `(i, j)` in a swapped metric only depends on which
//! metric each of `i` and `j` came from. Those four variants are computed once
//! per pair and every resample is then `O(N²)` lookups.
//!
//! Each drawn swap pattern is evaluated together with its complement. The
//! complement exchanges the roles of A and B, so its delta is exactly the
//! negated delta; the resampled distribution is symmetric by construction.

use rayon::prelude::*;
use serde::Serialize;

use crate::context::EvalContext;
use crate::error::{Error, Result};
use crate::meta::{binarize, MetaKind};
use crate::perm::cross_p_value;
use crate::rng::{derive_seed, keyed_rng, TAG_SWAPS};
use crate::scalar::Score;

pub const DEFAULT_RESAMPLES: usize = 1000;
pub const DEFAULT_ALPHA: f64 = 0.05;

/// Printed alongside cluster ranks.
pub const CLUSTER_WARNING: &str = "note: greedy significance clustering can place two metrics \
that are statistically indistinguishable in different clusters";

/// Largest system count for [`SwapTable::exhaustive_p_value`].
pub const MAX_EXHAUSTIVE_SYSTEMS: usize = 24;

/// Precomputed agreement terms of two metrics under every swap state of a
/// system pair.
#[derive(Debug, Clone)]
pub struct SwapTable {
    kind: MetaKind,
    n: usize,
    // per pair i<j: terms[k][src_i * 2 + src_j], src 0 = A, 1 = B
    terms: Vec<[f64; 4]>,
}

impl SwapTable {
    pub fn new<T: Score>(
        ctx: &EvalContext<'_, T>,
        a: &str,
        b: &str,
        kind: MetaKind,
    ) -> Result<Self> {
        let pa = &ctx.metric(a)?.projection;
        let pb = &ctx.metric(b)?.projection;
        let ph = &ctx.human().p_values;
        let n = ph.n_systems();
        let src = [pa, pb];
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        let terms = pairs
            .par_iter()
            .map(|&(i, j)| {
                let h = ph.get(i, j);
                let mut t = [0.0; 4];
                for si in 0..2 {
                    for sj in 0..2 {
                        let m = cross_p_value(src[si], i, src[sj], j);
                        t[si * 2 + sj] = agreement(kind, h, m)?;
                    }
                }
                Ok(t)
            })
            .collect::<Result<_>>()?;
        Ok(Self { kind, n, terms })
    }

    pub fn kind(&self) -> MetaKind {
        self.kind
    }

    pub fn n_systems(&self) -> usize {
        self.n
    }

    /// Meta-score of the metric whose system `i` is taken from B when
    /// `from_b(i)` holds and from A otherwise.
    fn meta_with(&self, from_b: impl Fn(usize) -> bool) -> f64 {
        let mut k = 0;
        let mut total = 0.0;
        for i in 0..self.n {
            let si = usize::from(from_b(i));
            for j in i + 1..self.n {
                let sj = usize::from(from_b(j));
                total += self.terms[k][si * 2 + sj];
                k += 1;
            }
        }
        total / self.terms.len() as f64
    }

    /// `meta(A') - meta(B')` where `swapped[i]` exchanges system `i`.
    pub fn delta(&self, swapped: &[bool]) -> f64 {
        self.meta_with(|i| swapped[i]) - self.meta_with(|i| !swapped[i])
    }

    /// Observed `meta(A) - meta(B)`.
    pub fn observed_delta(&self) -> f64 {
        self.delta(&vec![false; self.n])
    }

    /// Exact mid-p over all `2^N` swap patterns.
    pub fn exhaustive_p_value(&self) -> Result<f64> {
        if self.n > MAX_EXHAUSTIVE_SYSTEMS {
            return Err(Error::InvalidArgument(format!(
                "exhaustive swap enumeration supports at most {MAX_EXHAUSTIVE_SYSTEMS} systems"
            )));
        }
        let observed = self.observed_delta();
        let patterns = 1u64 << self.n;
        let half_units: u64 = (0..patterns)
            .into_par_iter()
            .map(|mask| {
                let swapped: Vec<bool> = (0..self.n).map(|i| (mask >> i) & 1 == 1).collect();
                mid_p_units(self.delta(&swapped), observed)
            })
            .sum();
        Ok(half_units as f64 / (2 * patterns) as f64)
    }
}

fn agreement(kind: MetaKind, h: f64, m: f64) -> Result<f64> {
    Ok(match kind {
        MetaKind::Spa => 1.0 - (h - m).abs(),
        MetaKind::Pa => f64::from(u8::from(binarize(h)? == binarize(m)?)),
    })
}

fn mid_p_units(delta: f64, observed: f64) -> u64 {
    if delta > observed {
        2
    } else if delta == observed {
        1
    } else {
        0
    }
}

/// One-sided p-value that metric `a` is better than metric `b` under `kind`.
///
/// `resamples` swap patterns are drawn from streams keyed on
/// `(seed, resample index)`; each is evaluated with its complement, so the
/// p-value is a mid-p over `2 · resamples` deltas.
pub fn perm_inputs_compare<T: Score>(
    ctx: &EvalContext<'_, T>,
    a: &str,
    b: &str,
    kind: MetaKind,
    resamples: usize,
    seed: u64,
) -> Result<f64> {
    if resamples == 0 {
        return Err(Error::InvalidArgument(
            "resample count must be at least 1".into(),
        ));
    }
    let table = SwapTable::new(ctx, a, b, kind)?;
    Ok(resampled_p_value(&table, resamples, seed))
}

fn resampled_p_value(table: &SwapTable, resamples: usize, seed: u64) -> f64 {
    let observed = table.observed_delta();
    let n = table.n_systems();
    let half_units: u64 = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = keyed_rng(seed, &[TAG_SWAPS, r as u64]);
            let swapped: Vec<bool> = (0..n)
                .map(|_| rand::Rng::random::<bool>(&mut rng))
                .collect();
            let d = table.delta(&swapped);
            // the complement pattern yields exactly -d
            mid_p_units(d, observed) + mid_p_units(-d, observed)
        })
        .sum();
    half_units as f64 / (4 * resamples) as f64
}

/// Pairwise significance between metrics, sorted by descending meta-score.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSigMatrix {
    pub meta: MetaKind,
    pub metric_names: Vec<String>,
    pub scores: Vec<f64>,
    /// `pvals[r][c]`: p-value for "metric `r` is better than metric `c`".
    /// Diagonal is 1.
    pub pvals: Vec<Vec<f64>>,
    pub alpha: f64,
}

impl MetricSigMatrix {
    pub fn len(&self) -> usize {
        self.metric_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.metric_names.is_empty()
    }

    /// Whether the higher-ranked metric `r` is significantly better than `c`.
    pub fn is_significant(&self, r: usize, c: usize) -> bool {
        let (hi, lo) = if r < c { (r, c) } else { (c, r) };
        hi != lo && self.pvals[hi][lo] <= self.alpha
    }

    /// Number of significant comparisons among the `M(M-1)/2` ranked pairs.
    pub fn significant_count(&self) -> usize {
        let m = self.len();
        (0..m)
            .flat_map(|r| (r + 1..m).map(move |c| (r, c)))
            .filter(|&(r, c)| self.is_significant(r, c))
            .count()
    }
}

/// Runs [`perm_inputs_compare`] for every pair of `metrics`, ordering them by
/// descending meta-score (ties by name). The pair at sorted positions
/// `(r, c)` uses seed `derive_seed(seed, [r, c])`.
pub fn significance_matrix<T: Score>(
    ctx: &EvalContext<'_, T>,
    metrics: &[&str],
    kind: MetaKind,
    resamples: usize,
    alpha: f64,
    seed: u64,
) -> Result<MetricSigMatrix> {
    if metrics.len() < 2 {
        return Err(Error::InvalidArgument(
            "need at least 2 metrics to compare".into(),
        ));
    }
    if resamples == 0 {
        return Err(Error::InvalidArgument(
            "resample count must be at least 1".into(),
        ));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!(
            "alpha {alpha} outside [0, 1]"
        )));
    }
    let mut ranked = metrics
        .iter()
        .map(|&m| Ok((m.to_string(), ctx.score(m, kind)?)))
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|(na, sa), (nb, sb)| sb.total_cmp(sa).then_with(|| na.cmp(nb)));

    let m = ranked.len();
    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|r| (r + 1..m).map(move |c| (r, c)))
        .collect();
    let upper: Vec<f64> = pairs
        .par_iter()
        .map(|&(r, c)| {
            let table = SwapTable::new(ctx, &ranked[r].0, &ranked[c].0, kind)?;
            Ok(resampled_p_value(
                &table,
                resamples,
                derive_seed(seed, &[r as u64, c as u64]),
            ))
        })
        .collect::<Result<_>>()?;

    let mut pvals = vec![vec![1.0; m]; m];
    for (&(r, c), &p) in pairs.iter().zip(&upper) {
        pvals[r][c] = p;
        pvals[c][r] = 1.0 - p;
    }
    let (metric_names, scores) = ranked.into_iter().unzip();
    Ok(MetricSigMatrix {
        meta: kind,
        metric_names,
        scores,
        pvals,
        alpha,
    })
}

/// 1-based significance-cluster rank of every metric.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClusterAssignment {
    pub ranks: Vec<(String, usize)>,
    pub clusters: usize,
}

impl ClusterAssignment {
    pub fn rank_of(&self, name: &str) -> Option<usize> {
        self.ranks.iter().find(|(n, _)| n == name).map(|&(_, r)| r)
    }
}

/// Greedy clustering: walk metrics from best to worst and open a new cluster
/// at the first metric that is significantly worse than any metric of the
/// current cluster.
pub fn greedy_clusters(sig: &MetricSigMatrix) -> Result<ClusterAssignment> {
    if sig.scores.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::InvalidArgument(
            "metrics must be sorted by descending meta-score".into(),
        ));
    }
    let mut ranks = Vec::with_capacity(sig.len());
    let mut rank = 1;
    let mut start = 0;
    for c in 0..sig.len() {
        if (start..c).any(|r| sig.is_significant(r, c)) {
            rank += 1;
            start = c;
        }
        ranks.push((sig.metric_names[c].clone(), rank));
    }
    Ok(ClusterAssignment {
        clusters: if ranks.is_empty() { 0 } else { rank },
        ranks,
    })
}
