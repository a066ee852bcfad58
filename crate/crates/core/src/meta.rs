//! Soft pairwise accuracy, pairwise accuracy and Kendall's τ from p-value
//! matrices.
//!
//! All three average a per-pair agreement term over the `C(N, 2)` unordered
//! system pairs `i < j`:
//!
//! * SPA term: `1 - |p_h - p_m|`
//! * PA term: `1 - |bin(p_h) - bin(p_m)|` with `bin(x) = 1` iff `x >= 0.5`
//! * τ term: concordant minus discordant, which makes `τ = 2 PA - 1`.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::Num;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perm::PValueMatrix;

/// Which meta-metric to rank metrics by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetaKind {
    Spa,
    Pa,
}

impl MetaKind {
    pub const ALL: [MetaKind; 2] = [MetaKind::Spa, MetaKind::Pa];

    pub fn name(self) -> &'static str {
        match self {
            MetaKind::Spa => "spa",
            MetaKind::Pa => "pa",
        }
    }

    /// Evaluates this meta-metric.
    pub fn score(self, ph: &PValueMatrix, pm: &PValueMatrix) -> Result<f64> {
        match self {
            MetaKind::Spa => spa(ph, pm),
            MetaKind::Pa => pa(ph, pm),
        }
    }
}

impl fmt::Display for MetaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetaKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "spa" => Ok(MetaKind::Spa),
            "pa" => Ok(MetaKind::Pa),
            other => Err(Error::InvalidArgument(format!(
                "unknown meta-metric `{other}`"
            ))),
        }
    }
}

/// `1` if `x >= 0.5`, else `0`.
pub fn binarize(x: f64) -> Result<u8> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidArgument(format!(
            "p-value {x} outside [0, 1]"
        )));
    }
    Ok(u8::from(x >= 0.5))
}

fn check_same(ph: &PValueMatrix, pm: &PValueMatrix) -> Result<usize> {
    if ph.n_systems() != pm.n_systems() {
        return Err(Error::DimensionMismatch(format!(
            "human p-values cover {} systems, metric p-values {}",
            ph.n_systems(),
            pm.n_systems()
        )));
    }
    Ok(ph.n_systems())
}

fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
}

/// Soft pairwise accuracy.
pub fn spa(ph: &PValueMatrix, pm: &PValueMatrix) -> Result<f64> {
    let n = check_same(ph, pm)?;
    let total: f64 = pairs(n)
        .map(|(i, j)| 1.0 - (ph.get(i, j) - pm.get(i, j)).abs())
        .sum();
    Ok(total / (n * (n - 1) / 2) as f64)
}

/// Number of concordant pairs after binarization, and the pair count.
pub fn concordance(ph: &PValueMatrix, pm: &PValueMatrix) -> Result<(usize, usize)> {
    let n = check_same(ph, pm)?;
    let mut concordant = 0;
    for (i, j) in pairs(n) {
        if binarize(ph.get(i, j))? == binarize(pm.get(i, j))? {
            concordant += 1;
        }
    }
    Ok((concordant, n * (n - 1) / 2))
}

/// Pairwise accuracy as an exact fraction `concordant / C(N, 2)`.
pub fn pa_exact(ph: &PValueMatrix, pm: &PValueMatrix) -> Result<Ratio<i64>> {
    let (k, total) = concordance(ph, pm)?;
    Ok(Ratio::new(k as i64, total as i64))
}

/// Pairwise accuracy.
pub fn pa(ph: &PValueMatrix, pm: &PValueMatrix) -> Result<f64> {
    let (k, total) = concordance(ph, pm)?;
    Ok(k as f64 / total as f64)
}

/// Kendall's τ from pairwise accuracy: `2 PA - 1`.
///
/// Generic so that the identity can be checked exactly on rationals.
pub fn kendall_from_pa<T: Num + PartialOrd + Copy>(pa: T) -> Result<T> {
    if pa < T::zero() || pa > T::one() {
        return Err(Error::InvalidArgument(
            "pairwise accuracy outside [0, 1]".into(),
        ));
    }
    let two = T::one() + T::one();
    Ok(two * pa - T::one())
}

/// Kendall's τ computed directly as (concordant - discordant) / C(N, 2) over
/// the binarized preferences.
pub fn kendall_tau_exact(ph: &PValueMatrix, pm: &PValueMatrix) -> Result<Ratio<i64>> {
    let n = check_same(ph, pm)?;
    let (mut concordant, mut discordant) = (0i64, 0i64);
    for (i, j) in pairs(n) {
        if binarize(ph.get(i, j))? == binarize(pm.get(i, j))? {
            concordant += 1;
        } else {
            discordant += 1;
        }
    }
    Ok(Ratio::new(
        concordant - discordant,
        (n * (n - 1) / 2) as i64,
    ))
}

/// Per-pair agreement terms, one per `i < j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairBreakdown {
    pub i: usize,
    pub j: usize,
    pub p_h: f64,
    pub p_m: f64,
    pub spa_term: f64,
    pub pa_term: u8,
}

pub fn pair_breakdown(ph: &PValueMatrix, pm: &PValueMatrix) -> Result<Vec<PairBreakdown>> {
    let n = check_same(ph, pm)?;
    pairs(n)
        .map(|(i, j)| {
            let (p_h, p_m) = (ph.get(i, j), pm.get(i, j));
            Ok(PairBreakdown {
                i,
                j,
                p_h,
                p_m,
                spa_term: 1.0 - (p_h - p_m).abs(),
                pa_term: u8::from(binarize(p_h)? == binarize(p_m)?),
            })
        })
        .collect()
}

/// SPA, PA and τ of one metric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetaScore {
    pub metric_name: String,
    pub spa: f64,
    pub pa: f64,
    pub tau: f64,
    pub concordant: usize,
    pub pairs: usize,
}

impl MetaScore {
    pub fn compute(name: impl Into<String>, ph: &PValueMatrix, pm: &PValueMatrix) -> Result<Self> {
        let (concordant, pairs) = concordance(ph, pm)?;
        let pa = concordant as f64 / pairs as f64;
        Ok(Self {
            metric_name: name.into(),
            spa: spa(ph, pm)?,
            pa,
            tau: kendall_from_pa(pa)?,
            concordant,
            pairs,
        })
    }

    pub fn get(&self, kind: MetaKind) -> f64 {
        match kind {
            MetaKind::Spa => self.spa,
            MetaKind::Pa => self.pa,
        }
    }

    pub fn pa_exact(&self) -> Ratio<i64> {
        Ratio::new(self.concordant as i64, self.pairs as i64)
    }
}

/// Number of distinct PA and SPA values among a set of metric scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DistinctValues {
    pub pa: usize,
    pub spa: usize,
}

/// Counts distinct values by exact equality. PA is compared as the reduced
/// fraction `concordant / pairs`, SPA bit for bit.
pub fn distinct_value_stats(scores: &[MetaScore]) -> Result<DistinctValues> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument("no metric scores given".into()));
    }
    let pa: HashSet<Ratio<i64>> = scores.iter().map(MetaScore::pa_exact).collect();
    // +0.0 so that -0.0 and 0.0 count once
    let spa: HashSet<u64> = scores.iter().map(|s| (s.spa + 0.0).to_bits()).collect();
    Ok(DistinctValues {
        pa: pa.len(),
        spa: spa.len(),
    })
}

/// Upper bound on the number of values PA can take for `n` systems.
pub fn max_distinct_pa(n: usize) -> usize {
    n * (n - 1) / 2 + 1
}
