//! Stability of meta-metric rankings: system ablation and segment bootstrap.

use num_traits::Float;
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::context::EvalContext;
use crate::data::EvalSet;
use crate::error::{Error, Result};
use crate::meta::MetaKind;
use crate::perm::{generate_sign_matrix, p_value_matrix};
use crate::rng::{derive_seed, keyed_rng, TAG_ABLATE, TAG_BOOT};
use crate::scalar::Score;

pub const DEFAULT_TRIALS: usize = 1000;
pub const MIN_BOOTSTRAP_TRIALS: usize = 100;

/// Pearson product-moment correlation.
///
/// Fails with [`Error::Degenerate`] when either vector is constant, since the
/// correlation is undefined there.
pub fn pearson_r<F: Float>(x: &[F], y: &[F]) -> Result<F> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "pearson_r on vectors of length {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InvalidArgument(
            "pearson_r needs at least 2 points".into(),
        ));
    }
    let n = F::from(x.len()).expect("length fits the float type");
    let mx = x.iter().fold(F::zero(), |a, &v| a + v) / n;
    let my = y.iter().fold(F::zero(), |a, &v| a + v) / n;
    let (mut sxy, mut sxx, mut syy) = (F::zero(), F::zero(), F::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx == F::zero() || syy == F::zero() {
        return Err(Error::Degenerate(
            "correlation with a constant vector".into(),
        ));
    }
    let r = sxy / (sxx * syy).sqrt();
    Ok(r.max(-F::one()).min(F::one()))
}

/// Mean correlation between meta-scores on random system subsets and on the
/// full system set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityResult {
    pub meta: MetaKind,
    pub systems_kept: usize,
    pub mean_pearson_r: f64,
    /// Trials that produced a correlation.
    pub trials: usize,
    /// Trials skipped because the subset meta-score vector was constant.
    pub degenerate_trials: usize,
}

/// Keeps `k` systems chosen uniformly without replacement in each trial,
/// scores every metric on that subset, and averages the Pearson r against
/// the full-set scores.
///
/// Subsets come from streams keyed on `(seed, k, trial)` and do not depend on
/// `kind`, so SPA and PA are compared on the same subsets. All metrics share
/// the context's sign cache; since a pair's p-value only depends on that
/// pair, subset p-values are submatrices of the full ones.
pub fn system_ablation_stability<T: Score>(
    ctx: &EvalContext<'_, T>,
    kind: MetaKind,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<StabilityResult> {
    let n = ctx.eval().n_systems();
    if k < 2 || k > n {
        return Err(Error::InvalidArgument(format!(
            "systems kept must be in [2, {n}], got {k}"
        )));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument(
            "trial count must be at least 1".into(),
        ));
    }
    let names: Vec<&str> = ctx.metric_names().collect();
    if names.len() < 2 {
        return Err(Error::InvalidArgument(
            "ablation needs at least 2 metrics".into(),
        ));
    }
    let metric_p: Vec<_> = names
        .iter()
        .map(|m| ctx.metric(m).map(|s| &s.p_values))
        .collect::<Result<_>>()?;
    let human_p = &ctx.human().p_values;
    let full = metric_p
        .iter()
        .map(|pm| kind.score(human_p, pm))
        .collect::<Result<Vec<f64>>>()?;
    if full.windows(2).all(|w| w[0] == w[1]) {
        return Err(Error::Degenerate(format!(
            "all metrics have the same {kind} on the full system set"
        )));
    }

    let rs: Vec<Option<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = keyed_rng(seed, &[TAG_ABLATE, k as u64, t as u64]);
            let mut subset = index::sample(&mut rng, n, k).into_vec();
            subset.sort_unstable();
            let h = human_p.submatrix(&subset);
            let scores = metric_p
                .iter()
                .map(|pm| kind.score(&h, &pm.submatrix(&subset)))
                .collect::<Result<Vec<f64>>>()?;
            match pearson_r(&scores, &full) {
                Ok(r) => Ok(Some(r)),
                Err(Error::Degenerate(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;

    let valid: Vec<f64> = rs.iter().flatten().copied().collect();
    if valid.is_empty() {
        return Err(Error::Degenerate(format!(
            "every trial with {k} systems gave a constant {kind} vector"
        )));
    }
    Ok(StabilityResult {
        meta: kind,
        systems_kept: k,
        mean_pearson_r: valid.iter().sum::<f64>() / valid.len() as f64,
        trials: valid.len(),
        degenerate_trials: trials - valid.len(),
    })
}

/// 95% percentile bootstrap interval at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CIResult {
    pub meta: MetaKind,
    pub sample_size: usize,
    pub lower: f64,
    pub upper: f64,
    /// Meta-score on the full data.
    pub point: f64,
}

impl CIResult {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

#[derive(Debug, Clone)]
pub struct BootstrapOptions {
    pub sample_sizes: Vec<usize>,
    pub trials: usize,
    pub permutations: usize,
    pub seed: u64,
    /// Allow sample sizes above the segment count.
    pub allow_oversample: bool,
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi || sorted[lo] == sorted[hi] {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

/// Bootstrap intervals for one metric over segment sample sizes.
///
/// Each replicate draws `m` segments with replacement (stream keyed on
/// `(seed, m, trial)`), regenerates a sign cache of the same size `B` for the
/// resampled segments, and recomputes the requested meta-scores. Returns one
/// result per `(sample size, kind)` in that order.
pub fn bootstrap_ci<T: Score>(
    eval: &EvalSet<T>,
    metric: &str,
    kinds: &[MetaKind],
    opts: &BootstrapOptions,
) -> Result<Vec<CIResult>> {
    let s = eval.n_segments();
    let metric_m = eval.metric(metric)?;
    if opts.trials < MIN_BOOTSTRAP_TRIALS {
        return Err(Error::InvalidArgument(format!(
            "bootstrap needs at least {MIN_BOOTSTRAP_TRIALS} trials, got {}",
            opts.trials
        )));
    }
    if kinds.is_empty() {
        return Err(Error::InvalidArgument("no meta-metric requested".into()));
    }
    for &m in &opts.sample_sizes {
        if m == 0 || (m > s && !opts.allow_oversample) {
            return Err(Error::InvalidArgument(format!(
                "sample size {m} outside [1, {s}]"
            )));
        }
    }

    let ctx = EvalContext::new(eval, opts.seed, opts.permutations)?;
    let points = kinds
        .iter()
        .map(|&k| ctx.score(metric, k))
        .collect::<Result<Vec<_>>>()?;

    let mut out = Vec::with_capacity(opts.sample_sizes.len() * kinds.len());
    for &m in &opts.sample_sizes {
        let replicates: Vec<Vec<f64>> = (0..opts.trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = keyed_rng(opts.seed, &[TAG_BOOT, m as u64, t as u64]);
                let picks: Vec<usize> = (0..m).map(|_| rng.random_range(0..s)).collect();
                let sign_seed = derive_seed(opts.seed, &[TAG_BOOT, m as u64, t as u64, 1]);
                let signs = generate_sign_matrix(sign_seed, opts.permutations, m)?;
                let ph = p_value_matrix(&eval.human().resample_segments(&picks)?, &signs)?;
                let pm = p_value_matrix(&metric_m.resample_segments(&picks)?, &signs)?;
                kinds.iter().map(|k| k.score(&ph, &pm)).collect()
            })
            .collect::<Result<_>>()?;

        for (ki, &kind) in kinds.iter().enumerate() {
            let mut values: Vec<f64> = replicates.iter().map(|r| r[ki]).collect();
            values.sort_by(f64::total_cmp);
            out.push(CIResult {
                meta: kind,
                sample_size: m,
                lower: percentile(&values, 0.025),
                upper: percentile(&values, 0.975),
                point: points[ki],
            });
        }
    }
    Ok(out)
}
