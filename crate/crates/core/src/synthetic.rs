//! Synthetic evaluation sets shaped like a WMT metrics task.
//!
//! Systems have a latent quality, segments a latent difficulty. Humans see
//! quality plus segment noise. Metric `k` sees quality through a per-system
//! bias and extra segment noise, both growing with `k`, so metric 0 is the
//! best and the last metric the worst.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::data::{EvalSet, ScoreMatrix};
use crate::error::Result;
use crate::rng::keyed_rng;

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub systems: usize,
    pub segments: usize,
    pub metrics: usize,
    /// Standard deviation of latent system quality.
    pub quality_spread: f64,
    /// Human segment noise.
    pub human_noise: f64,
    /// Per-system metric bias for the best and the worst metric.
    pub bias_range: (f64, f64),
    /// Extra metric segment noise for the best and the worst metric.
    pub noise_range: (f64, f64),
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            systems: 14,
            segments: 600,
            metrics: 20,
            quality_spread: 0.25,
            human_noise: 1.0,
            bias_range: (0.02, 0.2),
            noise_range: (0.3, 1.5),
            seed: 0,
        }
    }
}

fn lerp((lo, hi): (f64, f64), t: f64) -> f64 {
    lo + (hi - lo) * t
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i:02}")).collect()
}

/// Builds an evaluation set with `metrics` graded metrics named
/// `metric00` (best) to `metricNN` (worst).
pub fn wmt_like(cfg: &SyntheticConfig) -> Result<EvalSet<f64>> {
    let (n, s) = (cfg.systems, cfg.segments);
    let mut rng = keyed_rng(cfg.seed, &[0x5359_4e54]);
    let quality: Vec<f64> = (0..n)
        .map(|_| cfg.quality_spread * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let difficulty: Vec<f64> = (0..s).map(|_| rng.sample(StandardNormal)).collect();
    let human_noise = Normal::new(0.0, cfg.human_noise).expect("finite noise");

    let systems = names("sys", n);
    let segments = names("seg", s);
    let human: Vec<f64> = (0..n)
        .flat_map(|i| (0..s).map(move |j| (i, j)))
        .map(|(i, j)| quality[i] + difficulty[j] + human_noise.sample(&mut rng))
        .collect();
    let human = ScoreMatrix::from_flat(systems.clone(), segments.clone(), human)?;

    let mut metrics = BTreeMap::new();
    for k in 0..cfg.metrics {
        let t = if cfg.metrics > 1 {
            k as f64 / (cfg.metrics - 1) as f64
        } else {
            0.0
        };
        let bias_sd = lerp(cfg.bias_range, t);
        let noise = Normal::new(0.0, lerp(cfg.noise_range, t)).expect("finite noise");
        // metric scales differ by an arbitrary positive affine map
        let scale = 0.5 + rng.random::<f64>();
        let shift = rng.random_range(-1.0..1.0);
        let bias: Vec<f64> = (0..n)
            .map(|_| bias_sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut scores = Vec::with_capacity(n * s);
        for i in 0..n {
            for d in &difficulty {
                let raw = quality[i] + bias[i] + d + noise.sample(&mut rng);
                scores.push(scale * raw + shift);
            }
        }
        metrics.insert(
            format!("metric{k:02}"),
            ScoreMatrix::from_flat(systems.clone(), segments.clone(), scores)?,
        );
    }
    EvalSet::new(format!("synthetic-{}", cfg.seed), human, metrics)
}

/// Adds zero-mean noise to every system row so system means stay put.
///
/// The noise has standard deviation `scale` and is centred per row, so only
/// the permutation distribution (and hence the p-values) moves.
pub fn mean_preserving_noise(
    m: &ScoreMatrix<f64>,
    scale: f64,
    seed: u64,
) -> Result<ScoreMatrix<f64>> {
    let mut rng = keyed_rng(seed, &[0x4e4f_4953]);
    let s = m.n_segments();
    let mut scores = Vec::with_capacity(m.n_systems() * s);
    for i in 0..m.n_systems() {
        let noise: Vec<f64> = (0..s)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mean = noise.iter().sum::<f64>() / s as f64;
        scores.extend(m.row(i).iter().zip(&noise).map(|(x, e)| x + (e - mean)));
    }
    ScoreMatrix::from_flat(m.system_names().to_vec(), m.segment_ids().to_vec(), scores)
}

/// `n x s` matrix of i.i.d. uniform `[0, 1)` scores.
pub fn uniform_matrix(n: usize, s: usize, seed: u64) -> Result<ScoreMatrix<f64>> {
    let mut rng = keyed_rng(seed, &[0x554e_4946]);
    ScoreMatrix::from_flat(
        names("sys", n),
        names("seg", s),
        (0..n * s).map(|_| rng.random::<f64>()).collect(),
    )
}
