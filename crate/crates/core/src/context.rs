use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::data::EvalSet;
use crate::error::{Error, Result};
use crate::meta::{MetaKind, MetaScore};
use crate::perm::{
    generate_sign_matrix, pairwise_p_values, project_systems, PValueMatrix, SignMatrix,
    SystemProjection,
};
use crate::scalar::Score;

/// One evaluation set projected onto a single shared sign cache.
///
/// The cache is shared by every system pair and by every score set (human and
/// all metrics), so all p-value matrices of a test set see the same
/// permutations.
#[derive(Debug, Clone)]
pub struct EvalContext<'a, T> {
    eval: &'a EvalSet<T>,
    signs: SignMatrix,
    human: ScoreSet<T>,
    metrics: BTreeMap<String, ScoreSet<T>>,
}

#[derive(Debug, Clone)]
pub struct ScoreSet<T> {
    pub projection: SystemProjection<T>,
    pub p_values: PValueMatrix,
}

impl<T: Score> ScoreSet<T> {
    fn build(m: &crate::data::ScoreMatrix<T>, signs: &SignMatrix) -> Result<Self> {
        let projection = project_systems(m, signs)?;
        let p_values = pairwise_p_values(&projection);
        Ok(Self {
            projection,
            p_values,
        })
    }
}

impl<'a, T: Score> EvalContext<'a, T> {
    /// Generates the sign cache from `(seed, permutations)` and projects
    /// every score set onto it.
    pub fn new(eval: &'a EvalSet<T>, seed: u64, permutations: usize) -> Result<Self> {
        let signs = generate_sign_matrix(seed, permutations, eval.n_segments())?;
        Self::with_signs(eval, signs)
    }

    pub fn with_signs(eval: &'a EvalSet<T>, signs: SignMatrix) -> Result<Self> {
        let human = ScoreSet::build(eval.human(), &signs)?;
        let metrics = eval
            .metrics()
            .par_iter()
            .map(|(name, m)| Ok((name.clone(), ScoreSet::build(m, &signs)?)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .collect();
        Ok(Self {
            eval,
            signs,
            human,
            metrics,
        })
    }

    pub fn eval(&self) -> &'a EvalSet<T> {
        self.eval
    }

    pub fn signs(&self) -> &SignMatrix {
        &self.signs
    }

    pub fn human(&self) -> &ScoreSet<T> {
        &self.human
    }

    pub fn metric(&self, name: &str) -> Result<&ScoreSet<T>> {
        self.metrics
            .get(name)
            .ok_or_else(|| Error::UnknownMetric(name.to_string()))
    }

    pub fn metric_names(&self) -> impl Iterator<Item = &str> {
        self.metrics.keys().map(String::as_str)
    }

    pub fn meta_score(&self, name: &str) -> Result<MetaScore> {
        MetaScore::compute(name, &self.human.p_values, &self.metric(name)?.p_values)
    }

    /// SPA, PA and τ for every metric, in metric-name order.
    pub fn meta_scores(&self) -> Result<Vec<MetaScore>> {
        self.metric_names().map(|n| self.meta_score(n)).collect()
    }

    pub fn score(&self, name: &str, kind: MetaKind) -> Result<f64> {
        kind.score(&self.human.p_values, &self.metric(name)?.p_values)
    }
}
