use std::collections::BTreeMap;

use spa_meta::perm::p_value_matrix;
use spa_meta::significance::SwapTable;
use spa_meta::synthetic::{uniform_matrix, wmt_like, SyntheticConfig};
use spa_meta::{
    greedy_clusters, perm_inputs_compare, significance_matrix, EvalContext, EvalSet, MetaKind,
    ScoreMatrix,
};

fn eval_with(human: ScoreMatrix<f64>, metrics: Vec<(&str, ScoreMatrix<f64>)>) -> EvalSet<f64> {
    let metrics: BTreeMap<_, _> = metrics
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    EvalSet::new("t", human, metrics).unwrap()
}

/// Mid-p over all 2^N system swaps, recomputing every swapped metric from
/// raw scores.
fn brute_force_p(ctx: &EvalContext<'_, f64>, a: &str, b: &str, kind: MetaKind) -> f64 {
    let eval = ctx.eval();
    let (ma, mb) = (eval.metric(a).unwrap(), eval.metric(b).unwrap());
    let ph = p_value_matrix(eval.human(), ctx.signs()).unwrap();
    let n = eval.n_systems();
    let delta = |mask: u32| {
        let (mut sa, mut sb) = (ma.clone(), mb.clone());
        for i in (0..n).filter(|i| mask >> i & 1 == 1) {
            sa = sa.with_row_from(i, mb);
            sb = sb.with_row_from(i, ma);
        }
        let pa = p_value_matrix(&sa, ctx.signs()).unwrap();
        let pb = p_value_matrix(&sb, ctx.signs()).unwrap();
        kind.score(&ph, &pa).unwrap() - kind.score(&ph, &pb).unwrap()
    };
    let observed = delta(0);
    let mut units = 0u32;
    for mask in 0..1u32 << n {
        let d = delta(mask);
        units += if d > observed {
            2
        } else if d == observed {
            1
        } else {
            0
        };
    }
    units as f64 / (2u32 << n) as f64
}

#[test]
fn identical_metrics_give_one_half() {
    let human = uniform_matrix(5, 30, 1).unwrap();
    let m = uniform_matrix(5, 30, 2).unwrap();
    let eval = eval_with(human, vec![("a", m.clone()), ("b", m)]);
    let ctx = EvalContext::new(&eval, 0, 500).unwrap();
    for kind in MetaKind::ALL {
        assert_eq!(
            perm_inputs_compare(&ctx, "a", "b", kind, 200, 7).unwrap(),
            0.5
        );
    }
}

#[test]
fn affine_rescaled_metrics_give_one_half() {
    let human = uniform_matrix(6, 40, 3).unwrap();
    let m = uniform_matrix(6, 40, 4).unwrap();
    let eval = eval_with(human, vec![("a", m.clone()), ("b", m.affine(0.25, -3.0))]);
    let ctx = EvalContext::new(&eval, 1, 500).unwrap();
    for kind in MetaKind::ALL {
        assert_eq!(ctx.score("a", kind).unwrap(), ctx.score("b", kind).unwrap());
        assert_eq!(
            perm_inputs_compare(&ctx, "a", "b", kind, 300, 2).unwrap(),
            0.5
        );
    }
}

#[test]
fn swap_table_matches_brute_force_enumeration() {
    let cfg = SyntheticConfig {
        systems: 4,
        segments: 40,
        metrics: 2,
        bias_range: (0.05, 0.3),
        seed: 17,
        ..Default::default()
    };
    let eval = wmt_like(&cfg).unwrap();
    let ctx = EvalContext::new(&eval, 3, 300).unwrap();
    for kind in MetaKind::ALL {
        let table = SwapTable::new(&ctx, "metric00", "metric01", kind).unwrap();
        let fast = table.exhaustive_p_value().unwrap();
        let slow = brute_force_p(&ctx, "metric00", "metric01", kind);
        assert_eq!(fast, slow, "{kind}");
    }
}

#[test]
fn monte_carlo_matches_exhaustive_swaps_for_three_systems() {
    for seed in 0..6 {
        let cfg = SyntheticConfig {
            systems: 3,
            segments: 60,
            metrics: 2,
            bias_range: (0.0, 0.4),
            seed,
            ..Default::default()
        };
        let eval = wmt_like(&cfg).unwrap();
        let ctx = EvalContext::new(&eval, seed, 400).unwrap();
        for kind in MetaKind::ALL {
            let exact = brute_force_p(&ctx, "metric00", "metric01", kind);
            let mc = perm_inputs_compare(&ctx, "metric00", "metric01", kind, 4096, seed).unwrap();
            assert!(
                (mc - exact).abs() <= 0.03,
                "seed {seed} {kind}: {mc} vs {exact}"
            );
        }
    }
}

#[test]
fn human_copy_beats_anticorrelated_metric() {
    let human = wmt_like(&SyntheticConfig {
        systems: 10,
        segments: 100,
        metrics: 1,
        quality_spread: 0.5,
        seed: 4,
        ..Default::default()
    })
    .unwrap()
    .human()
    .clone();
    let eval = eval_with(
        human.clone(),
        vec![("copy", human.clone()), ("anti", human.negated())],
    );
    for seed in [1, 2] {
        let ctx = EvalContext::new(&eval, seed, 1000).unwrap();
        for kind in MetaKind::ALL {
            let p = perm_inputs_compare(&ctx, "copy", "anti", kind, 1000, seed).unwrap();
            assert!(p < 0.05, "seed {seed} {kind}: p = {p}");
        }
    }
}

#[test]
fn unknown_metric_and_zero_resamples() {
    let human = uniform_matrix(3, 10, 1).unwrap();
    let eval = eval_with(human.clone(), vec![("a", human.clone()), ("b", human)]);
    let ctx = EvalContext::new(&eval, 0, 50).unwrap();
    assert!(perm_inputs_compare(&ctx, "a", "zzz", MetaKind::Spa, 10, 0).is_err());
    assert!(perm_inputs_compare(&ctx, "a", "b", MetaKind::Spa, 0, 0).is_err());
    assert!(significance_matrix(&ctx, &["a"], MetaKind::Spa, 10, 0.05, 0).is_err());
}

#[test]
fn identical_metrics_form_one_cluster() {
    let human = uniform_matrix(5, 20, 8).unwrap();
    let m = uniform_matrix(5, 20, 9).unwrap();
    let eval = eval_with(human, vec![("a", m.clone()), ("b", m.clone()), ("c", m)]);
    let ctx = EvalContext::new(&eval, 0, 200).unwrap();
    let sig = significance_matrix(&ctx, &["a", "b", "c"], MetaKind::Spa, 100, 0.05, 0).unwrap();
    assert_eq!(sig.significant_count(), 0);
    for r in 0..3 {
        for c in 0..3 {
            if r != c {
                assert_eq!(sig.pvals[r][c], 0.5);
            }
        }
    }
    assert_eq!(greedy_clusters(&sig).unwrap().clusters, 1);
}

#[test]
fn significance_matrix_is_deterministic_and_sorted() {
    let eval = wmt_like(&SyntheticConfig {
        systems: 8,
        segments: 120,
        metrics: 5,
        seed: 2,
        ..Default::default()
    })
    .unwrap();
    let ctx = EvalContext::new(&eval, 9, 300).unwrap();
    let names = eval.metric_names();
    let a = significance_matrix(&ctx, &names, MetaKind::Spa, 200, 0.05, 5).unwrap();
    let b = significance_matrix(&ctx, &names, MetaKind::Spa, 200, 0.05, 5).unwrap();
    assert_eq!(a, b);
    assert!(a.scores.windows(2).all(|w| w[0] >= w[1]));
    for r in 0..a.len() {
        for c in r + 1..a.len() {
            assert_eq!(a.pvals[r][c] + a.pvals[c][r], 1.0);
        }
    }
    let clusters = greedy_clusters(&a).unwrap();
    let ranks: Vec<usize> = clusters.ranks.iter().map(|(_, r)| *r).collect();
    assert!(ranks.windows(2).all(|w| w[1] == w[0] || w[1] == w[0] + 1));
    assert_eq!(ranks[0], 1);
}
