use std::path::Path;
use std::process::{Command, Output};

use spa_meta::synthetic::{wmt_like, SyntheticConfig};
use spa_meta::{write_eval_set, EvalSet};
use tempfile::TempDir;

fn synthetic(systems: usize, segments: usize, metrics: usize, with_copy: bool) -> TempDir {
    let mut eval = wmt_like(&SyntheticConfig {
        systems,
        segments,
        metrics,
        seed: 3,
        ..Default::default()
    })
    .unwrap();
    if with_copy {
        let mut m = eval.metrics().clone();
        m.insert("human_copy".to_string(), eval.human().clone());
        eval = EvalSet::new("t", eval.human().clone(), m).unwrap();
    }
    let dir = TempDir::new().unwrap();
    write_eval_set(&eval, dir.path()).unwrap();
    dir
}

fn spa_meta(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spa-meta"))
        .arg("--evalset")
        .arg(dir)
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(
        o.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Data rows of the first table, split on tabs.
fn table(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let head = lines
        .next()
        .unwrap()
        .split('\t')
        .map(String::from)
        .collect();
    let rows = lines
        .take_while(|l| !l.is_empty())
        .map(|l| l.split('\t').map(String::from).collect())
        .collect();
    (head, rows)
}

fn header_value<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines()
        .filter_map(|l| l.strip_prefix("# "))
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('\t')))
}

#[test]
fn human_copy_tops_the_score_table() {
    let dir = synthetic(6, 80, 3, true);
    let out = stdout(&spa_meta(dir.path(), &["score", "--perms", "200"]));
    let (head, rows) = table(&out);
    assert_eq!(head, ["metric", "spa", "pa", "tau", "concordant", "pairs"]);
    assert_eq!(rows[0][0], "human_copy");
    assert_eq!(rows[0][1], "1");
    let spa: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(spa.windows(2).all(|w| w[0] >= w[1]));
    for key in [
        "seed",
        "permutations",
        "resamples",
        "distinct_spa",
        "distinct_pa",
    ] {
        assert!(header_value(&out, key).is_some(), "missing {key}");
    }
    assert!(out.starts_with(&format!("# spa-meta {}", spa_meta::VERSION)));
}

#[test]
fn tau_column_is_two_pa_minus_one() {
    let dir = synthetic(7, 60, 3, false);
    let out = stdout(&spa_meta(
        dir.path(),
        &["score", "--meta", "both", "--perms", "200"],
    ));
    let (_, rows) = table(&out);
    assert_eq!(rows.len(), 3);
    for r in rows {
        let (k, c): (i64, i64) = (r[4].parse().unwrap(), r[5].parse().unwrap());
        let pa: f64 = r[2].parse().unwrap();
        let tau: f64 = r[3].parse().unwrap();
        assert_eq!(pa, k as f64 / c as f64);
        assert_eq!(tau, 2.0 * pa - 1.0);
        assert!((tau - (2 * k - c) as f64 / c as f64).abs() < 1e-15);
    }
}

#[test]
fn breakdown_goes_next_to_the_report() {
    let dir = synthetic(4, 40, 2, false);
    let report = dir.path().join("score.tsv");
    let o = spa_meta(
        dir.path(),
        &[
            "score",
            "--breakdown",
            "--perms",
            "100",
            "-o",
            report.to_str().unwrap(),
        ],
    );
    assert!(o.status.success());
    let csv = std::fs::read_to_string(dir.path().join("score.tsv.breakdown.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "metric,system_i,system_j,p_h,p_m,spa_term,pa_term"
    );
    // 2 metrics x C(4,2) pairs
    assert_eq!(lines.count(), 12);
}

#[test]
fn compare_reports_single_cluster_for_duplicates() {
    let dir = synthetic(5, 40, 1, false);
    let m = std::fs::read(dir.path().join("metrics/metric00.tsv")).unwrap();
    std::fs::write(dir.path().join("metrics/metric00_copy.tsv"), m).unwrap();
    let out = stdout(&spa_meta(
        dir.path(),
        &["compare", "--perms", "100", "--resamples", "100"],
    ));
    assert_eq!(header_value(&out, "significant_spa"), Some("0"));
    assert_eq!(header_value(&out, "clusters_pa"), Some("1"));
    let pairs = out.split("\n\n").nth(1).unwrap();
    let (head, rows) = table(pairs);
    assert_eq!(
        head,
        ["meta", "metric_a", "metric_b", "p_value", "significant"]
    );
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r[3] == "0.5"));
}

#[test]
fn compare_needs_two_metrics() {
    let dir = synthetic(4, 20, 1, false);
    let o = spa_meta(dir.path(), &["compare", "--perms", "50"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("at least 2 metrics"));
}

#[test]
fn stability_keeping_all_systems_gives_r_one() {
    let dir = synthetic(6, 50, 3, false);
    let out = stdout(&spa_meta(
        dir.path(),
        &[
            "stability",
            "--k",
            "3,6",
            "--trials",
            "20",
            "--perms",
            "100",
        ],
    ));
    let (head, rows) = table(&out);
    assert_eq!(
        head,
        ["meta", "k", "mean_pearson_r", "trials", "degenerate_trials"]
    );
    assert_eq!(rows.len(), 4);
    for r in rows.iter().filter(|r| r[1] == "6") {
        assert_eq!(r[2], "1");
    }
}

#[test]
fn ci_rows_bracket_the_point_estimate() {
    let dir = synthetic(5, 60, 2, true);
    let out = stdout(&spa_meta(
        dir.path(),
        &[
            "ci", "--metric", "metric01", "--sizes", "10,30,60", "--trials", "100", "--perms",
            "100",
        ],
    ));
    let (head, rows) = table(&out);
    assert_eq!(
        head,
        ["meta", "sample_size", "lower", "point", "upper", "width"]
    );
    assert_eq!(rows.len(), 3 * 2);
    for r in &rows {
        let v: Vec<f64> = r[2..5].iter().map(|x| x.parse().unwrap()).collect();
        assert!(v[0] <= v[1] && v[1] <= v[2], "{r:?}");
    }
    let spa_only = stdout(&spa_meta(
        dir.path(),
        &[
            "ci",
            "--metric",
            "human_copy",
            "--meta",
            "spa",
            "--sizes",
            "20",
            "--trials",
            "100",
            "--perms",
            "100",
        ],
    ));
    let (_, rows) = table(&spa_only);
    assert_eq!(
        rows,
        vec![["spa", "20", "1", "1", "1", "0"].map(String::from).to_vec()]
    );
}

#[test]
fn reports_are_byte_identical_across_runs_and_threads() {
    let dir = synthetic(6, 40, 3, false);
    let base = [
        "compare",
        "--perms",
        "150",
        "--resamples",
        "80",
        "--seed",
        "9",
        "--format",
        "json",
    ];
    let a = spa_meta(dir.path(), &base);
    let b = spa_meta(dir.path(), &[&base[..], &["--threads", "1"]].concat());
    let c = spa_meta(dir.path(), &[&base[..], &["--threads", "3"]].concat());
    assert_eq!(stdout(&a), stdout(&b));
    assert_eq!(stdout(&b), stdout(&c));
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["header"]["seed"], 9);
    assert_eq!(v["header"]["permutations"], 150);
    assert_eq!(v["header"]["resamples"], 80);
    assert_eq!(v["comparisons"].as_array().unwrap().len(), 2);
}

#[test]
fn oracle_check_passes_on_small_sets() {
    let dir = synthetic(4, 12, 2, false);
    let o = spa_meta(dir.path(), &["oracle-check", "--perms", "4096"]);
    let out = stdout(&o);
    assert_eq!(header_value(&out, "result"), Some("pass"));
    let (_, rows) = table(&out);
    // humans + 2 metrics, C(4,2) pairs each
    assert_eq!(rows.len(), 18);
}

#[test]
fn oracle_check_rejects_large_sets() {
    let dir = synthetic(3, 30, 1, false);
    let o = spa_meta(dir.path(), &["oracle-check"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn errors_name_the_offending_input() {
    let dir = synthetic(3, 20, 1, false);
    let cases: [(&[&str], &str); 4] = [
        (&["score", "--alpha", "1.5"], "--alpha"),
        (&["score", "--perms", "0"], "--perms"),
        (&["ci", "--metric", "nope", "--trials", "100"], "--metric"),
        (&["stability", "--k", "9"], "--k"),
    ];
    for (args, needle) in cases {
        let o = spa_meta(dir.path(), args);
        assert!(!o.status.success(), "{args:?}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains(needle), "{args:?}: {err}");
    }

    std::fs::write(dir.path().join("metrics/broken.tsv"), "segment_id\tsys0\n").unwrap();
    let o = spa_meta(dir.path(), &["score"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("broken.tsv"));

    let missing = dir.path().join("does-not-exist");
    let o = spa_meta(&missing, &["score"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("does-not-exist"));
}
