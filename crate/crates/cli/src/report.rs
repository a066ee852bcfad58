use std::fmt::Write;

use anyhow::Result;
use serde::Serialize;
use serde_json::{json, Value};
use spa_meta::meta::{DistinctValues, PairBreakdown};
use spa_meta::significance::CLUSTER_WARNING;
use spa_meta::{
    CIResult, ClusterAssignment, EvalSet, MetaKind, MetaScore, MetricSigMatrix, StabilityResult,
};

use crate::{Common, Format};

/// Run metadata written at the top of every report.
#[derive(Debug, Clone, Serialize)]
pub struct Header {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub evalset: String,
    pub systems: usize,
    pub segments: usize,
    pub metrics: usize,
    pub seed: u64,
    pub permutations: usize,
    pub resamples: usize,
    pub trials: usize,
    pub alpha: f64,
    pub meta: Vec<MetaKind>,
}

impl Header {
    pub fn new(command: &'static str, eval: &EvalSet<f64>, c: &Common) -> Self {
        Self {
            tool: "spa-meta",
            version: spa_meta::VERSION,
            command,
            evalset: eval.name.clone(),
            systems: eval.n_systems(),
            segments: eval.n_segments(),
            metrics: eval.metrics().len(),
            seed: c.seed,
            permutations: c.perms,
            resamples: c.resamples,
            trials: c.trials,
            alpha: c.alpha,
            meta: c.meta.kinds(),
        }
    }

    fn tsv(&self, out: &mut String) {
        let meta: Vec<&str> = self.meta.iter().map(|k| k.name()).collect();
        let _ = writeln!(out, "# {} {}", self.tool, self.version);
        for (k, v) in [
            ("command", self.command.to_string()),
            ("evalset", self.evalset.clone()),
            ("systems", self.systems.to_string()),
            ("segments", self.segments.to_string()),
            ("metrics", self.metrics.to_string()),
            ("seed", self.seed.to_string()),
            ("permutations", self.permutations.to_string()),
            ("resamples", self.resamples.to_string()),
            ("trials", self.trials.to_string()),
            ("alpha", self.alpha.to_string()),
            ("meta", meta.join(",")),
        ] {
            let _ = writeln!(out, "# {k}\t{v}");
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleRow {
    pub matrix: String,
    pub system_i: String,
    pub system_j: String,
    pub monte_carlo: f64,
    pub exact: f64,
    pub abs_diff: f64,
}

pub enum Report {
    Score {
        header: Header,
        sorted_by: MetaKind,
        distinct: DistinctValues,
        scores: Vec<MetaScore>,
        breakdown: Option<Vec<(String, Vec<PairBreakdown>)>>,
        systems: Vec<String>,
    },
    Compare {
        header: Header,
        sections: Vec<(MetricSigMatrix, ClusterAssignment)>,
    },
    Stability {
        header: Header,
        rows: Vec<StabilityResult>,
    },
    Ci {
        header: Header,
        metric: String,
        rows: Vec<CIResult>,
    },
    Oracle {
        header: Header,
        tolerance: f64,
        max_diff: f64,
        pass: bool,
        rows: Vec<OracleRow>,
    },
}

fn row(out: &mut String, cells: &[String]) {
    out.push_str(&cells.join("\t"));
    out.push('\n');
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl Report {
    /// The report body plus, for TSV score reports with `--breakdown`, the
    /// per-pair CSV.
    pub fn render(&self, format: Format) -> Result<(String, Option<String>)> {
        Ok(match format {
            Format::Tsv => (self.tsv(), self.breakdown_csv()),
            Format::Json => {
                let mut s = serde_json::to_string_pretty(&self.json()?)?;
                s.push('\n');
                (s, None)
            }
        })
    }

    fn breakdown_csv(&self) -> Option<String> {
        let Report::Score {
            breakdown: Some(rows),
            systems,
            ..
        } = self
        else {
            return None;
        };
        let mut out = String::from("metric,system_i,system_j,p_h,p_m,spa_term,pa_term\n");
        for (metric, pairs) in rows {
            for p in pairs {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    csv_field(metric),
                    csv_field(&systems[p.i]),
                    csv_field(&systems[p.j]),
                    p.p_h,
                    p.p_m,
                    p.spa_term,
                    p.pa_term
                );
            }
        }
        Some(out)
    }

    fn tsv(&self) -> String {
        let mut out = String::new();
        match self {
            Report::Score {
                header,
                sorted_by,
                distinct,
                scores,
                ..
            } => {
                header.tsv(&mut out);
                let _ = writeln!(out, "# sorted_by\t{sorted_by}");
                let _ = writeln!(out, "# distinct_spa\t{}", distinct.spa);
                let _ = writeln!(out, "# distinct_pa\t{}", distinct.pa);
                row(
                    &mut out,
                    &["metric", "spa", "pa", "tau", "concordant", "pairs"].map(String::from),
                );
                for s in scores {
                    row(
                        &mut out,
                        &[
                            s.metric_name.clone(),
                            s.spa.to_string(),
                            s.pa.to_string(),
                            s.tau.to_string(),
                            s.concordant.to_string(),
                            s.pairs.to_string(),
                        ],
                    );
                }
            }
            Report::Compare { header, sections } => {
                header.tsv(&mut out);
                for (sig, clusters) in sections {
                    let _ = writeln!(
                        out,
                        "# significant_{}\t{}",
                        sig.meta,
                        sig.significant_count()
                    );
                    let _ = writeln!(out, "# clusters_{}\t{}", sig.meta, clusters.clusters);
                }
                let _ = writeln!(out, "# warning\t{CLUSTER_WARNING}");
                row(
                    &mut out,
                    &["meta", "rank", "metric", "score"].map(String::from),
                );
                for (sig, clusters) in sections {
                    for (k, (name, rank)) in clusters.ranks.iter().enumerate() {
                        row(
                            &mut out,
                            &[
                                sig.meta.to_string(),
                                rank.to_string(),
                                name.clone(),
                                sig.scores[k].to_string(),
                            ],
                        );
                    }
                }
                out.push('\n');
                row(
                    &mut out,
                    &["meta", "metric_a", "metric_b", "p_value", "significant"].map(String::from),
                );
                for (sig, _) in sections {
                    for r in 0..sig.len() {
                        for c in r + 1..sig.len() {
                            row(
                                &mut out,
                                &[
                                    sig.meta.to_string(),
                                    sig.metric_names[r].clone(),
                                    sig.metric_names[c].clone(),
                                    sig.pvals[r][c].to_string(),
                                    u8::from(sig.is_significant(r, c)).to_string(),
                                ],
                            );
                        }
                    }
                }
            }
            Report::Stability { header, rows } => {
                header.tsv(&mut out);
                row(
                    &mut out,
                    &["meta", "k", "mean_pearson_r", "trials", "degenerate_trials"]
                        .map(String::from),
                );
                for r in rows {
                    row(
                        &mut out,
                        &[
                            r.meta.to_string(),
                            r.systems_kept.to_string(),
                            r.mean_pearson_r.to_string(),
                            r.trials.to_string(),
                            r.degenerate_trials.to_string(),
                        ],
                    );
                }
            }
            Report::Ci {
                header,
                metric,
                rows,
            } => {
                header.tsv(&mut out);
                let _ = writeln!(out, "# metric\t{metric}");
                row(
                    &mut out,
                    &["meta", "sample_size", "lower", "point", "upper", "width"].map(String::from),
                );
                for r in rows {
                    row(
                        &mut out,
                        &[
                            r.meta.to_string(),
                            r.sample_size.to_string(),
                            r.lower.to_string(),
                            r.point.to_string(),
                            r.upper.to_string(),
                            r.width().to_string(),
                        ],
                    );
                }
            }
            Report::Oracle {
                header,
                tolerance,
                max_diff,
                pass,
                rows,
            } => {
                header.tsv(&mut out);
                let _ = writeln!(out, "# tolerance\t{tolerance}");
                let _ = writeln!(out, "# max_abs_diff\t{max_diff}");
                let _ = writeln!(out, "# result\t{}", if *pass { "pass" } else { "fail" });
                row(
                    &mut out,
                    &[
                        "matrix",
                        "system_i",
                        "system_j",
                        "monte_carlo",
                        "exact",
                        "abs_diff",
                    ]
                    .map(String::from),
                );
                for r in rows {
                    row(
                        &mut out,
                        &[
                            r.matrix.clone(),
                            r.system_i.clone(),
                            r.system_j.clone(),
                            r.monte_carlo.to_string(),
                            r.exact.to_string(),
                            r.abs_diff.to_string(),
                        ],
                    );
                }
            }
        }
        out
    }

    fn json(&self) -> Result<Value> {
        Ok(match self {
            Report::Score {
                header,
                sorted_by,
                distinct,
                scores,
                breakdown,
                systems,
            } => {
                let mut v = json!({
                    "header": header,
                    "sorted_by": sorted_by,
                    "distinct": distinct,
                    "scores": scores,
                });
                if let Some(rows) = breakdown {
                    let flat: Vec<Value> = rows
                        .iter()
                        .flat_map(|(metric, pairs)| {
                            pairs.iter().map(move |p| {
                                json!({
                                    "metric": metric,
                                    "system_i": systems[p.i],
                                    "system_j": systems[p.j],
                                    "p_h": p.p_h,
                                    "p_m": p.p_m,
                                    "spa_term": p.spa_term,
                                    "pa_term": p.pa_term,
                                })
                            })
                        })
                        .collect();
                    v["breakdown"] = Value::Array(flat);
                }
                v
            }
            Report::Compare { header, sections } => {
                let comparisons: Vec<Value> = sections
                    .iter()
                    .map(|(sig, clusters)| {
                        json!({
                            "meta": sig.meta,
                            "alpha": sig.alpha,
                            "metric_names": sig.metric_names,
                            "scores": sig.scores,
                            "pvals": sig.pvals,
                            "significant_count": sig.significant_count(),
                            "clusters": clusters.clusters,
                            "ranks": clusters.ranks.iter().map(|(m, r)| json!({"metric": m, "rank": r})).collect::<Vec<_>>(),
                        })
                    })
                    .collect();
                json!({ "header": header, "warning": CLUSTER_WARNING, "comparisons": comparisons })
            }
            Report::Stability { header, rows } => json!({ "header": header, "rows": rows }),
            Report::Ci {
                header,
                metric,
                rows,
            } => {
                let rows: Vec<Value> = rows
                    .iter()
                    .map(|r| {
                        json!({
                            "meta": r.meta,
                            "sample_size": r.sample_size,
                            "lower": r.lower,
                            "point": r.point,
                            "upper": r.upper,
                            "width": r.width(),
                        })
                    })
                    .collect();
                json!({ "header": header, "metric": metric, "rows": rows })
            }
            Report::Oracle {
                header,
                tolerance,
                max_diff,
                pass,
                rows,
            } => json!({
                "header": header,
                "tolerance": tolerance,
                "max_abs_diff": max_diff,
                "pass": pass,
                "rows": rows,
            }),
        })
    }
}
