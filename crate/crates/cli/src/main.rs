mod report;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use spa_meta::perm::{exact_pairwise_p_value, MAX_EXACT_SEGMENTS};
use spa_meta::robustness::{BootstrapOptions, MIN_BOOTSTRAP_TRIALS};
use spa_meta::{
    bootstrap_ci, distinct_value_stats, greedy_clusters, load_eval_set, significance_matrix,
    system_ablation_stability, EvalContext, EvalSet, MetaKind,
};

use report::{Header, Report};

#[derive(Debug, Parser)]
#[command(
    name = "spa-meta",
    version,
    about = "Pairwise meta-evaluation of MT metrics (SPA and PA)"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Evaluation-set directory (humans.tsv, metrics/*.tsv, optional meta.json)
    #[arg(long, global = true, value_name = "PATH")]
    evalset: Option<PathBuf>,
    /// Meta-metric(s) to report
    #[arg(long, global = true, value_enum, default_value_t = MetaChoice::Both)]
    meta: MetaChoice,
    /// Permutations B per significance test
    #[arg(long, global = true, default_value_t = 1000, value_name = "B")]
    perms: usize,
    /// Resamples R for metric comparisons
    #[arg(long, global = true, default_value_t = 1000, value_name = "R")]
    resamples: usize,
    /// Trials for ablation and bootstrap
    #[arg(long, global = true, default_value_t = 1000, value_name = "T")]
    trials: usize,
    /// Significance level
    #[arg(long, global = true, default_value_t = 0.05, value_name = "A")]
    alpha: f64,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Tsv)]
    format: Format,
    /// Report file (stdout when absent)
    #[arg(long, short, global = true, value_name = "PATH")]
    output: Option<PathBuf>,
    /// Worker threads (results do not depend on it)
    #[arg(long, global = true, value_name = "INT")]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MetaChoice {
    Spa,
    Pa,
    Both,
}

impl MetaChoice {
    fn kinds(self) -> Vec<MetaKind> {
        match self {
            MetaChoice::Spa => vec![MetaKind::Spa],
            MetaChoice::Pa => vec![MetaKind::Pa],
            MetaChoice::Both => MetaKind::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Tsv,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// SPA, PA and Kendall tau per metric
    Score {
        /// Also emit the per-pair breakdown CSV
        #[arg(long)]
        breakdown: bool,
    },
    /// Pairwise metric significance and clusters
    Compare,
    /// Mean Pearson r of meta-scores under system ablation
    Stability {
        /// Subset sizes (default 2..=N)
        #[arg(long, value_delimiter = ',', value_name = "K,...")]
        k: Vec<usize>,
    },
    /// Bootstrap confidence intervals over segment subsamples
    Ci {
        #[arg(long)]
        metric: String,
        /// Sample sizes (default S/16, S/8, S/4, S/2, S)
        #[arg(long, value_delimiter = ',', value_name = "M,...")]
        sizes: Vec<usize>,
    },
    /// Cross-check Monte Carlo p-values against exact enumeration
    OracleCheck {
        #[arg(long, default_value_t = 0.03)]
        tolerance: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn validate(c: &Common) -> Result<()> {
    for (flag, v) in [
        ("--perms", c.perms),
        ("--resamples", c.resamples),
        ("--trials", c.trials),
    ] {
        if v == 0 {
            bail!("{flag}: must be at least 1");
        }
    }
    if !(c.alpha > 0.0 && c.alpha < 1.0) {
        bail!("--alpha: must be in (0, 1), got {}", c.alpha);
    }
    if c.threads == Some(0) {
        bail!("--threads: must be at least 1");
    }
    Ok(())
}

/// Returns `Ok(false)` when the command ran but its check failed.
fn run(cli: &Cli) -> Result<bool> {
    let c = &cli.common;
    validate(c)?;
    if let Some(n) = c.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("--threads: cannot start thread pool")?;
    }
    let dir = c.evalset.as_deref().context("--evalset: required")?;
    let eval = load_eval_set(dir).with_context(|| format!("--evalset {}", dir.display()))?;
    let header = |command: &'static str| Header::new(command, &eval, c);

    let (report, ok) = match &cli.command {
        Command::Score { breakdown } => (score(&eval, c, header("score"), *breakdown)?, true),
        Command::Compare => (compare(&eval, c, header("compare"))?, true),
        Command::Stability { k } => (stability(&eval, c, header("stability"), k)?, true),
        Command::Ci { metric, sizes } => (ci(&eval, c, header("ci"), metric, sizes)?, true),
        Command::OracleCheck { tolerance } => {
            oracle_check(&eval, c, header("oracle-check"), *tolerance)?
        }
    };
    emit(&report, c)?;
    Ok(ok)
}

fn emit(report: &Report, c: &Common) -> Result<()> {
    let (body, breakdown) = report.render(c.format)?;
    match &c.output {
        Some(path) => {
            fs::write(path, body).with_context(|| format!("--output {}", path.display()))?;
            if let Some(csv) = breakdown {
                let side = breakdown_path(path);
                fs::write(&side, csv).with_context(|| format!("--output {}", side.display()))?;
            }
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(body.as_bytes())?;
            if let Some(csv) = breakdown {
                writeln!(out)?;
                out.write_all(csv.as_bytes())?;
            }
        }
    }
    Ok(())
}

fn breakdown_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".breakdown.csv");
    output.with_file_name(name)
}

fn score(eval: &EvalSet<f64>, c: &Common, header: Header, breakdown: bool) -> Result<Report> {
    let ctx = EvalContext::new(eval, c.seed, c.perms)?;
    let mut scores = ctx.meta_scores()?;
    let key = if c.meta == MetaChoice::Pa {
        MetaKind::Pa
    } else {
        MetaKind::Spa
    };
    scores.sort_by(|a, b| {
        b.get(key)
            .total_cmp(&a.get(key))
            .then_with(|| a.metric_name.cmp(&b.metric_name))
    });
    let distinct = distinct_value_stats(&scores)?;
    let pairs = if breakdown {
        let ph = &ctx.human().p_values;
        let mut rows = Vec::new();
        for s in &scores {
            let pm = &ctx.metric(&s.metric_name)?.p_values;
            rows.push((
                s.metric_name.clone(),
                spa_meta::meta::pair_breakdown(ph, pm)?,
            ));
        }
        Some(rows)
    } else {
        None
    };
    Ok(Report::Score {
        header,
        sorted_by: key,
        distinct,
        scores,
        breakdown: pairs,
        systems: eval.human().system_names().to_vec(),
    })
}

fn compare(eval: &EvalSet<f64>, c: &Common, header: Header) -> Result<Report> {
    let names = eval.metric_names();
    if names.len() < 2 {
        bail!(
            "--evalset {}: compare needs at least 2 metrics, found {}",
            eval.name,
            names.len()
        );
    }
    let ctx = EvalContext::new(eval, c.seed, c.perms)?;
    let mut sections = Vec::new();
    for kind in c.meta.kinds() {
        let sig = significance_matrix(&ctx, &names, kind, c.resamples, c.alpha, c.seed)?;
        let clusters = greedy_clusters(&sig)?;
        sections.push((sig, clusters));
    }
    Ok(Report::Compare { header, sections })
}

fn stability(eval: &EvalSet<f64>, c: &Common, header: Header, k: &[usize]) -> Result<Report> {
    let n = eval.n_systems();
    let ks: Vec<usize> = if k.is_empty() {
        (2..=n).collect()
    } else {
        k.to_vec()
    };
    if let Some(bad) = ks.iter().find(|&&k| k < 2 || k > n) {
        bail!("--k: {bad} outside [2, {n}]");
    }
    let ctx = EvalContext::new(eval, c.seed, c.perms)?;
    let mut rows = Vec::new();
    for &k in &ks {
        for kind in c.meta.kinds() {
            rows.push(system_ablation_stability(&ctx, kind, k, c.trials, c.seed)?);
        }
    }
    Ok(Report::Stability { header, rows })
}

fn default_sizes(s: usize) -> Vec<usize> {
    let mut sizes: Vec<usize> = [16, 8, 4, 2, 1].iter().map(|d| (s / d).max(1)).collect();
    sizes.dedup();
    sizes
}

fn ci(
    eval: &EvalSet<f64>,
    c: &Common,
    header: Header,
    metric: &str,
    sizes: &[usize],
) -> Result<Report> {
    eval.metric(metric)
        .with_context(|| format!("--metric {metric}"))?;
    let s = eval.n_segments();
    let sizes = if sizes.is_empty() {
        default_sizes(s)
    } else {
        sizes.to_vec()
    };
    if let Some(bad) = sizes.iter().find(|&&m| m == 0 || m > s) {
        bail!("--sizes: {bad} outside [1, {s}]");
    }
    if c.trials < MIN_BOOTSTRAP_TRIALS {
        bail!(
            "--trials: bootstrap needs at least {MIN_BOOTSTRAP_TRIALS}, got {}",
            c.trials
        );
    }
    let opts = BootstrapOptions {
        sample_sizes: sizes,
        trials: c.trials,
        permutations: c.perms,
        seed: c.seed,
        allow_oversample: false,
    };
    let rows = bootstrap_ci(eval, metric, &c.meta.kinds(), &opts)?;
    Ok(Report::Ci {
        header,
        metric: metric.to_string(),
        rows,
    })
}

fn oracle_check(
    eval: &EvalSet<f64>,
    c: &Common,
    header: Header,
    tolerance: f64,
) -> Result<(Report, bool)> {
    let s = eval.n_segments();
    if s > MAX_EXACT_SEGMENTS {
        bail!(
            "--evalset {}: exact enumeration supports at most {MAX_EXACT_SEGMENTS} segments, found {s}",
            eval.name
        );
    }
    if tolerance.is_nan() || tolerance < 0.0 {
        bail!("--tolerance: must be non-negative, got {tolerance}");
    }
    let ctx = EvalContext::new(eval, c.seed, c.perms)?;
    let mut sets = vec![(
        spa_meta::data::HUMANS_FILE
            .trim_end_matches(".tsv")
            .to_string(),
        eval.human(),
        &ctx.human().p_values,
    )];
    for name in eval.metric_names() {
        sets.push((
            name.to_string(),
            eval.metric(name)?,
            &ctx.metric(name)?.p_values,
        ));
    }
    let systems = eval.human().system_names();
    let mut rows = Vec::new();
    for (label, m, p) in sets {
        for i in 0..eval.n_systems() {
            for j in i + 1..eval.n_systems() {
                let exact = exact_pairwise_p_value(m, i, j)?;
                rows.push(report::OracleRow {
                    matrix: label.clone(),
                    system_i: systems[i].clone(),
                    system_j: systems[j].clone(),
                    monte_carlo: p.get(i, j),
                    exact,
                    abs_diff: (p.get(i, j) - exact).abs(),
                });
            }
        }
    }
    let max_diff = rows.iter().map(|r| r.abs_diff).fold(0.0, f64::max);
    let pass = max_diff <= tolerance;
    Ok((
        Report::Oracle {
            header,
            tolerance,
            max_diff,
            pass,
            rows,
        },
        pass,
    ))
}
