//! Score matrices and evaluation-set loading.
//!
//! An evaluation set lives in a directory:
//!
//! ```text
//! <evalset>/humans.tsv
//! <evalset>/metrics/<metric_name>.tsv
//! <evalset>/meta.json        (optional)
//! ```
//!
//! Each TSV has a header `segment_id<TAB>sys1<TAB>sys2...` and one row per
//! segment. Cells are decimal numbers or the literal `NA`. `meta.json` maps
//! file names to `{"higher_is_better": bool}`; files not listed default to
//! higher-is-better. Lower-is-better files are negated once, at load time.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Score;

pub const HUMANS_FILE: &str = "humans.tsv";
pub const METRICS_DIR: &str = "metrics";
pub const META_FILE: &str = "meta.json";
const NA: &str = "NA";

/// Systems x segments matrix of segment-level scores, higher is better.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix<T> {
    system_names: Vec<String>,
    segment_ids: Vec<String>,
    // row-major, one row per system
    scores: Vec<T>,
}

impl<T: Score> ScoreMatrix<T> {
    pub fn new(
        system_names: Vec<String>,
        segment_ids: Vec<String>,
        rows: Vec<Vec<T>>,
    ) -> Result<Self> {
        if rows.len() != system_names.len() {
            return Err(Error::InvalidMatrix(format!(
                "{} system names but {} score rows",
                system_names.len(),
                rows.len()
            )));
        }
        let s = segment_ids.len();
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != s) {
            return Err(Error::InvalidMatrix(format!(
                "row {i} has {} scores, expected {s}",
                r.len()
            )));
        }
        Self::from_flat(system_names, segment_ids, rows.concat())
    }

    /// Builds a matrix from row-major scores.
    pub fn from_flat(
        system_names: Vec<String>,
        segment_ids: Vec<String>,
        scores: Vec<T>,
    ) -> Result<Self> {
        if system_names.len() < 2 {
            return Err(Error::InvalidMatrix(format!(
                "need at least 2 systems, got {}",
                system_names.len()
            )));
        }
        if segment_ids.is_empty() {
            return Err(Error::InvalidMatrix("need at least 1 segment".into()));
        }
        if scores.len() != system_names.len() * segment_ids.len() {
            return Err(Error::InvalidMatrix(format!(
                "expected {} scores, got {}",
                system_names.len() * segment_ids.len(),
                scores.len()
            )));
        }
        if let Some(d) = first_duplicate(&system_names) {
            return Err(Error::InvalidMatrix(format!("duplicate system `{d}`")));
        }
        if let Some(d) = first_duplicate(&segment_ids) {
            return Err(Error::InvalidMatrix(format!("duplicate segment `{d}`")));
        }
        Ok(Self {
            system_names,
            segment_ids,
            scores,
        })
    }

    /// Matrix with generated names `sys0..` and `seg0..`. Handy for tests and
    /// synthetic data.
    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let n = rows.len();
        let s = rows.first().map_or(0, Vec::len);
        Self::new(
            (0..n).map(|i| format!("sys{i}")).collect(),
            (0..s).map(|j| format!("seg{j}")).collect(),
            rows,
        )
    }

    pub fn n_systems(&self) -> usize {
        self.system_names.len()
    }

    pub fn n_segments(&self) -> usize {
        self.segment_ids.len()
    }

    pub fn system_names(&self) -> &[String] {
        &self.system_names
    }

    pub fn segment_ids(&self) -> &[String] {
        &self.segment_ids
    }

    pub fn row(&self, system: usize) -> &[T] {
        let s = self.n_segments();
        &self.scores[system * s..(system + 1) * s]
    }

    pub fn get(&self, system: usize, segment: usize) -> T {
        self.scores[system * self.n_segments() + segment]
    }

    pub fn system_index(&self, name: &str) -> Option<usize> {
        self.system_names.iter().position(|n| n == name)
    }

    /// Arithmetic mean of each system's segment scores.
    pub fn system_means(&self) -> Vec<T> {
        system_means(self)
    }

    /// Applies `f` to every score, keeping names.
    pub fn map<U: Score>(&self, f: impl Fn(T) -> U) -> ScoreMatrix<U> {
        ScoreMatrix {
            system_names: self.system_names.clone(),
            segment_ids: self.segment_ids.clone(),
            scores: self.scores.iter().map(|&x| f(x)).collect(),
        }
    }

    /// `scale * x + shift` for every score.
    pub fn affine(&self, scale: T, shift: T) -> Self {
        self.map(|x| scale * x + shift)
    }

    /// Flips orientation (lower-is-better becomes higher-is-better).
    pub fn negated(&self) -> Self {
        self.map(|x| -x)
    }

    /// Keeps only the given systems, in the given order.
    pub fn select_systems(&self, systems: &[usize]) -> Result<Self> {
        let names = systems
            .iter()
            .map(|&i| self.system_names[i].clone())
            .collect();
        let scores = systems
            .iter()
            .flat_map(|&i| self.row(i).iter().copied())
            .collect();
        Self::from_flat(names, self.segment_ids.clone(), scores)
    }

    /// Resamples segment columns (indices may repeat). Segment ids of the
    /// result are `<original>@<position>` so they stay unique.
    pub fn resample_segments(&self, segments: &[usize]) -> Result<Self> {
        let ids = segments
            .iter()
            .enumerate()
            .map(|(pos, &s)| format!("{}@{pos}", self.segment_ids[s]))
            .collect();
        let mut scores = Vec::with_capacity(self.n_systems() * segments.len());
        for i in 0..self.n_systems() {
            let row = self.row(i);
            scores.extend(segments.iter().map(|&s| row[s]));
        }
        Self::from_flat(self.system_names.clone(), ids, scores)
    }

    /// Replaces the scores of one system by those of the same system in
    /// `other`. Used to build swapped metric pairs.
    pub fn with_row_from(&self, system: usize, other: &Self) -> Self {
        let mut out = self.clone();
        let s = self.n_segments();
        out.scores[system * s..(system + 1) * s].copy_from_slice(other.row(system));
        out
    }

    pub fn same_layout<U>(&self, other: &ScoreMatrix<U>) -> bool {
        self.system_names == other.system_names && self.segment_ids == other.segment_ids
    }
}

/// Row means of `m`.
pub fn system_means<T: Score>(m: &ScoreMatrix<T>) -> Vec<T> {
    let s = T::from_usize(m.n_segments()).expect("segment count fits the score type");
    (0..m.n_systems())
        .map(|i| m.row(i).iter().fold(T::zero(), |acc, &x| acc + x) / s)
        .collect()
}

fn first_duplicate(names: &[String]) -> Option<&str> {
    let mut seen = HashSet::with_capacity(names.len());
    names
        .iter()
        .find(|n| !seen.insert(n.as_str()))
        .map(String::as_str)
}

/// Human scores plus any number of metric scores over identical systems and
/// segments.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet<T> {
    pub name: String,
    human: ScoreMatrix<T>,
    metrics: BTreeMap<String, ScoreMatrix<T>>,
}

impl<T: Score> EvalSet<T> {
    pub fn new(
        name: impl Into<String>,
        human: ScoreMatrix<T>,
        metrics: BTreeMap<String, ScoreMatrix<T>>,
    ) -> Result<Self> {
        if metrics.is_empty() {
            return Err(Error::InvalidArgument(
                "an evaluation set needs at least one metric".into(),
            ));
        }
        for (name, m) in &metrics {
            if !m.same_layout(&human) {
                return Err(Error::DimensionMismatch(format!(
                    "metric `{name}` is not aligned with the human scores"
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            human,
            metrics,
        })
    }

    pub fn human(&self) -> &ScoreMatrix<T> {
        &self.human
    }

    pub fn metrics(&self) -> &BTreeMap<String, ScoreMatrix<T>> {
        &self.metrics
    }

    pub fn metric(&self, name: &str) -> Result<&ScoreMatrix<T>> {
        self.metrics
            .get(name)
            .ok_or_else(|| Error::UnknownMetric(name.to_string()))
    }

    pub fn metric_names(&self) -> Vec<&str> {
        self.metrics.keys().map(String::as_str).collect()
    }

    pub fn n_systems(&self) -> usize {
        self.human.n_systems()
    }

    pub fn n_segments(&self) -> usize {
        self.human.n_segments()
    }

    /// Resamples segment columns of every matrix with the same indices.
    pub fn resample_segments(&self, segments: &[usize]) -> Result<Self> {
        let human = self.human.resample_segments(segments)?;
        let metrics = self
            .metrics
            .iter()
            .map(|(k, m)| Ok((k.clone(), m.resample_segments(segments)?)))
            .collect::<Result<_>>()?;
        Self::new(self.name.clone(), human, metrics)
    }

    /// Keeps only the named metrics.
    pub fn with_metrics(&self, names: &[&str]) -> Result<Self> {
        let metrics = names
            .iter()
            .map(|&n| Ok((n.to_string(), self.metric(n)?.clone())))
            .collect::<Result<_>>()?;
        Self::new(self.name.clone(), self.human.clone(), metrics)
    }
}

/// Orientation of one score file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Orientation {
    pub higher_is_better: bool,
}

impl Default for Orientation {
    fn default() -> Self {
        Self {
            higher_is_better: true,
        }
    }
}

/// File name (`humans.tsv`, `metrics/<name>.tsv` or bare `<name>.tsv`) to
/// orientation.
pub type OrientationMap = BTreeMap<String, Orientation>;

fn orientation_for(map: &OrientationMap, rel: &str, file_name: &str) -> Orientation {
    map.get(rel)
        .or_else(|| map.get(file_name))
        .copied()
        .unwrap_or_default()
}

/// Reads `meta.json` if present.
pub fn read_orientation_map(dir: &Path) -> Result<OrientationMap> {
    let path = dir.join(META_FILE);
    if !path.exists() {
        return Ok(OrientationMap::new());
    }
    let text = fs::read_to_string(&path).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path,
        line: e.line() as u64,
        msg: e.to_string(),
    })
}

/// Loads an evaluation set, taking orientations from `meta.json`.
pub fn load_eval_set(dir: impl AsRef<Path>) -> Result<EvalSet<f64>> {
    load_eval_set_with(dir, &OrientationMap::new())
}

/// Loads an evaluation set. Entries in `overrides` take precedence over
/// `meta.json`.
pub fn load_eval_set_with(
    dir: impl AsRef<Path>,
    overrides: &OrientationMap,
) -> Result<EvalSet<f64>> {
    let dir = dir.as_ref();
    let mut orientation = read_orientation_map(dir)?;
    orientation.extend(overrides.iter().map(|(k, v)| (k.clone(), *v)));

    let human_path = dir.join(HUMANS_FILE);
    let human_raw = read_tsv(&human_path)?;
    check_unique(&human_raw)?;
    let keep: Vec<usize> = human_raw
        .rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.cells.iter().all(Option::is_some))
        .map(|(k, _)| k)
        .collect();
    let systems = human_raw.systems.clone();
    let segment_ids: Vec<String> = keep
        .iter()
        .map(|&k| human_raw.rows[k].segment_id.clone())
        .collect();
    let flip = !orientation_for(&orientation, HUMANS_FILE, HUMANS_FILE).higher_is_better;
    let human = build_matrix(&systems, &segment_ids, &human_path, |i, s| {
        let v = human_raw.rows[keep[s]].cells[i].expect("complete-case row");
        Ok(if flip { -v } else { v })
    })?;

    let all_human_segments: HashSet<&str> = human_raw
        .rows
        .iter()
        .map(|r| r.segment_id.as_str())
        .collect();

    let metrics_dir = dir.join(METRICS_DIR);
    let mut metric_files: Vec<PathBuf> = fs::read_dir(&metrics_dir)
        .map_err(|source| Error::Io {
            path: metrics_dir.clone(),
            source,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "tsv"))
        .collect();
    metric_files.sort();
    if metric_files.is_empty() {
        return Err(Error::Format {
            path: metrics_dir,
            msg: "no metric files (*.tsv) found".into(),
        });
    }

    let mut metrics = BTreeMap::new();
    for path in metric_files {
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::Format {
                path: path.clone(),
                msg: "metric file name is not valid UTF-8".into(),
            })?
            .to_string();
        let file_name = format!("{name}.tsv");
        let rel = format!("{METRICS_DIR}/{file_name}");
        let flip = !orientation_for(&orientation, &rel, &file_name).higher_is_better;

        let raw = read_tsv(&path)?;
        check_unique(&raw)?;
        let column_of = align_columns(&systems, &raw, &path)?;
        let row_of: HashMap<&str, usize> = raw
            .rows
            .iter()
            .enumerate()
            .map(|(k, r)| (r.segment_id.as_str(), k))
            .collect();
        if let Some(r) = raw
            .rows
            .iter()
            .find(|r| !all_human_segments.contains(r.segment_id.as_str()))
        {
            return Err(Error::Parse {
                path: path.clone(),
                line: r.line,
                msg: format!(
                    "segment `{}` does not appear in {HUMANS_FILE}",
                    r.segment_id
                ),
            });
        }
        let m = build_matrix(&systems, &segment_ids, &path, |i, s| {
            let seg = &segment_ids[s];
            let k = *row_of.get(seg.as_str()).ok_or_else(|| Error::Format {
                path: path.clone(),
                msg: format!("missing segment `{seg}`"),
            })?;
            let row = &raw.rows[k];
            let v = row.cells[column_of[i]].ok_or_else(|| Error::Parse {
                path: path.clone(),
                line: row.line,
                msg: format!("`NA` for system `{}` on segment `{seg}`", systems[i]),
            })?;
            Ok(if flip { -v } else { v })
        })?;
        metrics.insert(name, m);
    }

    let name = dir
        .file_name()
        .and_then(|s| s.to_str())
        .unwrap_or("evalset")
        .to_string();
    EvalSet::new(name, human, metrics)
}

fn build_matrix(
    systems: &[String],
    segment_ids: &[String],
    path: &Path,
    cell: impl Fn(usize, usize) -> Result<f64>,
) -> Result<ScoreMatrix<f64>> {
    if systems.len() < 2 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!("need at least 2 systems, got {}", systems.len()),
        });
    }
    if segment_ids.is_empty() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: "no complete segments left after dropping `NA` rows".into(),
        });
    }
    let mut scores = Vec::with_capacity(systems.len() * segment_ids.len());
    for i in 0..systems.len() {
        for s in 0..segment_ids.len() {
            scores.push(cell(i, s)?);
        }
    }
    ScoreMatrix::from_flat(systems.to_vec(), segment_ids.to_vec(), scores)
}

/// For each human system, the column index in `raw`.
fn align_columns(systems: &[String], raw: &RawTable, path: &Path) -> Result<Vec<usize>> {
    if raw.systems.len() != systems.len() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!(
                "header lists {} systems, {HUMANS_FILE} lists {}",
                raw.systems.len(),
                systems.len()
            ),
        });
    }
    systems
        .iter()
        .map(|s| {
            raw.systems
                .iter()
                .position(|r| r == s)
                .ok_or_else(|| Error::Format {
                    path: path.to_path_buf(),
                    msg: format!("header is missing system `{s}`"),
                })
        })
        .collect()
}

struct RawRow {
    segment_id: String,
    cells: Vec<Option<f64>>,
    line: u64,
}

struct RawTable {
    path: PathBuf,
    systems: Vec<String>,
    rows: Vec<RawRow>,
}

fn check_unique(raw: &RawTable) -> Result<()> {
    if let Some(d) = first_duplicate(&raw.systems) {
        return Err(Error::Format {
            path: raw.path.clone(),
            msg: format!("duplicate system `{d}` in header"),
        });
    }
    let mut seen = HashSet::new();
    for r in &raw.rows {
        if !seen.insert(r.segment_id.as_str()) {
            return Err(Error::Parse {
                path: raw.path.clone(),
                line: r.line,
                msg: format!("duplicate segment id `{}`", r.segment_id),
            });
        }
    }
    Ok(())
}

fn read_tsv(path: &Path) -> Result<RawTable> {
    let file = fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .has_headers(true)
        .from_reader(file);

    let csv_err = |e: csv::Error| {
        let line = e.position().map_or(0, |p| p.line());
        Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: e.to_string(),
        }
    };

    let header = reader.headers().map_err(csv_err)?.clone();
    match header.get(0) {
        Some("segment_id") => {}
        other => {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                msg: format!(
                    "first header cell must be `segment_id`, found `{}`",
                    other.unwrap_or("")
                ),
            })
        }
    }
    let systems: Vec<String> = header.iter().skip(1).map(str::to_string).collect();

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        let segment_id = record.get(0).unwrap_or_default().to_string();
        let cells = record
            .iter()
            .skip(1)
            .zip(&systems)
            .map(|(cell, system)| {
                parse_cell(cell).map_err(|msg| Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    msg: format!("system `{system}`: {msg}"),
                })
            })
            .collect::<Result<_>>()?;
        rows.push(RawRow {
            segment_id,
            cells,
            line,
        });
    }
    Ok(RawTable {
        path: path.to_path_buf(),
        systems,
        rows,
    })
}

fn parse_cell(cell: &str) -> std::result::Result<Option<f64>, String> {
    if cell == NA {
        return Ok(None);
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(format!("`{cell}` is not a decimal number")),
    }
}

/// Writes `eval` in the directory layout read by [`load_eval_set`]. Scores are
/// written already oriented, so no `meta.json` is emitted.
pub fn write_eval_set(eval: &EvalSet<f64>, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let metrics_dir = dir.join(METRICS_DIR);
    fs::create_dir_all(&metrics_dir).map_err(|source| Error::Io {
        path: metrics_dir.clone(),
        source,
    })?;
    write_tsv(eval.human(), &dir.join(HUMANS_FILE))?;
    for (name, m) in eval.metrics() {
        write_tsv(m, &metrics_dir.join(format!("{name}.tsv")))?;
    }
    Ok(())
}

/// Writes one matrix as a score TSV.
pub fn write_tsv(m: &ScoreMatrix<f64>, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("segment_id");
    for s in m.system_names() {
        out.push('\t');
        out.push_str(s);
    }
    out.push('\n');
    for (s, id) in m.segment_ids().iter().enumerate() {
        out.push_str(id);
        for i in 0..m.n_systems() {
            out.push('\t');
            // `{}` on f64 is the shortest representation that round-trips.
            out.push_str(&format!("{}", m.get(i, s)));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
