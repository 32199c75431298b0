//! UCR-style delimited series files, fold and resample plans, and result
//! records.
//!
//! A series file holds one sample per line: the class label first, then the
//! `m` observations, separated by tabs, commas or runs of whitespace. Labels
//! may be arbitrary integers; they are remapped to `0..c` in ascending order
//! and the originals are kept in [`RawDataset::class_labels`].

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream_rng};
use crate::simgen::SimDataset;

/// Field separator of a series file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delimiter {
    Tab,
    Comma,
    Whitespace,
}

impl Delimiter {
    /// Guesses the separator from the first data line.
    pub fn detect(line: &str) -> Self {
        if line.contains('\t') {
            Delimiter::Tab
        } else if line.contains(',') {
            Delimiter::Comma
        } else {
            Delimiter::Whitespace
        }
    }

    fn split<'a>(self, line: &'a str) -> Box<dyn Iterator<Item = &'a str> + 'a> {
        match self {
            Delimiter::Tab => Box::new(line.split('\t').map(str::trim)),
            Delimiter::Comma => Box::new(line.split(',').map(str::trim)),
            Delimiter::Whitespace => Box::new(line.split_whitespace()),
        }
    }

    fn as_char(self) -> char {
        match self {
            Delimiter::Tab | Delimiter::Whitespace => '\t',
            Delimiter::Comma => ',',
        }
    }
}

/// Sampled series with 0-based class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub name: String,
    /// `N × m`
    pub samples: DMatrix<f64>,
    pub labels: Vec<usize>,
    /// Original label of each class index.
    pub class_labels: Vec<i64>,
}

impl RawDataset {
    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn series_length(&self) -> usize {
        self.samples.ncols()
    }

    pub fn class_count(&self) -> usize {
        self.class_labels.len()
    }

    /// Per-class sample counts.
    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.class_count()];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            samples: self.samples.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_labels: self.class_labels.clone(),
        }
    }
}

impl From<SimDataset> for RawDataset {
    fn from(sim: SimDataset) -> Self {
        let c = sim.labels.iter().max().map_or(0, |m| m + 1);
        Self {
            name: sim.name,
            samples: sim.samples,
            labels: sim.labels,
            class_labels: (1..=c as i64).collect(),
        }
    }
}

struct ParsedRow {
    label: i64,
    values: Vec<f64>,
}

fn format_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_file(path: &Path, delimiter: Option<Delimiter>) -> Result<Vec<ParsedRow>> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    let mut width = None;
    let mut delimiter = delimiter;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let delim = *delimiter.get_or_insert_with(|| Delimiter::detect(&line));
        let mut fields = delim.split(line.trim_end_matches(['\r', '\n']));
        let label_field = fields.next().unwrap_or_default();
        let label = parse_label(label_field)
            .ok_or_else(|| format_error(path, lineno, format!("invalid class label `{label_field}`")))?;
        let values = fields
            .enumerate()
            .map(|(col, f)| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        format_error(
                            path,
                            lineno,
                            format!("field {} is not a finite number: `{f}`", col + 2),
                        )
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        match width {
            None if values.is_empty() => {
                return Err(format_error(path, lineno, "row has a label but no observations"))
            }
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(format_error(
                    path,
                    lineno,
                    format!("expected {w} observations, found {}", values.len()),
                ))
            }
            Some(_) => {}
        }
        rows.push(ParsedRow { label, values });
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput("series file has no data rows"));
    }
    Ok(rows)
}

fn parse_label(field: &str) -> Option<i64> {
    if let Ok(v) = field.parse::<i64>() {
        return Some(v);
    }
    // older archive files write labels as floats, e.g. `1.0000000e+00`
    let v = field.parse::<f64>().ok()?;
    (v.is_finite() && v.fract() == 0.0 && v.abs() < 9.0e15).then_some(v as i64)
}

fn assemble(name: String, rows: &[ParsedRow], class_labels: &[i64]) -> RawDataset {
    let index: BTreeMap<i64, usize> = class_labels.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    let m = rows[0].values.len();
    let mut samples = DMatrix::zeros(rows.len(), m);
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.values.iter().enumerate() {
            samples[(i, j)] = *v;
        }
    }
    RawDataset {
        name,
        samples,
        labels: rows.iter().map(|r| index[&r.label]).collect(),
        class_labels: class_labels.to_vec(),
    }
}

fn sorted_labels<'a>(rows: impl Iterator<Item = &'a ParsedRow>) -> Vec<i64> {
    let mut labels: Vec<i64> = rows.map(|r| r.label).collect();
    labels.sort_unstable();
    labels.dedup();
    labels
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Reads one series file. `delimiter = None` detects it from the first row.
pub fn load_delimited(path: impl AsRef<Path>, delimiter: Option<Delimiter>) -> Result<RawDataset> {
    let path = path.as_ref();
    let rows = parse_file(path, delimiter)?;
    let labels = sorted_labels(rows.iter());
    Ok(assemble(dataset_name(path), &rows, &labels))
}

/// Reads a train/test pair, remapping labels jointly. Returns the combined
/// data set (training rows first) and the number of training rows.
pub fn load_split(
    train: impl AsRef<Path>,
    test: impl AsRef<Path>,
) -> Result<(RawDataset, usize)> {
    let (train, test) = (train.as_ref(), test.as_ref());
    let train_rows = parse_file(train, None)?;
    let test_rows = parse_file(test, None)?;
    let (m_train, m_test) = (train_rows[0].values.len(), test_rows[0].values.len());
    if m_train != m_test {
        return Err(format_error(
            test,
            1,
            format!("series length {m_test} differs from training length {m_train}"),
        ));
    }
    let labels = sorted_labels(train_rows.iter().chain(&test_rows));
    let n_train = train_rows.len();
    let mut rows = train_rows;
    rows.extend(test_rows);
    let name = dataset_name(train)
        .trim_end_matches("_TRAIN")
        .to_string();
    Ok((assemble(name, &rows, &labels), n_train))
}

/// Writes `data` as a series file using the original labels. Values are
/// printed in shortest round-trip form, so reloading is bit-exact.
pub fn write_delimited(data: &RawDataset, path: impl AsRef<Path>, delimiter: Delimiter) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let sep = delimiter.as_char();
    for i in 0..data.len() {
        write!(out, "{}", data.class_labels[data.labels[i]])?;
        for v in data.samples.row(i).iter() {
            write!(out, "{sep}{v:?}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Train/test index sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// How a data set is divided for evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoldPlan {
    /// Stratified `k`-fold cross-validation.
    KFold { k: usize, seed: u64 },
    /// Re-drawn train/test splits preserving the per-class sizes of an
    /// original split; resample 0 is the original split itself.
    Resample { n_resamples: usize, seed: u64 },
}

impl FoldPlan {
    /// `original_train` is required for resampling plans.
    pub fn realize(&self, labels: &[usize], original_train: Option<&[usize]>) -> Result<Vec<Split>> {
        match *self {
            FoldPlan::KFold { k, seed } => Ok(kfold_splits(&make_kfold(labels, k, seed)?)),
            FoldPlan::Resample { n_resamples, seed } => {
                let train = original_train.ok_or_else(|| {
                    Error::Parameter("resampling needs the original training indices".into())
                })?;
                make_resamples(labels, train, n_resamples, seed)
            }
        }
    }
}

fn class_members(labels: &[usize]) -> Vec<Vec<usize>> {
    let c = labels.iter().max().map_or(0, |m| m + 1);
    let mut members = vec![Vec::new(); c];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    members
}

/// Stratified `k`-fold partition of `0..labels.len()`. Each class is
/// shuffled and dealt round-robin, continuing where the previous class
/// stopped, so fold sizes differ by at most one overall and by at most one
/// per class.
pub fn make_kfold(labels: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let n = labels.len();
    if k == 0 || k > n {
        return Err(Error::Parameter(format!(
            "cannot split {n} samples into {k} folds"
        )));
    }
    let mut folds = vec![Vec::new(); k];
    let mut offset = 0;
    for (class, mut idx) in class_members(labels).into_iter().enumerate() {
        idx.shuffle(&mut stream_rng(seed, class as u64));
        let len = idx.len();
        for (j, i) in idx.into_iter().enumerate() {
            folds[(offset + j) % k].push(i);
        }
        offset += len;
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Each fold in turn as the test set, the rest as training.
pub fn kfold_splits(folds: &[Vec<usize>]) -> Vec<Split> {
    (0..folds.len())
        .map(|f| Split {
            train: folds
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, idx)| idx.iter().copied())
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect(),
            test: folds[f].clone(),
        })
        .collect()
}

/// `n_resamples` train/test splits with the same per-class train and test
/// counts as `original_train` and its complement. Resample 0 is the
/// original split; resample `r` draws each class independently from the
/// sub-seed of `r`.
pub fn make_resamples(
    labels: &[usize],
    original_train: &[usize],
    n_resamples: usize,
    seed: u64,
) -> Result<Vec<Split>> {
    let n = labels.len();
    if n_resamples == 0 {
        return Err(Error::Parameter("need at least one resample".into()));
    }
    let mut in_train = vec![false; n];
    for &i in original_train {
        if i >= n || in_train[i] {
            return Err(Error::Parameter(format!(
                "training index {i} is out of range or repeated"
            )));
        }
        in_train[i] = true;
    }
    let original = Split {
        train: (0..n).filter(|&i| in_train[i]).collect(),
        test: (0..n).filter(|&i| !in_train[i]).collect(),
    };
    if original.train.is_empty() || original.test.is_empty() {
        return Err(Error::Parameter("original split must have both train and test rows".into()));
    }
    let members = class_members(labels);
    let train_counts: Vec<usize> = members
        .iter()
        .map(|m| m.iter().filter(|&&i| in_train[i]).count())
        .collect();

    let mut splits = vec![original];
    for r in 1..n_resamples {
        let sub = derive_seed(seed, r as u64);
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (class, idx) in members.iter().enumerate() {
            let mut idx = idx.clone();
            idx.shuffle(&mut stream_rng(sub, class as u64));
            train.extend_from_slice(&idx[..train_counts[class]]);
            test.extend_from_slice(&idx[train_counts[class]..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        splits.push(Split { train, test });
    }
    Ok(splits)
}

pub const RESULTS_HEADER: [&str; 7] = [
    "dataset",
    "method",
    "fold",
    "accuracy",
    "runtime_seconds",
    "seed",
    "config_hash",
];

/// One row of a results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub dataset: String,
    pub method: String,
    /// Fold or resample id, or `summary` for aggregate rows.
    pub fold: String,
    pub accuracy: f64,
    pub runtime_seconds: Option<f64>,
    pub seed: u64,
    pub config_hash: String,
}

/// Appends `records` to the CSV file at `path`, writing the header only
/// when the file is new or empty.
pub fn write_results(records: &[ExperimentRecord], path: impl AsRef<Path>) -> Result<()> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no result records to write"));
    }
    let path = path.as_ref();
    let fresh = std::fs::metadata(path).map_or(true, |m| m.len() == 0);
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if fresh {
        writer.write_record(RESULTS_HEADER)?;
    }
    for r in records {
        writer.serialize(r)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<ExperimentRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != RESULTS_HEADER {
        return Err(Error::Parameter(format!("unexpected results header {header:?}")));
    }
    reader
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Short stable fingerprint of a configuration description.
pub fn config_hash(description: &str) -> String {
    let digest = Sha256::digest(description.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Mean and sample standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Conventional location of the `_TRAIN`/`_TEST` pair for `name` under `dir`.
pub fn archive_paths(dir: impl AsRef<Path>, name: &str) -> Option<(PathBuf, PathBuf)> {
    let dir = dir.as_ref();
    for ext in ["tsv", "txt", "csv", ""] {
        let suffix = if ext.is_empty() { String::new() } else { format!(".{ext}") };
        for base in [dir.join(name), dir.to_path_buf()] {
            let train = base.join(format!("{name}_TRAIN{suffix}"));
            let test = base.join(format!("{name}_TEST{suffix}"));
            if train.is_file() && test.is_file() {
                return Some((train, test));
            }
        }
    }
    None
}
