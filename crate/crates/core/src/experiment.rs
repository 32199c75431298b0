//! Evaluation protocols: stratified cross-validation, resampled train/test
//! benchmarks and repeated simulation studies.

use std::sync::Arc;
use std::time::Instant;

use crate::basis::{BasisSystem, Interval};
use crate::dataio::{config_hash, make_kfold, make_resamples, kfold_splits, mean_sd, ExperimentRecord, RawDataset, Split};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fdata::{smooth_with, FunctionalDataSet};
use crate::model::{fit_with, predict_batch_with, BatchPrediction, FcpcaModel, ModelConfig};
use crate::rng::derive_seed;
use crate::simgen::{simulate, ModelId, SimSpec};

pub const DEFAULT_N_BASIS: usize = 20;
pub const DEFAULT_ORDER: usize = 6;
pub const METHOD_NAME: &str = "fcpca";

/// Everything that determines how raw series become predictions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    /// Upper bound on the basis size; the basis never exceeds the series
    /// length.
    pub n_basis: usize,
    pub order: usize,
    pub model: ModelConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            n_basis: DEFAULT_N_BASIS,
            order: DEFAULT_ORDER,
            model: ModelConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// The basis used for series of length `m` on `[0, 1]`.
    pub fn basis_for(&self, m: usize) -> Result<Arc<BasisSystem>> {
        Ok(Arc::new(BasisSystem::bspline(
            self.n_basis.min(m),
            self.order,
            Interval::default(),
        )?))
    }

    /// Canonical text form, used for the configuration hash.
    pub fn describe(&self) -> String {
        format!(
            "n_basis={};order={};threshold={:?};priors={};zero_tol={:?}",
            self.n_basis, self.order, self.model.var_threshold, self.model.priors, self.model.zero_tol
        )
    }

    pub fn hash(&self) -> String {
        config_hash(&self.describe())
    }
}

/// Smooths raw series observed on the equally spaced grid of `[0, 1]`.
pub fn to_functional(raw: &RawDataset, config: &PipelineConfig, exec: Execution) -> Result<FunctionalDataSet> {
    let m = raw.series_length();
    let basis = config.basis_for(m)?;
    let grid = Interval::default().grid(m);
    smooth_with(&raw.samples, &grid, &basis, raw.labels.clone(), exec)
}

/// Smooths and fits raw labelled series. The model remembers the series
/// length and the original class labels.
pub fn fit_raw(raw: &RawDataset, config: &PipelineConfig, exec: Execution) -> Result<FcpcaModel> {
    let data = to_functional(raw, config, exec)?;
    let mut model = fit_with(&data, &config.model, exec)?;
    model.class_labels = raw.class_labels.clone();
    model.series_length = Some(raw.series_length());
    Ok(model)
}

/// Classifies raw series with a model from [`fit_raw`]. Labels in `raw`
/// are matched to the model's classes by their original values; accuracy
/// is reported only when every label is known to the model.
pub fn predict_raw(model: &FcpcaModel, raw: &RawDataset, exec: Execution) -> Result<BatchPrediction> {
    let m = raw.series_length();
    if let Some(expected) = model.series_length {
        if expected != m {
            return Err(Error::Incompatible(format!(
                "model was trained on series of length {expected}, data have length {m}"
            )));
        }
    }
    let grid = Interval::default().grid(m);
    let known: Option<Vec<usize>> = raw
        .labels
        .iter()
        .map(|&l| {
            let original = raw.class_labels[l];
            model.class_labels.iter().position(|&c| c == original)
        })
        .collect();
    let data = smooth_with(&raw.samples, &grid, &model.basis, known.unwrap_or_default(), exec)?;
    predict_batch_with(model, &data, exec)
}

/// Accuracy and wall time of one train/test split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitOutcome {
    pub accuracy: f64,
    pub runtime_seconds: f64,
}

pub fn evaluate_split(
    data: &FunctionalDataSet,
    split: &Split,
    config: &ModelConfig,
    exec: Execution,
) -> Result<SplitOutcome> {
    let start = Instant::now();
    let train = data.subset(&split.train);
    let test = data.subset(&split.test);
    let model = fit_with(&train, config, exec)?;
    let batch = predict_batch_with(&model, &test, exec)?;
    Ok(SplitOutcome {
        accuracy: batch.accuracy.expect("test split is labelled"),
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Per-split outcomes of one protocol run, in split order.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub dataset: String,
    pub seed: u64,
    pub outcomes: Vec<SplitOutcome>,
    pub config_hash: String,
}

impl EvalReport {
    pub fn accuracies(&self) -> Vec<f64> {
        self.outcomes.iter().map(|o| o.accuracy).collect()
    }

    pub fn mean_accuracy(&self) -> f64 {
        mean_sd(&self.accuracies()).0
    }

    pub fn sd_accuracy(&self) -> f64 {
        mean_sd(&self.accuracies()).1
    }

    /// One record per split plus a trailing `summary` row with the mean
    /// accuracy and total runtime. With `timing = false` runtimes are left
    /// blank so repeated runs produce identical files.
    pub fn records(&self, timing: bool) -> Vec<ExperimentRecord> {
        let record = |fold: String, accuracy: f64, runtime: f64| ExperimentRecord {
            dataset: self.dataset.clone(),
            method: METHOD_NAME.to_string(),
            fold,
            accuracy,
            runtime_seconds: timing.then_some(runtime),
            seed: self.seed,
            config_hash: self.config_hash.clone(),
        };
        let mut rows: Vec<ExperimentRecord> = self
            .outcomes
            .iter()
            .enumerate()
            .map(|(i, o)| record(i.to_string(), o.accuracy, o.runtime_seconds))
            .collect();
        let total: f64 = self.outcomes.iter().map(|o| o.runtime_seconds).sum();
        rows.push(record("summary".into(), self.mean_accuracy(), total));
        rows
    }

    /// `mean (sd)` to three decimals.
    pub fn summary(&self) -> String {
        format!("{:.3} ({:.2})", self.mean_accuracy(), self.sd_accuracy())
    }
}

fn run_splits(
    raw: &RawDataset,
    splits: &[Split],
    config: &PipelineConfig,
    seed: u64,
    exec: Execution,
) -> Result<EvalReport> {
    let data = to_functional(raw, config, exec)?;
    let inner = if exec.is_parallel() {
        Execution::Sequential
    } else {
        exec
    };
    let outcomes = exec.try_map(splits.len(), |i| {
        evaluate_split(&data, &splits[i], &config.model, inner).map_err(|e| match e {
            Error::InsufficientClassData { class, needed, found } => Error::Parameter(format!(
                "{} split {i}: class {class} has {found} training curves, need {needed}",
                raw.name
            )),
            other => other,
        })
    })?;
    Ok(EvalReport {
        dataset: raw.name.clone(),
        seed,
        outcomes,
        config_hash: config.hash(),
    })
}

/// Stratified `k`-fold cross-validation.
pub fn cross_validate(
    raw: &RawDataset,
    config: &PipelineConfig,
    k: usize,
    seed: u64,
    exec: Execution,
) -> Result<EvalReport> {
    if k < 2 {
        return Err(Error::Parameter(format!("cross-validation needs k >= 2, got {k}")));
    }
    let folds = make_kfold(&raw.labels, k, seed)?;
    run_splits(raw, &kfold_splits(&folds), config, seed, exec)
}

/// Resampled benchmark on a data set whose first `n_train` rows form the
/// original training split.
pub fn resample_benchmark(
    raw: &RawDataset,
    n_train: usize,
    config: &PipelineConfig,
    n_resamples: usize,
    seed: u64,
    exec: Execution,
) -> Result<EvalReport> {
    let original: Vec<usize> = (0..n_train).collect();
    let splits = make_resamples(&raw.labels, &original, n_resamples, seed)?;
    run_splits(raw, &splits, config, seed, exec)
}

/// Repeats "simulate, then `k`-fold cross-validate" once per seed. The data
/// of repetition `s` come from seed `s`; its folds from a sub-seed of it.
pub fn simulation_study(
    model: ModelId,
    seeds: &[u64],
    k: usize,
    config: &PipelineConfig,
    exec: Execution,
) -> Result<Vec<EvalReport>> {
    let inner = if exec.is_parallel() {
        Execution::Sequential
    } else {
        exec
    };
    exec.try_map(seeds.len(), |r| {
        let raw: RawDataset = simulate(&SimSpec::new(model, seeds[r]))?.into();
        let mut report = cross_validate(&raw, config, k, derive_seed(seeds[r], 0), inner)?;
        report.seed = seeds[r];
        Ok(report)
    })
}

/// Mean of the per-repetition mean accuracies.
pub fn grand_mean_accuracy(reports: &[EvalReport]) -> f64 {
    let means: Vec<f64> = reports.iter().map(EvalReport::mean_accuracy).collect();
    mean_sd(&means).0
}
