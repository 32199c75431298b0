//! The classwise subspace classifier.
//!
//! Training builds one subspace per class: the class's leading functional
//! principal components, augmented by the grand-mean-minus-class-mean
//! differences of the first `c - 1` classes and orthonormalised. Every
//! training curve is projected (after subtracting the class mean) into each
//! subspace, and a linear discriminant with pooled covariance is estimated
//! there. A new curve is scored in every subspace; the subspace with the most
//! confident posterior decides the label.

use std::io::{Read, Write};
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSystem, FunctionalDatum};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fdata::FunctionalDataSet;
use crate::fpca::{column_mean, fpca, symmetrize};
use crate::orthonorm::{gram_schmidt_indexed, DEFAULT_ZERO_TOL};

/// Initial ridge on the pooled covariance, relative to its mean variance.
pub const COV_RIDGE: f64 = 1e-8;
/// Ridge used when the first one leaves the covariance too ill-conditioned.
pub const COV_RIDGE_FALLBACK: f64 = 1e-4;
/// Condition number that triggers the fallback ridge.
pub const COV_MAX_CONDITION: f64 = 1e10;

const MODEL_FORMAT: &str = "fcpca-model";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorMode {
    #[default]
    Equal,
    /// Class frequencies in the training set.
    Empirical,
}

impl std::str::FromStr for PriorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "equal" => Ok(PriorMode::Equal),
            "empirical" => Ok(PriorMode::Empirical),
            other => Err(Error::Parameter(format!(
                "unknown prior mode `{other}` (expected `equal` or `empirical`)"
            ))),
        }
    }
}

impl std::fmt::Display for PriorMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PriorMode::Equal => "equal",
            PriorMode::Empirical => "empirical",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Share of within-class variance the retained components must explain.
    pub var_threshold: f64,
    pub priors: PriorMode,
    /// Relative tolerance for discarding zero functions in Gram-Schmidt.
    pub zero_tol: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            var_threshold: 0.9,
            priors: PriorMode::Equal,
            zero_tol: DEFAULT_ZERO_TOL,
        }
    }
}

/// One class's feature subspace and the discriminant fitted inside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subspace {
    pub class_index: usize,
    pub class_mean: FunctionalDatum,
    /// `d × K` orthonormal feature functions; the first `n_components` rows
    /// are the class's principal components.
    pub features: DMatrix<f64>,
    pub n_components: usize,
    /// `c × d`, row `ℓ` is the mean projection of class `ℓ`.
    pub lda_means: DMatrix<f64>,
    /// `d × d` pooled within-class covariance (regularised).
    pub lda_pooled_cov: DMatrix<f64>,
    /// Inverse of `lda_pooled_cov`.
    pub lda_precision: DMatrix<f64>,
}

impl Subspace {
    pub fn dim(&self) -> usize {
        self.features.nrows()
    }

    /// Coordinates `⟨x - μ̂_i, e⟩` of a curve in this subspace.
    pub fn project(&self, basis: &BasisSystem, x: &FunctionalDatum) -> Result<DVector<f64>> {
        basis.check_len(x.len())?;
        let centered = &x.coeffs - &self.class_mean.coeffs;
        Ok(&self.features * (basis.gram() * centered))
    }

    fn project_rows(&self, basis: &BasisSystem, coeffs: &DMatrix<f64>) -> DMatrix<f64> {
        let mut centered = coeffs.clone();
        for mut row in centered.row_iter_mut() {
            row -= self.class_mean.coeffs.transpose();
        }
        centered * basis.gram() * self.features.transpose()
    }
}

/// A trained classifier. Immutable once fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcpcaModel {
    pub basis: Arc<BasisSystem>,
    pub grand_mean: FunctionalDatum,
    pub subspaces: Vec<Subspace>,
    pub priors: Vec<f64>,
    pub config: ModelConfig,
    /// External label of each class index, as found in the training file.
    pub class_labels: Vec<i64>,
    /// Length of the sampled series the model was trained on, when it was
    /// trained from raw series.
    pub series_length: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub winning_subspace: usize,
    /// `c × c`, row `i` is the class posterior within subspace `i`.
    pub per_subspace_posteriors: DMatrix<f64>,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchPrediction {
    pub predictions: Vec<Prediction>,
    /// Fraction correct, when the batch carries labels.
    pub accuracy: Option<f64>,
}

impl BatchPrediction {
    pub fn labels(&self) -> Vec<usize> {
        self.predictions.iter().map(|p| p.label).collect()
    }
}

impl FcpcaModel {
    pub fn class_count(&self) -> usize {
        self.subspaces.len()
    }

    /// Writes the model as versioned JSON. Floats round-trip exactly.
    pub fn save<W: Write>(&self, writer: W) -> Result<()> {
        let file = ModelFileRef {
            format: MODEL_FORMAT,
            version: MODEL_VERSION,
            model: self,
        };
        serde_json::to_writer_pretty(writer, &file).map_err(|e| Error::ModelFile(e.to_string()))
    }

    pub fn load<R: Read>(reader: R) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_reader(reader).map_err(|e| Error::ModelFile(e.to_string()))?;
        if file.format != MODEL_FORMAT {
            return Err(Error::ModelFile(format!("unexpected format tag `{}`", file.format)));
        }
        if file.version != MODEL_VERSION {
            return Err(Error::ModelFile(format!(
                "unsupported model version {} (this build reads {MODEL_VERSION})",
                file.version
            )));
        }
        file.model.validate()?;
        Ok(file.model)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.save(&mut buf)?;
        Ok(buf)
    }

    fn validate(&self) -> Result<()> {
        let c = self.subspaces.len();
        let k = self.basis.n_basis();
        let bad = |msg: String| Err(Error::ModelFile(msg));
        if c < 2 || self.priors.len() != c || self.class_labels.len() != c {
            return bad(format!(
                "{c} subspaces with {} priors and {} class labels",
                self.priors.len(),
                self.class_labels.len()
            ));
        }
        self.basis.check_len(self.grand_mean.len())?;
        for (i, s) in self.subspaces.iter().enumerate() {
            let d = s.dim();
            if s.class_index != i
                || s.class_mean.len() != k
                || s.features.ncols() != k
                || s.lda_means.shape() != (c, d)
                || s.lda_pooled_cov.shape() != (d, d)
                || s.lda_precision.shape() != (d, d)
            {
                return bad(format!("subspace {i} has inconsistent dimensions"));
            }
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct ModelFileRef<'a> {
    format: &'a str,
    version: u32,
    model: &'a FcpcaModel,
}

#[derive(Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    model: FcpcaModel,
}

/// Trains the classifier on labelled curves.
pub fn fit(train: &FunctionalDataSet, config: &ModelConfig) -> Result<FcpcaModel> {
    fit_with(train, config, Execution::default())
}

pub fn fit_with(
    train: &FunctionalDataSet,
    config: &ModelConfig,
    exec: Execution,
) -> Result<FcpcaModel> {
    if !train.has_labels() {
        return Err(Error::Parameter("training data must be labelled".into()));
    }
    let c = train.class_count();
    if c < 2 {
        return Err(Error::Parameter(format!(
            "need at least two classes, found {c}"
        )));
    }
    let members: Vec<Vec<usize>> = (0..c).map(|i| train.class_indices(i)).collect();
    for (class, idx) in members.iter().enumerate() {
        if idx.len() < 2 {
            return Err(Error::InsufficientClassData {
                class,
                needed: 2,
                found: idx.len(),
            });
        }
    }

    let basis = Arc::clone(train.basis());
    let grand_mean = column_mean(train.coeffs());
    let class_means: Vec<DVector<f64>> = members
        .iter()
        .map(|idx| column_mean(&train.coeffs().select_rows(idx)))
        .collect();
    let mean_differences: Vec<FunctionalDatum> = class_means[..c - 1]
        .iter()
        .map(|m| FunctionalDatum::new(&grand_mean - m))
        .collect();

    let subspaces = exec.try_map(c, |i| {
        let class_data = train.subset(&members[i]);
        let pcs = fpca(&class_data, config.var_threshold)?;
        let q = pcs.n_components();
        let mut candidates: Vec<FunctionalDatum> =
            (0..q).map(|j| pcs.eigenfunction(j)).collect();
        candidates.extend(mean_differences.iter().cloned());
        let ortho = gram_schmidt_indexed(&candidates, &basis, config.zero_tol)?;
        let n_components = ortho.kept.iter().filter(|&&k| k < q).count();
        let d = ortho.functions.len();
        let k = basis.n_basis();
        let mut features = DMatrix::zeros(d, k);
        for (row, f) in ortho.functions.iter().enumerate() {
            features.set_row(row, &f.coeffs.transpose());
        }
        let mut subspace = Subspace {
            class_index: i,
            class_mean: FunctionalDatum::new(class_means[i].clone()),
            features,
            n_components,
            lda_means: DMatrix::zeros(c, d),
            lda_pooled_cov: DMatrix::zeros(d, d),
            lda_precision: DMatrix::zeros(d, d),
        };
        let projected = subspace.project_rows(&basis, train.coeffs());
        let (means, cov) = pooled_lda(&projected, &members);
        let (cov, precision) = regularize(cov)?;
        subspace.lda_means = means;
        subspace.lda_pooled_cov = cov;
        subspace.lda_precision = precision;
        Ok::<_, Error>(subspace)
    })?;

    let n = train.len() as f64;
    let priors = match config.priors {
        PriorMode::Equal => vec![1.0 / c as f64; c],
        PriorMode::Empirical => members.iter().map(|m| m.len() as f64 / n).collect(),
    };

    Ok(FcpcaModel {
        basis,
        grand_mean: FunctionalDatum::new(grand_mean),
        subspaces,
        priors,
        config: *config,
        class_labels: (0..c as i64).collect(),
        series_length: None,
    })
}

/// Class means of the projected rows and the pooled covariance
/// `(1/c) Σ_ℓ (1/(n_ℓ-1)) Σ_{z ∈ ω_ℓ} (z - η̂_ℓ)(z - η̂_ℓ)'`.
fn pooled_lda(z: &DMatrix<f64>, members: &[Vec<usize>]) -> (DMatrix<f64>, DMatrix<f64>) {
    let c = members.len();
    let d = z.ncols();
    let mut means = DMatrix::zeros(c, d);
    let mut pooled = DMatrix::zeros(d, d);
    for (class, idx) in members.iter().enumerate() {
        let rows = z.select_rows(idx);
        let eta = column_mean(&rows);
        means.set_row(class, &eta.transpose());
        let mut centered = rows;
        for mut r in centered.row_iter_mut() {
            r -= eta.transpose();
        }
        pooled += centered.transpose() * centered / (idx.len() - 1) as f64;
    }
    pooled /= c as f64;
    symmetrize(&mut pooled);
    (means, pooled)
}

/// Adds `ε · trace/d · I` (escalating `ε` if needed) and inverts.
fn regularize(mut cov: DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let d = cov.nrows();
    let scale = cov.trace() / d as f64;
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let base = cov.clone();
    for eps in [COV_RIDGE, COV_RIDGE_FALLBACK] {
        cov.copy_from(&base);
        for j in 0..d {
            cov[(j, j)] += eps * scale;
        }
        let eig = SymmetricEigen::new(cov.clone());
        let (lmin, lmax) = (eig.eigenvalues.min(), eig.eigenvalues.max());
        if lmin > 0.0 && lmax / lmin <= COV_MAX_CONDITION {
            break;
        }
    }
    let chol = Cholesky::new(cov.clone()).ok_or_else(|| {
        Error::IllConditioned("pooled covariance is not positive definite".into())
    })?;
    let mut precision = chol.inverse();
    symmetrize(&mut precision);
    Ok((cov, precision))
}

/// Class posteriors of the projection `v` under the subspace's discriminant,
/// `softmax_ℓ(-½ (v-η̂_ℓ)' Σ̂⁻¹ (v-η̂_ℓ) + log π_ℓ)`.
pub fn posterior(v: &DVector<f64>, subspace: &Subspace, priors: &[f64]) -> Result<Vec<f64>> {
    let d = subspace.dim();
    if v.len() != d {
        return Err(Error::Dimension {
            expected: d,
            found: v.len(),
        });
    }
    let c = subspace.lda_means.nrows();
    if priors.len() != c {
        return Err(Error::Dimension {
            expected: c,
            found: priors.len(),
        });
    }
    let scores: Vec<f64> = (0..c)
        .map(|l| {
            let diff = v - subspace.lda_means.row(l).transpose();
            let maha = diff.dot(&(&subspace.lda_precision * &diff));
            -0.5 * maha + priors[l].ln()
        })
        .collect();
    Ok(softmax(&scores))
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the largest entry; ties go to the smallest index.
fn argmax(values: impl IntoIterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// Classifies one curve.
pub fn predict(model: &FcpcaModel, x: &FunctionalDatum) -> Result<Prediction> {
    let c = model.class_count();
    let mut posteriors = DMatrix::zeros(c, c);
    for (i, s) in model.subspaces.iter().enumerate() {
        let v = s.project(&model.basis, x)?;
        let p = posterior(&v, s, &model.priors)?;
        posteriors.set_row(i, &DVector::from_vec(p).transpose());
    }
    let row_max: Vec<(usize, f64)> = (0..c)
        .map(|i| argmax(posteriors.row(i).iter().copied()))
        .collect();
    let (winner, confidence) = argmax(row_max.iter().map(|r| r.1));
    Ok(Prediction {
        label: row_max[winner].0,
        winning_subspace: winner,
        per_subspace_posteriors: posteriors,
        confidence,
    })
}

/// Classifies every curve of `data`; accuracy is reported when labelled.
pub fn predict_batch(model: &FcpcaModel, data: &FunctionalDataSet) -> Result<BatchPrediction> {
    predict_batch_with(model, data, Execution::default())
}

pub fn predict_batch_with(
    model: &FcpcaModel,
    data: &FunctionalDataSet,
    exec: Execution,
) -> Result<BatchPrediction> {
    if data.is_empty() {
        return Err(Error::EmptyInput("nothing to predict"));
    }
    if data.basis().spec() != model.basis.spec() {
        return Err(Error::Incompatible(format!(
            "data basis {:?} differs from model basis {:?}",
            data.basis().spec(),
            model.basis.spec()
        )));
    }
    let predictions = exec.try_map(data.len(), |i| predict(model, &data.curve(i)))?;
    let accuracy = data.has_labels().then(|| {
        let correct = predictions
            .iter()
            .zip(data.labels())
            .filter(|(p, &l)| p.label == l)
            .count();
        correct as f64 / predictions.len() as f64
    });
    Ok(BatchPrediction {
        predictions,
        accuracy,
    })
}
