//! Functional principal component analysis in coefficient space.
//!
//! With centred coefficients `C_c` (`N × K`) and `G = C_c'C_c / (N-1)`, the
//! covariance operator restricted to the basis span is `G M`. Its eigenpairs
//! are recovered from the symmetric matrix `M^{1/2} G M^{1/2}`: a unit
//! eigenvector `u` maps to the eigenfunction with coefficients `M^{-1/2} u`,
//! and these are orthonormal in L².

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::basis::FunctionalDatum;
use crate::error::{Error, Result};
use crate::fdata::FunctionalDataSet;

/// Eigenvalues at or below this fraction of the largest are treated as zero.
pub const EIGENVALUE_CUTOFF: f64 = 1e-10;

/// Result of a functional PCA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpcaResult {
    pub mean: FunctionalDatum,
    /// `q × K`, row `j` holds the coefficients of eigenfunction `f_j`.
    pub eigenfunctions: DMatrix<f64>,
    /// Retained eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// `N × q` scores `ξ_ij = ⟨X_i - μ̂, f_j⟩` of the input curves.
    pub scores: DMatrix<f64>,
    /// Fraction of the total variance carried by the retained components.
    pub retained_fraction: f64,
    /// Sum of all positive eigenvalues, equal to the total centred variance.
    pub total_variance: f64,
}

impl FpcaResult {
    pub fn n_components(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenfunction(&self, j: usize) -> FunctionalDatum {
        FunctionalDatum::new(self.eigenfunctions.row(j).transpose())
    }
}

/// Pointwise mean curve; its coefficients are the column means.
pub fn mean_function(data: &FunctionalDataSet) -> Result<FunctionalDatum> {
    if data.is_empty() {
        return Err(Error::EmptyInput("mean of an empty data set"));
    }
    Ok(FunctionalDatum::new(column_mean(data.coeffs())))
}

pub(crate) fn column_mean(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows() as f64;
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n))
}

/// Functional PCA keeping the fewest leading components whose cumulative
/// share of variance reaches `var_threshold`.
pub fn fpca(data: &FunctionalDataSet, var_threshold: f64) -> Result<FpcaResult> {
    if !(var_threshold > 0.0 && var_threshold <= 1.0) {
        return Err(Error::Parameter(format!(
            "variance threshold must lie in (0, 1], got {var_threshold}"
        )));
    }
    let n = data.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, found: n });
    }
    let basis = data.basis();
    let mean = mean_function(data)?;
    let mut centered = data.coeffs().clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.coeffs.transpose();
    }

    let g = centered.transpose() * &centered / (n - 1) as f64;
    let m_half = basis.gram_sqrt();
    let mut s = m_half * g * m_half;
    symmetrize(&mut s);
    let eig = SymmetricEigen::new(s);

    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let lambda_max = eig.eigenvalues[order[0]];

    let scale: f64 = data
        .coeffs()
        .row_iter()
        .map(|r| basis.bilinear(r.transpose().as_slice(), r.transpose().as_slice()))
        .sum::<f64>()
        / n as f64;
    if lambda_max.is_nan() || lambda_max <= 1e-13 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Degenerate(
            "sample covariance vanishes: every curve equals the mean".into(),
        ));
    }

    let positive: Vec<usize> = order
        .into_iter()
        .filter(|&j| eig.eigenvalues[j] > EIGENVALUE_CUTOFF * lambda_max)
        .take(n - 1)
        .collect();
    let total: f64 = positive.iter().map(|&j| eig.eigenvalues[j]).sum();

    let mut q = positive.len();
    let mut cumulative = 0.0;
    for (idx, &j) in positive.iter().enumerate() {
        cumulative += eig.eigenvalues[j];
        if cumulative / total >= var_threshold {
            q = idx + 1;
            break;
        }
    }
    let retained: f64 = positive[..q].iter().map(|&j| eig.eigenvalues[j]).sum();

    let k = basis.n_basis();
    let m_inv_half = basis.gram_inv_sqrt();
    let mut eigenfunctions = DMatrix::zeros(q, k);
    for (row, &j) in positive[..q].iter().enumerate() {
        let mut f = m_inv_half * eig.eigenvectors.column(j);
        fix_sign(f.as_mut_slice());
        eigenfunctions.set_row(row, &f.transpose());
    }

    let mut result = FpcaResult {
        mean,
        eigenfunctions,
        eigenvalues: positive[..q].iter().map(|&j| eig.eigenvalues[j]).collect(),
        scores: DMatrix::zeros(0, q),
        retained_fraction: (retained / total).min(1.0),
        total_variance: total,
    };
    result.scores = project_scores(data, &result)?;
    Ok(result)
}

/// Scores `⟨X_i - μ̂, f_j⟩` of arbitrary curves against a fitted FPCA.
pub fn project_scores(data: &FunctionalDataSet, result: &FpcaResult) -> Result<DMatrix<f64>> {
    let basis = data.basis();
    basis.check_len(result.mean.len())?;
    basis.check_len(result.eigenfunctions.ncols())?;
    let mut centered = data.coeffs().clone();
    for mut row in centered.row_iter_mut() {
        row -= result.mean.coeffs.transpose();
    }
    Ok(centered * basis.gram() * result.eigenfunctions.transpose())
}

/// Flips `v` so that its entry of largest magnitude (first on ties) is
/// positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}
