//! Functional data sets and least-squares smoothing of sampled series onto a
//! B-spline basis.

use std::sync::Arc;

use log::warn;
use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::basis::{BasisSystem, FunctionalDatum};
use crate::error::{Error, Result};
use crate::exec::Execution;

/// Condition number of `Φ'Φ` above which a ridge term is added.
pub const SMOOTH_MAX_CONDITION: f64 = 1e12;
/// Ridge weight relative to `trace(Φ'Φ) / K`.
pub const SMOOTH_RIDGE: f64 = 1e-8;

/// `N` curves on a shared basis, with optional 0-based class labels.
#[derive(Debug, Clone)]
pub struct FunctionalDataSet {
    basis: Arc<BasisSystem>,
    coeffs: DMatrix<f64>,
    labels: Vec<usize>,
}

impl FunctionalDataSet {
    /// `coeffs` is `N × K` with one curve per row. `labels` is either empty
    /// or of length `N`.
    pub fn new(basis: Arc<BasisSystem>, coeffs: DMatrix<f64>, labels: Vec<usize>) -> Result<Self> {
        basis.check_len(coeffs.ncols())?;
        if !labels.is_empty() && labels.len() != coeffs.nrows() {
            return Err(Error::Dimension {
                expected: coeffs.nrows(),
                found: labels.len(),
            });
        }
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("coefficients must be finite".into()));
        }
        Ok(Self {
            basis,
            coeffs,
            labels,
        })
    }

    pub fn basis(&self) -> &Arc<BasisSystem> {
        &self.basis
    }

    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn has_labels(&self) -> bool {
        !self.labels.is_empty()
    }

    pub fn len(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.nrows() == 0
    }

    /// Number of classes, taken as one more than the largest label.
    pub fn class_count(&self) -> usize {
        self.labels.iter().max().map_or(0, |&m| m + 1)
    }

    pub fn curve(&self, i: usize) -> FunctionalDatum {
        FunctionalDatum::new(self.coeffs.row(i).transpose())
    }

    /// Rows `indices` (in that order) as a new data set on the same basis.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let coeffs = self.coeffs.select_rows(indices);
        let labels = if self.labels.is_empty() {
            Vec::new()
        } else {
            indices.iter().map(|&i| self.labels[i]).collect()
        };
        Self {
            basis: Arc::clone(&self.basis),
            coeffs,
            labels,
        }
    }

    /// Indices of the curves labelled `class`.
    pub fn class_indices(&self, class: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == class).then_some(i))
            .collect()
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::Dimension {
                expected: self.len(),
                found: labels.len(),
            });
        }
        self.labels = labels;
        Ok(self)
    }
}

/// Ordinary least-squares projection from a fixed sampling grid onto a
/// basis. The normal-equation factorisation is computed once and shared by
/// every row.
#[derive(Debug, Clone)]
pub struct Smoother {
    basis: Arc<BasisSystem>,
    time_points: Vec<f64>,
    // K × m, maps a sampled series to its coefficient vector
    projector: DMatrix<f64>,
    ridge: f64,
}

impl Smoother {
    pub fn new(basis: Arc<BasisSystem>, time_points: &[f64]) -> Result<Self> {
        let k = basis.n_basis();
        let m = time_points.len();
        if m < k {
            return Err(Error::Underdetermined {
                samples: m,
                n_basis: k,
            });
        }
        if time_points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parameter("time points must be strictly increasing".into()));
        }
        let phi = basis.evaluation_matrix(time_points)?;
        let mut normal = phi.transpose() * &phi;

        let eig = SymmetricEigen::new(normal.clone());
        let (lmin, lmax) = (eig.eigenvalues.min(), eig.eigenvalues.max());
        let mut ridge = 0.0;
        if lmin <= 0.0 || lmax / lmin > SMOOTH_MAX_CONDITION {
            ridge = SMOOTH_RIDGE * normal.trace() / k as f64;
            warn!(
                "basis evaluation matrix is ill-conditioned (eigenvalues {lmin:e}..{lmax:e}); \
                 adding ridge {ridge:e}"
            );
            for j in 0..k {
                normal[(j, j)] += ridge;
            }
        }
        let chol = Cholesky::new(normal).ok_or_else(|| {
            Error::IllConditioned("normal equations are singular after ridge regularisation".into())
        })?;
        let projector = chol.solve(&phi.transpose());
        if projector.iter().any(|v| !v.is_finite()) {
            return Err(Error::IllConditioned("non-finite least-squares projector".into()));
        }
        Ok(Self {
            basis,
            time_points: time_points.to_vec(),
            projector,
            ridge,
        })
    }

    pub fn basis(&self) -> &Arc<BasisSystem> {
        &self.basis
    }

    pub fn time_points(&self) -> &[f64] {
        &self.time_points
    }

    /// Ridge added to the normal equations, zero when none was needed.
    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn fit_series(&self, series: &[f64]) -> Result<FunctionalDatum> {
        if series.len() != self.time_points.len() {
            return Err(Error::Dimension {
                expected: self.time_points.len(),
                found: series.len(),
            });
        }
        if series.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("series contains non-finite values".into()));
        }
        Ok(FunctionalDatum::new(
            &self.projector * DVector::from_column_slice(series),
        ))
    }

    /// Smooths every row of the `N × m` matrix `samples`.
    pub fn fit_rows(&self, samples: &DMatrix<f64>, exec: Execution) -> Result<DMatrix<f64>> {
        if samples.ncols() != self.time_points.len() {
            return Err(Error::Dimension {
                expected: self.time_points.len(),
                found: samples.ncols(),
            });
        }
        let rows = exec.try_map(samples.nrows(), |i| {
            let series: Vec<f64> = samples.row(i).iter().copied().collect();
            self.fit_series(&series)
        })?;
        let k = self.basis.n_basis();
        let mut coeffs = DMatrix::zeros(samples.nrows(), k);
        for (i, row) in rows.iter().enumerate() {
            coeffs.set_row(i, &row.coeffs.transpose());
        }
        Ok(coeffs)
    }
}

/// Least-squares smoothing of each row of `samples` (observed at
/// `time_points`) onto `basis`.
pub fn smooth(
    samples: &DMatrix<f64>,
    time_points: &[f64],
    basis: &Arc<BasisSystem>,
    labels: Vec<usize>,
) -> Result<FunctionalDataSet> {
    smooth_with(samples, time_points, basis, labels, Execution::default())
}

pub fn smooth_with(
    samples: &DMatrix<f64>,
    time_points: &[f64],
    basis: &Arc<BasisSystem>,
    labels: Vec<usize>,
    exec: Execution,
) -> Result<FunctionalDataSet> {
    let smoother = Smoother::new(Arc::clone(basis), time_points)?;
    let coeffs = smoother.fit_rows(samples, exec)?;
    FunctionalDataSet::new(Arc::clone(basis), coeffs, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::Interval;

    fn basis(k: usize, order: usize) -> Arc<BasisSystem> {
        Arc::new(BasisSystem::bspline(k, order, Interval::default()).unwrap())
    }

    fn sampled(grid: &[f64], f: impl Fn(f64) -> f64, rows: usize) -> DMatrix<f64> {
        DMatrix::from_fn(rows, grid.len(), |_, k| f(grid[k]))
    }

    #[test]
    fn constants_are_reproduced() {
        let b = basis(20, 6);
        let grid = Interval::default().grid(100);
        let data = smooth(&sampled(&grid, |_| 1.0, 3), &grid, &b, vec![]).unwrap();
        for i in 0..3 {
            let values = b.evaluate(&data.curve(i), &grid).unwrap();
            assert!(values.iter().all(|v| (v - 1.0).abs() < 1e-8));
        }
    }

    #[test]
    fn cubic_in_span_is_reproduced() {
        let b = basis(20, 6);
        let grid = Interval::default().grid(100);
        let cubic = |t: f64| 2.0 - t + 3.0 * t * t - 4.0 * t.powi(3);
        let data = smooth(&sampled(&grid, cubic, 1), &grid, &b, vec![]).unwrap();
        let values = b.evaluate(&data.curve(0), &grid).unwrap();
        for (v, t) in values.iter().zip(&grid) {
            assert!((v - cubic(*t)).abs() < 1e-8);
        }
    }

    #[test]
    fn square_on_a_fine_grid() {
        let b = basis(20, 6);
        let grid = Interval::default().grid(100);
        let data = smooth(&sampled(&grid, |t| t * t, 1), &grid, &b, vec![]).unwrap();
        let fine = Interval::default().grid(100);
        let err = b
            .evaluate(&data.curve(0), &fine)
            .unwrap()
            .iter()
            .zip(&fine)
            .map(|(v, t)| (v - t * t).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-8, "max error {err}");
    }

    #[test]
    fn linear_function_norm() {
        let b = basis(10, 4);
        let grid = Interval::default().grid(50);
        let data = smooth(&sampled(&grid, |t| t, 1), &grid, &b, vec![]).unwrap();
        let norm = b.l2_norm(&data.curve(0)).unwrap();
        assert!((norm - 1.0 / 3f64.sqrt()).abs() < 1e-8);
    }

    #[test]
    fn underdetermined_grid_is_rejected() {
        let b = basis(20, 6);
        let grid = Interval::default().grid(19);
        assert!(matches!(
            smooth(&sampled(&grid, |t| t, 1), &grid, &b, vec![]),
            Err(Error::Underdetermined { samples: 19, n_basis: 20 })
        ));
    }

    #[test]
    fn rank_deficient_grid_gets_ridge() {
        // all samples crowded into the first knot span leave most basis
        // functions unobserved
        let b = basis(12, 4);
        let grid: Vec<f64> = (0..30).map(|k| 0.001 * k as f64).collect();
        let smoother = Smoother::new(b, &grid).unwrap();
        assert!(smoother.ridge() > 0.0);
    }

    #[test]
    fn labels_must_match_rows() {
        let b = basis(8, 4);
        let err = FunctionalDataSet::new(b, DMatrix::zeros(3, 8), vec![0, 1]).unwrap_err();
        assert!(matches!(err, Error::Dimension { expected: 3, found: 2 }));
    }

    #[test]
    fn subset_keeps_labels_aligned() {
        let b = basis(8, 4);
        let coeffs = DMatrix::from_fn(4, 8, |i, _| i as f64);
        let data = FunctionalDataSet::new(b, coeffs, vec![0, 1, 0, 1]).unwrap();
        let sub = data.subset(&[3, 0]);
        assert_eq!(sub.labels(), &[1, 0]);
        assert_eq!(sub.coeffs()[(0, 0)], 3.0);
        assert_eq!(data.class_indices(1), vec![1, 3]);
        assert_eq!(data.class_count(), 2);
    }
}
