//! Reference implementations used as test oracles. None of them call into
//! the numerical code they check.

#![allow(dead_code)]

use fcpca::basis::{BasisSystem, FunctionalDatum};
use fcpca::model::Subspace;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

/// `B_{j,order}(t)` by the Cox-de Boor recursion, with the last non-empty
/// span closed on the right.
pub fn cox_de_boor(knots: &[f64], j: usize, order: usize, t: f64) -> f64 {
    if order == 1 {
        let (a, b) = (knots[j], knots[j + 1]);
        let last = *knots.last().unwrap();
        if (a <= t && t < b) || (t == last && b == last && a < b) {
            return 1.0;
        }
        return 0.0;
    }
    let mut out = 0.0;
    let d1 = knots[j + order - 1] - knots[j];
    if d1 > 0.0 {
        out += (t - knots[j]) / d1 * cox_de_boor(knots, j, order - 1, t);
    }
    let d2 = knots[j + order] - knots[j + 1];
    if d2 > 0.0 {
        out += (knots[j + order] - t) / d2 * cox_de_boor(knots, j + 1, order - 1, t);
    }
    out
}

/// Dense evaluation matrix `[B_j(t_i)]` via Cox-de Boor.
pub fn design_matrix(basis: &BasisSystem, grid: &[f64]) -> DMatrix<f64> {
    let k = basis.n_basis();
    let knots = basis.knots();
    DMatrix::from_fn(grid.len(), k, |i, j| cox_de_boor(knots, j, basis.order(), grid[i]))
}

/// Composite Simpson nodes and weights on `[lo, hi]` with `panels` (even)
/// subintervals.
pub fn simpson(lo: f64, hi: f64, panels: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(panels.is_multiple_of(2));
    let h = (hi - lo) / panels as f64;
    let nodes: Vec<f64> = (0..=panels).map(|i| lo + i as f64 * h).collect();
    let weights = (0..=panels)
        .map(|i| {
            let w = if i == 0 || i == panels {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * h / 3.0
        })
        .collect();
    (nodes, weights)
}

/// Gram matrix by composite Simpson on each knot span separately, so the
/// integrand is a polynomial on every panel.
pub fn gram_oracle(basis: &BasisSystem, panels_per_span: usize) -> DMatrix<f64> {
    let k = basis.n_basis();
    let mut knots = basis.knots().to_vec();
    knots.dedup();
    let mut gram = DMatrix::zeros(k, k);
    for w in knots.windows(2) {
        let (nodes, weights) = simpson(w[0], w[1], panels_per_span);
        let phi = design_matrix(basis, &nodes);
        for (r, &wt) in weights.iter().enumerate() {
            let row = phi.row(r);
            gram += row.transpose() * row * wt;
        }
    }
    gram
}

/// Trapezoid weights on an equally spaced grid.
pub fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let m = grid.len();
    let h = grid[1] - grid[0];
    (0..m)
        .map(|i| if i == 0 || i == m - 1 { h / 2.0 } else { h })
        .collect()
}

/// PCA of curves sampled on `grid`, with the L² inner product replaced by
/// trapezoid quadrature, solved through the `N × N` snapshot matrix
/// `Xc W Xc' / (N-1)`. Returns the numerically positive eigenvalues
/// (descending) and the matching eigenfunctions on the grid, one per column.
pub fn grid_pca(values: &DMatrix<f64>, grid: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let n = values.nrows();
    let m = values.ncols();
    let mean = DVector::from_fn(m, |j, _| values.column(j).mean());
    let mut centered = values.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let w = trapezoid_weights(grid);
    let mut weighted = centered.clone();
    for (j, mut col) in weighted.column_iter_mut().enumerate() {
        col *= w[j];
    }
    let snap = &weighted * centered.transpose() / (n - 1) as f64;
    let eig = SymmetricEigen::new(snap);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]];
    let keep: Vec<usize> = order.into_iter().filter(|&j| eig.eigenvalues[j] > 1e-12 * top).collect();
    let vals = keep.iter().map(|&j| eig.eigenvalues[j]).collect();
    let mut funcs = DMatrix::zeros(m, keep.len());
    for (c, &j) in keep.iter().enumerate() {
        let f = centered.transpose() * eig.eigenvectors.column(j);
        let norm = grid_inner(f.as_slice(), f.as_slice(), &w).sqrt();
        funcs.set_column(c, &(f / norm));
    }
    (vals, funcs)
}

/// Quadrature inner product of two grid functions.
pub fn grid_inner(a: &[f64], b: &[f64], weights: &[f64]) -> f64 {
    a.iter().zip(b).zip(weights).map(|((x, y), w)| x * y * w).sum()
}

/// Class posteriors from normalised Gaussian densities evaluated directly:
/// `π_ℓ φ(v; η_ℓ, Σ) / Σ_s π_s φ(v; η_s, Σ)`, using the covariance (not the
/// stored precision) through an LU solve.
pub fn density_posterior(v: &DVector<f64>, s: &Subspace, priors: &[f64]) -> Vec<f64> {
    let d = v.len() as f64;
    let lu = s.lda_pooled_cov.clone().lu();
    let det = lu.determinant();
    let norm = 1.0 / ((2.0 * std::f64::consts::PI).powf(d / 2.0) * det.sqrt());
    let dens: Vec<f64> = (0..s.lda_means.nrows())
        .map(|l| {
            let diff = v - s.lda_means.row(l).transpose();
            let sol = lu.solve(&diff).unwrap();
            priors[l] * norm * (-0.5 * diff.dot(&sol)).exp()
        })
        .collect();
    let total: f64 = dens.iter().sum();
    dens.into_iter().map(|p| p / total).collect()
}

/// `count` coefficient vectors orthonormal in the L² metric of `basis`:
/// `f = L^{-T} q` for Euclidean-orthonormal `q`, where `M = L L'`.
pub fn random_orthonormal<R: Rng>(basis: &BasisSystem, count: usize, rng: &mut R) -> Vec<FunctionalDatum> {
    let k = basis.n_basis();
    let a = DMatrix::from_fn(k, count, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = a.qr().q();
    let l = basis.gram().clone().cholesky().unwrap().l();
    let lt = l.transpose();
    (0..count)
        .map(|j| {
            let col = q.column(j).into_owned();
            FunctionalDatum::new(lt.solve_upper_triangular(&col).unwrap())
        })
        .collect()
}

pub fn random_datum<R: Rng>(k: usize, rng: &mut R) -> FunctionalDatum {
    FunctionalDatum::new(DVector::from_fn(k, |_, _| rng.sample(StandardNormal)))
}

/// Plain `Σ_{jk} a_j M_jk b_k`.
pub fn gram_form(gram: &DMatrix<f64>, a: &FunctionalDatum, b: &FunctionalDatum) -> f64 {
    a.coeffs.dot(&(gram * &b.coeffs))
}
