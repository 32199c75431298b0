mod common;

use std::sync::Arc;

use fcpca::basis::{BasisSystem, FunctionalDatum, Interval};
use fcpca::exec::Execution;
use fcpca::fdata::{smooth, smooth_with, FunctionalDataSet};
use fcpca::fpca::{fpca, project_scores};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn basis(k: usize, order: usize) -> Arc<BasisSystem> {
    Arc::new(BasisSystem::bspline(k, order, Interval::default()).unwrap())
}

/// Curves built from a few sinusoids with distinct score variances plus
/// small pointwise noise.
fn random_curves(rng: &mut ChaCha8Rng, n: usize, m: usize) -> DMatrix<f64> {
    let grid = Interval::default().grid(m);
    let sds = [3.0, 1.7, 0.9, 0.45];
    let mut out = DMatrix::zeros(n, m);
    for i in 0..n {
        let scores: Vec<f64> = sds.iter().map(|s| s * rng.sample::<f64, _>(StandardNormal)).collect();
        for (k, &t) in grid.iter().enumerate() {
            let signal: f64 = scores
                .iter()
                .enumerate()
                .map(|(j, z)| z * (std::f64::consts::PI * (j + 1) as f64 * t).sin())
                .sum();
            out[(i, k)] = signal + 0.5 * t + 0.05 * rng.sample::<f64, _>(StandardNormal);
        }
    }
    out
}

#[test]
fn smoothing_matches_svd_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (k, order, m) in [(20, 6, 100), (8, 4, 30), (20, 6, 20)] {
        let b = basis(k, order);
        let samples = random_curves(&mut rng, 6, m);
        let grid = Interval::default().grid(m);
        let data = smooth(&samples, &grid, &b, vec![]).unwrap();
        let phi = common::design_matrix(&b, &grid);
        let svd = phi.clone().svd(true, true);
        for i in 0..samples.nrows() {
            let y = samples.row(i).transpose();
            let oracle = svd.solve(&y, 1e-14).unwrap();
            let ours = data.coeffs().row(i).transpose();
            let resid_ours = (&y - &phi * &ours).norm();
            let resid_oracle = (&y - &phi * &oracle).norm();
            assert!((resid_ours - resid_oracle).abs() <= 1e-9 * (1.0 + resid_oracle));
            assert!((ours - oracle).amax() < 1e-6, "K={k} m={m}");
        }
    }
}

#[test]
fn quadratic_is_reproduced_exactly() {
    let b = basis(20, 6);
    let grid = Interval::default().grid(100);
    let samples = DMatrix::from_fn(1, 100, |_, j| grid[j] * grid[j]);
    let data = smooth(&samples, &grid, &b, vec![]).unwrap();
    let values = b.evaluate(&data.curve(0), &grid).unwrap();
    for (v, t) in values.iter().zip(&grid) {
        assert!((v - t * t).abs() <= 1e-8);
    }
}

#[test]
fn parallel_smoothing_is_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let samples = random_curves(&mut rng, 50, 120);
    let grid = Interval::default().grid(120);
    let b = basis(20, 6);
    let a = smooth_with(&samples, &grid, &b, vec![], Execution::Sequential).unwrap();
    let p = smooth_with(&samples, &grid, &b, vec![], Execution::Parallel).unwrap();
    assert_eq!(a.coeffs(), p.coeffs());
}

#[test]
fn fpca_matches_dense_grid_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let m = 200;
    let grid = Interval::default().grid(m);
    let dense = Interval::default().grid(2001);
    let weights = common::trapezoid_weights(&dense);
    for trial in 0..50 {
        let n = rng.random_range(5..=20);
        let b = basis(20, 6);
        let data = smooth(&random_curves(&mut rng, n, m), &grid, &b, vec![]).unwrap();
        let ours = fpca(&data, 1.0).unwrap();

        let mut values = DMatrix::zeros(n, dense.len());
        for i in 0..n {
            let row = b.evaluate(&data.curve(i), &dense).unwrap();
            values.row_mut(i).copy_from_slice(&row);
        }
        let (lambda, funcs) = common::grid_pca(&values, &dense);
        let total: f64 = lambda.iter().filter(|l| **l > 0.0).sum();

        for (j, &l) in ours.eigenvalues.iter().enumerate() {
            if l < 0.01 * total {
                continue;
            }
            let rel = (l - lambda[j]).abs() / lambda[j];
            assert!(rel <= 0.02, "trial {trial} component {j}: {l} vs {}", lambda[j]);
            let ef = b.evaluate(&ours.eigenfunction(j), &dense).unwrap();
            let oracle: Vec<f64> = funcs.column(j).iter().copied().collect();
            let cos = common::grid_inner(&ef, &oracle, &weights)
                / (common::grid_inner(&ef, &ef, &weights) * common::grid_inner(&oracle, &oracle, &weights)).sqrt();
            assert!(cos.abs() >= 0.99, "trial {trial} component {j}: cos {cos}");
        }
    }
}

#[test]
fn fpca_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let b = basis(20, 6);
    let grid = Interval::default().grid(100);
    let data = smooth(&random_curves(&mut rng, 30, 100), &grid, &b, vec![]).unwrap();
    let full = fpca(&data, 1.0).unwrap();
    let q = full.n_components();
    assert!(q < data.len());

    // orthonormal eigenfunctions, descending positive eigenvalues
    for j in 0..q {
        for k in 0..q {
            let ip = b.inner_product(&full.eigenfunction(j), &full.eigenfunction(k)).unwrap();
            let target = if j == k { 1.0 } else { 0.0 };
            assert!((ip - target).abs() <= 1e-8);
        }
    }
    assert!(full.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    assert!(full.eigenvalues.iter().all(|&l| l > 0.0));

    // score variances equal eigenvalues, scores decorrelated
    let n = data.len() as f64;
    let scores = &full.scores;
    for j in 0..q {
        for k in 0..q {
            let cj = scores.column(j);
            let ck = scores.column(k);
            let cov = (cj.dot(&ck) - n * cj.mean() * ck.mean()) / (n - 1.0);
            if j == k {
                assert!((cov - full.eigenvalues[j]).abs() <= 1e-6 * full.eigenvalues[j]);
            } else {
                assert!(cov.abs() <= 1e-6 * full.eigenvalues[0]);
            }
        }
    }

    // variance accounting
    let mut total = 0.0;
    for i in 0..data.len() {
        let d = FunctionalDatum::new(data.curve(i).coeffs - &full.mean.coeffs);
        total += b.inner_product(&d, &d).unwrap();
    }
    total /= n - 1.0;
    let sum: f64 = full.eigenvalues.iter().sum();
    assert!((sum - total).abs() <= 1e-8 * total);

    // truncation minimality and threshold
    for threshold in [0.5, 0.8, 0.9, 0.95, 0.99] {
        let r = fpca(&data, threshold).unwrap();
        let q = r.n_components();
        let share = |k: usize| full.eigenvalues[..k].iter().sum::<f64>() / sum;
        assert!(share(q) >= threshold - 1e-12);
        assert!(q == 1 || share(q - 1) < threshold);
        assert!(r.retained_fraction >= threshold - 1e-12);
    }
}

#[test]
fn reconstruction_error_decreases_with_q() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let b = basis(20, 6);
    let grid = Interval::default().grid(100);
    let data = smooth(&random_curves(&mut rng, 25, 100), &grid, &b, vec![]).unwrap();
    let full = fpca(&data, 1.0).unwrap();
    let mut previous = f64::INFINITY;
    for q in 0..=full.n_components() {
        let mut err = 0.0;
        for i in 0..data.len() {
            let mut rec = full.mean.coeffs.clone();
            for j in 0..q {
                rec += full.eigenfunction(j).coeffs * full.scores[(i, j)];
            }
            let d = FunctionalDatum::new(data.curve(i).coeffs - rec);
            err += b.inner_product(&d, &d).unwrap();
        }
        let tail: f64 = full.eigenvalues[q..].iter().sum::<f64>() * (data.len() - 1) as f64;
        assert!((err - tail).abs() <= 1e-8 * (1.0 + tail), "q={q}: {err} vs {tail}");
        assert!(err <= previous + 1e-12);
        previous = err;
    }
    assert!(previous < 1e-8);
}

#[test]
fn mean_curve_scores_zero_and_output_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let b = basis(12, 4);
    let grid = Interval::default().grid(60);
    let data = smooth(&random_curves(&mut rng, 10, 60), &grid, &b, vec![]).unwrap();
    let r = fpca(&data, 0.9).unwrap();
    let again = fpca(&data, 0.9).unwrap();
    assert_eq!(serde_json::to_string(&r).unwrap(), serde_json::to_string(&again).unwrap());
    let mean_only = FunctionalDataSet::new(
        Arc::clone(&b),
        DMatrix::from_row_slice(1, 12, r.mean.as_slice()),
        vec![],
    )
    .unwrap();
    assert!(project_scores(&mean_only, &r).unwrap().amax() < 1e-12);
}
