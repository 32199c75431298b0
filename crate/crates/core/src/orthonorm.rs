//! Gram-Schmidt orthonormalisation in the L² metric of a basis.
//!
//! Functions already orthonormal at the front of the input come out
//! unchanged (up to rounding); inputs that reduce to numerically zero after
//! projection are dropped.

use nalgebra::DVector;

use crate::basis::{BasisSystem, FunctionalDatum};
use crate::error::{Error, Result};

/// Default relative tolerance for declaring a residual identically zero.
pub const DEFAULT_ZERO_TOL: f64 = 1e-8;

/// Off-diagonal Gramian magnitude that triggers a second orthogonalisation
/// pass.
pub const REORTHOGONALIZE_ABOVE: f64 = 1e-10;

/// Output of [`gram_schmidt_indexed`].
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalSet {
    pub functions: Vec<FunctionalDatum>,
    /// For each output function, the index of the input it came from.
    pub kept: Vec<usize>,
}

/// Orthonormalises `functions` in order, discarding inputs whose residual
/// norm falls below `tol · max(1, ‖f_k‖)`.
pub fn gram_schmidt(
    functions: &[FunctionalDatum],
    basis: &BasisSystem,
    tol: f64,
) -> Result<Vec<FunctionalDatum>> {
    Ok(gram_schmidt_indexed(functions, basis, tol)?.functions)
}

pub fn gram_schmidt_indexed(
    functions: &[FunctionalDatum],
    basis: &BasisSystem,
    tol: f64,
) -> Result<OrthonormalSet> {
    if functions.is_empty() {
        return Err(Error::EmptyInput("no functions to orthonormalise"));
    }
    for f in functions {
        basis.check_len(f.len())?;
    }

    let mut out: Vec<DVector<f64>> = Vec::with_capacity(functions.len());
    let mut kept = Vec::with_capacity(functions.len());
    for (idx, f) in functions.iter().enumerate() {
        let norm = basis.bilinear(f.as_slice(), f.as_slice()).max(0.0).sqrt();
        let mut v = f.coeffs.clone();
        for g in &out {
            let proj = basis.bilinear(v.as_slice(), g.as_slice());
            v.axpy(-proj, g, 1.0);
        }
        let residual = basis.bilinear(v.as_slice(), v.as_slice()).max(0.0).sqrt();
        if residual < tol * norm.max(1.0) {
            continue;
        }
        v /= residual;
        out.push(v);
        kept.push(idx);
    }
    if out.is_empty() {
        return Err(Error::AllZero);
    }

    if max_off_diagonal(&out, basis) > REORTHOGONALIZE_ABOVE {
        for k in 0..out.len() {
            let (done, rest) = out.split_at_mut(k);
            let v = &mut rest[0];
            for g in done.iter() {
                let proj = basis.bilinear(v.as_slice(), g.as_slice());
                v.axpy(-proj, g, 1.0);
            }
            let norm = basis.bilinear(v.as_slice(), v.as_slice()).sqrt();
            *v /= norm;
        }
    }

    Ok(OrthonormalSet {
        functions: out.into_iter().map(FunctionalDatum::new).collect(),
        kept,
    })
}

fn max_off_diagonal(set: &[DVector<f64>], basis: &BasisSystem) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, a) in set.iter().enumerate() {
        for b in &set[..i] {
            worst = worst.max(basis.bilinear(a.as_slice(), b.as_slice()).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::Interval;
    use crate::fdata::Smoother;
    use std::sync::Arc;

    fn basis() -> Arc<BasisSystem> {
        Arc::new(BasisSystem::bspline(10, 4, Interval::default()).unwrap())
    }

    fn fit(b: &Arc<BasisSystem>, f: impl Fn(f64) -> f64) -> FunctionalDatum {
        let grid = Interval::default().grid(60);
        let values: Vec<f64> = grid.iter().map(|&t| f(t)).collect();
        Smoother::new(Arc::clone(b), &grid).unwrap().fit_series(&values).unwrap()
    }

    #[test]
    fn constant_and_linear_give_shifted_legendre() {
        let b = basis();
        let out = gram_schmidt(&[fit(&b, |_| 1.0), fit(&b, |t| t)], &b, DEFAULT_ZERO_TOL).unwrap();
        assert_eq!(out.len(), 2);
        let expected = fit(&b, |t| 12f64.sqrt() * (t - 0.5));
        assert!((&out[0].coeffs - FunctionalDatum::constant(10, 1.0).coeffs).amax() < 1e-8);
        assert!((&out[1].coeffs - &expected.coeffs).amax() < 1e-8);
    }

    #[test]
    fn duplicate_is_discarded() {
        let b = basis();
        let f = fit(&b, |t| (3.0 * t).sin() + 2.0);
        let set = gram_schmidt_indexed(&[f.clone(), f.clone()], &b, DEFAULT_ZERO_TOL).unwrap();
        assert_eq!(set.kept, vec![0]);
        let norm = b.l2_norm(&f).unwrap();
        assert!((&set.functions[0].coeffs - &f.coeffs / norm).amax() < 1e-12);
    }

    #[test]
    fn all_zero_and_empty_inputs_fail() {
        let b = basis();
        let zero = FunctionalDatum::zeros(10);
        assert!(matches!(
            gram_schmidt(&[zero.clone(), zero], &b, DEFAULT_ZERO_TOL),
            Err(Error::AllZero)
        ));
        assert!(matches!(gram_schmidt(&[], &b, DEFAULT_ZERO_TOL), Err(Error::EmptyInput(_))));
        assert!(matches!(
            gram_schmidt(&[FunctionalDatum::zeros(4)], &b, DEFAULT_ZERO_TOL),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn leading_zero_is_skipped() {
        let b = basis();
        let set = gram_schmidt_indexed(
            &[FunctionalDatum::zeros(10), fit(&b, |t| t)],
            &b,
            DEFAULT_ZERO_TOL,
        )
        .unwrap();
        assert_eq!(set.kept, vec![1]);
    }

    #[test]
    fn nearly_dependent_inputs_stay_orthonormal() {
        let b = basis();
        let f = fit(&b, |t| t * t);
        let mut g = f.clone();
        g.coeffs[4] += 1e-6;
        let out = gram_schmidt(&[f, g], &b, DEFAULT_ZERO_TOL).unwrap();
        assert_eq!(out.len(), 2);
        let ip = b.inner_product(&out[0], &out[1]).unwrap();
        assert!(ip.abs() < 1e-8);
        assert!((b.l2_norm(&out[1]).unwrap() - 1.0).abs() < 1e-8);
    }
}
