//! Clamped B-spline bases with exact L² geometry.
//!
//! A [`BasisSystem`] owns the knot vector and the Gram matrix
//! `M[j,k] = ∫ B_j(t) B_k(t) dt`, so every inner product between curves in
//! the basis reduces to `c_f' M c_g`. The Gram matrix is integrated span by
//! span with Gauss-Legendre rules of `order` nodes, which is exact for the
//! piecewise polynomial products of two B-splines.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed interval carrying the domain of every curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// `m` equally spaced points from `lo` to `hi` inclusive.
    pub fn grid(&self, m: usize) -> Vec<f64> {
        match m {
            0 => Vec::new(),
            1 => vec![self.lo],
            _ => (0..m)
                .map(|k| {
                    if k == m - 1 {
                        self.hi
                    } else {
                        self.lo + self.width() * k as f64 / (m - 1) as f64
                    }
                })
                .collect(),
        }
    }
}

impl Default for Interval {
    fn default() -> Self {
        Self { lo: 0.0, hi: 1.0 }
    }
}

/// The parameters that fully determine a [`BasisSystem`]. This is what gets
/// persisted; knots and Gram matrix are rebuilt deterministically from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub n_basis: usize,
    pub order: usize,
    pub interval: Interval,
}

/// A clamped B-spline basis with uniform interior knots and its Gram matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(into = "BasisSpec", try_from = "BasisSpec")]
pub struct BasisSystem {
    spec: BasisSpec,
    knots: Vec<f64>,
    gram: DMatrix<f64>,
    gram_sqrt: DMatrix<f64>,
    gram_inv_sqrt: DMatrix<f64>,
}

impl From<BasisSystem> for BasisSpec {
    fn from(b: BasisSystem) -> Self {
        b.spec
    }
}

impl TryFrom<BasisSpec> for BasisSystem {
    type Error = Error;

    fn try_from(spec: BasisSpec) -> Result<Self> {
        BasisSystem::bspline(spec.n_basis, spec.order, spec.interval)
    }
}

impl PartialEq for BasisSystem {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
    }
}

impl BasisSystem {
    /// Builds `n_basis` B-splines of the given `order` (degree + 1) on
    /// `interval`, with `n_basis - order` uniformly spaced interior knots and
    /// boundary knots repeated `order` times.
    pub fn bspline(n_basis: usize, order: usize, interval: Interval) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidBasis("order must be at least 1".into()));
        }
        if n_basis < order {
            return Err(Error::InvalidBasis(format!(
                "n_basis ({n_basis}) must be at least the order ({order})"
            )));
        }
        let n_interior = n_basis - order;
        let breaks = interval.grid(n_interior + 2);
        let mut knots = Vec::with_capacity(n_basis + order);
        knots.extend(std::iter::repeat_n(interval.lo, order));
        knots.extend_from_slice(&breaks[1..breaks.len() - 1]);
        knots.extend(std::iter::repeat_n(interval.hi, order));

        let mut basis = Self {
            spec: BasisSpec {
                n_basis,
                order,
                interval,
            },
            knots,
            gram: DMatrix::zeros(n_basis, n_basis),
            gram_sqrt: DMatrix::zeros(n_basis, n_basis),
            gram_inv_sqrt: DMatrix::zeros(n_basis, n_basis),
        };
        basis.gram = basis.integrate_gram();

        let eig = SymmetricEigen::new(basis.gram.clone());
        let min_eig = eig.eigenvalues.min();
        if min_eig <= 0.0 {
            return Err(Error::InvalidBasis(format!(
                "Gram matrix is not positive definite (min eigenvalue {min_eig:e})"
            )));
        }
        basis.gram_sqrt = spectral_function(&eig, f64::sqrt);
        basis.gram_inv_sqrt = spectral_function(&eig, |l| 1.0 / l.sqrt());
        Ok(basis)
    }

    pub fn spec(&self) -> BasisSpec {
        self.spec
    }

    pub fn n_basis(&self) -> usize {
        self.spec.n_basis
    }

    pub fn order(&self) -> usize {
        self.spec.order
    }

    pub fn interval(&self) -> Interval {
        self.spec.interval
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// `M[j,k] = ∫ B_j B_k`. Symmetric bit for bit.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Symmetric square root `M^{1/2}`.
    pub fn gram_sqrt(&self) -> &DMatrix<f64> {
        &self.gram_sqrt
    }

    /// Symmetric inverse square root `M^{-1/2}`.
    pub fn gram_inv_sqrt(&self) -> &DMatrix<f64> {
        &self.gram_inv_sqrt
    }

    fn degree(&self) -> usize {
        self.spec.order - 1
    }

    /// Index `s` of the knot span with `knots[s] <= t < knots[s+1]`; the right
    /// endpoint belongs to the last nonempty span.
    fn find_span(&self, t: f64) -> usize {
        let p = self.degree();
        let n = self.spec.n_basis;
        if t >= self.knots[n] {
            return n - 1;
        }
        if t <= self.knots[p] {
            return p;
        }
        // first index in [p, n] whose knot exceeds t, minus one
        let upper = self.knots[p..=n].partition_point(|&k| k <= t);
        p + upper - 1
    }

    /// Values of the `order` B-splines that may be nonzero at `t`, together
    /// with the index of the first of them. `t` must lie in the interval.
    pub fn nonzero_at(&self, t: f64) -> (usize, Vec<f64>) {
        let span = self.find_span(t);
        (span - self.degree(), self.basis_funs(span, t))
    }

    // Cox-de Boor recursion in the triangular form.
    fn basis_funs(&self, span: usize, t: f64) -> Vec<f64> {
        let p = self.degree();
        let u = &self.knots;
        let mut values = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        values[0] = 1.0;
        for j in 1..=p {
            left[j] = t - u[span + 1 - j];
            right[j] = u[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = values[r] / (right[r + 1] + left[j - r]);
                values[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            values[j] = saved;
        }
        values
    }

    fn check_point(&self, t: f64) -> Result<f64> {
        let iv = self.spec.interval;
        let slack = 1e-12 * iv.width();
        if !t.is_finite() || t < iv.lo - slack || t > iv.hi + slack {
            return Err(Error::Domain {
                point: t,
                lo: iv.lo,
                hi: iv.hi,
            });
        }
        Ok(t.clamp(iv.lo, iv.hi))
    }

    /// Dense `grid.len() × n_basis` evaluation matrix `Φ[k,j] = B_j(t_k)`.
    pub fn evaluation_matrix(&self, grid: &[f64]) -> Result<DMatrix<f64>> {
        let mut phi = DMatrix::zeros(grid.len(), self.spec.n_basis);
        for (row, &t) in grid.iter().enumerate() {
            let t = self.check_point(t)?;
            let (first, values) = self.nonzero_at(t);
            for (offset, v) in values.into_iter().enumerate() {
                phi[(row, first + offset)] = v;
            }
        }
        Ok(phi)
    }

    /// Pointwise values `Σ_j c_j B_j(t)` of a curve on `grid`.
    pub fn evaluate(&self, f: &FunctionalDatum, grid: &[f64]) -> Result<Vec<f64>> {
        self.check_len(f.coeffs.len())?;
        grid.iter()
            .map(|&t| {
                let t = self.check_point(t)?;
                let (first, values) = self.nonzero_at(t);
                Ok(values
                    .iter()
                    .enumerate()
                    .map(|(o, v)| v * f.coeffs[first + o])
                    .sum())
            })
            .collect()
    }

    /// `⟨f, g⟩ = ∫ f g`, exact under the basis representation.
    pub fn inner_product(&self, f: &FunctionalDatum, g: &FunctionalDatum) -> Result<f64> {
        self.inner_product_coeffs(f.coeffs.as_slice(), g.coeffs.as_slice())
    }

    pub fn inner_product_coeffs(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        self.check_len(f.len())?;
        self.check_len(g.len())?;
        Ok(self.bilinear(f, g))
    }

    /// `c_f' M c_g` without length checks.
    pub(crate) fn bilinear(&self, f: &[f64], g: &[f64]) -> f64 {
        let mut total = 0.0;
        for (j, &fj) in f.iter().enumerate() {
            if fj == 0.0 {
                continue;
            }
            let row: f64 = g.iter().enumerate().map(|(l, &gl)| self.gram[(j, l)] * gl).sum();
            total += fj * row;
        }
        total
    }

    pub fn l2_norm(&self, f: &FunctionalDatum) -> Result<f64> {
        Ok(self.inner_product(f, f)?.max(0.0).sqrt())
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.spec.n_basis {
            return Err(Error::Dimension {
                expected: self.spec.n_basis,
                found: len,
            });
        }
        Ok(())
    }

    fn integrate_gram(&self) -> DMatrix<f64> {
        let k = self.spec.n_basis;
        let p = self.degree();
        let (nodes, weights) = gauss_legendre(self.spec.order);
        let mut gram = DMatrix::zeros(k, k);
        for span in p..k {
            let (a, b) = (self.knots[span], self.knots[span + 1]);
            if b <= a {
                continue;
            }
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (x, w) in nodes.iter().zip(&weights) {
                let t = mid + half * x;
                let values = self.basis_funs(span, t);
                let first = span - p;
                for (i, vi) in values.iter().enumerate() {
                    for (j, vj) in values.iter().enumerate().skip(i) {
                        gram[(first + i, first + j)] += w * half * vi * vj;
                    }
                }
            }
        }
        for j in 0..k {
            for i in (j + 1)..k {
                gram[(i, j)] = gram[(j, i)];
            }
        }
        gram
    }
}

/// `Q f(Λ) Q'` for a symmetric eigendecomposition, mirrored to exact symmetry.
fn spectral_function(eig: &SymmetricEigen<f64, nalgebra::Dyn>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let q = &eig.eigenvectors;
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f));
    let mut out = q * d * q.transpose();
    let n = out.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let avg = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = avg;
            out[(j, i)] = avg;
        }
    }
    out
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, exact for polynomials of
/// degree `2n - 1`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "need at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // three-term recurrence for P_n and its derivative
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// One curve, stored as its coefficient vector in some [`BasisSystem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalDatum {
    pub coeffs: DVector<f64>,
}

impl FunctionalDatum {
    pub fn new(coeffs: DVector<f64>) -> Self {
        Self { coeffs }
    }

    pub fn from_slice(coeffs: &[f64]) -> Self {
        Self {
            coeffs: DVector::from_column_slice(coeffs),
        }
    }

    pub fn zeros(n_basis: usize) -> Self {
        Self {
            coeffs: DVector::zeros(n_basis),
        }
    }

    /// The constant function `value`; B-splines sum to one on the domain.
    pub fn constant(n_basis: usize, value: f64) -> Self {
        Self {
            coeffs: DVector::from_element(n_basis, value),
        }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.coeffs.as_slice()
    }
}
