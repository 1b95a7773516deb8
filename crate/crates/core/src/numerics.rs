//! Dense linear algebra and statistics used by scoring, PCA and metrics.
//!
//! Matrices are small (embedding dimension squared), so everything is plain
//! row-major `Vec<f64>` with straightforward loops.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{config, insufficient, Error, Result};
use crate::math;

/// Default ridge applied to covariance diagonals, as a fraction of the mean
/// diagonal entry.
pub const DEFAULT_REG: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                expected: rows * cols,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(config("matrix entries must be finite"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Shape {
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    /// `(A + Aᵀ) / 2`.
    pub fn symmetrized(&self) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| 0.5 * (self.get(i, j) + self.get(j, i)))
    }
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Shape {
            expected: n,
            found: a.cols(),
        });
    }
    let max_diag = (0..n).map(|i| math::abs(a.get(i, i))).fold(0.0, f64::max);
    // Pivots below this are rounding noise on a rank-deficient matrix.
    let tol = 16.0 * n as f64 * f64::EPSILON * max_diag;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if !(d > tol) || !d.is_finite() {
            return Err(Error::SingularCovariance { pivot: j });
        }
        let ljj = math::sqrt(d);
        l.set(j, j, ljj);
        for i in (j + 1)..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / ljj);
        }
    }
    Ok(l)
}

/// Solves `L y = b` for lower-triangular `L`.
pub fn forward_solve(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l.get(i, k) * y[k];
        }
        y[i] = s / l.get(i, i);
    }
    y
}

pub fn mean_vector(vectors: &[&[f64]]) -> Result<Vec<f64>> {
    let first = vectors.first().ok_or_else(|| insufficient("no vectors"))?;
    let d = first.len();
    let mut mean = vec![0.0; d];
    for v in vectors {
        if v.len() != d {
            return Err(Error::Shape {
                expected: d,
                found: v.len(),
            });
        }
        for (m, x) in mean.iter_mut().zip(v.iter()) {
            *m += x;
        }
    }
    let n = vectors.len() as f64;
    for m in &mut mean {
        *m /= n;
    }
    Ok(mean)
}

/// Arithmetic mean and unbiased sample covariance (no regularization).
pub fn mean_and_covariance(vectors: &[&[f64]]) -> Result<(Vec<f64>, Matrix)> {
    if vectors.len() < 2 {
        return Err(insufficient("at least 2 vectors are needed for a covariance"));
    }
    let mean = mean_vector(vectors)?;
    let d = mean.len();
    let mut cov = Matrix::zeros(d, d);
    let mut centered = vec![0.0; d];
    for v in vectors {
        for ((c, x), m) in centered.iter_mut().zip(v.iter()).zip(mean.iter()) {
            *c = x - m;
        }
        for i in 0..d {
            for j in i..d {
                cov.data[i * d + j] += centered[i] * centered[j];
            }
        }
    }
    let denom = (vectors.len() - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov.get(i, j) / denom;
            cov.set(i, j, v);
            cov.set(j, i, v);
        }
    }
    Ok((mean, cov))
}

/// A multivariate Gaussian fitted to a set of vectors, with its Cholesky
/// factor cached for quadratic forms.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianFit {
    mean: Vec<f64>,
    covariance: Matrix,
    chol: Matrix,
    log_det: f64,
}

impl GaussianFit {
    /// Builds a fit from an explicit mean and covariance; the covariance must
    /// be symmetric positive definite.
    pub fn from_moments(mean: Vec<f64>, covariance: Matrix) -> Result<Self> {
        if covariance.rows() != mean.len() || covariance.cols() != mean.len() {
            return Err(Error::Shape {
                expected: mean.len(),
                found: covariance.rows(),
            });
        }
        let chol = cholesky(&covariance)?;
        let log_det = 2.0 * (0..mean.len()).map(|i| math::ln(chol.get(i, i))).sum::<f64>();
        Ok(Self {
            mean,
            covariance,
            chol,
            log_det,
        })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &Matrix {
        &self.covariance
    }

    pub fn cholesky_factor(&self) -> &Matrix {
        &self.chol
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn dimension(&self) -> usize {
        self.mean.len()
    }
}

/// Fits mean and covariance, adding `reg · trace/d` to every diagonal entry.
///
/// A zero-variance input has zero trace, so regularization cannot rescue it
/// and the call fails with [`Error::SingularCovariance`].
pub fn fit_gaussian(vectors: &[&[f64]], reg: f64) -> Result<GaussianFit> {
    if !(reg >= 0.0) {
        return Err(config("regularization must be non-negative"));
    }
    let (mean, mut cov) = mean_and_covariance(vectors)?;
    let d = mean.len();
    if d == 0 {
        return Err(Error::Shape {
            expected: 1,
            found: 0,
        });
    }
    let ridge = reg * cov.trace() / d as f64;
    for i in 0..d {
        let v = cov.get(i, i) + ridge;
        cov.set(i, i, v);
    }
    GaussianFit::from_moments(mean, cov)
}

/// `(z − μ)ᵀ Σ⁻¹ (z − μ)` through a triangular solve.
pub fn mahalanobis_sq(fit: &GaussianFit, z: &[f64]) -> Result<f64> {
    if z.len() != fit.dimension() {
        return Err(Error::Shape {
            expected: fit.dimension(),
            found: z.len(),
        });
    }
    let diff: Vec<f64> = z.iter().zip(fit.mean.iter()).map(|(a, b)| a - b).collect();
    let y = forward_solve(&fit.chol, &diff);
    Ok(y.iter().map(|v| v * v).sum())
}

/// `max(1, round(fraction · n))`, capped at `n`.
pub fn kept_count(fraction: f64, n: usize) -> usize {
    let k = math::round(fraction * n as f64) as usize;
    k.clamp(1, n.max(1))
}

pub(crate) fn check_fraction(fraction: f64) -> Result<()> {
    if fraction > 0.0 && fraction <= 1.0 {
        Ok(())
    } else {
        Err(config("keep fraction must lie in (0, 1]"))
    }
}

/// Indices of the `kept_count(keep_fraction, n)` highest scores, sorted
/// ascending. Equal scores prefer the smaller index.
pub fn percentile_threshold(scores: &[f64], keep_fraction: f64) -> Result<Vec<usize>> {
    if scores.is_empty() {
        return Err(insufficient("no scores to threshold"));
    }
    check_fraction(keep_fraction)?;
    let k = kept_count(keep_fraction, scores.len());
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    Ok(order)
}

/// Median of a non-empty slice; even lengths average the two middle values.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in non-increasing order and the matching unit
/// eigenvectors as the columns of the second matrix.
pub fn symmetric_eigen(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Shape {
            expected: n,
            found: a.cols(),
        });
    }
    let mut m = a.symmetrized();
    let mut v = Matrix::identity(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m.get(i, j) * m.get(i, j))
            .sum();
        let scale: f64 = m.data.iter().map(|x| x * x).sum();
        if off <= f64::EPSILON * f64::EPSILON * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + math::sqrt(1.0 + theta * theta))
                } else {
                    -1.0 / (-theta + math::sqrt(1.0 + theta * theta))
                };
                let c = 1.0 / math::sqrt(1.0 + t * t);
                let s = t * c;
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(j, j).partial_cmp(&m.get(i, i)).unwrap_or(Ordering::Equal));
    let values = order.iter().map(|&i| m.get(i, i)).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v.get(r, order[c]));
    Ok((values, vectors))
}

/// Principal square root of a symmetric PSD matrix; negative eigenvalues
/// (rounding noise) are clamped to zero.
pub fn sqrt_psd(a: &Matrix) -> Result<Matrix> {
    let (values, vectors) = symmetric_eigen(a)?;
    let n = a.rows();
    let roots: Vec<f64> = values.iter().map(|&l| math::sqrt(l.max(0.0))).collect();
    Ok(Matrix::from_fn(n, n, |i, j| {
        (0..n).map(|k| vectors.get(i, k) * roots[k] * vectors.get(j, k)).sum()
    }))
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn refs(v: &[Vec<f64>]) -> Vec<&[f64]> {
        v.iter().map(Vec::as_slice).collect()
    }

    #[test]
    fn two_point_covariance_is_singular() {
        let pts = [vec![0.0, 0.0], vec![2.0, 2.0]];
        let (mean, cov) = mean_and_covariance(&refs(&pts)).unwrap();
        assert_eq!(mean, vec![1.0, 1.0]);
        assert_eq!(cov.as_slice(), &[2.0, 2.0, 2.0, 2.0]);
        assert!(matches!(
            fit_gaussian(&refs(&pts), 0.0),
            Err(Error::SingularCovariance { .. })
        ));
    }

    #[test]
    fn zero_variance_cannot_be_regularized() {
        let pts = vec![vec![1.5, -2.0, 0.25]; 6];
        assert!(matches!(
            fit_gaussian(&refs(&pts), 1e-6),
            Err(Error::SingularCovariance { .. })
        ));
    }

    #[test]
    fn fit_needs_two_vectors_of_equal_dimension() {
        assert!(matches!(
            fit_gaussian(&refs(&[vec![1.0]]), 0.0),
            Err(Error::InsufficientData(_))
        ));
        assert!(matches!(
            fit_gaussian(&refs(&[vec![1.0, 2.0], vec![1.0]]), 0.0),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn regularization_scales_with_trace() {
        let pts = [vec![0.0, 0.0], vec![2.0, 0.0], vec![0.0, 4.0], vec![1.0, 1.0]];
        let plain = mean_and_covariance(&refs(&pts)).unwrap().1;
        let fit = fit_gaussian(&refs(&pts), 0.5).unwrap();
        let ridge = 0.5 * plain.trace() / 2.0;
        assert_eq!(fit.covariance().get(0, 0), plain.get(0, 0) + ridge);
        assert_eq!(fit.covariance().get(0, 1), plain.get(0, 1));
    }

    #[test]
    fn mahalanobis_identity_cases() {
        let fit = GaussianFit::from_moments(vec![1.0, -1.0], Matrix::identity(2)).unwrap();
        assert_eq!(mahalanobis_sq(&fit, &[1.0, -1.0]).unwrap(), 0.0);
        assert_eq!(mahalanobis_sq(&fit, &[2.0, 0.0]).unwrap(), 2.0);
        assert!(matches!(mahalanobis_sq(&fit, &[1.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn percentile_examples() {
        assert_eq!(
            percentile_threshold(&[3.0, 1.0, 2.0, 5.0, 4.0], 0.4).unwrap(),
            vec![3, 4]
        );
        assert_eq!(percentile_threshold(&[3.0, 1.0, 2.0], 1.0).unwrap(), vec![0, 1, 2]);
        assert_eq!(percentile_threshold(&[1.0; 4], 0.5).unwrap(), vec![0, 1]);
        assert!(matches!(
            percentile_threshold(&[], 0.5),
            Err(Error::InsufficientData(_))
        ));
        assert!(percentile_threshold(&[1.0], 0.0).is_err());
    }

    #[test]
    fn kept_count_rounds_half_away_and_floors_at_one() {
        assert_eq!(kept_count(0.25, 10), 3);
        assert_eq!(kept_count(0.01, 10), 1);
        assert_eq!(kept_count(1.0, 7), 7);
    }

    #[test]
    fn median_odd_and_even() {
        assert_eq!(median(&[4.0, 0.0, 2.0, 1.0, 3.0]), 2.0);
        assert_eq!(median(&[1.0, 3.0]), 2.0);
    }

    #[test]
    fn jacobi_reconstructs_matrix() {
        let a = Matrix::from_vec(3, 3, vec![4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 1.0]).unwrap();
        let (vals, vecs) = symmetric_eigen(&a).unwrap();
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        for i in 0..3 {
            for j in 0..3 {
                let r: f64 = (0..3).map(|k| vecs.get(i, k) * vals[k] * vecs.get(j, k)).sum();
                assert!((r - a.get(i, j)).abs() < 1e-12);
            }
        }
        let s = sqrt_psd(&a).unwrap();
        let ss = s.matmul(&s).unwrap();
        for (x, y) in ss.as_slice().iter().zip(a.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    fn vectors_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (2usize..5).prop_flat_map(|d| {
            prop::collection::vec(prop::collection::vec(-10.0f64..10.0, d), 3..30)
        })
    }

    proptest! {
        #[test]
        fn mahalanobis_is_nonnegative(pts in vectors_strategy(), probe in prop::collection::vec(-20.0f64..20.0, 5)) {
            if let Ok(fit) = fit_gaussian(&refs(&pts), DEFAULT_REG) {
                let z = &probe[..fit.dimension()];
                prop_assert!(mahalanobis_sq(&fit, z).unwrap() >= 0.0);
            }
        }

        #[test]
        fn fit_is_permutation_invariant(pts in vectors_strategy(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let mut shuffled = pts.clone();
            shuffled.shuffle(&mut crate::rng::seeded(seed));
            let (m1, c1) = mean_and_covariance(&refs(&pts)).unwrap();
            let (m2, c2) = mean_and_covariance(&refs(&shuffled)).unwrap();
            for (a, b) in m1.iter().zip(&m2) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
            for (a, b) in c1.as_slice().iter().zip(c2.as_slice()) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
        }

        #[test]
        fn threshold_size_and_nesting(
            scores in prop::collection::vec(-5i32..5, 1..60),
            f1 in 0.001f64..1.0,
            f2 in 0.001f64..1.0,
        ) {
            let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
            let (lo, hi) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
            let a = percentile_threshold(&scores, lo).unwrap();
            let b = percentile_threshold(&scores, hi).unwrap();
            prop_assert_eq!(a.len(), kept_count(lo, scores.len()));
            prop_assert!(a.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(a.iter().all(|i| b.binary_search(i).is_ok()));
        }
    }
}
