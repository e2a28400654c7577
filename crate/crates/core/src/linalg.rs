//! Dense matrices, class statistics and the Mahalanobis distance.
//!
//! Matrices are row-major. Statistics (means, covariances, factorizations)
//! are accumulated in `f64` whatever the storage scalar is, since covariance
//! estimates of wide embeddings lose too much in single precision.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Quadratic forms above this (negative) value are round-off and clamp to zero.
pub const QUADRATIC_FORM_TOLERANCE: f64 = -1e-9;

/// Scale of the automatic ridge relative to the mean variance `trace / d`.
pub const AUTO_RIDGE_SCALE: f64 = 1e-6;

const RIDGE_ESCALATION: f64 = 100.0;
const RIDGE_RETRIES: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: data.len(),
                context: "matrix data length",
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows. An empty slice gives a 0x0 matrix.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    actual: r.len(),
                    context: "row length",
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[T]> + '_ {
        // chunks_exact(0) panics; a zero-column matrix has no meaningful rows here.
        self.data.chunks_exact(self.cols.max(1))
    }

    /// Gathers the given rows, in order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                actual: rhs.rows,
                context: "matmul inner dimension",
            });
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == T::zero() {
                    continue;
                }
                let rhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self^T * rhs` without materializing the transpose.
    pub fn transpose_matmul(&self, rhs: &Self) -> Result<Self> {
        if self.rows != rhs.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                actual: rhs.rows,
                context: "transpose_matmul shared dimension",
            });
        }
        let mut out = Self::zeros(self.cols, rhs.cols);
        for r in 0..self.rows {
            let lhs_row = self.row(r);
            let rhs_row = rhs.row(r);
            for (i, &a) in lhs_row.iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self * rhs^T` without materializing the transpose.
    pub fn matmul_transpose(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                actual: rhs.cols,
                context: "matmul_transpose shared dimension",
            });
        }
        let mut out = Self::zeros(self.rows, rhs.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..rhs.rows {
                let b = rhs.row(j);
                out.data[i * rhs.rows + j] = a.iter().zip(b).map(|(&x, &y)| x * y).sum();
            }
        }
        Ok(out)
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Largest `|a_ij - a_ji|`, relative to the largest absolute entry.
    pub fn max_relative_asymmetry(&self) -> f64 {
        let scale = self
            .data
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.as_f64().abs()));
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0_f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols.min(self.rows) {
                worst = worst.max((self[(i, j)] - self[(j, i)]).as_f64().abs());
            }
        }
        worst / scale
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        self.map(|v| U::lit(v.as_f64()))
    }

    pub fn scale(&mut self, factor: T) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    /// Element-wise `self += rhs`.
    pub fn add_assign(&mut self, rhs: &Self) -> Result<()> {
        if self.shape() != rhs.shape() {
            return Err(Error::DimensionMismatch {
                expected: self.data.len(),
                actual: rhs.data.len(),
                context: "element-wise add",
            });
        }
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, rhs: &Self) -> f64 {
        self.data
            .iter()
            .zip(&rhs.data)
            .fold(0.0, |m, (&a, &b)| m.max((a - b).as_f64().abs()))
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// How the shared covariance is centered before the outer products are summed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceMode {
    /// Each sample is centered by the mean of its own class (pooled within-class).
    #[default]
    ClassCentered,
    /// Every sample is centered by the single global mean.
    GlobalCentered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Divide by `N`.
    #[default]
    MaxLikelihood,
    /// Divide by `N - C` (class-centered) or `N - 1` (global-centered).
    Unbiased,
}

/// Ridge added to the diagonal before inversion.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ridge {
    /// `AUTO_RIDGE_SCALE * trace / d`.
    #[default]
    Auto,
    Fixed(f64),
    /// Plain inverse; falls back to the automatic ridge if the factorization fails.
    Exact,
}

impl Ridge {
    /// Maps a raw ridge value: `0` selects the automatic ridge.
    pub fn from_value(ridge: f64) -> Result<Self> {
        if !(ridge >= 0.0) || !ridge.is_finite() {
            return Err(Error::InvalidConfig(format!("ridge must be >= 0, got {ridge}")));
        }
        Ok(if ridge == 0.0 {
            Ridge::Auto
        } else {
            Ridge::Fixed(ridge)
        })
    }
}

fn check_labels(n: usize, labels: &[usize], class_count: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: labels.len(),
            context: "label count",
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            classes: class_count,
        });
    }
    Ok(())
}

/// Per-class arithmetic means, one row per class.
pub fn class_means<T: Scalar>(
    embeddings: &Matrix<T>,
    labels: &[usize],
    class_count: usize,
) -> Result<Matrix<T>> {
    check_labels(embeddings.rows(), labels, class_count)?;
    let d = embeddings.cols();
    let mut sums = vec![0.0_f64; class_count * d];
    let mut counts = vec![0usize; class_count];
    for (row, &label) in embeddings.row_iter().zip(labels) {
        counts[label] += 1;
        for (s, &v) in sums[label * d..(label + 1) * d].iter_mut().zip(row) {
            *s += v.as_f64();
        }
    }
    if let Some(class) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass { class });
    }
    let data = sums
        .chunks_exact(d.max(1))
        .zip(&counts)
        .flat_map(|(chunk, &c)| chunk.iter().map(move |&s| T::lit(s / c as f64)))
        .collect();
    Matrix::from_vec(class_count, d, data)
}

/// Mean of all rows.
pub fn global_mean<T: Scalar>(embeddings: &Matrix<T>) -> Result<Vec<T>> {
    if embeddings.rows() == 0 {
        return Err(Error::InsufficientSamples {
            needed: 1,
            actual: 0,
        });
    }
    let mut sums = vec![0.0_f64; embeddings.cols()];
    for row in embeddings.row_iter() {
        for (s, &v) in sums.iter_mut().zip(row) {
            *s += v.as_f64();
        }
    }
    let n = embeddings.rows() as f64;
    Ok(sums.into_iter().map(|s| T::lit(s / n)).collect())
}

/// Shared covariance of labelled embeddings.
///
/// `means` holds one row per class and is only read in class-centered mode.
pub fn shared_covariance<T: Scalar>(
    embeddings: &Matrix<T>,
    labels: &[usize],
    means: &Matrix<T>,
    mode: CovarianceMode,
    normalization: Normalization,
) -> Result<Matrix<T>> {
    let n = embeddings.rows();
    if n < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            actual: n,
        });
    }
    let d = embeddings.cols();
    let divisor = match mode {
        CovarianceMode::ClassCentered => {
            check_labels(n, labels, means.rows())?;
            if means.cols() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: means.cols(),
                    context: "class mean dimension",
                });
            }
            match normalization {
                Normalization::MaxLikelihood => n,
                Normalization::Unbiased => n.saturating_sub(means.rows()).max(1),
            }
        }
        CovarianceMode::GlobalCentered => match normalization {
            Normalization::MaxLikelihood => n,
            Normalization::Unbiased => n - 1,
        },
    };
    // One center row per class, or a single global one.
    let centers: Vec<Vec<f64>> = match mode {
        CovarianceMode::ClassCentered => means
            .row_iter()
            .map(|r| r.iter().map(|v| v.as_f64()).collect())
            .collect(),
        CovarianceMode::GlobalCentered => {
            vec![global_mean(embeddings)?.iter().map(|v| v.as_f64()).collect()]
        }
    };

    let mut acc = vec![0.0_f64; d * d];
    let mut centered = vec![0.0_f64; d];
    for (i, row) in embeddings.row_iter().enumerate() {
        let center = match mode {
            CovarianceMode::ClassCentered => &centers[labels[i]],
            CovarianceMode::GlobalCentered => &centers[0],
        };
        for ((c, &v), &m) in centered.iter_mut().zip(row).zip(center) {
            *c = v.as_f64() - m;
        }
        // Upper triangle only; mirrored below so the result is exactly symmetric.
        for a in 0..d {
            let ca = centered[a];
            if ca == 0.0 {
                continue;
            }
            let out = &mut acc[a * d..(a + 1) * d];
            for b in a..d {
                out[b] += ca * centered[b];
            }
        }
    }
    let inv = 1.0 / divisor as f64;
    let mut cov = Matrix::zeros(d, d);
    for a in 0..d {
        for b in a..d {
            let v = T::lit(acc[a * d + b] * inv);
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    Ok(cov)
}

/// Trace of the global (single-mean, `1/N`) covariance, without forming the matrix.
pub fn global_covariance_trace<T: Scalar>(embeddings: &Matrix<T>) -> Result<f64> {
    let n = embeddings.rows();
    if n < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            actual: n,
        });
    }
    let mean = global_mean(embeddings)?;
    let total: f64 = embeddings
        .row_iter()
        .map(|row| {
            row.iter()
                .zip(&mean)
                .map(|(&v, &m)| {
                    let c = v.as_f64() - m.as_f64();
                    c * c
                })
                .sum::<f64>()
        })
        .sum();
    Ok(total / n as f64)
}

/// Lower-triangular Cholesky factor of a row-major `n x n` matrix, or `None`
/// if a pivot is not strictly positive.
fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= l[j * n + k] * l[j * n + k];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return None;
        }
        let ljj = diag.sqrt();
        l[j * n + j] = ljj;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / ljj;
        }
    }
    Some(l)
}

/// Inverse from a Cholesky factor: solves `L L^T X = I` column by column.
fn cholesky_inverse(l: &[f64], n: usize) -> Vec<f64> {
    // Inverse of L first (lower triangular), then A^{-1} = L^{-T} L^{-1}.
    let mut linv = vec![0.0; n * n];
    for i in 0..n {
        linv[i * n + i] = 1.0 / l[i * n + i];
        for j in 0..i {
            let mut s = 0.0;
            for k in j..i {
                s -= l[i * n + k] * linv[k * n + j];
            }
            linv[i * n + j] = s / l[i * n + i];
        }
    }
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = 0.0;
            for k in i..n {
                s += linv[k * n + i] * linv[k * n + j];
            }
            inv[i * n + j] = s;
            inv[j * n + i] = s;
        }
    }
    inv
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularizedInverse<T> {
    pub precision: Matrix<T>,
    pub ridge_used: f64,
}

/// `AUTO_RIDGE_SCALE * trace / d`, or `AUTO_RIDGE_SCALE` itself for a zero matrix.
pub fn auto_ridge<T: Scalar>(sigma: &Matrix<T>) -> f64 {
    let d = sigma.rows().max(1) as f64;
    let mean_var = sigma.trace().as_f64() / d;
    if mean_var > 0.0 {
        AUTO_RIDGE_SCALE * mean_var
    } else {
        AUTO_RIDGE_SCALE
    }
}

/// `(sigma + ridge * I)^{-1}`; a ridge of `0` selects the automatic ridge.
pub fn regularized_inverse<T: Scalar>(sigma: &Matrix<T>, ridge: f64) -> Result<RegularizedInverse<T>> {
    invert_with_ridge(sigma, Ridge::from_value(ridge)?)
}

/// Symmetric positive-definite inverse with ridge escalation: if the
/// factorization fails, the ridge is multiplied by 100 up to two times.
pub fn invert_with_ridge<T: Scalar>(sigma: &Matrix<T>, ridge: Ridge) -> Result<RegularizedInverse<T>> {
    let n = sigma.rows();
    if sigma.cols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: sigma.cols(),
            context: "square matrix",
        });
    }
    if !sigma.is_finite() {
        return Err(Error::non_finite("covariance matrix"));
    }
    let a: Vec<f64> = sigma.as_slice().iter().map(|v| v.as_f64()).collect();
    let mut schedule = Vec::with_capacity(4);
    let start = match ridge {
        Ridge::Auto => auto_ridge(sigma),
        Ridge::Fixed(l) => l,
        Ridge::Exact => {
            schedule.push(0.0);
            auto_ridge(sigma)
        }
    };
    let mut lambda = start;
    for _ in 0..=RIDGE_RETRIES {
        schedule.push(lambda);
        lambda *= RIDGE_ESCALATION;
    }

    for &lambda in &schedule {
        let mut shifted = a.clone();
        for i in 0..n {
            shifted[i * n + i] += lambda;
        }
        if let Some(l) = cholesky(&shifted, n) {
            let inv = cholesky_inverse(&l, n);
            if inv.iter().all(|v| v.is_finite()) {
                let precision = Matrix::from_vec(n, n, inv.into_iter().map(T::lit).collect())?;
                return Ok(RegularizedInverse {
                    precision,
                    ridge_used: lambda,
                });
            }
        }
    }
    Err(Error::NotPositiveDefinite {
        ridge: *schedule.last().unwrap_or(&0.0),
    })
}

/// `(s - mu)^T P (s - mu)` evaluated in `f64`.
pub fn quadratic_form<T: Scalar>(s: &[T], mu: &[T], precision: &Matrix<T>) -> Result<f64> {
    let d = s.len();
    if mu.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: mu.len(),
            context: "mean dimension",
        });
    }
    if precision.shape() != (d, d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: precision.rows(),
            context: "precision dimension",
        });
    }
    let diff: Vec<f64> = s.iter().zip(mu).map(|(&a, &b)| a.as_f64() - b.as_f64()).collect();
    let mut q = 0.0;
    for (i, &di) in diff.iter().enumerate() {
        if di == 0.0 {
            continue;
        }
        let row = precision.row(i);
        let inner: f64 = row.iter().zip(&diff).map(|(&p, &dj)| p.as_f64() * dj).sum();
        q += di * inner;
    }
    Ok(q)
}

/// Mahalanobis distance `sqrt((s - mu)^T P (s - mu))`.
pub fn mahalanobis<T: Scalar>(s: &[T], mu: &[T], precision: &Matrix<T>) -> Result<T> {
    let q = quadratic_form(s, mu, precision)?;
    if q.is_nan() {
        return Err(Error::non_finite("mahalanobis quadratic form"));
    }
    if q < QUADRATIC_FORM_TOLERANCE {
        return Err(Error::NegativeQuadraticForm { value: q });
    }
    Ok(T::lit(q.max(0.0).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StatisticsConfig {
    #[serde(default)]
    pub mode: CovarianceMode,
    #[serde(default)]
    pub normalization: Normalization,
    #[serde(default)]
    pub ridge: Ridge,
}

/// Per-class means plus a shared covariance and its regularized inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassStatistics<T> {
    pub means: Matrix<T>,
    pub covariance: Matrix<T>,
    pub precision: Matrix<T>,
    pub ridge_used: f64,
}

impl<T: Scalar> ClassStatistics<T> {
    pub fn fit(
        embeddings: &Matrix<T>,
        labels: &[usize],
        class_count: usize,
        config: &StatisticsConfig,
    ) -> Result<Self> {
        if class_count < 2 {
            return Err(Error::InvalidData(format!(
                "need at least 2 classes, got {class_count}"
            )));
        }
        if !embeddings.is_finite() {
            return Err(Error::non_finite("embeddings"));
        }
        let means = class_means(embeddings, labels, class_count)?;
        let covariance = shared_covariance(embeddings, labels, &means, config.mode, config.normalization)?;
        let RegularizedInverse {
            precision,
            ridge_used,
        } = invert_with_ridge(&covariance, config.ridge)?;
        Ok(Self {
            means,
            covariance,
            precision,
            ridge_used,
        })
    }

    pub fn class_count(&self) -> usize {
        self.means.rows()
    }

    pub fn dim(&self) -> usize {
        self.means.cols()
    }

    /// Distance from `s` to every class mean.
    pub fn distances(&self, s: &[T]) -> Result<Vec<T>> {
        self.means
            .row_iter()
            .map(|mu| mahalanobis(s, mu, &self.precision))
            .collect()
    }
}
