//! Dense linear algebra used by the solvers.
//!
//! Matrices are row-major and always dense. Every constructor rejects
//! NaN and infinities; arithmetic on already-valid values is unchecked.

use std::fmt::Write as _;
use std::ops::Deref;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};

/// Relative change at which power and inverse iteration stop.
pub const EIGEN_TOL: f64 = 1e-10;
/// Iteration cap for power and inverse iteration.
pub const EIGEN_MAX_ITER: usize = 10_000;
/// Seed of the start vector used by the eigenvalue iterations.
const EIGEN_SEED: u64 = 0x5eed_ba5e;

fn check_finite(data: &[f64]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

/// A column vector of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Empty("vector"));
        }
        check_finite(&entries)?;
        Ok(Self(entries))
    }

    pub(crate) fn from_vec(entries: Vec<f64>) -> Self {
        Self(entries)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn filled(n: usize, value: f64) -> Self {
        assert!(value.is_finite(), "fill value must be finite");
        Self(vec![value; n])
    }

    /// The i-th standard basis vector of length n.
    pub fn basis(n: usize, i: usize) -> Self {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Panics if the dimensions differ.
    pub fn dot(&self, other: &DenseVector) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dot: dimension mismatch");
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn norm1(&self) -> f64 {
        self.0.iter().map(|v| v.abs()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn scaled(&self, alpha: f64) -> DenseVector {
        Self(self.0.iter().map(|v| alpha * v).collect())
    }

    pub fn add(&self, other: &DenseVector) -> DenseVector {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &DenseVector) -> DenseVector {
        self.zip_map(other, |a, b| a - b)
    }

    /// self += alpha * other
    pub fn axpy(&mut self, alpha: f64, other: &DenseVector) {
        assert_eq!(self.dim(), other.dim(), "axpy: dimension mismatch");
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += alpha * b;
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseVector {
        Self(self.0.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &DenseVector, f: impl Fn(f64, f64) -> f64) -> DenseVector {
        assert_eq!(self.dim(), other.dim(), "zip_map: dimension mismatch");
        Self(self.0.iter().zip(&other.0).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn distance(&self, other: &DenseVector) -> f64 {
        self.sub(other).norm()
    }

    /// Number of entries with magnitude above `threshold`.
    pub fn count_above(&self, threshold: f64) -> usize {
        self.0.iter().filter(|v| v.abs() > threshold).count()
    }

    /// Serializes as an n×1 matrix in the fixture text format.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} 1\n", self.dim());
        for v in &self.0 {
            let _ = writeln!(s, "{}", fmt_f64(*v));
        }
        s
    }

    /// Parses either an n×1 or a 1×n matrix.
    pub fn from_text(text: &str) -> Result<Self> {
        let m = DenseMatrix::from_text(text)?;
        m.into_vector()
    }
}

impl Deref for DenseVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

fn fmt_f64(v: f64) -> String {
    // 17 significant digits round-trips every double.
    format!("{v:.16e}")
}

/// Row-major dense matrix of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Empty("matrix"));
        }
        check_dim("matrix entries", rows * cols, data.len())?;
        check_finite(&data)?;
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            check_dim("matrix row", c, row.len())?;
            data.extend_from_slice(row);
        }
        Self::new(r, c, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = s;
        }
        m
    }

    pub fn diagonal(d: &[f64]) -> Result<Self> {
        let n = d.len();
        let mut data = vec![0.0; n * n];
        for (i, v) in d.iter().enumerate() {
            data[i * n + i] = *v;
        }
        Self::new(n, n, data)
    }

    /// The n×n upper bidiagonal difference matrix: 1 on the diagonal, −1 above it.
    pub fn upper_bidiagonal(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
            if i + 1 < n {
                m.data[i * n + i + 1] = -1.0;
            }
        }
        m
    }

    /// Stacks vectors as rows.
    pub fn from_row_vectors(rows: &[DenseVector]) -> Result<Self> {
        let v: Vec<Vec<f64>> = rows.iter().map(|r| r.as_slice().to_vec()).collect();
        Self::from_rows(&v)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_vector(&self, i: usize) -> DenseVector {
        DenseVector(self.row(i).to_vec())
    }

    pub fn column(&self, j: usize) -> DenseVector {
        DenseVector((0..self.rows).map(|i| self.get(i, j)).collect())
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// M v. Panics on dimension mismatch.
    pub fn matvec(&self, v: &DenseVector) -> DenseVector {
        assert_eq!(self.cols, v.dim(), "matvec: dimension mismatch");
        DenseVector(
            (0..self.rows)
                .map(|i| self.row(i).iter().zip(&v.0).map(|(a, b)| a * b).sum())
                .collect(),
        )
    }

    /// Mᵀ v. Panics on dimension mismatch.
    pub fn tr_matvec(&self, v: &DenseVector) -> DenseVector {
        assert_eq!(self.rows, v.dim(), "tr_matvec: dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for (i, vi) in v.0.iter().enumerate() {
            if *vi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        DenseVector(out)
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows, "matmul: dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, b) in orow.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// MᵀM, exactly symmetric.
    pub fn gram(&self) -> DenseMatrix {
        let n = self.cols;
        let mut g = Self::zeros(n, n);
        for r in 0..self.rows {
            let row = self.row(r);
            for i in 0..n {
                let ri = row[i];
                if ri == 0.0 {
                    continue;
                }
                for j in i..n {
                    g.data[i * n + j] += ri * row[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                g.data[i * n + j] = g.data[j * n + i];
            }
        }
        g
    }

    pub fn add(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn scaled(&self, alpha: f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| alpha * a).collect(),
        }
    }

    /// self + s·I for square matrices.
    pub fn add_diagonal(&self, s: f64) -> DenseMatrix {
        assert!(self.is_square());
        let mut m = self.clone();
        for i in 0..self.rows {
            m.data[i * self.cols + i] += s;
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest |m_ij − m_ji|; infinite for non-square matrices.
    pub fn asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    fn into_vector(self) -> Result<DenseVector> {
        if self.cols == 1 || self.rows == 1 {
            Ok(DenseVector(self.data))
        } else {
            Err(Error::Parse(format!(
                "expected a vector, found {}x{} matrix",
                self.rows, self.cols
            )))
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.rows, self.cols);
        for i in 0..self.rows {
            let line: Vec<String> = self.row(i).iter().map(|v| fmt_f64(*v)).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let m = Self::read_lines(&mut lines)?;
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(Error::Parse("trailing content after matrix".into()));
        }
        Ok(m)
    }

    /// Reads one matrix block from a line iterator, skipping blank lines
    /// before the header.
    pub fn read_lines<'a>(lines: &mut impl Iterator<Item = &'a str>) -> Result<Self> {
        let header = lines
            .find(|l| !l.trim().is_empty())
            .ok_or_else(|| Error::Parse("missing matrix header".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("bad header {header:?}: {e}")))?;
        if dims.len() != 2 {
            return Err(Error::Parse(format!("bad header {header:?}")));
        }
        let (rows, cols) = (dims[0], dims[1]);
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("missing row {r}")))?;
            let before = data.len();
            for tok in line.split_whitespace() {
                data.push(
                    tok.parse::<f64>()
                        .map_err(|e| Error::Parse(format!("bad entry {tok:?}: {e}")))?,
                );
            }
            if data.len() - before != cols {
                return Err(Error::Parse(format!(
                    "row {r} has {} entries, expected {cols}",
                    data.len() - before
                )));
            }
        }
        Self::new(rows, cols, data)
    }
}

fn eigen_start(n: usize) -> DenseVector {
    let mut rng = ChaCha8Rng::seed_from_u64(EIGEN_SEED);
    let v = DenseVector((0..n).map(|_| StandardNormal.sample(&mut rng)).collect());
    let norm = v.norm();
    v.scaled(1.0 / norm)
}

/// Largest eigenvalue of mᵀm by power iteration.
pub fn spectral_bound(m: &DenseMatrix) -> Result<f64> {
    let mut v = eigen_start(m.cols());
    let mut estimate = 0.0;
    for it in 1..=EIGEN_MAX_ITER {
        let mv = m.matvec(&v);
        let rayleigh = mv.norm_sq();
        let w = m.tr_matvec(&mv);
        let wn = w.norm();
        if wn == 0.0 {
            return Ok(0.0);
        }
        v = w.scaled(1.0 / wn);
        if it > 1 && (rayleigh - estimate).abs() <= EIGEN_TOL * rayleigh {
            return Ok(rayleigh);
        }
        estimate = rayleigh;
    }
    Err(Error::NoConvergence {
        iterations: EIGEN_MAX_ITER,
        estimate,
    })
}

/// Smallest eigenvalue of a symmetric positive definite matrix by inverse iteration.
pub fn smallest_eigenvalue_spd(h: &DenseMatrix) -> Result<f64> {
    let chol = Cholesky::factor(h)?;
    let mut v = eigen_start(h.cols());
    let mut estimate = f64::INFINITY;
    for it in 1..=EIGEN_MAX_ITER {
        let w = chol.solve(&v);
        let wn = w.norm();
        v = w.scaled(1.0 / wn);
        let rayleigh = v.dot(&h.matvec(&v));
        if it > 1 && (rayleigh - estimate).abs() <= EIGEN_TOL * rayleigh.abs() {
            return Ok(rayleigh);
        }
        estimate = rayleigh;
    }
    Err(Error::NoConvergence {
        iterations: EIGEN_MAX_ITER,
        estimate,
    })
}

/// Lower-triangular Cholesky factor of an SPD matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn factor(h: &DenseMatrix) -> Result<Self> {
        if !h.is_square() {
            return Err(Error::DimensionMismatch {
                context: "cholesky (square)",
                expected: h.rows(),
                found: h.cols(),
            });
        }
        let asym = h.asymmetry();
        if asym > 1e-12 * (1.0 + h.max_abs()) {
            return Err(Error::NotSymmetric { asymmetry: asym });
        }
        let n = h.rows();
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = h.get(j, j);
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > 0.0) {
                return Err(Error::NotPositiveDefinite { pivot: j, value: d });
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in (j + 1)..n {
                let mut s = h.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        Ok(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Panics on dimension mismatch.
    pub fn solve(&self, b: &DenseVector) -> DenseVector {
        let n = self.n;
        assert_eq!(n, b.dim(), "cholesky solve: dimension mismatch");
        let mut y = b.0.clone();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[i * n + k] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        DenseVector(y)
    }
}

/// Solves h x = b for symmetric positive definite h.
pub fn solve_spd(h: &DenseMatrix, b: &DenseVector) -> Result<DenseVector> {
    check_dim("solve_spd rhs", h.rows(), b.dim())?;
    Ok(Cholesky::factor(h)?.solve(b))
}

/// LU factorization with partial pivoting for square systems.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &DenseMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch {
                context: "lu (square)",
                expected: a.rows(),
                found: a.cols(),
            });
        }
        let n = a.rows();
        let mut lu = a.data().to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| lu[i * n + k].abs().total_cmp(&lu[j * n + k].abs()))
                .unwrap_or(k);
            if lu[p * n + k].abs() <= 1e-14 * scale {
                return Err(Error::Singular { pivot: k });
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let piv = lu[k * n + k];
            for i in (k + 1)..n {
                let f = lu[i * n + k] / piv;
                lu[i * n + k] = f;
                if f != 0.0 {
                    for j in (k + 1)..n {
                        lu[i * n + j] -= f * lu[k * n + j];
                    }
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    pub fn solve(&self, b: &DenseVector) -> DenseVector {
        let n = self.n;
        assert_eq!(n, b.dim(), "lu solve: dimension mismatch");
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for k in 0..i {
                y[i] -= self.lu[i * n + k] * y[k];
            }
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                y[i] -= self.lu[i * n + k] * y[k];
            }
            y[i] /= self.lu[i * n + i];
        }
        DenseVector(y)
    }
}

/// Solves (σI + aaᵀ)x = v in O(n).
pub fn sherman_morrison_solve(sigma: f64, a: &DenseVector, v: &DenseVector) -> Result<DenseVector> {
    if !(sigma > 0.0) {
        return Err(Error::Parameter(format!("sigma must be positive, got {sigma}")));
    }
    check_dim("sherman_morrison", a.dim(), v.dim())?;
    let coef = a.dot(v) / (sigma + a.norm_sq());
    Ok(v.zip_map(a, |vi, ai| (vi - ai * coef) / sigma))
}

/// Computes (DᵀD)⁻¹v for the n×n upper bidiagonal difference matrix D.
pub fn bidiagonal_gram_solve(n: usize, v: &DenseVector) -> Result<DenseVector> {
    check_dim("bidiagonal_gram_solve", n, v.dim())?;
    // Dᵀw = v, then Dx = w.
    let mut w = v.0.clone();
    for i in 1..n {
        w[i] += w[i - 1];
    }
    for i in (0..n.saturating_sub(1)).rev() {
        w[i] += w[i + 1];
    }
    Ok(DenseVector(w))
}

pub fn soft_threshold(v: &DenseVector, kappa: f64) -> DenseVector {
    v.map(|k| {
        if k > kappa {
            k - kappa
        } else if k < -kappa {
            k + kappa
        } else {
            0.0
        }
    })
}
