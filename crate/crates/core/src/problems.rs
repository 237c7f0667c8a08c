//! Losses, regularizers, linear constraints and seeded data generation.

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{smallest_eigenvalue_spd, soft_threshold, spectral_bound, DenseMatrix, DenseVector};

/// Default standard deviation of the observation noise.
pub const DEFAULT_NOISE_SIGMA: f64 = 1e-2;
/// Default number of constant blocks in a TV signal.
pub const DEFAULT_TV_BLOCKS: usize = 5;
/// Default radius over which squared-loss gradients are bounded.
pub const DEFAULT_GRADIENT_RADIUS: f64 = 10.0;

/// Recognized shape of a constraint block, used for O(n) products and solves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Structure {
    ScaledIdentity(f64),
    UpperBidiagonal,
    General,
}

impl Structure {
    pub fn detect(m: &DenseMatrix) -> Structure {
        if !m.is_square() {
            return Structure::General;
        }
        let n = m.rows();
        let s = m.get(0, 0);
        let mut scaled = s != 0.0;
        let mut bidiag = true;
        for i in 0..n {
            for j in 0..n {
                let v = m.get(i, j);
                let want_id = if i == j { s } else { 0.0 };
                let want_bd = if i == j {
                    1.0
                } else if j == i + 1 {
                    -1.0
                } else {
                    0.0
                };
                scaled &= v == want_id;
                bidiag &= v == want_bd;
            }
            if !scaled && !bidiag {
                return Structure::General;
            }
        }
        if scaled {
            Structure::ScaledIdentity(s)
        } else if bidiag {
            Structure::UpperBidiagonal
        } else {
            Structure::General
        }
    }

    fn apply(&self, m: &DenseMatrix, x: &DenseVector) -> DenseVector {
        match *self {
            Structure::ScaledIdentity(s) => x.scaled(s),
            Structure::UpperBidiagonal => {
                let n = x.dim();
                let mut out = x.clone().into_vec();
                for i in 0..n.saturating_sub(1) {
                    out[i] -= x[i + 1];
                }
                DenseVector::from_vec(out)
            }
            Structure::General => m.matvec(x),
        }
    }

    fn apply_transpose(&self, m: &DenseMatrix, y: &DenseVector) -> DenseVector {
        match *self {
            Structure::ScaledIdentity(s) => y.scaled(s),
            Structure::UpperBidiagonal => {
                let n = y.dim();
                let mut out = y.clone().into_vec();
                for i in 1..n {
                    out[i] -= y[i - 1];
                }
                DenseVector::from_vec(out)
            }
            Structure::General => m.tr_matvec(y),
        }
    }

    /// (λ_max(MᵀM), λ_min(MMᵀ)) in closed form for structured blocks.
    fn closed_form_bounds(&self, n: usize) -> Option<(f64, f64)> {
        use std::f64::consts::PI;
        match *self {
            Structure::ScaledIdentity(s) => Some((s * s, s * s)),
            Structure::UpperBidiagonal => {
                let d = 2.0 * n as f64 + 1.0;
                Some((2.0 + 2.0 * (2.0 * PI / d).cos(), 2.0 - 2.0 * (PI / d).cos()))
            }
            Structure::General => None,
        }
    }
}

/// The constraint Ax + Bz = c with cached spectral bounds.
#[derive(Debug, Clone)]
pub struct ConstraintSpec {
    a: DenseMatrix,
    b: DenseMatrix,
    c: DenseVector,
    a_structure: Structure,
    b_structure: Structure,
    lambda_max_a: f64,
    lambda_max_b: f64,
    lambda_min_a: Option<f64>,
}

impl ConstraintSpec {
    pub fn new(a: DenseMatrix, b: DenseMatrix, c: DenseVector) -> Result<Self> {
        check_dim("constraint rows of B", a.rows(), b.rows())?;
        check_dim("constraint rhs", a.rows(), c.dim())?;
        let a_structure = Structure::detect(&a);
        let b_structure = Structure::detect(&b);
        let (lambda_max_a, lambda_min_a) = match a_structure.closed_form_bounds(a.rows()) {
            Some((hi, lo)) => (hi, Some(lo)),
            None => {
                let hi = spectral_bound(&a)?;
                let lo = if a.is_square() {
                    let aat = a.matmul(&a.transpose());
                    match smallest_eigenvalue_spd(&aat) {
                        Ok(v) if v > 0.0 => Some(v),
                        Ok(_) | Err(Error::NotPositiveDefinite { .. }) => None,
                        Err(e) => return Err(e),
                    }
                } else {
                    None
                };
                (hi, lo)
            }
        };
        let lambda_max_b = match b_structure.closed_form_bounds(b.rows()) {
            Some((hi, _)) => hi,
            None => spectral_bound(&b)?,
        };
        Ok(Self {
            a,
            b,
            c,
            a_structure,
            b_structure,
            lambda_max_a,
            lambda_max_b,
            lambda_min_a,
        })
    }

    /// x − z = 0.
    pub fn consensus(n: usize) -> Self {
        Self::new(
            DenseMatrix::identity(n),
            DenseMatrix::scaled_identity(n, -1.0),
            DenseVector::zeros(n),
        )
        .expect("consensus constraint is well formed")
    }

    /// Dx − z = 0.
    pub fn generalized_lasso(d: DenseMatrix) -> Result<Self> {
        let m = d.rows();
        Self::new(d, DenseMatrix::scaled_identity(m, -1.0), DenseVector::zeros(m))
    }

    /// Dx − z = 0 with D the upper bidiagonal difference matrix.
    pub fn total_variation(n: usize) -> Self {
        Self::generalized_lasso(DenseMatrix::upper_bidiagonal(n)).expect("TV constraint is well formed")
    }

    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }
    pub fn b(&self) -> &DenseMatrix {
        &self.b
    }
    pub fn c(&self) -> &DenseVector {
        &self.c
    }
    pub fn a_structure(&self) -> Structure {
        self.a_structure
    }
    pub fn b_structure(&self) -> Structure {
        self.b_structure
    }
    pub fn n1(&self) -> usize {
        self.a.cols()
    }
    pub fn n2(&self) -> usize {
        self.b.cols()
    }
    pub fn m(&self) -> usize {
        self.a.rows()
    }
    pub fn lambda_max_a(&self) -> f64 {
        self.lambda_max_a
    }
    pub fn lambda_max_b(&self) -> f64 {
        self.lambda_max_b
    }
    /// Smallest eigenvalue of AAᵀ when A is square and invertible.
    pub fn lambda_min_a(&self) -> Option<f64> {
        self.lambda_min_a
    }

    pub fn apply_a(&self, x: &DenseVector) -> DenseVector {
        self.a_structure.apply(&self.a, x)
    }
    pub fn apply_at(&self, y: &DenseVector) -> DenseVector {
        self.a_structure.apply_transpose(&self.a, y)
    }
    pub fn apply_b(&self, z: &DenseVector) -> DenseVector {
        self.b_structure.apply(&self.b, z)
    }
    pub fn apply_bt(&self, y: &DenseVector) -> DenseVector {
        self.b_structure.apply_transpose(&self.b, y)
    }

    /// Ax + Bz − c.
    pub fn residual(&self, x: &DenseVector, z: &DenseVector) -> DenseVector {
        let mut r = self.apply_a(x);
        r.axpy(1.0, &self.apply_b(z));
        r.axpy(-1.0, &self.c);
        r
    }
}

/// One round's loss f_t.
#[derive(Debug, Clone, PartialEq)]
pub enum LossTerm {
    /// (a·x − b)²
    Squared { a: DenseVector, b: f64 },
    /// (a·x − b)² + (μ/2)‖x‖², μ-strongly convex.
    RidgeSquared { a: DenseVector, b: f64, mu: f64 },
    /// max(0, 1 − label·a·x)
    Hinge { a: DenseVector, label: f64 },
    /// log(1 + exp(−label·a·x))
    Logistic { a: DenseVector, label: f64 },
    /// g·x
    Linear { g: DenseVector },
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// log(1 + exp(s)) without overflow.
fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

impl LossTerm {
    pub fn dim(&self) -> usize {
        match self {
            LossTerm::Squared { a, .. }
            | LossTerm::RidgeSquared { a, .. }
            | LossTerm::Hinge { a, .. }
            | LossTerm::Logistic { a, .. } => a.dim(),
            LossTerm::Linear { g } => g.dim(),
        }
    }

    pub fn value(&self, x: &DenseVector) -> f64 {
        match self {
            LossTerm::Squared { a, b } => (a.dot(x) - b).powi(2),
            LossTerm::RidgeSquared { a, b, mu } => (a.dot(x) - b).powi(2) + 0.5 * mu * x.norm_sq(),
            LossTerm::Hinge { a, label } => (1.0 - label * a.dot(x)).max(0.0),
            LossTerm::Logistic { a, label } => softplus(-label * a.dot(x)),
            LossTerm::Linear { g } => g.dot(x),
        }
    }

    /// A subgradient; the gradient wherever the loss is differentiable.
    pub fn subgradient(&self, x: &DenseVector) -> DenseVector {
        match self {
            LossTerm::Squared { a, b } => a.scaled(2.0 * (a.dot(x) - b)),
            LossTerm::RidgeSquared { a, b, mu } => {
                let mut g = x.scaled(*mu);
                g.axpy(2.0 * (a.dot(x) - b), a);
                g
            }
            LossTerm::Hinge { a, label } => {
                if label * a.dot(x) < 1.0 {
                    a.scaled(-label)
                } else {
                    DenseVector::zeros(a.dim())
                }
            }
            LossTerm::Logistic { a, label } => a.scaled(-label * sigmoid(-label * a.dot(x))),
            LossTerm::Linear { g } => g.clone(),
        }
    }

    /// Whether the whole term is differentiable. Hinge is the only
    /// nonsmooth kind; its smooth part is zero.
    pub fn is_smooth(&self) -> bool {
        !matches!(self, LossTerm::Hinge { .. })
    }

    /// Strong-convexity modulus of the term.
    pub fn strong_convexity(&self) -> f64 {
        match self {
            LossTerm::RidgeSquared { mu, .. } => *mu,
            _ => 0.0,
        }
    }
}

/// ½xᵀPx + qᵀx + r.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticLoss {
    pub p: DenseMatrix,
    pub q: DenseVector,
    pub r: f64,
}

impl QuadraticLoss {
    pub fn new(p: DenseMatrix, q: DenseVector, r: f64) -> Result<Self> {
        check_dim("quadratic loss", p.rows(), q.dim())?;
        check_dim("quadratic loss", p.cols(), q.dim())?;
        Ok(Self { p, q, r })
    }

    pub fn value(&self, x: &DenseVector) -> f64 {
        0.5 * x.dot(&self.p.matvec(x)) + self.q.dot(x) + self.r
    }

    pub fn gradient(&self, x: &DenseVector) -> DenseVector {
        self.p.matvec(x).add(&self.q)
    }

    /// The average (1/N)Σ f_t of quadratic-representable terms.
    pub fn average_of(terms: &[LossTerm]) -> Result<Self> {
        let first = terms.first().ok_or(Error::Empty("loss list"))?;
        let n = first.dim();
        let inv = 1.0 / terms.len() as f64;
        let mut p = vec![0.0; n * n];
        let mut q = vec![0.0; n];
        let mut r = 0.0;
        for term in terms {
            check_dim("averaged loss", n, term.dim())?;
            let (a, b, mu) = match term {
                LossTerm::Squared { a, b } => (Some(a), *b, 0.0),
                LossTerm::RidgeSquared { a, b, mu } => (Some(a), *b, *mu),
                LossTerm::Linear { g } => {
                    for (qi, gi) in q.iter_mut().zip(g.iter()) {
                        *qi += inv * gi;
                    }
                    (None, 0.0, 0.0)
                }
                _ => {
                    return Err(Error::Capability(
                        "only squared and linear losses aggregate into a quadratic".into(),
                    ))
                }
            };
            if let Some(a) = a {
                for i in 0..n {
                    if a[i] == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        p[i * n + j] += 2.0 * inv * a[i] * a[j];
                    }
                    q[i] -= 2.0 * inv * a[i] * b;
                }
                r += inv * b * b;
                for i in 0..n {
                    p[i * n + i] += inv * mu;
                }
            }
        }
        // Symmetrize exactly.
        for i in 0..n {
            for j in 0..i {
                let s = 0.5 * (p[i * n + j] + p[j * n + i]);
                p[i * n + j] = s;
                p[j * n + i] = s;
            }
        }
        Self::new(DenseMatrix::new(n, n, p)?, DenseVector::new(q)?, r)
    }
}

/// The x-block objective f.
#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    Zero,
    Term(LossTerm),
    Quadratic(QuadraticLoss),
}

impl Objective {
    pub fn value(&self, x: &DenseVector) -> f64 {
        match self {
            Objective::Zero => 0.0,
            Objective::Term(t) => t.value(x),
            Objective::Quadratic(q) => q.value(x),
        }
    }

    pub fn subgradient(&self, x: &DenseVector) -> DenseVector {
        match self {
            Objective::Zero => DenseVector::zeros(x.dim()),
            Objective::Term(t) => t.subgradient(x),
            Objective::Quadratic(q) => q.gradient(x),
        }
    }

    pub fn is_smooth(&self) -> bool {
        match self {
            Objective::Term(t) => t.is_smooth(),
            _ => true,
        }
    }
}

/// The z-block regularizer g.
#[derive(Debug, Clone, PartialEq)]
pub enum Regularizer {
    Zero,
    /// λ‖z‖₁
    L1(f64),
    /// λ‖z‖²
    SquaredL2(f64),
    /// Indicator of {lower ≤ z ≤ upper}; a missing lower bound means −∞.
    Box {
        lower: Option<DenseVector>,
        upper: DenseVector,
    },
    /// Indicator of the probability simplex.
    Simplex,
}

/// Membership slack for indicator regularizers.
const SET_TOL: f64 = 1e-12;

impl Regularizer {
    /// Indicator of {z ≤ b}.
    pub fn upper_box(b: DenseVector) -> Self {
        Regularizer::Box { lower: None, upper: b }
    }

    pub fn bounded_box(lower: DenseVector, upper: DenseVector) -> Result<Self> {
        check_dim("box bounds", lower.dim(), upper.dim())?;
        if lower.iter().zip(upper.iter()).any(|(l, u)| l > u) {
            return Err(Error::Parameter("box lower bound exceeds upper bound".into()));
        }
        Ok(Regularizer::Box {
            lower: Some(lower),
            upper,
        })
    }

    pub fn is_indicator(&self) -> bool {
        matches!(self, Regularizer::Box { .. } | Regularizer::Simplex)
    }

    /// Strong-convexity modulus β₂.
    pub fn strong_convexity(&self) -> f64 {
        match self {
            Regularizer::SquaredL2(l) => 2.0 * l,
            _ => 0.0,
        }
    }

    pub fn value(&self, z: &DenseVector) -> f64 {
        match self {
            Regularizer::Zero => 0.0,
            Regularizer::L1(l) => l * z.norm1(),
            Regularizer::SquaredL2(l) => l * z.norm_sq(),
            Regularizer::Box { lower, upper } => {
                let tol = |b: f64| SET_TOL * (1.0 + b.abs());
                let above = z.iter().zip(upper.iter()).any(|(zi, u)| *zi > u + tol(*u));
                let below = lower
                    .as_ref()
                    .is_some_and(|l| z.iter().zip(l.iter()).any(|(zi, li)| *zi < li - tol(*li)));
                if above || below {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
            Regularizer::Simplex => {
                if z.iter().all(|v| *v >= -SET_TOL) && (z.sum() - 1.0).abs() <= 1e-9 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// argmin_z g(z) + (ρ/2)‖z − w‖².
    pub fn prox(&self, w: &DenseVector, rho: f64) -> DenseVector {
        match self {
            Regularizer::Zero => w.clone(),
            Regularizer::L1(l) => soft_threshold(w, l / rho),
            Regularizer::SquaredL2(l) => w.scaled(rho / (rho + 2.0 * l)),
            Regularizer::Box { .. } | Regularizer::Simplex => self.project(w),
        }
    }

    /// Euclidean projection onto the feasible set (identity for finite regularizers).
    pub fn project(&self, w: &DenseVector) -> DenseVector {
        match self {
            Regularizer::Box { lower, upper } => {
                let clipped = w.zip_map(upper, f64::min);
                match lower {
                    Some(l) => clipped.zip_map(l, f64::max),
                    None => clipped,
                }
            }
            Regularizer::Simplex => project_simplex(w),
            _ => w.clone(),
        }
    }

    /// Distance (or a close upper estimate for the simplex) from s to ∂g(z).
    pub fn subgradient_distance(&self, z: &DenseVector, s: &DenseVector) -> f64 {
        match self {
            Regularizer::Zero => s.norm(),
            Regularizer::SquaredL2(l) => s.sub(&z.scaled(2.0 * l)).norm(),
            Regularizer::L1(l) => z
                .iter()
                .zip(s.iter())
                .map(|(zi, si)| {
                    let d = if *zi != 0.0 {
                        si - l * zi.signum()
                    } else {
                        (si.abs() - l).max(0.0)
                    };
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
            Regularizer::Box { lower, upper } => {
                let mut acc = 0.0;
                for i in 0..z.dim() {
                    let lo = lower.as_ref().map_or(f64::NEG_INFINITY, |l| l[i]);
                    let at_upper = z[i] >= upper[i];
                    let at_lower = z[i] <= lo;
                    let d = match (at_lower, at_upper) {
                        (true, true) => 0.0,
                        (false, true) => (-s[i]).max(0.0),
                        (true, false) => s[i].max(0.0),
                        (false, false) => s[i].abs(),
                    };
                    acc += d * d;
                }
                acc.sqrt()
            }
            Regularizer::Simplex => {
                let support: Vec<usize> = (0..z.dim()).filter(|&i| z[i] > 0.0).collect();
                if support.is_empty() {
                    return f64::INFINITY;
                }
                let tau = support.iter().map(|&i| s[i]).sum::<f64>() / support.len() as f64;
                (0..z.dim())
                    .map(|i| {
                        let d = if z[i] > 0.0 { s[i] - tau } else { (s[i] - tau).max(0.0) };
                        d * d
                    })
                    .sum::<f64>()
                    .sqrt()
            }
        }
    }
}

/// Euclidean projection onto {z ≥ 0, Σz = 1}.
pub fn project_simplex(w: &DenseVector) -> DenseVector {
    let mut u: Vec<f64> = w.as_slice().to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (j, uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - 1.0) / (j as f64 + 1.0);
        if uj - t > 0.0 {
            tau = t;
        }
    }
    w.map(|v| (v - tau).max(0.0))
}

/// Seeded regression data with metadata for the fixture header.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub a_data: DenseMatrix,
    pub b_data: DenseVector,
    pub x0_true: DenseVector,
    pub seed: u64,
    pub k: usize,
    pub noise_sigma: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetHeader {
    seed: u64,
    #[serde(rename = "N")]
    n_rows: usize,
    n: usize,
    k: usize,
    noise_sigma: f64,
}

fn gaussian_matrix_unit_columns(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Result<DenseMatrix> {
    let mut data: Vec<f64> = (0..rows * cols).map(|_| StandardNormal.sample(&mut *rng)).collect();
    for j in 0..cols {
        let norm = (0..rows).map(|i| data[i * cols + j].powi(2)).sum::<f64>().sqrt();
        for i in 0..rows {
            data[i * cols + j] /= norm;
        }
    }
    DenseMatrix::new(rows, cols, data)
}

fn observe(rng: &mut ChaCha8Rng, a: &DenseMatrix, x0: &DenseVector, noise_sigma: f64) -> Result<DenseVector> {
    let n_rows = a.rows() as f64;
    let clean = a.matvec(x0).scaled(1.0 / n_rows);
    if noise_sigma == 0.0 {
        return Ok(clean);
    }
    let noise = Normal::new(0.0, noise_sigma).map_err(|e| Error::Parameter(e.to_string()))?;
    DenseVector::new(clean.iter().map(|v| v + noise.sample(&mut *rng)).collect())
}

fn check_sizes(n_rows: usize, n: usize, noise_sigma: f64) -> Result<()> {
    if n_rows == 0 || n == 0 {
        return Err(Error::Parameter("N and n must be positive".into()));
    }
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(Error::Parameter("noise_sigma must be finite and nonnegative".into()));
    }
    Ok(())
}

/// Sparse regression stream: column-normalized Gaussian A, k-sparse x0,
/// b = A·x0/N plus Gaussian noise.
pub fn gen_lasso_stream(seed: u64, n_rows: usize, n: usize, k: usize, noise_sigma: f64) -> Result<Dataset> {
    check_sizes(n_rows, n, noise_sigma)?;
    if k > n {
        return Err(Error::Parameter(format!("k = {k} exceeds n = {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a_data = gaussian_matrix_unit_columns(&mut rng, n_rows, n)?;
    let mut x0 = vec![0.0; n];
    for i in sample_indices(&mut rng, n, k).into_vec() {
        x0[i] = StandardNormal.sample(&mut rng);
    }
    let x0_true = DenseVector::new(x0)?;
    let b_data = observe(&mut rng, &a_data, &x0_true, noise_sigma)?;
    Ok(Dataset {
        a_data,
        b_data,
        x0_true,
        seed,
        k,
        noise_sigma,
    })
}

/// Piecewise-constant signal: ones with `num_blocks` random blocks set to values in [1, 10].
pub fn gen_tv_signal(seed: u64, n: usize, num_blocks: usize) -> DenseVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    tv_signal_from(&mut rng, n, num_blocks)
}

fn tv_signal_from(rng: &mut ChaCha8Rng, n: usize, num_blocks: usize) -> DenseVector {
    let mut x = vec![1.0; n];
    let max_len = (n / 4).max(1);
    for _ in 0..num_blocks {
        let len = rng.gen_range(1..=max_len.min(n));
        let start = rng.gen_range(0..=n - len);
        let value = rng.gen_range(1.0..=10.0);
        x[start..start + len].iter_mut().for_each(|v| *v = value);
    }
    DenseVector::from_vec(x)
}

/// Regression stream whose ground truth is a TV signal; `k` records the block count.
pub fn gen_tv_dataset(seed: u64, n_rows: usize, n: usize, num_blocks: usize, noise_sigma: f64) -> Result<Dataset> {
    check_sizes(n_rows, n, noise_sigma)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a_data = gaussian_matrix_unit_columns(&mut rng, n_rows, n)?;
    let x0_true = tv_signal_from(&mut rng, n, num_blocks);
    let b_data = observe(&mut rng, &a_data, &x0_true, noise_sigma)?;
    Ok(Dataset {
        a_data,
        b_data,
        x0_true,
        seed,
        k: num_blocks,
        noise_sigma,
    })
}

/// λ = q · ‖Aᵀb‖_∞ / N.
pub fn lambda_from_fraction(q: f64, dataset: &Dataset) -> Result<f64> {
    lambda_from_parts(q, &dataset.a_data, &dataset.b_data, dataset.len())
}

/// λ = q · ‖Aᵀb‖_∞ / N with an explicit normalizer N.
pub fn lambda_from_parts(q: f64, a: &DenseMatrix, b: &DenseVector, n_examples: usize) -> Result<f64> {
    if !(q >= 0.0) {
        return Err(Error::Parameter(format!("q must be nonnegative, got {q}")));
    }
    check_dim("lambda rhs", a.rows(), b.dim())?;
    if n_examples == 0 {
        return Err(Error::Parameter("N must be positive".into()));
    }
    Ok(q * a.tr_matvec(b).max_abs() / n_examples as f64)
}

impl Dataset {
    /// Number of examples N.
    pub fn len(&self) -> usize {
        self.a_data.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Feature dimension n.
    pub fn dim(&self) -> usize {
        self.a_data.cols()
    }

    pub fn squared_term(&self, t: usize) -> LossTerm {
        LossTerm::Squared {
            a: self.a_data.row_vector(t),
            b: self.b_data[t],
        }
    }

    pub fn ridge_term(&self, t: usize, mu: f64) -> LossTerm {
        LossTerm::RidgeSquared {
            a: self.a_data.row_vector(t),
            b: self.b_data[t],
            mu,
        }
    }

    pub fn squared_terms(&self) -> Vec<LossTerm> {
        (0..self.len()).map(|t| self.squared_term(t)).collect()
    }

    /// max_t 2‖a_t‖(‖a_t‖·radius + |b_t|): a bound on squared-loss gradients over ‖x‖ ≤ radius.
    pub fn squared_gradient_bound(&self, radius: f64) -> f64 {
        (0..self.len())
            .map(|t| {
                let an = self.a_data.row_vector(t).norm();
                2.0 * an * (an * radius + self.b_data[t].abs())
            })
            .fold(0.0, f64::max)
    }

    /// Each example (a_t, b_t) divided by ‖a_t‖; zero rows are kept.
    pub fn with_unit_rows(&self) -> Result<Dataset> {
        let mut rows = Vec::with_capacity(self.len());
        let mut b = Vec::with_capacity(self.len());
        for t in 0..self.len() {
            let a = self.a_data.row_vector(t);
            let scale = match a.norm() {
                n if n > 0.0 => 1.0 / n,
                _ => 1.0,
            };
            rows.push(a.scaled(scale));
            b.push(self.b_data[t] * scale);
        }
        Ok(Dataset {
            a_data: DenseMatrix::from_row_vectors(&rows)?,
            b_data: DenseVector::new(b)?,
            ..self.clone()
        })
    }

    pub fn to_text(&self) -> String {
        let header = DatasetHeader {
            seed: self.seed,
            n_rows: self.len(),
            n: self.dim(),
            k: self.k,
            noise_sigma: self.noise_sigma,
        };
        let mut s = serde_json::to_string(&header).expect("header serializes");
        s.push('\n');
        s.push_str(&self.a_data.to_text());
        s.push_str(&self.b_data.to_text());
        s.push_str(&self.x0_true.to_text());
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header_line = lines.next().ok_or_else(|| Error::Parse("empty dataset".into()))?;
        let header: DatasetHeader =
            serde_json::from_str(header_line).map_err(|e| Error::Parse(format!("dataset header: {e}")))?;
        let a_data = DenseMatrix::read_lines(&mut lines)?;
        let b_data = DenseVector::new(DenseMatrix::read_lines(&mut lines)?.data().to_vec())?;
        let x0_true = DenseVector::new(DenseMatrix::read_lines(&mut lines)?.data().to_vec())?;
        check_dim("dataset N", header.n_rows, a_data.rows())?;
        check_dim("dataset n", header.n, a_data.cols())?;
        check_dim("dataset b", header.n_rows, b_data.dim())?;
        check_dim("dataset x0", header.n, x0_true.dim())?;
        Ok(Dataset {
            a_data,
            b_data,
            x0_true,
            seed: header.seed,
            k: header.k,
            noise_sigma: header.noise_sigma,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DenseVector {
        DenseVector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn structure_detection() {
        assert_eq!(Structure::detect(&DenseMatrix::identity(3)), Structure::ScaledIdentity(1.0));
        assert_eq!(
            Structure::detect(&DenseMatrix::scaled_identity(3, -1.0)),
            Structure::ScaledIdentity(-1.0)
        );
        assert_eq!(Structure::detect(&DenseMatrix::upper_bidiagonal(4)), Structure::UpperBidiagonal);
        assert_eq!(Structure::detect(&DenseMatrix::upper_bidiagonal(1)), Structure::ScaledIdentity(1.0));
        assert_eq!(Structure::detect(&DenseMatrix::diagonal(&[1.0, 2.0]).unwrap()), Structure::General);
        assert_eq!(Structure::detect(&DenseMatrix::zeros(2, 3)), Structure::General);
    }

    #[test]
    fn structured_products_match_dense() {
        let x = v(&[1.0, -2.0, 0.5, 4.0]);
        for m in [DenseMatrix::upper_bidiagonal(4), DenseMatrix::scaled_identity(4, -2.5)] {
            let s = Structure::detect(&m);
            assert_eq!(s.apply(&m, &x), m.matvec(&x));
            assert_eq!(s.apply_transpose(&m, &x), m.tr_matvec(&x));
        }
    }

    #[test]
    fn cached_bounds_match_power_iteration() {
        for c in [ConstraintSpec::consensus(5), ConstraintSpec::total_variation(12)] {
            let lam_a = spectral_bound(c.a()).unwrap();
            let lam_b = spectral_bound(c.b()).unwrap();
            assert!((c.lambda_max_a() - lam_a).abs() <= 1e-8 * lam_a.max(1.0));
            assert!((c.lambda_max_b() - lam_b).abs() <= 1e-8 * lam_b.max(1.0));
            let aat = c.a().matmul(&c.a().transpose());
            let lo = smallest_eigenvalue_spd(&aat).unwrap();
            assert!((c.lambda_min_a().unwrap() - lo).abs() <= 1e-8);
        }
        let singular = ConstraintSpec::new(
            DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap(),
            DenseMatrix::identity(2),
            DenseVector::zeros(2),
        )
        .unwrap();
        assert!(singular.lambda_min_a().is_none());
        assert!((singular.lambda_max_a() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn constraint_dimension_checks() {
        let r = ConstraintSpec::new(DenseMatrix::identity(2), DenseMatrix::identity(3), DenseVector::zeros(2));
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
        let c = ConstraintSpec::consensus(2);
        assert_eq!(c.residual(&v(&[1.0, 2.0]), &v(&[0.5, 2.0])), v(&[0.5, 0.0]));
    }

    #[test]
    fn loss_examples() {
        let sq = LossTerm::Squared { a: v(&[1.0, 0.0]), b: 1.0 };
        let x = v(&[1.0, 5.0]);
        assert_eq!(sq.value(&x), 0.0);
        assert_eq!(sq.subgradient(&x), v(&[0.0, 0.0]));
        let h = LossTerm::Hinge { a: v(&[1.0, 0.0]), label: 1.0 };
        assert_eq!(h.value(&v(&[2.0, 0.0])), 0.0);
        assert_eq!(h.subgradient(&v(&[2.0, 0.0])), v(&[0.0, 0.0]));
        let lg = LossTerm::Logistic { a: v(&[1.0]), label: 1.0 };
        assert!((lg.value(&v(&[800.0]))).abs() < 1e-300);
        assert!((lg.value(&v(&[-800.0])) - 800.0).abs() < 1e-9);
    }

    #[test]
    fn subgradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let n = 4;
        let rv = |rng: &mut ChaCha8Rng| v(&(0..n).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<_>>());
        for _ in 0..50 {
            let a = rv(&mut rng);
            let x = rv(&mut rng);
            let terms = [
                LossTerm::Squared { a: a.clone(), b: 0.3 },
                LossTerm::RidgeSquared { a: a.clone(), b: -0.2, mu: 0.7 },
                LossTerm::Hinge { a: a.clone(), label: -1.0 },
                LossTerm::Logistic { a: a.clone(), label: 1.0 },
                LossTerm::Linear { g: a.clone() },
            ];
            for term in &terms {
                if let LossTerm::Hinge { a, label } = term {
                    if (1.0 - label * a.dot(&x)).abs() < 1e-6 {
                        continue;
                    }
                }
                let g = term.subgradient(&x);
                let h = 1e-6;
                for i in 0..n {
                    let (mut xp, mut xm) = (x.clone().into_vec(), x.clone().into_vec());
                    xp[i] += h;
                    xm[i] -= h;
                    let fd = (term.value(&v(&xp)) - term.value(&v(&xm))) / (2.0 * h);
                    assert!((fd - g[i]).abs() < 1e-5, "{term:?} coord {i}: {fd} vs {}", g[i]);
                }
            }
        }
    }

    #[test]
    fn quadratic_average_matches_terms() {
        let ds = gen_lasso_stream(3, 12, 5, 2, 0.01).unwrap();
        let terms = ds.squared_terms();
        let q = QuadraticLoss::average_of(&terms).unwrap();
        let x = v(&[0.3, -1.0, 2.0, 0.0, 0.5]);
        let direct: f64 = terms.iter().map(|t| t.value(&x)).sum::<f64>() / terms.len() as f64;
        assert!((q.value(&x) - direct).abs() < 1e-12);
        let hinge = [LossTerm::Hinge { a: x.clone(), label: 1.0 }];
        assert!(matches!(QuadraticLoss::average_of(&hinge), Err(Error::Capability(_))));
    }

    #[test]
    fn regularizer_prox_examples() {
        let w = v(&[3.0, 0.5, -3.0]);
        assert_eq!(Regularizer::Zero.prox(&w, 1.0), w);
        assert_eq!(Regularizer::L1(1.0).prox(&w, 1.0), v(&[2.0, 0.0, -2.0]));
        assert_eq!(Regularizer::upper_box(v(&[1.0, 1.0])).prox(&v(&[2.0, 0.0]), 3.0), v(&[1.0, 0.0]));
        assert_eq!(Regularizer::SquaredL2(0.5).prox(&v(&[2.0]), 1.0), v(&[1.0]));
        let p = Regularizer::Simplex.prox(&v(&[0.5, 0.5, 2.0]), 1.0);
        assert!((p.sum() - 1.0).abs() < 1e-12 && p.iter().all(|x| *x >= 0.0));
        assert_eq!(p, v(&[0.0, 0.0, 1.0]));
    }

    #[test]
    fn regularizer_values() {
        for g in [Regularizer::Zero, Regularizer::L1(2.0), Regularizer::SquaredL2(3.0)] {
            assert_eq!(g.value(&DenseVector::zeros(3)), 0.0);
            assert!(g.value(&v(&[1.0, -2.0, 0.1])) >= 0.0);
        }
        let b = Regularizer::upper_box(v(&[1.0, 1.0]));
        assert_eq!(b.value(&v(&[1.0, -5.0])), 0.0);
        assert_eq!(b.value(&v(&[1.1, 0.0])), f64::INFINITY);
        assert_eq!(Regularizer::Simplex.value(&v(&[0.25, 0.75])), 0.0);
        assert_eq!(Regularizer::Simplex.value(&v(&[0.5, 0.75])), f64::INFINITY);
    }

    #[test]
    fn prox_optimality_conditions() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let regs = [
            Regularizer::Zero,
            Regularizer::L1(0.7),
            Regularizer::SquaredL2(0.4),
            Regularizer::upper_box(v(&[0.2, 0.0, 1.0, -0.5])),
            Regularizer::bounded_box(v(&[-1.0; 4]), v(&[1.0; 4])).unwrap(),
            Regularizer::Simplex,
        ];
        for _ in 0..50 {
            let w = v(&(0..4).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<_>>());
            let rho = rng.gen_range(0.1..5.0);
            for g in &regs {
                let z = g.prox(&w, rho);
                // 0 ∈ ∂g(z) + ρ(z − w)
                let s = w.sub(&z).scaled(rho);
                assert!(g.subgradient_distance(&z, &s) < 1e-9, "{g:?}");
                assert!(g.value(&z).is_finite());
            }
        }
    }

    #[test]
    fn lasso_generator_examples() {
        let a = gen_lasso_stream(5, 100, 1000, 100, DEFAULT_NOISE_SIGMA).unwrap();
        let b = gen_lasso_stream(5, 100, 1000, 100, DEFAULT_NOISE_SIGMA).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.x0_true.count_above(0.0), 100);
        for j in 0..1000 {
            assert!((a.a_data.column(j).norm() - 1.0).abs() < 1e-9);
        }
        let clean = gen_lasso_stream(6, 20, 30, 4, 0.0).unwrap();
        assert_eq!(clean.b_data, clean.a_data.matvec(&clean.x0_true).scaled(1.0 / 20.0));
        assert!(matches!(gen_lasso_stream(1, 10, 5, 6, 0.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn tv_signal_examples() {
        assert_eq!(gen_tv_signal(1, 10, 0), DenseVector::filled(10, 1.0));
        let s = gen_tv_signal(2, 200, DEFAULT_TV_BLOCKS);
        assert!(s.iter().all(|x| (1.0..=10.0).contains(x)));
        assert_eq!(s, gen_tv_signal(2, 200, DEFAULT_TV_BLOCKS));
        assert!(s.iter().any(|x| *x != 1.0));
    }

    #[test]
    fn lambda_from_fraction_examples() {
        let (a, b) = (DenseMatrix::identity(3), v(&[1.0, -2.0, 0.5]));
        assert_eq!(lambda_from_parts(0.0, &a, &b, 1).unwrap(), 0.0);
        assert_eq!(lambda_from_parts(1.0, &a, &b, 1).unwrap(), 2.0);
        let ds = gen_lasso_stream(7, 40, 60, 5, 0.01).unwrap();
        let mut worst: f64 = 0.0;
        for j in 0..60 {
            let s: f64 = (0..40).map(|i| ds.a_data.get(i, j) * ds.b_data[i]).sum();
            worst = worst.max(s.abs());
        }
        assert!((lambda_from_fraction(0.5, &ds).unwrap() - 0.5 * worst / 40.0).abs() < 1e-15);
    }

    #[test]
    fn dataset_text_round_trip() {
        let ds = gen_lasso_stream(8, 6, 4, 2, 0.01).unwrap();
        let text = ds.to_text();
        assert!(text.lines().next().unwrap().contains("\"N\":6"));
        assert_eq!(Dataset::from_text(&text).unwrap(), ds);
    }

    #[test]
    fn gradient_bound_covers_radius() {
        let ds = gen_lasso_stream(9, 30, 20, 3, 0.01).unwrap();
        let gf = ds.squared_gradient_bound(DEFAULT_GRADIENT_RADIUS);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for t in 0..30 {
            let x = v(&(0..20).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>());
            let x = x.scaled(DEFAULT_GRADIENT_RADIUS / x.norm());
            assert!(ds.squared_term(t).subgradient(&x).norm() <= gf + 1e-12);
        }
    }

    #[test]
    fn unit_rows_rescale_examples_together() {
        let ds = gen_lasso_stream(10, 8, 5, 2, 0.01).unwrap();
        let unit = ds.with_unit_rows().unwrap();
        for t in 0..8 {
            let a = ds.a_data.row_vector(t);
            assert!((unit.a_data.row_vector(t).norm() - 1.0).abs() < 1e-14);
            assert!((unit.b_data[t] - ds.b_data[t] / a.norm()).abs() < 1e-15);
        }
        assert_eq!(unit.x0_true, ds.x0_true);
    }
}
