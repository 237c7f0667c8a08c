//! Exact solvers for the x- and z-subproblems shared by the batch and
//! online methods.
//!
//! The x-subproblem is
//!   min_x  f(x) + ⟨l, x⟩ + (ρ/2)‖Ax − w‖² + η·B_φ(x, x_t)
//! whose quadratic part ½xᵀKx − vᵀx has K = ρAᵀA + ηP_φ. Structured A
//! (scaled identity, bidiagonal difference) keeps every solve O(n).

use std::hash::{DefaultHasher, Hash, Hasher};

use crate::bregman::{DivergenceKind, DivergenceSpec};
use crate::error::{Error, Result};
use crate::linalg::{bidiagonal_gram_solve, sherman_morrison_solve, Cholesky, DenseMatrix, DenseVector};
use crate::problems::{ConstraintSpec, LossTerm, Objective, Regularizer, Structure};

/// Linear operator K with fast solves.
#[derive(Debug, Clone)]
enum Kernel {
    /// σI
    Scaled(f64),
    /// ρDᵀD with D the bidiagonal difference matrix.
    BidiagGram(f64),
    /// Symmetric tridiagonal with constant off-diagonal, pre-factored.
    Tridiagonal { c_prime: Vec<f64>, denom: Vec<f64>, off: f64 },
    Dense(Cholesky),
}

impl Kernel {
    fn tridiagonal(diag: &[f64], off: f64) -> Result<Self> {
        let n = diag.len();
        let mut c_prime = vec![0.0; n];
        let mut denom = vec![0.0; n];
        for i in 0..n {
            let d = if i == 0 { diag[0] } else { diag[i] - off * c_prime[i - 1] };
            if !(d > 0.0) {
                return Err(Error::NotPositiveDefinite { pivot: i, value: d });
            }
            denom[i] = d;
            c_prime[i] = off / d;
        }
        Ok(Kernel::Tridiagonal { c_prime, denom, off })
    }

    fn solve(&self, v: &DenseVector) -> DenseVector {
        match self {
            Kernel::Scaled(s) => v.scaled(1.0 / s),
            Kernel::BidiagGram(rho) => bidiagonal_gram_solve(v.dim(), v)
                .expect("dimension matches")
                .scaled(1.0 / rho),
            Kernel::Tridiagonal { c_prime, denom, off } => {
                let n = v.dim();
                let mut d = vec![0.0; n];
                for i in 0..n {
                    let prev = if i == 0 { 0.0 } else { off * d[i - 1] };
                    d[i] = (v[i] - prev) / denom[i];
                }
                for i in (0..n.saturating_sub(1)).rev() {
                    d[i] -= c_prime[i] * d[i + 1];
                }
                DenseVector::from_vec(d)
            }
            Kernel::Dense(chol) => chol.solve(v),
        }
    }

    /// Solves (K + uuᵀ)x = v.
    fn solve_rank1(&self, u: &DenseVector, v: &DenseVector) -> DenseVector {
        match self {
            Kernel::Scaled(s) => sherman_morrison_solve(*s, u, v).expect("validated operands"),
            _ => {
                let kv = self.solve(v);
                let ku = self.solve(u);
                let coef = u.dot(&kv) / (1.0 + u.dot(&ku));
                let mut x = kv;
                x.axpy(-coef, &ku);
                x
            }
        }
    }
}

fn fingerprint(m: Option<&DenseMatrix>) -> u64 {
    let Some(m) = m else { return 0 };
    let mut h = DefaultHasher::new();
    m.rows().hash(&mut h);
    for v in m.data() {
        v.to_bits().hash(&mut h);
    }
    h.finish() | 1
}

#[derive(Debug, Clone, PartialEq)]
struct KernelKey {
    rho: u64,
    eta: u64,
    mu: u64,
    quad: u64,
    metric: u64,
}

/// One instance of the x-subproblem.
pub(crate) struct XProblem<'a> {
    pub loss: &'a Objective,
    /// Extra linear term ⟨l, x⟩.
    pub linear: Option<&'a DenseVector>,
    pub constraint: &'a ConstraintSpec,
    pub rho: f64,
    /// Target of Ax in the penalty; ignored when ρ = 0.
    pub target: &'a DenseVector,
    pub eta: f64,
    pub divergence: &'a DivergenceSpec,
    pub anchor: &'a DenseVector,
}

/// x-subproblem solver with a cached factorization of K.
#[derive(Debug, Clone, Default)]
pub(crate) struct XSolver {
    cache: Option<(KernelKey, Kernel)>,
}

impl XSolver {
    pub fn new() -> Self {
        Self::default()
    }

    fn kernel(&mut self, p: &XProblem<'_>, mu: f64, quad: Option<&DenseMatrix>) -> Result<&Kernel> {
        let metric = p.divergence.metric();
        let key = KernelKey {
            rho: p.rho.to_bits(),
            eta: p.eta.to_bits(),
            mu: mu.to_bits(),
            quad: fingerprint(quad),
            metric: fingerprint(metric),
        };
        let hit = matches!(&self.cache, Some((k, _)) if *k == key);
        if !hit {
            let kernel = build_kernel(p, mu, quad)?;
            self.cache = Some((key, kernel));
        }
        Ok(&self.cache.as_ref().expect("cache populated").1)
    }

    pub fn solve(&mut self, p: &XProblem<'_>) -> Result<DenseVector> {
        if p.eta > 0.0 && p.divergence.is_kl() {
            return Err(Error::Capability(
                "exact x-update with a KL proximal term has no closed form; use the mirror-descent inexact case".into(),
            ));
        }
        if p.eta < 0.0 || p.rho < 0.0 {
            return Err(Error::Parameter("rho and eta must be nonnegative".into()));
        }
        // v = ρAᵀw + ηPx_t − l
        let mut v = if p.rho > 0.0 {
            p.constraint.apply_at(p.target).scaled(p.rho)
        } else {
            DenseVector::zeros(p.anchor.dim())
        };
        if p.eta > 0.0 {
            v.axpy(p.eta, &p.divergence.apply_metric(p.anchor)?);
        }
        if let Some(l) = p.linear {
            v.axpy(-1.0, l);
        }
        match p.loss {
            Objective::Zero => Ok(self.kernel(p, 0.0, None)?.solve(&v)),
            Objective::Quadratic(q) => {
                v.axpy(-1.0, &q.q);
                Ok(self.kernel(p, 0.0, Some(&q.p))?.solve(&v))
            }
            Objective::Term(term) => match term {
                LossTerm::Linear { g } => {
                    v.axpy(-1.0, g);
                    Ok(self.kernel(p, 0.0, None)?.solve(&v))
                }
                LossTerm::Squared { a, b } => {
                    v.axpy(2.0 * b, a);
                    let u = a.scaled(std::f64::consts::SQRT_2);
                    Ok(self.kernel(p, 0.0, None)?.solve_rank1(&u, &v))
                }
                LossTerm::RidgeSquared { a, b, mu } => {
                    v.axpy(2.0 * b, a);
                    let u = a.scaled(std::f64::consts::SQRT_2);
                    Ok(self.kernel(p, *mu, None)?.solve_rank1(&u, &v))
                }
                LossTerm::Hinge { a, label } => {
                    let k = self.kernel(p, 0.0, None)?;
                    let x0 = k.solve(&v);
                    let ka = k.solve(a);
                    let m0 = label * a.dot(&x0);
                    let s = label * label * a.dot(&ka);
                    let theta = if m0 >= 1.0 || s <= 0.0 {
                        0.0
                    } else {
                        ((1.0 - m0) / s).min(1.0)
                    };
                    let mut x = x0;
                    x.axpy(theta * label, &ka);
                    Ok(x)
                }
                LossTerm::Logistic { a, label } => {
                    let k = self.kernel(p, 0.0, None)?;
                    let x0 = k.solve(&v);
                    let ka = k.solve(a);
                    let d = logistic_scalar_root(a.dot(&x0), a.dot(&ka), *label);
                    let mut x = x0;
                    x.axpy(-d, &ka);
                    Ok(x)
                }
            },
        }
    }
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// For ℓ(s) = log(1 + exp(−y s)) returns ℓ'(s*) where s* solves
/// s − s0 + ℓ'(s)·S = 0. Then x = x0 − ℓ'(s*)·K⁻¹a.
fn logistic_scalar_root(s0: f64, big_s: f64, y: f64) -> f64 {
    let dl = |s: f64| -y * sigmoid(-y * s);
    let d2l = |s: f64| {
        let p = sigmoid(-y * s);
        y * y * p * (1.0 - p)
    };
    let h = |s: f64| s - s0 + dl(s) * big_s;
    let (mut lo, mut hi) = (s0 - y.abs() * big_s, s0 + y.abs() * big_s);
    let mut s = s0;
    for _ in 0..200 {
        let hs = h(s);
        if hs == 0.0 {
            break;
        }
        if hs > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        let newton = s - hs / (1.0 + d2l(s) * big_s);
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - s).abs() <= 1e-15 * (1.0 + s.abs()) {
            s = next;
            break;
        }
        s = next;
    }
    dl(s)
}

fn build_kernel(p: &XProblem<'_>, mu: f64, quad: Option<&DenseMatrix>) -> Result<Kernel> {
    let structure = p.constraint.a_structure();
    let (rho, eta) = (p.rho, p.eta);
    let identity_metric = matches!(p.divergence.kind(), DivergenceKind::Quadratic) || eta == 0.0;
    let shift = if identity_metric { eta + mu } else { mu };
    if quad.is_none() && identity_metric {
        match structure {
            Structure::ScaledIdentity(s) => {
                let sigma = rho * s * s + shift;
                return if sigma > 0.0 {
                    Ok(Kernel::Scaled(sigma))
                } else {
                    Err(singular_kernel())
                };
            }
            Structure::UpperBidiagonal if rho > 0.0 => {
                if shift == 0.0 {
                    return Ok(Kernel::BidiagGram(rho));
                }
                // ρDᵀD + shift·I: diagonal (ρ, 2ρ, …, 2ρ) + shift, off-diagonal −ρ.
                let n = p.constraint.n1();
                let diag: Vec<f64> = (0..n)
                    .map(|i| if i == 0 { rho } else { 2.0 * rho } + shift)
                    .collect();
                return Kernel::tridiagonal(&diag, -rho).map_err(|_| singular_kernel());
            }
            _ => {}
        }
    }
    let n = p.constraint.n1();
    let mut k = if rho > 0.0 {
        p.constraint.a().gram().scaled(rho)
    } else {
        DenseMatrix::zeros(n, n)
    };
    if eta > 0.0 {
        k = match p.divergence.metric() {
            Some(pm) => k.add(&pm.scaled(eta)),
            None => k.add_diagonal(eta),
        };
    }
    if mu > 0.0 {
        k = k.add_diagonal(mu);
    }
    if let Some(q) = quad {
        k = k.add(q);
    }
    match Cholesky::factor(&k) {
        Ok(c) => Ok(Kernel::Dense(c)),
        Err(Error::NotPositiveDefinite { .. }) => Err(singular_kernel()),
        Err(e) => Err(e),
    }
}

fn singular_kernel() -> Error {
    Error::Capability(
        "x-subproblem is not strongly convex (rho*A^T A + eta*P is singular for this loss)".into(),
    )
}

/// z-subproblem solver: min_z g(z) + (ρ/2)‖Bz − r‖².
#[derive(Debug, Clone, Default)]
pub(crate) struct ZSolver {
    gram: Option<Cholesky>,
}

impl ZSolver {
    pub fn solve(&mut self, g: &Regularizer, constraint: &ConstraintSpec, rho: f64, r: &DenseVector) -> Result<DenseVector> {
        match constraint.b_structure() {
            Structure::ScaledIdentity(s) => Ok(g.prox(&r.scaled(1.0 / s), rho * s * s)),
            _ if matches!(g, Regularizer::Zero) => {
                if self.gram.is_none() {
                    let chol = Cholesky::factor(&constraint.b().gram()).map_err(|_| {
                        Error::Capability("z-subproblem needs B with full column rank".into())
                    })?;
                    self.gram = Some(chol);
                }
                let rhs = constraint.apply_bt(r);
                Ok(self.gram.as_ref().expect("factored").solve(&rhs))
            }
            _ => Err(Error::Capability(
                "z-subproblem with a general B and a nonzero regularizer has no closed form".into(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::solve_spd;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rv(rng: &mut ChaCha8Rng, n: usize) -> DenseVector {
        DenseVector::new((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Gradient of the full x-objective, for checking stationarity.
    fn objective_gradient(p: &XProblem<'_>, x: &DenseVector) -> DenseVector {
        let mut g = p.loss.subgradient(x);
        if let Some(l) = p.linear {
            g.axpy(1.0, l);
        }
        let r = p.constraint.apply_a(x).sub(p.target);
        g.axpy(p.rho, &p.constraint.apply_at(&r));
        let d = x.sub(p.anchor);
        g.axpy(p.eta, &p.divergence.apply_metric(&d).unwrap());
        g
    }

    #[test]
    fn smooth_losses_reach_stationarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 6;
        let general = ConstraintSpec::new(
            DenseMatrix::new(6, 6, (0..36).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap(),
            DenseMatrix::scaled_identity(6, -1.0),
            DenseVector::zeros(6),
        )
        .unwrap();
        let constraints = [ConstraintSpec::consensus(n), ConstraintSpec::total_variation(n), general];
        let mdiv = DivergenceSpec::mahalanobis(DenseMatrix::diagonal(&[1.0, 2.0, 3.0, 1.0, 0.5, 2.0]).unwrap()).unwrap();
        let qdiv = DivergenceSpec::quadratic();
        for c in &constraints {
            for div in [&qdiv, &mdiv] {
                for (rho, eta) in [(1.0, 0.0), (0.7, 2.0), (0.0, 1.5)] {
                    let a = rv(&mut rng, n);
                    let losses = [
                        Objective::Zero,
                        Objective::Term(LossTerm::Squared { a: a.clone(), b: 0.4 }),
                        Objective::Term(LossTerm::RidgeSquared { a: a.clone(), b: 0.4, mu: 0.3 }),
                        Objective::Term(LossTerm::Logistic { a: a.clone(), label: -1.0 }),
                        Objective::Term(LossTerm::Linear { g: a.clone() }),
                    ];
                    for loss in &losses {
                        let target = rv(&mut rng, n);
                        let anchor = rv(&mut rng, n);
                        let lin = rv(&mut rng, n);
                        let p = XProblem {
                            loss,
                            linear: Some(&lin),
                            constraint: c,
                            rho,
                            target: &target,
                            eta,
                            divergence: div,
                            anchor: &anchor,
                        };
                        let x = XSolver::new().solve(&p).unwrap();
                        let g = objective_gradient(&p, &x);
                        assert!(g.norm() < 1e-9 * (1.0 + x.norm()), "{loss:?} rho={rho} eta={eta}: {}", g.norm());
                    }
                }
            }
        }
    }

    #[test]
    fn hinge_solution_is_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = ConstraintSpec::consensus(4);
        let div = DivergenceSpec::quadratic();
        for _ in 0..50 {
            let a = rv(&mut rng, 4).scaled(3.0);
            let label = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let loss = Objective::Term(LossTerm::Hinge { a: a.clone(), label });
            let target = rv(&mut rng, 4);
            let anchor = rv(&mut rng, 4);
            let p = XProblem {
                loss: &loss,
                linear: None,
                constraint: &c,
                rho: 1.0,
                target: &target,
                eta: 0.5,
                divergence: &div,
                anchor: &anchor,
            };
            let x = XSolver::new().solve(&p).unwrap();
            let obj = |x: &DenseVector| {
                loss.value(x) + 0.5 * x.sub(&target).norm_sq() + 0.25 * x.sub(&anchor).norm_sq()
            };
            let best = obj(&x);
            for _ in 0..50 {
                let probe = x.add(&rv(&mut rng, 4).scaled(0.1));
                assert!(obj(&probe) >= best - 1e-12);
            }
        }
    }

    #[test]
    fn kernels_agree_with_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 30;
        let c = ConstraintSpec::total_variation(n);
        let div = DivergenceSpec::quadratic();
        for eta in [0.0, 0.8] {
            let a = rv(&mut rng, n);
            let loss = Objective::Term(LossTerm::Squared { a: a.clone(), b: 0.2 });
            let target = rv(&mut rng, n);
            let anchor = rv(&mut rng, n);
            let p = XProblem {
                loss: &loss,
                linear: None,
                constraint: &c,
                rho: 1.3,
                target: &target,
                eta,
                divergence: &div,
                anchor: &anchor,
            };
            let x = XSolver::new().solve(&p).unwrap();
            let base = c.a().gram().scaled(1.3).add_diagonal(eta);
            let data = (0..n * n).map(|k| base.data()[k] + 2.0 * a[k / n] * a[k % n]).collect();
            let h = DenseMatrix::new(n, n, data).unwrap();
            let mut rhs = c.a().tr_matvec(&target).scaled(1.3);
            rhs.axpy(eta, &anchor);
            rhs.axpy(0.4, &a);
            let dense = solve_spd(&h, &rhs).unwrap();
            assert!(x.sub(&dense).norm() < 1e-8 * dense.norm());
        }
    }

    #[test]
    fn kl_exact_update_is_refused() {
        let c = ConstraintSpec::consensus(2);
        let x = DenseVector::filled(2, 0.5);
        let p = XProblem {
            loss: &Objective::Zero,
            linear: None,
            constraint: &c,
            rho: 1.0,
            target: &x,
            eta: 1.0,
            divergence: &DivergenceSpec::kl(),
            anchor: &x,
        };
        assert!(matches!(XSolver::new().solve(&p), Err(Error::Capability(_))));
    }

    #[test]
    fn z_solver_cases() {
        let c = ConstraintSpec::consensus(3);
        let r = DenseVector::new(vec![-3.0, 0.5, 3.0]).unwrap();
        // B = −I: min λ|z| + ρ/2‖−z − r‖², i.e. prox at −r.
        let z = ZSolver::default().solve(&Regularizer::L1(1.0), &c, 1.0, &r).unwrap();
        assert_eq!(z.as_slice(), &[2.0, 0.0, -2.0]);
        let general = ConstraintSpec::new(
            DenseMatrix::identity(2),
            DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 2.0]]).unwrap(),
            DenseVector::zeros(2),
        )
        .unwrap();
        let r = DenseVector::new(vec![1.0, 2.0]).unwrap();
        let z = ZSolver::default().solve(&Regularizer::Zero, &general, 2.0, &r).unwrap();
        assert!(general.apply_b(&z).sub(&r).norm() < 1e-12);
        assert!(matches!(
            ZSolver::default().solve(&Regularizer::L1(1.0), &general, 1.0, &r),
            Err(Error::Capability(_))
        ));
    }
}
