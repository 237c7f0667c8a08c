//! Bregman divergences for the proximal term of the online x-update.

use crate::error::{check_dim, Error, Result};
use crate::linalg::{smallest_eigenvalue_spd, Cholesky, DenseMatrix, DenseVector};

/// Smallest entry admitted in the KL domain.
pub const KL_FLOOR: f64 = 1e-12;
/// Tolerance on the simplex sum in the KL domain.
pub const KL_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub enum DivergenceKind {
    /// φ(x) = ½‖x‖².
    Quadratic,
    /// φ(x) = ½xᵀPx with P symmetric positive definite.
    Mahalanobis { p: DenseMatrix, chol: Cholesky },
    /// Negative entropy on the simplex.
    Kl,
}

#[derive(Debug, Clone)]
pub struct DivergenceSpec {
    kind: DivergenceKind,
    alpha: f64,
    norm_order: u8,
}

impl DivergenceSpec {
    pub fn quadratic() -> Self {
        Self {
            kind: DivergenceKind::Quadratic,
            alpha: 1.0,
            norm_order: 2,
        }
    }

    pub fn mahalanobis(p: DenseMatrix) -> Result<Self> {
        let chol = Cholesky::factor(&p)?;
        let alpha = smallest_eigenvalue_spd(&p)?;
        if !(alpha > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: 0, value: alpha });
        }
        Ok(Self {
            kind: DivergenceKind::Mahalanobis { p, chol },
            alpha,
            norm_order: 2,
        })
    }

    pub fn kl() -> Self {
        Self {
            kind: DivergenceKind::Kl,
            alpha: 1.0,
            norm_order: 1,
        }
    }

    /// The divergence φ = φ' − (ρ/2η)‖A·‖² used when the quadratic penalty is
    /// linearized: P = P' − (ρ/η)AᵀA, which must stay positive definite.
    pub fn linearized_penalty(base: &DivergenceSpec, a: &DenseMatrix, rho: f64, eta: f64) -> Result<Self> {
        if !(rho > 0.0 && eta > 0.0) {
            return Err(Error::Parameter("linearized penalty needs rho > 0 and eta > 0".into()));
        }
        let base_p = match &base.kind {
            DivergenceKind::Quadratic => DenseMatrix::identity(a.cols()),
            DivergenceKind::Mahalanobis { p, .. } => p.clone(),
            DivergenceKind::Kl => {
                return Err(Error::Capability(
                    "linearized penalty over a KL base divergence".into(),
                ))
            }
        };
        check_dim("linearized penalty", base_p.rows(), a.cols())?;
        let p = base_p.add(&a.gram().scaled(-rho / eta));
        Self::mahalanobis(p).map_err(|e| match e {
            Error::NotPositiveDefinite { .. } => Error::Parameter(format!(
                "base divergence is not strong enough: need B_phi' >= (rho*lambda_max(A)/eta + alpha)/2 |x - y|^2 at rho={rho}, eta={eta}"
            )),
            other => other,
        })
    }

    pub fn kind(&self) -> &DivergenceKind {
        &self.kind
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn norm_order(&self) -> u8 {
        self.norm_order
    }

    pub fn is_kl(&self) -> bool {
        matches!(self.kind, DivergenceKind::Kl)
    }

    /// Strong-convexity modulus of φ with respect to the Euclidean norm.
    pub fn l2_modulus(&self) -> f64 {
        // KL is 1-strongly convex in ℓ1 on the simplex, and ‖·‖₁ ≥ ‖·‖₂.
        self.alpha
    }

    /// P of φ(x) = ½xᵀPx, or None for the identity.
    pub fn metric(&self) -> Option<&DenseMatrix> {
        match &self.kind {
            DivergenceKind::Mahalanobis { p, .. } => Some(p),
            _ => None,
        }
    }

    pub fn check_domain(&self, x: &DenseVector) -> Result<()> {
        match &self.kind {
            DivergenceKind::Kl => {
                if let Some(i) = x.iter().position(|v| *v < KL_FLOOR) {
                    return Err(Error::Domain(format!(
                        "KL entry {i} = {:e} is below {KL_FLOOR:e}",
                        x[i]
                    )));
                }
                let s = x.sum();
                if (s - 1.0).abs() > KL_SUM_TOL {
                    return Err(Error::Domain(format!("KL point sums to {s}, not 1")));
                }
                Ok(())
            }
            DivergenceKind::Mahalanobis { p, .. } => check_dim("divergence", p.rows(), x.dim()),
            DivergenceKind::Quadratic => Ok(()),
        }
    }

    pub fn divergence(&self, x: &DenseVector, y: &DenseVector) -> Result<f64> {
        check_dim("divergence", x.dim(), y.dim())?;
        self.check_domain(x)?;
        self.check_domain(y)?;
        Ok(match &self.kind {
            DivergenceKind::Quadratic => 0.5 * x.sub(y).norm_sq(),
            DivergenceKind::Mahalanobis { p, .. } => {
                let d = x.sub(y);
                0.5 * d.dot(&p.matvec(&d))
            }
            DivergenceKind::Kl => x
                .iter()
                .zip(y.iter())
                .map(|(a, b)| a * (a / b).ln() - a + b)
                .sum::<f64>()
                .max(0.0),
        })
    }

    pub fn grad_phi(&self, x: &DenseVector) -> Result<DenseVector> {
        self.check_domain(x)?;
        Ok(match &self.kind {
            DivergenceKind::Quadratic => x.clone(),
            DivergenceKind::Mahalanobis { p, .. } => p.matvec(x),
            DivergenceKind::Kl => x.map(|v| 1.0 + v.ln()),
        })
    }

    /// ⟨∇φ(xnext) − ∇φ(xt), xnext − xstar⟩ + B(xstar,xt) − B(xstar,xnext) − B(xnext,xt),
    /// which vanishes identically.
    pub fn three_point_residual(&self, xstar: &DenseVector, xt: &DenseVector, xnext: &DenseVector) -> Result<f64> {
        let g = self.grad_phi(xnext)?.sub(&self.grad_phi(xt)?);
        let inner = g.dot(&xnext.sub(xstar));
        Ok(inner + self.divergence(xstar, xt)? - self.divergence(xstar, xnext)? - self.divergence(xnext, xt)?)
    }

    /// Applies P⁻¹ (identity for the quadratic kind).
    pub(crate) fn solve_metric(&self, v: &DenseVector) -> Result<DenseVector> {
        match &self.kind {
            DivergenceKind::Quadratic => Ok(v.clone()),
            DivergenceKind::Mahalanobis { chol, .. } => Ok(chol.solve(v)),
            DivergenceKind::Kl => Err(Error::Capability("KL divergence has no linear metric".into())),
        }
    }

    /// P v (identity for the quadratic kind).
    pub(crate) fn apply_metric(&self, v: &DenseVector) -> Result<DenseVector> {
        match &self.kind {
            DivergenceKind::Quadratic => Ok(v.clone()),
            DivergenceKind::Mahalanobis { p, .. } => Ok(p.matvec(v)),
            DivergenceKind::Kl => Err(Error::Capability("KL divergence has no linear metric".into())),
        }
    }
}
