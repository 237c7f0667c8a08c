//! Projection-free mode for min Σ f_t(x) s.t. Ax = a, Bx ≤ b.
//!
//! The splitting z = Bx moves the inequalities onto z, whose update is an
//! elementwise clip, so no round projects onto the full feasible set.

use crate::error::{check_dim, Error, Result};
use crate::linalg::{Cholesky, DenseMatrix, DenseVector};
use crate::problems::LossTerm;

#[derive(Debug, Clone)]
pub struct ProjectionFreeProblem {
    a: DenseMatrix,
    a_vec: DenseVector,
    b: DenseMatrix,
    b_vec: DenseVector,
}

impl ProjectionFreeProblem {
    pub fn new(a: DenseMatrix, a_vec: DenseVector, b: DenseMatrix, b_vec: DenseVector) -> Result<Self> {
        check_dim("equality rhs", a.rows(), a_vec.dim())?;
        check_dim("inequality rhs", b.rows(), b_vec.dim())?;
        check_dim("inequality columns", a.cols(), b.cols())?;
        Ok(Self { a, a_vec, b, b_vec })
    }

    pub fn dim(&self) -> usize {
        self.a.cols()
    }

    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn a_vec(&self) -> &DenseVector {
        &self.a_vec
    }

    pub fn b(&self) -> &DenseMatrix {
        &self.b
    }

    pub fn b_vec(&self) -> &DenseVector {
        &self.b_vec
    }

    /// ‖Ax − a‖² + ‖(Bx − b)₊‖²
    pub fn violation(&self, x: &DenseVector) -> f64 {
        let eq = self.a.matvec(x).sub(&self.a_vec).norm_sq();
        let ineq: f64 = self
            .b
            .matvec(x)
            .sub(&self.b_vec)
            .iter()
            .map(|v| v.max(0.0).powi(2))
            .sum();
        eq + ineq
    }
}

/// Primal x, slack z = Bx, and duals u (equalities) and v (z = Bx).
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionFreeState {
    pub x: DenseVector,
    pub z: DenseVector,
    pub u: DenseVector,
    pub v: DenseVector,
    pub t: usize,
}

impl ProjectionFreeState {
    pub fn zeros(problem: &ProjectionFreeProblem) -> Self {
        Self {
            x: DenseVector::zeros(problem.dim()),
            z: DenseVector::zeros(problem.b.rows()),
            u: DenseVector::zeros(problem.a.rows()),
            v: DenseVector::zeros(problem.b.rows()),
            t: 0,
        }
    }
}

/// Solver with K = ρ_u AᵀA + ρ_v BᵀB + ηI factored once.
#[derive(Debug, Clone)]
pub struct ProjectionFreeSolver<'a> {
    problem: &'a ProjectionFreeProblem,
    rho_u: f64,
    rho_v: f64,
    eta: f64,
    kernel: Cholesky,
}

impl<'a> ProjectionFreeSolver<'a> {
    pub fn new(problem: &'a ProjectionFreeProblem, rho_u: f64, rho_v: f64, eta: f64) -> Result<Self> {
        if !(rho_u > 0.0 && rho_v > 0.0) || !(eta >= 0.0) {
            return Err(Error::Parameter(format!(
                "need rho_u, rho_v > 0 and eta >= 0, got {rho_u}, {rho_v}, {eta}"
            )));
        }
        let k = problem
            .a
            .gram()
            .scaled(rho_u)
            .add(&problem.b.gram().scaled(rho_v))
            .add_diagonal(eta);
        let kernel = Cholesky::factor(&k).map_err(|_| {
            Error::Capability("rho_u AᵀA + rho_v BᵀB + eta I is singular; use eta > 0".into())
        })?;
        Ok(Self {
            problem,
            rho_u,
            rho_v,
            eta,
            kernel,
        })
    }

    /// The x-update is exact for linear and squared losses and linearizes
    /// every other loss at x_t.
    pub fn step(&self, state: &ProjectionFreeState, loss: &LossTerm) -> Result<ProjectionFreeState> {
        let p = self.problem;
        check_dim("projection-free loss", p.dim(), loss.dim())?;
        check_dim("projection-free x", p.dim(), state.x.dim())?;
        let mut eq = p.a_vec.scaled(self.rho_u);
        eq.axpy(-1.0, &state.u);
        let mut ineq = state.z.scaled(self.rho_v);
        ineq.axpy(-1.0, &state.v);
        let mut rhs = p.a.tr_matvec(&eq).add(&p.b.tr_matvec(&ineq));
        if self.eta > 0.0 {
            rhs.axpy(self.eta, &state.x);
        }
        let x = match loss {
            LossTerm::Linear { g } => {
                rhs.axpy(-1.0, g);
                self.kernel.solve(&rhs)
            }
            LossTerm::Squared { a, b } => {
                rhs.axpy(2.0 * b, a);
                let u = a.scaled(std::f64::consts::SQRT_2);
                let kv = self.kernel.solve(&rhs);
                let ku = self.kernel.solve(&u);
                let coef = u.dot(&kv) / (1.0 + u.dot(&ku));
                let mut x = kv;
                x.axpy(-coef, &ku);
                x
            }
            other => {
                rhs.axpy(-1.0, &other.subgradient(&state.x));
                self.kernel.solve(&rhs)
            }
        };
        let bx = p.b.matvec(&x);
        let mut shifted = bx.clone();
        shifted.axpy(1.0 / self.rho_v, &state.v);
        let z = shifted.zip_map(&p.b_vec, f64::min);
        let mut u = state.u.clone();
        u.axpy(self.rho_u, &p.a.matvec(&x).sub(&p.a_vec));
        let mut v = state.v.clone();
        v.axpy(self.rho_v, &bx.sub(&z));
        Ok(ProjectionFreeState {
            x,
            z,
            u,
            v,
            t: state.t + 1,
        })
    }
}

pub fn projection_free_step(
    state: &ProjectionFreeState,
    loss_t: &LossTerm,
    problem: &ProjectionFreeProblem,
    rho_u: f64,
    rho_v: f64,
    eta: f64,
) -> Result<ProjectionFreeState> {
    ProjectionFreeSolver::new(problem, rho_u, rho_v, eta)?.step(state, loss_t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DenseVector {
        DenseVector::new(x.to_vec()).unwrap()
    }

    /// min x1 + 2x2 s.t. x1 + x2 = 1, 0 ≤ x ≤ 0.8; optimum (0.8, 0.2).
    fn small_lp() -> ProjectionFreeProblem {
        let a = DenseMatrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0], vec![0.0, -1.0]]).unwrap();
        ProjectionFreeProblem::new(a, v(&[1.0]), b, v(&[0.8, 0.8, 0.0, 0.0])).unwrap()
    }

    #[test]
    fn inactive_min_does_not_clip() {
        let p = small_lp();
        let s = ProjectionFreeState::zeros(&p);
        let loss = LossTerm::Linear { g: v(&[0.0, 0.0]) };
        let next = projection_free_step(&s, &loss, &p, 1.0, 1.0, 1.0).unwrap();
        let mut shifted = p.b().matvec(&next.x);
        shifted.axpy(1.0, &s.v);
        assert!(shifted.iter().zip(p.b_vec().iter()).all(|(a, b)| a <= b));
        assert_eq!(next.z, shifted);
    }

    #[test]
    fn z_is_projection_onto_lower_set() {
        let p = small_lp();
        let solver = ProjectionFreeSolver::new(&p, 2.0, 0.5, 0.1).unwrap();
        let mut s = ProjectionFreeState::zeros(&p);
        s.v = v(&[3.0, -1.0, 0.5, 2.0]);
        let loss = LossTerm::Linear { g: v(&[1.0, -4.0]) };
        let next = solver.step(&s, &loss).unwrap();
        let mut w = p.b().matvec(&next.x);
        w.axpy(1.0 / 0.5, &s.v);
        for i in 0..4 {
            let proj = if w[i] > p.b_vec()[i] { p.b_vec()[i] } else { w[i] };
            assert_eq!(next.z[i], proj);
        }
    }

    #[test]
    fn converges_on_a_small_lp() {
        let p = small_lp();
        let solver = ProjectionFreeSolver::new(&p, 1.0, 1.0, 0.0).unwrap();
        let mut s = ProjectionFreeState::zeros(&p);
        let loss = LossTerm::Linear { g: v(&[1.0, 2.0]) };
        for _ in 0..5000 {
            s = solver.step(&s, &loss).unwrap();
        }
        assert!(p.violation(&s.x) < 1e-10);
        assert!((s.x[0] - 0.8).abs() < 1e-5 && (s.x[1] - 0.2).abs() < 1e-5);
    }

    #[test]
    fn squared_loss_step_is_stationary() {
        let p = small_lp();
        let solver = ProjectionFreeSolver::new(&p, 1.5, 0.7, 0.3).unwrap();
        let mut s = ProjectionFreeState::zeros(&p);
        s.x = v(&[0.2, -0.4]);
        s.z = v(&[0.1, 0.3, -0.2, 0.0]);
        s.u = v(&[0.5]);
        s.v = v(&[0.1, -0.2, 0.3, 0.4]);
        let loss = LossTerm::Squared { a: v(&[1.0, -2.0]), b: 0.3 };
        let x = solver.step(&s, &loss).unwrap().x;
        // ∇ of the augmented Lagrangian in x must vanish.
        let mut grad = loss.subgradient(&x);
        let ru = p.a().matvec(&x).sub(p.a_vec()).scaled(1.5).add(&s.u);
        let rv = p.b().matvec(&x).sub(&s.z).scaled(0.7).add(&s.v);
        grad.axpy(1.0, &p.a().tr_matvec(&ru));
        grad.axpy(1.0, &p.b().tr_matvec(&rv));
        grad.axpy(0.3, &x.sub(&s.x));
        assert!(grad.norm() < 1e-12);
    }

    #[test]
    fn rejects_bad_penalties() {
        let p = small_lp();
        assert!(ProjectionFreeSolver::new(&p, 0.0, 1.0, 0.0).is_err());
        assert!(ProjectionFreeSolver::new(&p, 1.0, 1.0, -1.0).is_err());
    }
}
