//! Online alternating direction method.
//!
//! Round t reveals f_t. The x-update minimizes
//!   f_t(x) + ⟨y_t, Ax + Bz_t − c⟩ + (ρ/2)‖Ax + Bz_t − c‖² + η·B_φ(x, x_t)
//! and the z- and y-updates are the batch ones. With η = 0 and a fixed f the
//! step is the batch step. The x-update can also be taken inexactly by
//! linearizing the penalty, the loss, or both.

pub mod bounds;
pub mod projection_free;
pub mod regret;
mod schedule;

use rand::Rng;

use crate::adm::{subgradient_certificates, IterateState, ResidualRecord, Updater};
use crate::bregman::{DivergenceKind, DivergenceSpec, KL_FLOOR};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{DenseVector, Lu};
use crate::problems::{ConstraintSpec, Dataset, LossTerm, Objective, Regularizer, Structure};
use crate::subproblem::{XProblem, XSolver};

pub use bounds::{evaluate_bounds, stochastic_bounds, BoundConstants, RegretBounds, StochasticBounds};
pub use projection_free::{
    projection_free_step, ProjectionFreeProblem, ProjectionFreeSolver, ProjectionFreeState,
};
pub use regret::{RegretLedger, RoundLog, NNZ_THRESHOLD};
pub use schedule::{Growth, Rates, ScheduleSpec};

/// The fixed parts of an online problem: g and Ax + Bz = c.
#[derive(Debug, Clone)]
pub struct OnlineProblem {
    pub g: Regularizer,
    pub constraint: ConstraintSpec,
}

impl OnlineProblem {
    pub fn new(g: Regularizer, constraint: ConstraintSpec) -> Self {
        Self { g, constraint }
    }
}

/// Where the loss is linearized in the f-linearized update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearizationPoint {
    /// x_t
    Current,
    /// x̂_t with Ax̂_t + Bz_t = c.
    Feasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InexactCase {
    /// Keep f_t, linearize the quadratic penalty.
    LinearizedPenalty,
    /// Linearize f_t, keep the penalty.
    LinearizedLoss(LinearizationPoint),
    /// Linearize both: a mirror-descent step.
    MirrorDescent,
    /// Keep the nonsmooth part of f_t, linearize the smooth part and the penalty.
    Composite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum XUpdate {
    #[default]
    Exact,
    Inexact(InexactCase),
}

/// Solves Ax̂ = c − Bz for square invertible A.
#[derive(Debug, Clone)]
enum XhatSolver {
    Scaled(f64),
    Lu(Lu),
}

impl XhatSolver {
    fn new(constraint: &ConstraintSpec) -> Result<Self> {
        let a = constraint.a();
        if !a.is_square() {
            return Err(Error::Capability(format!(
                "x-hat needs a square A, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        match constraint.a_structure() {
            Structure::ScaledIdentity(s) if s != 0.0 => Ok(XhatSolver::Scaled(s)),
            _ => Lu::factor(a)
                .map(XhatSolver::Lu)
                .map_err(|_| Error::Capability("x-hat needs an invertible A".into())),
        }
    }

    fn solve(&self, constraint: &ConstraintSpec, z: &DenseVector) -> DenseVector {
        let rhs = constraint.c().sub(&constraint.apply_b(z));
        match self {
            XhatSolver::Scaled(s) => rhs.scaled(1.0 / s),
            XhatSolver::Lu(lu) => {
                let mut x = lu.solve(&rhs);
                // One round of iterative refinement.
                let r = rhs.sub(&constraint.apply_a(&x));
                x.axpy(1.0, &lu.solve(&r));
                x
            }
        }
    }
}

/// Online solver holding the schedule and cached factorizations.
#[derive(Debug, Clone)]
pub struct OnlineAdm<'a> {
    problem: &'a OnlineProblem,
    schedule: ScheduleSpec,
    divergence: DivergenceSpec,
    update: XUpdate,
    updater: Updater,
    lin: XSolver,
    xhat: Option<XhatSolver>,
}

impl<'a> OnlineAdm<'a> {
    pub fn new(problem: &'a OnlineProblem, schedule: ScheduleSpec, divergence: DivergenceSpec) -> Result<Self> {
        schedule.validate()?;
        if let Some(p) = divergence.metric() {
            check_dim("divergence metric", problem.constraint.n1(), p.rows())?;
        }
        Ok(Self {
            problem,
            schedule,
            divergence,
            update: XUpdate::Exact,
            updater: Updater::default(),
            lin: XSolver::new(),
            xhat: None,
        })
    }

    pub fn with_update(mut self, update: XUpdate) -> Self {
        self.update = update;
        self
    }

    pub fn problem(&self) -> &OnlineProblem {
        self.problem
    }

    pub fn schedule(&self) -> &ScheduleSpec {
        &self.schedule
    }

    pub fn divergence(&self) -> &DivergenceSpec {
        &self.divergence
    }

    /// Zero start, except the uniform point when φ is the negative entropy.
    pub fn initial_state(&self) -> IterateState {
        let mut s = IterateState::zeros(&self.problem.constraint);
        if self.divergence.is_kl() {
            let n = s.x.dim();
            s.x = DenseVector::filled(n, 1.0 / n as f64);
        }
        s
    }

    /// Rates used by the round that starts from `state`.
    pub fn rates_for(&self, state: &IterateState) -> Rates {
        self.schedule.rates(state.t + 2)
    }

    pub fn step(&mut self, state: &IterateState, loss: &LossTerm) -> Result<(IterateState, ResidualRecord)> {
        self.step_objective(state, &Objective::Term(loss.clone()))
    }

    pub fn step_objective(&mut self, state: &IterateState, loss: &Objective) -> Result<(IterateState, ResidualRecord)> {
        state.check_dims(&self.problem.constraint)?;
        let rates = self.rates_for(state);
        let p = self.problem;
        match self.update {
            XUpdate::Exact => self.updater.exact_step(
                state,
                loss,
                &p.g,
                &p.constraint,
                rates.rho,
                rates.eta,
                &self.divergence,
            ),
            XUpdate::Inexact(case) => {
                let x = self.inexact_x(case, state, loss, rates)?;
                self.updater.finish(state, x, &p.g, &p.constraint, rates.rho)
            }
        }
    }

    /// The x-update of the given inexact case, without the z- and y-updates.
    pub fn inexact_x_update(&mut self, case: InexactCase, state: &IterateState, loss: &Objective) -> Result<DenseVector> {
        state.check_dims(&self.problem.constraint)?;
        let rates = self.rates_for(state);
        self.inexact_x(case, state, loss, rates)
    }

    /// x̂ with Ax̂ + Bz = c.
    pub fn xhat(&mut self, z: &DenseVector) -> Result<DenseVector> {
        check_dim("x-hat z", self.problem.constraint.n2(), z.dim())?;
        if self.xhat.is_none() {
            self.xhat = Some(XhatSolver::new(&self.problem.constraint)?);
        }
        Ok(self
            .xhat
            .as_ref()
            .expect("solver built")
            .solve(&self.problem.constraint, z))
    }

    /// One stochastic round: draws ξ uniformly from the dataset and takes a
    /// linearized step with the squared loss of that example.
    pub fn stochastic_step(
        &mut self,
        state: &IterateState,
        dataset: &Dataset,
        rng: &mut impl Rng,
    ) -> Result<(IterateState, ResidualRecord, usize)> {
        if dataset.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        let i = rng.gen_range(0..dataset.len());
        let loss = Objective::Term(dataset.squared_term(i));
        let case = match self.update {
            XUpdate::Inexact(InexactCase::LinearizedPenalty) => {
                return Err(Error::Capability(
                    "stochastic steps linearize the loss; use the f-linearized, mirror-descent or composite case".into(),
                ))
            }
            XUpdate::Inexact(case) => case,
            XUpdate::Exact => InexactCase::LinearizedLoss(LinearizationPoint::Current),
        };
        let rates = self.rates_for(state);
        state.check_dims(&self.problem.constraint)?;
        let x = self.inexact_x(case, state, &loss, rates)?;
        let p = self.problem;
        let (next, rec) = self.updater.finish(state, x, &p.g, &p.constraint, rates.rho)?;
        Ok((next, rec, i))
    }

    /// y_t + ρ(Ax_t + Bz_t − c)
    fn penalty_dual(&self, state: &IterateState, rho: f64) -> DenseVector {
        let mut p = self.problem.constraint.residual(&state.x, &state.z).scaled(rho);
        p.axpy(1.0, &state.y);
        p
    }

    /// B_φ' must dominate ((ρλ_max(AᵀA)/η + α)/2)‖·‖² for the penalty linearization.
    fn check_linearization_strength(&self, rates: Rates) -> Result<()> {
        let need = rates.rho * self.problem.constraint.lambda_max_a();
        if !(rates.eta > 0.0) || !(self.divergence.l2_modulus() * rates.eta > need) {
            return Err(Error::Parameter(format!(
                "linearizing the penalty needs eta * modulus(phi) > rho * lambda_max(A^T A): eta = {}, modulus = {}, rho * lambda = {need}",
                rates.eta,
                self.divergence.l2_modulus()
            )));
        }
        Ok(())
    }

    /// argmin ⟨F, x⟩ + η·B_φ(x, x_t).
    fn mirror_step(&self, xt: &DenseVector, grad: &DenseVector, eta: f64) -> Result<DenseVector> {
        match self.divergence.kind() {
            DivergenceKind::Quadratic => {
                let mut x = xt.clone();
                x.axpy(-1.0 / eta, grad);
                Ok(x)
            }
            DivergenceKind::Mahalanobis { .. } => {
                let mut x = xt.clone();
                x.axpy(-1.0 / eta, &self.divergence.solve_metric(grad)?);
                Ok(x)
            }
            DivergenceKind::Kl => {
                self.divergence.check_domain(xt)?;
                let shift = grad.iter().copied().fold(f64::INFINITY, f64::min);
                let w = xt.zip_map(grad, |x, g| x * (-(g - shift) / eta).exp());
                let s = w.sum();
                let w = w.map(|v| (v / s).max(KL_FLOOR));
                let s = w.sum();
                Ok(w.scaled(1.0 / s))
            }
        }
    }

    fn inexact_x(&mut self, case: InexactCase, state: &IterateState, loss: &Objective, rates: Rates) -> Result<DenseVector> {
        let problem: &'a OnlineProblem = self.problem;
        let constraint = &problem.constraint;
        let Rates { rho, eta } = rates;
        match case {
            InexactCase::LinearizedPenalty => {
                self.check_linearization_strength(rates)?;
                let at_pen = constraint.apply_at(&self.penalty_dual(state, rho));
                if self.divergence.is_kl() {
                    let g = match loss {
                        Objective::Zero => DenseVector::zeros(state.x.dim()),
                        Objective::Term(LossTerm::Linear { g }) => g.clone(),
                        _ => {
                            return Err(Error::Capability(
                                "penalty linearization with a KL term needs a linear loss".into(),
                            ))
                        }
                    };
                    return self.mirror_step(&state.x, &g.add(&at_pen), eta);
                }
                self.lin.solve(&XProblem {
                    loss,
                    linear: Some(&at_pen),
                    constraint,
                    rho: 0.0,
                    target: &state.x,
                    eta,
                    divergence: &self.divergence,
                    anchor: &state.x,
                })
            }
            InexactCase::LinearizedLoss(point) => {
                let at = match point {
                    LinearizationPoint::Current => state.x.clone(),
                    LinearizationPoint::Feasible => self.xhat(&state.z)?,
                };
                let grad = loss.subgradient(&at);
                let w = Updater::x_target(constraint, &state.z, &state.y, rho);
                self.lin.solve(&XProblem {
                    loss: &Objective::Zero,
                    linear: Some(&grad),
                    constraint,
                    rho,
                    target: &w,
                    eta,
                    divergence: &self.divergence,
                    anchor: &state.x,
                })
            }
            InexactCase::MirrorDescent => {
                self.check_linearization_strength(rates)?;
                let mut f = loss.subgradient(&state.x);
                f.axpy(1.0, &constraint.apply_at(&self.penalty_dual(state, rho)));
                self.mirror_step(&state.x, &f, eta)
            }
            InexactCase::Composite => {
                self.check_linearization_strength(rates)?;
                let at_pen = constraint.apply_at(&self.penalty_dual(state, rho));
                if loss.is_smooth() {
                    let mut f = loss.subgradient(&state.x);
                    f.axpy(1.0, &at_pen);
                    return self.mirror_step(&state.x, &f, eta);
                }
                // Hinge: the smooth part is zero, so the loss stays as is.
                self.lin.solve(&XProblem {
                    loss,
                    linear: Some(&at_pen),
                    constraint,
                    rho: 0.0,
                    target: &state.x,
                    eta,
                    divergence: &self.divergence,
                    anchor: &state.x,
                })
            }
        }
    }
}

/// Candidate subgradients (s_f ∈ ∂f_t(x_{t+1}), s_g ∈ ∂g(z_{t+1})) implied by
/// optimality of an exact online round with the given rates.
pub fn online_certificates(
    prev: &IterateState,
    next: &IterateState,
    constraint: &ConstraintSpec,
    rates: Rates,
    divergence: &DivergenceSpec,
) -> Result<(DenseVector, DenseVector)> {
    let (mut sf, sg) = subgradient_certificates(prev, next, constraint, rates.rho);
    if rates.eta > 0.0 {
        let d = divergence.grad_phi(&next.x)?.sub(&divergence.grad_phi(&prev.x)?);
        sf.axpy(-rates.eta, &d);
    }
    Ok((sf, sg))
}

/// One exact round from `state`.
pub fn oadm_step(
    state: &IterateState,
    loss_t: &LossTerm,
    problem: &OnlineProblem,
    schedule: &ScheduleSpec,
    divergence: &DivergenceSpec,
) -> Result<(IterateState, ResidualRecord)> {
    OnlineAdm::new(problem, schedule.clone(), divergence.clone())?.step(state, loss_t)
}

/// x̂ with Ax̂ + Bz = c for square invertible A.
pub fn xhat_solve(problem: &OnlineProblem, z: &DenseVector) -> Result<DenseVector> {
    check_dim("x-hat z", problem.constraint.n2(), z.dim())?;
    Ok(XhatSolver::new(&problem.constraint)?.solve(&problem.constraint, z))
}

/// The x-update of one inexact case.
pub fn inexact_x_update(
    case: InexactCase,
    state: &IterateState,
    loss_t: &LossTerm,
    problem: &OnlineProblem,
    schedule: &ScheduleSpec,
    divergence: &DivergenceSpec,
) -> Result<DenseVector> {
    OnlineAdm::new(problem, schedule.clone(), divergence.clone())?.inexact_x_update(
        case,
        state,
        &Objective::Term(loss_t.clone()),
    )
}

/// One stochastic round with the f-linearized update.
pub fn stochastic_step(
    state: &IterateState,
    dataset: &Dataset,
    rng: &mut impl Rng,
    problem: &OnlineProblem,
    schedule: &ScheduleSpec,
    divergence: &DivergenceSpec,
) -> Result<(IterateState, usize)> {
    let mut solver = OnlineAdm::new(problem, schedule.clone(), divergence.clone())?;
    let (next, _, i) = solver.stochastic_step(state, dataset, rng)?;
    Ok((next, i))
}
