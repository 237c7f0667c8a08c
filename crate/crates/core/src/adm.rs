//! Batch alternating direction method for min f(x) + g(z) s.t. Ax + Bz = c.
//!
//! Each step solves the x-subproblem, then the z-subproblem, then moves the
//! dual by ρ times the constraint residual. Residual records and subgradient
//! certificates expose the quantities the convergence analysis talks about.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bregman::DivergenceSpec;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{DenseMatrix, DenseVector};
use crate::problems::{ConstraintSpec, LossTerm, Objective, Regularizer};
use crate::subproblem::{XProblem, XSolver, ZSolver};

/// Primal/dual iterate. `t` counts completed updates, so the initial point has t = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateState {
    pub x: DenseVector,
    pub z: DenseVector,
    pub y: DenseVector,
    pub t: usize,
}

impl IterateState {
    pub fn zeros(constraint: &ConstraintSpec) -> Self {
        Self {
            x: DenseVector::zeros(constraint.n1()),
            z: DenseVector::zeros(constraint.n2()),
            y: DenseVector::zeros(constraint.m()),
            t: 0,
        }
    }

    pub fn check_dims(&self, constraint: &ConstraintSpec) -> Result<()> {
        check_dim("iterate x", constraint.n1(), self.x.dim())?;
        check_dim("iterate z", constraint.n2(), self.z.dim())?;
        check_dim("iterate y", constraint.m(), self.y.dim())
    }
}

/// R(t+1,t) and R(t+1,t+1) for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualRecord {
    /// ‖Ax_{t+1} + Bz_t − c‖²
    pub r_cross: f64,
    /// ‖Ax_{t+1} + Bz_{t+1} − c‖² + ‖Bz_{t+1} − Bz_t‖²
    pub r_full: f64,
}

/// f, g and the coupling constraint.
#[derive(Debug, Clone)]
pub struct CompositeProblem {
    pub f: Objective,
    pub g: Regularizer,
    pub constraint: ConstraintSpec,
}

impl CompositeProblem {
    pub fn new(f: Objective, g: Regularizer, constraint: ConstraintSpec) -> Result<Self> {
        match &f {
            Objective::Term(t) => check_dim("objective", constraint.n1(), t.dim())?,
            Objective::Quadratic(q) => check_dim("objective", constraint.n1(), q.q.dim())?,
            Objective::Zero => {}
        }
        Ok(Self { f, g, constraint })
    }

    pub fn objective(&self, x: &DenseVector, z: &DenseVector) -> f64 {
        self.f.value(x) + self.g.value(z)
    }

    /// Batch mode keeps every subproblem exact, so only losses with closed forms are accepted.
    pub fn check_batch_support(&self) -> Result<()> {
        match &self.f {
            Objective::Term(LossTerm::Hinge { .. }) | Objective::Term(LossTerm::Logistic { .. }) => Err(
                Error::Capability("batch mode needs a quadratic, rank-one quadratic, linear or zero f".into()),
            ),
            _ => Ok(()),
        }
    }
}

/// Shared x/z/y update used by both the batch and the online method.
#[derive(Debug, Clone, Default)]
pub(crate) struct Updater {
    pub xs: XSolver,
    pub zs: ZSolver,
}

impl Updater {
    /// The x-target w = c − Bz − y/ρ, so that the penalty reads (ρ/2)‖Ax − w‖².
    pub fn x_target(constraint: &ConstraintSpec, z: &DenseVector, y: &DenseVector, rho: f64) -> DenseVector {
        let mut w = constraint.c().sub(&constraint.apply_b(z));
        w.axpy(-1.0 / rho, y);
        w
    }

    /// z- and y-updates after a given x_{t+1}.
    pub fn finish(
        &mut self,
        state: &IterateState,
        x: DenseVector,
        g: &Regularizer,
        constraint: &ConstraintSpec,
        rho: f64,
    ) -> Result<(IterateState, ResidualRecord)> {
        let ax = constraint.apply_a(&x);
        let bz_old = constraint.apply_b(&state.z);
        let cross = ax.add(&bz_old).sub(constraint.c());
        let mut r = constraint.c().sub(&ax);
        r.axpy(-1.0 / rho, &state.y);
        let z = self.zs.solve(g, constraint, rho, &r)?;
        let bz = constraint.apply_b(&z);
        let res = ax.add(&bz).sub(constraint.c());
        let mut y = state.y.clone();
        y.axpy(rho, &res);
        let record = ResidualRecord {
            r_cross: cross.norm_sq(),
            r_full: res.norm_sq() + bz.sub(&bz_old).norm_sq(),
        };
        Ok((
            IterateState {
                x,
                z,
                y,
                t: state.t + 1,
            },
            record,
        ))
    }

    #[allow(clippy::too_many_arguments)]
    pub fn exact_step(
        &mut self,
        state: &IterateState,
        f: &Objective,
        g: &Regularizer,
        constraint: &ConstraintSpec,
        rho: f64,
        eta: f64,
        divergence: &DivergenceSpec,
    ) -> Result<(IterateState, ResidualRecord)> {
        let w = Self::x_target(constraint, &state.z, &state.y, rho);
        let x = self.xs.solve(&XProblem {
            loss: f,
            linear: None,
            constraint,
            rho,
            target: &w,
            eta,
            divergence,
            anchor: &state.x,
        })?;
        self.finish(state, x, g, constraint, rho)
    }
}

/// Batch solver for a fixed problem and penalty, caching its factorizations.
#[derive(Debug, Clone)]
pub struct BatchAdm<'a> {
    problem: &'a CompositeProblem,
    rho: f64,
    updater: Updater,
    divergence: DivergenceSpec,
}

impl<'a> BatchAdm<'a> {
    pub fn new(problem: &'a CompositeProblem, rho: f64) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::Parameter(format!("rho must be positive, got {rho}")));
        }
        problem.check_batch_support()?;
        Ok(Self {
            problem,
            rho,
            updater: Updater::default(),
            divergence: DivergenceSpec::quadratic(),
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn step(&mut self, state: &IterateState) -> Result<(IterateState, ResidualRecord)> {
        state.check_dims(&self.problem.constraint)?;
        let p = self.problem;
        self.updater
            .exact_step(state, &p.f, &p.g, &p.constraint, self.rho, 0.0, &self.divergence)
    }
}

/// One batch step from `state`.
pub fn adm_step(state: &IterateState, problem: &CompositeProblem, rho: f64) -> Result<(IterateState, ResidualRecord)> {
    BatchAdm::new(problem, rho)?.step(state)
}

/// Ergodic averages over x_1..x_T.
#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicAverage {
    pub x: DenseVector,
    pub z: DenseVector,
    pub y: DenseVector,
    count: usize,
    sx: DenseVector,
    sz: DenseVector,
    sy: DenseVector,
}

impl ErgodicAverage {
    pub fn new(constraint: &ConstraintSpec) -> Self {
        let s = IterateState::zeros(constraint);
        Self {
            x: s.x.clone(),
            z: s.z.clone(),
            y: s.y.clone(),
            count: 0,
            sx: s.x,
            sz: s.z,
            sy: s.y,
        }
    }

    pub fn push(&mut self, s: &IterateState) {
        self.count += 1;
        self.sx.axpy(1.0, &s.x);
        self.sz.axpy(1.0, &s.z);
        self.sy.axpy(1.0, &s.y);
        let inv = 1.0 / self.count as f64;
        self.x = self.sx.scaled(inv);
        self.z = self.sz.scaled(inv);
        self.y = self.sy.scaled(inv);
    }

    pub fn count(&self) -> usize {
        self.count
    }
}

/// Full batch run output. `states[0]` is the zero initial point.
#[derive(Debug, Clone)]
pub struct BatchRun {
    pub states: Vec<IterateState>,
    pub records: Vec<ResidualRecord>,
    pub average: ErgodicAverage,
}

/// Runs T steps from zero, observing each (previous, next, record) triple.
pub fn run_batch_with<F>(problem: &CompositeProblem, rho: f64, iterations: usize, mut observe: F) -> Result<(IterateState, ErgodicAverage)>
where
    F: FnMut(&IterateState, &IterateState, &ResidualRecord, &ErgodicAverage) -> Result<()>,
{
    if iterations == 0 {
        return Err(Error::Parameter("T must be at least 1".into()));
    }
    let mut solver = BatchAdm::new(problem, rho)?;
    let mut state = IterateState::zeros(&problem.constraint);
    let mut avg = ErgodicAverage::new(&problem.constraint);
    for _ in 0..iterations {
        let (next, rec) = solver.step(&state)?;
        avg.push(&next);
        observe(&state, &next, &rec, &avg)?;
        state = next;
    }
    Ok((state, avg))
}

/// Runs T steps from zero and keeps every iterate.
pub fn run_batch(problem: &CompositeProblem, rho: f64, iterations: usize) -> Result<BatchRun> {
    let mut states = vec![IterateState::zeros(&problem.constraint)];
    let mut records = Vec::with_capacity(iterations);
    let (_, average) = run_batch_with(problem, rho, iterations, |_, next, rec, _| {
        states.push(next.clone());
        records.push(*rec);
        Ok(())
    })?;
    Ok(BatchRun {
        states,
        records,
        average,
    })
}

/// Candidate subgradients (s_f ∈ ∂f(x_{t+1}), s_g ∈ ∂g(z_{t+1})) implied by optimality
/// of consecutive iterates.
pub fn subgradient_certificates(
    prev: &IterateState,
    next: &IterateState,
    constraint: &ConstraintSpec,
    rho: f64,
) -> (DenseVector, DenseVector) {
    let bz_diff = constraint.apply_b(&prev.z).sub(&constraint.apply_b(&next.z));
    let mut u = next.y.clone();
    u.axpy(rho, &bz_diff);
    let sf = constraint.apply_at(&u).scaled(-1.0);
    let sg = constraint.apply_bt(&next.y).scaled(-1.0);
    (sf, sg)
}

/// Checks h(p) ≥ h(x) + ⟨s, p − x⟩ − tol at `probes` seeded points around x.
pub fn check_subgradient_by_probes(
    h: impl Fn(&DenseVector) -> f64,
    x: &DenseVector,
    s: &DenseVector,
    probes: usize,
    tol: f64,
    seed: u64,
) -> Result<()> {
    let hx = h(x);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..probes {
        let scale = 10f64.powi(-((k % 4) as i32));
        let step: Vec<f64> = (0..x.dim()).map(|_| scale * rng.gen_range(-1.0..1.0)).collect();
        let p = x.add(&DenseVector::from_vec(step));
        let lhs = h(&p);
        let rhs = hx + s.dot(&p.sub(x));
        if lhs < rhs - tol * (1.0 + hx.abs() + rhs.abs()) {
            return Err(Error::Invariant(format!(
                "subgradient inequality fails at probe {k}: {lhs} < {rhs}"
            )));
        }
    }
    Ok(())
}

/// Verifies both certificates of a batch step with 20 probes each.
pub fn verify_certificates(
    prev: &IterateState,
    next: &IterateState,
    problem: &CompositeProblem,
    rho: f64,
    tol: f64,
) -> Result<()> {
    let (sf, sg) = subgradient_certificates(prev, next, &problem.constraint, rho);
    check_subgradient_by_probes(|x| problem.f.value(x), &next.x, &sf, 20, tol, 0xf0 ^ next.t as u64)?;
    check_subgradient_by_probes(|z| problem.g.value(z), &next.z, &sg, 20, tol, 0x90 ^ next.t as u64)
}

/// A point w = (x, z, y) of the saddle-point formulation.
#[derive(Debug, Clone, PartialEq)]
pub struct ViPoint {
    pub x: DenseVector,
    pub z: DenseVector,
    pub y: DenseVector,
}

impl ViPoint {
    pub fn new(x: DenseVector, z: DenseVector, y: DenseVector) -> Self {
        Self { x, z, y }
    }

    pub fn from_state(s: &IterateState) -> Self {
        Self::new(s.x.clone(), s.z.clone(), s.y.clone())
    }

    pub fn h_value(&self, problem: &CompositeProblem) -> f64 {
        problem.objective(&self.x, &self.z)
    }

    fn stacked(&self) -> Vec<f64> {
        [self.x.as_slice(), self.z.as_slice(), self.y.as_slice()].concat()
    }
}

/// F(w) = (Aᵀy, Bᵀy, −(Ax + Bz − c)) = Mw + q.
pub fn vi_operator(constraint: &ConstraintSpec, w: &ViPoint) -> ViPoint {
    ViPoint::new(
        constraint.apply_at(&w.y),
        constraint.apply_bt(&w.y),
        constraint.residual(&w.x, &w.z).scaled(-1.0),
    )
}

/// The antisymmetric block matrix M with F(w) = Mw + q.
pub fn vi_matrix(constraint: &ConstraintSpec) -> DenseMatrix {
    let (n1, n2, m) = (constraint.n1(), constraint.n2(), constraint.m());
    let d = n1 + n2 + m;
    let mut data = vec![0.0; d * d];
    for i in 0..m {
        for j in 0..n1 {
            let a = constraint.a().get(i, j);
            data[j * d + n1 + n2 + i] = a;
            data[(n1 + n2 + i) * d + j] = -a;
        }
        for j in 0..n2 {
            let b = constraint.b().get(i, j);
            data[(n1 + j) * d + n1 + n2 + i] = b;
            data[(n1 + n2 + i) * d + n1 + j] = -b;
        }
    }
    DenseMatrix::new(d, d, data).expect("finite blocks")
}

/// h(w̃) − h(w) + ⟨w̃ − w, F(w̃)⟩.
pub fn vi_gap(w_tilde: &ViPoint, w: &ViPoint, problem: &CompositeProblem) -> f64 {
    let f = vi_operator(&problem.constraint, w_tilde);
    let inner = w_tilde.x.sub(&w.x).dot(&f.x) + w_tilde.z.sub(&w.z).dot(&f.z) + w_tilde.y.sub(&w.y).dot(&f.y);
    w_tilde.h_value(problem) - w.h_value(problem) + inner
}

/// L = (ρ/2)‖Ax − c‖² + ‖y‖²/(2ρ); the ergodic gap against w is at most L/T.
pub fn vi_bound_constant(w: &ViPoint, constraint: &ConstraintSpec, rho: f64) -> f64 {
    let r = constraint.apply_a(&w.x).sub(constraint.c());
    0.5 * rho * r.norm_sq() + w.y.norm_sq() / (2.0 * rho)
}

impl ViPoint {
    /// w as one stacked vector (x, z, y), for use with `vi_matrix`.
    pub fn to_vector(&self) -> DenseVector {
        DenseVector::from_vec(self.stacked())
    }
}

/// Writes the trajectory CSV: t, objective, r_cross, r_full, y_norm.
pub fn write_trajectory_csv(
    out: &mut impl Write,
    problem: &CompositeProblem,
    states: &[IterateState],
    records: &[ResidualRecord],
) -> Result<()> {
    writeln!(out, "t,objective,r_cross,r_full,y_norm")?;
    for (s, r) in states.iter().skip(1).zip(records) {
        write_trajectory_row(out, problem, s, r)?;
    }
    Ok(())
}

pub fn write_trajectory_row(out: &mut impl Write, problem: &CompositeProblem, s: &IterateState, r: &ResidualRecord) -> Result<()> {
    writeln!(
        out,
        "{},{},{},{},{}",
        s.t,
        problem.objective(&s.x, &s.z),
        r.r_cross,
        r.r_full,
        s.y.norm()
    )?;
    Ok(())
}
