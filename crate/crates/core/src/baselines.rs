//! Reference online learners: projected online gradient descent, FOBOS and
//! regularized dual averaging.

use crate::error::{check_dim, Error, Result};
use crate::linalg::DenseVector;
use crate::problems::{LossTerm, Regularizer};

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineState {
    pub z: DenseVector,
    /// Σ of the loss subgradients seen so far (RDA only).
    pub grad_sum: DenseVector,
    /// Completed rounds.
    pub t: usize,
}

impl BaselineState {
    pub fn zeros(n: usize) -> Self {
        Self {
            z: DenseVector::zeros(n),
            grad_sum: DenseVector::zeros(n),
            t: 0,
        }
    }

    /// ḡ_t, the RDA average subgradient.
    pub fn average_gradient(&self) -> DenseVector {
        if self.t == 0 {
            self.grad_sum.clone()
        } else {
            self.grad_sum.scaled(1.0 / self.t as f64)
        }
    }
}

/// FOBOS penalty at round t (1-based): ρ_t = ρ√t, so the step 1/ρ_t shrinks.
pub fn fobos_rho(rho: f64, t: usize) -> f64 {
    rho * (t as f64).sqrt()
}

fn advanced(state: &BaselineState, z: DenseVector) -> BaselineState {
    BaselineState {
        z,
        grad_sum: state.grad_sum.clone(),
        t: state.t + 1,
    }
}

/// z_{t+½} = z_t − f'_t(z_t)/ρ_t, then z_{t+1} = prox_g(z_{t+½}, ρ_t).
pub fn fobos_step(state: &BaselineState, loss_t: &LossTerm, g: &Regularizer, rho_t: f64) -> Result<BaselineState> {
    if !(rho_t > 0.0) {
        return Err(Error::Parameter(format!("rho_t must be positive, got {rho_t}")));
    }
    check_dim("fobos loss", state.z.dim(), loss_t.dim())?;
    let mut half = state.z.clone();
    half.axpy(-1.0 / rho_t, &loss_t.subgradient(&state.z));
    Ok(advanced(state, g.prox(&half, rho_t)))
}

/// z_{t+1} = Π(z_t − step·f'_t(z_t)).
pub fn ogd_step(state: &BaselineState, loss_t: &LossTerm, feasible_set: &Regularizer, step: f64) -> Result<BaselineState> {
    if !(step > 0.0) {
        return Err(Error::Parameter(format!("step must be positive, got {step}")));
    }
    if !feasible_set.is_indicator() {
        return Err(Error::Parameter("projected gradient needs an indicator feasible set".into()));
    }
    check_dim("ogd loss", state.z.dim(), loss_t.dim())?;
    let mut w = state.z.clone();
    w.axpy(-step, &loss_t.subgradient(&state.z));
    Ok(advanced(state, feasible_set.project(&w)))
}

/// z_{t+1} = argmin ⟨ḡ_t, z⟩ + g(z) + (γ/√t)·½‖z‖², i.e. prox_g(−ḡ_t/β, β) with β = γ/√t.
pub fn rda_step(state: &BaselineState, loss_t: &LossTerm, g: &Regularizer, gamma: f64) -> Result<BaselineState> {
    if !(gamma > 0.0) {
        return Err(Error::Parameter(format!("gamma must be positive, got {gamma}")));
    }
    check_dim("rda loss", state.z.dim(), loss_t.dim())?;
    let mut grad_sum = state.grad_sum.clone();
    grad_sum.axpy(1.0, &loss_t.subgradient(&state.z));
    let t = state.t + 1;
    let beta = gamma / (t as f64).sqrt();
    let avg = grad_sum.scaled(1.0 / t as f64);
    let z = g.prox(&avg.scaled(-1.0 / beta), beta);
    Ok(BaselineState { z, grad_sum, t })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adm::IterateState;
    use crate::bregman::DivergenceSpec;
    use crate::linalg::soft_threshold;
    use crate::oadm::{Growth, InexactCase, LinearizationPoint, OnlineAdm, OnlineProblem, ScheduleSpec, XUpdate};
    use crate::problems::{gen_lasso_stream, ConstraintSpec};

    fn v(x: &[f64]) -> DenseVector {
        DenseVector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn fobos_zero_gradient_and_zero_regularizer_is_identity() {
        let mut s = BaselineState::zeros(3);
        s.z = v(&[1.0, -2.0, 0.5]);
        let loss = LossTerm::Linear { g: DenseVector::zeros(3) };
        let next = fobos_step(&s, &loss, &Regularizer::Zero, 2.0).unwrap();
        assert_eq!(next.z, s.z);
        assert_eq!(next.t, 1);
    }

    #[test]
    fn fobos_l1_is_soft_threshold_of_half_step() {
        let mut s = BaselineState::zeros(3);
        s.z = v(&[1.0, -0.2, 0.05]);
        let loss = LossTerm::Squared { a: v(&[1.0, 2.0, -1.0]), b: 0.5 };
        let rho = 4.0;
        let next = fobos_step(&s, &loss, &Regularizer::L1(0.6), rho).unwrap();
        let half = s.z.sub(&loss.subgradient(&s.z).scaled(1.0 / rho));
        assert_eq!(next.z, soft_threshold(&half, 0.6 / rho));
    }

    #[test]
    fn fobos_with_box_is_projected_gradient() {
        let mut s = BaselineState::zeros(2);
        s.z = v(&[0.9, 0.1]);
        let loss = LossTerm::Linear { g: v(&[-1.0, 1.0]) };
        let boxed = Regularizer::bounded_box(v(&[0.0, 0.0]), v(&[1.0, 1.0])).unwrap();
        let f = fobos_step(&s, &loss, &boxed, 2.0).unwrap();
        let o = ogd_step(&s, &loss, &boxed, 0.5).unwrap();
        assert_eq!(f.z, o.z);
        assert_eq!(f.z, v(&[1.0, 0.0]));
    }

    #[test]
    fn ogd_examples() {
        let boxed = Regularizer::bounded_box(v(&[0.0, 0.0]), v(&[1.0, 1.0])).unwrap();
        let mut s = BaselineState::zeros(2);
        s.z = v(&[0.4, 0.6]);
        let tiny = LossTerm::Linear { g: v(&[1.0, -1.0]) };
        assert_eq!(ogd_step(&s, &tiny, &boxed, 1e-6).unwrap().z, v(&[0.4 - 1e-6, 0.6 + 1e-6]));
        s.z = v(&[2.0, 0.5]);
        let zero = LossTerm::Linear { g: v(&[0.0, 0.0]) };
        assert_eq!(ogd_step(&s, &zero, &boxed, 1.0).unwrap().z, v(&[1.0, 0.5]));
        assert!(ogd_step(&s, &zero, &Regularizer::L1(1.0), 1.0).is_err());
        assert!(ogd_step(&s, &zero, &boxed, 0.0).is_err());
    }

    #[test]
    fn ogd_on_a_fixed_quadratic_improves_on_the_start() {
        // f(z) = (z1 + z2 − 1)² over [0, 2]²: minimum value 0.
        let loss = LossTerm::Squared { a: v(&[1.0, 1.0]), b: 1.0 };
        let boxed = Regularizer::bounded_box(v(&[0.0, 0.0]), v(&[2.0, 2.0])).unwrap();
        let mut s = BaselineState::zeros(2);
        s.z = v(&[2.0, 2.0]);
        let start_gap = loss.value(&s.z);
        let mut avg = DenseVector::zeros(2);
        let mut avg_gaps = Vec::new();
        for t in 1..=400 {
            s = ogd_step(&s, &loss, &boxed, 0.1 / (t as f64).sqrt()).unwrap();
            avg = avg.scaled((t - 1) as f64 / t as f64).add(&s.z.scaled(1.0 / t as f64));
            avg_gaps.push(loss.value(&avg));
        }
        assert!(loss.value(&s.z) <= start_gap);
        assert!(avg_gaps[399] < avg_gaps[9] && avg_gaps[9] < start_gap);
        assert!(loss.value(&s.z) < 1e-6);
    }

    #[test]
    fn rda_examples() {
        let s = BaselineState::zeros(2);
        let zero = LossTerm::Linear { g: v(&[0.0, 0.0]) };
        assert_eq!(rda_step(&s, &zero, &Regularizer::L1(0.1), 10.0).unwrap().z, v(&[0.0, 0.0]));
        let lin = LossTerm::Linear { g: v(&[2.0, -4.0]) };
        let mut st = s.clone();
        for _ in 0..3 {
            st = rda_step(&st, &lin, &Regularizer::Zero, 5.0).unwrap();
        }
        let root = 3f64.sqrt();
        let expected = v(&[-root * 2.0 / 5.0, root * 4.0 / 5.0]);
        assert!(st.z.distance(&expected) < 1e-15);
        assert_eq!(st.average_gradient(), v(&[2.0, -4.0]));
    }

    #[test]
    fn rda_hand_trace_in_one_dimension() {
        // f_t(z) = (a_t z − b_t)², g = λ|z|.
        let data = [(1.0, 0.5), (-0.5, 1.0), (2.0, -0.3), (0.7, 0.7), (-1.2, 0.1)];
        let (lambda, gamma) = (0.05, 2.0);
        let mut s = BaselineState::zeros(1);
        let (mut z, mut sum) = (0.0f64, 0.0f64);
        for (t, (a, b)) in data.iter().enumerate() {
            let t = (t + 1) as f64;
            s = rda_step(&s, &LossTerm::Squared { a: v(&[*a]), b: *b }, &Regularizer::L1(lambda), gamma).unwrap();
            sum += 2.0 * a * (a * z - b);
            let gbar = sum / t;
            let w = -t.sqrt() * gbar / gamma;
            let k = t.sqrt() * lambda / gamma;
            z = if w > k { w - k } else if w < -k { w + k } else { 0.0 };
            assert!((s.z[0] - z).abs() < 1e-15);
        }
    }

    /// The z iterates of OADM with A = I, B = −I, c = 0, η = 0 and the loss linearized at
    /// x̂_t = z_t against the baseline stepping with the same ρ_t.
    fn compare_with_oadm(g: Regularizer, ogd: bool) {
        let ds = gen_lasso_stream(21, 30, 10, 3, 0.01).unwrap();
        let problem = OnlineProblem::new(g.clone(), ConstraintSpec::consensus(10));
        let sched = ScheduleSpec::EtaZero { rho: 2.0, growth: Growth::Sqrt };
        let mut solver = OnlineAdm::new(&problem, sched, DivergenceSpec::quadratic())
            .unwrap()
            .with_update(XUpdate::Inexact(InexactCase::LinearizedLoss(LinearizationPoint::Feasible)));
        let mut s: IterateState = solver.initial_state();
        let mut b = BaselineState::zeros(10);
        for t in 0..100 {
            let loss = ds.squared_term(t % ds.len());
            let rho = solver.rates_for(&s).rho;
            s = solver.step(&s, &loss).unwrap().0;
            b = if ogd {
                ogd_step(&b, &loss, &g, 1.0 / rho).unwrap()
            } else {
                fobos_step(&b, &loss, &g, rho).unwrap()
            };
            assert!(s.z.distance(&b.z) <= 1e-12, "round {t}: {}", s.z.distance(&b.z));
        }
    }

    #[test]
    fn linearized_oadm_is_fobos() {
        compare_with_oadm(Regularizer::L1(0.01), false);
    }

    #[test]
    fn linearized_oadm_with_box_is_projected_gradient() {
        let boxed = Regularizer::bounded_box(DenseVector::filled(10, -0.2), DenseVector::filled(10, 0.2)).unwrap();
        compare_with_oadm(boxed, true);
    }
}
