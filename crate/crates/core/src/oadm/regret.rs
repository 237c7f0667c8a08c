//! Regret ledgers for the online method.

use std::io::Write;

use crate::adm::IterateState;
use crate::error::{check_dim, Result};
use crate::linalg::DenseVector;
use crate::oadm::Rates;
use crate::problems::{ConstraintSpec, Objective, Regularizer};

/// Entries with |z_i| above this count as nonzero.
pub const NNZ_THRESHOLD: f64 = 1e-4;

/// Quantities observed in one round t.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundLog {
    pub t: usize,
    /// f_t(x_t)
    pub loss: f64,
    /// g(z_t)
    pub g_value: f64,
    /// ‖Ax_t + Bz_t − c‖²
    pub violation_sq: f64,
    /// f_t(x_t) + g(z_t) − (f_t(x*) + g(z*))
    pub r1_increment: f64,
    /// f_t(x̂_t) + g(z_t) − (f_t(x*) + g(z*))
    pub r2_increment: Option<f64>,
    /// ‖Ax_{t+1} + Bz_{t+1} − c‖²
    pub next_violation_sq: f64,
    /// ‖B(z_{t+1} − z_t)‖²
    pub step_sq: f64,
    /// f_t(x_{t+1}) + g(z_{t+1}) − (f_t(x*) + g(z*))
    pub next_gap: f64,
    pub rho: f64,
    pub eta: f64,
    /// Nonzeros of z_{t+1}.
    pub nnz: usize,
    /// Aggregate objective at (x_{t+1}, z_{t+1}), when the caller supplies one.
    pub objective: Option<f64>,
}

impl RoundLog {
    pub fn rc_increment(&self) -> f64 {
        self.next_violation_sq + self.step_sq
    }
}

/// Running R1, R2 and Rc against a fixed comparator (x*, z*).
#[derive(Debug, Clone)]
pub struct RegretLedger {
    pub r1_cum: f64,
    /// None once any round is recorded without x̂.
    pub r2_cum: Option<f64>,
    pub rc_cum: f64,
    /// Σ ‖Ax_{t+1} + Bz_{t+1} − c‖², the quantity of the constant bounds.
    pub violation_cum: f64,
    pub comparator_x: DenseVector,
    pub comparator_z: DenseVector,
    /// max(0, max_t −next_gap)
    pub f_floor: f64,
    /// Largest ‖y_t‖ seen.
    pub y_max: f64,
    /// Largest loss subgradient norm seen at x_t, x_{t+1} and x̂_t.
    pub grad_max: f64,
    pub nnz_threshold: f64,
    pub per_round_log: Vec<RoundLog>,
    g_star: f64,
}

impl RegretLedger {
    pub fn new(comparator_x: DenseVector, comparator_z: DenseVector, g: &Regularizer) -> Self {
        let g_star = g.value(&comparator_z);
        Self {
            r1_cum: 0.0,
            r2_cum: Some(0.0),
            rc_cum: 0.0,
            violation_cum: 0.0,
            comparator_x,
            comparator_z,
            f_floor: 0.0,
            y_max: 0.0,
            grad_max: 0.0,
            nnz_threshold: NNZ_THRESHOLD,
            per_round_log: Vec::new(),
            g_star,
        }
    }

    pub fn rounds(&self) -> usize {
        self.per_round_log.len()
    }

    /// Records the round that moved `prev` (x_t, z_t, y_t) to `next`.
    #[allow(clippy::too_many_arguments)]
    pub fn record(
        &mut self,
        loss: &Objective,
        g: &Regularizer,
        constraint: &ConstraintSpec,
        prev: &IterateState,
        next: &IterateState,
        xhat: Option<&DenseVector>,
        rates: Rates,
    ) -> Result<&RoundLog> {
        check_dim("ledger comparator x", prev.x.dim(), self.comparator_x.dim())?;
        check_dim("ledger comparator z", prev.z.dim(), self.comparator_z.dim())?;
        let star = loss.value(&self.comparator_x) + self.g_star;
        let f_t = loss.value(&prev.x);
        let g_t = g.value(&prev.z);
        let r1 = f_t + g_t - star;
        let mut grad = loss.subgradient(&prev.x).norm().max(loss.subgradient(&next.x).norm());
        let r2 = xhat.map(|xh| {
            grad = grad.max(loss.subgradient(xh).norm());
            loss.value(xh) + g_t - star
        });
        let step = constraint.apply_b(&next.z.sub(&prev.z));
        let log = RoundLog {
            t: prev.t + 1,
            loss: f_t,
            g_value: g_t,
            violation_sq: constraint.residual(&prev.x, &prev.z).norm_sq(),
            r1_increment: r1,
            r2_increment: r2,
            next_violation_sq: constraint.residual(&next.x, &next.z).norm_sq(),
            step_sq: step.norm_sq(),
            next_gap: loss.value(&next.x) + g.value(&next.z) - star,
            rho: rates.rho,
            eta: rates.eta,
            nnz: next.z.count_above(self.nnz_threshold),
            objective: None,
        };
        self.r1_cum += r1;
        self.r2_cum = match (self.r2_cum, r2) {
            (Some(acc), Some(inc)) => Some(acc + inc),
            _ => None,
        };
        self.rc_cum += log.rc_increment();
        self.violation_cum += log.next_violation_sq;
        self.f_floor = self.f_floor.max(-log.next_gap);
        self.y_max = self.y_max.max(prev.y.norm()).max(next.y.norm());
        self.grad_max = self.grad_max.max(grad);
        self.per_round_log.push(log);
        Ok(self.per_round_log.last().expect("just pushed"))
    }

    /// Attaches the aggregate objective to the latest round.
    pub fn set_objective(&mut self, value: f64) {
        if let Some(last) = self.per_round_log.last_mut() {
            last.objective = Some(value);
        }
    }

    /// Rc re-summed from the log.
    pub fn rederive_rc(&self) -> f64 {
        self.per_round_log.iter().map(RoundLog::rc_increment).sum()
    }

    /// R1 re-summed from the log.
    pub fn rederive_r1(&self) -> f64 {
        self.per_round_log.iter().map(|l| l.r1_increment).sum()
    }

    pub fn write_csv_header(out: &mut impl Write) -> Result<()> {
        writeln!(out, "t,loss,g_value,violation_sq,r1_cum,r2_cum,rc_cum,rho_t,eta_t,nnz,objective")?;
        Ok(())
    }

    /// Writes the whole log with running totals.
    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        Self::write_csv_header(out)?;
        let (mut r1, mut r2, mut rc) = (0.0, Some(0.0), 0.0);
        for log in &self.per_round_log {
            r1 += log.r1_increment;
            r2 = match (r2, log.r2_increment) {
                (Some(a), Some(b)) => Some(a + b),
                _ => None,
            };
            rc += log.rc_increment();
            write_csv_row(out, log, r1, r2, rc)?;
        }
        Ok(())
    }
}

pub fn write_csv_row(out: &mut impl Write, log: &RoundLog, r1_cum: f64, r2_cum: Option<f64>, rc_cum: f64) -> Result<()> {
    let r2 = r2_cum.map(|v| format!("{v:.12e}")).unwrap_or_default();
    let objective = log.objective.map(|v| format!("{v:.12e}")).unwrap_or_default();
    writeln!(
        out,
        "{},{:.12e},{:.12e},{:.12e},{:.12e},{},{:.12e},{:.12e},{:.12e},{},{}",
        log.t, log.loss, log.g_value, log.violation_sq, r1_cum, r2, rc_cum, log.rho, log.eta, log.nnz, objective
    )?;
    Ok(())
}
