//! Closed-form regret bounds for the supported schedules.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};
use crate::oadm::{Growth, ScheduleSpec};

/// Problem constants entering the regret bounds.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundConstants {
    /// Bound on ‖f'_t‖.
    pub g_f: f64,
    /// B_φ(x*, x_1) ≤ D_x².
    pub d_x: f64,
    /// ‖z* − z_1‖ ≤ D_z.
    pub d_z: f64,
    /// Bound on ‖y_t‖.
    pub d: f64,
    /// f_t(x_{t+1}) + g(z_{t+1}) − (f_t(x*) + g(z*)) ≥ −F.
    pub f_floor: f64,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub lambda_max_b: f64,
    pub lambda_min_a: f64,
}

impl BoundConstants {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("g_f", self.g_f),
            ("d_x", self.d_x),
            ("d_z", self.d_z),
            ("d", self.d),
            ("f_floor", self.f_floor),
            ("alpha", self.alpha),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("lambda_max_b", self.lambda_max_b),
            ("lambda_min_a", self.lambda_min_a),
        ];
        for (name, v) in fields {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Parameter(format!("bound constant {name} = {v} must be finite and nonnegative")));
            }
        }
        if !(self.alpha > 0.0) {
            return Err(Error::Parameter("alpha must be positive".into()));
        }
        Ok(())
    }

    fn need(&self, name: &str, v: f64) -> Result<f64> {
        if v > 0.0 {
            Ok(v)
        } else {
            Err(Error::Parameter(format!("bound needs a positive {name}")))
        }
    }
}

/// Right-hand sides at horizon T. Entries are None when no bound applies.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RegretBounds {
    pub r1: Option<f64>,
    pub rc: Option<f64>,
    pub r2: Option<f64>,
    /// Constant bound on Σ‖Ax_{t+1} + Bz_{t+1} − c‖² given ‖y_t‖ ≤ D.
    pub violation: Option<f64>,
    /// Constant bound on Rc given ‖y_t‖ ≤ D (η = 0).
    pub rc_constant: Option<f64>,
}

pub fn evaluate_bounds(consts: &BoundConstants, schedule: &ScheduleSpec, horizon: usize) -> Result<RegretBounds> {
    consts.validate()?;
    let c = consts;
    let t = horizon as f64;
    let root = t.sqrt();
    let log = (t + 1.0).ln();
    let lam = c.lambda_max_b;
    match *schedule {
        ScheduleSpec::SqrtHorizon { .. } => {
            let dz2 = lam * c.d_z * c.d_z;
            let gd = c.g_f * c.d_x / c.alpha.sqrt();
            Ok(RegretBounds {
                r1: Some(dz2 * root / 2.0 + SQRT_2 * gd * root),
                rc: Some(dz2 + 2.0 * SQRT_2 * gd + 2.0 * c.f_floor * root),
                violation: Some(4.0 * c.d * c.d),
                ..Default::default()
            })
        }
        ScheduleSpec::StronglyConvex { .. } => {
            let b1 = c.need("beta1", c.beta1)?;
            let b2 = c.need("beta2", c.beta2)?;
            Ok(RegretBounds {
                r1: Some(c.g_f * c.g_f * log / (2.0 * c.alpha * b1) + b2 * c.d_z * c.d_z / 2.0 + b1 * c.d_x * c.d_x),
                rc: Some(
                    2.0 * c.f_floor * lam * log / b2 + lam * c.d_z * c.d_z + 2.0 * b1 * lam * c.d_x * c.d_x / b2,
                ),
                violation: Some(2.0 * PI * c.d * c.d * lam * lam / (3.0 * b2 * b2)),
                ..Default::default()
            })
        }
        ScheduleSpec::EtaZero { growth: Growth::Constant, .. } => {
            let g = c.need("g_f", c.g_f)?;
            let lmin = c.need("lambda_min_a", c.lambda_min_a)?;
            Ok(RegretBounds {
                r2: Some(g * c.d_z * (lam / lmin).sqrt() * root),
                rc: Some(lam * c.d_z * c.d_z + 2.0 * c.f_floor * c.d_z * (lmin * lam * t).sqrt() / g),
                rc_constant: Some(2.0 * c.d_z * c.d_z * lmin * lam / (g * g) * (c.d * c.d + g * g / lmin)),
                ..Default::default()
            })
        }
        ScheduleSpec::EtaZero { growth: Growth::Linear, .. } => {
            let b2 = c.need("beta2", c.beta2)?;
            let lmin = c.need("lambda_min_a", c.lambda_min_a)?;
            Ok(RegretBounds {
                r2: Some(c.g_f * c.g_f * lam * log / (2.0 * lmin * b2) + b2 * c.d_z * c.d_z),
                rc: Some(lam * c.d_z * c.d_z + 2.0 * c.f_floor * lam * log / b2),
                rc_constant: Some(PI * lam * lam / (3.0 * b2 * b2) * (c.d * c.d + c.g_f * c.g_f / lmin)),
                ..Default::default()
            })
        }
        _ => Err(Error::Parameter(format!("no regret bound is available for schedule {schedule:?}"))),
    }
}

/// Expected gaps of the averaged iterates after T stochastic rounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StochasticBounds {
    /// E[f(x̄_T) + g(z̄_T)] − (f(x*) + g(z*))
    pub objective: f64,
    /// E‖Ax̄_T + Bz̄_T − c‖²
    pub constraint: f64,
}

/// The sqrt-horizon regret bounds divided by T.
pub fn stochastic_bounds(consts: &BoundConstants, horizon: usize) -> Result<StochasticBounds> {
    consts.validate()?;
    if horizon == 0 {
        return Err(Error::Parameter("horizon must be positive".into()));
    }
    let c = consts;
    let t = horizon as f64;
    let dz2 = c.lambda_max_b * c.d_z * c.d_z;
    let gd = c.g_f * c.d_x / c.alpha.sqrt();
    Ok(StochasticBounds {
        objective: dz2 / (2.0 * t.sqrt()) + SQRT_2 * gd / t.sqrt(),
        constraint: dz2 / t + 2.0 * SQRT_2 * gd / t + 2.0 * c.f_floor / t.sqrt(),
    })
}
