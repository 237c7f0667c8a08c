//! Penalty and proximal-weight schedules.

use crate::error::{Error, Result};

/// How a base penalty grows with the round index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Growth {
    Constant,
    /// ρ_t = ρ·√t
    Sqrt,
    /// ρ_t = ρ·t
    Linear,
}

impl Growth {
    fn factor(self, t: usize) -> f64 {
        match self {
            Growth::Constant => 1.0,
            Growth::Sqrt => (t as f64).sqrt(),
            Growth::Linear => t as f64,
        }
    }
}

/// ρ_t and η_t at one index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub rho: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleSpec {
    Constant { rho: f64, eta: f64 },
    /// ρ = √T and η = G_f√T / (D_x√(2α)) for a known horizon T.
    SqrtHorizon { horizon: usize, g_f: f64, d_x: f64, alpha: f64 },
    /// η_t = β1·t and ρ_t = β2·t / λ_max(BᵀB).
    StronglyConvex { beta1: f64, beta2: f64, lambda_max_b: f64 },
    /// η = 0 with ρ_t = ρ·growth(t).
    EtaZero { rho: f64, growth: Growth },
    /// Constant ρ and η_t = eta_scale·t.
    LinearEta { rho: f64, eta_scale: f64 },
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name} must be positive and finite, got {v}")))
    }
}

fn nonnegative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name} must be nonnegative and finite, got {v}")))
    }
}

impl ScheduleSpec {
    pub fn sqrt_horizon(horizon: usize, g_f: f64, d_x: f64, alpha: f64) -> Result<Self> {
        let s = ScheduleSpec::SqrtHorizon { horizon, g_f, d_x, alpha };
        s.validate()?;
        Ok(s)
    }

    pub fn strongly_convex(beta1: f64, beta2: f64, lambda_max_b: f64) -> Result<Self> {
        let s = ScheduleSpec::StronglyConvex { beta1, beta2, lambda_max_b };
        s.validate()?;
        Ok(s)
    }

    /// η = 0 with ρ = G_f√T / (D_z√(λ_min(AᵀA)·λ_max(BᵀB))).
    pub fn eta_zero_horizon(horizon: usize, g_f: f64, d_z: f64, lambda_min_a: f64, lambda_max_b: f64) -> Result<Self> {
        positive("g_f", g_f)?;
        positive("d_z", d_z)?;
        positive("lambda_min_a", lambda_min_a)?;
        positive("lambda_max_b", lambda_max_b)?;
        let rho = g_f * (horizon as f64).sqrt() / (d_z * (lambda_min_a * lambda_max_b).sqrt());
        let s = ScheduleSpec::EtaZero { rho, growth: Growth::Constant };
        s.validate()?;
        Ok(s)
    }

    /// η = 0 with ρ_t = β2·t / λ_max(BᵀB).
    pub fn eta_zero_log(beta2: f64, lambda_max_b: f64) -> Result<Self> {
        positive("beta2", beta2)?;
        positive("lambda_max_b", lambda_max_b)?;
        let s = ScheduleSpec::EtaZero {
            rho: beta2 / lambda_max_b,
            growth: Growth::Linear,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ScheduleSpec::Constant { rho, eta } => {
                positive("rho", rho)?;
                nonnegative("eta", eta)
            }
            ScheduleSpec::SqrtHorizon { horizon, g_f, d_x, alpha } => {
                if horizon == 0 {
                    return Err(Error::Parameter("horizon must be positive".into()));
                }
                nonnegative("g_f", g_f)?;
                positive("d_x", d_x)?;
                positive("alpha", alpha)
            }
            ScheduleSpec::StronglyConvex { beta1, beta2, lambda_max_b } => {
                nonnegative("beta1", beta1)?;
                positive("beta2", beta2)?;
                positive("lambda_max_b", lambda_max_b)
            }
            ScheduleSpec::EtaZero { rho, .. } => positive("rho", rho),
            ScheduleSpec::LinearEta { rho, eta_scale } => {
                positive("rho", rho)?;
                nonnegative("eta_scale", eta_scale)
            }
        }
    }

    /// ρ_t and η_t for t ≥ 1. The update that produces x_{t+1} uses index t + 1.
    pub fn rates(&self, t: usize) -> Rates {
        let tf = t as f64;
        match *self {
            ScheduleSpec::Constant { rho, eta } => Rates { rho, eta },
            ScheduleSpec::SqrtHorizon { horizon, g_f, d_x, alpha } => {
                let root = (horizon as f64).sqrt();
                Rates {
                    rho: root,
                    eta: g_f * root / (d_x * (2.0 * alpha).sqrt()),
                }
            }
            ScheduleSpec::StronglyConvex { beta1, beta2, lambda_max_b } => Rates {
                rho: beta2 * tf / lambda_max_b,
                eta: beta1 * tf,
            },
            ScheduleSpec::EtaZero { rho, growth } => Rates {
                rho: rho * growth.factor(t),
                eta: 0.0,
            },
            ScheduleSpec::LinearEta { rho, eta_scale } => Rates { rho, eta: eta_scale * tf },
        }
    }

    pub fn is_eta_zero(&self) -> bool {
        matches!(self, ScheduleSpec::EtaZero { .. })
    }
}
