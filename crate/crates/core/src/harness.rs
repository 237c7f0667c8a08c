//! Experiment runner: configuration, the reference-optimum oracle, metric
//! summaries and growth-rate fits.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::adm::{BatchAdm, CompositeProblem, IterateState};
use crate::baselines::{fobos_rho, fobos_step, ogd_step, rda_step, BaselineState};
use crate::bregman::DivergenceSpec;
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, DenseVector, Lu};
use crate::oadm::{
    BoundConstants, Growth, InexactCase, LinearizationPoint, OnlineAdm, OnlineProblem, ProjectionFreeProblem,
    ProjectionFreeSolver, ProjectionFreeState, Rates, RegretLedger, ScheduleSpec, XUpdate, NNZ_THRESHOLD,
};
use crate::problems::{
    gen_lasso_stream, gen_tv_dataset, lambda_from_fraction, ConstraintSpec, Dataset, LossTerm, Objective,
    QuadraticLoss, Regularizer, DEFAULT_NOISE_SIGMA, DEFAULT_TV_BLOCKS,
};

/// Stopping level for R(t+1,t+1) in the reference run.
pub const REFERENCE_TOL: f64 = 1e-12;
pub const REFERENCE_CAP: usize = 1_000_000;
/// Squared residual below which a logged point counts as feasible.
pub const FEASIBLE_SQ: f64 = 1e-20;
pub const LOWER_BOUND_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    /// Sparse regression in consensus form: A = I, B = −I, c = 0.
    Lasso,
    /// Total-variation denoising: A = D, B = −I.
    Tv,
    /// Random bounded linear program for the projection-free mode.
    Lp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    BatchAdm,
    Oadm,
    OadmEta0,
    OadmInexact(InexactCase),
    OadmStochastic,
    ProjectionFree,
    Fobos,
    Rda,
    Ogd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Constant,
    /// ρ = √T, η from G_f, D_x and α.
    Sqrt,
    StronglyConvex,
    /// Constant ρ, η_t = eta·t.
    EtaLinear,
    Eta0,
    /// η = 0 with ρ set from the horizon.
    Eta0Sqrt,
    /// η = 0 with ρ_t = β2·t/λ_max^B.
    Eta0Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegularizerKind {
    L1,
    SquaredL2,
    /// Indicator of [−box_radius, box_radius]ⁿ.
    Box,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaChoice {
    /// λ = q‖Aᵀb‖_∞/N
    Fraction(f64),
    Value(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    /// N, examples per pass.
    pub n_rows: usize,
    pub n: usize,
    pub k: usize,
    pub noise_sigma: f64,
    /// Rescale every example to ‖a_t‖ = 1 before λ is computed.
    pub unit_rows: bool,
    pub lambda: LambdaChoice,
    pub regularizer: RegularizerKind,
    pub box_radius: f64,
    /// Ridge weight added to each squared loss.
    pub mu: f64,
    pub seed: u64,
    pub solver: SolverKind,
    /// None picks the solver's natural schedule.
    pub schedule: Option<ScheduleKind>,
    pub rho: f64,
    pub eta: f64,
    pub gamma: f64,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    /// Overrides passes·N.
    pub rounds: Option<usize>,
    pub passes: usize,
    pub nnz_threshold: f64,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: ProblemKind::Lasso,
            n_rows: 100,
            n: 200,
            k: 10,
            noise_sigma: DEFAULT_NOISE_SIGMA,
            unit_rows: false,
            lambda: LambdaChoice::Fraction(0.5),
            regularizer: RegularizerKind::L1,
            box_radius: 1.0,
            mu: 0.0,
            seed: 0,
            solver: SolverKind::Oadm,
            schedule: None,
            rho: 1.0,
            eta: 1.0,
            gamma: 1.0,
            beta1: None,
            beta2: None,
            rounds: None,
            passes: 100,
            nnz_threshold: NNZ_THRESHOLD,
            out: None,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Parse(format!("{key} = {value:?}: {e}")))
}

impl FromStr for ProblemKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lasso" | "consensus" => Ok(ProblemKind::Lasso),
            "tv" => Ok(ProblemKind::Tv),
            "lp" => Ok(ProblemKind::Lp),
            other => Err(Error::Parse(format!("unknown problem {other:?}"))),
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProblemKind::Lasso => "lasso",
            ProblemKind::Tv => "tv",
            ProblemKind::Lp => "lp",
        })
    }
}

fn case_name(case: InexactCase) -> &'static str {
    match case {
        InexactCase::LinearizedPenalty => "penalty",
        InexactCase::LinearizedLoss(LinearizationPoint::Current) => "loss",
        InexactCase::LinearizedLoss(LinearizationPoint::Feasible) => "loss-feasible",
        InexactCase::MirrorDescent => "mirror",
        InexactCase::Composite => "composite",
    }
}

impl FromStr for SolverKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if let Some(inner) = s.strip_prefix("oadm-inexact(").and_then(|r| r.strip_suffix(')')) {
            let case = match inner {
                "penalty" => InexactCase::LinearizedPenalty,
                "loss" => InexactCase::LinearizedLoss(LinearizationPoint::Current),
                "loss-feasible" => InexactCase::LinearizedLoss(LinearizationPoint::Feasible),
                "mirror" => InexactCase::MirrorDescent,
                "composite" => InexactCase::Composite,
                other => return Err(Error::Parse(format!("unknown inexact case {other:?}"))),
            };
            return Ok(SolverKind::OadmInexact(case));
        }
        match s {
            "batch-adm" => Ok(SolverKind::BatchAdm),
            "oadm" => Ok(SolverKind::Oadm),
            "oadm-eta0" => Ok(SolverKind::OadmEta0),
            "oadm-inexact" => Ok(SolverKind::OadmInexact(InexactCase::LinearizedLoss(LinearizationPoint::Current))),
            "oadm-stochastic" => Ok(SolverKind::OadmStochastic),
            "projection-free" => Ok(SolverKind::ProjectionFree),
            "fobos" => Ok(SolverKind::Fobos),
            "rda" => Ok(SolverKind::Rda),
            "ogd" => Ok(SolverKind::Ogd),
            other => Err(Error::Parse(format!("unknown solver {other:?}"))),
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverKind::BatchAdm => f.write_str("batch-adm"),
            SolverKind::Oadm => f.write_str("oadm"),
            SolverKind::OadmEta0 => f.write_str("oadm-eta0"),
            SolverKind::OadmInexact(case) => write!(f, "oadm-inexact({})", case_name(*case)),
            SolverKind::OadmStochastic => f.write_str("oadm-stochastic"),
            SolverKind::ProjectionFree => f.write_str("projection-free"),
            SolverKind::Fobos => f.write_str("fobos"),
            SolverKind::Rda => f.write_str("rda"),
            SolverKind::Ogd => f.write_str("ogd"),
        }
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(ScheduleKind::Constant),
            "sqrt" => Ok(ScheduleKind::Sqrt),
            "strongly-convex" => Ok(ScheduleKind::StronglyConvex),
            "eta-t" => Ok(ScheduleKind::EtaLinear),
            "eta0" => Ok(ScheduleKind::Eta0),
            "eta0-sqrt" => Ok(ScheduleKind::Eta0Sqrt),
            "eta0-log" => Ok(ScheduleKind::Eta0Log),
            other => Err(Error::Parse(format!("unknown schedule {other:?}"))),
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleKind::Constant => "constant",
            ScheduleKind::Sqrt => "sqrt",
            ScheduleKind::StronglyConvex => "strongly-convex",
            ScheduleKind::EtaLinear => "eta-t",
            ScheduleKind::Eta0 => "eta0",
            ScheduleKind::Eta0Sqrt => "eta0-sqrt",
            ScheduleKind::Eta0Log => "eta0-log",
        })
    }
}

impl FromStr for RegularizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(RegularizerKind::L1),
            "squared-l2" => Ok(RegularizerKind::SquaredL2),
            "box" => Ok(RegularizerKind::Box),
            other => Err(Error::Parse(format!("unknown regularizer {other:?}"))),
        }
    }
}

impl fmt::Display for RegularizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegularizerKind::L1 => "l1",
            RegularizerKind::SquaredL2 => "squared-l2",
            RegularizerKind::Box => "box",
        })
    }
}

impl ExperimentConfig {
    /// Parses flat `key = value` lines; `#` starts a comment.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", i + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "problem" => self.problem = value.parse()?,
            "N" | "n_rows" => self.n_rows = parse_num(key, value)?,
            "n" => self.n = parse_num(key, value)?,
            "k" => self.k = parse_num(key, value)?,
            "noise_sigma" => self.noise_sigma = parse_num(key, value)?,
            "unit_rows" => self.unit_rows = parse_num(key, value)?,
            "q" => self.lambda = LambdaChoice::Fraction(parse_num(key, value)?),
            "lambda" => self.lambda = LambdaChoice::Value(parse_num(key, value)?),
            "regularizer" => self.regularizer = value.parse()?,
            "box_radius" => self.box_radius = parse_num(key, value)?,
            "mu" => self.mu = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "solver" => self.solver = value.parse()?,
            "schedule" => self.schedule = Some(value.parse()?),
            "rho" => self.rho = parse_num(key, value)?,
            "eta" => self.eta = parse_num(key, value)?,
            "gamma" => self.gamma = parse_num(key, value)?,
            "beta1" => self.beta1 = Some(parse_num(key, value)?),
            "beta2" => self.beta2 = Some(parse_num(key, value)?),
            "T" | "rounds" => self.rounds = Some(parse_num(key, value)?),
            "passes" => self.passes = parse_num(key, value)?,
            "nnz_threshold" => self.nnz_threshold = parse_num(key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            other => return Err(Error::Parse(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Inverse of [`ExperimentConfig::from_kv`].
    pub fn to_kv(&self) -> String {
        let mut lines = vec![
            format!("problem = {}", self.problem),
            format!("N = {}", self.n_rows),
            format!("n = {}", self.n),
            format!("k = {}", self.k),
            format!("noise_sigma = {}", self.noise_sigma),
            format!("unit_rows = {}", self.unit_rows),
            match self.lambda {
                LambdaChoice::Fraction(q) => format!("q = {q}"),
                LambdaChoice::Value(l) => format!("lambda = {l}"),
            },
            format!("regularizer = {}", self.regularizer),
            format!("box_radius = {}", self.box_radius),
            format!("mu = {}", self.mu),
            format!("seed = {}", self.seed),
            format!("solver = {}", self.solver),
            format!("rho = {}", self.rho),
            format!("eta = {}", self.eta),
            format!("gamma = {}", self.gamma),
            format!("passes = {}", self.passes),
            format!("nnz_threshold = {}", self.nnz_threshold),
        ];
        if let Some(s) = self.schedule {
            lines.push(format!("schedule = {s}"));
        }
        if let Some(b) = self.beta1 {
            lines.push(format!("beta1 = {b}"));
        }
        if let Some(b) = self.beta2 {
            lines.push(format!("beta2 = {b}"));
        }
        if let Some(t) = self.rounds {
            lines.push(format!("T = {t}"));
        }
        if let Some(p) = &self.out {
            lines.push(format!("out = {}", p.display()));
        }
        let mut s = lines.join("\n");
        s.push('\n');
        s
    }

    /// The schedule kind after solver defaults.
    pub fn schedule_kind(&self) -> ScheduleKind {
        self.schedule.unwrap_or(match self.solver {
            SolverKind::OadmEta0 => ScheduleKind::Eta0,
            _ => ScheduleKind::Constant,
        })
    }

    /// Total rounds: T if given, else passes·N.
    pub fn total_rounds(&self) -> usize {
        self.rounds.unwrap_or(self.passes * self.n_rows)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Parameter(msg));
        if self.n == 0 || self.n_rows == 0 {
            return bad("N and n must be positive".into());
        }
        if self.total_rounds() == 0 {
            return bad("the run needs at least one round".into());
        }
        for (name, v) in [("rho", self.rho), ("gamma", self.gamma), ("box_radius", self.box_radius)] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("eta", self.eta), ("mu", self.mu), ("nnz_threshold", self.nnz_threshold)] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} must be nonnegative, got {v}"));
            }
        }
        match self.lambda {
            LambdaChoice::Fraction(v) | LambdaChoice::Value(v) if !(v >= 0.0) || !v.is_finite() => {
                return bad(format!("lambda/q must be nonnegative, got {v}"));
            }
            _ => {}
        }
        let schedule = self.schedule_kind();
        let eta_zero = matches!(schedule, ScheduleKind::Eta0 | ScheduleKind::Eta0Sqrt | ScheduleKind::Eta0Log);
        match self.solver {
            SolverKind::ProjectionFree if self.problem != ProblemKind::Lp => {
                return bad("projection-free runs on problem = lp".into());
            }
            _ if self.problem == ProblemKind::Lp && self.solver != SolverKind::ProjectionFree => {
                return bad(format!("problem = lp needs solver = projection-free, got {}", self.solver));
            }
            SolverKind::ProjectionFree if !(2..=8).contains(&self.n) => {
                return bad(format!("lp instances have 2 to 8 variables, got {}", self.n));
            }
            SolverKind::BatchAdm | SolverKind::ProjectionFree if schedule != ScheduleKind::Constant => {
                return bad(format!("{} uses a constant penalty, got schedule {schedule}", self.solver));
            }
            SolverKind::OadmEta0 if !eta_zero => {
                return bad(format!("oadm-eta0 needs an eta0 schedule, got {schedule}"));
            }
            SolverKind::Fobos | SolverKind::Rda | SolverKind::Ogd => {
                if self.problem != ProblemKind::Lasso {
                    return bad(format!("{} runs on the consensus form only", self.solver));
                }
                if self.solver == SolverKind::Ogd && self.regularizer != RegularizerKind::Box {
                    return bad("ogd needs regularizer = box".into());
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// The data and problem objects of one configured run.
#[derive(Debug, Clone)]
pub struct ExperimentInstance {
    pub dataset: Option<Dataset>,
    pub lambda: f64,
    pub online: OnlineProblem,
    /// f = (1/N)Σ f_i with the same g and constraint.
    pub aggregate: CompositeProblem,
    pub lp: Option<LpInstance>,
}

impl ExperimentInstance {
    pub fn loss(&self, mu: f64, i: usize) -> Option<LossTerm> {
        self.dataset.as_ref().map(|ds| {
            if mu > 0.0 {
                ds.ridge_term(i, mu)
            } else {
                ds.squared_term(i)
            }
        })
    }
}

pub fn build_instance(cfg: &ExperimentConfig) -> Result<ExperimentInstance> {
    cfg.validate()?;
    if cfg.problem == ProblemKind::Lp {
        let lp = gen_lp(cfg.seed, cfg.n)?;
        let online = OnlineProblem::new(Regularizer::Zero, ConstraintSpec::consensus(cfg.n));
        let aggregate = CompositeProblem::new(
            Objective::Term(LossTerm::Linear { g: lp.cost.clone() }),
            Regularizer::Zero,
            ConstraintSpec::consensus(cfg.n),
        )?;
        return Ok(ExperimentInstance {
            dataset: None,
            lambda: 0.0,
            online,
            aggregate,
            lp: Some(lp),
        });
    }
    let ds = match cfg.problem {
        ProblemKind::Tv => gen_tv_dataset(cfg.seed, cfg.n_rows, cfg.n, DEFAULT_TV_BLOCKS.min(cfg.n), cfg.noise_sigma)?,
        _ => gen_lasso_stream(cfg.seed, cfg.n_rows, cfg.n, cfg.k.min(cfg.n), cfg.noise_sigma)?,
    };
    let ds = if cfg.unit_rows { ds.with_unit_rows()? } else { ds };
    let lambda = match cfg.lambda {
        LambdaChoice::Fraction(q) => lambda_from_fraction(q, &ds)?,
        LambdaChoice::Value(l) => l,
    };
    let constraint = match cfg.problem {
        ProblemKind::Tv => ConstraintSpec::total_variation(cfg.n),
        _ => ConstraintSpec::consensus(cfg.n),
    };
    let m = constraint.m();
    let g = match cfg.regularizer {
        RegularizerKind::L1 => Regularizer::L1(lambda),
        RegularizerKind::SquaredL2 => Regularizer::SquaredL2(lambda),
        RegularizerKind::Box => Regularizer::bounded_box(
            DenseVector::filled(m, -cfg.box_radius),
            DenseVector::filled(m, cfg.box_radius),
        )?,
    };
    let terms: Vec<LossTerm> = (0..ds.len())
        .map(|i| if cfg.mu > 0.0 { ds.ridge_term(i, cfg.mu) } else { ds.squared_term(i) })
        .collect();
    let f = Objective::Quadratic(QuadraticLoss::average_of(&terms)?);
    let aggregate = CompositeProblem::new(f, g.clone(), constraint.clone())?;
    Ok(ExperimentInstance {
        dataset: Some(ds),
        lambda,
        online: OnlineProblem::new(g, constraint),
        aggregate,
        lp: None,
    })
}

/// Output of [`reference_optimum`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceOptimum {
    pub x: DenseVector,
    pub z: DenseVector,
    pub y: DenseVector,
    /// f(x*) + g(z*)
    pub p_star: f64,
    pub iterations: usize,
    /// Final R(t+1,t+1).
    pub residual: f64,
    /// Set when the iteration cap stopped the run before the tolerance.
    pub approximate: bool,
}

/// Batch ADM with ρ = 1 to R(t+1,t+1) ≤ 1e-12, at most 10⁶ iterations.
pub fn reference_optimum(problem: &CompositeProblem) -> Result<ReferenceOptimum> {
    reference_optimum_with(problem, 1.0, REFERENCE_TOL, REFERENCE_CAP)
}

/// After reaching `tol` the run continues for as many iterations again
/// (within the cap), then x* is re-solved from Ax = c − Bz* when A is square.
pub fn reference_optimum_with(problem: &CompositeProblem, rho: f64, tol: f64, cap: usize) -> Result<ReferenceOptimum> {
    if cap == 0 || !(tol >= 0.0) {
        return Err(Error::Parameter("reference run needs cap > 0 and tol >= 0".into()));
    }
    let mut solver = BatchAdm::new(problem, rho)?;
    let mut state = IterateState::zeros(&problem.constraint);
    let mut best = (f64::INFINITY, state.clone());
    let mut reached: Option<usize> = None;
    let mut last = f64::INFINITY;
    let mut iterations = 0;
    while iterations < cap {
        let (next, rec) = solver.step(&state)?;
        iterations += 1;
        state = next;
        last = rec.r_full;
        if rec.r_full <= best.0 {
            best = (rec.r_full, state.clone());
        }
        match reached {
            None if rec.r_full <= tol => reached = Some(iterations),
            Some(at) if iterations >= 2 * at || rec.r_full == 0.0 => break,
            _ => {}
        }
    }
    let approximate = reached.is_none();
    let (residual, chosen) = if approximate { best } else { (last, state) };
    let c = &problem.constraint;
    let x = if c.a().is_square() {
        let rhs = c.c().sub(&c.apply_b(&chosen.z));
        match Lu::factor(c.a()) {
            Ok(lu) => lu.solve(&rhs),
            Err(_) => chosen.x.clone(),
        }
    } else {
        chosen.x.clone()
    };
    let p_star = problem.objective(&x, &chosen.z);
    Ok(ReferenceOptimum {
        x,
        z: chosen.z,
        y: chosen.y,
        p_star,
        iterations,
        residual,
        approximate,
    })
}

/// Least-squares fit of log R(T) = exponent·log T + intercept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthFit {
    pub exponent: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_growth_exponent(horizons: &[usize], totals: &[f64]) -> Result<GrowthFit> {
    if horizons.len() != totals.len() {
        return Err(Error::Parameter(format!(
            "{} horizons but {} totals",
            horizons.len(),
            totals.len()
        )));
    }
    if horizons.len() < 4 {
        return Err(Error::Parameter(format!("growth fit needs at least 4 points, got {}", horizons.len())));
    }
    if let Some(v) = totals.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::Parameter(format!("growth fit needs positive totals, got {v}")));
    }
    if horizons.contains(&0) {
        return Err(Error::Parameter("horizons must be positive".into()));
    }
    let xs: Vec<f64> = horizons.iter().map(|&t| (t as f64).ln()).collect();
    let ys: Vec<f64> = totals.iter().map(|v| v.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Parameter("horizons must not all be equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - exponent * x).powi(2))
        .sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(GrowthFit {
        exponent,
        intercept,
        r_squared,
    })
}

/// Half-decade horizons 10, 32, 100, 316, ... up to `max`.
pub fn horizon_grid(max: usize) -> Vec<usize> {
    (2..)
        .map(|k| 10f64.powf(k as f64 / 2.0).round() as usize)
        .take_while(|&t| t <= max)
        .collect()
}

/// A bounded LP min cᵀx s.t. a·x = a·x₀, 0 ≤ x ≤ 1, r_i·x ≤ r_i·x₀ + s_i.
#[derive(Debug, Clone)]
pub struct LpInstance {
    pub problem: ProjectionFreeProblem,
    pub cost: DenseVector,
    pub optimum: DenseVector,
    pub value: f64,
}

/// Extra random cuts beyond the unit box.
const LP_CUTS: usize = 2;
const VERTEX_TOL: f64 = 1e-9;

pub fn gen_lp(seed: u64, vars: usize) -> Result<LpInstance> {
    if vars < 2 {
        return Err(Error::Parameter(format!("lp needs at least 2 variables, got {vars}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };
    let x0: Vec<f64> = (0..vars).map(|_| rng.gen_range(0.2..0.8)).collect();
    let x0 = DenseVector::new(x0)?;
    let a_row = DenseVector::new((0..vars).map(|_| normal(&mut rng)).collect())?;
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for i in 0..vars {
        rows.push(DenseVector::basis(vars, i));
        rhs.push(1.0);
        rows.push(DenseVector::basis(vars, i).scaled(-1.0));
        rhs.push(0.0);
    }
    for _ in 0..LP_CUTS {
        let r = DenseVector::new((0..vars).map(|_| normal(&mut rng)).collect())?;
        rhs.push(r.dot(&x0) + rng.gen_range(0.05..0.3));
        rows.push(r);
    }
    let cost = DenseVector::new((0..vars).map(|_| normal(&mut rng)).collect())?;
    let problem = ProjectionFreeProblem::new(
        DenseMatrix::from_row_vectors(std::slice::from_ref(&a_row))?,
        DenseVector::new(vec![a_row.dot(&x0)])?,
        DenseMatrix::from_row_vectors(&rows)?,
        DenseVector::new(rhs)?,
    )?;
    let (optimum, value) = enumerate_vertices(&problem, &cost)?;
    Ok(LpInstance {
        problem,
        cost,
        optimum,
        value,
    })
}

/// Minimizes cᵀx over the vertices: every choice of inequality rows that,
/// with the equalities, pins x down uniquely.
pub fn enumerate_vertices(problem: &ProjectionFreeProblem, cost: &DenseVector) -> Result<(DenseVector, f64)> {
    let n = problem.dim();
    let me = problem.a().rows();
    if me > n {
        return Err(Error::Parameter("more equalities than variables".into()));
    }
    let mi = problem.b().rows();
    let need = n - me;
    let mut best: Option<(DenseVector, f64)> = None;
    let mut chosen = Vec::with_capacity(need);
    let mut visit = |rows: &[usize]| {
        let mut m = Vec::with_capacity(n);
        let mut rhs = Vec::with_capacity(n);
        for i in 0..me {
            m.push(problem.a().row(i).to_vec());
            rhs.push(problem.a_vec()[i]);
        }
        for &i in rows {
            m.push(problem.b().row(i).to_vec());
            rhs.push(problem.b_vec()[i]);
        }
        let Ok(mat) = DenseMatrix::from_rows(&m) else { return };
        let Ok(lu) = Lu::factor(&mat) else { return };
        let Ok(rhs) = DenseVector::new(rhs) else { return };
        let x = lu.solve(&rhs);
        if !x.is_finite() || problem.violation(&x) > VERTEX_TOL * VERTEX_TOL {
            return;
        }
        let value = cost.dot(&x);
        if best.as_ref().is_none_or(|(_, v)| value < *v) {
            best = Some((x, value));
        }
    };
    fn combos(start: usize, total: usize, need: usize, chosen: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
        if chosen.len() == need {
            visit(chosen);
            return;
        }
        for i in start..total {
            chosen.push(i);
            combos(i + 1, total, need, chosen, visit);
            chosen.pop();
        }
    }
    combos(0, mi, need, &mut chosen, &mut visit);
    best.ok_or_else(|| Error::Domain("the polytope has no vertex".into()))
}

/// Headline numbers of one run, all recomputable from its CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CsvSummary {
    pub rounds: usize,
    pub final_objective: f64,
    pub final_violation: f64,
    pub nnz: Vec<usize>,
    pub r1: Option<f64>,
    pub r2: Option<f64>,
    pub rc: Option<f64>,
    /// Fit of r1_cum at the half-decade horizons, when defined.
    pub growth: Option<GrowthFit>,
}

fn parse_cell(name: &str, cell: &str) -> Result<Option<f64>> {
    if cell.is_empty() {
        Ok(None)
    } else {
        cell.parse()
            .map(Some)
            .map_err(|e| Error::Parse(format!("column {name}: {cell:?}: {e}")))
    }
}

/// Reads a per-round CSV written by [`run_experiment`].
pub fn summarize_csv(text: &str) -> Result<CsvSummary> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::Parse("empty csv".into()))?
        .split(',')
        .collect();
    let col = |name: &str| header.iter().position(|h| *h == name);
    let objective_col = col("objective").ok_or_else(|| Error::Parse("csv has no objective column".into()))?;
    let violation_col = col("violation_sq")
        .or_else(|| col("r_full"))
        .ok_or_else(|| Error::Parse("csv has no violation column".into()))?;
    let nnz_col = col("nnz").ok_or_else(|| Error::Parse("csv has no nnz column".into()))?;
    let (r1_col, r2_col, rc_col) = (col("r1_cum"), col("r2_cum"), col("rc_cum"));
    let mut rows: Vec<Vec<&str>> = Vec::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(Error::Parse(format!("row has {} cells, header {}", cells.len(), header.len())));
        }
        rows.push(cells);
    }
    let last = rows.last().ok_or_else(|| Error::Parse("csv has no rows".into()))?;
    let get = |row: &[&str], c: usize| parse_cell(header[c], row[c]);
    let nnz = rows
        .iter()
        .map(|r| parse_num::<usize>("nnz", r[nnz_col]))
        .collect::<Result<Vec<_>>>()?;
    let opt = |c: Option<usize>| -> Result<Option<f64>> { c.map_or(Ok(None), |c| get(last, c)) };
    let growth = match r1_col {
        Some(c) => {
            let horizons = horizon_grid(rows.len());
            let totals = horizons
                .iter()
                .map(|&t| get(&rows[t - 1], c).map(|v| v.unwrap_or(f64::NAN)))
                .collect::<Result<Vec<_>>>()?;
            fit_growth_exponent(&horizons, &totals).ok()
        }
        None => None,
    };
    Ok(CsvSummary {
        rounds: rows.len(),
        final_objective: get(last, objective_col)?.unwrap_or(f64::NAN),
        final_violation: get(last, violation_col)?.unwrap_or(f64::NAN),
        nnz,
        r1: opt(r1_col)?,
        r2: opt(r2_col)?,
        rc: opt(rc_col)?,
        growth,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSummary {
    pub solver: String,
    pub seed: u64,
    pub rounds: usize,
    pub final_objective: f64,
    /// Oracle optimum of the aggregate problem.
    pub p_star: f64,
    pub p_star_approximate: bool,
    pub final_violation: f64,
    pub nnz: Vec<usize>,
    pub r1: Option<f64>,
    pub r2: Option<f64>,
    pub rc: Option<f64>,
    pub growth: Option<GrowthFit>,
    pub seconds_per_round: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub summary: MetricSummary,
    pub csv: String,
    pub reference: ReferenceOptimum,
    /// Ledger of the run, absent for batch and projection-free runs.
    pub ledger: Option<RegretLedger>,
}

/// Mean of equal-length NNZ trajectories, round by round.
pub fn average_trajectories(runs: &[Vec<usize>]) -> Result<Vec<f64>> {
    let first = runs.first().ok_or(Error::Empty("trajectory list"))?;
    if runs.iter().any(|r| r.len() != first.len()) {
        return Err(Error::Parameter("trajectories differ in length".into()));
    }
    let k = runs.len() as f64;
    Ok((0..first.len())
        .map(|t| runs.iter().map(|r| r[t] as f64).sum::<f64>() / k)
        .collect())
}

/// D_x, D_z, λ's and α from the comparator; G_f, D and F are left to the caller.
pub fn comparator_constants(
    problem: &CompositeProblem,
    reference: &ReferenceOptimum,
    divergence: &DivergenceSpec,
) -> Result<BoundConstants> {
    let x0 = DenseVector::zeros(reference.x.dim());
    let d_x = if divergence.is_kl() {
        0.0
    } else {
        divergence.divergence(&reference.x, &x0)?.sqrt()
    };
    Ok(BoundConstants {
        d_x,
        d_z: reference.z.norm(),
        alpha: divergence.alpha(),
        lambda_max_b: problem.constraint.lambda_max_b(),
        lambda_min_a: problem.constraint.lambda_min_a().unwrap_or(0.0),
        ..Default::default()
    })
}

/// Radius used for data-driven gradient bounds: twice the comparator norm, at least 1.
pub fn gradient_radius(reference: &ReferenceOptimum) -> f64 {
    (2.0 * reference.x.norm()).max(1.0)
}

/// G_f and D_x over the same ball ‖x‖ ≤ R, R = [`gradient_radius`]: G_f bounds the
/// squared (plus ridge) loss gradients there and D_x = R/√2 bounds ½‖x*‖.
pub fn domain_constants(inst: &ExperimentInstance, mu: f64, reference: &ReferenceOptimum) -> Result<(f64, f64)> {
    let ds = inst
        .dataset
        .as_ref()
        .ok_or_else(|| Error::Capability("gradient bounds need a dataset".into()))?;
    let radius = gradient_radius(reference);
    Ok((ds.squared_gradient_bound(radius) + mu * radius, radius / std::f64::consts::SQRT_2))
}

pub fn resolve_schedule(
    cfg: &ExperimentConfig,
    inst: &ExperimentInstance,
    reference: &ReferenceOptimum,
) -> Result<ScheduleSpec> {
    let c = &inst.aggregate.constraint;
    let horizon = cfg.total_rounds();
    let g_f = || domain_constants(inst, cfg.mu, reference).map(|(g, _)| g);
    let spec = match cfg.schedule_kind() {
        ScheduleKind::Constant if cfg.solver == SolverKind::OadmEta0 => ScheduleSpec::EtaZero {
            rho: cfg.rho,
            growth: Growth::Constant,
        },
        ScheduleKind::Constant => ScheduleSpec::Constant {
            rho: cfg.rho,
            eta: cfg.eta,
        },
        ScheduleKind::Sqrt => {
            let (g_f, d_x) = domain_constants(inst, cfg.mu, reference)?;
            ScheduleSpec::sqrt_horizon(horizon, g_f, d_x, 1.0)?
        }
        ScheduleKind::StronglyConvex => {
            let beta1 = cfg.beta1.unwrap_or(cfg.mu);
            let beta2 = match (cfg.beta2, inst.aggregate.g.strong_convexity()) {
                (Some(b), _) => b,
                (None, s) => s,
            };
            ScheduleSpec::strongly_convex(beta1, beta2, c.lambda_max_b())?
        }
        ScheduleKind::EtaLinear => ScheduleSpec::LinearEta {
            rho: cfg.rho,
            eta_scale: cfg.eta,
        },
        ScheduleKind::Eta0 => ScheduleSpec::EtaZero {
            rho: cfg.rho,
            growth: Growth::Constant,
        },
        ScheduleKind::Eta0Sqrt => {
            let lmin = c
                .lambda_min_a()
                .ok_or_else(|| Error::Capability("eta0-sqrt needs an invertible A".into()))?;
            ScheduleSpec::eta_zero_horizon(horizon, g_f()?, reference.z.norm(), lmin, c.lambda_max_b())?
        }
        ScheduleKind::Eta0Log => ScheduleSpec::eta_zero_log(cfg.beta2.unwrap_or(1.0), c.lambda_max_b())?,
    };
    spec.validate()?;
    Ok(spec)
}

fn check_lower_bound(objective: f64, violation_sq: f64, reference: &ReferenceOptimum, t: usize) -> Result<()> {
    if !reference.approximate && violation_sq <= FEASIBLE_SQ && objective < reference.p_star - LOWER_BOUND_SLACK {
        return Err(Error::Invariant(format!(
            "round {t}: feasible objective {objective:e} below p* = {:e}",
            reference.p_star
        )));
    }
    Ok(())
}

const BATCH_HEADER: &str = "t,objective,r_cross,r_full,y_norm,nnz";
const LP_HEADER: &str = "t,objective,violation_sq,gap,nnz";

/// Runs the configured experiment. The per-round CSV goes to `cfg.out` when
/// set; on a solver error the rows written so far are flushed before the
/// error is returned.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let inst = build_instance(cfg)?;
    let mut csv = Vec::new();
    let started = Instant::now();
    let result = run_into(cfg, &inst, &mut csv);
    let elapsed = started.elapsed().as_secs_f64();
    if let Some(path) = &cfg.out {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, &csv)?;
    }
    let (reference, ledger) = result?;
    let csv = String::from_utf8(csv).map_err(|e| Error::Parse(e.to_string()))?;
    let s = summarize_csv(&csv)?;
    let summary = MetricSummary {
        solver: cfg.solver.to_string(),
        seed: cfg.seed,
        rounds: s.rounds,
        final_objective: s.final_objective,
        p_star: reference.p_star,
        p_star_approximate: reference.approximate,
        final_violation: s.final_violation,
        nnz: s.nnz,
        r1: s.r1,
        r2: s.r2,
        rc: s.rc,
        growth: s.growth,
        seconds_per_round: elapsed / s.rounds.max(1) as f64,
    };
    Ok(ExperimentOutput {
        summary,
        csv,
        reference,
        ledger,
    })
}

fn run_into(
    cfg: &ExperimentConfig,
    inst: &ExperimentInstance,
    out: &mut Vec<u8>,
) -> Result<(ReferenceOptimum, Option<RegretLedger>)> {
    if let Some(lp) = &inst.lp {
        let reference = ReferenceOptimum {
            x: lp.optimum.clone(),
            z: lp.optimum.clone(),
            y: DenseVector::zeros(lp.optimum.dim()),
            p_star: lp.value,
            iterations: 0,
            residual: 0.0,
            approximate: false,
        };
        run_lp(cfg, lp, out)?;
        return Ok((reference, None));
    }
    let reference = reference_optimum(&inst.aggregate)?;
    let ledger = match cfg.solver {
        SolverKind::BatchAdm => {
            run_batch_csv(cfg, inst, &reference, out)?;
            None
        }
        SolverKind::Fobos | SolverKind::Rda | SolverKind::Ogd => Some(run_baseline(cfg, inst, &reference, out)?),
        _ => Some(run_online(cfg, inst, &reference, out)?),
    };
    Ok((reference, ledger))
}

fn run_batch_csv(cfg: &ExperimentConfig, inst: &ExperimentInstance, reference: &ReferenceOptimum, out: &mut Vec<u8>) -> Result<()> {
    let p = &inst.aggregate;
    let mut solver = BatchAdm::new(p, cfg.rho)?;
    let mut state = IterateState::zeros(&p.constraint);
    writeln!(out, "{BATCH_HEADER}")?;
    for _ in 0..cfg.total_rounds() {
        let (next, rec) = solver.step(&state)?;
        let objective = p.objective(&next.x, &next.z);
        writeln!(
            out,
            "{},{},{},{},{},{}",
            next.t,
            objective,
            rec.r_cross,
            rec.r_full,
            next.y.norm(),
            next.z.count_above(cfg.nnz_threshold)
        )?;
        check_lower_bound(objective, p.constraint.residual(&next.x, &next.z).norm_sq(), reference, next.t)?;
        state = next;
    }
    Ok(())
}

fn append_row(ledger: &mut RegretLedger, objective: f64, r: (f64, Option<f64>, f64), out: &mut Vec<u8>) -> Result<()> {
    ledger.set_objective(objective);
    let log = ledger.per_round_log.last().expect("recorded");
    crate::oadm::regret::write_csv_row(out, log, r.0, r.1, r.2)
}

fn run_online(
    cfg: &ExperimentConfig,
    inst: &ExperimentInstance,
    reference: &ReferenceOptimum,
    out: &mut Vec<u8>,
) -> Result<RegretLedger> {
    let schedule = resolve_schedule(cfg, inst, reference)?;
    let update = match cfg.solver {
        SolverKind::OadmInexact(case) => XUpdate::Inexact(case),
        _ => XUpdate::Exact,
    };
    let mut solver = OnlineAdm::new(&inst.online, schedule, DivergenceSpec::quadratic())?.with_update(update);
    let ds = inst.dataset.as_ref().ok_or_else(|| Error::Capability("online runs need a dataset".into()))?;
    let square_a = inst.online.constraint.a().is_square();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5eed);
    let mut ledger = RegretLedger::new(reference.x.clone(), reference.z.clone(), &inst.online.g);
    ledger.nnz_threshold = cfg.nnz_threshold;
    let mut state = solver.initial_state();
    RegretLedger::write_csv_header(out)?;
    for round in 0..cfg.total_rounds() {
        let rates: Rates = solver.rates_for(&state);
        let xhat = if square_a { Some(solver.xhat(&state.z)?) } else { None };
        let (next, loss) = if cfg.solver == SolverKind::OadmStochastic {
            let (next, _, i) = solver.stochastic_step(&state, ds, &mut rng)?;
            (next, ds.squared_term(i))
        } else {
            let loss = inst.loss(cfg.mu, round % ds.len()).expect("dataset present");
            (solver.step(&state, &loss)?.0, loss)
        };
        let f = Objective::Term(loss);
        ledger.record(&f, &inst.online.g, &inst.online.constraint, &state, &next, xhat.as_ref(), rates)?;
        let objective = inst.aggregate.objective(&next.x, &next.z);
        let violation = ledger.per_round_log.last().expect("recorded").next_violation_sq;
        let totals = (ledger.r1_cum, ledger.r2_cum, ledger.rc_cum);
        append_row(&mut ledger, objective, totals, out)?;
        check_lower_bound(objective, violation, reference, next.t)?;
        state = next;
    }
    Ok(ledger)
}

fn run_baseline(
    cfg: &ExperimentConfig,
    inst: &ExperimentInstance,
    reference: &ReferenceOptimum,
    out: &mut Vec<u8>,
) -> Result<RegretLedger> {
    let ds = inst.dataset.as_ref().ok_or_else(|| Error::Capability("baselines need a dataset".into()))?;
    let g = &inst.online.g;
    let mut ledger = RegretLedger::new(reference.x.clone(), reference.z.clone(), g);
    ledger.nnz_threshold = cfg.nnz_threshold;
    let mut b = BaselineState::zeros(cfg.n);
    let lift = |s: &BaselineState| IterateState {
        x: s.z.clone(),
        z: s.z.clone(),
        y: DenseVector::zeros(cfg.n),
        t: s.t,
    };
    RegretLedger::write_csv_header(out)?;
    for round in 0..cfg.total_rounds() {
        let loss = inst.loss(cfg.mu, round % ds.len()).expect("dataset present");
        let rho_t = fobos_rho(cfg.rho, b.t + 1);
        let next = match cfg.solver {
            SolverKind::Fobos => fobos_step(&b, &loss, g, rho_t)?,
            SolverKind::Ogd => ogd_step(&b, &loss, g, 1.0 / rho_t)?,
            _ => rda_step(&b, &loss, g, cfg.gamma)?,
        };
        let (prev_s, next_s) = (lift(&b), lift(&next));
        let rates = Rates { rho: rho_t, eta: 0.0 };
        ledger.record(&Objective::Term(loss), g, &inst.online.constraint, &prev_s, &next_s, Some(&prev_s.z), rates)?;
        let objective = inst.aggregate.objective(&next_s.x, &next_s.z);
        let totals = (ledger.r1_cum, ledger.r2_cum, ledger.rc_cum);
        append_row(&mut ledger, objective, totals, out)?;
        check_lower_bound(objective, 0.0, reference, next.t)?;
        b = next;
    }
    Ok(ledger)
}

fn run_lp(cfg: &ExperimentConfig, lp: &LpInstance, out: &mut Vec<u8>) -> Result<()> {
    let solver = ProjectionFreeSolver::new(&lp.problem, cfg.rho, cfg.rho, cfg.eta)?;
    let loss = LossTerm::Linear { g: lp.cost.clone() };
    let mut state = ProjectionFreeState::zeros(&lp.problem);
    writeln!(out, "{LP_HEADER}")?;
    for _ in 0..cfg.total_rounds() {
        state = solver.step(&state, &loss)?;
        let objective = lp.cost.dot(&state.x);
        writeln!(
            out,
            "{},{:.12e},{:.12e},{:.12e},{}",
            state.t,
            objective,
            lp.problem.violation(&state.x),
            objective - lp.value,
            state.x.count_above(cfg.nnz_threshold)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DenseVector {
        DenseVector::new(x.to_vec()).unwrap()
    }

    fn small_cfg() -> ExperimentConfig {
        ExperimentConfig {
            n_rows: 20,
            n: 10,
            k: 2,
            rounds: Some(60),
            ..Default::default()
        }
    }

    #[test]
    fn reference_on_shifted_quadratic() {
        // f = ‖x − 1‖² = xᵀx − 2·1ᵀx + n
        let n = 3;
        let f = QuadraticLoss::new(DenseMatrix::scaled_identity(n, 2.0), DenseVector::filled(n, -2.0), n as f64).unwrap();
        let p = CompositeProblem::new(Objective::Quadratic(f), Regularizer::Zero, ConstraintSpec::consensus(n)).unwrap();
        let r = reference_optimum(&p).unwrap();
        assert!(!r.approximate);
        assert!(r.residual <= REFERENCE_TOL);
        assert!(r.x.distance(&DenseVector::filled(n, 1.0)) < 1e-6);
        assert!(r.z.distance(&DenseVector::filled(n, 1.0)) < 1e-6);
        assert!(r.p_star.abs() < 1e-10);
    }

    #[test]
    fn reference_on_scalar_lasso() {
        // (x − 1)² + |x|: x* = 0.5, p* = 0.75.
        let f = QuadraticLoss::new(DenseMatrix::scaled_identity(1, 2.0), v(&[-2.0]), 1.0).unwrap();
        let p = CompositeProblem::new(Objective::Quadratic(f), Regularizer::L1(1.0), ConstraintSpec::consensus(1)).unwrap();
        let r = reference_optimum(&p).unwrap();
        assert!((r.x[0] - 0.5).abs() < 1e-8 && (r.z[0] - 0.5).abs() < 1e-8);
        assert!((r.p_star - 0.75).abs() < 1e-10);
    }

    #[test]
    fn reference_cap_flags_approximate() {
        let f = QuadraticLoss::new(DenseMatrix::scaled_identity(1, 2.0), v(&[-2.0]), 1.0).unwrap();
        let p = CompositeProblem::new(Objective::Quadratic(f), Regularizer::L1(1.0), ConstraintSpec::consensus(1)).unwrap();
        let r = reference_optimum_with(&p, 1.0, 0.0, 3).unwrap();
        assert!(r.approximate);
        assert_eq!(r.iterations, 3);
    }

    #[test]
    fn growth_fit_examples() {
        let hs = [100, 1000, 10_000, 100_000];
        let root: Vec<f64> = hs.iter().map(|&t| (t as f64).sqrt()).collect();
        let fit = fit_growth_exponent(&hs, &root).unwrap();
        assert!((fit.exponent - 0.5).abs() < 1e-9);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        let lin: Vec<f64> = hs.iter().map(|&t| 7.0 * t as f64).collect();
        let fit = fit_growth_exponent(&hs, &lin).unwrap();
        assert!((fit.exponent - 1.0).abs() < 1e-9);
        assert!((fit.intercept - 7f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn growth_fit_rejections() {
        assert!(fit_growth_exponent(&[1, 2, 3], &[1.0, 2.0, 3.0]).is_err());
        assert!(fit_growth_exponent(&[1, 2, 3, 4], &[1.0, 0.0, 3.0, 4.0]).is_err());
        assert!(fit_growth_exponent(&[1, 2, 3, 4], &[1.0, -2.0, 3.0, 4.0]).is_err());
        assert!(fit_growth_exponent(&[1, 2, 3, 4], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn horizon_grid_is_half_decades() {
        assert_eq!(horizon_grid(10_000), vec![10, 32, 100, 316, 1000, 3162, 10_000]);
        assert!(horizon_grid(5).is_empty());
    }

    #[test]
    fn config_round_trips_through_kv() {
        let text = "problem = tv\nN = 30\nn = 12 # comment\nsolver = oadm-inexact(loss-feasible)\nschedule = eta-t\nq = 0.1\nunit_rows = true\nT = 40\nout = /tmp/x.csv\n";
        let cfg = ExperimentConfig::from_kv(text).unwrap();
        assert_eq!(cfg.problem, ProblemKind::Tv);
        assert_eq!(cfg.n_rows, 30);
        assert_eq!(cfg.solver, SolverKind::OadmInexact(InexactCase::LinearizedLoss(LinearizationPoint::Feasible)));
        assert_eq!(cfg.schedule, Some(ScheduleKind::EtaLinear));
        assert_eq!(cfg.total_rounds(), 40);
        assert!(cfg.unit_rows);
        assert_eq!(ExperimentConfig::from_kv(&cfg.to_kv()).unwrap(), cfg);
    }

    #[test]
    fn config_rejects_unknown_and_inconsistent() {
        assert!(ExperimentConfig::from_kv("colour = red").is_err());
        assert!(ExperimentConfig::from_kv("rho").is_err());
        assert!(ExperimentConfig::from_kv("rho = fast").is_err());
        let mut cfg = small_cfg();
        cfg.solver = SolverKind::Ogd;
        assert!(cfg.validate().is_err());
        cfg.regularizer = RegularizerKind::Box;
        assert!(cfg.validate().is_ok());
        cfg.problem = ProblemKind::Tv;
        assert!(cfg.validate().is_err());
        let mut cfg = small_cfg();
        cfg.solver = SolverKind::OadmEta0;
        cfg.schedule = Some(ScheduleKind::Sqrt);
        assert!(cfg.validate().is_err());
        cfg.solver = SolverKind::BatchAdm;
        assert!(cfg.validate().is_err());
        cfg.schedule = None;
        assert!(cfg.validate().is_ok());
        cfg.problem = ProblemKind::Lp;
        assert!(cfg.validate().is_err());
        cfg.rho = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn vertex_enumeration_on_a_hand_lp() {
        // min x1 + 2x2 s.t. x1 + x2 = 1, 0 ≤ x ≤ 0.8.
        let p = ProjectionFreeProblem::new(
            DenseMatrix::from_rows(&[vec![1.0, 1.0]]).unwrap(),
            v(&[1.0]),
            DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0], vec![0.0, -1.0]]).unwrap(),
            v(&[0.8, 0.8, 0.0, 0.0]),
        )
        .unwrap();
        let (x, val) = enumerate_vertices(&p, &v(&[1.0, 2.0])).unwrap();
        assert!(x.distance(&v(&[0.8, 0.2])) < 1e-12);
        assert!((val - 1.2).abs() < 1e-12);
    }

    #[test]
    fn projection_free_matches_vertex_enumeration() {
        let lp = gen_lp(3, 2).unwrap();
        let solver = ProjectionFreeSolver::new(&lp.problem, 1.0, 1.0, 0.0).unwrap();
        let loss = LossTerm::Linear { g: lp.cost.clone() };
        let mut s = ProjectionFreeState::zeros(&lp.problem);
        for _ in 0..5000 {
            s = solver.step(&s, &loss).unwrap();
        }
        assert!(lp.problem.violation(&s.x) < 1e-8);
        assert!((lp.cost.dot(&s.x) - lp.value).abs() < 1e-4);
    }

    #[test]
    fn generated_lp_optimum_is_feasible_and_no_worse_than_samples() {
        let lp = gen_lp(11, 4).unwrap();
        assert!(lp.problem.violation(&lp.optimum) <= 1e-18);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut feasible = 0;
        for _ in 0..20_000 {
            let x = DenseVector::new((0..4).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
            // Move onto the equality plane.
            let a = lp.problem.a().row_vector(0);
            let shift = (lp.problem.a_vec()[0] - a.dot(&x)) / a.norm_sq();
            let mut y = x.clone();
            y.axpy(shift, &a);
            if lp.problem.violation(&y) == 0.0 {
                feasible += 1;
                assert!(lp.cost.dot(&y) >= lp.value - 1e-12);
            }
        }
        assert!(feasible > 0);
    }

    #[test]
    fn runs_are_deterministic() {
        let mut cfg = small_cfg();
        cfg.schedule = Some(ScheduleKind::EtaLinear);
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.csv, b.csv);
        assert_eq!(a.summary.nnz, b.summary.nnz);
        cfg.solver = SolverKind::OadmStochastic;
        assert_eq!(run_experiment(&cfg).unwrap().csv, run_experiment(&cfg).unwrap().csv);
    }

    #[test]
    fn summary_is_rederived_from_csv() {
        let cfg = small_cfg();
        let out = run_experiment(&cfg).unwrap();
        let ledger = out.ledger.as_ref().unwrap();
        let s = summarize_csv(&out.csv).unwrap();
        assert_eq!(s.rounds, 60);
        assert!((s.r1.unwrap() - ledger.r1_cum).abs() <= 1e-10 * ledger.r1_cum.abs().max(1.0));
        assert!((s.rc.unwrap() - ledger.rc_cum).abs() <= 1e-10 * ledger.rc_cum.abs().max(1.0));
        assert_eq!(s.nnz, ledger.per_round_log.iter().map(|l| l.nnz).collect::<Vec<_>>());
        assert_eq!(out.summary.nnz, s.nnz);
    }

    #[test]
    fn every_solver_kind_runs() {
        let kinds = [
            "batch-adm",
            "oadm",
            "oadm-eta0",
            "oadm-inexact(penalty)",
            "oadm-inexact(loss)",
            "oadm-inexact(loss-feasible)",
            "oadm-inexact(mirror)",
            "oadm-inexact(composite)",
            "oadm-stochastic",
            "fobos",
            "rda",
        ];
        for k in kinds {
            let mut cfg = small_cfg();
            cfg.solver = k.parse().unwrap();
            if matches!(cfg.solver, SolverKind::OadmInexact(InexactCase::MirrorDescent | InexactCase::Composite | InexactCase::LinearizedPenalty)) {
                cfg.eta = 10.0;
            }
            let out = run_experiment(&cfg).unwrap_or_else(|e| panic!("{k}: {e}"));
            assert_eq!(out.summary.rounds, 60, "{k}");
            assert!(out.summary.final_objective.is_finite(), "{k}");
            assert!(out.summary.final_objective >= out.summary.p_star - LOWER_BOUND_SLACK || out.summary.final_violation > 0.0);
        }
        let mut cfg = small_cfg();
        cfg.solver = SolverKind::Ogd;
        cfg.regularizer = RegularizerKind::Box;
        run_experiment(&cfg).unwrap();
        let mut cfg = small_cfg();
        cfg.problem = ProblemKind::Lp;
        cfg.solver = SolverKind::ProjectionFree;
        cfg.n = 3;
        cfg.eta = 0.0;
        let out = run_experiment(&cfg).unwrap();
        assert!(out.ledger.is_none());
    }

    #[test]
    fn baselines_respect_the_oracle_lower_bound() {
        for solver in [SolverKind::Fobos, SolverKind::Rda] {
            let mut cfg = small_cfg();
            cfg.solver = solver;
            cfg.rounds = Some(400);
            let out = run_experiment(&cfg).unwrap();
            assert!(out.summary.final_objective >= out.summary.p_star - LOWER_BOUND_SLACK);
        }
    }

    #[test]
    fn errors_flush_partial_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.csv");
        let mut cfg = small_cfg();
        cfg.solver = SolverKind::OadmInexact(InexactCase::MirrorDescent);
        cfg.eta = 1e-6;
        cfg.out = Some(path.clone());
        assert!(run_experiment(&cfg).is_err());
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,loss,"));
    }

    #[test]
    fn trajectory_average_is_pointwise() {
        let avg = average_trajectories(&[vec![1, 2, 3], vec![3, 2, 1]]).unwrap();
        assert_eq!(avg, vec![2.0, 2.0, 2.0]);
        assert!(average_trajectories(&[vec![1], vec![1, 2]]).is_err());
        assert!(average_trajectories(&[]).is_err());
    }
}
