//! Manufactured-solution runs: convergence studies over mesh levels and
//! side-by-side runs of the two methods.

use std::time::{Duration, Instant};

use crate::analysis::{convergence_orders, l2_error_flux, l2_error_scalar, ConvergenceReport, LevelErrors};
use crate::assembly::{assemble_static, HdgSystem};
use crate::error::{HdgError, Result};
use crate::mesh::build_structured_mesh;
use crate::problems::{manufactured, ManufacturedProblem};
use crate::solver::{
    time_integrate, Method, NewtonConfig, Solver, StepDiagnostics, StepState, TimeGrid,
};
use crate::polybasis::Point;
use crate::spaces::Discretization;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeStepRule {
    /// `dt = h^(k+1)`
    MeshPower,
    Fixed(f64),
}

impl TimeStepRule {
    pub fn grid(self, h: f64, k: usize, final_time: f64) -> Result<TimeGrid> {
        match self {
            TimeStepRule::MeshPower => TimeGrid::from_mesh(h, k, final_time),
            TimeStepRule::Fixed(dt) => TimeGrid::new(dt, final_time),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub problem: String,
    pub dim: usize,
    pub k: usize,
    /// Cells per axis of each mesh level.
    pub levels: Vec<usize>,
    pub tau: f64,
    pub final_time: f64,
    pub time_step: TimeStepRule,
    pub method: Method,
    pub newton: NewtonConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            problem: "allen_cahn".into(),
            dim: 2,
            k: 1,
            levels: vec![8, 16, 32],
            tau: 1.0,
            final_time: 1.0,
            time_step: TimeStepRule::MeshPower,
            method: Method::Interpolatory,
            newton: NewtonConfig::default(),
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.dim) {
            return Err(HdgError::InvalidArgument(format!("dimension {} not in {{2, 3}}", self.dim)));
        }
        if self.k > 3 {
            return Err(HdgError::InvalidArgument(format!("degree {} not in 0..=3", self.k)));
        }
        if self.levels.is_empty() || self.levels.contains(&0) {
            return Err(HdgError::InvalidArgument("mesh levels must be positive".into()));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(HdgError::InvalidStabilization(self.tau));
        }
        self.newton.validate()
    }

    pub fn problem(&self) -> Result<ManufacturedProblem> {
        manufactured(&self.problem, self.dim)
    }

    fn system(&self, n: usize) -> Result<HdgSystem> {
        let disc = Discretization::new(build_structured_mesh(self.dim, n)?, self.k)?;
        assemble_static(disc, self.tau)
    }
}

/// Result of one mesh level.
#[derive(Debug, Clone)]
pub struct LevelOutcome {
    pub n: usize,
    pub errors: LevelErrors,
    pub steps: usize,
    pub newton_iterations: usize,
    pub max_step_iterations: usize,
    pub elapsed: Duration,
}

/// Flux and scalar errors of `state` against the exact solution at `state.time`.
pub fn final_errors(sys: &HdgSystem, problem: &ManufacturedProblem, state: &StepState) -> Result<LevelErrors> {
    let disc = &sys.disc;
    let n1 = disc.layout.n1();
    let dim = disc.dim();
    let t = state.time;
    let flux: Vec<&[f64]> = (0..dim).map(|s| state.flux(n1, s)).collect();
    Ok(LevelErrors {
        elements: disc.mesh.num_elements(),
        h: disc.mesh.h(),
        err_q: l2_error_flux(disc, &flux, |x| problem.flux(x, t))?,
        err_u: l2_error_scalar(disc, state.scalar(n1, dim), |x| problem.exact.u(x, t))?,
    })
}

/// Solves on the `n`-cell mesh up to the final time.
pub fn solve_level(
    cfg: &StudyConfig,
    n: usize,
    observe: &mut dyn FnMut(&StepState, &StepDiagnostics),
) -> Result<LevelOutcome> {
    cfg.validate()?;
    let problem = cfg.problem()?;
    let start = Instant::now();
    let sys = cfg.system(n)?;
    let solver = Solver::new(&sys, cfg.method, problem.nonlinear.as_ref(), cfg.newton)?;
    let grid = cfg.time_step.grid(sys.disc.mesh.h(), cfg.k, cfg.final_time)?;
    let traj = time_integrate(
        &solver,
        &|x| problem.initial(x),
        &|x, t| problem.source(x, t),
        grid,
        observe,
    )?;
    let errors = final_errors(&sys, &problem, &traj.final_state)?;
    Ok(LevelOutcome {
        n,
        errors,
        steps: traj.diagnostics.len(),
        newton_iterations: traj.diagnostics.iter().map(|d| d.iterations).sum(),
        max_step_iterations: traj.diagnostics.iter().map(|d| d.iterations).max().unwrap_or(0),
        elapsed: start.elapsed(),
    })
}

/// Runs every level of `cfg` and computes pairwise orders.
pub fn run_convergence(
    cfg: &StudyConfig,
    observe: &mut dyn FnMut(usize, &StepState, &StepDiagnostics),
) -> Result<(ConvergenceReport, Vec<LevelOutcome>)> {
    if cfg.levels.len() < 2 {
        return Err(HdgError::InvalidArgument(
            "a convergence study needs at least two mesh levels".into(),
        ));
    }
    let mut outcomes = Vec::with_capacity(cfg.levels.len());
    for &n in &cfg.levels {
        let out = solve_level(cfg, n, &mut |s, d| observe(n, s, d)).map_err(|e| HdgError::AtLevel {
            level: n,
            source: Box::new(e),
        })?;
        outcomes.push(out);
    }
    let errors: Vec<LevelErrors> = outcomes.iter().map(|o| o.errors).collect();
    Ok((convergence_orders(cfg.k, &errors)?, outcomes))
}

/// One method's share of a comparison run.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub method: Method,
    pub errors: LevelErrors,
    pub final_state: StepState,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl MethodRun {
    pub fn iterations(&self) -> usize {
        self.diagnostics.iter().map(|d| d.iterations).sum()
    }

    /// Mean nonlinear-vector plus Jacobian construction time per Newton
    /// iteration.
    pub fn mean_construction_time(&self) -> Duration {
        let total: Duration = self
            .diagnostics
            .iter()
            .flat_map(|d| &d.records)
            .map(|r| r.nonlinear_time + r.jacobian_time)
            .sum();
        total / self.iterations().max(1) as u32
    }
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub n: usize,
    pub interpolatory: MethodRun,
    pub standard: MethodRun,
    /// Largest infinity-norm gap between the two coefficient vectors over
    /// all time steps.
    pub max_coefficient_gap: f64,
}

impl Comparison {
    /// Standard over interpolatory construction time per iteration.
    pub fn construction_ratio(&self) -> f64 {
        self.standard.mean_construction_time().as_secs_f64()
            / self.interpolatory.mean_construction_time().as_secs_f64().max(1e-12)
    }
}

/// Runs both methods in lockstep on the `n`-cell mesh. The method field of
/// `cfg` is ignored.
pub fn run_compare(cfg: &StudyConfig, n: usize) -> Result<Comparison> {
    cfg.validate()?;
    let problem = cfg.problem()?;
    if problem.nonlinear.depends_on_gradient() {
        return Err(HdgError::GradientDependent(problem.name.clone()));
    }
    let sys = cfg.system(n)?;
    let f = problem.nonlinear.as_ref();
    let interp = Solver::new(&sys, Method::Interpolatory, f, cfg.newton)?;
    let standard = Solver::new(&sys, Method::Standard, f, cfg.newton)?;
    let grid = cfg.time_step.grid(sys.disc.mesh.h(), cfg.k, cfg.final_time)?;
    let source = |x: &Point, t: f64| problem.source(x, t);
    let u0 = |x: &Point| problem.initial(x);

    let mut a = interp.initial_state(&u0)?;
    let mut b = standard.initial_state(&u0)?;
    let mut diag_a = Vec::with_capacity(grid.steps());
    let mut diag_b = Vec::with_capacity(grid.steps());
    let mut gap = 0.0f64;
    for step in 1..=grid.steps() {
        let t = grid.time(step);
        let dt = t - grid.time(step - 1);
        let at = |e| HdgError::AtStep {
            step,
            time: t,
            source: Box::new(e),
        };
        let (na, da) = interp.newton_solve_step(&a, t, dt, &source).map_err(at)?;
        let (nb, db) = standard.newton_solve_step(&b, t, dt, &source).map_err(at)?;
        gap = na
            .x
            .iter()
            .zip(&nb.x)
            .fold(gap, |m, (p, q)| m.max((p - q).abs()));
        diag_a.push(da);
        diag_b.push(db);
        a = na;
        b = nb;
    }
    Ok(Comparison {
        n,
        interpolatory: MethodRun {
            method: Method::Interpolatory,
            errors: final_errors(&sys, &problem, &a)?,
            final_state: a,
            diagnostics: diag_a,
        },
        standard: MethodRun {
            method: Method::Standard,
            errors: final_errors(&sys, &problem, &b)?,
            final_state: b,
            diagnostics: diag_b,
        },
        max_coefficient_gap: gap,
    })
}
