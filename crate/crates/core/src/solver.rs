//! Backward Euler with Newton's method, solved through static condensation.
//!
//! The unknown vector is laid out as `[q_1, .., q_d, u, trace]`. Each Newton
//! iteration solves `J delta = -G(x)`, eliminating flux and scalar unknowns
//! element by element so that only the trace system is factorized globally.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::sparse::linalg::lu::{factorize_symbolic_lu, LuSymbolicParams, NumericLu, SymbolicLu};
use faer::sparse::{Pair, SparseColMat, SymbolicSparseColMat};
use faer::Par;
use nalgebra::{DMatrix, DVector};

use crate::assembly::{
    interpolatory_nonlinear_jacobian, interpolatory_nonlinear_vector, standard_nonlinear_jacobian,
    standard_nonlinear_vector, HdgSystem, NonlinearJacobian,
};
use crate::error::{HdgError, Result};
use crate::nonlinear::NonlinearTerm;
use crate::polybasis::Point;
use crate::spaces::l2_project_w;
use crate::sparse::SparseMatrix;

/// Caps the worker threads used by the sparse factorization.
pub fn set_thread_count(threads: usize) {
    let par = if threads <= 1 {
        Par::Seq
    } else {
        Par::rayon(threads)
    };
    faer::set_global_parallelism(par);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Interpolatory,
    Standard,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Interpolatory => "interpolatory",
            Method::Standard => "standard",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = HdgError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interpolatory" => Ok(Method::Interpolatory),
            "standard" => Ok(Method::Standard),
            other => Err(HdgError::InvalidArgument(format!(
                "unknown method `{other}` (expected interpolatory or standard)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    pub abs_tol: f64,
    pub step_tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            abs_tol: 1e-10,
            step_tol: 1e-12,
            max_iter: 25,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) || !(self.step_tol > 0.0) || self.max_iter == 0 {
            return Err(HdgError::InvalidArgument(format!(
                "Newton tolerances must be positive and max_iter at least 1: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Unknowns at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct StepState {
    pub step: usize,
    pub time: f64,
    /// Full vector `[q_1, .., q_d, u, trace]`.
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

impl StepState {
    pub fn flux(&self, n1: usize, s: usize) -> &[f64] {
        &self.x[s * n1..(s + 1) * n1]
    }

    pub fn scalar(&self, n1: usize, dim: usize) -> &[f64] {
        &self.x[dim * n1..(dim + 1) * n1]
    }

    pub fn trace(&self, n1: usize, dim: usize) -> &[f64] {
        &self.x[(dim + 1) * n1..]
    }
}

/// Timings and convergence data of one Newton iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    /// Residual norm before the update.
    pub residual: f64,
    pub nonlinear_time: Duration,
    pub jacobian_time: Duration,
    pub solve_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub step: usize,
    pub time: f64,
    pub iterations: usize,
    pub residual: f64,
    pub records: Vec<IterationRecord>,
    pub load_time: Duration,
}

impl StepDiagnostics {
    pub fn assembly_time(&self) -> Duration {
        self.load_time
            + self
                .records
                .iter()
                .map(|r| r.nonlinear_time + r.jacobian_time)
                .sum::<Duration>()
    }

    pub fn solve_time(&self) -> Duration {
        self.records.iter().map(|r| r.solve_time).sum()
    }
}

/// Per-element data of the elimination that does not change in time.
#[derive(Debug, Clone)]
struct LocalStatic {
    mass_inv: DMatrix<f64>,
    /// Signed gradient blocks used on the elimination side.
    grad: Vec<DMatrix<f64>>,
    /// `A1^{-1} A2_s`
    g: Vec<DMatrix<f64>>,
    /// `A1^{-1} A4_s`
    h: Vec<DMatrix<f64>>,
    /// `sum_s A2_s^T G_s`
    c0: DMatrix<f64>,
    /// `A7 + sum_s A2_s^T H_s`
    e0: DMatrix<f64>,
    /// `sum_s A4_s^T H_s`
    s0: DMatrix<f64>,
}

/// Static condensation onto the trace unknowns.
#[derive(Debug)]
pub struct Condenser {
    locals: Vec<LocalStatic>,
    pattern: Option<TracePattern>,
}

#[derive(Debug)]
struct TracePattern {
    symbolic: SymbolicSparseColMat<usize>,
    argsort: faer::sparse::Argsort<usize>,
    lu: SymbolicLu<usize>,
    numeric: Mutex<NumericLu<usize, f64>>,
}

impl Condenser {
    pub fn new(sys: &HdgSystem) -> Result<Self> {
        Self::build(sys, 1.0)
    }

    /// Elimination that uses `-A2` in place of `A2`. Only for exercising the
    /// consistency checks; its results are wrong on purpose.
    #[doc(hidden)]
    pub fn with_flipped_gradient(sys: &HdgSystem) -> Result<Self> {
        Self::build(sys, -1.0)
    }

    fn build(sys: &HdgSystem, grad_sign: f64) -> Result<Self> {
        let mut locals = Vec::with_capacity(sys.elements.len());
        for (e, b) in sys.elements.iter().enumerate() {
            let mass_inv = sys.disc.mass_inverse(e);
            let grad: Vec<DMatrix<f64>> = b.grad.iter().map(|m| m * grad_sign).collect();
            let g: Vec<DMatrix<f64>> = grad.iter().map(|a2| &mass_inv * a2).collect();
            let h: Vec<DMatrix<f64>> = b.trace_normal.iter().map(|a4| &mass_inv * a4).collect();
            let l = b.mass.nrows();
            let nt = b.trace_stab.ncols();
            let mut c0 = DMatrix::zeros(l, l);
            let mut e0 = b.trace_stab.clone();
            let mut s0 = DMatrix::zeros(nt, nt);
            for s in 0..grad.len() {
                c0 += grad[s].transpose() * &g[s];
                e0 += grad[s].transpose() * &h[s];
                s0 += b.trace_normal[s].transpose() * &h[s];
            }
            locals.push(LocalStatic {
                mass_inv,
                grad,
                g,
                h,
                c0,
                e0,
                s0,
            });
        }
        let n2 = sys.disc.layout.n2();
        let pattern = if n2 == 0 {
            None
        } else {
            let mut pairs = Vec::new();
            for e in 0..sys.elements.len() {
                let tr = sys.disc.layout.element_trace(e);
                for &col in tr {
                    for &row in tr {
                        pairs.push(Pair { row, col });
                    }
                }
            }
            let (symbolic, argsort) = SymbolicSparseColMat::try_new_from_indices(n2, n2, &pairs)
                .map_err(|e| HdgError::SingularTraceSystem(format!("trace pattern: {e:?}")))?;
            let lu = factorize_symbolic_lu(symbolic.as_ref(), LuSymbolicParams::default())
                .map_err(|e| HdgError::SingularTraceSystem(format!("symbolic LU: {e:?}")))?;
            Some(TracePattern {
                symbolic,
                argsort,
                lu,
                numeric: Mutex::new(NumericLu::new()),
            })
        };
        Ok(Condenser { locals, pattern })
    }

    /// Solves the Newton system `J x = rhs` with `rhs = [b_q1, .., b_qd, b_u, b_trace]`.
    ///
    /// The scalar-row block is `A6 + A1/dt + J_u`; flux-derivative blocks
    /// of `jac` add to the transposed gradient blocks.
    pub fn condense_and_solve(
        &self,
        sys: &HdgSystem,
        dt: f64,
        jac: &NonlinearJacobian,
        rhs: &[f64],
    ) -> Result<Vec<f64>> {
        let layout = &sys.disc.layout;
        let dim = sys.dim();
        let n1 = layout.n1();
        let n2 = layout.n2();
        let l = layout.local_len();
        if rhs.len() != layout.full_len() {
            return Err(HdgError::InvalidArgument(format!(
                "right-hand side of length {} for a system of size {}",
                rhs.len(),
                layout.full_len()
            )));
        }
        let has_flux_jac = !jac.d_flux.is_empty();
        let mut trace_rhs = rhs[(dim + 1) * n1..].to_vec();
        let mut values = Vec::new();
        // per element: Y, y0 and A1^{-1} b1_s
        let mut back: Vec<(DMatrix<f64>, DVector<f64>, Vec<DVector<f64>>)> =
            Vec::with_capacity(self.locals.len());

        for (e, loc) in self.locals.iter().enumerate() {
            let blk = &sys.elements[e];
            let tr = layout.element_trace(e);
            let range = e * l..(e + 1) * l;
            let mut q = &blk.stab + &blk.mass / dt + &loc.c0 + &jac.d_scalar.blocks[e];
            let mut em = loc.e0.clone();
            if has_flux_jac {
                for s in 0..dim {
                    let js = &jac.d_flux[s].blocks[e];
                    q += js * &loc.g[s];
                    em += js * &loc.h[s];
                }
            }
            let mut b2 = DVector::from_column_slice(&rhs[dim * n1 + range.start..dim * n1 + range.end]);
            let mut minv_b1 = Vec::with_capacity(dim);
            for s in 0..dim {
                let b1 = DVector::from_column_slice(&rhs[s * n1 + range.start..s * n1 + range.end]);
                let mb = &loc.mass_inv * &b1;
                b2 -= loc.grad[s].tr_mul(&mb);
                if has_flux_jac {
                    b2 -= &jac.d_flux[s].blocks[e] * &mb;
                }
                // trace rows collect -H_s^T b1_s
                let hb = loc.h[s].tr_mul(&b1);
                for (a, &t) in tr.iter().enumerate() {
                    trace_rhs[t] -= hb[a];
                }
                minv_b1.push(mb);
            }
            let lu = q.lu();
            let y = lu.solve(&em);
            let y0 = lu.solve(&b2);
            let (Some(y), Some(y0)) = (y, y0) else {
                return Err(HdgError::SingularLocalBlock { element: e, dt });
            };
            if !y.iter().chain(y0.iter()).all(|v| v.is_finite()) {
                return Err(HdgError::SingularLocalBlock { element: e, dt });
            }
            let sk = loc.e0.tr_mul(&y) - &loc.s0 - &blk.trace_mass;
            let r = loc.e0.tr_mul(&y0);
            for (a, &t) in tr.iter().enumerate() {
                trace_rhs[t] -= r[a];
            }
            // column-major over the element's trace block, matching the pattern
            for c in 0..tr.len() {
                for rr in 0..tr.len() {
                    values.push(sk[(rr, c)]);
                }
            }
            back.push((y, y0, minv_b1));
        }

        let z = match &self.pattern {
            None => Vec::new(),
            Some(p) => {
                let mat = SparseColMat::new_from_argsort(p.symbolic.clone(), &p.argsort, &values)
                    .map_err(|e| HdgError::SingularTraceSystem(format!("{e:?}")))?;
                let par = faer::get_global_parallelism();
                let mut numeric = p.numeric.lock().unwrap_or_else(|e| e.into_inner());
                let mut buf = MemBuffer::new(
                    p.lu.factorize_numeric_lu_scratch::<f64>(par, Default::default())
                        .or(p.lu.solve_in_place_scratch::<f64>(1, par)),
                );
                let stack = MemStack::new(&mut buf);
                let lu = p
                    .lu
                    .factorize_numeric_lu(&mut numeric, mat.as_ref(), par, stack, Default::default())
                    .map_err(|e| HdgError::SingularTraceSystem(format!("{e:?}")))?;
                let mut z = trace_rhs;
                lu.solve_in_place_with_conj(
                    faer::Conj::No,
                    faer::MatMut::from_column_major_slice_mut(&mut z, n2, 1),
                    par,
                    stack,
                );
                if !z.iter().all(|v| v.is_finite()) {
                    return Err(HdgError::SingularTraceSystem(
                        "trace solution is not finite".into(),
                    ));
                }
                z
            }
        };

        let mut x = vec![0.0; layout.full_len()];
        x[(dim + 1) * n1..].copy_from_slice(&z);
        for (e, (loc, (ym, y0, minv_b1))) in self.locals.iter().zip(&back).enumerate() {
            let tr = layout.element_trace(e);
            let ze = DVector::from_iterator(tr.len(), tr.iter().map(|&t| z[t]));
            let y = ym * &ze + y0;
            for s in 0..dim {
                let xs = &minv_b1[s] + &loc.g[s] * &y - &loc.h[s] * &ze;
                x[s * n1 + e * l..s * n1 + (e + 1) * l].copy_from_slice(xs.as_slice());
            }
            x[dim * n1 + e * l..dim * n1 + (e + 1) * l].copy_from_slice(y.as_slice());
        }
        Ok(x)
    }
}

/// The assembled Newton matrix, with the saddle-point signs:
///
/// ```text
/// [ A1          -A2_s          A4_s ]
/// [ A2_s^T+J_s  A6+A1/dt+J_u  -A7   ]
/// [ A4_s^T      A7^T          -A8   ]
/// ```
pub fn newton_matrix(sys: &HdgSystem, dt: f64, jac: &NonlinearJacobian) -> SparseMatrix {
    let layout = &sys.disc.layout;
    let dim = sys.dim();
    let n1 = layout.n1();
    let l = layout.local_len();
    let u0 = dim * n1;
    let t0 = (dim + 1) * n1;
    let mut t = Vec::new();
    for (e, b) in sys.elements.iter().enumerate() {
        let tr = layout.element_trace(e);
        let w = |i: usize| e * l + i;
        for i in 0..l {
            for j in 0..l {
                let uu = b.stab[(i, j)] + b.mass[(i, j)] / dt + jac.d_scalar.blocks[e][(i, j)];
                t.push((u0 + w(i), u0 + w(j), uu));
                for s in 0..dim {
                    let mut qu = b.grad[s][(j, i)];
                    if let Some(d) = jac.d_flux.get(s) {
                        qu += d.blocks[e][(i, j)];
                    }
                    t.push((s * n1 + w(i), s * n1 + w(j), b.mass[(i, j)]));
                    t.push((s * n1 + w(i), u0 + w(j), -b.grad[s][(i, j)]));
                    t.push((u0 + w(i), s * n1 + w(j), qu));
                }
            }
            for (a, &ta) in tr.iter().enumerate() {
                for s in 0..dim {
                    t.push((s * n1 + w(i), t0 + ta, b.trace_normal[s][(i, a)]));
                    t.push((t0 + ta, s * n1 + w(i), b.trace_normal[s][(i, a)]));
                }
                t.push((u0 + w(i), t0 + ta, -b.trace_stab[(i, a)]));
                t.push((t0 + ta, u0 + w(i), b.trace_stab[(i, a)]));
            }
        }
        for (a, &ta) in tr.iter().enumerate() {
            for (c, &tc) in tr.iter().enumerate() {
                t.push((t0 + ta, t0 + tc, -b.trace_mass[(a, c)]));
            }
        }
    }
    let n = layout.full_len();
    SparseMatrix::from_triplets(n, n, &t).expect("layout indices are in range")
}

/// Unreduced direct solve with a dense LU; for small systems and as an
/// independent check of [`Condenser::condense_and_solve`].
pub fn full_solve(matrix: &SparseMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    if matrix.rows() != matrix.cols() || rhs.len() != matrix.rows() {
        return Err(HdgError::InvalidArgument(format!(
            "{}x{} system with right-hand side of length {}",
            matrix.rows(),
            matrix.cols(),
            rhs.len()
        )));
    }
    let lu = matrix.to_dense().lu();
    let x = lu
        .solve(&DVector::from_column_slice(rhs))
        .ok_or_else(|| HdgError::Numerical("singular full system".into()))?;
    if !x.iter().all(|v| v.is_finite()) {
        return Err(HdgError::Numerical("singular full system".into()));
    }
    Ok(x.as_slice().to_vec())
}

fn mv_add(out: &mut [f64], m: &DMatrix<f64>, x: &[f64], alpha: f64) {
    for (j, xj) in x.iter().enumerate() {
        let a = alpha * xj;
        if a == 0.0 {
            continue;
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o += a * m[(i, j)];
        }
    }
}

fn mtv_add(out: &mut [f64], m: &DMatrix<f64>, x: &[f64], alpha: f64) {
    for (j, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (i, xi) in x.iter().enumerate() {
            acc += m[(i, j)] * xi;
        }
        *o += alpha * acc;
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Newton time stepper for one discretization and nonlinearity.
pub struct Solver<'a> {
    sys: &'a HdgSystem,
    method: Method,
    nonlinear: &'a dyn NonlinearTerm,
    newton: NewtonConfig,
    condenser: Condenser,
}

impl<'a> Solver<'a> {
    pub fn new(
        sys: &'a HdgSystem,
        method: Method,
        nonlinear: &'a dyn NonlinearTerm,
        newton: NewtonConfig,
    ) -> Result<Self> {
        newton.validate()?;
        if method == Method::Standard && nonlinear.depends_on_gradient() {
            return Err(HdgError::GradientDependent(nonlinear.name().to_string()));
        }
        Ok(Solver {
            sys,
            method,
            nonlinear,
            newton,
            condenser: Condenser::new(sys)?,
        })
    }

    pub fn system(&self) -> &HdgSystem {
        self.sys
    }

    pub fn method(&self) -> Method {
        self.method
    }

    fn split<'x>(&self, x: &'x [f64]) -> (Vec<&'x [f64]>, &'x [f64]) {
        let n1 = self.sys.disc.layout.n1();
        let dim = self.sys.dim();
        let flux = (0..dim).map(|s| &x[s * n1..(s + 1) * n1]).collect();
        (flux, &x[dim * n1..(dim + 1) * n1])
    }

    /// Nonlinear contribution to the scalar rows at `x`.
    pub fn nonlinear_vector(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (flux, u) = self.split(x);
        match self.method {
            Method::Interpolatory => interpolatory_nonlinear_vector(self.sys, self.nonlinear, &flux, u),
            Method::Standard => standard_nonlinear_vector(self.sys, self.nonlinear, u),
        }
    }

    pub fn nonlinear_jacobian(&self, x: &[f64]) -> Result<NonlinearJacobian> {
        let (flux, u) = self.split(x);
        match self.method {
            Method::Interpolatory => {
                interpolatory_nonlinear_jacobian(self.sys, self.nonlinear, &flux, u)
            }
            Method::Standard => standard_nonlinear_jacobian(self.sys, self.nonlinear, u),
        }
    }

    /// Residual `G(x)` of the backward Euler step from `u_prev` with load `b1`.
    pub fn residual(&self, x: &[f64], u_prev: &[f64], load: &[f64], dt: f64) -> Result<Vec<f64>> {
        let nl = self.nonlinear_vector(x)?;
        Ok(self.residual_with(x, u_prev, load, &nl, dt))
    }

    fn residual_with(&self, x: &[f64], u_prev: &[f64], load: &[f64], nl: &[f64], dt: f64) -> Vec<f64> {
        let layout = &self.sys.disc.layout;
        let dim = self.sys.dim();
        let n1 = layout.n1();
        let l = layout.local_len();
        let u0 = dim * n1;
        let t0 = (dim + 1) * n1;
        let mut g = vec![0.0; x.len()];
        let mut zk = Vec::new();
        for (e, b) in self.sys.elements.iter().enumerate() {
            let tr = layout.element_trace(e);
            zk.clear();
            zk.extend(tr.iter().map(|&t| x[t0 + t]));
            let r = e * l..(e + 1) * l;
            let u = &x[u0 + r.start..u0 + r.end];
            let up = &u_prev[r.clone()];
            let mut ru = vec![0.0; l];
            let mut rt = vec![0.0; tr.len()];
            for s in 0..dim {
                let qs = &x[s * n1 + r.start..s * n1 + r.end];
                let mut rq = vec![0.0; l];
                mv_add(&mut rq, &b.mass, qs, 1.0);
                mv_add(&mut rq, &b.grad[s], u, -1.0);
                mv_add(&mut rq, &b.trace_normal[s], &zk, 1.0);
                g[s * n1 + r.start..s * n1 + r.end].copy_from_slice(&rq);
                mtv_add(&mut ru, &b.grad[s], qs, 1.0);
                mtv_add(&mut rt, &b.trace_normal[s], qs, 1.0);
            }
            mv_add(&mut ru, &b.stab, u, 1.0);
            mv_add(&mut ru, &b.mass, u, 1.0 / dt);
            mv_add(&mut ru, &b.mass, up, -1.0 / dt);
            mv_add(&mut ru, &b.trace_stab, &zk, -1.0);
            for i in 0..l {
                g[u0 + r.start + i] = ru[i] + nl[r.start + i] - load[r.start + i];
            }
            mtv_add(&mut rt, &b.trace_stab, u, 1.0);
            mv_add(&mut rt, &b.trace_mass, &zk, -1.0);
            for (a, &t) in tr.iter().enumerate() {
                g[t0 + t] += rt[a];
            }
        }
        g
    }

    /// Assembled Jacobian of [`Solver::residual`] at `x`.
    pub fn jacobian_matrix(&self, x: &[f64], dt: f64) -> Result<SparseMatrix> {
        Ok(newton_matrix(self.sys, dt, &self.nonlinear_jacobian(x)?))
    }

    /// Solves one Newton system with the elimination path.
    pub fn solve_linearized(&self, x: &[f64], dt: f64, rhs: &[f64]) -> Result<Vec<f64>> {
        let jac = self.nonlinear_jacobian(x)?;
        self.condenser.condense_and_solve(self.sys, dt, &jac, rhs)
    }

    /// Newton iteration for the step ending at `time`, warm-started from
    /// `prev`.
    pub fn newton_solve_step(
        &self,
        prev: &StepState,
        time: f64,
        dt: f64,
        source: &dyn Fn(&Point, f64) -> f64,
    ) -> Result<(StepState, StepDiagnostics)> {
        self.newton_solve_step_from(prev, &prev.x, time, dt, source)
    }

    /// Like [`Solver::newton_solve_step`] but starting Newton at `guess`.
    pub fn newton_solve_step_from(
        &self,
        prev: &StepState,
        guess: &[f64],
        time: f64,
        dt: f64,
        source: &dyn Fn(&Point, f64) -> f64,
    ) -> Result<(StepState, StepDiagnostics)> {
        if !(dt > 0.0) {
            return Err(HdgError::InvalidArgument(format!("time step {dt} must be positive")));
        }
        let layout = &self.sys.disc.layout;
        let n1 = layout.n1();
        let dim = self.sys.dim();
        let u_prev = prev.scalar(n1, dim).to_vec();
        let t_load = Instant::now();
        let load = self.sys.assemble_load(|x| source(x, time));
        let load_time = t_load.elapsed();

        if guess.len() != prev.x.len() {
            return Err(HdgError::InvalidArgument(format!(
                "initial guess of length {} for {} unknowns",
                guess.len(),
                prev.x.len()
            )));
        }
        let mut x = guess.to_vec();
        let mut records = Vec::new();
        let mut residual;
        loop {
            let t_nl = Instant::now();
            let nl = self.nonlinear_vector(&x)?;
            let nonlinear_time = t_nl.elapsed();
            let g = self.residual_with(&x, &u_prev, &load, &nl, dt);
            residual = inf_norm(&g);
            if residual <= self.newton.abs_tol {
                break;
            }
            if records.len() == self.newton.max_iter {
                return Err(HdgError::NonConvergence {
                    iterations: records.len(),
                    residual,
                });
            }
            let t_jac = Instant::now();
            let jac = self.nonlinear_jacobian(&x)?;
            let jacobian_time = t_jac.elapsed();
            let t_solve = Instant::now();
            let neg: Vec<f64> = g.iter().map(|v| -v).collect();
            let delta = self.condenser.condense_and_solve(self.sys, dt, &jac, &neg)?;
            let solve_time = t_solve.elapsed();
            for (xi, di) in x.iter_mut().zip(&delta) {
                *xi += di;
            }
            records.push(IterationRecord {
                residual,
                nonlinear_time,
                jacobian_time,
                solve_time,
            });
            if inf_norm(&delta) <= self.newton.step_tol {
                residual = inf_norm(&self.residual(&x, &u_prev, &load, dt)?);
                break;
            }
        }
        let iterations = records.len();
        let step = prev.step + 1;
        Ok((
            StepState {
                step,
                time,
                x,
                iterations,
                residual,
            },
            StepDiagnostics {
                step,
                time,
                iterations,
                residual,
                records,
                load_time,
            },
        ))
    }

    /// Initial state: L2 projection of `u0`, zero flux and trace.
    pub fn initial_state(&self, u0: &dyn Fn(&Point) -> f64) -> Result<StepState> {
        let layout = &self.sys.disc.layout;
        let n1 = layout.n1();
        let dim = self.sys.dim();
        let mut x = vec![0.0; layout.full_len()];
        let p = l2_project_w(&self.sys.disc, u0)?;
        x[dim * n1..(dim + 1) * n1].copy_from_slice(&p.coeffs);
        Ok(StepState {
            step: 0,
            time: 0.0,
            x,
            iterations: 0,
            residual: 0.0,
        })
    }
}

/// Uniform time grid on `[0, final_time]`; the last step is shortened to land
/// exactly on `final_time`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub dt: f64,
    pub final_time: f64,
}

impl TimeGrid {
    pub fn new(dt: f64, final_time: f64) -> Result<Self> {
        if !(dt > 0.0) || !(final_time > 0.0) || !dt.is_finite() || !final_time.is_finite() {
            return Err(HdgError::InvalidArgument(format!(
                "time step {dt} and final time {final_time} must be positive"
            )));
        }
        Ok(TimeGrid { dt, final_time })
    }

    /// `dt = h^(k+1)`.
    pub fn from_mesh(h: f64, k: usize, final_time: f64) -> Result<Self> {
        Self::new(h.powi(k as i32 + 1), final_time)
    }

    pub fn steps(&self) -> usize {
        let n = self.final_time / self.dt;
        // a ratio within rounding of an integer is that integer
        if (n - n.round()).abs() <= 1e-9 * n.max(1.0) {
            n.round() as usize
        } else {
            n.ceil() as usize
        }
    }

    pub fn time(&self, step: usize) -> f64 {
        if step >= self.steps() {
            self.final_time
        } else {
            step as f64 * self.dt
        }
    }
}

/// Final state and per-step diagnostics of a run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub final_state: StepState,
    pub diagnostics: Vec<StepDiagnostics>,
}

/// Linear extrapolation of the last two states to `dt` past `current`.
pub fn extrapolate(older: &StepState, current: &StepState, dt: f64) -> Vec<f64> {
    let span = current.time - older.time;
    if !(span > 0.0) {
        return current.x.clone();
    }
    let r = dt / span;
    current.x.iter().zip(&older.x).map(|(c, o)| c + r * (c - o)).collect()
}

/// Integrates from the L2 projection of `u0` to the end of `grid`, calling
/// `observe` after every step. From the second step on, Newton starts at the
/// linear extrapolation of the two previous states.
pub fn time_integrate(
    solver: &Solver,
    u0: &dyn Fn(&Point) -> f64,
    source: &dyn Fn(&Point, f64) -> f64,
    grid: TimeGrid,
    observe: &mut dyn FnMut(&StepState, &StepDiagnostics),
) -> Result<Trajectory> {
    let mut state = solver.initial_state(u0)?;
    let mut older: Option<StepState> = None;
    let mut diagnostics = Vec::with_capacity(grid.steps());
    for step in 1..=grid.steps() {
        let t_prev = grid.time(step - 1);
        let t = grid.time(step);
        let guess = match &older {
            Some(o) => extrapolate(o, &state, t - t_prev),
            None => state.x.clone(),
        };
        let (next, diag) = solver
            .newton_solve_step_from(&state, &guess, t, t - t_prev, source)
            .map_err(|e| HdgError::AtStep {
                step,
                time: t,
                source: Box::new(e),
            })?;
        observe(&next, &diag);
        diagnostics.push(diag);
        older = Some(std::mem::replace(&mut state, next));
    }
    Ok(Trajectory {
        final_state: state,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_static;
    use crate::mesh::build_structured_mesh;
    use crate::nonlinear::{AllenCahn, Burgers, GradSquared, Zero};
    use crate::spaces::Discretization;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn system(dim: usize, n: usize, k: usize) -> HdgSystem {
        let d = Discretization::new(build_structured_mesh(dim, n).unwrap(), k).unwrap();
        assemble_static(d, 1.0).unwrap()
    }

    fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn condensed_matches_full_for_random_iterates() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let terms: [&dyn NonlinearTerm; 4] = [&Zero, &AllenCahn, &GradSquared, &Burgers];
        for (dim, n, k) in [(2, 1, 1), (2, 2, 2), (2, 3, 0), (3, 1, 1)] {
            let sys = system(dim, n, k);
            for f in terms {
                let solver = Solver::new(&sys, Method::Interpolatory, f, NewtonConfig::default()).unwrap();
                let len = sys.disc.layout.full_len();
                let x = random(&mut rng, len);
                let rhs = random(&mut rng, len);
                let dt = 0.05;
                let full = full_solve(&solver.jacobian_matrix(&x, dt).unwrap(), &rhs).unwrap();
                let cond = solver.solve_linearized(&x, dt, &rhs).unwrap();
                let diff = full.iter().zip(&cond).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(diff < 1e-9, "{dim}D n={n} k={k} {}: {diff}", f.name());
            }
        }
    }

    #[test]
    fn flipped_gradient_breaks_agreement() {
        let sys = system(2, 2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let len = sys.disc.layout.full_len();
        let x = random(&mut rng, len);
        let rhs = random(&mut rng, len);
        let solver = Solver::new(&sys, Method::Interpolatory, &AllenCahn, NewtonConfig::default()).unwrap();
        let jac = solver.nonlinear_jacobian(&x).unwrap();
        let bad = Condenser::with_flipped_gradient(&sys).unwrap();
        let wrong = bad.condense_and_solve(&sys, 0.1, &jac, &rhs).unwrap();
        let full = full_solve(&newton_matrix(&sys, 0.1, &jac), &rhs).unwrap();
        let diff = full.iter().zip(&wrong).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff > 1e-6);
    }

    #[test]
    fn zero_coupling_decouples_trace() {
        // with zero right-hand side in every row but the trace rows, the
        // flux and scalar follow from the trace alone
        let sys = system(2, 1, 0);
        let solver = Solver::new(&sys, Method::Interpolatory, &Zero, NewtonConfig::default()).unwrap();
        let len = sys.disc.layout.full_len();
        let rhs = vec![0.0; len];
        let x = solver.solve_linearized(&vec![0.0; len], 1.0, &rhs).unwrap();
        assert!(x.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn trace_system_size_counts_interior_faces() {
        let sys = system(2, 4, 1);
        let interior = sys.disc.mesh.boundary_mask.iter().filter(|b| !**b).count();
        assert_eq!(sys.disc.layout.n2(), interior * 2);
    }

    #[test]
    fn one_by_one_full_solve() {
        let m = SparseMatrix::from_triplets(1, 1, &[(0, 0, 4.0)]).unwrap();
        assert_eq!(full_solve(&m, &[2.0]).unwrap(), vec![0.5]);
        assert!(full_solve(&m, &[2.0, 1.0]).is_err());
    }

    #[test]
    fn heat_step_on_single_cell_by_hand() {
        // k = 0, four triangles, constant data: by symmetry u and the trace
        // are uniform; the face balance gives u = (1 + 2 sqrt 2) trace and
        // u (1 + sqrt2 - sqrt2 / (1 + 2 sqrt2) + 1/(4 dt)) = c / (4 dt).
        let sys = system(2, 1, 0);
        let solver = Solver::new(&sys, Method::Interpolatory, &Zero, NewtonConfig::default()).unwrap();
        let c = 2.0;
        let dt = 0.1;
        let prev = solver.initial_state(&|_| c).unwrap();
        let (next, _) = solver.newton_solve_step(&prev, dt, dt, &|_, _| 0.0).unwrap();
        let r2 = 2f64.sqrt();
        let u = c / (4.0 * dt) / (1.0 + r2 - r2 / (1.0 + 2.0 * r2) + 1.0 / (4.0 * dt));
        for v in next.scalar(4, 2) {
            assert_abs_diff_eq!(*v, u, epsilon = 1e-13);
        }
        for v in next.trace(4, 2) {
            assert_abs_diff_eq!(*v, u / (1.0 + 2.0 * r2), epsilon = 1e-13);
        }
    }

    #[test]
    fn heat_equation_needs_one_iteration() {
        let sys = system(2, 4, 1);
        let solver = Solver::new(&sys, Method::Interpolatory, &Zero, NewtonConfig::default()).unwrap();
        let prev = solver.initial_state(&|x| x[0] * (1.0 - x[0]) * x[1]).unwrap();
        let (next, diag) = solver.newton_solve_step(&prev, 0.01, 0.01, &|x, _| x[1]).unwrap();
        assert_eq!(next.iterations, 1);
        assert!(diag.residual < 1e-12);
    }

    #[test]
    fn newton_converges_quadratically() {
        let sys = system(2, 4, 1);
        let solver = Solver::new(&sys, Method::Interpolatory, &AllenCahn, NewtonConfig::default()).unwrap();
        let prev = solver.initial_state(&|x| 3.0 * (x[0] * x[1]).sin()).unwrap();
        // a large step forces several iterations
        let (_, diag) = solver.newton_solve_step(&prev, 1.0, 1.0, &|_, _| 1.0).unwrap();
        let r: Vec<f64> = diag.records.iter().map(|r| r.residual).chain([diag.residual]).collect();
        assert!(r.len() >= 3);
        for w in r.windows(2) {
            if w[0] < 1e-2 && w[1] > 1e-13 {
                assert!(w[1] / (w[0] * w[0]) < 1e3, "{r:?}");
            }
        }
    }

    #[test]
    fn standard_rejects_gradient_terms() {
        let sys = system(2, 1, 1);
        assert!(matches!(
            Solver::new(&sys, Method::Standard, &Burgers, NewtonConfig::default()),
            Err(HdgError::GradientDependent(_))
        ));
    }

    #[test]
    fn invalid_newton_config() {
        let sys = system(2, 1, 1);
        let cfg = NewtonConfig { max_iter: 0, ..Default::default() };
        assert!(Solver::new(&sys, Method::Interpolatory, &Zero, cfg).is_err());
    }

    #[test]
    fn time_grid_truncates_last_step() {
        let g = TimeGrid::new(0.3, 1.0).unwrap();
        assert_eq!(g.steps(), 4);
        assert_abs_diff_eq!(g.time(3), 0.9, epsilon = 1e-15);
        assert_eq!(g.time(4), 1.0);
        let h = TimeGrid::from_mesh(1.0 / 8.0, 1, 1.0).unwrap();
        assert_eq!(h.steps(), 64);
        assert!(TimeGrid::new(0.0, 1.0).is_err());
    }

    #[test]
    fn zero_data_stays_zero() {
        let sys = system(2, 2, 1);
        let terms: [&dyn NonlinearTerm; 4] = [&Zero, &AllenCahn, &GradSquared, &Burgers];
        for f in terms {
            let solver = Solver::new(&sys, Method::Interpolatory, f, NewtonConfig::default()).unwrap();
            let grid = TimeGrid::new(0.25, 1.0).unwrap();
            let traj = time_integrate(&solver, &|_| 0.0, &|_, _| 0.0, grid, &mut |_, _| {}).unwrap();
            assert!(traj.final_state.x.iter().all(|v| *v == 0.0));
            assert_eq!(traj.diagnostics.len(), 4);
        }
    }
}
