//! Property checks on small meshes, collected into a pass/fail report.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{discrete_h_norm, l2_error_scalar, norm_equivalence_bracket, pairwise_order};
use crate::assembly::{
    assemble_static, interpolatory_nonlinear_jacobian, interpolatory_nonlinear_vector,
    standard_nonlinear_jacobian, standard_nonlinear_vector, HdgSystem,
};
use crate::error::Result;
use crate::mesh::build_structured_mesh;
use crate::nonlinear::{builtin, eval_nodal, AllenCahn, Burgers, GradSquared, NonlinearTerm, Zero};
use crate::polybasis::{monomial_exponents, nodal_basis, simplex_quadrature, Point};
use crate::problems::manufactured;
use crate::solver::{full_solve, newton_matrix, Condenser, Method, NewtonConfig, Solver, StepState};
use crate::spaces::{
    eval_gridfunction, hdg_project, interpolate_elementwise, l2_project_w, pm_project,
    Discretization,
};
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct CheckReport {
    pub outcomes: Vec<CheckOutcome>,
}

impl CheckReport {
    pub fn all_passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.outcomes.iter().filter(|o| !o.passed)
    }

    pub fn get(&self, name: &str) -> Option<&CheckOutcome> {
        self.outcomes.iter().find(|o| o.name == name)
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for o in &self.outcomes {
            let tag = if o.passed { "PASS" } else { "FAIL" };
            writeln!(f, "{tag} {}: {}", o.name, o.detail)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckConfig {
    pub seed: u64,
    /// Runs the condensation check with a sign-flipped gradient block, which
    /// must make it fail.
    pub flip_gradient: bool,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            seed: 2024,
            flip_gradient: false,
        }
    }
}

type Verdict = Result<(bool, String)>;

fn run(name: &'static str, f: impl FnOnce() -> Verdict) -> CheckOutcome {
    match f() {
        Ok((passed, detail)) => CheckOutcome { name, passed, detail },
        Err(e) => CheckOutcome {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn system(dim: usize, n: usize, k: usize) -> Result<HdgSystem> {
    assemble_static(Discretization::new(build_structured_mesh(dim, n)?, k)?, 1.0)
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn random_reference_point(rng: &mut ChaCha8Rng, dim: usize) -> Point {
    loop {
        let mut p = [0.0; 3];
        for c in p.iter_mut().take(dim) {
            *c = rng.random::<f64>();
        }
        if p.iter().sum::<f64>() <= 1.0 {
            return p;
        }
    }
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Runs every check.
pub fn run_checks(cfg: &CheckConfig) -> CheckReport {
    let seed = cfg.seed;
    let outcomes = vec![
        run("mesh volume partition", check_mesh_volume),
        run("mesh face counts", check_mesh_faces),
        run("mesh refinement counts", check_mesh_refinement),
        run("basis nodal property", || check_basis(seed)),
        run("quadrature exactness", check_quadrature),
        run("interpolation idempotence", check_interpolation_idempotent),
        run("projection orthogonality", check_projection_orthogonality),
        run("hdg projection residual", check_hdg_projection),
        run("nonlinear derivatives", || check_nonlinear_derivatives(seed)),
        run("nodal evaluation permutes", || check_nodal_permutation(seed)),
        run("newton matrix transpose pairs", || check_transpose_pairs(seed)),
        run("degree zero method equivalence", || check_k0_equivalence(seed)),
        run("condensed matches full", || check_condensation(seed, cfg.flip_gradient)),
        run("jacobian finite differences", || check_jacobian_fd(seed)),
        run("steady state consistency", check_steady_state),
        run("newton iteration count", check_newton_count),
        run("norm equivalence", || check_norm_equivalence(seed)),
        run("interpolation rate", check_interpolation_rate),
    ];
    CheckReport { outcomes }
}

fn check_mesh_volume() -> Verdict {
    let mut worst: f64 = 0.0;
    for (dim, ns) in [(2, [1, 2, 5]), (3, [1, 2, 3])] {
        for n in ns {
            let m = build_structured_mesh(dim, n)?;
            let v: f64 = (0..m.num_elements()).map(|e| m.element_volume(e)).sum();
            worst = worst.max((v - 1.0).abs());
        }
    }
    Ok((worst <= 1e-12, format!("max |sum vol - 1| = {worst:.1e}")))
}

fn check_mesh_faces() -> Verdict {
    for (dim, n) in [(2, 1), (2, 3), (3, 1), (3, 2)] {
        let m = build_structured_mesh(dim, n)?;
        let local = m.num_elements() * (dim + 1);
        let boundary = m.num_boundary_faces();
        let interior = m.num_faces() - boundary;
        if local != 2 * interior + boundary {
            return Ok((false, format!("dim {dim} n {n}: {local} != 2*{interior} + {boundary}")));
        }
    }
    Ok((true, "local faces = 2 interior + boundary".into()))
}

fn check_mesh_refinement() -> Verdict {
    for (dim, factor) in [(2, 4), (3, 8)] {
        for n in [2, 4] {
            let fine = build_structured_mesh(dim, n)?.num_elements();
            let coarse = build_structured_mesh(dim, n / 2)?.num_elements();
            if fine != factor * coarse {
                return Ok((false, format!("dim {dim}: {fine} vs {factor} x {coarse}")));
            }
        }
    }
    Ok((true, "4x in 2D, 8x in 3D".into()))
}

fn check_basis(seed: u64) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for dim in 1..=3 {
        for k in 0..=3 {
            let b = nodal_basis(k, dim)?;
            let n = b.len();
            let mut v = vec![0.0; n];
            let mut g = vec![[0.0; 3]; n];
            for (i, node) in b.nodes().iter().enumerate() {
                b.values_at(node, &mut v);
                for (j, vj) in v.iter().enumerate() {
                    let target = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((vj - target).abs());
                }
            }
            for _ in 0..100 {
                let x = random_reference_point(&mut rng, dim);
                b.values_at(&x, &mut v);
                worst = worst.max((v.iter().sum::<f64>() - 1.0).abs());
                b.gradients_at(&x, &mut g);
                for s in 0..dim {
                    worst = worst.max(g.iter().map(|gj| gj[s]).sum::<f64>().abs());
                }
            }
        }
    }
    Ok((worst <= 1e-10, format!("max defect {worst:.1e}")))
}

fn check_quadrature() -> Verdict {
    let mut worst: f64 = 0.0;
    for dim in 1..=3 {
        for degree in 0..=12 {
            let rule = simplex_quadrature(degree, dim)?;
            if rule.exactness_degree < degree || rule.weights.iter().any(|w| *w <= 0.0) {
                return Ok((false, format!("dim {dim} degree {degree}: bad rule")));
            }
            for e in monomial_exponents(rule.exactness_degree, dim) {
                let q = rule.integrate(|x| {
                    x[0].powi(e[0] as i32) * x[1].powi(e[1] as i32) * x[2].powi(e[2] as i32)
                });
                let exact = factorial(e[0]) * factorial(e[1]) * factorial(e[2])
                    / factorial(e[0] + e[1] + e[2] + dim);
                worst = worst.max((q - exact).abs() / exact);
            }
        }
    }
    Ok((worst <= 1e-12, format!("max relative error {worst:.1e}")))
}

fn check_interpolation_idempotent() -> Verdict {
    let mut worst: f64 = 0.0;
    for (dim, k) in [(2, 0), (2, 2), (3, 1), (3, 3)] {
        let d = Discretization::new(build_structured_mesh(dim, 2)?, k)?;
        let g = interpolate_elementwise(&d, |x| (3.0 * x[0]).sin() + x[1] * x[2] - x[1]);
        let l = d.layout.local_len();
        let nodes = d.basis.nodes().to_vec();
        for e in 0..d.mesh.num_elements() {
            let again = eval_gridfunction(&d, &g, e, &nodes)?;
            worst = worst.max(max_gap(&again, &g.coeffs[e * l..(e + 1) * l]));
        }
    }
    Ok((worst <= 1e-12, format!("max coefficient change {worst:.1e}")))
}

fn check_projection_orthogonality() -> Verdict {
    let g = |x: &Point| (2.0 * x[0] + 1.0).exp() * (x[1] - 0.3).cos() + x[2];
    let mut worst: f64 = 0.0;
    for (dim, k) in [(2, 1), (2, 2), (3, 1)] {
        let d = Discretization::new(build_structured_mesh(dim, 2)?, k)?;
        let rule = d.element_rule(2 * k + 14)?;
        let p = l2_project_w(&d, g)?;
        let l = d.layout.local_len();
        for e in 0..d.mesh.num_elements() {
            let eq = d.element_quadrature(e, &rule);
            for i in 0..l {
                let mut r = 0.0;
                let mut scale = 0.0;
                for q in 0..rule.len() {
                    let ph: f64 = (0..l).map(|j| eq.values[(q, j)] * p.coeffs[e * l + j]).sum();
                    let gv = g(&eq.points[q]);
                    r += eq.weights[q] * (gv - ph) * eq.values[(q, i)];
                    scale += eq.weights[q] * (gv * eq.values[(q, i)]).abs();
                }
                worst = worst.max(r.abs() / scale);
            }
        }
        let frule = d.face_rule(2 * k + 14)?;
        let t = pm_project(&d, g)?;
        let lf = d.layout.face_local_len();
        for f in 0..d.mesh.num_faces() {
            let Some(off) = d.layout.trace_offset(f) else {
                continue;
            };
            let inc = d.mesh.face_adjacency[f][0];
            let fq = d.face_quadrature(inc.element, inc.local_face, &frule);
            for a in 0..lf {
                let mut r = 0.0;
                let mut scale = 0.0;
                for q in 0..frule.len() {
                    let ph: f64 = (0..lf).map(|b| fq.face_values[(q, b)] * t.coeffs[off + b]).sum();
                    let gv = g(&fq.points[q]);
                    r += fq.weights[q] * (gv - ph) * fq.face_values[(q, a)];
                    scale += fq.weights[q] * (gv * fq.face_values[(q, a)]).abs();
                }
                worst = worst.max(r.abs() / scale);
            }
        }
    }
    Ok((worst <= 1e-10, format!("max relative residual {worst:.1e}")))
}

fn check_hdg_projection() -> Verdict {
    let mut worst: f64 = 0.0;
    for (dim, k) in [(2, 0), (2, 1), (2, 2), (3, 1)] {
        let d = Discretization::new(build_structured_mesh(dim, 2)?, k)?;
        let p = hdg_project(
            &d,
            |x| [x[0].sin(), x[1] * x[0], (x[2] + 1.0).ln()],
            |x| (x[0] - x[1]).exp(),
            1.0,
        )?;
        worst = worst.max(p.max_residual);
    }
    Ok((worst <= 1e-10, format!("max local residual {worst:.1e}")))
}

fn check_nonlinear_derivatives(seed: u64) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let h = 1e-6;
    for name in ["allen_cahn", "grad_squared", "burgers", "zero"] {
        let f = builtin(name)?;
        for _ in 0..50 {
            let p = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let u = rng.random_range(-2.0..2.0);
            let fd = (f.value(&p, u + h) - f.value(&p, u - h)) / (2.0 * h);
            worst = worst.max((fd - f.d_du(&p, u)).abs());
            for s in 0..3 {
                let mut a = p;
                let mut b = p;
                a[s] += h;
                b[s] -= h;
                let fd = (f.value(&a, u) - f.value(&b, u)) / (2.0 * h);
                worst = worst.max((fd - f.d_dp(&p, u, s)).abs());
            }
        }
    }
    Ok((worst <= 1e-6, format!("max derivative mismatch {worst:.1e}")))
}

fn check_nodal_permutation(seed: u64) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
    let n = 40;
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let terms: [&dyn NonlinearTerm; 3] = [&AllenCahn, &GradSquared, &Burgers];
    for f in terms {
        let q0 = random_vec(&mut rng, n);
        let q1 = random_vec(&mut rng, n);
        let u = random_vec(&mut rng, n);
        let out = eval_nodal(f, &[&q0, &q1], &u)?;
        let pq0: Vec<f64> = perm.iter().map(|&i| q0[i]).collect();
        let pq1: Vec<f64> = perm.iter().map(|&i| q1[i]).collect();
        let pu: Vec<f64> = perm.iter().map(|&i| u[i]).collect();
        let pout = eval_nodal(f, &[&pq0, &pq1], &pu)?;
        if perm.iter().enumerate().any(|(j, &i)| pout[j] != out[i]) {
            return Ok((false, format!("{} is not pointwise", f.name())));
        }
    }
    Ok((true, "outputs follow the permutation exactly".into()))
}

fn block(m: &SparseMatrix, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> nalgebra::DMatrix<f64> {
    let d = m.to_dense();
    d.view((rows.start, cols.start), (rows.len(), cols.len())).into_owned()
}

fn check_transpose_pairs(seed: u64) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
    let sys = system(2, 2, 1)?;
    let solver = Solver::new(&sys, Method::Interpolatory, &Zero, NewtonConfig::default())?;
    let x = random_vec(&mut rng, sys.disc.layout.full_len());
    let m = solver.jacobian_matrix(&x, 0.1)?;
    let n1 = sys.disc.layout.n1();
    let dim = sys.dim();
    let full = sys.disc.layout.full_len();
    let u = dim * n1..(dim + 1) * n1;
    let t = (dim + 1) * n1..full;
    let mut worst: f64 = 0.0;
    for s in 0..dim {
        let q = s * n1..(s + 1) * n1;
        // gradient pair is antisymmetric, trace-normal pair symmetric
        worst = worst.max((block(&m, q.clone(), u.clone()) + block(&m, u.clone(), q.clone()).transpose()).amax());
        worst = worst.max((block(&m, q.clone(), t.clone()) - block(&m, t.clone(), q.clone()).transpose()).amax());
    }
    worst = worst.max((block(&m, u.clone(), t.clone()) + block(&m, t.clone(), u.clone()).transpose()).amax());
    Ok((worst <= 1e-12, format!("max pair mismatch {worst:.1e}")))
}

fn check_k0_equivalence(seed: u64) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
    let mut worst: f64 = 0.0;
    for dim in [2, 3] {
        let sys = system(dim, 2, 0)?;
        let n1 = sys.disc.layout.n1();
        let terms: [&dyn NonlinearTerm; 2] = [&AllenCahn, &Zero];
        for f in terms {
            for _ in 0..5 {
                let u: Vec<f64> = random_vec(&mut rng, n1).iter().map(|v| 2.0 * v).collect();
                let zeros = vec![0.0; n1];
                let flux: Vec<&[f64]> = (0..dim).map(|_| zeros.as_slice()).collect();
                let a = standard_nonlinear_vector(&sys, f, &u)?;
                let b = interpolatory_nonlinear_vector(&sys, f, &flux, &u)?;
                let scale = inf_norm(&a).max(1e-300);
                worst = worst.max(max_gap(&a, &b) / scale);
                let ja = standard_nonlinear_jacobian(&sys, f, &u)?;
                let jb = interpolatory_nonlinear_jacobian(&sys, f, &flux, &u)?;
                for (x, y) in ja.d_scalar.blocks.iter().zip(&jb.d_scalar.blocks) {
                    worst = worst.max((x - y).amax() / x.amax().max(1e-300));
                }
            }
        }
    }
    Ok((worst <= 1e-12, format!("max relative gap {worst:.1e}")))
}

/// Largest gap between the condensed and the unreduced solve over a batch of
/// random Newton systems.
pub fn condensation_gap(seed: u64, flip_gradient: bool) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 4);
    let mut worst: f64 = 0.0;
    let terms: [&dyn NonlinearTerm; 4] = [&Zero, &AllenCahn, &GradSquared, &Burgers];
    for (dim, n, k) in [(2, 2, 1), (2, 1, 2), (2, 3, 0), (3, 1, 1)] {
        let sys = system(dim, n, k)?;
        let cond = if flip_gradient {
            Condenser::with_flipped_gradient(&sys)?
        } else {
            Condenser::new(&sys)?
        };
        for f in terms {
            let solver = Solver::new(&sys, Method::Interpolatory, f, NewtonConfig::default())?;
            let len = sys.disc.layout.full_len();
            let x = random_vec(&mut rng, len);
            let rhs = random_vec(&mut rng, len);
            let dt = rng.random_range(0.01..0.5);
            let jac = solver.nonlinear_jacobian(&x)?;
            let full = full_solve(&newton_matrix(&sys, dt, &jac), &rhs)?;
            let reduced = cond.condense_and_solve(&sys, dt, &jac, &rhs)?;
            worst = worst.max(max_gap(&full, &reduced));
        }
    }
    Ok(worst)
}

fn check_condensation(seed: u64, flip: bool) -> Verdict {
    let gap = condensation_gap(seed, flip)?;
    Ok((gap <= 1e-9, format!("max gap {gap:.1e}")))
}

/// `|G(x + eps v) - G(x) - eps G'(x) v|` at `eps` and `eps / 2`, over the
/// ratio of the two.
pub fn jacobian_fd_ratio(solver: &Solver, seed: u64, eps: f64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = &solver.system().disc.layout;
    let len = layout.full_len();
    let x = random_vec(&mut rng, len);
    let v = random_vec(&mut rng, len);
    let u_prev = random_vec(&mut rng, layout.n1());
    let load = random_vec(&mut rng, layout.n1());
    let dt = 0.1;
    let g0 = solver.residual(&x, &u_prev, &load, dt)?;
    let jv = solver.jacobian_matrix(&x, dt)?.matvec(&v)?;
    let defect = |e: f64| -> Result<f64> {
        let xe: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + e * b).collect();
        let ge = solver.residual(&xe, &u_prev, &load, dt)?;
        Ok(ge
            .iter()
            .zip(&g0)
            .zip(&jv)
            .map(|((a, b), c)| (a - b - e * c).abs())
            .fold(0.0, f64::max))
    };
    Ok(defect(eps)? / defect(eps / 2.0)?)
}

fn check_jacobian_fd(seed: u64) -> Verdict {
    let sys = system(2, 2, 1)?;
    let mut detail = Vec::new();
    let mut ok = true;
    let terms: [&dyn NonlinearTerm; 3] = [&AllenCahn, &GradSquared, &Burgers];
    for f in terms {
        let solver = Solver::new(&sys, Method::Interpolatory, f, NewtonConfig::default())?;
        let r = jacobian_fd_ratio(&solver, seed, 1e-4)?;
        ok &= (3.5..=4.5).contains(&r);
        detail.push(format!("{} {r:.3}", f.name()));
    }
    let standard = Solver::new(&sys, Method::Standard, &AllenCahn, NewtonConfig::default())?;
    let r = jacobian_fd_ratio(&standard, seed, 1e-4)?;
    ok &= (3.5..=4.5).contains(&r);
    detail.push(format!("allen_cahn/standard {r:.3}"));
    Ok((ok, format!("ratios {}", detail.join(", "))))
}

fn check_steady_state() -> Verdict {
    let sys = system(2, 2, 1)?;
    let solver = Solver::new(&sys, Method::Interpolatory, &Zero, NewtonConfig::default())?;
    let source = |x: &Point, _t: f64| x[0] * (1.0 - x[0]) + 2.0 * x[1];
    let mut state: StepState = solver.initial_state(&|_| 0.0)?;
    let dt = 1.0;
    for step in 1..=40 {
        state = solver.newton_solve_step(&state, step as f64 * dt, dt, &source)?.0;
    }
    let n1 = sys.disc.layout.n1();
    let u = state.scalar(n1, sys.dim()).to_vec();
    let load = sys.assemble_load(|x| source(x, 0.0));
    // with u_prev = u the time-derivative term drops out
    let r = inf_norm(&solver.residual(&state.x, &u, &load, dt)?);
    Ok((r <= 1e-8, format!("stationary residual {r:.1e}")))
}

fn check_newton_count() -> Verdict {
    let mut worst = 0;
    for (name, dim, k) in [("allen_cahn", 2, 1), ("grad_squared", 2, 1), ("burgers", 2, 0), ("allen_cahn", 3, 1)] {
        let problem = manufactured(name, dim)?;
        let sys = system(dim, 2, k)?;
        let solver = Solver::new(&sys, Method::Interpolatory, problem.nonlinear.as_ref(), NewtonConfig::default())?;
        let dt = sys.disc.mesh.h().powi(k as i32 + 1);
        let mut state = solver.initial_state(&|x| problem.initial(x))?;
        for step in 1..=8 {
            let (next, diag) =
                solver.newton_solve_step(&state, step as f64 * dt, dt, &|x, t| problem.source(x, t))?;
            worst = worst.max(diag.iterations);
            state = next;
        }
    }
    Ok((worst <= 5, format!("max iterations per step {worst}")))
}

fn check_norm_equivalence(seed: u64) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 5);
    let mut detail = Vec::new();
    let mut ok = true;
    for k in [0, 1, 2] {
        let mut brackets = Vec::new();
        for n in [4, 8, 16] {
            let d = Discretization::new(build_structured_mesh(2, n)?, k)?;
            let (lo, hi) = norm_equivalence_bracket(&d);
            for _ in 0..10 {
                let w = random_vec(&mut rng, d.layout.n1());
                let r = l2_error_scalar(&d, &w, |_| 0.0)? / discrete_h_norm(&d, &[&w]);
                ok &= r >= lo * (1.0 - 1e-10) && r <= hi * (1.0 + 1e-10);
            }
            brackets.push((lo, hi));
        }
        let drift = |f: fn(&(f64, f64)) -> f64| {
            let v: Vec<f64> = brackets.iter().map(f).collect();
            let max = v.iter().cloned().fold(f64::MIN, f64::max);
            let min = v.iter().cloned().fold(f64::MAX, f64::min);
            max / min - 1.0
        };
        let d = drift(|b| b.0).max(drift(|b| b.1));
        ok &= d < 0.05;
        detail.push(format!("k={k} drift {d:.1e}"));
    }
    Ok((ok, detail.join(", ")))
}

fn check_interpolation_rate() -> Verdict {
    let g = |x: &Point| (std::f64::consts::PI * x[0]).sin() * (std::f64::consts::PI * x[1]).sin();
    let mut ok = true;
    let mut detail = Vec::new();
    for k in [0, 1, 2] {
        let mut errs = Vec::new();
        for n in [4, 8] {
            let d = Discretization::new(build_structured_mesh(2, n)?, k)?;
            let c = interpolate_elementwise(&d, g);
            errs.push(l2_error_scalar(&d, &c.coeffs, g)?);
        }
        let order = pairwise_order(errs[0], errs[1], 0.25, 0.125).unwrap_or(0.0);
        ok &= (order - (k as f64 + 1.0)).abs() <= 0.2;
        detail.push(format!("k={k} order {order:.2}"));
    }
    Ok((ok, detail.join(", ")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_pass() {
        let r = run_checks(&CheckConfig::default());
        assert!(r.all_passed(), "{r}");
    }

    #[test]
    fn flipped_gradient_is_caught() {
        let r = run_checks(&CheckConfig {
            flip_gradient: true,
            ..CheckConfig::default()
        });
        assert!(!r.get("condensed matches full").unwrap().passed);
        assert_eq!(r.failures().count(), 1);
    }

    #[test]
    fn deterministic_checks_ignore_the_seed() {
        let a = run_checks(&CheckConfig { seed: 1, ..CheckConfig::default() });
        let b = run_checks(&CheckConfig { seed: 99, ..CheckConfig::default() });
        assert!(a.all_passed() && b.all_passed());
        for name in ["mesh volume partition", "quadrature exactness", "hdg projection residual", "steady state consistency"] {
            assert_eq!(a.get(name), b.get(name));
        }
    }
}
