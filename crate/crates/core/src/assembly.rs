//! Element matrices of the HDG discretization and the nonlinear terms.
//!
//! Blocks are stored per element and unsigned; the saddle-point signs are
//! applied by the solver. For element `K` with local basis `phi` and the
//! trace basis `psi` on its interior faces:
//!
//! | block          | entry `(i, j)`                         |
//! |----------------|----------------------------------------|
//! | `mass`         | `(phi_j, phi_i)_K`                     |
//! | `grad[s]`      | `(phi_j, d_s phi_i)_K`                 |
//! | `stab`         | `<tau phi_j, phi_i>` over all of `dK`  |
//! | `trace_normal[s]` | `<psi_j, phi_i n_s>`                |
//! | `trace_stab`   | `<tau psi_j, phi_i>`                   |
//! | `trace_mass`   | `<tau psi_j, psi_i>`                   |

use nalgebra::{DMatrix, DVector};

use crate::error::{HdgError, Result};
use crate::nonlinear::{eval_nodal, eval_nodal_jacobian, NonlinearTerm};
use crate::polybasis::Point;
use crate::sparse::{BlockDiag, SparseMatrix};
use crate::spaces::Discretization;

#[derive(Debug, Clone)]
pub struct ElementBlocks {
    pub mass: DMatrix<f64>,
    pub grad: Vec<DMatrix<f64>>,
    pub stab: DMatrix<f64>,
    pub trace_normal: Vec<DMatrix<f64>>,
    pub trace_stab: DMatrix<f64>,
    pub trace_mass: DMatrix<f64>,
}

/// Tabulated element quadrature shared by every element: reference basis
/// values are the same on all elements, only points and weights move.
#[derive(Debug, Clone)]
pub struct ElementIntegrator {
    degree: usize,
    ref_weights: Vec<f64>,
    values: DMatrix<f64>,
    points: Vec<Point>,
    dets: Vec<f64>,
}

impl ElementIntegrator {
    pub fn new(disc: &Discretization, degree: usize) -> Result<Self> {
        let rule = disc.element_rule(degree)?;
        let values = disc.basis.eval_basis(&rule.points)?;
        let mesh = &disc.mesh;
        let mut points = Vec::with_capacity(mesh.num_elements() * rule.len());
        for map in &mesh.element_maps {
            points.extend(rule.points.iter().map(|xi| map.to_physical(xi)));
        }
        Ok(ElementIntegrator {
            degree,
            ref_weights: rule.weights,
            values,
            points,
            dets: mesh.element_maps.iter().map(|m| m.det).collect(),
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    fn n_points(&self) -> usize {
        self.ref_weights.len()
    }

    /// `[(f, phi_i)]` over all elements.
    pub fn load(&self, f: impl Fn(&Point) -> f64) -> Vec<f64> {
        let l = self.values.ncols();
        let np = self.n_points();
        let mut out = vec![0.0; self.dets.len() * l];
        for (e, det) in self.dets.iter().enumerate() {
            let dst = &mut out[e * l..(e + 1) * l];
            for q in 0..np {
                let fw = f(&self.points[e * np + q]) * self.ref_weights[q] * det;
                for (i, d) in dst.iter_mut().enumerate() {
                    *d += fw * self.values[(q, i)];
                }
            }
        }
        out
    }

    /// Values of a scalar-layout field at the quadrature points of element `e`.
    fn field_at_points(&self, coeffs: &[f64], e: usize, out: &mut [f64]) {
        let l = self.values.ncols();
        let c = &coeffs[e * l..(e + 1) * l];
        for (q, o) in out.iter_mut().enumerate() {
            *o = (0..l).map(|j| self.values[(q, j)] * c[j]).sum();
        }
    }
}

/// Assembled time-independent blocks plus quadrature caches.
#[derive(Debug, Clone)]
pub struct HdgSystem {
    pub disc: Discretization,
    pub tau: f64,
    pub elements: Vec<ElementBlocks>,
    load: ElementIntegrator,
    nonlinear: ElementIntegrator,
}

/// Quadrature degree for bilinear forms.
pub fn static_degree(k: usize) -> usize {
    2 * k + 1
}

/// Quadrature degree for loads and error norms.
pub fn load_degree(k: usize) -> usize {
    2 * k + 4
}

/// Quadrature degree for the standard nonlinear terms.
pub fn nonlinear_degree(k: usize) -> usize {
    3 * k + 2
}

/// Assembles every static element block with stabilization `tau`.
pub fn assemble_static(disc: Discretization, tau: f64) -> Result<HdgSystem> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(HdgError::InvalidStabilization(tau));
    }
    let dim = disc.dim();
    let k = disc.k();
    let l = disc.layout.local_len();
    let lf = disc.layout.face_local_len();
    let rule = disc.element_rule(static_degree(k))?;
    let frule = disc.face_rule(static_degree(k))?;
    let mut elements = Vec::with_capacity(disc.mesh.num_elements());

    for e in 0..disc.mesh.num_elements() {
        let eq = disc.element_quadrature(e, &rule);
        let mut grad = vec![DMatrix::zeros(l, l); dim];
        for (s, g) in grad.iter_mut().enumerate() {
            for q in 0..rule.len() {
                let w = eq.weights[q];
                for i in 0..l {
                    let di = w * eq.grads[s][(q, i)];
                    for j in 0..l {
                        g[(i, j)] += di * eq.values[(q, j)];
                    }
                }
            }
        }
        let trace_faces = disc.layout.element_trace_faces(e);
        let nt = trace_faces.len() * lf;
        let mut stab = DMatrix::zeros(l, l);
        let mut trace_normal = vec![DMatrix::zeros(l, nt); dim];
        let mut trace_stab = DMatrix::zeros(l, nt);
        let mut trace_mass = DMatrix::zeros(nt, nt);
        for local_face in 0..=dim {
            let fq = disc.face_quadrature(e, local_face, &frule);
            for q in 0..frule.len() {
                let w = fq.weights[q];
                for i in 0..l {
                    for j in 0..l {
                        stab[(i, j)] += tau * w * fq.values[(q, i)] * fq.values[(q, j)];
                    }
                }
            }
            let Some(p) = trace_faces.iter().position(|&f| f == local_face) else {
                continue;
            };
            let col = p * lf;
            for q in 0..frule.len() {
                let w = fq.weights[q];
                for a in 0..lf {
                    let psi = w * fq.face_values[(q, a)];
                    for i in 0..l {
                        let phi = fq.values[(q, i)];
                        for (s, m) in trace_normal.iter_mut().enumerate() {
                            m[(i, col + a)] += psi * phi * fq.normal[s];
                        }
                        trace_stab[(i, col + a)] += tau * psi * phi;
                    }
                    for b in 0..lf {
                        trace_mass[(col + b, col + a)] += tau * psi * fq.face_values[(q, b)];
                    }
                }
            }
        }
        elements.push(ElementBlocks {
            mass: disc.mass(e),
            grad,
            stab,
            trace_normal,
            trace_stab,
            trace_mass,
        });
    }
    Ok(HdgSystem {
        load: ElementIntegrator::new(&disc, load_degree(k))?,
        nonlinear: ElementIntegrator::new(&disc, nonlinear_degree(k))?,
        disc,
        tau,
        elements,
    })
}

fn element_sparse(
    sys: &HdgSystem,
    rows_trace: bool,
    cols_trace: bool,
    pick: impl Fn(&ElementBlocks) -> &DMatrix<f64>,
) -> SparseMatrix {
    let layout = &sys.disc.layout;
    let l = layout.local_len();
    let mut t = Vec::new();
    for (e, blk) in sys.elements.iter().enumerate() {
        let m = pick(blk);
        let tr = layout.element_trace(e);
        let row_of = |i: usize| if rows_trace { tr[i] } else { e * l + i };
        let col_of = |j: usize| if cols_trace { tr[j] } else { e * l + j };
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                t.push((row_of(i), col_of(j), m[(i, j)]));
            }
        }
    }
    let nr = if rows_trace { layout.n2() } else { layout.n1() };
    let nc = if cols_trace { layout.n2() } else { layout.n1() };
    SparseMatrix::from_triplets(nr, nc, &t).expect("layout indices are in range")
}

impl HdgSystem {
    pub fn dim(&self) -> usize {
        self.disc.dim()
    }

    pub fn mass_matrix(&self) -> SparseMatrix {
        element_sparse(self, false, false, |b| &b.mass)
    }

    pub fn gradient_matrix(&self, s: usize) -> SparseMatrix {
        element_sparse(self, false, false, |b| &b.grad[s])
    }

    pub fn stabilization_matrix(&self) -> SparseMatrix {
        element_sparse(self, false, false, |b| &b.stab)
    }

    pub fn trace_normal_matrix(&self, s: usize) -> SparseMatrix {
        element_sparse(self, false, true, |b| &b.trace_normal[s])
    }

    pub fn trace_stabilization_matrix(&self) -> SparseMatrix {
        element_sparse(self, false, true, |b| &b.trace_stab)
    }

    pub fn trace_mass_matrix(&self) -> SparseMatrix {
        element_sparse(self, true, true, |b| &b.trace_mass)
    }

    /// `[(f, phi_i)]` with the load quadrature.
    pub fn assemble_load(&self, f: impl Fn(&Point) -> f64) -> Vec<f64> {
        self.load.load(f)
    }

    /// `A1 v` without forming the global matrix.
    pub fn mass_apply(&self, v: &[f64]) -> Vec<f64> {
        let l = self.disc.layout.local_len();
        let mut out = vec![0.0; v.len()];
        for (e, blk) in self.elements.iter().enumerate() {
            let ve = DVector::from_column_slice(&v[e * l..(e + 1) * l]);
            out[e * l..(e + 1) * l].copy_from_slice((&blk.mass * ve).as_slice());
        }
        out
    }
}

/// Derivative blocks of the nonlinear term, per element, with respect to the
/// scalar coefficients and each flux component.
#[derive(Debug, Clone)]
pub struct NonlinearJacobian {
    pub d_scalar: BlockDiag,
    /// Empty when the term ignores the gradient.
    pub d_flux: Vec<BlockDiag>,
}

/// Nonlinear contribution to the scalar equation and its Jacobian blocks.
#[derive(Debug, Clone)]
pub struct NonlinearTerms {
    pub applied: Vec<f64>,
    pub jacobian: NonlinearJacobian,
}

/// Standard HDG: quadrature of `(F(u_h), phi_i)` and `(F'(u_h) phi_j, phi_i)`.
pub fn assemble_standard_nonlinear(
    sys: &HdgSystem,
    f: &dyn NonlinearTerm,
    scalar: &[f64],
) -> Result<NonlinearTerms> {
    Ok(NonlinearTerms {
        applied: standard_nonlinear_vector(sys, f, scalar)?,
        jacobian: standard_nonlinear_jacobian(sys, f, scalar)?,
    })
}

fn reject_gradient(f: &dyn NonlinearTerm) -> Result<()> {
    if f.depends_on_gradient() {
        return Err(HdgError::GradientDependent(f.name().to_string()));
    }
    Ok(())
}

/// `[(F(u_h), phi_i)]` by quadrature.
pub fn standard_nonlinear_vector(
    sys: &HdgSystem,
    f: &dyn NonlinearTerm,
    scalar: &[f64],
) -> Result<Vec<f64>> {
    reject_gradient(f)?;
    let integ = &sys.nonlinear;
    let l = sys.disc.layout.local_len();
    let np = integ.n_points();
    let mut applied = vec![0.0; scalar.len()];
    let mut uq = vec![0.0; np];
    let zero = [0.0; 3];
    for e in 0..sys.elements.len() {
        integ.field_at_points(scalar, e, &mut uq);
        let det = integ.dets[e];
        let dst = &mut applied[e * l..(e + 1) * l];
        for q in 0..np {
            let fv = integ.ref_weights[q] * det * f.value(&zero, uq[q]);
            for (i, d) in dst.iter_mut().enumerate() {
                *d += fv * integ.values[(q, i)];
            }
        }
    }
    Ok(applied)
}

/// `[(F'(u_h) phi_j, phi_i)]` by quadrature, per element.
pub fn standard_nonlinear_jacobian(
    sys: &HdgSystem,
    f: &dyn NonlinearTerm,
    scalar: &[f64],
) -> Result<NonlinearJacobian> {
    reject_gradient(f)?;
    let integ = &sys.nonlinear;
    let l = sys.disc.layout.local_len();
    let np = integ.n_points();
    let mut blocks = Vec::with_capacity(sys.elements.len());
    let mut uq = vec![0.0; np];
    let zero = [0.0; 3];
    for e in 0..sys.elements.len() {
        integ.field_at_points(scalar, e, &mut uq);
        let det = integ.dets[e];
        let mut a9 = DMatrix::zeros(l, l);
        for q in 0..np {
            let dv = integ.ref_weights[q] * det * f.d_du(&zero, uq[q]);
            for i in 0..l {
                let phi_i = dv * integ.values[(q, i)];
                for j in 0..l {
                    a9[(i, j)] += phi_i * integ.values[(q, j)];
                }
            }
        }
        blocks.push(a9);
    }
    Ok(NonlinearJacobian {
        d_scalar: BlockDiag::new(blocks),
        d_flux: Vec::new(),
    })
}

fn scale_columns(m: &DMatrix<f64>, d: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col *= d[j];
    }
    out
}

/// Interpolatory HDG: `A1 F_nodal` and `A1 diag(dF_nodal)` blocks, with no
/// quadrature.
pub fn interpolatory_nonlinear(
    sys: &HdgSystem,
    f: &dyn NonlinearTerm,
    flux: &[&[f64]],
    scalar: &[f64],
) -> Result<NonlinearTerms> {
    Ok(NonlinearTerms {
        applied: interpolatory_nonlinear_vector(sys, f, flux, scalar)?,
        jacobian: interpolatory_nonlinear_jacobian(sys, f, flux, scalar)?,
    })
}

/// `A1 F_nodal`.
pub fn interpolatory_nonlinear_vector(
    sys: &HdgSystem,
    f: &dyn NonlinearTerm,
    flux: &[&[f64]],
    scalar: &[f64],
) -> Result<Vec<f64>> {
    Ok(sys.mass_apply(&eval_nodal(f, flux, scalar)?))
}

/// `A1 diag(dF_nodal)` for the scalar and, if needed, each flux component.
pub fn interpolatory_nonlinear_jacobian(
    sys: &HdgSystem,
    f: &dyn NonlinearTerm,
    flux: &[&[f64]],
    scalar: &[f64],
) -> Result<NonlinearJacobian> {
    let jac = eval_nodal_jacobian(f, flux, scalar)?;
    let l = sys.disc.layout.local_len();
    let scaled = |d: &[f64]| {
        BlockDiag::new(
            sys.elements
                .iter()
                .enumerate()
                .map(|(e, b)| scale_columns(&b.mass, &d[e * l..(e + 1) * l]))
                .collect(),
        )
    };
    Ok(NonlinearJacobian {
        d_scalar: scaled(&jac.d_scalar),
        d_flux: jac.d_flux.iter().map(|d| scaled(d)).collect(),
    })
}
