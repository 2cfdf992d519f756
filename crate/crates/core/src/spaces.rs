//! Discontinuous element spaces, trace spaces and projections onto them.
//!
//! Scalar and flux-component fields share one layout: coefficient `e * l + j`
//! belongs to node `j` of element `e`, so every element owns a contiguous
//! block. Trace unknowns live on interior faces only; face `f` owns a block
//! starting at [`DofLayout::trace_offset`].

use nalgebra::{DMatrix, DVector};

use crate::error::{HdgError, Result};
use crate::mesh::Mesh;
use crate::polybasis::{
    monomial_exponents, nodal_basis, polynomial_count, reference_volume, simplex_quadrature,
    Point, QuadratureRule, ReferenceBasis,
};

// Projections run once per solve, so they get a generous rule.
const PROJECTION_EXTRA: usize = 10;

/// Coefficient indexing for the scalar, flux and trace spaces.
#[derive(Debug, Clone)]
pub struct DofLayout {
    dim: usize,
    n_elements: usize,
    local: usize,
    face_local: usize,
    trace_offsets: Vec<Option<usize>>,
    n_trace: usize,
    /// Per element: global trace indices in local-face order, interior faces only.
    element_trace: Vec<Vec<usize>>,
    /// Per element: which local faces carry trace unknowns, in the same order.
    element_trace_faces: Vec<Vec<usize>>,
}

impl DofLayout {
    pub fn new(mesh: &Mesh, k: usize) -> Self {
        let dim = mesh.dim;
        let local = polynomial_count(k, dim);
        let face_local = polynomial_count(k, dim - 1);
        let mut next = 0;
        let trace_offsets: Vec<Option<usize>> = mesh
            .boundary_mask
            .iter()
            .map(|&b| {
                if b {
                    None
                } else {
                    next += face_local;
                    Some(next - face_local)
                }
            })
            .collect();
        let mut element_trace = Vec::with_capacity(mesh.num_elements());
        let mut element_trace_faces = Vec::with_capacity(mesh.num_elements());
        for faces in &mesh.element_faces {
            let mut idx = Vec::new();
            let mut lfs = Vec::new();
            for (lf, &f) in faces.iter().enumerate() {
                if let Some(off) = trace_offsets[f] {
                    idx.extend(off..off + face_local);
                    lfs.push(lf);
                }
            }
            element_trace.push(idx);
            element_trace_faces.push(lfs);
        }
        DofLayout {
            dim,
            n_elements: mesh.num_elements(),
            local,
            face_local,
            trace_offsets,
            n_trace: next,
            element_trace,
            element_trace_faces,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of scalar unknowns (also the size of each flux component).
    pub fn n1(&self) -> usize {
        self.n_elements * self.local
    }

    /// Number of trace unknowns.
    pub fn n2(&self) -> usize {
        self.n_trace
    }

    /// Size of the full unknown vector: `dim` flux components, scalar, trace.
    pub fn full_len(&self) -> usize {
        (self.dim + 1) * self.n1() + self.n2()
    }

    pub fn local_len(&self) -> usize {
        self.local
    }

    pub fn face_local_len(&self) -> usize {
        self.face_local
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    pub fn w_index(&self, element: usize, node: usize) -> usize {
        element * self.local + node
    }

    /// Element and local node of a scalar-space index.
    pub fn w_location(&self, index: usize) -> (usize, usize) {
        (index / self.local, index % self.local)
    }

    /// First trace index of `face`, or `None` on the boundary.
    pub fn trace_offset(&self, face: usize) -> Option<usize> {
        self.trace_offsets[face]
    }

    pub fn element_trace(&self, element: usize) -> &[usize] {
        &self.element_trace[element]
    }

    pub fn element_trace_faces(&self, element: usize) -> &[usize] {
        &self.element_trace_faces[element]
    }
}

/// Which space a coefficient vector belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceTag {
    Scalar,
    FluxComponent(usize),
    Trace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub tag: SpaceTag,
    pub coeffs: Vec<f64>,
}

impl GridFunction {
    pub fn new(tag: SpaceTag, coeffs: Vec<f64>, layout: &DofLayout) -> Result<Self> {
        let expected = match tag {
            SpaceTag::Trace => layout.n2(),
            SpaceTag::FluxComponent(s) if s >= layout.dim() => {
                return Err(HdgError::IndexOutOfRange(format!("flux component {s}")))
            }
            _ => layout.n1(),
        };
        if coeffs.len() != expected {
            return Err(HdgError::InvalidArgument(format!(
                "{tag:?} field needs {expected} coefficients, got {}",
                coeffs.len()
            )));
        }
        Ok(GridFunction { tag, coeffs })
    }

    pub fn zeros(tag: SpaceTag, layout: &DofLayout) -> Self {
        let n = match tag {
            SpaceTag::Trace => layout.n2(),
            _ => layout.n1(),
        };
        GridFunction {
            tag,
            coeffs: vec![0.0; n],
        }
    }
}

/// Element quadrature mapped onto a physical element.
#[derive(Debug, Clone)]
pub struct ElementQuadrature {
    pub points: Vec<Point>,
    /// Physical weights (reference weight times `det B`).
    pub weights: Vec<f64>,
    /// Basis values, one row per point.
    pub values: DMatrix<f64>,
    /// Physical basis gradients, one matrix per direction.
    pub grads: Vec<DMatrix<f64>>,
}

/// Quadrature on one local face of an element.
#[derive(Debug, Clone)]
pub struct FaceQuadrature {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub normal: [f64; 3],
    /// Element basis values at the face points, one row per point.
    pub values: DMatrix<f64>,
    /// Face basis values in the global face parametrization.
    pub face_values: DMatrix<f64>,
}

/// Mesh, bases and layout for one polynomial degree.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: Mesh,
    pub basis: ReferenceBasis,
    pub face_basis: ReferenceBasis,
    pub layout: DofLayout,
    ref_mass: DMatrix<f64>,
    ref_mass_inv: DMatrix<f64>,
    ref_face_mass: DMatrix<f64>,
    ref_face_mass_inv: DMatrix<f64>,
}

fn mass_of(basis: &ReferenceBasis) -> Result<DMatrix<f64>> {
    let q = simplex_quadrature(2 * basis.degree(), basis.dim())?;
    let v = basis.eval_basis(&q.points)?;
    let w = DMatrix::from_diagonal(&DVector::from_vec(q.weights.clone()));
    Ok(v.transpose() * w * v)
}

fn invert(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| HdgError::Numerical("singular reference mass matrix".into()))
}

impl Discretization {
    pub fn new(mesh: Mesh, k: usize) -> Result<Self> {
        let basis = nodal_basis(k, mesh.dim)?;
        let face_basis = nodal_basis(k, mesh.dim - 1)?;
        let layout = DofLayout::new(&mesh, k);
        let ref_mass = mass_of(&basis)?;
        let ref_face_mass = mass_of(&face_basis)?;
        Ok(Discretization {
            ref_mass_inv: invert(&ref_mass)?,
            ref_face_mass_inv: invert(&ref_face_mass)?,
            mesh,
            basis,
            face_basis,
            layout,
            ref_mass,
            ref_face_mass,
        })
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim
    }

    pub fn k(&self) -> usize {
        self.basis.degree()
    }

    /// Element mass matrix of element `e` (exact for the affine map).
    pub fn mass(&self, e: usize) -> DMatrix<f64> {
        &self.ref_mass * self.mesh.element_maps[e].det
    }

    pub fn mass_inverse(&self, e: usize) -> DMatrix<f64> {
        &self.ref_mass_inv / self.mesh.element_maps[e].det
    }

    /// Physical coordinates of the nodes of element `e`.
    pub fn node_points(&self, e: usize) -> Vec<Point> {
        let map = &self.mesh.element_maps[e];
        self.basis
            .nodes()
            .iter()
            .map(|xi| map.to_physical(xi))
            .collect()
    }

    pub fn element_quadrature(&self, e: usize, rule: &QuadratureRule) -> ElementQuadrature {
        let map = &self.mesh.element_maps[e];
        let l = self.basis.len();
        let np = rule.len();
        let mut values = DMatrix::zeros(np, l);
        let mut grads = vec![DMatrix::zeros(np, l); self.dim()];
        let mut row = vec![0.0; l];
        let mut g = vec![[0.0; 3]; l];
        for (i, xi) in rule.points.iter().enumerate() {
            self.basis.values_at(xi, &mut row);
            self.basis.gradients_at(xi, &mut g);
            for j in 0..l {
                values[(i, j)] = row[j];
                let pg = map.physical_gradient(&g[j]);
                for (s, m) in grads.iter_mut().enumerate() {
                    m[(i, j)] = pg[s];
                }
            }
        }
        ElementQuadrature {
            points: rule.points.iter().map(|xi| map.to_physical(xi)).collect(),
            weights: rule.weights.iter().map(|w| w * map.det).collect(),
            values,
            grads,
        }
    }

    /// Quadrature on local face `lf` of element `e`; `rule` lives on the
    /// reference face simplex.
    pub fn face_quadrature(&self, e: usize, lf: usize, rule: &QuadratureRule) -> FaceQuadrature {
        let dim = self.dim();
        let mesh = &self.mesh;
        let face = mesh.element_faces[e][lf];
        let geo = mesh.local_face_geometry(e, lf);
        let scale = geo.measure / reference_volume(dim - 1);
        let map = &mesh.element_maps[e];
        let l = self.basis.len();
        let lf_len = self.face_basis.len();
        let np = rule.len();
        let mut values = DMatrix::zeros(np, l);
        let mut face_values = DMatrix::zeros(np, lf_len);
        let mut row = vec![0.0; l];
        let mut frow = vec![0.0; lf_len];
        let mut points = Vec::with_capacity(np);
        for (i, s) in rule.points.iter().enumerate() {
            let x = mesh.face_point(face, s);
            let xi = map.to_reference(&x, dim);
            self.basis.values_at(&xi, &mut row);
            self.face_basis.values_at(s, &mut frow);
            for j in 0..l {
                values[(i, j)] = row[j];
            }
            for j in 0..lf_len {
                face_values[(i, j)] = frow[j];
            }
            points.push(x);
        }
        FaceQuadrature {
            points,
            weights: rule.weights.iter().map(|w| w * scale).collect(),
            normal: geo.normal,
            values,
            face_values,
        }
    }

    pub fn element_rule(&self, degree: usize) -> Result<QuadratureRule> {
        simplex_quadrature(degree, self.dim())
    }

    pub fn face_rule(&self, degree: usize) -> Result<QuadratureRule> {
        simplex_quadrature(degree, self.dim() - 1)
    }
}

/// Nodal interpolant: the coefficient at node `j` of element `K` is `g` at
/// that node.
pub fn interpolate_elementwise(disc: &Discretization, g: impl Fn(&Point) -> f64) -> GridFunction {
    let mut coeffs = Vec::with_capacity(disc.layout.n1());
    for e in 0..disc.mesh.num_elements() {
        coeffs.extend(disc.node_points(e).iter().map(&g));
    }
    GridFunction {
        tag: SpaceTag::Scalar,
        coeffs,
    }
}

/// Elementwise L2 projection onto the scalar space.
pub fn l2_project_w(disc: &Discretization, g: impl Fn(&Point) -> f64) -> Result<GridFunction> {
    let rule = disc.element_rule(2 * disc.k() + PROJECTION_EXTRA)?;
    let l = disc.layout.local_len();
    let mut coeffs = vec![0.0; disc.layout.n1()];
    for e in 0..disc.mesh.num_elements() {
        let eq = disc.element_quadrature(e, &rule);
        let mut rhs = DVector::zeros(l);
        for (i, (x, w)) in eq.points.iter().zip(&eq.weights).enumerate() {
            let gv = g(x) * w;
            for j in 0..l {
                rhs[j] += gv * eq.values[(i, j)];
            }
        }
        let c = disc.mass_inverse(e) * rhs;
        coeffs[e * l..(e + 1) * l].copy_from_slice(c.as_slice());
    }
    Ok(GridFunction {
        tag: SpaceTag::Scalar,
        coeffs,
    })
}

/// L2 projection onto the trace space, face by face.
pub fn pm_project(disc: &Discretization, y: impl Fn(&Point) -> f64) -> Result<GridFunction> {
    let rule = disc.face_rule(2 * disc.k() + PROJECTION_EXTRA)?;
    let mesh = &disc.mesh;
    let lf_len = disc.layout.face_local_len();
    let mut coeffs = vec![0.0; disc.layout.n2()];
    for f in 0..mesh.num_faces() {
        let Some(off) = disc.layout.trace_offset(f) else {
            continue;
        };
        let inc = mesh.face_adjacency[f][0];
        let fq = disc.face_quadrature(inc.element, inc.local_face, &rule);
        let measure = mesh.local_face_geometry(inc.element, inc.local_face).measure;
        let mut rhs = DVector::zeros(lf_len);
        for (i, (x, w)) in fq.points.iter().zip(&fq.weights).enumerate() {
            let yv = y(x) * w;
            for a in 0..lf_len {
                rhs[a] += yv * fq.face_values[(i, a)];
            }
        }
        let c = &disc.ref_face_mass_inv * rhs * (reference_volume(disc.dim() - 1) / measure);
        coeffs[off..off + lf_len].copy_from_slice(c.as_slice());
    }
    Ok(GridFunction {
        tag: SpaceTag::Trace,
        coeffs,
    })
}

/// Face mass matrix of face `f` in the trace basis.
pub fn face_mass(disc: &Discretization, f: usize) -> DMatrix<f64> {
    let inc = disc.mesh.face_adjacency[f][0];
    let measure = disc.mesh.local_face_geometry(inc.element, inc.local_face).measure;
    &disc.ref_face_mass * (measure / reference_volume(disc.dim() - 1))
}

/// Result of the HDG projection of a flux/scalar pair.
#[derive(Debug, Clone)]
pub struct HdgProjection {
    pub flux: Vec<GridFunction>,
    pub scalar: GridFunction,
    /// Largest relative residual of the local systems.
    pub max_residual: f64,
}

/// HDG projection with constant stabilization `tau`.
///
/// Per element, the flux and scalar are fixed by moments against polynomials
/// of degree `k - 1` and by the normal-flux-plus-stabilization moments on
/// every face against the face space.
pub fn hdg_project(
    disc: &Discretization,
    q: impl Fn(&Point) -> [f64; 3],
    u: impl Fn(&Point) -> f64,
    tau: f64,
) -> Result<HdgProjection> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(HdgError::InvalidStabilization(tau));
    }
    let dim = disc.dim();
    let k = disc.k();
    let l = disc.layout.local_len();
    let lf_len = disc.layout.face_local_len();
    let n = (dim + 1) * l;
    let interior: Vec<[usize; 3]> = if k == 0 {
        Vec::new()
    } else {
        monomial_exponents(k - 1, dim)
    };
    let rule = disc.element_rule(2 * k + 4)?;
    let frule = disc.face_rule(2 * k + 4)?;

    let mut flux = vec![vec![0.0; disc.layout.n1()]; dim];
    let mut scalar = vec![0.0; disc.layout.n1()];
    let mut max_residual: f64 = 0.0;

    for e in 0..disc.mesh.num_elements() {
        let eq = disc.element_quadrature(e, &rule);
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut b = DVector::<f64>::zeros(n);
        let mut row = 0;
        let mono_at = |i: usize, m: &[usize; 3]| {
            let xi = rule.points[i];
            xi[0].powi(m[0] as i32) * xi[1].powi(m[1] as i32) * xi[2].powi(m[2] as i32)
        };
        // flux components, then scalar, against P_{k-1}
        for comp in 0..=dim {
            for m in &interior {
                for i in 0..rule.len() {
                    let wm = eq.weights[i] * mono_at(i, m);
                    let exact = if comp < dim { q(&eq.points[i])[comp] } else { u(&eq.points[i]) };
                    b[row] += wm * exact;
                    for j in 0..l {
                        a[(row, comp * l + j)] += wm * eq.values[(i, j)];
                    }
                }
                row += 1;
            }
        }
        for lf in 0..=dim {
            let fq = disc.face_quadrature(e, lf, &frule);
            let nrm = fq.normal;
            for mu in 0..lf_len {
                for i in 0..frule.len() {
                    let wm = fq.weights[i] * fq.face_values[(i, mu)];
                    let qv = q(&fq.points[i]);
                    let qn: f64 = (0..dim).map(|s| qv[s] * nrm[s]).sum();
                    b[row] += wm * (qn + tau * u(&fq.points[i]));
                    for j in 0..l {
                        let phi = fq.values[(i, j)];
                        for s in 0..dim {
                            a[(row, s * l + j)] += wm * phi * nrm[s];
                        }
                        a[(row, dim * l + j)] += wm * tau * phi;
                    }
                }
                row += 1;
            }
        }
        debug_assert_eq!(row, n);
        let c = a.clone().lu().solve(&b).ok_or_else(|| {
            HdgError::Numerical(format!("singular HDG projection system on element {e}"))
        })?;
        let res = (&a * &c - &b).amax() / b.amax().max(a.amax() * c.amax()).max(f64::MIN_POSITIVE);
        max_residual = max_residual.max(res);
        for s in 0..dim {
            flux[s][e * l..(e + 1) * l].copy_from_slice(&c.as_slice()[s * l..(s + 1) * l]);
        }
        scalar[e * l..(e + 1) * l].copy_from_slice(&c.as_slice()[dim * l..]);
    }
    Ok(HdgProjection {
        flux: flux
            .into_iter()
            .enumerate()
            .map(|(s, coeffs)| GridFunction {
                tag: SpaceTag::FluxComponent(s),
                coeffs,
            })
            .collect(),
        scalar: GridFunction {
            tag: SpaceTag::Scalar,
            coeffs: scalar,
        },
        max_residual,
    })
}

/// Values of a scalar-layout field on element `e` at reference points.
pub fn eval_gridfunction(
    disc: &Discretization,
    f: &GridFunction,
    e: usize,
    points: &[Point],
) -> Result<Vec<f64>> {
    if f.tag == SpaceTag::Trace {
        return Err(HdgError::InvalidArgument(
            "trace fields are not evaluated on elements".into(),
        ));
    }
    if e >= disc.mesh.num_elements() {
        return Err(HdgError::IndexOutOfRange(format!("element {e}")));
    }
    let l = disc.layout.local_len();
    let v = disc.basis.eval_basis(points)?;
    let c = DVector::from_column_slice(&f.coeffs[e * l..(e + 1) * l]);
    Ok((v * c).as_slice().to_vec())
}

/// Flux values on element `e` at reference points, one vector per point.
pub fn eval_flux(
    disc: &Discretization,
    components: &[GridFunction],
    e: usize,
    points: &[Point],
) -> Result<Vec<[f64; 3]>> {
    if components.len() != disc.dim() {
        return Err(HdgError::InvalidArgument(format!(
            "flux needs {} components, got {}",
            disc.dim(),
            components.len()
        )));
    }
    let mut out = vec![[0.0; 3]; points.len()];
    for (s, c) in components.iter().enumerate() {
        for (o, v) in out.iter_mut().zip(eval_gridfunction(disc, c, e, points)?) {
            o[s] = v;
        }
    }
    Ok(out)
}
