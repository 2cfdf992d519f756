//! Nodal Lagrange bases on reference simplices and quadrature rules.
//!
//! The reference simplex of dimension `d` has vertices `0, e_1, ..., e_d`.
//! Points are stored as `[f64; 3]` with unused trailing coordinates set to
//! zero, which keeps 1D, 2D and 3D code on a single path.

use nalgebra::DMatrix;

use crate::error::{HdgError, Result};

/// A point in (up to) three dimensions; unused coordinates are zero.
pub type Point = [f64; 3];

/// Highest polynomial degree supported for nodal bases.
pub const MAX_BASIS_DEGREE: usize = 3;

/// Highest exactness degree [`simplex_quadrature`] will produce.
pub const MAX_QUADRATURE_DEGREE: usize = 30;

const OUTSIDE_TOL: f64 = 1e-10;

/// Exponent tuples of all monomials of total degree `<= k` in `dim` variables.
///
/// Ordered by total degree, then lexicographically with the last variable
/// varying slowest.
pub fn monomial_exponents(k: usize, dim: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for total in 0..=k {
        match dim {
            1 => out.push([total, 0, 0]),
            2 => {
                for b in 0..=total {
                    out.push([total - b, b, 0]);
                }
            }
            3 => {
                for c in 0..=total {
                    for b in 0..=total - c {
                        out.push([total - b - c, b, c]);
                    }
                }
            }
            _ => unreachable!("simplex dimension must be 1, 2 or 3"),
        }
    }
    out
}

/// Number of polynomials of degree `<= k` in `dim` variables, `C(k + dim, dim)`.
pub fn polynomial_count(k: usize, dim: usize) -> usize {
    let mut num = 1usize;
    let mut den = 1usize;
    for i in 1..=dim {
        num *= k + i;
        den *= i;
    }
    num / den
}

fn monomial(x: &Point, e: &[usize; 3]) -> f64 {
    x[0].powi(e[0] as i32) * x[1].powi(e[1] as i32) * x[2].powi(e[2] as i32)
}

fn monomial_derivative(x: &Point, e: &[usize; 3], dir: usize) -> f64 {
    if e[dir] == 0 {
        return 0.0;
    }
    let mut d = *e;
    d[dir] -= 1;
    e[dir] as f64 * monomial(x, &d)
}

/// Volume of the reference simplex, `1 / dim!`.
pub fn reference_volume(dim: usize) -> f64 {
    match dim {
        0 | 1 => 1.0,
        2 => 0.5,
        3 => 1.0 / 6.0,
        _ => unreachable!(),
    }
}

/// Checks that `x` lies in the closed reference simplex up to [`OUTSIDE_TOL`].
fn inside_reference(x: &Point, dim: usize) -> bool {
    let mut sum = 0.0;
    for c in x.iter().take(dim) {
        if *c < -OUTSIDE_TOL {
            return false;
        }
        sum += c;
    }
    sum <= 1.0 + OUTSIDE_TOL
}

/// Nodal Lagrange basis of degree `k` on the reference simplex.
#[derive(Debug, Clone)]
pub struct ReferenceBasis {
    k: usize,
    dim: usize,
    nodes: Vec<Point>,
    exponents: Vec<[usize; 3]>,
    /// Monomial-to-nodal coefficients: `phi_j = sum_m mono_m * coeffs[(m, j)]`.
    coeffs: DMatrix<f64>,
}

/// Builds the nodal basis of degree `k` on the reference simplex of dimension `dim`.
///
/// Nodes are the equispaced lattice points for `k >= 1` and the barycenter for
/// `k = 0`.
pub fn nodal_basis(k: usize, dim: usize) -> Result<ReferenceBasis> {
    if !(1..=3).contains(&dim) {
        return Err(HdgError::InvalidArgument(format!(
            "simplex dimension {dim} not in 1..=3"
        )));
    }
    if k > MAX_BASIS_DEGREE {
        return Err(HdgError::InvalidArgument(format!(
            "basis degree {k} exceeds the supported maximum {MAX_BASIS_DEGREE}"
        )));
    }
    let nodes = lattice_nodes(k, dim);
    let exponents = monomial_exponents(k, dim);
    let n = nodes.len();
    debug_assert_eq!(n, exponents.len());
    let vandermonde = DMatrix::from_fn(n, n, |i, m| monomial(&nodes[i], &exponents[m]));
    let coeffs = vandermonde
        .try_inverse()
        .ok_or_else(|| HdgError::Numerical("singular nodal Vandermonde matrix".into()))?;
    Ok(ReferenceBasis {
        k,
        dim,
        nodes,
        exponents,
        coeffs,
    })
}

fn lattice_nodes(k: usize, dim: usize) -> Vec<Point> {
    if k == 0 {
        let c = 1.0 / (dim as f64 + 1.0);
        let mut p = [0.0; 3];
        p.iter_mut().take(dim).for_each(|x| *x = c);
        return vec![p];
    }
    let h = 1.0 / k as f64;
    let mut nodes = Vec::new();
    match dim {
        1 => {
            for i in 0..=k {
                nodes.push([i as f64 * h, 0.0, 0.0]);
            }
        }
        2 => {
            for j in 0..=k {
                for i in 0..=k - j {
                    nodes.push([i as f64 * h, j as f64 * h, 0.0]);
                }
            }
        }
        3 => {
            for l in 0..=k {
                for j in 0..=k - l {
                    for i in 0..=k - l - j {
                        nodes.push([i as f64 * h, j as f64 * h, l as f64 * h]);
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    nodes
}

impl ReferenceBasis {
    pub fn degree(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of basis functions, `C(k + dim, dim)`.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    /// Values of every basis function at `x`, without range checks.
    pub fn values_at(&self, x: &Point, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (m, e) in self.exponents.iter().enumerate() {
            let mv = monomial(x, e);
            if mv == 0.0 {
                continue;
            }
            for (j, o) in out.iter_mut().enumerate() {
                *o += mv * self.coeffs[(m, j)];
            }
        }
    }

    /// Reference gradients of every basis function at `x`; `out[j][dir]`.
    pub fn gradients_at(&self, x: &Point, out: &mut [[f64; 3]]) {
        out.iter_mut().for_each(|g| *g = [0.0; 3]);
        for (m, e) in self.exponents.iter().enumerate() {
            for dir in 0..self.dim {
                let dv = monomial_derivative(x, e, dir);
                if dv == 0.0 {
                    continue;
                }
                for (j, g) in out.iter_mut().enumerate() {
                    g[dir] += dv * self.coeffs[(m, j)];
                }
            }
        }
    }

    /// Basis values at `points`, one row per point.
    pub fn eval_basis(&self, points: &[Point]) -> Result<DMatrix<f64>> {
        self.check_points(points)?;
        let mut out = DMatrix::zeros(points.len(), self.len());
        let mut row = vec![0.0; self.len()];
        for (i, p) in points.iter().enumerate() {
            self.values_at(p, &mut row);
            for (j, v) in row.iter().enumerate() {
                out[(i, j)] = *v;
            }
        }
        Ok(out)
    }

    /// Reference gradients at `points`: entry `dir` of the result holds
    /// `d phi_j / d xi_dir` with one row per point.
    pub fn eval_basis_grad(&self, points: &[Point]) -> Result<Vec<DMatrix<f64>>> {
        self.check_points(points)?;
        let mut out = vec![DMatrix::zeros(points.len(), self.len()); self.dim];
        let mut grads = vec![[0.0; 3]; self.len()];
        for (i, p) in points.iter().enumerate() {
            self.gradients_at(p, &mut grads);
            for (j, g) in grads.iter().enumerate() {
                for (dir, m) in out.iter_mut().enumerate() {
                    m[(i, j)] = g[dir];
                }
            }
        }
        Ok(out)
    }

    fn check_points(&self, points: &[Point]) -> Result<()> {
        match points.iter().position(|p| !inside_reference(p, self.dim)) {
            Some(i) => Err(HdgError::InvalidArgument(format!(
                "point {:?} lies outside the reference simplex",
                points[i]
            ))),
            None => Ok(()),
        }
    }
}

/// Quadrature rule on a reference simplex.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub dim: usize,
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub exactness_degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(&Point) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p))
            .sum()
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            // Legendre recurrence: p1 = P_m(z), p0 = P_{m-1}(z)
            let (mut p0, mut p1) = (0.0, 1.0);
            for n in 1..=m {
                let p2 = p0;
                p0 = p1;
                p1 = ((2 * n - 1) as f64 * z * p0 - (n - 1) as f64 * p2) / n as f64;
            }
            dp = m as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = 0.5 * (1.0 - z);
        w[i] = 1.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Quadrature on the reference simplex exact for every polynomial of total
/// degree `<= min_degree`.
///
/// Degrees 0 and 1 use the one-point centroid rule. Higher degrees use a
/// collapsed (Duffy) tensor product of Gauss-Legendre rules, whose weights
/// are always positive. The maximum supported degree is
/// [`MAX_QUADRATURE_DEGREE`].
pub fn simplex_quadrature(min_degree: usize, dim: usize) -> Result<QuadratureRule> {
    if !(1..=3).contains(&dim) {
        return Err(HdgError::InvalidArgument(format!(
            "quadrature dimension {dim} not in 1..=3"
        )));
    }
    if min_degree > MAX_QUADRATURE_DEGREE {
        return Err(HdgError::InvalidArgument(format!(
            "quadrature degree {min_degree} exceeds the maximum {MAX_QUADRATURE_DEGREE}"
        )));
    }
    if min_degree <= 1 {
        let c = 1.0 / (dim as f64 + 1.0);
        let mut p = [0.0; 3];
        p.iter_mut().take(dim).for_each(|x| *x = c);
        return Ok(QuadratureRule {
            dim,
            points: vec![p],
            weights: vec![reference_volume(dim)],
            exactness_degree: 1,
        });
    }
    // The collapsed map introduces the Jacobian factors (1-u)^(dim-1) and
    // (1-v)^(dim-2); each direction gets enough points for its raised degree.
    let npts = |deg: usize| (deg + 2) / 2;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    match dim {
        1 => {
            let (x, w) = gauss_legendre(npts(min_degree));
            for (xi, wi) in x.iter().zip(&w) {
                points.push([*xi, 0.0, 0.0]);
                weights.push(*wi);
            }
        }
        2 => {
            let (xu, wu) = gauss_legendre(npts(min_degree + 1));
            let (xv, wv) = gauss_legendre(npts(min_degree));
            for (u, a) in xu.iter().zip(&wu) {
                for (v, b) in xv.iter().zip(&wv) {
                    points.push([*u, (1.0 - u) * v, 0.0]);
                    weights.push(a * b * (1.0 - u));
                }
            }
        }
        3 => {
            let (xu, wu) = gauss_legendre(npts(min_degree + 2));
            let (xv, wv) = gauss_legendre(npts(min_degree + 1));
            let (xw, ww) = gauss_legendre(npts(min_degree));
            for (u, a) in xu.iter().zip(&wu) {
                for (v, b) in xv.iter().zip(&wv) {
                    for (w, c) in xw.iter().zip(&ww) {
                        points.push([*u, (1.0 - u) * v, (1.0 - u) * (1.0 - v) * w]);
                        weights.push(a * b * c * (1.0 - u) * (1.0 - u) * (1.0 - v));
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    // Odd point counts can overshoot; report the degree the rule actually reaches.
    let exact = |m: usize, raise: usize| 2 * m - 1 - raise;
    let exactness_degree = match dim {
        1 => exact(npts(min_degree), 0),
        2 => exact(npts(min_degree + 1), 1).min(exact(npts(min_degree), 0)),
        _ => exact(npts(min_degree + 2), 2)
            .min(exact(npts(min_degree + 1), 1))
            .min(exact(npts(min_degree), 0)),
    };
    Ok(QuadratureRule {
        dim,
        points,
        weights,
        exactness_degree,
    })
}
