//! Structured simplicial meshes of the unit square and the unit cube.
//!
//! Local face `i` of an element is the face opposite its local vertex `i`.
//! Global faces store their vertex indices sorted ascending, which also fixes
//! the parametrization used by trace degrees of freedom on that face.

use std::collections::HashMap;
use std::io::{self, Write};

use nalgebra::{Matrix3, Vector3};

use crate::error::{HdgError, Result};
use crate::polybasis::Point;

/// Affine map `x = B xi + b` from the reference simplex onto an element.
///
/// In 2D the matrices are padded to 3x3 with a unit `(2, 2)` entry so that the
/// determinant and inverse agree with those of the 2x2 block.
#[derive(Debug, Clone)]
pub struct ElementMap {
    pub matrix: Matrix3<f64>,
    pub offset: Vector3<f64>,
    pub det: f64,
    pub inv_transpose: Matrix3<f64>,
}

impl ElementMap {
    pub fn to_physical(&self, xi: &Point) -> Point {
        let x = self.matrix * Vector3::new(xi[0], xi[1], xi[2]) + self.offset;
        [x[0], x[1], x[2]]
    }

    pub fn to_reference(&self, x: &Point, dim: usize) -> Point {
        let d = Vector3::new(x[0], x[1], x[2]) - self.offset;
        let xi = self.inv_transpose.transpose() * d;
        let mut out = [xi[0], xi[1], xi[2]];
        out.iter_mut().skip(dim).for_each(|c| *c = 0.0);
        out
    }

    /// Physical gradient from a reference gradient, `B^{-T} g`.
    pub fn physical_gradient(&self, g: &[f64; 3]) -> [f64; 3] {
        let v = self.inv_transpose * Vector3::new(g[0], g[1], g[2]);
        [v[0], v[1], v[2]]
    }
}

/// One side of a face: the element and its local face index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaceIncidence {
    pub element: usize,
    pub local_face: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceGeometry {
    pub normal: [f64; 3],
    pub measure: f64,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub dim: usize,
    pub vertices: Vec<Point>,
    pub elements: Vec<Vec<usize>>,
    pub faces: Vec<Vec<usize>>,
    pub face_adjacency: Vec<Vec<FaceIncidence>>,
    pub boundary_mask: Vec<bool>,
    /// Global face id of each local face, per element.
    pub element_faces: Vec<Vec<usize>>,
    pub element_maps: Vec<ElementMap>,
    pub element_diameter: Vec<f64>,
    /// Cells per axis of the underlying structured grid.
    pub cells_per_axis: usize,
}

/// Builds a structured mesh of `[0,1]^dim` with `n` cells per axis.
///
/// 2D cells are split criss-cross into four triangles through the cell
/// center (`4 n^2` elements); 3D cubes are split into the six Kuhn tetrahedra
/// along the main diagonal (`6 n^3` elements).
pub fn build_structured_mesh(dim: usize, n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(HdgError::InvalidArgument(
            "mesh needs at least one cell per axis".into(),
        ));
    }
    let (vertices, elements) = match dim {
        2 => criss_cross(n),
        3 => kuhn(n),
        _ => {
            return Err(HdgError::InvalidArgument(format!(
                "mesh dimension {dim} not in {{2, 3}}"
            )))
        }
    };
    Mesh::from_elements(dim, vertices, elements, n)
}

fn criss_cross(n: usize) -> (Vec<Point>, Vec<Vec<usize>>) {
    let h = 1.0 / n as f64;
    let corner = |i: usize, j: usize| i + (n + 1) * j;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1) + n * n);
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([i as f64 * h, j as f64 * h, 0.0]);
        }
    }
    let mut elements = Vec::with_capacity(4 * n * n);
    for j in 0..n {
        for i in 0..n {
            let m = vertices.len();
            vertices.push([(i as f64 + 0.5) * h, (j as f64 + 0.5) * h, 0.0]);
            let a = corner(i, j);
            let b = corner(i + 1, j);
            let c = corner(i + 1, j + 1);
            let d = corner(i, j + 1);
            // counterclockwise, so every map has positive determinant
            elements.push(vec![a, b, m]);
            elements.push(vec![b, c, m]);
            elements.push(vec![c, d, m]);
            elements.push(vec![d, a, m]);
        }
    }
    (vertices, elements)
}

fn kuhn(n: usize) -> (Vec<Point>, Vec<Vec<usize>>) {
    let h = 1.0 / n as f64;
    let idx = |i: usize, j: usize, l: usize| i + (n + 1) * (j + (n + 1) * l);
    let mut vertices = Vec::with_capacity((n + 1).pow(3));
    for l in 0..=n {
        for j in 0..=n {
            for i in 0..=n {
                vertices.push([i as f64 * h, j as f64 * h, l as f64 * h]);
            }
        }
    }
    const PERMS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut elements = Vec::with_capacity(6 * n * n * n);
    for l in 0..n {
        for j in 0..n {
            for i in 0..n {
                for perm in PERMS {
                    let mut c = [i, j, l];
                    let mut tet = vec![idx(c[0], c[1], c[2])];
                    for axis in perm {
                        c[axis] += 1;
                        tet.push(idx(c[0], c[1], c[2]));
                    }
                    // odd permutations come out negatively oriented
                    let parity = matches!(perm, [0, 2, 1] | [1, 0, 2] | [2, 1, 0]);
                    if parity {
                        tet.swap(2, 3);
                    }
                    elements.push(tet);
                }
            }
        }
    }
    (vertices, elements)
}

fn element_map(dim: usize, verts: &[Point]) -> Result<ElementMap> {
    let mut matrix = Matrix3::identity();
    for s in 0..dim {
        for r in 0..dim {
            matrix[(r, s)] = verts[s + 1][r] - verts[0][r];
        }
    }
    let det = matrix.determinant();
    if det <= 0.0 {
        return Err(HdgError::Numerical(format!(
            "element with vertices {verts:?} has non-positive orientation"
        )));
    }
    let inv = matrix
        .try_inverse()
        .ok_or_else(|| HdgError::Numerical("degenerate element".into()))?;
    Ok(ElementMap {
        matrix,
        offset: Vector3::new(verts[0][0], verts[0][1], verts[0][2]),
        det,
        inv_transpose: inv.transpose(),
    })
}

impl Mesh {
    fn from_elements(
        dim: usize,
        vertices: Vec<Point>,
        elements: Vec<Vec<usize>>,
        cells_per_axis: usize,
    ) -> Result<Self> {
        let mut face_ids: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut faces = Vec::new();
        let mut face_adjacency: Vec<Vec<FaceIncidence>> = Vec::new();
        let mut element_faces = Vec::with_capacity(elements.len());
        let mut element_maps = Vec::with_capacity(elements.len());
        let mut element_diameter = Vec::with_capacity(elements.len());

        for (e, el) in elements.iter().enumerate() {
            let verts: Vec<Point> = el.iter().map(|&v| vertices[v]).collect();
            element_maps.push(element_map(dim, &verts)?);
            let mut diam: f64 = 0.0;
            for a in 0..verts.len() {
                for b in a + 1..verts.len() {
                    diam = diam.max(distance(&verts[a], &verts[b]));
                }
            }
            element_diameter.push(diam);

            let mut local = Vec::with_capacity(dim + 1);
            for i in 0..=dim {
                let mut key: Vec<usize> = el
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, v)| *v)
                    .collect();
                key.sort_unstable();
                let id = *face_ids.entry(key.clone()).or_insert_with(|| {
                    faces.push(key);
                    face_adjacency.push(Vec::with_capacity(2));
                    faces.len() - 1
                });
                face_adjacency[id].push(FaceIncidence {
                    element: e,
                    local_face: i,
                });
                local.push(id);
            }
            element_faces.push(local);
        }

        if let Some(bad) = face_adjacency.iter().position(|a| a.len() > 2) {
            return Err(HdgError::Numerical(format!(
                "face {bad} is shared by more than two elements"
            )));
        }
        let boundary_mask = face_adjacency.iter().map(|a| a.len() == 1).collect();
        Ok(Mesh {
            dim,
            vertices,
            elements,
            faces,
            face_adjacency,
            boundary_mask,
            element_faces,
            element_maps,
            element_diameter,
            cells_per_axis,
        })
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn num_boundary_faces(&self) -> usize {
        self.boundary_mask.iter().filter(|b| **b).count()
    }

    /// Structured mesh size `1/n`, used by the time-step rule.
    pub fn h(&self) -> f64 {
        1.0 / self.cells_per_axis as f64
    }

    pub fn element_volume(&self, e: usize) -> f64 {
        self.element_maps[e].det / factorial(self.dim)
    }

    /// Outward unit normal and measure of local face `local_face` of element `e`.
    pub fn local_face_geometry(&self, e: usize, local_face: usize) -> FaceGeometry {
        let map = &self.element_maps[e];
        // gradient of the barycentric coordinate of the opposite vertex
        let mut g = [0.0; 3];
        if local_face == 0 {
            for s in 0..self.dim {
                let col = map.physical_gradient(&unit(s));
                for r in 0..3 {
                    g[r] -= col[r];
                }
            }
        } else {
            g = map.physical_gradient(&unit(local_face - 1));
        }
        let norm = g.iter().map(|c| c * c).sum::<f64>().sqrt();
        let normal = [-g[0] / norm, -g[1] / norm, -g[2] / norm];
        let measure = self.dim as f64 * self.element_volume(e) * norm;
        FaceGeometry { normal, measure }
    }

    /// Geometry of `face_id` seen from incidence `side` (0 or 1).
    pub fn face_geometry(&self, face_id: usize, side: usize) -> Result<FaceGeometry> {
        let inc = self
            .face_adjacency
            .get(face_id)
            .ok_or_else(|| HdgError::IndexOutOfRange(format!("face {face_id}")))?
            .get(side)
            .ok_or_else(|| {
                HdgError::IndexOutOfRange(format!("side {side} of face {face_id}"))
            })?;
        Ok(self.local_face_geometry(inc.element, inc.local_face))
    }

    /// Physical point on `face_id` at face-reference coordinates `s`, using the
    /// sorted vertex order of the face.
    pub fn face_point(&self, face_id: usize, s: &Point) -> Point {
        let fv = &self.faces[face_id];
        let v0 = self.vertices[fv[0]];
        let mut x = v0;
        for a in 0..self.dim - 1 {
            let va = self.vertices[fv[a + 1]];
            for r in 0..3 {
                x[r] += s[a] * (va[r] - v0[r]);
            }
        }
        x
    }

    /// Plain-text dump for debugging; not a stable format.
    pub fn write_dump<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "# dim {} vertices {} elements {} faces {}",
            self.dim,
            self.vertices.len(),
            self.elements.len(),
            self.faces.len()
        )?;
        for (i, v) in self.vertices.iter().enumerate() {
            writeln!(out, "v {i} {} {} {}", v[0], v[1], v[2])?;
        }
        for (i, e) in self.elements.iter().enumerate() {
            let ids: Vec<String> = e.iter().map(|v| v.to_string()).collect();
            writeln!(out, "e {i} {}", ids.join(" "))?;
        }
        for (i, f) in self.faces.iter().enumerate() {
            let ids: Vec<String> = f.iter().map(|v| v.to_string()).collect();
            let tag = if self.boundary_mask[i] { "b" } else { "i" };
            writeln!(out, "f {i} {tag} {}", ids.join(" "))?;
        }
        Ok(())
    }
}

fn unit(s: usize) -> [f64; 3] {
    let mut u = [0.0; 3];
    u[s] = 1.0;
    u
}

fn distance(a: &Point, b: &Point) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}
