//! Error norms, the nodal discrete norm and convergence orders.

use crate::assembly::load_degree;
use crate::error::{HdgError, Result};
use crate::polybasis::Point;
use crate::spaces::Discretization;

/// `||u - u_h||` over the mesh for a scalar-layout coefficient vector.
pub fn l2_error_scalar(
    disc: &Discretization,
    coeffs: &[f64],
    exact: impl Fn(&Point) -> f64,
) -> Result<f64> {
    l2_error_components(disc, &[coeffs], |x| [exact(x), 0.0, 0.0])
}

/// `||q - q_h||` with the squared error summed over components.
pub fn l2_error_flux(
    disc: &Discretization,
    components: &[&[f64]],
    exact: impl Fn(&Point) -> [f64; 3],
) -> Result<f64> {
    if components.len() != disc.dim() {
        return Err(HdgError::InvalidArgument(format!(
            "flux needs {} components, got {}",
            disc.dim(),
            components.len()
        )));
    }
    l2_error_components(disc, components, exact)
}

fn l2_error_components(
    disc: &Discretization,
    components: &[&[f64]],
    exact: impl Fn(&Point) -> [f64; 3],
) -> Result<f64> {
    let n1 = disc.layout.n1();
    if let Some(c) = components.iter().find(|c| c.len() != n1) {
        return Err(HdgError::InvalidArgument(format!(
            "field has {} coefficients, expected {n1}",
            c.len()
        )));
    }
    let rule = disc.element_rule(load_degree(disc.k()))?;
    let l = disc.layout.local_len();
    let mut total = 0.0;
    for e in 0..disc.mesh.num_elements() {
        let eq = disc.element_quadrature(e, &rule);
        for q in 0..rule.len() {
            let ex = exact(&eq.points[q]);
            for (s, c) in components.iter().enumerate() {
                let vh: f64 = (0..l).map(|j| eq.values[(q, j)] * c[e * l + j]).sum();
                total += eq.weights[q] * (vh - ex[s]).powi(2);
            }
        }
    }
    Ok(total.sqrt())
}

/// `sqrt(sum_K sum_i |w(node_i)|^2 h_K^d)`, summed over components.
pub fn discrete_h_norm(disc: &Discretization, components: &[&[f64]]) -> f64 {
    let l = disc.layout.local_len();
    let d = disc.dim() as i32;
    let mut total = 0.0;
    for (e, hk) in disc.mesh.element_diameter.iter().enumerate() {
        let w = hk.powi(d);
        for c in components {
            total += w * c[e * l..(e + 1) * l].iter().map(|v| v * v).sum::<f64>();
        }
    }
    total.sqrt()
}

/// Interval that contains `||w|| / ||w||_h` for every nonzero `w` in the
/// scalar space (and, componentwise, in the flux space): the square roots of
/// the extreme eigenvalues of `M_K / h_K^d` over all elements.
pub fn norm_equivalence_bracket(disc: &Discretization) -> (f64, f64) {
    let d = disc.dim() as i32;
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for (e, hk) in disc.mesh.element_diameter.iter().enumerate() {
        let m = disc.mass(e) / hk.powi(d);
        for v in m.symmetric_eigen().eigenvalues.iter() {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    (lo.sqrt(), hi.sqrt())
}

/// Errors of one mesh level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelErrors {
    pub elements: usize,
    pub h: f64,
    pub err_q: f64,
    pub err_u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelReport {
    pub elements: usize,
    pub h: f64,
    pub err_q: f64,
    pub order_q: Option<f64>,
    pub err_u: f64,
    pub order_u: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub k: usize,
    pub levels: Vec<LevelReport>,
}

impl ConvergenceReport {
    pub fn last(&self) -> Option<&LevelReport> {
        self.levels.last()
    }
}

/// Pairwise order `log(e_prev / e) / log(h_prev / h)`; `None` when either
/// error is exactly zero.
pub fn pairwise_order(e_prev: f64, e: f64, h_prev: f64, h: f64) -> Option<f64> {
    if e_prev == 0.0 || e == 0.0 {
        return None;
    }
    Some((e_prev / e).ln() / (h_prev / h).ln())
}

pub fn convergence_orders(k: usize, levels: &[LevelErrors]) -> Result<ConvergenceReport> {
    if levels.len() < 2 {
        return Err(HdgError::InvalidArgument(
            "convergence orders need at least two levels".into(),
        ));
    }
    for lv in levels {
        if !(lv.err_q >= 0.0) || !(lv.err_u >= 0.0) || !lv.err_q.is_finite() || !lv.err_u.is_finite() {
            return Err(HdgError::InvalidArgument(format!(
                "errors must be finite and non-negative: {lv:?}"
            )));
        }
    }
    if levels.windows(2).any(|w| !(w[1].h < w[0].h)) {
        return Err(HdgError::InvalidArgument(
            "mesh sizes must decrease from level to level".into(),
        ));
    }
    let reports = levels
        .iter()
        .enumerate()
        .map(|(i, lv)| {
            let prev = i.checked_sub(1).map(|p| levels[p]);
            LevelReport {
                elements: lv.elements,
                h: lv.h,
                err_q: lv.err_q,
                order_q: prev.and_then(|p| pairwise_order(p.err_q, lv.err_q, p.h, lv.h)),
                err_u: lv.err_u,
                order_u: prev.and_then(|p| pairwise_order(p.err_u, lv.err_u, p.h, lv.h)),
            }
        })
        .collect();
    Ok(ConvergenceReport { k, levels: reports })
}
