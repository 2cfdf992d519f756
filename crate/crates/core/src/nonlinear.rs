//! Nonlinear reaction terms `F(grad u, u)` and their nodal evaluation.
//!
//! Terms are written in the PDE arguments: `p` stands for `grad u`. The
//! discrete flux approximates `-grad u`, so nodal evaluation negates flux
//! coefficients before calling a term, and [`eval_nodal_jacobian`] is the only
//! place where that sign enters a derivative.

use std::fmt::Debug;

use crate::error::{HdgError, Result};

pub trait NonlinearTerm: Debug + Send + Sync {
    fn name(&self) -> &str;
    /// `F(p, u)`; unused trailing components of `p` are zero.
    fn value(&self, p: &[f64; 3], u: f64) -> f64;
    /// Partial derivative in gradient component `s`.
    fn d_dp(&self, p: &[f64; 3], u: f64, s: usize) -> f64;
    fn d_du(&self, p: &[f64; 3], u: f64) -> f64;
    fn depends_on_gradient(&self) -> bool;
}

/// `F = u^3 - u`.
#[derive(Debug, Clone, Copy, Default)]
pub struct AllenCahn;

impl NonlinearTerm for AllenCahn {
    fn name(&self) -> &str {
        "allen_cahn"
    }
    fn value(&self, _p: &[f64; 3], u: f64) -> f64 {
        u * u * u - u
    }
    fn d_dp(&self, _p: &[f64; 3], _u: f64, _s: usize) -> f64 {
        0.0
    }
    fn d_du(&self, _p: &[f64; 3], u: f64) -> f64 {
        3.0 * u * u - 1.0
    }
    fn depends_on_gradient(&self) -> bool {
        false
    }
}

/// `F = |grad u|^2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct GradSquared;

impl NonlinearTerm for GradSquared {
    fn name(&self) -> &str {
        "grad_squared"
    }
    fn value(&self, p: &[f64; 3], _u: f64) -> f64 {
        p.iter().map(|c| c * c).sum()
    }
    fn d_dp(&self, p: &[f64; 3], _u: f64, s: usize) -> f64 {
        2.0 * p[s]
    }
    fn d_du(&self, _p: &[f64; 3], _u: f64) -> f64 {
        0.0
    }
    fn depends_on_gradient(&self) -> bool {
        true
    }
}

/// Burgers-type transport, `F = u (p_1 + ... + p_d)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Burgers;

impl NonlinearTerm for Burgers {
    fn name(&self) -> &str {
        "burgers"
    }
    fn value(&self, p: &[f64; 3], u: f64) -> f64 {
        u * p.iter().sum::<f64>()
    }
    fn d_dp(&self, _p: &[f64; 3], u: f64, _s: usize) -> f64 {
        u
    }
    fn d_du(&self, p: &[f64; 3], _u: f64) -> f64 {
        p.iter().sum()
    }
    fn depends_on_gradient(&self) -> bool {
        true
    }
}

/// `F = 0`, the heat equation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Zero;

impl NonlinearTerm for Zero {
    fn name(&self) -> &str {
        "zero"
    }
    fn value(&self, _p: &[f64; 3], _u: f64) -> f64 {
        0.0
    }
    fn d_dp(&self, _p: &[f64; 3], _u: f64, _s: usize) -> f64 {
        0.0
    }
    fn d_du(&self, _p: &[f64; 3], _u: f64) -> f64 {
        0.0
    }
    fn depends_on_gradient(&self) -> bool {
        false
    }
}

/// `F = c u`.
#[derive(Debug, Clone, Copy)]
pub struct LinearReaction(pub f64);

impl NonlinearTerm for LinearReaction {
    fn name(&self) -> &str {
        "linear"
    }
    fn value(&self, _p: &[f64; 3], u: f64) -> f64 {
        self.0 * u
    }
    fn d_dp(&self, _p: &[f64; 3], _u: f64, _s: usize) -> f64 {
        0.0
    }
    fn d_du(&self, _p: &[f64; 3], _u: f64) -> f64 {
        self.0
    }
    fn depends_on_gradient(&self) -> bool {
        false
    }
}

/// Looks up a built-in term by its command-line name.
pub fn builtin(name: &str) -> Result<Box<dyn NonlinearTerm>> {
    match name {
        "allen_cahn" => Ok(Box::new(AllenCahn)),
        "grad_squared" => Ok(Box::new(GradSquared)),
        "burgers" => Ok(Box::new(Burgers)),
        "zero" => Ok(Box::new(Zero)),
        other => Err(HdgError::InvalidArgument(format!(
            "unknown nonlinearity `{other}` (expected allen_cahn, grad_squared, burgers or zero)"
        ))),
    }
}

fn gradient_at(flux: &[&[f64]], j: usize) -> [f64; 3] {
    let mut p = [0.0; 3];
    for (s, comp) in flux.iter().enumerate() {
        p[s] = -comp[j];
    }
    p
}

fn check_lengths(flux: &[&[f64]], scalar: &[f64]) -> Result<()> {
    if flux.len() > 3 || flux.iter().any(|c| c.len() != scalar.len()) {
        return Err(HdgError::InvalidArgument(
            "flux and scalar coefficient vectors must have equal length".into(),
        ));
    }
    Ok(())
}

/// Nodal values `F(-q_j, u_j)` for every scalar-space index `j`.
pub fn eval_nodal(f: &dyn NonlinearTerm, flux: &[&[f64]], scalar: &[f64]) -> Result<Vec<f64>> {
    check_lengths(flux, scalar)?;
    Ok(scalar
        .iter()
        .enumerate()
        .map(|(j, &u)| f.value(&gradient_at(flux, j), u))
        .collect())
}

/// Derivatives of the nodal values with respect to the stored coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalJacobian {
    /// One vector per flux component, empty when `F` ignores the gradient.
    pub d_flux: Vec<Vec<f64>>,
    pub d_scalar: Vec<f64>,
}

pub fn eval_nodal_jacobian(
    f: &dyn NonlinearTerm,
    flux: &[&[f64]],
    scalar: &[f64],
) -> Result<NodalJacobian> {
    check_lengths(flux, scalar)?;
    let n = scalar.len();
    let mut d_scalar = Vec::with_capacity(n);
    let mut d_flux = if f.depends_on_gradient() {
        vec![Vec::with_capacity(n); flux.len()]
    } else {
        Vec::new()
    };
    for (j, &u) in scalar.iter().enumerate() {
        let p = gradient_at(flux, j);
        d_scalar.push(f.d_du(&p, u));
        for (s, col) in d_flux.iter_mut().enumerate() {
            // p_s = -q_s
            col.push(-f.d_dp(&p, u, s));
        }
    }
    Ok(NodalJacobian { d_flux, d_scalar })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn all() -> Vec<Box<dyn NonlinearTerm>> {
        ["allen_cahn", "grad_squared", "burgers", "zero"]
            .iter()
            .map(|n| builtin(n).unwrap())
            .collect()
    }

    #[test]
    fn names_round_trip() {
        for f in all() {
            assert_eq!(builtin(f.name()).unwrap().name(), f.name());
        }
        assert!(builtin("cubic").is_err());
    }

    #[test]
    fn allen_cahn_nodal_values() {
        let z = [0.0; 4];
        assert_eq!(eval_nodal(&AllenCahn, &[&z, &z], &z).unwrap(), vec![0.0; 4]);
        let two = [2.0; 4];
        assert_eq!(eval_nodal(&AllenCahn, &[&z, &z], &two).unwrap(), vec![6.0; 4]);
        let j = eval_nodal_jacobian(&AllenCahn, &[&z, &z], &[1.0]).err();
        assert!(j.is_some());
        let jac = eval_nodal_jacobian(&AllenCahn, &[&[0.0], &[0.0]], &[1.0]).unwrap();
        assert_eq!(jac.d_scalar, vec![2.0]);
        assert!(jac.d_flux.is_empty());
    }

    #[test]
    fn grad_squared_uses_negated_flux() {
        let v = eval_nodal(&GradSquared, &[&[-3.0], &[-4.0]], &[0.0]).unwrap();
        assert_eq!(v, vec![25.0]);
    }

    #[test]
    fn burgers_jacobian_by_hand() {
        let jac = eval_nodal_jacobian(&Burgers, &[&[-1.0], &[-2.0]], &[3.0]).unwrap();
        assert_eq!(jac.d_scalar, vec![3.0]);
        assert_eq!(jac.d_flux, vec![vec![-3.0], vec![-3.0]]);
    }

    #[test]
    fn coefficient_jacobian_matches_differences() {
        let flux = [[0.3, -1.2], [0.8, 0.1]];
        let u = [0.7, -0.4];
        let h = 1e-6;
        for f in all() {
            let jac = eval_nodal_jacobian(
                f.as_ref(),
                &[&flux[0], &flux[1]],
                &u,
            )
            .unwrap();
            for j in 0..2 {
                let mut up = u;
                let mut dn = u;
                up[j] += h;
                dn[j] -= h;
                let vp = eval_nodal(f.as_ref(), &[&flux[0], &flux[1]], &up).unwrap()[j];
                let vm = eval_nodal(f.as_ref(), &[&flux[0], &flux[1]], &dn).unwrap()[j];
                assert_abs_diff_eq!(jac.d_scalar[j], (vp - vm) / (2.0 * h), epsilon = 1e-7);
                for s in 0..jac.d_flux.len() {
                    let mut fp = flux;
                    let mut fm = flux;
                    fp[s][j] += h;
                    fm[s][j] -= h;
                    let vp = eval_nodal(f.as_ref(), &[&fp[0], &fp[1]], &u).unwrap()[j];
                    let vm = eval_nodal(f.as_ref(), &[&fm[0], &fm[1]], &u).unwrap()[j];
                    assert_abs_diff_eq!(jac.d_flux[s][j], (vp - vm) / (2.0 * h), epsilon = 1e-7);
                }
            }
        }
    }

    fn rel_close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-6 * a.abs().max(b.abs()).max(1.0)
    }

    proptest! {
        #[test]
        fn derivatives_match_central_differences(
            p0 in -3.0f64..3.0, p1 in -3.0f64..3.0, p2 in -3.0f64..3.0, u in -3.0f64..3.0
        ) {
            let p = [p0, p1, p2];
            let h = 1e-5;
            for f in all() {
                let du = (f.value(&p, u + h) - f.value(&p, u - h)) / (2.0 * h);
                prop_assert!(rel_close(f.d_du(&p, u), du), "{} d_du", f.name());
                for s in 0..3 {
                    let mut a = p;
                    let mut b = p;
                    a[s] += h;
                    b[s] -= h;
                    let dp = (f.value(&a, u) - f.value(&b, u)) / (2.0 * h);
                    prop_assert!(rel_close(f.d_dp(&p, u, s), dp), "{} d_dp {}", f.name(), s);
                }
            }
        }

        #[test]
        fn nodal_evaluation_commutes_with_permutation(
            vals in proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0), 1..20),
            rot in 0usize..20
        ) {
            let a: Vec<f64> = vals.iter().map(|v| v.0).collect();
            let b: Vec<f64> = vals.iter().map(|v| v.1).collect();
            let u: Vec<f64> = vals.iter().map(|v| v.2).collect();
            let r = rot % vals.len();
            let rotate = |v: &[f64]| { let mut w = v.to_vec(); w.rotate_left(r); w };
            for f in all() {
                let base = rotate(&eval_nodal(f.as_ref(), &[&a, &b], &u).unwrap());
                let moved = eval_nodal(f.as_ref(), &[&rotate(&a), &rotate(&b)], &rotate(&u)).unwrap();
                prop_assert_eq!(base, moved);
            }
        }
    }
}
