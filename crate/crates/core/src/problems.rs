//! Manufactured solutions and the matching source terms.

use std::f64::consts::PI;

use crate::error::{HdgError, Result};
use crate::nonlinear::{builtin, NonlinearTerm};
use crate::polybasis::Point;

/// Time profile multiplying the spatial sine product.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeProfile {
    /// `sin t`
    Sine,
    /// `exp(-t)`
    Decay,
    /// Identically zero.
    Zero,
}

impl TimeProfile {
    fn value(self, t: f64) -> f64 {
        match self {
            TimeProfile::Sine => t.sin(),
            TimeProfile::Decay => (-t).exp(),
            TimeProfile::Zero => 0.0,
        }
    }

    fn derivative(self, t: f64) -> f64 {
        match self {
            TimeProfile::Sine => t.cos(),
            TimeProfile::Decay => -(-t).exp(),
            TimeProfile::Zero => 0.0,
        }
    }
}

/// `u = T(t) prod_i sin(pi x_i)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SineProduct {
    pub dim: usize,
    pub profile: TimeProfile,
}

impl SineProduct {
    pub fn u(&self, x: &Point, t: f64) -> f64 {
        self.profile.value(t) * (0..self.dim).map(|i| (PI * x[i]).sin()).product::<f64>()
    }

    pub fn grad(&self, x: &Point, t: f64) -> [f64; 3] {
        let a = self.profile.value(t);
        let mut g = [0.0; 3];
        for (s, gs) in g.iter_mut().enumerate().take(self.dim) {
            *gs = a * (0..self.dim)
                .map(|i| if i == s { PI * (PI * x[i]).cos() } else { (PI * x[i]).sin() })
                .product::<f64>();
        }
        g
    }

    pub fn u_t(&self, x: &Point, t: f64) -> f64 {
        self.profile.derivative(t) * (0..self.dim).map(|i| (PI * x[i]).sin()).product::<f64>()
    }

    pub fn laplacian(&self, x: &Point, t: f64) -> f64 {
        -(self.dim as f64) * PI * PI * self.u(x, t)
    }
}

/// A nonlinearity paired with an exact solution; the source is
/// `u_t - lap u + F(grad u, u)`.
#[derive(Debug)]
pub struct ManufacturedProblem {
    pub name: String,
    pub exact: SineProduct,
    pub nonlinear: Box<dyn NonlinearTerm>,
}

impl ManufacturedProblem {
    pub fn dim(&self) -> usize {
        self.exact.dim
    }

    pub fn source(&self, x: &Point, t: f64) -> f64 {
        let e = &self.exact;
        e.u_t(x, t) - e.laplacian(x, t) + self.nonlinear.value(&e.grad(x, t), e.u(x, t))
    }

    pub fn initial(&self, x: &Point) -> f64 {
        self.exact.u(x, 0.0)
    }

    /// Exact flux `-grad u`.
    pub fn flux(&self, x: &Point, t: f64) -> [f64; 3] {
        let g = self.exact.grad(x, t);
        [-g[0], -g[1], -g[2]]
    }
}

/// Problems by command-line name: `allen_cahn` uses `sin t` in time, the
/// gradient-dependent ones decay like `exp(-t)`, and `zero` has `u = 0`.
pub fn manufactured(name: &str, dim: usize) -> Result<ManufacturedProblem> {
    if !(2..=3).contains(&dim) {
        return Err(HdgError::InvalidArgument(format!("dimension {dim} not in {{2, 3}}")));
    }
    let nonlinear = builtin(name)?;
    let profile = match name {
        "allen_cahn" => TimeProfile::Sine,
        "grad_squared" | "burgers" => TimeProfile::Decay,
        _ => TimeProfile::Zero,
    };
    Ok(ManufacturedProblem {
        name: name.to_string(),
        nonlinear,
        exact: SineProduct { dim, profile },
    })
}
