use crate::analysis::{convergence_orders, l2_error_scalar, LevelErrors};
use crate::checks::condensation_gap;
use crate::mesh::build_structured_mesh;
use crate::polybasis::{nodal_basis, simplex_quadrature, Point};
use crate::spaces::{interpolate_elementwise, Discretization};
use proptest::prelude::*;

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Integral of `x^a y^b z^c` over the unit simplex of dimension `dim`.
fn simplex_moment(e: [usize; 3], dim: usize) -> f64 {
    let num: f64 = e.iter().map(|&p| factorial(p)).product();
    num / factorial(e[0] + e[1] + e[2] + dim)
}

fn point_in_simplex(dim: usize, raw: [f64; 3]) -> Point {
    let mut p = [0.0; 3];
    let mut left = 1.0;
    for i in 0..dim {
        p[i] = raw[i] * left;
        left -= p[i];
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mesh_tiles_the_unit_cube(dim in 2usize..=3, n in 1usize..=5) {
        let m = build_structured_mesh(dim, n).unwrap();
        let total: f64 = (0..m.num_elements()).map(|e| m.element_volume(e)).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        let per_cell = if dim == 2 { 4 } else { 6 };
        prop_assert_eq!(m.num_elements(), per_cell * n.pow(dim as u32));
    }

    #[test]
    fn basis_is_a_partition_of_unity(
        dim in 2usize..=3,
        k in 0usize..=3,
        raw in prop::array::uniform3(0.0f64..1.0),
    ) {
        let b = nodal_basis(k, dim).unwrap();
        let x = point_in_simplex(dim, raw);
        let mut v = vec![0.0; b.len()];
        b.values_at(&x, &mut v);
        prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut g = vec![[0.0; 3]; b.len()];
        b.gradients_at(&x, &mut g);
        for s in 0..dim {
            prop_assert!(g.iter().map(|gi| gi[s]).sum::<f64>().abs() < 1e-10);
        }
    }

    #[test]
    fn quadrature_integrates_monomials(
        dim in 2usize..=3,
        degree in 0usize..=12,
        split in prop::array::uniform3(0.0f64..1.0),
    ) {
        let rule = simplex_quadrature(degree, dim).unwrap();
        // a random monomial of total degree exactly `degree`
        let a = (split[0] * (degree + 1) as f64) as usize;
        let a = a.min(degree);
        let b = if dim == 3 {
            ((split[1] * (degree - a + 1) as f64) as usize).min(degree - a)
        } else {
            degree - a
        };
        let c = if dim == 3 { degree - a - b } else { 0 };
        let e = [a, b, c];
        let got = rule.integrate(|x| x[0].powi(a as i32) * x[1].powi(b as i32) * x[2].powi(c as i32));
        let want = simplex_moment(e, dim);
        prop_assert!((got - want).abs() <= 1e-13 * want.max(1e-3), "{e:?}: {got} vs {want}");
    }

    #[test]
    fn interpolation_reproduces_global_polynomials(
        k in 0usize..=2,
        n in 1usize..=4,
        coeffs in prop::array::uniform6(-2.0f64..2.0),
    ) {
        let d = Discretization::new(build_structured_mesh(2, n).unwrap(), k).unwrap();
        let p = move |x: &Point| match k {
            0 => coeffs[0],
            1 => coeffs[0] + coeffs[1] * x[0] + coeffs[2] * x[1],
            _ => coeffs[0] + coeffs[1] * x[0] + coeffs[2] * x[1]
                + coeffs[3] * x[0] * x[0] + coeffs[4] * x[0] * x[1] + coeffs[5] * x[1] * x[1],
        };
        let c = interpolate_elementwise(&d, p);
        prop_assert!(l2_error_scalar(&d, &c.coeffs, p).unwrap() < 1e-12);
    }

    #[test]
    fn orders_recover_power_laws(
        p in 0.5f64..4.0,
        cq in 0.01f64..100.0,
        cu in 0.01f64..100.0,
        levels in 2usize..=5,
    ) {
        let errs: Vec<LevelErrors> = (0..levels)
            .map(|i| {
                let h = 0.5f64.powi(i as i32 + 1);
                LevelErrors { elements: 0, h, err_q: cq * h.powf(p), err_u: cu * h.powf(p + 0.5) }
            })
            .collect();
        let r = convergence_orders(1, &errs).unwrap();
        for lv in &r.levels[1..] {
            prop_assert!((lv.order_q.unwrap() - p).abs() < 1e-9);
            prop_assert!((lv.order_u.unwrap() - p - 0.5).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn condensed_solve_matches_dense_oracle(seed in any::<u64>()) {
        let gap = condensation_gap(seed, false).unwrap();
        prop_assert!(gap <= 1e-9, "gap {gap:e}");
    }
}
