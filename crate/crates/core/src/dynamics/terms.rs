use crate::error::{BtnError, Result};
use crate::grid::{for_each_corner_gradient, ScalarField, VectorField2};

/// `|m|^{2(γ−1)}` from `|m|²`, evaluated as `exp((γ−1) ln |m|²)`.
///
/// The prefactor is exactly 1 for `γ = 1` (including at `m = 0`) and exactly
/// 0 at `m = 0` for `γ > 1`.
#[inline]
pub fn reaction_prefactor(m_sq: f64, gamma: f64) -> f64 {
    if gamma == 1.0 {
        1.0
    } else {
        ((gamma - 1.0) * m_sq.max(0.0).ln()).exp()
    }
}

/// Pointwise `|x|^{2(γ−1)} x` for a single vector.
#[inline]
pub fn reaction_vector(x: [f64; 2], gamma: f64) -> [f64; 2] {
    let f = reaction_prefactor(x[0] * x[0] + x[1] * x[1], gamma);
    [f * x[0], f * x[1]]
}

/// `(|x|^{2(γ−1)}x − |y|^{2(γ−1)}y)·(x − y)`.
pub fn monotonicity_lhs(x: [f64; 2], y: [f64; 2], gamma: f64) -> f64 {
    let (rx, ry) = (reaction_vector(x, gamma), reaction_vector(y, gamma));
    (rx[0] - ry[0]) * (x[0] - y[0]) + (rx[1] - ry[1]) * (x[1] - y[1])
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma >= 1.0 && gamma.is_finite()) {
        return Err(BtnError::validation(
            "gamma",
            format!("metabolic exponent must satisfy γ ≥ 1, got {gamma}"),
        ));
    }
    Ok(())
}

/// Relaxation term `|m|^{2(γ−1)} m`, node by node.
pub fn reaction(m: &VectorField2, gamma: f64) -> Result<VectorField2> {
    check_gamma(gamma)?;
    let g = *m.grid();
    let mut a = Vec::with_capacity(g.len());
    let mut b = Vec::with_capacity(g.len());
    for k in 0..g.len() {
        let (m1, m2) = m.at(k);
        let [r1, r2] = reaction_vector([m1, m2], gamma);
        a.push(r1);
        b.push(r2);
    }
    VectorField2::new(ScalarField::from_values(g, a)?, ScalarField::from_values(g, b)?)
}

/// Activation term `(m·∇p)∇p`.
///
/// At each interior node this averages `(m·g) g` over the four one-sided
/// gradients `g` that the corner quadrature pairs with the node, which makes
/// it the exact discrete derivative of `−½‖m·∇p‖²` at fixed `p` (the same
/// quadrature as the energy). For affine `p` every one-sided gradient equals
/// the central one. Boundary values are zero.
pub fn activation(m: &VectorField2, p: &ScalarField) -> Result<VectorField2> {
    let g = *m.grid();
    if !g.same_as(p.grid()) {
        return Err(BtnError::GridMismatch);
    }
    let mut a = vec![0.0; g.len()];
    let mut b = vec![0.0; g.len()];
    for_each_corner_gradient(p, |k, gx, gy| {
        let (m1, m2) = m.at(k);
        let s = m1 * gx + m2 * gy;
        a[k] += s * gx;
        b[k] += s * gy;
    });
    a.iter_mut().chain(b.iter_mut()).for_each(|v| *v *= 0.25);
    let mut out = VectorField2::new(
        ScalarField::from_values(g, a)?,
        ScalarField::from_values(g, b)?,
    )?;
    out.zero_boundary();
    Ok(out)
}

/// Brute-force estimate of `c_γ = inf (|x|^{2(γ−1)}x − |y|^{2(γ−1)}y)·(x−y) / |x−y|^{2γ}`.
///
/// Both sides are homogeneous of degree `2γ` and rotation invariant, so the
/// search fixes `x − y = (1, 0)` and scans `y` over `[−half_width, half_width]²`
/// on an `n × n` lattice, then zooms in on the best cell a few times.
pub fn convexity_constant(gamma: f64, half_width: f64, n: usize) -> f64 {
    let f = |y0: f64, y1: f64| monotonicity_lhs([y0 + 1.0, y1], [y0, y1], gamma);
    let (mut cx, mut cy, mut w) = (0.0, 0.0, half_width);
    let mut best = f64::INFINITY;
    for _ in 0..6 {
        let h = 2.0 * w / (n - 1) as f64;
        let (mut bx, mut by) = (cx, cy);
        for i in 0..n {
            let y0 = cx - w + i as f64 * h;
            for j in 0..n {
                let y1 = cy - w + j as f64 * h;
                let v = f(y0, y1);
                if v < best {
                    best = v;
                    bx = y0;
                    by = y1;
                }
            }
        }
        cx = bx;
        cy = by;
        w = 2.0 * h;
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{grad_sq, directional_grad_sq, integrate, Grid, random_smooth_vector_field};
    use crate::pressure::solve_pressure_direct;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn point_field(g: Grid, m: (f64, f64)) -> VectorField2 {
        let c = g.idx(2, 2);
        let mut a = vec![0.0; g.len()];
        let mut b = vec![0.0; g.len()];
        a[c] = m.0;
        b[c] = m.1;
        VectorField2::new(
            ScalarField::from_values(g, a).unwrap(),
            ScalarField::from_values(g, b).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn reaction_identity_at_gamma_one() {
        let g = Grid::unit_square(9).unwrap();
        let m = random_smooth_vector_field(g, &mut ChaCha8Rng::seed_from_u64(1), 3, 2.0);
        assert_eq!(reaction(&m, 1.0).unwrap(), m);
    }

    #[test]
    fn reaction_cubic_at_gamma_two() {
        let g = Grid::unit_square(5).unwrap();
        let r = reaction(&point_field(g, (3.0, 4.0)), 2.0).unwrap();
        let (a, b) = r.at(g.idx(2, 2));
        assert_relative_eq!(a, 75.0, max_relative = 1e-14);
        assert_relative_eq!(b, 100.0, max_relative = 1e-14);
        assert_eq!(r.at(g.idx(1, 1)), (0.0, 0.0));
    }

    #[test]
    fn reaction_matches_scalar_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = Grid::unit_square(11).unwrap();
        let m = random_smooth_vector_field(g, &mut rng, 4, 3.0);
        let r = reaction(&m, 1.5).unwrap();
        for k in 0..g.len() {
            let (m1, m2) = m.at(k);
            let norm = m1.hypot(m2);
            let (r1, r2) = r.at(k);
            assert_relative_eq!(r1, norm * m1, max_relative = 1e-12, epsilon = 1e-300);
            assert_relative_eq!(r2, norm * m2, max_relative = 1e-12, epsilon = 1e-300);
        }
    }

    #[test]
    fn reaction_rejects_small_gamma() {
        let g = Grid::unit_square(5).unwrap();
        let err = reaction(&VectorField2::zeros(g), 0.5).unwrap_err();
        assert!(err.to_string().contains("γ ≥ 1"));
    }

    #[test]
    fn activation_vanishes_for_zero_m_or_flat_p() {
        let g = Grid::unit_square(9).unwrap();
        let m = random_smooth_vector_field(g, &mut ChaCha8Rng::seed_from_u64(3), 3, 1.0);
        let p = ScalarField::from_fn(g, |x, y| x * y + x.sin()).unwrap();
        assert_eq!(activation(&VectorField2::zeros(g), &p).unwrap(), VectorField2::zeros(g));
        let flat = ScalarField::constant(g, 2.5).unwrap();
        assert_eq!(activation(&m, &flat).unwrap(), VectorField2::zeros(g));
    }

    #[test]
    fn activation_single_node_arithmetic() {
        let g = Grid::unit_square(5).unwrap();
        let m = point_field(g, (1.0, 0.0));
        let p = ScalarField::from_fn(g, |x, y| 2.0 * x + 3.0 * y).unwrap();
        let a = activation(&m, &p).unwrap();
        let (a1, a2) = a.at(g.idx(2, 2));
        assert_relative_eq!(a1, 4.0, max_relative = 1e-13);
        assert_relative_eq!(a2, 6.0, max_relative = 1e-13);
        assert!(a.is_boundary_zero());
    }

    // Interior nodes carry weight hx·hy, so the directional derivative of the
    // energy along v equals hx·hy Σ term·v.
    fn weighted_dot(a: &VectorField2, v: &VectorField2) -> f64 {
        let g = a.grid();
        let mut s = 0.0;
        for k in 0..g.len() {
            let (a1, a2) = a.at(k);
            let (v1, v2) = v.at(k);
            s += a1 * v1 + a2 * v2;
        }
        s * g.hx() * g.hy()
    }

    fn shifted(m: &VectorField2, v: &VectorField2, eps: f64) -> VectorField2 {
        VectorField2::new(
            m.c1().zip_map(v.c1(), |a, b| a + eps * b).unwrap(),
            m.c2().zip_map(v.c2(), |a, b| a + eps * b).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn activation_is_minus_gradient_of_pressure_energy() {
        let g = Grid::new(9, 8, 1.0, 0.9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random_smooth_vector_field(g, &mut rng, 3, 1.5);
        let v = random_smooth_vector_field(g, &mut rng, 3, 1.0);
        let s = ScalarField::from_fn(g, |x, y| 10.0 * (x - y) + 3.0).unwrap();
        let pe = |mm: &VectorField2| {
            let p = solve_pressure_direct(mm, &s).unwrap();
            0.5 * grad_sq(&p) + 0.5 * directional_grad_sq(mm, &p).unwrap()
        };
        let eps = 1e-5;
        let fd = (pe(&shifted(&m, &v, eps)) - pe(&shifted(&m, &v, -eps))) / (2.0 * eps);
        let p = solve_pressure_direct(&m, &s).unwrap();
        let analytic = -weighted_dot(&activation(&m, &p).unwrap(), &v);
        assert_relative_eq!(fd, analytic, max_relative = 1e-7);
    }

    #[test]
    fn reaction_is_gradient_of_relaxation_energy() {
        let g = Grid::unit_square(9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = random_smooth_vector_field(g, &mut rng, 3, 1.5);
        let v = random_smooth_vector_field(g, &mut rng, 3, 1.0);
        for gamma in [1.0, 1.5, 2.0] {
            let fe = |mm: &VectorField2| {
                integrate(&mm.c1().zip_map(mm.c2(), |a, b| (a * a + b * b).powf(gamma)).unwrap())
                    / (2.0 * gamma)
            };
            let eps = 1e-5;
            let fd = (fe(&shifted(&m, &v, eps)) - fe(&shifted(&m, &v, -eps))) / (2.0 * eps);
            let analytic = weighted_dot(&reaction(&m, gamma).unwrap(), &v);
            assert_relative_eq!(fd, analytic, max_relative = 1e-7);
        }
    }

    #[test]
    fn brute_force_constant_matches_closed_form() {
        for gamma in [1.0, 1.5, 2.0, 3.0] {
            let c = convexity_constant(gamma, 2.0, 81);
            assert_relative_eq!(c, 2f64.powf(2.0 - 2.0 * gamma), max_relative = 1e-9);
        }
    }

    proptest! {
        #[test]
        fn gamma_one_lhs_is_squared_distance(
            x0 in -10.0..10.0f64, x1 in -10.0..10.0f64,
            y0 in -10.0..10.0f64, y1 in -10.0..10.0f64,
        ) {
            let d2 = (x0 - y0).powi(2) + (x1 - y1).powi(2);
            let lhs = monotonicity_lhs([x0, x1], [y0, y1], 1.0);
            prop_assert!((lhs - d2).abs() <= 1e-12 * d2.max(1.0));
        }

        #[test]
        fn monotone_for_all_gamma(
            x0 in -5.0..5.0f64, x1 in -5.0..5.0f64,
            y0 in -5.0..5.0f64, y1 in -5.0..5.0f64,
            gamma in 1.0..3.0f64,
        ) {
            prop_assert!(monotonicity_lhs([x0, x1], [y0, y1], gamma) >= 0.0);
        }
    }
}
