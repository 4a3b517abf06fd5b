use super::{Grid, ScalarField, VectorField2};
use crate::error::{BtnError, Result};

/// Trapezoidal weight of node `(i, j)`: 1 inside, 1/2 on edges, 1/4 at corners.
#[inline]
pub fn trapezoid_weight(grid: &Grid, i: usize, j: usize) -> f64 {
    let wx = if i == 0 || i == grid.nx() - 1 { 0.5 } else { 1.0 };
    let wy = if j == 0 || j == grid.ny() - 1 { 0.5 } else { 1.0 };
    wx * wy
}

/// Trapezoidal quadrature of `f` over the rectangle.
pub fn integrate(f: &ScalarField) -> f64 {
    let g = f.grid();
    let mut sum = 0.0;
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            sum += trapezoid_weight(g, i, j) * f.get(i, j);
        }
    }
    sum * g.hx() * g.hy()
}

/// Nodal gradient: central differences inside, second-order one-sided
/// differences on the boundary.
pub fn gradient(f: &ScalarField) -> Result<VectorField2> {
    if f.values().iter().any(|v| !v.is_finite()) {
        return Err(BtnError::NonFinite("gradient input"));
    }
    let g = *f.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let (hx, hy) = (g.hx(), g.hy());
    let mut gx = vec![0.0; g.len()];
    let mut gy = vec![0.0; g.len()];
    for j in 0..ny {
        for i in 0..nx {
            let k = g.idx(i, j);
            gx[k] = if i == 0 {
                (-3.0 * f.get(0, j) + 4.0 * f.get(1, j) - f.get(2, j)) / (2.0 * hx)
            } else if i == nx - 1 {
                (3.0 * f.get(nx - 1, j) - 4.0 * f.get(nx - 2, j) + f.get(nx - 3, j)) / (2.0 * hx)
            } else {
                (f.get(i + 1, j) - f.get(i - 1, j)) / (2.0 * hx)
            };
            gy[k] = if j == 0 {
                (-3.0 * f.get(i, 0) + 4.0 * f.get(i, 1) - f.get(i, 2)) / (2.0 * hy)
            } else if j == ny - 1 {
                (3.0 * f.get(i, ny - 1) - 4.0 * f.get(i, ny - 2) + f.get(i, ny - 3)) / (2.0 * hy)
            } else {
                (f.get(i, j + 1) - f.get(i, j - 1)) / (2.0 * hy)
            };
        }
    }
    VectorField2::new(
        ScalarField::from_values(g, gx)?,
        ScalarField::from_values(g, gy)?,
    )
}

/// Five-point Laplacian of a boundary-zero field. Boundary nodes of the
/// result are zero.
pub fn laplacian_dirichlet(f: &ScalarField) -> Result<ScalarField> {
    if !f.is_boundary_zero() {
        return Err(BtnError::NotBoundaryZero("laplacian input"));
    }
    Ok(laplacian_interior(f))
}

pub(crate) fn laplacian_interior(f: &ScalarField) -> ScalarField {
    let g = *f.grid();
    let ihx2 = 1.0 / (g.hx() * g.hx());
    let ihy2 = 1.0 / (g.hy() * g.hy());
    let v = f.values();
    let nx = g.nx();
    let mut out = vec![0.0; g.len()];
    for j in 1..g.ny() - 1 {
        for i in 1..nx - 1 {
            let k = g.idx(i, j);
            out[k] = (v[k - 1] - 2.0 * v[k] + v[k + 1]) * ihx2
                + (v[k - nx] - 2.0 * v[k] + v[k + nx]) * ihy2;
        }
    }
    ScalarField::from_values_unchecked(g, out)
}

/// Visits every (cell, corner) pair with the corner's one-sided gradient.
///
/// In cell `[i, i+1] x [j, j+1]` the gradient at a corner is built from the
/// x-difference along the cell edge through that corner and the y-difference
/// along the other edge through it. Weighting each visit by `hx hy / 4`
/// gives the quadrature that all the energy-type integrals use; with unit
/// coefficients it is exactly the quadratic form of the five-point Laplacian.
pub fn for_each_corner_gradient(f: &ScalarField, mut visit: impl FnMut(usize, f64, f64)) {
    let g = f.grid();
    let (ihx, ihy) = (1.0 / g.hx(), 1.0 / g.hy());
    let v = f.values();
    for j in 0..g.ny() - 1 {
        for i in 0..g.nx() - 1 {
            let k00 = g.idx(i, j);
            let k10 = k00 + 1;
            let k01 = k00 + g.nx();
            let k11 = k01 + 1;
            let dx_bottom = (v[k10] - v[k00]) * ihx;
            let dx_top = (v[k11] - v[k01]) * ihx;
            let dy_left = (v[k01] - v[k00]) * ihy;
            let dy_right = (v[k11] - v[k10]) * ihy;
            visit(k00, dx_bottom, dy_left);
            visit(k10, dx_bottom, dy_right);
            visit(k01, dx_top, dy_left);
            visit(k11, dx_top, dy_right);
        }
    }
}

/// Discrete `∫ ∇f · ∇h`.
pub fn grad_inner(f: &ScalarField, h: &ScalarField) -> Result<f64> {
    if !f.grid().same_as(h.grid()) {
        return Err(BtnError::GridMismatch);
    }
    let mut fg = Vec::with_capacity(4 * f.grid().len());
    for_each_corner_gradient(f, |_, gx, gy| fg.push((gx, gy)));
    let mut sum = 0.0;
    let mut it = fg.into_iter();
    for_each_corner_gradient(h, |_, hx, hy| {
        let (gx, gy) = it.next().expect("same visit order");
        sum += gx * hx + gy * hy;
    });
    Ok(sum * 0.25 * f.grid().hx() * f.grid().hy())
}

/// Discrete `‖∇f‖²_{L²}`.
pub fn grad_sq(f: &ScalarField) -> f64 {
    let mut sum = 0.0;
    for_each_corner_gradient(f, |_, gx, gy| sum += gx * gx + gy * gy);
    sum * 0.25 * f.grid().hx() * f.grid().hy()
}

/// Discrete `‖m · ∇p‖²_{L²}`, with `m` sampled at the corner node.
pub fn directional_grad_sq(m: &VectorField2, p: &ScalarField) -> Result<f64> {
    if !m.grid().same_as(p.grid()) {
        return Err(BtnError::GridMismatch);
    }
    let mut sum = 0.0;
    for_each_corner_gradient(p, |k, gx, gy| {
        let (m1, m2) = m.at(k);
        let s = m1 * gx + m2 * gy;
        sum += s * s;
    });
    Ok(sum * 0.25 * p.grid().hx() * p.grid().hy())
}
