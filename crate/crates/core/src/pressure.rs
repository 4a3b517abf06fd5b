//! The Darcy-type pressure problem `-∇·[(I + m⊗m)∇p] = S`, `p = 0` on the
//! boundary.
//!
//! The operator is assembled cell by cell from the corner-gradient
//! quadrature of [`crate::grid::for_each_corner_gradient`]: in each cell and
//! at each of its four corners the tensor `I + m⊗m` is sampled at the corner
//! node and paired with the one-sided gradient through that corner. Along an
//! edge this is the same as averaging the diagonal tensor entries over the
//! edge's two end nodes, and with `m = 0` it reduces to the five-point
//! Laplacian. The cross terms couple diagonal neighbours, giving a symmetric
//! nine-point stencil. Matrix rows are divided by the nodal area `hx hy`, so
//! the right-hand side is just `S` sampled at interior nodes.

use crate::error::{BtnError, Result};
use crate::grid::{
    directional_grad_sq, grad_sq, integrate, Grid, ScalarField, VectorField2,
};
use crate::linalg::{default_max_iter, dense_spd_solve, pcg_jacobi, CsrMatrix};

/// Default relative residual for pressure solves.
pub const DEFAULT_CG_TOL: f64 = 1e-10;

/// Nodal entries of the symmetric permeability tensor `I + m⊗m`.
#[derive(Debug, Clone)]
pub struct PermeabilityField {
    grid: Grid,
    a11: Vec<f64>,
    a12: Vec<f64>,
    a22: Vec<f64>,
}

impl PermeabilityField {
    pub fn from_conductance(m: &VectorField2) -> Self {
        let n = m.grid().len();
        let (mut a11, mut a12, mut a22) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for k in 0..n {
            let (m1, m2) = m.at(k);
            a11.push(1.0 + m1 * m1);
            a12.push(m1 * m2);
            a22.push(1.0 + m2 * m2);
        }
        Self {
            grid: *m.grid(),
            a11,
            a12,
            a22,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn at(&self, k: usize) -> [f64; 3] {
        [self.a11[k], self.a12[k], self.a22[k]]
    }

    /// Smallest eigenvalue over all nodes; at least 1 up to rounding.
    pub fn min_eigenvalue(&self) -> f64 {
        (0..self.a11.len())
            .map(|k| {
                let [a, b, c] = self.at(k);
                let half_tr = 0.5 * (a + c);
                let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
                half_tr - disc
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Trace/determinant test of `I + m⊗m ⪰ I` at every node.
    pub fn dominates_identity(&self) -> bool {
        (0..self.a11.len()).all(|k| {
            let [a, b, c] = self.at(k);
            let det = a * c - b * b;
            a + c >= 2.0 && det >= 1.0 - 4.0 * f64::EPSILON * a * c
        })
    }
}

/// Assembled pressure operator over interior unknowns.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    grid: Grid,
    matrix: CsrMatrix,
}

impl SparseOperator {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CsrMatrix {
        self.matrix
    }

    /// `A p` for a boundary-zero field, as a boundary-zero field.
    pub fn apply(&self, p: &ScalarField) -> Result<ScalarField> {
        if !p.grid().same_as(&self.grid) {
            return Err(BtnError::GridMismatch);
        }
        ScalarField::from_interior(self.grid, &self.matrix.mul_vec(&p.interior_values()))
    }
}

// Local node order within a cell: (i,j), (i+1,j), (i,j+1), (i+1,j+1).
// For each corner: which local nodes define its x- and y-differences.
const CORNER_EDGES: [((usize, usize), (usize, usize)); 4] = [
    ((0, 1), (0, 2)),
    ((0, 1), (1, 3)),
    ((2, 3), (0, 2)),
    ((2, 3), (1, 3)),
];

fn check_conductance(m: &VectorField2) -> Result<()> {
    if m.c1().values().iter().chain(m.c2().values()).any(|v| !v.is_finite()) {
        return Err(BtnError::NonFinite("conductance"));
    }
    if !m.is_boundary_zero() {
        return Err(BtnError::NotBoundaryZero("conductance"));
    }
    Ok(())
}

pub fn assemble_pressure_operator(m: &VectorField2) -> Result<SparseOperator> {
    check_conductance(m)?;
    let grid = *m.grid();
    let perm = PermeabilityField::from_conductance(m);
    let (nx, ny) = (grid.nx(), grid.ny());
    let (ihx, ihy) = (1.0 / grid.hx(), 1.0 / grid.hy());

    // Nine stencil slots per interior row, slot = (dj+1)*3 + (di+1).
    let n = grid.interior_len();
    let mut slots = vec![[0.0f64; 9]; n];

    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let nodes = [(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)];
            let mut elem = [[0.0f64; 4]; 4];
            for (c, &((xa, xb), (ya, yb))) in CORNER_EDGES.iter().enumerate() {
                let (ci, cj) = nodes[c];
                let [k11, k12, k22] = perm.at(grid.idx(ci, cj));
                // Corner gradient rows as sparse coefficient lists.
                let gx = [(xa, -ihx), (xb, ihx)];
                let gy = [(ya, -ihy), (yb, ihy)];
                let mut add = |ra: &[(usize, f64); 2], rb: &[(usize, f64); 2], k: f64| {
                    for &(a, va) in ra {
                        for &(b, vb) in rb {
                            if a <= b {
                                elem[a][b] += 0.25 * k * va * vb;
                            }
                        }
                    }
                };
                add(&gx, &gx, k11);
                add(&gy, &gy, k22);
                add(&gx, &gy, k12);
                add(&gy, &gx, k12);
            }
            for a in 0..4 {
                let (ia, ja) = nodes[a];
                if grid.is_boundary(ia, ja) {
                    continue;
                }
                for b in a..4 {
                    let (ib, jb) = nodes[b];
                    if grid.is_boundary(ib, jb) {
                        continue;
                    }
                    let v = elem[a][b];
                    let slot_ab = (jb + 1 - ja) * 3 + (ib + 1 - ia);
                    slots[grid.interior_idx(ia, ja)][slot_ab] += v;
                    if a != b {
                        let slot_ba = (ja + 1 - jb) * 3 + (ia + 1 - ib);
                        slots[grid.interior_idx(ib, jb)][slot_ba] += v;
                    }
                }
            }
        }
    }

    let rows = (1..ny - 1)
        .flat_map(|j| (1..nx - 1).map(move |i| (i, j)))
        .map(|(i, j)| {
            let s = &slots[grid.interior_idx(i, j)];
            let mut row = Vec::with_capacity(9);
            for dj in 0..3 {
                for di in 0..3 {
                    let (ni, nj) = (i + di - 1, j + dj - 1);
                    if !grid.is_boundary(ni, nj) {
                        row.push((grid.interior_idx(ni, nj), s[dj * 3 + di]));
                    }
                }
            }
            row
        })
        .collect();

    Ok(SparseOperator {
        grid,
        matrix: CsrMatrix::from_rows(rows),
    })
}

/// The pressure operator with `m = 0`: the (negated) five-point Laplacian.
pub fn dirichlet_laplacian_operator(grid: Grid) -> SparseOperator {
    assemble_pressure_operator(&VectorField2::zeros(grid)).expect("zero conductance is valid")
}

#[derive(Debug, Clone)]
pub struct PressureSolution {
    pub p: ScalarField,
    pub iterations: usize,
    pub relative_residual: f64,
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(BtnError::validation("cg_tol", format!("must be positive, got {tol}")));
    }
    Ok(())
}

/// Solves with an already assembled operator, optionally warm-started.
pub fn solve_with_operator(
    op: &SparseOperator,
    source: &ScalarField,
    tol: f64,
    guess: Option<&ScalarField>,
) -> Result<PressureSolution> {
    check_tol(tol)?;
    if !source.grid().same_as(&op.grid) || guess.is_some_and(|g| !g.grid().same_as(&op.grid)) {
        return Err(BtnError::GridMismatch);
    }
    let b = source.interior_values();
    let x0 = guess.map(|g| g.interior_values());
    let n = op.grid.interior_len();
    let sol = pcg_jacobi(&op.matrix, &b, x0.as_deref(), tol, default_max_iter(n))?;
    Ok(PressureSolution {
        p: ScalarField::from_interior(op.grid, &sol.x)?,
        iterations: sol.iterations,
        relative_residual: sol.relative_residual,
    })
}

pub fn solve_pressure_from(
    m: &VectorField2,
    source: &ScalarField,
    tol: f64,
    guess: Option<&ScalarField>,
) -> Result<PressureSolution> {
    if !m.grid().same_as(source.grid()) {
        return Err(BtnError::GridMismatch);
    }
    let op = assemble_pressure_operator(m)?;
    solve_with_operator(&op, source, tol, guess)
}

/// Pressure for conductance `m` and source `S` to relative residual `tol`.
pub fn solve_pressure(m: &VectorField2, source: &ScalarField, tol: f64) -> Result<ScalarField> {
    Ok(solve_pressure_from(m, source, tol, None)?.p)
}

/// The semi-trivial pressure `p*∞`: `-Δp = S`, `p = 0` on the boundary.
pub fn solve_semi_trivial(source: &ScalarField, tol: f64) -> Result<ScalarField> {
    solve_pressure(&VectorField2::zeros(*source.grid()), source, tol)
}

/// Dense direct solve of the same discrete system (test oracle, small grids).
pub fn solve_pressure_direct(m: &VectorField2, source: &ScalarField) -> Result<ScalarField> {
    if !m.grid().same_as(source.grid()) {
        return Err(BtnError::GridMismatch);
    }
    let op = assemble_pressure_operator(m)?;
    let x = dense_spd_solve(&op.matrix, &source.interior_values())?;
    ScalarField::from_interior(op.grid, &x)
}

/// `|∫|∇p|² + ∫(m·∇p)² − ∫pS| / max(1, |∫pS|)` with the assembly's own
/// quadrature. Zero for the exact discrete solution up to rounding.
pub fn pressure_identity_residual(
    m: &VectorField2,
    p: &ScalarField,
    source: &ScalarField,
) -> Result<f64> {
    if !m.grid().same_as(p.grid()) || !p.grid().same_as(source.grid()) {
        return Err(BtnError::GridMismatch);
    }
    let lhs = grad_sq(p) + directional_grad_sq(m, p)?;
    let rhs = integrate(&p.zip_map(source, |a, b| a * b)?);
    Ok((lhs - rhs).abs() / rhs.abs().max(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{laplacian_dirichlet, random_smooth_vector_field};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn unit(n: usize) -> Grid {
        Grid::unit_square(n).unwrap()
    }

    fn sin_sin(g: Grid) -> ScalarField {
        ScalarField::from_fn_dirichlet(g, |x, y| (PI * x).sin() * (PI * y).sin()).unwrap()
    }

    fn gaussian_source(g: Grid) -> ScalarField {
        ScalarField::from_fn(g, |x, y| {
            20.0 * (-((x - 0.3).powi(2) + (y - 0.5).powi(2)) / 0.02).exp()
                - 20.0 * (-((x - 0.7).powi(2) + (y - 0.5).powi(2)) / 0.02).exp()
        })
        .unwrap()
    }

    #[test]
    fn permeability_dominates_identity() {
        let g = unit(9);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_smooth_vector_field(g, &mut rng, 3, 5.0);
        let perm = PermeabilityField::from_conductance(&m);
        assert!(perm.dominates_identity());
        assert!(perm.min_eigenvalue() >= 1.0 - 1e-12);
        let big = 1.0 + m.linf().powi(2);
        assert!((0..g.len()).all(|k| {
            let [a, _, c] = perm.at(k);
            a + c <= big + 1.0 + 1e-12
        }));
    }

    #[test]
    fn zero_conductance_gives_five_point_laplacian() {
        let g = Grid::new(7, 6, 1.0, 0.8).unwrap();
        let a = dirichlet_laplacian_operator(g);
        let n = g.interior_len();
        for col in 0..n {
            let mut e = vec![0.0; n];
            e[col] = 1.0;
            let f = ScalarField::from_interior(g, &e).unwrap();
            let lap = laplacian_dirichlet(&f).unwrap().interior_values();
            for row in 0..n {
                let want = -lap[row];
                let got = a.matrix().get(row, col);
                assert!((got - want).abs() <= 1e-13 * want.abs().max(1.0), "{row},{col}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn operator_is_exactly_symmetric() {
        let g = Grid::new(11, 9, 1.0, 1.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..4 {
            let m = random_smooth_vector_field(g, &mut rng, 4, 3.0);
            let op = assemble_pressure_operator(&m).unwrap();
            assert!(op.matrix().is_symmetric());
            assert!(op.matrix().nnz() <= 9 * g.interior_len());
        }
    }

    /// Independent route: evaluate the corner-quadrature bilinear form
    /// `∫(I + m⊗m)∇φ_i·∇φ_j` on nodal unit vectors by polarization.
    #[test]
    fn sparse_entries_match_dense_bilinear_form() {
        let g = unit(6);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random_smooth_vector_field(g, &mut rng, 2, 1.5);
        let op = assemble_pressure_operator(&m).unwrap();
        let n = g.interior_len();
        let basis = |k: usize| {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            e
        };
        let form = |u: &[f64]| {
            let f = ScalarField::from_interior(g, u).unwrap();
            grad_sq(&f) + directional_grad_sq(&m, &f).unwrap()
        };
        let area = g.hx() * g.hy();
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let (ei, ej) = (basis(i), basis(j));
                let plus: Vec<f64> = ei.iter().zip(&ej).map(|(a, b)| a + b).collect();
                let minus: Vec<f64> = ei.iter().zip(&ej).map(|(a, b)| a - b).collect();
                dense[i][j] = (form(&plus) - form(&minus)) / (4.0 * area);
            }
        }
        let scale = dense.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
        for i in 0..n {
            for j in 0..n {
                let d = (dense[i][j] - op.matrix().get(i, j)).abs();
                assert!(d <= 1e-12 * scale, "({i},{j}) {} vs {}", dense[i][j], op.matrix().get(i, j));
            }
        }
    }

    #[test]
    fn operator_dominates_laplacian() {
        let g = unit(13);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_smooth_vector_field(g, &mut rng, 3, 2.0);
        let a = assemble_pressure_operator(&m).unwrap();
        let l = dirichlet_laplacian_operator(g);
        for _ in 0..20 {
            let x: Vec<f64> = (0..g.interior_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let xax: f64 = x.iter().zip(a.matrix().mul_vec(&x)).map(|(a, b)| a * b).sum();
            let xlx: f64 = x.iter().zip(l.matrix().mul_vec(&x)).map(|(a, b)| a * b).sum();
            assert!(xlx > 0.0);
            assert!(xax >= xlx * (1.0 - 1e-12));
        }
    }

    #[test]
    fn homogeneous_problem_has_zero_solution() {
        let g = unit(9);
        let m = random_smooth_vector_field(g, &mut ChaCha8Rng::seed_from_u64(0), 2, 1.0);
        let p = solve_pressure(&m, &ScalarField::zeros(g), 1e-10).unwrap();
        assert_eq!(p.linf(), 0.0);
        assert_eq!(solve_semi_trivial(&ScalarField::zeros(g), 1e-10).unwrap().linf(), 0.0);
    }

    fn poisson_error(n: usize) -> f64 {
        let g = unit(n);
        let s = ScalarField::from_fn(g, |x, y| 2.0 * PI * PI * (PI * x).sin() * (PI * y).sin()).unwrap();
        let p = solve_semi_trivial(&s, 1e-12).unwrap();
        p.sub(&sin_sin(g)).unwrap().linf()
    }

    #[test]
    fn poisson_converges_second_order() {
        let (e33, e65) = (poisson_error(33), poisson_error(65));
        assert!(e33 < 2e-3);
        let order = (e33 / e65).log2();
        assert!((1.8..=2.2).contains(&order), "order {order}");
    }

    #[test]
    fn discrete_manufactured_solution_recovered() {
        let g = unit(33);
        let p_star = sin_sin(g);
        let half = sin_sin(g).map(|v| 0.5 * v).unwrap();
        let m = VectorField2::new(half, ScalarField::zeros(g)).unwrap();
        let op = assemble_pressure_operator(&m).unwrap();
        let s = op.apply(&p_star).unwrap();
        let p = solve_pressure(&m, &s, 1e-12).unwrap();
        assert!(p.sub(&p_star).unwrap().linf() < 1e-9);
    }

    #[test]
    fn semi_trivial_is_pressure_with_zero_conductance() {
        let g = unit(17);
        let s = gaussian_source(g);
        let a = solve_pressure(&VectorField2::zeros(g), &s, 1e-10).unwrap();
        let b = solve_semi_trivial(&s, 1e-10).unwrap();
        assert!(a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn identity_residual_with_direct_solve() {
        let g = unit(8);
        let s = gaussian_source(g);
        let p = solve_pressure_direct(&VectorField2::zeros(g), &s).unwrap();
        assert!(pressure_identity_residual(&VectorField2::zeros(g), &p, &s).unwrap() <= 1e-12);

        let m = random_smooth_vector_field(g, &mut ChaCha8Rng::seed_from_u64(9), 2, 2.0);
        let p = solve_pressure_direct(&m, &s).unwrap();
        assert!(pressure_identity_residual(&m, &p, &s).unwrap() <= 1e-12);

        let z = ScalarField::zeros(g);
        assert_eq!(pressure_identity_residual(&m, &z, &z).unwrap(), 0.0);
    }

    #[test]
    fn identity_residual_with_iterative_solve() {
        let g = unit(33);
        let s = gaussian_source(g);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..3 {
            let m = random_smooth_vector_field(g, &mut rng, 3, 1.0);
            let p = solve_pressure(&m, &s, 1e-10).unwrap();
            let r = pressure_identity_residual(&m, &p, &s).unwrap();
            assert!(r <= 1e-9, "{r}");
            // ‖∇p‖² + ‖m·∇p‖² ≤ ∫pS + 10 tol
            let lhs = grad_sq(&p) + directional_grad_sq(&m, &p).unwrap();
            let rhs = integrate(&p.zip_map(&s, |a, b| a * b).unwrap());
            assert!(lhs <= rhs + 10.0 * 1e-10 * rhs.abs().max(1.0));
        }
    }

    #[test]
    fn poisson_norm_identity() {
        // m = 0: ‖∇p‖² = ∫pS.
        let g = unit(33);
        let s = gaussian_source(g);
        let p = solve_semi_trivial(&s, 1e-10).unwrap();
        let n = crate::grid::norm_suite(&VectorField2::zeros(g), &p, &s, 1.0).unwrap();
        assert_eq!(n.mgradp_l2sq, 0.0);
        assert!((n.grad_p_l2sq - n.p_source).abs() <= 1e-9 * n.p_source);
    }

    #[test]
    fn invalid_inputs() {
        let g = unit(5);
        let s = ScalarField::constant(g, 1.0).unwrap();
        let m = VectorField2::zeros(g);
        assert!(solve_pressure(&m, &s, 0.0).is_err());
        assert!(solve_pressure(&m, &s, f64::NAN).is_err());
        let bad = VectorField2::new(ScalarField::constant(g, 1.0).unwrap(), ScalarField::zeros(g)).unwrap();
        assert!(matches!(assemble_pressure_operator(&bad), Err(BtnError::NotBoundaryZero(_))));
        let other = ScalarField::zeros(unit(6));
        assert!(matches!(solve_pressure(&m, &other, 1e-8), Err(BtnError::GridMismatch)));
    }
}
