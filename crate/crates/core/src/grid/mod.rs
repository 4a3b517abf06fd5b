//! Uniform node-centred lattice on a rectangle `[0, lx] x [0, ly]` and the
//! nodal fields that live on it.
//!
//! Nodes are stored row-major with `x` varying fastest: node `(i, j)` sits at
//! `(i * hx, j * hy)` and has flat index `j * nx + i`. Fields that carry
//! homogeneous Dirichlet data (pressure, conductance, test functions) hold an
//! exact `0.0` on every boundary node.

mod norms;
mod ops;
pub mod snapshot;

pub use norms::{norm_suite, NormSample};
pub use ops::{
    directional_grad_sq, for_each_corner_gradient, grad_inner, grad_sq, gradient, integrate,
    laplacian_dirichlet, trapezoid_weight,
};
pub(crate) use ops::laplacian_interior;

use rand::Rng;

use crate::error::{BtnError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    hx: f64,
    hy: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(BtnError::validation(
                "grid",
                format!("need at least 3 nodes per axis, got {nx}x{ny}"),
            ));
        }
        if !(lx.is_finite() && lx > 0.0 && ly.is_finite() && ly > 0.0) {
            return Err(BtnError::validation(
                "grid",
                format!("side lengths must be positive and finite, got {lx} x {ly}"),
            ));
        }
        let hx = lx / (nx - 1) as f64;
        let hy = ly / (ny - 1) as f64;
        // Spacing times cell count must reproduce the side length to rounding.
        for (h, n, l) in [(hx, nx, lx), (hy, ny, ly)] {
            if (h * (n - 1) as f64 - l).abs() > 4.0 * f64::EPSILON * l {
                return Err(BtnError::validation(
                    "grid",
                    format!("spacing {h} does not tile length {l}"),
                ));
            }
        }
        Ok(Self {
            nx,
            ny,
            lx,
            ly,
            hx,
            hy,
        })
    }

    /// `n x n` nodes on the unit square.
    pub fn unit_square(n: usize) -> Result<Self> {
        Self::new(n, n, 1.0, 1.0)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn lx(&self) -> f64 {
        self.lx
    }
    pub fn ly(&self) -> f64 {
        self.ly
    }
    pub fn hx(&self) -> f64 {
        self.hx
    }
    pub fn hy(&self) -> f64 {
        self.hy
    }

    /// Total node count.
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn interior_len(&self) -> usize {
        (self.nx - 2) * (self.ny - 2)
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.hx
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.hy
    }

    #[inline]
    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.nx - 1 || j == self.ny - 1
    }

    /// Flat index of interior node `(i, j)` in the unknown vector of the
    /// Dirichlet problems (interior nodes only, `x` fastest).
    #[inline]
    pub fn interior_idx(&self, i: usize, j: usize) -> usize {
        (j - 1) * (self.nx - 2) + (i - 1)
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self == other
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: Grid, value: f64) -> Result<Self> {
        Self::from_values(grid, vec![value; grid.len()])
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(BtnError::validation(
                "field",
                format!("expected {} values, got {}", grid.len(), values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(BtnError::NonFinite("field"));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f(x, y)` at every node.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                values.push(f(grid.x(i), grid.y(j)));
            }
        }
        Self::from_values(grid, values)
    }

    /// Samples `f` at interior nodes and writes exact zeros on the boundary.
    pub fn from_fn_dirichlet(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut field = Self::from_fn(grid, f)?;
        field.zero_boundary();
        Ok(field)
    }

    pub(crate) fn from_values_unchecked(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    pub fn zero_boundary(&mut self) {
        let g = self.grid;
        for i in 0..g.nx {
            self.values[g.idx(i, 0)] = 0.0;
            self.values[g.idx(i, g.ny - 1)] = 0.0;
        }
        for j in 0..g.ny {
            self.values[g.idx(0, j)] = 0.0;
            self.values[g.idx(g.nx - 1, j)] = 0.0;
        }
    }

    /// True when every boundary node holds exactly zero.
    pub fn is_boundary_zero(&self) -> bool {
        let g = self.grid;
        (0..g.nx).all(|i| self.get(i, 0) == 0.0 && self.get(i, g.ny - 1) == 0.0)
            && (0..g.ny).all(|j| self.get(0, j) == 0.0 && self.get(g.nx - 1, j) == 0.0)
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if !self.grid.same_as(&other.grid) {
            return Err(BtnError::GridMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self::from_values(self.grid, values)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_values(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn sub(&self, other: &ScalarField) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    /// Values at interior nodes, in [`Grid::interior_idx`] order.
    pub fn interior_values(&self) -> Vec<f64> {
        let g = self.grid;
        let mut out = Vec::with_capacity(g.interior_len());
        for j in 1..g.ny - 1 {
            out.extend_from_slice(&self.values[g.idx(1, j)..=g.idx(g.nx - 2, j)]);
        }
        out
    }

    /// Inverse of [`ScalarField::interior_values`]; boundary set to zero.
    pub fn from_interior(grid: Grid, interior: &[f64]) -> Result<Self> {
        if interior.len() != grid.interior_len() {
            return Err(BtnError::validation(
                "field",
                format!(
                    "expected {} interior values, got {}",
                    grid.interior_len(),
                    interior.len()
                ),
            ));
        }
        let mut values = vec![0.0; grid.len()];
        let w = grid.nx - 2;
        for (row, chunk) in interior.chunks_exact(w).enumerate() {
            let start = grid.idx(1, row + 1);
            values[start..start + w].copy_from_slice(chunk);
        }
        Self::from_values(grid, values)
    }

    /// Storage transposed: node `(i, j)` moves to `(j, i)`.
    pub fn transposed(&self) -> Result<Self> {
        let g = self.grid;
        let tg = Grid::new(g.ny, g.nx, g.ly, g.lx)?;
        let mut values = vec![0.0; g.len()];
        for j in 0..g.ny {
            for i in 0..g.nx {
                values[tg.idx(j, i)] = self.get(i, j);
            }
        }
        Ok(Self::from_values_unchecked(tg, values))
    }
}

/// Two scalar components on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField2 {
    c1: ScalarField,
    c2: ScalarField,
}

impl VectorField2 {
    pub fn new(c1: ScalarField, c2: ScalarField) -> Result<Self> {
        if !c1.grid.same_as(&c2.grid) {
            return Err(BtnError::GridMismatch);
        }
        Ok(Self { c1, c2 })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            c1: ScalarField::zeros(grid),
            c2: ScalarField::zeros(grid),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.c1.grid()
    }

    pub fn c1(&self) -> &ScalarField {
        &self.c1
    }

    pub fn c2(&self) -> &ScalarField {
        &self.c2
    }

    pub fn into_components(self) -> (ScalarField, ScalarField) {
        (self.c1, self.c2)
    }

    #[inline]
    pub fn at(&self, k: usize) -> (f64, f64) {
        (self.c1.values[k], self.c2.values[k])
    }

    pub fn is_boundary_zero(&self) -> bool {
        self.c1.is_boundary_zero() && self.c2.is_boundary_zero()
    }

    pub fn zero_boundary(&mut self) {
        self.c1.zero_boundary();
        self.c2.zero_boundary();
    }

    /// `max |m|` over all nodes (Euclidean magnitude per node).
    pub fn linf(&self) -> f64 {
        self.c1
            .values
            .iter()
            .zip(&self.c2.values)
            .fold(0.0, |acc, (a, b)| acc.max(a.hypot(*b)))
    }

    pub fn sub(&self, other: &VectorField2) -> Result<Self> {
        Self::new(self.c1.sub(&other.c1)?, self.c2.sub(&other.c2)?)
    }

    /// Discrete `‖m‖²_{L²}` by trapezoidal quadrature.
    pub fn l2_sq(&self) -> f64 {
        integrate(&self.c1.map(|v| v * v).expect("finite"))
            + integrate(&self.c2.map(|v| v * v).expect("finite"))
    }

    /// Transposed storage with the components swapped, so a field symmetric
    /// under `x <-> y` maps to itself.
    pub fn transposed(&self) -> Result<Self> {
        Self::new(self.c2.transposed()?, self.c1.transposed()?)
    }
}

/// Random smooth scalar field with exact zero boundary values: a sine series
/// with modes up to `max_mode` per axis and coefficients decaying like
/// `1/(k l)`, scaled so the largest coefficient magnitude is `amplitude`.
pub fn random_smooth_field<R: Rng + ?Sized>(
    grid: Grid,
    rng: &mut R,
    max_mode: usize,
    amplitude: f64,
) -> ScalarField {
    let modes: Vec<(f64, f64, f64)> = (1..=max_mode)
        .flat_map(|k| (1..=max_mode).map(move |l| (k, l)))
        .map(|(k, l)| {
            let c = rng.gen_range(-1.0..=1.0) * amplitude / (k * l) as f64;
            (k as f64, l as f64, c)
        })
        .collect();
    let (lx, ly) = (grid.lx, grid.ly);
    ScalarField::from_fn_dirichlet(grid, |x, y| {
        modes
            .iter()
            .map(|&(k, l, c)| {
                c * (k * std::f64::consts::PI * x / lx).sin()
                    * (l * std::f64::consts::PI * y / ly).sin()
            })
            .sum()
    })
    .expect("sine series is finite")
}

pub fn random_smooth_vector_field<R: Rng + ?Sized>(
    grid: Grid,
    rng: &mut R,
    max_mode: usize,
    amplitude: f64,
) -> VectorField2 {
    let c1 = random_smooth_field(grid, rng, max_mode, amplitude);
    let c2 = random_smooth_field(grid, rng, max_mode, amplitude);
    VectorField2::new(c1, c2).expect("same grid")
}
