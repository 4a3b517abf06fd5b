//! Compressed-row sparse matrices and the Jacobi-preconditioned conjugate
//! gradient solver used for every symmetric positive definite system in the
//! crate, plus a dense Cholesky path kept as a test oracle.

use nalgebra::{DMatrix, DVector};

use crate::error::{BtnError, CgFailure, Result};

/// Largest system the dense oracle path will factor.
pub const DENSE_LIMIT: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(column, value)` lists. Columns within a row
    /// must be strictly increasing.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in rows {
            debug_assert!(row.windows(2).all(|w| w[0].0 < w[1].0));
            for (c, v) in row {
                debug_assert!(c < n);
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_rows((0..n).map(|i| vec![(i, 1.0)]).collect())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    /// Stored value at `(i, j)`, zero when outside the pattern.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(pos) => self.values[r.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yi = acc;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// Exact (bitwise) symmetry of the stored entries.
    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| self.get(j, i).to_bits() == v.to_bits()))
    }

    /// `alpha * self + beta * I`, same sparsity pattern plus the diagonal.
    pub fn scaled_plus_identity(&self, alpha: f64, beta: f64) -> Self {
        let rows = (0..self.n)
            .map(|i| {
                let mut row: Vec<(usize, f64)> = self.row(i).map(|(j, v)| (j, alpha * v)).collect();
                match row.binary_search_by_key(&i, |e| e.0) {
                    Ok(p) => row[p].1 += beta,
                    Err(p) => row.insert(p, (i, beta)),
                }
                row
            })
            .collect();
        Self::from_rows(rows)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                d[(i, j)] = v;
            }
        }
        d
    }
}

#[derive(Debug, Clone)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final relative residual `‖b - A x‖ / ‖b‖`.
    pub relative_residual: f64,
}

/// Iteration cap `ceil(20 sqrt(N))`.
pub fn default_max_iter(n: usize) -> usize {
    (20.0 * (n as f64).sqrt()).ceil().max(20.0) as usize
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradients for SPD `a`, stopping once
/// `‖b - A x‖₂ ≤ tol ‖b‖₂`. A zero right-hand side returns exactly zero.
pub fn pcg_jacobi(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<CgSolution, CgFailure> {
    let n = a.dim();
    assert_eq!(b.len(), n, "right-hand side length");
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok(CgSolution {
            x: vec![0.0; n],
            iterations: 0,
            relative_residual: 0.0,
        });
    }

    let inv_diag: Vec<f64> = a.diagonal().iter().map(|d| 1.0 / d).collect();
    let mut x = match x0 {
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    let mut r = b.to_vec();
    if x0.is_some() {
        let ax = a.mul_vec(&x);
        r.iter_mut().zip(&ax).for_each(|(ri, axi)| *ri -= axi);
    }
    let mut rel = dot(&r, &r).sqrt() / b_norm;
    let mut history = vec![rel];
    if rel <= tol {
        return Ok(CgSolution {
            x,
            iterations: 0,
            relative_residual: rel,
        });
    }

    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        a.mul_vec_into(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        rel = dot(&r, &r).sqrt() / b_norm;
        history.push(rel);
        if rel <= tol {
            return Ok(CgSolution {
                x,
                iterations: it,
                relative_residual: rel,
            });
        }
        if !rel.is_finite() {
            break;
        }
        for k in 0..n {
            z[k] = r[k] * inv_diag[k];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(CgFailure {
        tol,
        iterations: history.len() - 1,
        residual_history: history,
    })
}

/// Dense Cholesky solve; refuses systems above [`DENSE_LIMIT`] unknowns.
pub fn dense_spd_solve(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if a.dim() > DENSE_LIMIT {
        return Err(BtnError::validation(
            "dense solve",
            format!("{} unknowns exceeds the limit {DENSE_LIMIT}", a.dim()),
        ));
    }
    let chol = a
        .to_dense()
        .cholesky()
        .ok_or_else(|| BtnError::validation("dense solve", "matrix is not positive definite"))?;
    Ok(chol.solve(&DVector::from_column_slice(b)).iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize) -> CsrMatrix {
        CsrMatrix::from_rows(
            (0..n)
                .map(|i| {
                    let mut row = Vec::new();
                    if i > 0 {
                        row.push((i - 1, -1.0));
                    }
                    row.push((i, 2.0 + i as f64 * 0.1));
                    if i + 1 < n {
                        row.push((i + 1, -1.0));
                    }
                    row
                })
                .collect(),
        )
    }

    #[test]
    fn cg_matches_dense() {
        let a = tridiag(40);
        let b: Vec<f64> = (0..40).map(|i| (i as f64 * 0.3).sin()).collect();
        let cg = pcg_jacobi(&a, &b, None, 1e-13, 200).unwrap();
        let direct = dense_spd_solve(&a, &b).unwrap();
        for (x, y) in cg.x.iter().zip(&direct) {
            assert!((x - y).abs() < 1e-10);
        }
        assert!(cg.relative_residual <= 1e-13);
    }

    #[test]
    fn zero_rhs_is_exact_zero() {
        let a = tridiag(5);
        let s = pcg_jacobi(&a, &[0.0; 5], Some(&[1.0; 5]), 1e-10, 10).unwrap();
        assert_eq!(s.x, vec![0.0; 5]);
        assert_eq!(s.iterations, 0);
    }

    #[test]
    fn failure_carries_history() {
        let a = tridiag(50);
        let b = vec![1.0; 50];
        let err = pcg_jacobi(&a, &b, None, 1e-14, 3).unwrap_err();
        assert_eq!(err.iterations, 3);
        assert_eq!(err.residual_history.len(), 4);
        assert_eq!(err.residual_history[0], 1.0);
    }

    #[test]
    fn warm_start_at_solution_returns_immediately() {
        let a = tridiag(10);
        let b = vec![1.0; 10];
        let x = pcg_jacobi(&a, &b, None, 1e-14, 100).unwrap().x;
        let again = pcg_jacobi(&a, &b, Some(&x), 1e-10, 100).unwrap();
        assert_eq!(again.iterations, 0);
        assert_eq!(again.x, x);
    }

    #[test]
    fn pattern_helpers() {
        let a = tridiag(4);
        assert!(a.is_symmetric());
        assert_eq!(a.get(0, 3), 0.0);
        let m = a.scaled_plus_identity(2.0, 1.0);
        assert_eq!(m.get(1, 1), 2.0 * 2.1 + 1.0);
        assert_eq!(m.get(1, 2), -2.0);
        assert!(dense_spd_solve(&CsrMatrix::identity(DENSE_LIMIT + 1), &vec![0.0; DENSE_LIMIT + 1]).is_err());
    }
}
