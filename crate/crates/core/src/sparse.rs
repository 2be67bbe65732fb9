//! Compressed sparse row matrices and a Jacobi-preconditioned conjugate
//! gradient solver for symmetric positive-definite systems.

use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {relative_residual:e})")]
    NotConverged {
        iterations: usize,
        relative_residual: f64,
    },
    #[error("conjugate gradient breakdown at iteration {iteration}: matrix is not positive definite")]
    Breakdown { iteration: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Row count above which matrix-vector products run in parallel.
const PARALLEL_ROWS: usize = 4096;

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Square `n x n` matrix from `(row, col, value)` triplets. Duplicates are
    /// summed in input order, so assembling `(i, j)` and `(j, i)` from the same
    /// sequence of contributions yields bitwise-symmetric entries.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            assert!(i < n && j < n, "triplet ({i}, {j}) outside {n}x{n} matrix");
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Builds a matrix from per-row `(col, value)` lists; each row is sorted by
    /// column and must not repeat columns.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        for mut row in rows {
            row.sort_unstable_by_key(|e| e.0);
            for (j, v) in row {
                assert!(j < n, "column {j} outside {n}x{n} matrix");
                col_idx.push(j);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix::from_rows((0..n).map(|i| vec![(i, 1.0)]).collect())
    }

    pub fn nrows(&self) -> usize {
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

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Largest `|A_ij - A_ji|` over stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v)))
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|e| e.1).sum()).collect()
    }

    fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .zip(&self.values[r])
            .map(|(&j, &v)| v * x[j])
            .sum()
    }

    /// `y = A x`.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        if self.n >= PARALLEL_ROWS {
            y.par_iter_mut()
                .enumerate()
                .for_each(|(i, yi)| *yi = self.row_dot(i, x));
        } else {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = self.row_dot(i, x);
            }
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// Applies Dirichlet constraints symmetrically: constrained rows and
    /// columns become identity, and the known column contributions move to
    /// the right-hand side, which receives the prescribed values on the
    /// constrained rows.
    pub fn apply_dirichlet(&mut self, rhs: &mut [f64], constrained: &[(usize, f64)]) {
        let mut value = vec![None; self.n];
        for &(i, v) in constrained {
            value[i] = Some(v);
        }
        for i in 0..self.n {
            let r = self.row_ptr[i]..self.row_ptr[i + 1];
            if let Some(vi) = value[i] {
                for k in r {
                    self.values[k] = if self.col_idx[k] == i { 1.0 } else { 0.0 };
                }
                rhs[i] = vi;
            } else {
                for k in r {
                    if let Some(vj) = value[self.col_idx[k]] {
                        rhs[i] -= self.values[k] * vj;
                        self.values[k] = 0.0;
                    }
                }
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgOptions {
    /// Stop when `||b - A x|| <= relative_tolerance * ||b||`.
    pub relative_tolerance: f64,
    /// `None` means `10 * n`.
    pub max_iterations: Option<usize>,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            relative_tolerance: 1e-12,
            max_iterations: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    /// Recursively updated residual norm at exit.
    pub residual_norm: f64,
    pub relative_residual: f64,
}

/// Solves `A x = b` with Jacobi-preconditioned CG, starting from `x`.
pub fn cg_solve(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    options: &CgOptions,
) -> Result<CgReport, SolverError> {
    let n = a.nrows();
    if b.len() != n || x.len() != n {
        return Err(SolverError::Dimension(format!(
            "matrix is {n}x{n}, rhs has {}, solution has {}",
            b.len(),
            x.len()
        )));
    }
    let max_iter = options.max_iterations.unwrap_or(10 * n.max(1));
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgReport {
            iterations: 0,
            residual_norm: 0.0,
            relative_residual: 0.0,
        });
    }
    let target = options.relative_tolerance * b_norm;

    let mut r = a.mul_vec(x);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut r_norm = dot(&r, &r).sqrt();
    let mut it = 0;
    while r_norm > target {
        if it == max_iter {
            return Err(SolverError::NotConverged {
                iterations: it,
                relative_residual: r_norm / b_norm,
            });
        }
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(SolverError::Breakdown { iteration: it });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        r_norm = dot(&r, &r).sqrt();
        it += 1;
    }
    Ok(CgReport {
        iterations: it,
        residual_norm: r_norm,
        relative_residual: r_norm / b_norm,
    })
}
