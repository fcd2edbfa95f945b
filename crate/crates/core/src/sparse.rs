//! Compressed sparse row matrices and the linear solvers used by the scheme:
//! restarted GMRES with ILU(0) right preconditioning, and a dense LU fallback
//! for small systems.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Zero matrix with the given sparsity pattern. Column lists are sorted
    /// and deduplicated.
    pub fn from_pattern(nrows: usize, ncols: usize, mut rows: Vec<Vec<usize>>) -> Self {
        assert_eq!(rows.len(), nrows);
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in rows.iter_mut() {
            row.sort_unstable();
            row.dedup();
            debug_assert!(row.last().is_none_or(|&c| c < ncols));
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        let values = vec![0.0; col_idx.len()];
        CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Build from (row, col, value) triplets; duplicates are summed in input order.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows = vec![Vec::new(); nrows];
        for &(r, c, _) in triplets {
            rows[r].push(c);
        }
        let mut m = Self::from_pattern(nrows, ncols, rows);
        for &(r, c, v) in triplets {
            m.add(r, c, v);
        }
        m
    }

    /// Assemble from raw CSR arrays. Column indices must be sorted within rows.
    pub fn from_raw(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_ptr.len() != nrows + 1
            || row_ptr[0] != 0
            || row_ptr[nrows] != col_idx.len()
            || col_idx.len() != values.len()
        {
            return Err(Error::Mismatch("inconsistent CSR arrays".into()));
        }
        for r in 0..nrows {
            let cols = &col_idx[row_ptr[r]..row_ptr[r + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) || cols.last().is_some_and(|&c| c >= ncols) {
                return Err(Error::Mismatch(format!(
                    "row {r} has unsorted or out-of-range columns"
                )));
            }
        }
        Ok(CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        CsrMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    fn position(&self, r: usize, c: usize) -> Option<usize> {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.col_idx[a..b].binary_search(&c).ok().map(|p| a + p)
    }

    /// Entry (r, c), zero if outside the pattern.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.position(r, c).map_or(0.0, |p| self.values[p])
    }

    /// Add `v` to entry (r, c). Panics if (r, c) is not in the pattern.
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        let p = self
            .position(r, c)
            .unwrap_or_else(|| panic!("entry ({r}, {c}) not in sparsity pattern"));
        self.values[p] += v;
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        for (r, yr) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            *yr = cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum();
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.iter() {
            d[(r, c)] += v;
        }
        d
    }

    /// Largest |A_ij − A_ji| over the pattern.
    pub fn symmetry_defect(&self) -> f64 {
        self.iter()
            .map(|(r, c, v)| (v - self.get(c, r)).abs())
            .fold(0.0, f64::max)
    }
}

/// Incomplete LU factorization with zero fill-in, stored on the pattern of A.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    lu: CsrMatrix,
    diag_pos: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(Error::Mismatch("ILU(0) requires a square matrix".into()));
        }
        let n = a.nrows;
        let mut lu = a.clone();
        let mut diag_pos = Vec::with_capacity(n);
        for i in 0..n {
            diag_pos.push(lu.position(i, i).ok_or_else(|| {
                Error::InvalidArgument(format!("ILU(0): missing diagonal in row {i}"))
            })?);
        }
        for i in 0..n {
            let (start, end) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for p in start..end {
                let k = lu.col_idx[p];
                if k >= i {
                    break;
                }
                let pivot = lu.values[diag_pos[k]];
                if pivot == 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "ILU(0): zero pivot in row {k}"
                    )));
                }
                let lik = lu.values[p] / pivot;
                lu.values[p] = lik;
                // row_i[j] -= l_ik * row_k[j] for j > k present in both patterns
                let (ks, ke) = (diag_pos[k] + 1, lu.row_ptr[k + 1]);
                let mut q = p + 1;
                for r in ks..ke {
                    let j = lu.col_idx[r];
                    while q < end && lu.col_idx[q] < j {
                        q += 1;
                    }
                    if q < end && lu.col_idx[q] == j {
                        lu.values[q] -= lik * lu.values[r];
                    }
                }
            }
            if lu.values[diag_pos[i]] == 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "ILU(0): zero pivot in row {i}"
                )));
            }
        }
        Ok(Ilu0 { lu, diag_pos })
    }

    /// Solve (LU) x = b in place.
    pub fn apply(&self, x: &mut [f64]) {
        let n = self.lu.nrows;
        for i in 0..n {
            let mut s = x[i];
            for p in self.lu.row_ptr[i]..self.diag_pos[i] {
                s -= self.lu.values[p] * x[self.lu.col_idx[p]];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for p in self.diag_pos[i] + 1..self.lu.row_ptr[i + 1] {
                s -= self.lu.values[p] * x[self.lu.col_idx[p]];
            }
            x[i] = s / self.lu.values[self.diag_pos[i]];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative residual target ‖b − Ax‖ / ‖b‖.
    pub tol: f64,
    pub max_iter: usize,
    pub restart: usize,
    /// Systems with fewer unknowns than this are solved by dense LU.
    pub dense_threshold: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-12,
            max_iter: 2000,
            restart: 60,
            dense_threshold: 600,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Achieved relative residual.
    pub residual: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64], bnorm: f64) -> f64 {
    let ax = a.mul_vec(x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    norm(&r) / bnorm
}

/// Solve A x = b, by dense LU below the size threshold and by ILU(0)
/// preconditioned GMRES otherwise.
pub fn solve(a: &CsrMatrix, b: &[f64], opts: &SolverOptions) -> Result<Solution> {
    if a.nrows != a.ncols || b.len() != a.nrows {
        return Err(Error::Mismatch(format!(
            "system is {}x{} with right-hand side of length {}",
            a.nrows,
            a.ncols,
            b.len()
        )));
    }
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(Solution {
            x: vec![0.0; b.len()],
            iterations: 0,
            residual: 0.0,
        });
    }
    if a.nrows < opts.dense_threshold {
        solve_dense(a, b, bnorm)
    } else {
        gmres(a, b, opts)
    }
}

pub fn solve_dense(a: &CsrMatrix, b: &[f64], bnorm: f64) -> Result<Solution> {
    let lu = a.to_dense().lu();
    let x = lu
        .solve(&DVector::from_column_slice(b))
        .ok_or(Error::SolverFailure {
            iterations: 1,
            residual: f64::INFINITY,
        })?;
    let x: Vec<f64> = x.iter().copied().collect();
    let residual = relative_residual(a, &x, b, bnorm);
    if !residual.is_finite() {
        return Err(Error::SolverFailure {
            iterations: 1,
            residual,
        });
    }
    Ok(Solution {
        x,
        iterations: 1,
        residual,
    })
}

/// Restarted GMRES with ILU(0) right preconditioning, starting from zero.
pub fn gmres(a: &CsrMatrix, b: &[f64], opts: &SolverOptions) -> Result<Solution> {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(Solution {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
        });
    }
    let prec = Ilu0::new(a)?;
    let m = opts.restart.max(1);
    let mut x = vec![0.0; n];
    let mut iterations = 0;
    let mut residual = 1.0;
    let mut w = vec![0.0; n];

    while iterations < opts.max_iter {
        let ax = a.mul_vec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        residual = beta / bnorm;
        if residual <= opts.tol {
            break;
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut used = 0;
        for j in 0..m {
            let mut z = basis[j].clone();
            prec.apply(&mut z);
            a.mul_vec_into(&z, &mut w);
            // modified Gram-Schmidt
            for (i, vi) in basis.iter().enumerate() {
                let hij: f64 = w.iter().zip(vi).map(|(a, b)| a * b).sum();
                h[i][j] = hij;
                w.iter_mut().zip(vi).for_each(|(wk, vk)| *wk -= hij * vk);
            }
            let hnext = norm(&w);
            h[j + 1][j] = hnext;
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let d = h[j][j].hypot(h[j + 1][j]);
            if d == 0.0 {
                used = j;
                break;
            }
            cs[j] = h[j][j] / d;
            sn[j] = h[j + 1][j] / d;
            h[j][j] = d;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            used = j + 1;
            iterations += 1;
            residual = g[j + 1].abs() / bnorm;
            if residual <= opts.tol || iterations >= opts.max_iter || hnext == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hnext).collect());
        }
        if used == 0 {
            break;
        }
        let mut y = vec![0.0; used];
        for i in (0..used).rev() {
            let s: f64 = (i + 1..used).map(|k| h[i][k] * y[k]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        let mut update = vec![0.0; n];
        for (yi, vi) in y.iter().zip(&basis) {
            update.iter_mut().zip(vi).for_each(|(u, v)| *u += yi * v);
        }
        prec.apply(&mut update);
        x.iter_mut().zip(&update).for_each(|(xi, ui)| *xi += ui);
        residual = relative_residual(a, &x, b, bnorm);
        if residual <= opts.tol {
            break;
        }
    }
    if !residual.is_finite() || residual > opts.tol {
        return Err(Error::SolverFailure {
            iterations,
            residual,
        });
    }
    Ok(Solution {
        x,
        iterations,
        residual,
    })
}
