//! Compressed sparse row storage for the assembled operators and Jacobians,
//! plus a thin wrapper over faer's sparse LU used by the Newton solver.

use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::Col;
use faer::prelude::Solve;

use crate::error::{Error, Result};

/// Row-major sparse matrix. Explicit zeros inserted at assembly are kept, so
/// the sparsity pattern depends only on the structure, never on values.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds a matrix from (row, col, value) triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by_key(|a| (a.0, a.1));

        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &sorted {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
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

    /// Entries of row `i` as (column, value) pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "matrix-vector dimension mismatch");
        (0..self.nrows)
            .map(|i| self.row(i).map(|(j, a)| a * x[j]).sum())
            .collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.row(i).map(|(_, a)| a).sum()).collect()
    }

    /// `self * diag(d)`.
    pub fn scale_columns(&self, d: &[f64]) -> CsrMatrix {
        assert_eq!(d.len(), self.ncols);
        let mut out = self.clone();
        for (v, &c) in out.values.iter_mut().zip(&out.col_idx) {
            *v *= d[c];
        }
        out
    }

    /// `diag(d) * self`.
    pub fn scale_rows(&self, d: &[f64]) -> CsrMatrix {
        assert_eq!(d.len(), self.nrows);
        let mut out = self.clone();
        for (i, &di) in d.iter().enumerate() {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out.values[k] *= di;
            }
        }
        out
    }

    /// Structural product; zeros produced by cancellation stay in the pattern.
    pub fn matmul(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.ncols, other.nrows, "matmul dimension mismatch");
        let mut triplets = Vec::new();
        for i in 0..self.nrows {
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    triplets.push((i, j, a * b));
                }
            }
        }
        CsrMatrix::from_triplets(self.nrows, other.ncols, &triplets)
    }

    pub fn transpose(&self) -> CsrMatrix {
        let triplets: Vec<_> = self.triplets().map(|(i, j, v)| (j, i, v)).collect();
        CsrMatrix::from_triplets(self.ncols, self.nrows, &triplets)
    }
}

/// Sparse direct solver with a cached symbolic factorization.
///
/// The symbolic analysis is reused as long as the incoming pattern is the one
/// it was computed for; Newton Jacobians of a given system keep their pattern
/// across iterations and steps.
type Pattern = Vec<(usize, usize)>;

pub struct SparseLu {
    cached: Option<(Pattern, SymbolicLu<usize>)>,
    /// Numeric factors of the last matrix, kept with the matrix for refinement.
    factored: Option<(Lu<usize, f64>, CsrMatrix)>,
}

impl Default for SparseLu {
    fn default() -> Self {
        Self::new()
    }
}

impl SparseLu {
    pub fn new() -> Self {
        faer::set_global_parallelism(faer::Par::Seq);
        Self {
            cached: None,
            factored: None,
        }
    }

    /// Factors `a`, reusing the symbolic analysis when the pattern is unchanged.
    pub fn factor(&mut self, a: &CsrMatrix) -> Result<()> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::LinearSolve(format!("system is {}x{}", a.nrows(), a.ncols())));
        }
        let triplets: Vec<Triplet<usize, usize, f64>> =
            a.triplets().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| Error::LinearSolve(format!("{e:?}")))?;

        let pattern: Vec<(usize, usize)> = a.triplets().map(|(i, j, _)| (i, j)).collect();
        let reuse = matches!(&self.cached, Some((p, _)) if *p == pattern);
        if !reuse {
            let symbolic = SymbolicLu::try_new(mat.symbolic())
                .map_err(|e| Error::LinearSolve(format!("{e:?}")))?;
            self.cached = Some((pattern, symbolic));
        }
        let symbolic = self.cached.as_ref().unwrap().1.clone();
        let lu = Lu::try_new_with_symbolic(symbolic, mat.as_ref())
            .map_err(|e| Error::LinearSolve(format!("{e:?}")))?;
        self.factored = Some((lu, a.clone()));
        Ok(())
    }

    /// Solves with the matrix of the last [`SparseLu::factor`] call.
    pub fn solve_factored(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let Some((lu, a)) = &self.factored else {
            return Err(Error::LinearSolve("no factorization available".into()));
        };
        let n = a.nrows();
        if rhs.len() != n {
            return Err(Error::LinearSolve(format!("system is {n}x{n} with rhs of length {}", rhs.len())));
        }
        let b = Col::<f64>::from_fn(n, |i| rhs[i]);
        let x = lu.solve(&b);
        // one step of iterative refinement keeps conservation sums at round-off
        let ax = a.mul_vec(&(0..n).map(|i| x[i]).collect::<Vec<_>>());
        let r = Col::<f64>::from_fn(n, |i| rhs[i] - ax[i]);
        let dx = lu.solve(&r);
        let out: Vec<f64> = (0..n).map(|i| x[i] + dx[i]).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearSolve("non-finite solution (singular Jacobian?)".into()));
        }
        Ok(out)
    }

    pub fn solve(&mut self, a: &CsrMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
        self.factor(a)?;
        self.solve_factored(rhs)
    }
}
