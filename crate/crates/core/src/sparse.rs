//! Compressed-column matrices with a fixed sparsity pattern, and sparse
//! direct solvers on top of faer.

use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu, SymbolicLlt, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMat};
use faer::{MatMut, Side};

use crate::error::{Error, Result};

/// Column pointers and sorted row indices of a sparse matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    nrows: usize,
    ncols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
}

impl Pattern {
    /// Builds a pattern from per-column row lists (duplicates allowed).
    pub fn from_columns(nrows: usize, mut columns: Vec<Vec<usize>>) -> Self {
        let ncols = columns.len();
        let mut col_ptr = Vec::with_capacity(ncols + 1);
        col_ptr.push(0);
        let mut row_idx = Vec::new();
        for col in &mut columns {
            col.sort_unstable();
            col.dedup();
            debug_assert!(col.last().map_or(true, |&r| r < nrows));
            row_idx.extend_from_slice(col);
            col_ptr.push(row_idx.len());
        }
        Self {
            nrows,
            ncols,
            col_ptr,
            row_idx,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// Storage slot of entry `(row, col)`, if structurally present.
    #[inline]
    pub fn slot(&self, row: usize, col: usize) -> Option<usize> {
        let (a, b) = (self.col_ptr[col], self.col_ptr[col + 1]);
        self.row_idx[a..b].binary_search(&row).ok().map(|k| a + k)
    }

    fn symbolic(&self) -> SymbolicSparseColMat<usize> {
        SymbolicSparseColMat::new_checked(
            self.nrows,
            self.ncols,
            self.col_ptr.clone(),
            None,
            self.row_idx.clone(),
        )
    }
}

#[derive(Debug, Clone)]
pub struct CscMatrix {
    pattern: Arc<Pattern>,
    values: Vec<f64>,
}

impl CscMatrix {
    pub fn zeros(pattern: Arc<Pattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        Self { pattern, values }
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    pub fn nrows(&self) -> usize {
        self.pattern.nrows
    }

    pub fn ncols(&self) -> usize {
        self.pattern.ncols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn fill_zero(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Adds `value` to entry `(row, col)`; the entry must be in the pattern.
    #[inline]
    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        let slot = self
            .pattern
            .slot(row, col)
            .unwrap_or_else(|| panic!("entry ({row}, {col}) not in sparsity pattern"));
        self.values[slot] += value;
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pattern.slot(row, col).map_or(0.0, |s| self.values[s])
    }

    /// Iterates over stored `(row, col, value)` triplets.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.ncols()).flat_map(move |c| {
            (self.pattern.col_ptr[c]..self.pattern.col_ptr[c + 1])
                .map(move |s| (self.pattern.row_idx[s], c, self.values[s]))
        })
    }

    /// Stored `(row, value)` pairs of one column.
    #[inline]
    pub fn column(&self, col: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.pattern.col_ptr[col], self.pattern.col_ptr[col + 1]);
        self.pattern.row_idx[a..b].iter().copied().zip(self.values[a..b].iter().copied())
    }

    pub fn transpose(&self) -> CscMatrix {
        let (nr, nc) = (self.nrows(), self.ncols());
        let mut count = vec![0usize; nr + 1];
        for &r in &self.pattern.row_idx {
            count[r + 1] += 1;
        }
        for i in 0..nr {
            count[i + 1] += count[i];
        }
        let col_ptr = count.clone();
        let mut next = count;
        let mut row_idx = vec![0; self.values.len()];
        let mut values = vec![0.0; self.values.len()];
        for c in 0..nc {
            for s in self.pattern.col_ptr[c]..self.pattern.col_ptr[c + 1] {
                let r = self.pattern.row_idx[s];
                row_idx[next[r]] = c;
                values[next[r]] = self.values[s];
                next[r] += 1;
            }
        }
        let pattern = Pattern {
            nrows: nc,
            ncols: nr,
            col_ptr,
            row_idx,
        };
        CscMatrix {
            pattern: Arc::new(pattern),
            values,
        }
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols());
        let mut y = vec![0.0; self.nrows()];
        for (c, &xc) in x.iter().enumerate() {
            if xc == 0.0 {
                continue;
            }
            for s in self.pattern.col_ptr[c]..self.pattern.col_ptr[c + 1] {
                y[self.pattern.row_idx[s]] += self.values[s] * xc;
            }
        }
        y
    }

    /// `y = A^T x`.
    pub fn mul_vec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows());
        (0..self.ncols())
            .map(|c| {
                (self.pattern.col_ptr[c]..self.pattern.col_ptr[c + 1])
                    .map(|s| self.values[s] * x[self.pattern.row_idx[s]])
                    .sum()
            })
            .collect()
    }

    /// Bilinear form `y^T A x`.
    pub fn form(&self, y: &[f64], x: &[f64]) -> f64 {
        dot(y, &self.mul_vec(x))
    }

    /// Largest `|A_ij - A_ji|`; the matrix must be square with a symmetric pattern.
    pub fn asymmetry(&self) -> f64 {
        self.triplets()
            .map(|(r, c, v)| (v - self.get(c, r)).abs())
            .fold(0.0, f64::max)
    }

    fn as_faer<'a>(&'a self, symbolic: &'a SymbolicSparseColMat<usize>) -> SparseColMatRef<'a, usize, f64> {
        SparseColMatRef::new(symbolic.as_ref(), &self.values)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Sparse LU whose symbolic analysis is computed once per pattern and reused.
pub struct LuSolver {
    pattern: Arc<Pattern>,
    symbolic_matrix: SymbolicSparseColMat<usize>,
    symbolic: SymbolicLu<usize>,
    numeric: Option<Lu<usize, f64>>,
}

impl LuSolver {
    pub fn new(pattern: Arc<Pattern>) -> Result<Self> {
        let symbolic_matrix = pattern.symbolic();
        let symbolic = SymbolicLu::try_new(symbolic_matrix.as_ref())
            .map_err(|e| Error::SingularSystem(format!("symbolic LU: {e:?}")))?;
        Ok(Self {
            pattern,
            symbolic_matrix,
            symbolic,
            numeric: None,
        })
    }

    pub fn factorize(&mut self, a: &CscMatrix) -> Result<()> {
        assert!(Arc::ptr_eq(&self.pattern, &a.pattern) || *self.pattern == *a.pattern);
        let lu = Lu::try_new_with_symbolic(self.symbolic.clone(), a.as_faer(&self.symbolic_matrix))
            .map_err(|e| Error::SingularSystem(format!("numeric LU: {e:?}")))?;
        self.numeric = Some(lu);
        Ok(())
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let lu = self
            .numeric
            .as_ref()
            .ok_or_else(|| Error::SingularSystem("solve before factorization".into()))?;
        let mut x = rhs.to_vec();
        lu.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, rhs.len(), 1));
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem("non-finite solution".into()));
        }
        Ok(x)
    }
}

/// Sparse Cholesky factorization of a symmetric positive definite matrix.
pub struct CholeskySolver {
    llt: Llt<usize, f64>,
    n: usize,
}

impl CholeskySolver {
    pub fn new(a: &CscMatrix) -> Result<Self> {
        let symbolic_matrix = a.pattern.symbolic();
        let symbolic = SymbolicLlt::try_new(symbolic_matrix.as_ref(), Side::Lower)
            .map_err(|e| Error::SingularSystem(format!("symbolic Cholesky: {e:?}")))?;
        let llt = Llt::try_new_with_symbolic(symbolic, a.as_faer(&symbolic_matrix), Side::Lower)
            .map_err(|e| Error::SingularSystem(format!("Cholesky: {e:?}")))?;
        Ok(Self { llt, n: a.nrows() })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.llt
            .solve_in_place(MatMut::from_column_major_slice_mut(&mut x, self.n, 1));
        x
    }

    /// Solves for several right-hand sides stored column-major in `block`.
    pub fn solve_block(&self, block: &mut [f64], ncols: usize) {
        self.llt
            .solve_in_place(MatMut::from_column_major_slice_mut(block, self.n, ncols));
    }
}
