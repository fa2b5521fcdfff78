//! Sparse assembly and direct solves.
//!
//! Systems are accumulated as triplets, compressed to row-major storage and
//! factorized with a supernodal LU with partial pivoting (from `faer`). The
//! symbolic analysis can be kept across solves that share a sparsity pattern,
//! which is the situation inside a Picard loop.
//!
//! Symmetric quasi-definite systems (positive definite leading block,
//! negative definite trailing block) can instead go through [`LdltSolver`]:
//! an unpivoted sparse LDL^T followed by iterative refinement, with LU as
//! the fallback when refinement does not reach the residual target.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::solvers::Solve;
use faer::sparse::linalg::cholesky::{factorize_symbolic_cholesky, SymbolicCholesky};
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::linalg::LuError;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, MatMut, Par, Side};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SparseError {
    #[error("entry ({row}, {col}) out of range for a {dim}x{dim} matrix")]
    IndexOutOfRange { row: usize, col: usize, dim: usize },
    #[error("dimension mismatch: matrix is {matrix}x{matrix}, vector has length {vector}")]
    DimensionMismatch { matrix: usize, vector: usize },
    #[error("matrix is structurally singular (no pivot at step {0})")]
    StructurallySingular(usize),
    #[error("matrix is numerically singular")]
    NumericallySingular,
    #[error("factorization failed: {0}")]
    Factorization(String),
}

/// Coordinate-format accumulator for a square matrix. Duplicate entries are
/// summed on compression.
#[derive(Debug, Clone, Default)]
pub struct TripletBuffer {
    dim: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
}

impl TripletBuffer {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Default::default()
        }
    }

    pub fn with_capacity(dim: usize, capacity: usize) -> Self {
        Self {
            dim,
            rows: Vec::with_capacity(capacity),
            cols: Vec::with_capacity(capacity),
            values: Vec::with_capacity(capacity),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Records `value` at `(row, col)`. Explicit zeros are kept so that the
    /// compressed pattern does not depend on the values.
    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        self.rows.push(row);
        self.cols.push(col);
        self.values.push(value);
    }

    /// Sums duplicates and builds the compressed row-major matrix.
    pub fn compress(&self) -> Result<SparseMatrix, SparseError> {
        let n = self.dim;
        if let Some(k) = (0..self.len()).find(|&k| self.rows[k] >= n || self.cols[k] >= n) {
            return Err(SparseError::IndexOutOfRange {
                row: self.rows[k],
                col: self.cols[k],
                dim: n,
            });
        }

        // bucket by row (stable, so insertion order is kept inside a row)
        let mut counts = vec![0usize; n + 1];
        for &r in &self.rows {
            counts[r + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut order = vec![0usize; self.len()];
        for (k, &r) in self.rows.iter().enumerate() {
            order[next[r]] = k;
            next[r] += 1;
        }

        let mut row_offsets = Vec::with_capacity(n + 1);
        let mut col_indices = Vec::with_capacity(self.len());
        let mut values = Vec::with_capacity(self.len());
        row_offsets.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for r in 0..n {
            scratch.clear();
            scratch.extend(
                order[counts[r]..counts[r + 1]]
                    .iter()
                    .map(|&k| (self.cols[k], self.values[k])),
            );
            scratch.sort_by_key(|&(c, _)| c);
            let mut iter = scratch.iter().copied();
            if let Some((mut col, mut acc)) = iter.next() {
                for (c, v) in iter {
                    if c == col {
                        acc += v;
                    } else {
                        col_indices.push(col);
                        values.push(acc);
                        col = c;
                        acc = v;
                    }
                }
                col_indices.push(col);
                values.push(acc);
            }
            row_offsets.push(col_indices.len());
        }

        Ok(SparseMatrix {
            dim: n,
            row_offsets,
            col_indices,
            values,
        })
    }
}

/// Square matrix in compressed sparse row storage with sorted, unique
/// column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    dim: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            row_offsets: (0..=dim).collect(),
            col_indices: (0..dim).collect(),
            values: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Stored values, for refilling a matrix whose pattern is fixed.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Index into [`values`](Self::values) of the stored entry `(row, col)`.
    pub fn position(&self, row: usize, col: usize) -> Option<usize> {
        let start = self.row_offsets[row];
        self.col_indices[start..self.row_offsets[row + 1]]
            .binary_search(&col)
            .ok()
            .map(|k| start + k)
    }

    /// Stored entry at `(row, col)`, zero when absent.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        let range = self.row_offsets[row]..self.row_offsets[row + 1];
        match self.col_indices[range.clone()].binary_search(&col) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    /// Iterates over the stored `(col, value)` pairs of a row.
    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_offsets[row]..self.row_offsets[row + 1];
        self.col_indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn same_pattern(&self, other: &SparseMatrix) -> bool {
        self.dim == other.dim && self.row_offsets == other.row_offsets && self.col_indices == other.col_indices
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>, SparseError> {
        self.check_len(x.len())?;
        Ok((0..self.dim)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect())
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.dim]; self.dim];
        for (r, row) in dense.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        dense
    }

    fn check_len(&self, len: usize) -> Result<(), SparseError> {
        if len != self.dim {
            return Err(SparseError::DimensionMismatch {
                matrix: self.dim,
                vector: len,
            });
        }
        Ok(())
    }

    /// The row-major arrays viewed as a column-major matrix, i.e. the transpose.
    fn as_transpose(&self) -> SparseColMatRef<'_, usize, f64> {
        let symbolic =
            SymbolicSparseColMatRef::new_checked(self.dim, self.dim, &self.row_offsets, None, &self.col_indices);
        SparseColMatRef::new(symbolic, &self.values)
    }
}

/// Max-norm of `A x - rhs`.
pub fn residual_norm(a: &SparseMatrix, x: &[f64], rhs: &[f64]) -> Result<f64, SparseError> {
    a.check_len(rhs.len())?;
    let ax = a.mul_vec(x)?;
    Ok(ax.iter().zip(rhs).map(|(l, r)| (l - r).abs()).fold(0.0, f64::max))
}

/// Solves `A x = rhs` with a fresh factorization.
pub fn solve(a: &SparseMatrix, rhs: &[f64]) -> Result<Vec<f64>, SparseError> {
    LuSolver::new().solve(a, rhs)
}

/// Direct solver that keeps the symbolic analysis of the last pattern it saw.
#[derive(Default)]
pub struct LuSolver {
    symbolic: Option<(SparseMatrix, SymbolicLu<usize>)>,
}

impl LuSolver {
    pub fn new() -> Self {
        Self::default()
    }

    fn symbolic_for(&mut self, a: &SparseMatrix) -> Result<SymbolicLu<usize>, SparseError> {
        if let Some((pattern, symbolic)) = &self.symbolic {
            if pattern.same_pattern(a) {
                return Ok(symbolic.clone());
            }
        }
        let symbolic = SymbolicLu::try_new(a.as_transpose().symbolic())
            .map_err(|e| SparseError::Factorization(format!("{e:?}")))?;
        let pattern = SparseMatrix {
            dim: a.dim,
            row_offsets: a.row_offsets.clone(),
            col_indices: a.col_indices.clone(),
            values: Vec::new(),
        };
        self.symbolic = Some((pattern, symbolic.clone()));
        Ok(symbolic)
    }

    pub fn solve(&mut self, a: &SparseMatrix, rhs: &[f64]) -> Result<Vec<f64>, SparseError> {
        a.check_len(rhs.len())?;
        if a.dim == 0 {
            return Ok(Vec::new());
        }
        let symbolic = self.symbolic_for(a)?;
        let lu = Lu::try_new_with_symbolic(symbolic, a.as_transpose()).map_err(|e| match e {
            LuError::SymbolicSingular { index } => SparseError::StructurallySingular(index),
            LuError::Generic(g) => SparseError::Factorization(format!("{g:?}")),
        })?;
        let mut x = rhs.to_vec();
        // the factorization is of A^T
        lu.solve_transpose_in_place(MatMut::from_column_major_slice_mut(&mut x, a.dim, 1));
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SparseError::NumericallySingular);
        }
        Ok(x)
    }
}

/// Relative residual target of the refined LDL^T solve.
const REFINE_TOL: f64 = 1e-12;
const MAX_REFINE: usize = 4;

struct LdltFactor {
    pattern: SparseMatrix,
    symbolic: SymbolicCholesky<usize>,
    values: Vec<f64>,
    buffer: MemBuffer,
}

/// Solver for symmetric quasi-definite matrices. Only the lower triangle of
/// the matrix is read by the factorization; refinement uses the full matrix.
#[derive(Default)]
pub struct LdltSolver {
    factor: Option<LdltFactor>,
    fallback: LuSolver,
    fallbacks: usize,
}

impl LdltSolver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of solves that had to be redone with LU.
    pub fn fallback_count(&self) -> usize {
        self.fallbacks
    }

    fn factor_for(&mut self, a: &SparseMatrix) -> Result<&mut LdltFactor, SparseError> {
        let reuse = matches!(&self.factor, Some(f) if f.pattern.same_pattern(a));
        if !reuse {
            let symbolic = factorize_symbolic_cholesky(
                a.as_transpose().symbolic(),
                Side::Lower,
                Default::default(),
                Default::default(),
            )
            .map_err(|e| SparseError::Factorization(format!("{e:?}")))?;
            let scratch = symbolic
                .factorize_numeric_ldlt_scratch::<f64>(Par::Seq, Default::default())
                .or(symbolic.solve_in_place_scratch::<f64>(1, Par::Seq));
            self.factor = Some(LdltFactor {
                pattern: SparseMatrix {
                    dim: a.dim,
                    row_offsets: a.row_offsets.clone(),
                    col_indices: a.col_indices.clone(),
                    values: Vec::new(),
                },
                values: vec![0.0; symbolic.len_val()],
                buffer: MemBuffer::new(scratch),
                symbolic,
            });
        }
        Ok(self.factor.as_mut().expect("factor was just set"))
    }

    fn try_ldlt(&mut self, a: &SparseMatrix, rhs: &[f64]) -> Result<Option<Vec<f64>>, SparseError> {
        let target = REFINE_TOL * (1.0 + rhs.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        let f = self.factor_for(a)?;
        let Ok(ldlt) = f.symbolic.factorize_numeric_ldlt(
            &mut f.values,
            a.as_transpose(),
            Side::Lower,
            Default::default(),
            Par::Seq,
            MemStack::new(&mut f.buffer),
            Default::default(),
        ) else {
            return Ok(None);
        };
        let mut x = rhs.to_vec();
        ldlt.solve_in_place_with_conj(
            Conj::No,
            MatMut::from_column_major_slice_mut(&mut x, a.dim, 1),
            Par::Seq,
            MemStack::new(&mut f.buffer),
        );
        for _ in 0..MAX_REFINE {
            let ax = a.mul_vec(&x)?;
            let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
            let norm = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if !norm.is_finite() {
                return Ok(None);
            }
            if norm <= target {
                return Ok(Some(x));
            }
            ldlt.solve_in_place_with_conj(
                Conj::No,
                MatMut::from_column_major_slice_mut(&mut r, a.dim, 1),
                Par::Seq,
                MemStack::new(&mut f.buffer),
            );
            x.iter_mut().zip(&r).for_each(|(x, d)| *x += d);
        }
        let norm = residual_norm(a, &x, rhs)?;
        Ok((norm <= target).then_some(x))
    }

    pub fn solve(&mut self, a: &SparseMatrix, rhs: &[f64]) -> Result<Vec<f64>, SparseError> {
        a.check_len(rhs.len())?;
        if a.dim == 0 {
            return Ok(Vec::new());
        }
        match self.try_ldlt(a, rhs)? {
            Some(x) => Ok(x),
            None => {
                self.fallbacks += 1;
                self.fallback.solve(a, rhs)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed() {
        let mut b = TripletBuffer::new(2);
        b.push(0, 0, 1.0);
        b.push(0, 0, 2.0);
        let m = b.compress().unwrap();
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(0, 0), 3.0);
    }

    #[test]
    fn empty_buffer() {
        let m = TripletBuffer::new(3).compress().unwrap();
        assert_eq!(m.nnz(), 0);
        assert_eq!(m.row_offsets(), &[0, 0, 0, 0]);
        assert_eq!(m.to_dense(), vec![vec![0.0; 3]; 3]);
    }

    #[test]
    fn out_of_range_triplet() {
        let mut b = TripletBuffer::new(2);
        b.push(0, 2, 1.0);
        assert_eq!(
            b.compress().unwrap_err(),
            SparseError::IndexOutOfRange { row: 0, col: 2, dim: 2 }
        );
    }

    #[test]
    fn identity_and_two_by_two() {
        let rhs = [3.0, -1.0, 2.5];
        assert_eq!(solve(&SparseMatrix::identity(3), &rhs).unwrap(), rhs.to_vec());

        let mut b = TripletBuffer::new(2);
        for (r, c, v) in [(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0)] {
            b.push(r, c, v);
        }
        let x = solve(&b.compress().unwrap(), &[3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-15 && (x[1] - 1.4).abs() < 1e-15);
    }

    #[test]
    fn nonsymmetric_system() {
        // [[1, 2], [3, 4]] x = [5, 6] -> x = [-4, 4.5]
        let mut b = TripletBuffer::new(2);
        for (r, c, v) in [(0, 0, 1.0), (0, 1, 2.0), (1, 0, 3.0), (1, 1, 4.0)] {
            b.push(r, c, v);
        }
        let x = solve(&b.compress().unwrap(), &[5.0, 6.0]).unwrap();
        assert!((x[0] + 4.0).abs() < 1e-14 && (x[1] - 4.5).abs() < 1e-14);
    }

    #[test]
    fn singular_systems_are_reported() {
        let mut b = TripletBuffer::new(2);
        b.push(0, 0, 1.0);
        b.push(1, 0, 1.0);
        let err = solve(&b.compress().unwrap(), &[1.0, 1.0]).unwrap_err();
        assert!(matches!(
            err,
            SparseError::StructurallySingular(_) | SparseError::NumericallySingular
        ));

        let err = solve(&SparseMatrix::identity(2), &[1.0]).unwrap_err();
        assert_eq!(err, SparseError::DimensionMismatch { matrix: 2, vector: 1 });
    }

    #[test]
    fn residual_of_zero_guess() {
        let mut b = TripletBuffer::new(2);
        b.push(0, 0, 4.0);
        b.push(1, 1, 2.0);
        let a = b.compress().unwrap();
        assert_eq!(residual_norm(&a, &[0.0, 0.0], &[1.0, -3.0]).unwrap(), 3.0);
        assert_eq!(residual_norm(&a, &[0.25, -1.5], &[1.0, -3.0]).unwrap(), 0.0);
        assert!(residual_norm(&a, &[0.0], &[1.0, -3.0]).is_err());
    }

    #[test]
    fn symbolic_reuse_across_values() {
        let mut solver = LuSolver::new();
        for scale in [1.0, 2.0, 10.0] {
            let mut b = TripletBuffer::new(3);
            for (r, c, v) in [
                (0, 0, 4.0),
                (0, 1, 1.0),
                (1, 0, 1.0),
                (1, 1, 5.0),
                (2, 2, 3.0),
                (1, 2, 0.5),
            ] {
                b.push(r, c, v * scale);
            }
            let a = b.compress().unwrap();
            let rhs = [1.0, 2.0, 3.0];
            let x = solver.solve(&a, &rhs).unwrap();
            assert!(residual_norm(&a, &x, &rhs).unwrap() < 1e-14);
        }
    }

    fn quasi_definite(n: usize, m: usize, shift: f64) -> SparseMatrix {
        // [A B^T; B -eps I] with A = tridiag(-1, 4, -1)
        let mut b = TripletBuffer::new(n + m);
        for i in 0..n {
            b.push(i, i, 4.0 + shift);
            if i + 1 < n {
                b.push(i, i + 1, -1.0);
                b.push(i + 1, i, -1.0);
            }
        }
        for j in 0..m {
            for i in [j, (3 * j + 1) % n] {
                b.push(n + j, i, 1.0 + j as f64 * 0.1);
                b.push(i, n + j, 1.0 + j as f64 * 0.1);
            }
            b.push(n + j, n + j, -1e-8);
        }
        b.compress().unwrap()
    }

    #[test]
    fn ldlt_matches_lu_on_quasi_definite_systems() {
        let mut ldlt = LdltSolver::new();
        for shift in [0.0, 1.0, 100.0] {
            let a = quasi_definite(30, 10, shift);
            let rhs: Vec<f64> = (0..40).map(|i| (i as f64 * 0.7).sin()).collect();
            let x = ldlt.solve(&a, &rhs).unwrap();
            let y = solve(&a, &rhs).unwrap();
            assert!(residual_norm(&a, &x, &rhs).unwrap() <= 1e-10 * 2.0);
            let scale = y.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            assert!(x.iter().zip(&y).all(|(a, b)| (a - b).abs() <= 1e-9 * scale));
        }
        assert_eq!(ldlt.fallback_count(), 0);
    }

    #[test]
    fn ldlt_falls_back_on_indefinite_input() {
        // symmetric but with a zero leading pivot
        let mut b = TripletBuffer::new(2);
        b.push(0, 1, 1.0);
        b.push(1, 0, 1.0);
        let a = b.compress().unwrap();
        let mut ldlt = LdltSolver::new();
        let x = ldlt.solve(&a, &[2.0, 3.0]).unwrap();
        assert!((x[0] - 3.0).abs() < 1e-14 && (x[1] - 2.0).abs() < 1e-14);
        assert_eq!(ldlt.fallback_count(), 1);
    }
}
