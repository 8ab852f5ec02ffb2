//! Compressed-column matrices on Q1 sparsity patterns and the direct solver.
//!
//! Matrices share an immutable [`Pattern`] that also caches the symbolic LU
//! analysis, so every time step reuses one fill-reducing ordering.

use std::sync::{Arc, OnceLock};

use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMat};
use faer::prelude::Solve;
use faer::MatMut;

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Selects sequential (bit-reproducible) or rayon-parallel factorizations.
pub fn set_reproducible(reproducible: bool) {
    if reproducible {
        faer::set_global_parallelism(faer::Par::Seq);
    } else {
        faer::set_global_parallelism(faer::Par::rayon(0));
    }
}

/// Sparsity structure of a square matrix with `block` unknowns per mesh node,
/// coupling every pair of nodes that share a cell.
pub struct Pattern {
    size: usize,
    block: usize,
    symbolic: SymbolicSparseColMat<usize>,
    /// For each cell, value positions of its `(4 block)^2` local entries, row-major.
    cell_positions: Vec<usize>,
    /// Position of the diagonal entry of every column.
    diag_positions: Vec<usize>,
    lu_symbolic: OnceLock<std::result::Result<SymbolicLu<usize>, String>>,
}

impl std::fmt::Debug for Pattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pattern")
            .field("size", &self.size)
            .field("block", &self.block)
            .field("nnz", &self.nnz())
            .finish()
    }
}

impl Pattern {
    pub fn for_mesh(mesh: &Mesh, block: usize) -> Arc<Self> {
        let side = mesh.n() + 1;
        let num_nodes = mesh.num_nodes();
        let size = block * num_nodes;
        let mut col_ptr = Vec::with_capacity(size + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        let mut neighbours = Vec::with_capacity(9);
        for node in 0..num_nodes {
            let (i, j) = (node % side, node / side);
            neighbours.clear();
            for jj in j.saturating_sub(1)..=(j + 1).min(side - 1) {
                for ii in i.saturating_sub(1)..=(i + 1).min(side - 1) {
                    neighbours.push(jj * side + ii);
                }
            }
            for _ in 0..block {
                for &nb in &neighbours {
                    for c in 0..block {
                        row_idx.push(block * nb + c);
                    }
                }
                col_ptr.push(row_idx.len());
            }
        }
        let symbolic = SymbolicSparseColMat::new_checked(size, size, col_ptr, None, row_idx);
        let find = |row: usize, col: usize| -> usize {
            let cp = symbolic.col_ptr();
            let rows = &symbolic.row_idx()[cp[col]..cp[col + 1]];
            cp[col] + rows.binary_search(&row).expect("entry outside Q1 pattern")
        };
        let local = 4 * block;
        let mut cell_positions = Vec::with_capacity(mesh.num_cells() * local * local);
        for cell in mesh.cells() {
            for a in 0..local {
                let row = block * cell[a / block] + a % block;
                for b in 0..local {
                    let col = block * cell[b / block] + b % block;
                    cell_positions.push(find(row, col));
                }
            }
        }
        let diag_positions = (0..size).map(|d| find(d, d)).collect();
        Arc::new(Pattern {
            size,
            block,
            symbolic,
            cell_positions,
            diag_positions,
            lu_symbolic: OnceLock::new(),
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn block(&self) -> usize {
        self.block
    }

    pub fn nnz(&self) -> usize {
        self.symbolic.row_idx().len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        self.symbolic.col_ptr()
    }

    pub fn row_idx(&self) -> &[usize] {
        self.symbolic.row_idx()
    }

    fn lu_symbolic(&self) -> std::result::Result<&SymbolicLu<usize>, String> {
        self.lu_symbolic
            .get_or_init(|| SymbolicLu::try_new(self.symbolic.as_ref()).map_err(|e| format!("{e:?}")))
            .as_ref()
            .map_err(Clone::clone)
    }
}

/// Square sparse matrix with values laid out on a shared [`Pattern`].
#[derive(Debug, Clone)]
pub struct CscMatrix {
    pattern: Arc<Pattern>,
    values: Vec<f64>,
}

impl CscMatrix {
    pub fn zeros(pattern: Arc<Pattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        CscMatrix { pattern, values }
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    pub fn size(&self) -> usize {
        self.pattern.size
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Adds a row-major local matrix of cell `cell` into the global values.
    pub fn add_cell(&mut self, cell: usize, local: &[f64]) {
        let k = 4 * self.pattern.block;
        debug_assert_eq!(local.len(), k * k);
        let positions = &self.pattern.cell_positions[cell * k * k..(cell + 1) * k * k];
        for (&pos, &v) in positions.iter().zip(local) {
            self.values[pos] += v;
        }
    }

    /// Value at `(row, col)`, zero outside the pattern.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        let cp = self.pattern.col_ptr();
        let rows = &self.pattern.row_idx()[cp[col]..cp[col + 1]];
        rows.binary_search(&row)
            .map(|k| self.values[cp[col] + k])
            .unwrap_or(0.0)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.size()];
        self.mul_vec_add(x, &mut y);
        y
    }

    /// `y += A x`.
    pub fn mul_vec_add(&self, x: &[f64], y: &mut [f64]) {
        let cp = self.pattern.col_ptr();
        let ri = self.pattern.row_idx();
        for (col, &xc) in x.iter().enumerate() {
            if xc == 0.0 {
                continue;
            }
            for k in cp[col]..cp[col + 1] {
                y[ri[k]] += self.values[k] * xc;
            }
        }
    }

    /// `y += A^T x`.
    pub fn mul_transpose_vec_add(&self, x: &[f64], y: &mut [f64]) {
        let cp = self.pattern.col_ptr();
        let ri = self.pattern.row_idx();
        for (col, yc) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in cp[col]..cp[col + 1] {
                acc += self.values[k] * x[ri[k]];
            }
            *yc += acc;
        }
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let cp = self.pattern.col_ptr();
        let ri = self.pattern.row_idx();
        let mut acc = 0.0;
        for (col, &yc) in y.iter().enumerate() {
            for k in cp[col]..cp[col + 1] {
                acc += x[ri[k]] * self.values[k] * yc;
            }
        }
        acc
    }

    /// `self += s * other` (same pattern).
    pub fn axpy(&mut self, s: f64, other: &CscMatrix) {
        debug_assert!(Arc::ptr_eq(&self.pattern, &other.pattern));
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += s * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    /// Largest `|A_ij - A_ji|` over the pattern.
    pub fn asymmetry(&self) -> f64 {
        let cp = self.pattern.col_ptr();
        let ri = self.pattern.row_idx();
        let mut worst: f64 = 0.0;
        for col in 0..self.size() {
            for k in cp[col]..cp[col + 1] {
                worst = worst.max((self.values[k] - self.get(col, ri[k])).abs());
            }
        }
        worst
    }

    /// Eliminates the listed dofs symmetrically: rows and columns are zeroed, the
    /// diagonal set to one and the right-hand side (if given) to zero. Prescribed
    /// values are homogeneous, so the remaining right-hand side needs no lifting.
    pub fn constrain_symmetric(&mut self, dofs: &[usize], rhs: Option<&mut [f64]>) {
        let size = self.size();
        let mut constrained = vec![false; size];
        for &d in dofs {
            constrained[d] = true;
        }
        let cp = self.pattern.col_ptr().to_vec();
        let ri = self.pattern.row_idx();
        for col in 0..size {
            for k in cp[col]..cp[col + 1] {
                if constrained[col] || constrained[ri[k]] {
                    self.values[k] = 0.0;
                }
            }
        }
        for &d in dofs {
            self.values[self.pattern.diag_positions[d]] = 1.0;
        }
        if let Some(rhs) = rhs {
            for &d in dofs {
                rhs[d] = 0.0;
            }
        }
    }

    /// LU factorization with partial pivoting. `step` labels errors.
    pub fn factorize(&self, step: usize) -> Result<Factorization> {
        let symbolic = self
            .pattern
            .lu_symbolic()
            .map_err(|reason| Error::LinearSolve { step, reason })?;
        let mat = SparseColMatRef::new(self.pattern.symbolic.as_ref(), &self.values);
        let lu = Lu::try_new_with_symbolic(symbolic.clone(), mat).map_err(|e| Error::LinearSolve {
            step,
            reason: format!("{e:?}"),
        })?;
        Ok(Factorization {
            matrix: self.clone(),
            lu,
            step,
        })
    }
}

/// A factorized matrix. Solves apply one step of iterative refinement.
pub struct Factorization {
    matrix: CscMatrix,
    lu: Lu<usize, f64>,
    step: usize,
}

impl std::fmt::Debug for Factorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Factorization")
            .field("size", &self.matrix.size())
            .field("step", &self.step)
            .finish()
    }
}

impl Factorization {
    pub fn matrix(&self) -> &CscMatrix {
        &self.matrix
    }

    fn raw_solve(&self, rhs: &mut [f64], transpose: bool) {
        let n = rhs.len();
        let view = MatMut::from_column_major_slice_mut(rhs, n, 1);
        if transpose {
            self.lu.solve_transpose_in_place(view);
        } else {
            self.lu.solve_in_place(view);
        }
    }

    fn solve_impl(&self, rhs: &[f64], transpose: bool) -> Result<Vec<f64>> {
        let mut x = rhs.to_vec();
        self.raw_solve(&mut x, transpose);
        let mut ax = vec![0.0; x.len()];
        if transpose {
            self.matrix.mul_transpose_vec_add(&x, &mut ax);
        } else {
            self.matrix.mul_vec_add(&x, &mut ax);
        }
        let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        self.raw_solve(&mut r, transpose);
        for (xi, ri) in x.iter_mut().zip(&r) {
            *xi += ri;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearSolve {
                step: self.step,
                reason: "non-finite solution (singular matrix)".into(),
            });
        }
        Ok(x)
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.solve_impl(rhs, false)
    }

    pub fn solve_transpose(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.solve_impl(rhs, true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constrained_identity_solve_zeroes_constrained_dofs() {
        let mesh = Mesh::new(2).unwrap();
        let pattern = Pattern::for_mesh(&mesh, 3);
        let mut a = CscMatrix::zeros(pattern.clone());
        for d in 0..pattern.size() {
            a.values[pattern.diag_positions[d]] = 2.0;
        }
        let mut rhs = vec![1.0; pattern.size()];
        let dofs = mesh.dirichlet_dofs();
        assert_eq!(dofs.len(), 2 * (mesh.n() + 1));
        a.constrain_symmetric(&dofs, Some(&mut rhs));
        let x = a.factorize(0).unwrap().solve(&rhs).unwrap();
        let residual = {
            let ax = a.mul_vec(&x);
            ax.iter().zip(&rhs).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
        };
        assert!(residual < 1e-15);
        for &d in &dofs {
            assert_eq!(x[d], 0.0);
        }
        assert!(x.iter().enumerate().all(|(i, v)| dofs.contains(&i) || (*v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn pattern_has_nine_point_stencil() {
        let mesh = Mesh::new(4).unwrap();
        let p = Pattern::for_mesh(&mesh, 1);
        // interior node couples with 9 nodes, corner with 4
        let cp = p.col_ptr();
        let centre = 2 * 5 + 2;
        assert_eq!(cp[centre + 1] - cp[centre], 9);
        assert_eq!(cp[1] - cp[0], 4);
    }
}
