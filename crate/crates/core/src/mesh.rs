//! Structured Q1 discretization of the unit square.
//!
//! Nodes are numbered row by row, `node = j (n+1) + i` at `(i/n, j/n)`. Cells
//! list their nodes counter-clockwise starting at the lower-left corner, which
//! matches the local numbering of [`q1_eval`]. Coupled fields interleave
//! `(u_x, u_y, phi)` per node.
//!
//! Boundary tags: the top edge `y = 1` carries the Neumann control, the bottom
//! edge `y = 0` is clamped, and the vertical sides are traction free.

use std::ops::{Index, IndexMut};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::sparse::{CscMatrix, Pattern};

pub const UX: usize = 0;
pub const UY: usize = 1;
pub const PHI: usize = 2;
pub const DOFS_PER_NODE: usize = 3;

/// Global dof index of component `comp` at `node`.
#[inline]
pub fn dof(node: usize, comp: usize) -> usize {
    DOFS_PER_NODE * node + comp
}

/// Gauss points of the 2x2 rule on the reference cell `[0,1]^2`, with weights.
pub fn gauss_2x2() -> [([f64; 2], f64); 4] {
    let a = 0.5 - 0.5 / 3f64.sqrt();
    let b = 0.5 + 0.5 / 3f64.sqrt();
    [([a, a], 0.25), ([b, a], 0.25), ([b, b], 0.25), ([a, b], 0.25)]
}

/// Two-point Gauss rule on `[0,1]`.
pub fn gauss_1d() -> [(f64, f64); 2] {
    let a = 0.5 - 0.5 / 3f64.sqrt();
    [(a, 0.5), (1.0 - a, 0.5)]
}

/// Bilinear basis on the reference cell: values and reference gradients.
pub fn q1_eval(xi: f64, eta: f64) -> ([f64; 4], [[f64; 2]; 4]) {
    let values = [
        (1.0 - xi) * (1.0 - eta),
        xi * (1.0 - eta),
        xi * eta,
        (1.0 - xi) * eta,
    ];
    let grads = [
        [-(1.0 - eta), -(1.0 - xi)],
        [1.0 - eta, -xi],
        [eta, xi],
        [-eta, 1.0 - xi],
    ];
    (values, grads)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    /// `y = 1`, carries the control traction.
    Neumann,
    /// `y = 0`, displacement clamped.
    Dirichlet,
    /// `x = 0` or `x = 1`.
    Free,
}

/// Shape data at the quadrature points of one (any) cell of the uniform mesh.
#[derive(Debug, Clone)]
pub struct CellBasis {
    /// `values[qp][a]`.
    pub values: [[f64; 4]; 4],
    /// Physical gradients `grads[qp][a]`.
    pub grads: [[[f64; 2]; 4]; 4],
    /// Quadrature weights including the Jacobian determinant.
    pub weights: [f64; 4],
}

#[derive(Debug, Clone)]
pub struct Mesh {
    n: usize,
    nodes: Vec<[f64; 2]>,
    cells: Vec<[usize; 4]>,
    basis: CellBasis,
}

impl Mesh {
    /// Uniform `n x n` mesh of the unit square. `n` must be even and at least 2.
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("n", format!("need at least 2 cells per side, got {n}")));
        }
        if !n.is_multiple_of(2) {
            return Err(Error::invalid(
                "n",
                format!("must be even so that y = 0.5 is a node line, got {n}"),
            ));
        }
        let side = n + 1;
        let spacing = 1.0 / n as f64;
        let nodes = (0..side * side)
            .map(|k| [(k % side) as f64 * spacing, (k / side) as f64 * spacing])
            .collect();
        let cells = (0..n * n)
            .map(|c| {
                let (i, j) = (c % n, c / n);
                let ll = j * side + i;
                [ll, ll + 1, ll + side + 1, ll + side]
            })
            .collect();
        let mut basis = CellBasis {
            values: [[0.0; 4]; 4],
            grads: [[[0.0; 2]; 4]; 4],
            weights: [0.0; 4],
        };
        for (qp, (point, w)) in gauss_2x2().into_iter().enumerate() {
            let (vals, grads) = q1_eval(point[0], point[1]);
            basis.values[qp] = vals;
            for a in 0..4 {
                basis.grads[qp][a] = [grads[a][0] * n as f64, grads[a][1] * n as f64];
            }
            basis.weights[qp] = w * spacing * spacing;
        }
        Ok(Mesh {
            n,
            nodes,
            cells,
            basis,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Node spacing `1/n`.
    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Cell diameter `sqrt(2)/n`.
    pub fn h(&self) -> f64 {
        2f64.sqrt() / self.n as f64
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_dofs(&self) -> usize {
        DOFS_PER_NODE * self.num_nodes()
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn cells(&self) -> &[[usize; 4]] {
        &self.cells
    }

    pub fn basis(&self) -> &CellBasis {
        &self.basis
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * (self.n + 1) + i
    }

    /// Nodes on the Neumann edge `y = 1`, ordered by increasing `x`.
    pub fn neumann_nodes(&self) -> Vec<usize> {
        (0..=self.n).map(|i| self.node_index(i, self.n)).collect()
    }

    /// Nodes on the clamped edge `y = 0`.
    pub fn dirichlet_nodes(&self) -> Vec<usize> {
        (0..=self.n).map(|i| self.node_index(i, 0)).collect()
    }

    /// Displacement dofs fixed to zero.
    pub fn dirichlet_dofs(&self) -> Vec<usize> {
        self.dirichlet_nodes()
            .into_iter()
            .flat_map(|node| [dof(node, UX), dof(node, UY)])
            .collect()
    }

    /// All boundary edges with their tag, as `(node_a, node_b, tag)`.
    pub fn boundary_edges(&self) -> Vec<(usize, usize, BoundaryTag)> {
        let n = self.n;
        let mut edges = Vec::with_capacity(4 * n);
        for i in 0..n {
            edges.push((self.node_index(i, 0), self.node_index(i + 1, 0), BoundaryTag::Dirichlet));
            edges.push((self.node_index(i, n), self.node_index(i + 1, n), BoundaryTag::Neumann));
        }
        for j in 0..n {
            edges.push((self.node_index(0, j), self.node_index(0, j + 1), BoundaryTag::Free));
            edges.push((self.node_index(n, j), self.node_index(n, j + 1), BoundaryTag::Free));
        }
        edges
    }

    /// Image of `node` under the reflection `x -> 1 - x`.
    pub fn mirror_node(&self, node: usize) -> usize {
        let side = self.n + 1;
        let (i, j) = (node % side, node / side);
        self.node_index(self.n - i, j)
    }

    /// Consistent scalar Q1 mass matrix.
    pub fn scalar_mass(&self) -> CscMatrix {
        let pattern = Pattern::for_mesh(self, 1);
        self.scalar_mass_on(pattern)
    }

    pub fn scalar_mass_on(&self, pattern: Arc<Pattern>) -> CscMatrix {
        let mut m = CscMatrix::zeros(pattern);
        let local = self.local_mass();
        for c in 0..self.num_cells() {
            m.add_cell(c, &local);
        }
        m
    }

    /// Element mass matrix, row-major 4x4.
    pub fn local_mass(&self) -> [f64; 16] {
        let b = &self.basis;
        let mut local = [0.0; 16];
        for qp in 0..4 {
            for a in 0..4 {
                for c in 0..4 {
                    local[4 * a + c] += b.weights[qp] * b.values[qp][a] * b.values[qp][c];
                }
            }
        }
        local
    }
}

/// A mesh bundled with the sparsity patterns and mass matrices shared by all solvers.
#[derive(Debug, Clone)]
pub struct Discretization {
    mesh: Mesh,
    coupled: Arc<Pattern>,
    mass: CscMatrix,
    boundary_mass: BoundaryMass,
    dirichlet: Vec<usize>,
}

impl Discretization {
    pub fn new(mesh: Mesh) -> Self {
        let coupled = Pattern::for_mesh(&mesh, DOFS_PER_NODE);
        let mass = mesh.scalar_mass();
        let boundary_mass = assemble_boundary_mass(&mesh);
        let dirichlet = mesh.dirichlet_dofs();
        Discretization {
            mesh,
            coupled,
            mass,
            boundary_mass,
            dirichlet,
        }
    }

    pub fn with_cells(n: usize) -> Result<Self> {
        Ok(Self::new(Mesh::new(n)?))
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    /// Pattern of coupled `(u_x, u_y, phi)` operators.
    pub fn coupled_pattern(&self) -> &Arc<Pattern> {
        &self.coupled
    }

    /// Scalar Q1 mass matrix.
    pub fn mass(&self) -> &CscMatrix {
        &self.mass
    }

    pub fn boundary_mass(&self) -> &BoundaryMass {
        &self.boundary_mass
    }

    pub fn dirichlet_dofs(&self) -> &[usize] {
        &self.dirichlet
    }

    /// `(f, g)` for nodal scalar fields.
    pub fn l2_inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.mass.bilinear(f, g)
    }

    /// Extracts the `u_y` trace on the Neumann edge as a control-space vector.
    pub fn neumann_trace_uy(&self, field: &FieldVector) -> Control {
        Control::from_vec(
            self.mesh
                .neumann_nodes()
                .into_iter()
                .map(|node| field.get(node, UY))
                .collect(),
        )
    }

    /// Zeroes the clamped displacement dofs of a vector.
    pub fn zero_dirichlet(&self, v: &mut [f64]) {
        for &d in &self.dirichlet {
            v[d] = 0.0;
        }
    }
}

/// Nodal phase-field that is 0 on a horizontal slit around `y = 0.5` and 1 elsewhere.
///
/// A node is cracked when `x` lies in the closed interval `slit` and
/// `|y - 0.5| <= halfwidth`. An empty interval (`slit.0 > slit.1`) gives all ones.
pub fn interpolate_slit_field(slit: (f64, f64), halfwidth: f64, mesh: &Mesh) -> Vec<f64> {
    let tol = 1e-12;
    mesh.nodes()
        .iter()
        .map(|&[x, y]| {
            let in_x = x >= slit.0 - tol && x <= slit.1 + tol;
            let in_y = (y - 0.5).abs() <= halfwidth + tol;
            if in_x && in_y {
                0.0
            } else {
                1.0
            }
        })
        .collect()
}

/// Mass matrix of the Neumann trace space (Q1 on the top edge); tridiagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMass {
    diag: Vec<f64>,
    /// `off[i]` couples entries `i` and `i+1`.
    off: Vec<f64>,
}

impl BoundaryMass {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn off_diag(&self) -> &[f64] {
        &self.off
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        let mut y: Vec<f64> = self.diag.iter().zip(x).map(|(d, v)| d * v).collect();
        for i in 0..n - 1 {
            y[i] += self.off[i] * x[i + 1];
            y[i + 1] += self.off[i] * x[i];
        }
        y
    }

    /// `(x, y)_{Gamma_N}`.
    pub fn inner(&self, x: &[f64], y: &[f64]) -> f64 {
        self.apply(x).iter().zip(y).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self, x: &[f64]) -> f64 {
        self.inner(x, x).max(0.0).sqrt()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.diag.len();
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            m[i][i] = self.diag[i];
            if i + 1 < n {
                m[i][i + 1] = self.off[i];
                m[i + 1][i] = self.off[i];
            }
        }
        m
    }
}

/// Assembles the Neumann-edge mass matrix with two-point Gauss quadrature per edge.
pub fn assemble_boundary_mass(mesh: &Mesh) -> BoundaryMass {
    let n = mesh.n();
    let len = mesh.spacing();
    let mut diag = vec![0.0; n + 1];
    let mut off = vec![0.0; n];
    for e in 0..n {
        for (s, w) in gauss_1d() {
            let (l, r) = (1.0 - s, s);
            diag[e] += w * len * l * l;
            diag[e + 1] += w * len * r * r;
            off[e] += w * len * l * r;
        }
    }
    BoundaryMass { diag, off }
}

/// Coefficients of a coupled `(u_x, u_y, phi)` Q1 field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldVector {
    values: Vec<f64>,
}

impl FieldVector {
    pub fn zeros(mesh: &Mesh) -> Self {
        FieldVector {
            values: vec![0.0; mesh.num_dofs()],
        }
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        FieldVector { values }
    }

    /// Zero displacement with the given nodal phase-field.
    pub fn from_phase_field(phi: &[f64]) -> Self {
        let mut values = vec![0.0; DOFS_PER_NODE * phi.len()];
        for (node, &p) in phi.iter().enumerate() {
            values[dof(node, PHI)] = p;
        }
        FieldVector { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn num_nodes(&self) -> usize {
        self.values.len() / DOFS_PER_NODE
    }

    pub fn get(&self, node: usize, comp: usize) -> f64 {
        self.values[dof(node, comp)]
    }

    pub fn set(&mut self, node: usize, comp: usize, value: f64) {
        self.values[dof(node, comp)] = value;
    }

    /// Nodal values of one component.
    pub fn component(&self, comp: usize) -> Vec<f64> {
        self.values.iter().skip(comp).step_by(DOFS_PER_NODE).copied().collect()
    }

    pub fn phi(&self) -> Vec<f64> {
        self.component(PHI)
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &FieldVector) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += s * b;
        }
    }

    pub fn dot(&self, other: &FieldVector) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, s: f64) -> FieldVector {
        FieldVector {
            values: self.values.iter().map(|v| s * v).collect(),
        }
    }
}

impl Index<usize> for FieldVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

impl IndexMut<usize> for FieldVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.values[i]
    }
}

/// Time-constant y-traction, one value per Neumann node (ascending `x`).
#[derive(Debug, Clone, PartialEq)]
pub struct Control {
    values: Vec<f64>,
}

impl Control {
    pub fn constant(mesh: &Mesh, value: f64) -> Self {
        Control {
            values: vec![value; mesh.n() + 1],
        }
    }

    pub fn zeros(mesh: &Mesh) -> Self {
        Self::constant(mesh, 0.0)
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Control { values }
    }

    /// Samples `f(x)` at the Neumann nodes.
    pub fn from_fn(mesh: &Mesh, f: impl Fn(f64) -> f64) -> Self {
        Control {
            values: (0..=mesh.n()).map(|i| f(i as f64 * mesh.spacing())).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn axpy(&mut self, s: f64, other: &Control) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += s * b;
        }
    }

    pub fn scaled(&self, s: f64) -> Control {
        Control {
            values: self.values.iter().map(|v| s * v).collect(),
        }
    }

    pub fn sub(&self, other: &Control) -> Control {
        Control {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn check_len(&self, mesh: &Mesh) -> Result<()> {
        if self.values.len() != mesh.n() + 1 {
            return Err(Error::DimensionMismatch {
                expected: mesh.n() + 1,
                got: self.values.len(),
            });
        }
        Ok(())
    }
}

impl Index<usize> for Control {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

/// Time-indexed sequence of coupled fields at `t_0 < ... < t_M`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<FieldVector>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Vec<FieldVector>) -> Result<Self> {
        validate_times(&times)?;
        if states.len() != times.len() {
            return Err(Error::DimensionMismatch {
                expected: times.len(),
                got: states.len(),
            });
        }
        Ok(Trajectory { times, states })
    }

    pub fn zeros(mesh: &Mesh, times: &[f64]) -> Self {
        Trajectory {
            times: times.to_vec(),
            states: vec![FieldVector::zeros(mesh); times.len()],
        }
    }

    /// Number of time steps `M`.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    /// `t_m - t_{m-1}`.
    pub fn dt(&self, m: usize) -> f64 {
        self.times[m] - self.times[m - 1]
    }

    pub fn state(&self, m: usize) -> &FieldVector {
        &self.states[m]
    }
}

/// `M + 1` equidistant time points on `[0, T]`.
pub fn uniform_times(steps: usize, end: f64) -> Vec<f64> {
    (0..=steps).map(|m| end * m as f64 / steps as f64).collect()
}

pub fn validate_times(times: &[f64]) -> Result<()> {
    if times.len() < 2 {
        return Err(Error::invalid("times", "need at least two time points"));
    }
    if times[0] != 0.0 {
        return Err(Error::invalid("times", format!("must start at 0, got {}", times[0])));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("times", "must be strictly increasing"));
    }
    Ok(())
}
