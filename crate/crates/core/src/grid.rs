//! Uniform 1-D cell grid and the discrete Neumann Laplacian.
//!
//! The interval `(0, L)` is split into `N` equal compartments; concentrations
//! live at the cell centers. The Laplacian uses the three-point stencil with
//! ghost cells `z_0 = z_1`, `z_{N+1} = z_N`, which makes it a W-matrix: zero
//! row sums and nonnegative off-diagonal entries.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct Grid1D {
    length: f64,
    cells: usize,
}

/// Serialized form of [`Grid1D`]; validated on the way in.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSpec {
    length: f64,
    cells: usize,
}

impl TryFrom<GridSpec> for Grid1D {
    type Error = Error;
    fn try_from(g: GridSpec) -> Result<Self> {
        Grid1D::new(g.length, g.cells)
    }
}

impl From<Grid1D> for GridSpec {
    fn from(g: Grid1D) -> Self {
        GridSpec { length: g.length, cells: g.cells }
    }
}

impl Grid1D {
    pub fn new(length: f64, cells: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "grid length must be positive and finite, got {length}"
            )));
        }
        if cells == 0 {
            return Err(Error::InvalidParameter("grid needs at least one cell".into()));
        }
        Ok(Self { length, cells })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn cell_count(&self) -> usize {
        self.cells
    }

    /// Mesh size `ρ = L / N`.
    pub fn mesh(&self) -> f64 {
        self.length / self.cells as f64
    }

    /// Center of cell `alpha` (zero-based), `(alpha + 1/2) ρ`.
    pub fn center(&self, alpha: usize) -> f64 {
        (alpha as f64 + 0.5) * self.mesh()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.cells).map(|a| self.center(a)).collect()
    }
}

/// A concentration profile over the cells of a grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Field(Vec<f64>);

impl Field {
    /// Wraps `values`, rejecting non-finite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "field entry {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self(vec![value; n])
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// L∞ distance to `other`.
    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

impl Deref for Field {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Field {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Field> for Vec<f64> {
    fn from(f: Field) -> Self {
        f.0
    }
}

/// Discrete Laplacian with homogeneous Neumann boundary rows, stored as a
/// symmetric tridiagonal stencil scaled by `1/ρ²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteLaplacian {
    grid: Grid1D,
    inv_mesh_sq: f64,
}

pub fn build_laplacian(grid: Grid1D) -> DiscreteLaplacian {
    DiscreteLaplacian::new(grid)
}

impl DiscreteLaplacian {
    pub fn new(grid: Grid1D) -> Self {
        let rho = grid.mesh();
        Self {
            grid,
            inv_mesh_sq: 1.0 / (rho * rho),
        }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn size(&self) -> usize {
        self.grid.cell_count()
    }

    /// Matrix entry `(row, col)`, zero outside the tridiagonal band.
    pub fn entry(&self, row: usize, col: usize) -> f64 {
        let n = self.size();
        if n == 1 {
            return 0.0;
        }
        let w = self.inv_mesh_sq;
        if row == col {
            if row == 0 || row == n - 1 {
                -w
            } else {
                -2.0 * w
            }
        } else if row.abs_diff(col) == 1 {
            w
        } else {
            0.0
        }
    }

    /// Diagonal entries, used when assembling banded Jacobians.
    pub fn diagonal(&self, row: usize) -> f64 {
        self.entry(row, row)
    }

    /// The (symmetric) off-diagonal coupling between neighboring cells.
    pub fn off_diagonal(&self) -> f64 {
        if self.size() == 1 {
            0.0
        } else {
            self.inv_mesh_sq
        }
    }

    pub fn apply(&self, f: &Field) -> Result<Field> {
        check_len(self.size(), f.len())?;
        let mut out = vec![0.0; f.len()];
        self.apply_into(f, &mut out);
        Ok(Field::from_vec_unchecked(out))
    }

    /// `out = D f`. Slices must have the grid's length.
    pub fn apply_into(&self, f: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        self.add_scaled(1.0, f, out);
    }

    /// `out += coef · D f`, written in flux form so that neighboring rows
    /// see exactly opposite contributions.
    pub fn add_scaled(&self, coef: f64, f: &[f64], out: &mut [f64]) {
        let n = self.size();
        debug_assert_eq!(f.len(), n);
        debug_assert_eq!(out.len(), n);
        if coef == 0.0 || n == 1 {
            return;
        }
        let w = coef * self.inv_mesh_sq;
        for a in 0..n - 1 {
            let flux = w * (f[a + 1] - f[a]);
            out[a] += flux;
            out[a + 1] -= flux;
        }
    }

    /// Dense copy of the operator; only meant for tests and small grids.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.size();
        (0..n)
            .map(|i| (0..n).map(|j| self.entry(i, j)).collect())
            .collect()
    }
}
