//! Compressed-row storage and element scatter maps for structured meshes.

use alloc::vec;
use alloc::vec::Vec;

use crate::mesh::Mesh2D;

/// Square sparse matrix in CSR form with sorted column indices. Both
/// triangles are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[span.clone()], &self.values[span])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map(|k| vals[k]).unwrap_or(0.0)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum()
            })
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(crate::math::abs(*v)))
    }

    /// `max |K_ij − K_ji|`.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                worst = worst.max(crate::math::abs(v - self.get(j, i)));
            }
        }
        worst
    }

    #[cfg(test)]
    pub(crate) fn values_mut_for_test(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Entrywise `self + other` for matrices sharing a pattern.
    pub fn add(&self, other: &CsrMatrix) -> CsrMatrix {
        assert!(self.row_ptr == other.row_ptr && self.cols == other.cols);
        CsrMatrix {
            n: self.n,
            row_ptr: self.row_ptr.clone(),
            cols: self.cols.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        }
    }
}

/// Sparsity pattern of a nodal field with `dofs_per_node` components and the
/// position of every element-matrix entry in the value array.
#[derive(Debug, Clone)]
pub struct SparsityPattern {
    n: usize,
    dofs_per_node: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    /// `(4·dpn)²` value slots per element, row-major over local dofs.
    scatter: Vec<usize>,
}

impl SparsityPattern {
    pub fn new(mesh: &Mesh2D, dofs_per_node: usize) -> Self {
        let dpn = dofs_per_node;
        let n = mesh.num_nodes() * dpn;

        // Node adjacency via shared elements; at most 9 neighbours on a grid.
        let mut neighbours: Vec<Vec<usize>> = vec![Vec::with_capacity(9); mesh.num_nodes()];
        for conn in mesh.elements() {
            for &a in conn {
                for &b in conn {
                    neighbours[a].push(b);
                }
            }
        }
        for list in &mut neighbours {
            list.sort_unstable();
            list.dedup();
        }

        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for list in &neighbours {
            for _ in 0..dpn {
                for &b in list {
                    for cj in 0..dpn {
                        cols.push(b * dpn + cj);
                    }
                }
                row_ptr.push(cols.len());
            }
        }

        let local = 4 * dpn;
        let mut scatter = Vec::with_capacity(mesh.num_elements() * local * local);
        for conn in mesh.elements() {
            for i in 0..local {
                let gi = conn[i / dpn] * dpn + i % dpn;
                let row_cols = &cols[row_ptr[gi]..row_ptr[gi + 1]];
                for j in 0..local {
                    let gj = conn[j / dpn] * dpn + j % dpn;
                    let k = row_cols
                        .binary_search(&gj)
                        .expect("element dof pair missing from pattern");
                    scatter.push(row_ptr[gi] + k);
                }
            }
        }

        Self {
            n,
            dofs_per_node,
            row_ptr,
            cols,
            scatter,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn dofs_per_node(&self) -> usize {
        self.dofs_per_node
    }

    /// Sums `scale[e] · local` over all elements with `scale[e] != 0`.
    /// Elements are visited in index order so the result is reproducible.
    pub fn assemble<const L: usize>(&self, local: &[[f64; L]; L], scales: &[f64]) -> CsrMatrix {
        debug_assert_eq!(L, 4 * self.dofs_per_node);
        let mut values = vec![0.0; self.cols.len()];
        for (e, &s) in scales.iter().enumerate() {
            if s == 0.0 {
                continue;
            }
            let slots = &self.scatter[e * L * L..(e + 1) * L * L];
            for i in 0..L {
                for j in 0..L {
                    values[slots[i * L + j]] += s * local[i][j];
                }
            }
        }
        CsrMatrix {
            n: self.n,
            row_ptr: self.row_ptr.clone(),
            cols: self.cols.clone(),
            values,
        }
    }
}
