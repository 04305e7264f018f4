//! Plane-stress linear elasticity on a structured quadrilateral mesh.
//!
//! [`FemSpace`] bundles the mesh, the material and the per-mesh element
//! kernel and offers the operations every boundary-value problem of the crate
//! is built from: stiffness assembly with per-element scale factors,
//! eigenstrain/traction/body-force loads, and centroid strain and stress
//! recovery. Vector fields are flat dof arrays `[u0x, u0y, u1x, …]`.

mod element;
mod material;
mod solver;
mod sparse;

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::mesh::{BoundarySelector, Mesh2D, MeshError};

pub use element::QuadKernel;
pub use material::{ElasticityModel, Matrix3, Voigt};
pub use solver::{relative_residual, solve, Dirichlet, Factorization, SolveError};
pub use sparse::{CsrMatrix, SparsityPattern};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("Young's modulus must be positive and finite, got {0}")]
    InvalidModulus(f64),
    #[error("Poisson ratio must satisfy 0 <= nu < 0.5, got {0}")]
    InvalidPoissonRatio(f64),
    #[error("traction boundary has no edges")]
    EmptyTractionEdges,
    #[error("field has {found} entries, mesh requires {expected}")]
    FieldSize { expected: usize, found: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// In-plane inherent strain. The shear component is identically zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigenstrain {
    pub ex: f64,
    pub ey: f64,
}

impl Eigenstrain {
    pub const ZERO: Eigenstrain = Eigenstrain { ex: 0.0, ey: 0.0 };

    pub fn new(ex: f64, ey: f64) -> Self {
        Self { ex, ey }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            ex: self.ex * factor,
            ey: self.ey * factor,
        }
    }

    pub fn voigt(&self) -> Voigt {
        [self.ex, self.ey, 0.0]
    }

    pub fn is_zero(&self) -> bool {
        self.ex == 0.0 && self.ey == 0.0
    }
}

/// Uniform traction `t` (force per length) on a set of boundary edges.
#[derive(Debug, Clone, PartialEq)]
pub struct TractionBC {
    pub edges: Vec<[usize; 2]>,
    pub traction: [f64; 2],
}

impl TractionBC {
    pub fn from_selector(
        mesh: &Mesh2D,
        selector: &BoundarySelector,
        traction: [f64; 2],
    ) -> Result<Self, FemError> {
        let nodes = mesh.select_boundary(selector)?;
        let edges = mesh.boundary_edges(&nodes);
        if edges.is_empty() {
            return Err(FemError::EmptyTractionEdges);
        }
        Ok(Self { edges, traction })
    }

    /// Total loaded edge length.
    pub fn length(&self, mesh: &Mesh2D) -> f64 {
        self.edges.iter().map(|e| edge_length(mesh, e)).sum()
    }
}

fn edge_length(mesh: &Mesh2D, edge: &[usize; 2]) -> f64 {
    let a = mesh.nodes()[edge[0]];
    let b = mesh.nodes()[edge[1]];
    crate::math::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]))
}

/// Mesh, material and precomputed element data for one discretization.
#[derive(Debug, Clone)]
pub struct FemSpace<'m> {
    mesh: &'m Mesh2D,
    model: ElasticityModel,
    kernel: QuadKernel,
    pattern: SparsityPattern,
}

impl<'m> FemSpace<'m> {
    pub fn new(mesh: &'m Mesh2D, model: ElasticityModel) -> Self {
        let (hx, hy) = mesh.element_size();
        Self {
            mesh,
            model,
            kernel: QuadKernel::new(hx, hy, &model),
            pattern: SparsityPattern::new(mesh, 2),
        }
    }

    pub fn mesh(&self) -> &'m Mesh2D {
        self.mesh
    }

    pub fn model(&self) -> &ElasticityModel {
        &self.model
    }

    pub fn kernel(&self) -> &QuadKernel {
        &self.kernel
    }

    fn check_elements(&self, len: usize) -> Result<(), FemError> {
        if len != self.mesh.num_elements() {
            return Err(FemError::FieldSize {
                expected: self.mesh.num_elements(),
                found: len,
            });
        }
        Ok(())
    }

    fn check_dofs(&self, len: usize) -> Result<(), FemError> {
        if len != self.mesh.num_dofs() {
            return Err(FemError::FieldSize {
                expected: self.mesh.num_dofs(),
                found: len,
            });
        }
        Ok(())
    }

    /// Global stiffness `Σ_e scale_e K_e`.
    pub fn assemble_stiffness(&self, scales: &[f64]) -> Result<CsrMatrix, FemError> {
        self.check_elements(scales.len())?;
        Ok(self.pattern.assemble(self.kernel.stiffness(), scales))
    }

    /// Load of a uniform eigenstrain over the masked elements,
    /// `Σ_{e ∈ mask} scale_e ∫ Bᵀ C ε* dA`.
    pub fn eigenstrain_load(
        &self,
        eigenstrain: &Eigenstrain,
        mask: &[bool],
        scales: &[f64],
    ) -> Result<Vec<f64>, FemError> {
        self.check_elements(mask.len())?;
        self.check_elements(scales.len())?;
        let fe = self.kernel.eigenstrain_force(&eigenstrain.voigt());
        let mut load = vec![0.0; self.mesh.num_dofs()];
        for (e, conn) in self.mesh.elements().iter().enumerate() {
            if mask[e] {
                scatter_vector(&mut load, conn, &fe, scales[e]);
            }
        }
        Ok(load)
    }

    /// Load of an element-wise eigenstrain field (Voigt, any shear).
    pub fn eigenstrain_field_load(
        &self,
        strains: &[Voigt],
        mask: &[bool],
        scales: &[f64],
    ) -> Result<Vec<f64>, FemError> {
        self.check_elements(strains.len())?;
        self.check_elements(mask.len())?;
        self.check_elements(scales.len())?;
        let mut load = vec![0.0; self.mesh.num_dofs()];
        for (e, conn) in self.mesh.elements().iter().enumerate() {
            if mask[e] {
                let fe = self.kernel.eigenstrain_force(&strains[e]);
                scatter_vector(&mut load, conn, &fe, scales[e]);
            }
        }
        Ok(load)
    }

    /// Consistent load of a uniform traction: each edge passes half its
    /// resultant to either end node.
    pub fn traction_load(&self, bc: &TractionBC) -> Result<Vec<f64>, FemError> {
        if bc.edges.is_empty() {
            return Err(FemError::EmptyTractionEdges);
        }
        let mut load = vec![0.0; self.mesh.num_dofs()];
        for edge in &bc.edges {
            let half = 0.5 * edge_length(self.mesh, edge);
            for &n in edge {
                load[2 * n] += half * bc.traction[0];
                load[2 * n + 1] += half * bc.traction[1];
            }
        }
        Ok(load)
    }

    /// Load of a force density that is constant on each element,
    /// `∫ N_a b_e dA = b_e A_e / 4` for every corner `a`.
    pub fn body_force_load(&self, density: &[[f64; 2]], mask: &[bool]) -> Result<Vec<f64>, FemError> {
        self.check_elements(density.len())?;
        self.check_elements(mask.len())?;
        let quarter = 0.25 * self.kernel.area();
        let mut load = vec![0.0; self.mesh.num_dofs()];
        for (e, conn) in self.mesh.elements().iter().enumerate() {
            if mask[e] {
                for &n in conn {
                    load[2 * n] += quarter * density[e][0];
                    load[2 * n + 1] += quarter * density[e][1];
                }
            }
        }
        Ok(load)
    }

    pub fn element_dofs(&self, u: &[f64], e: usize) -> [f64; 8] {
        let conn = &self.mesh.elements()[e];
        let mut ue = [0.0; 8];
        for (a, &n) in conn.iter().enumerate() {
            ue[2 * a] = u[2 * n];
            ue[2 * a + 1] = u[2 * n + 1];
        }
        ue
    }

    /// Centroid strain of every element.
    pub fn element_strains(&self, u: &[f64]) -> Result<Vec<Voigt>, FemError> {
        self.check_dofs(u.len())?;
        Ok((0..self.mesh.num_elements())
            .map(|e| self.kernel.centroid_strain(&self.element_dofs(u, e)))
            .collect())
    }

    /// Centroid strain and stress `σ = scale · C (ε − ε*·[mask])`.
    pub fn recover_strain_stress(
        &self,
        u: &[f64],
        eigenstrain: Option<(&Eigenstrain, &[bool])>,
        scales: &[f64],
    ) -> Result<(Vec<Voigt>, Vec<Voigt>), FemError> {
        self.check_elements(scales.len())?;
        if let Some((_, mask)) = eigenstrain {
            self.check_elements(mask.len())?;
        }
        let strains = self.element_strains(u)?;
        let stresses = strains
            .iter()
            .enumerate()
            .map(|(e, eps)| {
                let star = match eigenstrain {
                    Some((es, mask)) if mask[e] => es.voigt(),
                    _ => [0.0; 3],
                };
                let s = self.model.stress(&[eps[0] - star[0], eps[1] - star[1], eps[2] - star[2]]);
                [scales[e] * s[0], scales[e] * s[1], scales[e] * s[2]]
            })
            .collect();
        Ok((strains, stresses))
    }
}

fn scatter_vector(load: &mut [f64], conn: &[usize; 4], fe: &[f64; 8], scale: f64) {
    for (a, &n) in conn.iter().enumerate() {
        load[2 * n] += scale * fe[2 * a];
        load[2 * n + 1] += scale * fe[2 * a + 1];
    }
}

/// Dirichlet set holding both components of `nodes` at zero.
pub fn clamp_nodes(num_dofs: usize, nodes: &[usize]) -> Dirichlet {
    let mut bc = Dirichlet::new(num_dofs);
    for &n in nodes {
        bc.fix_node(n, true, true);
    }
    bc
}

/// `Σ_i a_i b_i`.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Displacement of node `n` in a flat dof array.
pub fn node_vector(u: &[f64], n: usize) -> [f64; 2] {
    [u[2 * n], u[2 * n + 1]]
}
