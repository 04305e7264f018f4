//! Bilinear 4-node rectangle with 2×2 Gauss quadrature.
//!
//! Every element of a structured mesh has the same shape, so all matrices are
//! computed once per mesh and scaled per element. Local node order is
//! counter-clockwise from the bottom-left corner; vector dofs are interleaved
//! `[u0x, u0y, u1x, u1y, …]`.

use super::material::{mat_vec, ElasticityModel, Matrix3, Voigt};

const GAUSS: f64 = 0.577_350_269_189_625_8; // 1/√3
const CORNERS: [[f64; 2]; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];

/// Strain-displacement operator (3×8).
pub type StrainOperator = [[f64; 8]; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct QuadKernel {
    hx: f64,
    hy: f64,
    /// Unit-scale element stiffness.
    stiffness: [[f64; 8]; 8],
    /// `∫ Bᵀ C dA`, maps an eigenstrain to the element force vector.
    eigenstrain_operator: [[f64; 3]; 8],
    /// `B` at the element centroid.
    centroid_strain: StrainOperator,
    laplacian: [[f64; 4]; 4],
    mass: [[f64; 4]; 4],
}

fn shape_gradients(xi: f64, eta: f64, hx: f64, hy: f64) -> [[f64; 2]; 4] {
    let mut grads = [[0.0; 2]; 4];
    for (a, c) in CORNERS.iter().enumerate() {
        let d_xi = 0.25 * c[0] * (1.0 + c[1] * eta);
        let d_eta = 0.25 * c[1] * (1.0 + c[0] * xi);
        grads[a] = [d_xi * 2.0 / hx, d_eta * 2.0 / hy];
    }
    grads
}

fn shape_values(xi: f64, eta: f64) -> [f64; 4] {
    let mut n = [0.0; 4];
    for (a, c) in CORNERS.iter().enumerate() {
        n[a] = 0.25 * (1.0 + c[0] * xi) * (1.0 + c[1] * eta);
    }
    n
}

fn strain_operator(grads: &[[f64; 2]; 4]) -> StrainOperator {
    let mut b = [[0.0; 8]; 3];
    for a in 0..4 {
        b[0][2 * a] = grads[a][0];
        b[1][2 * a + 1] = grads[a][1];
        b[2][2 * a] = grads[a][1];
        b[2][2 * a + 1] = grads[a][0];
    }
    b
}

impl QuadKernel {
    pub fn new(hx: f64, hy: f64, model: &ElasticityModel) -> Self {
        let c: &Matrix3 = model.elasticity();
        let det_j = 0.25 * hx * hy;
        let mut stiffness = [[0.0; 8]; 8];
        let mut eigenstrain_operator = [[0.0; 3]; 8];
        let mut laplacian = [[0.0; 4]; 4];
        let mut mass = [[0.0; 4]; 4];

        for &gx in &[-GAUSS, GAUSS] {
            for &gy in &[-GAUSS, GAUSS] {
                let grads = shape_gradients(gx, gy, hx, hy);
                let n = shape_values(gx, gy);
                let b = strain_operator(&grads);
                // C B, 3×8
                let mut cb = [[0.0; 8]; 3];
                for i in 0..3 {
                    for j in 0..8 {
                        cb[i][j] = (0..3).map(|k| c[i][k] * b[k][j]).sum();
                    }
                }
                for i in 0..8 {
                    for j in 0..8 {
                        stiffness[i][j] += det_j * (0..3).map(|k| b[k][i] * cb[k][j]).sum::<f64>();
                    }
                    for j in 0..3 {
                        eigenstrain_operator[i][j] +=
                            det_j * (0..3).map(|k| b[k][i] * c[k][j]).sum::<f64>();
                    }
                }
                for a in 0..4 {
                    for bb in 0..4 {
                        laplacian[a][bb] += det_j
                            * (grads[a][0] * grads[bb][0] + grads[a][1] * grads[bb][1]);
                        mass[a][bb] += det_j * n[a] * n[bb];
                    }
                }
            }
        }

        Self {
            hx,
            hy,
            stiffness,
            eigenstrain_operator,
            centroid_strain: strain_operator(&shape_gradients(0.0, 0.0, hx, hy)),
            laplacian,
            mass,
        }
    }

    pub fn size(&self) -> (f64, f64) {
        (self.hx, self.hy)
    }

    pub fn area(&self) -> f64 {
        self.hx * self.hy
    }

    pub fn stiffness(&self) -> &[[f64; 8]; 8] {
        &self.stiffness
    }

    pub fn laplacian(&self) -> &[[f64; 4]; 4] {
        &self.laplacian
    }

    pub fn mass(&self) -> &[[f64; 4]; 4] {
        &self.mass
    }

    pub fn centroid_strain_operator(&self) -> &StrainOperator {
        &self.centroid_strain
    }

    /// Element force vector of an eigenstrain, `∫ Bᵀ C ε* dA`.
    pub fn eigenstrain_force(&self, eigenstrain: &Voigt) -> [f64; 8] {
        let mut f = [0.0; 8];
        for (i, row) in self.eigenstrain_operator.iter().enumerate() {
            f[i] = row[0] * eigenstrain[0] + row[1] * eigenstrain[1] + row[2] * eigenstrain[2];
        }
        f
    }

    /// Strain at the centroid from the element dof vector. For a rectangle
    /// this equals the element average of `B u`.
    pub fn centroid_strain(&self, ue: &[f64; 8]) -> Voigt {
        let b = &self.centroid_strain;
        let mut eps = [0.0; 3];
        for i in 0..3 {
            eps[i] = (0..8).map(|j| b[i][j] * ue[j]).sum();
        }
        eps
    }

    /// Centroid stress `C (B u − ε*)` for unit scale.
    pub fn centroid_stress(&self, model: &ElasticityModel, ue: &[f64; 8], eigenstrain: &Voigt) -> Voigt {
        let eps = self.centroid_strain(ue);
        mat_vec(
            model.elasticity(),
            &[eps[0] - eigenstrain[0], eps[1] - eigenstrain[1], eps[2] - eigenstrain[2]],
        )
    }
}
