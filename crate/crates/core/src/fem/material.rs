//! Isotropic plane-stress material and the matching polarization tensor.
//!
//! All 2D tensors use Voigt notation with engineering shear strain,
//! `ε = [ε_xx, ε_yy, γ_xy]` with `γ_xy = 2 ε_xy`, and `σ = [σ_xx, σ_yy, σ_xy]`.
//! With that convention `σ = C ε` and the double contraction
//! `a : A : b = aᵀ Â b` hold with the 3×3 matrices stored here.

use super::FemError;

pub type Voigt = [f64; 3];
pub type Matrix3 = [[f64; 3]; 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticityModel {
    youngs_modulus: f64,
    poisson_ratio: f64,
    elasticity: Matrix3,
    polarization: Matrix3,
}

impl ElasticityModel {
    /// Plane-stress model for Young's modulus `E > 0` and `0 ≤ ν < 0.5`.
    pub fn plane_stress(youngs_modulus: f64, poisson_ratio: f64) -> Result<Self, FemError> {
        if !(youngs_modulus > 0.0) || !youngs_modulus.is_finite() {
            return Err(FemError::InvalidModulus(youngs_modulus));
        }
        if !(0.0..0.5).contains(&poisson_ratio) {
            return Err(FemError::InvalidPoissonRatio(poisson_ratio));
        }
        let e = youngs_modulus;
        let nu = poisson_ratio;

        let c = e / (1.0 - nu * nu);
        let elasticity = [
            [c, c * nu, 0.0],
            [c * nu, c, 0.0],
            [0.0, 0.0, c * (1.0 - nu) / 2.0],
        ];

        // A_ijkl = α δ_ij δ_kl + β (δ_ik δ_jl + δ_il δ_jk)
        let scale = 1.0 / ((1.0 + nu) * (1.0 + nu));
        let alpha = -scale * (1.0 - 6.0 * nu + nu * nu) * e / ((1.0 - nu) * (1.0 - nu));
        let beta = scale * 2.0 * e;
        // A_1111 = α + 2β, A_1122 = α, and the four A_1212-type entries
        // collapse onto γ_xy² with coefficient β.
        let polarization = [
            [alpha + 2.0 * beta, alpha, 0.0],
            [alpha, alpha + 2.0 * beta, 0.0],
            [0.0, 0.0, beta],
        ];

        Ok(Self {
            youngs_modulus,
            poisson_ratio,
            elasticity,
            polarization,
        })
    }

    pub fn youngs_modulus(&self) -> f64 {
        self.youngs_modulus
    }

    pub fn poisson_ratio(&self) -> f64 {
        self.poisson_ratio
    }

    /// Plane-stress elasticity matrix `C`.
    pub fn elasticity(&self) -> &Matrix3 {
        &self.elasticity
    }

    /// Polarization tensor `A` as a Voigt matrix.
    pub fn polarization(&self) -> &Matrix3 {
        &self.polarization
    }

    /// `σ = C ε`.
    pub fn stress(&self, strain: &Voigt) -> Voigt {
        mat_vec(&self.elasticity, strain)
    }

    /// `ε = C⁻¹ σ`.
    pub fn strain_from_stress(&self, stress: &Voigt) -> Voigt {
        let e = self.youngs_modulus;
        let nu = self.poisson_ratio;
        [
            (stress[0] - nu * stress[1]) / e,
            (stress[1] - nu * stress[0]) / e,
            2.0 * (1.0 + nu) * stress[2] / e,
        ]
    }

    /// `a : A : b`.
    pub fn polarized_product(&self, a: &Voigt, b: &Voigt) -> f64 {
        dot3(a, &mat_vec(&self.polarization, b))
    }
}

pub(crate) fn mat_vec(m: &Matrix3, v: &Voigt) -> Voigt {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

pub(crate) fn dot3(a: &Voigt, b: &Voigt) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Full 4th-order tensor contraction `a_ij A_ijkl b_kl` from the index form,
    /// with tensor (not engineering) shear components.
    fn tensor_contraction(e: f64, nu: f64, a: &Voigt, b: &Voigt) -> f64 {
        let delta = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
        let s = 1.0 / ((1.0 + nu) * (1.0 + nu));
        let tensor = |i, j, k, l| {
            s * (-(1.0 - 6.0 * nu + nu * nu) * e / ((1.0 - nu) * (1.0 - nu)) * delta(i, j) * delta(k, l)
                + 2.0 * e * (delta(i, k) * delta(j, l) + delta(i, l) * delta(j, k)))
        };
        let full = |v: &Voigt| [[v[0], v[2] / 2.0], [v[2] / 2.0, v[1]]];
        let ta = full(a);
        let tb = full(b);
        let mut sum = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        sum += ta[i][j] * tensor(i, j, k, l) * tb[k][l];
                    }
                }
            }
        }
        sum
    }

    #[test]
    fn c11_for_aluminium_alloy() {
        let m = ElasticityModel::plane_stress(75000.0, 0.34).unwrap();
        let expected = 75000.0 / (1.0 - 0.34 * 0.34);
        assert_relative_eq!(m.elasticity()[0][0], expected, max_relative = 1e-15);
        assert_relative_eq!(m.elasticity()[0][0], 84803.26, epsilon = 0.01);
    }

    #[test]
    fn zero_poisson_decouples() {
        let m = ElasticityModel::plane_stress(1.0, 0.0).unwrap();
        assert_eq!(
            *m.elasticity(),
            [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.5]]
        );
    }

    #[test]
    fn polarization_uniaxial_at_zero_poisson() {
        let m = ElasticityModel::plane_stress(1.0, 0.0).unwrap();
        let strain = [1.0, 0.0, 0.0];
        assert_relative_eq!(m.polarized_product(&strain, &strain), 3.0, max_relative = 1e-15);
    }

    #[test]
    fn voigt_polarization_matches_index_form() {
        let m = ElasticityModel::plane_stress(75000.0, 0.34).unwrap();
        let a = [0.3, -1.2, 0.7];
        let b = [-0.4, 0.25, 1.9];
        let expected = tensor_contraction(75000.0, 0.34, &a, &b);
        assert_relative_eq!(m.polarized_product(&a, &b), expected, max_relative = 1e-13);
        assert_relative_eq!(m.polarized_product(&b, &a), expected, max_relative = 1e-13);
    }

    #[test]
    fn compliance_inverts_elasticity() {
        let m = ElasticityModel::plane_stress(210.0, 0.3).unwrap();
        let strain = [1e-3, -4e-4, 2.5e-4];
        let back = m.strain_from_stress(&m.stress(&strain));
        for i in 0..3 {
            assert_relative_eq!(back[i], strain[i], max_relative = 1e-12);
        }
    }

    #[test]
    fn rejects_out_of_range_parameters() {
        assert_eq!(
            ElasticityModel::plane_stress(1.0, 0.5),
            Err(FemError::InvalidPoissonRatio(0.5))
        );
        assert_eq!(
            ElasticityModel::plane_stress(1.0, -0.1),
            Err(FemError::InvalidPoissonRatio(-0.1))
        );
        assert_eq!(
            ElasticityModel::plane_stress(0.0, 0.3),
            Err(FemError::InvalidModulus(0.0))
        );
    }
}
