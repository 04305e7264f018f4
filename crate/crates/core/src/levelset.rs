//! Level-set design field, smoothed Heaviside projection, ersatz material
//! and the reaction-diffusion update with volume control.
//!
//! `φ` lives on the nodes and is clamped to `[−1, 1]`. Element quantities use
//! the mean of the element's four nodal values.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::fem::{CsrMatrix, Dirichlet, Factorization, QuadKernel, SolveError, SparsityPattern};
use crate::mesh::Mesh2D;

/// Absolute tolerance on the volume fraction accepted by the bisection.
pub const VOLUME_TOLERANCE: f64 = 1e-6;
const MAX_BRACKET_EXPANSIONS: usize = 60;
const MAX_BISECTIONS: usize = 60;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LevelSetError {
    #[error("regularization parameter tau must be finite and >= 0, got {0}")]
    InvalidTau(f64),
    #[error("update gain K must be finite and > 0, got {0}")]
    InvalidGain(f64),
    #[error("time step must be finite and > 0, got {0}")]
    InvalidTimeStep(f64),
    #[error("length scale must be finite and > 0, got {0}")]
    InvalidLengthScale(f64),
    #[error("target volume fraction must lie in (0, 1], got {0}")]
    InvalidTarget(f64),
    #[error("field has {found} entries, expected {expected}")]
    FieldSize { expected: usize, found: usize },
    #[error("non-finite sensitivity at node {0}")]
    NonFiniteSensitivity(usize),
    #[error("volume bracket not found for target {target} (volume {volume} at shift {shift})")]
    Bracket { target: f64, volume: f64, shift: f64 },
    #[error("reaction-diffusion solve failed: {0}")]
    Solve(#[from] SolveError),
}

/// Smoothed Heaviside: a C¹ quintic ramp on `[−w, w]`.
pub fn heaviside(phi: f64, w: f64) -> f64 {
    if phi > w {
        1.0
    } else if phi < -w {
        0.0
    } else {
        let r = phi / w;
        0.5 + r * (15.0 / 16.0 - r * r * (5.0 / 8.0 - 3.0 / 16.0 * r * r))
    }
}

/// `dH/dφ`.
pub fn heaviside_derivative(phi: f64, w: f64) -> f64 {
    if phi.abs() > w {
        0.0
    } else {
        let r2 = (phi / w) * (phi / w);
        15.0 / (16.0 * w) * (1.0 - r2) * (1.0 - r2)
    }
}

/// Stiffness multiplier `(1 − d) H + d`.
pub fn ersatz_scale(phi: f64, w: f64, d: f64) -> f64 {
    (1.0 - d) * heaviside(phi, w) + d
}

/// 1 in material (`φ ≥ 0`), 0 in void.
pub fn characteristic(phi: f64) -> f64 {
    if phi >= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// `Σ_e H(φ̄_e) A_e / |D|`.
pub fn volume_fraction(mesh: &Mesh2D, phi: &[f64], w: f64) -> f64 {
    let sum: f64 = mesh.element_means(phi).iter().map(|&p| heaviside(p, w)).sum();
    sum / mesh.num_elements() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetField {
    pub values: Vec<f64>,
    /// Heaviside half width `w`.
    pub width: f64,
    /// Void stiffness ratio `d`.
    pub void_ratio: f64,
}

impl LevelSetField {
    pub fn uniform(mesh: &Mesh2D, value: f64, width: f64, void_ratio: f64) -> Self {
        Self {
            values: vec![value.clamp(-1.0, 1.0); mesh.num_nodes()],
            width,
            void_ratio,
        }
    }

    pub fn element_heaviside(&self, mesh: &Mesh2D) -> Vec<f64> {
        mesh.element_means(&self.values)
            .iter()
            .map(|&p| heaviside(p, self.width))
            .collect()
    }

    pub fn element_scales(&self, mesh: &Mesh2D) -> Vec<f64> {
        mesh.element_means(&self.values)
            .iter()
            .map(|&p| ersatz_scale(p, self.width, self.void_ratio))
            .collect()
    }

    pub fn nodal_heaviside(&self) -> Vec<f64> {
        self.values.iter().map(|&p| heaviside(p, self.width)).collect()
    }

    pub fn volume_fraction(&self, mesh: &Mesh2D) -> f64 {
        volume_fraction(mesh, &self.values, self.width)
    }

    /// `max_k |φ_k − φ_mirror(k)|` about the vertical centerline.
    pub fn mirror_deviation(&self, mesh: &Mesh2D) -> f64 {
        (0..mesh.num_nodes())
            .map(|k| (self.values[k] - self.values[mesh.mirror_node(k)]).abs())
            .fold(0.0, f64::max)
    }

    /// Number of edge-connected groups of elements with `H < 0.5`.
    pub fn void_components(&self, mesh: &Mesh2D) -> usize {
        let (nx, ny) = (mesh.nx(), mesh.ny());
        let void: Vec<bool> = self.element_heaviside(mesh).iter().map(|&h| h < 0.5).collect();
        let mut seen = vec![false; void.len()];
        let mut stack = Vec::new();
        let mut count = 0;
        for start in 0..void.len() {
            if !void[start] || seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(e) = stack.pop() {
                let (c, r) = (e % nx, e / nx);
                let mut visit = |c: usize, r: usize| {
                    let n = mesh.element_index(c, r);
                    if void[n] && !seen[n] {
                        seen[n] = true;
                        stack.push(n);
                    }
                };
                if c > 0 {
                    visit(c - 1, r);
                }
                if c + 1 < nx {
                    visit(c + 1, r);
                }
                if r > 0 {
                    visit(c, r - 1);
                }
                if r + 1 < ny {
                    visit(c, r + 1);
                }
            }
        }
        count
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdeParams {
    /// Regularization `τ`.
    pub tau: f64,
    /// Update gain `K`.
    pub gain: f64,
    /// Fictitious time step `Δt`.
    pub dt: f64,
    /// Length `L` that makes the diffusion term dimensionless: the Laplacian
    /// is weighted by `τ L²`.
    pub length_scale: f64,
}

impl RdeParams {
    pub fn validate(&self) -> Result<(), LevelSetError> {
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return Err(LevelSetError::InvalidTau(self.tau));
        }
        if !(self.gain.is_finite() && self.gain > 0.0) {
            return Err(LevelSetError::InvalidGain(self.gain));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(LevelSetError::InvalidTimeStep(self.dt));
        }
        if !(self.length_scale.is_finite() && self.length_scale > 0.0) {
            return Err(LevelSetError::InvalidLengthScale(self.length_scale));
        }
        Ok(())
    }
}

/// Semi-implicit reaction-diffusion stepper for one mesh and parameter set:
/// `(M + Δt K τ L² Lap) φ′ = M (φ − Δt K (F̃′ + λ))`, followed by clamping.
/// The left-hand matrix is factored once.
#[derive(Debug, Clone)]
pub struct ReactionDiffusion {
    params: RdeParams,
    mass: CsrMatrix,
    laplacian: CsrMatrix,
    system: Factorization,
}

impl ReactionDiffusion {
    pub fn new(mesh: &Mesh2D, kernel: &QuadKernel, params: RdeParams) -> Result<Self, LevelSetError> {
        params.validate()?;
        let pattern = SparsityPattern::new(mesh, 1);
        let ones = vec![1.0; mesh.num_elements()];
        let mass = pattern.assemble(kernel.mass(), &ones);
        let laplacian = pattern.assemble(kernel.laplacian(), &ones);
        let c = params.dt * params.gain * params.tau * params.length_scale * params.length_scale;
        let mut local = *kernel.mass();
        for (row, lrow) in local.iter_mut().zip(kernel.laplacian()) {
            for (v, l) in row.iter_mut().zip(lrow) {
                *v += c * l;
            }
        }
        let system = Factorization::new(&pattern.assemble(&local, &ones), &Dirichlet::new(mesh.num_nodes()))?;
        Ok(Self {
            params,
            mass,
            laplacian,
            system,
        })
    }

    pub fn params(&self) -> &RdeParams {
        &self.params
    }

    pub fn laplacian(&self) -> &CsrMatrix {
        &self.laplacian
    }

    /// Discrete Dirichlet energy `φᵀ Lap φ`.
    pub fn dirichlet_energy(&self, phi: &[f64]) -> f64 {
        crate::fem::dot(phi, &self.laplacian.mul_vec(phi))
    }

    fn check(&self, phi: &[f64], sensitivity: &[f64]) -> Result<(), LevelSetError> {
        let n = self.mass.dim();
        for len in [phi.len(), sensitivity.len()] {
            if len != n {
                return Err(LevelSetError::FieldSize { expected: n, found: len });
            }
        }
        if let Some(k) = sensitivity.iter().position(|v| !v.is_finite()) {
            return Err(LevelSetError::NonFiniteSensitivity(k));
        }
        Ok(())
    }

    /// Unclamped step with zero shift.
    fn base(&self, phi: &[f64], sensitivity: &[f64]) -> Result<Vec<f64>, LevelSetError> {
        self.check(phi, sensitivity)?;
        let kdt = self.params.gain * self.params.dt;
        let explicit: Vec<f64> = phi.iter().zip(sensitivity).map(|(p, f)| p - kdt * f).collect();
        Ok(self.system.solve(&self.mass.mul_vec(&explicit))?)
    }

    /// One step without clamping. Because the diffusion operator annihilates
    /// constants, the shift `λ` enters as a uniform offset `−Δt K λ`.
    pub fn evolve(&self, phi: &[f64], sensitivity: &[f64], shift: f64) -> Result<Vec<f64>, LevelSetError> {
        let offset = self.params.gain * self.params.dt * shift;
        Ok(self.base(phi, sensitivity)?.into_iter().map(|v| v - offset).collect())
    }

    /// One clamped step.
    pub fn step(&self, phi: &[f64], sensitivity: &[f64], shift: f64) -> Result<Vec<f64>, LevelSetError> {
        Ok(clamp_field(self.evolve(phi, sensitivity, shift)?))
    }

    /// Step whose shift is chosen so the volume fraction meets `target`.
    /// A step that is already feasible is returned unshifted with `λ = 0`.
    pub fn volume_controlled_step(
        &self,
        mesh: &Mesh2D,
        phi: &[f64],
        sensitivity: &[f64],
        w: f64,
        target: f64,
    ) -> Result<(Vec<f64>, f64), LevelSetError> {
        if !(target > 0.0 && target <= 1.0) {
            return Err(LevelSetError::InvalidTarget(target));
        }
        let base = self.base(phi, sensitivity)?;
        let kdt = self.params.gain * self.params.dt;
        let at = |shift: f64| -> Vec<f64> { base.iter().map(|v| (v - kdt * shift).clamp(-1.0, 1.0)).collect() };
        let vol = |shift: f64| volume_fraction(mesh, &at(shift), w);

        let v0 = vol(0.0);
        if v0 <= target + VOLUME_TOLERANCE {
            return Ok((at(0.0), 0.0));
        }
        let mut lo = 0.0;
        let mut hi = 1.0;
        let mut v_hi = vol(hi);
        let mut expansions = 0;
        while v_hi > target {
            if expansions == MAX_BRACKET_EXPANSIONS || !v_hi.is_finite() {
                return Err(LevelSetError::Bracket {
                    target,
                    volume: v_hi,
                    shift: hi,
                });
            }
            lo = hi;
            hi *= 2.0;
            v_hi = vol(hi);
            expansions += 1;
        }
        if (v_hi - target).abs() <= VOLUME_TOLERANCE {
            return Ok((at(hi), hi));
        }
        let mut shift = hi;
        for _ in 0..MAX_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            let v = vol(mid);
            if v > target {
                lo = mid;
            } else {
                hi = mid;
            }
            shift = hi;
            if (v - target).abs() <= VOLUME_TOLERANCE {
                shift = mid;
                break;
            }
        }
        Ok((at(shift), shift))
    }
}

pub fn clamp_field(mut phi: Vec<f64>) -> Vec<f64> {
    for v in &mut phi {
        *v = v.clamp(-1.0, 1.0);
    }
    phi
}

/// One clamped reaction-diffusion step on `mesh` (factors the system anew).
pub fn rde_step(
    mesh: &Mesh2D,
    kernel: &QuadKernel,
    phi: &[f64],
    sensitivity: &[f64],
    params: RdeParams,
    shift: f64,
) -> Result<Vec<f64>, LevelSetError> {
    ReactionDiffusion::new(mesh, kernel, params)?.step(phi, sensitivity, shift)
}

/// Volume target of the next iteration: shrink by 3 % per step until `v_max`.
pub fn volume_trajectory(previous: f64, v_max: f64) -> f64 {
    v_max.max(previous * 0.97)
}
