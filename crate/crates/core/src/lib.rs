//! Level-set topology optimization of 2D plane-stress structures that trades
//! mean compliance against additive-manufacturing distortion.
//!
//! Distortion is predicted by a layer-by-layer inherent-strain model: the
//! fixed design domain is split into horizontal layers which are activated
//! bottom-up, each newly activated layer receives an eigenstrain load, and the
//! per-layer displacements and stresses are accumulated. The design is a nodal
//! level-set field evolved by a reaction-diffusion equation driven by
//! adjoint-based topological derivatives.
//!
//! The crate is `no_std` (with `alloc`); enable the `std` feature on hosted
//! targets and `parallel` to solve independent layer systems on a rayon pool.
//!
//! Module map:
//!
//! - [`mesh`] structured quadrilateral grid, layer partition and boundary sets
//! - [`fem`] plane-stress elasticity: element kernels, assembly, loads, solver
//! - [`am_build`] building-process simulation, springback and identification
//! - [`levelset`] smoothed Heaviside, ersatz material and the reaction-diffusion update
//! - [`sensitivity`] objectives, adjoints and topological derivatives
//! - [`optimizer`] the outer optimization loop

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod am_build;
pub mod fem;
pub mod levelset;
pub mod mesh;
pub mod optimizer;
pub mod sensitivity;

mod math;
mod par;

pub use am_build::{BuildConfig, BuildError, BuildResult};
pub use fem::{ElasticityModel, Eigenstrain, FemError, SolveError};
pub use levelset::{LevelSetField, RdeParams};
pub use mesh::{BoundarySelector, Edge, Mesh2D, MeshError};
pub use optimizer::{OptConfig, OptError, OptHistory, OptOutcome, Problem};
pub use sensitivity::{ObjectiveValues, SensitivityError};
