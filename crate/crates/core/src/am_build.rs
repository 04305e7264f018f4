//! Layer-by-layer building-process simulation with the inherent strain
//! method, the springback ("cutting") analysis and inherent strain
//! identification from a measured top-surface profile.
//!
//! Step `i` of the build activates layers `1..=i`: active elements carry the
//! (possibly ersatz-scaled) material stiffness, inactive ones a tiny fraction
//! of it, and the newest layer receives the eigenstrain load. Nodes that touch
//! no active element are held at zero so the step solve lives on the active
//! domain only. The per-step displacements and stresses are summed.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::fem::{
    dot, Dirichlet, ElasticityModel, Eigenstrain, Factorization, FemError, FemSpace, SolveError, Voigt,
};
use crate::mesh::{BoundarySelector, Mesh2D, MeshError};
use crate::par;

pub const DEFAULT_INACTIVE_RATIO: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BuildError {
    #[error("inactive stiffness ratio must lie in (0, 1e-3], got {0}")]
    InvalidInactiveRatio(f64),
    #[error("build uses {config} layers but the mesh is partitioned into {mesh}")]
    LayerMismatch { config: usize, mesh: usize },
    #[error("material scale of element {element} must lie in (0, 1], got {value}")]
    MaterialScale { element: usize, value: f64 },
    #[error("layer {layer}: {source}")]
    Solve { layer: usize, source: SolveError },
    #[error("springback: {0}")]
    Springback(SolveError),
    #[error("measured profile has {found} samples, the top surface has {expected}")]
    ProfileLength { expected: usize, found: usize },
    #[error("measured profile station {index} at x = {found} does not match mesh x = {expected}")]
    ProfileStation { index: usize, expected: f64, found: f64 },
    #[error("unit-strain profile is identically zero; geometry cannot identify a strain")]
    DegenerateProfile,
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildConfig {
    /// Number of build layers `m`.
    pub layers: usize,
    /// Stiffness scale of not-yet-built material.
    pub inactive_ratio: f64,
    pub eigenstrain: Eigenstrain,
    /// Build plate `Γ_u`.
    pub substrate: BoundarySelector,
}

impl BuildConfig {
    pub fn new(layers: usize, eigenstrain: Eigenstrain, substrate: BoundarySelector) -> Self {
        Self {
            layers,
            inactive_ratio: DEFAULT_INACTIVE_RATIO,
            eigenstrain,
            substrate,
        }
    }

    pub fn with_eigenstrain(&self, eigenstrain: Eigenstrain) -> Self {
        Self {
            eigenstrain,
            ..self.clone()
        }
    }

    pub fn validate(&self, mesh: &Mesh2D) -> Result<(), BuildError> {
        if !(self.inactive_ratio > 0.0 && self.inactive_ratio <= 1e-3) {
            return Err(BuildError::InvalidInactiveRatio(self.inactive_ratio));
        }
        if self.layers != mesh.layers() {
            return Err(BuildError::LayerMismatch {
                config: self.layers,
                mesh: mesh.layers(),
            });
        }
        mesh.select_boundary(&self.substrate)?;
        Ok(())
    }

    /// Element stiffness scales of build step `i` (1-based).
    pub fn step_scales(&self, mesh: &Mesh2D, material_scale: &[f64], i: usize) -> Vec<f64> {
        mesh.layer_tags()
            .iter()
            .zip(material_scale)
            .map(|(&l, &s)| if l <= i { s } else { s * self.inactive_ratio })
            .collect()
    }

    /// Dirichlet set of build step `i`: the substrate plus every node that
    /// touches no active element.
    pub fn step_dirichlet(&self, mesh: &Mesh2D, i: usize) -> Result<Dirichlet, BuildError> {
        let mut touched = vec![false; mesh.num_nodes()];
        for (conn, &l) in mesh.elements().iter().zip(mesh.layer_tags()) {
            if l <= i {
                for &n in conn {
                    touched[n] = true;
                }
            }
        }
        let mut bc = Dirichlet::new(mesh.num_dofs());
        for n in mesh.select_boundary(&self.substrate)? {
            bc.fix_node(n, true, true);
        }
        for (n, &t) in touched.iter().enumerate() {
            if !t {
                bc.fix_node(n, true, true);
            }
        }
        Ok(bc)
    }
}

/// Fields of one build step.
#[derive(Debug, Clone)]
pub struct LayerState {
    pub displacement: Vec<f64>,
    /// Centroid stress per element.
    pub stress: Vec<Voigt>,
    factorization: Option<Factorization>,
}

impl LayerState {
    pub fn factorization(&self) -> Option<&Factorization> {
        self.factorization.as_ref()
    }
}

#[derive(Debug, Clone)]
pub struct BuildResult {
    pub steps: Vec<LayerState>,
    /// `Σ_i u_i`.
    pub displacement: Vec<f64>,
    /// `Σ_i σ_i`.
    pub stress: Vec<Voigt>,
    pub material_scale: Vec<f64>,
    pub config: BuildConfig,
}

impl BuildResult {
    pub fn factorizations_retained(&self) -> bool {
        self.steps.iter().all(|s| s.factorization.is_some())
    }

    /// Drops retained step factorizations.
    pub fn release_factorizations(&mut self) {
        for s in &mut self.steps {
            s.factorization = None;
        }
    }
}

fn check_scales(scales: &[f64]) -> Result<(), BuildError> {
    for (e, &s) in scales.iter().enumerate() {
        if !(s > 0.0 && s <= 1.0) {
            return Err(BuildError::MaterialScale { element: e, value: s });
        }
    }
    Ok(())
}

/// Runs the building process on a fresh [`FemSpace`].
pub fn simulate_build(
    mesh: &Mesh2D,
    model: &ElasticityModel,
    config: &BuildConfig,
    material_scale: &[f64],
) -> Result<BuildResult, BuildError> {
    let space = FemSpace::new(mesh, *model);
    simulate_build_on(&space, config, material_scale, false)
}

/// Runs the building process. With `retain_factorizations` every step keeps
/// its Cholesky factor for later adjoint solves.
pub fn simulate_build_on(
    space: &FemSpace<'_>,
    config: &BuildConfig,
    material_scale: &[f64],
    retain_factorizations: bool,
) -> Result<BuildResult, BuildError> {
    let mesh = space.mesh();
    config.validate(mesh)?;
    if material_scale.len() != mesh.num_elements() {
        return Err(FemError::FieldSize {
            expected: mesh.num_elements(),
            found: material_scale.len(),
        }
        .into());
    }
    check_scales(material_scale)?;

    let steps = par::map_indexed(config.layers, |k| {
        solve_step(space, config, material_scale, k + 1, retain_factorizations)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;

    let mut displacement = vec![0.0; mesh.num_dofs()];
    let mut stress = vec![[0.0; 3]; mesh.num_elements()];
    for step in &steps {
        for (acc, v) in displacement.iter_mut().zip(&step.displacement) {
            *acc += v;
        }
        for (acc, s) in stress.iter_mut().zip(&step.stress) {
            for c in 0..3 {
                acc[c] += s[c];
            }
        }
    }
    Ok(BuildResult {
        steps,
        displacement,
        stress,
        material_scale: material_scale.to_vec(),
        config: config.clone(),
    })
}

fn solve_step(
    space: &FemSpace<'_>,
    config: &BuildConfig,
    material_scale: &[f64],
    i: usize,
    retain: bool,
) -> Result<LayerState, BuildError> {
    let mesh = space.mesh();
    let scales = config.step_scales(mesh, material_scale, i);
    let mask = mesh.layer_mask(i)?;
    let bc = config.step_dirichlet(mesh, i)?;
    let stiffness = space.assemble_stiffness(&scales)?;
    let load = space.eigenstrain_load(&config.eigenstrain, &mask.inherent, &scales)?;
    let fact = Factorization::new(&stiffness, &bc).map_err(|source| BuildError::Solve { layer: i, source })?;
    let u = fact.solve(&load).map_err(|source| BuildError::Solve { layer: i, source })?;
    let (_, stress) = space.recover_strain_stress(&u, Some((&config.eigenstrain, &mask.inherent)), &scales)?;
    Ok(LayerState {
        displacement: u,
        stress,
        factorization: if retain { Some(fact) } else { None },
    })
}

/// Springback after cutting the part from its substrate: the elastic strain
/// stored in the released elements relaxes while only `fixture` holds the
/// part. Returns the springback displacement.
pub fn springback_cut(
    mesh: &Mesh2D,
    model: &ElasticityModel,
    build: &BuildResult,
    fixture: &BoundarySelector,
    release_mask: &[bool],
) -> Result<Vec<f64>, BuildError> {
    let space = FemSpace::new(mesh, *model);
    let scales = &build.material_scale;
    if release_mask.len() != mesh.num_elements() {
        return Err(FemError::FieldSize {
            expected: mesh.num_elements(),
            found: release_mask.len(),
        }
        .into());
    }
    // Released eigenstrain −ε^el with ε^el = (s_e C)⁻¹ σ_e.
    let released: Vec<Voigt> = build
        .stress
        .iter()
        .zip(scales)
        .map(|(s, &k)| {
            let el = model.strain_from_stress(s);
            [-el[0] / k, -el[1] / k, -el[2] / k]
        })
        .collect();
    let stiffness = space.assemble_stiffness(scales)?;
    let load = space.eigenstrain_field_load(&released, release_mask, scales)?;
    let mut bc = Dirichlet::new(mesh.num_dofs());
    for n in mesh.select_boundary(fixture)? {
        bc.fix_node(n, true, true);
    }
    crate::fem::solve(&stiffness, &load, &bc).map_err(BuildError::Springback)
}

/// Vertical displacement at the top-edge nodes, ordered by x.
pub fn top_surface_profile(mesh: &Mesh2D, displacement: &[f64]) -> Vec<(f64, f64)> {
    mesh.top_nodes()
        .into_iter()
        .map(|n| (mesh.nodes()[n][0], displacement[2 * n + 1]))
        .collect()
}

/// Cutting setup of the identification experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct CutSetup {
    pub fixture: BoundarySelector,
    pub release_mask: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Identification {
    /// In-plane inherent strain; the build-direction component is zero.
    pub strain: f64,
    /// `‖ε p_unit − p_measured‖₂`.
    pub residual: f64,
}

/// Springback profile of a full build at `eigenstrain`.
pub fn forward_profile(
    mesh: &Mesh2D,
    model: &ElasticityModel,
    template: &BuildConfig,
    cut: &CutSetup,
    eigenstrain: Eigenstrain,
) -> Result<Vec<(f64, f64)>, BuildError> {
    let config = template.with_eigenstrain(eigenstrain);
    let build = simulate_build(mesh, model, &config, &vec![1.0; mesh.num_elements()])?;
    let u = springback_cut(mesh, model, &build, &cut.fixture, &cut.release_mask)?;
    Ok(top_surface_profile(mesh, &u))
}

/// Least-squares fit of the in-plane inherent strain to a measured
/// springback profile. The forward map is linear in the strain, so the fit is
/// a single projection onto the unit-strain profile.
pub fn identify_inherent_strain(
    mesh: &Mesh2D,
    model: &ElasticityModel,
    template: &BuildConfig,
    cut: &CutSetup,
    measured: &[(f64, f64)],
) -> Result<Identification, BuildError> {
    let unit = forward_profile(mesh, model, template, cut, Eigenstrain::new(1.0, 0.0))?;
    if measured.len() != unit.len() {
        return Err(BuildError::ProfileLength {
            expected: unit.len(),
            found: measured.len(),
        });
    }
    let tol = 1e-6 * mesh.width().max(mesh.height());
    for (index, (u, m)) in unit.iter().zip(measured).enumerate() {
        if (u.0 - m.0).abs() > tol {
            return Err(BuildError::ProfileStation {
                index,
                expected: u.0,
                found: m.0,
            });
        }
    }
    let p: Vec<f64> = unit.iter().map(|s| s.1).collect();
    let q: Vec<f64> = measured.iter().map(|s| s.1).collect();
    let pp = dot(&p, &p);
    if pp == 0.0 || !pp.is_finite() {
        return Err(BuildError::DegenerateProfile);
    }
    let strain = dot(&p, &q) / pp;
    let residual = crate::math::sqrt(p.iter().zip(&q).map(|(a, b)| (strain * a - b) * (strain * a - b)).sum());
    Ok(Identification { strain, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{clamp_nodes, solve};
    use approx::assert_relative_eq;

    fn model() -> ElasticityModel {
        ElasticityModel::plane_stress(75000.0, 0.34).unwrap()
    }

    fn full_bottom(layers: usize, es: Eigenstrain) -> BuildConfig {
        BuildConfig::new(layers, es, BoundarySelector::BottomEdge)
    }

    fn max_abs(v: &[f64]) -> f64 {
        v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    #[test]
    fn zero_strain_builds_nothing() {
        let mesh = Mesh2D::structured(4.0, 2.0, 4, 4, 4).unwrap();
        let r = simulate_build(&mesh, &model(), &full_bottom(4, Eigenstrain::ZERO), &[1.0; 16]).unwrap();
        assert!(r.displacement.iter().all(|&v| v == 0.0));
        assert!(r.stress.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn single_layer_is_one_static_solve() {
        let mesh = Mesh2D::structured(3.0, 1.0, 6, 2, 1).unwrap();
        let es = Eigenstrain::new(-0.25, -0.1);
        let r = simulate_build(&mesh, &model(), &full_bottom(1, es), &[1.0; 12]).unwrap();
        let space = FemSpace::new(&mesh, model());
        let k = space.assemble_stiffness(&[1.0; 12]).unwrap();
        let f = space.eigenstrain_load(&es, &[true; 12], &[1.0; 12]).unwrap();
        let u = solve(&k, &f, &clamp_nodes(mesh.num_dofs(), &mesh.bottom_nodes())).unwrap();
        for (a, b) in r.displacement.iter().zip(&u) {
            assert_relative_eq!(*a, *b, epsilon = 1e-14, max_relative = 1e-12);
        }
    }

    #[test]
    fn accumulation_is_the_sum_of_steps() {
        let mesh = Mesh2D::structured(4.0, 4.0, 4, 4, 4).unwrap();
        let r = simulate_build(&mesh, &model(), &full_bottom(4, Eigenstrain::new(-0.2, -0.2)), &[1.0; 16]).unwrap();
        let mut u = vec![0.0; mesh.num_dofs()];
        for s in &r.steps {
            for (a, b) in u.iter_mut().zip(&s.displacement) {
                *a += b;
            }
        }
        assert_eq!(u, r.displacement);
    }

    #[test]
    fn substrate_and_unbuilt_nodes_stay_at_rest() {
        let mesh = Mesh2D::structured(4.0, 4.0, 4, 4, 4).unwrap();
        let config = full_bottom(4, Eigenstrain::new(-0.25, -0.25));
        let r = simulate_build(&mesh, &model(), &config, &[1.0; 16]).unwrap();
        for (k, s) in r.steps.iter().enumerate() {
            let i = k + 1;
            for n in mesh.bottom_nodes() {
                assert_eq!(s.displacement[2 * n], 0.0);
                assert_eq!(s.displacement[2 * n + 1], 0.0);
            }
            // Rows above the top of layer i.
            for j in i + 1..=4 {
                for c in 0..=4 {
                    let n = mesh.node_index(c, j);
                    assert_eq!(s.displacement[2 * n], 0.0);
                }
            }
        }
    }

    #[test]
    fn step_stress_is_tensile_in_new_layer() {
        // A clamped layer that wants to shrink is pulled taut.
        let mesh = Mesh2D::structured(10.0, 1.0, 10, 1, 1).unwrap();
        let r = simulate_build(&mesh, &model(), &full_bottom(1, Eigenstrain::new(-0.01, 0.0)), &[1.0; 10]).unwrap();
        assert!(r.stress[5][0] > 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mesh = Mesh2D::structured(2.0, 2.0, 2, 2, 2).unwrap();
        let m = model();
        assert!(matches!(
            simulate_build(&mesh, &m, &full_bottom(1, Eigenstrain::ZERO), &[1.0; 4]),
            Err(BuildError::LayerMismatch { .. })
        ));
        assert!(matches!(
            simulate_build(&mesh, &m, &full_bottom(2, Eigenstrain::ZERO), &[1.0, 0.0, 1.0, 1.0]),
            Err(BuildError::MaterialScale { element: 1, .. })
        ));
        let mut c = full_bottom(2, Eigenstrain::ZERO);
        c.inactive_ratio = 0.0;
        assert_eq!(c.validate(&mesh), Err(BuildError::InvalidInactiveRatio(0.0)));
    }

    #[test]
    fn springback_of_stress_free_build_is_zero() {
        let mesh = Mesh2D::structured(6.0, 2.0, 6, 2, 2).unwrap();
        let m = model();
        let r = simulate_build(&mesh, &m, &full_bottom(2, Eigenstrain::ZERO), &[1.0; 12]).unwrap();
        let fixture = BoundarySelector::BottomSpan { x0: 0.0, x1: 1.0 };
        let u = springback_cut(&mesh, &m, &r, &fixture, &[true; 12]).unwrap();
        assert!(u.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn springback_is_linear_in_stress() {
        let mesh = Mesh2D::structured(8.0, 2.0, 8, 2, 2).unwrap();
        let m = model();
        let fixture = BoundarySelector::BottomSpan { x0: 0.0, x1: 1.0 };
        let es = Eigenstrain::new(-0.01, 0.0);
        let r1 = simulate_build(&mesh, &m, &full_bottom(2, es), &[1.0; 16]).unwrap();
        let r2 = simulate_build(&mesh, &m, &full_bottom(2, es.scaled(2.0)), &[1.0; 16]).unwrap();
        let u1 = springback_cut(&mesh, &m, &r1, &fixture, &[true; 16]).unwrap();
        let u2 = springback_cut(&mesh, &m, &r2, &fixture, &[true; 16]).unwrap();
        let s = max_abs(&u1);
        assert!(s > 0.0);
        for (a, b) in u1.iter().zip(&u2) {
            assert!((2.0 * a - b).abs() <= 1e-10 * s);
        }
    }

    #[test]
    fn springback_lifts_free_end_of_cantilever() {
        let mesh = Mesh2D::structured(20.0, 4.0, 20, 4, 4).unwrap();
        let m = model();
        let r = simulate_build(&mesh, &m, &full_bottom(4, Eigenstrain::new(-0.01, 0.0)), &[1.0; 80]).unwrap();
        let fixture = BoundarySelector::BottomSpan { x0: 0.0, x1: 2.0 };
        let u = springback_cut(&mesh, &m, &r, &fixture, &[true; 80]).unwrap();
        let profile = top_surface_profile(&mesh, &u);
        for w in profile.windows(2).skip(2) {
            assert!(w[1].1 >= w[0].1, "{:?}", profile);
        }
        assert!(profile.last().unwrap().1 > 0.0);
    }

    #[test]
    fn profile_of_analytic_fields() {
        let mesh = Mesh2D::structured(4.0, 2.0, 4, 2, 1).unwrap();
        let zero = vec![0.0; mesh.num_dofs()];
        assert!(top_surface_profile(&mesh, &zero).iter().all(|s| s.1 == 0.0));
        let lift: Vec<f64> = (0..mesh.num_dofs()).map(|d| if d % 2 == 1 { 0.3 } else { 0.0 }).collect();
        assert!(top_surface_profile(&mesh, &lift).iter().all(|s| s.1 == 0.3));
        let tilt: Vec<f64> = mesh.nodes().iter().flat_map(|p| [0.0, 0.02 * p[0]]).collect();
        let p = top_surface_profile(&mesh, &tilt);
        assert_eq!(p.len(), 5);
        for w in p.windows(2) {
            assert_relative_eq!((w[1].1 - w[0].1) / (w[1].0 - w[0].0), 0.02, epsilon = 1e-15);
        }
    }

    fn identification_setup() -> (Mesh2D, BuildConfig, CutSetup) {
        let mesh = Mesh2D::structured(12.0, 3.0, 12, 3, 3).unwrap();
        let config = full_bottom(3, Eigenstrain::ZERO);
        let cut = CutSetup {
            fixture: BoundarySelector::BottomSpan { x0: 0.0, x1: 1.0 },
            release_mask: vec![true; 36],
        };
        (mesh, config, cut)
    }

    #[test]
    fn identification_round_trip_and_linearity() {
        let (mesh, config, cut) = identification_setup();
        let m = model();
        let measured = forward_profile(&mesh, &m, &config, &cut, Eigenstrain::new(-0.25, 0.0)).unwrap();
        let id = identify_inherent_strain(&mesh, &m, &config, &cut, &measured).unwrap();
        assert_relative_eq!(id.strain, -0.25, max_relative = 1e-10);
        let doubled: Vec<(f64, f64)> = measured.iter().map(|s| (s.0, 2.0 * s.1)).collect();
        let id2 = identify_inherent_strain(&mesh, &m, &config, &cut, &doubled).unwrap();
        assert_relative_eq!(id2.strain, -0.5, max_relative = 1e-10);
        let zero: Vec<(f64, f64)> = measured.iter().map(|s| (s.0, 0.0)).collect();
        assert_eq!(identify_inherent_strain(&mesh, &m, &config, &cut, &zero).unwrap().strain, 0.0);
    }

    #[test]
    fn identification_rejects_mismatched_profiles() {
        let (mesh, config, cut) = identification_setup();
        let m = model();
        assert!(matches!(
            identify_inherent_strain(&mesh, &m, &config, &cut, &[(0.0, 1.0)]),
            Err(BuildError::ProfileLength { expected: 13, found: 1 })
        ));
        let shifted: Vec<(f64, f64)> = (0..13).map(|i| (i as f64 + 0.5, 0.0)).collect();
        assert!(matches!(
            identify_inherent_strain(&mesh, &m, &config, &cut, &shifted),
            Err(BuildError::ProfileStation { index: 0, .. })
        ));
    }

    #[test]
    fn fully_clamped_build_has_degenerate_profile() {
        let (mesh, config, mut cut) = identification_setup();
        cut.release_mask = vec![false; 36];
        let zero: Vec<(f64, f64)> = (0..13).map(|i| (i as f64, 0.0)).collect();
        assert_eq!(
            identify_inherent_strain(&mesh, &model(), &config, &cut, &zero),
            Err(BuildError::DegenerateProfile)
        );
    }
}
