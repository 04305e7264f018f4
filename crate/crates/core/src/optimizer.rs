//! The outer optimization loop: equilibrium, build simulation, objectives,
//! sensitivities and the volume-controlled level-set update.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::am_build::{simulate_build_on, BuildConfig, BuildError, BuildResult, DEFAULT_INACTIVE_RATIO};
use crate::fem::{
    dot, Dirichlet, ElasticityModel, Eigenstrain, Factorization, FemError, FemSpace, SolveError, TractionBC, Voigt,
};
use crate::levelset::{volume_trajectory, LevelSetError, LevelSetField, RdeParams, ReactionDiffusion};
use crate::mesh::{BoundarySelector, Edge, Mesh2D, MeshError};
use crate::sensitivity::{
    adjoint_load_density, distortion_objective, normalize_combine, project_to_nodes, solve_adjoints, td_compliance,
    td_distortion, td_distortion_explicit, ObjectiveValues, SensitivityError,
};

/// Step factorizations are kept for the adjoint solves when their estimated
/// size stays below this many bytes; otherwise each adjoint refactors.
const RETAIN_BUDGET_BYTES: f64 = 1.0e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Problem {
    /// Left edge clamped, downward load at mid-height of the right edge,
    /// built on a plate under the left 60 % of the bottom edge.
    Cantilever,
    /// Simply supported at both bottom corners, downward load at the top
    /// center, built on the full bottom edge.
    Mbb,
}

impl Problem {
    pub fn name(&self) -> &'static str {
        match self {
            Problem::Cantilever => "cantilever",
            Problem::Mbb => "mbb",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convergence {
    /// No convergence check before this many iterations.
    pub min_iterations: usize,
    /// Number of trailing records compared.
    pub window: usize,
    /// Largest accepted relative change of `F` over the window.
    pub tolerance: f64,
    /// Accepted relative distance of the volume fraction from `V_max`.
    pub volume_slack: f64,
}

impl Default for Convergence {
    fn default() -> Self {
        Self {
            min_iterations: 30,
            window: 10,
            tolerance: 1e-3,
            volume_slack: 0.005,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptConfig {
    pub problem: Problem,
    pub width: f64,
    pub height: f64,
    pub nx: usize,
    pub ny: usize,
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    /// Magnitude of the downward traction.
    pub traction: f64,
    pub layers: usize,
    pub inactive_ratio: f64,
    pub eigenstrain: Eigenstrain,
    pub substrate: BoundarySelector,
    /// Weight `γ` of the distortion objective.
    pub gamma: f64,
    /// p-norm exponent `β`.
    pub beta: f64,
    pub tau: f64,
    /// Reaction-diffusion gain `K`.
    pub gain: f64,
    /// Heaviside half width `w`.
    pub heaviside_width: f64,
    /// Void stiffness ratio `d`.
    pub void_ratio: f64,
    /// Allowed volume fraction `V_max`.
    pub volume_limit: f64,
    pub time_step: f64,
    /// Diffusion length scale; `None` uses the larger domain extent.
    pub length_scale: Option<f64>,
    pub max_iterations: usize,
    pub convergence: Convergence,
}

impl OptConfig {
    pub fn preset(problem: Problem) -> Self {
        let (width, nx, substrate) = match problem {
            Problem::Cantilever => (100.0, 100, BoundarySelector::BottomSpan { x0: 0.0, x1: 60.0 }),
            Problem::Mbb => (150.0, 150, BoundarySelector::BottomEdge),
        };
        Self {
            problem,
            width,
            height: 50.0,
            nx,
            ny: 50,
            youngs_modulus: 75000.0,
            poisson_ratio: 0.34,
            traction: 10.0,
            layers: 50,
            inactive_ratio: DEFAULT_INACTIVE_RATIO,
            eigenstrain: Eigenstrain::new(-0.25, 0.0),
            substrate,
            gamma: 0.1,
            beta: 5.0,
            tau: 1e-4,
            gain: 0.8,
            heaviside_width: 0.5,
            void_ratio: 1e-3,
            volume_limit: 0.5,
            time_step: 0.1,
            length_scale: None,
            max_iterations: 300,
            convergence: Convergence::default(),
        }
    }

    /// Same physical domain at a different resolution.
    pub fn with_resolution(mut self, nx: usize, ny: usize, layers: usize) -> Self {
        self.nx = nx;
        self.ny = ny;
        self.layers = layers;
        self
    }

    /// Every violated range, with the offending field names.
    pub fn issues(&self) -> Vec<ConfigIssue> {
        let mut out = Vec::new();
        let mut check = |ok: bool, field: &str, message: String| {
            if !ok {
                out.push(ConfigIssue {
                    field: field.into(),
                    message,
                });
            }
        };
        let pos = |v: f64| v.is_finite() && v > 0.0;
        check(pos(self.width), "mesh.width", format!("must be positive, got {}", self.width));
        check(pos(self.height), "mesh.height", format!("must be positive, got {}", self.height));
        check(self.nx >= 1, "mesh.nx", format!("must be at least 1, got {}", self.nx));
        check(self.ny >= 1, "mesh.ny", format!("must be at least 1, got {}", self.ny));
        check(self.layers >= 1, "build.layers", format!("must be at least 1, got {}", self.layers));
        if self.layers >= 1 && self.ny >= 1 {
            check(
                self.ny % self.layers == 0,
                "mesh.ny, build.layers",
                format!("mesh.ny = {} is not divisible by build.layers = {}", self.ny, self.layers),
            );
        }
        check(
            pos(self.youngs_modulus),
            "material.youngs_modulus",
            format!("must be positive, got {}", self.youngs_modulus),
        );
        check(
            self.poisson_ratio.is_finite() && (0.0..0.5).contains(&self.poisson_ratio),
            "material.poisson_ratio",
            format!("must lie in [0, 0.5), got {}", self.poisson_ratio),
        );
        check(self.traction.is_finite(), "load.traction", format!("must be finite, got {}", self.traction));
        check(
            self.inactive_ratio > 0.0 && self.inactive_ratio <= 1e-3,
            "build.inactive_ratio",
            format!("must lie in (0, 1e-3], got {}", self.inactive_ratio),
        );
        check(
            self.eigenstrain.ex.is_finite() && self.eigenstrain.ey.is_finite(),
            "build.eigenstrain",
            "components must be finite".into(),
        );
        if let BoundarySelector::BottomSpan { x0, x1 } = self.substrate {
            check(
                x0.is_finite() && x1.is_finite() && 0.0 <= x0 && x0 <= x1 && x1 <= self.width,
                "build.substrate",
                format!("span [{x0}, {x1}] must lie within [0, {}]", self.width),
            );
        }
        check(
            (0.0..=1.0).contains(&self.gamma),
            "optimizer.gamma",
            format!("must lie in [0, 1], got {}", self.gamma),
        );
        check(
            self.beta.is_finite() && self.beta >= 2.0,
            "optimizer.beta",
            format!("must be at least 2, got {}", self.beta),
        );
        check(
            self.tau.is_finite() && self.tau >= 0.0,
            "optimizer.tau",
            format!("must be non-negative, got {}", self.tau),
        );
        check(pos(self.gain), "optimizer.gain", format!("must be positive, got {}", self.gain));
        check(
            pos(self.heaviside_width),
            "optimizer.heaviside_width",
            format!("must be positive, got {}", self.heaviside_width),
        );
        check(
            self.void_ratio > 0.0 && self.void_ratio < 1.0,
            "optimizer.void_ratio",
            format!("must lie in (0, 1), got {}", self.void_ratio),
        );
        check(
            self.volume_limit > 0.0 && self.volume_limit <= 1.0,
            "optimizer.volume_limit",
            format!("must lie in (0, 1], got {}", self.volume_limit),
        );
        check(pos(self.time_step), "optimizer.time_step", format!("must be positive, got {}", self.time_step));
        if let Some(l) = self.length_scale {
            check(pos(l), "optimizer.length_scale", format!("must be positive, got {l}"));
        }
        check(
            self.max_iterations >= 1,
            "optimizer.max_iterations",
            format!("must be at least 1, got {}", self.max_iterations),
        );
        let c = &self.convergence;
        check(
            c.window >= 2,
            "optimizer.convergence.window",
            format!("must be at least 2, got {}", c.window),
        );
        check(
            pos(c.tolerance),
            "optimizer.convergence.tolerance",
            format!("must be positive, got {}", c.tolerance),
        );
        check(
            pos(c.volume_slack),
            "optimizer.convergence.volume_slack",
            format!("must be positive, got {}", c.volume_slack),
        );
        out
    }

    pub fn validate(&self) -> Result<(), OptError> {
        let issues = self.issues();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(OptError::InvalidConfig(issues))
        }
    }

    pub fn mesh(&self) -> Result<Mesh2D, MeshError> {
        Mesh2D::structured(self.width, self.height, self.nx, self.ny, self.layers)
    }

    pub fn model(&self) -> Result<ElasticityModel, FemError> {
        ElasticityModel::plane_stress(self.youngs_modulus, self.poisson_ratio)
    }

    pub fn build_config(&self) -> BuildConfig {
        BuildConfig {
            layers: self.layers,
            inactive_ratio: self.inactive_ratio,
            eigenstrain: self.eigenstrain,
            substrate: self.substrate,
        }
    }

    pub fn rde_params(&self) -> RdeParams {
        RdeParams {
            tau: self.tau,
            gain: self.gain,
            dt: self.time_step,
            length_scale: self.length_scale.unwrap_or(self.width.max(self.height)),
        }
    }

    /// Supports and load of the structural problem on `mesh`.
    pub fn structural_bc(&self, mesh: &Mesh2D) -> Result<StructuralBc, FemError> {
        let (hx, hy) = mesh.element_size();
        let mut supports = Dirichlet::new(mesh.num_dofs());
        let traction = [0.0, -self.traction];
        let load = match self.problem {
            Problem::Cantilever => {
                for n in mesh.select_boundary(&BoundarySelector::LeftEdge)? {
                    supports.fix_node(n, true, true);
                }
                BoundarySelector::PointLoadSpan {
                    edge: Edge::Right,
                    center: 0.5 * self.height,
                    half_width: hy,
                }
            }
            Problem::Mbb => {
                let w = self.width;
                let ends = [
                    BoundarySelector::BottomSpan { x0: 0.0, x1: 2.0 * hx },
                    BoundarySelector::BottomSpan { x0: w - 2.0 * hx, x1: w },
                ];
                for sel in &ends {
                    for n in mesh.select_boundary(sel)? {
                        supports.fix_node(n, false, true);
                    }
                }
                // Horizontal pin at one corner only: the solution is then
                // mirror symmetric up to a rigid horizontal translation.
                supports.fix_node(mesh.node_index(0, 0), true, false);
                BoundarySelector::PointLoadSpan {
                    edge: Edge::Top,
                    center: 0.5 * w,
                    half_width: hx,
                }
            }
        };
        Ok(StructuralBc {
            supports,
            traction: TractionBC::from_selector(mesh, &load, traction)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuralBc {
    pub supports: Dirichlet,
    pub traction: TractionBC,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptError {
    #[error("invalid configuration: {}", describe(.0))]
    InvalidConfig(Vec<ConfigIssue>),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error("iteration {iteration}: equilibrium solve failed: {source}")]
    Equilibrium { iteration: usize, source: SolveError },
    #[error("iteration {iteration}: {source}")]
    Build { iteration: usize, source: BuildError },
    #[error("iteration {iteration}: {source}")]
    Sensitivity { iteration: usize, source: SensitivityError },
    #[error("iteration {iteration}: {source}")]
    LevelSet { iteration: usize, source: LevelSetError },
    #[error("iteration {iteration}: non-finite {quantity}")]
    NonFinite { iteration: usize, quantity: &'static str },
    #[error("observer: {0}")]
    Observer(String),
}

fn describe(issues: &[ConfigIssue]) -> String {
    let parts: Vec<String> = issues.iter().map(|i| format!("{}: {}", i.field, i.message)).collect();
    parts.join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    /// Combined objective `F`.
    pub objective: f64,
    pub compliance: f64,
    pub distortion: f64,
    pub volume: f64,
    /// Volume shift that produced this iteration's design.
    pub lambda: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptHistory {
    pub records: Vec<IterationRecord>,
}

impl OptHistory {
    pub fn push(&mut self, record: IterationRecord) {
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    /// First record whose volume is within `slack · V_max` of `V_max`.
    pub fn first_feasible(&self, v_max: f64, slack: f64) -> Option<&IterationRecord> {
        self.records.iter().find(|r| (r.volume - v_max).abs() <= slack * v_max)
    }
}

/// True once at least `criteria.min_iterations` records exist, `F` varied by
/// at most `criteria.tolerance` (relative) over the last `criteria.window`
/// records and the latest volume is within the slack of `v_max`.
pub fn converged(history: &OptHistory, criteria: &Convergence, v_max: f64) -> bool {
    let n = history.len();
    if n < criteria.min_iterations.max(criteria.window) || n < 2 {
        return false;
    }
    let last = history.records[n - 1];
    if (last.volume - v_max).abs() > criteria.volume_slack * v_max {
        return false;
    }
    let scale = last.objective.abs().max(f64::MIN_POSITIVE);
    history.records[n - criteria.window..]
        .iter()
        .all(|r| (r.objective - last.objective).abs() <= criteria.tolerance * scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIterations => "max_iterations",
        }
    }
}

/// Work done during a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub equilibrium_solves: usize,
    pub build_simulations: usize,
    /// Individual layer adjoint solves.
    pub adjoint_solves: usize,
    pub level_set_updates: usize,
}

/// Fields of one iteration handed to a [`RunObserver`].
pub struct IterationState<'a> {
    pub mesh: &'a Mesh2D,
    pub record: &'a IterationRecord,
    pub phi: &'a LevelSetField,
    /// Structural displacement `v`.
    pub equilibrium: &'a [f64],
    pub equilibrium_stress: &'a [Voigt],
    pub build: &'a BuildResult,
    /// Nodal `F′_MC`, `F′_AM` and `F̃′` when the update step ran.
    pub sensitivities: Option<(&'a [f64], &'a [f64], &'a [f64])>,
    pub last: bool,
}

pub trait RunObserver {
    /// Milliseconds since the run started. Runs without a clock report 0.
    fn wall_ms(&mut self) -> f64 {
        0.0
    }

    fn on_iteration(&mut self, _state: &IterationState<'_>) -> Result<(), String> {
        Ok(())
    }
}

/// Observer that ignores everything.
pub struct Silent;

impl RunObserver for Silent {}

#[derive(Debug, Clone)]
pub struct OptOutcome {
    pub phi: LevelSetField,
    pub history: OptHistory,
    pub termination: Termination,
    pub equilibrium: Vec<f64>,
    pub build_displacement: Vec<f64>,
    pub build_stress: Vec<Voigt>,
    pub counters: Counters,
}

/// Static solve with the ersatz-scaled stiffness of `phi`.
pub fn solve_equilibrium(
    space: &FemSpace<'_>,
    phi: &LevelSetField,
    bc: &StructuralBc,
) -> Result<Vec<f64>, SolveError> {
    let scales = phi.element_scales(space.mesh());
    let stiffness = space.assemble_stiffness(&scales).map_err(|_| SolveError::DimensionMismatch {
        expected: space.mesh().num_elements(),
        found: scales.len(),
    })?;
    let load = space.traction_load(&bc.traction).map_err(|_| SolveError::DimensionMismatch {
        expected: space.mesh().num_dofs(),
        found: 0,
    })?;
    Factorization::new(&stiffness, &bc.supports)?.solve(&load)
}

fn retain_estimate(mesh: &Mesh2D) -> f64 {
    let band = 2.0 * (mesh.nx().min(mesh.ny()) as f64 + 2.0);
    0.5 * (mesh.layers() as f64 + 1.0) * mesh.num_dofs() as f64 * band * 8.0
}

pub fn run(config: &OptConfig) -> Result<OptOutcome, OptError> {
    run_observed(config, &mut Silent)
}

pub fn run_observed(config: &OptConfig, observer: &mut dyn RunObserver) -> Result<OptOutcome, OptError> {
    config.validate()?;
    let mesh = config.mesh()?;
    let model = config.model()?;
    let space = FemSpace::new(&mesh, model);
    let bc = config.structural_bc(&mesh)?;
    let build_config = config.build_config();
    let rd = ReactionDiffusion::new(&mesh, space.kernel(), config.rde_params())
        .map_err(|source| OptError::LevelSet { iteration: 0, source })?;
    let with_am = config.gamma > 0.0;
    let retain = with_am && retain_estimate(&mesh) <= RETAIN_BUDGET_BYTES;

    let mut phi = LevelSetField::uniform(&mesh, 1.0, config.heaviside_width, config.void_ratio);
    let mut history = OptHistory::default();
    let mut counters = Counters::default();
    let mut lambda = 0.0;
    let mut iteration = 0;
    loop {
        let scales = phi.element_scales(&mesh);
        let weights = phi.element_heaviside(&mesh);
        let volume = phi.volume_fraction(&mesh);

        let v = solve_equilibrium(&space, &phi, &bc).map_err(|source| OptError::Equilibrium { iteration, source })?;
        counters.equilibrium_solves += 1;
        let f_mc = dot(&space.traction_load(&bc.traction)?, &v);
        let build = simulate_build_on(&space, &build_config, &scales, retain)
            .map_err(|source| OptError::Build { iteration, source })?;
        counters.build_simulations += 1;
        let f_am = distortion_objective(&mesh, &build.displacement, config.beta, &weights);
        let objectives = ObjectiveValues::new(f_mc, f_am, config.gamma, volume, config.volume_limit);
        for (value, quantity) in [(f_mc, "compliance"), (f_am, "distortion"), (objectives.combined, "objective")] {
            if !value.is_finite() {
                return Err(OptError::NonFinite { iteration, quantity });
            }
        }
        let record = IterationRecord {
            iter: iteration,
            objective: objectives.combined,
            compliance: f_mc,
            distortion: f_am,
            volume,
            lambda,
            wall_ms: observer.wall_ms(),
        };
        history.push(record);

        let done = if converged(&history, &config.convergence, config.volume_limit) {
            Some(Termination::Converged)
        } else if iteration + 1 >= config.max_iterations {
            Some(Termination::MaxIterations)
        } else {
            None
        };
        let (_, stress) = space.recover_strain_stress(&v, None, &scales)?;

        if let Some(termination) = done {
            observer
                .on_iteration(&IterationState {
                    mesh: &mesh,
                    record: &record,
                    phi: &phi,
                    equilibrium: &v,
                    equilibrium_stress: &stress,
                    build: &build,
                    sensitivities: None,
                    last: true,
                })
                .map_err(OptError::Observer)?;
            return Ok(OptOutcome {
                phi,
                history,
                termination,
                equilibrium: v,
                build_displacement: build.displacement,
                build_stress: build.stress,
                counters,
            });
        }

        let sens_err = |source| OptError::Sensitivity { iteration, source };
        let td_mc = project_to_nodes(&mesh, &td_compliance(&space, &v)?);
        let td_am = if with_am {
            let density = adjoint_load_density(&mesh, &build.displacement, config.beta, f_am, &weights);
            let adjoints = solve_adjoints(&space, &build, &density).map_err(sens_err)?;
            counters.adjoint_solves += adjoints.len();
            let mut td = td_distortion(&space, &build, &adjoints).map_err(sens_err)?;
            let explicit = td_distortion_explicit(&mesh, &build.displacement, config.beta, f_am);
            for (t, x) in td.iter_mut().zip(explicit) {
                *t += x;
            }
            project_to_nodes(&mesh, &td)
        } else {
            vec![0.0; mesh.num_nodes()]
        };
        let combined = normalize_combine(&mesh, &td_mc, &td_am, config.gamma);
        observer
            .on_iteration(&IterationState {
                mesh: &mesh,
                record: &record,
                phi: &phi,
                equilibrium: &v,
                equilibrium_stress: &stress,
                build: &build,
                sensitivities: Some((&td_mc, &td_am, &combined)),
                last: false,
            })
            .map_err(OptError::Observer)?;
        drop(build);

        let target = volume_trajectory(volume, config.volume_limit);
        let (next, shift) = rd
            .volume_controlled_step(&mesh, &phi.values, &combined, config.heaviside_width, target)
            .map_err(|source| OptError::LevelSet { iteration, source })?;
        counters.level_set_updates += 1;
        phi.values = next;
        lambda = shift;
        iteration += 1;
    }
}
