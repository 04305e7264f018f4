//! JSON run configuration.
//!
//! Every section and key is optional except `problem`; missing values take
//! the problem preset. Unknown keys are rejected. [`Settings::echo`] writes
//! the fully resolved document back out, and loading that echo reproduces
//! the same settings.

use std::fs;
use std::path::{Path, PathBuf};

use distopt_core::optimizer::{Convergence, Problem};
use distopt_core::{BoundarySelector, Eigenstrain, OptConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Issue};

pub const DEFAULT_GAMMAS: [f64; 6] = [0.0, 0.03, 0.05, 0.10, 0.15, 0.20];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemName {
    Cantilever,
    Mbb,
}

impl From<ProblemName> for Problem {
    fn from(p: ProblemName) -> Self {
        match p {
            ProblemName::Cantilever => Problem::Cantilever,
            ProblemName::Mbb => Problem::Mbb,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Span {
    pub x0: f64,
    pub x1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrainSpec {
    pub ex: f64,
    pub ey: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshSection {
    pub width: Option<f64>,
    pub height: Option<f64>,
    pub nx: Option<usize>,
    pub ny: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialSection {
    pub youngs_modulus: Option<f64>,
    pub poisson_ratio: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadSection {
    pub traction: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildSection {
    pub layers: Option<usize>,
    pub inactive_ratio: Option<f64>,
    pub eigenstrain: Option<StrainSpec>,
    pub substrate: Option<Span>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceSection {
    pub min_iterations: Option<usize>,
    pub window: Option<usize>,
    pub tolerance: Option<f64>,
    pub volume_slack: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub gamma: Option<f64>,
    pub beta: Option<f64>,
    pub tau: Option<f64>,
    pub gain: Option<f64>,
    pub heaviside_width: Option<f64>,
    pub void_ratio: Option<f64>,
    pub volume_limit: Option<f64>,
    pub time_step: Option<f64>,
    pub length_scale: Option<f64>,
    pub max_iterations: Option<usize>,
    pub convergence: ConvergenceSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Snapshot period in iterations; 0 writes only the final snapshot.
    pub snapshot_every: Option<usize>,
    pub record_wall_time: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub gammas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentifySection {
    /// Two-column CSV (x, u_y) of the measured top-surface profile,
    /// relative to the config file.
    pub profile: Option<PathBuf>,
    /// Bottom span that stays clamped after cutting.
    pub fixture: Option<Span>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub problem: ProblemName,
    #[serde(default)]
    pub mesh: MeshSection,
    #[serde(default)]
    pub material: MaterialSection,
    #[serde(default)]
    pub load: LoadSection,
    #[serde(default)]
    pub build: BuildSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub identify: IdentifySection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub problem: ProblemName,
    pub opt: OptConfig,
    pub snapshot_every: usize,
    pub record_wall_time: bool,
    pub gammas: Vec<f64>,
    /// As written in the file.
    pub profile: Option<PathBuf>,
    /// `profile` resolved against the config directory.
    pub profile_path: Option<PathBuf>,
    pub fixture: Span,
}

impl Settings {
    /// Minimal document for `problem` with every default applied.
    pub fn defaults(problem: ProblemName) -> Self {
        resolve(&ConfigFile {
            problem,
            mesh: Default::default(),
            material: Default::default(),
            load: Default::default(),
            build: Default::default(),
            optimizer: Default::default(),
            output: Default::default(),
            sweep: Default::default(),
            identify: Default::default(),
        })
    }

    /// Cut fixture as a boundary selector.
    pub fn fixture_selector(&self) -> BoundarySelector {
        BoundarySelector::BottomSpan {
            x0: self.fixture.x0,
            x1: self.fixture.x1,
        }
    }

    /// The resolved configuration as a complete document.
    pub fn echo(&self) -> ConfigFile {
        let o = &self.opt;
        let substrate = match o.substrate {
            BoundarySelector::BottomSpan { x0, x1 } => Span { x0, x1 },
            _ => Span { x0: 0.0, x1: o.width },
        };
        ConfigFile {
            problem: self.problem,
            mesh: MeshSection {
                width: Some(o.width),
                height: Some(o.height),
                nx: Some(o.nx),
                ny: Some(o.ny),
            },
            material: MaterialSection {
                youngs_modulus: Some(o.youngs_modulus),
                poisson_ratio: Some(o.poisson_ratio),
            },
            load: LoadSection {
                traction: Some(o.traction),
            },
            build: BuildSection {
                layers: Some(o.layers),
                inactive_ratio: Some(o.inactive_ratio),
                eigenstrain: Some(StrainSpec {
                    ex: o.eigenstrain.ex,
                    ey: o.eigenstrain.ey,
                }),
                substrate: Some(substrate),
            },
            optimizer: OptimizerSection {
                gamma: Some(o.gamma),
                beta: Some(o.beta),
                tau: Some(o.tau),
                gain: Some(o.gain),
                heaviside_width: Some(o.heaviside_width),
                void_ratio: Some(o.void_ratio),
                volume_limit: Some(o.volume_limit),
                time_step: Some(o.time_step),
                length_scale: Some(o.rde_params().length_scale),
                max_iterations: Some(o.max_iterations),
                convergence: ConvergenceSection {
                    min_iterations: Some(o.convergence.min_iterations),
                    window: Some(o.convergence.window),
                    tolerance: Some(o.convergence.tolerance),
                    volume_slack: Some(o.convergence.volume_slack),
                },
            },
            output: OutputSection {
                snapshot_every: Some(self.snapshot_every),
                record_wall_time: Some(self.record_wall_time),
            },
            sweep: SweepSection {
                gammas: Some(self.gammas.clone()),
            },
            identify: IdentifySection {
                profile: self.profile.clone(),
                fixture: Some(self.fixture),
            },
        }
    }

    /// Range violations, all of them.
    pub fn issues(&self) -> Vec<Issue> {
        let mut out: Vec<Issue> = self.opt.issues().into_iter().map(Issue::from).collect();
        if self.gammas.is_empty() {
            out.push(Issue {
                field: "sweep.gammas".into(),
                message: "must not be empty".into(),
            });
        }
        for (k, g) in self.gammas.iter().enumerate() {
            if !(0.0..=1.0).contains(g) {
                out.push(Issue {
                    field: format!("sweep.gammas[{k}]"),
                    message: format!("must lie in [0, 1], got {g}"),
                });
            }
        }
        let Span { x0, x1 } = self.fixture;
        if !(x0.is_finite() && x1.is_finite() && 0.0 <= x0 && x0 <= x1 && x1 <= self.opt.width) {
            out.push(Issue {
                field: "identify.fixture".into(),
                message: format!("span [{x0}, {x1}] must lie within [0, {}]", self.opt.width),
            });
        }
        out
    }
}

fn resolve(file: &ConfigFile) -> Settings {
    let problem: Problem = file.problem.into();
    let mut o = OptConfig::preset(problem);
    let m = &file.mesh;
    o.width = m.width.unwrap_or(o.width);
    o.height = m.height.unwrap_or(o.height);
    o.nx = m.nx.unwrap_or(o.nx);
    o.ny = m.ny.unwrap_or(o.ny);
    o.youngs_modulus = file.material.youngs_modulus.unwrap_or(o.youngs_modulus);
    o.poisson_ratio = file.material.poisson_ratio.unwrap_or(o.poisson_ratio);
    o.traction = file.load.traction.unwrap_or(o.traction);
    let b = &file.build;
    o.layers = b.layers.unwrap_or(o.layers);
    o.inactive_ratio = b.inactive_ratio.unwrap_or(o.inactive_ratio);
    if let Some(s) = b.eigenstrain {
        o.eigenstrain = Eigenstrain::new(s.ex, s.ey);
    }
    let substrate = b.substrate.unwrap_or(match problem {
        Problem::Cantilever => Span {
            x0: 0.0,
            x1: 0.6 * o.width,
        },
        Problem::Mbb => Span { x0: 0.0, x1: o.width },
    });
    o.substrate = BoundarySelector::BottomSpan {
        x0: substrate.x0,
        x1: substrate.x1,
    };
    let p = &file.optimizer;
    o.gamma = p.gamma.unwrap_or(o.gamma);
    o.beta = p.beta.unwrap_or(o.beta);
    o.tau = p.tau.unwrap_or(o.tau);
    o.gain = p.gain.unwrap_or(o.gain);
    o.heaviside_width = p.heaviside_width.unwrap_or(o.heaviside_width);
    o.void_ratio = p.void_ratio.unwrap_or(o.void_ratio);
    o.volume_limit = p.volume_limit.unwrap_or(o.volume_limit);
    o.time_step = p.time_step.unwrap_or(o.time_step);
    o.length_scale = Some(p.length_scale.unwrap_or(o.width.max(o.height)));
    o.max_iterations = p.max_iterations.unwrap_or(o.max_iterations);
    let c = &p.convergence;
    let d = Convergence::default();
    o.convergence = Convergence {
        min_iterations: c.min_iterations.unwrap_or(d.min_iterations),
        window: c.window.unwrap_or(d.window),
        tolerance: c.tolerance.unwrap_or(d.tolerance),
        volume_slack: c.volume_slack.unwrap_or(d.volume_slack),
    };
    let fixture = file.identify.fixture.unwrap_or(Span {
        x0: 0.0,
        x1: 0.1 * o.width,
    });
    Settings {
        problem: file.problem,
        snapshot_every: file.output.snapshot_every.unwrap_or(0),
        record_wall_time: file.output.record_wall_time.unwrap_or(true),
        gammas: file.sweep.gammas.clone().unwrap_or_else(|| DEFAULT_GAMMAS.to_vec()),
        profile: file.identify.profile.clone(),
        profile_path: file.identify.profile.clone(),
        fixture,
        opt: o,
    }
}

/// Parses and validates a config document. Relative paths inside it are
/// resolved against `base`.
pub fn parse_config(text: &str, base: Option<&Path>) -> Result<Settings, CliError> {
    let file: ConfigFile = serde_json::from_str(text).map_err(|e| CliError::config(format!("config: {e}")))?;
    let mut settings = resolve(&file);
    if let (Some(base), Some(p)) = (base, &settings.profile) {
        if p.is_relative() {
            settings.profile_path = Some(base.join(p));
        }
    }
    let issues = settings.issues();
    if issues.is_empty() {
        Ok(settings)
    } else {
        Err(CliError::invalid(issues))
    }
}

pub fn load_config(path: &Path) -> Result<Settings, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config(&text, path.parent())
}
