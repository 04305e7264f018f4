//! The four drivers behind the CLI subcommands.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::Utc;
use distopt_core::am_build::{simulate_build, springback_cut, top_surface_profile, CutSetup, identify_inherent_strain};
use distopt_core::optimizer::{run_observed, IterationState, RunObserver};
use distopt_core::{Mesh2D, OptConfig, OptOutcome};
use rayon::prelude::*;

use crate::config::Settings;
use crate::error::{CliError, Issue};
use crate::manifest::{run_id, timestamp, RunManifest};
use crate::pgm::write_pgm;
use crate::tables;
use crate::vtk::{write_vtk, Field, VtkError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    BuildSim,
    Identify,
    Optimize,
    SweepGamma,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::BuildSim => "build-sim",
            Command::Identify => "identify",
            Command::Optimize => "optimize",
            Command::SweepGamma => "sweep-gamma",
        }
    }
}

/// Output directory plus the inventory of files written to it.
struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    /// Registers `name` and returns its full path.
    fn file(&mut self, name: impl Into<String>) -> PathBuf {
        let name = name.into();
        let path = self.dir.join(&name);
        self.files.push(name);
        path
    }

    fn subdir(&mut self, name: &str) -> Result<Outputs, CliError> {
        let sub = Outputs::create(&self.dir.join(name))?;
        Ok(Outputs {
            dir: sub.dir,
            files: Vec::new(),
        })
    }

    fn absorb(&mut self, prefix: &str, other: Outputs) {
        self.files.extend(other.files.into_iter().map(|f| format!("{prefix}/{f}")));
    }
}

fn vtk_err(path: &Path, e: VtkError) -> CliError {
    match e {
        VtkError::Io(io) => CliError::io(path, io),
        other => CliError::solver(other.to_string()),
    }
}

fn magnitudes(u: &[f64]) -> Vec<f64> {
    u.chunks_exact(2).map(|p| p[0].hypot(p[1])).collect()
}

fn stress_components(stress: &[[f64; 3]]) -> [Vec<f64>; 3] {
    [0, 1, 2].map(|k| stress.iter().map(|s| s[k]).collect())
}

/// Runs `command` and writes its files and `manifest.json` into `out`.
pub fn run_command(command: Command, settings: &Settings, out: &Path) -> Result<RunManifest, CliError> {
    let started = Utc::now();
    let mut outputs = Outputs::create(out)?;
    let termination = match command {
        Command::BuildSim => build_sim(settings, &mut outputs)?,
        Command::Identify => identify(settings, &mut outputs)?,
        Command::Optimize => {
            let outcome = optimize_into(&settings.opt, settings, &mut outputs)?;
            outcome.termination.as_str().to_string()
        }
        Command::SweepGamma => sweep_gamma(settings, &mut outputs)?,
    };
    let config = settings.echo();
    let manifest = RunManifest {
        command: command.name().into(),
        run_id: run_id(command.name(), &config),
        started: timestamp(started),
        finished: timestamp(Utc::now()),
        termination,
        outputs: outputs.files,
        config,
    };
    manifest.write(out)?;
    Ok(manifest)
}

fn setup(opt: &OptConfig) -> Result<(Mesh2D, distopt_core::ElasticityModel), CliError> {
    let issues = opt.issues();
    if !issues.is_empty() {
        return Err(CliError::invalid(issues.into_iter().map(Issue::from).collect()));
    }
    let mesh = opt.mesh().map_err(|e| CliError::config(e.to_string()))?;
    let model = opt.model().map_err(|e| CliError::config(e.to_string()))?;
    Ok((mesh, model))
}

fn build_sim(settings: &Settings, out: &mut Outputs) -> Result<String, CliError> {
    let opt = &settings.opt;
    let (mesh, model) = setup(opt)?;
    let build = simulate_build(&mesh, &model, &opt.build_config(), &vec![1.0; mesh.num_elements()])?;
    let release = vec![true; mesh.num_elements()];
    let spring = springback_cut(&mesh, &model, &build, &settings.fixture_selector(), &release)?;

    let [sxx, syy, sxy] = stress_components(&build.stress);
    let layer: Vec<f64> = mesh.layer_tags().iter().map(|&l| l as f64).collect();
    let umag = magnitudes(&build.displacement);
    let path = out.file("build.vtk");
    write_vtk(
        &mesh,
        &[
            Field::vector("u", &build.displacement),
            Field::scalar("u_magnitude", &umag),
            Field::vector("springback", &spring),
        ],
        &[
            Field::scalar("sigma_xx", &sxx),
            Field::scalar("sigma_yy", &syy),
            Field::scalar("sigma_xy", &sxy),
            Field::scalar("layer", &layer),
        ],
        &path,
    )
    .map_err(|e| vtk_err(&path, e))?;
    tables::write_profile(&out.file("profile.csv"), &top_surface_profile(&mesh, &build.displacement))?;
    tables::write_profile(&out.file("springback_profile.csv"), &top_surface_profile(&mesh, &spring))?;
    Ok("completed".into())
}

fn identify(settings: &Settings, out: &mut Outputs) -> Result<String, CliError> {
    let Some(profile_path) = &settings.profile_path else {
        return Err(CliError::invalid(vec![Issue {
            field: "identify.profile".into(),
            message: "required by the identify command".into(),
        }]));
    };
    let measured = tables::read_profile(profile_path)?;
    let opt = &settings.opt;
    let (mesh, model) = setup(opt)?;
    let cut = CutSetup {
        fixture: settings.fixture_selector(),
        release_mask: vec![true; mesh.num_elements()],
    };
    let fit = identify_inherent_strain(&mesh, &model, &opt.build_config(), &cut, &measured)?;
    tables::write_identification(&out.file("identification.csv"), fit.strain, fit.residual)?;
    Ok("completed".into())
}

/// Writes VTK and PGM snapshots and reports wall time.
struct Snapshots<'a> {
    out: &'a mut Outputs,
    every: usize,
    start: Instant,
    wall: bool,
}

impl Snapshots<'_> {
    fn write(&mut self, state: &IterationState<'_>) -> Result<(), CliError> {
        let mesh = state.mesh;
        let stem = format!("snapshot_{:04}", state.record.iter);
        let h = state.phi.nodal_heaviside();
        let umag = magnitudes(&state.build.displacement);
        let [sxx, syy, sxy] = stress_components(&state.build.stress);
        let sens = state
            .sensitivities
            .map(|(mc, am, f)| [mc, am, f].map(|s| mesh.element_means(s)));
        let mut cell = vec![
            Field::scalar("sigma_xx", &sxx),
            Field::scalar("sigma_yy", &syy),
            Field::scalar("sigma_xy", &sxy),
        ];
        if let Some([mc, am, f]) = &sens {
            cell.push(Field::scalar("dF_MC", mc));
            cell.push(Field::scalar("dF_AM", am));
            cell.push(Field::scalar("dF", f));
        }
        let path = self.out.file(format!("{stem}.vtk"));
        write_vtk(
            mesh,
            &[
                Field::scalar("phi", &state.phi.values),
                Field::scalar("H", &h),
                Field::vector("u", &state.build.displacement),
                Field::scalar("u_magnitude", &umag),
                Field::vector("v", state.equilibrium),
            ],
            &cell,
            &path,
        )
        .map_err(|e| vtk_err(&path, e))?;
        let path = self.out.file(format!("{stem}.pgm"));
        write_pgm(mesh, state.phi, &path).map_err(|e| CliError::io(&path, e))
    }
}

impl RunObserver for Snapshots<'_> {
    fn wall_ms(&mut self) -> f64 {
        if self.wall {
            self.start.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        }
    }

    fn on_iteration(&mut self, state: &IterationState<'_>) -> Result<(), String> {
        let due = self.every > 0 && state.record.iter % self.every == 0;
        if state.last || due {
            self.write(state).map_err(|e| e.message)?;
        }
        Ok(())
    }
}

fn optimize_into(opt: &OptConfig, settings: &Settings, out: &mut Outputs) -> Result<OptOutcome, CliError> {
    setup(opt)?;
    let mut observer = Snapshots {
        out,
        every: settings.snapshot_every,
        start: Instant::now(),
        wall: settings.record_wall_time,
    };
    let outcome = run_observed(opt, &mut observer)?;
    tables::write_history(&out.file("history.csv"), &outcome.history, settings.record_wall_time)?;
    Ok(outcome)
}

fn sweep_gamma(settings: &Settings, out: &mut Outputs) -> Result<String, CliError> {
    let dirs: Vec<(String, Outputs)> = settings
        .gammas
        .iter()
        .enumerate()
        .map(|(k, g)| {
            let name = format!("gamma_{k:02}_{g}");
            out.subdir(&name).map(|o| (name, o))
        })
        .collect::<Result<_, _>>()?;
    let runs: Vec<(String, Outputs, Result<OptOutcome, CliError>)> = dirs
        .into_par_iter()
        .zip(settings.gammas.par_iter())
        .map(|((name, mut sub), &gamma)| {
            let opt = OptConfig {
                gamma,
                ..settings.opt.clone()
            };
            let run = optimize_into(&opt, settings, &mut sub);
            (name, sub, run)
        })
        .collect();
    let mut rows = Vec::new();
    let mut reasons = Vec::new();
    for ((name, sub, run), &gamma) in runs.into_iter().zip(&settings.gammas) {
        let outcome = run?;
        let last = outcome.history.last().expect("a run records at least one iteration");
        rows.push((gamma, last.compliance, last.distortion));
        reasons.push(format!("{gamma}:{}", outcome.termination.as_str()));
        out.absorb(&name, sub);
    }
    tables::write_summary(&out.file("summary.csv"), &rows)?;
    Ok(reasons.join(","))
}
