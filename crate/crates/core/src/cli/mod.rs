//! Experiment driver behind the `ahmpc` binary.

pub mod config;
pub mod csvlog;
pub mod plot;

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;

pub use config::{parse_config, ExperimentConfig, ModelKind};
pub use csvlog::{read_csv, write_csv, LogRow};
pub use plot::write_svg_plots;

use crate::controller::{Ahmpc, ControllerConfig, SimulationLog};
use crate::dynamics::{
    ControlBounds, DoubleIntegrator, DoublePendulum, Model, ScalarIntegrator, StateVec,
};
use crate::error::{Error, Result};
use crate::ideal::{run_property_suite, GridInstance, SuiteReport};
use crate::ocp::SolverOptions;
use crate::terminal::{QuadLagrangian, TerminalPair};

/// Horizon cap used by `ahmpc check`.
pub const CHECK_HORIZON_CAP: usize = 10;

pub fn build_model(cfg: &ExperimentConfig) -> Result<Model> {
    let model = match cfg.model {
        ModelKind::DoublePendulum => Model::new(DoublePendulum::new(cfg.pendulum)?, cfg.dt)?,
        ModelKind::DoubleIntegrator => Model::new(DoubleIntegrator, cfg.dt)?,
        ModelKind::Scalar => Model::new(ScalarIntegrator, cfg.dt)?,
    };
    match cfg.u_max {
        Some(limit) => {
            let bounds = ControlBounds::symmetric(model.m(), limit)?;
            model.with_bounds(bounds)
        }
        None => Ok(model),
    }
}

/// Model, LQR terminal ingredients and controller settings for `cfg`.
pub fn build_controller(cfg: &ExperimentConfig) -> Result<Ahmpc> {
    let model = build_model(cfg)?;
    let lagrangian =
        QuadLagrangian::scaled_identity(model.n(), model.m(), cfg.q_scale, cfg.r_scale)?;
    let terminal = TerminalPair::lqr(&model, &lagrangian, cfg.alpha_coeff)?;
    let config = ControllerConfig {
        n_init: cfg.n_init,
        extension_steps: cfg.extension_steps,
        n_max: cfg.n_max,
        max_resolves_per_step: cfg.max_resolves,
        lyap_slack: cfg.lyap_slack,
        solver: SolverOptions {
            tol: cfg.solver_tol,
            max_iter: cfg.solver_max_iter,
        },
        record_wall_clock: cfg.record_wall_clock,
    };
    Ahmpc::new(config, model, lagrangian, terminal)
}

pub fn initial_state(cfg: &ExperimentConfig) -> StateVec {
    DVector::from_column_slice(&cfg.x0)
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<SimulationLog> {
    build_controller(cfg)?.simulate(&initial_state(cfg), cfg.steps)
}

#[derive(Debug)]
pub struct RunSummary {
    pub log: SimulationLog,
    pub csv: PathBuf,
    pub angles: PathBuf,
    pub horizon: PathBuf,
    /// Empty when the run counts as a successful stabilization.
    pub diagnostics: Vec<String>,
}

/// Simulates `cfg` and writes the CSV log and both plots into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    let log = simulate(cfg)?;
    fs::create_dir_all(out_dir).map_err(|source| Error::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let csv = out_dir.join(&cfg.csv_file);
    let angles = out_dir.join(&cfg.angles_svg);
    let horizon = out_dir.join(&cfg.horizon_svg);
    if !log.records.is_empty() {
        write_csv(&log, &csv)?;
        write_svg_plots(&log, &angles, &horizon)?;
    }
    let mut diagnostics = log.diagnostics();
    if log.records.is_empty() {
        diagnostics.push("no controller decisions were recorded".into());
    }
    Ok(RunSummary {
        log,
        csv,
        angles,
        horizon,
        diagnostics,
    })
}

/// Runs the grid-oracle property suite on every built-in instance.
pub fn check_builtin() -> Result<Vec<SuiteReport>> {
    GridInstance::builtin()
        .iter()
        .map(|inst| run_property_suite(inst, CHECK_HORIZON_CAP))
        .collect()
}
