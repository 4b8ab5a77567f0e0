//! Flat `key = value` experiment configuration.
//!
//! One pair per line, `#` starts a comment, keys may appear in any order but
//! at most once. Every key is optional; an empty file describes the
//! double-pendulum swing-in experiment.

use std::collections::HashSet;
use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use crate::dynamics::PendulumParams;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    DoublePendulum,
    DoubleIntegrator,
    Scalar,
}

impl ModelKind {
    pub fn state_dim(self) -> usize {
        match self {
            Self::DoublePendulum => 4,
            Self::DoubleIntegrator => 2,
            Self::Scalar => 1,
        }
    }

    pub fn control_dim(self) -> usize {
        match self {
            Self::DoublePendulum => 2,
            Self::DoubleIntegrator | Self::Scalar => 1,
        }
    }

    /// `(dt, q_scale, r_scale)` used when the file does not set them. The
    /// linear models get unit weights so that the default `alpha_coeff`
    /// stays below the LQR decrease rate.
    pub fn default_timing_and_weights(self) -> (f64, f64, f64) {
        match self {
            Self::DoublePendulum => (0.1, 0.1, 0.1),
            Self::DoubleIntegrator | Self::Scalar => (0.2, 1.0, 1.0),
        }
    }

    pub fn default_x0(self) -> Vec<f64> {
        match self {
            Self::DoublePendulum => vec![FRAC_PI_2, -FRAC_PI_2, 0.0, 0.0],
            Self::DoubleIntegrator => vec![1.0, 0.0],
            Self::Scalar => vec![1.0],
        }
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "double_pendulum" => Ok(Self::DoublePendulum),
            "double_integrator" => Ok(Self::DoubleIntegrator),
            "scalar" => Ok(Self::Scalar),
            other => Err(format!(
                "unknown model `{other}` (expected double_pendulum, double_integrator or scalar)"
            )),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::DoublePendulum => "double_pendulum",
            Self::DoubleIntegrator => "double_integrator",
            Self::Scalar => "scalar",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub pendulum: PendulumParams,
    pub dt: f64,
    pub q_scale: f64,
    pub r_scale: f64,
    pub alpha_coeff: f64,
    pub n_init: usize,
    /// Length `L` of the terminal-feedback extension.
    pub extension_steps: usize,
    pub n_max: usize,
    pub max_resolves: usize,
    pub lyap_slack: f64,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
    /// Symmetric box `|uᵢ| ≤ u_max`; unconstrained when absent.
    pub u_max: Option<f64>,
    pub steps: usize,
    pub x0: Vec<f64>,
    pub csv_file: String,
    pub angles_svg: String,
    pub horizon_svg: String,
    /// Only used to generate randomized test instances.
    pub seed: u64,
    pub record_wall_clock: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let model = ModelKind::DoublePendulum;
        Self {
            model,
            pendulum: PendulumParams::default(),
            dt: 0.1,
            q_scale: 0.1,
            r_scale: 0.1,
            alpha_coeff: 0.1,
            n_init: 5,
            extension_steps: 5,
            n_max: 50,
            max_resolves: 10,
            lyap_slack: 0.0,
            solver_tol: 1e-8,
            solver_max_iter: 500,
            u_max: None,
            steps: 200,
            x0: model.default_x0(),
            csv_file: "trajectory.csv".into(),
            angles_svg: "angles.svg".into(),
            horizon_svg: "horizon.svg".into(),
            seed: 0,
            record_wall_clock: false,
        }
    }
}

const KEYS: &[&str] = &[
    "model",
    "l1",
    "l2",
    "m1",
    "m2",
    "g",
    "dt",
    "q_scale",
    "r_scale",
    "alpha_coeff",
    "n_init",
    "extension_steps",
    "n_max",
    "max_resolves",
    "lyap_slack",
    "solver_tol",
    "solver_max_iter",
    "u_max",
    "steps",
    "x0",
    "csv_file",
    "angles_svg",
    "horizon_svg",
    "seed",
    "record_wall_clock",
];

struct Entry<'a> {
    line: usize,
    key: &'a str,
    value: &'a str,
}

impl Entry<'_> {
    fn err(&self, reason: impl Into<String>) -> Error {
        Error::Config {
            line: self.line,
            key: self.key.to_string(),
            reason: reason.into(),
        }
    }

    fn parse<T: FromStr>(&self) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        self.value
            .parse()
            .map_err(|e| self.err(format!("cannot parse `{}`: {e}", self.value)))
    }

    fn positive(&self) -> Result<f64> {
        let v: f64 = self.parse()?;
        if v.is_finite() && v > 0.0 {
            Ok(v)
        } else {
            Err(self.err(format!("must be a positive number, got {v}")))
        }
    }

    fn non_negative(&self) -> Result<f64> {
        let v: f64 = self.parse()?;
        if v.is_finite() && v >= 0.0 {
            Ok(v)
        } else {
            Err(self.err(format!("must be a non-negative number, got {v}")))
        }
    }

    fn count(&self, min: usize) -> Result<usize> {
        let v: usize = self.parse()?;
        if v >= min {
            Ok(v)
        } else {
            Err(self.err(format!("must be at least {min}, got {v}")))
        }
    }

    fn flag(&self) -> Result<bool> {
        match self.value {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            v => Err(self.err(format!("expected true or false, got `{v}`"))),
        }
    }

    fn file_name(&self) -> Result<String> {
        if self.value.is_empty() {
            Err(self.err("file name must not be empty"))
        } else {
            Ok(self.value.to_string())
        }
    }

    fn vector(&self) -> Result<Vec<f64>> {
        self.value
            .split(',')
            .map(|part| {
                let part = part.trim();
                match part.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    Ok(v) => Err(self.err(format!("component {v} is not finite"))),
                    Err(e) => Err(self.err(format!("cannot parse component `{part}`: {e}"))),
                }
            })
            .collect()
    }
}

fn split_lines(text: &str) -> Result<Vec<Entry<'_>>> {
    let mut entries: Vec<Entry<'_>> = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::Config {
                line,
                key: content.to_string(),
                reason: "expected `key = value`".into(),
            });
        };
        let entry = Entry {
            line,
            key: key.trim(),
            value: value.trim(),
        };
        if !KEYS.contains(&entry.key) {
            return Err(entry.err("unknown key"));
        }
        if !seen.insert(entry.key) {
            return Err(entry.err("duplicate key"));
        }
        entries.push(entry);
    }
    Ok(entries)
}

/// Parses and validates a configuration file's contents.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let entries = split_lines(text)?;
    let mut cfg = ExperimentConfig::default();

    // the model decides the default x0 and its expected length
    if let Some(e) = entries.iter().find(|e| e.key == "model") {
        cfg.model = e.parse()?;
        cfg.x0 = cfg.model.default_x0();
        (cfg.dt, cfg.q_scale, cfg.r_scale) = cfg.model.default_timing_and_weights();
    }

    let mut n_max_line = None;
    for e in &entries {
        match e.key {
            "model" => {}
            "l1" => cfg.pendulum.l1 = e.positive()?,
            "l2" => cfg.pendulum.l2 = e.positive()?,
            "m1" => cfg.pendulum.m1 = e.positive()?,
            "m2" => cfg.pendulum.m2 = e.positive()?,
            "g" => cfg.pendulum.g = e.positive()?,
            "dt" => cfg.dt = e.positive()?,
            "q_scale" => cfg.q_scale = e.non_negative()?,
            "r_scale" => cfg.r_scale = e.positive()?,
            "alpha_coeff" => cfg.alpha_coeff = e.positive()?,
            "n_init" => cfg.n_init = e.count(0)?,
            "extension_steps" => cfg.extension_steps = e.count(1)?,
            "n_max" => {
                cfg.n_max = e.count(1)?;
                n_max_line = Some(e);
            }
            "max_resolves" => cfg.max_resolves = e.count(0)?,
            "lyap_slack" => cfg.lyap_slack = e.non_negative()?,
            "solver_tol" => cfg.solver_tol = e.positive()?,
            "solver_max_iter" => cfg.solver_max_iter = e.count(1)?,
            "u_max" => cfg.u_max = Some(e.positive()?),
            "steps" => cfg.steps = e.count(1)?,
            "x0" => {
                let x0 = e.vector()?;
                let n = cfg.model.state_dim();
                if x0.len() != n {
                    return Err(e.err(format!(
                        "model {} has {n} states, got {} values",
                        cfg.model,
                        x0.len()
                    )));
                }
                cfg.x0 = x0;
            }
            "csv_file" => cfg.csv_file = e.file_name()?,
            "angles_svg" => cfg.angles_svg = e.file_name()?,
            "horizon_svg" => cfg.horizon_svg = e.file_name()?,
            "seed" => cfg.seed = e.parse()?,
            "record_wall_clock" => cfg.record_wall_clock = e.flag()?,
            other => unreachable!("key `{other}` passed the whitelist"),
        }
    }

    if cfg.n_init > cfg.n_max {
        let reason = format!("n_max {} is below n_init {}", cfg.n_max, cfg.n_init);
        return Err(match n_max_line {
            Some(e) => e.err(reason),
            None => Error::Config {
                line: 0,
                key: "n_init".into(),
                reason,
            },
        });
    }
    Ok(cfg)
}
