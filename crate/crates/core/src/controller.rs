//! Adaptive-horizon receding-horizon controller.
//!
//! At each plant step the horizon-N problem is solved, its end state is
//! extended `L` steps under the terminal feedback, and the Lyapunov window
//! conditions are checked on the extension:
//!
//! ```text
//! (L1)  V_f(x(k))              ≥ α(|x(k)|) − slack
//! (L2)  V_f(x(k)) − V_f(x(k+1)) ≥ α(|x(k)|) − slack      k = N … N+L−1
//! ```
//!
//! A pass applies `u⁰(0)` and lowers the horizon by one for the next step. A
//! failure raises the horizon and re-solves at the same state while the
//! per-step re-solve budget lasts; once it is spent the last `u⁰(0)` is
//! applied and the next step starts one horizon higher. At `N = 0` the
//! terminal feedback drives the plant directly and the window is still
//! monitored from the current state.

use std::time::Instant;

use crate::dynamics::{ControlVec, Model, StateVec};
use crate::error::{Error, Result};
use crate::ocp::{shift_warm_start, solve_ocp, OcpProblem, OcpSolution, SolverOptions};
use crate::terminal::{QuadLagrangian, TerminalPair};

#[derive(Clone, Debug, PartialEq)]
pub struct ControllerConfig {
    pub n_init: usize,
    /// Extension length `L`.
    pub extension_steps: usize,
    /// Hard horizon cap.
    pub n_max: usize,
    /// Re-solves allowed at one state before the plant is advanced anyway.
    pub max_resolves_per_step: usize,
    pub lyap_slack: f64,
    pub solver: SolverOptions,
    /// Measure solve wall-clock time. Off by default so logs are reproducible.
    pub record_wall_clock: bool,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            n_init: 5,
            extension_steps: 5,
            n_max: 50,
            max_resolves_per_step: 10,
            lyap_slack: 0.0,
            solver: SolverOptions::default(),
            record_wall_clock: false,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        let invalid = |name: &'static str, reason: String| Error::InvalidParameter { name, reason };
        if self.n_init < 1 {
            return Err(invalid("n_init", "must be at least 1".into()));
        }
        if self.extension_steps < 1 {
            return Err(invalid("extension_steps", "must be at least 1".into()));
        }
        if self.n_max < self.n_init {
            return Err(invalid(
                "n_max",
                format!("must be at least n_init = {}", self.n_init),
            ));
        }
        if !(self.lyap_slack.is_finite() && self.lyap_slack >= 0.0) {
            return Err(invalid(
                "lyap_slack",
                format!("must be nonnegative, got {}", self.lyap_slack),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControllerState {
    pub horizon: usize,
    /// Warm start for the next solve; length `max(horizon, 1)`.
    pub warm: Vec<ControlVec>,
    pub step_index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowEntry {
    pub vf: f64,
    pub alpha: f64,
    pub decrease: f64,
    pub l1: bool,
    pub l2: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LyapunovWindowReport {
    pub entries: Vec<WindowEntry>,
    pub pass: bool,
}

impl LyapunovWindowReport {
    /// Window whose extension could not be computed.
    pub fn undefined() -> Self {
        Self {
            entries: Vec::new(),
            pass: false,
        }
    }

    /// First step index (relative to the window start) that violates either condition.
    pub fn first_failure(&self) -> Option<usize> {
        self.entries.iter().position(|e| !(e.l1 && e.l2))
    }
}

/// `(x(N), …, x(N+L))` with `x(k+1) = f(x(k), κ_f(x(k)))`.
pub fn extend_with_terminal_feedback(
    model: &Model,
    terminal: &TerminalPair,
    x_end: &StateVec,
    steps: usize,
) -> Result<Vec<StateVec>> {
    if steps == 0 {
        return Err(Error::InvalidParameter {
            name: "extension_steps",
            reason: "must be at least 1".into(),
        });
    }
    let mut ext = Vec::with_capacity(steps + 1);
    ext.push(x_end.clone());
    for k in 0..steps {
        let u = terminal.terminal_feedback(&ext[k]);
        ext.push(model.step_euler(&ext[k], &u)?);
    }
    Ok(ext)
}

/// Evaluates (L1)/(L2) on every consecutive pair of the extension.
pub fn check_lyapunov_window(
    terminal: &TerminalPair,
    ext: &[StateVec],
    slack: f64,
) -> LyapunovWindowReport {
    if ext.len() < 2 {
        return LyapunovWindowReport::undefined();
    }
    let entries: Vec<WindowEntry> = ext
        .windows(2)
        .map(|pair| {
            let vf = terminal.terminal_cost(&pair[0]);
            let vf_next = terminal.terminal_cost(&pair[1]);
            let alpha = terminal.alpha_bound(&pair[0]);
            let decrease = vf - vf_next;
            let threshold = alpha - slack;
            WindowEntry {
                vf,
                alpha,
                decrease,
                l1: vf.is_finite() && vf >= threshold,
                l2: vf_next.is_finite() && decrease >= threshold,
            }
        })
        .collect();
    let pass = entries.iter().all(|e| e.l1 && e.l2);
    LyapunovWindowReport { entries, pass }
}

/// One controller decision, either applied to the plant (`advanced`) or a
/// rejected attempt followed by a re-solve at a longer horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step_index: usize,
    pub time: f64,
    pub advanced: bool,
    pub state: StateVec,
    /// Applied control, or the candidate `u⁰(0)` of a rejected attempt.
    pub control: ControlVec,
    pub horizon: usize,
    /// Horizon carried into the next decision.
    pub next_horizon: usize,
    /// Re-solves already spent at this state before this attempt.
    pub resolves: usize,
    pub solver_iters: usize,
    pub converged: bool,
    /// `V⁰_N(x)`; equals `V_f(x)` at `N = 0`.
    pub cost: f64,
    /// `V_f(x(N))`.
    pub vf_terminal: f64,
    pub window_pass: bool,
    pub solve_seconds: f64,
    pub extension: Vec<StateVec>,
    pub window: LyapunovWindowReport,
    /// The window failed with the horizon already at the cap.
    pub saturated: bool,
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub control: ControlVec,
    pub state: ControllerState,
    /// Rejected attempts in order, then the applied decision last.
    pub records: Vec<StepRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SimulationStatus {
    Completed,
    /// The plant state left the finite range; the log stops there.
    NonFinite {
        step_index: usize,
        message: String,
    },
}

#[derive(Clone, Debug)]
pub struct SimulationLog {
    pub records: Vec<StepRecord>,
    pub final_state: StateVec,
    pub status: SimulationStatus,
}

impl SimulationLog {
    pub fn advanced(&self) -> impl Iterator<Item = &StepRecord> {
        self.records.iter().filter(|r| r.advanced)
    }

    pub fn plant_steps(&self) -> usize {
        self.advanced().count()
    }

    pub fn saturation_events(&self) -> usize {
        self.records.iter().filter(|r| r.saturated).count()
    }

    /// Human-readable reasons the run should count as a stabilization failure.
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let SimulationStatus::NonFinite {
            step_index,
            message,
        } = &self.status
        {
            out.push(format!("non-finite state at step {step_index}: {message}"));
        }
        let saturated = self.saturation_events();
        if saturated > 0 {
            out.push(format!(
                "Lyapunov window still failing at the horizon cap on {saturated} step(s)"
            ));
        }
        out
    }
}

/// Everything the controller needs besides its mutable state.
#[derive(Clone, Debug)]
pub struct Ahmpc {
    pub config: ControllerConfig,
    pub model: Model,
    pub lagrangian: QuadLagrangian,
    pub terminal: TerminalPair,
}

struct Attempt {
    solution: OcpSolution,
    extension: Vec<StateVec>,
    window: LyapunovWindowReport,
    seconds: f64,
}

impl Ahmpc {
    pub fn new(
        config: ControllerConfig,
        model: Model,
        lagrangian: QuadLagrangian,
        terminal: TerminalPair,
    ) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            model,
            lagrangian,
            terminal,
        })
    }

    /// Starting state: horizon `n_init` with an all-zero warm start.
    pub fn initial_state(&self) -> ControllerState {
        ControllerState {
            horizon: self.config.n_init,
            warm: vec![ControlVec::zeros(self.model.m()); self.config.n_init],
            step_index: 0,
        }
    }

    fn window_from(&self, x_end: &StateVec) -> (Vec<StateVec>, LyapunovWindowReport) {
        match extend_with_terminal_feedback(
            &self.model,
            &self.terminal,
            x_end,
            self.config.extension_steps,
        ) {
            Ok(ext) => {
                let report = check_lyapunov_window(&self.terminal, &ext, self.config.lyap_slack);
                (ext, report)
            }
            Err(_) => (vec![x_end.clone()], LyapunovWindowReport::undefined()),
        }
    }

    fn attempt(&self, x: &StateVec, horizon: usize, warm: &[ControlVec]) -> Result<Attempt> {
        let started = self.config.record_wall_clock.then(Instant::now);
        let problem = OcpProblem::new(&self.model, &self.lagrangian, &self.terminal, x, horizon)?;
        let solution = solve_ocp(&problem, warm, self.config.solver)?;
        let seconds = started.map_or(0.0, |t| t.elapsed().as_secs_f64());
        let (extension, window) = self.window_from(&solution.x_seq[horizon]);
        Ok(Attempt {
            solution,
            extension,
            window,
            seconds,
        })
    }

    fn terminal_regime(&self, state: &ControllerState, x: &StateVec) -> StepOutcome {
        let (extension, window) = self.window_from(x);
        let control = self.terminal.terminal_feedback(x);
        let next_horizon = if window.pass { 0 } else { 1 };
        let next_warm = vec![self
            .terminal
            .terminal_feedback(extension.get(1).unwrap_or(x))];
        let vf = self.terminal.terminal_cost(x);
        let record = StepRecord {
            step_index: state.step_index,
            time: state.step_index as f64 * self.model.dt(),
            advanced: true,
            state: x.clone(),
            control: control.clone(),
            horizon: 0,
            next_horizon,
            resolves: 0,
            solver_iters: 0,
            converged: true,
            cost: vf,
            vf_terminal: vf,
            window_pass: window.pass,
            solve_seconds: 0.0,
            extension,
            window,
            saturated: false,
        };
        StepOutcome {
            control,
            state: ControllerState {
                horizon: next_horizon,
                warm: next_warm,
                step_index: state.step_index + 1,
            },
            records: vec![record],
        }
    }

    /// One plant step of the adaptive-horizon policy.
    pub fn step(&self, state: &ControllerState, x: &StateVec) -> Result<StepOutcome> {
        crate::dynamics::check_finite("controller state", x)?;
        if state.horizon == 0 {
            return Ok(self.terminal_regime(state, x));
        }

        let cfg = &self.config;
        let time = state.step_index as f64 * self.model.dt();
        let mut horizon = state.horizon.min(cfg.n_max);
        let mut warm = shift_warm_start(&self.model, &self.terminal, &state.warm, horizon, x)?;
        let mut records = Vec::new();
        let mut resolves = 0;

        loop {
            let Attempt {
                solution,
                extension,
                window,
                seconds,
            } = self.attempt(x, horizon, &warm)?;
            let x_end = solution.x_seq[horizon].clone();
            let control = solution.u_seq[0].clone();
            let pass = window.pass;
            let can_grow = resolves < cfg.max_resolves_per_step && horizon < cfg.n_max;

            let next_horizon = if pass {
                horizon - 1
            } else {
                (horizon + 1).min(cfg.n_max)
            };
            let advanced = pass || !can_grow;
            let mut record = StepRecord {
                step_index: state.step_index,
                time,
                advanced,
                state: x.clone(),
                control: control.clone(),
                horizon,
                next_horizon,
                resolves,
                solver_iters: solution.iters,
                converged: solution.converged,
                cost: solution.cost,
                vf_terminal: self.terminal.terminal_cost(&x_end),
                window_pass: pass,
                solve_seconds: seconds,
                extension,
                window,
                saturated: !pass && horizon == cfg.n_max,
            };

            if !advanced {
                warm = shift_warm_start(
                    &self.model,
                    &self.terminal,
                    &solution.u_seq,
                    horizon + 1,
                    &x_end,
                )?;
                records.push(record);
                horizon += 1;
                resolves += 1;
                continue;
            }

            let next_warm = if next_horizon == 0 {
                vec![self.terminal.terminal_feedback(&solution.x_seq[1])]
            } else {
                // The applied control is dropped even when the window failed,
                // so the warm start stays aligned with the advanced plant.
                let tail = &solution.u_seq[1..];
                shift_warm_start(&self.model, &self.terminal, tail, next_horizon, &x_end)
                    .unwrap_or_else(|_| vec![ControlVec::zeros(self.model.m()); next_horizon])
            };
            record.next_horizon = next_horizon;
            records.push(record);
            return Ok(StepOutcome {
                control,
                state: ControllerState {
                    horizon: next_horizon,
                    warm: next_warm,
                    step_index: state.step_index + 1,
                },
                records,
            });
        }
    }

    /// Runs `steps` plant advances from `x0` under the Euler plant.
    pub fn simulate(&self, x0: &StateVec, steps: usize) -> Result<SimulationLog> {
        if steps == 0 {
            return Err(Error::InvalidParameter {
                name: "steps",
                reason: "must be at least 1".into(),
            });
        }
        let mut state = self.initial_state();
        let mut x = x0.clone();
        let mut records = Vec::new();
        let mut status = SimulationStatus::Completed;
        for _ in 0..steps {
            let outcome = match self.step(&state, &x) {
                Ok(o) => o,
                Err(e @ (Error::NonFinite { .. } | Error::RolloutNonFinite { .. })) => {
                    status = SimulationStatus::NonFinite {
                        step_index: state.step_index,
                        message: e.to_string(),
                    };
                    break;
                }
                Err(e) => return Err(e),
            };
            records.extend(outcome.records);
            match self.model.step_euler(&x, &outcome.control) {
                Ok(next) => x = next,
                Err(e) => {
                    status = SimulationStatus::NonFinite {
                        step_index: state.step_index,
                        message: e.to_string(),
                    };
                    break;
                }
            }
            state = outcome.state;
        }
        Ok(SimulationLog {
            records,
            final_state: x,
            status,
        })
    }
}

/// Free-function form of [`Ahmpc::step`].
pub fn controller_step(
    ctrl: &Ahmpc,
    state: &ControllerState,
    x: &StateVec,
) -> Result<(ControlVec, ControllerState, Vec<StepRecord>)> {
    let out = ctrl.step(state, x)?;
    Ok((out.control, out.state, out.records))
}

/// Free-function form of [`Ahmpc::simulate`].
pub fn simulate_closed_loop(ctrl: &Ahmpc, x0: &StateVec, steps: usize) -> Result<SimulationLog> {
    ctrl.simulate(x0, steps)
}
