//! Scenario files, built-in experiments, run orchestration, and report
//! emission.
//!
//! A scenario is a TOML document with `[network]`, `[costs]`, `[gains]`,
//! `[[events]]`, and `[run]` sections. All power quantities at the file
//! boundary are megawatts; internally everything is per-unit on a 100 MVA
//! base. Costs are quoted against megawatt-scale power, so per-unit cost
//! values are scaled by the base when reported in currency per hour.

use crate::analysis::{self, check_equilibrium_efficiency, EfficiencyReport, LyapunovReport};
use crate::costs::{CostProfile, QuadraticCost};
use crate::dynamics::{
    simulate, ConvergenceCriterion, Event, EventChange, EventSchedule, Gains, SimulationSetup,
    SystemState, Trajectory,
};
use crate::market::{solve_economic_dispatch, DispatchSolution};
use crate::network::{bfs_spanning_tree, Network};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

/// System base power: per-unit power times this is megawatts.
pub const MW_PER_PU: f64 = 100.0;

/// Megawatts to per-unit.
pub fn mw_to_pu(mw: f64) -> f64 {
    mw / MW_PER_PU
}

/// Per-unit to megawatts, snapped to the 0.1 MW grid whenever the snapped
/// value is exactly consistent with the per-unit input. This makes the
/// MW -> pu -> MW round trip exact for values at 0.1 MW granularity.
pub fn pu_to_mw(pu: f64) -> f64 {
    let mw = pu * MW_PER_PU;
    let snapped = (mw * 10.0).round() / 10.0;
    if snapped / MW_PER_PU == pu {
        snapped
    } else {
        mw
    }
}

/// Cost rate in per-unit power terms to currency per hour.
pub fn cost_rate_to_per_hour(pu_rate: f64) -> f64 {
    pu_rate * MW_PER_PU
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("scenario serialization error: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("[{section}] {message}")]
    Invalid {
        section: &'static str,
        message: String,
    },
    #[error(transparent)]
    Network(#[from] crate::network::NetworkError),
    #[error(transparent)]
    Cost(#[from] crate::costs::CostError),
    #[error(transparent)]
    Dynamics(#[from] crate::dynamics::DynamicsError),
    #[error(transparent)]
    Simulation(#[from] crate::dynamics::SimulationError),
}

/// Scalar broadcast or one value per bus.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum ScalarOrPerBus {
    Scalar(f64),
    PerBus(Vec<f64>),
}

impl ScalarOrPerBus {
    fn to_vector(&self, n: usize, name: &'static str) -> Result<DVector<f64>, ScenarioError> {
        match self {
            ScalarOrPerBus::Scalar(v) => Ok(DVector::from_element(n, *v)),
            ScalarOrPerBus::PerBus(vs) => {
                if vs.len() != n {
                    return Err(ScenarioError::Invalid {
                        section: "gains",
                        message: format!("{name} has {} entries, expected {n}", vs.len()),
                    });
                }
                Ok(DVector::from_vec(vs.clone()))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NetworkSection {
    pub buses: usize,
    /// 1-indexed `[from, to]` pairs; `from` is the positive end.
    pub edges: Vec<[usize; 2]>,
    /// Per-edge susceptance magnitude (per-unit).
    pub susceptance: Vec<f64>,
    /// Per-bus voltage magnitude (per-unit).
    pub voltage: Vec<f64>,
    /// Per-bus inertia.
    pub inertia: Vec<f64>,
    /// Per-bus damping.
    pub damping: Vec<f64>,
    /// Optional explicit spanning tree as 1-indexed edge numbers;
    /// defaults to a breadth-first tree rooted at bus 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CostsSection {
    /// Per-bus quadratic coefficient.
    pub q: Vec<f64>,
    /// Per-bus linear coefficient.
    pub c: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GainsSection {
    pub tau_b: ScalarOrPerBus,
    pub tau_g: ScalarOrPerBus,
    pub tau_lambda: f64,
    pub rho: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LoadChange {
    /// 1-indexed bus.
    pub bus: usize,
    pub mw: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CostChange {
    /// 1-indexed bus.
    pub bus: usize,
    pub q: f64,
    pub c: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EventSection {
    pub time: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub loads: Vec<LoadChange>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub costs: Vec<CostChange>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    /// Start at the synchronous equilibrium of the initial dispatch
    /// optimum, bidding marginal cost.
    #[default]
    Equilibrium,
    /// Start from the explicit state in `[run.initial]`.
    Explicit,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct InitialSection {
    /// Per-bus angles (radians); reduced to tree coordinates internally.
    pub delta: Vec<f64>,
    pub omega: Vec<f64>,
    pub bids: Vec<f64>,
    pub p_g_mw: Vec<f64>,
    pub lambda: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunSection {
    /// Initial per-bus load (MW).
    pub load_mw: Vec<f64>,
    pub t_end: f64,
    pub dt: f64,
    pub output_stride: usize,
    #[serde(default)]
    pub init: InitMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialSection>,
}

/// One reproducible experiment: network, costs, gains, events, and run
/// parameters, exactly as read from (or written to) a scenario file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub network: NetworkSection,
    pub costs: CostsSection,
    pub gains: GainsSection,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<EventSection>,
    pub run: RunSection,
}

impl Scenario {
    /// Full structural validation; every error names its section.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let n = self.network.buses;
        let m = self.network.edges.len();
        let invalid =
            |section: &'static str, message: String| ScenarioError::Invalid { section, message };
        for (k, e) in self.network.edges.iter().enumerate() {
            if e[0] == 0 || e[1] == 0 || e[0] > n || e[1] > n {
                return Err(invalid(
                    "network",
                    format!("edge {} references bus outside 1..={n}", k + 1),
                ));
            }
        }
        for (name, len, expect) in [
            ("susceptance", self.network.susceptance.len(), m),
            ("voltage", self.network.voltage.len(), n),
            ("inertia", self.network.inertia.len(), n),
            ("damping", self.network.damping.len(), n),
            ("costs.q", self.costs.q.len(), n),
            ("costs.c", self.costs.c.len(), n),
            ("run.load_mw", self.run.load_mw.len(), n),
        ] {
            if len != expect {
                return Err(invalid(
                    "network",
                    format!("{name} has {len} entries, expected {expect}"),
                ));
            }
        }
        if let Some(tree) = &self.network.tree {
            if tree.iter().any(|&k| k == 0 || k > m) {
                return Err(invalid(
                    "network",
                    format!("tree edge number outside 1..={m}"),
                ));
            }
        }
        if !(self.run.dt > 0.0) {
            return Err(invalid(
                "run",
                format!("dt must be positive, got {}", self.run.dt),
            ));
        }
        if !(self.run.t_end > 0.0) {
            return Err(invalid("run", "t_end must be positive".into()));
        }
        if self.run.load_mw.iter().any(|&l| l < 0.0) {
            return Err(invalid("run", "loads must be nonnegative".into()));
        }
        let mut last = -f64::INFINITY;
        for (k, ev) in self.events.iter().enumerate() {
            if ev.time < 0.0 || ev.time >= self.run.t_end {
                return Err(invalid(
                    "events",
                    format!(
                        "event {} at t = {} outside [0, t_end = {})",
                        k + 1,
                        ev.time,
                        self.run.t_end
                    ),
                ));
            }
            if ev.time <= last {
                return Err(invalid(
                    "events",
                    format!("event times must be strictly increasing (event {})", k + 1),
                ));
            }
            last = ev.time;
            for lc in &ev.loads {
                if lc.bus == 0 || lc.bus > n {
                    return Err(invalid(
                        "events",
                        format!("load change bus {} invalid", lc.bus),
                    ));
                }
            }
            for cc in &ev.costs {
                if cc.bus == 0 || cc.bus > n {
                    return Err(invalid(
                        "events",
                        format!("cost change bus {} invalid", cc.bus),
                    ));
                }
            }
        }
        if self.run.init == InitMode::Explicit && self.run.initial.is_none() {
            return Err(invalid(
                "run",
                "init = \"explicit\" requires [run.initial]".into(),
            ));
        }
        Ok(())
    }

    /// Builds the simulation-ready objects (per-unit domain).
    pub fn compile(&self) -> Result<CompiledScenario, ScenarioError> {
        self.validate()?;
        let n = self.network.buses;
        let edges: Vec<(usize, usize)> = self
            .network
            .edges
            .iter()
            .map(|e| (e[0] - 1, e[1] - 1))
            .collect();
        let gamma: Vec<f64> = self
            .network
            .susceptance
            .iter()
            .zip(&self.network.edges)
            .map(|(&b, e)| b * self.network.voltage[e[0] - 1] * self.network.voltage[e[1] - 1])
            .collect();
        let tree = match &self.network.tree {
            Some(t) => t.iter().map(|&k| k - 1).collect(),
            None => bfs_spanning_tree(n, &edges)?,
        };
        let network = Network::with_tree(
            n,
            edges,
            gamma,
            self.network.inertia.clone(),
            self.network.damping.clone(),
            tree,
        )?;
        let costs = CostProfile::from_coefficients(&self.costs.q, &self.costs.c)?;
        let gains = Gains::new(
            self.gains.tau_b.to_vector(n, "tau_b")?,
            self.gains.tau_g.to_vector(n, "tau_g")?,
            self.gains.tau_lambda,
            self.gains.rho,
            self.gains.sigma,
        )?;
        let p_d = DVector::from_iterator(n, self.run.load_mw.iter().map(|&mw| mw_to_pu(mw)));
        let mut events = Vec::with_capacity(self.events.len());
        for ev in &self.events {
            let mut cost_changes = Vec::with_capacity(ev.costs.len());
            for cc in &ev.costs {
                cost_changes.push((cc.bus - 1, QuadraticCost::new(cc.q, cc.c)?));
            }
            events.push(Event {
                time: ev.time,
                change: EventChange {
                    loads: ev
                        .loads
                        .iter()
                        .map(|lc| (lc.bus - 1, mw_to_pu(lc.mw)))
                        .collect(),
                    costs: cost_changes,
                },
            });
        }
        let events = EventSchedule::new(events)?;
        Ok(CompiledScenario {
            name: self.name.clone(),
            network,
            setup: SimulationSetup {
                costs,
                p_d,
                gains,
                events,
                t_end: self.run.t_end,
                dt: self.run.dt,
                output_stride: self.run.output_stride,
                convergence: ConvergenceCriterion::default(),
            },
            init: self.run.init,
            initial: self.run.initial.clone(),
        })
    }

    /// Serializes the scenario back to TOML.
    pub fn to_toml(&self) -> Result<String, ScenarioError> {
        Ok(toml::to_string_pretty(self)?)
    }
}

/// A validated scenario lowered into simulation objects.
#[derive(Debug, Clone)]
pub struct CompiledScenario {
    pub name: String,
    pub network: Network,
    pub setup: SimulationSetup,
    pub init: InitMode,
    pub initial: Option<InitialSection>,
}

impl CompiledScenario {
    /// Builds the initial closed-loop state per the scenario's init mode.
    pub fn initial_state(&self) -> Result<SystemState, ScenarioError> {
        match self.init {
            InitMode::Equilibrium => {
                let state = analysis::reference_equilibrium(
                    &self.network,
                    &self.setup.costs,
                    &self.setup.p_d,
                )
                .map_err(|e| ScenarioError::Invalid {
                    section: "run",
                    message: format!("cannot construct equilibrium start: {e}"),
                })?;
                Ok(state)
            }
            InitMode::Explicit => {
                let init = self.initial.as_ref().expect("validated");
                let n = self.network.n_buses();
                for (name, len) in [
                    ("delta", init.delta.len()),
                    ("omega", init.omega.len()),
                    ("bids", init.bids.len()),
                    ("p_g_mw", init.p_g_mw.len()),
                ] {
                    if len != n {
                        return Err(ScenarioError::Invalid {
                            section: "run.initial",
                            message: format!("{name} has {len} entries, expected {n}"),
                        });
                    }
                }
                let delta = DVector::from_vec(init.delta.clone());
                Ok(SystemState {
                    phi: self.network.phi_from_delta(&delta),
                    omega: DVector::from_vec(init.omega.clone()),
                    bids: DVector::from_vec(init.bids.clone()),
                    p_g: DVector::from_iterator(n, init.p_g_mw.iter().map(|&mw| mw_to_pu(mw))),
                    lambda: init.lambda,
                })
            }
        }
    }
}

/// Loads and validates a scenario from a TOML file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    let scenario: Scenario = toml::from_str(&text)?;
    scenario.validate()?;
    Ok(scenario)
}

/// Resolves a CLI scenario argument: a built-in name or a file path.
pub fn resolve_scenario(arg: &str) -> Result<Scenario, ScenarioError> {
    if let Some(s) = builtin(arg) {
        return Ok(s);
    }
    load_scenario(arg)
}

pub mod builtins;
pub use builtins::{builtin, builtin_names};

/// Per-segment digest of a finished run.
#[derive(Debug, Clone)]
pub struct SegmentSummary {
    pub index: usize,
    pub t_start: f64,
    pub t_end: f64,
    /// Dispatch at the segment's final state (MW).
    pub dispatch_mw: Vec<f64>,
    /// Multiplier at the segment's final state.
    pub lambda: f64,
    /// Generation cost rate at the final state (currency per hour).
    pub cost_per_hour: f64,
    /// Largest frequency deviation over the segment's samples.
    pub max_abs_omega: f64,
    /// First sample time (relative to segment start) after which the
    /// frequency deviation stays below 1e-3 through the segment end.
    pub freq_restoration_time: Option<f64>,
    pub efficiency: EfficiencyReport,
    pub v_start: f64,
    pub v_end: f64,
    pub max_step_increment: f64,
}

/// Digest of one simulation run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub scenario: String,
    pub segments: Vec<SegmentSummary>,
    pub lyapunov: LyapunovReport,
    pub min_bid: f64,
    pub min_p_g: f64,
    pub converged_at: Option<f64>,
}

/// Frequency threshold used for restoration-time reporting.
pub const FREQ_RESTORED: f64 = 1e-3;
/// Efficiency-check tolerance for simulation-derived states.
pub const SIM_STATE_TOL: f64 = 1e-4;

/// Runs a compiled scenario and writes `trajectory.csv` and `summary.txt`
/// into `out_dir` (created if missing).
pub fn run(
    compiled: &CompiledScenario,
    out_dir: impl AsRef<Path>,
) -> Result<(RunSummary, Trajectory), ScenarioError> {
    let initial = compiled.initial_state()?;
    let trajectory = simulate(&compiled.network, &compiled.setup, initial)?;
    let summary = summarize(compiled, &trajectory)?;
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(
        out_dir.join("trajectory.csv"),
        render_trajectory(&compiled.network, &trajectory),
    )?;
    std::fs::write(out_dir.join("summary.txt"), render_summary(&summary))?;
    Ok((summary, trajectory))
}

/// Builds the run digest without touching the filesystem.
pub fn summarize(
    compiled: &CompiledScenario,
    trajectory: &Trajectory,
) -> Result<RunSummary, ScenarioError> {
    let mut segments = Vec::new();
    for (index, seg) in trajectory.segments.iter().enumerate() {
        let (lo, hi) = seg.sample_range;
        let samples = &trajectory.samples[lo..hi];
        let times = &trajectory.times[lo..hi];
        let mut max_abs_omega = 0.0f64;
        for s in samples {
            max_abs_omega = max_abs_omega.max(s.omega.abs().max());
        }
        // last sample index from which |omega| stays restored
        let mut restored_from = None;
        for (i, s) in samples.iter().enumerate().rev() {
            if s.omega.abs().max() < FREQ_RESTORED {
                restored_from = Some(i);
            } else {
                break;
            }
        }
        let freq_restoration_time = restored_from.map(|i| times[i] - seg.t_start);
        let end = &seg.end_state;
        let efficiency = check_equilibrium_efficiency(
            &compiled.network,
            &seg.costs,
            end,
            &seg.p_d,
            SIM_STATE_TOL,
        )
        .map_err(|e| ScenarioError::Invalid {
            section: "run",
            message: format!("efficiency check failed structurally: {e}"),
        })?;
        let cost_per_hour = cost_rate_to_per_hour(
            seg.costs
                .total_value(&end.p_g)
                .map_err(ScenarioError::Cost)?,
        );
        segments.push(SegmentSummary {
            index,
            t_start: seg.t_start,
            t_end: seg.t_end,
            dispatch_mw: end.p_g.iter().map(|&p| pu_to_mw(p)).collect(),
            lambda: end.lambda,
            cost_per_hour,
            max_abs_omega,
            freq_restoration_time,
            efficiency,
            v_start: seg.v_start,
            v_end: seg.v_end,
            max_step_increment: seg.max_step_increment,
        });
    }
    let lyapunov = LyapunovReport {
        times: trajectory.times.clone(),
        values: trajectory.lyapunov.clone(),
        max_increment: trajectory
            .segments
            .iter()
            .map(|s| s.max_step_increment)
            .fold(f64::NEG_INFINITY, f64::max),
        descends: trajectory
            .segments
            .iter()
            .all(|s| s.max_step_increment <= analysis::DESCENT_SLACK),
        slack: analysis::DESCENT_SLACK,
    };
    Ok(RunSummary {
        scenario: compiled.name.clone(),
        segments,
        lyapunov,
        min_bid: trajectory.min_bid,
        min_p_g: trajectory.min_p_g,
        converged_at: trajectory.converged_at,
    })
}

/// Stable trajectory column order:
/// `time, omega_1.., bid_1.., pg_mw_1.., lambda, lyapunov`.
pub fn render_trajectory(net: &Network, trajectory: &Trajectory) -> String {
    let n = net.n_buses();
    let mut out = String::new();
    out.push_str("time");
    for i in 1..=n {
        let _ = write!(out, ",omega_{i}");
    }
    for i in 1..=n {
        let _ = write!(out, ",bid_{i}");
    }
    for i in 1..=n {
        let _ = write!(out, ",pg_mw_{i}");
    }
    out.push_str(",lambda,lyapunov\n");
    for ((t, s), v) in trajectory
        .times
        .iter()
        .zip(&trajectory.samples)
        .zip(&trajectory.lyapunov)
    {
        let _ = write!(out, "{t}");
        for x in s.omega.iter() {
            let _ = write!(out, ",{x}");
        }
        for x in s.bids.iter() {
            let _ = write!(out, ",{x}");
        }
        for x in s.p_g.iter() {
            let _ = write!(out, ",{}", pu_to_mw(*x));
        }
        let _ = writeln!(out, ",{},{}", s.lambda, v);
    }
    out
}

/// Human-readable run summary with one block per segment.
pub fn render_summary(summary: &RunSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scenario: {}", summary.scenario);
    let _ = writeln!(
        out,
        "projection: min_bid = {:.6e}, min_p_g = {:.6e}",
        summary.min_bid, summary.min_p_g
    );
    let _ = writeln!(
        out,
        "lyapunov: descends = {} (max step increment {:.3e}, slack {:.1e})",
        if summary.lyapunov.descends {
            "PASS"
        } else {
            "FAIL"
        },
        summary.lyapunov.max_increment,
        summary.lyapunov.slack
    );
    if let Some(t) = summary.converged_at {
        let _ = writeln!(out, "converged early at t = {t}");
    }
    for seg in &summary.segments {
        let _ = writeln!(
            out,
            "segment {}: t = [{}, {})",
            seg.index, seg.t_start, seg.t_end
        );
        let dispatch: Vec<String> = seg
            .dispatch_mw
            .iter()
            .map(|mw| format!("{mw:.3}"))
            .collect();
        let _ = writeln!(out, "  dispatch_mw = [{}]", dispatch.join(", "));
        let _ = writeln!(
            out,
            "  lambda = {:.6}  cost_per_hour = {:.2}  max|omega| = {:.3e}",
            seg.lambda, seg.cost_per_hour, seg.max_abs_omega
        );
        match seg.freq_restoration_time {
            Some(t) => {
                let _ = writeln!(out, "  freq_restoration_s = {t:.3}");
            }
            None => {
                let _ = writeln!(out, "  freq_restoration_s = never");
            }
        }
        let e = &seg.efficiency;
        let _ = writeln!(
            out,
            "  efficiency = {} (|omega| {:.2e}, balance {:.2e}, dual {:.2e}, compl {:.2e}, profit {:.2e}, interval {:.2e})",
            if e.pass { "PASS" } else { "FAIL" },
            e.omega_inf,
            e.balance_residual,
            e.dual_violation,
            e.complementarity,
            e.profit_consistency,
            e.interval_violation
        );
        let _ = writeln!(
            out,
            "  lyapunov: V_start = {:.6e}, V_end = {:.6e}, max step increment = {:.3e}",
            seg.v_start, seg.v_end, seg.max_step_increment
        );
    }
    out
}

/// Formats a dispatch solution for terminal output.
pub fn render_dispatch(sol: &DispatchSolution, costs: &CostProfile) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "market price lambda = {:.6}", sol.lambda);
    let _ = writeln!(out, "bus  p_g_mw      mu");
    for i in 0..sol.p_g.len() {
        let _ = writeln!(
            out,
            "{:>3}  {:>9.3}  {:>10.4}",
            i + 1,
            pu_to_mw(sol.p_g[i]),
            sol.mu[i]
        );
    }
    let total_cost = costs.total_value(&sol.p_g).map(cost_rate_to_per_hour);
    let _ = writeln!(
        out,
        "total dispatch = {:.3} MW, cost = {:.2} per hour",
        pu_to_mw(sol.p_g.sum()),
        total_cost.unwrap_or(f64::NAN)
    );
    out
}

/// Solves the dispatch problem for a scenario's initial load.
pub fn dispatch(scenario: &Scenario) -> Result<(DispatchSolution, CostProfile), ScenarioError> {
    let compiled = scenario.compile()?;
    let sol = solve_economic_dispatch(&compiled.setup.costs, &compiled.setup.p_d).map_err(|e| {
        ScenarioError::Invalid {
            section: "run",
            message: format!("dispatch failed: {e}"),
        }
    })?;
    Ok((sol, compiled.setup.costs))
}

/// Offline re-analysis of a saved trajectory file.
#[derive(Debug, Clone)]
pub struct TrajectoryCheck {
    pub rows: usize,
    pub min_bid: f64,
    pub min_p_g_mw: f64,
    pub final_omega_inf: f64,
    pub lyapunov_descends: bool,
    pub max_lyapunov_increment: f64,
    pub pass: bool,
}

/// Re-runs the invariant checks on a saved trajectory file: nonnegative
/// bids and setpoints, Lyapunov descent between samples (within slack),
/// and final frequency restoration.
pub fn check_trajectory(
    path: impl AsRef<Path>,
    slack: f64,
) -> Result<TrajectoryCheck, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| ScenarioError::Invalid {
        section: "check",
        message: "empty trajectory file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').collect();
    let n = cols.iter().filter(|c| c.starts_with("omega_")).count();
    if n == 0 || cols.len() != 3 * n + 3 {
        return Err(ScenarioError::Invalid {
            section: "check",
            message: format!("unrecognized trajectory header ({} columns)", cols.len()),
        });
    }
    let mut rows = 0usize;
    let mut min_bid = f64::INFINITY;
    let mut min_p_g = f64::INFINITY;
    let mut final_omega = f64::INFINITY;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| f.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| ScenarioError::Invalid {
                section: "check",
                message: format!("line {}: {e}", lineno + 2),
            })?;
        if fields.len() != cols.len() {
            return Err(ScenarioError::Invalid {
                section: "check",
                message: format!("line {}: wrong field count", lineno + 2),
            });
        }
        rows += 1;
        let omega_inf = fields[1..1 + n].iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        final_omega = omega_inf;
        for &b in &fields[1 + n..1 + 2 * n] {
            min_bid = min_bid.min(b);
        }
        for &p in &fields[1 + 2 * n..1 + 3 * n] {
            min_p_g = min_p_g.min(p);
        }
        times.push(fields[0]);
        values.push(fields[1 + 3 * n + 1]);
    }
    // Lyapunov descent is checked within contiguous stretches only: the
    // reference changes at events, where the value may jump either way.
    // Sample times repeat at event boundaries, which splits the stretches.
    let mut max_inc = f64::NEG_INFINITY;
    for k in 1..times.len() {
        if times[k] > times[k - 1] {
            max_inc = max_inc.max(values[k] - values[k - 1]);
        }
    }
    let descends = max_inc <= slack;
    let pass = min_bid >= 0.0 && min_p_g >= 0.0 && descends && final_omega < FREQ_RESTORED;
    Ok(TrajectoryCheck {
        rows,
        min_bid,
        min_p_g_mw: min_p_g,
        final_omega_inf: final_omega,
        lyapunov_descends: descends,
        max_lyapunov_increment: max_inc,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mw_round_trip_exact_at_decimw_granularity() {
        for k in 0..=100_000u32 {
            let mw = k as f64 / 10.0;
            let back = pu_to_mw(mw_to_pu(mw));
            assert!(back == mw, "round trip failed at {mw}: got {back}");
        }
    }

    #[test]
    fn builtin_scenarios_validate_and_round_trip() {
        for name in builtin_names() {
            let scenario = builtin(name).unwrap();
            scenario.validate().unwrap();
            let text = scenario.to_toml().unwrap();
            let parsed: Scenario = toml::from_str(&text).unwrap();
            assert_eq!(parsed, scenario, "dump/load round trip for {name}");
        }
    }

    #[test]
    fn builtin_load_vector_matches_reference_values() {
        let scenario = builtin("ieee14-sigma300").unwrap();
        assert_eq!(
            scenario.run.load_mw,
            vec![0.0, 22.0, 80.0, 48.0, 7.6, 11.0, 0.0, 0.0, 30.0, 9.0, 3.5, 6.1, 14.0, 15.0]
        );
        let total: f64 = scenario.run.load_mw.iter().sum();
        assert!((total - 246.2).abs() < 1e-12);
        let sigma0 = builtin("ieee14-sigma0").unwrap();
        assert_eq!(sigma0.gains.sigma, 0.0);
        assert_eq!(scenario.gains.sigma, 300.0);
        assert_eq!(scenario.gains.rho, 300.0);
    }

    #[test]
    fn validation_rejects_bad_event_time() {
        let mut scenario = builtin("ieee14-sigma300").unwrap();
        scenario.events[1].time = scenario.run.t_end;
        let err = scenario.validate().unwrap_err();
        assert!(matches!(
            err,
            ScenarioError::Invalid {
                section: "events",
                ..
            }
        ));
    }

    #[test]
    fn explicit_init_requires_section() {
        let mut scenario = builtin("ieee14-sigma300").unwrap();
        scenario.run.init = InitMode::Explicit;
        assert!(scenario.validate().is_err());
    }

    #[test]
    fn compile_produces_consistent_dimensions() {
        let compiled = builtin("ieee14-sigma300").unwrap().compile().unwrap();
        assert_eq!(compiled.network.n_buses(), 14);
        assert_eq!(compiled.network.n_edges(), 20);
        assert_eq!(compiled.setup.p_d.len(), 14);
        assert!((compiled.setup.p_d.sum() - 2.462).abs() < 1e-12);
    }
}
