//! Simulation and analysis toolkit for frequency-coupled electricity
//! markets on transmission networks.
//!
//! The library solves the economic dispatch problem, characterizes
//! efficient Nash equilibria of the price-bidding game between generators
//! and the system operator, and integrates the closed-loop projected
//! dynamical system that couples continuous-time bidding, operator
//! setpoint updates, and the network's swing dynamics. An energy-function
//! monitor verifies descent along trajectories and efficiency of
//! converged states.
//!
//! Modules:
//! - [`network`]: transmission graph, incidence structure, swing dynamics.
//! - [`costs`]: strongly convex generator costs and convex conjugates.
//! - [`market`]: dispatch solver, bid-clearing program, Nash analysis.
//! - [`dynamics`]: projected closed-loop field and integrator.
//! - [`analysis`]: energy function, descent sampling, efficiency checks.
//! - [`cli`]: scenario files, built-in experiments, reports.
//!
//! The `parallel` feature (on by default) runs the sampling-heavy
//! verification routines on a thread pool; sequential twins (`*_seq`)
//! stay available for benchmarking and reproducibility checks.

// `!(x > 0.0)` deliberately rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod costs;
pub mod dynamics;
pub mod market;
pub mod network;

pub use analysis::{
    check_equilibrium_efficiency, descent_condition_sample, descent_condition_sample_seq,
    lyapunov_value, reference_equilibrium, scan_descent, AnalysisError, DescentSampleReport,
    EfficiencyReport, LyapunovReport,
};
pub use cli::{builtin, builtin_names, load_scenario, resolve_scenario, Scenario};
pub use costs::{CostError, CostProfile, GeneratorCost, QuadraticCost};
pub use dynamics::{
    closed_loop_drift, closed_loop_field, find_synchronous_equilibrium, halving_study, simulate,
    step, DynamicsError, Event, EventChange, EventSchedule, Gains, SimulationError,
    SimulationSetup, SystemState, Trajectory,
};
pub use market::{
    efficient_nash_interval, payoff, pessimistic_deviation_payoff, solve_economic_dispatch,
    solve_iso_lp, verify_efficient_bid, BidProfile, DispatchSolution, IsoAllocation, MarketError,
};
pub use network::{bfs_spanning_tree, GridState, Network, NetworkError};
