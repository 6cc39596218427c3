//! Closed-loop interconnection of the bidding scheme, the operator's
//! setpoint updates, and the swing dynamics, integrated as a projected
//! dynamical system.
//!
//! Bids and generation setpoints live in the nonnegative orthant. Their
//! rates are projected at the boundary: a negative rate at a zero state is
//! clipped, everything else passes through. The integrator is projected
//! forward Euler: unconstrained components take a plain Euler step while
//! constrained components take `max(0, value + dt * unprojected rate)`.

use crate::analysis;
use crate::costs::{CostProfile, QuadraticCost};
use crate::market::MarketError;
use crate::network::{Network, NetworkError};
use nalgebra::DVector;
use thiserror::Error;

/// Residual target for the synchronous-equilibrium Newton solve.
pub const NEWTON_TOL: f64 = 1e-10;
/// Iteration cap for the synchronous-equilibrium Newton solve.
pub const NEWTON_MAX_ITER: usize = 60;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("state vector `{name}` has length {got}, expected {expected}")]
    BadLength {
        name: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("projection target has negative entry {value} at index {index}")]
    NegativeState { index: usize, value: f64 },
    #[error("gain `{name}` must be positive, got {value}")]
    NonPositiveGain { name: &'static str, value: f64 },
    #[error("sigma must be nonnegative, got {0}")]
    NegativeSigma(f64),
    #[error("injections are unbalanced: net {0} (must sum to zero)")]
    UnbalancedInjection(f64),
    #[error(
        "synchronous-equilibrium solve diverged (residual {residual} after {iters} iterations)"
    )]
    NewtonDiverged { residual: f64, iters: usize },
    #[error("injection is infeasible: solved angles violate the security constraint")]
    InfeasibleInjection,
    #[error("non-finite rate encountered{}", diagnostic_suffix(.state))]
    NonFiniteRate { state: Box<SystemState> },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Cost(#[from] crate::costs::CostError),
}

fn diagnostic_suffix(state: &SystemState) -> String {
    format!(
        "; diagnostics: |phi|={:.3e} |omega|={:.3e} |b|={:.3e} |P_g|={:.3e} lambda={:.3e}",
        state.phi.abs().max(),
        state.omega.abs().max(),
        state.bids.abs().max(),
        state.p_g.abs().max(),
        state.lambda
    )
}

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("integration failed at t = {time}: {source}")]
    IntegrationFailure {
        time: f64,
        #[source]
        source: DynamicsError,
    },
    #[error("event times must be strictly increasing and nonnegative")]
    BadEventOrder,
    #[error("event references bus {0} outside the network")]
    EventBusOutOfRange(usize),
    #[error("reference equilibrium for segment starting at t = {time}: {source}")]
    ReferenceFailure {
        time: f64,
        #[source]
        source: Box<analysis::AnalysisError>,
    },
    #[error("dt must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Full closed-loop state `(phi, omega, b, P_g, lambda)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    /// Per-tree-edge angle differences.
    pub phi: DVector<f64>,
    /// Per-bus frequency deviation.
    pub omega: DVector<f64>,
    /// Per-bus price bids, elementwise nonnegative.
    pub bids: DVector<f64>,
    /// Per-bus generation setpoints, elementwise nonnegative.
    pub p_g: DVector<f64>,
    /// Operator's balance multiplier (the negotiated price).
    pub lambda: f64,
}

impl SystemState {
    pub fn is_finite(&self) -> bool {
        self.phi.iter().all(|v| v.is_finite())
            && self.omega.iter().all(|v| v.is_finite())
            && self.bids.iter().all(|v| v.is_finite())
            && self.p_g.iter().all(|v| v.is_finite())
            && self.lambda.is_finite()
    }

    fn check_shapes(&self, net: &Network) -> Result<(), DynamicsError> {
        let n = net.n_buses();
        check_len("phi", self.phi.len(), n - 1)?;
        check_len("omega", self.omega.len(), n)?;
        check_len("bids", self.bids.len(), n)?;
        check_len("p_g", self.p_g.len(), n)?;
        Ok(())
    }
}

/// Time derivative of a [`SystemState`].
#[derive(Debug, Clone)]
pub struct StateRate {
    pub phi: DVector<f64>,
    pub omega: DVector<f64>,
    pub bids: DVector<f64>,
    pub p_g: DVector<f64>,
    pub lambda: f64,
}

impl StateRate {
    pub fn inf_norm(&self) -> f64 {
        self.phi
            .abs()
            .max()
            .max(self.omega.abs().max())
            .max(self.bids.abs().max())
            .max(self.p_g.abs().max())
            .max(self.lambda.abs())
    }
}

/// Update gains of the bidding scheme and the operator dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct Gains {
    /// Per-bus bid update gains, positive.
    pub tau_b: DVector<f64>,
    /// Per-bus setpoint update gains, positive.
    pub tau_g: DVector<f64>,
    /// Multiplier update gain, positive.
    pub tau_lambda: f64,
    /// Augmentation weight on the balance mismatch, positive.
    pub rho: f64,
    /// Frequency-feedback gain; the dynamics use `sigma^2`. Zero disables
    /// the feedback.
    pub sigma: f64,
}

impl Gains {
    pub fn new(
        tau_b: DVector<f64>,
        tau_g: DVector<f64>,
        tau_lambda: f64,
        rho: f64,
        sigma: f64,
    ) -> Result<Self, DynamicsError> {
        for &v in tau_b.iter() {
            if !(v > 0.0) {
                return Err(DynamicsError::NonPositiveGain {
                    name: "tau_b",
                    value: v,
                });
            }
        }
        for &v in tau_g.iter() {
            if !(v > 0.0) {
                return Err(DynamicsError::NonPositiveGain {
                    name: "tau_g",
                    value: v,
                });
            }
        }
        if !(tau_lambda > 0.0) {
            return Err(DynamicsError::NonPositiveGain {
                name: "tau_lambda",
                value: tau_lambda,
            });
        }
        if !(rho > 0.0) {
            return Err(DynamicsError::NonPositiveGain {
                name: "rho",
                value: rho,
            });
        }
        if !(sigma >= 0.0) {
            return Err(DynamicsError::NegativeSigma(sigma));
        }
        Ok(Self {
            tau_b,
            tau_g,
            tau_lambda,
            rho,
            sigma,
        })
    }

    pub fn uniform(
        n: usize,
        tau_b: f64,
        tau_g: f64,
        tau_lambda: f64,
        rho: f64,
        sigma: f64,
    ) -> Result<Self, DynamicsError> {
        Self::new(
            DVector::from_element(n, tau_b),
            DVector::from_element(n, tau_g),
            tau_lambda,
            rho,
            sigma,
        )
    }

    pub fn sigma_squared(&self) -> f64 {
        self.sigma * self.sigma
    }
}

/// Positive projection of a rate at a nonnegative state, elementwise:
/// the rate passes through where the state is positive and is clipped at
/// zero where the state sits on the boundary.
pub fn project_rate(
    rate: &DVector<f64>,
    state: &DVector<f64>,
) -> Result<DVector<f64>, DynamicsError> {
    let mut out = rate.clone();
    for i in 0..rate.len() {
        if state[i] < 0.0 {
            return Err(DynamicsError::NegativeState {
                index: i,
                value: state[i],
            });
        }
        if state[i] == 0.0 && out[i] < 0.0 {
            out[i] = 0.0;
        }
    }
    Ok(out)
}

/// Bid update: `tau_b db = [P_g - grad C*(b)]_b^+`.
pub fn bid_field(
    costs: &CostProfile,
    bids: &DVector<f64>,
    p_g: &DVector<f64>,
    tau_b: &DVector<f64>,
) -> Result<DVector<f64>, DynamicsError> {
    let desired = costs.desired_production(bids)?;
    let raw = p_g - desired;
    let mut rate = project_rate(&raw, bids)?;
    rate.component_div_assign(tau_b);
    Ok(rate)
}

/// Operator update: projected saddle-point flow of the augmented payment
/// Lagrangian with frequency feedback,
/// `tau_g dP_g = [1 lambda - b + rho 1 1'(P_d - P_g) - sigma^2 omega]_{P_g}^+`,
/// `tau_lambda dlambda = 1'(P_d - P_g)`.
pub fn iso_field(
    bids: &DVector<f64>,
    p_g: &DVector<f64>,
    lambda: f64,
    omega: &DVector<f64>,
    p_d: &DVector<f64>,
    gains: &Gains,
) -> Result<(DVector<f64>, f64), DynamicsError> {
    let mismatch = p_d.sum() - p_g.sum();
    let sigma2 = gains.sigma_squared();
    let mut raw = DVector::zeros(p_g.len());
    for i in 0..p_g.len() {
        raw[i] = lambda - bids[i] + gains.rho * mismatch - sigma2 * omega[i];
    }
    let mut p_rate = project_rate(&raw, p_g)?;
    p_rate.component_div_assign(&gains.tau_g);
    Ok((p_rate, mismatch / gains.tau_lambda))
}

/// Projected closed-loop field: swing dynamics, bid updates, and operator
/// updates stacked into one rate.
pub fn closed_loop_field(
    net: &Network,
    costs: &CostProfile,
    state: &SystemState,
    p_d: &DVector<f64>,
    gains: &Gains,
) -> Result<StateRate, DynamicsError> {
    state.check_shapes(net)?;
    let (phi_dot, omega_dot) = net.swing_field_phi(&state.phi, &state.omega, &state.p_g, p_d)?;
    let bid_dot = bid_field(costs, &state.bids, &state.p_g, &gains.tau_b)?;
    let (p_dot, lambda_dot) = iso_field(
        &state.bids,
        &state.p_g,
        state.lambda,
        &state.omega,
        p_d,
        gains,
    )?;
    Ok(StateRate {
        phi: phi_dot,
        omega: omega_dot,
        bids: bid_dot,
        p_g: p_dot,
        lambda: lambda_dot,
    })
}

/// Unprojected drift of the closed loop; agrees with
/// [`closed_loop_field`] wherever bids and setpoints are strictly positive.
pub fn closed_loop_drift(
    net: &Network,
    costs: &CostProfile,
    state: &SystemState,
    p_d: &DVector<f64>,
    gains: &Gains,
) -> Result<StateRate, DynamicsError> {
    state.check_shapes(net)?;
    let (phi_dot, omega_dot) = net.swing_field_phi(&state.phi, &state.omega, &state.p_g, p_d)?;
    let desired = costs.desired_production(&state.bids)?;
    let mut bid_dot = &state.p_g - desired;
    bid_dot.component_div_assign(&gains.tau_b);
    let mismatch = p_d.sum() - state.p_g.sum();
    let sigma2 = gains.sigma_squared();
    let mut p_dot = DVector::zeros(state.p_g.len());
    for i in 0..state.p_g.len() {
        p_dot[i] = (state.lambda - state.bids[i] + gains.rho * mismatch - sigma2 * state.omega[i])
            / gains.tau_g[i];
    }
    Ok(StateRate {
        phi: phi_dot,
        omega: omega_dot,
        bids: bid_dot,
        p_g: p_dot,
        lambda: mismatch / gains.tau_lambda,
    })
}

/// One projected forward-Euler step.
///
/// Free components advance by `dt * rate`; constrained components advance
/// by `max(0, value + dt * unprojected rate)`, which keeps bids and
/// setpoints exactly nonnegative and coincides with the plain Euler step in
/// the interior.
pub fn step(
    net: &Network,
    costs: &CostProfile,
    state: &SystemState,
    p_d: &DVector<f64>,
    gains: &Gains,
    dt: f64,
) -> Result<SystemState, DynamicsError> {
    let mut scratch = StepScratch::new(net.n_buses());
    step_into(net, costs, state, p_d, gains, dt, &mut scratch)
}

/// Reusable buffers for the integrator hot loop.
pub(crate) struct StepScratch {
    desired: DVector<f64>,
}

impl StepScratch {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            desired: DVector::zeros(n),
        }
    }
}

pub(crate) fn step_into(
    net: &Network,
    costs: &CostProfile,
    state: &SystemState,
    p_d: &DVector<f64>,
    gains: &Gains,
    dt: f64,
    scratch: &mut StepScratch,
) -> Result<SystemState, DynamicsError> {
    let (phi_dot, omega_dot) = net.swing_field_phi(&state.phi, &state.omega, &state.p_g, p_d)?;
    let phi = &state.phi + &phi_dot * dt;
    let omega = &state.omega + &omega_dot * dt;

    costs.desired_production_at(&state.bids, &mut scratch.desired);
    let mismatch = p_d.sum() - state.p_g.sum();
    let sigma2 = gains.sigma_squared();

    let n = net.n_buses();
    let mut bids = DVector::zeros(n);
    let mut p_g = DVector::zeros(n);
    for i in 0..n {
        let bid_rate = (state.p_g[i] - scratch.desired[i]) / gains.tau_b[i];
        bids[i] = (state.bids[i] + dt * bid_rate).max(0.0);
        let p_rate = (state.lambda - state.bids[i] + gains.rho * mismatch
            - sigma2 * state.omega[i])
            / gains.tau_g[i];
        p_g[i] = (state.p_g[i] + dt * p_rate).max(0.0);
    }
    let lambda = state.lambda + dt * mismatch / gains.tau_lambda;

    let next = SystemState {
        phi,
        omega,
        bids,
        p_g,
        lambda,
    };
    if !next.is_finite() {
        return Err(DynamicsError::NonFiniteRate {
            state: Box::new(state.clone()),
        });
    }
    Ok(next)
}

/// Solves for tree angles carrying the injection `P_g - P_d` at zero
/// frequency deviation: `D_t grad U(phi) = P_g - P_d`.
///
/// Newton iteration from the origin; the result must satisfy the security
/// constraint or the injection is declared infeasible.
pub fn find_synchronous_equilibrium(
    net: &Network,
    p_g: &DVector<f64>,
    p_d: &DVector<f64>,
) -> Result<DVector<f64>, DynamicsError> {
    let net_injection = p_g - p_d;
    let imbalance = net_injection.sum();
    if imbalance.abs() > 1e-9 * net_injection.abs().max().max(1.0) {
        return Err(DynamicsError::UnbalancedInjection(imbalance));
    }
    let reduced_rhs = net.tree_pseudo_inverse() * &net_injection;
    let mut phi = DVector::zeros(net.n_buses() - 1);
    let mut residual = f64::INFINITY;
    for iters in 0..NEWTON_MAX_ITER {
        residual = (net.tree_incidence() * net.potential_gradient(&phi) - &net_injection)
            .abs()
            .max();
        if !residual.is_finite() {
            return Err(DynamicsError::NewtonDiverged { residual, iters });
        }
        if residual < NEWTON_TOL {
            if !net.security_constraint_holds(&phi) {
                return Err(DynamicsError::InfeasibleInjection);
            }
            return Ok(phi);
        }
        let jac = net.potential_hessian(&phi);
        let rhs = net.potential_gradient(&phi) - &reduced_rhs;
        let delta = jac
            .lu()
            .solve(&rhs)
            .ok_or(DynamicsError::NewtonDiverged { residual, iters })?;
        phi -= delta;
    }
    Err(DynamicsError::NewtonDiverged {
        residual,
        iters: NEWTON_MAX_ITER,
    })
}

/// Parameter changes applied at one instant of simulated time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventChange {
    /// Per-bus load overrides (per-unit).
    pub loads: Vec<(usize, f64)>,
    /// Per-bus cost overrides.
    pub costs: Vec<(usize, QuadraticCost)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: f64,
    pub change: EventChange,
}

/// Timed parameter changes with strictly increasing times.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventSchedule {
    events: Vec<Event>,
}

impl EventSchedule {
    pub fn new(events: Vec<Event>) -> Result<Self, SimulationError> {
        for pair in events.windows(2) {
            if pair[1].time <= pair[0].time {
                return Err(SimulationError::BadEventOrder);
            }
        }
        if events.first().is_some_and(|e| e.time < 0.0) {
            return Err(SimulationError::BadEventOrder);
        }
        Ok(Self { events })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }
}

/// Early-termination rule: the run stops once the realized rate stays
/// below `rate_tol` for `hold_time` of simulated time. Applies only after
/// the final event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceCriterion {
    pub rate_tol: f64,
    pub hold_time: f64,
}

impl Default for ConvergenceCriterion {
    fn default() -> Self {
        Self {
            rate_tol: 1e-6,
            hold_time: 0.5,
        }
    }
}

/// Everything needed for one reproducible closed-loop run (per-unit).
#[derive(Debug, Clone)]
pub struct SimulationSetup {
    pub costs: CostProfile,
    pub p_d: DVector<f64>,
    pub gains: Gains,
    pub events: EventSchedule,
    pub t_end: f64,
    pub dt: f64,
    /// Record every this-many integration steps (boundaries always recorded).
    pub output_stride: usize,
    pub convergence: ConvergenceCriterion,
}

/// One inter-event interval with its parameters and Lyapunov bookkeeping.
#[derive(Debug, Clone)]
pub struct Segment {
    pub t_start: f64,
    pub t_end: f64,
    pub p_d: DVector<f64>,
    pub costs: CostProfile,
    /// Reference equilibrium used for the Lyapunov values in this segment.
    pub reference: SystemState,
    /// Index range into the sampled trajectory (inclusive, exclusive).
    pub sample_range: (usize, usize),
    /// Largest single-step Lyapunov increment observed (signed).
    pub max_step_increment: f64,
    pub v_start: f64,
    pub v_end: f64,
    /// Final state of the segment (pre-event, by continuity also the first
    /// state of the next segment).
    pub end_state: SystemState,
}

/// Sampled closed-loop run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub samples: Vec<SystemState>,
    /// Lyapunov value of each sample against its segment's reference.
    pub lyapunov: Vec<f64>,
    pub segments: Vec<Segment>,
    /// Smallest bid seen at any accepted step (not just samples).
    pub min_bid: f64,
    /// Smallest setpoint seen at any accepted step.
    pub min_p_g: f64,
    /// Time at which the convergence criterion fired, if it did.
    pub converged_at: Option<f64>,
}

/// Integrates the closed loop across all event segments.
///
/// Steps are aligned to event boundaries so parameters change exactly at
/// their scheduled instants (state left-continuous, parameters
/// right-continuous). The Lyapunov value is tracked at every integration
/// step against the active segment's reference equilibrium.
pub fn simulate(
    net: &Network,
    setup: &SimulationSetup,
    initial: SystemState,
) -> Result<Trajectory, SimulationError> {
    if !(setup.dt > 0.0) {
        return Err(SimulationError::NonPositiveDt(setup.dt));
    }
    initial
        .check_shapes(net)
        .map_err(SimulationError::Dynamics)?;
    for event in setup.events.events() {
        for &(bus, _) in &event.change.loads {
            if bus >= net.n_buses() {
                return Err(SimulationError::EventBusOutOfRange(bus));
            }
        }
        for &(bus, _) in &event.change.costs {
            if bus >= net.n_buses() {
                return Err(SimulationError::EventBusOutOfRange(bus));
            }
        }
        if event.time >= setup.t_end {
            return Err(SimulationError::BadEventOrder);
        }
    }

    let mut boundaries: Vec<f64> = std::iter::once(0.0)
        .chain(setup.events.events().iter().map(|e| e.time))
        .collect();
    boundaries.push(setup.t_end);

    let mut costs = setup.costs.clone();
    let mut p_d = setup.p_d.clone();
    let mut state = initial;
    let stride = setup.output_stride.max(1);

    let mut times = Vec::new();
    let mut samples: Vec<SystemState> = Vec::new();
    let mut lyapunov = Vec::new();
    let mut segments = Vec::new();
    let mut min_bid = f64::INFINITY;
    let mut min_p_g = f64::INFINITY;
    let mut converged_at = None;
    let mut scratch = StepScratch::new(net.n_buses());

    min_bid = min_bid.min(state.bids.min());
    min_p_g = min_p_g.min(state.p_g.min());

    'segments: for seg_idx in 0..boundaries.len() - 1 {
        let t_start = boundaries[seg_idx];
        let t_stop = boundaries[seg_idx + 1];
        if seg_idx > 0 {
            let event = &setup.events.events()[seg_idx - 1];
            for &(bus, load) in &event.change.loads {
                p_d[bus] = load;
            }
            for &(bus, cost) in &event.change.costs {
                costs.set(bus, cost).map_err(DynamicsError::Cost)?;
            }
        }
        let reference = analysis::reference_equilibrium(net, &costs, &p_d).map_err(|e| {
            SimulationError::ReferenceFailure {
                time: t_start,
                source: Box::new(e),
            }
        })?;
        let evaluator = analysis::LyapunovEvaluator::new(net, &setup.gains, reference.clone());
        let mut v_prev = evaluator.value(net, &setup.gains, &state);
        let v_start = v_prev;
        let mut max_step_increment = f64::NEG_INFINITY;
        let sample_start = samples.len();

        times.push(t_start);
        samples.push(state.clone());
        lyapunov.push(v_prev);

        let n_steps = ((t_stop - t_start) / setup.dt).ceil() as u64;
        let mut below_since: Option<f64> = None;
        let last_segment = seg_idx == boundaries.len() - 2;

        for k in 1..=n_steps {
            let t_next = if k == n_steps {
                t_stop
            } else {
                t_start + setup.dt * k as f64
            };
            let t_now = t_start + setup.dt * (k - 1) as f64;
            let dt = t_next - t_now;
            if dt <= 0.0 {
                continue;
            }
            let next = step_into(net, &costs, &state, &p_d, &setup.gains, dt, &mut scratch)
                .map_err(|source| SimulationError::IntegrationFailure {
                    time: t_now,
                    source,
                })?;

            min_bid = min_bid.min(next.bids.min());
            min_p_g = min_p_g.min(next.p_g.min());

            let v_next = evaluator.value(net, &setup.gains, &next);
            max_step_increment = max_step_increment.max(v_next - v_prev);

            let realized_rate = realized_rate_inf(&state, &next, dt);
            state = next;
            v_prev = v_next;

            if k % stride as u64 == 0 || k == n_steps {
                times.push(t_next);
                samples.push(state.clone());
                lyapunov.push(v_next);
            }

            if last_segment {
                if realized_rate < setup.convergence.rate_tol {
                    let since = *below_since.get_or_insert(t_next);
                    if t_next - since >= setup.convergence.hold_time {
                        converged_at = Some(t_next);
                        if k % stride as u64 != 0 && k != n_steps {
                            times.push(t_next);
                            samples.push(state.clone());
                            lyapunov.push(v_next);
                        }
                        segments.push(Segment {
                            t_start,
                            t_end: t_next,
                            p_d: p_d.clone(),
                            costs: costs.clone(),
                            reference,
                            sample_range: (sample_start, samples.len()),
                            max_step_increment,
                            v_start,
                            v_end: v_prev,
                            end_state: state.clone(),
                        });
                        break 'segments;
                    }
                } else {
                    below_since = None;
                }
            }
        }

        segments.push(Segment {
            t_start,
            t_end: t_stop,
            p_d: p_d.clone(),
            costs: costs.clone(),
            reference,
            sample_range: (sample_start, samples.len()),
            max_step_increment,
            v_start,
            v_end: v_prev,
            end_state: state.clone(),
        });
    }

    Ok(Trajectory {
        times,
        samples,
        lyapunov,
        segments,
        min_bid,
        min_p_g,
        converged_at,
    })
}

/// Step-halving study: integrates a fixed horizon at `dt`, `dt/2`, ...,
/// `dt/2^(levels-1)` plus one finer reference level and returns
/// `(step, max-norm error vs the reference)` pairs. Consecutive error
/// ratios near 2 confirm first-order convergence of the projected scheme.
#[allow(clippy::too_many_arguments)]
pub fn halving_study(
    net: &Network,
    costs: &CostProfile,
    state: &SystemState,
    p_d: &DVector<f64>,
    gains: &Gains,
    horizon: f64,
    dt: f64,
    levels: usize,
) -> Result<Vec<(f64, f64)>, DynamicsError> {
    let advance = |h: f64| -> Result<SystemState, DynamicsError> {
        let steps = (horizon / h).round() as usize;
        let mut s = state.clone();
        let mut scratch = StepScratch::new(net.n_buses());
        for _ in 0..steps {
            s = step_into(net, costs, &s, p_d, gains, h, &mut scratch)?;
        }
        Ok(s)
    };
    // reference 8x finer than the finest tested level, so its own error is
    // negligible in the ratios
    let reference = advance(dt / (1 << (levels + 2)) as f64)?;
    let mut out = Vec::with_capacity(levels);
    for level in 0..levels {
        let h = dt / (1 << level) as f64;
        let endpoint = advance(h)?;
        let err = (&endpoint.omega - &reference.omega)
            .abs()
            .max()
            .max((&endpoint.bids - &reference.bids).abs().max())
            .max((&endpoint.p_g - &reference.p_g).abs().max())
            .max((&endpoint.phi - &reference.phi).abs().max())
            .max((endpoint.lambda - reference.lambda).abs());
        out.push((h, err));
    }
    Ok(out)
}

fn realized_rate_inf(prev: &SystemState, next: &SystemState, dt: f64) -> f64 {
    let mut worst = (next.lambda - prev.lambda).abs();
    for (a, b) in prev.phi.iter().zip(next.phi.iter()) {
        worst = worst.max((b - a).abs());
    }
    for (a, b) in prev.omega.iter().zip(next.omega.iter()) {
        worst = worst.max((b - a).abs());
    }
    for (a, b) in prev.bids.iter().zip(next.bids.iter()) {
        worst = worst.max((b - a).abs());
    }
    for (a, b) in prev.p_g.iter().zip(next.p_g.iter()) {
        worst = worst.max((b - a).abs());
    }
    worst / dt
}

fn check_len(name: &'static str, got: usize, expected: usize) -> Result<(), DynamicsError> {
    if got != expected {
        Err(DynamicsError::BadLength {
            name,
            got,
            expected,
        })
    } else {
        Ok(())
    }
}
