//! Lyapunov-function evaluation and descent monitoring, equilibrium
//! detection, and efficiency verification of converged states.
//!
//! The energy function combines the Bregman divergence of the network
//! potential with weighted squared deviations of the remaining states. For
//! nonzero frequency feedback the market blocks are weighted by
//! `1/sigma^2`: that weight cancels the cross term between the frequency
//! and the setpoint feedback exactly, which is what makes the function
//! nonincreasing along trajectories. With the feedback off the unit weight
//! already does so for the market subsystem.

use crate::costs::CostProfile;
use crate::dynamics::{
    closed_loop_field, find_synchronous_equilibrium, DynamicsError, Gains, StateRate, SystemState,
};
use crate::market::{efficient_nash_interval, solve_economic_dispatch, MarketError};
use crate::network::Network;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Default per-step slack for descent monitoring (absorbs one-step
/// integrator error).
pub const DESCENT_SLACK: f64 = 1e-6;
/// Default box radius for descent-condition sampling.
pub const SAMPLE_RADIUS: f64 = 0.1;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("candidate reference is not an equilibrium: residual rate {0}")]
    NotAnEquilibrium(f64),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Cost(#[from] crate::costs::CostError),
}

/// Weight applied to the market blocks of the energy function.
///
/// `1/sigma^2` for active frequency feedback, 1 otherwise.
pub fn market_block_weight(sigma: f64) -> f64 {
    if sigma == 0.0 {
        1.0
    } else {
        1.0 / (sigma * sigma)
    }
}

/// Builds the reference equilibrium for given costs and load: dispatch
/// optimum, bids at marginal cost (the price for producers), zero
/// frequency deviation, and synchronous angles carrying the optimal
/// injection.
///
/// Deliberately derived from the dispatch solver, not from a trajectory
/// tail, so descent monitoring stays independent of the integrator.
pub fn reference_equilibrium(
    net: &Network,
    costs: &CostProfile,
    p_d: &DVector<f64>,
) -> Result<SystemState, AnalysisError> {
    let sol = solve_economic_dispatch(costs, p_d)?;
    let n = net.n_buses();
    let mut bids = DVector::zeros(n);
    for i in 0..n {
        bids[i] = if sol.p_g[i] > 0.0 {
            sol.lambda
        } else {
            costs.get(i).unwrap().linear()
        };
    }
    let phi = find_synchronous_equilibrium(net, &sol.p_g, p_d)?;
    Ok(SystemState {
        phi,
        omega: DVector::zeros(n),
        bids,
        p_g: sol.p_g,
        lambda: sol.lambda,
    })
}

/// Energy of `state` relative to the equilibrium `reference`:
/// Bregman divergence of the network potential in the angles, kinetic
/// energy in the frequencies, and weighted squared deviations in bids,
/// setpoints, and the multiplier.
pub fn lyapunov_value(
    net: &Network,
    gains: &Gains,
    state: &SystemState,
    reference: &SystemState,
) -> f64 {
    LyapunovEvaluator::new(net, gains, reference.clone()).value(net, gains, state)
}

/// Energy evaluator with the reference-dependent constants precomputed;
/// used in the integrator loop where the reference is fixed per segment.
#[derive(Debug, Clone)]
pub struct LyapunovEvaluator {
    reference: SystemState,
    grad_ref: DVector<f64>,
    potential_ref: f64,
    weight: f64,
}

impl LyapunovEvaluator {
    pub fn new(net: &Network, gains: &Gains, reference: SystemState) -> Self {
        Self {
            grad_ref: net.potential_gradient(&reference.phi),
            potential_ref: net.potential(&reference.phi),
            weight: market_block_weight(gains.sigma),
            reference,
        }
    }

    pub fn reference(&self) -> &SystemState {
        &self.reference
    }

    pub fn value(&self, net: &Network, gains: &Gains, state: &SystemState) -> f64 {
        let reference = &self.reference;
        let dphi = &state.phi - &reference.phi;
        let bregman = net.potential(&state.phi) - self.potential_ref - self.grad_ref.dot(&dphi);

        let inertia = net.inertia();
        let mut kinetic = 0.0;
        for i in 0..state.omega.len() {
            let dw = state.omega[i] - reference.omega[i];
            kinetic += inertia[i] * dw * dw;
        }

        let mut market = 0.0;
        for i in 0..state.bids.len() {
            let db = state.bids[i] - reference.bids[i];
            let dp = state.p_g[i] - reference.p_g[i];
            market += gains.tau_b[i] * db * db + gains.tau_g[i] * dp * dp;
        }
        let dl = state.lambda - reference.lambda;
        market += gains.tau_lambda * dl * dl;

        bregman + 0.5 * kinetic + 0.5 * self.weight * market
    }
}

/// Gradient of [`lyapunov_value`] in `state`, stacked as a [`StateRate`].
pub fn lyapunov_gradient(
    net: &Network,
    gains: &Gains,
    state: &SystemState,
    reference: &SystemState,
) -> StateRate {
    let weight = market_block_weight(gains.sigma);
    let phi = net.potential_gradient(&state.phi) - net.potential_gradient(&reference.phi);
    let inertia = net.inertia();
    let mut omega = DVector::zeros(state.omega.len());
    for i in 0..omega.len() {
        omega[i] = inertia[i] * (state.omega[i] - reference.omega[i]);
    }
    let mut bids = DVector::zeros(state.bids.len());
    let mut p_g = DVector::zeros(state.p_g.len());
    for i in 0..bids.len() {
        bids[i] = weight * gains.tau_b[i] * (state.bids[i] - reference.bids[i]);
        p_g[i] = weight * gains.tau_g[i] * (state.p_g[i] - reference.p_g[i]);
    }
    let lambda = weight * gains.tau_lambda * (state.lambda - reference.lambda);
    StateRate {
        phi,
        omega,
        bids,
        p_g,
        lambda,
    }
}

fn rate_dot(a: &StateRate, b: &StateRate) -> f64 {
    a.phi.dot(&b.phi)
        + a.omega.dot(&b.omega)
        + a.bids.dot(&b.bids)
        + a.p_g.dot(&b.p_g)
        + a.lambda * b.lambda
}

/// Descent scan of a sampled energy trace.
#[derive(Debug, Clone)]
pub struct LyapunovReport {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Largest signed increment between consecutive entries.
    pub max_increment: f64,
    /// True iff every increment stays within `slack`.
    pub descends: bool,
    pub slack: f64,
}

/// Scans an energy trace for violations of monotone descent.
pub fn scan_descent(times: &[f64], values: &[f64], slack: f64) -> LyapunovReport {
    let max_increment = values
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    LyapunovReport {
        times: times.to_vec(),
        values: values.to_vec(),
        max_increment,
        descends: max_increment <= slack,
        slack,
    }
}

/// Frequency-restoration threshold: a state counts as frequency-converged
/// when every `|omega_i|` is below this (per-unit).
pub const FREQUENCY_RESTORED: f64 = 1e-3;

/// Residuals of the equilibrium/efficiency conditions at a candidate state.
#[derive(Debug, Clone)]
pub struct EfficiencyReport {
    /// `max_i |omega_i|`
    pub omega_inf: f64,
    /// `|1'(P_d - P_g)|`
    pub balance_residual: f64,
    /// Most negative entry of the reconstructed multiplier
    /// `mu = grad C(P_g) - 1 lambda` (0 when none are negative).
    pub dual_violation: f64,
    /// `|P_g' mu|`
    pub complementarity: f64,
    /// `max_i |P_i - grad C_i*(b_i)|`
    pub profit_consistency: f64,
    /// Worst distance of any bid from its efficient-equilibrium interval.
    pub interval_violation: f64,
    /// Buses whose bid sits outside the interval beyond tolerance.
    pub interval_violators: Vec<usize>,
    /// False when the interval characterization does not apply (fewer than
    /// two producing buses at the optimum).
    pub interval_checked: bool,
    /// Worst relative gap `|b_i - c_i| / c_i` over idle buses.
    pub idle_bid_gap: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Verifies that `state` is an efficient equilibrium for `(costs, p_d)`:
/// restored frequency, aggregate balance, dispatch optimality of the
/// setpoints via the reconstructed multiplier, bids inside the
/// efficient-equilibrium interval, and setpoints equal to the
/// profit-maximizing production at the bids.
///
/// Market-side residuals are checked at tolerance `tol`; the frequency
/// check uses `max(tol, FREQUENCY_RESTORED)` since frequency ringing
/// outlives the market transient and carries its own restoration
/// threshold.
pub fn check_equilibrium_efficiency(
    net: &Network,
    costs: &CostProfile,
    state: &SystemState,
    p_d: &DVector<f64>,
    tol: f64,
) -> Result<EfficiencyReport, AnalysisError> {
    let _ = net;
    let omega_inf = state.omega.abs().max();
    let balance_residual = (p_d.sum() - state.p_g.sum()).abs();

    let grad = costs.gradient(&state.p_g)?;
    let mut dual_violation = 0.0f64;
    let mut complementarity = 0.0f64;
    for i in 0..state.p_g.len() {
        let mu = grad[i] - state.lambda;
        dual_violation = dual_violation.max(-mu);
        complementarity += state.p_g[i] * mu;
    }
    let complementarity = complementarity.abs();

    let desired = costs.desired_production(&state.bids)?;
    let profit_consistency = (&state.p_g - desired).abs().max();

    let sol = solve_economic_dispatch(costs, p_d)?;
    let scale = tol * sol.lambda.abs().max(1.0);
    let mut interval_violation = 0.0f64;
    let mut interval_violators = Vec::new();
    let mut idle_bid_gap = 0.0f64;
    let mut interval_checked = false;
    match efficient_nash_interval(&sol, costs) {
        Ok(intervals) => {
            interval_checked = true;
            for (i, &(lo, hi)) in intervals.iter().enumerate() {
                let b = state.bids[i];
                let dist = (lo - b).max(b - hi).max(0.0);
                interval_violation = interval_violation.max(dist);
                if dist > scale {
                    interval_violators.push(i);
                }
            }
        }
        // fewer than two producers: the interval characterization does not
        // apply, so membership cannot be judged
        Err(MarketError::TooFewProducers(_)) => {}
        Err(e) => return Err(e.into()),
    }
    for i in 0..sol.p_g.len() {
        if sol.p_g[i] == 0.0 {
            let c = costs.get(i).unwrap().linear();
            idle_bid_gap = idle_bid_gap.max((state.bids[i] - c).abs() / c.max(1.0));
        }
    }

    let pass = omega_inf <= tol.max(FREQUENCY_RESTORED)
        && balance_residual <= tol
        && dual_violation <= tol
        && complementarity <= tol
        && profit_consistency <= tol
        && interval_violators.is_empty();
    Ok(EfficiencyReport {
        omega_inf,
        balance_residual,
        dual_violation,
        complementarity,
        profit_consistency,
        interval_violation,
        interval_violators,
        interval_checked,
        idle_bid_gap,
        tol,
        pass,
    })
}

/// Result of sampling the descent condition around an equilibrium.
#[derive(Debug, Clone, Copy)]
pub struct DescentSampleReport {
    /// Largest sampled inner product between the energy gradient and the
    /// projected field; nonpositive up to roundoff when descent holds.
    pub worst_inner_product: f64,
    pub samples: usize,
    /// Samples whose angle deviation had to be shrunk to stay inside the
    /// security region.
    pub shrunk: usize,
    pub radius: f64,
}

/// Samples feasible states in a box around the equilibrium `x_bar` and
/// evaluates `<grad V(x), projected field(x)>` at each; returns the worst
/// (largest) value. Samples are clipped to the nonnegative orthant; angle
/// deviations are halved until the security constraint holds.
#[allow(clippy::too_many_arguments)]
pub fn descent_condition_sample(
    net: &Network,
    costs: &CostProfile,
    gains: &Gains,
    x_bar: &SystemState,
    p_d: &DVector<f64>,
    n_samples: usize,
    radius: f64,
    seed: u64,
) -> Result<DescentSampleReport, AnalysisError> {
    verify_reference(net, costs, gains, x_bar, p_d)?;
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let worst = (0..n_samples)
            .into_par_iter()
            .map(|k| sample_inner_product(net, costs, gains, x_bar, p_d, radius, seed, k))
            .try_reduce(
                || (f64::NEG_INFINITY, 0usize),
                |a, b| Ok((a.0.max(b.0), a.1 + b.1)),
            )?;
        Ok(DescentSampleReport {
            worst_inner_product: worst.0,
            samples: n_samples,
            shrunk: worst.1,
            radius,
        })
    }
    #[cfg(not(feature = "parallel"))]
    {
        descent_condition_sample_seq(net, costs, gains, x_bar, p_d, n_samples, radius, seed)
    }
}

/// Sequential twin of [`descent_condition_sample`]; always available for
/// comparison benchmarks. Produces identical results for identical seeds.
#[allow(clippy::too_many_arguments)]
pub fn descent_condition_sample_seq(
    net: &Network,
    costs: &CostProfile,
    gains: &Gains,
    x_bar: &SystemState,
    p_d: &DVector<f64>,
    n_samples: usize,
    radius: f64,
    seed: u64,
) -> Result<DescentSampleReport, AnalysisError> {
    verify_reference(net, costs, gains, x_bar, p_d)?;
    let mut worst = f64::NEG_INFINITY;
    let mut shrunk = 0usize;
    for k in 0..n_samples {
        let (v, s) = sample_inner_product(net, costs, gains, x_bar, p_d, radius, seed, k)?;
        worst = worst.max(v);
        shrunk += s;
    }
    Ok(DescentSampleReport {
        worst_inner_product: worst,
        samples: n_samples,
        shrunk,
        radius,
    })
}

fn verify_reference(
    net: &Network,
    costs: &CostProfile,
    gains: &Gains,
    x_bar: &SystemState,
    p_d: &DVector<f64>,
) -> Result<(), AnalysisError> {
    let rate = closed_loop_field(net, costs, x_bar, p_d, gains)?;
    let residual = rate.inf_norm();
    if residual > 1e-8 {
        return Err(AnalysisError::NotAnEquilibrium(residual));
    }
    Ok(())
}

/// Evaluates one sample; deterministic in `(seed, index)` so the parallel
/// and sequential paths agree bit for bit.
#[allow(clippy::too_many_arguments)]
fn sample_inner_product(
    net: &Network,
    costs: &CostProfile,
    gains: &Gains,
    x_bar: &SystemState,
    p_d: &DVector<f64>,
    radius: f64,
    seed: u64,
    index: usize,
) -> Result<(f64, usize), AnalysisError> {
    let mut rng =
        ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let n = net.n_buses();
    let mut dphi = DVector::from_fn(n - 1, |_, _| rng.gen_range(-radius..radius));
    let omega = DVector::from_fn(n, |i, _| x_bar.omega[i] + rng.gen_range(-radius..radius));
    let bids = DVector::from_fn(n, |i, _| {
        (x_bar.bids[i] + rng.gen_range(-radius..radius)).max(0.0)
    });
    let p_g = DVector::from_fn(n, |i, _| {
        (x_bar.p_g[i] + rng.gen_range(-radius..radius)).max(0.0)
    });
    let lambda = x_bar.lambda + rng.gen_range(-radius..radius);

    let mut shrunk = 0usize;
    let mut phi = &x_bar.phi + &dphi;
    while !net.security_constraint_holds(&phi) {
        dphi *= 0.5;
        phi = &x_bar.phi + &dphi;
        shrunk = 1;
        if dphi.abs().max() < 1e-12 {
            phi = x_bar.phi.clone();
            break;
        }
    }

    let state = SystemState {
        phi,
        omega,
        bids,
        p_g,
        lambda,
    };
    let field = closed_loop_field(net, costs, &state, p_d, gains)?;
    let grad = lyapunov_gradient(net, gains, &state, x_bar);
    Ok((rate_dot(&grad, &field), shrunk))
}
