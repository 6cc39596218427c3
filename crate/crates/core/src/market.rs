//! Economic dispatch, the operator's bid-clearing program, and the
//! characterization of efficient Nash equilibria of the bidding game.
//!
//! Dispatch minimizes total cost subject to aggregate balance and
//! nonnegative generation; its unique primal-dual optimizer is found by
//! bisection on the market price followed by an exact active-set solve.
//! The operator's bid-based program is linear and may have many optimizers;
//! the canonical one returned here splits load equally across the
//! lowest-bid generators.

use crate::costs::{CostError, CostProfile, GeneratorCost};
use nalgebra::DVector;
use thiserror::Error;

/// Power-balance residual target for the price bisection (per-unit).
pub const BISECTION_TOL: f64 = 1e-10;
/// Iteration cap for the price bisection.
pub const BISECTION_MAX_ITER: usize = 200;

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("total load must be positive, got {0}")]
    NonPositiveLoad(f64),
    #[error("bid vector has a negative entry at bus {bus}: {value}")]
    NegativeBid { bus: usize, value: f64 },
    #[error("load and profile dimensions differ: {load} vs {profile}")]
    DimensionMismatch { load: usize, profile: usize },
    #[error("price bisection did not identify a consistent active set")]
    BisectionFailed,
    #[error(
        "efficient-equilibrium characterization requires at least two producing \
         generators, found {0}"
    )]
    TooFewProducers(usize),
    #[error(transparent)]
    Cost(#[from] CostError),
}

/// Unique primal-dual optimizer of the dispatch problem.
#[derive(Debug, Clone)]
pub struct DispatchSolution {
    /// Optimal per-bus generation (per-unit), elementwise nonnegative.
    pub p_g: DVector<f64>,
    /// Market price: multiplier of the aggregate power balance.
    pub lambda: f64,
    /// Multipliers of the per-bus nonnegativity constraints.
    pub mu: DVector<f64>,
}

/// Residuals of the dispatch optimality conditions, for verification.
#[derive(Debug, Clone, Copy)]
pub struct KktResiduals {
    /// `max_i |grad C_i(P_i) - lambda - mu_i|`
    pub stationarity: f64,
    /// `|1'P - 1'P_d|`
    pub balance: f64,
    /// `|P' mu|`
    pub complementarity: f64,
    /// `max(0, -min_i mu_i)` and `max(0, -min_i P_i)` combined.
    pub feasibility: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.balance)
            .max(self.complementarity)
            .max(self.feasibility)
    }
}

impl DispatchSolution {
    /// Evaluates all first-order optimality residuals at this point.
    pub fn kkt_residuals(
        &self,
        costs: &CostProfile,
        p_d: &DVector<f64>,
    ) -> Result<KktResiduals, MarketError> {
        let grad = costs.gradient(&self.p_g)?;
        let mut stationarity = 0.0f64;
        let mut complementarity = 0.0f64;
        let mut feasibility = 0.0f64;
        for i in 0..self.p_g.len() {
            stationarity = stationarity.max((grad[i] - self.lambda - self.mu[i]).abs());
            complementarity += self.p_g[i] * self.mu[i];
            feasibility = feasibility.max(-self.mu[i]).max(-self.p_g[i]);
        }
        Ok(KktResiduals {
            stationarity,
            balance: (self.p_g.sum() - p_d.sum()).abs(),
            complementarity: complementarity.abs(),
            feasibility: feasibility.max(0.0),
        })
    }
}

/// Solves the dispatch problem for strongly convex quadratic costs.
///
/// Bisection drives the aggregate supply curve `sum_i max(0,(lam-c_i)/q_i)`
/// to the total load, identifying the active set; the price is then snapped
/// to the exact active-set solution so residuals sit at machine precision.
pub fn solve_economic_dispatch(
    costs: &CostProfile,
    p_d: &DVector<f64>,
) -> Result<DispatchSolution, MarketError> {
    if p_d.len() != costs.len() {
        return Err(MarketError::DimensionMismatch {
            load: p_d.len(),
            profile: costs.len(),
        });
    }
    let total: f64 = p_d.sum();
    if !(total > 0.0) {
        return Err(MarketError::NonPositiveLoad(total));
    }

    let supply = |lambda: f64| -> f64 {
        costs
            .iter()
            .map(|cost| cost.desired_production(lambda))
            .sum()
    };

    let max_c = costs.iter().map(|c| c.linear()).fold(0.0f64, f64::max);
    let max_q = costs.iter().map(|c| c.curvature()).fold(0.0f64, f64::max);
    let mut lo = 0.0f64;
    let mut hi = max_c + max_q * total;
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let s = supply(mid);
        if (s - total).abs() < BISECTION_TOL {
            lo = mid;
            hi = mid;
            break;
        }
        if s < total {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda_bisect = 0.5 * (lo + hi);

    // Exact solve on the active set identified by the bisection.
    let active: Vec<usize> = (0..costs.len())
        .filter(|&i| lambda_bisect > costs.get(i).unwrap().linear())
        .collect();
    if active.is_empty() {
        return Err(MarketError::BisectionFailed);
    }
    let inv_q_sum: f64 = active
        .iter()
        .map(|&i| 1.0 / costs.get(i).unwrap().curvature())
        .sum();
    let c_over_q_sum: f64 = active
        .iter()
        .map(|&i| {
            let c = costs.get(i).unwrap();
            c.linear() / c.curvature()
        })
        .sum();
    let lambda = (total + c_over_q_sum) / inv_q_sum;

    // The snapped price must select the same active set.
    for i in 0..costs.len() {
        let c_i = costs.get(i).unwrap().linear();
        let in_set = active.contains(&i);
        if in_set && lambda < c_i - BISECTION_TOL {
            return Err(MarketError::BisectionFailed);
        }
        if !in_set && lambda > c_i + BISECTION_TOL {
            return Err(MarketError::BisectionFailed);
        }
    }

    let n = costs.len();
    let mut p_g = DVector::zeros(n);
    let mut mu = DVector::zeros(n);
    for i in 0..n {
        let cost = costs.get(i).unwrap();
        if active.contains(&i) {
            p_g[i] = (lambda - cost.linear()) / cost.curvature();
        } else {
            mu[i] = cost.linear() - lambda;
        }
    }
    Ok(DispatchSolution { p_g, lambda, mu })
}

/// Per-bus price bids, elementwise nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct BidProfile {
    bids: DVector<f64>,
}

impl BidProfile {
    pub fn new(bids: DVector<f64>) -> Result<Self, MarketError> {
        for (bus, &value) in bids.iter().enumerate() {
            if !(value >= 0.0) {
                return Err(MarketError::NegativeBid { bus, value });
            }
        }
        Ok(Self { bids })
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.bids
    }

    pub fn len(&self) -> usize {
        self.bids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bids.len() == 0
    }

    pub fn get(&self, bus: usize) -> f64 {
        self.bids[bus]
    }
}

/// One optimizer of the operator's bid-clearing program plus a uniqueness
/// flag. `optimal_value` is `min(b) * 1'P_d`, exact by construction.
#[derive(Debug, Clone)]
pub struct IsoAllocation {
    pub p_g: DVector<f64>,
    pub unique: bool,
    pub optimal_value: f64,
}

/// Minimizes total payment `b'P` over `1'P = 1'P_d`, `P >= 0`.
///
/// All load goes to the lowest-bid generators. Ties (exact equality) give a
/// whole simplex face of optimizers; the canonical returned point splits the
/// load equally across the tied set and `unique` is false.
pub fn solve_iso_lp(bids: &BidProfile, p_d: &DVector<f64>) -> Result<IsoAllocation, MarketError> {
    let total: f64 = p_d.sum();
    if !(total > 0.0) {
        return Err(MarketError::NonPositiveLoad(total));
    }
    if bids.len() != p_d.len() {
        return Err(MarketError::DimensionMismatch {
            load: p_d.len(),
            profile: bids.len(),
        });
    }
    let min_bid = bids.as_vector().min();
    let winners: Vec<usize> = (0..bids.len())
        .filter(|&i| bids.get(i) == min_bid)
        .collect();
    let share = total / winners.len() as f64;
    let mut p_g = DVector::zeros(bids.len());
    for &i in &winners {
        p_g[i] = share;
    }
    Ok(IsoAllocation {
        p_g,
        unique: winners.len() == 1,
        optimal_value: min_bid * total,
    })
}

/// Stand-alone profit of generator `i`: revenue at its own bid minus cost.
pub fn payoff(
    i: usize,
    bids: &BidProfile,
    allocation: &DVector<f64>,
    costs: &CostProfile,
) -> Result<f64, MarketError> {
    let p_i = allocation[i];
    let cost = costs
        .get(i)
        .ok_or(CostError::BusOutOfRange(i, costs.len()))?;
    Ok(p_i * bids.get(i) - cost.value(p_i)?)
}

/// Per-bus closed interval of efficient Nash equilibrium bids.
///
/// Every profile with `lambda* <= b_i <= grad C_i(P_i*)` for all buses is an
/// efficient Nash equilibrium; producing buses get the point `{lambda*}`.
/// Requires at least two buses with strictly positive optimal production.
pub fn efficient_nash_interval(
    sol: &DispatchSolution,
    costs: &CostProfile,
) -> Result<Vec<(f64, f64)>, MarketError> {
    let producers = sol.p_g.iter().filter(|&&p| p > 0.0).count();
    if producers < 2 {
        return Err(MarketError::TooFewProducers(producers));
    }
    let grad = costs.gradient(&sol.p_g)?;
    Ok((0..sol.p_g.len()).map(|i| (sol.lambda, grad[i])).collect())
}

/// Outcome of checking a bid profile against the efficiency conditions.
#[derive(Debug, Clone)]
pub struct BidVerification {
    pub efficient: bool,
    /// `|b'P* - min(b) 1'P_d|`: zero iff the dispatch optimizer also solves
    /// the operator's program at these bids.
    pub lp_optimality_gap: f64,
    /// `max_i |P_i* - grad C_i*(b_i)|`
    pub max_profit_mismatch: f64,
    /// Buses violating either condition beyond the tolerance.
    pub failing_buses: Vec<usize>,
}

/// Checks whether `bids` is an efficient bid for the dispatch optimizer:
/// the optimizer must solve the operator's program at these bids and every
/// bus must be producing its profit-maximizing quantity.
pub fn verify_efficient_bid(
    bids: &BidProfile,
    sol: &DispatchSolution,
    costs: &CostProfile,
    tol: f64,
) -> Result<BidVerification, MarketError> {
    let n = sol.p_g.len();
    let min_bid = bids.as_vector().min();
    let total: f64 = sol.p_g.sum();
    let lp_value: f64 = bids.as_vector().dot(&sol.p_g);
    let lp_optimality_gap = (lp_value - min_bid * total).abs();

    let dispatched_max_bid = (0..n)
        .filter(|&i| sol.p_g[i] > tol)
        .map(|i| bids.get(i))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut failing = Vec::new();
    let mut max_profit_mismatch = 0.0f64;
    for i in 0..n {
        let desired = costs.get(i).unwrap().conjugate_gradient(bids.get(i))?;
        let mismatch = (sol.p_g[i] - desired).abs();
        max_profit_mismatch = max_profit_mismatch.max(mismatch);
        // the allocation stops being an optimizer of the operator's program
        // when a producing bus is outbid or an idle bus undercuts it
        let dispatched_above_min = sol.p_g[i] > tol && bids.get(i) > min_bid + tol;
        let idle_undercuts = sol.p_g[i] <= tol && bids.get(i) + tol < dispatched_max_bid;
        if mismatch > tol || dispatched_above_min || idle_undercuts {
            failing.push(i);
        }
    }
    let efficient = lp_optimality_gap <= tol * total.max(1.0) && failing.is_empty();
    Ok(BidVerification {
        efficient,
        lp_optimality_gap,
        max_profit_mismatch,
        failing_buses: failing,
    })
}

/// Worst-case payoff of generator `i` after a unilateral deviation, taken
/// over every optimizer of the operator's program at the deviated bids.
///
/// A strictly lowest bid forces the full load on the deviator; a tied bid
/// admits any share of the load including zero and all of it (payoff is
/// concave in the share, so the worst case sits at an endpoint); a bid above
/// the minimum is never dispatched.
pub fn pessimistic_deviation_payoff(
    i: usize,
    deviation_bid: f64,
    equilibrium_bids: &BidProfile,
    p_d: &DVector<f64>,
    costs: &CostProfile,
) -> Result<f64, MarketError> {
    if !(deviation_bid >= 0.0) {
        return Err(MarketError::NegativeBid {
            bus: i,
            value: deviation_bid,
        });
    }
    let total: f64 = p_d.sum();
    if !(total > 0.0) {
        return Err(MarketError::NonPositiveLoad(total));
    }
    let cost = costs
        .get(i)
        .ok_or(CostError::BusOutOfRange(i, costs.len()))?;
    let others_min = (0..equilibrium_bids.len())
        .filter(|&j| j != i)
        .map(|j| equilibrium_bids.get(j))
        .fold(f64::INFINITY, f64::min);
    let payoff_at =
        |share: f64| -> Result<f64, MarketError> { Ok(share * deviation_bid - cost.value(share)?) };
    if deviation_bid < others_min {
        payoff_at(total)
    } else if deviation_bid == others_min {
        Ok(payoff_at(0.0)?.min(payoff_at(total)?))
    } else {
        payoff_at(0.0)
    }
}

/// Largest pessimistic payoff gain over a set of candidate deviations for
/// generator `i`, relative to its payoff at the equilibrium allocation.
pub fn max_deviation_gain(
    i: usize,
    equilibrium_bids: &BidProfile,
    equilibrium_allocation: &DVector<f64>,
    candidates: &[f64],
    p_d: &DVector<f64>,
    costs: &CostProfile,
) -> Result<f64, MarketError> {
    let base = payoff(i, equilibrium_bids, equilibrium_allocation, costs)?;
    let gain_of = |&bid: &f64| -> Result<f64, MarketError> {
        Ok(pessimistic_deviation_payoff(i, bid, equilibrium_bids, p_d, costs)? - base)
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        candidates
            .par_iter()
            .map(gain_of)
            .try_reduce(|| f64::NEG_INFINITY, |a, b| Ok(a.max(b)))
    }
    #[cfg(not(feature = "parallel"))]
    {
        max_deviation_gain_seq(
            i,
            equilibrium_bids,
            equilibrium_allocation,
            candidates,
            p_d,
            costs,
        )
    }
}

/// Sequential twin of [`max_deviation_gain`]; always available for
/// comparison benchmarks.
pub fn max_deviation_gain_seq(
    i: usize,
    equilibrium_bids: &BidProfile,
    equilibrium_allocation: &DVector<f64>,
    candidates: &[f64],
    p_d: &DVector<f64>,
    costs: &CostProfile,
) -> Result<f64, MarketError> {
    let base = payoff(i, equilibrium_bids, equilibrium_allocation, costs)?;
    let mut worst = f64::NEG_INFINITY;
    for &bid in candidates {
        let gain = pessimistic_deviation_payoff(i, bid, equilibrium_bids, p_d, costs)? - base;
        worst = worst.max(gain);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn profile(q: &[f64], c: &[f64]) -> CostProfile {
        CostProfile::from_coefficients(q, c).unwrap()
    }

    #[test]
    fn single_generator_dispatch() {
        let costs = profile(&[2.0], &[0.0]);
        let sol = solve_economic_dispatch(&costs, &DVector::from_vec(vec![1.0])).unwrap();
        assert_relative_eq!(sol.p_g[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(sol.lambda, 2.0, epsilon = 1e-12);
        assert_eq!(sol.mu[0], 0.0);
    }

    #[test]
    fn identical_generators_split_evenly() {
        let costs = profile(&[3.0, 3.0], &[1.0, 1.0]);
        let sol = solve_economic_dispatch(&costs, &DVector::from_vec(vec![2.0, 0.0])).unwrap();
        assert_relative_eq!(sol.p_g[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(sol.p_g[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn dispatch_rejects_nonpositive_load() {
        let costs = profile(&[2.0], &[0.0]);
        assert!(matches!(
            solve_economic_dispatch(&costs, &DVector::from_vec(vec![0.0])),
            Err(MarketError::NonPositiveLoad(_))
        ));
    }

    #[test]
    fn dispatch_kkt_residuals_are_tiny() {
        let costs = profile(
            &[26.0, 70.0, 150.0, 150.0, 300.0],
            &[7.5, 30.0, 90.0, 82.5, 75.0],
        );
        let p_d = DVector::from_vec(vec![2.462, 0.0, 0.0, 0.0, 0.0]);
        let sol = solve_economic_dispatch(&costs, &p_d).unwrap();
        let res = sol.kkt_residuals(&costs, &p_d).unwrap();
        assert!(res.max() < 1e-8, "residuals {res:?}");
        assert!(res.complementarity < 1e-10);
        assert!(sol.lambda > 0.0);
    }

    #[test]
    fn iso_lp_unique_winner() {
        let bids = BidProfile::new(DVector::from_vec(vec![1.0, 2.0])).unwrap();
        let alloc = solve_iso_lp(&bids, &DVector::from_vec(vec![5.0, 0.0])).unwrap();
        assert_eq!(alloc.p_g.as_slice(), &[5.0, 0.0]);
        assert!(alloc.unique);
        assert_eq!(alloc.optimal_value, 5.0);
    }

    #[test]
    fn iso_lp_tie_splits_equally() {
        let bids = BidProfile::new(DVector::from_vec(vec![1.0, 1.0])).unwrap();
        let alloc = solve_iso_lp(&bids, &DVector::from_vec(vec![5.0, 0.0])).unwrap();
        assert_eq!(alloc.p_g.as_slice(), &[2.5, 2.5]);
        assert!(!alloc.unique);
        assert_eq!(alloc.optimal_value, 5.0);
    }

    #[test]
    fn lp_value_matches_single_winner_enumeration() {
        // enumeration oracle: vertices of the feasible simplex put the whole
        // load on one generator
        let bids = BidProfile::new(DVector::from_vec(vec![3.0, 1.5, 2.0])).unwrap();
        let p_d = DVector::from_vec(vec![1.0, 2.0, 1.0]);
        let total: f64 = p_d.sum();
        let brute = (0..3)
            .map(|i| bids.get(i) * total)
            .fold(f64::INFINITY, f64::min);
        let alloc = solve_iso_lp(&bids, &p_d).unwrap();
        assert_eq!(alloc.optimal_value, brute);
        assert_relative_eq!(bids.as_vector().dot(&alloc.p_g), brute, epsilon = 1e-12);
    }

    #[test]
    fn payoff_examples() {
        let costs = profile(&[1.0], &[0.0]);
        let bids = BidProfile::new(DVector::from_vec(vec![2.0])).unwrap();
        let alloc = DVector::from_vec(vec![3.0]);
        assert_relative_eq!(payoff(0, &bids, &alloc, &costs).unwrap(), 1.5);
        let zero = DVector::from_vec(vec![0.0]);
        assert_eq!(payoff(0, &bids, &zero, &costs).unwrap(), 0.0);
    }

    #[test]
    fn nash_interval_point_when_all_produce() {
        let costs = profile(&[2.0, 4.0], &[0.0, 0.0]);
        let sol = solve_economic_dispatch(&costs, &DVector::from_vec(vec![3.0, 0.0])).unwrap();
        let intervals = efficient_nash_interval(&sol, &costs).unwrap();
        for (lo, hi) in intervals {
            assert_relative_eq!(lo, sol.lambda, epsilon = 1e-12);
            assert_relative_eq!(hi, sol.lambda, epsilon = 1e-9);
        }
        assert!(sol.lambda > 0.0);
    }

    #[test]
    fn nash_interval_requires_two_producers() {
        let costs = profile(&[2.0, 2.0], &[0.0, 100.0]);
        let sol = solve_economic_dispatch(&costs, &DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert!(matches!(
            efficient_nash_interval(&sol, &costs),
            Err(MarketError::TooFewProducers(1))
        ));
    }

    #[test]
    fn verify_bid_inside_interval() {
        let costs = profile(&[2.0, 2.0, 1.0], &[0.0, 0.0, 10.0]);
        let p_d = DVector::from_vec(vec![2.0, 2.0, 0.0]);
        let sol = solve_economic_dispatch(&costs, &p_d).unwrap();
        let intervals = efficient_nash_interval(&sol, &costs).unwrap();
        // upper endpoint: marginal cost at the optimum
        let upper = BidProfile::new(DVector::from_vec(
            intervals.iter().map(|&(_, hi)| hi).collect(),
        ))
        .unwrap();
        let v = verify_efficient_bid(&upper, &sol, &costs, 1e-6).unwrap();
        assert!(v.efficient, "{v:?}");
        // midpoint for the idle bus stays efficient
        let mid = BidProfile::new(DVector::from_vec(vec![
            sol.lambda,
            sol.lambda,
            0.5 * (sol.lambda + 10.0),
        ]))
        .unwrap();
        assert!(
            verify_efficient_bid(&mid, &sol, &costs, 1e-6)
                .unwrap()
                .efficient
        );
    }

    #[test]
    fn verify_bid_detects_undercutting_idle_bus() {
        let costs = profile(&[2.0, 2.0, 1.0], &[0.0, 0.0, 10.0]);
        let p_d = DVector::from_vec(vec![2.0, 2.0, 0.0]);
        let sol = solve_economic_dispatch(&costs, &p_d).unwrap();
        // idle bus bids below the price: the operator would dispatch it
        let bids = BidProfile::new(DVector::from_vec(vec![
            sol.lambda,
            sol.lambda,
            sol.lambda - 0.5,
        ]))
        .unwrap();
        let v = verify_efficient_bid(&bids, &sol, &costs, 1e-6).unwrap();
        assert!(!v.efficient);
        assert!(v.failing_buses.contains(&2), "{v:?}");
        let lp = solve_iso_lp(&bids, &p_d).unwrap();
        assert!(lp.p_g[2] > 0.0);
    }

    #[test]
    fn pessimistic_deviation_cases() {
        let costs = profile(&[2.0, 2.0], &[1.0, 1.0]);
        let p_d = DVector::from_vec(vec![1.0, 1.0]);
        let eq = BidProfile::new(DVector::from_vec(vec![3.0, 3.0])).unwrap();
        // strictly lowest: forced to serve everything
        let low = pessimistic_deviation_payoff(0, 2.0, &eq, &p_d, &costs).unwrap();
        assert_relative_eq!(low, 2.0 * 2.0 - (0.5 * 2.0 * 4.0 + 2.0));
        // above the minimum: never dispatched
        let high = pessimistic_deviation_payoff(0, 5.0, &eq, &p_d, &costs).unwrap();
        assert_eq!(high, 0.0);
        // tied: worst case over the simplex face endpoints
        let tied = pessimistic_deviation_payoff(0, 3.0, &eq, &p_d, &costs).unwrap();
        assert_relative_eq!(tied, (3.0f64 * 2.0 - (0.5 * 2.0 * 4.0 + 2.0)).min(0.0));
    }

    #[test]
    fn deviation_gain_nonpositive_at_equilibrium() {
        let costs = profile(&[2.0, 4.0], &[1.0, 2.0]);
        let p_d = DVector::from_vec(vec![1.5, 1.5]);
        let sol = solve_economic_dispatch(&costs, &p_d).unwrap();
        let bids = BidProfile::new(DVector::from_element(2, sol.lambda)).unwrap();
        let candidates: Vec<f64> = (0..100)
            .map(|k| sol.lambda * (0.02 + 0.02 * k as f64))
            .filter(|&b| b != sol.lambda)
            .collect();
        for i in 0..2 {
            let gain = max_deviation_gain(i, &bids, &sol.p_g, &candidates, &p_d, &costs).unwrap();
            assert!(gain <= 1e-9, "bus {i} gain {gain}");
            let gain_seq =
                max_deviation_gain_seq(i, &bids, &sol.p_g, &candidates, &p_d, &costs).unwrap();
            assert_eq!(gain, gain_seq);
        }
    }
}
