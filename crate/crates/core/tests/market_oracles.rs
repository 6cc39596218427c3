//! Cross-checks of the dispatch solver against independent oracles on
//! random instances, plus the Nash deviation property at sampled
//! equilibria.

mod common;

use common::{projected_gradient_dispatch, random_profile};
use gridmarket::market::{
    efficient_nash_interval, max_deviation_gain_seq, solve_economic_dispatch, solve_iso_lp,
    BidProfile,
};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn dispatch_matches_projected_gradient_oracle_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..100 {
        let n = rng.gen_range(2..=10);
        let (costs, p_d) = random_profile(&mut rng, n);
        let sol = solve_economic_dispatch(&costs, &p_d).unwrap();
        let oracle = projected_gradient_dispatch(&costs, &p_d);
        let gap = (&sol.p_g - &oracle).abs().max();
        assert!(gap < 1e-8, "trial {trial}: oracle gap {gap}");
        let residuals = sol.kkt_residuals(&costs, &p_d).unwrap();
        assert!(residuals.max() < 1e-8, "trial {trial}: {residuals:?}");
        assert!(residuals.complementarity < 1e-10);
        assert!(sol.lambda > 0.0);
    }
}

#[test]
fn dispatch_price_clears_the_bid_program() {
    // bidding the dispatch price everywhere makes the dispatch optimizer an
    // optimizer of the operator's program: payments match the optimal value
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..20 {
        let n = rng.gen_range(2..=6);
        let (costs, p_d) = random_profile(&mut rng, n);
        let sol = solve_economic_dispatch(&costs, &p_d).unwrap();
        let bids = BidProfile::new(DVector::from_element(n, sol.lambda)).unwrap();
        let lp = solve_iso_lp(&bids, &p_d).unwrap();
        let payment = bids.as_vector().dot(&sol.p_g);
        assert!(
            (payment - lp.optimal_value).abs() <= 1e-9 * lp.optimal_value.abs().max(1.0),
            "payment {payment} vs optimum {}",
            lp.optimal_value
        );
    }
}

#[test]
fn no_profitable_unilateral_deviation_inside_the_interval() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut tested = 0;
    while tested < 10 {
        let n = rng.gen_range(3..=8);
        let (costs, p_d) = random_profile(&mut rng, n);
        let sol = solve_economic_dispatch(&costs, &p_d).unwrap();
        let Ok(intervals) = efficient_nash_interval(&sol, &costs) else {
            continue; // needs two producers
        };
        tested += 1;
        // sample a bid profile inside the interval
        let bids = BidProfile::new(DVector::from_fn(n, |i, _| {
            let (lo, hi) = intervals[i];
            lo + (hi - lo) * rng.gen_range(0.0..=1.0)
        }))
        .unwrap();
        for bus in 0..n {
            let candidates: Vec<f64> = (0..100)
                .map(|_| rng.gen_range(0.0..2.0 * sol.lambda))
                .filter(|&b| b != bids.get(bus))
                .collect();
            let gain =
                max_deviation_gain_seq(bus, &bids, &sol.p_g, &candidates, &p_d, &costs).unwrap();
            assert!(
                gain <= 1e-9,
                "bus {bus} profits {gain} by deviating from an efficient equilibrium"
            );
        }
    }
}
