//! Integration tests of the closed-loop simulator: stationarity at
//! equilibrium, event atomicity, determinism, and the fixed-point /
//! efficiency correspondence.

use gridmarket::analysis::{check_equilibrium_efficiency, reference_equilibrium};
use gridmarket::cli::{self, builtin, render_trajectory};
use gridmarket::dynamics::{
    closed_loop_field, find_synchronous_equilibrium, simulate, ConvergenceCriterion, EventSchedule,
};
use gridmarket::market::solve_economic_dispatch;

#[test]
fn equilibrium_start_without_events_stays_constant() {
    let compiled = builtin("toy-2bus").unwrap().compile().unwrap();
    let mut setup = compiled.setup.clone();
    setup.events = EventSchedule::empty();
    setup.t_end = 1.0;
    setup.output_stride = 100;
    setup.convergence = ConvergenceCriterion {
        rate_tol: 1e-12,
        hold_time: 10.0, // never fires
    };
    let initial = compiled.initial_state().unwrap();
    let trajectory = simulate(&compiled.network, &setup, initial.clone()).unwrap();
    for sample in &trajectory.samples {
        assert!((&sample.p_g - &initial.p_g).abs().max() < 1e-8);
        assert!((&sample.bids - &initial.bids).abs().max() < 1e-8);
        assert!(sample.omega.abs().max() < 1e-8);
        assert!((sample.lambda - initial.lambda).abs() < 1e-8);
    }
    for v in &trajectory.lyapunov {
        assert!(v.abs() < 1e-12);
    }
}

#[test]
fn state_is_continuous_across_events() {
    let compiled = builtin("toy-2bus").unwrap().compile().unwrap();
    let initial = compiled.initial_state().unwrap();
    let trajectory = simulate(&compiled.network, &compiled.setup, initial).unwrap();
    assert_eq!(trajectory.segments.len(), 2);
    // the boundary instant is recorded twice: once closing the first
    // segment, once opening the second, with the identical state
    let boundary = compiled.setup.events.events()[0].time;
    let indices: Vec<usize> = trajectory
        .times
        .iter()
        .enumerate()
        .filter(|(_, &t)| t == boundary)
        .map(|(i, _)| i)
        .collect();
    assert_eq!(indices.len(), 2, "boundary sample missing");
    let a = &trajectory.samples[indices[0]];
    let b = &trajectory.samples[indices[1]];
    assert_eq!(a.p_g, b.p_g);
    assert_eq!(a.bids, b.bids);
    assert_eq!(a.omega, b.omega);
    assert_eq!(a.lambda, b.lambda);
}

#[test]
fn identical_scenarios_render_identical_trajectories() {
    let compiled = builtin("toy-2bus").unwrap().compile().unwrap();
    let run = || {
        let initial = compiled.initial_state().unwrap();
        let trajectory = simulate(&compiled.network, &compiled.setup, initial).unwrap();
        render_trajectory(&compiled.network, &trajectory)
    };
    let first = run();
    let second = run();
    assert_eq!(first, second, "trajectory files must be bit-identical");
    assert!(first.lines().count() > 10);
}

#[test]
fn converged_endpoint_is_a_fixed_point_iff_efficient() {
    let compiled = builtin("toy-2bus").unwrap().compile().unwrap();
    let initial = compiled.initial_state().unwrap();
    let trajectory = simulate(&compiled.network, &compiled.setup, initial).unwrap();
    let last = trajectory.segments.last().unwrap();
    let endpoint = &last.end_state;

    let rate = closed_loop_field(
        &compiled.network,
        &last.costs,
        endpoint,
        &last.p_d,
        &compiled.setup.gains,
    )
    .unwrap();
    let report =
        check_equilibrium_efficiency(&compiled.network, &last.costs, endpoint, &last.p_d, 1e-4)
            .unwrap();
    // converged: tiny residual field and a passing efficiency report
    assert!(rate.inf_norm() < 1e-6, "rate {}", rate.inf_norm());
    assert!(report.pass, "{report:?}");

    // a perturbed state is neither a fixed point nor efficient
    let mut off = endpoint.clone();
    off.p_g[0] += 0.2;
    let rate = closed_loop_field(
        &compiled.network,
        &last.costs,
        &off,
        &last.p_d,
        &compiled.setup.gains,
    )
    .unwrap();
    let report =
        check_equilibrium_efficiency(&compiled.network, &last.costs, &off, &last.p_d, 1e-4)
            .unwrap();
    assert!(rate.inf_norm() > 1e-3);
    assert!(!report.pass);
}

#[test]
fn ieee14_stage1_equilibrium_is_secure() {
    let compiled = builtin("ieee14-sigma300").unwrap().compile().unwrap();
    let sol = solve_economic_dispatch(&compiled.setup.costs, &compiled.setup.p_d).unwrap();
    let phi =
        find_synchronous_equilibrium(&compiled.network, &sol.p_g, &compiled.setup.p_d).unwrap();
    let residual = (compiled.network.tree_incidence() * compiled.network.potential_gradient(&phi)
        - (&sol.p_g - &compiled.setup.p_d))
        .abs()
        .max();
    assert!(residual < 1e-10, "residual {residual}");
    assert!(compiled.network.security_constraint_holds(&phi));
}

#[test]
fn reference_equilibrium_matches_dispatch_and_marginal_bids() {
    let compiled = builtin("ieee14-sigma300").unwrap().compile().unwrap();
    let x_bar = reference_equilibrium(
        &compiled.network,
        &compiled.setup.costs,
        &compiled.setup.p_d,
    )
    .unwrap();
    let sol = solve_economic_dispatch(&compiled.setup.costs, &compiled.setup.p_d).unwrap();
    assert_eq!(x_bar.p_g, sol.p_g);
    for i in 0..14 {
        if sol.p_g[i] > 0.0 {
            assert_eq!(x_bar.bids[i], sol.lambda);
        } else {
            assert_eq!(x_bar.bids[i], compiled.setup.costs.get(i).unwrap().linear());
        }
    }
}

#[test]
fn cli_run_writes_outputs_and_checker_accepts_them() {
    let compiled = builtin("toy-2bus").unwrap().compile().unwrap();
    let dir = std::env::temp_dir().join("gridmarket-test-run");
    let _ = std::fs::remove_dir_all(&dir);
    let (summary, _trajectory) = cli::run(&compiled, &dir).unwrap();
    assert!(summary.min_bid >= 0.0);
    assert!(summary.min_p_g >= 0.0);
    assert!(summary.lyapunov.descends);
    assert_eq!(summary.segments.len(), 2);
    for seg in &summary.segments {
        assert!(
            seg.efficiency.pass,
            "segment {}: {:?}",
            seg.index, seg.efficiency
        );
    }
    let report = cli::check_trajectory(dir.join("trajectory.csv"), 1e-6).unwrap();
    assert!(report.pass, "{report:?}");
    let summary_text = std::fs::read_to_string(dir.join("summary.txt")).unwrap();
    assert!(summary_text.contains("efficiency = PASS"));
    let _ = std::fs::remove_dir_all(&dir);
}
