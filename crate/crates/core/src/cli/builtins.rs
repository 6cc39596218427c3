//! Compiled-in scenarios, dumpable to TOML for editing.

use super::{
    CostChange, CostsSection, EventSection, GainsSection, LoadChange, NetworkSection, RunSection,
    ScalarOrPerBus, Scenario,
};

/// Names of all built-in scenarios.
pub fn builtin_names() -> &'static [&'static str] {
    &["ieee14-sigma300", "ieee14-sigma0", "toy-2bus"]
}

/// Returns the built-in scenario with the given name, if any.
pub fn builtin(name: &str) -> Option<Scenario> {
    match name {
        "ieee14-sigma300" => Some(ieee14(300.0)),
        "ieee14-sigma0" => Some(ieee14(0.0)),
        "toy-2bus" => Some(toy_2bus()),
        _ => None,
    }
}

/// 14-bus benchmark: synchronous generators at buses 1, 2, 3, 6, 8;
/// the remaining buses carry loads only (priced out via high costs).
///
/// Line susceptances are the reciprocal reactances of the standard 14-bus
/// branch data (per-unit, 100 MVA base); they are not part of the market
/// data and only shape the physical transients. Voltage setpoints are
/// clamped into [1.0, 1.06].
fn ieee14(sigma: f64) -> Scenario {
    let edges: Vec<[usize; 2]> = vec![
        [1, 2],
        [1, 5],
        [2, 3],
        [2, 4],
        [2, 5],
        [3, 4],
        [4, 5],
        [4, 7],
        [4, 9],
        [5, 6],
        [6, 11],
        [6, 12],
        [6, 13],
        [7, 8],
        [7, 9],
        [9, 10],
        [9, 14],
        [10, 11],
        [12, 13],
        [13, 14],
    ];
    // 1/X for the standard branch reactances
    let reactance = [
        0.05917, 0.22304, 0.19797, 0.17632, 0.17388, 0.17103, 0.04211, 0.20912, 0.55618, 0.25202,
        0.19890, 0.25581, 0.13027, 0.17615, 0.11001, 0.08450, 0.27038, 0.19207, 0.19988, 0.34802,
    ];
    let susceptance: Vec<f64> = reactance.iter().map(|x| 1.0 / x).collect();

    let mut voltage = vec![1.0; 14];
    let mut inertia = vec![0.1; 14];
    let mut q = vec![1.0e4; 14];
    let mut c = vec![1.0e4; 14];
    for (bus, v, m, qi, ci) in [
        (1, 1.06, 4.0, 26.0, 7.5),
        (2, 1.045, 4.2, 70.0, 30.0),
        (3, 1.01, 4.5, 150.0, 90.0),
        (6, 1.06, 4.3, 150.0, 82.5),
        (8, 1.06, 4.1, 300.0, 75.0),
    ] {
        voltage[bus - 1] = v;
        inertia[bus - 1] = m;
        q[bus - 1] = qi;
        c[bus - 1] = ci;
    }

    Scenario {
        name: format!("ieee14-sigma{}", sigma as u64),
        network: NetworkSection {
            buses: 14,
            edges,
            susceptance,
            voltage,
            inertia,
            damping: vec![3.0; 14],
            tree: None,
        },
        costs: CostsSection { q, c },
        gains: GainsSection {
            tau_b: ScalarOrPerBus::Scalar(0.005),
            tau_g: ScalarOrPerBus::Scalar(1.0),
            tau_lambda: 0.002,
            rho: 300.0,
            sigma,
        },
        events: vec![
            EventSection {
                time: 1.0,
                loads: vec![LoadChange { bus: 3, mw: 94.2 }],
                costs: vec![],
            },
            EventSection {
                time: 15.0,
                loads: vec![],
                costs: vec![
                    CostChange {
                        bus: 3,
                        q: 60.0,
                        c: 38.0,
                    },
                    CostChange {
                        bus: 6,
                        q: 75.0,
                        c: 45.0,
                    },
                    CostChange {
                        bus: 8,
                        q: 68.0,
                        c: 23.0,
                    },
                ],
            },
        ],
        run: RunSection {
            load_mw: vec![
                0.0, 22.0, 80.0, 48.0, 7.6, 11.0, 0.0, 0.0, 30.0, 9.0, 3.5, 6.1, 14.0, 15.0,
            ],
            t_end: 150.0,
            dt: 1e-5,
            output_stride: 2000,
            init: Default::default(),
            initial: None,
        },
    }
}

/// Minimal two-bus system: one competitive generator serving one load bus.
fn toy_2bus() -> Scenario {
    Scenario {
        name: "toy-2bus".into(),
        network: NetworkSection {
            buses: 2,
            edges: vec![[1, 2]],
            susceptance: vec![10.0],
            voltage: vec![1.0, 1.0],
            inertia: vec![4.0, 0.1],
            damping: vec![2.5, 2.5],
            tree: None,
        },
        costs: CostsSection {
            q: vec![2.0, 1.0e4],
            c: vec![0.0, 1.0e4],
        },
        gains: GainsSection {
            tau_b: ScalarOrPerBus::Scalar(0.01),
            tau_g: ScalarOrPerBus::Scalar(1.0),
            tau_lambda: 0.01,
            rho: 10.0,
            sigma: 0.0,
        },
        events: vec![EventSection {
            time: 2.0,
            loads: vec![LoadChange { bus: 2, mw: 60.0 }],
            costs: vec![],
        }],
        run: RunSection {
            load_mw: vec![0.0, 50.0],
            t_end: 20.0,
            dt: 1e-4,
            output_stride: 100,
            init: Default::default(),
            initial: None,
        },
    }
}
