//! Shared test oracles, independent of the library's solver paths.

use gridmarket::costs::{CostProfile, GeneratorCost};
use nalgebra::DVector;

/// Projects `x` onto `{ p >= 0, 1'p = total }` by sorting (exact
/// finite-step algorithm, no bisection involved).
pub fn project_onto_budget_simplex(x: &DVector<f64>, total: f64) -> DVector<f64> {
    let n = x.len();
    let mut sorted: Vec<f64> = x.iter().copied().collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumulative = 0.0;
    let mut theta = (x.sum() - total) / n as f64;
    for (k, &entry) in sorted.iter().enumerate() {
        cumulative += entry;
        let candidate = (cumulative - total) / (k + 1) as f64;
        if entry - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    DVector::from_fn(n, |i, _| (x[i] - theta).max(0.0))
}

/// Independent dispatch oracle: projected gradient descent on the total
/// cost over the balance-and-nonnegativity set, with the projection done
/// by sorting. Converges linearly for strongly convex quadratics.
pub fn projected_gradient_dispatch(costs: &CostProfile, p_d: &DVector<f64>) -> DVector<f64> {
    let total: f64 = p_d.sum();
    let n = costs.len();
    let lipschitz = costs.iter().map(|c| c.curvature()).fold(0.0f64, f64::max);
    let step = 1.0 / lipschitz;
    let mut x = DVector::from_element(n, total / n as f64);
    for _ in 0..500_000 {
        let mut y = x.clone();
        for i in 0..n {
            let g = costs.get(i).unwrap().gradient(x[i].max(0.0)).unwrap();
            y[i] = x[i] - step * g;
        }
        let next = project_onto_budget_simplex(&y, total);
        let delta = (&next - &x).abs().max();
        x = next;
        if delta < 1e-14 {
            break;
        }
    }
    x
}

#[allow(dead_code)]
pub fn random_profile(rng: &mut impl rand::Rng, n: usize) -> (CostProfile, DVector<f64>) {
    let q: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..50.0)).collect();
    let c: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..30.0)).collect();
    let p_d = DVector::from_fn(n, |_, _| rng.gen_range(0.0..3.0)).add_scalar(0.1);
    (CostProfile::from_coefficients(&q, &c).unwrap(), p_d)
}
