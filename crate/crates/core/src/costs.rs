//! Strongly convex generator cost functions and their convex conjugates.
//!
//! Every generator carries a cost `C(P)` for producing `P` units of power
//! (per-unit). The conjugate `C*(b) = max_{P>=0} { b P - C(P) }` and its
//! gradient (the profit-maximizing production at price `b`) drive both the
//! dispatch solver and the bid dynamics. Only the quadratic family is
//! shipped; the [`GeneratorCost`] trait is the extension point for other
//! strongly convex models.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CostError {
    #[error("quadratic curvature must be positive, got q = {0}")]
    NonPositiveCurvature(f64),
    #[error("linear coefficient must be nonnegative, got c = {0}")]
    NegativeLinearCoefficient(f64),
    #[error("power must be nonnegative, got {0}")]
    NegativePower(f64),
    #[error("bid must be nonnegative, got {0}")]
    NegativeBid(f64),
    #[error("profile has {got} cost entries, expected {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("bus index {0} out of range for profile of length {1}")]
    BusOutOfRange(usize, usize),
}

/// Cost model interface: value/gradient pairs for the cost and its conjugate.
///
/// Implementors must be strongly convex on `P >= 0` with `gradient(0) >= 0`.
pub trait GeneratorCost {
    /// Production cost at output `p >= 0`.
    fn value(&self, p: f64) -> Result<f64, CostError>;
    /// Marginal cost at output `p >= 0`.
    fn gradient(&self, p: f64) -> Result<f64, CostError>;
    /// Convex conjugate `C*(b) = max_{P>=0} { b P - C(P) }`.
    fn conjugate_value(&self, bid: f64) -> Result<f64, CostError>;
    /// Profit-maximizing production at price `bid`; the gradient of `C*`.
    fn conjugate_gradient(&self, bid: f64) -> Result<f64, CostError>;
}

/// Quadratic cost `C(P) = q/2 P^2 + c P` with `q > 0`, `c >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticCost {
    q: f64,
    c: f64,
}

impl QuadraticCost {
    pub fn new(q: f64, c: f64) -> Result<Self, CostError> {
        if !(q > 0.0) || !q.is_finite() {
            return Err(CostError::NonPositiveCurvature(q));
        }
        if !(c >= 0.0) || !c.is_finite() {
            return Err(CostError::NegativeLinearCoefficient(c));
        }
        Ok(Self { q, c })
    }

    pub fn curvature(&self) -> f64 {
        self.q
    }

    pub fn linear(&self) -> f64 {
        self.c
    }

    /// `C(p)` without the nonnegativity check; callers guarantee `p >= 0`.
    #[inline]
    pub(crate) fn value_at(&self, p: f64) -> f64 {
        0.5 * self.q * p * p + self.c * p
    }

    /// Marginal cost `q p + c`; callers guarantee `p >= 0`.
    #[inline]
    pub(crate) fn marginal_at(&self, p: f64) -> f64 {
        self.q * p + self.c
    }

    /// `grad C*(bid) = max(0, (bid - c)/q)`; callers guarantee `bid >= 0`.
    #[inline]
    pub(crate) fn desired_production(&self, bid: f64) -> f64 {
        ((bid - self.c) / self.q).max(0.0)
    }
}

impl GeneratorCost for QuadraticCost {
    fn value(&self, p: f64) -> Result<f64, CostError> {
        if !(p >= 0.0) {
            return Err(CostError::NegativePower(p));
        }
        Ok(self.value_at(p))
    }

    fn gradient(&self, p: f64) -> Result<f64, CostError> {
        if !(p >= 0.0) {
            return Err(CostError::NegativePower(p));
        }
        Ok(self.marginal_at(p))
    }

    fn conjugate_value(&self, bid: f64) -> Result<f64, CostError> {
        if !(bid >= 0.0) {
            return Err(CostError::NegativeBid(bid));
        }
        if bid <= self.c {
            Ok(0.0)
        } else {
            let d = bid - self.c;
            Ok(d * d / (2.0 * self.q))
        }
    }

    fn conjugate_gradient(&self, bid: f64) -> Result<f64, CostError> {
        if !(bid >= 0.0) {
            return Err(CostError::NegativeBid(bid));
        }
        Ok(self.desired_production(bid))
    }
}

/// Default coefficients for buses without a real generator: the cost is set
/// high enough that zero production is optimal in every shipped scenario.
pub const HIGH_COST_Q: f64 = 1.0e4;
pub const HIGH_COST_C: f64 = 1.0e4;

/// One [`QuadraticCost`] per bus.
#[derive(Debug, Clone, PartialEq)]
pub struct CostProfile {
    costs: Vec<QuadraticCost>,
}

impl CostProfile {
    pub fn new(costs: Vec<QuadraticCost>) -> Self {
        Self { costs }
    }

    /// Builds a profile from parallel coefficient slices.
    pub fn from_coefficients(q: &[f64], c: &[f64]) -> Result<Self, CostError> {
        if q.len() != c.len() {
            return Err(CostError::LengthMismatch {
                got: c.len(),
                expected: q.len(),
            });
        }
        let costs = q
            .iter()
            .zip(c)
            .map(|(&qi, &ci)| QuadraticCost::new(qi, ci))
            .collect::<Result<_, _>>()?;
        Ok(Self { costs })
    }

    /// A placeholder cost for a bus with no competitive generator.
    pub fn high_cost() -> QuadraticCost {
        QuadraticCost::new(HIGH_COST_Q, HIGH_COST_C).expect("constants are valid")
    }

    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    pub fn get(&self, bus: usize) -> Option<&QuadraticCost> {
        self.costs.get(bus)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, QuadraticCost> {
        self.costs.iter()
    }

    /// Replaces the cost at `bus`; used by timed cost-change events.
    pub fn set(&mut self, bus: usize, cost: QuadraticCost) -> Result<(), CostError> {
        let n = self.costs.len();
        *self
            .costs
            .get_mut(bus)
            .ok_or(CostError::BusOutOfRange(bus, n))? = cost;
        Ok(())
    }

    /// Total network cost `sum_i C_i(P_i)`.
    pub fn total_value(&self, p: &DVector<f64>) -> Result<f64, CostError> {
        self.check_len(p)?;
        let mut total = 0.0;
        for (cost, &pi) in self.costs.iter().zip(p.iter()) {
            total += cost.value(pi)?;
        }
        Ok(total)
    }

    /// Per-bus marginal cost `grad C(P)`.
    pub fn gradient(&self, p: &DVector<f64>) -> Result<DVector<f64>, CostError> {
        self.check_len(p)?;
        let mut out = DVector::zeros(p.len());
        for (i, (cost, &pi)) in self.costs.iter().zip(p.iter()).enumerate() {
            out[i] = cost.gradient(pi)?;
        }
        Ok(out)
    }

    /// Per-bus profit-maximizing production `grad C*(b)`.
    pub fn desired_production(&self, bids: &DVector<f64>) -> Result<DVector<f64>, CostError> {
        self.check_len(bids)?;
        let mut out = DVector::zeros(bids.len());
        for (i, (cost, &bi)) in self.costs.iter().zip(bids.iter()).enumerate() {
            out[i] = cost.conjugate_gradient(bi)?;
        }
        Ok(out)
    }

    /// Infallible variant of [`Self::desired_production`] for the integrator
    /// hot loop, where bid nonnegativity is guaranteed by the projection.
    #[inline]
    pub(crate) fn desired_production_at(&self, bids: &DVector<f64>, out: &mut DVector<f64>) {
        for (i, (cost, &bi)) in self.costs.iter().zip(bids.iter()).enumerate() {
            debug_assert!(bi >= 0.0);
            out[i] = cost.desired_production(bi);
        }
    }

    fn check_len(&self, v: &DVector<f64>) -> Result<(), CostError> {
        if v.len() != self.costs.len() {
            Err(CostError::LengthMismatch {
                got: v.len(),
                expected: self.costs.len(),
            })
        } else {
            Ok(())
        }
    }
}
