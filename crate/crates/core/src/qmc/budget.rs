//! Integration-dimension accounting and the accuracy/work planner.

use crate::splitting::Scheme;

/// Number of uniforms consumed by one path of a scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DimensionBudget {
    pub scheme: Scheme,
    pub steps: usize,
    pub factors: usize,
    /// Whether SWSS picks its ordering with one extra uniform per path.
    pub randomized_swss: bool,
    pub dimension: usize,
}

impl DimensionBudget {
    pub fn new(scheme: Scheme, steps: usize, factors: usize, randomized_swss: bool) -> Self {
        let dimension = match scheme {
            Scheme::NinomiyaVictoir => steps * (factors + 1),
            Scheme::Swss if randomized_swss => steps * factors + 1,
            _ => steps * factors,
        };
        Self { scheme, steps, factors, randomized_swss, dimension }
    }

    /// Coordinates `0 .. steps·factors` drive the Brownian increments.
    pub fn gaussian_dims(&self) -> usize {
        self.steps * self.factors
    }

    /// Coordinate of the Ninomiya-Victoir ordering coin of `step`; these
    /// follow the Gaussian block.
    pub fn coin_index(&self, step: usize) -> Option<usize> {
        (self.scheme == Scheme::NinomiyaVictoir).then(|| self.gaussian_dims() + step)
    }

    /// Coordinate choosing the ordering of a randomized SWSS path (the last one).
    pub fn ordering_index(&self) -> Option<usize> {
        (self.scheme == Scheme::Swss && self.randomized_swss).then(|| self.dimension - 1)
    }
}

/// Smallest `(n, K)` with `c_disc / nˢ ≤ ε/2` and `c_int / K ≤ ε/2`.
///
/// The integration error model is the quasi-Monte Carlo rate `O(1/K)`.
pub fn plan_budget(epsilon: f64, order: f64, c_disc: f64, c_int: f64) -> (u64, u64) {
    assert!(epsilon > 0.0 && order >= 1.0 && c_disc > 0.0 && c_int > 0.0);
    let half = 0.5 * epsilon;
    let n = smallest_satisfying((2.0 * c_disc / epsilon).powf(1.0 / order), |n| {
        c_disc / n.powf(order) <= half * (1.0 + 1e-12)
    });
    let k = smallest_satisfying(2.0 * c_int / epsilon, |k| c_int / k <= half * (1.0 + 1e-12));
    (n, k)
}

fn smallest_satisfying(estimate: f64, ok: impl Fn(f64) -> bool) -> u64 {
    let mut n = (estimate.ceil() as u64).max(1);
    while n > 1 && ok((n - 1) as f64) {
        n -= 1;
    }
    while !ok(n as f64) {
        n += 1;
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planner_examples() {
        assert_eq!(plan_budget(1e-2, 2.0, 1.0, 1.0), (15, 200));
        assert_eq!(plan_budget(0.5, 1.0, 1.0, 1.0), (4, 4));
        let (_, k1) = plan_budget(1e-2, 2.0, 1.0, 3.0);
        let (_, k2) = plan_budget(5e-3, 2.0, 1.0, 3.0);
        assert_eq!(k2, 2 * k1);
    }

    #[test]
    fn dimensions_per_scheme() {
        let d = |s, r| DimensionBudget::new(s, 12, 3, r).dimension;
        assert_eq!(d(Scheme::NinomiyaVictoir, false), 48);
        assert_eq!(d(Scheme::LieTrotterForward, false), 36);
        assert_eq!(d(Scheme::LieTrotterBackward, false), 36);
        assert_eq!(d(Scheme::Swss, false), 36);
        assert_eq!(d(Scheme::Swss, true), 37);
        assert_eq!(d(Scheme::EulerMaruyama, false), 36);
        let nv = DimensionBudget::new(Scheme::NinomiyaVictoir, 12, 3, false);
        assert_eq!((nv.coin_index(0), nv.coin_index(11)), (Some(36), Some(47)));
        assert_eq!(DimensionBudget::new(Scheme::Swss, 12, 3, true).ordering_index(), Some(36));
        assert_eq!(DimensionBudget::new(Scheme::Swss, 12, 3, false).ordering_index(), None);
    }
}
