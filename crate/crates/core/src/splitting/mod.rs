//! Splitting schemes for the HJM equation.
//!
//! The generator is split into the shift/decay part `A` (solved exactly on
//! the grid), the Stratonovich drift `V_0` and the diffusion fields
//! `V_1 … V_d`, each of which is integrated by one classical Runge-Kutta
//! step. Schemes compose these flows over each time step.
//!
//! Ordering convention: a semigroup product `P^a P^b f` evaluates
//! `f(X^b(X^a(x)))`, so the flow of the leftmost operator acts on the state
//! first. Lie-Trotter forward therefore applies the shift, then the drift,
//! then `V_1, …, V_d`; backward ordering reverses that sequence.
//!
//! Two implementations are provided. [`flows`] works on full node vectors
//! and mirrors the definitions one to one. [`Simulator`] exploits that every
//! field depends on the curve only through the benchmark yields
//! `∫_0^{t_j} h`, integrates the flows in that reduced space and touches the
//! node vector once per step. Both produce the same states up to rounding.

mod extrapolate;
pub mod flows;
mod kernel;

use std::fmt;
use std::str::FromStr;

pub use extrapolate::{extrapolate, richardson_table};
pub use kernel::{Branch, PathWorkspace, Simulator, StateView};

use crate::error::{config, Error, Result};
use crate::qmc::{DimensionBudget, IncrementBuilder, PathConstruction, PointKind, PointSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    EulerMaruyama,
    LieTrotterForward,
    LieTrotterBackward,
    NinomiyaVictoir,
    /// Symmetrically weighted sequential splitting: the average of the
    /// forward and backward Lie-Trotter chains.
    Swss,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::EulerMaruyama,
        Scheme::LieTrotterForward,
        Scheme::LieTrotterBackward,
        Scheme::NinomiyaVictoir,
        Scheme::Swss,
    ];

    /// Formal weak order.
    pub fn weak_order(self) -> u32 {
        match self {
            Scheme::NinomiyaVictoir | Scheme::Swss => 2,
            _ => 1,
        }
    }

    /// Grid cells per time step. Ninomiya-Victoir shifts by half steps.
    pub fn cells_per_step(self) -> usize {
        match self {
            Scheme::NinomiyaVictoir => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::EulerMaruyama => "EULER_MARUYAMA",
            Scheme::LieTrotterForward => "LT_FWD",
            Scheme::LieTrotterBackward => "LT_BWD",
            Scheme::NinomiyaVictoir => "NV",
            Scheme::Swss => "SWSS",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_uppercase().replace('-', "_");
        Ok(match norm.as_str() {
            "EULER_MARUYAMA" | "EULER" | "EM" => Scheme::EulerMaruyama,
            "LT_FWD" | "LTFWD" => Scheme::LieTrotterForward,
            "LT_BWD" | "LTBWD" => Scheme::LieTrotterBackward,
            "NV" | "NINOMIYA_VICTOIR" => Scheme::NinomiyaVictoir,
            "SWSS" => Scheme::Swss,
            _ => return Err(config(format!("unknown scheme '{s}'"))),
        })
    }
}

/// Simulation settings: time mesh, scheme and driving point set.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Simulation horizon in years.
    pub horizon: f64,
    pub steps_per_year: usize,
    pub scheme: Scheme,
    /// SWSS only: pick one ordering per path with an extra uniform instead
    /// of averaging both orderings on the same increments.
    pub randomized_swss: bool,
    /// Richardson levels applied on top of the scheme (0 = none).
    pub extrapolation_levels: usize,
    pub points: PointKind,
    /// How the Gaussian coordinates become Brownian increments.
    pub construction: PathConstruction,
    pub paths: usize,
    pub skip: u64,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(horizon: f64, steps_per_year: usize, scheme: Scheme, paths: usize) -> Self {
        Self {
            horizon,
            steps_per_year,
            scheme,
            randomized_swss: false,
            extrapolation_levels: 0,
            points: PointKind::Sobol,
            construction: PathConstruction::default(),
            paths,
            skip: 1,
            seed: 0,
        }
    }

    pub fn with_points(mut self, kind: PointKind) -> Self {
        self.points = kind;
        self
    }

    pub fn with_construction(mut self, construction: PathConstruction) -> Self {
        self.construction = construction;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_skip(mut self, skip: u64) -> Self {
        self.skip = skip;
        self
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.steps_per_year as f64
    }

    /// Number of time steps `n = T · steps_per_year`.
    pub fn steps(&self) -> Result<usize> {
        if self.steps_per_year == 0 {
            return Err(config("steps_per_year must be positive"));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(config(format!("invalid horizon {}", self.horizon)));
        }
        let n = self.horizon * self.steps_per_year as f64;
        let rounded = n.round();
        if (n - rounded).abs() > 1e-9 * rounded.max(1.0) {
            return Err(config(format!(
                "horizon {} is not a whole number of steps at {} steps per year",
                self.horizon, self.steps_per_year
            )));
        }
        Ok(rounded as usize)
    }

    /// Grid spacing of the curve, aligned with the (half) time step.
    pub fn grid_spacing(&self) -> f64 {
        self.dt() / self.scheme.cells_per_step() as f64
    }

    pub fn budget(&self, factors: usize) -> Result<DimensionBudget> {
        Ok(DimensionBudget::new(self.scheme, self.steps()?, factors, self.randomized_swss))
    }

    pub fn increment_builder(&self, factors: usize) -> Result<IncrementBuilder> {
        Ok(IncrementBuilder::new(self.construction, self.steps()?, factors, self.dt()))
    }

    pub fn point_set(&self, dim: usize) -> PointSet {
        PointSet::new(self.points, self.paths, dim).with_skip(self.skip).with_seed(self.seed)
    }

    /// Same settings with the step count multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        Self { steps_per_year: self.steps_per_year * factor, ..self.clone() }
    }
}
