//! Weak approximation of the Heath-Jarrow-Morton equation with stochastic
//! volatility by operator splitting, driven by quasi-Monte Carlo.
//!
//! The crate is organised bottom-up:
//!
//! - [`curve`]: piecewise affine forward curves, the model state and the
//!   exact shift/decay flow.
//! - [`qmc`]: Sobol' and pseudo-random point sets, Gaussian increments and
//!   the accuracy/work budget planner.
//! - [`model`]: the tanh-type volatility structure, HJM drift and the
//!   Stratonovich-corrected drift field.
//! - [`splitting`]: split flows, Lie-Trotter, Ninomiya-Victoir and
//!   symmetrically weighted sequential splitting, plus Richardson
//!   extrapolation.
//! - [`pricing`]: bond, caplet and swaption payoffs, QMC estimators and
//!   Black-76 implied volatilities.
//! - [`calibration`]: genetic search followed by Levenberg-Marquardt.

pub mod calibration;
pub mod curve;
pub mod demo;
pub mod error;
pub mod model;
pub mod pricing;
pub mod qmc;
pub mod splitting;

mod serde_str;
mod sum;

pub use curve::{CurveView, ForwardCurve, ModelState, WeightedNorm};
pub use error::{Error, Result};
pub use model::{VectorFieldValue, VolSpec};
pub use pricing::{Estimate, Payoff, PayoffKind};
pub use qmc::{DimensionBudget, PointKind, PointSet};
pub use splitting::{Scheme, SimConfig, Simulator};
