//! Parameter set and initial curve shipped for examples, tests and the CLI.

use crate::curve::ForwardCurve;
use crate::error::Result;
use crate::model::{VolSpec, DEFAULT_BENCHMARKS};

/// Nelson-Siegel forward curve: 2.5% short end rising to 4.5%.
pub fn forward_rate(x: f64) -> f64 {
    let tau = 2.0;
    let u = x / tau;
    0.045 - 0.02 * (-u).exp() + 0.01 * u * (-u).exp()
}

pub fn initial_curve(spacing: f64, x_max: f64) -> Result<ForwardCurve> {
    ForwardCurve::from_fn(spacing, x_max, forward_rate)
}

/// Three-factor tanh-type volatility with level, slope and hump loadings.
pub fn vol_spec() -> VolSpec {
    VolSpec::new(
        vec![vec![0.006, 0.0, 0.0], vec![0.008, -0.003, 0.0], vec![0.0, 0.004, -0.0005]],
        0.15,
        vec![40.0, 10.0, 2.0],
        DEFAULT_BENCHMARKS.to_vec(),
        1.0,
        vec![0.1, 0.1, 0.1],
    )
    .expect("demo parameters are valid")
}
