//! Mapping uniforms to Brownian increments.
//!
//! With the Brownian bridge the first coordinate of each factor fixes the
//! terminal value of its Brownian path, the next ones the midpoints, and so
//! on. Low-index coordinates of a Sobol' sequence are the best distributed,
//! so the bridge spends them on the directions carrying most variance, and
//! meshes of different sizes share their coarse path features. The
//! incremental construction maps the coordinates of step `s` to that step's
//! increments.

use std::fmt;
use std::str::FromStr;

use super::normal::try_inverse_cdf;
use crate::error::{config, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum PathConstruction {
    Incremental,
    #[default]
    BrownianBridge,
}

impl fmt::Display for PathConstruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Incremental => "incremental",
            Self::BrownianBridge => "bridge",
        })
    }
}

impl FromStr for PathConstruction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "incremental" | "increments" => Ok(Self::Incremental),
            "bridge" | "brownian_bridge" => Ok(Self::BrownianBridge),
            other => Err(config(format!("unknown path construction '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct BridgeNode {
    point: usize,
    left: usize,
    right: usize,
    left_weight: f64,
    right_weight: f64,
    std_dev: f64,
}

/// Turns the Gaussian block of a path's uniforms into increments
/// `ΔW^j_s`, stored at `s·factors + j`.
#[derive(Debug, Clone)]
pub struct IncrementBuilder {
    construction: PathConstruction,
    steps: usize,
    factors: usize,
    sqrt_dt: f64,
    plan: Vec<BridgeNode>,
}

impl IncrementBuilder {
    pub fn new(construction: PathConstruction, steps: usize, factors: usize, dt: f64) -> Self {
        let plan = match construction {
            PathConstruction::BrownianBridge if steps > 0 => bridge_plan(steps, dt),
            _ => Vec::new(),
        };
        Self { construction, steps, factors, sqrt_dt: dt.sqrt(), plan }
    }

    pub fn construction(&self) -> PathConstruction {
        self.construction
    }

    /// Writes `steps·factors` increments into `out`; `path` is scratch of
    /// length `steps + 1`.
    pub fn build(&self, uniforms: &[f64], out: &mut [f64], path: &mut [f64]) -> Result<()> {
        let n = self.steps * self.factors;
        match self.construction {
            PathConstruction::Incremental => {
                for (o, &u) in out[..n].iter_mut().zip(uniforms) {
                    *o = try_inverse_cdf(u)? * self.sqrt_dt;
                }
            }
            PathConstruction::BrownianBridge => {
                let d = self.factors;
                for j in 0..d {
                    path[0] = 0.0;
                    for (k, node) in self.plan.iter().enumerate() {
                        let z = try_inverse_cdf(uniforms[k * d + j])?;
                        path[node.point] =
                            node.left_weight * path[node.left] + node.right_weight * path[node.right] + node.std_dev * z;
                    }
                    for s in 0..self.steps {
                        out[s * d + j] = path[s + 1] - path[s];
                    }
                }
            }
        }
        Ok(())
    }
}

/// Terminal point first, then midpoints breadth first.
fn bridge_plan(steps: usize, dt: f64) -> Vec<BridgeNode> {
    let mut plan = vec![BridgeNode {
        point: steps,
        left: 0,
        right: 0,
        left_weight: 0.0,
        right_weight: 0.0,
        std_dev: (steps as f64 * dt).sqrt(),
    }];
    let mut queue = std::collections::VecDeque::from([(0usize, steps)]);
    while let Some((l, r)) = queue.pop_front() {
        if r - l < 2 {
            continue;
        }
        let m = (l + r) / 2;
        let (a, b) = ((m - l) as f64, (r - m) as f64);
        plan.push(BridgeNode {
            point: m,
            left: l,
            right: r,
            left_weight: b / (a + b),
            right_weight: a / (a + b),
            std_dev: (a * b / (a + b) * dt).sqrt(),
        });
        queue.push_back((l, m));
        queue.push_back((m, r));
    }
    debug_assert_eq!(plan.len(), steps);
    plan
}
