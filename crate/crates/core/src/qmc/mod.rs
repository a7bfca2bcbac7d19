//! Driving uniforms for the path simulator.

mod bridge;
mod budget;
mod normal;
mod sobol;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use bridge::{IncrementBuilder, PathConstruction};
pub use budget::{plan_budget, DimensionBudget};
pub use normal::{inverse_cdf, to_gaussians, try_inverse_cdf};
pub use sobol::{DirectionNumbers, Sobol, DIRECTIONS_ENV};

use crate::error::{config, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PointKind {
    Sobol,
    Pseudo,
}

impl std::str::FromStr for PointKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sobol" => Ok(Self::Sobol),
            "pseudo" | "mc" | "random" => Ok(Self::Pseudo),
            other => Err(config(format!("unknown point-set kind '{other}'"))),
        }
    }
}

impl std::fmt::Display for PointKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Sobol => "sobol",
            Self::Pseudo => "pseudo",
        })
    }
}

/// `paths × dim` matrix of uniforms in `(0, 1)`.
///
/// Row `k` is Sobol' point `skip + k`, or for the pseudo-random kind a
/// ChaCha8 stream keyed by `(seed, k)`. Rows are pure functions of their
/// index, so any subset can be generated independently.
#[derive(Debug, Clone)]
pub struct PointSet {
    pub kind: PointKind,
    pub paths: usize,
    pub dim: usize,
    pub skip: u64,
    pub seed: u64,
    directions: Option<Arc<DirectionNumbers>>,
}

impl PointSet {
    /// Defaults: `skip = 1` (the all-zero Sobol' point is never used), `seed = 0`.
    pub fn new(kind: PointKind, paths: usize, dim: usize) -> Self {
        Self { kind, paths, dim, skip: 1, seed: 0, directions: None }
    }

    pub fn with_skip(mut self, skip: u64) -> Self {
        self.skip = skip;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_directions(mut self, directions: Arc<DirectionNumbers>) -> Self {
        self.directions = Some(directions);
        self
    }

    /// Row generator; fails if the Sobol' table is too small or `skip = 0`.
    pub fn sampler(&self) -> Result<Sampler> {
        match self.kind {
            PointKind::Sobol => {
                if self.skip == 0 {
                    return Err(config("Sobol' point 0 maps to -inf; skip must be at least 1"));
                }
                let directions = match &self.directions {
                    Some(d) => d.clone(),
                    None => DirectionNumbers::from_env_or_embedded()?,
                };
                Ok(Sampler::Sobol { seq: Sobol::new(directions, self.dim)?, skip: self.skip })
            }
            PointKind::Pseudo => Ok(Sampler::Pseudo { dim: self.dim, seed: self.seed }),
        }
    }

    /// The full matrix, row-major.
    pub fn generate(&self) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.paths * self.dim];
        self.sampler()?.fill_rows(0, self.paths, &mut out);
        Ok(out)
    }
}

/// Produces rows of a [`PointSet`].
#[derive(Debug, Clone)]
pub enum Sampler {
    Sobol { seq: Sobol, skip: u64 },
    Pseudo { dim: usize, seed: u64 },
}

impl Sampler {
    pub fn dim(&self) -> usize {
        match self {
            Self::Sobol { seq, .. } => seq.dim(),
            Self::Pseudo { dim, .. } => *dim,
        }
    }

    /// Writes rows `first .. first + count` into `out` (row-major).
    pub fn fill_rows(&self, first: usize, count: usize, out: &mut [f64]) {
        match self {
            Self::Sobol { seq, skip } => seq.fill(skip + first as u64, count, out),
            Self::Pseudo { dim, seed } => {
                for (r, row) in out.chunks_exact_mut(*dim).take(count).enumerate() {
                    let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                    rng.set_stream((first + r) as u64);
                    for u in row {
                        // 53 random bits, offset by half an ulp: strictly inside (0, 1).
                        *u = ((rng.gen::<u64>() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coordinates_are_interior_and_deterministic() {
        for kind in [PointKind::Sobol, PointKind::Pseudo] {
            let ps = PointSet::new(kind, 513, 20).with_seed(7);
            let a = ps.generate().unwrap();
            let b = ps.generate().unwrap();
            assert_eq!(a, b);
            assert!(a.iter().all(|&u| u > 0.0 && u < 1.0));
        }
    }

    #[test]
    fn pseudo_rows_are_independent_of_batching() {
        let s = PointSet::new(PointKind::Pseudo, 10, 5).with_seed(3).sampler().unwrap();
        let mut all = vec![0.0; 50];
        s.fill_rows(0, 10, &mut all);
        let mut tail = vec![0.0; 15];
        s.fill_rows(7, 3, &mut tail);
        assert_eq!(&all[35..], &tail[..]);
        let other = PointSet::new(PointKind::Pseudo, 10, 5).with_seed(4).generate().unwrap();
        assert_ne!(all, other);
    }

    #[test]
    fn zero_skip_is_rejected() {
        assert!(PointSet::new(PointKind::Sobol, 4, 2).with_skip(0).generate().is_err());
    }
}
