//! Real-coded genetic algorithm on a box.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Bounds;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaSettings {
    pub population: usize,
    pub generations: usize,
    pub tournament: usize,
    pub crossover_rate: f64,
    /// Mutation standard deviation as a fraction of each coordinate's box width.
    pub mutation_scale: f64,
    /// Probability of mutating each coordinate; `None` means `1 / dimension`.
    pub mutation_rate: Option<f64>,
    pub seed: u64,
}

impl Default for GaSettings {
    fn default() -> Self {
        Self {
            population: 64,
            generations: 30,
            tournament: 4,
            crossover_rate: 0.7,
            mutation_scale: 0.1,
            mutation_rate: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaResult {
    pub best: Vec<f64>,
    pub best_value: f64,
    /// Best objective value after each generation (entry 0: initial population).
    pub history: Vec<f64>,
    pub evaluations: usize,
}

/// Minimizes `f` over `bounds`.
///
/// The first member of the initial population is `start`; the others are
/// drawn uniformly from the box. Each generation keeps the best member
/// (elitism of one) and fills the rest with children of tournament-selected
/// parents: uniform crossover, then Gaussian mutation, then projection onto
/// the box. Non-finite objective values rank last. The run is a pure
/// function of `settings.seed`.
pub fn genetic_search<F>(f: F, bounds: &Bounds, start: &[f64], settings: &GaSettings) -> GaResult
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let dim = bounds.len();
    assert_eq!(start.len(), dim);
    let size = settings.population.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut population: Vec<Vec<f64>> = vec![bounds.project(start)];
    while population.len() < size {
        population.push((0..dim).map(|k| rng.gen_range(bounds.lower[k]..=bounds.upper[k])).collect());
    }
    let score = |x: f64| if x.is_nan() { f64::INFINITY } else { x };
    let evaluate = |pop: &[Vec<f64>]| -> Vec<f64> { pop.par_iter().map(|x| score(f(x))).collect() };
    let mut fitness = evaluate(&population);
    let mut evaluations = size;
    let best_of = |fit: &[f64]| -> usize {
        // First index among equals, so ties never depend on thread timing.
        fit.iter().enumerate().fold(0, |b, (i, &x)| if x < fit[b] { i } else { b })
    };
    let mut history = vec![fitness[best_of(&fitness)]];
    let rate = settings.mutation_rate.unwrap_or(1.0 / dim.max(1) as f64);
    for _ in 0..settings.generations {
        let elite = best_of(&fitness);
        let mut next = vec![population[elite].clone()];
        while next.len() < size {
            let a = tournament(&fitness, settings.tournament, &mut rng);
            let b = tournament(&fitness, settings.tournament, &mut rng);
            let mut child = population[a].clone();
            if rng.gen::<f64>() < settings.crossover_rate {
                for (k, c) in child.iter_mut().enumerate() {
                    if rng.gen::<bool>() {
                        *c = population[b][k];
                    }
                }
            }
            for (k, c) in child.iter_mut().enumerate() {
                if rng.gen::<f64>() < rate {
                    let z: f64 = rng.sample(StandardNormal);
                    *c += z * settings.mutation_scale * bounds.width(k);
                }
            }
            next.push(bounds.project(&child));
        }
        // The elite keeps its known fitness.
        let mut next_fitness = vec![fitness[elite]];
        next_fitness.extend(evaluate(&next[1..]));
        evaluations += next.len() - 1;
        population = next;
        fitness = next_fitness;
        history.push(fitness[best_of(&fitness)]);
    }
    let best = best_of(&fitness);
    GaResult { best: population[best].clone(), best_value: fitness[best], history, evaluations }
}

fn tournament(fitness: &[f64], size: usize, rng: &mut ChaCha8Rng) -> usize {
    let mut best = rng.gen_range(0..fitness.len());
    for _ in 1..size.max(1) {
        let c = rng.gen_range(0..fitness.len());
        if fitness[c] < fitness[best] {
            best = c;
        }
    }
    best
}
