//! Backtracking search algorithm: a population-based, derivative-free
//! minimizer over a box.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub population: usize,
    pub iterations: usize,
    pub mix_rate: f64,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            population: 50,
            iterations: 500,
            mix_rate: 1.0,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 4 {
            return Err(Error::Config(format!(
                "population must be at least 4, got {}",
                self.population
            )));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.mix_rate) {
            return Err(Error::Config("mix_rate must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    pub params: Vec<f64>,
    pub value: f64,
    /// Best objective after each iteration.
    pub history: Vec<f64>,
}

fn check_bounds(bounds: &[(f64, f64)]) -> Result<()> {
    if bounds.is_empty() {
        return Err(Error::InvalidInput("search box has no dimensions".into()));
    }
    for (i, &(lo, hi)) in bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidInput(format!("bad bounds [{lo}, {hi}] for dimension {i}")));
        }
    }
    Ok(())
}

fn uniform_point<R: Rng>(bounds: &[(f64, f64)], rng: &mut R) -> Vec<f64> {
    bounds.iter().map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>()).collect()
}

/// Non-finite objective values rank last.
fn score(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Minimizes `objective` over the box `bounds`.
pub fn bsa_minimize(
    objective: impl Fn(&[f64]) -> f64,
    bounds: &[(f64, f64)],
    cfg: &SearchConfig,
) -> Result<SearchResult> {
    cfg.validate()?;
    check_bounds(bounds)?;
    let (n, d) = (cfg.population, bounds.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut pop: Vec<Vec<f64>> = (0..n).map(|_| uniform_point(bounds, &mut rng)).collect();
    let mut fit: Vec<f64> = pop.iter().map(|p| score(objective(p))).collect();
    let mut hist: Vec<Vec<f64>> = (0..n).map(|_| uniform_point(bounds, &mut rng)).collect();

    let best_index = |fit: &[f64]| (0..fit.len()).min_by(|&a, &b| fit[a].total_cmp(&fit[b])).expect("population");
    let mut b = best_index(&fit);
    let (mut best, mut best_value) = (pop[b].clone(), fit[b]);
    let mut history = Vec::with_capacity(cfg.iterations);
    let mut dims: Vec<usize> = (0..d).collect();

    for _ in 0..cfg.iterations {
        // selection I: occasionally refresh the historical population, then shuffle it
        if rng.random::<f64>() < rng.random::<f64>() {
            hist.clone_from(&pop);
        }
        hist.shuffle(&mut rng);

        let f = 3.0 * rng.sample::<f64, _>(StandardNormal);
        let mut map = vec![vec![false; d]; n];
        if rng.random::<f64>() < rng.random::<f64>() {
            for row in map.iter_mut() {
                dims.shuffle(&mut rng);
                let k = ((cfg.mix_rate * rng.random::<f64>() * d as f64).ceil() as usize).min(d);
                for &j in &dims[..k] {
                    row[j] = true;
                }
            }
        } else {
            for row in map.iter_mut() {
                row[rng.random_range(0..d)] = true;
            }
        }

        for i in 0..n {
            let mut trial = pop[i].clone();
            for j in 0..d {
                if map[i][j] {
                    trial[j] += f * (hist[i][j] - pop[i][j]);
                }
                let (lo, hi) = bounds[j];
                if !(lo..=hi).contains(&trial[j]) {
                    trial[j] = lo + (hi - lo) * rng.random::<f64>();
                }
            }
            // selection II: greedy
            let v = score(objective(&trial));
            if v < fit[i] {
                pop[i] = trial;
                fit[i] = v;
            }
        }

        b = best_index(&fit);
        if fit[b] < best_value {
            best_value = fit[b];
            best.clone_from(&pop[b]);
        }
        history.push(best_value);
    }
    Ok(SearchResult {
        params: best,
        value: best_value,
        history,
    })
}
