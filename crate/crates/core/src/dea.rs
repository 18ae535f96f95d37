//! Differential evolution with an elite archive over a guarded unit box.
//!
//! Mutation is `x + l (e - x) + l (x_p1 - x_p2)` with `e` drawn uniformly from
//! the archive (the top fraction of the current population), `l ~ U(0, 1]` and
//! a crossover probability drawn from `[0.1, 0.9]`, both per individual and
//! generation. Out-of-box genes are clamped. Selection is greedy one-to-one and
//! a trial replaces its parent on ties.
//!
//! Every random draw for individual `i` of generation `g` comes from its own
//! substream, so the result is identical for any thread count.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, substream_path, Domain};

#[derive(Debug, Clone, PartialEq)]
pub struct DeaParams {
    pub population_size: usize,
    pub max_generations: usize,
    /// Per-individual crossover probability is drawn uniformly from this range.
    pub crossover_range: (f64, f64),
    pub archive_size: usize,
    pub guard: f64,
    pub seed: u64,
    /// When set, individual 0 of the initial population has every gene at this value.
    pub pinned_value: Option<f64>,
    /// Per-generation progress on stderr.
    pub progress: bool,
}

impl Default for DeaParams {
    fn default() -> Self {
        Self::with_population(40, 300, 0)
    }
}

impl DeaParams {
    /// Defaults for a given population size; the archive keeps the top 10%.
    pub fn with_population(population_size: usize, max_generations: usize, seed: u64) -> Self {
        Self {
            population_size,
            max_generations,
            crossover_range: (0.1, 0.9),
            archive_size: population_size.div_ceil(10).max(1),
            guard: crate::sysmodel::DEFAULT_GUARD,
            seed,
            pinned_value: Some(0.5),
            progress: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.population_size < 4 {
            return Err(Error::Contract(format!(
                "population size {} < 4 leaves no three distinct donors",
                self.population_size
            )));
        }
        if self.archive_size == 0 || self.archive_size > self.population_size {
            return Err(Error::Contract(format!("archive size {} out of range", self.archive_size)));
        }
        let (lo, hi) = self.crossover_range;
        if !(0.0..=1.0).contains(&lo) || !(lo..=1.0).contains(&hi) {
            return Err(Error::Contract(format!("crossover range ({lo}, {hi}) not inside [0, 1]")));
        }
        if !(0.0..0.5).contains(&self.guard) {
            return Err(Error::Contract(format!("guard {} not in [0, 0.5)", self.guard)));
        }
        Ok(())
    }

    fn bounds(&self) -> (f64, f64) {
        (self.guard, 1.0 - self.guard)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub genes: Vec<f64>,
    pub fitness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationStats {
    pub best: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeaResult {
    pub best: Individual,
    /// Entry 0 is the initial population, then one entry per generation.
    pub history: Vec<GenerationStats>,
}

/// Maps objective failures that mark a candidate as unusable to `-inf`;
/// anything else aborts the run.
fn fitness<F>(objective: &F, genes: &[f64]) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    match objective(genes) {
        Ok(v) if v.is_nan() => Ok(f64::NEG_INFINITY),
        Ok(v) => Ok(v),
        Err(Error::InfeasibleBudget { .. }) | Err(Error::Degenerate(_)) => Ok(f64::NEG_INFINITY),
        Err(e) => Err(e),
    }
}

pub fn initialize<F>(params: &DeaParams, dim: usize, objective: &F) -> Result<Vec<Individual>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    params.validate()?;
    let (lo, hi) = params.bounds();
    (0..params.population_size)
        .into_par_iter()
        .map(|i| {
            let genes = match params.pinned_value {
                Some(v) if i == 0 => vec![v.clamp(lo, hi); dim],
                _ => {
                    let mut rng = stream_rng(params.seed, Domain::DeaInit, i as u64);
                    (0..dim).map(|_| rng.random_range(lo..=hi)).collect()
                }
            };
            let fitness = fitness(objective, &genes)?;
            Ok(Individual { genes, fitness })
        })
        .collect()
}

/// Mutant for `target`; `scale` is the per-individual factor in (0, 1].
pub fn mutate<R: Rng + ?Sized>(
    population: &[Individual],
    archive: &[Individual],
    target: usize,
    scale: f64,
    bounds: (f64, f64),
    rng: &mut R,
) -> Result<Vec<f64>> {
    if population.len() < 4 {
        return Err(Error::Contract(format!("population of {} is too small to mutate", population.len())));
    }
    if archive.is_empty() {
        return Err(Error::Contract("empty elite archive".into()));
    }
    let elite = &archive[rng.random_range(0..archive.len())].genes;
    // two distinct donors, both different from the target
    let picks = sample(rng, population.len() - 1, 2);
    let skip = |i: usize| if i >= target { i + 1 } else { i };
    let p1 = &population[skip(picks.index(0))].genes;
    let p2 = &population[skip(picks.index(1))].genes;
    let x = &population[target].genes;
    Ok((0..x.len())
        .map(|a| (x[a] + scale * (elite[a] - x[a]) + scale * (p1[a] - p2[a])).clamp(bounds.0, bounds.1))
        .collect())
}

/// Element `a` comes from the mutant when a fresh uniform draw is `<= cr`.
pub fn crossover<R: Rng + ?Sized>(parent: &[f64], mutant: &[f64], cr: f64, rng: &mut R) -> Vec<f64> {
    parent
        .iter()
        .zip(mutant)
        .map(|(&p, &m)| if rng.random::<f64>() <= cr { m } else { p })
        .collect()
}

/// Greedy one-to-one selection; ties keep the trial.
pub fn select(parent: Individual, trial: Individual) -> Individual {
    if trial.fitness >= parent.fitness {
        trial
    } else {
        parent
    }
}

fn stats(population: &[Individual]) -> GenerationStats {
    let best = population.iter().map(|i| i.fitness).fold(f64::NEG_INFINITY, f64::max);
    let finite: Vec<f64> = population.iter().map(|i| i.fitness).filter(|f| f.is_finite()).collect();
    let mean = if finite.is_empty() {
        f64::NEG_INFINITY
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    };
    GenerationStats { best, mean }
}

fn best_of(population: &[Individual]) -> &Individual {
    // first maximal element, so ties resolve by index
    population
        .iter()
        .fold(&population[0], |acc, i| if i.fitness > acc.fitness { i } else { acc })
}

/// Maximizes `objective` over `[guard, 1 - guard]^dim`.
pub fn optimize<F>(dim: usize, objective: F, params: &DeaParams) -> Result<DeaResult>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if dim == 0 {
        return Err(Error::Contract("zero-dimensional search space".into()));
    }
    let bounds = params.bounds();
    let mut population = initialize(params, dim, &objective)?;
    let mut history = vec![stats(&population)];
    if params.progress {
        eprintln!("gen 0: best {:.6} mean {:.6}", history[0].best, history[0].mean);
    }

    for generation in 0..params.max_generations {
        let mut order: Vec<usize> = (0..population.len()).collect();
        order.sort_by(|&a, &b| population[b].fitness.total_cmp(&population[a].fitness).then(a.cmp(&b)));
        let archive: Vec<Individual> =
            order.iter().take(params.archive_size).map(|&i| population[i].clone()).collect();

        let next = (0..population.len())
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(substream_path(
                    params.seed,
                    Domain::DeaStep,
                    &[generation as u64, i as u64],
                ));
                let cr = rng.random_range(params.crossover_range.0..=params.crossover_range.1);
                let scale = 1.0 - rng.random::<f64>();
                let mutant = mutate(&population, &archive, i, scale, bounds, &mut rng)?;
                let genes = crossover(&population[i].genes, &mutant, cr, &mut rng);
                let fitness = fitness(&objective, &genes)?;
                Ok(select(population[i].clone(), Individual { genes, fitness }))
            })
            .collect::<Result<Vec<_>>>()?;
        population = next;
        let s = stats(&population);
        if params.progress {
            eprintln!("gen {}: best {:.6} mean {:.6}", generation + 1, s.best, s.mean);
        }
        history.push(s);
    }

    Ok(DeaResult { best: best_of(&population).clone(), history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sphere(x: &[f64]) -> Result<f64> {
        Ok(-x.iter().map(|v| (v - 0.3) * (v - 0.3)).sum::<f64>())
    }

    fn population(values: &[f64]) -> Vec<Individual> {
        values.iter().map(|&v| Individual { genes: vec![v; 3], fitness: -v }).collect()
    }

    #[test]
    fn initial_population_shape() {
        let params = DeaParams::with_population(12, 0, 3);
        let pop = initialize(&params, 5, &sphere).unwrap();
        assert_eq!(pop.len(), 12);
        assert_eq!(pop[0].genes, vec![0.5; 5]);
        assert!(pop.iter().flat_map(|i| &i.genes).all(|&g| (1e-3..=1.0 - 1e-3).contains(&g)));
        let other = initialize(&DeaParams { seed: 4, ..params }, 5, &sphere).unwrap();
        assert_ne!(pop[1].genes, other[1].genes);
    }

    #[test]
    fn small_population_is_rejected() {
        let params = DeaParams::with_population(3, 1, 0);
        assert!(matches!(optimize(2, sphere, &params), Err(Error::Contract(_))));
    }

    #[test]
    fn mutation_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pop = population(&[0.4, 0.4, 0.4, 0.4]);
        let m = mutate(&pop, &pop[..1], 2, 0.7, (1e-3, 1.0 - 1e-3), &mut rng).unwrap();
        assert_eq!(m, vec![0.4; 3]);
        let pop = population(&[0.2, 0.5, 0.9, 0.1, 0.6]);
        let m = mutate(&pop, &pop[2..3], 0, 1e-12, (1e-3, 1.0 - 1e-3), &mut rng).unwrap();
        assert!(m.iter().all(|v| (v - 0.2).abs() < 1e-11));
        assert!(mutate(&pop[..3], &pop[..1], 0, 0.5, (0.0, 1.0), &mut rng).is_err());
    }

    #[test]
    fn crossover_limits_and_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let parent = vec![0.0; 20];
        let mutant = vec![1.0; 20];
        assert_eq!(crossover(&parent, &mutant, 1.0, &mut rng), mutant);
        assert_eq!(crossover(&parent, &mutant, 0.0, &mut rng), parent);
        let trials = 10_000;
        let taken: f64 =
            (0..trials).map(|_| crossover(&parent, &mutant, 0.5, &mut rng).iter().sum::<f64>()).sum();
        let frac = taken / (20 * trials) as f64;
        assert!((frac - 0.5).abs() < 0.02, "fraction {frac}");
    }

    #[test]
    fn selection_rule() {
        let a = Individual { genes: vec![0.1], fitness: 1.0 };
        let b = Individual { genes: vec![0.2], fitness: 1.0 };
        assert_eq!(select(a.clone(), b.clone()), b);
        let worse = Individual { genes: vec![0.3], fitness: 0.5 };
        assert_eq!(select(a.clone(), worse), a);
    }

    #[test]
    fn infeasible_candidates_are_never_selected() {
        let objective = |x: &[f64]| -> Result<f64> {
            if x[0] > 0.6 {
                Err(Error::InfeasibleBudget { rru: 1, p_sp: 1.0, p_rru: 0.5 })
            } else {
                Ok(x[0])
            }
        };
        let res = optimize(2, objective, &DeaParams::with_population(10, 30, 5)).unwrap();
        assert!(res.best.genes[0] <= 0.6);
        assert!(res.best.fitness > 0.55);
    }

    #[test]
    fn other_objective_errors_abort() {
        let objective = |_: &[f64]| -> Result<f64> { Err(Error::Domain("boom".into())) };
        assert!(matches!(
            optimize(2, objective, &DeaParams::with_population(6, 3, 0)),
            Err(Error::Domain(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn history_is_monotone_and_genes_feasible(seed in 0u64..1000, dim in 1usize..6) {
            let params = DeaParams { pinned_value: None, ..DeaParams::with_population(8, 15, seed) };
            let objective = |x: &[f64]| -> Result<f64> {
                Ok(x.iter().enumerate().map(|(i, v)| (v * (i + 3) as f64).sin()).sum())
            };
            let res = optimize(dim, objective, &params).unwrap();
            prop_assert!(res.history.windows(2).all(|w| w[1].best >= w[0].best));
            prop_assert!(res.best.genes.iter().all(|&g| (1e-3..=1.0 - 1e-3).contains(&g)));
            prop_assert_eq!(res.history.len(), 16);
        }
    }
}
