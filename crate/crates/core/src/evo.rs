//! Speciated genetic algorithm for GRN genomes: small-network
//! initialization, speciation by genome distance, tag-aligned crossover,
//! structural/parametric mutation, and fitness defined as post-training MSE.
//!
//! Evolution propagates the UNTRAINED genome: fitness is measured after the
//! per-individual learning pass, but the learned parameters are discarded
//! when reproducing. Selection therefore acts on learnability rather than
//! writing learned values back into the gene pool.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::data::Dataset;
use crate::genome::{Genome, Protein, ProteinKind};
use crate::optim::{self, AdamHyper, Bounds};

#[derive(Debug, Error, PartialEq)]
pub enum EvoError {
    #[error("genomes have different input/output counts: ({0},{1}) vs ({2},{3})")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("invalid evolution config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Optim(#[from] optim::OptimError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvoConfig {
    pub population_size: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub p_add: f64,
    pub p_modify: f64,
    pub p_delete: f64,
    /// Learning epochs inside the fitness evaluation (0, 1, or 10 in the
    /// experiment arms).
    pub fitness_epochs: usize,
    pub generations: usize,
    pub speciation_threshold: f64,
    pub tournament_size: usize,
    pub elitism: usize,
    pub max_regulatory: usize,
    pub rng_seed: u64,
}

impl Default for EvoConfig {
    fn default() -> Self {
        EvoConfig {
            population_size: 50,
            crossover_rate: 0.25,
            mutation_rate: 0.75,
            p_add: 0.5,
            p_modify: 0.25,
            p_delete: 0.25,
            fitness_epochs: 0,
            generations: 50,
            speciation_threshold: 0.15,
            tournament_size: 3,
            elitism: 1,
            max_regulatory: 50,
            rng_seed: 0,
        }
    }
}

impl EvoConfig {
    pub fn validate(&self) -> Result<(), EvoError> {
        let bad = |msg: String| Err(EvoError::BadConfig(msg));
        if self.population_size < 2 {
            return bad(format!("population_size must be >= 2, got {}", self.population_size));
        }
        if ((self.p_add + self.p_modify + self.p_delete) - 1.0).abs() > 1e-9 {
            return bad("p_add + p_modify + p_delete must equal 1".into());
        }
        if ((self.crossover_rate + self.mutation_rate) - 1.0).abs() > 1e-9 {
            return bad("crossover_rate + mutation_rate must equal 1".into());
        }
        if self.tournament_size == 0 {
            return bad("tournament_size must be >= 1".into());
        }
        if self.elitism >= self.population_size {
            return bad("elitism must be smaller than population_size".into());
        }
        if self.speciation_threshold <= 0.0 {
            return bad("speciation_threshold must be > 0".into());
        }
        Ok(())
    }
}

/// Learning machinery shared by fitness evaluation and post-training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnSettings {
    pub hyper: AdamHyper,
    pub bounds: Bounds,
    pub batch_size: usize,
}

impl Default for LearnSettings {
    fn default() -> Self {
        LearnSettings { hyper: AdamHyper::default(), bounds: Bounds::default(), batch_size: 32 }
    }
}

#[derive(Debug, Clone)]
pub struct Individual {
    pub genome: Genome,
    /// Train MSE before any learning.
    pub pre_mse: Option<f64>,
    /// Train MSE after `fitness_epochs` of learning; lower is better.
    pub fitness: Option<f64>,
    /// Result of the fitness-training pass (discarded by reproduction).
    pub trained: Option<Genome>,
}

impl Individual {
    pub fn fresh(genome: Genome) -> Self {
        Individual { genome, pre_mse: None, fitness: None, trained: None }
    }
}

#[derive(Debug, Clone)]
pub struct Species {
    pub representative: Genome,
    /// Indices into the population.
    pub members: Vec<usize>,
    /// Generations without best-fitness improvement. Tracked but carries no
    /// extinction policy.
    pub stagnation: usize,
    best_seen: f64,
}

/// Uniform-random genome within the bounds.
pub fn random_genome<R: Rng>(
    rng: &mut R,
    n_in: usize,
    n_out: usize,
    n_reg: usize,
    bounds: &Bounds,
) -> Genome {
    let mut proteins = Vec::with_capacity(n_in + n_out + n_reg);
    let tag = |rng: &mut R| rng.gen_range(0.0..=1.0);
    for _ in 0..n_in {
        proteins.push(Protein::new(ProteinKind::Input, tag(rng), tag(rng), tag(rng)).unwrap());
    }
    for _ in 0..n_out {
        proteins.push(Protein::new(ProteinKind::Output, tag(rng), tag(rng), tag(rng)).unwrap());
    }
    for _ in 0..n_reg {
        proteins.push(Protein::new(ProteinKind::Regulatory, tag(rng), tag(rng), tag(rng)).unwrap());
    }
    let beta = rng.gen_range(bounds.beta_lo..=bounds.beta_hi);
    let delta = rng.gen_range(bounds.delta_lo..=bounds.delta_hi);
    Genome::new(proteins, beta, delta).unwrap()
}

/// Small-network initialization: every genome starts with exactly one
/// regulatory protein.
pub fn init_population<R: Rng>(
    cfg: &EvoConfig,
    n_in: usize,
    n_out: usize,
    bounds: &Bounds,
    rng: &mut R,
) -> Vec<Individual> {
    (0..cfg.population_size)
        .map(|_| Individual::fresh(random_genome(rng, n_in, n_out, 1, bounds)))
        .collect()
}

/// Mean absolute tag difference, in `[0,1]`.
pub fn protein_distance(p: &Protein, q: &Protein) -> f64 {
    ((p.id - q.id).abs() + (p.enh - q.enh).abs() + (p.inh - q.inh).abs()) / 3.0
}

fn regulatory<'a>(g: &'a Genome) -> &'a [Protein] {
    &g.proteins()[g.n_in() + g.n_out()..]
}

/// Greedy one-to-one alignment of two regulatory protein lists by ascending
/// protein distance. Returns aligned index pairs and the unmatched indices
/// on each side.
fn align_regulatory(a: &[Protein], b: &[Protein]) -> (Vec<(usize, usize)>, Vec<usize>, Vec<usize>) {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(a.len() * b.len());
    for (i, p) in a.iter().enumerate() {
        for (j, q) in b.iter().enumerate() {
            pairs.push((protein_distance(p, q), i, j));
        }
    }
    pairs.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut aligned = Vec::new();
    for (_, i, j) in pairs {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            aligned.push((i, j));
        }
    }
    let rest_a = (0..a.len()).filter(|&i| !used_a[i]).collect();
    let rest_b = (0..b.len()).filter(|&j| !used_b[j]).collect();
    (aligned, rest_a, rest_b)
}

/// Speciation metric: mean aligned regulatory distance, plus a size-mismatch
/// term, plus normalized beta/delta disagreement.
pub fn genome_distance(a: &Genome, b: &Genome, bounds: &Bounds) -> Result<f64, EvoError> {
    if a.n_in() != b.n_in() || a.n_out() != b.n_out() {
        return Err(EvoError::ShapeMismatch(a.n_in(), a.n_out(), b.n_in(), b.n_out()));
    }
    let ra = regulatory(a);
    let rb = regulatory(b);
    let (aligned, _, _) = align_regulatory(ra, rb);
    let tag_term = if aligned.is_empty() {
        0.0
    } else {
        aligned
            .iter()
            .map(|&(i, j)| protein_distance(&ra[i], &rb[j]))
            .sum::<f64>()
            / aligned.len() as f64
    };
    let size_term = 0.5 * (ra.len() as f64 - rb.len() as f64).abs()
        / (ra.len().max(rb.len()).max(1)) as f64;
    let param_term =
        ((a.beta - b.beta).abs() + (a.delta - b.delta).abs()) / (2.0 * (bounds.beta_hi - bounds.beta_lo));
    Ok(tag_term + size_term + param_term)
}

/// Assigns each individual to the first species (representatives carried
/// over) within the threshold, founding new species as needed. Empty species
/// are dropped.
pub fn speciate(
    population: &[Individual],
    threshold: f64,
    previous: &[Species],
    bounds: &Bounds,
) -> Result<Vec<Species>, EvoError> {
    let mut species: Vec<Species> = previous
        .iter()
        .map(|s| Species {
            representative: s.representative.clone(),
            members: Vec::new(),
            stagnation: s.stagnation,
            best_seen: s.best_seen,
        })
        .collect();
    for (idx, ind) in population.iter().enumerate() {
        let mut placed = false;
        for s in species.iter_mut() {
            if genome_distance(&ind.genome, &s.representative, bounds)? <= threshold {
                s.members.push(idx);
                placed = true;
                break;
            }
        }
        if !placed {
            species.push(Species {
                representative: ind.genome.clone(),
                members: vec![idx],
                stagnation: 0,
                best_seen: f64::INFINITY,
            });
        }
    }
    species.retain(|s| !s.members.is_empty());
    // stagnation bookkeeping
    for s in species.iter_mut() {
        let best = s
            .members
            .iter()
            .filter_map(|&i| population[i].fitness)
            .fold(f64::INFINITY, f64::min);
        if best < s.best_seen {
            s.best_seen = best;
            s.stagnation = 0;
        } else {
            s.stagnation += 1;
        }
    }
    Ok(species)
}

/// Tag-aligned crossover. Input/output proteins are inherited positionally
/// from a random parent per slot; aligned regulatory pairs contribute one
/// parent's protein each; surplus regulatory proteins come along with
/// probability one half, up to `max_regulatory`.
pub fn crossover<R: Rng>(
    a: &Genome,
    b: &Genome,
    max_regulatory: usize,
    rng: &mut R,
) -> Result<Genome, EvoError> {
    if a.n_in() != b.n_in() || a.n_out() != b.n_out() {
        return Err(EvoError::ShapeMismatch(a.n_in(), a.n_out(), b.n_in(), b.n_out()));
    }
    let n_io = a.n_in() + a.n_out();
    let mut proteins = Vec::with_capacity(n_io + a.n_reg().max(b.n_reg()));
    for slot in 0..n_io {
        let from_a: bool = rng.gen();
        proteins.push(if from_a { a.proteins()[slot] } else { b.proteins()[slot] });
    }
    let ra = regulatory(a);
    let rb = regulatory(b);
    let (aligned, rest_a, rest_b) = align_regulatory(ra, rb);
    for &(i, j) in &aligned {
        let from_a: bool = rng.gen();
        proteins.push(if from_a { ra[i] } else { rb[j] });
    }
    let mut n_reg = aligned.len();
    for &i in &rest_a {
        if n_reg < max_regulatory && rng.gen::<bool>() {
            proteins.push(ra[i]);
            n_reg += 1;
        }
    }
    for &j in &rest_b {
        if n_reg < max_regulatory && rng.gen::<bool>() {
            proteins.push(rb[j]);
            n_reg += 1;
        }
    }
    let beta = if rng.gen() { a.beta } else { b.beta };
    let delta = if rng.gen() { a.delta } else { b.delta };
    Ok(Genome::new(proteins, beta, delta).unwrap())
}

/// One structural draw: add a random regulatory protein, modify one random
/// scalar, or delete a random regulatory protein. Capped operations are
/// no-ops.
pub fn mutate<R: Rng>(g: &Genome, cfg: &EvoConfig, bounds: &Bounds, rng: &mut R) -> Genome {
    let mut out = g.clone();
    let draw: f64 = rng.gen();
    if draw < cfg.p_add {
        if out.n_reg() < cfg.max_regulatory {
            out.push_regulatory(
                Protein::new(ProteinKind::Regulatory, rng.gen(), rng.gen(), rng.gen()).unwrap(),
            );
        }
    } else if draw < cfg.p_add + cfg.p_modify {
        let slot = rng.gen_range(0..out.n_params());
        let n = out.n();
        let value = if slot < 3 * n {
            rng.gen_range(0.0..=1.0)
        } else if slot == 3 * n {
            rng.gen_range(bounds.beta_lo..=bounds.beta_hi)
        } else {
            rng.gen_range(bounds.delta_lo..=bounds.delta_hi)
        };
        out.set_param(slot, value);
    } else if out.n_reg() > 0 {
        let k = rng.gen_range(0..out.n_reg());
        out.remove_regulatory(k);
    }
    out
}

/// Per-generation summary, including the (untrained) best genome.
#[derive(Debug, Clone)]
pub struct GenRecord {
    pub generation: usize,
    pub best_pre_mse: f64,
    pub mean_pre_mse: f64,
    pub best_post_mse: f64,
    pub mean_post_mse: f64,
    pub species_count: usize,
    pub best_n_reg: usize,
    pub best_genome: Genome,
}

fn mix_seed(seed: u64, generation: usize, index: usize) -> u64 {
    // splitmix64 finalizer over the combined words
    let mut z = seed
        .wrapping_add((generation as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((index as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn tournament<R: Rng>(
    members: &[usize],
    population: &[Individual],
    size: usize,
    rng: &mut R,
) -> usize {
    let mut best = members[rng.gen_range(0..members.len())];
    for _ in 1..size {
        let cand = members[rng.gen_range(0..members.len())];
        if population[cand].fitness.unwrap() < population[best].fitness.unwrap() {
            best = cand;
        }
    }
    best
}

/// Runs the full evolutionary loop. `on_generation` fires once per
/// generation after fitness evaluation.
pub fn evolve(
    cfg: &EvoConfig,
    train_set: &Dataset,
    steps: usize,
    learn: &LearnSettings,
    mut on_generation: impl FnMut(&GenRecord),
) -> Result<(Vec<GenRecord>, Individual), EvoError> {
    cfg.validate()?;
    if train_set.rows.is_empty() {
        return Err(EvoError::Optim(optim::OptimError::EmptyDataset));
    }
    let n_in = train_set.n_features;
    let n_out = train_set.n_targets;
    let bounds = &learn.bounds;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut population = init_population(cfg, n_in, n_out, bounds, &mut rng);
    let mut species: Vec<Species> = Vec::new();
    let mut history = Vec::with_capacity(cfg.generations);

    for generation in 0..cfg.generations {
        // Fitness: train MSE after fitness_epochs of learning on a derived
        // per-individual seed. Parallel across individuals, deterministic.
        population
            .par_iter_mut()
            .enumerate()
            .filter(|(_, ind)| ind.fitness.is_none())
            .try_for_each(|(idx, ind)| -> Result<(), EvoError> {
                let pre = optim::evaluate(&ind.genome, train_set, steps)?;
                let (post, trained) = if cfg.fitness_epochs > 0 {
                    let seed = mix_seed(cfg.rng_seed, generation, idx);
                    let (trained, _) = optim::train(
                        &ind.genome,
                        train_set,
                        cfg.fitness_epochs,
                        learn.batch_size,
                        steps,
                        learn.hyper,
                        bounds,
                        seed,
                    )?;
                    (optim::evaluate(&trained, train_set, steps)?, Some(trained))
                } else {
                    (pre, None)
                };
                ind.pre_mse = Some(pre);
                ind.fitness = Some(post);
                ind.trained = trained;
                Ok(())
            })?;

        species = speciate(&population, cfg.speciation_threshold, &species, bounds)?;

        let pop_n = population.len() as f64;
        let best_idx = (0..population.len())
            .min_by(|&a, &b| {
                population[a]
                    .fitness
                    .unwrap()
                    .partial_cmp(&population[b].fitness.unwrap())
                    .unwrap()
            })
            .unwrap();
        let record = GenRecord {
            generation,
            best_pre_mse: population[best_idx].pre_mse.unwrap(),
            mean_pre_mse: population.iter().map(|i| i.pre_mse.unwrap()).sum::<f64>() / pop_n,
            best_post_mse: population[best_idx].fitness.unwrap(),
            mean_post_mse: population.iter().map(|i| i.fitness.unwrap()).sum::<f64>() / pop_n,
            species_count: species.len(),
            best_n_reg: population[best_idx].genome.n_reg(),
            best_genome: population[best_idx].genome.clone(),
        };
        on_generation(&record);
        history.push(record);

        if generation + 1 == cfg.generations {
            break;
        }

        // Offspring allocation proportional to inverse-rank fitness share.
        let mut order: Vec<usize> = (0..population.len()).collect();
        order.sort_by(|&a, &b| {
            population[a]
                .fitness
                .unwrap()
                .partial_cmp(&population[b].fitness.unwrap())
                .unwrap()
        });
        let mut weight = vec![0.0; population.len()];
        for (rank, &idx) in order.iter().enumerate() {
            weight[idx] = (population.len() - rank) as f64;
        }
        let scores: Vec<f64> = species
            .iter()
            .map(|s| s.members.iter().map(|&i| weight[i]).sum())
            .collect();
        let total: f64 = scores.iter().sum();
        let target = cfg.population_size - cfg.elitism;
        let mut quotas: Vec<usize> = scores
            .iter()
            .map(|s| ((s / total) * target as f64).floor() as usize)
            .collect();
        let mut remainder: Vec<(f64, usize)> = scores
            .iter()
            .enumerate()
            .map(|(i, s)| ((s / total) * target as f64, i))
            .map(|(q, i)| (q - q.floor(), i))
            .collect();
        remainder.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let mut assigned: usize = quotas.iter().sum();
        for &(_, i) in remainder.iter().cycle() {
            if assigned >= target {
                break;
            }
            quotas[i] += 1;
            assigned += 1;
        }

        let mut next = Vec::with_capacity(cfg.population_size);
        for _ in 0..cfg.elitism {
            next.push(population[best_idx].clone());
        }
        for (s, &quota) in species.iter().zip(&quotas) {
            for _ in 0..quota {
                let parent = tournament(&s.members, &population, cfg.tournament_size, &mut rng);
                let child = if rng.gen::<f64>() < cfg.crossover_rate && s.members.len() >= 2 {
                    let partner = tournament(&s.members, &population, cfg.tournament_size, &mut rng);
                    crossover(
                        &population[parent].genome,
                        &population[partner].genome,
                        cfg.max_regulatory,
                        &mut rng,
                    )?
                } else {
                    population[parent].genome.clone()
                };
                let child = if rng.gen::<f64>() < cfg.mutation_rate {
                    mutate(&child, cfg, bounds, &mut rng)
                } else {
                    child
                };
                next.push(Individual::fresh(child));
            }
        }
        debug_assert_eq!(next.len(), cfg.population_size);
        population = next;
    }

    let best_idx = (0..population.len())
        .min_by(|&a, &b| {
            population[a]
                .fitness
                .unwrap()
                .partial_cmp(&population[b].fitness.unwrap())
                .unwrap()
        })
        .unwrap();
    let best = population[best_idx].clone();
    Ok((history, best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ColumnNorm, Sample};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bounds() -> Bounds {
        Bounds::default()
    }

    fn toy_dataset(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Sample> = (0..n)
            .map(|_| {
                let f: Vec<f64> = vec![rng.gen(), rng.gen()];
                let t = vec![(f[0] + f[1]) / 2.0];
                Sample { features: f, target: t }
            })
            .collect();
        Dataset {
            rows,
            n_features: 2,
            n_targets: 1,
            norms: vec![ColumnNorm { min: 0.0, max: 1.0 }; 3],
            target_columns: vec![2],
        }
    }

    #[test]
    fn init_population_is_small_and_seeded() {
        let cfg = EvoConfig { population_size: 10, ..Default::default() };
        let mut r1 = ChaCha8Rng::seed_from_u64(1);
        let mut r2 = ChaCha8Rng::seed_from_u64(1);
        let p1 = init_population(&cfg, 3, 1, &bounds(), &mut r1);
        let p2 = init_population(&cfg, 3, 1, &bounds(), &mut r2);
        assert_eq!(p1.len(), 10);
        for (a, b) in p1.iter().zip(&p2) {
            assert_eq!(a.genome, b.genome);
            assert_eq!(a.genome.n_reg(), 1);
            assert_eq!(a.genome.n_in(), 3);
        }
        let mut r3 = ChaCha8Rng::seed_from_u64(2);
        let p3 = init_population(&cfg, 3, 1, &bounds(), &mut r3);
        assert_ne!(p1[0].genome, p3[0].genome);
    }

    #[test]
    fn protein_distance_basics() {
        let p = Protein::new(ProteinKind::Regulatory, 0.0, 0.0, 0.0).unwrap();
        let q = Protein::new(ProteinKind::Regulatory, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(protein_distance(&p, &p), 0.0);
        assert_eq!(protein_distance(&p, &q), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let a = Protein::new(ProteinKind::Regulatory, rng.gen(), rng.gen(), rng.gen()).unwrap();
            let b = Protein::new(ProteinKind::Regulatory, rng.gen(), rng.gen(), rng.gen()).unwrap();
            assert_eq!(protein_distance(&a, &b), protein_distance(&b, &a));
        }
    }

    #[test]
    fn genome_distance_identity_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let a = random_genome(&mut rng, 2, 1, 3, &bounds());
            let b = random_genome(&mut rng, 2, 1, 4, &bounds());
            assert_eq!(genome_distance(&a, &a, &bounds()).unwrap(), 0.0);
            let d1 = genome_distance(&a, &b, &bounds()).unwrap();
            let d2 = genome_distance(&b, &a, &bounds()).unwrap();
            assert!((d1 - d2).abs() <= 1e-12);
        }
    }

    #[test]
    fn genome_distance_size_term_hand_value() {
        // 2 regulatory vs 4, identical aligned tags and beta/delta:
        // 0 + 0.5 * (2/4) + 0 = 0.25
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_genome(&mut rng, 1, 1, 2, &bounds());
        let mut b = a.clone();
        b.push_regulatory(regulatory(&a)[0]);
        b.push_regulatory(regulatory(&a)[1]);
        let d = genome_distance(&a, &b, &bounds()).unwrap();
        assert!((d - 0.25).abs() <= 1e-12, "got {d}");
    }

    #[test]
    fn genome_distance_rejects_shape_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_genome(&mut rng, 2, 1, 1, &bounds());
        let b = random_genome(&mut rng, 3, 1, 1, &bounds());
        assert!(matches!(
            genome_distance(&a, &b, &bounds()),
            Err(EvoError::ShapeMismatch(..))
        ));
    }

    #[test]
    fn speciation_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = EvoConfig { population_size: 8, ..Default::default() };
        let pop = init_population(&cfg, 2, 1, &bounds(), &mut rng);
        // threshold above the metric's reachable max -> one species
        let one = speciate(&pop, 1.5, &[], &bounds()).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].members.len(), 8);
        // near-zero threshold with distinct genomes -> one species each
        let many = speciate(&pop, 1e-12, &[], &bounds()).unwrap();
        assert_eq!(many.len(), 8);
        // every individual in exactly one species
        let mut seen: Vec<usize> = many.iter().flat_map(|s| s.members.clone()).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn self_crossover_is_identity_up_to_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_genome(&mut rng, 2, 1, 3, &bounds());
        let child = crossover(&a, &a, 50, &mut rng).unwrap();
        assert_eq!(child.n_reg(), a.n_reg());
        assert_eq!(child.beta, a.beta);
        assert_eq!(child.delta, a.delta);
        let mut child_tags: Vec<[u64; 3]> = child
            .proteins()
            .iter()
            .map(|p| [p.id.to_bits(), p.enh.to_bits(), p.inh.to_bits()])
            .collect();
        let mut parent_tags: Vec<[u64; 3]> = a
            .proteins()
            .iter()
            .map(|p| [p.id.to_bits(), p.enh.to_bits(), p.inh.to_bits()])
            .collect();
        child_tags.sort_unstable();
        parent_tags.sort_unstable();
        assert_eq!(child_tags, parent_tags);
    }

    #[test]
    fn crossover_children_take_tags_from_parents() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let na = rng.gen_range(0..5);
            let nb = rng.gen_range(0..5);
            let a = random_genome(&mut rng, 2, 1, na, &bounds());
            let b = random_genome(&mut rng, 2, 1, nb, &bounds());
            let child = crossover(&a, &b, 50, &mut rng).unwrap();
            let lo = a.n_reg().min(b.n_reg());
            let hi = a.n_reg() + b.n_reg() - lo;
            assert!(child.n_reg() >= lo && child.n_reg() <= hi);
            for p in child.proteins() {
                let found = a
                    .proteins()
                    .iter()
                    .chain(b.proteins())
                    .any(|q| q.id == p.id && q.enh == p.enh && q.inh == p.inh);
                assert!(found, "child protein not present in either parent");
            }
        }
    }

    #[test]
    fn mutation_respects_caps_and_changes_one_scalar() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cfg = EvoConfig::default();

        // at cap, add is a no-op
        let capped = random_genome(&mut rng, 1, 1, cfg.max_regulatory, &bounds());
        let add_only = EvoConfig { p_add: 1.0, p_modify: 0.0, p_delete: 0.0, ..cfg.clone() };
        assert_eq!(mutate(&capped, &add_only, &bounds(), &mut rng), capped);

        // no regulatory, delete is a no-op
        let bare = random_genome(&mut rng, 1, 1, 0, &bounds());
        let del_only = EvoConfig { p_add: 0.0, p_modify: 0.0, p_delete: 1.0, ..cfg.clone() };
        assert_eq!(mutate(&bare, &del_only, &bounds(), &mut rng), bare);

        // modify changes at most one scalar
        let mod_only = EvoConfig { p_add: 0.0, p_modify: 1.0, p_delete: 0.0, ..cfg };
        let g = random_genome(&mut rng, 2, 1, 3, &bounds());
        for _ in 0..1000 {
            let m = mutate(&g, &mod_only, &bounds(), &mut rng);
            let diffs = (0..g.n_params())
                .filter(|&k| g.param(k) != m.param(k))
                .count();
            assert!(diffs <= 1, "modify changed {diffs} scalars");
        }
    }

    #[test]
    fn config_validation_catches_bad_probabilities() {
        let cfg = EvoConfig { p_add: 0.9, ..Default::default() };
        assert!(matches!(cfg.validate(), Err(EvoError::BadConfig(_))));
        let cfg = EvoConfig { population_size: 1, ..Default::default() };
        assert!(matches!(cfg.validate(), Err(EvoError::BadConfig(_))));
        assert!(EvoConfig::default().validate().is_ok());
    }

    #[test]
    fn evolve_zero_epoch_arm_has_identical_pre_post() {
        let cfg = EvoConfig {
            population_size: 8,
            generations: 4,
            fitness_epochs: 0,
            rng_seed: 11,
            ..Default::default()
        };
        let data = toy_dataset(16, 1);
        let (history, _) = evolve(&cfg, &data, 3, &LearnSettings::default(), |_| {}).unwrap();
        assert_eq!(history.len(), 4);
        for rec in &history {
            assert_eq!(rec.best_pre_mse, rec.best_post_mse);
            assert_eq!(rec.mean_pre_mse, rec.mean_post_mse);
        }
    }

    #[test]
    fn evolve_best_fitness_is_non_increasing() {
        let cfg = EvoConfig {
            population_size: 12,
            generations: 6,
            rng_seed: 3,
            ..Default::default()
        };
        let data = toy_dataset(20, 2);
        let (history, _) = evolve(&cfg, &data, 3, &LearnSettings::default(), |_| {}).unwrap();
        for w in history.windows(2) {
            assert!(w[1].best_post_mse <= w[0].best_post_mse + 1e-15);
        }
    }

    #[test]
    fn evolve_same_seed_same_history() {
        let cfg = EvoConfig {
            population_size: 8,
            generations: 3,
            fitness_epochs: 1,
            rng_seed: 17,
            ..Default::default()
        };
        let data = toy_dataset(16, 5);
        let learn = LearnSettings { batch_size: 8, ..Default::default() };
        let (h1, b1) = evolve(&cfg, &data, 3, &learn, |_| {}).unwrap();
        let (h2, b2) = evolve(&cfg, &data, 3, &learn, |_| {}).unwrap();
        assert_eq!(b1.genome, b2.genome);
        for (a, b) in h1.iter().zip(&h2) {
            assert_eq!(a.best_post_mse, b.best_post_mse);
            assert_eq!(a.mean_pre_mse, b.mean_pre_mse);
            assert_eq!(a.best_genome, b.best_genome);
        }
    }

    #[test]
    fn evolve_keeps_population_invariants() {
        let cfg = EvoConfig {
            population_size: 10,
            generations: 5,
            rng_seed: 23,
            max_regulatory: 6,
            ..Default::default()
        };
        let data = toy_dataset(16, 9);
        let learn = LearnSettings::default();
        let (history, best) = evolve(&cfg, &data, 3, &learn, |_| {}).unwrap();
        assert_eq!(history.len(), 5);
        assert!(best.fitness.unwrap().is_finite());
        for rec in &history {
            assert!(rec.best_genome.n_reg() <= 6);
            assert!(rec.best_genome.beta >= 0.05 && rec.best_genome.beta <= 2.0);
        }
    }
}
