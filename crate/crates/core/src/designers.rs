//! Track designers: a random baseline, a (μ,λ) evolution strategy and a
//! Go-Explore archive search, all driven through one evaluation pipeline.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::closure::close_circuit;
use crate::eval::{accuracy, reward, Scenario, TargetTrace, INFEASIBLE_REWARD};
use crate::knn::KnnModel;
use crate::sim::{simulate_with_schema, FeatureSchema, SimConfig};
use crate::track::{decode, tile_counts, Genome, GridConfig, TileCounts, TileKind, Track};

pub const UNIQUENESS_RETRIES: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum DesignerError {
    #[error("no feasible track found in {0} evaluations")]
    NoFeasibleFound(usize),
    #[error("invalid designer config: {0}")]
    InvalidConfig(String),
}

/// An evaluated genome.
#[derive(Clone, Debug, PartialEq)]
pub struct Individual {
    pub genome: Genome,
    pub fitness: f64,
    /// Percentage; 0 when infeasible.
    pub accuracy: f64,
    pub feasible: bool,
    pub track: Option<Track>,
    pub arousal: Vec<f64>,
}

impl Individual {
    pub fn infeasible(genome: Genome) -> Individual {
        Individual {
            genome,
            fitness: INFEASIBLE_REWARD,
            accuracy: 0.0,
            feasible: false,
            track: None,
            arousal: Vec::new(),
        }
    }

    pub fn counts(&self) -> Option<TileCounts> {
        self.track.as_ref().map(tile_counts)
    }
}

/// Anything that can score a genome.
pub trait Evaluate {
    fn evaluate(&self, genome: &Genome) -> Individual;
}

impl<F: Fn(&Genome) -> Individual> Evaluate for F {
    fn evaluate(&self, genome: &Genome) -> Individual {
        self(genome)
    }
}

/// decode, close, simulate, predict arousal, compare with the target.
#[derive(Clone, Debug)]
pub struct Evaluator {
    pub model: KnnModel,
    pub scenario: Scenario,
    pub grid: GridConfig,
    pub sim: SimConfig,
    pub schema: FeatureSchema,
}

impl Evaluator {
    pub fn new(model: KnnModel, scenario: Scenario) -> Evaluator {
        Evaluator {
            model,
            scenario,
            grid: GridConfig::default(),
            sim: SimConfig::default(),
            schema: FeatureSchema::default(),
        }
    }

    /// Closed track for `genome`, if it is playable.
    pub fn build_track(&self, genome: &Genome) -> Option<Track> {
        decode(genome, &self.grid)
            .and_then(|t| close_circuit(&t))
            .ok()
    }
}

impl Evaluate for Evaluator {
    fn evaluate(&self, genome: &Genome) -> Individual {
        let Some(track) = self.build_track(genome) else {
            return Individual::infeasible(genome.clone());
        };
        let Ok(out) = simulate_with_schema(&track, &self.sim, &self.schema) else {
            return Individual::infeasible(genome.clone());
        };
        let Ok(arousal) = self.model.arousal_trace(&out.trace) else {
            return Individual::infeasible(genome.clone());
        };
        let target = TargetTrace::sample(self.scenario, arousal.len());
        let (Ok(fitness), Ok(acc)) = (
            reward(&arousal, &target.values, true),
            accuracy(&arousal, &target.values),
        ) else {
            return Individual::infeasible(genome.clone());
        };
        Individual {
            genome: genome.clone(),
            fitness,
            accuracy: acc,
            feasible: true,
            track: Some(track),
            arousal,
        }
    }
}

/// Genome space shared by all designers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub genome_length: usize,
    pub kinds: Vec<TileKind>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            genome_length: 10,
            kinds: TileKind::GENOME_KINDS.to_vec(),
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<(), DesignerError> {
        if self.kinds.is_empty() {
            return Err(DesignerError::InvalidConfig(
                "no tile kinds to search".into(),
            ));
        }
        if self.kinds.contains(&TileKind::StartFinish) {
            return Err(DesignerError::InvalidConfig(
                "the start tile cannot appear in genomes".into(),
            ));
        }
        Ok(())
    }

    fn random_kind(&self, rng: &mut ChaCha8Rng) -> TileKind {
        self.kinds[rng.random_range(0..self.kinds.len())]
    }

    fn random_genome(&self, rng: &mut ChaCha8Rng) -> Genome {
        genome(
            (0..self.genome_length)
                .map(|_| self.random_kind(rng))
                .collect(),
        )
    }

    /// Every genome of the configured length, in lexicographic kind order.
    pub fn enumerate(&self) -> Vec<Genome> {
        let mut all = vec![Vec::new()];
        for _ in 0..self.genome_length {
            all = all
                .into_iter()
                .flat_map(|prefix: Vec<TileKind>| {
                    self.kinds.iter().map(move |&k| {
                        let mut g = prefix.clone();
                        g.push(k);
                        g
                    })
                })
                .collect();
        }
        all.into_iter().map(genome).collect()
    }
}

fn genome(kinds: Vec<TileKind>) -> Genome {
    Genome::new(kinds).expect("search spaces exclude the start tile")
}

/// Stable sort by fitness, best first.
fn rank(pop: &mut [Individual]) {
    pop.sort_by(|a, b| b.fitness.total_cmp(&a.fitness));
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomConfig {
    pub budget: usize,
    pub seed: u64,
    /// How many of the best feasible samples to keep.
    pub keep: usize,
}

impl Default for RandomConfig {
    fn default() -> Self {
        RandomConfig {
            budget: 2500,
            seed: 0,
            keep: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RandomOutcome {
    pub best: Individual,
    /// Best feasible samples, best first.
    pub top: Vec<Individual>,
    pub evaluations: usize,
}

/// Best of `budget` uniformly random genomes.
pub fn random_designer(
    config: &RandomConfig,
    space: &SearchSpace,
    eval: &dyn Evaluate,
) -> Result<RandomOutcome, DesignerError> {
    space.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let keep = config.keep.max(1);
    let mut top: Vec<Individual> = Vec::with_capacity(keep + 1);
    for _ in 0..config.budget {
        let ind = eval.evaluate(&space.random_genome(&mut rng));
        if !ind.feasible {
            continue;
        }
        if top.len() == keep && ind.fitness <= top[keep - 1].fitness {
            continue;
        }
        let at = top.partition_point(|t| t.fitness >= ind.fitness);
        top.insert(at, ind);
        top.truncate(keep);
    }
    match top.first() {
        Some(best) => Ok(RandomOutcome {
            best: best.clone(),
            top,
            evaluations: config.budget,
        }),
        None => Err(DesignerError::NoFeasibleFound(config.budget)),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EsConfig {
    pub mu: usize,
    pub lambda: usize,
    pub mutation_rate: f64,
    pub generations: usize,
    pub elitism: bool,
    pub uniqueness: bool,
    pub seed: u64,
}

impl Default for EsConfig {
    fn default() -> Self {
        EsConfig {
            mu: 10,
            lambda: 50,
            mutation_rate: 0.10,
            generations: 50,
            elitism: true,
            uniqueness: true,
            seed: 0,
        }
    }
}

impl EsConfig {
    pub fn validate(&self) -> Result<(), DesignerError> {
        let bad = |m: &str| Err(DesignerError::InvalidConfig(m.into()));
        if self.mu == 0 || self.mu > self.lambda {
            return bad("need 1 <= mu <= lambda");
        }
        if !(0.0..1.0).contains(&self.mutation_rate) {
            return bad("mutation_rate must lie in [0, 1)");
        }
        if self.generations == 0 {
            return bad("generations must be positive");
        }
        Ok(())
    }

    pub fn evaluations(&self) -> usize {
        self.lambda * self.generations
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    /// Best fitness seen so far, elite included.
    pub best: f64,
    /// Mean fitness of this generation's offspring.
    pub mean: f64,
    pub feasible_fraction: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EsOutcome {
    pub elite: Individual,
    pub history: Vec<GenerationStats>,
    /// Last generation's selected parents, best first.
    pub parents: Vec<Individual>,
    pub evaluations: usize,
}

impl EsConfig {
    fn crossover(&self, a: &Genome, b: &Genome, rng: &mut ChaCha8Rng) -> Vec<TileKind> {
        let n = a.len();
        if n < 2 {
            return a.pieces().to_vec();
        }
        let cut = rng.random_range(1..n);
        a.pieces()[..cut]
            .iter()
            .chain(&b.pieces()[cut..])
            .copied()
            .collect()
    }

    fn mutate(&self, kinds: &mut [TileKind], space: &SearchSpace, rng: &mut ChaCha8Rng) {
        if space.kinds.len() < 2 {
            return;
        }
        for k in kinds.iter_mut() {
            if rng.random_bool(self.mutation_rate) {
                let others: Vec<TileKind> =
                    space.kinds.iter().copied().filter(|x| x != k).collect();
                *k = others[rng.random_range(0..others.len())];
            }
        }
    }
}

/// (μ,λ) evolution strategy with one-point crossover, per-gene mutation,
/// offspring uniqueness and an elite carried between generations.
pub fn evolve(
    config: &EsConfig,
    space: &SearchSpace,
    eval: &dyn Evaluate,
) -> Result<EsOutcome, DesignerError> {
    config.validate()?;
    space.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut genomes: Vec<Genome> = Vec::with_capacity(config.lambda);
    while genomes.len() < config.lambda {
        let mut g = space.random_genome(&mut rng);
        if config.uniqueness {
            for _ in 0..UNIQUENESS_RETRIES {
                if !genomes.contains(&g) {
                    break;
                }
                g = space.random_genome(&mut rng);
            }
        }
        genomes.push(g);
    }

    let mut elite: Option<Individual> = None;
    let mut history = Vec::with_capacity(config.generations);
    let mut parents = Vec::new();
    let mut evaluations = 0;
    for generation in 0..config.generations {
        let offspring: Vec<Individual> = genomes.iter().map(|g| eval.evaluate(g)).collect();
        evaluations += offspring.len();
        let mean = offspring.iter().map(|i| i.fitness).sum::<f64>() / offspring.len() as f64;
        let feasible = offspring.iter().filter(|i| i.feasible).count();

        let mut pool: Vec<Individual> = Vec::with_capacity(offspring.len() + 1);
        if config.elitism {
            pool.extend(elite.take());
        }
        pool.extend(offspring);
        rank(&mut pool);
        if config.elitism || elite.is_none() {
            elite = Some(pool[0].clone());
        } else if let Some(e) = &elite {
            if pool[0].fitness > e.fitness {
                elite = Some(pool[0].clone());
            }
        }
        pool.truncate(config.mu);
        parents = pool;

        history.push(GenerationStats {
            generation,
            best: elite.as_ref().map_or(INFEASIBLE_REWARD, |e| e.fitness),
            mean,
            feasible_fraction: feasible as f64 / config.lambda as f64,
        });

        if generation + 1 == config.generations {
            break;
        }
        genomes.clear();
        while genomes.len() < config.lambda {
            let mut child = Vec::new();
            for _ in 0..=UNIQUENESS_RETRIES {
                let a = &parents[rng.random_range(0..parents.len())].genome;
                let b = &parents[rng.random_range(0..parents.len())].genome;
                child = config.crossover(a, b, &mut rng);
                config.mutate(&mut child, space, &mut rng);
                if !config.uniqueness || !genomes.iter().any(|g| g.pieces() == child.as_slice()) {
                    break;
                }
            }
            genomes.push(genome(child));
        }
    }

    Ok(EsOutcome {
        elite: elite.expect("at least one generation ran"),
        history,
        parents,
        evaluations,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellSelection {
    /// Weight each cell by `1 / (1 + visits)`.
    InverseVisits,
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoExploreConfig {
    pub budget: usize,
    /// Action cap; defaults to the genome length.
    pub max_length: usize,
    pub selection: CellSelection,
    pub seed: u64,
}

impl Default for GoExploreConfig {
    fn default() -> Self {
        GoExploreConfig {
            budget: 2500,
            max_length: 10,
            selection: CellSelection::InverseVisits,
            seed: 0,
        }
    }
}

/// Archive entry: the best trajectory found for one tile-count key.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub key: TileCounts,
    pub trajectory: Vec<TileKind>,
    pub reward: f64,
    pub accuracy: f64,
    pub visits: u64,
}

/// Cells in discovery order with a key index.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Archive {
    cells: Vec<Cell>,
    index: HashMap<TileCounts, usize>,
}

impl Archive {
    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn get(&self, key: &TileCounts) -> Option<&Cell> {
        self.index.get(key).map(|&i| &self.cells[i])
    }

    /// Store a new key, or replace a cell whose reward is strictly lower.
    /// Returns whether the archive changed.
    pub fn offer(&mut self, cell: Cell) -> bool {
        match self.index.get(&cell.key) {
            None => {
                self.index.insert(cell.key, self.cells.len());
                self.cells.push(cell);
                true
            }
            Some(&i) if cell.reward > self.cells[i].reward => {
                let visits = self.cells[i].visits;
                self.cells[i] = Cell { visits, ..cell };
                true
            }
            Some(_) => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GoExploreOutcome {
    pub elite: Individual,
    /// False when no full-length cell exists and the elite is shorter.
    pub elite_full_length: bool,
    pub archive: Archive,
    /// Every accepted insert or replacement as `(key, reward)`.
    pub updates: Vec<(TileCounts, f64)>,
    pub evaluations: usize,
}

impl GoExploreOutcome {
    /// Up to `n` full-length cells, best first.
    pub fn best_full_length(&self, n: usize, max_length: usize) -> Vec<&Cell> {
        let mut full: Vec<&Cell> = self
            .archive
            .cells()
            .iter()
            .filter(|c| c.trajectory.len() == max_length)
            .collect();
        full.sort_by(|a, b| b.reward.total_cmp(&a.reward));
        full.truncate(n);
        full
    }
}

fn cell_of(ind: &Individual) -> Option<Cell> {
    Some(Cell {
        key: ind.counts()?,
        trajectory: ind.genome.pieces().to_vec(),
        reward: ind.fitness,
        accuracy: ind.accuracy,
        visits: 0,
    })
}

/// Archive exploration over tile trajectories: sample a cell, replay its
/// trajectory, take one random action, evaluate the closed result.
pub fn go_explore(
    config: &GoExploreConfig,
    space: &SearchSpace,
    eval: &dyn Evaluate,
) -> Result<GoExploreOutcome, DesignerError> {
    space.validate()?;
    if config.budget == 0 {
        return Err(DesignerError::InvalidConfig(
            "budget must be positive".into(),
        ));
    }
    if config.max_length == 0 {
        return Err(DesignerError::InvalidConfig(
            "max_length must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut archive = Archive::default();
    let mut updates = Vec::new();

    let root = eval.evaluate(&genome(Vec::new()));
    let mut evaluations = 1;
    match cell_of(&root) {
        Some(cell) => {
            updates.push((cell.key, cell.reward));
            archive.offer(cell);
        }
        None => return Err(DesignerError::NoFeasibleFound(1)),
    }

    while evaluations < config.budget {
        let eligible: Vec<usize> = (0..archive.len())
            .filter(|&i| archive.cells[i].trajectory.len() < config.max_length)
            .collect();
        if eligible.is_empty() {
            break;
        }
        let chosen = match config.selection {
            CellSelection::Uniform => eligible[rng.random_range(0..eligible.len())],
            CellSelection::InverseVisits => {
                let weights: Vec<f64> = eligible
                    .iter()
                    .map(|&i| 1.0 / (1.0 + archive.cells[i].visits as f64))
                    .collect();
                let mut pick = rng.random::<f64>() * weights.iter().sum::<f64>();
                let mut chosen = *eligible.last().expect("non-empty");
                for (&i, w) in eligible.iter().zip(&weights) {
                    if pick < *w {
                        chosen = i;
                        break;
                    }
                    pick -= w;
                }
                chosen
            }
        };
        let mut trajectory = archive.cells[chosen].trajectory.clone();
        trajectory.push(space.random_kind(&mut rng));
        archive.cells[chosen].visits += 1;

        let ind = eval.evaluate(&genome(trajectory));
        evaluations += 1;
        if let Some(cell) = cell_of(&ind) {
            let entry = (cell.key, cell.reward);
            if archive.offer(cell) {
                updates.push(entry);
            }
        }
    }

    let pick_best = |full: bool| {
        archive
            .cells()
            .iter()
            .filter(|c| !full || c.trajectory.len() == config.max_length)
            .fold(None::<&Cell>, |best, c| match best {
                Some(b) if b.reward >= c.reward => Some(b),
                _ => Some(c),
            })
    };
    let (best, full) = match pick_best(true) {
        Some(c) => (c, true),
        None => (pick_best(false).expect("archive holds the root"), false),
    };
    let elite = eval.evaluate(&genome(best.trajectory.clone()));

    Ok(GoExploreOutcome {
        elite,
        elite_full_length: full,
        archive,
        updates,
        evaluations,
    })
}
