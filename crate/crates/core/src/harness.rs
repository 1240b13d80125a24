//! Experiment orchestration: designers × clusters × scenarios × seeds,
//! aggregated into a results table with confidence intervals.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, KvDoc};
use crate::corpus::{
    cluster_annotators, read_corpus, synthesize_corpus, Archetype, ArousalRule, ArousalShape,
    ClusterOptions, Corpus, CorpusError, SynthSpec, PREFERENCE_THRESHOLD,
};
use crate::designers::{
    evolve, go_explore, random_designer, Cell, CellSelection, DesignerError, EsConfig, Evaluate,
    Evaluator, GenerationStats, GoExploreConfig, Individual, RandomConfig, SearchSpace,
};
use crate::eval::{confidence_interval_95, intervals_overlap, Scenario};
use crate::knn::{KnnError, KnnModel, ModelSummary, DEFAULT_K};
use crate::sim::SimConfig;
use crate::track::{tile_counts, Genome, GridConfig, GridPos, Heading, TileKind};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] KnnError),
    #[error(transparent)]
    Designer(#[from] DesignerError),
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

fn io_err(path: &Path, e: impl fmt::Display) -> HarnessError {
    HarnessError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignerKind {
    Random,
    Edpcg,
    Edrl,
}

impl DesignerKind {
    pub const ALL: [DesignerKind; 3] = [
        DesignerKind::Random,
        DesignerKind::Edpcg,
        DesignerKind::Edrl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DesignerKind::Random => "random",
            DesignerKind::Edpcg => "edpcg",
            DesignerKind::Edrl => "edrl",
        }
    }
}

impl fmt::Display for DesignerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DesignerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "random" => Ok(DesignerKind::Random),
            "edpcg" | "es" => Ok(DesignerKind::Edpcg),
            "edrl" | "go_explore" | "go-explore" => Ok(DesignerKind::Edrl),
            other => Err(format!("unknown designer `{other}` (random, edpcg, edrl)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterSelection {
    All,
    Id(usize),
}

impl ClusterSelection {
    pub fn filter(self) -> Option<usize> {
        match self {
            ClusterSelection::All => None,
            ClusterSelection::Id(c) => Some(c),
        }
    }
}

impl fmt::Display for ClusterSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClusterSelection::All => f.write_str("all"),
            ClusterSelection::Id(c) => write!(f, "{c}"),
        }
    }
}

impl FromStr for ClusterSelection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("all") {
            return Ok(ClusterSelection::All);
        }
        s.parse()
            .map(ClusterSelection::Id)
            .map_err(|_| format!("cluster must be `all` or an id, got `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusSource {
    Synthetic(SynthSpec),
    Path(PathBuf),
}

impl CorpusSource {
    /// `synthetic:<preset>` or a corpus directory / manifest path.
    pub fn parse(value: &str, base: &Path) -> Result<CorpusSource, String> {
        match value.strip_prefix("synthetic:") {
            Some(preset) => synth_preset(preset).map(CorpusSource::Synthetic),
            None => {
                let p = PathBuf::from(value);
                Ok(CorpusSource::Path(if p.is_absolute() {
                    p
                } else {
                    base.join(p)
                }))
            }
        }
    }

    pub fn load(&self) -> Result<Corpus, CorpusError> {
        match self {
            CorpusSource::Synthetic(spec) => synthesize_corpus(spec),
            CorpusSource::Path(p) => read_corpus(p),
        }
    }
}

pub fn synth_preset(name: &str) -> Result<SynthSpec, String> {
    match name.trim() {
        "event_coupled" => Ok(SynthSpec::event_coupled()),
        "three_archetypes" => Ok(SynthSpec::three_archetypes()),
        other => Err(format!(
            "unknown synthetic preset `{other}` (event_coupled, three_archetypes)"
        )),
    }
}

/// Everything one experiment grid needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub corpus: CorpusSource,
    pub designers: Vec<DesignerKind>,
    pub scenarios: Vec<Scenario>,
    pub clusters: Vec<ClusterSelection>,
    pub seeds: Vec<u64>,
    pub knn_k: usize,
    pub threshold: f64,
    pub clustering: ClusterOptions,
    pub space: SearchSpace,
    pub grid: GridConfig,
    pub sim: SimConfig,
    pub es: EsConfig,
    pub go_explore: GoExploreConfig,
    pub random: RandomConfig,
    /// Final candidates ranked by accuracy for the reported individual.
    pub candidates: usize,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            corpus: CorpusSource::Synthetic(SynthSpec::event_coupled()),
            designers: DesignerKind::ALL.to_vec(),
            scenarios: vec![
                Scenario::Maximise,
                Scenario::Minimise,
                Scenario::Fluctuating,
            ],
            clusters: vec![ClusterSelection::All],
            seeds: (0..10).collect(),
            knn_k: DEFAULT_K,
            threshold: PREFERENCE_THRESHOLD,
            clustering: ClusterOptions::default(),
            space: SearchSpace::default(),
            grid: GridConfig::default(),
            sim: SimConfig::default(),
            es: EsConfig::default(),
            go_explore: GoExploreConfig::default(),
            random: RandomConfig::default(),
            candidates: 10,
            output: None,
        }
    }
}

/// Read the `sim.*` block into `sim`.
pub fn read_sim(doc: &KvDoc, sim: &mut SimConfig) -> Result<(), ConfigError> {
    doc.set("sim.timestep_hz", &mut sim.timestep_hz)?;
    doc.set("sim.max_laps", &mut sim.max_laps)?;
    doc.set("sim.max_seconds", &mut sim.max_seconds)?;
    doc.set("sim.window_seconds", &mut sim.window_seconds)?;
    doc.set("sim.max_speed", &mut sim.max_speed)?;
    doc.set("sim.acceleration", &mut sim.acceleration)?;
    doc.set(
        "sim.max_turn_rate_deg_per_s",
        &mut sim.max_turn_rate_deg_per_s,
    )?;
    doc.set(
        "sim.off_track_speed_factor",
        &mut sim.off_track_speed_factor,
    )?;
    doc.set("sim.loop_speed_factor", &mut sim.loop_speed_factor)?;
    doc.set(
        "sim.collision_penalty_seconds",
        &mut sim.collision_penalty_seconds,
    )?;
    doc.set("sim.collision_radius", &mut sim.collision_radius)?;
    doc.set("sim.checkpoint_radius", &mut sim.checkpoint_radius)?;
    doc.set(
        "sim.evaluator_speed_multiplier",
        &mut sim.evaluator_speed_multiplier,
    )?;
    if let Some(m) = doc.list("sim.opponent_speed_multipliers")? {
        sim.opponent_speed_multipliers = m;
    }
    doc.set("sim.checkpoint_increment", &mut sim.checkpoint_increment)?;
    doc.set("sim.steering_noise_deg", &mut sim.steering_noise_deg)?;
    doc.set("sim.seed", &mut sim.seed)?;
    if doc.has("sim.timestep_hz") || doc.has("sim.max_speed") || doc.has("sim.max_laps") {
        sim.validate().map_err(|e| doc.bad("sim.timestep_hz", e))?;
    }
    Ok(())
}

/// Read the `grid.*` block into `grid`.
pub fn read_grid(doc: &KvDoc, grid: &mut GridConfig) -> Result<(), ConfigError> {
    doc.set("grid.width", &mut grid.width)?;
    doc.set("grid.height", &mut grid.height)?;
    let x = doc.get_or("grid.origin_x", grid.origin.x)?;
    let y = doc.get_or("grid.origin_y", grid.origin.y)?;
    grid.origin = GridPos::new(x, y);
    doc.set::<Heading>("grid.initial_heading", &mut grid.initial_heading)?;
    doc.set("grid.underpass", &mut grid.underpass)?;
    grid.validate().map_err(|e| doc.bad("grid.width", e))
}

fn read_space(doc: &KvDoc, space: &mut SearchSpace) -> Result<(), ConfigError> {
    doc.set("genome_length", &mut space.genome_length)?;
    if let Some(kinds) = doc.list::<TileKind>("tile_kinds")? {
        space.kinds = kinds;
    }
    space.validate().map_err(|e| doc.bad("tile_kinds", e))
}

fn read_corpus_source(doc: &KvDoc) -> Result<Option<CorpusSource>, ConfigError> {
    let base = Path::new(doc.file())
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let source = match doc.raw("corpus") {
        None => return Ok(None),
        Some(v) => CorpusSource::parse(v, &base).map_err(|e| doc.bad("corpus", e))?,
    };
    Ok(Some(match source {
        CorpusSource::Synthetic(mut spec) => {
            doc.set("synth.seed", &mut spec.seed)?;
            doc.set("synth.noise", &mut spec.noise)?;
            CorpusSource::Synthetic(spec)
        }
        other => other,
    }))
}

impl ExperimentConfig {
    pub fn from_doc(doc: &KvDoc) -> Result<ExperimentConfig, ConfigError> {
        let mut c = ExperimentConfig::default();
        if let Some(source) = read_corpus_source(doc)? {
            c.corpus = source;
        }
        if let Some(d) = doc.list("designers")? {
            c.designers = d;
        }
        if let Some(s) = doc.list("scenarios")? {
            c.scenarios = s;
        }
        if let Some(cl) = doc.list("clusters")? {
            c.clusters = cl;
        }
        let runs: Option<usize> = doc.get("runs")?;
        match (doc.list::<u64>("seeds")?, runs) {
            (Some(seeds), Some(r)) if seeds.len() != r => {
                return Err(doc.bad(
                    "seeds",
                    format!("{} seeds listed but runs = {r}", seeds.len()),
                ))
            }
            (Some(seeds), _) => c.seeds = seeds,
            (None, Some(r)) => c.seeds = (0..r as u64).collect(),
            (None, None) => {}
        }
        doc.set("knn_k", &mut c.knn_k)?;
        doc.set("threshold", &mut c.threshold)?;
        doc.set("cluster_k", &mut c.clustering.k)?;
        doc.set("renormalize_arousal", &mut c.clustering.renormalize_arousal)?;
        read_space(doc, &mut c.space)?;
        read_grid(doc, &mut c.grid)?;
        read_sim(doc, &mut c.sim)?;
        doc.set("es.mu", &mut c.es.mu)?;
        doc.set("es.lambda", &mut c.es.lambda)?;
        doc.set("es.mutation_rate", &mut c.es.mutation_rate)?;
        doc.set("es.generations", &mut c.es.generations)?;
        doc.set("es.elitism", &mut c.es.elitism)?;
        doc.set("es.uniqueness", &mut c.es.uniqueness)?;
        c.es.validate().map_err(|e| doc.bad("es.mu", e))?;
        doc.set("go.budget", &mut c.go_explore.budget)?;
        c.go_explore.max_length = c.space.genome_length;
        if let Some(sel) = doc.raw("go.selection") {
            c.go_explore.selection = match sel {
                "inverse_visits" => CellSelection::InverseVisits,
                "uniform" => CellSelection::Uniform,
                other => {
                    return Err(doc.bad(
                        "go.selection",
                        format!("`{other}` is not inverse_visits or uniform"),
                    ))
                }
            };
        }
        match doc.get::<usize>("random.budget")? {
            Some(b) => c.random.budget = b,
            None => c.random.budget = c.es.evaluations(),
        }
        doc.set("candidates", &mut c.candidates)?;
        if let Some(out) = doc.raw("output") {
            let base = Path::new(doc.file()).parent().unwrap_or(Path::new(""));
            let p = PathBuf::from(out);
            c.output = Some(if p.is_absolute() { p } else { base.join(p) });
        }
        doc.finish()?;
        c.validate().map_err(|e| doc.bad("runs", e))?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::from_doc(&KvDoc::load(path)?)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.seeds.is_empty() {
            return Err("at least one run is required".into());
        }
        if self.designers.is_empty() || self.scenarios.is_empty() || self.clusters.is_empty() {
            return Err("designers, scenarios and clusters must be non-empty".into());
        }
        if self.knn_k == 0 {
            return Err("knn_k must be positive".into());
        }
        if self.candidates == 0 {
            return Err("candidates must be positive".into());
        }
        Ok(())
    }
}

/// One designer run and the individual reported for it.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub designer: DesignerKind,
    pub cluster: ClusterSelection,
    pub scenario: Scenario,
    pub seed: u64,
    pub outcome: Result<RunOutput, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    /// Best-accuracy final candidate.
    pub reported: Individual,
    /// Best-reward individual the designer returned.
    pub elite: Individual,
    pub evaluations: usize,
    pub warning: Option<String>,
    pub history: Vec<GenerationStats>,
    pub archive: Vec<Cell>,
}

/// Highest accuracy first; reward then order break ties.
pub fn pick_by_accuracy(candidates: &[Individual]) -> Option<&Individual> {
    candidates
        .iter()
        .fold(None, |best: Option<&Individual>, c| match best {
            Some(b) if (b.accuracy, b.fitness) >= (c.accuracy, c.fitness) => Some(b),
            _ if c.feasible => Some(c),
            _ => best,
        })
}

/// Run one designer for one seed against `evaluator`.
pub fn run_designer(
    designer: DesignerKind,
    config: &ExperimentConfig,
    evaluator: &dyn Evaluate,
    seed: u64,
) -> Result<RunOutput, DesignerError> {
    let (elite, candidates, evaluations, warning, history, archive) = match designer {
        DesignerKind::Random => {
            let cfg = RandomConfig {
                seed,
                keep: 1,
                ..config.random.clone()
            };
            let out = random_designer(&cfg, &config.space, evaluator)?;
            (
                out.best.clone(),
                vec![out.best],
                out.evaluations,
                None,
                Vec::new(),
                Vec::new(),
            )
        }
        DesignerKind::Edpcg => {
            let cfg = EsConfig {
                seed,
                ..config.es.clone()
            };
            let out = evolve(&cfg, &config.space, evaluator)?;
            let mut candidates = out.parents;
            if !candidates.contains(&out.elite) {
                candidates.push(out.elite.clone());
            }
            candidates.truncate(config.candidates.max(1));
            (
                out.elite,
                candidates,
                out.evaluations,
                None,
                out.history,
                Vec::new(),
            )
        }
        DesignerKind::Edrl => {
            let cfg = GoExploreConfig {
                seed,
                max_length: config.space.genome_length,
                ..config.go_explore.clone()
            };
            let out = go_explore(&cfg, &config.space, evaluator)?;
            let mut candidates: Vec<Individual> = out
                .best_full_length(config.candidates, cfg.max_length)
                .into_iter()
                .map(|c| {
                    evaluator.evaluate(
                        &Genome::new(c.trajectory.clone())
                            .expect("archived trajectories are valid"),
                    )
                })
                .collect();
            let warning = (!out.elite_full_length).then(|| {
                format!(
                    "no feasible {}-action cell; reporting a shorter one",
                    cfg.max_length
                )
            });
            if candidates.is_empty() {
                candidates.push(out.elite.clone());
            }
            (
                out.elite,
                candidates,
                out.evaluations,
                warning,
                Vec::new(),
                out.archive.cells().to_vec(),
            )
        }
    };
    let reported = pick_by_accuracy(&candidates)
        .cloned()
        .unwrap_or_else(|| elite.clone());
    Ok(RunOutput {
        reported,
        elite,
        evaluations,
        warning,
        history,
        archive,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Significance {
    Better,
    Worse,
    Overlap,
}

impl fmt::Display for Significance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Significance::Better => "better",
            Significance::Worse => "worse",
            Significance::Overlap => "overlap",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub designer: DesignerKind,
    pub cluster: ClusterSelection,
    pub scenario: Scenario,
    pub runs: usize,
    pub failures: usize,
    pub mean_accuracy: f64,
    pub ci_half_width: f64,
    pub mean_fitness: f64,
    pub mean_event_tiles: f64,
    /// CI comparison against the random designer in the same cell.
    pub vs_random: Option<Significance>,
}

/// One row per requested (designer, cluster, scenario).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
}

impl ResultsTable {
    pub fn get(
        &self,
        designer: DesignerKind,
        cluster: ClusterSelection,
        scenario: Scenario,
    ) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.designer == designer && r.cluster == cluster && r.scenario == scenario)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "designer",
            "cluster",
            "scenario",
            "runs",
            "failures",
            "mean_accuracy",
            "ci_half_width",
            "mean_fitness",
            "mean_event_tiles",
            "vs_random",
        ])
        .expect("in-memory csv");
        for r in &self.rows {
            w.write_record([
                r.designer.to_string(),
                r.cluster.to_string(),
                r.scenario.short_name().to_string(),
                r.runs.to_string(),
                r.failures.to_string(),
                r.mean_accuracy.to_string(),
                r.ci_half_width.to_string(),
                r.mean_fitness.to_string(),
                r.mean_event_tiles.to_string(),
                r.vs_random.map_or(String::new(), |s| s.to_string()),
            ])
            .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RangeRow {
    pub designer: DesignerKind,
    pub cluster: ClusterSelection,
    pub scenario: Scenario,
    pub tracks: usize,
    pub simple_tiles: (f64, f64),
    pub event_tiles: (f64, f64),
    pub closure_length: (f64, f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutcome {
    pub table: ResultsTable,
    pub runs: Vec<RunRecord>,
    pub range: Vec<RangeRow>,
    pub corpus_hash: String,
    pub models: BTreeMap<ClusterSelection, Result<ModelSummary, String>>,
}

fn mean_ci(values: &[f64]) -> (f64, f64) {
    match confidence_interval_95(values) {
        Ok(ci) => ci,
        Err(_) => (values.iter().sum::<f64>() / values.len().max(1) as f64, 0.0),
    }
}

/// Load the corpus and attach cluster labels when any cluster is requested.
pub fn prepare_corpus(config: &ExperimentConfig) -> Result<Corpus, HarnessError> {
    let mut corpus = config.corpus.load()?;
    if config.clusters.iter().any(|c| *c != ClusterSelection::All) {
        corpus.cluster_assignments = cluster_annotators(&corpus, &config.clustering)?;
    }
    Ok(corpus)
}

pub fn build_model(
    corpus: &Corpus,
    cluster: ClusterSelection,
    config: &ExperimentConfig,
) -> Result<KnnModel, KnnError> {
    KnnModel::from_corpus_with_threshold(corpus, cluster.filter(), config.knn_k, config.threshold)
}

pub fn evaluator_for(model: KnnModel, scenario: Scenario, config: &ExperimentConfig) -> Evaluator {
    Evaluator {
        grid: config.grid.clone(),
        sim: config.sim.clone(),
        ..Evaluator::new(model, scenario)
    }
}

/// Run every configured designer, cluster, scenario and seed.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome, HarnessError> {
    config.validate().map_err(HarnessError::Invalid)?;
    let corpus = prepare_corpus(config)?;
    let mut runs = Vec::new();
    let mut models = BTreeMap::new();
    for &cluster in &config.clusters {
        let model = build_model(&corpus, cluster, config);
        models.insert(
            cluster,
            model
                .as_ref()
                .map(KnnModel::summary)
                .map_err(|e| e.to_string()),
        );
        for &designer in &config.designers {
            for &scenario in &config.scenarios {
                for &seed in &config.seeds {
                    let outcome = match &model {
                        Err(e) => Err(e.to_string()),
                        Ok(m) => {
                            let ev = evaluator_for(m.clone(), scenario, config);
                            run_designer(designer, config, &ev, seed).map_err(|e| e.to_string())
                        }
                    };
                    runs.push(RunRecord {
                        designer,
                        cluster,
                        scenario,
                        seed,
                        outcome,
                    });
                }
            }
        }
    }
    let table = aggregate(config, &runs);
    let range = expressive_rows(config, &runs);
    Ok(ExperimentOutcome {
        table,
        runs,
        range,
        corpus_hash: corpus.content_hash(),
        models,
    })
}

fn cell_runs<'a>(
    runs: &'a [RunRecord],
    designer: DesignerKind,
    cluster: ClusterSelection,
    scenario: Scenario,
) -> impl Iterator<Item = &'a RunRecord> {
    runs.iter()
        .filter(move |r| r.designer == designer && r.cluster == cluster && r.scenario == scenario)
}

fn aggregate(config: &ExperimentConfig, runs: &[RunRecord]) -> ResultsTable {
    let mut rows = Vec::new();
    let mut random_ci = BTreeMap::new();
    for &cluster in &config.clusters {
        for &designer in &config.designers {
            for &scenario in &config.scenarios {
                let all: Vec<&RunRecord> = cell_runs(runs, designer, cluster, scenario).collect();
                let ok: Vec<&RunOutput> =
                    all.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
                let acc: Vec<f64> = ok.iter().map(|o| o.reported.accuracy).collect();
                let fit: Vec<f64> = ok.iter().map(|o| o.reported.fitness).collect();
                let events: Vec<f64> = ok
                    .iter()
                    .filter_map(|o| o.reported.track.as_ref())
                    .map(|t| tile_counts(t).event_tiles() as f64)
                    .collect();
                let (mean, half) = if acc.is_empty() {
                    (f64::NAN, f64::NAN)
                } else {
                    mean_ci(&acc)
                };
                if designer == DesignerKind::Random {
                    random_ci.insert((cluster, scenario), (mean, half));
                }
                rows.push(ResultRow {
                    designer,
                    cluster,
                    scenario,
                    runs: all.len(),
                    failures: all.len() - ok.len(),
                    mean_accuracy: mean,
                    ci_half_width: half,
                    mean_fitness: if fit.is_empty() {
                        f64::NAN
                    } else {
                        mean_ci(&fit).0
                    },
                    mean_event_tiles: if events.is_empty() {
                        f64::NAN
                    } else {
                        mean_ci(&events).0
                    },
                    vs_random: None,
                });
            }
        }
    }
    for row in &mut rows {
        if row.designer == DesignerKind::Random {
            continue;
        }
        if let Some(&(rm, rh)) = random_ci.get(&(row.cluster, row.scenario)) {
            if rm.is_finite() && row.mean_accuracy.is_finite() {
                row.vs_random = Some(
                    if intervals_overlap((row.mean_accuracy, row.ci_half_width), (rm, rh)) {
                        Significance::Overlap
                    } else if row.mean_accuracy > rm {
                        Significance::Better
                    } else {
                        Significance::Worse
                    },
                );
            }
        }
    }
    ResultsTable { rows }
}

fn expressive_rows(config: &ExperimentConfig, runs: &[RunRecord]) -> Vec<RangeRow> {
    let mut rows = Vec::new();
    for &cluster in &config.clusters {
        for &designer in &config.designers {
            for &scenario in &config.scenarios {
                let counts: Vec<_> = cell_runs(runs, designer, cluster, scenario)
                    .filter_map(|r| r.outcome.as_ref().ok())
                    .filter_map(|o| o.reported.track.as_ref().map(tile_counts))
                    .collect();
                if counts.is_empty() {
                    continue;
                }
                let col = |f: &dyn Fn(&crate::track::TileCounts) -> usize| {
                    mean_ci(&counts.iter().map(|c| f(c) as f64).collect::<Vec<_>>())
                };
                rows.push(RangeRow {
                    designer,
                    cluster,
                    scenario,
                    tracks: counts.len(),
                    simple_tiles: col(&|c| c.simple_tiles()),
                    event_tiles: col(&|c| c.event_tiles()),
                    closure_length: col(&|c| c.closure_length),
                });
            }
        }
    }
    rows
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'a str,
    config: &'a ExperimentConfig,
    corpus_hash: &'a str,
    models: Vec<ModelEntry>,
}

#[derive(Serialize)]
struct ModelEntry {
    cluster: String,
    summary: Option<ModelSummary>,
    error: Option<String>,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn run_dir_name(r: &RunRecord) -> String {
    format!(
        "{}_{}_{}_{}",
        r.designer,
        r.cluster,
        r.scenario.short_name(),
        r.seed
    )
}

/// Write the manifest, tables and per-run artifacts under `dir`.
pub fn write_artifacts(
    config: &ExperimentConfig,
    outcome: &ExperimentOutcome,
    dir: &Path,
) -> Result<(), HarnessError> {
    fs::create_dir_all(dir.join("runs")).map_err(|e| io_err(dir, e))?;
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        config,
        corpus_hash: &outcome.corpus_hash,
        models: outcome
            .models
            .iter()
            .map(|(c, m)| ModelEntry {
                cluster: c.to_string(),
                summary: m.as_ref().ok().cloned(),
                error: m.as_ref().err().cloned(),
            })
            .collect(),
    };
    let json = |v: &dyn erased::Json| v.pretty();
    write(&dir.join("manifest.json"), json(&manifest))?;
    write(&dir.join("results.csv"), outcome.table.to_csv())?;
    write(
        &dir.join("summary.json"),
        json(&serde_json::json!({
            "results": outcome.table.rows,
            "expressive_range": outcome.range,
        })),
    )?;

    let mut runs = csv::Writer::from_writer(Vec::new());
    runs.write_record([
        "designer",
        "cluster",
        "scenario",
        "seed",
        "status",
        "accuracy",
        "fitness",
        "elite_fitness",
        "evaluations",
        "genome",
        "simple_tiles",
        "event_tiles",
        "closure_length",
        "message",
    ])
    .expect("in-memory csv");
    for r in &outcome.runs {
        let base = [
            r.designer.to_string(),
            r.cluster.to_string(),
            r.scenario.short_name().to_string(),
            r.seed.to_string(),
        ];
        let rest: Vec<String> = match &r.outcome {
            Err(e) => vec![
                "failed".into(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                e.clone(),
            ],
            Ok(o) => {
                let counts = o.reported.counts().unwrap_or_default();
                vec![
                    "ok".into(),
                    o.reported.accuracy.to_string(),
                    o.reported.fitness.to_string(),
                    o.elite.fitness.to_string(),
                    o.evaluations.to_string(),
                    o.reported.genome.to_string(),
                    counts.simple_tiles().to_string(),
                    counts.event_tiles().to_string(),
                    counts.closure_length.to_string(),
                    o.warning.clone().unwrap_or_default(),
                ]
            }
        };
        runs.write_record(base.iter().cloned().chain(rest))
            .expect("in-memory csv");

        if let Ok(o) = &r.outcome {
            let run_dir = dir.join("runs").join(run_dir_name(r));
            fs::create_dir_all(&run_dir).map_err(|e| io_err(&run_dir, e))?;
            if let Some(t) = &o.reported.track {
                write(&run_dir.join("elite.json"), t.to_json())?;
            }
            write(&run_dir.join("arousal.csv"), trace_csv(&o.reported.arousal))?;
            if !o.history.is_empty() {
                let mut w = csv::Writer::from_writer(Vec::new());
                for h in &o.history {
                    w.serialize(h).expect("in-memory csv");
                }
                write(
                    &run_dir.join("history.csv"),
                    w.into_inner().expect("in-memory csv"),
                )?;
            }
            if !o.archive.is_empty() {
                write(&run_dir.join("archive.csv"), archive_csv(&o.archive))?;
            }
        }
    }
    write(
        &dir.join("runs.csv"),
        runs.into_inner().expect("in-memory csv"),
    )?;

    let mut range = csv::Writer::from_writer(Vec::new());
    range
        .write_record([
            "designer",
            "cluster",
            "scenario",
            "tracks",
            "simple_mean",
            "simple_ci",
            "event_mean",
            "event_ci",
            "closure_mean",
            "closure_ci",
        ])
        .expect("in-memory csv");
    for r in &outcome.range {
        range
            .write_record([
                r.designer.to_string(),
                r.cluster.to_string(),
                r.scenario.short_name().to_string(),
                r.tracks.to_string(),
                r.simple_tiles.0.to_string(),
                r.simple_tiles.1.to_string(),
                r.event_tiles.0.to_string(),
                r.event_tiles.1.to_string(),
                r.closure_length.0.to_string(),
                r.closure_length.1.to_string(),
            ])
            .expect("in-memory csv");
    }
    write(
        &dir.join("expressive_range.csv"),
        range.into_inner().expect("in-memory csv"),
    )?;
    Ok(())
}

/// `window,arousal` rows.
pub fn trace_csv(trace: &[f64]) -> String {
    let mut s = String::from("window,arousal\n");
    for (i, v) in trace.iter().enumerate() {
        s.push_str(&format!("{i},{v}\n"));
    }
    s
}

/// Parse a one-column or `window,arousal` trace file.
pub fn parse_trace_csv(text: &str) -> Result<Vec<f64>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let value = line.rsplit(',').next().unwrap_or(line).trim();
        match value.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            _ if i == 0 => continue,
            _ => return Err(format!("line {}: bad arousal value `{value}`", i + 1)),
        }
    }
    if out.is_empty() {
        return Err("trace has no values".into());
    }
    Ok(out)
}

fn archive_csv(cells: &[Cell]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "straights",
        "turns",
        "loops",
        "ramps",
        "closure_length",
        "reward",
        "accuracy",
        "visits",
        "trajectory",
    ])
    .expect("in-memory csv");
    for c in cells {
        let traj: Vec<String> = c.trajectory.iter().map(|k| k.to_string()).collect();
        w.write_record([
            c.key.straights.to_string(),
            c.key.turns.to_string(),
            c.key.loops.to_string(),
            c.key.ramps.to_string(),
            c.key.closure_length.to_string(),
            c.reward.to_string(),
            c.accuracy.to_string(),
            c.visits.to_string(),
            traj.join(" "),
        ])
        .expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
}

mod erased {
    pub trait Json {
        fn pretty(&self) -> String;
    }

    impl<T: serde::Serialize> Json for T {
        fn pretty(&self) -> String {
            let mut s = serde_json::to_string_pretty(self).expect("artifacts serialize");
            s.push('\n');
            s
        }
    }
}

/// Exhaustive search of a small genome space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub corpus: CorpusSource,
    pub scenario: Scenario,
    pub cluster: ClusterSelection,
    pub knn_k: usize,
    pub space: SearchSpace,
    pub grid: GridConfig,
    pub sim: SimConfig,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            corpus: CorpusSource::Synthetic(SynthSpec::event_coupled()),
            scenario: Scenario::Maximise,
            cluster: ClusterSelection::All,
            knn_k: DEFAULT_K,
            space: SearchSpace {
                genome_length: 4,
                kinds: vec![TileKind::Straight, TileKind::CurveRight, TileKind::Loop],
            },
            grid: GridConfig::default(),
            sim: SimConfig::default(),
        }
    }
}

impl ToyConfig {
    pub fn from_doc(doc: &KvDoc) -> Result<ToyConfig, ConfigError> {
        let mut c = ToyConfig::default();
        if let Some(source) = read_corpus_source(doc)? {
            c.corpus = source;
        }
        doc.set("scenario", &mut c.scenario)?;
        doc.set("cluster", &mut c.cluster)?;
        doc.set("knn_k", &mut c.knn_k)?;
        read_space(doc, &mut c.space)?;
        read_grid(doc, &mut c.grid)?;
        read_sim(doc, &mut c.sim)?;
        if c.space.kinds.len().pow(c.space.genome_length as u32) > 100_000 {
            return Err(doc.bad("genome_length", "space too large to enumerate"));
        }
        doc.finish()?;
        Ok(c)
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            corpus: self.corpus.clone(),
            scenarios: vec![self.scenario],
            clusters: vec![self.cluster],
            knn_k: self.knn_k,
            space: self.space.clone(),
            grid: self.grid.clone(),
            sim: self.sim.clone(),
            go_explore: GoExploreConfig {
                max_length: self.space.genome_length,
                ..GoExploreConfig::default()
            },
            ..ExperimentConfig::default()
        }
    }

    pub fn evaluator(&self) -> Result<Evaluator, HarnessError> {
        let exp = self.experiment();
        let corpus = prepare_corpus(&exp)?;
        let model = build_model(&corpus, self.cluster, &exp)?;
        Ok(evaluator_for(model, self.scenario, &exp))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub scenario: Scenario,
    pub genomes: usize,
    pub feasible: usize,
    pub optimum_fitness: f64,
    pub optimal_genomes: Vec<String>,
}

pub fn oracle(evaluator: &dyn Evaluate, space: &SearchSpace, scenario: Scenario) -> OracleReport {
    let all = space.enumerate();
    let scored: Vec<Individual> = all.iter().map(|g| evaluator.evaluate(g)).collect();
    let best = scored
        .iter()
        .map(|i| i.fitness)
        .fold(f64::NEG_INFINITY, f64::max);
    OracleReport {
        scenario,
        genomes: all.len(),
        feasible: scored.iter().filter(|i| i.feasible).count(),
        optimum_fitness: best,
        optimal_genomes: scored
            .iter()
            .filter(|i| i.fitness == best)
            .map(|i| i.genome.to_string())
            .collect(),
    }
}

/// Synthetic corpus recipe from a key-value document.
pub fn synth_spec_from_doc(doc: &KvDoc) -> Result<SynthSpec, ConfigError> {
    let mut spec = match doc.raw("preset") {
        None => SynthSpec::event_coupled(),
        Some(p) => synth_preset(p).map_err(|e| doc.bad("preset", e))?,
    };
    doc.set("seed", &mut spec.seed)?;
    doc.set("noise", &mut spec.noise)?;
    doc.set("reversion", &mut spec.reversion)?;
    doc.set("layouts", &mut spec.layouts)?;
    doc.set("genome_length", &mut spec.genome_length)?;
    if let Some(rule) = doc.raw("rule") {
        spec.rule = match rule {
            "linear" => ArousalRule::Linear {
                event_gain: 0.6,
                event_bias: 0.3,
                turn_weight: 0.6,
            },
            "event_gate" => ArousalRule::EventGate { step: 0.2 },
            other => return Err(doc.bad("rule", format!("`{other}` is not linear or event_gate"))),
        };
    }
    match &mut spec.rule {
        ArousalRule::Linear {
            event_gain,
            event_bias,
            turn_weight,
        } => {
            doc.set("event_gain", event_gain)?;
            doc.set("event_bias", event_bias)?;
            doc.set("turn_weight", turn_weight)?;
        }
        ArousalRule::EventGate { step } => doc.set("step", step)?,
    }
    // archetype.<name> = shape, skill, sessions
    let names: Vec<String> = (0..)
        .map_while(|i| doc.raw(&format!("archetype.{i}")).map(str::to_string))
        .collect();
    if !names.is_empty() {
        spec.archetypes = names
            .iter()
            .enumerate()
            .map(|(i, v)| parse_archetype(v).map_err(|e| doc.bad(&format!("archetype.{i}"), e)))
            .collect::<Result<_, _>>()?;
    }
    if let Some(n) = doc.get::<usize>("sessions_per_archetype")? {
        for a in &mut spec.archetypes {
            a.sessions = n;
        }
    }
    read_grid(doc, &mut spec.grid)?;
    read_sim(doc, &mut spec.sim)?;
    doc.finish()?;
    spec.validate().map_err(|e| doc.bad("preset", e))?;
    Ok(spec)
}

/// `name, shape, skill, sessions`.
fn parse_archetype(v: &str) -> Result<Archetype, String> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    let [name, shape, skill, sessions] = parts[..] else {
        return Err("expected `name, shape, skill, sessions`".into());
    };
    let shape = match shape {
        "neutral" => ArousalShape::Neutral,
        "rising" => ArousalShape::Rising,
        "rise_then_fall" => ArousalShape::RiseThenFall,
        "flat_low" => ArousalShape::FlatLow,
        other => return Err(format!("unknown shape `{other}`")),
    };
    Ok(Archetype {
        name: name.into(),
        shape,
        skill: skill.parse().map_err(|_| format!("bad skill `{skill}`"))?,
        sessions: sessions
            .parse()
            .map_err(|_| format!("bad session count `{sessions}`"))?,
    })
}
