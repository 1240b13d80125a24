//! Annotated play sessions: ingestion, labelling, normalization, annotator
//! clustering and a synthetic corpus generator.
//!
//! # On-disk layout
//!
//! A corpus directory holds:
//!
//! * `schema.txt`: feature names, one per line, in column order.
//! * `manifest.txt`: session CSV paths relative to the directory, one per line.
//! * `labels.csv` (optional): `annotator_id,cluster` ground-truth labels.
//! * one CSV per session with the header
//!   `annotator_id,window_index,arousal,score,f_0,...,f_{n-1}`, one row per
//!   window, `window_index` counting up from 0.
//!
//! Arousal outside `[0, 1]` is treated as an unbounded annotation trace and
//! min-max normalized per session on load.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::closure::close_circuit;
use crate::eval::area_between;
use crate::sim::{simulate_with_schema, Feature, FeatureSchema, SimConfig};
use crate::track::{decode, Genome, GridConfig, TileKind, Track};

/// Minimum absolute arousal change for a pair to count as a change.
pub const PREFERENCE_THRESHOLD: f64 = 0.15;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("session `{0}` has fewer than 2 windows")]
    EmptySession(String),
    #[error("no increase or decrease pairs remain after removing stable pairs")]
    EmptyAfterDownsample,
    #[error("need at least {needed} sessions to form {needed} clusters, got {got}")]
    TooFewSessions { needed: usize, got: usize },
    #[error("invalid synthetic corpus spec: {0}")]
    InvalidSpec(String),
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// One annotator's play-through, windowed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorSession {
    pub annotator_id: String,
    /// Per-window feature vectors in schema order.
    pub features: Vec<Vec<f64>>,
    /// Per-window arousal in `[0, 1]`.
    pub arousal: Vec<f64>,
    pub score: Vec<f64>,
}

impl AnnotatorSession {
    pub fn len(&self) -> usize {
        self.arousal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arousal.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PairLabel {
    Increase,
    Decrease,
    Stable,
}

impl PairLabel {
    /// Strict threshold rule on the arousal change.
    pub fn from_delta(delta: f64, threshold: f64) -> PairLabel {
        if delta > threshold {
            PairLabel::Increase
        } else if delta < -threshold {
            PairLabel::Decrease
        } else {
            PairLabel::Stable
        }
    }
}

/// Two consecutive windows of one session and the direction of change.
#[derive(Clone, Debug, PartialEq)]
pub struct PreferencePair {
    pub session: usize,
    pub prev_features: Vec<f64>,
    pub cur_features: Vec<f64>,
    pub delta: f64,
    pub label: PairLabel,
}

/// A change pair with its binary label: 1 for increase, 0 for decrease.
#[derive(Clone, Debug, PartialEq)]
pub struct ChangeSample {
    pub session: usize,
    pub prev_features: Vec<f64>,
    pub cur_features: Vec<f64>,
    pub label: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureBounds {
    pub min: f64,
    pub max: f64,
}

impl FeatureBounds {
    pub fn is_constant(&self) -> bool {
        self.max <= self.min
    }

    /// Map into `[0, 1]`; constant features map to 0.5.
    pub fn apply(&self, x: f64) -> f64 {
        if self.is_constant() {
            0.5
        } else {
            ((x - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    pub schema: Vec<String>,
    pub sessions: Vec<AnnotatorSession>,
    pub pairs: Vec<PreferencePair>,
    /// Raw-feature bounds used to map query windows into corpus space.
    pub normalization_bounds: Vec<FeatureBounds>,
    pub normalized: bool,
    pub cluster_assignments: BTreeMap<String, usize>,
    /// Planted labels from synthesis or `labels.csv`.
    pub ground_truth: BTreeMap<String, usize>,
}

impl Corpus {
    pub fn new(schema: Vec<String>, sessions: Vec<AnnotatorSession>) -> Corpus {
        Corpus {
            schema,
            sessions,
            ..Corpus::default()
        }
    }

    /// Label consecutive windows and keep the pairs on the corpus.
    pub fn with_pairs(mut self, threshold: f64) -> Result<Corpus, CorpusError> {
        self.pairs = build_pairs(&self.sessions, threshold)?;
        Ok(self)
    }

    /// Sessions assigned to `cluster`, or all of them.
    pub fn sessions_in(&self, cluster: Option<usize>) -> Vec<&AnnotatorSession> {
        self.sessions
            .iter()
            .filter(|s| match cluster {
                None => true,
                Some(c) => self.cluster_assignments.get(&s.annotator_id) == Some(&c),
            })
            .collect()
    }

    pub fn cluster_count(&self) -> usize {
        self.cluster_assignments.values().max().map_or(0, |m| m + 1)
    }

    /// SHA-256 over the schema and every session value, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for name in &self.schema {
            h.update(name.as_bytes());
            h.update([0u8]);
        }
        for s in &self.sessions {
            h.update(s.annotator_id.as_bytes());
            h.update([0u8]);
            for (row, (a, sc)) in s.features.iter().zip(s.arousal.iter().zip(&s.score)) {
                for v in row.iter().chain([a, sc]) {
                    h.update(v.to_le_bytes());
                }
            }
        }
        hex(&h.finalize())
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|n| n == name)
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// One pair per consecutive window pair per session.
pub fn build_pairs(
    sessions: &[AnnotatorSession],
    threshold: f64,
) -> Result<Vec<PreferencePair>, CorpusError> {
    let mut pairs = Vec::new();
    for (i, s) in sessions.iter().enumerate() {
        if s.len() < 2 {
            return Err(CorpusError::EmptySession(s.annotator_id.clone()));
        }
        for w in 1..s.len() {
            let delta = s.arousal[w] - s.arousal[w - 1];
            pairs.push(PreferencePair {
                session: i,
                prev_features: s.features[w - 1].clone(),
                cur_features: s.features[w].clone(),
                delta,
                label: PairLabel::from_delta(delta, threshold),
            });
        }
    }
    Ok(pairs)
}

/// Drop stable pairs and binarize the rest.
pub fn downsample_changes(pairs: &[PreferencePair]) -> Result<Vec<ChangeSample>, CorpusError> {
    let kept: Vec<ChangeSample> = pairs
        .iter()
        .filter_map(|p| {
            let label = match p.label {
                PairLabel::Increase => 1,
                PairLabel::Decrease => 0,
                PairLabel::Stable => return None,
            };
            Some(ChangeSample {
                session: p.session,
                prev_features: p.prev_features.clone(),
                cur_features: p.cur_features.clone(),
                label,
            })
        })
        .collect();
    if kept.is_empty() {
        return Err(CorpusError::EmptyAfterDownsample);
    }
    Ok(kept)
}

/// Per-feature bounds over every window of every session.
pub fn feature_bounds(sessions: &[AnnotatorSession], dims: usize) -> Vec<FeatureBounds> {
    let mut bounds = vec![
        FeatureBounds {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        };
        dims
    ];
    for row in sessions.iter().flat_map(|s| &s.features) {
        for (b, &v) in bounds.iter_mut().zip(row) {
            b.min = b.min.min(v);
            b.max = b.max.max(v);
        }
    }
    for b in &mut bounds {
        if !b.min.is_finite() {
            *b = FeatureBounds { min: 0.0, max: 0.0 };
        }
    }
    bounds
}

/// Min-max normalize every feature into `[0, 1]` over the whole corpus.
///
/// Bounds are composed with any earlier normalization so that
/// `normalization_bounds` always maps raw simulator telemetry.
pub fn normalize(corpus: &Corpus) -> Corpus {
    let dims = corpus.schema.len();
    let bounds = feature_bounds(&corpus.sessions, dims);
    let mut out = corpus.clone();
    for row in out.sessions.iter_mut().flat_map(|s| s.features.iter_mut()) {
        for (v, b) in row.iter_mut().zip(&bounds) {
            *v = b.apply(*v);
        }
    }
    for p in &mut out.pairs {
        for v in [&mut p.prev_features, &mut p.cur_features] {
            for (x, b) in v.iter_mut().zip(&bounds) {
                *x = b.apply(*x);
            }
        }
    }
    out.normalization_bounds = if corpus.normalized {
        corpus
            .normalization_bounds
            .iter()
            .zip(&bounds)
            .map(|(raw, now)| {
                if raw.is_constant() || now.is_constant() {
                    FeatureBounds {
                        min: raw.min,
                        max: raw.min,
                    }
                } else {
                    let span = raw.max - raw.min;
                    FeatureBounds {
                        min: raw.min + now.min * span,
                        max: raw.min + now.max * span,
                    }
                }
            })
            .collect()
    } else {
        bounds
    };
    out.normalized = true;
    out
}

fn min_max(trace: &[f64]) -> Vec<f64> {
    let lo = trace.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = trace.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return vec![0.5; trace.len()];
    }
    trace.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterOptions {
    pub k: usize,
    /// Min-max each annotator's arousal trace before comparing.
    pub renormalize_arousal: bool,
    pub arousal_weight: f64,
    pub score_weight: f64,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        ClusterOptions {
            k: 3,
            renormalize_arousal: true,
            arousal_weight: 0.5,
            score_weight: 0.5,
        }
    }
}

/// Pairwise annotator distances from arousal and score traces.
///
/// Scores are mapped into `[0, 1]` with the corpus-wide score range.
pub fn annotator_distances(
    sessions: &[&AnnotatorSession],
    options: &ClusterOptions,
) -> Vec<Vec<f64>> {
    let lo = sessions
        .iter()
        .flat_map(|s| &s.score)
        .copied()
        .fold(f64::INFINITY, f64::min);
    let hi = sessions
        .iter()
        .flat_map(|s| &s.score)
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let scores: Vec<Vec<f64>> = sessions
        .iter()
        .map(|s| {
            s.score
                .iter()
                .map(|v| if hi > lo { (v - lo) / (hi - lo) } else { 0.5 })
                .collect()
        })
        .collect();
    let arousal: Vec<Vec<f64>> = sessions
        .iter()
        .map(|s| {
            if options.renormalize_arousal {
                min_max(&s.arousal)
            } else {
                s.arousal.clone()
            }
        })
        .collect();
    let n = sessions.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let a = area_between(&arousal[i], &arousal[j]).unwrap_or(0.0);
            let s = area_between(&scores[i], &scores[j]).unwrap_or(0.0);
            let v = options.arousal_weight * a + options.score_weight * s;
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    d
}

/// Average-linkage agglomerative clustering cut at `k` clusters.
///
/// Cluster ids are numbered by the first member in input order.
pub fn agglomerate(distances: &[Vec<f64>], k: usize) -> Vec<usize> {
    let n = distances.len();
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    // linkage[a][b]: mean distance between clusters a and b
    let mut linkage: Vec<Vec<f64>> = distances.to_vec();
    while clusters.len() > k.max(1) {
        let mut best = (f64::INFINITY, 0, 0);
        for a in 0..clusters.len() {
            for b in (a + 1)..clusters.len() {
                if linkage[a][b] < best.0 {
                    best = (linkage[a][b], a, b);
                }
            }
        }
        let (_, a, b) = best;
        let (na, nb) = (clusters[a].len() as f64, clusters[b].len() as f64);
        for c in 0..clusters.len() {
            if c != a && c != b {
                let merged = (na * linkage[a][c] + nb * linkage[b][c]) / (na + nb);
                linkage[a][c] = merged;
                linkage[c][a] = merged;
            }
        }
        let moved = clusters.remove(b);
        clusters[a].extend(moved);
        linkage.remove(b);
        for row in &mut linkage {
            row.remove(b);
        }
    }
    for c in &mut clusters {
        c.sort_unstable();
    }
    clusters.sort_by_key(|c| c[0]);
    let mut labels = vec![0; n];
    for (id, members) in clusters.iter().enumerate() {
        for &m in members {
            labels[m] = id;
        }
    }
    labels
}

/// Group annotators by the shape of their arousal and score traces.
pub fn cluster_annotators(
    corpus: &Corpus,
    options: &ClusterOptions,
) -> Result<BTreeMap<String, usize>, CorpusError> {
    let n = corpus.sessions.len();
    if options.k == 0 || n < options.k {
        return Err(CorpusError::TooFewSessions {
            needed: options.k.max(1),
            got: n,
        });
    }
    let sessions: Vec<&AnnotatorSession> = corpus.sessions.iter().collect();
    let labels = agglomerate(&annotator_distances(&sessions, options), options.k);
    Ok(corpus
        .sessions
        .iter()
        .zip(labels)
        .map(|(s, l)| (s.annotator_id.clone(), l))
        .collect())
}

/// Fraction of item pairs on which two partitions agree (Rand index).
pub fn rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "partitions must label the same items");
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let mut agree = 0usize;
    let mut total = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            total += 1;
            if (a[i] == a[j]) == (b[i] == b[j]) {
                agree += 1;
            }
        }
    }
    agree as f64 / total as f64
}

/// Time course an archetype's arousal is pulled toward.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArousalShape {
    Neutral,
    Rising,
    RiseThenFall,
    FlatLow,
}

impl ArousalShape {
    pub fn level(self, t: f64) -> f64 {
        match self {
            ArousalShape::Neutral => 0.5,
            ArousalShape::Rising => 0.15 + 0.75 * t,
            ArousalShape::RiseThenFall => {
                if t < 0.2 {
                    0.2 + 3.5 * t
                } else {
                    0.9 - 0.6 * (t - 0.2) / 0.8
                }
            }
            ArousalShape::FlatLow => 0.15,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Archetype {
    pub name: String,
    pub shape: ArousalShape,
    /// Top-speed multiplier for this group's car.
    pub skill: f64,
    pub sessions: usize,
}

/// How a window's telemetry moves arousal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArousalRule {
    /// Change `gain · (event_fraction + turn_weight · curve_fraction − bias)`.
    Linear {
        event_gain: f64,
        event_bias: f64,
        turn_weight: f64,
    },
    /// Change `+step` when the window touches an event tile, else `−step`.
    EventGate { step: f64 },
}

impl ArousalRule {
    fn delta(&self, event_fraction: f64, curve_fraction: f64) -> f64 {
        match *self {
            ArousalRule::Linear {
                event_gain,
                event_bias,
                turn_weight,
            } => event_gain * (event_fraction + turn_weight * curve_fraction - event_bias),
            ArousalRule::EventGate { step } => {
                if event_fraction > 0.0 {
                    step
                } else {
                    -step
                }
            }
        }
    }
}

/// Recipe for a synthetic corpus: simulated sessions on random tracks with
/// arousal generated from the telemetry.
///
/// Each window's arousal is the previous value plus the archetype trend,
/// a pull of strength `reversion` toward the archetype shape, the rule's
/// event term and Gaussian noise, clamped to `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub archetypes: Vec<Archetype>,
    pub noise: f64,
    pub seed: u64,
    pub rule: ArousalRule,
    pub reversion: f64,
    /// Distinct track layouts; sessions cycle through them.
    pub layouts: usize,
    pub genome_length: usize,
    pub grid: GridConfig,
    pub sim: SimConfig,
}

impl SynthSpec {
    /// One neutral group whose arousal follows event tiles.
    pub fn event_coupled() -> SynthSpec {
        SynthSpec {
            archetypes: vec![Archetype {
                name: "players".into(),
                shape: ArousalShape::Neutral,
                skill: 1.0,
                sessions: 40,
            }],
            noise: 0.03,
            seed: 7,
            rule: ArousalRule::Linear {
                event_gain: 0.6,
                event_bias: 0.3,
                turn_weight: 0.6,
            },
            reversion: 0.15,
            layouts: 40,
            genome_length: 10,
            grid: GridConfig::default(),
            sim: SimConfig::default(),
        }
    }

    /// Three planted groups: rising, rise-then-fall and flat-low arousal.
    pub fn three_archetypes() -> SynthSpec {
        let group = |name: &str, shape, skill| Archetype {
            name: name.into(),
            shape,
            skill,
            sessions: 10,
        };
        SynthSpec {
            archetypes: vec![
                group("excited", ArousalShape::Rising, 1.0),
                group("unexcited", ArousalShape::RiseThenFall, 1.0),
                group("beginners", ArousalShape::FlatLow, 0.7),
            ],
            noise: 0.03,
            seed: 7,
            rule: ArousalRule::Linear {
                event_gain: 0.15,
                event_bias: 0.35,
                turn_weight: 0.0,
            },
            reversion: 0.5,
            layouts: 1,
            genome_length: 10,
            grid: GridConfig::default(),
            sim: SimConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: &str| Err(CorpusError::InvalidSpec(m.into()));
        if self.archetypes.is_empty() {
            return bad("at least one archetype is required");
        }
        if self.archetypes.iter().any(|a| a.sessions == 0) {
            return bad("every archetype needs at least one session");
        }
        if self.archetypes.iter().any(|a| !(a.skill > 0.0)) {
            return bad("archetype skill must be positive");
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return bad("noise must be a non-negative number");
        }
        if !(0.0..=1.0).contains(&self.reversion) {
            return bad("reversion must lie in [0, 1]");
        }
        if self.layouts == 0 {
            return bad("layouts must be positive");
        }
        self.grid
            .validate()
            .map_err(|e| CorpusError::InvalidSpec(e.to_string()))?;
        self.sim
            .validate()
            .map_err(|e| CorpusError::InvalidSpec(e.to_string()))
    }
}

/// Random closed tracks, drawn from `rng` until `count` are found.
fn random_layouts(
    rng: &mut ChaCha8Rng,
    count: usize,
    genome_length: usize,
    grid: &GridConfig,
) -> Result<Vec<Track>, CorpusError> {
    let mut tracks = Vec::with_capacity(count);
    let mut attempts = 0;
    while tracks.len() < count {
        attempts += 1;
        if attempts > 10_000 * count {
            return Err(CorpusError::InvalidSpec(
                "could not draw feasible layouts".into(),
            ));
        }
        let kinds = (0..genome_length)
            .map(|_| TileKind::GENOME_KINDS[rng.random_range(0..TileKind::GENOME_KINDS.len())])
            .collect();
        let genome = Genome::new(kinds).expect("genome kinds exclude the start tile");
        if let Ok(track) = decode(&genome, grid).and_then(|t| close_circuit(&t)) {
            tracks.push(track);
        }
    }
    Ok(tracks)
}

/// Build a deterministic synthetic corpus from `spec`.
pub fn synthesize_corpus(spec: &SynthSpec) -> Result<Corpus, CorpusError> {
    spec.validate()?;
    let schema = FeatureSchema::default();
    let idx = |f| {
        schema
            .index_of(f)
            .ok_or_else(|| CorpusError::InvalidSpec(format!("schema lacks {f}")))
    };
    let (loop_i, ramp_i, curve_i, score_i) = (
        idx(Feature::PieceLoop)?,
        idx(Feature::PieceRamp)?,
        idx(Feature::PieceCurve)?,
        idx(Feature::Score)?,
    );

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let layouts = random_layouts(&mut rng, spec.layouts, spec.genome_length, &spec.grid)?;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    let mut sessions = Vec::new();
    let mut truth = BTreeMap::new();
    let mut n = 0usize;
    for (label, arch) in spec.archetypes.iter().enumerate() {
        for _ in 0..arch.sessions {
            let track = &layouts[n % layouts.len()];
            let sim = SimConfig {
                evaluator_speed_multiplier: arch.skill,
                seed: spec.seed.wrapping_add(n as u64),
                ..spec.sim.clone()
            };
            let out = simulate_with_schema(track, &sim, &schema)
                .map_err(|e| CorpusError::InvalidSpec(e.to_string()))?;
            let windows = &out.trace.windows;
            let w = windows.len();
            let time = |i: usize| {
                if w > 1 {
                    i as f64 / (w - 1) as f64
                } else {
                    0.0
                }
            };

            let mut arousal = Vec::with_capacity(w);
            let mut level = arch.shape.level(0.0);
            arousal.push(level);
            for i in 1..w {
                let f = &windows[i].features;
                let events = f[loop_i] + f[ramp_i];
                let trend = arch.shape.level(time(i)) - arch.shape.level(time(i - 1));
                let pull = spec.reversion * (arch.shape.level(time(i - 1)) - level);
                let noise = spec.noise * normal.sample(&mut rng);
                level = (level + trend + pull + spec.rule.delta(events, f[curve_i]) + noise)
                    .clamp(0.0, 1.0);
                arousal.push(level);
            }

            let id = format!("{}-{:03}", arch.name, n);
            truth.insert(id.clone(), label);
            sessions.push(AnnotatorSession {
                annotator_id: id,
                features: windows.iter().map(|x| x.features.clone()).collect(),
                score: windows.iter().map(|x| x.features[score_i]).collect(),
                arousal,
            });
            n += 1;
        }
    }

    let mut corpus = Corpus::new(schema.names(), sessions);
    corpus.ground_truth = truth;
    Ok(corpus)
}

fn session_file_name(id: &str) -> String {
    let safe: String = id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("sessions/{safe}.csv")
}

/// Write `corpus` in the directory layout described in the module docs.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<(), CorpusError> {
    fs::create_dir_all(dir.join("sessions")).map_err(io_err(dir))?;
    let schema_path = dir.join("schema.txt");
    let mut schema = corpus.schema.join("\n");
    schema.push('\n');
    fs::write(&schema_path, schema).map_err(io_err(&schema_path))?;

    let mut manifest = String::new();
    for s in &corpus.sessions {
        let rel = session_file_name(&s.annotator_id);
        let path = dir.join(&rel);
        let csv_err = |e: csv::Error| CorpusError::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e.to_string()),
        };
        let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
        let mut header: Vec<String> = ["annotator_id", "window_index", "arousal", "score"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend((0..corpus.schema.len()).map(|i| format!("f_{i}")));
        w.write_record(&header).map_err(csv_err)?;
        for i in 0..s.len() {
            let mut row = vec![
                s.annotator_id.clone(),
                i.to_string(),
                s.arousal[i].to_string(),
                s.score[i].to_string(),
            ];
            row.extend(s.features[i].iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(io_err(&path))?;
        manifest.push_str(&rel);
        manifest.push('\n');
    }
    let manifest_path = dir.join("manifest.txt");
    fs::write(&manifest_path, manifest).map_err(io_err(&manifest_path))?;

    if !corpus.ground_truth.is_empty() {
        let mut labels = String::from("annotator_id,cluster\n");
        for (id, c) in &corpus.ground_truth {
            labels.push_str(&format!("{id},{c}\n"));
        }
        let path = dir.join("labels.csv");
        fs::write(&path, labels).map_err(io_err(&path))?;
    }
    Ok(())
}

fn parse_err(file: &Path, line: usize, message: impl Into<String>) -> CorpusError {
    CorpusError::Parse {
        file: file.display().to_string(),
        line,
        message: message.into(),
    }
}

fn read_session(path: &Path, dims: usize) -> Result<AnnotatorSession, CorpusError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| parse_err(path, 0, e.to_string()))?;
    let header = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    let mut expected: Vec<String> = ["annotator_id", "window_index", "arousal", "score"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    expected.extend((0..dims).map(|i| format!("f_{i}")));
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(parse_err(
            path,
            1,
            format!("expected header `{}`", expected.join(",")),
        ));
    }

    let mut session = AnnotatorSession {
        annotator_id: String::new(),
        features: Vec::new(),
        arousal: Vec::new(),
        score: Vec::new(),
    };
    for (row_no, record) in reader.records().enumerate() {
        let line = row_no + 2;
        let record = record.map_err(|e| parse_err(path, line, e.to_string()))?;
        let num = |col: usize| -> Result<f64, CorpusError> {
            let raw = &record[col];
            raw.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    parse_err(
                        path,
                        line,
                        format!("column {}: bad number `{raw}`", expected[col]),
                    )
                })
        };
        let id = &record[0];
        if row_no == 0 {
            session.annotator_id = id.to_string();
        } else if id != session.annotator_id {
            return Err(parse_err(
                path,
                line,
                "annotator_id changes within a session",
            ));
        }
        let index: usize = record[1]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line, "column window_index: bad integer"))?;
        if index != row_no {
            return Err(parse_err(
                path,
                line,
                format!("window_index {index}, expected {row_no}"),
            ));
        }
        session.arousal.push(num(2)?);
        session.score.push(num(3)?);
        session
            .features
            .push((0..dims).map(|c| num(4 + c)).collect::<Result<_, _>>()?);
    }
    if session.arousal.iter().any(|a| !(0.0..=1.0).contains(a)) {
        session.arousal = min_max(&session.arousal);
    }
    Ok(session)
}

/// Load a corpus from a directory or from its `manifest.txt`.
pub fn read_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let dir: PathBuf = if path.is_dir() {
        path.to_path_buf()
    } else {
        path.parent().map(Path::to_path_buf).unwrap_or_default()
    };
    let manifest_path = if path.is_dir() {
        dir.join("manifest.txt")
    } else {
        path.to_path_buf()
    };
    let schema_path = dir.join("schema.txt");
    let schema: Vec<String> = fs::read_to_string(&schema_path)
        .map_err(io_err(&schema_path))?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    if schema.is_empty() {
        return Err(parse_err(&schema_path, 1, "schema names no features"));
    }
    let manifest = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let mut sessions = Vec::new();
    for line in manifest.lines().map(str::trim).filter(|l| !l.is_empty()) {
        sessions.push(read_session(&dir.join(line), schema.len())?);
    }

    let mut corpus = Corpus::new(schema, sessions);
    let labels_path = dir.join("labels.csv");
    if labels_path.exists() {
        let mut reader = csv::Reader::from_path(&labels_path)
            .map_err(|e| parse_err(&labels_path, 0, e.to_string()))?;
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| parse_err(&labels_path, i + 2, e.to_string()))?;
            let cluster = record
                .get(1)
                .and_then(|c| c.trim().parse().ok())
                .ok_or_else(|| parse_err(&labels_path, i + 2, "bad cluster id"))?;
            corpus.ground_truth.insert(record[0].to_string(), cluster);
        }
    }
    Ok(corpus)
}
