//! Distance-weighted nearest-neighbour arousal model over window pairs.
//!
//! Each entry is a change pair from the corpus: the previous and current
//! window feature vectors concatenated in that order, labelled 1 when
//! arousal rose and 0 when it fell.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{
    build_pairs, downsample_changes, hex, normalize, Corpus, CorpusError, FeatureBounds,
    PREFERENCE_THRESHOLD,
};
use crate::sim::StateTrace;

pub const DEFAULT_K: usize = 5;
pub const WEIGHT_EPSILON: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum KnnError {
    #[error("model has no entries")]
    EmptyModel,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("k = {k} exceeds the {entries} available entries")]
    KTooLarge { k: usize, entries: usize },
    #[error("cluster {0} has no sessions")]
    UnknownCluster(usize),
    #[error("state trace needs at least 2 windows, got {0}")]
    TraceTooShort(usize),
    #[error("query has {got} features, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("trace schema does not match the model schema")]
    SchemaMismatch,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Provenance record for experiment manifests.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub k: usize,
    pub entry_count: usize,
    pub cluster_filter: Option<usize>,
    pub schema_hash: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KnnModel {
    /// Row-major entry vectors, `2 * features` values each.
    data: Vec<f64>,
    labels: Vec<u8>,
    dims: usize,
    k: usize,
    bounds: Vec<FeatureBounds>,
    schema: Vec<String>,
    cluster_filter: Option<usize>,
}

impl KnnModel {
    /// Build from labelled vectors that are already in model space.
    pub fn from_entries(
        entries: Vec<(Vec<f64>, u8)>,
        k: usize,
        bounds: Vec<FeatureBounds>,
        schema: Vec<String>,
    ) -> Result<KnnModel, KnnError> {
        if entries.is_empty() {
            return Err(KnnError::EmptyModel);
        }
        if k == 0 {
            return Err(KnnError::ZeroK);
        }
        if k > entries.len() {
            return Err(KnnError::KTooLarge {
                k,
                entries: entries.len(),
            });
        }
        let dims = entries[0].0.len();
        let mut data = Vec::with_capacity(dims * entries.len());
        let mut labels = Vec::with_capacity(entries.len());
        for (v, l) in entries {
            if v.len() != dims {
                return Err(KnnError::DimensionMismatch {
                    expected: dims,
                    got: v.len(),
                });
            }
            data.extend(v);
            labels.push(l.min(1));
        }
        Ok(KnnModel {
            data,
            labels,
            dims,
            k,
            bounds,
            schema,
            cluster_filter: None,
        })
    }

    /// Build from the change pairs of `corpus`, optionally one cluster only.
    ///
    /// Features are min-max normalized over the selected sessions, so the
    /// model never depends on sessions outside its cluster.
    pub fn from_corpus(
        corpus: &Corpus,
        cluster: Option<usize>,
        k: usize,
    ) -> Result<KnnModel, KnnError> {
        Self::from_corpus_with_threshold(corpus, cluster, k, PREFERENCE_THRESHOLD)
    }

    pub fn from_corpus_with_threshold(
        corpus: &Corpus,
        cluster: Option<usize>,
        k: usize,
        threshold: f64,
    ) -> Result<KnnModel, KnnError> {
        let sessions: Vec<_> = corpus.sessions_in(cluster).into_iter().cloned().collect();
        if sessions.is_empty() {
            return match cluster {
                Some(c) => Err(KnnError::UnknownCluster(c)),
                None => Err(KnnError::EmptyModel),
            };
        }
        let subset = Corpus {
            schema: corpus.schema.clone(),
            sessions,
            pairs: Vec::new(),
            normalization_bounds: corpus.normalization_bounds.clone(),
            normalized: corpus.normalized,
            ..Corpus::default()
        };
        let subset = normalize(&subset);
        let pairs = build_pairs(&subset.sessions, threshold)?;
        let changes = match downsample_changes(&pairs) {
            Ok(c) => c,
            Err(CorpusError::EmptyAfterDownsample) => return Err(KnnError::EmptyModel),
            Err(e) => return Err(e.into()),
        };
        let entries = changes
            .into_iter()
            .map(|c| {
                let mut v = c.prev_features;
                v.extend(c.cur_features);
                (v, c.label)
            })
            .collect();
        let mut model = Self::from_entries(entries, k, subset.normalization_bounds, subset.schema)?;
        model.cluster_filter = cluster;
        Ok(model)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn cluster_filter(&self) -> Option<usize> {
        self.cluster_filter
    }

    pub fn bounds(&self) -> &[FeatureBounds] {
        &self.bounds
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn entry(&self, i: usize) -> (&[f64], u8) {
        (
            &self.data[i * self.dims..(i + 1) * self.dims],
            self.labels[i],
        )
    }

    /// Same entries with labels flipped.
    pub fn with_flipped_labels(&self) -> KnnModel {
        let mut m = self.clone();
        for l in &mut m.labels {
            *l = 1 - *l;
        }
        m
    }

    pub fn with_k(&self, k: usize) -> Result<KnnModel, KnnError> {
        if k == 0 {
            return Err(KnnError::ZeroK);
        }
        if k > self.len() {
            return Err(KnnError::KTooLarge {
                k,
                entries: self.len(),
            });
        }
        Ok(KnnModel { k, ..self.clone() })
    }

    /// `k` nearest entries as `(distance, index)`, closest first, ties by index.
    pub fn neighbours(&self, query: &[f64]) -> Result<Vec<(f64, usize)>, KnnError> {
        if query.len() != self.dims {
            return Err(KnnError::DimensionMismatch {
                expected: self.dims,
                got: query.len(),
            });
        }
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(self.k + 1);
        for (i, row) in self.data.chunks_exact(self.dims).enumerate() {
            let d2: f64 = row.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
            if best.len() == self.k && d2 >= best[self.k - 1].0 {
                continue;
            }
            let at = best.partition_point(|&(d, _)| d <= d2);
            best.insert(at, (d2, i));
            best.truncate(self.k);
        }
        Ok(best.into_iter().map(|(d2, i)| (d2.sqrt(), i)).collect())
    }

    /// Predicted arousal change for a query already in model space.
    pub fn predict(&self, query: &[f64]) -> Result<f64, KnnError> {
        Ok(weighted_vote(&self.neighbours(query)?, &self.labels))
    }

    /// Predict from two raw telemetry windows.
    pub fn predict_windows(&self, prev: &[f64], cur: &[f64]) -> Result<f64, KnnError> {
        let query = self.query_vector(prev, cur)?;
        self.predict(&query)
    }

    /// Normalize two raw windows and concatenate them as `(prev, cur)`.
    pub fn query_vector(&self, prev: &[f64], cur: &[f64]) -> Result<Vec<f64>, KnnError> {
        let features = self.dims / 2;
        for w in [prev, cur] {
            if w.len() != features {
                return Err(KnnError::DimensionMismatch {
                    expected: features,
                    got: w.len(),
                });
            }
        }
        Ok(prev
            .iter()
            .chain(cur)
            .enumerate()
            .map(|(i, &v)| match self.bounds.get(i % features) {
                Some(b) => b.apply(v),
                None => v,
            })
            .collect())
    }

    /// One prediction per consecutive window pair of a simulated trace.
    pub fn arousal_trace(&self, trace: &StateTrace) -> Result<Vec<f64>, KnnError> {
        if !self.schema.is_empty() && trace.schema.names() != self.schema {
            return Err(KnnError::SchemaMismatch);
        }
        let w = &trace.windows;
        if w.len() < 2 {
            return Err(KnnError::TraceTooShort(w.len()));
        }
        w.windows(2)
            .map(|p| self.predict_windows(&p[0].features, &p[1].features))
            .collect()
    }

    pub fn summary(&self) -> ModelSummary {
        let mut h = Sha256::new();
        for name in &self.schema {
            h.update(name.as_bytes());
            h.update([b'\n']);
        }
        ModelSummary {
            k: self.k,
            entry_count: self.len(),
            cluster_filter: self.cluster_filter,
            schema_hash: hex(&h.finalize()),
        }
    }
}

/// Inverse-distance weighted mean of the neighbours' labels; exact matches
/// take over when present.
pub fn weighted_vote(neighbours: &[(f64, usize)], labels: &[u8]) -> f64 {
    let exact: Vec<f64> = neighbours
        .iter()
        .filter(|(d, _)| *d == 0.0)
        .map(|&(_, i)| labels[i] as f64)
        .collect();
    if !exact.is_empty() {
        return exact.iter().sum::<f64>() / exact.len() as f64;
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for &(d, i) in neighbours {
        let w = 1.0 / (d + WEIGHT_EPSILON);
        num += w * labels[i] as f64;
        den += w;
    }
    (num / den).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::AnnotatorSession;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn model(entries: Vec<(Vec<f64>, u8)>, k: usize) -> KnnModel {
        KnnModel::from_entries(entries, k, Vec::new(), Vec::new()).unwrap()
    }

    /// Full scan, full sort.
    fn oracle(m: &KnnModel, q: &[f64]) -> f64 {
        let mut all: Vec<(f64, usize)> = (0..m.len())
            .map(|i| {
                let (row, _) = m.entry(i);
                let d2: f64 = row.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2.sqrt(), i)
            })
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.truncate(m.k());
        weighted_vote(&all, &m.labels)
    }

    #[test]
    fn single_entry_always_wins() {
        let m = model(vec![(vec![0.0, 0.0], 1)], 1);
        assert_eq!(m.predict(&[0.7, 0.1]).unwrap(), 1.0);
    }

    #[test]
    fn equidistant_pair_averages() {
        let m = model(vec![(vec![0.0, 0.0], 0), (vec![1.0, 1.0], 1)], 2);
        assert_eq!(m.predict(&[0.5, 0.5]).unwrap(), 0.5);
    }

    #[test]
    fn exact_match_dominates() {
        let m = model(
            vec![
                (vec![0.2, 0.2], 0),
                (vec![0.21, 0.2], 1),
                (vec![0.2, 0.22], 1),
            ],
            3,
        );
        assert_eq!(m.predict(&[0.2, 0.2]).unwrap(), 0.0);
    }

    #[test]
    fn construction_errors() {
        assert!(matches!(
            KnnModel::from_entries(vec![], 1, vec![], vec![]),
            Err(KnnError::EmptyModel)
        ));
        assert!(matches!(
            KnnModel::from_entries(vec![(vec![0.0], 1)], 2, vec![], vec![]),
            Err(KnnError::KTooLarge { k: 2, entries: 1 })
        ));
        assert!(matches!(
            KnnModel::from_entries(vec![(vec![0.0], 1)], 0, vec![], vec![]),
            Err(KnnError::ZeroK)
        ));
    }

    fn session(id: &str, rows: &[[f64; 2]], arousal: &[f64]) -> AnnotatorSession {
        AnnotatorSession {
            annotator_id: id.into(),
            features: rows.iter().map(|r| r.to_vec()).collect(),
            arousal: arousal.to_vec(),
            score: vec![0.0; arousal.len()],
        }
    }

    #[test]
    fn constant_trace_on_exact_entry() {
        use crate::sim::{FeatureSchema, TelemetryWindow};
        let schema = FeatureSchema::from_names(&["speed", "piece_loop"]).unwrap();
        let corpus = Corpus::new(
            schema.names(),
            vec![session(
                "a",
                &[[1.0, 0.0], [1.0, 1.0], [3.0, 1.0], [1.0, 1.0]],
                &[0.2, 0.6, 0.2, 0.8],
            )],
        );
        let m = KnnModel::from_corpus(&corpus, None, 1).unwrap();
        assert_eq!(m.len(), 3);
        let trace = StateTrace {
            schema,
            windows: (0..5)
                .map(|i| TelemetryWindow {
                    features: vec![3.0, 1.0],
                    window_index: i,
                })
                .collect(),
        };
        let got = m.arousal_trace(&trace).unwrap();
        assert_eq!(got.len(), 4);
        assert!(got.iter().all(|&v| v == got[0] && (0.0..=1.0).contains(&v)));

        let exact = KnnModel::from_entries(
            vec![(vec![1.0, 1.0, 1.0, 1.0], 1), (vec![0.0; 4], 0)],
            1,
            vec![],
            trace.schema.names(),
        )
        .unwrap();
        let constant = StateTrace {
            schema: trace.schema.clone(),
            windows: (0..4)
                .map(|i| TelemetryWindow {
                    features: vec![1.0, 1.0],
                    window_index: i,
                })
                .collect(),
        };
        assert_eq!(exact.arousal_trace(&constant).unwrap(), vec![1.0; 3]);
        let short = StateTrace {
            schema: trace.schema.clone(),
            windows: constant.windows[..1].to_vec(),
        };
        assert!(matches!(
            exact.arousal_trace(&short),
            Err(KnnError::TraceTooShort(1))
        ));
    }

    #[test]
    fn summary_reports_provenance() {
        let m = KnnModel::from_entries(vec![(vec![0.0, 1.0], 1)], 1, vec![], vec!["speed".into()])
            .unwrap();
        let s = m.summary();
        assert_eq!((s.k, s.entry_count, s.cluster_filter), (1, 1, None));
        assert_eq!(s.schema_hash.len(), 64);
    }

    fn entries_strategy() -> impl Strategy<Value = Vec<(Vec<f64>, u8)>> {
        (1usize..6).prop_flat_map(|dims| {
            prop::collection::vec((prop::collection::vec(0.0f64..1.0, dims), 0u8..2), 7..120)
        })
    }

    proptest! {
        #[test]
        fn matches_full_scan_oracle(entries in entries_strategy(), k_pick in 0usize..4, q in prop::collection::vec(0.0f64..1.0, 6)) {
            let k = [1, 3, 5, 7][k_pick];
            let dims = entries[0].0.len();
            let m = model(entries, k);
            let q = &q[..dims];
            prop_assert_eq!(m.predict(q).unwrap().to_bits(), oracle(&m, q).to_bits());
        }

        #[test]
        fn predictions_stay_in_unit_range(entries in entries_strategy(), q in prop::collection::vec(0.0f64..1.0, 6)) {
            let dims = entries[0].0.len();
            let m = model(entries, 5);
            let p = m.predict(&q[..dims]).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
        }

        #[test]
        fn flipping_labels_mirrors_predictions(entries in entries_strategy(), q in prop::collection::vec(0.0f64..1.0, 6)) {
            let dims = entries[0].0.len();
            let m = model(entries, 5);
            let p = m.predict(&q[..dims]).unwrap();
            let f = m.with_flipped_labels().predict(&q[..dims]).unwrap();
            prop_assert!((p + f - 1.0).abs() < 1e-12);
        }

        #[test]
        fn cluster_filter_ignores_other_clusters(
            traces in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 6), 4..8),
            q in prop::collection::vec(-1.0f64..2.0, 4),
        ) {
            let sessions: Vec<_> = traces.iter().enumerate().map(|(i, t)| {
                let rows: Vec<[f64; 2]> = t.iter().map(|&a| [a * 3.0 + i as f64, 1.0 - a]).collect();
                let arousal: Vec<f64> = t.iter().map(|&a| a).collect();
                session(&format!("s{i}"), &rows, &arousal)
            }).collect();
            let mut full = Corpus::new(vec!["x".into(), "y".into()], sessions.clone());
            full.cluster_assignments = sessions.iter().enumerate().map(|(i, s)| (s.annotator_id.clone(), i % 2)).collect::<BTreeMap<_, _>>();
            let mut only = full.clone();
            only.sessions.retain(|s| full.cluster_assignments[&s.annotator_id] == 0);
            let a = KnnModel::from_corpus(&full, Some(0), 1);
            let b = KnnModel::from_corpus(&only, Some(0), 1);
            match (a, b) {
                (Ok(a), Ok(b)) => {
                    prop_assert_eq!(a.predict_windows(&q[..2], &q[2..]).unwrap(), b.predict_windows(&q[..2], &q[2..]).unwrap());
                }
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "filtered and pruned corpora disagree on buildability"),
            }
        }
    }
}
