//! Python bindings. Structured results come back as JSON strings.

use std::path::Path;

use affectrack_core::config::KvDoc;
use affectrack_core::eval::{self, Scenario, TargetTrace};
use affectrack_core::harness::{
    self, build_model, evaluator_for, prepare_corpus, run_designer, ClusterSelection, CorpusSource,
    DesignerKind, ExperimentConfig, ToyConfig,
};
use affectrack_core::render::{render_track_svg, RenderOptions};
use affectrack_core::track::TrackRecord;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

create_exception!(affectrack, AffectrackError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    AffectrackError::new_err(e.to_string())
}

fn parse<T: std::str::FromStr>(value: &str) -> PyResult<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(err)
}

/// Area between two traces on a unit time axis.
#[pyfunction]
fn area_between(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    eval::area_between(&a, &b).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (generated, target, feasible = true))]
fn reward(generated: Vec<f64>, target: Vec<f64>, feasible: bool) -> PyResult<f64> {
    eval::reward(&generated, &target, feasible).map_err(err)
}

#[pyfunction]
fn accuracy(generated: Vec<f64>, target: Vec<f64>) -> PyResult<f64> {
    eval::accuracy(&generated, &target).map_err(err)
}

/// Target values at `n` window centres for `max`, `min` or `fluct`.
#[pyfunction]
fn target_trace(scenario: &str, n: usize) -> PyResult<Vec<f64>> {
    Ok(TargetTrace::sample(parse::<Scenario>(scenario)?, n).values)
}

/// Write a synthetic corpus preset to `output`; returns its content hash.
#[pyfunction]
fn synth_corpus(preset: &str, output: &str) -> PyResult<String> {
    let spec = harness::synth_preset(preset).map_err(err)?;
    let corpus = CorpusSource::Synthetic(spec).load().map_err(err)?;
    affectrack_core::corpus::write_corpus(&corpus, Path::new(output)).map_err(err)?;
    Ok(corpus.content_hash())
}

/// Run one designer; returns the reported individual as JSON.
#[pyfunction]
#[pyo3(signature = (designer, scenario, cluster = "all", seed = 0, corpus = "synthetic:event_coupled", config = None))]
fn generate(
    designer: &str,
    scenario: &str,
    cluster: &str,
    seed: u64,
    corpus: &str,
    config: Option<&str>,
) -> PyResult<String> {
    let designer: DesignerKind = parse(designer)?;
    let scenario: Scenario = parse(scenario)?;
    let cluster: ClusterSelection = parse(cluster)?;
    let mut cfg = match config {
        Some(p) => ExperimentConfig::load(Path::new(p)).map_err(err)?,
        None => ExperimentConfig::default(),
    };
    cfg.corpus = CorpusSource::parse(corpus, Path::new("")).map_err(err)?;
    cfg.clusters = vec![cluster];
    let data = prepare_corpus(&cfg).map_err(err)?;
    let model = build_model(&data, cluster, &cfg).map_err(err)?;
    let out =
        run_designer(designer, &cfg, &evaluator_for(model, scenario, &cfg), seed).map_err(err)?;
    let ind = out.reported;
    let value = serde_json::json!({
        "genome": ind.genome.to_string(),
        "accuracy": ind.accuracy,
        "reward": ind.fitness,
        "feasible": ind.feasible,
        "arousal": ind.arousal,
        "evaluations": out.evaluations,
        "track": ind.track.map(|t| t.record()),
    });
    Ok(value.to_string())
}

/// Exhaustive report for a toy key-value config file.
#[pyfunction]
fn oracle(config: &str) -> PyResult<String> {
    let toy = ToyConfig::from_doc(&KvDoc::load(Path::new(config)).map_err(err)?).map_err(err)?;
    let evaluator = toy.evaluator().map_err(err)?;
    let report = harness::oracle(&evaluator, &toy.space, toy.scenario);
    serde_json::to_string(&report).map_err(err)
}

/// SVG for a track JSON document and its arousal trace.
#[pyfunction]
#[pyo3(signature = (track_json, trace, laps = 1))]
fn render_svg(track_json: &str, trace: Vec<f64>, laps: usize) -> PyResult<String> {
    let track = TrackRecord::from_json(track_json)
        .map_err(err)?
        .replay()
        .map_err(err)?;
    let opts = RenderOptions {
        laps,
        ..RenderOptions::default()
    };
    render_track_svg(&track, &trace, &opts).map_err(err)
}

#[pymodule]
fn affectrack(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("AffectrackError", m.py().get_type::<AffectrackError>())?;
    m.add_function(wrap_pyfunction!(area_between, m)?)?;
    m.add_function(wrap_pyfunction!(reward, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(target_trace, m)?)?;
    m.add_function(wrap_pyfunction!(synth_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(oracle, m)?)?;
    m.add_function(wrap_pyfunction!(render_svg, m)?)?;
    Ok(())
}
