//! Qualitative conclusions must not depend on the neighbour count.

use affectrack_core::designers::{evolve, EsConfig, Evaluate, SearchSpace};
use affectrack_core::eval::Scenario;
use affectrack_core::harness::{
    build_model, evaluator_for, prepare_corpus, ClusterSelection, ExperimentConfig,
};
use affectrack_core::track::Genome;

fn config(k: usize) -> ExperimentConfig {
    ExperimentConfig {
        knn_k: k,
        ..ExperimentConfig::default()
    }
}

#[test]
fn loops_beat_straights_for_maximise_at_every_k() {
    let straights: Genome = vec!["straight"; 10].join(",").parse().unwrap();
    let corpus = prepare_corpus(&config(5)).unwrap();
    let probe = evaluator_for(
        build_model(&corpus, ClusterSelection::All, &config(5)).unwrap(),
        Scenario::Maximise,
        &config(5),
    );
    let loops: Genome = [
        "loop,curve_right,loop,curve_right,loop,curve_right,straight,straight,curve_left,straight",
        "loop,curve_right,loop,curve_right,loop,straight,straight,straight,straight,straight",
        "loop,curve_right,straight,loop,curve_right,straight,loop,straight,straight,straight",
    ]
    .iter()
    .map(|g| g.parse().unwrap())
    .find(|g| probe.evaluate(g).feasible)
    .expect("a three-loop candidate closes");
    for k in [3, 5, 7] {
        let cfg = config(k);
        let model = build_model(&corpus, ClusterSelection::All, &cfg).unwrap();
        let max = evaluator_for(model.clone(), Scenario::Maximise, &cfg);
        let (s, l) = (max.evaluate(&straights), max.evaluate(&loops));
        assert!(s.feasible && l.feasible, "k={k}");
        assert!(
            l.fitness > s.fitness,
            "k={k}: loops {} vs straights {}",
            l.fitness,
            s.fitness
        );

        let min = evaluator_for(model, Scenario::Minimise, &cfg);
        assert!(
            min.evaluate(&straights).fitness > min.evaluate(&loops).fitness,
            "k={k}"
        );
    }
}

#[test]
fn maximise_elites_use_more_events_at_every_k() {
    let corpus = prepare_corpus(&config(5)).unwrap();
    let es = EsConfig {
        mu: 5,
        lambda: 20,
        generations: 10,
        ..EsConfig::default()
    };
    for k in [3, 5, 7] {
        let cfg = config(k);
        let model = build_model(&corpus, ClusterSelection::All, &cfg).unwrap();
        let events = |scenario| {
            let ev = evaluator_for(model.clone(), scenario, &cfg);
            (0..3)
                .map(|seed| {
                    let out = evolve(
                        &EsConfig { seed, ..es.clone() },
                        &SearchSpace::default(),
                        &ev,
                    )
                    .unwrap();
                    out.elite.counts().unwrap().event_tiles()
                })
                .sum::<usize>()
        };
        let (max, min) = (events(Scenario::Maximise), events(Scenario::Minimise));
        assert!(max > min, "k={k}: {max} vs {min}");
    }
}
