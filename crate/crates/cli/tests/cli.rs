use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_affectrack"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_GRID: &str = "\
# small grid for tests
corpus = synthetic:event_coupled
designers = random, edpcg, edrl
scenarios = max, min
clusters = all
runs = 2
es.mu = 4
es.lambda = 8
es.generations = 4
go.budget = 32
output = out
";

#[test]
fn version_and_help_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let v = run(dir.path(), &["--version"]);
    assert_eq!(v.status.code(), Some(0));
    assert!(stdout(&v).starts_with("affectrack "));
    assert_eq!(run(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn generate_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = run(
            dir.path(),
            &[
                "generate",
                "--designer",
                "edrl",
                "--scenario",
                "max",
                "--seed",
                "7",
                "-o",
                out,
            ],
        );
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let a = fs::read(dir.path().join("a/elite.json")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b/elite.json")).unwrap());
    assert_eq!(
        fs::read(dir.path().join("a/arousal.csv")).unwrap(),
        fs::read(dir.path().join("b/arousal.csv")).unwrap()
    );
    let record: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(record["feasible"], true);
}

#[test]
fn experiment_writes_results_table() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("grid.cfg"), SMALL_GRID).unwrap();
    let o = run(dir.path(), &["--json", "experiment", "grid.cfg"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(summary["results"].as_array().unwrap().len(), 6);

    let table = fs::read_to_string(dir.path().join("out/results.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 7);
    assert!(
        lines[0].starts_with("designer,cluster,scenario,runs,failures,mean_accuracy,ci_half_width")
    );
    for f in [
        "manifest.json",
        "runs.csv",
        "expressive_range.csv",
        "summary.json",
    ] {
        assert!(dir.path().join("out").join(f).exists(), "{f}");
    }
}

#[test]
fn corpus_cluster_render_and_oracle_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let s = run(
        p,
        &["synth-corpus", "synthetic:three_archetypes", "-o", "corpus"],
    );
    assert_eq!(s.status.code(), Some(0), "{}", stderr(&s));
    assert!(p.join("corpus/manifest.txt").exists());

    let c = run(
        p,
        &[
            "--json",
            "cluster",
            "corpus",
            "-k",
            "3",
            "-o",
            "clusters.csv",
        ],
    );
    assert_eq!(c.status.code(), Some(0), "{}", stderr(&c));
    let v: serde_json::Value = serde_json::from_str(&stdout(&c)).unwrap();
    assert_eq!(v["assignments"].as_object().unwrap().len(), 30);
    assert!(fs::read_to_string(p.join("clusters.csv"))
        .unwrap()
        .starts_with("annotator_id,cluster"));

    let g = run(
        p,
        &[
            "generate",
            "--designer",
            "random",
            "--scenario",
            "fluct",
            "--seed",
            "1",
            "-o",
            "g",
        ],
    );
    assert_eq!(g.status.code(), Some(0), "{}", stderr(&g));
    let r = run(
        p,
        &[
            "render",
            "g/elite.json",
            "g/arousal.csv",
            "-o",
            "track.svg",
            "--laps",
            "3",
        ],
    );
    assert_eq!(r.status.code(), Some(0), "{}", stderr(&r));
    let svg = fs::read_to_string(p.join("track.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("class=\"legend\""));

    fs::write(
        p.join("toy.cfg"),
        "genome_length = 4\ntile_kinds = straight, curve_right, loop\n",
    )
    .unwrap();
    let o = run(p, &["--json", "oracle", "toy.cfg", "-o", "optimum.json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(p.join("optimum.json")).unwrap()).unwrap();
    assert_eq!(report["genomes"], 81);
    assert!(report["optimum_fitness"].as_f64().unwrap() <= 0.0);
}

#[test]
fn bad_input_exits_one_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("bad.cfg"), "runs = 3\nes.mu = lots\n").unwrap();
    let o = run(p, &["experiment", "bad.cfg"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("bad.cfg:2") && err.contains("es.mu"), "{err}");

    fs::write(p.join("typo.cfg"), "runz = 3\n").unwrap();
    let o = run(p, &["--json", "experiment", "typo.cfg"]);
    assert_eq!(o.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_str(stderr(&o).trim()).unwrap();
    assert_eq!(v["code"], 1);
    assert!(v["error"].as_str().unwrap().contains("runz"));

    assert_eq!(
        run(p, &["generate", "--designer", "nope", "--scenario", "max"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        run(p, &["render", "missing.json", "missing.csv", "-o", "x.svg"])
            .status
            .code(),
        Some(1)
    );
    fs::write(p.join("open.json"), r#"{"grid_size":[20,20],"origin":[10,10],"initial_heading":"East","genome":["straight"],"closure":[],"feasible":false}"#).unwrap();
    fs::write(p.join("t.csv"), "0.5\n").unwrap();
    let o = run(p, &["render", "open.json", "t.csv", "-o", "x.svg"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("infeasible"));
}
