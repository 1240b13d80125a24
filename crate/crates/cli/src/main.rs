use std::fs;
use std::panic;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use affectrack_core::config::KvDoc;
use affectrack_core::corpus::{cluster_annotators, rand_index, write_corpus, ClusterOptions};
use affectrack_core::eval::Scenario;
use affectrack_core::harness::{
    self, build_model, evaluator_for, parse_trace_csv, prepare_corpus, run_designer,
    run_experiment, synth_spec_from_doc, write_artifacts, ClusterSelection, CorpusSource,
    DesignerKind, ExperimentConfig, ToyConfig,
};
use affectrack_core::render::{render_track_svg, RenderOptions};
use affectrack_core::track::TrackRecord;
use clap::{Parser, Subcommand};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(
    name = "affectrack",
    version,
    about = "Generate racetracks that follow a target arousal trace"
)]
struct Cli {
    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize an annotated corpus from a key-value spec or `synthetic:<preset>`.
    SynthCorpus {
        spec: String,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Cluster a corpus's annotators by trace shape and score.
    Cluster {
        corpus: String,
        #[arg(short, default_value_t = 3)]
        k: usize,
        /// Compare arousal traces as stored, without per-annotator rescaling.
        #[arg(long)]
        raw_arousal: bool,
        /// Write `annotator_id,cluster` rows here.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run one designer once and report its elite.
    Generate {
        #[arg(long)]
        designer: DesignerKind,
        #[arg(long)]
        scenario: Scenario,
        #[arg(long, default_value = "all")]
        cluster: ClusterSelection,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Corpus directory or `synthetic:<preset>`.
        #[arg(long, default_value = "synthetic:event_coupled")]
        corpus: String,
        /// Key-value overrides in the experiment format.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory for `elite.json` and `arousal.csv`.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run a designer × cluster × scenario × seed grid.
    Experiment {
        config: PathBuf,
        /// Overrides the config's `output`.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Draw a track tinted by an arousal trace.
    Render {
        track: PathBuf,
        trace: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Traversals the trace spans.
        #[arg(long, default_value_t = 1)]
        laps: usize,
    },
    /// Exhaustively score a small genome space.
    Oracle {
        config: PathBuf,
        /// Write the report as JSON here.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

/// Failure with its exit code: 1 for bad input, 2 for internal faults.
struct Failure {
    code: u8,
    message: String,
}

fn user<E: std::fmt::Display>(e: E) -> Failure {
    Failure {
        code: 1,
        message: e.to_string(),
    }
}

fn internal<E: std::fmt::Display>(e: E) -> Failure {
    Failure {
        code: 2,
        message: e.to_string(),
    }
}

struct Output {
    text: String,
    json: Value,
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| user(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, contents).map_err(|e| user(format!("{}: {e}", path.display())))
}

fn corpus_source(value: &str) -> Result<CorpusSource, Failure> {
    CorpusSource::parse(value, Path::new("")).map_err(user)
}

fn synth_corpus(spec: &str, output: &Path) -> Result<Output, Failure> {
    let spec = match spec.strip_prefix("synthetic:") {
        Some(preset) => harness::synth_preset(preset).map_err(user)?,
        None => synth_spec_from_doc(&KvDoc::load(Path::new(spec)).map_err(user)?).map_err(user)?,
    };
    let corpus = CorpusSource::Synthetic(spec).load().map_err(user)?;
    write_corpus(&corpus, output).map_err(user)?;
    let hash = corpus.content_hash();
    let windows: usize = corpus.sessions.iter().map(|s| s.arousal.len()).sum();
    Ok(Output {
        text: format!(
            "wrote {} sessions ({windows} windows) to {}\ncorpus hash {hash}",
            corpus.sessions.len(),
            output.display()
        ),
        json: json!({
            "output": output.display().to_string(),
            "sessions": corpus.sessions.len(),
            "windows": windows,
            "corpus_hash": hash,
        }),
    })
}

fn cluster(
    corpus: &str,
    k: usize,
    raw_arousal: bool,
    output: Option<&Path>,
) -> Result<Output, Failure> {
    let corpus = corpus_source(corpus)?.load().map_err(user)?;
    let options = ClusterOptions {
        k,
        renormalize_arousal: !raw_arousal,
        ..ClusterOptions::default()
    };
    let labels = cluster_annotators(&corpus, &options).map_err(user)?;
    let agreement = (!corpus.ground_truth.is_empty()).then(|| {
        let (found, truth): (Vec<usize>, Vec<usize>) = labels
            .iter()
            .filter_map(|(id, c)| corpus.ground_truth.get(id).map(|t| (*c, *t)))
            .unzip();
        rand_index(&found, &truth)
    });
    let mut rows = String::from("annotator_id,cluster\n");
    for (id, c) in &labels {
        rows.push_str(&format!("{id},{c}\n"));
    }
    if let Some(path) = output {
        write_file(path, &rows)?;
    }
    let mut sizes = vec![0usize; k];
    for c in labels.values() {
        sizes[*c] += 1;
    }
    let mut text = rows.trim_end().to_string();
    text.push_str(&format!("\ncluster sizes {sizes:?}"));
    if let Some(a) = agreement {
        text.push_str(&format!("\nagreement with planted labels {a:.3}"));
    }
    Ok(Output {
        text,
        json: json!({ "assignments": labels, "sizes": sizes, "agreement": agreement }),
    })
}

#[allow(clippy::too_many_arguments)]
fn generate(
    designer: DesignerKind,
    scenario: Scenario,
    cluster: ClusterSelection,
    seed: u64,
    corpus: &str,
    config: Option<&Path>,
    output: Option<&Path>,
) -> Result<Output, Failure> {
    let mut cfg = match config {
        Some(p) => ExperimentConfig::load(p).map_err(user)?,
        None => ExperimentConfig::default(),
    };
    if config.is_none() || corpus != "synthetic:event_coupled" {
        cfg.corpus = corpus_source(corpus)?;
    }
    cfg.clusters = vec![cluster];
    cfg.scenarios = vec![scenario];
    let data = prepare_corpus(&cfg).map_err(user)?;
    let model = build_model(&data, cluster, &cfg).map_err(user)?;
    let evaluator = evaluator_for(model, scenario, &cfg);
    let out = run_designer(designer, &cfg, &evaluator, seed).map_err(user)?;
    let ind = &out.reported;
    let track_json = ind.track.as_ref().map(|t| t.to_json());
    if let Some(dir) = output {
        if let Some(j) = &track_json {
            write_file(&dir.join("elite.json"), j)?;
        }
        write_file(&dir.join("arousal.csv"), harness::trace_csv(&ind.arousal))?;
    }
    let mut text = format!(
        "{designer} {scenario} cluster {cluster} seed {seed}\ngenome {}\naccuracy {:.2}  reward {:.4}  evaluations {}",
        ind.genome, ind.accuracy, ind.fitness, out.evaluations
    );
    if let Some(w) = &out.warning {
        text.push_str(&format!("\nwarning: {w}"));
    }
    Ok(Output {
        text,
        json: json!({
            "designer": designer,
            "scenario": scenario,
            "cluster": cluster.to_string(),
            "seed": seed,
            "genome": ind.genome.to_string(),
            "accuracy": ind.accuracy,
            "reward": ind.fitness,
            "feasible": ind.feasible,
            "evaluations": out.evaluations,
            "warning": out.warning,
            "track": track_json.map(|j| serde_json::from_str::<Value>(&j).expect("track json")),
        }),
    })
}

fn experiment(config: &Path, output: Option<PathBuf>) -> Result<Output, Failure> {
    let mut cfg = ExperimentConfig::load(config).map_err(user)?;
    if output.is_some() {
        cfg.output = output;
    }
    let outcome = run_experiment(&cfg).map_err(user)?;
    if let Some(dir) = &cfg.output {
        write_artifacts(&cfg, &outcome, dir).map_err(user)?;
    }
    let mut text = String::new();
    for r in &outcome.table.rows {
        text.push_str(&format!(
            "{:<7} cluster {:<3} {:<5} accuracy {:>6.2} ± {:<5.2} reward {:>8.4}  runs {} failed {}{}\n",
            r.designer.to_string(),
            r.cluster.to_string(),
            r.scenario.short_name(),
            r.mean_accuracy,
            r.ci_half_width,
            r.mean_fitness,
            r.runs,
            r.failures,
            r.vs_random.map_or(String::new(), |s| format!("  vs random: {s}")),
        ));
    }
    if let Some(dir) = &cfg.output {
        text.push_str(&format!("artifacts in {}", dir.display()));
    }
    Ok(Output {
        text: text.trim_end().to_string(),
        json: json!({
            "results": outcome.table.rows,
            "corpus_hash": outcome.corpus_hash,
            "output": cfg.output.map(|p| p.display().to_string()),
        }),
    })
}

fn render(track: &Path, trace: &Path, output: &Path, laps: usize) -> Result<Output, Failure> {
    let read = |p: &Path| fs::read_to_string(p).map_err(|e| user(format!("{}: {e}", p.display())));
    let record = TrackRecord::from_json(&read(track)?)
        .map_err(|e| user(format!("{}: {e}", track.display())))?;
    let track_obj = record
        .replay()
        .map_err(|e| user(format!("{}: {e}", track.display())))?;
    let values =
        parse_trace_csv(&read(trace)?).map_err(|e| user(format!("{}: {e}", trace.display())))?;
    let opts = RenderOptions {
        laps,
        ..RenderOptions::default()
    };
    let svg = render_track_svg(&track_obj, &values, &opts).map_err(user)?;
    write_file(output, svg)?;
    Ok(Output {
        text: format!("wrote {}", output.display()),
        json: json!({ "output": output.display().to_string(), "pieces": track_obj.pieces.len() }),
    })
}

fn oracle(config: &Path, output: Option<&Path>) -> Result<Output, Failure> {
    let toy = ToyConfig::from_doc(&KvDoc::load(config).map_err(user)?).map_err(user)?;
    let evaluator = toy.evaluator().map_err(user)?;
    let report = harness::oracle(&evaluator, &toy.space, toy.scenario);
    let json = serde_json::to_value(&report).map_err(internal)?;
    if let Some(p) = output {
        write_file(
            p,
            serde_json::to_string_pretty(&json).map_err(internal)? + "\n",
        )?;
    }
    Ok(Output {
        text: format!(
            "{} genomes, {} feasible\noptimum reward {}\noptimal: {}",
            report.genomes,
            report.feasible,
            report.optimum_fitness,
            report.optimal_genomes.join(" | ")
        ),
        json,
    })
}

fn dispatch(command: Command) -> Result<Output, Failure> {
    match command {
        Command::SynthCorpus { spec, output } => synth_corpus(&spec, &output),
        Command::Cluster {
            corpus,
            k,
            raw_arousal,
            output,
        } => cluster(&corpus, k, raw_arousal, output.as_deref()),
        Command::Generate {
            designer,
            scenario,
            cluster,
            seed,
            corpus,
            config,
            output,
        } => generate(
            designer,
            scenario,
            cluster,
            seed,
            &corpus,
            config.as_deref(),
            output.as_deref(),
        ),
        Command::Experiment { config, output } => experiment(&config, output),
        Command::Render {
            track,
            trace,
            output,
            laps,
        } => render(&track, &trace, &output, laps),
        Command::Oracle { config, output } => oracle(&config, output.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let json_mode = cli.json;
    panic::set_hook(Box::new(|_| {}));
    let result = panic::catch_unwind(|| dispatch(cli.command)).unwrap_or_else(|p| {
        let message = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "unknown panic".into());
        Err(internal(format!("internal error: {message}")))
    });
    match result {
        Ok(out) => {
            if json_mode {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&out.json).expect("json output")
                );
            } else {
                println!("{}", out.text);
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            if json_mode {
                eprintln!("{}", json!({ "error": f.message, "code": f.code }));
            } else {
                eprintln!("error: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}
