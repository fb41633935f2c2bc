//! `endorse`: ingest a relation, precompute attribute statistics, stream
//! endorsing refinements for a claim, dump the exhaustive oracle and score
//! runs against it.
//!
//! The task file is a JSON object with three members:
//!
//! ```json
//! {
//!   "query":  {"function": "average", "group_by": "EducationLevel",
//!              "aggregate": "Income", "filter": [["Sex", "F"]]},
//!   "claim":  {"g1": "Master's degree", "g2": "Bachelor's degree"},
//!   "config": {"k": 100, "m": 2, "min_group": 30,
//!              "measures": ["anova", "mi", "embsim", "statsig", "coverage"],
//!              "deadline_ms": 5000, "seed": 0, "median_reference": "pooled"}
//! }
//! ```
//!
//! `function` is one of `count`, `sum`, `average`, `median`, `min`, `max`.
//! `group_by` and `aggregate` default to the schema's roles; `filter` and all
//! of `config` are optional. Command-line flags override `config`.
//!
//! Exit codes: 0 on completion or deadline, 2 on validation errors, 3 on
//! I/O errors. Errors are printed to stderr as one JSON object.

mod error;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use claim_endorse::engine::{JsonlSink, Record, WallClock};
use claim_endorse::engine::sink::Footer;
use claim_endorse::eval::{self, EventLog, RECALL_THRESHOLD};
use claim_endorse::{
    build_order, CacheParams, Dataset, EmbeddingTable, Engine, EngineOptions, PlanContext, PrecomputeCache, Schema,
    Strategy, Task, TaskSpec,
};
use log::{info, warn};
use serde_json::json;

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "endorse", version, about = "Find natural query refinements that endorse a claim")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load a relation and print its attribute summary.
    Ingest {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the attribute-level statistics cache.
    Precompute {
        #[command(flatten)]
        data: DataArgs,
        /// Largest combination arity to cache.
        #[arg(long, default_value_t = 2)]
        m: usize,
        /// Group size counted as large by the coverage heuristic (K).
        #[arg(long, default_value_t = claim_endorse::precompute::DEFAULT_LARGE_GROUP)]
        large_group: usize,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stream endorsing refinements as JSONL.
    Endorse {
        #[command(flatten)]
        run: RunArgs,
        /// anova | mi | embsim | statsig | coverage | serial | merged |
        /// sample[:<fraction>] | random | exhaustive
        #[arg(long, default_value = "merged")]
        strategy: String,
        /// Row fraction for the sampling strategy.
        #[arg(long)]
        sample: Option<f64>,
        /// Rank the final top-k over the most general refinements only.
        #[arg(long)]
        generality: bool,
        /// Kernel threads for static orders.
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Search every combination and append the full top-k sums as a footer.
    Oracle {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Score recall of a logged run against an oracle log, or compare
    /// strategies on a task.
    Eval {
        /// JSONL stream of the run to score.
        #[arg(long, requires = "oracle")]
        log: Option<PathBuf>,
        /// JSONL stream written by `oracle`.
        #[arg(long, requires = "log")]
        oracle: Option<PathBuf>,
        #[command(flatten)]
        run: OptionalRunArgs,
        /// Comma-separated strategies to compare.
        #[arg(long, value_delimiter = ',', conflicts_with = "log")]
        strategies: Vec<String>,
        /// Comma-separated seeds for seeded strategies.
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = RECALL_THRESHOLD)]
        threshold: f64,
    },
}

#[derive(Debug, Args)]
struct DataArgs {
    /// CSV relation.
    #[arg(long)]
    data: PathBuf,
    /// Schema JSON: roles, kinds and labels.
    #[arg(long)]
    schema: PathBuf,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    task: PathBuf,
    #[command(flatten)]
    opts: RunOpts,
}

#[derive(Debug, Args)]
struct OptionalRunArgs {
    #[arg(long, conflicts_with = "log")]
    data: Option<PathBuf>,
    #[arg(long, requires = "data")]
    schema: Option<PathBuf>,
    #[arg(long, requires = "data")]
    task: Option<PathBuf>,
    #[command(flatten)]
    opts: RunOpts,
}

#[derive(Debug, Args)]
struct RunOpts {
    /// Precompute cache; built on the fly (and written here) when missing.
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    /// Minimum size of both groups (M).
    #[arg(long)]
    min_group: Option<usize>,
    /// Group size counted as large by the coverage heuristic (K), used when
    /// the cache is built on the fly.
    #[arg(long, default_value_t = claim_endorse::precompute::DEFAULT_LARGE_GROUP)]
    large_group: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    deadline_ms: Option<u64>,
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Everything a search needs, loaded and validated.
struct Loaded {
    dataset: Dataset,
    task: Task,
    cache: PrecomputeCache,
    embeddings: Option<EmbeddingTable>,
}

impl Loaded {
    fn ctx(&self) -> PlanContext<'_> {
        PlanContext {
            dataset: &self.dataset,
            task: &self.task,
            cache: &self.cache,
            embeddings: self.embeddings.as_ref(),
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        if e.closed_pipe {
            return;
        }
        eprintln!("{}", e.to_json());
        std::process::exit(e.exit_code());
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Ingest { data, out } => cmd_ingest(&data, out.as_deref()),
        Command::Precompute {
            data,
            m,
            large_group,
            embeddings,
            out,
        } => cmd_precompute(&data, CacheParams { m, large_group }, embeddings.as_deref(), &out),
        Command::Endorse {
            run,
            strategy,
            sample,
            generality,
            workers,
        } => cmd_endorse(&run, &strategy, sample, generality, workers),
        Command::Oracle { run, workers } => cmd_oracle(&run, workers),
        Command::Eval {
            log,
            oracle,
            run,
            strategies,
            seeds,
            threshold,
        } => match (log, oracle) {
            (Some(log), Some(oracle)) => cmd_eval_logs(&log, &oracle, threshold, run.opts.out.as_deref()),
            _ => cmd_compare(&run, &strategies, &seeds, threshold),
        },
    }
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| CliError::file(p, e))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_text(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    let mut out = open_out(path)?;
    let target = path.unwrap_or(Path::new("<stdout>"));
    writeln!(out, "{text}")
        .and_then(|()| out.flush())
        .map_err(|e| CliError::file(target, e))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::file(path, e))
}

fn load_dataset(data: &DataArgs) -> Result<Dataset, CliError> {
    let schema = Schema::load(&data.schema)?;
    Ok(Dataset::ingest_csv(&data.data, &schema)?)
}

fn load_embeddings(path: Option<&Path>) -> Result<Option<EmbeddingTable>, CliError> {
    path.map(|p| EmbeddingTable::load(p).map_err(CliError::from)).transpose()
}

fn load_run(data: &DataArgs, task_path: &Path, opts: &RunOpts) -> Result<Loaded, CliError> {
    let dataset = load_dataset(data)?;
    let mut spec = TaskSpec::from_json(&read_text(task_path)?)?;
    let config = &mut spec.config;
    config.k = opts.k.unwrap_or(config.k);
    config.m = opts.m.unwrap_or(config.m);
    config.min_group = opts.min_group.unwrap_or(config.min_group);
    config.seed = opts.seed.unwrap_or(config.seed);
    if opts.deadline_ms.is_some() {
        config.deadline_ms = opts.deadline_ms;
    }
    let task = spec.validate(&dataset)?;
    let embeddings = load_embeddings(opts.embeddings.as_deref())?;

    let cache = match &opts.cache {
        Some(path) if path.exists() => {
            let cache = PrecomputeCache::load(path)?;
            cache.check(&dataset)?;
            cache.check_arity(task.config.m)?;
            cache
        }
        other => {
            warn!("no precompute cache found; building one for m={}", task.config.m);
            let params = CacheParams {
                m: task.config.m,
                large_group: opts.large_group,
            };
            let cache = PrecomputeCache::build(&dataset, params, embeddings.as_ref());
            if let Some(path) = other {
                cache.save(path)?;
            }
            cache
        }
    };
    Ok(Loaded {
        dataset,
        task,
        cache,
        embeddings,
    })
}

fn cmd_ingest(data: &DataArgs, out: Option<&Path>) -> Result<(), CliError> {
    let dataset = load_dataset(data)?;
    let attributes: Vec<_> = dataset
        .attributes()
        .iter()
        .map(|a| {
            json!({
                "name": a.name,
                "label": a.label,
                "kind": a.kind,
                "distinct": a.distinct_count,
                "has_null": a.has_null,
                "split": dataset.split_attributes().contains(&a.id),
            })
        })
        .collect();
    let summary = json!({
        "rows": dataset.row_count(),
        "fingerprint": dataset.fingerprint(),
        "aggregate": dataset.attribute(dataset.agg_attr()).name,
        "group_by": dataset.attribute(dataset.group_by()).name,
        "attributes": attributes,
    });
    write_text(out, &serde_json::to_string_pretty(&summary).expect("summary serializes"))
}

fn cmd_precompute(data: &DataArgs, params: CacheParams, embeddings: Option<&Path>, out: &Path) -> Result<(), CliError> {
    let dataset = load_dataset(data)?;
    let embeddings = load_embeddings(embeddings)?;
    let start = Instant::now();
    let cache = PrecomputeCache::build(&dataset, params, embeddings.as_ref());
    let elapsed = start.elapsed();
    cache.save(out)?;
    eprintln!(
        "precomputed {} combinations over {} attributes in {:.1} ms",
        cache.combos.len(),
        cache.attributes.len(),
        elapsed.as_secs_f64() * 1e3
    );
    Ok(())
}

fn parse_strategy(name: &str, sample: Option<f64>) -> Result<Strategy, CliError> {
    let strategy: Strategy = name.parse()?;
    match (strategy, sample) {
        (Strategy::Sample(_), Some(f)) => Ok(format!("sample:{f}").parse()?),
        (_, Some(_)) => Err(CliError::validation("strategy", "--sample requires --strategy sample")),
        (s, None) => Ok(s),
    }
}

fn cmd_endorse(run: &RunArgs, strategy: &str, sample: Option<f64>, generality: bool, workers: usize) -> Result<(), CliError> {
    let strategy = parse_strategy(strategy, sample)?;
    let loaded = load_run(&run.data, &run.task, &run.opts)?;
    let seed = loaded.task.config.seed;
    let mut order = build_order(&strategy, &loaded.ctx(), seed)?;
    let engine = Engine::new(
        &loaded.dataset,
        &loaded.task,
        &loaded.cache,
        loaded.embeddings.as_ref(),
        EngineOptions {
            generality,
            early_stop: None,
            workers,
            seed,
        },
    );
    let mut sink = JsonlSink::new(open_out(run.opts.out.as_deref())?);
    let summary = engine.run(order.as_mut(), &mut sink, &WallClock::start())?;
    info!(
        "{} refinements from {}/{} combinations ({:?})",
        summary.refinements_found, summary.combos_searched, summary.combos_total, summary.stop_reason
    );
    Ok(())
}

fn cmd_oracle(run: &RunArgs, workers: usize) -> Result<(), CliError> {
    let mut loaded = load_run(&run.data, &run.task, &run.opts)?;
    loaded.task.config.deadline_ms = None;
    let mut order = build_order(&Strategy::Exhaustive, &loaded.ctx(), loaded.task.config.seed)?;
    let engine = Engine::new(
        &loaded.dataset,
        &loaded.task,
        &loaded.cache,
        loaded.embeddings.as_ref(),
        EngineOptions {
            workers,
            seed: loaded.task.config.seed,
            ..EngineOptions::default()
        },
    );
    let mut sink = JsonlSink::new(open_out(run.opts.out.as_deref())?);
    let summary = engine.run(order.as_mut(), &mut sink, &WallClock::start())?;
    sink.write(&Record::Footer(Footer { s_full: summary.sums() }))?;
    Ok(())
}

fn cmd_eval_logs(log: &Path, oracle: &Path, threshold: f64, out: Option<&Path>) -> Result<(), CliError> {
    let run_log = EventLog::parse(&read_text(log)?)?;
    let oracle_log = EventLog::parse(&read_text(oracle)?)?;
    let curve = eval::recall_from_logs(&run_log, &oracle_log)?;
    let final_recall: serde_json::Map<String, serde_json::Value> = curve
        .points
        .keys()
        .map(|&k| (k.name().to_owned(), json!(curve.final_recall(k))))
        .collect();
    let report = json!({
        "threshold": threshold,
        "unit": "ms",
        "s_full": curve.s_full,
        "final_recall": final_recall,
        "time_to_threshold": curve.time_to_threshold(threshold),
        "curve": curve.points,
    });
    write_text(out, &serde_json::to_string_pretty(&report).expect("report serializes"))
}

fn cmd_compare(run: &OptionalRunArgs, strategies: &[String], seeds: &[u64], threshold: f64) -> Result<(), CliError> {
    let (Some(data), Some(schema), Some(task)) = (&run.data, &run.schema, &run.task) else {
        return Err(CliError::validation(
            "eval",
            "eval needs either --log and --oracle, or --data, --schema and --task",
        ));
    };
    if strategies.is_empty() {
        return Err(CliError::validation("eval", "--strategies must name at least one strategy"));
    }
    if seeds.is_empty() {
        return Err(CliError::validation("eval", "--seeds must list at least one seed"));
    }
    let strategies = strategies
        .iter()
        .map(|s| s.parse::<Strategy>())
        .collect::<Result<Vec<_>, _>>()?;
    let data = DataArgs {
        data: data.clone(),
        schema: schema.clone(),
    };
    let loaded = load_run(&data, task, &run.opts)?;
    let report = eval::compare_strategies(&loaded.ctx(), &strategies, seeds, threshold)?;
    eprint!("{}", report.table());
    write_text(run.opts.out.as_deref(), &report.to_json())
}
