//! `run`, `compare` and `validate`.

use std::fs;
use std::path::{Path, PathBuf};

use boostvi::engine::{BlrEvaluator, Evaluator, SyntheticEvaluator, TraceWriter};
use boostvi::targets::{load_csv, synthetic_logistic, BlrModel, Dataset, GaussianMixtureTarget, SyntheticLogistic};
use boostvi::{boost, BviError, IterationTrace, Mixture, RunConfig, StepEngine, Target, Variant};
use rayon::prelude::*;

use crate::config::{CliConfig, ConfigError, TargetSpec};
use crate::summary::{per_iteration, summarize, Summary, SummaryRow};

/// Default output directory when neither `--out` nor `output` is given.
pub const OUT_ENV: &str = "BOOSTVI_OUT";
const FALLBACK_OUT: &str = "boostvi-out";

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Runtime(m) => write!(f, "run failed: {m}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub iterations: Option<usize>,
    pub no_wall_clock: bool,
}

pub fn load(path: &Path, ov: &Overrides) -> Result<CliConfig, Failure> {
    let mut cfg = CliConfig::load(path)?;
    if let Some(s) = ov.seed {
        cfg.seed = s;
    }
    if let Some(w) = ov.workers {
        cfg.workers = w;
    }
    if let Some(i) = ov.iterations {
        cfg.iterations = i;
    }
    if ov.no_wall_clock {
        cfg.wall_clock = false;
    }
    if let Some(o) = &ov.out {
        cfg.output = Some(o.clone());
    }
    cfg.check()?;
    Ok(cfg)
}

fn output_dir(cfg: &CliConfig) -> PathBuf {
    cfg.output
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(FALLBACK_OUT))
}

enum Built {
    Synthetic(GaussianMixtureTarget),
    Logistic { model: BlrModel, test_rows: Vec<Vec<f64>>, test_labels: Vec<u8> },
}

impl Built {
    fn new(spec: &TargetSpec) -> Result<Self, Failure> {
        let logistic = |ds: Dataset| {
            let model = BlrModel::from_train(&ds).map_err(runtime)?;
            let (test_rows, test_labels) = ds.test_rows();
            Ok(Built::Logistic { model, test_rows, test_labels })
        };
        match spec {
            TargetSpec::Bimodal { dim, offset } => Ok(Built::Synthetic(GaussianMixtureTarget::bimodal(*dim, *offset))),
            TargetSpec::GaussianMixture { means, scales, weights } => {
                GaussianMixtureTarget::new(means.clone(), scales.clone(), weights.clone())
                    .map(Built::Synthetic)
                    .map_err(|e| Failure::Config(format!("target: {e}")))
            }
            TargetSpec::SyntheticLogistic { dim, rows, label_noise, train_fraction, data_seed } => {
                let (ds, _) = synthetic_logistic(&SyntheticLogistic {
                    dim: *dim,
                    rows: *rows,
                    label_noise: *label_noise,
                    train_fraction: *train_fraction,
                    seed: *data_seed,
                })
                .map_err(|e| Failure::Config(format!("target: {e}")))?;
                logistic(ds)
            }
            TargetSpec::Csv { path, label_column, train_fraction, split_seed } => {
                let ds = load_csv(path, label_column, *train_fraction, *split_seed)
                    .map_err(|e| runtime(format!("{}: {e}", path.display())))?;
                logistic(ds)
            }
        }
    }

    fn target(&self) -> &dyn Target {
        match self {
            Built::Synthetic(t) => t,
            Built::Logistic { model, .. } => model,
        }
    }

    fn evaluator(&self, samples: usize) -> Box<dyn Evaluator + '_> {
        match self {
            Built::Synthetic(t) => Box::new(SyntheticEvaluator { target: t, samples }),
            Built::Logistic { model, test_rows, test_labels } => {
                Box::new(BlrEvaluator { train: model, test_rows, test_labels, samples })
            }
        }
    }
}

pub fn trace_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("trace_seed{seed}.jsonl"))
}

/// Writes the trace row by row, so a failed run leaves its partial trace.
fn run_replicate(built: &Built, cfg: &RunConfig, samples: usize, dir: &Path) -> Result<Vec<IterationTrace>, BviError> {
    let mut writer = TraceWriter::create(trace_path(dir, cfg.seed), dir.join(format!("trace_seed{}.csv", cfg.seed)))?;
    let evaluator = built.evaluator(samples);
    let mut observer = |row: &IterationTrace, _: &Mixture| writer.write(row);
    let out = boost(built.target(), cfg, evaluator.as_ref(), &mut observer)?;
    let mixture = serde_json::to_string_pretty(&out.mixture)?;
    fs::write(dir.join(format!("mixture_seed{}.json", cfg.seed)), mixture + "\n")?;
    Ok(out.trace)
}

struct Job {
    method: usize,
    dir: PathBuf,
    cfg: RunConfig,
}

/// Runs every job on a pool of `workers` threads and returns the traces in
/// job order.
fn execute(cfg: &CliConfig, built: &Built, jobs: &[Job]) -> Result<Vec<Vec<IterationTrace>>, Failure> {
    for job in jobs {
        fs::create_dir_all(&job.dir).map_err(|e| runtime(format!("{}: {e}", job.dir.display())))?;
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build().map_err(runtime)?;
    let results: Vec<_> = pool.install(|| {
        jobs.par_iter().map(|job| run_replicate(built, &job.cfg, cfg.eval_samples, &job.dir)).collect()
    });
    let mut traces = Vec::with_capacity(jobs.len());
    let mut errors = Vec::new();
    for (job, r) in jobs.iter().zip(results) {
        match r {
            Ok(t) => traces.push(t),
            Err(e) => errors.push(format!("{} seed {}: {e}", job.dir.display(), job.cfg.seed)),
        }
    }
    if errors.is_empty() {
        Ok(traces)
    } else {
        Err(Failure::Runtime(errors.join("; ")))
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(runtime)?;
    fs::write(path, text + "\n").map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn write_csv<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path).map_err(runtime)?;
    for r in rows {
        w.serialize(r).map_err(runtime)?;
    }
    w.flush().map_err(runtime)
}

fn method_label(variant: Variant, engine: StepEngine) -> String {
    crate::config::Method { name: None, variant, step_engine: engine }.label()
}

/// `run`: every replicate of the file's single method. Returns the summary
/// written to `summary.json`.
pub fn cmd_run(cfg: &CliConfig) -> Result<Summary, Failure> {
    let built = Built::new(&cfg.target)?;
    let dir = output_dir(cfg);
    let seeds = cfg.seeds();
    let jobs: Vec<Job> = seeds
        .iter()
        .map(|&s| Job { method: 0, dir: dir.clone(), cfg: cfg.run_config(cfg.variant, cfg.step_engine, s) })
        .collect();
    let traces = execute(cfg, &built, &jobs)?;
    let summary = summarize(&method_label(cfg.variant, cfg.step_engine), &seeds, &traces);
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// `compare`: every method over the shared seeds, one subdirectory per
/// method plus `summary.csv` with one row per method.
pub fn cmd_compare(cfg: &CliConfig) -> Result<Vec<Summary>, Failure> {
    if cfg.methods.is_empty() {
        return Err(Failure::Config("methods: compare needs at least one [[methods]] entry".into()));
    }
    let built = Built::new(&cfg.target)?;
    let root = output_dir(cfg);
    let seeds = cfg.seeds();
    let labels: Vec<String> = cfg.methods.iter().map(|m| m.label()).collect();
    let jobs: Vec<Job> = cfg
        .methods
        .iter()
        .enumerate()
        .flat_map(|(i, m)| {
            let dir = root.join(&labels[i]);
            seeds.iter().map(move |&s| Job { method: i, dir: dir.clone(), cfg: cfg.run_config(m.variant, m.step_engine, s) })
        })
        .collect();
    let traces = execute(cfg, &built, &jobs)?;

    let mut summaries = Vec::with_capacity(labels.len());
    for (i, label) in labels.iter().enumerate() {
        let mine: Vec<Vec<IterationTrace>> =
            jobs.iter().zip(&traces).filter(|(j, _)| j.method == i).map(|(_, t)| t.clone()).collect();
        let dir = root.join(label);
        let summary = summarize(label, &seeds, &mine);
        write_json(&dir.join("summary.json"), &summary)?;
        write_csv(&dir.join("per_iteration.csv"), &per_iteration(&mine))?;
        summaries.push(summary);
    }
    let rows: Vec<SummaryRow> = summaries.iter().map(SummaryRow::from).collect();
    write_csv(&root.join("summary.csv"), &rows)?;
    Ok(summaries)
}

/// `validate`: the resolved configuration as TOML.
pub fn cmd_validate(cfg: &CliConfig) -> String {
    cfg.to_toml()
}
