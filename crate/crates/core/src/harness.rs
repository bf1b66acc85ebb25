//! Experiment configs, task construction, and run persistence.
//!
//! Configs are `key = value` lines with dotted keys; `#` starts a comment.
//! A written manifest is itself a valid config that reproduces every run.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use indexmap::IndexMap;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dag::{DagError, ProblemInstance};
use crate::gfn::{train, OptimizerKind, Policy, TrainConfig, TrainError, TrainedRun, Variant};
use crate::metrics::{Evaluator, FcsConfig, MetricsConfig, MetricsRecord, CSV_HEADER};
use crate::par::{map_indexed, Execution};
use crate::rewards::{
    generate_ba, generate_er, load_edge_list, CoverageGraph, CoverageReward, RewardError, RewardOracle, SetFunction,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`")]
    InvalidValue { key: String, value: String },
    #[error("missing config key `{0}`")]
    Missing(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Dag(#[from] DagError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TaskSpec {
    Er { n: usize, p: f64, seed: u64 },
    Ba { n: usize, attach_count: usize, seed: u64 },
    EdgeList { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: TaskSpec,
    pub cardinality: usize,
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
    /// Template; `variant`, `seed` and `features` are set per run.
    pub train: TrainConfig,
    pub use_degree_feature: bool,
    pub closed_neighborhood: bool,
    pub metrics: MetricsConfig,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: TaskSpec::Er {
                n: 60,
                p: 0.08,
                seed: 0,
            },
            cardinality: 5,
            variants: vec![Variant::Classical, Variant::Subo, Variant::SuboF],
            seeds: vec![0],
            train: TrainConfig::default(),
            use_degree_feature: false,
            closed_neighborhood: false,
            metrics: MetricsConfig::default(),
            out_dir: None,
        }
    }
}

/// Parses `key = value` lines, keeping their order; later keys win.
pub fn parse_key_values(text: &str) -> Result<IndexMap<String, String>, HarnessError> {
    let mut map = IndexMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| HarnessError::Syntax {
            line: i + 1,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        let k = k.trim();
        if k.is_empty() {
            return Err(HarnessError::Syntax {
                line: i + 1,
                message: "empty key".into(),
            });
        }
        map.insert(k.to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, HarnessError> {
    value.parse().map_err(|_| HarnessError::InvalidValue {
        key: key.into(),
        value: value.into(),
    })
}

fn parse_optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>, HarnessError> {
    match value {
        "none" | "unlimited" | "" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, HarnessError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn show_optional<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), T::to_string)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut cfg = Self::default();
        let map = parse_key_values(text)?;
        // the task kind decides which parameters are meaningful
        if let Some(kind) = map.get("task.kind") {
            cfg.set("task.kind", kind)?;
        }
        for (k, v) in &map {
            if k != "task.kind" {
                cfg.set(k, v)?;
            }
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg = Self::parse(&text)?;
        // relative edge-list paths resolve against the config's directory
        if let TaskSpec::EdgeList { path: p } = &mut cfg.task {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    /// Sets one key; used for both file entries and command-line overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        let t = &mut self.train;
        let m = &mut self.metrics;
        match key {
            "task.kind" => {
                self.task = match value {
                    "er" => TaskSpec::Er { n: 60, p: 0.08, seed: 0 },
                    "ba" => TaskSpec::Ba {
                        n: 60,
                        attach_count: 2,
                        seed: 0,
                    },
                    "edge_list" => TaskSpec::EdgeList { path: PathBuf::new() },
                    _ => {
                        return Err(HarnessError::InvalidValue {
                            key: key.into(),
                            value: value.into(),
                        })
                    }
                }
            }
            "task.n" => match &mut self.task {
                TaskSpec::Er { n, .. } | TaskSpec::Ba { n, .. } => *n = parse(key, value)?,
                TaskSpec::EdgeList { .. } => return Err(HarnessError::UnknownKey(key.into())),
            },
            "task.seed" => match &mut self.task {
                TaskSpec::Er { seed, .. } | TaskSpec::Ba { seed, .. } => *seed = parse(key, value)?,
                TaskSpec::EdgeList { .. } => return Err(HarnessError::UnknownKey(key.into())),
            },
            "task.p" => match &mut self.task {
                TaskSpec::Er { p, .. } => *p = parse(key, value)?,
                _ => return Err(HarnessError::UnknownKey(key.into())),
            },
            "task.attach_count" => match &mut self.task {
                TaskSpec::Ba { attach_count, .. } => *attach_count = parse(key, value)?,
                _ => return Err(HarnessError::UnknownKey(key.into())),
            },
            "task.path" => match &mut self.task {
                TaskSpec::EdgeList { path } => *path = PathBuf::from(value),
                _ => return Err(HarnessError::UnknownKey(key.into())),
            },
            "cardinality" => self.cardinality = parse(key, value)?,
            "variants" => self.variants = parse_list(key, value)?,
            "seeds" => self.seeds = parse_list(key, value)?,
            "out" => self.out_dir = Some(PathBuf::from(value)),
            "reward.closed_neighborhood" => self.closed_neighborhood = parse(key, value)?,
            "train.use_degree_feature" => self.use_degree_feature = parse(key, value)?,
            "train.query_budget" => t.query_budget = parse_optional(key, value)?,
            "train.batch_size" => t.batch_size = parse(key, value)?,
            "train.lr_policy" => t.lr_policy = parse(key, value)?,
            "train.lr_log_z" => t.lr_log_z = parse(key, value)?,
            "train.epsilon" => t.epsilon = parse(key, value)?,
            "train.mix_buffer_fraction" => t.mix_buffer_fraction = parse(key, value)?,
            "train.offline_steps" => t.offline_steps = parse(key, value)?,
            "train.total_steps" => t.total_steps = parse_optional(key, value)?,
            "train.buffer_capacity" => t.buffer_capacity = parse_optional(key, value)?,
            "train.embedding_dim" => t.embedding_dim = parse(key, value)?,
            "train.hidden_dim" => t.hidden_dim = parse(key, value)?,
            "train.optimizer" => {
                t.optimizer = match value {
                    "sgd" => OptimizerKind::Sgd,
                    "adam" => OptimizerKind::Adam,
                    _ => {
                        return Err(HarnessError::InvalidValue {
                            key: key.into(),
                            value: value.into(),
                        })
                    }
                }
            }
            "train.epsilon_reward" => t.epsilon_reward = parse(key, value)?,
            "train.clamp_to_max" => t.clamp_to_max = parse(key, value)?,
            "train.parallel" => {
                t.execution = if parse(key, value)? {
                    Execution::Parallel
                } else {
                    Execution::Sequential
                }
            }
            "metrics.interval" => m.interval = parse(key, value)?,
            "metrics.fcs" => {
                m.fcs = if parse(key, value)? {
                    Some(m.fcs.unwrap_or_default())
                } else {
                    None
                }
            }
            "metrics.fcs_forward" => m.fcs.get_or_insert_with(FcsConfig::default).forward_samples = parse(key, value)?,
            "metrics.fcs_backward" => m.fcs.get_or_insert_with(FcsConfig::default).backward_samples = parse(key, value)?,
            "metrics.fcs_epochs" => m.fcs.get_or_insert_with(FcsConfig::default).epochs = parse(key, value)?,
            "metrics.exact_tv" => m.exact_tv = parse(key, value)?,
            "metrics.tv_cap" => m.tv_cap = parse(key, value)?,
            "metrics.top_k" => m.top_k = parse(key, value)?,
            _ => return Err(HarnessError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// Structural checks that do not need the graph.
    pub fn check(&self) -> Result<(), HarnessError> {
        if self.variants.is_empty() {
            return Err(HarnessError::Invalid("no variants".into()));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Invalid("no seeds".into()));
        }
        if self.metrics.top_k == 0 {
            return Err(HarnessError::Invalid("metrics.top_k must be positive".into()));
        }
        if let TaskSpec::EdgeList { path } = &self.task {
            if path.as_os_str().is_empty() {
                return Err(HarnessError::Missing("task.path".into()));
            }
        }
        Ok(())
    }

    /// Fully resolved configuration in the input format.
    pub fn to_key_values(&self) -> String {
        let mut lines = Vec::new();
        let mut kv = |k: &str, v: String| lines.push(format!("{k} = {v}"));
        match &self.task {
            TaskSpec::Er { n, p, seed } => {
                kv("task.kind", "er".into());
                kv("task.n", n.to_string());
                kv("task.p", p.to_string());
                kv("task.seed", seed.to_string());
            }
            TaskSpec::Ba { n, attach_count, seed } => {
                kv("task.kind", "ba".into());
                kv("task.n", n.to_string());
                kv("task.attach_count", attach_count.to_string());
                kv("task.seed", seed.to_string());
            }
            TaskSpec::EdgeList { path } => {
                kv("task.kind", "edge_list".into());
                kv("task.path", path.display().to_string());
            }
        }
        kv("cardinality", self.cardinality.to_string());
        kv(
            "variants",
            self.variants.iter().map(|v| v.as_str()).collect::<Vec<_>>().join(","),
        );
        kv(
            "seeds",
            self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(","),
        );
        if let Some(out) = &self.out_dir {
            kv("out", out.display().to_string());
        }
        kv("reward.closed_neighborhood", self.closed_neighborhood.to_string());
        let t = &self.train;
        kv("train.query_budget", show_optional(&t.query_budget));
        kv("train.batch_size", t.batch_size.to_string());
        kv("train.lr_policy", t.lr_policy.to_string());
        kv("train.lr_log_z", t.lr_log_z.to_string());
        kv("train.epsilon", t.epsilon.to_string());
        kv("train.mix_buffer_fraction", t.mix_buffer_fraction.to_string());
        kv("train.offline_steps", t.offline_steps.to_string());
        kv("train.total_steps", show_optional(&t.total_steps));
        kv("train.buffer_capacity", show_optional(&t.buffer_capacity));
        kv("train.embedding_dim", t.embedding_dim.to_string());
        kv("train.hidden_dim", t.hidden_dim.to_string());
        kv(
            "train.optimizer",
            match t.optimizer {
                OptimizerKind::Sgd => "sgd",
                OptimizerKind::Adam => "adam",
            }
            .into(),
        );
        kv("train.epsilon_reward", t.epsilon_reward.to_string());
        kv("train.clamp_to_max", t.clamp_to_max.to_string());
        kv("train.use_degree_feature", self.use_degree_feature.to_string());
        kv("train.parallel", (t.execution == Execution::Parallel).to_string());
        let m = &self.metrics;
        kv("metrics.interval", m.interval.to_string());
        kv("metrics.fcs", m.fcs.is_some().to_string());
        if let Some(f) = m.fcs {
            kv("metrics.fcs_forward", f.forward_samples.to_string());
            kv("metrics.fcs_backward", f.backward_samples.to_string());
            kv("metrics.fcs_epochs", f.epochs.to_string());
        }
        kv("metrics.exact_tv", m.exact_tv.to_string());
        kv("metrics.tv_cap", m.tv_cap.to_string());
        kv("metrics.top_k", m.top_k.to_string());
        lines.join("\n") + "\n"
    }
}

/// A graph, its instance, and the (unmetered) reward.
#[derive(Debug, Clone)]
pub struct Task {
    pub graph: CoverageGraph,
    pub instance: ProblemInstance,
    pub reward: Arc<dyn SetFunction>,
    /// Degree / (N - 1) per vertex, when requested.
    pub features: Option<Vec<f64>>,
}

pub fn build_task(cfg: &ExperimentConfig) -> Result<Task, HarnessError> {
    let graph = match &cfg.task {
        TaskSpec::Er { n, p, seed } => generate_er(*n, *p, *seed)?,
        TaskSpec::Ba { n, attach_count, seed } => generate_ba(*n, *attach_count, *seed)?,
        TaskSpec::EdgeList { path } => load_edge_list(path)?,
    };
    let n = graph.num_vertices();
    let instance = ProblemInstance::new(n, cfg.cardinality)?;
    let reward: Arc<dyn SetFunction> = Arc::new(CoverageReward::with_options(&graph, cfg.closed_neighborhood, true));
    let features = cfg.use_degree_feature.then(|| {
        let scale = (n.max(2) - 1) as f64;
        graph.degrees().iter().map(|&d| d as f64 / scale).collect()
    });
    Ok(Task {
        graph,
        instance,
        reward,
        features,
    })
}

/// Runs one (variant, seed) pair with a fresh oracle.
pub fn run_one(cfg: &ExperimentConfig, task: &Task, variant: Variant, seed: u64) -> Result<TrainedRun, HarnessError> {
    let train_cfg = TrainConfig {
        variant,
        seed,
        features: task.features.clone(),
        ..cfg.train.clone()
    };
    let mut oracle = RewardOracle::new(task.reward.clone(), train_cfg.query_budget);
    let mut evaluator = Evaluator::new(task.instance, task.reward.clone(), cfg.metrics.clone());
    Ok(train(&train_cfg, &task.instance, &mut oracle, &mut evaluator)?)
}

pub fn csv_text(records: &[MetricsRecord]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&r.to_csv_row());
        s.push('\n');
    }
    s
}

/// SHA-256 over `blob <len>\0<bytes>`, as git hashes objects.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub variant: Variant,
    pub seed: u64,
    pub csv: PathBuf,
    pub checkpoint: PathBuf,
    pub transition_step: Option<u64>,
    pub steps: u64,
    pub queries_used: u64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub manifest: PathBuf,
    pub runs: Vec<RunOutput>,
}

pub fn run_file_stem(variant: Variant, seed: u64) -> String {
    format!("{}_seed{}", variant.as_str(), seed)
}

/// Runs every (variant, seed) pair, at most `threads` at a time, and writes
/// one CSV and checkpoint per run plus `manifest.txt`. `inputs` are extra
/// (name, bytes) pairs to hash into the manifest, such as the config file;
/// `overrides` are recorded verbatim.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    threads: usize,
    inputs: &[(String, Vec<u8>)],
    overrides: &[(String, String)],
) -> Result<ExperimentOutput, HarnessError> {
    let task = build_task(cfg)?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let jobs: Vec<(Variant, u64)> = cfg
        .variants
        .iter()
        .flat_map(|&v| cfg.seeds.iter().map(move |&s| (v, s)))
        .collect();

    let work = |i: usize| -> Result<RunOutput, HarnessError> {
        let (variant, seed) = jobs[i];
        log::info!("run {variant} seed {seed}");
        let run = run_one(cfg, &task, variant, seed)?;
        let stem = run_file_stem(variant, seed);
        let csv = out_dir.join(format!("{stem}.csv"));
        fs::write(&csv, csv_text(&run.records)).map_err(io_err(&csv))?;
        let checkpoint = out_dir.join(format!("{stem}.policy"));
        fs::write(&checkpoint, run.policy.to_checkpoint()).map_err(io_err(&checkpoint))?;
        Ok(RunOutput {
            variant,
            seed,
            csv,
            checkpoint,
            transition_step: run.transition_step,
            steps: run.steps,
            queries_used: run.queries_used,
        })
    };
    let results = with_threads(threads, || map_indexed(Execution::Parallel, jobs.len(), work));
    let runs = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut manifest = String::from("# subo experiment manifest\n");
    let mut hashed: Vec<(String, Vec<u8>)> = inputs.to_vec();
    if let TaskSpec::EdgeList { path } = &cfg.task {
        let bytes = fs::read(path).map_err(io_err(path))?;
        hashed.push((path.display().to_string(), bytes));
    }
    hashed.push(("graph".into(), crate::rewards::write_edge_list(&task.graph).into_bytes()));
    for (name, bytes) in &hashed {
        manifest.push_str(&format!("# input {name} sha256:{}\n", content_hash(bytes)));
    }
    for (k, v) in overrides {
        manifest.push_str(&format!("# override {k} = {v}\n"));
    }
    for r in &runs {
        manifest.push_str(&format!(
            "# run variant={} seed={} steps={} transition_step={} queries_used={} csv={} checkpoint={}\n",
            r.variant,
            r.seed,
            r.steps,
            show_optional(&r.transition_step),
            r.queries_used,
            file_name(&r.csv),
            file_name(&r.checkpoint),
        ));
    }
    manifest.push_str(&cfg.to_key_values());
    let path = out_dir.join("manifest.txt");
    fs::write(&path, manifest).map_err(io_err(&path))?;
    Ok(ExperimentOutput { manifest: path, runs })
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

#[cfg(feature = "parallel")]
fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build() {
        Ok(pool) => pool.install(f),
        Err(e) => {
            log::warn!("could not build a pool of {threads} threads: {e}");
            f()
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn with_threads<T: Send>(_threads: usize, f: impl FnOnce() -> T + Send) -> T {
    f()
}

/// Metrics of a saved policy on the task of `cfg`.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub exact_tv: Option<f64>,
    pub fcs: Option<f64>,
}

pub fn evaluate_checkpoint(cfg: &ExperimentConfig, checkpoint: &Path, seed: u64) -> Result<Evaluation, HarnessError> {
    let task = build_task(cfg)?;
    let text = fs::read_to_string(checkpoint).map_err(io_err(checkpoint))?;
    let policy = Policy::from_checkpoint(&text).map_err(|e| HarnessError::Train(e.into()))?;
    if policy.shape().num_elements != task.instance.num_elements() {
        return Err(HarnessError::Invalid(format!(
            "checkpoint has {} elements, task has {}",
            policy.shape().num_elements,
            task.instance.num_elements()
        )));
    }
    let mut ev = Evaluator::new(task.instance, task.reward.clone(), cfg.metrics.clone());
    let mut rng = crate::rng::substream(seed, &[3, u64::MAX]);
    Ok(Evaluation {
        exact_tv: ev.exact_tv(&policy),
        fcs: ev.fcs(&policy, &mut rng),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "
        task.kind = er   # random graph
        task.n = 10
        task.p = 0.3
        cardinality = 3
        variants = classical, subo
        seeds = 0,1,2
        train.query_budget = 30
        train.batch_size = 4
        train.embedding_dim = 8
        train.hidden_dim = 8
        train.offline_steps = 3
        metrics.interval = 2
        metrics.fcs_epochs = 2
    ";

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::parse(SMALL).unwrap();
        assert_eq!(cfg.task, TaskSpec::Er { n: 10, p: 0.3, seed: 0 });
        assert_eq!(cfg.variants, vec![Variant::Classical, Variant::Subo]);
        assert_eq!(cfg.seeds, vec![0, 1, 2]);
        assert_eq!(cfg.train.query_budget, Some(30));
        assert_eq!(cfg.metrics.fcs.unwrap().epochs, 2);
        let again = ExperimentConfig::parse(&cfg.to_key_values()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(ExperimentConfig::parse("nonsense"), Err(HarnessError::Syntax { line: 1, .. })));
        assert!(matches!(ExperimentConfig::parse("train.foo = 1"), Err(HarnessError::UnknownKey(_))));
        assert!(matches!(
            ExperimentConfig::parse("train.batch_size = many"),
            Err(HarnessError::InvalidValue { .. })
        ));
        assert!(matches!(ExperimentConfig::parse("task.kind = ba\ntask.p = 0.1"), Err(HarnessError::UnknownKey(_))));
        assert!(matches!(ExperimentConfig::parse("variants = gfn"), Err(HarnessError::InvalidValue { .. })));
        assert!(matches!(ExperimentConfig::parse("task.kind = edge_list"), Err(HarnessError::Missing(_))));
    }

    #[test]
    fn cardinality_above_half_is_rejected() {
        let cfg = ExperimentConfig::parse("task.n = 10\ncardinality = 6").unwrap();
        assert!(matches!(build_task(&cfg), Err(HarnessError::Dag(_))));
    }

    #[test]
    fn writes_one_csv_per_run_and_is_reproducible() {
        let cfg = ExperimentConfig::parse(SMALL).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let out = run_experiment(&cfg, a.path(), 3, &[], &[]).unwrap();
        assert_eq!(out.runs.len(), 6);
        run_experiment(&cfg, b.path(), 1, &[], &[]).unwrap();
        for r in &out.runs {
            let name = r.csv.file_name().unwrap();
            let x = fs::read_to_string(a.path().join(name)).unwrap();
            assert_eq!(x, fs::read_to_string(b.path().join(name)).unwrap());
            assert!(x.starts_with(CSV_HEADER));
            assert!(x.contains(",transition,"));
        }
        let m1 = fs::read_to_string(&out.manifest).unwrap();
        assert_eq!(m1, fs::read_to_string(b.path().join("manifest.txt")).unwrap());
        // the manifest reproduces the config
        assert_eq!(ExperimentConfig::parse(&m1).unwrap(), cfg);
    }

    #[test]
    fn checkpoint_evaluation() {
        let cfg = ExperimentConfig::parse(SMALL).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = run_experiment(&cfg, dir.path(), 2, &[], &[]).unwrap();
        let e = evaluate_checkpoint(&cfg, &out.runs[0].checkpoint, 0).unwrap();
        let tv = e.exact_tv.unwrap();
        assert!((0.0..=1.0).contains(&tv));
        let last = fs::read_to_string(&out.runs[0].csv).unwrap();
        let last = last.lines().last().unwrap();
        assert_eq!(last.split(',').nth(5).unwrap().parse::<f64>().unwrap(), tv);
    }

    #[test]
    fn content_hash_matches_git() {
        // git hash-object --object-format=sha256
        assert_eq!(content_hash(b"hello\n"), "2cf8d83d9ee29543b34a87727421fdecb7e3f3a183d337639025de576db9ebb4");
    }
}
