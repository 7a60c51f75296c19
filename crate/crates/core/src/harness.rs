//! Datasets, batch runs, metrics and the recommendation pipeline.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{mix_seed, Backend, BackendConfig, BackendError, RemoteBackend, TabularBackend, TabularModel};
use crate::controller::{run_game, GameRecord, Outcome, SessionConfig, StrategyKind};
use crate::text::normalize_key;
use crate::types::{BeliefState, History};

/// Regeneration rounds after the first batch of recommendations.
pub const MAX_REGENERATION_ROUNDS: usize = 3;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("no game records")]
    EmptyRecords,
    #[error("records were produced under different configurations")]
    MixedConfigs,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Config(#[from] crate::controller::ConfigError),
    #[error("thread pool: {0}")]
    Pool(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetEntry {
    pub name: String,
    #[serde(default)]
    pub alternatives: Vec<String>,
}

impl TargetEntry {
    pub fn new(name: impl Into<String>, alternatives: Vec<String>) -> Self {
        Self { name: name.into(), alternatives }
    }

    /// Parses `Name | Alt1 | Alt2`; blank lines yield `None`.
    pub fn parse(line: &str) -> Option<Self> {
        let mut fields = line.split('|').map(str::trim).filter(|f| !f.is_empty());
        let name = fields.next()?.to_string();
        Some(Self { name, alternatives: fields.map(str::to_string).collect() })
    }

    /// Filesystem-safe short name.
    pub fn slug(&self) -> String {
        let key = normalize_key(&self.name);
        let mut s: String = key
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
            .collect();
        s.truncate(40);
        let s = s.trim_matches('-').to_string();
        if s.is_empty() {
            "target".into()
        } else {
            s
        }
    }
}

pub fn parse_dataset(text: &str) -> Vec<TargetEntry> {
    text.lines().filter_map(TargetEntry::parse).collect()
}

pub fn load_dataset(path: &Path) -> Result<Vec<TargetEntry>, HarnessError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let entries = parse_dataset(&text);
    if entries.is_empty() {
        return Err(HarnessError::EmptyDataset);
    }
    Ok(entries)
}

/// Case- and accent-insensitive exact match against the name or any
/// alternative.
pub fn evaluate_guess(guess: &str, entry: &TargetEntry) -> bool {
    let g = normalize_key(guess);
    !g.is_empty() && std::iter::once(&entry.name).chain(&entry.alternatives).any(|n| normalize_key(n) == g)
}

/// Standard error of a proportion over `n` games, `sqrt(p(1-p)/(n-1))`;
/// zero for fewer than two games.
pub fn proportion_sem(p: f64, n: usize) -> f64 {
    if n < 2 {
        return 0.0;
    }
    (p * (1.0 - p) / (n - 1) as f64).sqrt()
}

/// Renders a proportion and its standard error in percentage points, e.g.
/// `94±2.4`.
pub fn format_percent(p: f64, sem: f64) -> String {
    format!("{}±{:.1}", fmt_trim(p * 100.0), sem * 100.0)
}

fn fmt_trim(x: f64) -> String {
    let s = format!("{x:.1}");
    s.strip_suffix(".0").map(str::to_string).unwrap_or(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnMetric {
    pub turn: usize,
    pub p: f64,
    pub sem: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingMetric {
    pub turn: usize,
    pub mean: f64,
    pub sem: f64,
    /// Users with at least one rating at this turn.
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub strategy: StrategyKind,
    pub n: usize,
    pub success: Vec<TurnMetric>,
    pub ratings: Vec<RatingMetric>,
}

fn check_shared_config(records: &[GameRecord]) -> Result<&SessionConfig, HarnessError> {
    let first = records.first().ok_or(HarnessError::EmptyRecords)?;
    let same = |a: &SessionConfig, b: &SessionConfig| a.strategy == b.strategy && a.budget == b.budget && a.kind == b.kind;
    if records.iter().any(|r| !same(&r.config, &first.config)) {
        return Err(HarnessError::MixedConfigs);
    }
    Ok(&first.config)
}

/// Fraction of games solved at or before each turn, where a correct
/// evaluation guess or a correct in-game guess counts as solved.
pub fn success_curve(records: &[GameRecord]) -> Result<RunMetrics, HarnessError> {
    let cfg = check_shared_config(records)?;
    let n = records.len();
    let first: Vec<Option<usize>> = records.iter().map(GameRecord::first_success_turn).collect();
    let success = (1..=cfg.budget)
        .map(|t| {
            let solved = first.iter().filter(|s| s.is_some_and(|s| s <= t)).count();
            let p = solved as f64 / n as f64;
            TurnMetric { turn: t, p, sem: proportion_sem(p, n), n }
        })
        .collect();
    Ok(RunMetrics { strategy: cfg.strategy, n, success, ratings: Vec::new() })
}

/// Per-turn judge ratings: each user's mean over rated items, then the mean
/// and standard error (sample deviation over `sqrt(n)`) across users.
pub fn rate_run(records: &[GameRecord]) -> Result<RunMetrics, HarnessError> {
    let cfg = check_shared_config(records)?;
    let mut ratings = Vec::new();
    for t in 1..=cfg.budget {
        let users: Vec<f64> = records
            .iter()
            .filter_map(|r| r.turns.iter().find(|x| x.turn == t))
            .filter_map(|x| x.ratings.as_ref())
            .filter_map(|r| {
                let rated: Vec<f64> = r.ratings.iter().flatten().copied().collect();
                (!rated.is_empty()).then(|| rated.iter().sum::<f64>() / rated.len() as f64)
            })
            .collect();
        if users.is_empty() {
            continue;
        }
        let (mean, sem) = mean_sem(&users);
        ratings.push(RatingMetric { turn: t, mean, sem, n: users.len() });
    }
    Ok(RunMetrics { strategy: cfg.strategy, n: records.len(), success: Vec::new(), ratings })
}

/// Mean and standard error with the `n - 1` sample deviation.
pub fn mean_sem(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendations {
    pub items: Vec<String>,
    pub shortfall: bool,
}

/// Generates `count` recommendations consistent with the history. Items the
/// backend judges inconsistent, and duplicates, are replaced over a bounded
/// number of regeneration rounds.
pub fn recommend_items(
    history: &History,
    belief: &BeliefState,
    backend: &dyn Backend,
    count: usize,
) -> Result<Recommendations, BackendError> {
    if count == 0 {
        return Err(BackendError::InvalidArgument("recommendation count must be at least 1".into()));
    }
    let mut items: Vec<String> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut exclude: Vec<String> = Vec::new();
    for _ in 0..=MAX_REGENERATION_ROUNDS {
        let batch = backend.recommend_items(history, belief.hypotheses(), count - items.len(), &exclude)?;
        for item in batch {
            let key = normalize_key(&item);
            if key.is_empty() || !seen.insert(key) {
                continue;
            }
            exclude.push(item.clone());
            if backend.item_consistent(&item, history)? {
                items.push(item);
                if items.len() == count {
                    return Ok(Recommendations { items, shortfall: false });
                }
            }
        }
    }
    Ok(Recommendations { items, shortfall: true })
}

/// Builds fresh questioner and answerer instances for one game.
pub trait BackendFactory: Send + Sync {
    fn questioner(&self, game_seed: u64) -> Result<Box<dyn Backend>, BackendError>;
    fn answerer(&self, game_seed: u64) -> Result<Box<dyn Backend>, BackendError>;
}

/// Independent tabular backends over one shared model.
pub struct TabularFactory {
    pub model: Arc<TabularModel>,
}

impl BackendFactory for TabularFactory {
    fn questioner(&self, game_seed: u64) -> Result<Box<dyn Backend>, BackendError> {
        Ok(Box::new(TabularBackend::new(self.model.clone(), mix_seed(&[game_seed, 1]))))
    }

    fn answerer(&self, game_seed: u64) -> Result<Box<dyn Backend>, BackendError> {
        Ok(Box::new(TabularBackend::new(self.model.clone(), mix_seed(&[game_seed, 2]))))
    }
}

/// Remote backends sharing one in-flight request limit.
pub struct RemoteFactory {
    limiter: RemoteBackend,
    questioner: BackendConfig,
    answerer: BackendConfig,
}

impl RemoteFactory {
    pub fn new(questioner: BackendConfig, answerer: BackendConfig) -> Result<Self, BackendError> {
        Ok(Self { limiter: RemoteBackend::new(questioner.clone())?, questioner, answerer })
    }
}

impl BackendFactory for RemoteFactory {
    fn questioner(&self, _: u64) -> Result<Box<dyn Backend>, BackendError> {
        Ok(Box::new(RemoteBackend::new(self.questioner.clone())?.sharing_limit(&self.limiter)))
    }

    fn answerer(&self, _: u64) -> Result<Box<dyn Backend>, BackendError> {
        Ok(Box::new(RemoteBackend::new(self.answerer.clone())?.sharing_limit(&self.limiter)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub metrics: RunMetrics,
    /// Games played in this invocation.
    pub executed: usize,
    /// Games loaded from an earlier invocation.
    pub resumed: usize,
    /// Games that aborted or failed and were set aside.
    pub quarantined: Vec<String>,
}

/// Seed of game `index` in a run seeded with `seed`.
pub fn game_seed(seed: u64, index: usize) -> u64 {
    mix_seed(&[seed, index as u64])
}

fn game_file(index: usize, entry: &TargetEntry) -> String {
    format!("{index:04}-{}.json", entry.slug())
}

/// Plays one game per dataset entry. Completed games are written to
/// `games/<strategy>/` and skipped on rerun; aborted games go to
/// `quarantine/<strategy>/` and are retried on rerun. Finishes by writing
/// the strategy's JSONL transcripts and the metrics CSV files.
pub fn run_benchmark(
    dataset: &[TargetEntry],
    cfg: &SessionConfig,
    factory: &dyn BackendFactory,
    parallelism: usize,
    out_dir: &Path,
) -> Result<BenchmarkSummary, HarnessError> {
    let summary = play_all(dataset, cfg, factory, parallelism, out_dir)?;
    write_metrics(out_dir, std::slice::from_ref(&summary.metrics))?;
    Ok(summary)
}

/// Runs every strategy over the dataset into one directory and writes a
/// combined metrics file.
pub fn run_ablation(
    dataset: &[TargetEntry],
    cfg: &SessionConfig,
    strategies: &[StrategyKind],
    factory: &dyn BackendFactory,
    parallelism: usize,
    out_dir: &Path,
) -> Result<Vec<BenchmarkSummary>, HarnessError> {
    let mut out = Vec::new();
    for &strategy in strategies {
        let cfg = SessionConfig { strategy, ..cfg.clone() };
        out.push(play_all(dataset, &cfg, factory, parallelism, out_dir)?);
    }
    let metrics: Vec<RunMetrics> = out.iter().map(|s| s.metrics.clone()).collect();
    write_metrics(out_dir, &metrics)?;
    Ok(out)
}

enum GameResult {
    Done(Box<GameRecord>, bool),
    Quarantined(String),
}

fn play_all(
    dataset: &[TargetEntry],
    cfg: &SessionConfig,
    factory: &dyn BackendFactory,
    parallelism: usize,
    out_dir: &Path,
) -> Result<BenchmarkSummary, HarnessError> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(HarnessError::EmptyDataset);
    }
    let strategy = cfg.strategy.as_str();
    let games_dir = out_dir.join("games").join(strategy);
    let quarantine_dir = out_dir.join("quarantine").join(strategy);
    fs::create_dir_all(&games_dir).map_err(io_err(&games_dir))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;
    let results: Vec<Result<GameResult, HarnessError>> = pool.install(|| {
        dataset
            .par_iter()
            .enumerate()
            .map(|(i, entry)| {
                let name = game_file(i, entry);
                let path = games_dir.join(&name);
                if let Ok(text) = fs::read_to_string(&path) {
                    if let Ok(rec) = serde_json::from_str::<GameRecord>(&text) {
                        return Ok(GameResult::Done(Box::new(rec), true));
                    }
                    log::warn!("unreadable game file {}, replaying", path.display());
                }
                let seed = game_seed(cfg.seed, i);
                let game_cfg = SessionConfig { seed, ..cfg.clone() };
                let played = factory.questioner(seed).and_then(|q| Ok((q, factory.answerer(seed)?)));
                let record = match played {
                    Ok((q, a)) => run_game(&game_cfg, entry, &*q, &*a).map_err(|e| e.to_string()),
                    Err(e) => Err(e.to_string()),
                };
                let quarantine = |body: String| -> Result<GameResult, HarnessError> {
                    fs::create_dir_all(&quarantine_dir).map_err(io_err(&quarantine_dir))?;
                    let qpath = quarantine_dir.join(&name);
                    fs::write(&qpath, body).map_err(io_err(&qpath))?;
                    Ok(GameResult::Quarantined(name.clone()))
                };
                match record {
                    Ok(rec) if matches!(rec.outcome, Outcome::Aborted { .. }) => {
                        quarantine(serde_json::to_string_pretty(&rec)?)
                    }
                    Ok(rec) => {
                        let tmp = path.with_extension("json.tmp");
                        fs::write(&tmp, serde_json::to_string_pretty(&rec)?).map_err(io_err(&tmp))?;
                        fs::rename(&tmp, &path).map_err(io_err(&path))?;
                        let stale = quarantine_dir.join(&name);
                        if stale.exists() {
                            fs::remove_file(&stale).map_err(io_err(&stale))?;
                        }
                        Ok(GameResult::Done(Box::new(rec), false))
                    }
                    Err(e) => quarantine(serde_json::to_string_pretty(&serde_json::json!({
                        "target": entry.name,
                        "error": e,
                    }))?),
                }
            })
            .collect()
    });

    let mut records = Vec::new();
    let (mut executed, mut resumed, mut quarantined) = (0, 0, Vec::new());
    for r in results {
        match r? {
            GameResult::Done(rec, was_resumed) => {
                if was_resumed {
                    resumed += 1;
                } else {
                    executed += 1;
                }
                records.push(*rec);
            }
            GameResult::Quarantined(name) => {
                executed += 1;
                quarantined.push(name);
            }
        }
    }

    let transcripts = out_dir.join(format!("transcripts-{strategy}.jsonl"));
    let mut f = fs::File::create(&transcripts).map_err(io_err(&transcripts))?;
    for rec in &records {
        writeln!(f, "{}", serde_json::to_string(rec)?).map_err(io_err(&transcripts))?;
    }

    let metrics = if records.is_empty() {
        RunMetrics { strategy: cfg.strategy, n: 0, success: Vec::new(), ratings: Vec::new() }
    } else {
        let mut m = success_curve(&records)?;
        if cfg.recommendations > 0 {
            m.ratings = rate_run(&records)?.ratings;
        }
        if !cfg.guessing {
            m.success.clear();
        }
        m
    };
    Ok(BenchmarkSummary { metrics, executed, resumed, quarantined })
}

/// Writes `metrics.csv` (success curves) and, when any run has judge
/// ratings, `ratings.csv`. Numbers use fixed precision so reruns compare
/// byte for byte.
pub fn write_metrics(out_dir: &Path, runs: &[RunMetrics]) -> Result<(), HarnessError> {
    let mut csv = String::from("strategy,turn,p,sem,n\n");
    for r in runs {
        for t in &r.success {
            let _ = writeln!(csv, "{},{},{:.6},{:.6},{}", r.strategy, t.turn, t.p, t.sem, t.n);
        }
    }
    let path = out_dir.join("metrics.csv");
    fs::write(&path, csv).map_err(io_err(&path))?;
    if runs.iter().any(|r| !r.ratings.is_empty()) {
        let mut csv = String::from("strategy,turn,mean,sem,n\n");
        for r in runs {
            for t in &r.ratings {
                let _ = writeln!(csv, "{},{},{:.6},{:.6},{}", r.strategy, t.turn, t.mean, t.sem, t.n);
            }
        }
        let path = out_dir.join("ratings.csv");
        fs::write(&path, csv).map_err(io_err(&path))?;
    }
    Ok(())
}
