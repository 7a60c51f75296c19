//! Building blocks of the `infogain` binary: config files, backend
//! selection and interactive play.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use infogain_core::backend::{Backend, BackendConfig, TabularModel};
use infogain_core::controller::{Game, GameRecord, NoEvaluator, Outcome, SessionConfig, StrategyKind};
use infogain_core::fixtures::{
    animals, default_feature_count, preference_fixture, preference_model, synthetic_binary_model,
};
use infogain_core::harness::{
    format_percent, load_dataset, BackendFactory, RemoteFactory, RunMetrics, TabularFactory, TargetEntry,
};
use infogain_core::types::QuestionKind;
use serde::Deserialize;
use serde_json::Value;

/// Label-flip probability of the synthetic tabular model built for a
/// binary dataset.
pub const SYNTHETIC_NOISE: f64 = 0.01;
/// Questions in the default tabular preference model.
pub const PREFERENCE_QUESTIONS: usize = 40;

/// Contents of a `--config` TOML file. `session` holds session-config
/// overrides on top of the preset for its `kind`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub session: toml::Table,
    pub questioner: BackendConfig,
    pub answerer: BackendConfig,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub strategy: Option<StrategyKind>,
    pub kind: Option<QuestionKind>,
    pub seed: Option<u64>,
}

/// Resolves the session config: preset for the kind, then the file's
/// `[session]` table, then command-line overrides.
pub fn session_config(file: &FileConfig, overrides: &Overrides) -> anyhow::Result<SessionConfig> {
    let mut value = serde_json::to_value(&file.session)?;
    let obj = value.as_object_mut().expect("a TOML table is an object");
    if let Some(s) = overrides.strategy {
        obj.insert("strategy".into(), Value::String(s.to_string()));
    }
    if let Some(k) = overrides.kind {
        obj.insert("kind".into(), serde_json::to_value(k)?);
    }
    if let Some(seed) = overrides.seed {
        obj.insert("seed".into(), seed.into());
    }
    infogain_service::parse_session_config(&value).map_err(|fields| {
        let lines: Vec<String> = fields.iter().map(|f| format!("  {}: {}", f.field, f.message)).collect();
        anyhow!("invalid session config:\n{}", lines.join("\n"))
    })
}

/// Where question and answer distributions come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    /// A tabular model built from the dataset (binary) or the film-persona
    /// fixture (multiple choice).
    Tabular,
    /// A tabular model loaded from a JSON file.
    TabularFile(PathBuf),
    /// OpenAI-compatible chat-completions endpoints from the config file.
    Remote,
}

impl std::str::FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tabular" => Ok(Self::Tabular),
            "remote" => Ok(Self::Remote),
            _ => match s.strip_prefix("tabular:") {
                Some(path) if !path.is_empty() => Ok(Self::TabularFile(path.into())),
                _ => Err(format!("unknown backend {s:?}; expected tabular, tabular:<model.json> or remote")),
            },
        }
    }
}

/// The dataset file if one was given, otherwise the bundled animals list
/// (binary) or film personas (multiple choice).
pub fn dataset(path: Option<&Path>, kind: QuestionKind) -> anyhow::Result<Vec<TargetEntry>> {
    match (path, kind) {
        (Some(p), _) => Ok(load_dataset(p)?),
        (None, QuestionKind::Binary) => Ok(animals()),
        (None, QuestionKind::MultipleChoice) => Ok(preference_fixture().entries()),
    }
}

pub fn tabular_model(
    spec: &BackendSpec,
    cfg: &SessionConfig,
    dataset: &[TargetEntry],
) -> anyhow::Result<Option<TabularModel>> {
    let model = match spec {
        BackendSpec::Remote => return Ok(None),
        BackendSpec::TabularFile(path) => TabularModel::load(path)?,
        BackendSpec::Tabular => match cfg.kind {
            QuestionKind::Binary => {
                synthetic_binary_model(dataset, default_feature_count(dataset.len()), SYNTHETIC_NOISE, cfg.seed)?
            }
            QuestionKind::MultipleChoice => {
                let personas = preference_fixture().entries();
                if dataset.iter().map(|e| &e.name).ne(personas.iter().map(|e| &e.name)) {
                    bail!("the built-in preference model only covers the bundled personas; pass --backend tabular:<model.json>");
                }
                preference_model(PREFERENCE_QUESTIONS, cfg.seed)?
            }
        },
    };
    Ok(Some(model))
}

pub fn factory(
    spec: &BackendSpec,
    file: &FileConfig,
    cfg: &SessionConfig,
    dataset: &[TargetEntry],
) -> anyhow::Result<Arc<dyn BackendFactory>> {
    Ok(match tabular_model(spec, cfg, dataset)? {
        Some(model) => Arc::new(TabularFactory { model: Arc::new(model) }),
        None => Arc::new(RemoteFactory::new(file.questioner.clone(), file.answerer.clone())?),
    })
}

/// One line per turn with each strategy's success rate (when games are
/// scored by success), then mean ratings where recorded.
pub fn metrics_table(runs: &[RunMetrics]) -> String {
    let mut out = String::new();
    let turns = runs.iter().map(|r| r.success.len()).max().unwrap_or(0);
    if turns > 0 {
        out.push_str("turn");
        for r in runs {
            out.push_str(&format!("\t{}", r.strategy));
        }
        out.push('\n');
    }
    for i in 0..turns {
        out.push_str(&(i + 1).to_string());
        for r in runs {
            match r.success.get(i) {
                Some(t) => out.push_str(&format!("\t{}", format_percent(t.p, t.sem))),
                None => out.push_str("\t-"),
            }
        }
        out.push('\n');
    }
    for r in runs.iter().filter(|r| !r.ratings.is_empty()) {
        out.push_str(&format!("ratings {}:", r.strategy));
        for m in &r.ratings {
            out.push_str(&format!(" {}={:.2}±{:.2}", m.turn, m.mean, m.sem));
        }
        out.push('\n');
    }
    out
}

/// Plays one game against a human reading `output` and typing answer
/// labels into `input`. Ends early, as a budget-exhausted game, when the
/// input runs out.
pub fn play(
    cfg: &SessionConfig,
    questioner: &dyn Backend,
    input: &mut dyn BufRead,
    output: &mut dyn Write,
) -> anyhow::Result<GameRecord> {
    let mut game = Game::start(cfg.clone(), None, questioner)?;
    writeln!(output, "Think of something; I have {} questions.", cfg.budget)?;
    'turns: while let Some(pending) = game.pending.clone() {
        let q = &pending.chosen;
        writeln!(output, "\n[{}/{}] {}", pending.turn, cfg.budget, q.text)?;
        if q.kind == QuestionKind::MultipleChoice {
            for o in &q.options {
                writeln!(output, "  {}) {}", o.label, o.text)?;
            }
        }
        let labels: Vec<&str> = q.options.iter().map(|o| o.label.as_str()).collect();
        let answer = loop {
            write!(output, "{}> ", labels.join("/"))?;
            output.flush()?;
            let mut line = String::new();
            if input.read_line(&mut line)? == 0 {
                break 'turns;
            }
            match q.answer(&line) {
                Some(a) => break a,
                None => writeln!(output, "Please answer one of {}.", labels.join(", "))?,
            }
        };
        game.observe(answer, questioner, &NoEvaluator)?;
        writeln!(output, "({} hypotheses remain)", game.belief.len())?;
    }
    let record = game.record();
    match (&game.outcome, record.turns.last().and_then(|t| t.guess.as_ref())) {
        (Some(Outcome::Success { turn }), Some(g)) => {
            writeln!(output, "\nGot it in {turn}: {}.", g.item)?
        }
        (Some(Outcome::Aborted { error, .. }), _) => {
            writeln!(output, "\nStopped after an error: {error}")?
        }
        _ => writeln!(output, "\nOut of questions. Remaining candidates: {}", game.belief.texts().join(", "))?,
    }
    Ok(record)
}
