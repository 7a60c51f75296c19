//! The sequential turn loop: generate candidates, score them, ask, observe,
//! update the belief and record an evaluation guess.
//!
//! [`Game`] is a plain serializable state machine driven from outside, so
//! the same code serves simulated benchmark games ([`run_game`]) and live
//! sessions where a human supplies the answers.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::{score_candidates, select_question, AcquisitionError, EstimatorKind, RowCache, ScoredQuestion};
use crate::backend::{mix_seed, Backend, BackendError};
use crate::belief::{update_belief, BeliefError, FilterConfig, FilterReport};
use crate::harness::{evaluate_guess, recommend_items, TargetEntry};
use crate::types::{Answer, BeliefState, History, Hypothesis, Question, QuestionKind};

/// Version of the serialized [`GameRecord`] layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// Maximize the expected information gain over the belief.
    Eig,
    /// Maximize the marginal predictive entropy of the answer.
    Entropy,
    /// Ask a single sampled question without scoring.
    NaiveQa,
    /// Score by predicted answers and posterior entropies drawn from the
    /// model directly, without the belief.
    DataEstimation,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [Self::Eig, Self::Entropy, Self::NaiveQa, Self::DataEstimation];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Eig => "eig",
            Self::Entropy => "entropy",
            Self::NaiveQa => "naive_qa",
            Self::DataEstimation => "data_estimation",
        }
    }

    pub fn estimator(self) -> Option<EstimatorKind> {
        match self {
            Self::Eig => Some(EstimatorKind::Eig),
            Self::Entropy => Some(EstimatorKind::PredEntropy),
            Self::NaiveQa => None,
            Self::DataEstimation => Some(EstimatorKind::DataEstimation),
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "eig" => Ok(Self::Eig),
            "entropy" => Ok(Self::Entropy),
            "naive_qa" | "naive" => Ok(Self::NaiveQa),
            "data_estimation" => Ok(Self::DataEstimation),
            other => Err(format!("unknown strategy {other:?}; expected eig, entropy, naive_qa or data_estimation")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationMode {
    /// Condition generation on the belief when it holds at least two
    /// members; otherwise generate unconstrained.
    Conditional,
    Unconstrained,
    /// As `Conditional`, then top up with unconstrained questions when
    /// conditional generation fails or returns fewer than M.
    ConditionalWithFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub strategy: StrategyKind,
    pub kind: QuestionKind,
    /// Maximum number of questions, guesses included.
    pub budget: usize,
    /// Candidate questions generated per turn.
    pub candidates: usize,
    pub filter: FilterConfig,
    pub generation: GenerationMode,
    pub seed: u64,
    /// Whether direct "Is it X?" guesses may be asked and end the game.
    pub guessing: bool,
    /// Belief sizes up to this add one guess candidate per member.
    pub guess_candidates: usize,
    /// Posterior samples per answer for the data-estimation score.
    pub data_estimation_samples: usize,
    /// Recommendations generated and judged after each turn; 0 disables.
    pub recommendations: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self::twenty_questions(StrategyKind::Eig)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("invalid session config: {}", .fields.iter().map(|f| format!("{}: {}", f.field, f.message)).collect::<Vec<_>>().join("; "))]
pub struct ConfigError {
    pub fields: Vec<FieldError>,
}

impl SessionConfig {
    pub fn twenty_questions(strategy: StrategyKind) -> Self {
        Self {
            strategy,
            kind: QuestionKind::Binary,
            budget: 20,
            candidates: 15,
            filter: FilterConfig::twenty_questions(),
            generation: GenerationMode::ConditionalWithFallback,
            seed: 0,
            guessing: true,
            guess_candidates: 3,
            data_estimation_samples: 16,
            recommendations: 0,
        }
    }

    pub fn preference(strategy: StrategyKind) -> Self {
        Self {
            strategy,
            kind: QuestionKind::MultipleChoice,
            budget: 5,
            candidates: 8,
            filter: FilterConfig::preference(),
            generation: GenerationMode::ConditionalWithFallback,
            seed: 0,
            guessing: false,
            guess_candidates: 0,
            data_estimation_samples: 16,
            recommendations: 10,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut fields = Vec::new();
        let mut bad = |field: &str, message: &str| {
            fields.push(FieldError { field: field.into(), message: message.into() });
        };
        if self.budget < 1 {
            bad("budget", "must be at least 1");
        }
        if self.candidates < 1 {
            bad("candidates", "must be at least 1");
        }
        if let Err(e) = self.filter.validate() {
            bad("filter", &e.to_string());
        }
        if self.strategy == StrategyKind::DataEstimation && self.data_estimation_samples < 2 {
            bad("data_estimation_samples", "must be at least 2");
        }
        if self.guessing && self.kind != QuestionKind::Binary {
            bad("guessing", "direct guesses need binary questions");
        }
        if fields.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { fields })
        }
    }
}

#[derive(Debug, Error)]
pub enum GameError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error(transparent)]
    Acquisition(#[from] AcquisitionError),
    #[error("no question is pending")]
    NotAwaitingAnswer,
    #[error("the game is over")]
    Finished,
    #[error("answer does not belong to the pending question")]
    AnswerMismatch,
}

/// Why a turn deviated from the strategy's normal path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    /// The belief was empty: an unscored naive question was asked.
    EmptyBelief,
    /// Conditional generation was unavailable or short, so unconstrained
    /// questions were used.
    UnconstrainedGeneration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub question: Question,
    /// `None` when the turn did not score candidates.
    pub score: Option<f64>,
}

/// The question selected for a turn, before its answer is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingQuestion {
    pub turn: usize,
    pub candidates: Vec<CandidateScore>,
    pub estimator: Option<EstimatorKind>,
    pub chosen: Question,
    /// Index of `chosen` in `candidates`, when it was one of them.
    pub chosen_index: Option<usize>,
    pub fallbacks: Vec<Fallback>,
    pub compute_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuessResult {
    pub item: String,
    pub correct: bool,
}

/// The per-turn metric guess; never part of the history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationGuess {
    pub guess: Option<String>,
    /// `None` when no ground truth is available (live play).
    pub correct: Option<bool>,
    /// Set when the belief was empty and the guess came from the history.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRatings {
    pub items: Vec<String>,
    pub ratings: Vec<Option<f64>>,
    /// Mean over the items that received a rating.
    pub mean: Option<f64>,
    /// Fewer consistent items than requested were found.
    pub shortfall: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub turn: usize,
    pub candidates: Vec<CandidateScore>,
    pub estimator: Option<EstimatorKind>,
    pub chosen: Question,
    pub chosen_index: Option<usize>,
    pub answer: Answer,
    pub answer_label: String,
    pub guess: Option<GuessResult>,
    pub fallbacks: Vec<Fallback>,
    /// Belief update after the answer; absent when the game ended.
    pub filter: Option<FilterReport>,
    pub belief_size: usize,
    pub evaluation: Option<EvaluationGuess>,
    pub ratings: Option<TurnRatings>,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Success { turn: usize },
    BudgetExhausted,
    Aborted { turn: usize, error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameRecord {
    pub schema_version: u32,
    pub target: Option<String>,
    pub config: SessionConfig,
    pub initial_filter: Option<FilterReport>,
    pub turns: Vec<TurnRecord>,
    pub outcome: Outcome,
    pub guesses: Vec<GuessResult>,
}

impl GameRecord {
    /// Turn of the first correct evaluation guess or in-game guess.
    pub fn first_success_turn(&self) -> Option<usize> {
        let eval = self
            .turns
            .iter()
            .find(|t| t.evaluation.as_ref().and_then(|e| e.correct) == Some(true))
            .map(|t| t.turn);
        let terminal = match self.outcome {
            Outcome::Success { turn } => Some(turn),
            _ => None,
        };
        match (eval, terminal) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }
}

/// Ground truth available to the controller for metrics, never to the
/// questioner.
pub trait Evaluator {
    /// Whether `guess` names the target; `None` without ground truth.
    fn guess_correct(&self, guess: &str) -> Option<bool>;
    /// Ratings of recommended items; `None` without a judge.
    fn judge(&self, items: &[String]) -> Result<Option<Vec<Option<f64>>>, BackendError>;
}

/// Evaluation against a known target, judged by the answerer model.
pub struct TargetEvaluator<'a> {
    pub entry: &'a TargetEntry,
    pub answerer: &'a dyn Backend,
}

impl Evaluator for TargetEvaluator<'_> {
    fn guess_correct(&self, guess: &str) -> Option<bool> {
        Some(evaluate_guess(guess, self.entry))
    }

    fn judge(&self, items: &[String]) -> Result<Option<Vec<Option<f64>>>, BackendError> {
        let persona = Hypothesis::new(self.entry.name.clone())?;
        self.answerer.judge_recommendations(&persona, items).map(Some)
    }
}

/// No ground truth: a human is answering.
pub struct NoEvaluator;

impl Evaluator for NoEvaluator {
    fn guess_correct(&self, _: &str) -> Option<bool> {
        None
    }

    fn judge(&self, _: &[String]) -> Result<Option<Vec<Option<f64>>>, BackendError> {
        Ok(None)
    }
}

/// Returns the direct guess to ask instead of the scored choice: the sole
/// member of a singleton belief, or the top candidate when it is a guess.
pub fn maybe_guess(belief: &BeliefState, scored: &[ScoredQuestion]) -> Option<Question> {
    if belief.len() == 1 {
        return Some(Question::guess(belief.hypotheses()[0].text()));
    }
    let best = select_question(scored).ok()?;
    scored[best].question.is_guess().then(|| scored[best].question.clone())
}

/// The belief member the questioner ranks most likely, or a guess from the
/// history alone when the belief is empty.
pub fn greedy_evaluation_guess(
    belief: &BeliefState,
    history: &History,
    backend: &dyn Backend,
) -> Result<EvaluationGuess, BackendError> {
    if belief.is_empty() {
        let guess = backend.guess_from_history(history)?;
        return Ok(EvaluationGuess { guess: guess.map(|h| h.text().to_string()), correct: None, fallback: true });
    }
    let members = belief.hypotheses();
    let idx = backend.rank_belief(history, members)?.filter(|&i| i < members.len()).unwrap_or(0);
    Ok(EvaluationGuess { guess: Some(members[idx].text().to_string()), correct: None, fallback: false })
}

/// A game in progress. All state is plain data; backends are passed into
/// each transition. Clones share the likelihood-row cache.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Game {
    pub config: SessionConfig,
    pub target: Option<String>,
    pub history: History,
    pub belief: BeliefState,
    pub initial_filter: Option<FilterReport>,
    pub turns: Vec<TurnRecord>,
    pub pending: Option<PendingQuestion>,
    pub outcome: Option<Outcome>,
    #[serde(skip)]
    cache: Arc<RowCache>,
}

impl Game {
    /// Builds the initial belief and prepares the first question.
    pub fn start(config: SessionConfig, target: Option<String>, questioner: &dyn Backend) -> Result<Self, GameError> {
        config.validate()?;
        let mut game = Self {
            config,
            target,
            history: History::new(),
            belief: BeliefState::default(),
            initial_filter: None,
            turns: Vec::new(),
            pending: None,
            outcome: None,
            cache: Arc::default(),
        };
        match update_belief(&BeliefState::default(), &game.history, questioner, &game.config.filter) {
            Ok((belief, report)) => {
                game.belief = belief;
                game.initial_filter = Some(report);
            }
            Err(e) => {
                game.abort(&e.to_string());
                return Ok(game);
            }
        }
        game.prepare(questioner);
        Ok(game)
    }

    pub fn is_finished(&self) -> bool {
        self.outcome.is_some()
    }

    /// Index of the turn being played (1-based).
    pub fn turn(&self) -> usize {
        self.turns.len() + 1
    }

    fn abort(&mut self, error: &str) {
        log::warn!("game aborted at turn {}: {error}", self.turn());
        self.pending = None;
        self.outcome = Some(Outcome::Aborted { turn: self.turn(), error: error.to_string() });
    }

    /// Computes the next question unless the game is over or one is
    /// already pending. Failures end the game as aborted.
    pub fn prepare(&mut self, questioner: &dyn Backend) {
        if self.outcome.is_some() || self.pending.is_some() {
            return;
        }
        if self.turns.len() >= self.config.budget {
            self.outcome = Some(Outcome::BudgetExhausted);
            return;
        }
        let started = Instant::now();
        match self.run_turn(questioner) {
            Ok(mut pending) => {
                pending.compute_ms = started.elapsed().as_millis() as u64;
                self.pending = Some(pending);
            }
            Err(e) => self.abort(&e.to_string()),
        }
    }

    /// Candidate generation, scoring and selection for the current turn.
    fn run_turn(&self, questioner: &dyn Backend) -> Result<PendingQuestion, GameError> {
        let cfg = &self.config;
        let turn = self.turn();
        let single = |q: Question, fallbacks: Vec<Fallback>| PendingQuestion {
            turn,
            candidates: vec![CandidateScore { question: q.clone(), score: None }],
            estimator: None,
            chosen: q,
            chosen_index: Some(0),
            fallbacks,
            compute_ms: 0,
        };

        if cfg.guessing && self.belief.len() == 1 {
            let guess = maybe_guess(&self.belief, &[]).expect("singleton belief");
            if !self.history.asked(&guess.id) {
                return Ok(PendingQuestion { chosen_index: None, candidates: Vec::new(), ..single(guess, Vec::new()) });
            }
        }
        let Some(estimator) = cfg.strategy.estimator() else {
            return Ok(single(questioner.propose_naive_question(&self.history, cfg.kind)?, Vec::new()));
        };
        if self.belief.is_empty() && estimator != EstimatorKind::DataEstimation {
            let q = questioner.propose_naive_question(&self.history, cfg.kind)?;
            return Ok(single(q, vec![Fallback::EmptyBelief]));
        }

        let mut fallbacks = Vec::new();
        let mut candidates = self.generate(questioner, &mut fallbacks)?;
        if cfg.guessing && self.belief.len() >= 2 && self.belief.len() <= cfg.guess_candidates {
            for h in self.belief.hypotheses() {
                let g = Question::guess(h.text());
                if !self.history.asked(&g.id) && !candidates.iter().any(|c| c.id == g.id) {
                    candidates.push(g);
                }
            }
        }
        let scored = score_candidates(
            &candidates,
            estimator,
            &self.belief,
            &self.history,
            questioner,
            &self.cache,
            cfg.data_estimation_samples,
        )?;
        let best = select_question(&scored)?;
        let chosen = match maybe_guess(&self.belief, &scored) {
            Some(g) if cfg.guessing => g,
            _ => scored[best].question.clone(),
        };
        let chosen_index = scored.iter().position(|s| s.question.id == chosen.id);
        Ok(PendingQuestion {
            turn,
            candidates: scored
                .into_iter()
                .map(|s| CandidateScore { question: s.question, score: Some(s.score) })
                .collect(),
            estimator: Some(estimator),
            chosen,
            chosen_index,
            fallbacks,
            compute_ms: 0,
        })
    }

    fn generate(&self, questioner: &dyn Backend, fallbacks: &mut Vec<Fallback>) -> Result<Vec<Question>, GameError> {
        let cfg = &self.config;
        let m = cfg.candidates;
        let hyps = self.belief.hypotheses();
        let conditional_ok = hyps.len() >= 2;
        let mut out: Vec<Question> = match cfg.generation {
            GenerationMode::Unconstrained => questioner.propose_questions_unconstrained(&self.history, cfg.kind, m)?,
            GenerationMode::Conditional if conditional_ok => {
                questioner.propose_questions_conditional(&self.history, hyps, cfg.kind, m)?
            }
            GenerationMode::ConditionalWithFallback if conditional_ok => {
                match questioner.propose_questions_conditional(&self.history, hyps, cfg.kind, m) {
                    Ok(qs) => qs,
                    Err(BackendError::QuestionGeneration) => Vec::new(),
                    Err(e) => return Err(e.into()),
                }
            }
            GenerationMode::Conditional | GenerationMode::ConditionalWithFallback => {
                fallbacks.push(Fallback::UnconstrainedGeneration);
                questioner.propose_questions_unconstrained(&self.history, cfg.kind, m)?
            }
        };
        out.retain(|q| !self.history.asked(&q.id));
        dedup_by_id(&mut out);
        if cfg.generation == GenerationMode::ConditionalWithFallback && conditional_ok && out.len() < m {
            fallbacks.push(Fallback::UnconstrainedGeneration);
            match questioner.propose_questions_unconstrained(&self.history, cfg.kind, m - out.len()) {
                Ok(extra) => {
                    out.extend(extra.into_iter().filter(|q| !self.history.asked(&q.id)));
                    dedup_by_id(&mut out);
                }
                Err(BackendError::QuestionGeneration) if !out.is_empty() => {}
                Err(e) => return Err(e.into()),
            }
        }
        out.truncate(m);
        if out.is_empty() {
            return Err(BackendError::QuestionGeneration.into());
        }
        Ok(out)
    }

    /// Records the answer to the pending question, updates the belief,
    /// evaluates, and prepares the next question.
    pub fn observe(
        &mut self,
        answer: Answer,
        questioner: &dyn Backend,
        evaluator: &dyn Evaluator,
    ) -> Result<(), GameError> {
        if self.outcome.is_some() {
            return Err(GameError::Finished);
        }
        let pending = self.pending.as_ref().ok_or(GameError::NotAwaitingAnswer)?;
        if answer.question_id != pending.chosen.id || answer.option_index >= pending.chosen.options.len() {
            return Err(GameError::AnswerMismatch);
        }
        let pending = self.pending.take().expect("checked above");
        let started = Instant::now();
        let answer_label = pending.chosen.options[answer.option_index].label.clone();
        self.history
            .push(pending.chosen.clone(), answer.clone())
            .map_err(BackendError::from)?;

        let guess = pending.chosen.guess.clone().map(|item| GuessResult {
            correct: answer.option_index == 0,
            item,
        });
        let mut record = TurnRecord {
            turn: pending.turn,
            candidates: pending.candidates,
            estimator: pending.estimator,
            chosen: pending.chosen,
            chosen_index: pending.chosen_index,
            answer,
            answer_label,
            guess: guess.clone(),
            fallbacks: pending.fallbacks,
            filter: None,
            belief_size: self.belief.len(),
            evaluation: None,
            ratings: None,
            elapsed_ms: 0,
        };

        if guess.as_ref().is_some_and(|g| g.correct) {
            record.elapsed_ms = pending.compute_ms + started.elapsed().as_millis() as u64;
            self.turns.push(record);
            self.outcome = Some(Outcome::Success { turn: pending.turn });
            return Ok(());
        }

        if let Err(e) = self.after_answer(&mut record, questioner, evaluator) {
            record.elapsed_ms = pending.compute_ms + started.elapsed().as_millis() as u64;
            self.turns.push(record);
            self.outcome = Some(Outcome::Aborted { turn: pending.turn, error: e.to_string() });
            return Ok(());
        }
        record.elapsed_ms = pending.compute_ms + started.elapsed().as_millis() as u64;
        self.turns.push(record);
        self.prepare(questioner);
        Ok(())
    }

    fn after_answer(
        &mut self,
        record: &mut TurnRecord,
        questioner: &dyn Backend,
        evaluator: &dyn Evaluator,
    ) -> Result<(), GameError> {
        let (belief, report) = update_belief(&self.belief, &self.history, questioner, &self.config.filter)?;
        self.belief = belief;
        record.belief_size = self.belief.len();
        record.filter = Some(report);

        if self.config.guessing {
            let mut eval = greedy_evaluation_guess(&self.belief, &self.history, questioner)?;
            eval.correct = eval.guess.as_deref().and_then(|g| evaluator.guess_correct(g));
            record.evaluation = Some(eval);
        }
        if self.config.recommendations > 0 {
            let recs = recommend_items(&self.history, &self.belief, questioner, self.config.recommendations)?;
            let ratings = evaluator.judge(&recs.items)?;
            let (ratings, mean) = match ratings {
                Some(r) => {
                    let rated: Vec<f64> = r.iter().flatten().copied().collect();
                    let mean = (!rated.is_empty()).then(|| rated.iter().sum::<f64>() / rated.len() as f64);
                    (r, mean)
                }
                None => (vec![None; recs.items.len()], None),
            };
            record.ratings = Some(TurnRatings { items: recs.items, ratings, mean, shortfall: recs.shortfall });
        }
        Ok(())
    }

    /// Snapshot of a finished (or in-progress) game as a record.
    pub fn record(&self) -> GameRecord {
        GameRecord {
            schema_version: SCHEMA_VERSION,
            target: self.target.clone(),
            config: self.config.clone(),
            initial_filter: self.initial_filter.clone(),
            turns: self.turns.clone(),
            outcome: self.outcome.clone().unwrap_or(Outcome::BudgetExhausted),
            guesses: self.turns.iter().filter_map(|t| t.guess.clone()).collect(),
        }
    }
}

fn dedup_by_id(qs: &mut Vec<Question>) {
    let mut seen = std::collections::HashSet::new();
    qs.retain(|q| seen.insert(q.id.clone()));
}

/// Plays one simulated game. The answerer sees only the target and each
/// question; a direct guess is answered by matching it against the target
/// entry, alternatives included.
pub fn run_game(
    cfg: &SessionConfig,
    entry: &TargetEntry,
    questioner: &dyn Backend,
    answerer: &dyn Backend,
) -> Result<GameRecord, GameError> {
    let target = Hypothesis::new(entry.name.clone()).map_err(BackendError::from)?;
    let evaluator = TargetEvaluator { entry, answerer };
    let mut game = Game::start(cfg.clone(), Some(entry.name.clone()), questioner)?;
    while let Some(pending) = game.pending.as_ref() {
        let q = pending.chosen.clone();
        let answer = match &q.guess {
            Some(item) => q.answer_at(if evaluate_guess(item, entry) { 0 } else { 1 }).map_err(BackendError::from),
            None => answerer.simulate_answer(&target, &q, mix_seed(&[cfg.seed, pending.turn as u64])),
        };
        match answer {
            Ok(a) => game.observe(a, questioner, &evaluator)?,
            Err(e) => game.abort(&e.to_string()),
        }
    }
    Ok(game.record())
}
