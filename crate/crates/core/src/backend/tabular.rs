//! Explicit prior + likelihood-table backend. Every quantity it produces can
//! be checked by enumeration, which is what the exact oracles in
//! [`crate::acquisition`] rely on.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use rand::distributions::{Distribution as _, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{mix_seed, plug_in_entropy, snap_rating, stable_hash, Backend, BackendError, BackendResult};
use crate::distribution::{entropy_of, mix_weighted};
use crate::text::normalize_key;
use crate::types::{Answer, History, Hypothesis, Question, QuestionKind};
use crate::Distribution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogItem {
    pub title: String,
    #[serde(default)]
    pub tags: Vec<String>,
}

/// Deterministic rating rule for a persona: `base` plus the adjustment of
/// every matching tag, clamped to the rating scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rubric {
    pub base: f64,
    #[serde(default)]
    pub adjustments: BTreeMap<String, f64>,
}

impl Rubric {
    pub fn raw_score(&self, item: &CatalogItem) -> f64 {
        let bonus: f64 = item
            .tags
            .iter()
            .filter_map(|t| self.adjustments.get(&t.to_lowercase()))
            .sum();
        (self.base + bonus).clamp(1.0, 5.0)
    }

    pub fn rate(&self, item: &CatalogItem) -> f64 {
        snap_rating(self.raw_score(item)).unwrap_or(1.0)
    }
}

/// On-disk form of a [`TabularModel`] (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularModelFile {
    pub hypotheses: Vec<String>,
    /// Per-hypothesis alternative names accepted by guess questions.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alternatives: Vec<Vec<String>>,
    /// Defaults to uniform.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<Vec<f64>>,
    pub questions: Vec<Question>,
    /// Question id -> one row per hypothesis, in hypothesis order.
    pub likelihood: BTreeMap<String, Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_target: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub catalog: Vec<CatalogItem>,
    /// One rubric per hypothesis when present.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rubrics: Vec<Rubric>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularModel {
    hypotheses: Vec<Hypothesis>,
    alternatives: Vec<Vec<String>>,
    prior: Vec<f64>,
    questions: Vec<Question>,
    // [question][hypothesis]
    likelihood: Vec<Vec<Distribution>>,
    hyp_index: HashMap<String, usize>,
    question_index: HashMap<String, usize>,
    pub true_target: Option<usize>,
    pub seed: u64,
    catalog: Vec<CatalogItem>,
    rubrics: Vec<Rubric>,
}

impl TabularModel {
    /// `likelihood[q][h]` is the answer distribution of question `q` under
    /// hypothesis `h`.
    pub fn new(
        hypotheses: Vec<Hypothesis>,
        prior: Option<Vec<f64>>,
        questions: Vec<Question>,
        likelihood: Vec<Vec<Distribution>>,
    ) -> BackendResult<Self> {
        let n = hypotheses.len();
        if n == 0 {
            return Err(BackendError::Config("tabular model needs at least one hypothesis".into()));
        }
        let prior = match prior {
            Some(p) => p,
            None => vec![1.0 / n as f64; n],
        };
        if prior.len() != n {
            return Err(BackendError::Config(format!("prior has {} weights for {n} hypotheses", prior.len())));
        }
        // validates range and normalization
        Distribution::new(prior.clone())
            .map_err(|e| BackendError::Config(format!("prior: {e}")))?;
        if likelihood.len() != questions.len() {
            return Err(BackendError::Config("likelihood table must have one block per question".into()));
        }
        let mut hyp_index = HashMap::new();
        for (i, h) in hypotheses.iter().enumerate() {
            if hyp_index.insert(h.key().to_string(), i).is_some() {
                return Err(BackendError::Config(format!("duplicate hypothesis {:?}", h.text())));
            }
        }
        let mut question_index = HashMap::new();
        for (qi, (q, rows)) in questions.iter().zip(&likelihood).enumerate() {
            q.validate()?;
            if question_index.insert(q.id.clone(), qi).is_some() {
                return Err(BackendError::Config(format!("duplicate question id {:?}", q.id)));
            }
            if rows.len() != n {
                return Err(BackendError::Config(format!(
                    "question {:?} has {} likelihood rows for {n} hypotheses",
                    q.id,
                    rows.len()
                )));
            }
            if let Some(bad) = rows.iter().find(|r| r.len() != q.options.len()) {
                return Err(BackendError::Config(format!(
                    "question {:?} has a row of length {} for {} options",
                    q.id,
                    bad.len(),
                    q.options.len()
                )));
            }
        }
        Ok(Self {
            alternatives: vec![Vec::new(); n],
            hypotheses,
            prior,
            questions,
            likelihood,
            hyp_index,
            question_index,
            true_target: None,
            seed: 0,
            catalog: Vec::new(),
            rubrics: Vec::new(),
        })
    }

    pub fn with_alternatives(mut self, alternatives: Vec<Vec<String>>) -> BackendResult<Self> {
        if alternatives.len() != self.hypotheses.len() {
            return Err(BackendError::Config("one alternatives list per hypothesis".into()));
        }
        self.alternatives = alternatives;
        Ok(self)
    }

    pub fn with_preferences(mut self, catalog: Vec<CatalogItem>, rubrics: Vec<Rubric>) -> BackendResult<Self> {
        if rubrics.len() != self.hypotheses.len() {
            return Err(BackendError::Config("one rubric per hypothesis".into()));
        }
        self.catalog = catalog;
        self.rubrics = rubrics;
        Ok(self)
    }

    pub fn from_file(file: TabularModelFile) -> BackendResult<Self> {
        let hypotheses = file
            .hypotheses
            .iter()
            .map(|t| Hypothesis::new(t.as_str()))
            .collect::<Result<Vec<_>, _>>()?;
        let mut likelihood = Vec::with_capacity(file.questions.len());
        for q in &file.questions {
            let rows = file
                .likelihood
                .get(&q.id)
                .ok_or_else(|| BackendError::Config(format!("no likelihood rows for question {:?}", q.id)))?;
            let rows = rows
                .iter()
                .map(|r| Distribution::new(r.clone()))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| BackendError::Config(format!("question {:?}: {e}", q.id)))?;
            likelihood.push(rows);
        }
        let mut model = Self::new(hypotheses, file.prior, file.questions, likelihood)?;
        if !file.alternatives.is_empty() {
            model = model.with_alternatives(file.alternatives)?;
        }
        if !file.rubrics.is_empty() {
            model = model.with_preferences(file.catalog, file.rubrics)?;
        }
        if let Some(t) = file.true_target {
            if t >= model.hypotheses.len() {
                return Err(BackendError::Config(format!("true_target {t} out of range")));
            }
        }
        model.true_target = file.true_target;
        model.seed = file.seed;
        Ok(model)
    }

    pub fn to_file(&self) -> TabularModelFile {
        TabularModelFile {
            hypotheses: self.hypotheses.iter().map(|h| h.text().to_string()).collect(),
            alternatives: if self.alternatives.iter().all(Vec::is_empty) {
                Vec::new()
            } else {
                self.alternatives.clone()
            },
            prior: Some(self.prior.clone()),
            questions: self.questions.clone(),
            likelihood: self
                .questions
                .iter()
                .zip(&self.likelihood)
                .map(|(q, rows)| (q.id.clone(), rows.iter().map(|r| r.probs().to_vec()).collect()))
                .collect(),
            true_target: self.true_target,
            seed: self.seed,
            catalog: self.catalog.clone(),
            rubrics: self.rubrics.clone(),
        }
    }

    pub fn load(path: &std::path::Path) -> BackendResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        let file: TabularModelFile =
            serde_json::from_str(&text).map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        Self::from_file(file)
    }

    pub fn hypotheses(&self) -> &[Hypothesis] {
        &self.hypotheses
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn questions(&self) -> &[Question] {
        &self.questions
    }

    pub fn catalog(&self) -> &[CatalogItem] {
        &self.catalog
    }

    pub fn rubrics(&self) -> &[Rubric] {
        &self.rubrics
    }

    pub fn hypothesis_index(&self, hyp: &Hypothesis) -> Option<usize> {
        self.hyp_index.get(hyp.key()).copied()
    }

    pub fn question_index(&self, id: &str) -> Option<usize> {
        self.question_index.get(id).copied()
    }

    pub fn rows(&self, question: usize) -> &[Distribution] {
        &self.likelihood[question]
    }

    fn matches_name(&self, hyp: usize, name: &str) -> bool {
        let key = normalize_key(name);
        self.hypotheses[hyp].key() == key || self.alternatives[hyp].iter().any(|a| normalize_key(a) == key)
    }

    /// Likelihood row of `q` under hypothesis index `hyp`. Guess questions
    /// are answered Yes exactly when the guessed name matches.
    pub fn likelihood_row(&self, hyp: usize, q: &Question) -> BackendResult<Distribution> {
        if let Some(item) = &q.guess {
            let yes = self.matches_name(hyp, item);
            return Ok(Distribution::point_mass(2, if yes { 0 } else { 1 })?);
        }
        let qi = self
            .question_index(&q.id)
            .ok_or_else(|| BackendError::UnknownQuestion(q.id.clone()))?;
        Ok(self.likelihood[qi][hyp].clone())
    }

    /// Exact Bayes posterior weights over all hypotheses given `history`.
    pub fn posterior(&self, history: &History) -> BackendResult<Vec<f64>> {
        let mut w = self.prior.clone();
        for (q, a) in history.pairs() {
            for (i, wi) in w.iter_mut().enumerate() {
                if *wi == 0.0 {
                    continue;
                }
                let row = self.likelihood_row(i, q)?;
                *wi *= row.get(a.option_index).unwrap_or(0.0);
            }
        }
        let total: f64 = w.iter().sum();
        if total <= 0.0 || !total.is_finite() {
            return Err(BackendError::ImpossibleHistory);
        }
        w.iter_mut().for_each(|x| *x /= total);
        Ok(w)
    }

    /// `Σ_h w_h p(y | h, q)`.
    pub fn marginal(&self, weights: &[f64], q: &Question) -> BackendResult<Distribution> {
        if weights.len() != self.hypotheses.len() {
            return Err(BackendError::InvalidArgument(format!(
                "{} weights for {} hypotheses",
                weights.len(),
                self.hypotheses.len()
            )));
        }
        let rows = (0..self.hypotheses.len())
            .map(|h| self.likelihood_row(h, q))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(mix_weighted(&rows, weights)?)
    }

    fn catalog_item(&self, title: &str) -> Option<&CatalogItem> {
        let key = normalize_key(title);
        self.catalog.iter().find(|c| normalize_key(&c.title) == key)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PosteriorEntropyMode {
    /// Exact entropy of the Bayes posterior.
    Exact,
    /// Plug-in entropy of `k` posterior samples, like a sampling-only model.
    PlugIn,
}

/// Backend over a [`TabularModel`]. Holds its own seeded random stream; use
/// one instance per session for reproducible runs.
pub struct TabularBackend {
    model: std::sync::Arc<TabularModel>,
    rng: Mutex<ChaCha8Rng>,
    posterior_entropy: PosteriorEntropyMode,
}

impl TabularBackend {
    pub fn new(model: impl Into<std::sync::Arc<TabularModel>>, seed: u64) -> Self {
        Self {
            model: model.into(),
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
            posterior_entropy: PosteriorEntropyMode::Exact,
        }
    }

    pub fn with_posterior_entropy(mut self, mode: PosteriorEntropyMode) -> Self {
        self.posterior_entropy = mode;
        self
    }

    pub fn model(&self) -> &TabularModel {
        &self.model
    }

    fn index_of(&self, hyp: &Hypothesis) -> BackendResult<usize> {
        self.model
            .hypothesis_index(hyp)
            .ok_or_else(|| BackendError::UnknownHypothesis(hyp.text().to_string()))
    }

    fn available(&self, history: &History, kind: QuestionKind) -> Vec<usize> {
        self.model
            .questions
            .iter()
            .enumerate()
            .filter(|(_, q)| q.kind == kind && !history.asked(&q.id))
            .map(|(i, _)| i)
            .collect()
    }

    /// Posterior for sampling; an impossible history yields `None`.
    fn sampling_posterior(&self, history: &History) -> BackendResult<Option<Vec<f64>>> {
        match self.model.posterior(history) {
            Ok(w) => Ok(Some(w)),
            Err(BackendError::ImpossibleHistory) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn mean_rating(&self, item: &CatalogItem, weights: &[(usize, f64)]) -> f64 {
        weights
            .iter()
            .map(|&(h, w)| w * self.model.rubrics[h].raw_score(item))
            .sum()
    }

    fn require_preferences(&self) -> BackendResult<()> {
        if self.model.rubrics.is_empty() {
            return Err(BackendError::Unsupported("tabular model has no rubrics or catalog"));
        }
        Ok(())
    }
}

impl Backend for TabularBackend {
    fn sample_hypothesis_batch(
        &self,
        history: &History,
        n: usize,
        prior_batches: &[Hypothesis],
    ) -> BackendResult<Vec<Hypothesis>> {
        if n == 0 {
            return Err(BackendError::InvalidArgument("batch size must be at least 1".into()));
        }
        let Some(weights) = self.sampling_posterior(history)? else {
            log::warn!("tabular: history impossible under model, empty batch");
            return Ok(Vec::new());
        };
        let seen: std::collections::HashSet<&str> = prior_batches.iter().map(|h| h.key()).collect();
        let mut pool: Vec<(usize, f64)> = weights
            .iter()
            .enumerate()
            .filter(|(i, w)| **w > 0.0 && !seen.contains(self.model.hypotheses[*i].key()))
            .map(|(i, w)| (i, *w))
            .collect();
        let mut rng = self.rng.lock().unwrap();
        let mut out = Vec::with_capacity(n);
        // Novel members first, without replacement.
        while out.len() < n && !pool.is_empty() {
            let dist = WeightedIndex::new(pool.iter().map(|p| p.1)).expect("positive weights");
            let (i, _) = pool.remove(dist.sample(&mut *rng));
            out.push(self.model.hypotheses[i].clone());
        }
        // Then repeats from the full support.
        if out.len() < n {
            let dist = WeightedIndex::new(&weights).expect("posterior has positive mass");
            while out.len() < n {
                out.push(self.model.hypotheses[dist.sample(&mut *rng)].clone());
            }
        }
        Ok(out)
    }

    fn answer_distribution(&self, hyp: &Hypothesis, q: &Question) -> BackendResult<Distribution> {
        let i = self.index_of(hyp)?;
        self.model.likelihood_row(i, q)
    }

    fn predictive_distribution(&self, history: &History, q: &Question) -> BackendResult<Distribution> {
        let w = self.model.posterior(history)?;
        self.model.marginal(&w, q)
    }

    fn propose_questions_unconstrained(
        &self,
        history: &History,
        kind: QuestionKind,
        m: usize,
    ) -> BackendResult<Vec<Question>> {
        let available = self.available(history, kind);
        if available.is_empty() || m == 0 {
            return Err(BackendError::QuestionGeneration);
        }
        let mut chosen = if available.len() <= m {
            available
        } else {
            let mut rng = self.rng.lock().unwrap();
            let mut picked = rand::seq::index::sample(&mut *rng, available.len(), m)
                .into_iter()
                .map(|i| available[i])
                .collect::<Vec<_>>();
            picked.sort_unstable();
            picked
        };
        chosen.truncate(m);
        Ok(chosen.into_iter().map(|i| self.model.questions[i].clone()).collect())
    }

    fn propose_questions_conditional(
        &self,
        history: &History,
        hyps: &[Hypothesis],
        kind: QuestionKind,
        m: usize,
    ) -> BackendResult<Vec<Question>> {
        if hyps.len() < 2 {
            return Err(BackendError::InvalidArgument("conditional generation needs at least two hypotheses".into()));
        }
        let members = hyps.iter().map(|h| self.index_of(h)).collect::<Result<Vec<_>, _>>()?;
        let available = self.available(history, kind);
        if available.is_empty() || m == 0 {
            return Err(BackendError::QuestionGeneration);
        }
        // Balance of the split induced by each hypothesis' most likely answer.
        let mut ranked: Vec<(usize, f64)> = available
            .into_iter()
            .map(|qi| {
                let mut counts = vec![0usize; self.model.questions[qi].options.len()];
                for &h in &members {
                    let row = self.model.likelihood[qi][h].probs();
                    let top = row
                        .iter()
                        .enumerate()
                        .fold(0, |best, (j, &p)| if p > row[best] { j } else { best });
                    counts[top] += 1;
                }
                let total = members.len() as f64;
                let probs: Vec<f64> = counts.iter().map(|&c| c as f64 / total).collect();
                (qi, entropy_of(&probs))
            })
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(ranked
            .into_iter()
            .take(m)
            .map(|(qi, _)| self.model.questions[qi].clone())
            .collect())
    }

    fn propose_naive_question(&self, history: &History, kind: QuestionKind) -> BackendResult<Question> {
        let available = self.available(history, kind);
        if available.is_empty() {
            return Err(BackendError::QuestionGeneration);
        }
        let i = self.rng.lock().unwrap().gen_range(0..available.len());
        Ok(self.model.questions[available[i]].clone())
    }

    fn simulate_answer(&self, target: &Hypothesis, q: &Question, seed: u64) -> BackendResult<Answer> {
        let i = self.index_of(target)?;
        let row = self.model.likelihood_row(i, q)?;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, stable_hash(&q.id), stable_hash(target.key())]));
        let dist = WeightedIndex::new(row.probs()).map_err(|e| BackendError::Parse(e.to_string()))?;
        Ok(q.answer_at(dist.sample(&mut rng))?)
    }

    fn judge_recommendations(&self, persona: &Hypothesis, items: &[String]) -> BackendResult<Vec<Option<f64>>> {
        self.require_preferences()?;
        let h = self.index_of(persona)?;
        Ok(items
            .iter()
            .map(|t| self.model.catalog_item(t).map(|item| self.model.rubrics[h].rate(item)))
            .collect())
    }

    fn posterior_hypothesis_entropy(
        &self,
        history: &History,
        q: &Question,
        a: &Answer,
        k: usize,
    ) -> BackendResult<f64> {
        if k < 2 {
            return Err(BackendError::InvalidArgument("k must be at least 2".into()));
        }
        let extended = history.with(q.clone(), a.clone())?;
        let w = match self.model.posterior(&extended) {
            Ok(w) => w,
            Err(BackendError::ImpossibleHistory) => {
                return Err(BackendError::Parse("zero usable hypothesis samples".into()))
            }
            Err(e) => return Err(e),
        };
        match self.posterior_entropy {
            PosteriorEntropyMode::Exact => Ok(entropy_of(&w)),
            PosteriorEntropyMode::PlugIn => {
                let dist = WeightedIndex::new(&w).expect("posterior has positive mass");
                let mut rng = self.rng.lock().unwrap();
                let samples: Vec<Hypothesis> = (0..k)
                    .map(|_| self.model.hypotheses[dist.sample(&mut *rng)].clone())
                    .collect();
                plug_in_entropy(&samples)
            }
        }
    }

    fn rank_belief(&self, history: &History, belief: &[Hypothesis]) -> BackendResult<Option<usize>> {
        let Some(w) = self.sampling_posterior(history)? else {
            return Ok(if belief.is_empty() { None } else { Some(0) });
        };
        let mut best: Option<(usize, f64)> = None;
        for (pos, h) in belief.iter().enumerate() {
            let p = self.model.hypothesis_index(h).map(|i| w[i]).unwrap_or(0.0);
            if best.is_none_or(|(_, bp)| p > bp) {
                best = Some((pos, p));
            }
        }
        Ok(best.map(|b| b.0))
    }

    fn guess_from_history(&self, history: &History) -> BackendResult<Option<Hypothesis>> {
        let Some(w) = self.sampling_posterior(history)? else {
            return Ok(None);
        };
        let best = w
            .iter()
            .enumerate()
            .fold(0, |best, (i, &p)| if p > w[best] { i } else { best });
        Ok(Some(self.model.hypotheses[best].clone()))
    }

    fn recommend_items(
        &self,
        history: &History,
        belief: &[Hypothesis],
        count: usize,
        exclude: &[String],
    ) -> BackendResult<Vec<String>> {
        self.require_preferences()?;
        let weights: Vec<(usize, f64)> = {
            let members: Vec<usize> = belief.iter().filter_map(|h| self.model.hypothesis_index(h)).collect();
            if members.is_empty() {
                match self.sampling_posterior(history)? {
                    Some(w) => w.into_iter().enumerate().collect(),
                    None => self.model.prior.iter().copied().enumerate().collect(),
                }
            } else {
                let w = 1.0 / members.len() as f64;
                members.into_iter().map(|m| (m, w)).collect()
            }
        };
        let excluded: std::collections::HashSet<String> = exclude.iter().map(|e| normalize_key(e)).collect();
        let mut scored: Vec<(usize, f64)> = self
            .model
            .catalog
            .iter()
            .enumerate()
            .filter(|(_, c)| !excluded.contains(&normalize_key(&c.title)))
            .map(|(i, c)| (i, self.mean_rating(c, &weights)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(scored
            .into_iter()
            .take(count)
            .map(|(i, _)| self.model.catalog[i].title.clone())
            .collect())
    }

    fn item_consistent(&self, item: &str, history: &History) -> BackendResult<bool> {
        self.require_preferences()?;
        let Some(item) = self.model.catalog_item(item) else {
            return Ok(false);
        };
        let weights: Vec<(usize, f64)> = match self.sampling_posterior(history)? {
            Some(w) => w.into_iter().enumerate().collect(),
            None => return Ok(true),
        };
        Ok(self.mean_rating(item, &weights) >= 2.5)
    }
}
