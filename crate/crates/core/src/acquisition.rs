//! Question scoring.
//!
//! The main estimator scores a question by `H[mean row] - mean H[row]` over
//! the likelihood rows of the belief members; the predictive-entropy
//! baseline keeps only the first term and shares the same rows. The exact
//! tabular functions here are independent enumeration oracles.

use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendError, TabularModel};
use crate::distribution::{entropy, entropy_of, information_gain, mean_conditional_entropy, mix, DistributionError};
use crate::scalar::Probability;
use crate::types::{BeliefState, History, Question};
use crate::{CategoricalDistribution, Distribution};

#[derive(Debug, Error)]
pub enum AcquisitionError {
    #[error("belief is empty")]
    EmptyBelief,
    #[error("no candidates to select from")]
    NoCandidates,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Eig,
    PredEntropy,
    DataEstimation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredQuestion {
    pub question: Question,
    /// Nats.
    pub score: f64,
    /// One likelihood row per belief member, in belief order. Empty for
    /// the data-estimation score, which does not use them.
    pub rows: Vec<Distribution>,
    pub kind: EstimatorKind,
}

/// Likelihood rows keyed by (hypothesis key, question id), shared across
/// estimators within a turn.
#[derive(Debug, Default)]
pub struct RowCache {
    rows: Mutex<HashMap<(String, String), Distribution>>,
}

impl RowCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.rows.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get(&self, key: &(String, String)) -> Option<Distribution> {
        self.rows.lock().unwrap().get(key).cloned()
    }

    fn put(&self, key: (String, String), row: Distribution) {
        self.rows.lock().unwrap().insert(key, row);
    }
}

/// One row per belief member, fetched through `cache` when given.
pub fn likelihood_rows(
    q: &Question,
    belief: &BeliefState,
    backend: &dyn Backend,
    cache: Option<&RowCache>,
) -> Result<Vec<Distribution>, AcquisitionError> {
    if belief.is_empty() {
        return Err(AcquisitionError::EmptyBelief);
    }
    belief
        .hypotheses()
        .iter()
        .map(|h| {
            let key = (h.key().to_string(), q.id.clone());
            if let Some(row) = cache.and_then(|c| c.get(&key)) {
                return Ok(row);
            }
            let row = backend.answer_distribution(h, q)?;
            if row.len() != q.options.len() {
                return Err(AcquisitionError::InvalidArgument(format!(
                    "row of length {} for {} options",
                    row.len(),
                    q.options.len()
                )));
            }
            if let Some(c) = cache {
                c.put(key, row.clone());
            }
            Ok(row)
        })
        .collect()
}

/// Rao-Blackwellized information gain of equally weighted rows.
pub fn eig_from_rows<T: Probability>(rows: &[CategoricalDistribution<T>]) -> Result<T, AcquisitionError> {
    Ok(information_gain(rows)?)
}

/// Marginal predictive entropy of equally weighted rows.
pub fn pred_entropy_from_rows<T: Probability>(rows: &[CategoricalDistribution<T>]) -> Result<T, AcquisitionError> {
    Ok(entropy(&mix(rows)?))
}

/// Mean entropy of the rows; the term the predictive-entropy score ignores.
pub fn expected_conditional_entropy<T: Probability>(rows: &[CategoricalDistribution<T>]) -> T {
    mean_conditional_entropy(rows)
}

pub fn estimate_eig(
    q: &Question,
    belief: &BeliefState,
    backend: &dyn Backend,
    cache: Option<&RowCache>,
) -> Result<ScoredQuestion, AcquisitionError> {
    let rows = likelihood_rows(q, belief, backend, cache)?;
    Ok(ScoredQuestion {
        question: q.clone(),
        score: eig_from_rows(&rows)?,
        rows,
        kind: EstimatorKind::Eig,
    })
}

pub fn estimate_pred_entropy(
    q: &Question,
    belief: &BeliefState,
    backend: &dyn Backend,
    cache: Option<&RowCache>,
) -> Result<ScoredQuestion, AcquisitionError> {
    let rows = likelihood_rows(q, belief, backend, cache)?;
    Ok(ScoredQuestion {
        question: q.clone(),
        score: pred_entropy_from_rows(&rows)?,
        rows,
        kind: EstimatorKind::PredEntropy,
    })
}

/// `-Σ_y p(y | history, q) · H[θ | history, q, y]`, i.e. the information
/// gain up to the constant prior entropy. The answer distribution comes
/// straight from the backend conditioned on the history.
pub fn data_estimation_score(
    q: &Question,
    history: &History,
    backend: &dyn Backend,
    k: usize,
) -> Result<ScoredQuestion, AcquisitionError> {
    if k < 2 {
        return Err(AcquisitionError::InvalidArgument("k must be at least 2".into()));
    }
    let predictive = backend.predictive_distribution(history, q)?;
    let mut score = 0.0;
    for (option, &p) in predictive.probs().iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let a = q.answer_at(option).map_err(BackendError::from)?;
        score -= p * backend.posterior_hypothesis_entropy(history, q, &a, k)?;
    }
    Ok(ScoredQuestion {
        question: q.clone(),
        score,
        rows: Vec::new(),
        kind: EstimatorKind::DataEstimation,
    })
}

/// Scores every candidate with the chosen estimator. Row-based estimators
/// run across candidates in parallel; the data-estimation score runs in
/// order so that backends with a random stream stay reproducible.
pub fn score_candidates(
    candidates: &[Question],
    kind: EstimatorKind,
    belief: &BeliefState,
    history: &History,
    backend: &dyn Backend,
    cache: &RowCache,
    data_estimation_samples: usize,
) -> Result<Vec<ScoredQuestion>, AcquisitionError> {
    match kind {
        EstimatorKind::Eig => candidates
            .par_iter()
            .map(|q| estimate_eig(q, belief, backend, Some(cache)))
            .collect(),
        EstimatorKind::PredEntropy => candidates
            .par_iter()
            .map(|q| estimate_pred_entropy(q, belief, backend, Some(cache)))
            .collect(),
        EstimatorKind::DataEstimation => candidates
            .iter()
            .map(|q| data_estimation_score(q, history, backend, data_estimation_samples))
            .collect(),
    }
}

fn model_rows(model: &TabularModel, posterior: &[f64], q: &Question) -> Result<Vec<Distribution>, AcquisitionError> {
    if posterior.len() != model.hypotheses().len() {
        return Err(AcquisitionError::InvalidArgument(format!(
            "{} posterior weights for {} hypotheses",
            posterior.len(),
            model.hypotheses().len()
        )));
    }
    (0..posterior.len())
        .map(|h| model.likelihood_row(h, q).map_err(AcquisitionError::from))
        .collect()
}

/// Exact mutual information between hypothesis and answer under a tabular
/// model, by enumeration in the divergence form
/// `Σ_h w_h Σ_y p(y|h) [ln p(y|h) - ln p(y)]`.
pub fn exact_eig_tabular(model: &TabularModel, posterior: &[f64], q: &Question) -> Result<f64, AcquisitionError> {
    let rows = model_rows(model, posterior, q)?;
    let n_opts = q.options.len();
    let mut marginal = vec![0.0; n_opts];
    for (w, row) in posterior.iter().zip(&rows) {
        for (m, p) in marginal.iter_mut().zip(row.probs()) {
            *m += w * p;
        }
    }
    let mut total = 0.0;
    for (w, row) in posterior.iter().zip(&rows) {
        if *w == 0.0 {
            continue;
        }
        for (y, &p) in row.probs().iter().enumerate() {
            if p > 0.0 {
                total += w * p * (p.ln() - marginal[y].ln());
            }
        }
    }
    Ok(total.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    ExactBayes,
}

/// `Σ_y p_true(y) · H[posterior after y]` for a tabular model. Answers with
/// `p_true(y) = 0` contribute nothing.
pub fn true_expected_posterior_entropy(
    model: &TabularModel,
    posterior: &[f64],
    q: &Question,
    p_true: &Distribution,
    rule: UpdateRule,
) -> Result<f64, AcquisitionError> {
    let UpdateRule::ExactBayes = rule;
    let rows = model_rows(model, posterior, q)?;
    if p_true.len() != q.options.len() {
        return Err(AcquisitionError::InvalidArgument("p_true does not match the options".into()));
    }
    let mut total = 0.0;
    for (y, &py) in p_true.probs().iter().enumerate() {
        if py == 0.0 {
            continue;
        }
        let updated: Vec<f64> = posterior.iter().zip(&rows).map(|(w, r)| w * r.probs()[y]).collect();
        let z: f64 = updated.iter().sum();
        if z <= 0.0 {
            return Err(AcquisitionError::InvalidArgument(format!(
                "answer {y} has probability under p_true but none under the model"
            )));
        }
        let normalized: Vec<f64> = updated.iter().map(|u| u / z).collect();
        total += py * entropy_of(&normalized);
    }
    Ok(total)
}

/// Argmax of `scores`; ties go to the lowest index.
pub fn argmax_first(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        match best {
            Some(b) if s <= scores[b] => {}
            _ if s.is_nan() => {}
            _ => best = Some(i),
        }
    }
    best
}

pub fn select_question(scored: &[ScoredQuestion]) -> Result<usize, AcquisitionError> {
    let scores: Vec<f64> = scored.iter().map(|s| s.score).collect();
    argmax_first(&scores).ok_or(AcquisitionError::NoCandidates)
}
