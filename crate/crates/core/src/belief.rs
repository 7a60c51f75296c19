//! Sample-then-filter belief construction.
//!
//! Hypotheses are drawn from the backend in batches and rejected when the
//! likelihood of any observed answer falls below a threshold. Members of the
//! previous belief that survive the newest pair are retained without
//! regeneration. Accepted members carry equal weight.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendError};
use crate::types::{Answer, BeliefState, History, Hypothesis, Question};

#[derive(Debug, Error)]
pub enum BeliefError {
    #[error("invalid filter configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    /// Minimum likelihood an observed answer must have; inclusive.
    pub likelihood_threshold: f64,
    /// Aim for at least this many members; also the batch size requested.
    pub target_count: usize,
    /// Sampling cycles per update.
    pub max_cycles: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self::twenty_questions()
    }
}

impl FilterConfig {
    pub fn twenty_questions() -> Self {
        Self {
            likelihood_threshold: 0.02,
            target_count: 15,
            max_cycles: 3,
        }
    }

    pub fn preference() -> Self {
        Self {
            target_count: 5,
            ..Self::twenty_questions()
        }
    }

    pub fn validate(&self) -> Result<(), BeliefError> {
        if !(self.likelihood_threshold > 0.0 && self.likelihood_threshold < 1.0) {
            return Err(BeliefError::Config("likelihood_threshold must be in (0, 1)".into()));
        }
        if self.target_count < 1 {
            return Err(BeliefError::Config("target_count must be >= 1".into()));
        }
        if self.max_cycles < 1 {
            return Err(BeliefError::Config("max_cycles must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RejectionReason {
    /// The observed answer at history position `pair` (0-based) had
    /// likelihood `probability` below the threshold.
    Inconsistent {
        pair: usize,
        question_id: String,
        probability: f64,
    },
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterStage {
    Retention,
    Sampling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub hypothesis: String,
    pub stage: FilterStage,
    pub reason: RejectionReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    /// Hypotheses drawn from the backend this update.
    pub sampled_count: usize,
    /// Previous members kept after the newest-pair check.
    pub retained_count: usize,
    /// Previous members dropped by the newest-pair check.
    pub dropped_count: usize,
    /// Sampled hypotheses admitted to the belief.
    pub admitted_count: usize,
    /// Sampled hypotheses rejected as inconsistent or duplicate.
    pub rejected_count: usize,
    pub cycles: usize,
    pub accepted: BeliefState,
    pub rejections: Vec<Rejection>,
}

/// Likelihood of the observed answer, if it clears `threshold`.
fn observed_likelihood(
    hyp: &Hypothesis,
    q: &Question,
    a: &Answer,
    backend: &dyn Backend,
) -> Result<f64, BackendError> {
    let row = backend.answer_distribution(hyp, q)?;
    Ok(row.get(a.option_index).unwrap_or(0.0))
}

/// True iff the observed answer has likelihood at least `threshold`.
pub fn is_consistent(
    hyp: &Hypothesis,
    pair: (&Question, &Answer),
    backend: &dyn Backend,
    threshold: f64,
) -> Result<bool, BackendError> {
    Ok(observed_likelihood(hyp, pair.0, pair.1, backend)? >= threshold)
}

/// First failing pair, checking the most recent pair first.
fn first_violation(
    hyp: &Hypothesis,
    history: &History,
    backend: &dyn Backend,
    threshold: f64,
) -> Result<Option<RejectionReason>, BackendError> {
    for (pair, (q, a)) in history.pairs().iter().enumerate().rev() {
        let p = observed_likelihood(hyp, q, a, backend)?;
        if p < threshold {
            return Ok(Some(RejectionReason::Inconsistent {
                pair,
                question_id: q.id.clone(),
                probability: p,
            }));
        }
    }
    Ok(None)
}

/// Keeps exactly the hypotheses consistent with every pair, in order.
pub fn filter_history(
    hyps: &[Hypothesis],
    history: &History,
    backend: &dyn Backend,
    threshold: f64,
) -> Result<Vec<Hypothesis>, BackendError> {
    let mut out = Vec::with_capacity(hyps.len());
    for h in hyps {
        if first_violation(h, history, backend, threshold)?.is_none() {
            out.push(h.clone());
        }
    }
    Ok(out)
}

/// Advances the belief after `history` gained its newest pair (or builds the
/// initial belief when `history` is empty). The result may hold fewer than
/// `target_count` members, or none.
pub fn update_belief(
    prev: &BeliefState,
    history: &History,
    backend: &dyn Backend,
    cfg: &FilterConfig,
) -> Result<(BeliefState, FilterReport), BeliefError> {
    cfg.validate()?;
    let threshold = cfg.likelihood_threshold;
    let mut rejections = Vec::new();
    let mut belief = BeliefState::new(Vec::new(), history.len());

    let mut dropped = 0;
    match history.last() {
        Some((q, a)) => {
            for h in prev.hypotheses() {
                let p = observed_likelihood(h, q, a, backend)?;
                if p >= threshold {
                    belief.insert(h.clone());
                } else {
                    dropped += 1;
                    rejections.push(Rejection {
                        hypothesis: h.text().to_string(),
                        stage: FilterStage::Retention,
                        reason: RejectionReason::Inconsistent {
                            pair: history.len() - 1,
                            question_id: q.id.clone(),
                            probability: p,
                        },
                    });
                }
            }
        }
        None => {
            for h in prev.hypotheses() {
                belief.insert(h.clone());
            }
        }
    }
    let retained = belief.len();

    let mut batches: Vec<Hypothesis> = Vec::new();
    let mut verdicts: HashMap<String, Option<RejectionReason>> = HashMap::new();
    let (mut sampled, mut admitted, mut rejected, mut cycles) = (0, 0, 0, 0);
    while belief.len() < cfg.target_count && cycles < cfg.max_cycles {
        cycles += 1;
        let mut context: Vec<Hypothesis> = belief.hypotheses().to_vec();
        context.extend(batches.iter().filter(|b| !belief.contains_key(b.key())).cloned());
        let batch = backend.sample_hypothesis_batch(history, cfg.target_count, &context)?;
        for h in &batch {
            sampled += 1;
            if belief.contains_key(h.key()) {
                rejected += 1;
                rejections.push(Rejection {
                    hypothesis: h.text().to_string(),
                    stage: FilterStage::Sampling,
                    reason: RejectionReason::Duplicate,
                });
                continue;
            }
            let verdict = match verdicts.get(h.key()) {
                Some(v) => v.clone(),
                None => {
                    let v = first_violation(h, history, backend, threshold)?;
                    verdicts.insert(h.key().to_string(), v.clone());
                    v
                }
            };
            match verdict {
                None => {
                    belief.insert(h.clone());
                    admitted += 1;
                }
                Some(reason) => {
                    rejected += 1;
                    rejections.push(Rejection {
                        hypothesis: h.text().to_string(),
                        stage: FilterStage::Sampling,
                        reason,
                    });
                }
            }
        }
        batches.extend(batch);
    }

    let report = FilterReport {
        sampled_count: sampled,
        retained_count: retained,
        dropped_count: dropped,
        admitted_count: admitted,
        rejected_count: rejected,
        cycles,
        accepted: belief.clone(),
        rejections,
    };
    Ok((belief, report))
}
