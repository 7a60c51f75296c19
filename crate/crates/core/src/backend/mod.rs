//! The generative-backend contract and its implementations.
//!
//! A [`Backend`] plays one of two roles in a game: the questioner side
//! (sampling hypotheses, scoring likelihoods, proposing questions,
//! recommending) or the answerer side (`simulate_answer`,
//! `judge_recommendations`). Questioner-side methods never receive the
//! ground-truth target.

mod parse;
mod prompts;
mod remote;
mod tabular;

pub use parse::{
    parse_hypothesis_lines, parse_judge_reply, parse_question, snap_rating, map_reply_to_option,
};
pub use prompts::PromptTemplates;
pub use remote::{BackendConfig, LogprobMode, RemoteBackend};
pub use tabular::{CatalogItem, PosteriorEntropyMode, Rubric, TabularBackend, TabularModel, TabularModelFile};

use thiserror::Error;

use crate::distribution::DistributionError;
use crate::types::{Answer, History, Hypothesis, Question, QuestionKind, TypeError};
use crate::Distribution;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("unusable model output: {0}")]
    Parse(String),
    #[error("question generation produced no usable question")]
    QuestionGeneration,
    #[error("unknown hypothesis {0:?}")]
    UnknownHypothesis(String),
    #[error("unknown question {0:?}")]
    UnknownQuestion(String),
    #[error("history has zero probability under the model")]
    ImpossibleHistory,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("not supported by this backend: {0}")]
    Unsupported(&'static str),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error(transparent)]
    Type(#[from] TypeError),
}

pub type BackendResult<T> = Result<T, BackendError>;

pub trait Backend: Send + Sync {
    /// One generation returning up to `n` hypotheses consistent with
    /// `history`, steered away from `prior_batches`. May return fewer, and
    /// may contain duplicates.
    fn sample_hypothesis_batch(
        &self,
        history: &History,
        n: usize,
        prior_batches: &[Hypothesis],
    ) -> BackendResult<Vec<Hypothesis>>;

    /// Likelihood of each option of `q` given the hypothesis, without history.
    fn answer_distribution(&self, hyp: &Hypothesis, q: &Question) -> BackendResult<Distribution>;

    /// Answer distribution for `q` conditioned directly on the history.
    fn predictive_distribution(&self, history: &History, q: &Question) -> BackendResult<Distribution>;

    fn propose_questions_unconstrained(
        &self,
        history: &History,
        kind: QuestionKind,
        m: usize,
    ) -> BackendResult<Vec<Question>>;

    /// Questions intended to split `hyps` into balanced groups.
    fn propose_questions_conditional(
        &self,
        history: &History,
        hyps: &[Hypothesis],
        kind: QuestionKind,
        m: usize,
    ) -> BackendResult<Vec<Question>>;

    /// A single question sampled at the naive temperature, unscored.
    fn propose_naive_question(&self, history: &History, kind: QuestionKind) -> BackendResult<Question>;

    /// Answerer side. Stateless: the only inputs are the target, the question
    /// and the seed.
    fn simulate_answer(&self, target: &Hypothesis, q: &Question, seed: u64) -> BackendResult<Answer>;

    /// Answerer side. One rating per item on the 1-5 half-step scale; `None`
    /// for items whose rating could not be obtained.
    fn judge_recommendations(
        &self,
        persona: &Hypothesis,
        items: &[String],
    ) -> BackendResult<Vec<Option<f64>>>;

    /// Entropy over hypotheses after extending `history` with `(q, a)`.
    fn posterior_hypothesis_entropy(
        &self,
        history: &History,
        q: &Question,
        a: &Answer,
        k: usize,
    ) -> BackendResult<f64>;

    /// Index of the member of `belief` a greedy query rates most likely.
    fn rank_belief(&self, history: &History, belief: &[Hypothesis]) -> BackendResult<Option<usize>>;

    /// Greedy single guess from the history alone.
    fn guess_from_history(&self, history: &History) -> BackendResult<Option<Hypothesis>>;

    fn recommend_items(
        &self,
        history: &History,
        belief: &[Hypothesis],
        count: usize,
        exclude: &[String],
    ) -> BackendResult<Vec<String>>;

    /// Whether recommending `item` is compatible with the answers so far.
    fn item_consistent(&self, item: &str, history: &History) -> BackendResult<bool>;
}

impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    fn sample_hypothesis_batch(&self, h: &History, n: usize, p: &[Hypothesis]) -> BackendResult<Vec<Hypothesis>> {
        (**self).sample_hypothesis_batch(h, n, p)
    }
    fn answer_distribution(&self, hyp: &Hypothesis, q: &Question) -> BackendResult<Distribution> {
        (**self).answer_distribution(hyp, q)
    }
    fn predictive_distribution(&self, h: &History, q: &Question) -> BackendResult<Distribution> {
        (**self).predictive_distribution(h, q)
    }
    fn propose_questions_unconstrained(&self, h: &History, k: QuestionKind, m: usize) -> BackendResult<Vec<Question>> {
        (**self).propose_questions_unconstrained(h, k, m)
    }
    fn propose_questions_conditional(
        &self,
        h: &History,
        hyps: &[Hypothesis],
        k: QuestionKind,
        m: usize,
    ) -> BackendResult<Vec<Question>> {
        (**self).propose_questions_conditional(h, hyps, k, m)
    }
    fn propose_naive_question(&self, h: &History, k: QuestionKind) -> BackendResult<Question> {
        (**self).propose_naive_question(h, k)
    }
    fn simulate_answer(&self, t: &Hypothesis, q: &Question, seed: u64) -> BackendResult<Answer> {
        (**self).simulate_answer(t, q, seed)
    }
    fn judge_recommendations(&self, p: &Hypothesis, items: &[String]) -> BackendResult<Vec<Option<f64>>> {
        (**self).judge_recommendations(p, items)
    }
    fn posterior_hypothesis_entropy(&self, h: &History, q: &Question, a: &Answer, k: usize) -> BackendResult<f64> {
        (**self).posterior_hypothesis_entropy(h, q, a, k)
    }
    fn rank_belief(&self, h: &History, b: &[Hypothesis]) -> BackendResult<Option<usize>> {
        (**self).rank_belief(h, b)
    }
    fn guess_from_history(&self, h: &History) -> BackendResult<Option<Hypothesis>> {
        (**self).guess_from_history(h)
    }
    fn recommend_items(&self, h: &History, b: &[Hypothesis], c: usize, e: &[String]) -> BackendResult<Vec<String>> {
        (**self).recommend_items(h, b, c, e)
    }
    fn item_consistent(&self, item: &str, h: &History) -> BackendResult<bool> {
        (**self).item_consistent(item, h)
    }
}

/// Plug-in entropy of the empirical key frequencies of `samples`.
pub fn plug_in_entropy(samples: &[Hypothesis]) -> BackendResult<f64> {
    if samples.is_empty() {
        return Err(BackendError::Parse("zero usable hypothesis samples".into()));
    }
    let mut counts: std::collections::BTreeMap<&str, usize> = Default::default();
    for s in samples {
        *counts.entry(s.key()).or_default() += 1;
    }
    let n = samples.len() as f64;
    let probs: Vec<f64> = counts.values().map(|&c| c as f64 / n).collect();
    Ok(crate::distribution::entropy_of(&probs))
}

/// FNV-1a; stable across platforms and releases, used to derive seeds.
pub(crate) fn stable_hash(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derives a well-mixed seed from several parts.
pub fn mix_seed(parts: &[u64]) -> u64 {
    // splitmix64 over the folded parts
    let mut z = parts
        .iter()
        .fold(0x9e37_79b9_7f4a_7c15u64, |acc, p| acc.rotate_left(17) ^ p.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plug_in_entropy_of_two_pairs_is_ln2() {
        let s: Vec<Hypothesis> = ["a", "b", "A", "b "].iter().map(|t| Hypothesis::new(*t).unwrap()).collect();
        assert!((plug_in_entropy(&s).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(plug_in_entropy(&[]).is_err());
    }

    #[test]
    fn seeds_differ_per_part() {
        assert_ne!(mix_seed(&[1, 2]), mix_seed(&[2, 1]));
        assert_eq!(stable_hash("dog"), stable_hash("dog"));
    }
}
