//! Domain values shared across the engine. All of them are plain immutable
//! data and can be sent between threads freely.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::text::normalize_key;

pub const NONE_OF_THE_ABOVE: &str = "none of the above";
pub const MULTIPLE_CHOICE_LABELS: [&str; 5] = ["A", "B", "C", "D", "E"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("answer option label is empty")]
    EmptyLabel,
    #[error("duplicate option label {0:?}")]
    DuplicateLabel(String),
    #[error("binary questions must have exactly the options Yes and No")]
    BadBinaryOptions,
    #[error("multiple-choice questions need options A-E with E = \"none of the above\"")]
    BadMultipleChoiceOptions,
    #[error("question text is empty")]
    EmptyQuestion,
    #[error("hypothesis text is empty")]
    EmptyHypothesis,
    #[error("option index {index} out of range for {len} options")]
    OptionOutOfRange { index: usize, len: usize },
    #[error("answer refers to question {answer:?} but is paired with {question:?}")]
    MismatchedAnswer { question: String, answer: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnswerOption {
    pub label: String,
    pub text: String,
}

impl AnswerOption {
    pub fn new(label: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    Binary,
    MultipleChoice,
}

impl QuestionKind {
    pub fn option_count(self) -> usize {
        match self {
            QuestionKind::Binary => 2,
            QuestionKind::MultipleChoice => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
    pub options: Vec<AnswerOption>,
    pub kind: QuestionKind,
    /// Set when the question is a direct "Is it X?" guess; holds X.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guess: Option<String>,
}

impl Question {
    /// Builds and validates a question. `id` defaults to a digest of the
    /// normalized text and options when `None`.
    pub fn new(
        id: Option<String>,
        text: impl Into<String>,
        options: Vec<AnswerOption>,
        kind: QuestionKind,
    ) -> Result<Self, TypeError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(TypeError::EmptyQuestion);
        }
        let id = id.unwrap_or_else(|| content_id(&text, &options));
        let q = Self {
            id,
            text,
            options,
            kind,
            guess: None,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn binary(id: Option<String>, text: impl Into<String>) -> Result<Self, TypeError> {
        Self::new(
            id,
            text,
            vec![AnswerOption::new("Yes", "Yes"), AnswerOption::new("No", "No")],
            QuestionKind::Binary,
        )
    }

    /// Four generated choices; option E is always "none of the above".
    pub fn multiple_choice(
        id: Option<String>,
        text: impl Into<String>,
        choices: [&str; 4],
    ) -> Result<Self, TypeError> {
        let mut options: Vec<AnswerOption> = choices
            .iter()
            .zip(MULTIPLE_CHOICE_LABELS)
            .map(|(c, l)| AnswerOption::new(l, c.trim()))
            .collect();
        options.push(AnswerOption::new("E", NONE_OF_THE_ABOVE));
        Self::new(id, text, options, QuestionKind::MultipleChoice)
    }

    /// The structural guess question "Is it X?".
    pub fn guess(item: &str) -> Self {
        let text = format!("Is it {}?", item.trim());
        let mut q = Self::binary(Some(format!("guess:{}", normalize_key(item))), text)
            .expect("guess text is never empty");
        q.guess = Some(item.trim().to_string());
        q
    }

    pub fn is_guess(&self) -> bool {
        self.guess.is_some()
    }

    pub fn validate(&self) -> Result<(), TypeError> {
        if self.text.trim().is_empty() {
            return Err(TypeError::EmptyQuestion);
        }
        let mut seen = std::collections::HashSet::new();
        for o in &self.options {
            if o.label.trim().is_empty() {
                return Err(TypeError::EmptyLabel);
            }
            if !seen.insert(o.label.to_lowercase()) {
                return Err(TypeError::DuplicateLabel(o.label.clone()));
            }
        }
        match self.kind {
            QuestionKind::Binary => {
                let labels: Vec<&str> = self.options.iter().map(|o| o.label.as_str()).collect();
                if labels != ["Yes", "No"] {
                    return Err(TypeError::BadBinaryOptions);
                }
            }
            QuestionKind::MultipleChoice => {
                let labels: Vec<&str> = self.options.iter().map(|o| o.label.as_str()).collect();
                if labels != MULTIPLE_CHOICE_LABELS
                    || normalize_key(&self.options[4].text) != NONE_OF_THE_ABOVE
                {
                    return Err(TypeError::BadMultipleChoiceOptions);
                }
            }
        }
        Ok(())
    }

    /// Case-insensitive label lookup.
    pub fn option_index(&self, label: &str) -> Option<usize> {
        let label = label.trim();
        self.options
            .iter()
            .position(|o| o.label.eq_ignore_ascii_case(label))
    }

    pub fn answer(&self, label: &str) -> Option<Answer> {
        self.option_index(label).map(|i| Answer {
            question_id: self.id.clone(),
            option_index: i,
        })
    }

    pub fn answer_at(&self, option_index: usize) -> Result<Answer, TypeError> {
        if option_index >= self.options.len() {
            return Err(TypeError::OptionOutOfRange {
                index: option_index,
                len: self.options.len(),
            });
        }
        Ok(Answer {
            question_id: self.id.clone(),
            option_index,
        })
    }

    /// Question text followed by one `label. text` line per option; the
    /// options are omitted for plain yes/no questions.
    pub fn render(&self) -> String {
        match self.kind {
            QuestionKind::Binary => self.text.clone(),
            QuestionKind::MultipleChoice => {
                let mut s = self.text.clone();
                for o in &self.options {
                    s.push_str(&format!("\n{}. {}", o.label, o.text));
                }
                s
            }
        }
    }
}

fn content_id(text: &str, options: &[AnswerOption]) -> String {
    let mut h = Sha256::new();
    h.update(normalize_key(text).as_bytes());
    for o in options {
        h.update([0u8]);
        h.update(normalize_key(&o.text).as_bytes());
    }
    let digest = h.finalize();
    let hex: String = digest[..6].iter().map(|b| format!("{b:02x}")).collect();
    format!("q-{hex}")
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Answer {
    pub question_id: String,
    pub option_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "HypothesisRepr", into = "HypothesisRepr")]
pub struct Hypothesis {
    text: String,
    key: String,
}

#[derive(Serialize, Deserialize)]
struct HypothesisRepr {
    text: String,
}

impl TryFrom<HypothesisRepr> for Hypothesis {
    type Error = TypeError;
    fn try_from(r: HypothesisRepr) -> Result<Self, TypeError> {
        Hypothesis::new(r.text)
    }
}

impl From<Hypothesis> for HypothesisRepr {
    fn from(h: Hypothesis) -> Self {
        HypothesisRepr { text: h.text }
    }
}

impl Hypothesis {
    pub fn new(text: impl Into<String>) -> Result<Self, TypeError> {
        let text = text.into().trim().to_string();
        let key = normalize_key(&text);
        if key.is_empty() {
            return Err(TypeError::EmptyHypothesis);
        }
        Ok(Self { text, key })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn key(&self) -> &str {
        &self.key
    }
}

impl std::fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.text)
    }
}

/// Ordered question/answer pairs observed so far. Append-only.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct History {
    pairs: Vec<(Question, Answer)>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, question: Question, answer: Answer) -> Result<(), TypeError> {
        if answer.question_id != question.id {
            return Err(TypeError::MismatchedAnswer {
                question: question.id,
                answer: answer.question_id,
            });
        }
        if answer.option_index >= question.options.len() {
            return Err(TypeError::OptionOutOfRange {
                index: answer.option_index,
                len: question.options.len(),
            });
        }
        self.pairs.push((question, answer));
        Ok(())
    }

    pub fn with(&self, question: Question, answer: Answer) -> Result<Self, TypeError> {
        let mut h = self.clone();
        h.push(question, answer)?;
        Ok(h)
    }

    pub fn pairs(&self) -> &[(Question, Answer)] {
        &self.pairs
    }

    pub fn last(&self) -> Option<&(Question, Answer)> {
        self.pairs.last()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Most recent pair first.
    pub fn newest_first(&self) -> impl Iterator<Item = &(Question, Answer)> {
        self.pairs.iter().rev()
    }

    pub fn asked(&self, question_id: &str) -> bool {
        self.pairs.iter().any(|(q, _)| q.id == question_id)
    }
}

/// Uniformly weighted hypothesis set after filtering. Members have
/// distinct keys.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeliefState {
    hypotheses: Vec<Hypothesis>,
    pub turn: usize,
}

impl BeliefState {
    /// Keeps the first occurrence of each key.
    pub fn new(hypotheses: impl IntoIterator<Item = Hypothesis>, turn: usize) -> Self {
        let mut b = Self {
            hypotheses: Vec::new(),
            turn,
        };
        for h in hypotheses {
            b.insert(h);
        }
        b
    }

    /// Returns false if a member with the same key is already present.
    pub fn insert(&mut self, h: Hypothesis) -> bool {
        if self.contains_key(h.key()) {
            return false;
        }
        self.hypotheses.push(h);
        true
    }

    pub fn contains_key(&self, key: &str) -> bool {
        self.hypotheses.iter().any(|m| m.key() == key)
    }

    pub fn hypotheses(&self) -> &[Hypothesis] {
        &self.hypotheses
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn texts(&self) -> Vec<String> {
        self.hypotheses.iter().map(|h| h.text().to_string()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_and_multiple_choice_invariants() {
        let q = Question::binary(None, "Is it a mammal?").unwrap();
        assert_eq!(q.options.len(), 2);
        assert_eq!(q.option_index("yes"), Some(0));
        assert!(q.id.starts_with("q-"));

        let mc = Question::multiple_choice(None, "Pick one", ["a", "b", "c", "d"]).unwrap();
        assert_eq!(mc.options[4].text, NONE_OF_THE_ABOVE);

        let bad = Question::new(
            None,
            "x",
            vec![AnswerOption::new("Yes", "Yes"), AnswerOption::new("Yes", "No")],
            QuestionKind::Binary,
        );
        assert_eq!(bad, Err(TypeError::DuplicateLabel("Yes".into())));

        let mut opts = mc.options.clone();
        opts[4].text = "something else".into();
        assert_eq!(
            Question::new(None, "Pick", opts, QuestionKind::MultipleChoice),
            Err(TypeError::BadMultipleChoiceOptions)
        );
    }

    #[test]
    fn content_ids_are_stable() {
        let a = Question::binary(None, "Does it fly?").unwrap();
        let b = Question::binary(None, "  does it   FLY? ").unwrap();
        assert_eq!(a.id, b.id);
    }

    #[test]
    fn guess_questions_are_structural() {
        let g = Question::guess("Okapi");
        assert_eq!(g.text, "Is it Okapi?");
        assert_eq!(g.guess.as_deref(), Some("Okapi"));
        assert_eq!(g.id, "guess:okapi");
    }

    #[test]
    fn history_rejects_mismatched_answers() {
        let q = Question::binary(Some("q1".into()), "Is it big?").unwrap();
        let mut h = History::new();
        let wrong = Answer {
            question_id: "q2".into(),
            option_index: 0,
        };
        assert!(h.push(q.clone(), wrong).is_err());
        assert!(h.push(q.clone(), q.answer_at(2).unwrap_or(Answer { question_id: "q1".into(), option_index: 2 })).is_err());
        h.push(q.clone(), q.answer("No").unwrap()).unwrap();
        assert_eq!(h.len(), 1);
    }

    #[test]
    fn belief_dedups_by_key() {
        let b = BeliefState::new(
            ["Ocelot", "Pika", "ocelot "].map(|s| Hypothesis::new(s).unwrap()),
            0,
        );
        assert_eq!(b.texts(), vec!["Ocelot", "Pika"]);
    }

    #[test]
    fn hypothesis_serde_recomputes_key() {
        let h: Hypothesis = serde_json::from_str(r#"{"text":"Beyoncé"}"#).unwrap();
        assert_eq!(h.key(), "beyonce");
        assert!(serde_json::from_str::<Hypothesis>(r#"{"text":"  "}"#).is_err());
    }
}
