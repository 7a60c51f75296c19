use serde::{Deserialize, Serialize};

use super::{BackendError, BackendResult};
use crate::types::{History, Hypothesis, Question, QuestionKind};

/// Prompt text for every remote operation. Placeholders are written
/// `{name}`; [`PromptTemplates::validate`] checks that each template
/// contains the placeholders its operation fills in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptTemplates {
    pub hypothesis_batch: String,
    pub likelihood_system: String,
    pub likelihood_user: String,
    pub predictive: String,
    pub question_unconstrained: String,
    pub question_conditional: String,
    pub answerer_system: String,
    pub answerer_user: String,
    pub judge: String,
    pub judge_single: String,
    pub greedy_guess: String,
    pub history_guess: String,
    pub posterior_sample: String,
    pub recommendations: String,
    pub item_consistency: String,
    pub binary_format: String,
    pub multiple_choice_format: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            hypothesis_batch: "We are identifying a hidden {subject} by asking questions.\n\
Questions asked so far, most recent first:\n{history}\n\n\
Candidates proposed earlier (propose different ones):\n{previous}\n\n\
List {n} diverse and representative {subject} candidates that are consistent with every answer above. \
Spread them across different categories and features. One per line, no numbering, no commentary."
                .into(),
            likelihood_system: "You are answering questions about this {subject}: {hypothesis}".into(),
            likelihood_user: "{question}\nReply with only one of: {labels}.".into(),
            predictive: "We are identifying a hidden {subject}. Questions asked so far, most recent first:\n{history}\n\n\
Predict how the next question will be answered:\n{question}\nReply with only one of: {labels}."
                .into(),
            question_unconstrained: "We are identifying a hidden {subject} by asking questions.\n\
Questions asked so far, most recent first:\n{history}\n\n\
Propose one new question that would narrow down the {subject} as much as possible.\n{format}"
                .into(),
            question_conditional: "We are identifying a hidden {subject} by asking questions.\n\
Questions asked so far, most recent first:\n{history}\n\n\
The remaining candidates are:\n{hypotheses}\n\n\
Propose one new question whose answer would slice these candidates into roughly balanced groups.\n{format}"
                .into(),
            answerer_system: "You are thinking of this {subject}: {target}. Answer each question about it truthfully.".into(),
            answerer_user: "{question}\nReply with only one of: {labels}.".into(),
            judge: "You are a person with this taste in films:\n{persona}\n\n\
Rate each film below from 1 to 5 in steps of 0.5 for how well it suits your taste, with a brief justification.\n{items}\n\n\
Reply with a JSON array of objects with fields \"item\", \"rating\" and \"justification\", in the same order."
                .into(),
            judge_single: "You are a person with this taste in films:\n{persona}\n\n\
Rate the film {item} from 1 to 5 in steps of 0.5. Reply with only the number."
                .into(),
            greedy_guess: "We are identifying a hidden {subject}. Questions asked so far, most recent first:\n{history}\n\n\
Candidates:\n{hypotheses}\n\nWhich single candidate is most likely? Reply with its name only."
                .into(),
            history_guess: "We are identifying a hidden {subject}. Questions asked so far, most recent first:\n{history}\n\n\
What is your single best guess? Reply with the name only."
                .into(),
            posterior_sample: "Questions asked about a hidden {subject}, most recent first:\n{history}\n\n\
Return only the name of one randomly chosen {subject} consistent with the answers above. \
Avoid defaulting to the most obvious choice. No other words."
                .into(),
            recommendations: "A user answered these questions about their taste in films, most recent first:\n{history}\n\n\
Recommend {n} films this user would enjoy. Do not include any of:\n{previous}\n\n\
One title per line, no numbering, no commentary."
                .into(),
            item_consistency: "A user answered these questions about their taste in films, most recent first:\n{history}\n\n\
Is recommending the film {item} consistent with these answers? Reply with only Yes or No."
                .into(),
            binary_format: "Ask a yes/no question. Reply with the question only, on one line.".into(),
            multiple_choice_format: "Write a multiple-choice question with exactly four options, in this format:\n\
Question: <text>\nA. <option>\nB. <option>\nC. <option>\nD. <option>\n\
Do not write an option E; it is always \"none of the above\"."
                .into(),
        }
    }
}

const REQUIRED: &[(&str, &[&str])] = &[
    ("hypothesis_batch", &["history", "previous", "n"]),
    ("likelihood_system", &["hypothesis"]),
    ("likelihood_user", &["question", "labels"]),
    ("predictive", &["history", "question", "labels"]),
    ("question_unconstrained", &["history", "format"]),
    ("question_conditional", &["history", "hypotheses", "format"]),
    ("answerer_system", &["target"]),
    ("answerer_user", &["question", "labels"]),
    ("judge", &["persona", "items"]),
    ("judge_single", &["persona", "item"]),
    ("greedy_guess", &["history", "hypotheses"]),
    ("history_guess", &["history"]),
    ("posterior_sample", &["history"]),
    ("recommendations", &["history", "n", "previous"]),
    ("item_consistency", &["history", "item"]),
];

impl PromptTemplates {
    fn get(&self, name: &str) -> &str {
        match name {
            "hypothesis_batch" => &self.hypothesis_batch,
            "likelihood_system" => &self.likelihood_system,
            "likelihood_user" => &self.likelihood_user,
            "predictive" => &self.predictive,
            "question_unconstrained" => &self.question_unconstrained,
            "question_conditional" => &self.question_conditional,
            "answerer_system" => &self.answerer_system,
            "answerer_user" => &self.answerer_user,
            "judge" => &self.judge,
            "judge_single" => &self.judge_single,
            "greedy_guess" => &self.greedy_guess,
            "history_guess" => &self.history_guess,
            "posterior_sample" => &self.posterior_sample,
            "recommendations" => &self.recommendations,
            "item_consistency" => &self.item_consistency,
            _ => "",
        }
    }

    pub fn validate(&self) -> BackendResult<()> {
        for (name, placeholders) in REQUIRED {
            let t = self.get(name);
            for p in *placeholders {
                if !t.contains(&format!("{{{p}}}")) {
                    return Err(BackendError::Config(format!("template {name} lacks placeholder {{{p}}}")));
                }
            }
        }
        Ok(())
    }

    pub fn format_rules(&self, kind: QuestionKind) -> &str {
        match kind {
            QuestionKind::Binary => &self.binary_format,
            QuestionKind::MultipleChoice => &self.multiple_choice_format,
        }
    }
}

/// Substitutes `{name}` placeholders.
pub(crate) fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (k, v) in vars {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out
}

/// History lines with the most recent pair first.
pub(crate) fn history_block(history: &History) -> String {
    if history.is_empty() {
        return "(none yet)".into();
    }
    history
        .newest_first()
        .map(|(q, a)| {
            let opt = &q.options[a.option_index];
            let shown = if opt.label == opt.text {
                opt.text.clone()
            } else {
                format!("{}. {}", opt.label, opt.text)
            };
            format!("Q: {}\nA: {}", q.render(), shown)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub(crate) fn list_block(hyps: &[Hypothesis]) -> String {
    if hyps.is_empty() {
        return "(none)".into();
    }
    hyps.iter().map(|h| format!("- {}", h.text())).collect::<Vec<_>>().join("\n")
}

pub(crate) fn labels(q: &Question) -> String {
    q.options.iter().map(|o| o.label.as_str()).collect::<Vec<_>>().join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        PromptTemplates::default().validate().unwrap();
        let t = PromptTemplates { judge: "rate {items}".into(), ..PromptTemplates::default() };
        assert!(t.validate().is_err());
    }

    #[test]
    fn history_is_reversed() {
        let q1 = Question::binary(None, "Is it alive?").unwrap();
        let q2 = Question::binary(None, "Does it fly?").unwrap();
        let mut h = History::new();
        h.push(q1.clone(), q1.answer("Yes").unwrap()).unwrap();
        h.push(q2.clone(), q2.answer("No").unwrap()).unwrap();
        let block = history_block(&h);
        assert!(block.find("fly").unwrap() < block.find("alive").unwrap());
    }

    #[test]
    fn render_substitutes() {
        assert_eq!(render("a {x} b {x} {y}", &[("x", "1"), ("y", "2")]), "a 1 b 1 2");
    }
}
