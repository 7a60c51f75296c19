//! Parsers for free-text model output. None of them panic on malformed
//! input; they return `None` or an empty list instead.

use serde::Deserialize;

use crate::text::normalize_key;
use crate::types::{Hypothesis, Question, QuestionKind, MULTIPLE_CHOICE_LABELS};

/// Strips list decorations such as `1.`, `2)`, `-`, `*` and wrapping quotes.
fn strip_decorations(line: &str) -> &str {
    let mut s = line.trim();
    let digits = s.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &s[digits..];
        if let Some(r) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            s = r.trim_start();
        }
    }
    for bullet in ["- ", "* ", "• "] {
        if let Some(r) = s.strip_prefix(bullet) {
            s = r.trim_start();
        }
    }
    s.trim_matches(|c| c == '"' || c == '*' || c == '`').trim()
}

/// One hypothesis per line with any alphanumeric content, in order, at
/// most `n`.
pub fn parse_hypothesis_lines(text: &str, n: usize) -> Vec<Hypothesis> {
    text.lines()
        .map(strip_decorations)
        .filter(|l| l.chars().any(char::is_alphanumeric))
        .filter_map(|l| Hypothesis::new(l).ok())
        .take(n)
        .collect()
}

fn strip_prefix_ci<'a>(s: &'a str, prefix: &str) -> Option<&'a str> {
    if s.len() >= prefix.len() && s.is_char_boundary(prefix.len()) && s[..prefix.len()].eq_ignore_ascii_case(prefix) {
        Some(&s[prefix.len()..])
    } else {
        None
    }
}

/// `A. text`, `A) text` or `A: text` for the given label.
fn option_line<'a>(line: &'a str, label: &str) -> Option<&'a str> {
    let rest = line.trim().strip_prefix(label)?;
    let rest = rest
        .strip_prefix('.')
        .or_else(|| rest.strip_prefix(')'))
        .or_else(|| rest.strip_prefix(':'))?;
    let t = rest.trim();
    (!t.is_empty()).then_some(t)
}

/// Parses one generated question of the requested kind. Multiple-choice
/// output must contain a question line and options A-D; any option E the
/// model writes is replaced by "none of the above".
pub fn parse_question(text: &str, kind: QuestionKind) -> Option<Question> {
    let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let is_option = |l: &str| MULTIPLE_CHOICE_LABELS.iter().any(|lab| option_line(l, lab).is_some());
    let raw = lines.iter().copied().find(|l| !is_option(l))?;
    let body = strip_decorations(raw);
    let body = strip_prefix_ci(body, "question:").unwrap_or(body).trim();
    if body.is_empty() {
        return None;
    }
    match kind {
        QuestionKind::Binary => {
            if !body.ends_with('?') || lines.iter().filter(|l| l.ends_with('?')).count() > 1 {
                return None;
            }
            Question::binary(None, body).ok()
        }
        QuestionKind::MultipleChoice => {
            let mut choices = Vec::with_capacity(4);
            for label in &MULTIPLE_CHOICE_LABELS[..4] {
                let found = lines.iter().find_map(|l| option_line(l, label))?;
                choices.push(found);
            }
            Question::multiple_choice(None, body, [choices[0], choices[1], choices[2], choices[3]]).ok()
        }
    }
}

/// Strips everything but alphanumerics from the ends of a token.
pub(crate) fn clean_token(token: &str) -> &str {
    token.trim().trim_matches(|c: char| !c.is_alphanumeric())
}

/// Maps a free-text reply onto an option: first by its leading token
/// against the labels, then by the whole reply against the option texts.
pub fn map_reply_to_option(reply: &str, q: &Question) -> Option<usize> {
    let first = reply.split_whitespace().next().map(clean_token).unwrap_or("");
    if let Some(i) = q.option_index(first) {
        return Some(i);
    }
    let whole = normalize_key(reply.trim().trim_end_matches(|c: char| !c.is_alphanumeric()));
    q.options.iter().position(|o| normalize_key(&o.text) == whole)
}

/// Snaps to the nearest half step on the 1-5 scale; ties round up.
pub fn snap_rating(x: f64) -> Option<f64> {
    if !x.is_finite() {
        return None;
    }
    Some(((x.clamp(1.0, 5.0) * 2.0).round()) / 2.0)
}

/// First number in the text, snapped.
pub fn parse_single_rating(text: &str) -> Option<f64> {
    text.split(|c: char| !(c.is_ascii_digit() || c == '.'))
        .filter(|t| !t.is_empty())
        .find_map(|t| t.trim_end_matches('.').parse::<f64>().ok())
        .and_then(snap_rating)
}

#[derive(Deserialize)]
struct JudgeEntry {
    #[serde(default)]
    item: Option<String>,
    rating: serde_json::Value,
    #[serde(default)]
    #[allow(dead_code)]
    justification: Option<String>,
}

/// Ratings for `items` from a judge reply. Accepts a JSON array of
/// `{item, rating, justification}` objects (optionally inside a code fence),
/// matched by item title and then by position; otherwise one
/// `rating - justification` line per item.
pub fn parse_judge_reply(text: &str, items: &[String]) -> Vec<Option<f64>> {
    let mut out = vec![None; items.len()];
    let json = extract_json_array(text);
    if let Some(entries) = json.and_then(|j| serde_json::from_str::<Vec<JudgeEntry>>(j).ok()) {
        for (pos, e) in entries.iter().enumerate() {
            let rating = match &e.rating {
                serde_json::Value::Number(n) => n.as_f64().and_then(snap_rating),
                serde_json::Value::String(s) => parse_single_rating(s),
                _ => None,
            };
            let slot = e
                .item
                .as_deref()
                .and_then(|t| items.iter().position(|i| normalize_key(i) == normalize_key(t)))
                .or(if pos < items.len() { Some(pos) } else { None });
            if let (Some(slot), Some(r)) = (slot, rating) {
                if out[slot].is_none() {
                    out[slot] = Some(r);
                }
            }
        }
        return out;
    }
    let lines: Vec<&str> = text.lines().map(strip_decorations).filter(|l| !l.is_empty()).collect();
    for (slot, line) in out.iter_mut().zip(lines) {
        *slot = parse_single_rating(line.split(" - ").next().unwrap_or(line));
    }
    out
}

fn extract_json_array(text: &str) -> Option<&str> {
    let start = text.find('[')?;
    let end = text.rfind(']')?;
    (end > start).then(|| &text[start..=end])
}
