//! OpenAI-compatible chat-completions backend.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::parse::{clean_token, parse_judge_reply, parse_single_rating};
use super::prompts::{history_block, labels, list_block, render};
use super::{
    map_reply_to_option, parse_hypothesis_lines, parse_question, plug_in_entropy, Backend, BackendError,
    BackendResult, PromptTemplates,
};
use crate::text::normalize_key;
use crate::types::{Answer, History, Hypothesis, Question, QuestionKind};
use crate::Distribution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogprobMode {
    /// Read first-token log-probabilities.
    Logits,
    /// Count labels over `sample_count` sampled replies.
    SampleFrequency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    /// Base URL up to and including `/v1`; `/chat/completions` is appended.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    /// What the hidden target is, e.g. "animal" or "film-taste persona".
    pub subject: String,
    pub temperature_hypotheses: f64,
    pub temperature_questions: f64,
    pub temperature_naive: f64,
    pub max_tokens: u32,
    pub logprob_mode: LogprobMode,
    pub sample_count: u32,
    pub top_logprobs: u32,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub parse_reasks: u32,
    pub backoff_ms: u64,
    pub max_in_flight: usize,
    pub prompts: PromptTemplates,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1".into(),
            model: "gpt-4o-mini".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            subject: "thing".into(),
            temperature_hypotheses: 1.3,
            temperature_questions: 1.3,
            temperature_naive: 1.0,
            max_tokens: 512,
            logprob_mode: LogprobMode::Logits,
            sample_count: 32,
            top_logprobs: 20,
            timeout_secs: 60,
            max_retries: 3,
            parse_reasks: 2,
            backoff_ms: 500,
            max_in_flight: 8,
            prompts: PromptTemplates::default(),
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> BackendResult<()> {
        let temps = [
            ("temperature_hypotheses", self.temperature_hypotheses),
            ("temperature_questions", self.temperature_questions),
            ("temperature_naive", self.temperature_naive),
        ];
        for (name, t) in temps {
            if t.is_nan() || t <= 0.0 {
                return Err(BackendError::Config(format!("{name} must be > 0")));
            }
        }
        if self.sample_count < 1 {
            return Err(BackendError::Config("sample_count must be >= 1".into()));
        }
        if self.max_in_flight < 1 {
            return Err(BackendError::Config("max_in_flight must be >= 1".into()));
        }
        if self.endpoint.trim().is_empty() || self.model.trim().is_empty() {
            return Err(BackendError::Config("endpoint and model are required".into()));
        }
        self.prompts.validate()
    }

    pub fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.endpoint.trim_end_matches('/'))
    }
}

#[derive(Debug, Clone, Deserialize)]
pub(crate) struct ChatResponse {
    #[serde(default)]
    pub choices: Vec<Choice>,
}

#[derive(Debug, Clone, Deserialize)]
pub(crate) struct Choice {
    #[serde(default)]
    pub message: Option<Message>,
    #[serde(default)]
    pub logprobs: Option<ChoiceLogprobs>,
}

#[derive(Debug, Clone, Deserialize)]
pub(crate) struct Message {
    #[serde(default)]
    pub content: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub(crate) struct ChoiceLogprobs {
    #[serde(default)]
    pub content: Option<Vec<TokenLogprob>>,
}

#[derive(Debug, Clone, Deserialize)]
pub(crate) struct TokenLogprob {
    #[allow(dead_code)]
    pub token: String,
    #[allow(dead_code)]
    pub logprob: f64,
    #[serde(default)]
    pub top_logprobs: Vec<TopLogprob>,
}

#[derive(Debug, Clone, Deserialize)]
pub(crate) struct TopLogprob {
    pub token: String,
    pub logprob: f64,
}

impl ChatResponse {
    fn contents(&self) -> Vec<String> {
        self.choices
            .iter()
            .filter_map(|c| c.message.as_ref().and_then(|m| m.content.clone()))
            .collect()
    }

    fn first_content(&self) -> Option<String> {
        self.contents().into_iter().next()
    }

    fn first_token_candidates(&self) -> &[TopLogprob] {
        self.choices
            .first()
            .and_then(|c| c.logprobs.as_ref())
            .and_then(|l| l.content.as_ref())
            .and_then(|c| c.first())
            .map(|t| t.top_logprobs.as_slice())
            .unwrap_or(&[])
    }
}

/// Probability mass each option's label receives among first-token
/// candidates. Unmatched tokens are dropped.
pub(crate) fn option_masses(candidates: &[TopLogprob], q: &Question) -> Vec<f64> {
    let mut mass = vec![0.0; q.options.len()];
    for c in candidates {
        if let Some(i) = q.option_index(clean_token(&c.token)) {
            mass[i] += c.logprob.exp();
        }
    }
    mass
}

/// Add-one smoothed label frequencies: `(count + 1) / (matched + |options|)`.
pub(crate) fn smoothed_frequencies(replies: &[String], q: &Question) -> BackendResult<Distribution> {
    let mut counts = vec![1.0; q.options.len()];
    for r in replies {
        let first = r.split_whitespace().next().map(clean_token).unwrap_or("");
        if let Some(i) = q.option_index(first) {
            counts[i] += 1.0;
        }
    }
    Ok(Distribution::from_weights(counts)?)
}

struct InFlight {
    limit: usize,
    current: Mutex<usize>,
    freed: Condvar,
}

impl InFlight {
    fn acquire(&self) -> InFlightGuard<'_> {
        let mut n = self.current.lock().unwrap();
        while *n >= self.limit {
            n = self.freed.wait(n).unwrap();
        }
        *n += 1;
        InFlightGuard(self)
    }
}

struct InFlightGuard<'a>(&'a InFlight);

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        *self.0.current.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

pub struct RemoteBackend {
    config: BackendConfig,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
    in_flight: std::sync::Arc<InFlight>,
}

struct Request {
    system: Option<String>,
    user: String,
    temperature: f64,
    max_tokens: u32,
    logprobs: bool,
    n: u32,
}

impl RemoteBackend {
    /// Reads the API key from the configured environment variable; a missing
    /// key is allowed for local endpoints.
    pub fn new(config: BackendConfig) -> BackendResult<Self> {
        let key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        Self::with_api_key(config, key)
    }

    pub fn with_api_key(config: BackendConfig, api_key: Option<String>) -> BackendResult<Self> {
        config.validate()?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        let in_flight = std::sync::Arc::new(InFlight {
            limit: config.max_in_flight,
            current: Mutex::new(0),
            freed: Condvar::new(),
        });
        Ok(Self {
            config,
            api_key,
            http,
            in_flight,
        })
    }

    /// Makes this backend draw from `other`'s in-flight request limit, so
    /// that many backends together respect one limit.
    pub fn sharing_limit(mut self, other: &RemoteBackend) -> Self {
        self.in_flight = other.in_flight.clone();
        self
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn request(&self, user: String, temperature: f64) -> Request {
        Request {
            system: None,
            user,
            temperature,
            max_tokens: self.config.max_tokens,
            logprobs: false,
            n: 1,
        }
    }

    fn body(&self, req: &Request) -> Value {
        let mut messages = Vec::new();
        if let Some(s) = &req.system {
            messages.push(json!({"role": "system", "content": s}));
        }
        messages.push(json!({"role": "user", "content": req.user}));
        let mut body = json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        if req.n > 1 {
            body["n"] = json!(req.n);
        }
        if req.logprobs {
            body["logprobs"] = json!(true);
            body["top_logprobs"] = json!(self.config.top_logprobs);
        }
        body
    }

    /// Sends with up to `max_retries` retries on transport errors, 429 and
    /// 5xx, backing off exponentially. Other statuses fail at once.
    fn send(&self, req: &Request) -> BackendResult<ChatResponse> {
        let body = self.body(req);
        let url = self.config.completions_url();
        let attempts = self.config.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let wait = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(wait));
            }
            let _slot = self.in_flight.acquire();
            let mut rb = self.http.post(&url).json(&body);
            if let Some(k) = &self.api_key {
                rb = rb.bearer_auth(k);
            }
            match rb.send() {
                Ok(resp) => {
                    let status = resp.status();
                    let text = resp.text().unwrap_or_default();
                    if status.is_success() {
                        return serde_json::from_str(&text)
                            .map_err(|e| BackendError::Parse(format!("response body: {e}")));
                    }
                    last = format!("HTTP {status}: {}", text.chars().take(200).collect::<String>());
                    if !(status.as_u16() == 429 || status.is_server_error()) {
                        return Err(BackendError::Transport {
                            attempts: attempt + 1,
                            message: last,
                        });
                    }
                }
                Err(e) => last = e.to_string(),
            }
            log::debug!("chat completion attempt {} failed: {last}", attempt + 1);
        }
        Err(BackendError::Transport { attempts, message: last })
    }

    fn text(&self, req: Request) -> BackendResult<String> {
        Ok(self.send(&req)?.first_content().unwrap_or_default())
    }

    fn subject(&self) -> &str {
        &self.config.subject
    }

    /// Option distribution for a prompt whose reply is a single label.
    fn label_distribution(&self, system: Option<String>, user: String, q: &Question) -> BackendResult<Distribution> {
        if self.config.logprob_mode == LogprobMode::Logits {
            let mut req = self.request(user.clone(), 1.0);
            req.system = system.clone();
            req.max_tokens = 1;
            req.logprobs = true;
            let resp = self.send(&req)?;
            let mass = option_masses(resp.first_token_candidates(), q);
            if mass.iter().sum::<f64>() > 0.0 {
                return Ok(Distribution::from_weights(mass)?);
            }
            log::debug!("no option label among top logprobs for {:?}; sampling instead", q.id);
        }
        let mut req = self.request(user, 1.0);
        req.system = system;
        req.max_tokens = 3;
        req.n = self.config.sample_count;
        let replies = self.send(&req)?.contents();
        smoothed_frequencies(&replies, q)
    }

    fn propose(&self, prompt: String, kind: QuestionKind, m: usize, temperature: f64) -> BackendResult<Vec<Question>> {
        let mut out: Vec<Question> = Vec::new();
        let max_attempts = 2 * m;
        let mut attempts = 0;
        while out.len() < m && attempts < max_attempts {
            attempts += 1;
            let reply = self.text(self.request(prompt.clone(), temperature))?;
            match parse_question(&reply, kind) {
                Some(q) => {
                    let key = normalize_key(&q.text);
                    if !out.iter().any(|o| normalize_key(&o.text) == key) {
                        out.push(q);
                    }
                }
                None => log::debug!("dropping malformed question: {reply:?}"),
            }
        }
        if out.is_empty() {
            return Err(BackendError::QuestionGeneration);
        }
        Ok(out)
    }

    fn question_vars<'a>(&'a self, history: &'a str, kind: QuestionKind) -> Vec<(&'a str, &'a str)> {
        vec![
            ("subject", self.subject()),
            ("history", history),
            ("format", self.config.prompts.format_rules(kind)),
        ]
    }
}

impl Backend for RemoteBackend {
    fn sample_hypothesis_batch(
        &self,
        history: &History,
        n: usize,
        prior_batches: &[Hypothesis],
    ) -> BackendResult<Vec<Hypothesis>> {
        if n == 0 {
            return Err(BackendError::InvalidArgument("batch size must be at least 1".into()));
        }
        let hist = history_block(history);
        let prev = list_block(prior_batches);
        let n_text = n.to_string();
        let prompt = render(
            &self.config.prompts.hypothesis_batch,
            &[("subject", self.subject()), ("history", &hist), ("previous", &prev), ("n", &n_text)],
        );
        let reply = self.text(self.request(prompt, self.config.temperature_hypotheses))?;
        let batch = parse_hypothesis_lines(&reply, n);
        if batch.is_empty() {
            log::warn!("hypothesis batch unparseable: {:?}", reply.chars().take(200).collect::<String>());
        }
        Ok(batch)
    }

    fn answer_distribution(&self, hyp: &Hypothesis, q: &Question) -> BackendResult<Distribution> {
        let system = render(
            &self.config.prompts.likelihood_system,
            &[("subject", self.subject()), ("hypothesis", hyp.text())],
        );
        let labels = labels(q);
        let user = render(&self.config.prompts.likelihood_user, &[("question", &q.render()), ("labels", &labels)]);
        self.label_distribution(Some(system), user, q)
    }

    fn predictive_distribution(&self, history: &History, q: &Question) -> BackendResult<Distribution> {
        let hist = history_block(history);
        let labels = labels(q);
        let user = render(
            &self.config.prompts.predictive,
            &[("subject", self.subject()), ("history", &hist), ("question", &q.render()), ("labels", &labels)],
        );
        self.label_distribution(None, user, q)
    }

    fn propose_questions_unconstrained(
        &self,
        history: &History,
        kind: QuestionKind,
        m: usize,
    ) -> BackendResult<Vec<Question>> {
        let hist = history_block(history);
        let prompt = render(&self.config.prompts.question_unconstrained, &self.question_vars(&hist, kind));
        self.propose(prompt, kind, m, self.config.temperature_questions)
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
        let hist = history_block(history);
        let list = list_block(hyps);
        let mut vars = self.question_vars(&hist, kind);
        vars.push(("hypotheses", &list));
        let prompt = render(&self.config.prompts.question_conditional, &vars);
        self.propose(prompt, kind, m, self.config.temperature_questions)
    }

    fn propose_naive_question(&self, history: &History, kind: QuestionKind) -> BackendResult<Question> {
        let hist = history_block(history);
        let prompt = render(&self.config.prompts.question_unconstrained, &self.question_vars(&hist, kind));
        for _ in 0..=self.config.parse_reasks {
            let reply = self.text(self.request(prompt.clone(), self.config.temperature_naive))?;
            if let Some(q) = parse_question(&reply, kind) {
                return Ok(q);
            }
        }
        Err(BackendError::QuestionGeneration)
    }

    fn simulate_answer(&self, target: &Hypothesis, q: &Question, _seed: u64) -> BackendResult<Answer> {
        let system = render(
            &self.config.prompts.answerer_system,
            &[("subject", self.subject()), ("target", target.text())],
        );
        let labels = labels(q);
        let user = render(&self.config.prompts.answerer_user, &[("question", &q.render()), ("labels", &labels)]);
        let mut last = String::new();
        // one re-ask on an unmappable reply
        for _ in 0..2 {
            let mut req = self.request(user.clone(), self.config.temperature_naive);
            req.system = Some(system.clone());
            req.max_tokens = 16;
            last = self.text(req)?;
            if let Some(i) = map_reply_to_option(&last, q) {
                return Ok(q.answer_at(i)?);
            }
        }
        Err(BackendError::Parse(format!("answer {last:?} matches no option")))
    }

    fn judge_recommendations(&self, persona: &Hypothesis, items: &[String]) -> BackendResult<Vec<Option<f64>>> {
        if items.is_empty() {
            return Err(BackendError::InvalidArgument("no items to judge".into()));
        }
        let list = items
            .iter()
            .enumerate()
            .map(|(i, t)| format!("{}. {t}", i + 1))
            .collect::<Vec<_>>()
            .join("\n");
        let prompt = render(&self.config.prompts.judge, &[("persona", persona.text()), ("items", &list)]);
        let reply = self.text(self.request(prompt, self.config.temperature_naive))?;
        let mut ratings = parse_judge_reply(&reply, items);
        for (item, slot) in items.iter().zip(ratings.iter_mut()) {
            if slot.is_none() {
                let prompt = render(&self.config.prompts.judge_single, &[("persona", persona.text()), ("item", item)]);
                let reply = self.text(self.request(prompt, self.config.temperature_naive))?;
                *slot = parse_single_rating(&reply);
            }
        }
        Ok(ratings)
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
        let hist = history_block(&extended);
        let prompt = render(&self.config.prompts.posterior_sample, &[("subject", self.subject()), ("history", &hist)]);
        let mut req = self.request(prompt, self.config.temperature_hypotheses);
        req.n = k as u32;
        req.max_tokens = 32;
        let samples: Vec<Hypothesis> = self
            .send(&req)?
            .contents()
            .iter()
            .filter_map(|c| parse_hypothesis_lines(c, 1).into_iter().next())
            .collect();
        plug_in_entropy(&samples)
    }

    fn rank_belief(&self, history: &History, belief: &[Hypothesis]) -> BackendResult<Option<usize>> {
        if belief.is_empty() {
            return Ok(None);
        }
        if belief.len() == 1 {
            return Ok(Some(0));
        }
        let hist = history_block(history);
        let list = list_block(belief);
        let prompt = render(
            &self.config.prompts.greedy_guess,
            &[("subject", self.subject()), ("history", &hist), ("hypotheses", &list)],
        );
        let mut req = self.request(prompt, 0.0);
        req.max_tokens = 64;
        let reply = self.text(req)?;
        let picked = parse_hypothesis_lines(&reply, 1);
        Ok(picked
            .first()
            .and_then(|p| belief.iter().position(|b| b.key() == p.key())))
    }

    fn guess_from_history(&self, history: &History) -> BackendResult<Option<Hypothesis>> {
        let hist = history_block(history);
        let prompt = render(&self.config.prompts.history_guess, &[("subject", self.subject()), ("history", &hist)]);
        let mut req = self.request(prompt, 0.0);
        req.max_tokens = 64;
        Ok(parse_hypothesis_lines(&self.text(req)?, 1).into_iter().next())
    }

    fn recommend_items(
        &self,
        history: &History,
        _belief: &[Hypothesis],
        count: usize,
        exclude: &[String],
    ) -> BackendResult<Vec<String>> {
        let hist = history_block(history);
        let prev = if exclude.is_empty() {
            "(none)".to_string()
        } else {
            exclude.iter().map(|e| format!("- {e}")).collect::<Vec<_>>().join("\n")
        };
        let n = count.to_string();
        let prompt = render(
            &self.config.prompts.recommendations,
            &[("history", &hist), ("n", &n), ("previous", &prev)],
        );
        let reply = self.text(self.request(prompt, self.config.temperature_naive))?;
        Ok(parse_hypothesis_lines(&reply, count)
            .into_iter()
            .map(|h| h.text().to_string())
            .collect())
    }

    fn item_consistent(&self, item: &str, history: &History) -> BackendResult<bool> {
        let hist = history_block(history);
        let prompt = render(&self.config.prompts.item_consistency, &[("history", &hist), ("item", item)]);
        let probe = Question::binary(Some("consistency".into()), format!("Consistent: {item}?"))?;
        let dist = self.label_distribution(None, prompt, &probe)?;
        Ok(dist.probs()[0] >= 0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn top(pairs: &[(&str, f64)]) -> Vec<TopLogprob> {
        pairs
            .iter()
            .map(|(t, p)| TopLogprob {
                token: t.to_string(),
                logprob: p.ln(),
            })
            .collect()
    }

    #[test]
    fn option_mass_renormalizes() {
        let q = Question::binary(None, "Is it big?").unwrap();
        let m = option_masses(&top(&[("Yes", 0.081), (" no", 0.009), ("Maybe", 0.5)]), &q);
        let d = Distribution::from_weights(m).unwrap();
        assert!((d.probs()[0] - 0.9).abs() < 1e-12);
        assert!((d.probs()[1] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn smoothing_uses_k_plus_options() {
        let q = Question::multiple_choice(None, "Pick", ["a", "b", "c", "d"]).unwrap();
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        let d = smoothed_frequencies(&s(&["A", "A", "A"]), &q).unwrap();
        assert_eq!(d.probs(), &[0.5, 0.125, 0.125, 0.125, 0.125]);
        let d = smoothed_frequencies(&s(&["A", "A", "E"]), &q).unwrap();
        assert_eq!(d.probs(), &[0.375, 0.125, 0.125, 0.125, 0.25]);
    }

    #[test]
    fn config_validation() {
        BackendConfig::default().validate().unwrap();
        let c = BackendConfig { temperature_naive: 0.0, ..BackendConfig::default() };
        assert!(c.validate().is_err());
        let c = BackendConfig { sample_count: 0, ..BackendConfig::default() };
        assert!(c.validate().is_err());
        let c: BackendConfig = serde_json::from_str(r#"{"model": "m", "endpoint": "http://x/v1/"}"#).unwrap();
        assert_eq!(c.completions_url(), "http://x/v1/chat/completions");
        assert_eq!(c.temperature_hypotheses, 1.3);
        assert_eq!(c.sample_count, 32);
    }
}
