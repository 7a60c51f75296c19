//! Shipped datasets and tabular scenarios used by the benchmark, the tests
//! and the acceptance suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::backend::{BackendResult, CatalogItem, Rubric, TabularModel};
use crate::harness::{parse_dataset, TargetEntry};
use crate::types::{Hypothesis, Question, MULTIPLE_CHOICE_LABELS};
use crate::Distribution;

const ANIMALS: &str = include_str!("../data/animals.txt");
const FILMS: &str = include_str!("../data/films.json");

/// The 100-entry animals list, with alternative names.
pub fn animals() -> Vec<TargetEntry> {
    parse_dataset(ANIMALS)
}

#[derive(Debug, Clone, Deserialize)]
pub struct Persona {
    pub text: String,
    pub rubric: Rubric,
}

/// Film-taste personas with machine-checkable rubrics over a tagged catalog.
#[derive(Debug, Clone, Deserialize)]
pub struct PreferenceFixture {
    pub catalog: Vec<CatalogItem>,
    pub personas: Vec<Persona>,
}

impl PreferenceFixture {
    /// Every tag used in the catalog, sorted.
    pub fn tags(&self) -> Vec<String> {
        let mut tags: Vec<String> = self.catalog.iter().flat_map(|c| c.tags.iter().cloned()).collect();
        tags.sort();
        tags.dedup();
        tags
    }

    /// Personas as dataset entries; the persona paragraph is the target.
    pub fn entries(&self) -> Vec<TargetEntry> {
        self.personas.iter().map(|p| TargetEntry::new(p.text.clone(), Vec::new())).collect()
    }
}

pub fn preference_fixture() -> PreferenceFixture {
    serde_json::from_str(FILMS).expect("embedded film fixture is valid")
}

/// Sharpness of the genre-choice softmax over rubric scores.
const PREFERENCE_SHARPNESS: f64 = 1.5;
/// Rubric-scale score of "none of the above".
const NONE_SCORE: f64 = 2.0;

/// A multiple-choice preference model over the persona fixture: each
/// question offers four genres, and a persona picks among them (or "none of
/// the above") with softmax probabilities over its rubric scores.
pub fn preference_model(question_count: usize, seed: u64) -> BackendResult<TabularModel> {
    let fixture = preference_fixture();
    let tags = fixture.tags();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::new();
    let mut questions = Vec::new();
    let mut likelihood = Vec::new();
    let attempts = question_count * 50;
    for _ in 0..attempts {
        if questions.len() == question_count {
            break;
        }
        let mut pick = rand::seq::index::sample(&mut rng, tags.len(), 4).into_vec();
        pick.sort_unstable();
        if !seen.insert(pick.clone()) {
            continue;
        }
        let genres: Vec<&str> = pick.iter().map(|&i| tags[i].as_str()).collect();
        let q = Question::multiple_choice(
            Some(format!("genre-{}", genres.join("-"))),
            "Which kind of film would this viewer most enjoy tonight?",
            [genres[0], genres[1], genres[2], genres[3]],
        )?;
        let rows = fixture
            .personas
            .iter()
            .map(|p| {
                let scores = genres
                    .iter()
                    .map(|g| p.rubric.base + p.rubric.adjustments.get(*g).copied().unwrap_or(0.0))
                    .chain(std::iter::once(NONE_SCORE));
                Distribution::from_weights(scores.map(|s| (PREFERENCE_SHARPNESS * s).exp()).collect())
            })
            .collect::<Result<Vec<_>, _>>()?;
        questions.push(q);
        likelihood.push(rows);
    }
    let hyps = fixture
        .personas
        .iter()
        .map(|p| Hypothesis::new(p.text.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    let rubrics = fixture.personas.iter().map(|p| p.rubric.clone()).collect();
    let mut model = TabularModel::new(hyps, None, questions, likelihood)?.with_preferences(fixture.catalog, rubrics)?;
    model.seed = seed;
    Ok(model)
}

/// A binary model over dataset entries: every entry gets random feature
/// bits, and "does it have feature k?" is answered truthfully except with
/// probability `noise`.
pub fn synthetic_binary_model(
    entries: &[TargetEntry],
    features: usize,
    noise: f64,
    seed: u64,
) -> BackendResult<TabularModel> {
    if !(0.0..0.5).contains(&noise) {
        return Err(crate::backend::BackendError::Config("noise must lie in [0, 0.5)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bits: Vec<Vec<bool>> = entries.iter().map(|_| (0..features).map(|_| rng.gen()).collect()).collect();
    let questions = (0..features)
        .map(|k| Question::binary(Some(format!("feature-{k:02}")), format!("Does it have feature #{k}?")))
        .collect::<Result<Vec<_>, _>>()?;
    let likelihood = (0..features)
        .map(|k| {
            bits.iter()
                .map(|b| {
                    let yes = if b[k] { 1.0 - noise } else { noise };
                    Distribution::new(vec![yes, 1.0 - yes])
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    let hyps = entries
        .iter()
        .map(|e| Hypothesis::new(e.name.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    let alternatives = entries.iter().map(|e| e.alternatives.clone()).collect();
    let mut model = TabularModel::new(hyps, None, questions, likelihood)?.with_alternatives(alternatives)?;
    model.seed = seed;
    Ok(model)
}

/// Feature count that makes `n` synthetic entries comfortably separable.
pub fn default_feature_count(n: usize) -> usize {
    let bits = usize::BITS - n.max(2).saturating_sub(1).leading_zeros();
    (3 * bits as usize).max(8)
}

/// Sixteen hypotheses with a complete bank of four deterministic balanced
/// splits (the binary digits of the index), preceded by `noise_questions`
/// questions answered by a fair coin regardless of the hypothesis.
pub fn binary_search_model(noise_questions: usize) -> BackendResult<TabularModel> {
    const N: usize = 16;
    let hyps = (0..N)
        .map(|i| Hypothesis::new(format!("item {i:02}")))
        .collect::<Result<Vec<_>, _>>()?;
    let mut questions = Vec::new();
    let mut likelihood = Vec::new();
    for k in 0..noise_questions {
        questions.push(Question::binary(
            Some(format!("noise-{k}")),
            format!("Would a coin flip number {k} come up heads?"),
        )?);
        likelihood.push(vec![Distribution::new(vec![0.5, 0.5])?; N]);
    }
    for bit in 0..4 {
        questions.push(Question::binary(
            Some(format!("bit-{bit}")),
            format!("Is binary digit {bit} of its number set?"),
        )?);
        likelihood.push(
            (0..N)
                .map(|i| Distribution::point_mass(2, if i >> bit & 1 == 1 { 0 } else { 1 }))
                .collect::<Result<Vec<_>, _>>()?,
        );
    }
    TabularModel::new(hyps, None, questions, likelihood)
}

/// Multiple-choice trap: question "spread" has identical uniform rows over
/// A-D for every hypothesis (no information, maximal predictive entropy);
/// question "split" sends each of four hypotheses to its own option. "None
/// of the above" has probability zero throughout. "spread" is listed first.
pub fn predictive_entropy_trap() -> BackendResult<TabularModel> {
    let hyps = ["red", "green", "blue", "yellow"]
        .iter()
        .map(|c| Hypothesis::new(format!("a {c} marble")))
        .collect::<Result<Vec<_>, _>>()?;
    let spread = Question::multiple_choice(
        Some("spread".into()),
        "Which slot will the marble land in after it is shaken?",
        ["slot one", "slot two", "slot three", "slot four"],
    )?;
    let split = Question::multiple_choice(
        Some("split".into()),
        "What colour is the marble?",
        ["red", "green", "blue", "yellow"],
    )?;
    let options = MULTIPLE_CHOICE_LABELS.len();
    let uniform = Distribution::new(vec![0.25, 0.25, 0.25, 0.25, 0.0])?;
    let split_rows = (0..4)
        .map(|i| Distribution::point_mass(options, i))
        .collect::<Result<Vec<_>, _>>()?;
    TabularModel::new(hyps, None, vec![spread, split], vec![vec![uniform; 4], split_rows])
}
