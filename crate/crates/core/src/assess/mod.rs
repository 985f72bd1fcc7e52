//! Response judging and matcher evaluation.

pub mod embedding;
pub mod normalize;
pub mod similarity;

use std::collections::HashMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::{ChatBackend, ChatMessage, HarnessError, LlmResponse};
use crate::qgen::post_edit::ProviderError;
use crate::qgen::{Gold, Letter, Question, QuestionBank, QuestionKind};

pub use embedding::{embedding_similarity, EmbeddingLevel, EmbeddingProvider, EmbeddingScore, HashEmbedder, HttpEmbedder};
pub use normalize::{extract_mc_letter, normalize_yesno, YesNo};
pub use similarity::{levenshtein_distance, levenshtein_similarity, ngram_similarity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Correct,
    Incorrect,
    Unparseable,
    /// No answer or no matcher decision was available.
    Unassessed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    Levenshtein,
    Ngram,
    WordEmbedding,
    SentenceEmbedding,
    LlmJudge,
}

impl Method {
    pub const WH: [Method; 5] = [
        Method::Levenshtein,
        Method::Ngram,
        Method::WordEmbedding,
        Method::SentenceEmbedding,
        Method::LlmJudge,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Levenshtein => "levenshtein",
            Method::Ngram => "ngram",
            Method::WordEmbedding => "word_embedding",
            Method::SentenceEmbedding => "sentence_embedding",
            Method::LlmJudge => "llm_judge",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        [Method::Exact]
            .into_iter()
            .chain(Method::WH)
            .find(|m| m.as_str() == s)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub levenshtein: f64,
    pub ngram: f64,
    pub word_embedding: f64,
    pub sentence_embedding: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            levenshtein: 0.80,
            ngram: 0.50,
            word_embedding: 0.75,
            sentence_embedding: 0.75,
        }
    }
}

impl Thresholds {
    pub fn get(&self, method: Method) -> f64 {
        match method {
            Method::Levenshtein => self.levenshtein,
            Method::Ngram => self.ngram,
            Method::WordEmbedding => self.word_embedding,
            Method::SentenceEmbedding => self.sentence_embedding,
            // binary decisions
            Method::Exact | Method::LlmJudge => 1.0,
        }
    }

    pub fn set(&mut self, method: Method, value: f64) {
        match method {
            Method::Levenshtein => self.levenshtein = value,
            Method::Ngram => self.ngram = value,
            Method::WordEmbedding => self.word_embedding = value,
            Method::SentenceEmbedding => self.sentence_embedding = value,
            Method::Exact | Method::LlmJudge => {}
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssessConfig {
    pub wh_method: Method,
    pub thresholds: Thresholds,
    pub ngram_n: usize,
}

impl Default for AssessConfig {
    fn default() -> Self {
        AssessConfig {
            wh_method: Method::SentenceEmbedding,
            thresholds: Thresholds::default(),
            ngram_n: 1,
        }
    }
}

/// Providers needed by the model-backed matchers.
#[derive(Clone, Copy, Default)]
pub struct Matchers<'a> {
    pub embedder: Option<&'a dyn EmbeddingProvider>,
    pub judge: Option<&'a dyn ChatBackend>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub question_id: String,
    pub outcome: Outcome,
    pub method: Method,
    pub score: f64,
    pub threshold_used: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_cosine: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Verdict {
    fn new(q: &Question, outcome: Outcome, method: Method, score: f64, threshold: f64) -> Self {
        Verdict {
            question_id: q.id.clone(),
            outcome,
            method,
            score,
            threshold_used: threshold,
            raw_cosine: None,
            note: None,
        }
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

/// Lower-case, punctuation-free, single-spaced, without a leading "the".
pub fn normalize_phrase(s: &str) -> String {
    let words = similarity::word_tokens(s);
    let start = usize::from(words.len() > 1 && words[0] == "the");
    words[start..].join(" ")
}

pub const JUDGE_PROMPT: &str = "Decide whether the candidate answer refers to the same thing as the reference answer for the question below. Reply with only 'Yes' or 'No'.";

/// Asks a chat model whether `response` is equivalent to `gold`.
/// `Ok(None)` means the judge's own reply was unparseable.
pub fn llm_judge(
    backend: &dyn ChatBackend,
    question_text: &str,
    gold: &str,
    response: &str,
) -> Result<Option<bool>, HarnessError> {
    let prompt = format!(
        "{JUDGE_PROMPT}\nQuestion: {question_text}\nReference answer: {gold}\nCandidate answer: {response}"
    );
    let reply = backend.complete(&[ChatMessage::user(prompt)])?;
    Ok(match normalize_yesno(&reply.text) {
        YesNo::Yes => Some(true),
        YesNo::No => Some(false),
        YesNo::Unparseable => None,
    })
}

/// Similarity of `response` to `gold` under a WH method, with the raw
/// cosine for embedding methods. For the LLM judge the score is 0 or 1 and
/// `None` is returned when the judge reply could not be read.
pub fn wh_score(
    method: Method,
    question_text: &str,
    gold: &str,
    response: &str,
    config: &AssessConfig,
    matchers: Matchers<'_>,
) -> Result<Option<(f64, Option<f64>)>, ProviderError> {
    let need_embedder = || matchers.embedder.ok_or_else(|| ProviderError("no embedding provider configured".into()));
    Ok(Some(match method {
        Method::Exact => (f64::from(u8::from(normalize_phrase(gold) == normalize_phrase(response))), None),
        Method::Levenshtein => (levenshtein_similarity(gold.trim(), response.trim()), None),
        Method::Ngram => (ngram_similarity(gold, response, config.ngram_n.max(1)), None),
        Method::WordEmbedding | Method::SentenceEmbedding => {
            let level = if method == Method::WordEmbedding {
                EmbeddingLevel::WordAverage
            } else {
                EmbeddingLevel::Sentence
            };
            let s = embedding_similarity(need_embedder()?, gold, response, level)?;
            (s.score, Some(s.raw_cosine))
        }
        Method::LlmJudge => {
            let backend = matchers
                .judge
                .ok_or_else(|| ProviderError("no judge model configured".into()))?;
            match llm_judge(backend, question_text, gold, response).map_err(|e| ProviderError(e.to_string()))? {
                Some(b) => (f64::from(u8::from(b)), None),
                None => return Ok(None),
            }
        }
    }))
}

fn mc_letter(q: &Question, response: &str) -> Option<Letter> {
    extract_mc_letter(response).or_else(|| {
        // a bare option label names its letter when it matches exactly one option
        let said = normalize_phrase(response);
        let opts = q.options.as_ref()?;
        let mut hits = opts.iter().filter(|o| normalize_phrase(&o.label) == said);
        let first = hits.next()?;
        hits.next().is_none().then_some(first.letter)
    })
}

/// Judges one response to one question.
pub fn judge(q: &Question, response: &str, config: &AssessConfig, matchers: Matchers<'_>) -> Verdict {
    let exact = |hit: bool| {
        let outcome = if hit { Outcome::Correct } else { Outcome::Incorrect };
        Verdict::new(q, outcome, Method::Exact, f64::from(u8::from(hit)), 1.0)
    };
    let unparseable = |method: Method, threshold: f64| Verdict::new(q, Outcome::Unparseable, method, 0.0, threshold);
    match &q.gold {
        Gold::YesNo(gold) => match normalize_yesno(response) {
            YesNo::Yes => exact(*gold),
            YesNo::No => exact(!*gold),
            YesNo::Unparseable => unparseable(Method::Exact, 1.0),
        },
        Gold::Letter(gold) => match mc_letter(q, response) {
            Some(letter) => exact(letter == *gold),
            None => unparseable(Method::Exact, 1.0),
        },
        Gold::Phrase { text, aliases } => {
            let method = config.wh_method;
            let threshold = config.thresholds.get(method);
            let said = normalize_phrase(response);
            if said.is_empty() {
                return unparseable(method, threshold);
            }
            if std::iter::once(text).chain(aliases).any(|g| normalize_phrase(g) == said) {
                return Verdict::new(q, Outcome::Correct, method, 1.0, threshold).with_note("alias match");
            }
            let mut best: Option<(f64, Option<f64>)> = None;
            let mut judge_unreadable = false;
            for g in std::iter::once(text).chain(aliases) {
                match wh_score(method, &q.text, g, response, config, matchers) {
                    Ok(Some(s)) => {
                        if best.is_none_or(|b| s.0 > b.0) {
                            best = Some(s);
                        }
                    }
                    Ok(None) => judge_unreadable = true,
                    Err(e) => {
                        return Verdict::new(q, Outcome::Unassessed, method, 0.0, threshold).with_note(e.0);
                    }
                }
            }
            match best {
                Some((score, raw)) => {
                    let outcome = if score >= threshold { Outcome::Correct } else { Outcome::Incorrect };
                    let mut v = Verdict::new(q, outcome, method, score, threshold);
                    v.raw_cosine = raw;
                    v
                }
                None => {
                    debug_assert!(judge_unreadable);
                    Verdict::new(q, Outcome::Unassessed, method, 0.0, threshold).with_note("judge reply unparseable")
                }
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum AssessError {
    #[error("response refers to unknown question id {0}")]
    UnknownQuestionId(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("labeled set is empty")]
    EmptyLabeledSet,
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Judges every response; failed requests become `unassessed`.
/// Verdicts follow the order of `responses`.
pub fn assess_responses(
    bank: &QuestionBank,
    responses: &[LlmResponse],
    config: &AssessConfig,
    matchers: Matchers<'_>,
) -> Result<Vec<Verdict>, AssessError> {
    let index = bank.index();
    responses
        .iter()
        .map(|r| {
            let q = index
                .get(r.question_id.as_str())
                .ok_or_else(|| AssessError::UnknownQuestionId(r.question_id.clone()))?;
            Ok(match &r.error {
                Some(e) => {
                    let method = if q.kind == QuestionKind::Wh { config.wh_method } else { Method::Exact };
                    Verdict::new(q, Outcome::Unassessed, method, 0.0, config.thresholds.get(method))
                        .with_note(format!("no response: {e}"))
                }
                None => judge(q, &r.raw_text, config, matchers),
            })
        })
        .collect()
}

/// One human-labeled (gold, response) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub gold: String,
    pub response: String,
    #[serde(rename = "match")]
    pub is_match: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
}

pub fn read_labeled<R: BufRead>(source: R) -> Result<Vec<LabeledPair>, AssessError> {
    let mut out = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| AssessError::Parse {
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Error-detection scores: a human-labeled mismatch is the positive class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatcherReport {
    pub method: Method,
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: Confusion,
}

impl MatcherReport {
    pub fn from_counts(method: Method, threshold: f64, counts: Confusion) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(counts.tp, counts.tp + counts.fp);
        let recall = ratio(counts.tp, counts.tp + counts.fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        MatcherReport {
            method,
            threshold,
            precision,
            recall,
            f1,
            counts,
        }
    }
}

/// Scores of every labeled pair under `method`; `None` for unreadable
/// judge replies, which count as predicted mismatches.
fn labeled_scores(
    labeled: &[LabeledPair],
    method: Method,
    config: &AssessConfig,
    matchers: Matchers<'_>,
) -> Result<Vec<Option<f64>>, ProviderError> {
    labeled
        .iter()
        .map(|p| {
            if normalize_phrase(&p.gold) == normalize_phrase(&p.response) {
                return Ok(Some(1.0));
            }
            let question = p.question.as_deref().unwrap_or("");
            Ok(wh_score(method, question, &p.gold, &p.response, config, matchers)?.map(|s| s.0))
        })
        .collect()
}

fn confusion(labeled: &[LabeledPair], scores: &[Option<f64>], threshold: f64) -> Confusion {
    let mut c = Confusion::default();
    for (p, s) in labeled.iter().zip(scores) {
        let predicted_mismatch = s.is_none_or(|s| s < threshold);
        match (!p.is_match, predicted_mismatch) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fn_ += 1,
        }
    }
    c
}

/// P/R/F1 of each method at the thresholds in `config`.
pub fn evaluate_matchers(
    labeled: &[LabeledPair],
    methods: &[Method],
    config: &AssessConfig,
    matchers: Matchers<'_>,
) -> Result<Vec<MatcherReport>, AssessError> {
    if labeled.is_empty() {
        return Err(AssessError::EmptyLabeledSet);
    }
    methods
        .iter()
        .map(|&m| {
            let scores = labeled_scores(labeled, m, config, matchers)?;
            let threshold = config.thresholds.get(m);
            Ok(MatcherReport::from_counts(m, threshold, confusion(labeled, &scores, threshold)))
        })
        .collect()
}

/// Best-F1 threshold among `candidates`; ties keep the earlier candidate.
pub fn sweep_threshold(
    labeled: &[LabeledPair],
    method: Method,
    candidates: &[f64],
    config: &AssessConfig,
    matchers: Matchers<'_>,
) -> Result<MatcherReport, AssessError> {
    if labeled.is_empty() {
        return Err(AssessError::EmptyLabeledSet);
    }
    let scores = labeled_scores(labeled, method, config, matchers)?;
    let mut best: Option<MatcherReport> = None;
    for &t in candidates {
        let r = MatcherReport::from_counts(method, t, confusion(labeled, &scores, t));
        if best.as_ref().is_none_or(|b| r.f1 > b.f1) {
            best = Some(r);
        }
    }
    best.ok_or_else(|| AssessError::Parse {
        line: 0,
        reason: "no threshold candidates".into(),
    })
}

/// Counts per outcome.
pub fn outcome_counts(verdicts: &[Verdict]) -> HashMap<Outcome, usize> {
    let mut m = HashMap::new();
    for v in verdicts {
        *m.entry(v.outcome).or_insert(0) += 1;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::ScriptedBackend;
    use crate::kg::Triplet;
    use crate::qgen::McOption;

    fn q(kind: QuestionKind, gold: Gold) -> Question {
        let options = (kind == QuestionKind::MultipleChoice).then(|| {
            ["Latin", "Chinese", "Corsican", "Marathi"]
                .iter()
                .zip(Letter::ALL)
                .map(|(l, letter)| McOption {
                    letter,
                    label: l.to_string(),
                    entity: l.to_string(),
                })
                .collect()
        });
        Question {
            id: "q1".into(),
            kind,
            hops: 1,
            topic: "Person".into(),
            domain: "People".into(),
            text: "What is the native language of Napoleon?".into(),
            options,
            gold,
            provenance: vec![Triplet::new("napoleon", "native language", "corsican")],
            negative_substitute: None,
            target: None,
            flags: vec![],
        }
    }

    fn phrase(text: &str, aliases: &[&str]) -> Gold {
        Gold::Phrase {
            text: text.into(),
            aliases: aliases.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn exact_kinds() {
        let c = AssessConfig::default();
        let m = Matchers::default();
        let yn = q(QuestionKind::YesNo, Gold::YesNo(true));
        assert_eq!(judge(&yn, "Yes", &c, m).outcome, Outcome::Correct);
        assert_eq!(judge(&yn, "No.", &c, m).outcome, Outcome::Incorrect);
        assert_eq!(judge(&yn, "Yes and no", &c, m).outcome, Outcome::Unparseable);
        let mc = q(QuestionKind::MultipleChoice, Gold::Letter(Letter::C));
        let v = judge(&mc, "C", &c, m);
        assert_eq!((v.outcome, v.method, v.score), (Outcome::Correct, Method::Exact, 1.0));
        assert_eq!(judge(&mc, "Corsican", &c, m).outcome, Outcome::Correct);
        assert_eq!(judge(&mc, "A", &c, m).outcome, Outcome::Incorrect);
        assert_eq!(judge(&mc, "E", &c, m).outcome, Outcome::Unparseable);
    }

    #[test]
    fn wh_default_method() {
        let e = HashEmbedder::default();
        let m = Matchers {
            embedder: Some(&e),
            judge: None,
        };
        let c = AssessConfig::default();
        let wh = q(QuestionKind::Wh, phrase("Corsican", &[]));
        let v = judge(&wh, "Corsican language", &c, m);
        assert_eq!(v.method, Method::SentenceEmbedding);
        assert_eq!(v.outcome, Outcome::Correct, "{v:?}");
        assert!(v.raw_cosine.is_some());
        assert_eq!(judge(&wh, "Italian", &c, m).outcome, Outcome::Incorrect);
        assert_eq!(judge(&wh, "  ", &c, m).outcome, Outcome::Unparseable);
    }

    #[test]
    fn alias_wins_over_low_score() {
        let c = AssessConfig {
            wh_method: Method::Levenshtein,
            ..AssessConfig::default()
        };
        let wh = q(QuestionKind::Wh, phrase("United States of America", &["USA"]));
        let v = judge(&wh, "the USA.", &c, Matchers::default());
        assert_eq!(v.outcome, Outcome::Correct);
        assert!(levenshtein_similarity("United States of America", "the USA.") < 0.8);
    }

    #[test]
    fn missing_provider_is_unassessed() {
        let wh = q(QuestionKind::Wh, phrase("Corsican", &[]));
        let v = judge(&wh, "Italian", &AssessConfig::default(), Matchers::default());
        assert_eq!(v.outcome, Outcome::Unassessed);
    }

    #[test]
    fn judge_model() {
        let yes = ScriptedBackend::constant("judge", "Yes");
        let maybe = ScriptedBackend::constant("judge", "Maybe");
        assert_eq!(llm_judge(&yes, "q?", "a", "b").unwrap(), Some(true));
        assert_eq!(llm_judge(&maybe, "q?", "a", "b").unwrap(), None);
        let c = AssessConfig {
            wh_method: Method::LlmJudge,
            ..AssessConfig::default()
        };
        let wh = q(QuestionKind::Wh, phrase("Great Britain", &[]));
        let m = Matchers {
            embedder: None,
            judge: Some(&yes),
        };
        assert_eq!(judge(&wh, "United Kingdom", &c, m).outcome, Outcome::Correct);
        let m = Matchers {
            embedder: None,
            judge: Some(&maybe),
        };
        assert_eq!(judge(&wh, "United Kingdom", &c, m).outcome, Outcome::Unassessed);
    }

    #[test]
    fn report_arithmetic() {
        let r = MatcherReport::from_counts(
            Method::Ngram,
            0.5,
            Confusion {
                tp: 6,
                fp: 2,
                tn: 10,
                fn_: 2,
            },
        );
        assert!((r.precision - 0.75).abs() < 1e-12);
        assert!((r.recall - 0.75).abs() < 1e-12);
        assert!((r.f1 - 0.75).abs() < 1e-12);
        let zero = MatcherReport::from_counts(Method::Ngram, 0.5, Confusion::default());
        assert_eq!(zero.f1, 0.0);
    }

    #[test]
    fn labeled_file_roundtrip() {
        let text = "{\"gold\":\"Paris\",\"response\":\"paris\",\"match\":true}\n\n{\"gold\":\"A\",\"response\":\"B\",\"match\":false}\n";
        let pairs = read_labeled(text.as_bytes()).unwrap();
        assert_eq!(pairs.len(), 2);
        assert!(pairs[0].is_match && !pairs[1].is_match);
        assert!(matches!(read_labeled("{".as_bytes()), Err(AssessError::Parse { line: 1, .. })));
    }
}
