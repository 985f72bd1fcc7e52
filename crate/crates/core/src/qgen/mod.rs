//! Rule-based compilation of graph facts into Yes-No, multiple-choice and
//! WH questions.

pub mod grammar;
pub mod post_edit;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{self, BufRead, Write};

use indexmap::IndexSet;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::{Lexicon, RelationCategory, TopicSpec, TripletRecord};
use crate::kg::{Entity, KnowledgeGraph, Triplet};

pub use grammar::{resolve_relation, Interrogatives, ResolvedRelation, Target};
pub use post_edit::{GrammarChecker, PostEditMode, Rewriter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    YesNo,
    MultipleChoice,
    Wh,
}

impl QuestionKind {
    pub const ALL: [QuestionKind; 3] = [QuestionKind::YesNo, QuestionKind::MultipleChoice, QuestionKind::Wh];

    pub fn as_str(self) -> &'static str {
        match self {
            QuestionKind::YesNo => "yes_no",
            QuestionKind::MultipleChoice => "multiple_choice",
            QuestionKind::Wh => "wh",
        }
    }
}

impl fmt::Display for QuestionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Letter {
    A,
    B,
    C,
    D,
}

impl Letter {
    pub const ALL: [Letter; 4] = [Letter::A, Letter::B, Letter::C, Letter::D];

    pub fn as_char(self) -> char {
        match self {
            Letter::A => 'A',
            Letter::B => 'B',
            Letter::C => 'C',
            Letter::D => 'D',
        }
    }

    pub fn from_char(c: char) -> Option<Letter> {
        match c.to_ascii_uppercase() {
            'A' => Some(Letter::A),
            'B' => Some(Letter::B),
            'C' => Some(Letter::C),
            'D' => Some(Letter::D),
            _ => None,
        }
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McOption {
    pub letter: Letter,
    pub label: String,
    pub entity: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gold {
    YesNo(bool),
    Letter(Letter),
    Phrase { text: String, aliases: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub kind: QuestionKind,
    pub hops: u8,
    pub topic: String,
    #[serde(default)]
    pub domain: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<McOption>>,
    pub gold: Gold,
    pub provenance: Vec<Triplet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negative_substitute: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Target>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl Question {
    pub fn flag(&mut self, flag: &str) {
        if !self.flags.iter().any(|f| f == flag) {
            self.flags.push(flag.to_string());
        }
    }

    pub fn gold_option(&self) -> Option<&McOption> {
        let Gold::Letter(letter) = self.gold else {
            return None;
        };
        self.options.as_ref()?.iter().find(|o| o.letter == letter)
    }

    /// Gold answer as plain text: "Yes"/"No", "C. Corsican", or the phrase.
    pub fn gold_text(&self) -> String {
        match &self.gold {
            Gold::YesNo(true) => "Yes".to_string(),
            Gold::YesNo(false) => "No".to_string(),
            Gold::Letter(l) => match self.gold_option() {
                Some(o) => format!("{l}. {}", o.label),
                None => l.to_string(),
            },
            Gold::Phrase { text, .. } => text.clone(),
        }
    }

    /// Gold answer in the shape the model is asked to produce.
    pub fn gold_short(&self) -> String {
        match &self.gold {
            Gold::Letter(l) => l.to_string(),
            _ => self.gold_text(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    Negative,
}

/// Two relation labels chained through an intermediate entity.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RelationPath {
    first: String,
    second: String,
}

impl RelationPath {
    /// `None` unless the first relation is a noun; verb phrases cannot be
    /// folded into a possessive subject.
    pub fn new(first: &str, second: &str, lexicon: &Lexicon) -> Option<Self> {
        let head = resolve_relation(first, lexicon);
        (head.category() == RelationCategory::Noun && !first.trim().is_empty()).then(|| RelationPath {
            first: first.to_string(),
            second: second.to_string(),
        })
    }

    pub fn first(&self) -> &str {
        &self.first
    }

    pub fn second(&self) -> &str {
        &self.second
    }
}

/// Shared inputs for the single-question generators.
pub struct Generator<'a> {
    pub graph: &'a KnowledgeGraph,
    pub lexicon: &'a Lexicon,
    pub pronouns: Interrogatives,
    pub topic: TopicSpec,
    pub seed: u64,
}

fn question_id(topic: &str, kind: QuestionKind, variant: &str, provenance: &[Triplet], seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(topic.as_bytes());
    h.update([0]);
    h.update(kind.as_str().as_bytes());
    h.update([0]);
    h.update(variant.as_bytes());
    for t in provenance {
        for part in [&t.subject, &t.relation, &t.object] {
            h.update([0]);
            h.update(part.as_bytes());
        }
    }
    h.update(seed.to_le_bytes());
    hex::encode(&h.finalize()[..8])
}

fn distinct_labels<'g>(graph: &'g KnowledgeGraph, gold: &Entity, pool: Vec<String>, k: usize) -> Vec<&'g Entity> {
    let mut labels: HashSet<&str> = HashSet::from([gold.label.as_str()]);
    pool.iter()
        .filter_map(|id| graph.entity(id))
        .filter(|e| labels.insert(e.label.as_str()))
        .take(k)
        .collect()
}

impl<'a> Generator<'a> {
    pub fn new(graph: &'a KnowledgeGraph, lexicon: &'a Lexicon, topic: TopicSpec, seed: u64) -> Self {
        Generator {
            graph,
            lexicon,
            pronouns: Interrogatives::default(),
            topic,
            seed,
        }
    }

    fn entity(&self, id: &str) -> Option<&'a Entity> {
        self.graph.entity(id)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        &self,
        kind: QuestionKind,
        hops: u8,
        variant: &str,
        text: String,
        gold: Gold,
        options: Option<Vec<McOption>>,
        provenance: Vec<Triplet>,
        negative_substitute: Option<String>,
        target: Option<Target>,
    ) -> Question {
        Question {
            id: question_id(&self.topic.name, kind, variant, &provenance, self.seed),
            kind,
            hops,
            topic: self.topic.name.clone(),
            domain: self.topic.domain.clone(),
            text,
            options,
            gold,
            provenance,
            negative_substitute,
            target,
            flags: Vec::new(),
        }
    }

    /// Shuffles the gold entity in with its distractors and letters them.
    fn letter_options<R: Rng + ?Sized>(
        gold: &Entity,
        distractors: &[&Entity],
        rng: &mut R,
    ) -> (Vec<McOption>, Letter) {
        let mut entries: Vec<&Entity> = std::iter::once(gold).chain(distractors.iter().copied()).collect();
        entries.shuffle(rng);
        let mut gold_letter = Letter::A;
        let options = entries
            .into_iter()
            .zip(Letter::ALL)
            .map(|(e, letter)| {
                if e.id == gold.id {
                    gold_letter = letter;
                }
                McOption {
                    letter,
                    label: e.label.clone(),
                    entity: e.id.clone(),
                }
            })
            .collect();
        (options, gold_letter)
    }

    pub fn gen_yesno<R: Rng + ?Sized>(&self, t: &Triplet, polarity: Polarity, rng: &mut R) -> Option<Question> {
        let subject = self.entity(&t.subject)?;
        let object = self.entity(&t.object)?;
        let rel = resolve_relation(&t.relation, self.lexicon);
        match polarity {
            Polarity::Positive => {
                let text = grammar::yes_no_text(&subject.surface(), &rel, &object.surface());
                Some(self.assemble(
                    QuestionKind::YesNo,
                    1,
                    "positive",
                    text,
                    Gold::YesNo(true),
                    None,
                    vec![t.clone()],
                    None,
                    None,
                ))
            }
            Polarity::Negative => {
                let pick = self.graph.sample_unrelated_objects_where(&t.subject, &t.relation, 1, rng, |e| {
                    e.class == object.class && e.id != subject.id && e.label != object.label
                });
                let substitute = self.entity(pick.first()?)?;
                let text = grammar::yes_no_text(&subject.surface(), &rel, &substitute.surface());
                Some(self.assemble(
                    QuestionKind::YesNo,
                    1,
                    &format!("negative:{}", substitute.id),
                    text,
                    Gold::YesNo(false),
                    None,
                    vec![t.clone()],
                    Some(substitute.id.clone()),
                    None,
                ))
            }
        }
    }

    pub fn gen_mc<R: Rng + ?Sized>(&self, t: &Triplet, target: Target, rng: &mut R) -> Option<Question> {
        let subject = self.entity(&t.subject)?;
        let object = self.entity(&t.object)?;
        let rel = resolve_relation(&t.relation, self.lexicon);
        let (gold, text, pool) = match target {
            Target::Object => {
                let pronoun = self.pronouns.pronoun(object.class, &rel, Target::Object);
                let text = grammar::object_query_text(&pronoun, &rel, &subject.surface());
                let pool = self.graph.sample_unrelated_objects_where(
                    &t.subject,
                    &t.relation,
                    usize::MAX,
                    rng,
                    |e| e.class == object.class && e.id != subject.id,
                );
                (object, text, pool)
            }
            Target::Subject => {
                let pronoun = self.pronouns.pronoun(subject.class, &rel, Target::Subject);
                let text = grammar::subject_query_text(&pronoun, &rel, &object.surface());
                let pool = self.graph.sample_unrelated_subjects_where(
                    &t.object,
                    &t.relation,
                    usize::MAX,
                    rng,
                    |e| e.class == subject.class && e.id != object.id,
                );
                (subject, text, pool)
            }
        };
        let distractors = distinct_labels(self.graph, gold, pool, 3);
        if distractors.len() < 3 {
            return None;
        }
        let (options, letter) = Self::letter_options(gold, &distractors, rng);
        let variant = match target {
            Target::Subject => "subject",
            Target::Object => "object",
        };
        Some(self.assemble(
            QuestionKind::MultipleChoice,
            1,
            variant,
            text,
            Gold::Letter(letter),
            Some(options),
            vec![t.clone()],
            None,
            Some(target),
        ))
    }

    pub fn gen_wh(&self, t: &Triplet) -> Option<Question> {
        if self.graph.unique_object(&t.subject, &t.relation) != Some(t.object.as_str()) {
            return None;
        }
        let subject = self.entity(&t.subject)?;
        let object = self.entity(&t.object)?;
        let rel = resolve_relation(&t.relation, self.lexicon);
        let pronoun = self.pronouns.pronoun(object.class, &rel, Target::Object);
        let text = grammar::object_query_text(&pronoun, &rel, &subject.surface());
        Some(self.assemble(
            QuestionKind::Wh,
            1,
            "object",
            text,
            Gold::Phrase {
                text: object.label.clone(),
                aliases: object.aliases.clone(),
            },
            None,
            vec![t.clone()],
            None,
            Some(Target::Object),
        ))
    }

    /// Two-hop Yes-No or multiple-choice question about
    /// `(subject, path, object)`. The positive variant of Yes-No and the
    /// gold of multiple choice both require `object` to be reachable.
    pub fn gen_2hop<R: Rng + ?Sized>(
        &self,
        subject_id: &str,
        path: &RelationPath,
        object_id: &str,
        kind: QuestionKind,
        polarity: Polarity,
        rng: &mut R,
    ) -> Option<Question> {
        let g = self.graph;
        let reachable = g.two_hop_objects(subject_id, path.first(), path.second());
        if !reachable.iter().any(|z| z == object_id) {
            return None;
        }
        let bridge = g
            .two_hop_bridges(subject_id, path.first(), path.second(), object_id)
            .into_iter()
            .next()?;
        let provenance = vec![
            Triplet::new(subject_id, path.first(), &bridge),
            Triplet::new(&bridge, path.second(), object_id),
        ];
        let subject = self.entity(subject_id)?;
        let object = self.entity(object_id)?;
        let rel = resolve_relation(path.second(), self.lexicon);
        let composite = grammar::composite_subject(&subject.surface(), path.first());
        let admit = |e: &Entity| {
            e.class == object.class && e.id != subject.id && !reachable.contains(&e.id)
        };
        // Every `second` edge object not reachable from the subject.
        let mut pool: Vec<String> = g
            .edges_with_relation(path.second())
            .map(|t| t.object.clone())
            .collect::<IndexSet<_>>()
            .into_iter()
            .filter(|id| g.entity(id).is_some_and(admit))
            .collect();
        pool.shuffle(rng);
        match kind {
            QuestionKind::YesNo => {
                let (shown, variant, substitute) = match polarity {
                    Polarity::Positive => (object, "positive".to_string(), None),
                    Polarity::Negative => {
                        let sub = distinct_labels(g, object, pool, 1).into_iter().next()?;
                        (sub, format!("negative:{}", sub.id), Some(sub.id.clone()))
                    }
                };
                let text = grammar::yes_no_text(&composite, &rel, &shown.surface());
                Some(self.assemble(
                    QuestionKind::YesNo,
                    2,
                    &variant,
                    text,
                    Gold::YesNo(polarity == Polarity::Positive),
                    None,
                    provenance,
                    substitute,
                    None,
                ))
            }
            QuestionKind::MultipleChoice => {
                let distractors = distinct_labels(g, object, pool, 3);
                if distractors.len() < 3 {
                    return None;
                }
                let pronoun = self.pronouns.pronoun(object.class, &rel, Target::Object);
                let text = grammar::object_query_text(&pronoun, &rel, &composite);
                let (options, letter) = Self::letter_options(object, &distractors, rng);
                Some(self.assemble(
                    QuestionKind::MultipleChoice,
                    2,
                    "object",
                    text,
                    Gold::Letter(letter),
                    Some(options),
                    provenance,
                    None,
                    Some(Target::Object),
                ))
            }
            QuestionKind::Wh => None,
        }
    }
}

/// Facts attributed to one topic.
#[derive(Debug, Clone)]
pub struct TopicSlice {
    pub topic: TopicSpec,
    pub triplets: Vec<Triplet>,
}

impl TopicSlice {
    /// Groups records by their `topic` tag. Untagged records go to the first
    /// topic when exactly one is configured; otherwise they are dropped.
    pub fn partition(records: &[TripletRecord], topics: &[TopicSpec]) -> Vec<TopicSlice> {
        let mut slices: Vec<TopicSlice> = topics
            .iter()
            .map(|t| TopicSlice {
                topic: t.clone(),
                triplets: Vec::new(),
            })
            .collect();
        let mut seen: Vec<HashSet<Triplet>> = vec![HashSet::new(); slices.len()];
        for rec in records {
            let idx = match &rec.topic {
                Some(name) => topics.iter().position(|t| &t.name == name),
                None if topics.len() == 1 => Some(0),
                None => None,
            };
            if let Some(i) = idx {
                let t = rec.triplet();
                if seen[i].insert(t.clone()) {
                    slices[i].triplets.push(t);
                }
            }
        }
        slices
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub per_type_count: usize,
    pub hops: Vec<u8>,
    pub seed: u64,
    #[serde(default)]
    pub post_edit: PostEditMode,
    /// Upper bound on enumerated two-hop facts per topic.
    #[serde(default = "default_two_hop_cap")]
    pub two_hop_cap: usize,
}

fn default_two_hop_cap() -> usize {
    20_000
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            per_type_count: 500,
            hops: vec![1],
            seed: 0,
            post_edit: PostEditMode::None,
            two_hop_cap: default_two_hop_cap(),
        }
    }
}

/// Why candidate facts did not become questions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub emitted: BTreeMap<String, usize>,
    pub skipped_no_distractors: usize,
    pub skipped_no_negative: usize,
    pub skipped_non_unique_wh: usize,
    pub grammar_filtered: usize,
    pub rewritten: usize,
    pub post_edit_failures: usize,
    pub two_hop_candidates: usize,
}

impl GenerationStats {
    fn merge(&mut self, other: GenerationStats) {
        for (k, v) in other.emitted {
            *self.emitted.entry(k).or_default() += v;
        }
        self.skipped_no_distractors += other.skipped_no_distractors;
        self.skipped_no_negative += other.skipped_no_negative;
        self.skipped_non_unique_wh += other.skipped_non_unique_wh;
        self.grammar_filtered += other.grammar_filtered;
        self.rewritten += other.rewritten;
        self.post_edit_failures += other.post_edit_failures;
        self.two_hop_candidates += other.two_hop_candidates;
    }
}

/// Post-editing providers; unused fields may be `None`.
#[derive(Default, Clone, Copy)]
pub struct PostEditors<'a> {
    pub checker: Option<&'a dyn GrammarChecker>,
    pub rewriter: Option<&'a dyn Rewriter>,
}

pub const BANK_FORMAT: &str = "kgprobe-question-bank";
pub const BANK_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct BankHeader {
    format: String,
    version: u32,
    seed: u64,
    count: usize,
}

#[derive(Debug, Error)]
pub enum BankError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("unsupported bank header: {0}")]
    Header(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QuestionBank {
    pub seed: u64,
    pub questions: Vec<Question>,
}

impl QuestionBank {
    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Question> {
        self.questions.iter().find(|q| q.id == id)
    }

    pub fn index(&self) -> std::collections::HashMap<&str, &Question> {
        self.questions.iter().map(|q| (q.id.as_str(), q)).collect()
    }

    pub fn write<W: Write>(&self, sink: &mut W) -> io::Result<()> {
        let header = BankHeader {
            format: BANK_FORMAT.into(),
            version: BANK_VERSION,
            seed: self.seed,
            count: self.questions.len(),
        };
        serde_json::to_writer(&mut *sink, &header)?;
        sink.write_all(b"\n")?;
        for q in &self.questions {
            serde_json::to_writer(&mut *sink, q)?;
            sink.write_all(b"\n")?;
        }
        sink.flush()
    }

    pub fn read<R: BufRead>(source: R) -> Result<Self, BankError> {
        let mut lines = source.lines().enumerate();
        let header: BankHeader = match lines.next() {
            Some((_, line)) => serde_json::from_str(&line?).map_err(|e| BankError::Header(e.to_string()))?,
            None => return Err(BankError::Header("empty file".into())),
        };
        if header.format != BANK_FORMAT || header.version != BANK_VERSION {
            return Err(BankError::Header(format!("{} v{}", header.format, header.version)));
        }
        let mut questions = Vec::with_capacity(header.count);
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let q = serde_json::from_str(&line).map_err(|e| BankError::Parse {
                line: i + 1,
                reason: e.to_string(),
            })?;
            questions.push(q);
        }
        Ok(QuestionBank {
            seed: header.seed,
            questions,
        })
    }
}

fn stream_seed(seed: u64, topic: &str, kind: QuestionKind, hops: u8) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(topic.as_bytes());
    h.update([0, hops]);
    h.update(kind.as_str().as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

struct Stream<'g, 'p> {
    generator: Generator<'g>,
    rng_seed: u64,
    editors: PostEditors<'p>,
    mode: PostEditMode,
    stats: GenerationStats,
}

impl Stream<'_, '_> {
    fn edit(&mut self, q: Question) -> Option<Question> {
        use post_edit::EditOutcome::*;
        let (out, outcome) = post_edit::post_edit(q, self.mode, self.editors.checker, self.editors.rewriter);
        match outcome {
            Filtered => self.stats.grammar_filtered += 1,
            Rewritten => self.stats.rewritten += 1,
            ProviderFailed => self.stats.post_edit_failures += 1,
            Unchanged | RewriteRejected => {}
        }
        out
    }

    /// Collects balanced Yes/No pairs; `odd_extra` allows a trailing
    /// unpaired positive when `count` is odd.
    fn yes_no_pairs<F>(&mut self, count: usize, odd_extra: bool, candidates: usize, mut make: F) -> Vec<Question>
    where
        F: FnMut(&Generator, usize, Polarity, &mut ChaCha8Rng) -> Option<Question>,
    {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        let mut out = Vec::new();
        let pairs = count / 2;
        let mut spare: Option<Question> = None;
        for i in 0..candidates {
            if out.len() >= pairs * 2 {
                break;
            }
            let Some(neg) = make(&self.generator, i, Polarity::Negative, &mut rng) else {
                self.stats.skipped_no_negative += 1;
                continue;
            };
            let Some(pos) = make(&self.generator, i, Polarity::Positive, &mut rng) else {
                continue;
            };
            let (Some(pos), Some(neg)) = (self.edit(pos), self.edit(neg)) else {
                continue;
            };
            out.push(pos);
            out.push(neg);
        }
        if odd_extra && count % 2 == 1 {
            for i in 0..candidates {
                if let Some(pos) = make(&self.generator, i, Polarity::Positive, &mut rng) {
                    if out.iter().any(|q| q.id == pos.id) {
                        continue;
                    }
                    if let Some(pos) = self.edit(pos) {
                        spare = Some(pos);
                        break;
                    }
                }
            }
        }
        out.extend(spare);
        out
    }
}

/// Every two-hop fact `(s, [r1, r2], z)` rooted at a topic subject whose
/// first relation is a noun, in deterministic order, capped at `cap`.
pub fn enumerate_two_hop(
    graph: &KnowledgeGraph,
    lexicon: &Lexicon,
    subjects: &[String],
    cap: usize,
) -> Vec<(String, RelationPath, String)> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    'outer: for s in subjects {
        for r1 in graph.out_relations(s) {
            let mids = graph.objects_of(s, r1);
            for mid in mids {
                for r2 in graph.out_relations(mid) {
                    let Some(path) = RelationPath::new(r1, r2, lexicon) else {
                        continue;
                    };
                    for z in graph.objects_of(mid, r2) {
                        if z == s {
                            continue;
                        }
                        if seen.insert((s.clone(), r1.to_string(), r2.to_string(), z.clone())) {
                            out.push((s.clone(), path.clone(), z.clone()));
                            if out.len() >= cap {
                                break 'outer;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Generates the full question bank for every topic, kind and hop count.
pub fn generate_bank(
    graph: &KnowledgeGraph,
    lexicon: &Lexicon,
    slices: &[TopicSlice],
    config: &GenerationConfig,
    editors: PostEditors<'_>,
) -> (QuestionBank, GenerationStats) {
    let mut questions = Vec::new();
    let mut stats = GenerationStats::default();
    let count = config.per_type_count;
    for slice in slices {
        let name = slice.topic.name.as_str();
        for &hops in &config.hops {
            if hops != 1 && hops != 2 {
                continue;
            }
            let two_hop = if hops == 2 {
                let mut subjects: IndexSet<String> = IndexSet::new();
                subjects.extend(slice.triplets.iter().map(|t| t.subject.clone()));
                let subjects: Vec<String> = subjects.into_iter().collect();
                let facts = enumerate_two_hop(graph, lexicon, &subjects, config.two_hop_cap);
                stats.two_hop_candidates += facts.len();
                facts
            } else {
                Vec::new()
            };
            for kind in QuestionKind::ALL {
                if hops == 2 && kind == QuestionKind::Wh {
                    continue;
                }
                let seed = stream_seed(config.seed, name, kind, hops);
                let mut order_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
                let mut stream = Stream {
                    generator: Generator::new(graph, lexicon, slice.topic.clone(), config.seed),
                    rng_seed: seed,
                    editors,
                    mode: config.post_edit,
                    stats: GenerationStats::default(),
                };
                let out = if hops == 1 {
                    let mut triplets = slice.triplets.clone();
                    triplets.shuffle(&mut order_rng);
                    one_hop_stream(&mut stream, kind, &triplets, count)
                } else {
                    let mut facts = two_hop.clone();
                    facts.shuffle(&mut order_rng);
                    two_hop_stream(&mut stream, kind, &facts, count)
                };
                *stream
                    .stats
                    .emitted
                    .entry(format!("{name}/{kind}/{hops}"))
                    .or_default() += out.len();
                stats.merge(stream.stats);
                questions.extend(out);
            }
        }
    }
    questions.sort_by(|a, b| a.id.cmp(&b.id));
    questions.dedup_by(|a, b| a.id == b.id);
    (
        QuestionBank {
            seed: config.seed,
            questions,
        },
        stats,
    )
}

fn one_hop_stream(stream: &mut Stream, kind: QuestionKind, triplets: &[Triplet], count: usize) -> Vec<Question> {
    match kind {
        QuestionKind::YesNo => stream.yes_no_pairs(count, true, triplets.len(), |g, i, pol, rng| {
            g.gen_yesno(&triplets[i], pol, rng)
        }),
        QuestionKind::MultipleChoice => {
            let mut rng = ChaCha8Rng::seed_from_u64(stream.rng_seed);
            let mut out = Vec::new();
            for (i, t) in triplets.iter().enumerate() {
                if out.len() >= count {
                    break;
                }
                let first = if i % 2 == 0 { Target::Object } else { Target::Subject };
                let second = if first == Target::Object { Target::Subject } else { Target::Object };
                let q = stream
                    .generator
                    .gen_mc(t, first, &mut rng)
                    .or_else(|| stream.generator.gen_mc(t, second, &mut rng));
                match q {
                    Some(q) => out.extend(stream.edit(q)),
                    None => stream.stats.skipped_no_distractors += 1,
                }
            }
            out
        }
        QuestionKind::Wh => {
            let mut out = Vec::new();
            for t in triplets {
                if out.len() >= count {
                    break;
                }
                match stream.generator.gen_wh(t) {
                    Some(q) => out.extend(stream.edit(q)),
                    None => stream.stats.skipped_non_unique_wh += 1,
                }
            }
            out
        }
    }
}

fn two_hop_stream(
    stream: &mut Stream,
    kind: QuestionKind,
    facts: &[(String, RelationPath, String)],
    count: usize,
) -> Vec<Question> {
    match kind {
        QuestionKind::YesNo => stream.yes_no_pairs(count, false, facts.len(), |g, i, pol, rng| {
            let (s, path, z) = &facts[i];
            g.gen_2hop(s, path, z, QuestionKind::YesNo, pol, rng)
        }),
        QuestionKind::MultipleChoice => {
            let mut rng = ChaCha8Rng::seed_from_u64(stream.rng_seed);
            let mut out = Vec::new();
            let mut used = HashSet::new();
            for (s, path, z) in facts {
                if out.len() >= count {
                    break;
                }
                // one question per (subject, path): the stem does not name the object
                if used.contains(&(s, path)) {
                    continue;
                }
                match stream
                    .generator
                    .gen_2hop(s, path, z, QuestionKind::MultipleChoice, Polarity::Positive, &mut rng)
                {
                    Some(q) => {
                        if let Some(q) = stream.edit(q) {
                            used.insert((s, path));
                            out.push(q);
                        }
                    }
                    None => stream.stats.skipped_no_distractors += 1,
                }
            }
            out
        }
        QuestionKind::Wh => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::default_lexicon;
    use crate::kg::{EntityClass, GraphBuilder};

    fn e(id: &str, class: EntityClass) -> Entity {
        Entity::new(id, id, class)
    }

    fn add(b: &mut GraphBuilder, s: (&str, EntityClass), r: &str, o: (&str, EntityClass)) {
        b.add_triplet(Triplet::new(s.0, r, o.0), e(s.0, s.1), e(o.0, o.1)).unwrap();
    }

    fn people() -> KnowledgeGraph {
        use EntityClass::*;
        let mut b = GraphBuilder::new();
        add(&mut b, ("Donald Trump", Person), "child", ("Ivanka Trump", Person));
        add(&mut b, ("Barack Obama", Person), "child", ("Malia Obama", Person));
        add(&mut b, ("Bill Clinton", Person), "child", ("Chelsea Clinton", Person));
        add(&mut b, ("Bill Gates", Person), "child", ("Jennifer Gates", Person));
        add(&mut b, ("Michelle Obama", Person), "spouse", ("Barack Obama", Person));
        add(&mut b, ("Hillary Clinton", Person), "spouse", ("Bill Clinton", Person));
        add(&mut b, ("Barack Obama", Person), "educated at", ("Harvard University", Organization));
        add(&mut b, ("Bill Clinton", Person), "educated at", ("Yale University", Organization));
        add(&mut b, ("Bill Gates", Person), "educated at", ("Harvard University", Organization));
        b.seal()
    }

    fn generator<'a>(g: &'a KnowledgeGraph, lex: &'a Lexicon) -> Generator<'a> {
        Generator::new(g, lex, TopicSpec::new("Politician", "People"), 1)
    }

    #[test]
    fn mc_on_children() {
        let g = people();
        let lex = default_lexicon();
        let gen = generator(&g, &lex);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = gen
            .gen_mc(&Triplet::new("Donald Trump", "child", "Ivanka Trump"), Target::Object, &mut rng)
            .unwrap();
        assert_eq!(q.text, "Who is the child of Donald Trump?");
        let mut labels: Vec<_> = q.options.as_ref().unwrap().iter().map(|o| o.label.as_str()).collect();
        labels.sort();
        assert_eq!(labels, ["Chelsea Clinton", "Ivanka Trump", "Jennifer Gates", "Malia Obama"]);
        assert_eq!(q.gold_option().unwrap().label, "Ivanka Trump");
    }

    #[test]
    fn mc_needs_three_distractors() {
        let g = people();
        let lex = default_lexicon();
        let gen = generator(&g, &lex);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // only two spouse edges in the graph
        let t = Triplet::new("Michelle Obama", "spouse", "Barack Obama");
        assert!(gen.gen_mc(&t, Target::Object, &mut rng).is_none());
        assert!(gen.gen_mc(&t, Target::Subject, &mut rng).is_none());
    }

    #[test]
    fn two_hop_questions() {
        let g = people();
        let lex = default_lexicon();
        let gen = generator(&g, &lex);
        let path = RelationPath::new("spouse", "educated at", &lex).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let q = gen
            .gen_2hop("Michelle Obama", &path, "Harvard University", QuestionKind::YesNo, Polarity::Positive, &mut rng)
            .unwrap();
        assert_eq!(q.text, "Was Michelle Obama's spouse educated at Harvard University?");
        assert_eq!(q.gold, Gold::YesNo(true));
        assert_eq!(q.hops, 2);
        assert_eq!(q.provenance.len(), 2);

        let neg = gen
            .gen_2hop("Michelle Obama", &path, "Harvard University", QuestionKind::YesNo, Polarity::Negative, &mut rng)
            .unwrap();
        assert_eq!(neg.text, "Was Michelle Obama's spouse educated at Yale University?");
        assert_eq!(neg.gold, Gold::YesNo(false));

        // unreachable object
        assert!(gen
            .gen_2hop("Michelle Obama", &path, "Yale University", QuestionKind::YesNo, Polarity::Positive, &mut rng)
            .is_none());
        // WH is never produced for two hops
        assert!(gen
            .gen_2hop("Michelle Obama", &path, "Harvard University", QuestionKind::Wh, Polarity::Positive, &mut rng)
            .is_none());
    }

    #[test]
    fn verb_first_path_rejected() {
        let lex = default_lexicon();
        assert!(RelationPath::new("educated at", "capital", &lex).is_none());
        assert!(RelationPath::new("follows", "capital", &lex).is_none());
        assert!(RelationPath::new("spouse", "educated at", &lex).is_some());
    }

    #[test]
    fn template_totality() {
        // every category x kind x target pair renders a question
        let lex = Lexicon::new();
        for label in ["capital", "replaces", "founded by"] {
            let rel = resolve_relation(label, &lex);
            let texts = [
                grammar::yes_no_text("S", &rel, "O"),
                grammar::subject_query_text("What", &rel, "O"),
                grammar::object_query_text("What", &rel, "S"),
            ];
            for t in texts {
                assert!(t.ends_with('?') && t.contains(' '), "{t}");
            }
        }
    }

    #[test]
    fn bank_roundtrip_and_header() {
        let g = people();
        let lex = default_lexicon();
        let slices = vec![TopicSlice {
            topic: TopicSpec::new("Politician", "People"),
            triplets: g.edges().to_vec(),
        }];
        let cfg = GenerationConfig {
            per_type_count: 10,
            hops: vec![1, 2],
            seed: 9,
            ..Default::default()
        };
        let (bank, stats) = generate_bank(&g, &lex, &slices, &cfg, PostEditors::default());
        assert!(!bank.is_empty());
        assert!(stats.skipped_non_unique_wh + stats.emitted.values().sum::<usize>() > 0);
        let mut buf = Vec::new();
        bank.write(&mut buf).unwrap();
        let first = String::from_utf8(buf.clone()).unwrap();
        assert!(first.starts_with(r#"{"format":"kgprobe-question-bank","version":1"#));
        let back = QuestionBank::read(&buf[..]).unwrap();
        assert_eq!(back, bank);
    }

    #[test]
    fn zero_count_gives_empty_bank() {
        let g = people();
        let lex = default_lexicon();
        let slices = vec![TopicSlice {
            topic: TopicSpec::new("Politician", "People"),
            triplets: g.edges().to_vec(),
        }];
        let cfg = GenerationConfig {
            per_type_count: 0,
            hops: vec![1, 2],
            ..Default::default()
        };
        let (bank, _) = generate_bank(&g, &lex, &slices, &cfg, PostEditors::default());
        assert!(bank.is_empty());
    }
}
