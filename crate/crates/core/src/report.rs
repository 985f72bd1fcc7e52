//! Accuracy tables, failure sets and improvement artifacts.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{self, BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assess::{Outcome, Verdict};
use crate::harness::{build_prompt, question_block, LlmResponse};
use crate::qgen::{Question, QuestionBank, QuestionKind};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("verdict refers to unknown question id {0}")]
    UnknownQuestionId(String),
    #[error("need {needed} incorrect {kind} answers outside the evaluation slice, found {available}")]
    InsufficientFailures {
        kind: QuestionKind,
        needed: usize,
        available: usize,
    },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Verdicts for one model, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictSet {
    pub model: String,
    pub verdicts: Vec<Verdict>,
}

pub const VERDICTS_FORMAT: &str = "kgprobe-verdicts";

#[derive(Serialize, Deserialize)]
struct VerdictsHeader {
    format: String,
    version: u32,
    model: String,
}

impl VerdictSet {
    pub fn write<W: Write>(&self, sink: &mut W) -> io::Result<()> {
        let header = VerdictsHeader {
            format: VERDICTS_FORMAT.into(),
            version: 1,
            model: self.model.clone(),
        };
        serde_json::to_writer(&mut *sink, &header)?;
        sink.write_all(b"\n")?;
        for v in &self.verdicts {
            serde_json::to_writer(&mut *sink, v)?;
            sink.write_all(b"\n")?;
        }
        sink.flush()
    }

    pub fn read<R: BufRead>(source: R) -> Result<Self, ReportError> {
        let parse = |line: usize| move |e: serde_json::Error| ReportError::Parse { line, reason: e.to_string() };
        let mut lines = source.lines();
        let header: VerdictsHeader = match lines.next() {
            Some(l) => serde_json::from_str(&l?).map_err(parse(1))?,
            None => {
                return Err(ReportError::Parse {
                    line: 1,
                    reason: "empty verdicts file".into(),
                })
            }
        };
        if header.format != VERDICTS_FORMAT {
            return Err(ReportError::Parse {
                line: 1,
                reason: format!("expected format {VERDICTS_FORMAT}, got {}", header.format),
            });
        }
        let mut verdicts = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if !line.trim().is_empty() {
                verdicts.push(serde_json::from_str(&line).map_err(parse(i + 2))?);
            }
        }
        Ok(VerdictSet {
            model: header.model,
            verdicts,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub model: String,
    pub kind: QuestionKind,
    pub hops: u8,
    pub domain: String,
    pub topic: String,
}

/// Counts for one table cell. `n` excludes unassessed questions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub n: usize,
    pub correct: usize,
    pub incorrect: usize,
    pub unparseable: usize,
    pub unassessed: usize,
}

impl Cell {
    fn add(&mut self, outcome: Outcome) {
        match outcome {
            Outcome::Correct => self.correct += 1,
            Outcome::Incorrect => self.incorrect += 1,
            Outcome::Unparseable => self.unparseable += 1,
            Outcome::Unassessed => {
                self.unassessed += 1;
                return;
            }
        }
        self.n += 1;
    }

    fn merge(&mut self, other: &Cell) {
        self.n += other.n;
        self.correct += other.correct;
        self.incorrect += other.incorrect;
        self.unparseable += other.unparseable;
        self.unassessed += other.unassessed;
    }

    /// correct / n, unparseable counted as wrong; 0 for an empty cell.
    pub fn accuracy(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.correct as f64 / self.n as f64
        }
    }

    /// correct / (correct + incorrect), unparseable left out.
    pub fn accuracy_parsed(&self) -> f64 {
        let d = self.correct + self.incorrect;
        if d == 0 {
            0.0
        } else {
            self.correct as f64 / d as f64
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AccuracyTable {
    pub rows: BTreeMap<CellKey, Cell>,
}

impl AccuracyTable {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Per (model, kind) totals.
    pub fn by_kind(&self) -> BTreeMap<(String, QuestionKind), Cell> {
        let mut out: BTreeMap<(String, QuestionKind), Cell> = BTreeMap::new();
        for (k, c) in &self.rows {
            out.entry((k.model.clone(), k.kind)).or_default().merge(c);
        }
        out
    }

    /// Per model totals over every kind.
    pub fn overall(&self) -> BTreeMap<String, Cell> {
        let mut out: BTreeMap<String, Cell> = BTreeMap::new();
        for (k, c) in &self.rows {
            out.entry(k.model.clone()).or_default().merge(c);
        }
        out
    }
}

/// Tabulates verdicts per (model, kind, hops, domain, topic).
pub fn aggregate(sets: &[VerdictSet], bank: &QuestionBank) -> Result<AccuracyTable, ReportError> {
    let index = bank.index();
    let mut table = AccuracyTable::default();
    for set in sets {
        for v in &set.verdicts {
            let q = index
                .get(v.question_id.as_str())
                .ok_or_else(|| ReportError::UnknownQuestionId(v.question_id.clone()))?;
            let key = CellKey {
                model: set.model.clone(),
                kind: q.kind,
                hops: q.hops,
                domain: q.domain.clone(),
                topic: q.topic.clone(),
            };
            table.rows.entry(key).or_default().add(v.outcome);
        }
    }
    Ok(table)
}

#[derive(Serialize)]
struct JsonRow<'a> {
    model: &'a str,
    kind: Option<QuestionKind>,
    hops: Option<u8>,
    domain: Option<&'a str>,
    topic: Option<&'a str>,
    #[serde(flatten)]
    cell: Cell,
    accuracy: f64,
    accuracy_parsed: f64,
}

impl<'a> JsonRow<'a> {
    fn new(model: &'a str, kind: Option<QuestionKind>, key: Option<&'a CellKey>, cell: Cell) -> Self {
        JsonRow {
            model,
            kind,
            hops: key.map(|k| k.hops),
            domain: key.map(|k| k.domain.as_str()),
            topic: key.map(|k| k.topic.as_str()),
            cell,
            accuracy: cell.accuracy(),
            accuracy_parsed: cell.accuracy_parsed(),
        }
    }
}

pub const REPORT_FORMAT: &str = "kgprobe-report";

/// Machine-readable report: cells, per-kind totals and per-model totals.
pub fn write_json<W: Write>(table: &AccuracyTable, sink: &mut W) -> io::Result<()> {
    let by_kind = table.by_kind();
    let overall = table.overall();
    let doc = serde_json::json!({
        "format": REPORT_FORMAT,
        "version": 1,
        "rows": table.rows.iter().map(|(k, c)| JsonRow::new(&k.model, Some(k.kind), Some(k), *c)).collect::<Vec<_>>(),
        "by_kind": by_kind.iter().map(|((m, kind), c)| JsonRow::new(m, Some(*kind), None, *c)).collect::<Vec<_>>(),
        "overall": overall.iter().map(|(m, c)| JsonRow::new(m, None, None, *c)).collect::<Vec<_>>(),
    });
    serde_json::to_writer_pretty(&mut *sink, &doc)?;
    sink.write_all(b"\n")?;
    sink.flush()
}

/// One CSV line per cell followed by the per-kind and per-model totals,
/// whose missing key columns are `*`.
pub fn write_csv<W: Write>(table: &AccuracyTable, sink: W) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record([
        "model",
        "kind",
        "hops",
        "domain",
        "topic",
        "n",
        "correct",
        "incorrect",
        "unparseable",
        "unassessed",
        "accuracy",
        "accuracy_parsed",
    ])?;
    let mut line = |cols: [&str; 5], c: &Cell| {
        let nums = [
            c.n.to_string(),
            c.correct.to_string(),
            c.incorrect.to_string(),
            c.unparseable.to_string(),
            c.unassessed.to_string(),
            format!("{:.4}", c.accuracy()),
            format!("{:.4}", c.accuracy_parsed()),
        ];
        w.write_record(cols.iter().map(|s| s.to_string()).chain(nums))
    };
    for (k, c) in &table.rows {
        line([&k.model, k.kind.as_str(), &k.hops.to_string(), &k.domain, &k.topic], c)?;
    }
    for ((m, kind), c) in table.by_kind() {
        line([&m, kind.as_str(), "*", "*", "*"], &c)?;
    }
    for (m, c) in table.overall() {
        line([&m, "*", "*", "*", "*"], &c)?;
    }
    w.flush()?;
    Ok(())
}

/// Aligned plain-text table, accuracy in percent.
pub fn render_text(table: &AccuracyTable) -> String {
    let mut lines = vec![[
        "model".to_string(),
        "kind".into(),
        "hops".into(),
        "domain".into(),
        "topic".into(),
        "n".into(),
        "acc%".into(),
        "unparsed".into(),
    ]];
    let mut push = |cols: [String; 5], c: &Cell| {
        let [a, b, d, e, f] = cols;
        lines.push([
            a,
            b,
            d,
            e,
            f,
            c.n.to_string(),
            format!("{:.1}", 100.0 * c.accuracy()),
            c.unparseable.to_string(),
        ]);
    };
    for (k, c) in &table.rows {
        push(
            [k.model.clone(), k.kind.to_string(), k.hops.to_string(), k.domain.clone(), k.topic.clone()],
            c,
        );
    }
    for ((m, kind), c) in table.by_kind() {
        push([m, kind.to_string(), "all".into(), "all".into(), "Ave".into()], &c);
    }
    for (m, c) in table.overall() {
        push([m, "all".into(), "all".into(), "all".into(), "Summary".into()], &c);
    }
    let widths: Vec<usize> = (0..8).map(|i| lines.iter().map(|l| l[i].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for l in &lines {
        let cells: Vec<String> = l
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (s, w))| if i >= 5 { format!("{s:>w$}") } else { format!("{s:<w$}") })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// A wrongly or unreadably answered question with everything needed to
/// judge it again.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub question: Question,
    pub gold: String,
    pub response: String,
    pub verdict: Verdict,
}

/// Writes incorrect and unparseable answers as JSON lines and returns how
/// many were written. Unassessed questions carry no judged answer and are
/// left out.
pub fn export_failures<W: Write>(
    verdicts: &[Verdict],
    bank: &QuestionBank,
    responses: &[LlmResponse],
    sink: &mut W,
) -> Result<usize, ReportError> {
    let index = bank.index();
    let answers: HashMap<&str, &str> = responses
        .iter()
        .map(|r| (r.question_id.as_str(), r.raw_text.as_str()))
        .collect();
    let mut count = 0;
    for v in verdicts {
        if !matches!(v.outcome, Outcome::Incorrect | Outcome::Unparseable) {
            continue;
        }
        let q = index
            .get(v.question_id.as_str())
            .ok_or_else(|| ReportError::UnknownQuestionId(v.question_id.clone()))?;
        let record = FailureRecord {
            question: (*q).clone(),
            gold: q.gold_text(),
            response: answers.get(v.question_id.as_str()).copied().unwrap_or("").to_string(),
            verdict: v.clone(),
        };
        serde_json::to_writer(&mut *sink, &record).map_err(io::Error::from)?;
        sink.write_all(b"\n")?;
        count += 1;
    }
    sink.flush()?;
    Ok(count)
}

pub fn read_failures<R: BufRead>(source: R) -> Result<Vec<FailureRecord>, ReportError> {
    let mut out = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| ReportError::Parse {
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Solved examples to place ahead of a question of the same kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IclPrefix {
    pub kind: QuestionKind,
    pub question_ids: Vec<String>,
    /// `Q: ...\nA: ...` blocks separated by blank lines.
    pub text: String,
}

pub fn render_demonstration(q: &Question) -> String {
    format!("Q: {}\nA: {}", question_block(q), q.gold_short())
}

/// Picks `k` incorrectly answered questions of `kind`, none of them in
/// `exclude`, using `seed`.
pub fn build_icl_prefix(
    failures: &[FailureRecord],
    kind: QuestionKind,
    k: usize,
    seed: u64,
    exclude: &HashSet<String>,
) -> Result<IclPrefix, ReportError> {
    let mut pool: Vec<&FailureRecord> = failures
        .iter()
        .filter(|f| f.verdict.outcome == Outcome::Incorrect && f.question.kind == kind)
        .filter(|f| !exclude.contains(&f.question.id))
        .collect();
    pool.sort_by(|a, b| a.question.id.cmp(&b.question.id));
    pool.dedup_by(|a, b| a.question.id == b.question.id);
    if pool.len() < k {
        return Err(ReportError::InsufficientFailures {
            kind,
            needed: k,
            available: pool.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen: Vec<&FailureRecord> = pool.choose_multiple(&mut rng, k).copied().collect();
    Ok(IclPrefix {
        kind,
        question_ids: chosen.iter().map(|f| f.question.id.clone()).collect(),
        text: chosen
            .iter()
            .map(|f| render_demonstration(&f.question))
            .collect::<Vec<_>>()
            .join("\n\n"),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinetuneRecord {
    pub prompt: String,
    pub completion: String,
}

/// Writes one prompt/completion pair per failure. The completion is the
/// gold answer text, letter and label for multiple choice.
pub fn export_finetune<W: Write>(failures: &[FailureRecord], sink: &mut W) -> Result<usize, ReportError> {
    for f in failures {
        let prompt = build_prompt(&f.question).remove(0).content;
        let record = FinetuneRecord {
            prompt,
            completion: f.question.gold_text(),
        };
        serde_json::to_writer(&mut *sink, &record).map_err(io::Error::from)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok(failures.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assess::Method;
    use crate::kg::Triplet;
    use crate::qgen::Gold;

    fn question(id: &str, kind: QuestionKind, topic: &str) -> Question {
        Question {
            id: id.into(),
            kind,
            hops: 1,
            topic: topic.into(),
            domain: "Place".into(),
            text: format!("Is {id} a question?"),
            options: None,
            gold: Gold::YesNo(true),
            provenance: vec![Triplet::new("a", "r", "b")],
            negative_substitute: None,
            target: None,
            flags: vec![],
        }
    }

    fn verdict(id: &str, outcome: Outcome) -> Verdict {
        Verdict {
            question_id: id.into(),
            outcome,
            method: Method::Exact,
            score: f64::from(u8::from(outcome == Outcome::Correct)),
            threshold_used: 1.0,
            raw_cosine: None,
            note: None,
        }
    }

    fn bank(qs: Vec<Question>) -> QuestionBank {
        QuestionBank { seed: 1, questions: qs }
    }

    #[test]
    fn seven_of_ten() {
        let b = bank((0..10).map(|i| question(&format!("q{i}"), QuestionKind::YesNo, "Country")).collect());
        let verdicts = (0..10)
            .map(|i| verdict(&format!("q{i}"), if i < 7 { Outcome::Correct } else { Outcome::Incorrect }))
            .collect();
        let t = aggregate(&[VerdictSet { model: "m".into(), verdicts }], &b).unwrap();
        assert!((t.overall()["m"].accuracy() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn empty_table() {
        let t = aggregate(&[], &bank(vec![])).unwrap();
        assert!(t.is_empty());
        assert!(t.overall().is_empty());
        assert_eq!(Cell::default().accuracy(), 0.0);
        let mut out = Vec::new();
        write_json(&t, &mut out).unwrap();
        assert!(String::from_utf8(out).unwrap().contains("\"rows\": []"));
    }

    #[test]
    fn marginal_is_n_weighted() {
        // cells: 2/4, 1/1, 3/5 over two topics of one kind -> 6/10
        let mut qs = Vec::new();
        let mut vs = Vec::new();
        for (topic, n, ok) in [("A", 4, 2), ("B", 1, 1), ("C", 5, 3)] {
            for i in 0..n {
                let id = format!("{topic}{i}");
                qs.push(question(&id, QuestionKind::YesNo, topic));
                vs.push(verdict(&id, if i < ok { Outcome::Correct } else { Outcome::Incorrect }));
            }
        }
        let t = aggregate(&[VerdictSet { model: "m".into(), verdicts: vs }], &bank(qs)).unwrap();
        let ave = t.by_kind()[&("m".to_string(), QuestionKind::YesNo)];
        assert_eq!((ave.n, ave.correct), (10, 6));
        let weighted: f64 = t.rows.values().map(|c| c.accuracy() * c.n as f64).sum::<f64>() / 10.0;
        assert!((ave.accuracy() - weighted).abs() < 1e-12);
        assert!((ave.accuracy() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn unknown_id_is_an_error() {
        let err = aggregate(
            &[VerdictSet {
                model: "m".into(),
                verdicts: vec![verdict("nope", Outcome::Correct)],
            }],
            &bank(vec![]),
        )
        .unwrap_err();
        assert!(matches!(err, ReportError::UnknownQuestionId(id) if id == "nope"));
    }

    #[test]
    fn unparseable_and_unassessed_cells() {
        let mut c = Cell::default();
        for o in [Outcome::Correct, Outcome::Incorrect, Outcome::Unparseable, Outcome::Unassessed] {
            c.add(o);
        }
        assert_eq!(c.n, c.correct + c.incorrect + c.unparseable);
        assert!((c.accuracy() - 1.0 / 3.0).abs() < 1e-12);
        assert!((c.accuracy_parsed() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn text_and_csv_render() {
        let b = bank(vec![question("q0", QuestionKind::YesNo, "Country")]);
        let t = aggregate(
            &[VerdictSet {
                model: "m".into(),
                verdicts: vec![verdict("q0", Outcome::Correct)],
            }],
            &b,
        )
        .unwrap();
        let text = render_text(&t);
        assert!(text.contains("Summary") && text.contains("100.0"));
        let mut csv_out = Vec::new();
        write_csv(&t, &mut csv_out).unwrap();
        let csv_text = String::from_utf8(csv_out).unwrap();
        assert_eq!(csv_text.lines().count(), 4);
        assert!(csv_text.lines().nth(1).unwrap().starts_with("m,yes_no,1,Place,Country,1,1,"));
    }

    #[test]
    fn icl_too_few() {
        let f = FailureRecord {
            question: question("q0", QuestionKind::YesNo, "Country"),
            gold: "Yes".into(),
            response: "No".into(),
            verdict: verdict("q0", Outcome::Incorrect),
        };
        let err = build_icl_prefix(&[f.clone(), f], QuestionKind::YesNo, 4, 0, &HashSet::new()).unwrap_err();
        assert!(matches!(err, ReportError::InsufficientFailures { available: 1, .. }));
    }
}
