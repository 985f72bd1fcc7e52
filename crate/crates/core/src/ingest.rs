//! Triplet acquisition: SPARQL retrieval by topic, local triplet files, and
//! the relation lexicon.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::thread::sleep;
use std::time::Duration;

use indexmap::IndexMap;
use log::{debug, warn};
use reqwest::blocking::Client;
use reqwest::header::{ACCEPT, USER_AGENT};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{Entity, EntityClass, Triplet};

pub const SPARQL_RESULTS_JSON: &str = "application/sparql-results+json";
pub const DEFAULT_USER_AGENT: &str = concat!("kgprobe/", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("topic `{0}` has an empty filter")]
    EmptyFilter(String),
    #[error("invalid SPARQL term `{0}`")]
    InvalidTerm(String),
    #[error("page size must be at least 1")]
    ZeroPageSize,
    #[error("request to {endpoint} failed after {attempts} attempt(s): {reason}")]
    Network {
        endpoint: String,
        attempts: u32,
        reason: String,
    },
    #[error("malformed SPARQL response: {0}")]
    MalformedResponse(String),
    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{path}:{line}: duplicate relation label `{label}`")]
    DuplicateLabel {
        path: PathBuf,
        line: usize,
        label: String,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// A user-selected slice of the knowledge base.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicSpec {
    pub name: String,
    #[serde(default)]
    pub domain: String,
    /// `(property, value)` pairs every subject must satisfy, e.g. `("P106", "Q39018")`.
    #[serde(default)]
    pub filter: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation_allowlist: Option<Vec<String>>,
}

impl TopicSpec {
    pub fn new(name: impl Into<String>, domain: impl Into<String>) -> Self {
        TopicSpec {
            name: name.into(),
            domain: domain.into(),
            filter: Vec::new(),
            relation_allowlist: None,
        }
    }

    pub fn with_filter(mut self, property: &str, value: &str) -> Self {
        self.filter.push((property.to_string(), value.to_string()));
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationCategory {
    Noun,
    VerbActive,
    VerbPassive,
}

/// Grammatical description of one relation label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSpec {
    pub label: String,
    pub category: RelationCategory,
    pub aux_present: String,
    pub aux_past: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface_passive: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_class_hint: Option<EntityClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject_class_hint: Option<EntityClass>,
}

impl RelationSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.label.trim().is_empty() {
            return Err("empty label".into());
        }
        if self.aux_present.trim().is_empty() || self.aux_past.trim().is_empty() {
            return Err(format!("`{}`: auxiliary verbs must be non-empty", self.label));
        }
        if self.category == RelationCategory::VerbPassive
            && self.surface_passive.as_deref().is_none_or(|s| s.trim().is_empty())
        {
            return Err(format!("`{}`: passive relation without surface_passive", self.label));
        }
        Ok(())
    }
}

pub type Lexicon = IndexMap<String, RelationSpec>;

/// One fact with both endpoint records, as stored in triplet files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletRecord {
    pub s: Entity,
    pub r: String,
    pub o: Entity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
}

impl TripletRecord {
    pub fn triplet(&self) -> Triplet {
        Triplet::new(&self.s.id, &self.r, &self.o.id)
    }

    pub fn into_parts(self) -> (Triplet, Entity, Entity) {
        let t = self.triplet();
        (t, self.s, self.o)
    }

    fn sort_key(&self) -> (&str, &str, &str) {
        (&self.s.id, &self.r, &self.o.id)
    }
}

fn sparql_term(raw: &str, default_prefix: &str) -> Result<String, IngestError> {
    let raw = raw.trim();
    if raw.starts_with('<') && raw.ends_with('>') && !raw[1..raw.len() - 1].contains(['<', '>', ' ', '"']) {
        return Ok(raw.to_string());
    }
    let ok = !raw.is_empty()
        && raw
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | ':' | '-'));
    if !ok {
        return Err(IngestError::InvalidTerm(raw.to_string()));
    }
    if raw.contains(':') {
        Ok(raw.to_string())
    } else {
        Ok(format!("{default_prefix}:{raw}"))
    }
}

fn sparql_string(s: &str) -> String {
    let mut out = String::from("\"");
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            _ => out.push(c),
        }
    }
    out.push('"');
    out
}

/// SELECT query for one page of facts about the topic's subjects.
///
/// Projects subject/relation/object ids and labels plus the `instance of`
/// classes of both endpoints. Ordering is fixed so pages are disjoint.
pub fn build_sparql(topic: &TopicSpec, page_size: usize, offset: usize) -> Result<String, IngestError> {
    if page_size == 0 {
        return Err(IngestError::ZeroPageSize);
    }
    if topic.filter.is_empty() {
        return Err(IngestError::EmptyFilter(topic.name.clone()));
    }
    let mut q = String::new();
    q.push_str("PREFIX wd: <http://www.wikidata.org/entity/>\n");
    q.push_str("PREFIX wdt: <http://www.wikidata.org/prop/direct/>\n");
    q.push_str("PREFIX wikibase: <http://wikiba.se/ontology#>\n");
    q.push_str("PREFIX rdfs: <http://www.w3.org/2000/01/rdf-schema#>\n");
    q.push_str("PREFIX bd: <http://www.bigdata.com/rdf#>\n");
    q.push_str("SELECT ?s ?sLabel ?p ?pLabel ?o ?oLabel ?sClass ?oClass WHERE {\n");
    for (prop, value) in &topic.filter {
        let _ = writeln!(q, "  ?s {} {} .", sparql_term(prop, "wdt")?, sparql_term(value, "wd")?);
    }
    q.push_str("  ?s ?claim ?o .\n");
    q.push_str("  ?p wikibase:directClaim ?claim .\n");
    q.push_str("  ?p rdfs:label ?pLabel .\n");
    q.push_str("  FILTER(LANG(?pLabel) = \"en\")\n");
    if let Some(allow) = &topic.relation_allowlist {
        if !allow.is_empty() {
            let list: Vec<String> = allow.iter().map(|l| format!("{}@en", sparql_string(l))).collect();
            let _ = writeln!(q, "  FILTER(?pLabel IN ({}))", list.join(", "));
        }
    }
    q.push_str("  OPTIONAL { ?s wdt:P31 ?sClass . }\n");
    q.push_str("  OPTIONAL { ?o wdt:P31 ?oClass . }\n");
    q.push_str("  SERVICE wikibase:label { bd:serviceParam wikibase:language \"en\". }\n");
    q.push_str("}\n");
    q.push_str("ORDER BY ?s ?p ?o ?sClass ?oClass\n");
    let _ = writeln!(q, "LIMIT {page_size} OFFSET {offset}");
    Ok(q)
}

/// Maps `instance of` class ids to [`EntityClass`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassMap(pub BTreeMap<String, EntityClass>);

impl Default for ClassMap {
    fn default() -> Self {
        use EntityClass::*;
        let pairs = [
            ("Q5", Person),
            ("Q6256", Country),
            ("Q3624078", Country),
            ("Q7275", Country),
            ("Q515", City),
            ("Q1549591", City),
            ("Q5119", City),
            ("Q1637706", City),
            ("Q2221906", Place),
            ("Q570116", Place),
            ("Q4989906", Place),
            ("Q41176", Place),
            ("Q43229", Organization),
            ("Q3918", Organization),
            ("Q7278", Organization),
            ("Q4830453", Organization),
            ("Q7725634", CreativeWork),
            ("Q11424", CreativeWork),
            ("Q3305213", CreativeWork),
            ("Q860861", CreativeWork),
            ("Q47461344", CreativeWork),
        ];
        ClassMap(pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
    }
}

impl ClassMap {
    pub fn classify<'a, I: IntoIterator<Item = &'a str>>(&self, class_ids: I) -> EntityClass {
        class_ids
            .into_iter()
            .find_map(|id| self.0.get(id).copied())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone)]
pub struct FetchLimits {
    pub max_triplets: usize,
    pub page_size: usize,
    pub timeout: Duration,
    pub max_retries: u32,
    pub backoff_base: Duration,
    pub user_agent: String,
}

impl Default for FetchLimits {
    fn default() -> Self {
        FetchLimits {
            max_triplets: 10_000,
            page_size: 500,
            timeout: Duration::from_secs(60),
            max_retries: 3,
            backoff_base: Duration::from_secs(1),
            user_agent: DEFAULT_USER_AGENT.to_string(),
        }
    }
}

#[derive(Deserialize)]
struct SparqlResults {
    results: SparqlBindings,
}

#[derive(Deserialize)]
struct SparqlBindings {
    bindings: Vec<HashMap<String, SparqlTerm>>,
}

#[derive(Deserialize)]
struct SparqlTerm {
    #[serde(rename = "type")]
    kind: String,
    value: String,
    #[serde(default)]
    datatype: Option<String>,
}

fn local_id(uri: &str) -> &str {
    if uri.starts_with("http://www.wikidata.org/") || uri.starts_with("https://www.wikidata.org/") {
        uri.rsplit('/').next().unwrap_or(uri)
    } else {
        uri
    }
}

struct Row {
    subject: Entity,
    relation: String,
    object: Entity,
    subject_class: Option<String>,
    object_class: Option<String>,
}

fn parse_row(b: &HashMap<String, SparqlTerm>) -> Result<Row, IngestError> {
    let get = |k: &str| {
        b.get(k)
            .ok_or_else(|| IngestError::MalformedResponse(format!("binding without `{k}`")))
    };
    let s = get("s")?;
    let o = get("o")?;
    let relation = match b.get("pLabel") {
        Some(l) => l.value.clone(),
        None => local_id(&get("p")?.value).to_string(),
    };
    let sid = local_id(&s.value).to_string();
    let slabel = b.get("sLabel").map_or_else(|| sid.clone(), |l| l.value.clone());
    let subject = Entity::new(sid, slabel, EntityClass::Other);
    let object = if o.kind == "literal" || o.kind == "typed-literal" {
        let dt = o.datatype.as_deref().unwrap_or("");
        let (class, label) = if dt.ends_with("#dateTime") || dt.ends_with("#date") {
            (EntityClass::Date, o.value.split('T').next().unwrap_or(&o.value).trim_start_matches('+').to_string())
        } else if dt.ends_with("#decimal") || dt.ends_with("#integer") || dt.ends_with("#double") {
            (EntityClass::Quantity, o.value.trim_start_matches('+').to_string())
        } else {
            (EntityClass::Other, o.value.clone())
        };
        Entity::new(format!("lit:{label}"), label, class)
    } else {
        let oid = local_id(&o.value).to_string();
        let olabel = b.get("oLabel").map_or_else(|| oid.clone(), |l| l.value.clone());
        Entity::new(oid, olabel, EntityClass::Other)
    };
    Ok(Row {
        subject,
        relation,
        object,
        subject_class: b.get("sClass").map(|t| local_id(&t.value).to_string()),
        object_class: b.get("oClass").map(|t| local_id(&t.value).to_string()),
    })
}

/// Blocking SPARQL-over-HTTP client with bounded exponential backoff.
pub struct SparqlClient {
    endpoint: String,
    http: Client,
    limits: FetchLimits,
}

impl SparqlClient {
    pub fn new(endpoint: impl Into<String>, limits: FetchLimits) -> Result<Self, IngestError> {
        let endpoint = endpoint.into();
        let http = Client::builder()
            .timeout(limits.timeout)
            .user_agent(limits.user_agent.clone())
            .build()
            .map_err(|e| IngestError::Network {
                endpoint: endpoint.clone(),
                attempts: 0,
                reason: e.to_string(),
            })?;
        Ok(SparqlClient { endpoint, http, limits })
    }

    /// Runs one query and returns its raw result bindings.
    fn select(&self, query: &str) -> Result<Vec<HashMap<String, SparqlTerm>>, IngestError> {
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            let res = self
                .http
                .get(&self.endpoint)
                .query(&[("query", query)])
                .header(ACCEPT, SPARQL_RESULTS_JSON)
                .header(USER_AGENT, &self.limits.user_agent)
                .send();
            let reason = match res {
                Ok(resp) if resp.status().is_success() => {
                    let body = resp.text().map_err(|e| IngestError::MalformedResponse(e.to_string()))?;
                    let parsed: SparqlResults = serde_json::from_str(&body)
                        .map_err(|e| IngestError::MalformedResponse(e.to_string()))?;
                    return Ok(parsed.results.bindings);
                }
                Ok(resp) if resp.status().is_client_error() && resp.status().as_u16() != 429 => {
                    return Err(IngestError::Network {
                        endpoint: self.endpoint.clone(),
                        attempts: attempt,
                        reason: format!("HTTP {}", resp.status()),
                    });
                }
                Ok(resp) => format!("HTTP {}", resp.status()),
                Err(e) => e.to_string(),
            };
            if attempt > self.limits.max_retries {
                return Err(IngestError::Network {
                    endpoint: self.endpoint.clone(),
                    attempts: attempt,
                    reason,
                });
            }
            let delay = self.limits.backoff_base * 2u32.saturating_pow(attempt - 1);
            warn!("SPARQL attempt {attempt} failed ({reason}); retrying in {delay:?}");
            sleep(delay);
        }
    }

    /// Pages through the topic until `max_triplets` distinct facts are
    /// collected or the endpoint runs dry. Output is sorted by
    /// `(subject, relation, object)`.
    pub fn fetch_triplets(
        &self,
        topic: &TopicSpec,
        classes: &ClassMap,
    ) -> Result<Vec<TripletRecord>, IngestError> {
        let page = self.limits.page_size;
        let mut facts: IndexMap<(String, String, String), TripletRecord> = IndexMap::new();
        let mut instance_of: HashMap<String, Vec<String>> = HashMap::new();
        let mut offset = 0;
        // Rows repeat per class combination, so the row limit is a loose
        // upper bound; stop once enough distinct facts are known and a page
        // boundary is reached.
        loop {
            let query = build_sparql(topic, page, offset)?;
            let rows = self.select(&query)?;
            debug!("offset {offset}: {} rows", rows.len());
            let n = rows.len();
            for b in &rows {
                let row = parse_row(b)?;
                if row.subject.id == row.object.id {
                    continue;
                }
                if let Some(c) = row.subject_class {
                    instance_of.entry(row.subject.id.clone()).or_default().push(c.clone());
                }
                if let Some(c) = row.object_class {
                    instance_of.entry(row.object.id.clone()).or_default().push(c);
                }
                let key = (row.subject.id.clone(), row.relation.clone(), row.object.id.clone());
                facts.entry(key).or_insert_with(|| TripletRecord {
                    s: row.subject,
                    r: row.relation,
                    o: row.object,
                    topic: Some(topic.name.clone()),
                });
            }
            if n < page || facts.len() >= self.limits.max_triplets {
                break;
            }
            offset += page;
        }
        let mut out: Vec<TripletRecord> = facts.into_values().collect();
        out.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        out.truncate(self.limits.max_triplets);
        for rec in &mut out {
            for e in [&mut rec.s, &mut rec.o] {
                if e.class == EntityClass::Other {
                    if let Some(ids) = instance_of.get(&e.id) {
                        e.class = classes.classify(ids.iter().map(String::as_str));
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Convenience wrapper around [`SparqlClient::fetch_triplets`].
pub fn fetch_triplets(
    endpoint: &str,
    topic: &TopicSpec,
    limits: FetchLimits,
    classes: &ClassMap,
) -> Result<Vec<TripletRecord>, IngestError> {
    SparqlClient::new(endpoint, limits)?.fetch_triplets(topic, classes)
}

fn read(path: &Path) -> Result<String, IngestError> {
    fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses a line-delimited triplet file. Blank lines are skipped.
pub fn load_triplets_file(path: &Path) -> Result<Vec<TripletRecord>, IngestError> {
    parse_triplets(&read(path)?, path)
}

pub fn parse_triplets(text: &str, path: &Path) -> Result<Vec<TripletRecord>, IngestError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |reason: String| IngestError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        let rec: TripletRecord = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        if rec.r.trim().is_empty() {
            return Err(err("empty relation".into()));
        }
        for e in [&rec.s, &rec.o] {
            if e.id.is_empty() || e.label.trim().is_empty() {
                return Err(err("entity with empty id or label".into()));
            }
        }
        if rec.s.id == rec.o.id {
            return Err(err(format!("self-loop on `{}`", rec.s.id)));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_triplets<W: Write>(records: &[TripletRecord], sink: &mut W) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut *sink, r)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()
}

pub fn load_relation_lexicon(path: &Path) -> Result<Lexicon, IngestError> {
    parse_lexicon(&read(path)?, path)
}

pub fn parse_lexicon(text: &str, path: &Path) -> Result<Lexicon, IngestError> {
    let mut lex = Lexicon::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |reason: String| IngestError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        let spec: RelationSpec = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        spec.validate().map_err(parse_err)?;
        if !seen.insert(spec.label.clone()) {
            return Err(IngestError::DuplicateLabel {
                path: path.to_path_buf(),
                line: i + 1,
                label: spec.label,
            });
        }
        lex.insert(spec.label.clone(), spec);
    }
    Ok(lex)
}

/// The lexicon bundled with the crate.
pub fn default_lexicon() -> Lexicon {
    parse_lexicon(include_str!("../data/lexicon.jsonl"), Path::new("data/lexicon.jsonl"))
        .expect("bundled lexicon is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emperors() -> TopicSpec {
        TopicSpec::new("Emperor", "People").with_filter("P106", "Q39018")
    }

    #[test]
    fn query_shape() {
        let q = build_sparql(&emperors(), 500, 1000).unwrap();
        assert!(q.contains("SELECT ?s ?sLabel ?p ?pLabel ?o ?oLabel"));
        assert!(q.contains("?s wdt:P106 wd:Q39018 ."));
        assert!(q.contains("ORDER BY"));
        assert!(q.trim_end().ends_with("LIMIT 500 OFFSET 1000"));
        // braces balance
        assert_eq!(q.matches('{').count(), q.matches('}').count());
    }

    #[test]
    fn allowlist_is_quoted() {
        let mut t = emperors();
        t.relation_allowlist = Some(vec!["place of birth".into(), "say \"hi\"".into()]);
        let q = build_sparql(&t, 10, 0).unwrap();
        assert!(q.contains(r#"FILTER(?pLabel IN ("place of birth"@en, "say \"hi\""@en))"#));
    }

    #[test]
    fn empty_filter_rejected() {
        let t = TopicSpec::new("Anything", "People");
        assert!(matches!(build_sparql(&t, 10, 0), Err(IngestError::EmptyFilter(_))));
        assert!(matches!(build_sparql(&emperors(), 0, 0), Err(IngestError::ZeroPageSize)));
    }

    #[test]
    fn injection_in_filter_rejected() {
        let t = TopicSpec::new("x", "y").with_filter("P106", "Q1 . ?s ?p ?o");
        assert!(matches!(build_sparql(&t, 10, 0), Err(IngestError::InvalidTerm(_))));
    }

    #[test]
    fn lexicon_entries() {
        let lex = default_lexicon();
        let capital = &lex["capital"];
        assert_eq!(capital.category, RelationCategory::Noun);
        assert_eq!(capital.aux_present, "is");
        let edu = &lex["educated at"];
        assert_eq!(edu.category, RelationCategory::VerbPassive);
        assert_eq!(edu.aux_past, "was");
    }

    #[test]
    fn duplicate_lexicon_label() {
        let line = r#"{"label":"capital","category":"noun","aux_present":"is","aux_past":"was"}"#;
        let text = format!("{line}\n{line}\n");
        let err = parse_lexicon(&text, Path::new("lex.jsonl")).unwrap_err();
        assert!(matches!(err, IngestError::DuplicateLabel { line: 2, .. }));
    }

    #[test]
    fn passive_without_surface_rejected() {
        let text = r#"{"label":"educated at","category":"verb_passive","aux_present":"is","aux_past":"was"}"#;
        assert!(matches!(
            parse_lexicon(text, Path::new("l")),
            Err(IngestError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn triplet_line_without_object() {
        let text = concat!(
            r#"{"s":{"id":"Q30","label":"USA","class":"country"},"r":"capital","o":{"id":"Q61","label":"Washington D.C.","class":"city"}}"#,
            "\n",
            r#"{"s":{"id":"Q30","label":"USA","class":"country"},"r":"capital"}"#,
            "\n"
        );
        match parse_triplets(text, Path::new("t.jsonl")) {
            Err(IngestError::Parse { line, reason, .. }) => {
                assert_eq!(line, 2);
                assert!(reason.contains("`o`"), "{reason}");
            }
            other => panic!("{other:?}"),
        }
        assert!(parse_triplets("", Path::new("t")).unwrap().is_empty());
    }

    #[test]
    fn classify_by_instance_of() {
        let m = ClassMap::default();
        assert_eq!(m.classify(["Q5"]), EntityClass::Person);
        assert_eq!(m.classify(["Q999999", "Q6256"]), EntityClass::Country);
        assert_eq!(m.classify(std::iter::empty()), EntityClass::Other);
    }

    #[test]
    fn literal_rows_become_dated_entities() {
        let json = r#"{"s":{"type":"uri","value":"http://www.wikidata.org/entity/Q517"},
            "sLabel":{"type":"literal","value":"Napoleon"},
            "pLabel":{"type":"literal","value":"date of birth"},
            "o":{"type":"literal","value":"1769-08-15T00:00:00Z","datatype":"http://www.w3.org/2001/XMLSchema#dateTime"}}"#;
        let b: HashMap<String, SparqlTerm> = serde_json::from_str(json).unwrap();
        let row = parse_row(&b).unwrap();
        assert_eq!(row.subject.id, "Q517");
        assert_eq!(row.object.label, "1769-08-15");
        assert_eq!(row.object.class, EntityClass::Date);
    }
}
