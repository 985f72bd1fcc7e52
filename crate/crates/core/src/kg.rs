//! Directed multigraph of fact triplets.
//!
//! A [`GraphBuilder`] accepts triplets one at a time and is sealed into an
//! immutable [`KnowledgeGraph`] that carries three indices: out-edges keyed by
//! `(subject, relation)`, in-edges keyed by `(object, relation)`, and the edge
//! list per relation label. Every index preserves insertion order so that
//! anything derived from the graph is reproducible.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::io::{self, Write};

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Coarse semantic class of an entity, used to pick interrogative pronouns.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum EntityClass {
    Person,
    Country,
    City,
    Place,
    Organization,
    Date,
    Quantity,
    CreativeWork,
    #[default]
    Other,
}

impl EntityClass {
    pub const ALL: [EntityClass; 9] = [
        EntityClass::Person,
        EntityClass::Country,
        EntityClass::City,
        EntityClass::Place,
        EntityClass::Organization,
        EntityClass::Date,
        EntityClass::Quantity,
        EntityClass::CreativeWork,
        EntityClass::Other,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<String>,
    #[serde(default, rename = "class")]
    pub class: EntityClass,
    /// Render with a leading "the" ("the USA").
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub article: bool,
}

impl Entity {
    pub fn new(id: impl Into<String>, label: impl Into<String>, class: EntityClass) -> Self {
        Entity {
            id: id.into(),
            label: label.into(),
            aliases: Vec::new(),
            class,
            article: false,
        }
    }

    pub fn with_aliases<I, S>(mut self, aliases: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.aliases = aliases.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_article(mut self) -> Self {
        self.article = true;
        self
    }

    /// Label as it appears inside a sentence, with the article if flagged.
    pub fn surface(&self) -> String {
        if self.article {
            format!("the {}", self.label)
        } else {
            self.label.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triplet {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

impl Triplet {
    pub fn new(
        subject: impl Into<String>,
        relation: impl Into<String>,
        object: impl Into<String>,
    ) -> Self {
        Triplet {
            subject: subject.into(),
            relation: relation.into(),
            object: object.into(),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KgError {
    #[error("self-loop on `{id}` via relation `{relation}`")]
    SelfLoop { id: String, relation: String },
    #[error("entity `{id}` already labeled `{existing}`, got `{conflicting}`")]
    ConflictingEntityLabel {
        id: String,
        existing: String,
        conflicting: String,
    },
    #[error("empty relation label")]
    EmptyRelation,
    #[error("entity with empty id or label")]
    InvalidEntity,
    #[error("triplet endpoint `{0}` does not match the supplied entity record")]
    EndpointMismatch(String),
}

/// Mutable build phase. Seal with [`GraphBuilder::seal`].
#[derive(Debug, Default)]
pub struct GraphBuilder {
    entities: IndexMap<String, Entity>,
    edges: Vec<Triplet>,
    seen: HashSet<Triplet>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts one fact. Returns `false` when the triplet was already stored.
    pub fn add_triplet(&mut self, t: Triplet, subj: Entity, obj: Entity) -> Result<bool, KgError> {
        if t.relation.trim().is_empty() {
            return Err(KgError::EmptyRelation);
        }
        if t.subject != subj.id {
            return Err(KgError::EndpointMismatch(t.subject));
        }
        if t.object != obj.id {
            return Err(KgError::EndpointMismatch(t.object));
        }
        if t.subject == t.object {
            return Err(KgError::SelfLoop {
                id: t.subject,
                relation: t.relation,
            });
        }
        // Check both before mutating so a failed insert leaves no trace.
        self.check_entity(&subj)?;
        self.check_entity(&obj)?;
        self.upsert(subj);
        self.upsert(obj);
        if self.seen.contains(&t) {
            return Ok(false);
        }
        self.seen.insert(t.clone());
        self.edges.push(t);
        Ok(true)
    }

    fn check_entity(&self, e: &Entity) -> Result<(), KgError> {
        if e.id.is_empty() || e.label.trim().is_empty() {
            return Err(KgError::InvalidEntity);
        }
        match self.entities.get(&e.id) {
            Some(existing) if existing.label != e.label => Err(KgError::ConflictingEntityLabel {
                id: e.id.clone(),
                existing: existing.label.clone(),
                conflicting: e.label.clone(),
            }),
            _ => Ok(()),
        }
    }

    fn upsert(&mut self, e: Entity) {
        match self.entities.get_mut(&e.id) {
            Some(existing) => {
                for alias in e.aliases {
                    if !existing.aliases.contains(&alias) {
                        existing.aliases.push(alias);
                    }
                }
                if existing.class == EntityClass::Other {
                    existing.class = e.class;
                }
                existing.article |= e.article;
            }
            None => {
                self.entities.insert(e.id.clone(), e);
            }
        }
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn seal(self) -> KnowledgeGraph {
        KnowledgeGraph::from_parts(self.entities, self.edges)
    }
}

type Adjacency = HashMap<String, IndexMap<String, Vec<String>>>;

/// Sealed, read-only graph. `Send + Sync`; all queries are `&self`.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    entities: IndexMap<String, Entity>,
    edges: Vec<Triplet>,
    edge_set: HashSet<Triplet>,
    // subject -> relation -> objects
    index_out: Adjacency,
    // object -> relation -> subjects
    index_in: Adjacency,
    // relation -> edge positions
    index_rel: IndexMap<String, Vec<usize>>,
}

impl KnowledgeGraph {
    fn from_parts(entities: IndexMap<String, Entity>, edges: Vec<Triplet>) -> Self {
        let mut index_out: Adjacency = HashMap::new();
        let mut index_in: Adjacency = HashMap::new();
        let mut index_rel: IndexMap<String, Vec<usize>> = IndexMap::new();
        for (pos, t) in edges.iter().enumerate() {
            index_out
                .entry(t.subject.clone())
                .or_default()
                .entry(t.relation.clone())
                .or_default()
                .push(t.object.clone());
            index_in
                .entry(t.object.clone())
                .or_default()
                .entry(t.relation.clone())
                .or_default()
                .push(t.subject.clone());
            index_rel.entry(t.relation.clone()).or_default().push(pos);
        }
        let edge_set = edges.iter().cloned().collect();
        KnowledgeGraph {
            entities,
            edges,
            edge_set,
            index_out,
            index_in,
            index_rel,
        }
    }

    /// Builds a graph in one go; duplicate triplets are dropped.
    pub fn from_records<I>(records: I) -> Result<Self, KgError>
    where
        I: IntoIterator<Item = (Triplet, Entity, Entity)>,
    {
        let mut b = GraphBuilder::new();
        for (t, s, o) in records {
            b.add_triplet(t, s, o)?;
        }
        Ok(b.seal())
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.entities.get(id)
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values()
    }

    pub fn edges(&self) -> &[Triplet] {
        &self.edges
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn relations(&self) -> impl Iterator<Item = &str> {
        self.index_rel.keys().map(String::as_str)
    }

    /// Edges carrying `relation`, in insertion order.
    pub fn edges_with_relation(&self, relation: &str) -> impl Iterator<Item = &Triplet> {
        self.index_rel
            .get(relation)
            .into_iter()
            .flatten()
            .map(|&pos| &self.edges[pos])
    }

    pub fn objects_of(&self, subject: &str, relation: &str) -> &[String] {
        self.index_out
            .get(subject)
            .and_then(|m| m.get(relation))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn subjects_of(&self, object: &str, relation: &str) -> &[String] {
        self.index_in
            .get(object)
            .and_then(|m| m.get(relation))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Relation labels leaving `subject`, in first-seen order.
    pub fn out_relations(&self, subject: &str) -> impl Iterator<Item = &str> {
        self.index_out
            .get(subject)
            .into_iter()
            .flat_map(|m| m.keys().map(String::as_str))
    }

    /// The single object of `(subject, relation)`, or `None` when there are
    /// zero or several.
    pub fn unique_object(&self, subject: &str, relation: &str) -> Option<&str> {
        match self.objects_of(subject, relation) {
            [only] => Some(only.as_str()),
            _ => None,
        }
    }

    pub fn has_edge(&self, subject: &str, relation: &str, object: &str) -> bool {
        // Avoid allocating a Triplet for the common miss.
        self.objects_of(subject, relation).iter().any(|o| o == object)
    }

    pub fn contains(&self, t: &Triplet) -> bool {
        self.edge_set.contains(t)
    }

    /// Up to `k` distinct objects of other `relation` edges that are not
    /// connected to `subject` through `relation`.
    pub fn sample_unrelated_objects<R: Rng + ?Sized>(
        &self,
        subject: &str,
        relation: &str,
        k: usize,
        rng: &mut R,
    ) -> Vec<String> {
        self.sample_unrelated_objects_where(subject, relation, k, rng, |_| true)
    }

    /// Like [`sample_unrelated_objects`](Self::sample_unrelated_objects) with
    /// an extra admission predicate on each candidate.
    pub fn sample_unrelated_objects_where<R, F>(
        &self,
        subject: &str,
        relation: &str,
        k: usize,
        rng: &mut R,
        admit: F,
    ) -> Vec<String>
    where
        R: Rng + ?Sized,
        F: Fn(&Entity) -> bool,
    {
        let pool = self.distinct_endpoints(relation, |t| &t.object, |x| {
            !self.has_edge(subject, relation, x) && self.entity(x).is_some_and(&admit)
        });
        pick(pool, k, rng)
    }

    /// Up to `k` distinct subjects of other `relation` edges that do not
    /// point at `object` through `relation`.
    pub fn sample_unrelated_subjects_where<R, F>(
        &self,
        object: &str,
        relation: &str,
        k: usize,
        rng: &mut R,
        admit: F,
    ) -> Vec<String>
    where
        R: Rng + ?Sized,
        F: Fn(&Entity) -> bool,
    {
        let pool = self.distinct_endpoints(relation, |t| &t.subject, |x| {
            !self.has_edge(x, relation, object) && self.entity(x).is_some_and(&admit)
        });
        pick(pool, k, rng)
    }

    fn distinct_endpoints<'a, P, F>(&'a self, relation: &str, project: P, keep: F) -> Vec<&'a str>
    where
        P: Fn(&'a Triplet) -> &'a String,
        F: Fn(&str) -> bool,
    {
        let mut seen = HashSet::new();
        self.edges_with_relation(relation)
            .map(project)
            .filter(|x| seen.insert(x.as_str()))
            .map(String::as_str)
            .filter(|x| keep(x))
            .collect()
    }

    /// Entities reachable from `subject` by following `first` then `second`.
    pub fn two_hop_objects(&self, subject: &str, first: &str, second: &str) -> Vec<String> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for mid in self.objects_of(subject, first) {
            for z in self.objects_of(mid, second) {
                if seen.insert(z.as_str()) {
                    out.push(z.clone());
                }
            }
        }
        out
    }

    /// Intermediate entities `y` with `(subject, first, y)` and `(y, second, object)`.
    pub fn two_hop_bridges(
        &self,
        subject: &str,
        first: &str,
        second: &str,
        object: &str,
    ) -> Vec<String> {
        self.objects_of(subject, first)
            .iter()
            .filter(|mid| self.has_edge(mid, second, object))
            .cloned()
            .collect()
    }

    /// Number of weakly connected components over entities that touch an edge.
    pub fn component_count(&self) -> usize {
        let ids: HashMap<&str, usize> = self
            .entities
            .keys()
            .enumerate()
            .map(|(i, k)| (k.as_str(), i))
            .collect();
        let mut parent: Vec<usize> = (0..ids.len()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for t in &self.edges {
            let a = find(&mut parent, ids[t.subject.as_str()]);
            let b = find(&mut parent, ids[t.object.as_str()]);
            if a != b {
                parent[a] = b;
            }
        }
        (0..parent.len())
            .filter(|&i| find(&mut parent, i) == i)
            .count()
    }

    /// Rebuilds every index from the edge list and compares it with the
    /// stored one.
    pub fn indices_consistent(&self) -> bool {
        let rebuilt = KnowledgeGraph::from_parts(self.entities.clone(), self.edges.clone());
        rebuilt.index_out == self.index_out
            && rebuilt.index_in == self.index_in
            && rebuilt.index_rel == self.index_rel
            && self
                .edges
                .iter()
                .all(|t| self.entities.contains_key(&t.subject) && self.entities.contains_key(&t.object))
    }

    pub fn export<W: Write>(&self, format: ExportFormat, sink: &mut W) -> io::Result<()> {
        let doc = match format {
            ExportFormat::Dot => self.to_dot(),
            ExportFormat::Graphml => self.to_graphml(),
        };
        sink.write_all(doc.as_bytes())?;
        sink.flush()
    }

    fn to_dot(&self) -> String {
        let mut s = String::from("digraph kg {\n");
        for e in self.entities.values() {
            let _ = writeln!(s, "  \"{}\" [label=\"{}\"];", dot_escape(&e.id), dot_escape(&e.label));
        }
        for t in &self.edges {
            let _ = writeln!(
                s,
                "  \"{}\" -> \"{}\" [label=\"{}\"];",
                dot_escape(&t.subject),
                dot_escape(&t.object),
                dot_escape(&t.relation)
            );
        }
        s.push_str("}\n");
        s
    }

    fn to_graphml(&self) -> String {
        let mut s = String::from(concat!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n",
            "<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n",
            "  <key id=\"label\" for=\"node\" attr.name=\"label\" attr.type=\"string\"/>\n",
            "  <key id=\"class\" for=\"node\" attr.name=\"class\" attr.type=\"string\"/>\n",
            "  <key id=\"relation\" for=\"edge\" attr.name=\"relation\" attr.type=\"string\"/>\n",
            "  <graph id=\"kg\" edgedefault=\"directed\">\n",
        ));
        for e in self.entities.values() {
            let class = serde_json::to_value(e.class)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default();
            let _ = writeln!(
                s,
                "    <node id=\"{}\"><data key=\"label\">{}</data><data key=\"class\">{}</data></node>",
                xml_escape(&e.id),
                xml_escape(&e.label),
                class
            );
        }
        for (i, t) in self.edges.iter().enumerate() {
            let _ = writeln!(
                s,
                "    <edge id=\"e{}\" source=\"{}\" target=\"{}\"><data key=\"relation\">{}</data></edge>",
                i,
                xml_escape(&t.subject),
                xml_escape(&t.object),
                xml_escape(&t.relation)
            );
        }
        s.push_str("  </graph>\n</graphml>\n");
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Dot,
    Graphml,
}

fn pick<R: Rng + ?Sized>(pool: Vec<&str>, k: usize, rng: &mut R) -> Vec<String> {
    pool.choose_multiple(rng, k).map(|s| s.to_string()).collect()
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}
