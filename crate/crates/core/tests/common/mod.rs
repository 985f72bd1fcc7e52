#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use kgprobe::ingest::{self, TopicSpec, TripletRecord};
use kgprobe::kg::{Entity, EntityClass, KnowledgeGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct Request {
    pub method: String,
    pub target: String,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl Request {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    /// Decoded query parameter.
    pub fn query(&self, key: &str) -> Option<String> {
        let url = reqwest::Url::parse(&format!("http://localhost{}", self.target)).ok()?;
        url.query_pairs().find(|(k, _)| k == key).map(|(_, v)| v.into_owned())
    }
}

pub struct Reply {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl Reply {
    pub fn json(status: u16, body: impl Into<String>) -> Self {
        Reply {
            status,
            headers: vec![("Content-Type".into(), "application/json".into())],
            body: body.into(),
        }
    }

    pub fn with_header(mut self, k: &str, v: &str) -> Self {
        self.headers.push((k.into(), v.into()));
        self
    }
}

type Handler = dyn Fn(&Request, usize) -> Reply + Send + Sync;

/// One-shot-per-connection HTTP/1.1 server on an ephemeral port. The
/// handler sees each request with its zero-based arrival index.
pub struct MockServer {
    pub url: String,
    hits: Arc<AtomicUsize>,
    log: Arc<Mutex<Vec<Request>>>,
}

impl MockServer {
    pub fn start<F>(handler: F) -> Self
    where
        F: Fn(&Request, usize) -> Reply + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let log = Arc::new(Mutex::new(Vec::new()));
        let handler: Arc<Handler> = Arc::new(handler);
        {
            let hits = hits.clone();
            let log = log.clone();
            thread::spawn(move || {
                for stream in listener.incoming() {
                    let Ok(stream) = stream else { continue };
                    let (hits, log, handler) = (hits.clone(), log.clone(), handler.clone());
                    thread::spawn(move || serve(stream, &hits, &log, handler.as_ref()));
                }
            });
        }
        MockServer { url, hits, log }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<Request> {
        self.log.lock().unwrap().clone()
    }
}

fn serve(stream: TcpStream, hits: &AtomicUsize, log: &Mutex<Vec<Request>>, handler: &Handler) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut line = String::new();
    if reader.read_line(&mut line).unwrap_or(0) == 0 {
        return;
    }
    let mut parts = line.split_whitespace();
    let method = parts.next().unwrap_or("").to_string();
    let target = parts.next().unwrap_or("").to_string();
    let mut headers = Vec::new();
    loop {
        let mut h = String::new();
        if reader.read_line(&mut h).unwrap_or(0) == 0 || h == "\r\n" {
            break;
        }
        if let Some((k, v)) = h.trim_end().split_once(':') {
            headers.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    let len = headers
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
        .and_then(|(_, v)| v.parse::<usize>().ok())
        .unwrap_or(0);
    let mut body = vec![0; len];
    reader.read_exact(&mut body).ok();
    let req = Request {
        method,
        target,
        headers,
        body: String::from_utf8_lossy(&body).into_owned(),
    };
    let index = hits.fetch_add(1, Ordering::SeqCst);
    log.lock().unwrap().push(req.clone());
    let reply = handler(&req, index);
    let mut out = format!("HTTP/1.1 {} Mock\r\nContent-Length: {}\r\nConnection: close\r\n", reply.status, reply.body.len());
    for (k, v) in &reply.headers {
        out.push_str(&format!("{k}: {v}\r\n"));
    }
    out.push_str("\r\n");
    out.push_str(&reply.body);
    let mut stream = stream;
    stream.write_all(out.as_bytes()).ok();
    stream.flush().ok();
}

/// `{"choices":[{"message":{"content": text}}]}`
pub fn chat_body(text: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

pub fn fixture_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/fixture_triplets.jsonl")
}

pub fn fixture_records() -> Vec<TripletRecord> {
    ingest::load_triplets_file(&fixture_path()).unwrap()
}

pub fn fixture_topics() -> Vec<TopicSpec> {
    vec![TopicSpec::new("Country", "Place"), TopicSpec::new("Politician", "People")]
}

pub fn graph_of(records: &[TripletRecord]) -> KnowledgeGraph {
    KnowledgeGraph::from_records(records.iter().cloned().map(TripletRecord::into_parts)).unwrap()
}

/// Seed used by the bundled example config.
pub const FIXTURE_SEED: u64 = 20240101;

/// Random typed graph over lexicon relations. Entity ids encode the class so
/// a given id always carries the same class and label.
pub fn random_records(seed: u64, n: usize) -> Vec<TripletRecord> {
    use EntityClass::*;
    // (relation, subject class, object class)
    const SCHEMA: &[(&str, EntityClass, EntityClass)] = &[
        ("capital", Country, City),
        ("official language", Country, Other),
        ("currency", Country, Other),
        ("continent", Country, Place),
        ("child", Person, Person),
        ("spouse", Person, Person),
        ("country of citizenship", Person, Country),
        ("place of birth", Person, City),
        ("native language", Person, Other),
        ("educated at", Person, Organization),
        ("located in", City, Country),
        ("follows", CreativeWork, CreativeWork),
        ("date of birth", Person, Date),
    ];
    let pool = |c: EntityClass| match c {
        Country => 25,
        City => 40,
        Person => 60,
        Place => 6,
        Organization => 15,
        Date => 30,
        CreativeWork => 20,
        _ => 20,
    };
    let entity = |c: EntityClass, i: usize| {
        let name = format!("{c:?}").to_lowercase();
        Entity::new(format!("{name}_{i}"), format!("{name} {i}"), c)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut guard = 0;
    while out.len() < n && guard < n * 50 {
        guard += 1;
        let (r, sc, oc) = SCHEMA[rng.gen_range(0..SCHEMA.len())];
        let s = entity(sc, rng.gen_range(0..pool(sc)));
        let o = entity(oc, rng.gen_range(0..pool(oc)));
        if s.id == o.id || !seen.insert((s.id.clone(), r, o.id.clone())) {
            continue;
        }
        let topic = if matches!(sc, Person) { "People" } else { "Places" };
        out.push(TripletRecord {
            s,
            r: r.to_string(),
            o,
            topic: Some(topic.to_string()),
        });
    }
    out
}

pub fn random_topics() -> Vec<TopicSpec> {
    vec![TopicSpec::new("People", "People"), TopicSpec::new("Places", "Place")]
}

use kgprobe::qgen::{Gold, Question, QuestionKind, Target};

/// Checks a question against the graph it came from. Returns the first
/// violated property.
pub fn verify_question(g: &KnowledgeGraph, q: &Question) -> Result<(), String> {
    let fail = |msg: &str| Err(format!("{}: {msg} ({})", q.id, q.text));
    for t in &q.provenance {
        if !g.contains(t) {
            return fail(&format!("provenance {t:?} not in graph"));
        }
    }
    let (s, rel, o, reach): (&str, Vec<&str>, &str, Vec<String>) = match (q.hops, q.provenance.as_slice()) {
        (1, [t]) => (&t.subject, vec![&t.relation], &t.object, g.objects_of(&t.subject, &t.relation).to_vec()),
        (2, [a, b]) => {
            if a.object != b.subject {
                return fail("provenance does not chain");
            }
            (&a.subject, vec![&a.relation, &b.relation], &b.object, g.two_hop_objects(&a.subject, &a.relation, &b.relation))
        }
        _ => return fail("bad provenance shape"),
    };
    if !reach.iter().any(|z| z == o) {
        return fail("gold object not reachable");
    }
    let label = |id: &str| g.entity(id).map(|e| e.label.clone()).unwrap_or_default();
    match (&q.kind, &q.gold) {
        (QuestionKind::YesNo, Gold::YesNo(true)) => {
            if q.negative_substitute.is_some() {
                return fail("positive question with a substitute");
            }
        }
        (QuestionKind::YesNo, Gold::YesNo(false)) => {
            let Some(sub) = &q.negative_substitute else {
                return fail("negative question without substitute");
            };
            if reach.iter().any(|z| z == sub) || sub == o {
                return fail("negative substitute is reachable");
            }
            if !q.text.contains(&label(sub)) {
                return fail("substitute label missing from text");
            }
        }
        (QuestionKind::MultipleChoice, Gold::Letter(letter)) => {
            let Some(opts) = &q.options else {
                return fail("MC without options");
            };
            if opts.len() != 4 {
                return fail("MC needs 4 options");
            }
            let letters: std::collections::HashSet<_> = opts.iter().map(|o| o.letter).collect();
            let labels: std::collections::HashSet<_> = opts.iter().map(|o| o.label.as_str()).collect();
            if letters.len() != 4 || labels.len() != 4 {
                return fail("letters or labels repeat");
            }
            for (o_, l) in opts.iter().zip(kgprobe::qgen::Letter::ALL) {
                if o_.letter != l {
                    return fail("letters out of order");
                }
            }
            let golds: Vec<_> = opts.iter().filter(|x| x.letter == *letter).collect();
            let gold = golds[0];
            match q.target {
                Some(Target::Subject) => {
                    if q.hops != 1 || gold.entity != s {
                        return fail("subject-target gold mismatch");
                    }
                    for d in opts.iter().filter(|x| x.letter != *letter) {
                        if g.has_edge(&d.entity, rel[0], o) {
                            return fail("subject distractor is connected");
                        }
                    }
                }
                _ => {
                    if gold.entity != o {
                        return fail("object gold mismatch");
                    }
                    for d in opts.iter().filter(|x| x.letter != *letter) {
                        if reach.contains(&d.entity) {
                            return fail("distractor is reachable");
                        }
                    }
                }
            }
            if gold.label != label(&gold.entity) {
                return fail("gold label mismatch");
            }
        }
        (QuestionKind::Wh, Gold::Phrase { text, .. }) => {
            if q.hops != 1 || g.objects_of(s, rel[0]).len() != 1 {
                return fail("WH answer not unique");
            }
            if *text != label(o) {
                return fail("WH gold text mismatch");
            }
        }
        _ => return fail("kind and gold disagree"),
    }
    Ok(())
}
