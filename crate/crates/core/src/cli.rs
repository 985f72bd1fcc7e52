//! Command-line front end: one TOML config, one subcommand per pipeline stage.
//!
//! Relative paths in the config resolve against the config file's directory.

use std::collections::HashSet;
use std::fs;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assess::{self, AssessConfig, EmbeddingProvider, HashEmbedder, HttpEmbedder, Matchers, Method, Thresholds};
use crate::harness::{
    self, run_bank, ChatBackend, HttpChatClient, LlmRewriter, LlmTarget, ResponseCache, ScriptedBackend,
};
use crate::ingest::{self, ClassMap, FetchLimits, IngestError, Lexicon, TopicSpec, TripletRecord};
use crate::kg::{ExportFormat, KnowledgeGraph};
use crate::qgen::post_edit::RuleChecker;
use crate::qgen::{self, GenerationConfig, PostEditMode, PostEditors, QuestionBank, QuestionKind, TopicSlice};
use crate::report::{self, IclPrefix, VerdictSet};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NETWORK: i32 = 3;
pub const EXIT_PARTIAL: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("network: {0}")]
    Network(String),
    #[error("{failed} of {total} requests failed; answered questions were saved")]
    Partial { failed: usize, total: usize },
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Network(_) => EXIT_NETWORK,
            CliError::Partial { .. } => EXIT_PARTIAL,
            CliError::Other(_) => EXIT_FAILURE,
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Network { .. } => CliError::Network(e.to_string()),
            other => CliError::Other(other.into()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Other(e.into())
    }
}

fn other<E: Into<anyhow::Error>>(e: E) -> CliError {
    CliError::Other(e.into())
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    /// Triplet file: written by `fetch`, read by `generate`.
    pub triplets: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparql_endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_triplets: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_secs: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationSection {
    #[serde(default = "default_per_type_count")]
    pub per_type_count: usize,
    #[serde(default = "default_hops")]
    pub hops: Vec<u8>,
    /// Required: runs are never seeded from the clock.
    pub seed: u64,
    #[serde(default)]
    pub post_edit: PostEditMode,
    /// Target whose model rewrites questions in `rewrite` mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rewriter_target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub two_hop_cap: Option<usize>,
}

fn default_per_type_count() -> usize {
    500
}

fn default_hops() -> Vec<u8> {
    vec![1]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_embedding_timeout")]
    pub timeout_secs: u64,
}

fn default_embedding_timeout() -> u64 {
    60
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssessmentSection {
    pub wh_method: Option<Method>,
    pub thresholds: Thresholds,
    pub ngram_n: Option<usize>,
    /// Remote embeddings; the built-in hashing embedder is used without it.
    pub embedding: Option<EmbeddingConfig>,
    /// Target acting as the `llm_judge` matcher.
    pub judge_target: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub cache: PathBuf,
    pub bank: PathBuf,
    pub responses_dir: PathBuf,
    pub verdicts_dir: PathBuf,
    pub reports_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            cache: "out/cache.jsonl".into(),
            bank: "out/bank.jsonl".into(),
            responses_dir: "out/responses".into(),
            verdicts_dir: "out/verdicts".into(),
            reports_dir: "out/reports".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub topics: Vec<TopicSpec>,
    pub source: SourceConfig,
    /// Relation lexicon; the bundled one when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<PathBuf>,
    pub generation: GenerationSection,
    #[serde(default)]
    pub targets: Vec<LlmTarget>,
    #[serde(default)]
    pub assessment: AssessmentSection,
    #[serde(default)]
    pub paths: PathsConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.topics.is_empty() {
            return Err(CliError::Config("at least one topic is required".into()));
        }
        if self.source.triplets.as_os_str().is_empty() {
            return Err(CliError::Config("source.triplets is required".into()));
        }
        let mut names = HashSet::new();
        for t in &self.targets {
            t.validate().map_err(CliError::Config)?;
            if !names.insert(t.name.as_str()) {
                return Err(CliError::Config(format!("duplicate target `{}`", t.name)));
            }
        }
        if let Some(bad) = self.generation.hops.iter().find(|h| !matches!(h, 1 | 2)) {
            return Err(CliError::Config(format!("hops must be 1 or 2, got {bad}")));
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn triplets_path(&self) -> PathBuf {
        self.resolve(&self.source.triplets)
    }

    pub fn bank_path(&self) -> PathBuf {
        self.resolve(&self.paths.bank)
    }

    pub fn cache_path(&self) -> PathBuf {
        self.resolve(&self.paths.cache)
    }

    pub fn responses_path(&self, target: &str) -> PathBuf {
        self.resolve(&self.paths.responses_dir).join(format!("{target}.jsonl"))
    }

    pub fn verdicts_path(&self, target: &str) -> PathBuf {
        self.resolve(&self.paths.verdicts_dir).join(format!("{target}.jsonl"))
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.resolve(&self.paths.reports_dir)
    }

    pub fn failures_path(&self, target: &str) -> PathBuf {
        self.reports_dir().join(format!("failures-{target}.jsonl"))
    }

    pub fn target(&self, name: &str) -> Result<&LlmTarget, CliError> {
        self.targets
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| CliError::Config(format!("unknown target `{name}`")))
    }

    pub fn generation_config(&self) -> GenerationConfig {
        let mut g = GenerationConfig {
            per_type_count: self.generation.per_type_count,
            hops: self.generation.hops.clone(),
            seed: self.generation.seed,
            post_edit: self.generation.post_edit,
            ..GenerationConfig::default()
        };
        if let Some(cap) = self.generation.two_hop_cap {
            g.two_hop_cap = cap;
        }
        g
    }

    pub fn assess_config(&self) -> AssessConfig {
        let d = AssessConfig::default();
        AssessConfig {
            wh_method: self.assessment.wh_method.unwrap_or(d.wh_method),
            thresholds: self.assessment.thresholds,
            ngram_n: self.assessment.ngram_n.unwrap_or(d.ngram_n),
        }
    }

    pub fn lexicon(&self) -> Result<Lexicon, CliError> {
        match &self.lexicon {
            Some(p) => ingest::load_relation_lexicon(&self.resolve(p)).map_err(|e| CliError::Config(e.to_string())),
            None => Ok(ingest::default_lexicon()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "kgprobe", version, about = "Knowledge-graph driven factual testing of chat models")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, short, global = true, default_value = "kgprobe.toml")]
    pub config: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Restrict to these topics (repeatable).
    #[arg(long = "topic", global = true)]
    pub topics: Vec<String>,
    #[arg(long, global = true)]
    pub target: Option<String>,
    #[arg(long, global = true, value_parser = parse_method)]
    pub wh_method: Option<Method>,
    /// Threshold for the selected WH method.
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// Answer with a scripted responder instead of the network.
    #[arg(long, global = true)]
    pub mock_llm: Option<PathBuf>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    Method::parse(s).ok_or_else(|| format!("unknown method `{s}`"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    YesNo,
    MultipleChoice,
    Wh,
}

impl From<KindArg> for QuestionKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::YesNo => QuestionKind::YesNo,
            KindArg::MultipleChoice => QuestionKind::MultipleChoice,
            KindArg::Wh => QuestionKind::Wh,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GraphFormat {
    Dot,
    Graphml,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Download triplets for every topic from the SPARQL endpoint.
    Fetch,
    /// Build the question bank from the triplet file.
    Generate,
    /// Ask the bank to one target and save the responses.
    Ask {
        /// Demonstrations file from `export-icl`.
        #[arg(long)]
        icl: Option<PathBuf>,
    },
    /// Judge saved responses.
    Assess,
    /// Accuracy tables and failure sets for every judged target.
    Report,
    /// Build an in-context demonstration prefix from a target's failures.
    ExportIcl {
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long, default_value_t = 4)]
        k: usize,
        /// Bank whose question ids must not be used as demonstrations.
        #[arg(long)]
        exclude_bank: Option<PathBuf>,
    },
    /// Write prompt/completion pairs for a target's failures.
    ExportFinetune,
    /// Write the knowledge graph for inspection.
    ExportGraph {
        #[arg(long, value_enum, default_value = "dot")]
        format: GraphFormat,
    },
    /// Score WH matchers against a hand-labeled file.
    EvalMatchers {
        labeled: PathBuf,
        /// Also search this many evenly spaced thresholds for the best F1.
        #[arg(long)]
        sweep: Option<usize>,
    },
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| other(anyhow::anyhow!("{}: {e}", dir.display())))?;
    }
    let f = fs::File::create(path).map_err(|e| other(anyhow::anyhow!("{}: {e}", path.display())))?;
    Ok(BufWriter::new(f))
}

fn open(path: &Path) -> Result<BufReader<fs::File>, CliError> {
    let f = fs::File::open(path).map_err(|e| other(anyhow::anyhow!("{}: {e}", path.display())))?;
    Ok(BufReader::new(f))
}

/// Config with command-line overrides applied.
pub struct Session {
    pub config: RunConfig,
    pub overrides: Overrides,
}

impl Session {
    pub fn new(mut config: RunConfig, overrides: Overrides) -> Result<Self, CliError> {
        if let Some(seed) = overrides.seed {
            config.generation.seed = seed;
        }
        if !overrides.topics.is_empty() {
            for name in &overrides.topics {
                if !config.topics.iter().any(|t| &t.name == name) {
                    return Err(CliError::Config(format!("unknown topic `{name}`")));
                }
            }
            config.topics.retain(|t| overrides.topics.contains(&t.name));
        }
        if let Some(m) = overrides.wh_method {
            config.assessment.wh_method = Some(m);
        }
        if let Some(t) = overrides.threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(CliError::Config(format!("threshold {t} outside [0, 1]")));
            }
            let method = config.assess_config().wh_method;
            config.assessment.thresholds.set(method, t);
        }
        Ok(Session { config, overrides })
    }

    /// The target named on the command line, the only configured target,
    /// or "mock" for a scripted run without targets.
    pub fn target_name(&self) -> Result<String, CliError> {
        if let Some(name) = &self.overrides.target {
            self.config.target(name)?;
            return Ok(name.clone());
        }
        match self.config.targets.as_slice() {
            [only] => Ok(only.name.clone()),
            [] if self.overrides.mock_llm.is_some() => Ok("mock".into()),
            [] => Err(CliError::Config("no targets configured".into())),
            _ => Err(CliError::Config("several targets configured; pick one with --target".into())),
        }
    }

    fn backend(&self, target: &str) -> Result<Box<dyn ChatBackend>, CliError> {
        if let Some(script) = &self.overrides.mock_llm {
            return Ok(Box::new(ScriptedBackend::load(target, script).map_err(|e| CliError::Config(e.to_string()))?));
        }
        let t = self.config.target(target)?.clone();
        HttpChatClient::new(t)
            .map(|c| Box::new(c) as Box<dyn ChatBackend>)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    fn parallelism(&self, target: &str) -> usize {
        self.config.target(target).map(|t| t.max_parallel).unwrap_or(4)
    }

    fn graph(&self) -> Result<(Vec<TripletRecord>, KnowledgeGraph), CliError> {
        let records = ingest::load_triplets_file(&self.config.triplets_path())?;
        let graph = KnowledgeGraph::from_records(records.iter().cloned().map(TripletRecord::into_parts))
            .map_err(other)?;
        Ok((records, graph))
    }

    fn bank(&self) -> Result<QuestionBank, CliError> {
        let path = self.config.bank_path();
        QuestionBank::read(open(&path)?).map_err(|e| other(anyhow::anyhow!("{}: {e}", path.display())))
    }

    pub fn fetch(&self) -> Result<String, CliError> {
        let src = &self.config.source;
        let endpoint = src.sparql_endpoint.as_deref().ok_or_else(|| {
            CliError::Config(format!(
                "no SPARQL endpoint configured; run `generate` directly on {}",
                src.triplets.display()
            ))
        })?;
        let mut limits = FetchLimits::default();
        if let Some(n) = src.max_triplets {
            limits.max_triplets = n;
        }
        if let Some(n) = src.page_size {
            limits.page_size = n;
        }
        if let Some(s) = src.timeout_secs {
            limits.timeout = Duration::from_secs(s);
        }
        let client = ingest::SparqlClient::new(endpoint, limits)?;
        let classes = ClassMap::default();
        let mut all = Vec::new();
        let mut summary = String::new();
        for topic in &self.config.topics {
            let mut records = client.fetch_triplets(topic, &classes)?;
            summary.push_str(&format!("{}: {} triplets\n", topic.name, records.len()));
            for r in &mut records {
                r.topic = Some(topic.name.clone());
            }
            all.extend(records);
        }
        let path = self.config.triplets_path();
        let mut w = create(&path)?;
        ingest::write_triplets(&all, &mut w)?;
        summary.push_str(&format!("wrote {} triplets to {}\n", all.len(), path.display()));
        Ok(summary)
    }

    pub fn generate(&self) -> Result<String, CliError> {
        let lexicon = self.config.lexicon()?;
        let (records, graph) = self.graph()?;
        info!(
            "graph: {} entities, {} edges, {} components",
            graph.entity_count(),
            graph.edge_count(),
            graph.component_count()
        );
        let slices = TopicSlice::partition(&records, &self.config.topics);
        let gen = self.config.generation_config();
        let checker = RuleChecker;
        let rewrite_backend = match gen.post_edit {
            PostEditMode::Rewrite => {
                let name = self
                    .config
                    .generation
                    .rewriter_target
                    .clone()
                    .ok_or_else(|| CliError::Config("post_edit = \"rewrite\" needs generation.rewriter_target".into()))?;
                Some(self.backend(&name)?)
            }
            _ => None,
        };
        let rewriter = rewrite_backend.as_deref().map(|b| LlmRewriter { backend: b });
        let editors = PostEditors {
            checker: Some(&checker),
            rewriter: rewriter.as_ref().map(|r| r as &dyn qgen::Rewriter),
        };
        let (bank, stats) = qgen::generate_bank(&graph, &lexicon, &slices, &gen, editors);
        let path = self.config.bank_path();
        let mut w = create(&path)?;
        bank.write(&mut w)?;
        let stats_path = self.config.reports_dir().join("generation_stats.json");
        let mut sw = create(&stats_path)?;
        serde_json::to_writer_pretty(&mut sw, &stats).map_err(other)?;
        sw.write_all(b"\n")?;
        sw.flush()?;
        let mut out = format!("wrote {} questions to {}\n", bank.len(), path.display());
        for (k, n) in &stats.emitted {
            out.push_str(&format!("  {k}: {n}\n"));
        }
        out.push_str(&format!(
            "skipped: no distractors {}, no negative {}, non-unique WH {}, grammar filtered {}\n",
            stats.skipped_no_distractors, stats.skipped_no_negative, stats.skipped_non_unique_wh, stats.grammar_filtered
        ));
        Ok(out)
    }

    pub fn ask(&self, icl: Option<&Path>) -> Result<String, CliError> {
        let target = self.target_name()?;
        let mut bank = self.bank()?;
        let prefix: Option<IclPrefix> = match icl {
            Some(p) => Some(serde_json::from_reader(open(p)?).map_err(|e| other(anyhow::anyhow!("{}: {e}", p.display())))?),
            None => None,
        };
        if let Some(prefix) = &prefix {
            // demonstrations are never asked again
            let demo: HashSet<&str> = prefix.question_ids.iter().map(String::as_str).collect();
            bank.questions.retain(|q| q.kind == prefix.kind && !demo.contains(q.id.as_str()));
        }
        let backend = self.backend(&target)?;
        let mut cache = ResponseCache::open(&self.config.cache_path()).map_err(other)?;
        let report = run_bank(
            &bank,
            backend.as_ref(),
            &mut cache,
            self.parallelism(&target),
            prefix.as_ref().map(|p| p.text.as_str()),
        );
        let path = self.config.responses_path(&target);
        let mut w = create(&path)?;
        harness::runner::write_responses(&report.responses, &mut w)?;
        let failed = report.failures().count();
        info!("{target}: {} cached, {} requests", report.cache_hits, report.network_calls);
        if failed > 0 {
            return Err(CliError::Partial {
                failed,
                total: report.responses.len(),
            });
        }
        Ok(format!(
            "{target}: {} responses ({} from cache) written to {}\n",
            report.responses.len(),
            report.cache_hits,
            path.display()
        ))
    }

    pub fn assess(&self) -> Result<String, CliError> {
        let target = self.target_name()?;
        let bank = self.bank()?;
        let rpath = self.config.responses_path(&target);
        let responses = harness::runner::read_responses(open(&rpath)?).map_err(|e| other(anyhow::anyhow!("{}: {e}", rpath.display())))?;
        let config = self.config.assess_config();
        let embedder: Box<dyn EmbeddingProvider> = match &self.config.assessment.embedding {
            Some(e) => Box::new(
                HttpEmbedder::new(&e.endpoint, &e.model, e.api_key_env.as_deref(), Duration::from_secs(e.timeout_secs))
                    .map_err(|e| CliError::Config(e.0))?,
            ),
            None => Box::new(HashEmbedder::default()),
        };
        let judge = match (&self.config.assessment.judge_target, config.wh_method) {
            (Some(name), _) => Some(self.backend(name)?),
            (None, Method::LlmJudge) => {
                return Err(CliError::Config("wh_method llm_judge needs assessment.judge_target".into()))
            }
            _ => None,
        };
        let matchers = Matchers {
            embedder: Some(embedder.as_ref()),
            judge: judge.as_deref(),
        };
        let verdicts = assess::assess_responses(&bank, &responses, &config, matchers).map_err(other)?;
        let counts = assess::outcome_counts(&verdicts);
        let set = VerdictSet {
            model: target.clone(),
            verdicts,
        };
        let path = self.config.verdicts_path(&target);
        let mut w = create(&path)?;
        set.write(&mut w)?;
        let get = |o| counts.get(&o).copied().unwrap_or(0);
        Ok(format!(
            "{target}: {} correct, {} incorrect, {} unparseable, {} unassessed -> {}\n",
            get(assess::Outcome::Correct),
            get(assess::Outcome::Incorrect),
            get(assess::Outcome::Unparseable),
            get(assess::Outcome::Unassessed),
            path.display()
        ))
    }

    fn report_targets(&self) -> Result<Vec<String>, CliError> {
        if let Some(t) = &self.overrides.target {
            self.config.target(t)?;
            return Ok(vec![t.clone()]);
        }
        let mut names: Vec<String> = self.config.targets.iter().map(|t| t.name.clone()).collect();
        if names.is_empty() && self.overrides.mock_llm.is_some() {
            names.push("mock".into());
        }
        Ok(names)
    }

    pub fn report(&self) -> Result<String, CliError> {
        let bank = self.bank()?;
        let mut sets = Vec::new();
        for name in self.report_targets()? {
            let path = self.config.verdicts_path(&name);
            if !path.exists() {
                continue;
            }
            let set = VerdictSet::read(open(&path)?).map_err(other)?;
            let rpath = self.config.responses_path(&name);
            let responses = if rpath.exists() {
                harness::runner::read_responses(open(&rpath)?)?
            } else {
                Vec::new()
            };
            let mut fw = create(&self.config.failures_path(&name))?;
            report::export_failures(&set.verdicts, &bank, &responses, &mut fw).map_err(other)?;
            sets.push(set);
        }
        if sets.is_empty() {
            return Err(CliError::Config("no verdict files found; run `assess` first".into()));
        }
        let table = report::aggregate(&sets, &bank).map_err(other)?;
        let dir = self.config.reports_dir();
        let mut jw = create(&dir.join("report.json"))?;
        report::write_json(&table, &mut jw)?;
        report::write_csv(&table, create(&dir.join("report.csv"))?).map_err(other)?;
        let text = report::render_text(&table);
        let mut tw = create(&dir.join("report.txt"))?;
        tw.write_all(text.as_bytes())?;
        tw.flush()?;
        Ok(text)
    }

    pub fn export_icl(&self, kind: QuestionKind, k: usize, exclude_bank: Option<&Path>) -> Result<String, CliError> {
        let target = self.target_name()?;
        let failures = report::read_failures(open(&self.config.failures_path(&target))?).map_err(other)?;
        let exclude: HashSet<String> = match exclude_bank {
            Some(p) => QuestionBank::read(open(p)?)
                .map_err(other)?
                .questions
                .into_iter()
                .map(|q| q.id)
                .collect(),
            None => HashSet::new(),
        };
        let prefix = report::build_icl_prefix(&failures, kind, k, self.config.generation.seed, &exclude).map_err(other)?;
        let path = self.config.reports_dir().join(format!("icl-{target}-{}.json", kind.as_str()));
        let mut w = create(&path)?;
        serde_json::to_writer_pretty(&mut w, &prefix).map_err(other)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(format!("{} demonstrations written to {}\n", prefix.question_ids.len(), path.display()))
    }

    pub fn export_finetune(&self) -> Result<String, CliError> {
        let target = self.target_name()?;
        let failures = report::read_failures(open(&self.config.failures_path(&target))?).map_err(other)?;
        let path = self.config.reports_dir().join(format!("finetune-{target}.jsonl"));
        let mut w = create(&path)?;
        let n = report::export_finetune(&failures, &mut w).map_err(other)?;
        Ok(format!("{n} records written to {}\n", path.display()))
    }

    pub fn export_graph(&self, format: GraphFormat) -> Result<String, CliError> {
        let (_, graph) = self.graph()?;
        let (fmt, ext) = match format {
            GraphFormat::Dot => (ExportFormat::Dot, "dot"),
            GraphFormat::Graphml => (ExportFormat::Graphml, "graphml"),
        };
        let path = self.config.reports_dir().join(format!("graph.{ext}"));
        let mut w = create(&path)?;
        graph.export(fmt, &mut w)?;
        Ok(format!(
            "{} entities, {} edges written to {}\n",
            graph.entity_count(),
            graph.edge_count(),
            path.display()
        ))
    }

    pub fn eval_matchers(&self, labeled: &Path, sweep: Option<usize>) -> Result<String, CliError> {
        let pairs = assess::read_labeled(open(labeled)?).map_err(other)?;
        let config = self.config.assess_config();
        let embedder = HashEmbedder::default();
        let judge = match &self.config.assessment.judge_target {
            Some(name) => Some(self.backend(name)?),
            None => None,
        };
        let matchers = Matchers {
            embedder: Some(&embedder),
            judge: judge.as_deref(),
        };
        let methods: Vec<Method> = Method::WH
            .into_iter()
            .filter(|m| *m != Method::LlmJudge || judge.is_some())
            .collect();
        let reports = assess::evaluate_matchers(&pairs, &methods, &config, matchers).map_err(other)?;
        let mut out = String::from("method              threshold  precision  recall     f1\n");
        for r in &reports {
            out.push_str(&format!(
                "{:<20}{:<11.3}{:<11.3}{:<11.3}{:.3}\n",
                r.method.as_str(),
                r.threshold,
                r.precision,
                r.recall,
                r.f1
            ));
        }
        if let Some(steps) = sweep.filter(|s| *s > 1) {
            let candidates: Vec<f64> = (0..steps).map(|i| i as f64 / (steps - 1) as f64).collect();
            for m in methods.iter().filter(|m| **m != Method::LlmJudge) {
                let best = assess::sweep_threshold(&pairs, *m, &candidates, &config, matchers).map_err(other)?;
                out.push_str(&format!("best {}: threshold {:.3}, f1 {:.3}\n", m.as_str(), best.threshold, best.f1));
            }
        }
        Ok(out)
    }
}

/// Runs one parsed command line and returns the text to print.
pub fn run(cli: Cli) -> Result<String, CliError> {
    let config = RunConfig::load(&cli.config)?;
    let session = Session::new(config, cli.overrides)?;
    match cli.command {
        Command::Fetch => session.fetch(),
        Command::Generate => session.generate(),
        Command::Ask { icl } => session.ask(icl.as_deref()),
        Command::Assess => session.assess(),
        Command::Report => session.report(),
        Command::ExportIcl { kind, k, exclude_bank } => session.export_icl(kind.into(), k, exclude_bank.as_deref()),
        Command::ExportFinetune => session.export_finetune(),
        Command::ExportGraph { format } => session.export_graph(format),
        Command::EvalMatchers { labeled, sweep } => session.eval_matchers(&labeled, sweep),
    }
}
