//! Prompt rendering, chat-completion querying and cached batch execution.

pub mod cache;
pub mod client;
pub mod runner;
pub mod script;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::qgen::post_edit::{ProviderError, REWRITE_INSTRUCTION};
use crate::qgen::{Question, QuestionKind, Rewriter};

pub use cache::ResponseCache;
pub use client::{ChatBackend, Completion, HttpChatClient, LlmTarget};
pub use runner::{run_bank, LlmResponse, RunReport};
pub use script::ScriptedBackend;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "user".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("network error: {0}")]
    Network(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("script: {0}")]
    Script(String),
    #[error("cache: {0}")]
    Cache(String),
}

/// Question rewriter backed by a chat model.
pub struct LlmRewriter<'a> {
    pub backend: &'a dyn ChatBackend,
}

impl Rewriter for LlmRewriter<'_> {
    fn rewrite(&self, text: &str) -> Result<String, ProviderError> {
        let prompt = format!("{REWRITE_INSTRUCTION}\n\n{text}");
        self.backend
            .complete(&[ChatMessage::user(prompt)])
            .map(|c| c.text)
            .map_err(|e| ProviderError(e.to_string()))
    }
}

/// Per-kind answering instruction with the topic filled in.
pub fn instruction(kind: QuestionKind, topic: &str) -> String {
    let lead = format!("The following question's topic is about {topic}.");
    match kind {
        QuestionKind::YesNo => format!("{lead} Only need to answer 'Yes' or 'No', and don't explain the reason."),
        QuestionKind::MultipleChoice => format!(
            "{lead} Choose the only correct option from the ('A', 'B', 'C' or 'D') and don't explain the reason."
        ),
        QuestionKind::Wh => format!(
            "{lead} Directly give me the answer in 'phrase' or 'word' format. Don't explain the reason or give me a sentence."
        ),
    }
}

/// Question text, followed for multiple choice by an options line
/// `A. x  B. y  C. z  D. w`.
pub fn question_block(q: &Question) -> String {
    match &q.options {
        Some(opts) => {
            let line = opts
                .iter()
                .map(|o| format!("{}. {}", o.letter, o.label))
                .collect::<Vec<_>>()
                .join("  ");
            format!("{}\n{}", q.text, line)
        }
        None => q.text.clone(),
    }
}

pub fn build_prompt(q: &Question) -> Vec<ChatMessage> {
    build_prompt_with_prefix(q, None)
}

/// Same as [`build_prompt`] with solved demonstrations inserted between the
/// instruction and the question.
pub fn build_prompt_with_prefix(q: &Question, demonstrations: Option<&str>) -> Vec<ChatMessage> {
    let mut content = instruction(q.kind, &q.topic);
    if let Some(demos) = demonstrations.filter(|d| !d.is_empty()) {
        content.push_str("\n\n");
        content.push_str(demos);
        content.push_str("\n\nQ: ");
    } else {
        content.push('\n');
    }
    content.push_str(&question_block(q));
    vec![ChatMessage::user(content)]
}

/// Cache key for a model/prompt pair.
pub fn cache_key(model: &str, messages: &[ChatMessage]) -> String {
    let mut h = Sha256::new();
    h.update(model.as_bytes());
    h.update([0]);
    h.update(serde_json::to_vec(messages).expect("messages serialize"));
    hex::encode(h.finalize())
}
