//! Offline responder driven by a rule file.
//!
//! Each line of a script is one JSON rule, checked in file order against the
//! concatenated prompt text:
//!
//! ```text
//! {"contains": "capital of USA", "reply": "Yes"}
//! {"contains": "Napoleon", "error": "simulated outage"}
//! {"default": "No"}
//! ```
//!
//! The first rule whose `contains` substring occurs in the prompt wins. With
//! no match the `default` reply is used; without a default the call fails.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatMessage, Completion, HarnessError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptRule {
    Reply { contains: String, reply: String },
    Fail { contains: String, error: String },
    Default { default: String },
}

#[derive(Debug)]
pub struct ScriptedBackend {
    model: String,
    rules: Vec<ScriptRule>,
    calls: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new(model: impl Into<String>, rules: Vec<ScriptRule>) -> Self {
        ScriptedBackend {
            model: model.into(),
            rules,
            calls: AtomicUsize::new(0),
        }
    }

    /// Replies `text` to everything.
    pub fn constant(model: impl Into<String>, text: impl Into<String>) -> Self {
        Self::new(model, vec![ScriptRule::Default { default: text.into() }])
    }

    pub fn parse(model: impl Into<String>, text: &str) -> Result<Self, HarnessError> {
        let mut rules = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rule = serde_json::from_str(line)
                .map_err(|e| HarnessError::Script(format!("line {}: {e}", i + 1)))?;
            rules.push(rule);
        }
        Ok(Self::new(model, rules))
    }

    pub fn load(model: impl Into<String>, path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Script(format!("{}: {e}", path.display())))?;
        Self::parse(model, &text)
    }

    pub fn rules(&self) -> &[ScriptRule] {
        &self.rules
    }
}

impl ChatBackend for ScriptedBackend {
    fn model(&self) -> &str {
        &self.model
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    fn complete(&self, messages: &[ChatMessage]) -> Result<Completion, HarnessError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let prompt: String = messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n");
        let mut fallback = None;
        for rule in &self.rules {
            match rule {
                ScriptRule::Reply { contains, reply } if prompt.contains(contains.as_str()) => {
                    return Ok(Completion {
                        text: reply.clone(),
                        retries: 0,
                    })
                }
                ScriptRule::Fail { contains, error } if prompt.contains(contains.as_str()) => {
                    return Err(HarnessError::Script(error.clone()))
                }
                ScriptRule::Default { default } if fallback.is_none() => fallback = Some(default),
                _ => {}
            }
        }
        fallback
            .map(|text| Completion {
                text: text.clone(),
                retries: 0,
            })
            .ok_or_else(|| HarnessError::Script("no rule matched the prompt".into()))
    }
}
